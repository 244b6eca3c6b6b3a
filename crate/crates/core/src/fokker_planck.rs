//! Mild-form solver for the nonlinear Fokker-Planck equation
//! `du/dt = Lap u - div(u (K * u))`.
//!
//! Two routes: a whole-interval fixed-point iteration (witnessing the
//! contraction behind the existence horizon) and a marching exponential
//! integrator that freezes the nonlinearity per step and integrates the
//! semigroup exactly.

use crate::error::{Error, Result};
use crate::fields::{duhamel_div_step, GridSpec, KernelConvolution, ScalarField, VectorField};
use crate::lj_kernel::{KernelConstants, LjParams};
use crate::scalar::{c, cu, Scalar};

#[derive(Debug, Clone, Copy)]
pub struct PdeConfig<T> {
    pub params: LjParams<T>,
    pub grid: GridSpec<T>,
    pub t_horizon: T,
    pub dt: T,
    /// Solution integrability exponent (intersection norm uses L^1 and L^r).
    pub r: T,
    /// Near-singularity exponent; must satisfy `r >= p' = p/(p-1)`.
    pub p: T,
    /// Far-field exponent.
    pub q: T,
    /// Bessel order for regularity reporting.
    pub beta: T,
    /// Store every `snapshot_stride`-th step (plus the endpoints).
    pub snapshot_stride: usize,
    /// Run past the contraction horizon when the caller waives coverage.
    pub allow_uncovered: bool,
}

impl<T: Scalar> PdeConfig<T> {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !(self.dt > T::zero()) || !(self.t_horizon > T::zero()) {
            return Err(Error::InvalidParams("need dt > 0 and T > 0".into()));
        }
        let steps = (self.t_horizon / self.dt).round();
        let defect = (steps * self.dt - self.t_horizon).abs() / self.t_horizon;
        if defect > c(1e-9) {
            return Err(Error::InvalidParams(format!(
                "T = {} is not an integer multiple of dt = {}",
                self.t_horizon, self.dt
            )));
        }
        // r >= p' evaluated as 1/p + 1/r <= 1 with an ulp-level tolerance,
        // so that the default p = r' round-trips cleanly.
        if self.p.recip() + self.r.recip() > T::one() + c(1e-12) {
            return Err(Error::InvalidParams(format!(
                "well-posedness needs r >= p' (conjugate of p): r = {}, p' = {}",
                self.r,
                conjugate(self.p)
            )));
        }
        if self.snapshot_stride == 0 {
            return Err(Error::InvalidParams("snapshot stride must be >= 1".into()));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.t_horizon / self.dt)
            .round()
            .to_usize()
            .expect("step count")
    }
}

/// Conjugate exponent `p/(p-1)`; infinity for p = 1.
pub fn conjugate<T: Scalar>(p: T) -> T {
    if p <= T::one() {
        T::infinity()
    } else {
        p / (p - T::one())
    }
}

/// Existence-horizon data: `c_t_u0 = 1 - 4 C sqrt(T) ||u0||` must lie in
/// [0, 1) for the fixed-point argument, giving the a-priori solution bound
/// `(1 - sqrt(c_t_u0)) / (2 C sqrt(T))`.
#[derive(Debug, Clone, Copy)]
pub struct ExistenceReport<T> {
    pub c_t_u0: T,
    pub horizon_ok: bool,
    pub solution_bound: T,
    pub t_max_estimate: T,
    pub u0_norm: T,
}

pub fn existence_horizon_check<T: Scalar>(
    u0: &ScalarField<T>,
    constants: &KernelConstants<T>,
    r: T,
    t_horizon: T,
) -> Result<ExistenceReport<T>> {
    let mass_defect = (u0.mass() - T::one()).abs();
    if mass_defect > c(1e-6) {
        return Err(Error::BadInitialDensity(format!(
            "initial mass deviates from 1 by {mass_defect:e}"
        )));
    }
    if u0.min_value() < c(-1e-9) {
        return Err(Error::BadInitialDensity("initial density is negative".into()));
    }
    let norm0 = u0.norm_intersection(r);
    let cd = constants.c_delta_kpq;
    let four = c::<T>(4.0);
    let c_t_u0 = T::one() - four * cd * t_horizon.sqrt() * norm0;
    // With a vanishing interaction constant the horizon is unconstrained.
    let horizon_ok = t_horizon > T::zero() && c_t_u0 >= T::zero();
    let solution_bound = if cd == T::zero() {
        T::infinity()
    } else if horizon_ok {
        (T::one() - c_t_u0.max(T::zero()).sqrt()) / (c::<T>(2.0) * cd * t_horizon.sqrt())
    } else {
        T::nan()
    };
    let t_max_estimate = if cd == T::zero() {
        T::infinity()
    } else {
        (four * cd * norm0).powi(-2)
    };
    Ok(ExistenceReport {
        c_t_u0,
        horizon_ok,
        solution_bound,
        t_max_estimate,
        u0_norm: norm0,
    })
}

/// Time-stamped solution snapshots. `fields[i]` lives at `times[i]`; the
/// endpoints are always stored.
#[derive(Debug, Clone)]
pub struct PdeSolution<T> {
    pub grid: GridSpec<T>,
    pub r: T,
    pub times: Vec<T>,
    pub fields: Vec<ScalarField<T>>,
    /// sup over stored times of the intersection norm.
    pub sup_norm: T,
}

impl<T: Scalar> PdeSolution<T> {
    fn from_snapshots(grid: GridSpec<T>, r: T, times: Vec<T>, fields: Vec<ScalarField<T>>) -> Self {
        let sup_norm = fields
            .iter()
            .map(|f| f.norm_intersection(r))
            .fold(T::zero(), T::max);
        PdeSolution {
            grid,
            r,
            times,
            fields,
            sup_norm,
        }
    }

    pub fn final_field(&self) -> &ScalarField<T> {
        self.fields.last().expect("non-empty solution")
    }

    /// Field at an arbitrary time by linear interpolation between snapshots.
    pub fn field_at(&self, t: T) -> Result<ScalarField<T>> {
        let t0 = *self.times.first().unwrap();
        let t1 = *self.times.last().unwrap();
        let tol = c::<T>(1e-9) * (t1 - t0).max(T::one());
        if t < t0 - tol || t > t1 + tol {
            return Err(Error::IncompatibleTimes(format!(
                "time {t} outside stored range [{t0}, {t1}]"
            )));
        }
        let tq = t.max(t0).min(t1);
        let idx = match self.times.iter().position(|&s| s >= tq) {
            Some(0) => return Ok(self.fields[0].clone()),
            Some(i) => i,
            None => return Ok(self.fields.last().unwrap().clone()),
        };
        let (ta, tb) = (self.times[idx - 1], self.times[idx]);
        if tb == tq {
            return Ok(self.fields[idx].clone());
        }
        let w = (tq - ta) / (tb - ta);
        self.fields[idx - 1]
            .zip_with(&self.fields[idx], |a, b| a + (b - a) * w)
    }

    /// Largest mass deviation from 1 over the stored snapshots.
    pub fn mass_defect(&self) -> T {
        self.fields
            .iter()
            .map(|f| (f.mass() - T::one()).abs())
            .fold(T::zero(), T::max)
    }

    /// Smallest grid value over the stored snapshots (positivity monitor).
    pub fn min_value(&self) -> T {
        self.fields
            .iter()
            .map(|f| f.min_value())
            .fold(T::infinity(), T::min)
    }
}

/// The whole-series bilinear term evaluated on the time grid:
/// `B(u, v)(t_k) = sum_{j<k} e^{(t_k - t_{j+1}) Lap} D_j` with
/// `D_j = int_0^dt div(e^{s Lap} (u_j (K * v_j))) ds`, computed by one
/// heat-propagate-and-add recursion per step.
pub fn bilinear_series<T: Scalar>(
    u: &[ScalarField<T>],
    v: &[ScalarField<T>],
    dt: T,
    conv: &KernelConvolution<T>,
) -> Result<Vec<ScalarField<T>>> {
    if u.len() != v.len() || u.is_empty() {
        return Err(Error::IncompatibleTimes(
            "series must share the same nonempty time grid".into(),
        ));
    }
    let grid = u[0].grid;
    for f in u.iter().chain(v.iter()) {
        if f.grid != grid {
            return Err(Error::GridMismatch);
        }
    }
    let mut out = Vec::with_capacity(u.len());
    out.push(ScalarField::zeros(grid));
    let mut running = ScalarField::zeros(grid);
    for k in 0..u.len() - 1 {
        let force = conv.apply(&v[k])?;
        let integrand = force.scaled_by(&u[k])?;
        let increment = duhamel_div_step(&integrand, dt);
        running = running.heat_propagate(dt).zip_with(&increment, |a, b| a + b)?;
        out.push(running.clone());
    }
    Ok(out)
}

/// Bilinear term at one time index.
pub fn bilinear_b<T: Scalar>(
    u: &[ScalarField<T>],
    v: &[ScalarField<T>],
    dt: T,
    conv: &KernelConvolution<T>,
    t_index: usize,
) -> Result<ScalarField<T>> {
    let series = bilinear_series(&u[..=t_index], &v[..=t_index], dt, conv)?;
    Ok(series.into_iter().last().unwrap())
}

/// Starting iterate for the fixed-point iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PicardInit {
    /// Heat flow of the initial density (the natural first guess).
    Heat,
    /// The zero series (exercises uniqueness of the fixed point).
    Zero,
}

/// Fixed-point iteration `u <- heat flow - B(u, u)` on the whole time grid.
/// Returns the solution and the recorded update-ratio sequence, which stays
/// below one inside the existence horizon.
pub fn picard_solve<T: Scalar>(
    u0: &ScalarField<T>,
    cfg: &PdeConfig<T>,
    conv: &KernelConvolution<T>,
    tol: T,
    max_iter: usize,
    init: PicardInit,
) -> Result<(PdeSolution<T>, Vec<T>)> {
    cfg.validate()?;
    let n_steps = cfg.n_steps();
    let mut heat_flow = Vec::with_capacity(n_steps + 1);
    heat_flow.push(u0.clone());
    for k in 0..n_steps {
        heat_flow.push(heat_flow[k].heat_propagate(cfg.dt));
    }
    let times: Vec<T> = (0..=n_steps).map(|k| cu::<T>(k) * cfg.dt).collect();

    let mut current: Vec<ScalarField<T>> = match init {
        PicardInit::Heat => heat_flow.clone(),
        PicardInit::Zero => (0..=n_steps)
            .map(|_| ScalarField::zeros(cfg.grid))
            .collect(),
    };
    let mut ratios = Vec::new();
    let mut prev_diff: Option<T> = None;
    for iter in 0..max_iter {
        let b = bilinear_series(&current, &current, cfg.dt, conv)?;
        let mut next = Vec::with_capacity(n_steps + 1);
        let mut diff = T::zero();
        for k in 0..=n_steps {
            let f = heat_flow[k].zip_with(&b[k], |h, bb| h - bb)?;
            diff = diff.max(f.zip_with(&current[k], |a, b| a - b)?.norm_intersection(cfg.r));
            next.push(f);
        }
        current = next;
        if diff < tol {
            return Ok((
                PdeSolution::from_snapshots(cfg.grid, cfg.r, times, current),
                ratios,
            ));
        }
        if let Some(prev) = prev_diff {
            if prev > T::zero() {
                let ratio = diff / prev;
                if ratio >= T::one() {
                    return Err(Error::ContractionFailure {
                        iteration: iter,
                        ratio: ratio.to_f64().unwrap_or(f64::NAN),
                    });
                }
                ratios.push(ratio);
            }
        }
        prev_diff = Some(diff);
    }
    Err(Error::MaxIterExceeded {
        max_iter,
        last_update: prev_diff
            .and_then(|d| d.to_f64())
            .unwrap_or(f64::NAN),
    })
}

/// Marching exponential integrator: freeze the drift per step and apply the
/// exact heat/Duhamel multipliers,
/// `u_{n+1} = e^{dt Lap} u_n - int_0^dt div(e^{s Lap}(u_n (K * u_n))) ds`.
pub fn mild_march<T: Scalar>(
    u0: &ScalarField<T>,
    cfg: &PdeConfig<T>,
    conv: &KernelConvolution<T>,
    report: &ExistenceReport<T>,
) -> Result<PdeSolution<T>> {
    cfg.validate()?;
    if !report.horizon_ok && !cfg.allow_uncovered {
        return Err(Error::HorizonDegenerate {
            t: cfg.t_horizon.to_f64().unwrap_or(f64::NAN),
            t_max: report.t_max_estimate.to_f64().unwrap_or(f64::NAN),
        });
    }
    let n_steps = cfg.n_steps();
    let limit = c::<T>(1e3) * u0.max_abs();
    let mut u = u0.clone();
    let mut times = vec![T::zero()];
    let mut fields = vec![u.clone()];
    for step in 0..n_steps {
        let force = conv.apply(&u)?;
        let integrand = force.scaled_by(&u)?;
        let increment = duhamel_div_step(&integrand, cfg.dt);
        u = u.heat_propagate(cfg.dt).zip_with(&increment, |a, b| a - b)?;
        let sup = u.max_abs();
        if !sup.is_finite() || sup > limit {
            return Err(Error::BlowUp {
                step,
                norm: sup.to_f64().unwrap_or(f64::NAN),
                limit: limit.to_f64().unwrap_or(f64::NAN),
            });
        }
        if (step + 1) % cfg.snapshot_stride == 0 || step + 1 == n_steps {
            times.push(cu::<T>(step + 1) * cfg.dt);
            fields.push(u.clone());
        }
    }
    Ok(PdeSolution::from_snapshots(cfg.grid, cfg.r, times, fields))
}

/// sup over stored times of the Bessel norm of order `beta`.
pub fn bessel_regularity_report<T: Scalar>(sol: &PdeSolution<T>, beta: T, r: T) -> T {
    sol.fields
        .iter()
        .map(|f| f.bessel_norm(beta, r))
        .fold(T::zero(), T::max)
}

/// Drift fields `K * u` at every stored snapshot (consumed by single-path
/// sampling against the solved density).
pub fn drift_fields<T: Scalar>(
    sol: &PdeSolution<T>,
    conv: &KernelConvolution<T>,
) -> Result<Vec<VectorField<T>>> {
    sol.fields.iter().map(|f| conv.apply(f)).collect()
}
