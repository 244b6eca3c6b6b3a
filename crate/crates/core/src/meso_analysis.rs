//! Mollified empirical densities, convergence-rate theory, error time
//! series, and the stochastic-convolution scaling estimator.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fields::{GridSpec, KernelConvolution, ScalarField};
use crate::fokker_planck::{conjugate, PdeSolution};
use crate::lj_kernel::{LjParams, MollifierSpec, RadialKernelTable, Regime};
use crate::particles::{
    gaussian_init, pairwise_drift, simulate, DriftMode, ParticleState, SimConfig, Trajectory,
};
use crate::scalar::{c, cu, Scalar};

// ---------------------------------------------------------------------------
// Parameters and theory
// ---------------------------------------------------------------------------

/// Mesoscale parameters: smoothing exponent, bump-scale particle count and
/// the exponents entering the convergence statements.
#[derive(Debug, Clone, Copy)]
pub struct MesoParams<T> {
    pub alpha: T,
    /// Particle count setting the bump scale `N^{-alpha}`.
    pub n_particles: usize,
    pub beta: T,
    pub r: T,
    pub d: usize,
    pub regime: Regime,
}

impl<T: Scalar> MesoParams<T> {
    pub fn new(params: &LjParams<T>, alpha: T, n_particles: usize, beta: T, r: T) -> Result<Self> {
        if !(alpha > T::zero() && alpha < T::one()) {
            return Err(Error::InvalidParams("alpha must lie in (0, 1)".into()));
        }
        if !(r > T::one()) {
            return Err(Error::InvalidParams("r must exceed 1".into()));
        }
        Ok(MesoParams {
            alpha,
            n_particles,
            beta,
            r,
            d: params.d,
            regime: params.regime(),
        })
    }

    pub fn r_conj(&self) -> T {
        conjugate(self.r)
    }
}

/// Largest admissible mesoscale exponent, `1 / (2 (beta + d/r'))`.
pub fn admissible_alpha<T: Scalar>(beta: T, d: usize, r: T) -> T {
    let r_conj = conjugate(r);
    (c::<T>(2.0) * (beta + cu::<T>(d) / r_conj)).recip()
}

/// Which convergence statement the exponents instantiate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateVariant {
    /// `rho = min(alpha, 1/2 - alpha d / r')`.
    Main,
    /// Critical singularity `a = d - 2`: `rho = min(alpha zeta, ...)` with
    /// `zeta = 1 - d/r`.
    CriticalHolder,
    /// Sub-singular `a < d - 2`: `zeta = 1 - d/q` for a chosen `q > d`.
    SubSingularHolder,
}

/// Theoretical exponents for a configuration: the convergence rate `rho`,
/// the Hoelder order `zeta` when applicable, and the stochastic-convolution
/// scalings at `z = r`.
#[derive(Debug, Clone)]
pub struct RateTheory<T> {
    pub variant: RateVariant,
    pub rho: T,
    pub zeta: Option<T>,
    pub kappa: T,
    pub sconv_exponent_lz: T,
    pub sconv_exponent_bessel: T,
    /// True when `rho <= 0` (no meaningful convergence claim).
    pub degenerate: bool,
    /// Hypothesis mismatches, empty when the cited statement fully applies.
    pub warnings: Vec<String>,
}

/// Stochastic-convolution exponent in `L^z`: `-(1 - alpha (d + d kappa)) / 2`
/// with `kappa = max(1 - 2/z, 0)`.
pub fn sconv_exponent_lz<T: Scalar>(alpha: T, d: usize, z: T) -> T {
    let kappa = (T::one() - c::<T>(2.0) / z).max(T::zero());
    let d = cu::<T>(d);
    -(T::one() - alpha * (d + d * kappa)) * c::<T>(0.5)
}

/// Bessel-scale exponent: `-1/2 + alpha (beta + d/z')`.
pub fn sconv_exponent_bessel<T: Scalar>(alpha: T, d: usize, beta: T, z: T) -> T {
    let z_conj = conjugate(z);
    c::<T>(-0.5) + alpha * (beta + cu::<T>(d) / z_conj)
}

pub fn theoretical_rate<T: Scalar>(
    params: &LjParams<T>,
    meso: &MesoParams<T>,
    variant: RateVariant,
    q: T,
) -> RateTheory<T> {
    let alpha = meso.alpha;
    let d = cu::<T>(meso.d);
    let r_conj = meso.r_conj();
    let half = c::<T>(0.5);
    let mut warnings = Vec::new();
    let smoothing_term = half - alpha * d / r_conj;

    let (rho, zeta) = match variant {
        RateVariant::Main => {
            let bound = admissible_alpha(meso.beta, meso.d, meso.r);
            if alpha >= bound {
                warnings.push(format!(
                    "alpha = {alpha} is not below the admissible bound {bound}"
                ));
            }
            match meso.regime {
                Regime::SubSingular => {
                    if !(meso.r > d) {
                        warnings.push(format!(
                            "sub-singular rate needs r > d: r = {}, d = {}",
                            meso.r, meso.d
                        ));
                    }
                }
                Regime::Critical => {
                    if !(meso.beta > T::zero() && meso.beta - d / meso.r > T::zero()) {
                        warnings.push("critical regime needs beta - d/r in (0, 1)".into());
                    }
                }
                Regime::SuperSingular => {
                    let dm1 = d - T::one();
                    let r_min = d / (dm1 - params.a);
                    if !(meso.r > r_min) {
                        warnings.push(format!(
                            "super-singular rate needs r > d/(d-1-a) = {r_min}"
                        ));
                    }
                    let gap = meso.beta - d / meso.r;
                    let lo = c::<T>(2.0) - d + params.a;
                    if !(gap > lo && gap < T::one()) {
                        warnings.push(format!(
                            "super-singular rate needs beta - d/r in ({lo}, 1); got {gap}"
                        ));
                    }
                }
            }
            (alpha.min(smoothing_term), None)
        }
        RateVariant::CriticalHolder => {
            if meso.regime != Regime::Critical {
                warnings.push("critical-rate variant outside the a = d - 2 regime".into());
            }
            let zeta = T::one() - d / meso.r;
            let bound = r_conj / (c::<T>(2.0) * d);
            if alpha >= bound {
                warnings.push(format!("alpha must stay below r'/(2d) = {bound}"));
            }
            ((alpha * zeta).min(smoothing_term), Some(zeta))
        }
        RateVariant::SubSingularHolder => {
            if meso.regime != Regime::SubSingular {
                warnings.push("sub-singular variant outside the a < d - 2 regime".into());
            }
            if !(q > d) {
                warnings.push(format!("Hoelder order needs q > d; got q = {q}"));
            }
            let zeta = T::one() - d / q;
            let kappa = (T::one() - c::<T>(2.0) / meso.r).max(T::zero());
            let bound = (d * (T::one() + kappa)).recip();
            if alpha >= bound {
                warnings.push(format!("alpha must stay below 1/(d + d kappa) = {bound}"));
            }
            ((alpha * zeta).min(smoothing_term), Some(zeta))
        }
    };

    let kappa = (T::one() - c::<T>(2.0) / meso.r).max(T::zero());
    RateTheory {
        variant,
        rho,
        zeta,
        kappa,
        sconv_exponent_lz: sconv_exponent_lz(alpha, meso.d, meso.r),
        sconv_exponent_bessel: sconv_exponent_bessel(alpha, meso.d, meso.beta, meso.r),
        degenerate: !(rho > T::zero()),
        warnings,
    }
}

// ---------------------------------------------------------------------------
// Empirical density
// ---------------------------------------------------------------------------

/// Deposited density plus the count of particles that sat outside the torus.
#[derive(Debug, Clone)]
pub struct DensityDeposit<T> {
    pub field: ScalarField<T>,
    pub n_outside: usize,
}

/// Mollified empirical density `(1/M) sum_k V_N(x - X_k)` deposited on the
/// grid. Each particle's discrete bump is renormalized to carry exactly
/// `1/M` of mass, so the total is one to rounding; the profile distortion is
/// within the bump's quadrature error (~1e-5 at the 2h resolution floor).
pub fn empirical_density<T: Scalar>(
    state: &ParticleState<T>,
    meso: &MesoParams<T>,
    spec: &MollifierSpec<T>,
    grid: &GridSpec<T>,
) -> Result<DensityDeposit<T>> {
    let support = spec.scaled_support(meso.n_particles, meso.alpha);
    let h = grid.spacing();
    if support < c::<T>(2.0) * h {
        return Err(Error::UnderResolvedMollifier {
            support: support.to_f64().unwrap_or(f64::NAN),
            spacing: h.to_f64().unwrap_or(f64::NAN),
        });
    }
    let d = grid.d;
    if state.d != d {
        return Err(Error::GridMismatch);
    }
    let n_cells_span = (support / h).ceil().to_isize().unwrap_or(1) + 1;
    let m = state.n_particles();
    let inv_m = cu::<T>(m).recip();
    let n = grid.n as isize;
    let vol = grid.cell_volume();

    let mut field = ScalarField::zeros(*grid);
    let mut n_outside = 0usize;
    let mut cells: Vec<(usize, T)> = Vec::new();
    for i in 0..m {
        let x = state.pos(i);
        if x.iter().any(|&v| v.abs() >= grid.half_width) {
            n_outside += 1;
        }
        cells.clear();
        let mut weight_sum = T::zero();
        // center cell index per axis
        let mut base = [0isize; 3];
        for ax in 0..d {
            base[ax] = ((x[ax] + grid.half_width) / h)
                .round()
                .to_isize()
                .unwrap_or(0);
        }
        let mut visit = |idx: [isize; 3]| {
            let mut dist2 = T::zero();
            for ax in 0..d {
                let cell_coord = -grid.half_width + h * c::<T>(idx[ax] as f64);
                let dx = grid.min_image(cell_coord - x[ax]);
                dist2 += dx * dx;
            }
            let w = spec.scaled_value(meso.n_particles, meso.alpha, dist2.sqrt());
            if w > T::zero() {
                let wrapped = [
                    idx[0].rem_euclid(n) as usize,
                    idx[1].rem_euclid(n) as usize,
                    idx[2].rem_euclid(n) as usize,
                ];
                cells.push((grid.flat(wrapped), w));
                weight_sum += w;
            }
        };
        if d == 2 {
            for o0 in -n_cells_span..=n_cells_span {
                for o1 in -n_cells_span..=n_cells_span {
                    visit([base[0] + o0, base[1] + o1, 0]);
                }
            }
        } else {
            for o0 in -n_cells_span..=n_cells_span {
                for o1 in -n_cells_span..=n_cells_span {
                    for o2 in -n_cells_span..=n_cells_span {
                        visit([base[0] + o0, base[1] + o1, base[2] + o2]);
                    }
                }
            }
        }
        if weight_sum <= T::zero() {
            return Err(Error::InvalidParams(format!(
                "particle {i} deposited no weight (position {:?})",
                state.pos(i)
            )));
        }
        let scale = inv_m / (weight_sum * vol);
        for &(flat, w) in &cells {
            field.values[flat] += w * scale;
        }
    }
    Ok(DensityDeposit { field, n_outside })
}

// ---------------------------------------------------------------------------
// Error time series
// ---------------------------------------------------------------------------

/// Per-time intersection-norm distance between the empirical density and a
/// solved density.
#[derive(Debug, Clone)]
pub struct ErrorSeries<T> {
    pub times: Vec<T>,
    pub values: Vec<T>,
    pub sup: T,
    pub n_particles: usize,
    pub seed: u64,
    pub n_outside_max: usize,
}

pub fn error_series<T: Scalar>(
    traj: &Trajectory<T>,
    sol: &PdeSolution<T>,
    meso: &MesoParams<T>,
    spec: &MollifierSpec<T>,
    grid: &GridSpec<T>,
) -> Result<ErrorSeries<T>> {
    let mut values = Vec::with_capacity(traj.times.len());
    let mut n_outside_max = 0usize;
    for (idx, &t) in traj.times.iter().enumerate() {
        let state = traj.state_at(idx);
        let deposit = empirical_density(&state, meso, spec, grid)?;
        n_outside_max = n_outside_max.max(deposit.n_outside);
        let u = sol.field_at(t)?;
        let diff = deposit.field.zip_with(&u, |a, b| a - b)?;
        values.push(diff.norm_intersection(meso.r));
    }
    let sup = values.iter().copied().fold(T::zero(), T::max);
    Ok(ErrorSeries {
        times: traj.times.clone(),
        values,
        sup,
        n_particles: traj.n_particles,
        seed: traj.seed,
        n_outside_max,
    })
}

// ---------------------------------------------------------------------------
// Stochastic convolution
// ---------------------------------------------------------------------------

fn deposit_gradient_dot<T: Scalar>(
    positions: &[T],
    increments: &[T],
    meso: &MesoParams<T>,
    spec: &MollifierSpec<T>,
    grid: &GridSpec<T>,
) -> ScalarField<T> {
    let d = grid.d;
    let m = positions.len() / d;
    let inv_m = cu::<T>(m).recip();
    let h = grid.spacing();
    let support = spec.scaled_support(meso.n_particles, meso.alpha);
    let span = (support / h).ceil().to_isize().unwrap_or(1) + 1;
    let n = grid.n as isize;
    let mut field = ScalarField::zeros(*grid);
    for i in 0..m {
        let x = &positions[i * d..(i + 1) * d];
        let dw = &increments[i * d..(i + 1) * d];
        let mut base = [0isize; 3];
        for ax in 0..d {
            base[ax] = ((x[ax] + grid.half_width) / h)
                .round()
                .to_isize()
                .unwrap_or(0);
        }
        let mut visit = |idx: [isize; 3]| {
            let mut dx = [T::zero(); 3];
            let mut dist2 = T::zero();
            for ax in 0..d {
                let cell_coord = -grid.half_width + h * c::<T>(idx[ax] as f64);
                dx[ax] = grid.min_image(cell_coord - x[ax]);
                dist2 += dx[ax] * dx[ax];
            }
            let dist = dist2.sqrt();
            if dist >= support || dist == T::zero() {
                return;
            }
            // grad V_N(z) . dW = V_N'(|z|) (z . dW)/|z|
            let deriv = spec.scaled_deriv(meso.n_particles, meso.alpha, dist);
            if deriv == T::zero() {
                return;
            }
            let mut dot = T::zero();
            for ax in 0..d {
                dot += dx[ax] * dw[ax];
            }
            let wrapped = [
                idx[0].rem_euclid(n) as usize,
                idx[1].rem_euclid(n) as usize,
                idx[2].rem_euclid(n) as usize,
            ];
            field.values[grid.flat(wrapped)] += inv_m * deriv * dot / dist;
        };
        if d == 2 {
            for o0 in -span..=span {
                for o1 in -span..=span {
                    visit([base[0] + o0, base[1] + o1, 0]);
                }
            }
        } else {
            for o0 in -span..=span {
                for o1 in -span..=span {
                    for o2 in -span..=span {
                        visit([base[0] + o0, base[1] + o1, base[2] + o2]);
                    }
                }
            }
        }
    }
    field
}

fn require_full_recording<T: Scalar>(traj: &Trajectory<T>) -> Result<&Vec<Vec<T>>> {
    let wiener = traj
        .wiener
        .as_ref()
        .ok_or(Error::MissingIncrements { needed: 0 })?;
    if traj.states.len() != wiener.len() + 1 {
        return Err(Error::IncompatibleTimes(
            "stochastic convolution needs every-step state recording (stride 1)".into(),
        ));
    }
    Ok(wiener)
}

/// The discrete stochastic convolution
/// `S(t) = -(1/M) sum_i sum_{steps before t} e^{(t - t_{n+1}) Lap}
///         grad V_N(. - X^i_{t_n}) . dW^i_n`
/// evaluated at one time `t` (a multiple of the step).
pub fn stochastic_convolution<T: Scalar>(
    traj: &Trajectory<T>,
    meso: &MesoParams<T>,
    spec: &MollifierSpec<T>,
    grid: &GridSpec<T>,
    t: T,
) -> Result<ScalarField<T>> {
    let wiener = require_full_recording(traj)?;
    let steps = (t / traj.dt).round();
    let m_steps = steps.to_usize().unwrap_or(0);
    if ((steps * traj.dt - t) / traj.dt.max(T::one())).abs() > c(1e-9) {
        return Err(Error::IncompatibleTimes(format!(
            "time {t} is not a step multiple of dt = {}",
            traj.dt
        )));
    }
    if m_steps > wiener.len() {
        return Err(Error::MissingIncrements { needed: m_steps });
    }
    let mut total = ScalarField::zeros(*grid);
    for step in 0..m_steps {
        let g = deposit_gradient_dot(&traj.states[step], &wiener[step], meso, spec, grid);
        let horizon = t - cu::<T>(step + 1) * traj.dt;
        let smoothed = if horizon > T::zero() {
            g.heat_propagate(horizon)
        } else {
            g
        };
        total = total.zip_with(&smoothed, |a, b| a - b)?;
    }
    Ok(total)
}

/// Sup over the recorded stride times of `||S(t)||_{L^z}` and
/// `||S(t)||_{H^{beta,z}}`, via the one-heat-step-per-increment recursion
/// `S_{m+1} = e^{dt Lap} S_m + g_m` (identical to the direct sum).
pub fn sconv_sup_norms<T: Scalar>(
    traj: &Trajectory<T>,
    meso: &MesoParams<T>,
    spec: &MollifierSpec<T>,
    grid: &GridSpec<T>,
    z: T,
    beta: T,
    harvest_stride: usize,
) -> Result<(T, T)> {
    let wiener = require_full_recording(traj)?;
    let mut s = ScalarField::zeros(*grid);
    let mut sup_lz = T::zero();
    let mut sup_bessel = T::zero();
    for step in 0..wiener.len() {
        let g = deposit_gradient_dot(&traj.states[step], &wiener[step], meso, spec, grid);
        s = s.heat_propagate(traj.dt).zip_with(&g, |a, b| a - b)?;
        if (step + 1) % harvest_stride == 0 || step + 1 == wiener.len() {
            sup_lz = sup_lz.max(s.norm_lp(z));
            sup_bessel = sup_bessel.max(s.bessel_norm(beta, z));
        }
    }
    Ok((sup_lz, sup_bessel))
}

// ---------------------------------------------------------------------------
// Log-log fitting
// ---------------------------------------------------------------------------

/// Ordinary least squares on log-log data.
#[derive(Debug, Clone, Copy)]
pub struct FitLine<T> {
    pub slope: T,
    pub intercept: T,
    pub slope_stderr: T,
    pub points: usize,
}

pub fn fit_loglog<T: Scalar>(xs: &[T], ys: &[T]) -> Result<FitLine<T>> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::DegenerateFit(format!(
            "need at least 2 matched points, got {}",
            xs.len().min(ys.len())
        )));
    }
    if ys.iter().any(|&y| !(y > T::zero())) {
        return Err(Error::DegenerateFit(
            "nonpositive values cannot be log-fitted".into(),
        ));
    }
    let lx: Vec<T> = xs.iter().map(|&x| x.ln()).collect();
    let ly: Vec<T> = ys.iter().map(|&y| y.ln()).collect();
    let n = cu::<T>(lx.len());
    let mx = lx.iter().copied().sum::<T>() / n;
    let my = ly.iter().copied().sum::<T>() / n;
    let mut sxx = T::zero();
    let mut sxy = T::zero();
    for (x, y) in lx.iter().zip(ly.iter()) {
        sxx += (*x - mx) * (*x - mx);
        sxy += (*x - mx) * (*y - my);
    }
    if !(sxx > T::zero()) {
        return Err(Error::DegenerateFit("abscissae are all equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let mut ss_res = T::zero();
    for (x, y) in lx.iter().zip(ly.iter()) {
        let r = *y - (intercept + slope * *x);
        ss_res += r * r;
    }
    let slope_stderr = if lx.len() > 2 {
        (ss_res / (n - c::<T>(2.0)) / sxx).sqrt()
    } else {
        T::zero()
    };
    Ok(FitLine {
        slope,
        intercept,
        slope_stderr,
        points: lx.len(),
    })
}

// ---------------------------------------------------------------------------
// Scaling study
// ---------------------------------------------------------------------------

/// Inputs of the stochastic-convolution scaling run.
#[derive(Debug, Clone)]
pub struct SconvStudyConfig<T> {
    pub params: LjParams<T>,
    pub mollifier: MollifierSpec<T>,
    pub grid: GridSpec<T>,
    pub alpha: T,
    pub beta: T,
    pub z: T,
    pub dt: T,
    pub n_steps: usize,
    pub init_variance: T,
    pub harvest_stride: usize,
    pub table_radii: usize,
    pub table_tol: T,
}

/// One row of the scaling table.
#[derive(Debug, Clone, Copy)]
pub struct SconvRow<T> {
    pub n_particles: usize,
    pub seeds: usize,
    pub mean_lz: T,
    pub stderr_lz: T,
    pub mean_bessel: T,
    pub stderr_bessel: T,
}

#[derive(Debug, Clone)]
pub struct SconvScaling<T> {
    pub rows: Vec<SconvRow<T>>,
    pub fit_lz: FitLine<T>,
    pub fit_bessel: FitLine<T>,
    pub theory_lz: T,
    pub theory_bessel: T,
}

/// Mean-over-seeds sup norms of the stochastic convolution per particle
/// count, with log-log slope fits and the theoretical exponents.
pub fn sconv_norm_scaling<T: Scalar>(
    cfg: &SconvStudyConfig<T>,
    n_list: &[usize],
    seeds: &[u64],
) -> Result<SconvScaling<T>> {
    if n_list.len() < 2 {
        return Err(Error::DegenerateFit("need at least 2 particle counts".into()));
    }
    if seeds.len() < 2 {
        return Err(Error::DegenerateFit(
            "need at least 2 seeds to estimate variance".into(),
        ));
    }
    let mut rows = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let table = crate::lj_kernel::build_mollified_kernel(
            &cfg.params,
            &cfg.mollifier,
            n,
            cfg.alpha,
            cfg.table_radii,
            cfg.table_tol,
        )?;
        let meso = MesoParams::new(&cfg.params, cfg.alpha, n, cfg.beta, cfg.z.max(c(1.000001)))?;
        let sim = SimConfig {
            n_particles: n,
            d: cfg.params.d,
            dt: cfg.dt,
            n_steps: cfg.n_steps,
            mode: DriftMode::Raw,
            cutoff: None,
            init: gaussian_init(cfg.params.d, cfg.init_variance),
            record_stride: 1,
            record_wiener: true,
        };
        let per_seed: Vec<Result<(T, T)>> = seeds
            .par_iter()
            .map(|&seed| {
                let traj = simulate(&sim, &table, seed)?;
                sconv_sup_norms(
                    &traj,
                    &meso,
                    &cfg.mollifier,
                    &cfg.grid,
                    cfg.z,
                    cfg.beta,
                    cfg.harvest_stride,
                )
            })
            .collect();
        let mut lz = Vec::with_capacity(seeds.len());
        let mut bes = Vec::with_capacity(seeds.len());
        for r in per_seed {
            let (a, b) = r?;
            lz.push(a);
            bes.push(b);
        }
        let stats = |v: &[T]| {
            let n = cu::<T>(v.len());
            let mean = v.iter().copied().sum::<T>() / n;
            let var = v.iter().map(|&x| (x - mean) * (x - mean)).sum::<T>()
                / (n - T::one());
            (mean, (var / n).sqrt())
        };
        let (mean_lz, stderr_lz) = stats(&lz);
        let (mean_bessel, stderr_bessel) = stats(&bes);
        rows.push(SconvRow {
            n_particles: n,
            seeds: seeds.len(),
            mean_lz,
            stderr_lz,
            mean_bessel,
            stderr_bessel,
        });
    }
    let xs: Vec<T> = rows.iter().map(|r| cu(r.n_particles)).collect();
    let ys_lz: Vec<T> = rows.iter().map(|r| r.mean_lz).collect();
    let ys_bes: Vec<T> = rows.iter().map(|r| r.mean_bessel).collect();
    Ok(SconvScaling {
        fit_lz: fit_loglog(&xs, &ys_lz)?,
        fit_bessel: fit_loglog(&xs, &ys_bes)?,
        theory_lz: sconv_exponent_lz(cfg.alpha, cfg.params.d, cfg.z),
        theory_bessel: sconv_exponent_bessel(cfg.alpha, cfg.params.d, cfg.beta, cfg.z),
        rows,
    })
}

// ---------------------------------------------------------------------------
// Associativity witness
// ---------------------------------------------------------------------------

/// Relative gap between the pairwise mollified drift and the grid-evaluated
/// kernel convolution of the deposited density, interpolated back at the
/// particles: the two discrete faces of `K_N * mu = K * u_N`.
pub fn associativity_gap<T: Scalar>(
    state: &ParticleState<T>,
    table: &RadialKernelTable<T>,
    conv_exact: &KernelConvolution<T>,
    meso: &MesoParams<T>,
    spec: &MollifierSpec<T>,
    grid: &GridSpec<T>,
) -> Result<T> {
    let deposit = empirical_density(state, meso, spec, grid)?;
    let field = conv_exact.apply(&deposit.field)?;
    let drift = pairwise_drift(state, table);
    let d = grid.d;
    let mut interp = vec![T::zero(); d];
    let mut worst = T::zero();
    let mut scale = T::zero();
    for i in 0..state.n_particles() {
        field.interp_into(state.pos(i), &mut interp);
        let mut gap2 = T::zero();
        let mut mag2 = T::zero();
        for ax in 0..d {
            let g = drift[i * d + ax] - interp[ax];
            gap2 += g * g;
            mag2 += drift[i * d + ax] * drift[i * d + ax];
        }
        worst = worst.max(gap2.sqrt());
        scale = scale.max(mag2.sqrt());
    }
    if scale == T::zero() {
        return Ok(T::zero());
    }
    Ok(worst / scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::NearField;
    use crate::fokker_planck::{existence_horizon_check, mild_march, PdeConfig};
    use crate::lj_kernel::{build_mollified_kernel, kernel_constants, ForceProfile};
    use crate::particles::{normal_draw, sample_initial, NoiseStream};
    use approx::assert_relative_eq;

    fn params2() -> LjParams<f64> {
        LjParams::new(2.0, 1.0, 0.8, 0.4, 2).unwrap()
    }

    fn meso2(n: usize) -> MesoParams<f64> {
        MesoParams::new(&params2(), 0.15, n, 0.99, 11.0).unwrap()
    }

    #[test]
    fn admissible_alpha_examples() {
        assert_relative_eq!(admissible_alpha(0.0, 3, 4.0), 2.0 / 9.0, max_relative = 1e-13);
        assert_relative_eq!(
            admissible_alpha(0.99, 2, 11.0),
            1.0 / (2.0 * (0.99 + 2.0 / (11.0 / 10.0))),
            max_relative = 1e-13
        );
        // monotone decreasing in beta
        assert!(admissible_alpha(0.5, 2, 11.0) > admissible_alpha(0.9, 2, 11.0));
    }

    #[test]
    fn rate_examples() {
        let p3 = LjParams::new(2.0, 1.0, 0.8, 0.4, 3).unwrap();
        let meso = MesoParams::new(&p3, 0.15, 512, 0.0, 4.0).unwrap();
        let rate = theoretical_rate(&p3, &meso, RateVariant::Main, 4.0);
        assert_relative_eq!(rate.rho, 0.15, max_relative = 1e-13);
        assert!(!rate.degenerate);
        assert!(rate.warnings.is_empty(), "{:?}", rate.warnings);
        // sconv exponents at z = r = 4: kappa = 1/2
        assert_relative_eq!(
            rate.sconv_exponent_lz,
            -(1.0 - 0.15 * (3.0 + 1.5)) / 2.0,
            max_relative = 1e-13
        );

        let meso2d = meso2(512);
        let rate2 = theoretical_rate(&params2(), &meso2d, RateVariant::Main, 4.0);
        assert_relative_eq!(rate2.rho, 0.15, max_relative = 1e-13);
        assert!(rate2.warnings.is_empty(), "{:?}", rate2.warnings);

        // z = 2 closed forms
        assert_relative_eq!(sconv_exponent_lz(0.15, 3, 2.0), -0.275, max_relative = 1e-13);
        assert_relative_eq!(
            sconv_exponent_bessel(0.15, 3, 0.0, 2.0),
            -0.275,
            max_relative = 1e-13
        );
    }

    #[test]
    fn rate_flags_and_warnings() {
        let p3 = LjParams::new(2.0, 1.0, 0.8, 0.4, 3).unwrap();
        // r too small for the sub-singular statement
        let meso = MesoParams::new(&p3, 0.15, 64, 0.0, 2.0).unwrap();
        let rate = theoretical_rate(&p3, &meso, RateVariant::Main, 4.0);
        assert!(!rate.warnings.is_empty());

        // Hoelder variant needs q > d
        let rate = theoretical_rate(&p3, &meso, RateVariant::SubSingularHolder, 2.0);
        assert!(rate.warnings.iter().any(|w| w.contains("q > d")));

        // degenerate rate when the smoothing term flips sign
        let meso = MesoParams::new(&p3, 0.45, 64, 0.0, 2.0).unwrap();
        let rate = theoretical_rate(&p3, &meso, RateVariant::Main, 4.0);
        assert!(rate.degenerate);
    }

    #[test]
    fn density_single_particle_matches_bump() {
        let grid = GridSpec::<f64>::new(2, 128, 2.0).unwrap();
        let spec = MollifierSpec::reference(2);
        let meso = meso2(64);
        // particle exactly on a grid node
        let state = ParticleState {
            d: 2,
            positions: vec![grid.coord(70), grid.coord(50)],
            time: 0.0,
        };
        let deposit = empirical_density(&state, &meso, &spec, &grid).unwrap();
        assert_eq!(deposit.n_outside, 0);
        assert!((deposit.field.mass() - 1.0).abs() < 1e-12);
        let mut worst = 0.0f64;
        grid.for_each_cell(|flat, x| {
            let dx = grid.min_image(x[0] - state.positions[0]);
            let dy = grid.min_image(x[1] - state.positions[1]);
            let exact = spec.scaled_value(64, 0.15, dx.hypot(dy));
            worst = worst.max((deposit.field.values[flat] - exact).abs());
        });
        let peak = spec.scaled_value(64, 0.15, 0.0);
        assert!(worst / peak < 1e-4, "profile distortion {}", worst / peak);
    }

    #[test]
    fn density_mass_and_coincident_particles() {
        let grid = GridSpec::<f64>::new(2, 128, 2.0).unwrap();
        let spec = MollifierSpec::reference(2);
        let meso = meso2(256);
        let state = sample_initial(&gaussian_init::<f64>(2, 0.25), 2, 256, 3).unwrap();
        let deposit = empirical_density(&state, &meso, &spec, &grid).unwrap();
        assert!((deposit.field.mass() - 1.0).abs() < 1e-6);

        // two coincident particles deposit the same field as one
        let one = ParticleState {
            d: 2,
            positions: vec![0.31, -0.17],
            time: 0.0,
        };
        let two = ParticleState {
            d: 2,
            positions: vec![0.31, -0.17, 0.31, -0.17],
            time: 0.0,
        };
        let f1 = empirical_density(&one, &meso, &spec, &grid).unwrap();
        let f2 = empirical_density(&two, &meso, &spec, &grid).unwrap();
        let gap = f1
            .field
            .zip_with(&f2.field, |a, b| a - b)
            .unwrap()
            .max_abs();
        assert!(gap < 1e-12);
    }

    #[test]
    fn density_rejects_under_resolved_and_flags_outside() {
        let grid = GridSpec::<f64>::new(2, 32, 2.0).unwrap();
        let spec = MollifierSpec::reference(2);
        // N = 4096 at alpha 0.3 gives support ~0.08 < 2h = 0.25
        let meso = MesoParams::new(&params2(), 0.3, 4096, 0.99, 11.0).unwrap();
        let state = ParticleState {
            d: 2,
            positions: vec![0.0, 0.0],
            time: 0.0,
        };
        assert!(matches!(
            empirical_density(&state, &meso, &spec, &grid),
            Err(Error::UnderResolvedMollifier { .. })
        ));

        let grid = GridSpec::<f64>::new(2, 128, 2.0).unwrap();
        let meso = meso2(64);
        let state = ParticleState {
            d: 2,
            positions: vec![2.5, 0.0],
            time: 0.0,
        };
        let deposit = empirical_density(&state, &meso, &spec, &grid).unwrap();
        assert_eq!(deposit.n_outside, 1);
    }

    fn tiny_solution(grid: GridSpec<f64>) -> PdeSolution<f64> {
        let params = LjParams::new(0.0, 1.0, 0.8, 0.4, 2).unwrap();
        let cfg = PdeConfig {
            params,
            grid,
            t_horizon: 0.04,
            dt: 1e-3,
            r: 11.0,
            p: 1.1,
            q: 3.0,
            beta: 0.99,
            snapshot_stride: 5,
            allow_uncovered: true,
        };
        let u0 = ScalarField::gaussian(grid, &[0.0, 0.0], 0.25);
        let consts = kernel_constants(&params, 1.0, 1.1, 3.0).unwrap();
        let report = existence_horizon_check(&u0, &consts, cfg.r, cfg.t_horizon).unwrap();
        let conv = KernelConvolution::exact(grid, &params, NearField::SampleOnly).unwrap();
        mild_march(&u0, &cfg, &conv, &report).unwrap()
    }

    #[test]
    fn error_series_zero_for_injected_solution() {
        let grid = GridSpec::<f64>::new(2, 64, 2.0).unwrap();
        let sol = tiny_solution(grid);
        // fake trajectory whose "empirical densities" are the solution itself:
        // check the t = 0 value definition instead, which only needs u_N(0).
        let spec = MollifierSpec::reference(2);
        let meso = meso2(128);
        let table = build_mollified_kernel(&params2(), &spec, 128, 0.15, 64, 0.05).unwrap();
        let sim = SimConfig {
            n_particles: 128,
            d: 2,
            dt: 1e-3,
            n_steps: 40,
            mode: DriftMode::Raw,
            cutoff: None,
            init: gaussian_init(2, 0.25),
            record_stride: 10,
            record_wiener: false,
        };
        let traj = simulate(&sim, &table, 5).unwrap();
        let series = error_series(&traj, &sol, &meso, &spec, &grid).unwrap();
        assert_eq!(series.values.len(), traj.times.len());
        assert!(series.sup >= series.values[0]);
        // t = 0 value equals the initial-density distance
        let state0 = traj.state_at(0);
        let u_n0 = empirical_density(&state0, &meso, &spec, &grid).unwrap();
        let expected = u_n0
            .field
            .zip_with(&sol.fields[0], |a, b| a - b)
            .unwrap()
            .norm_intersection(11.0);
        assert_relative_eq!(series.values[0], expected, max_relative = 1e-12);
        // triangle inequality under a mass-free perturbation
        let g = ScalarField::from_fn(grid, |x| {
            (std::f64::consts::PI / 2.0 * x[0]).sin()
        });
        let delta = 0.01;
        let perturbed = u_n0.field.zip_with(&g, |a, b| a + delta * b).unwrap();
        let d1 = perturbed
            .zip_with(&sol.fields[0], |a, b| a - b)
            .unwrap()
            .norm_intersection(11.0);
        assert!(d1 <= series.values[0] + delta * g.norm_intersection(11.0) + 1e-12);
    }

    #[test]
    fn sconv_direct_matches_recursion_and_single_step() {
        let grid = GridSpec::<f64>::new(2, 64, 2.0).unwrap();
        let spec = MollifierSpec::reference(2);
        let meso = meso2(32);
        let table = build_mollified_kernel(&params2(), &spec, 32, 0.15, 64, 0.05).unwrap();
        let sim = SimConfig {
            n_particles: 32,
            d: 2,
            dt: 1e-3,
            n_steps: 12,
            mode: DriftMode::Raw,
            cutoff: None,
            init: gaussian_init(2, 0.25),
            record_stride: 1,
            record_wiener: true,
        };
        let traj = simulate(&sim, &table, 17).unwrap();

        // single-step value: no smoothing, equals the raw deposit
        let s1 = stochastic_convolution(&traj, &meso, &spec, &grid, 1e-3).unwrap();
        let g0 = deposit_gradient_dot(
            &traj.states[0],
            &traj.wiener.as_ref().unwrap()[0],
            &meso,
            &spec,
            &grid,
        );
        let gap = s1.zip_with(&g0, |a, b| a + b).unwrap().max_abs(); // S = -g
        assert!(gap < 1e-14);

        // recursion equals the direct sum at the final time
        let t_end = 12.0 * 1e-3;
        let direct = stochastic_convolution(&traj, &meso, &spec, &grid, t_end).unwrap();
        let mut s = ScalarField::zeros(grid);
        let wiener = traj.wiener.as_ref().unwrap();
        for step in 0..wiener.len() {
            let g = deposit_gradient_dot(&traj.states[step], &wiener[step], &meso, &spec, &grid);
            s = s.heat_propagate(1e-3).zip_with(&g, |a, b| a - b).unwrap();
        }
        let gap = direct.zip_with(&s, |a, b| a - b).unwrap().max_abs();
        let scale = direct.max_abs().max(1e-30);
        assert!(gap / scale < 1e-9, "relative gap {}", gap / scale);

        // zero increments give the zero field
        let mut quiet = traj.clone();
        if let Some(w) = quiet.wiener.as_mut() {
            for step in w.iter_mut() {
                for v in step.iter_mut() {
                    *v = 0.0;
                }
            }
        }
        let s0 = stochastic_convolution(&quiet, &meso, &spec, &grid, t_end).unwrap();
        assert_eq!(s0.max_abs(), 0.0);
    }

    #[test]
    fn sconv_requires_full_recording() {
        let grid = GridSpec::<f64>::new(2, 64, 2.0).unwrap();
        let spec = MollifierSpec::reference(2);
        let meso = meso2(32);
        let table = build_mollified_kernel(&params2(), &spec, 32, 0.15, 64, 0.05).unwrap();
        let mut sim = SimConfig {
            n_particles: 8,
            d: 2,
            dt: 1e-3,
            n_steps: 10,
            mode: DriftMode::Raw,
            cutoff: None,
            init: gaussian_init(2, 0.25),
            record_stride: 5,
            record_wiener: true,
        };
        let traj = simulate(&sim, &table, 2).unwrap();
        assert!(stochastic_convolution(&traj, &meso, &spec, &grid, 5e-3).is_err());
        sim.record_stride = 1;
        sim.record_wiener = false;
        let traj = simulate(&sim, &table, 2).unwrap();
        assert!(matches!(
            stochastic_convolution(&traj, &meso, &spec, &grid, 5e-3),
            Err(Error::MissingIncrements { .. })
        ));
    }

    #[test]
    fn fit_recovers_exact_power_law() {
        let xs: Vec<f64> = vec![64.0, 128.0, 256.0, 512.0];
        let ys: Vec<f64> = xs.iter().map(|&x| 3.5 * x.powf(-0.4)).collect();
        let fit = fit_loglog(&xs, &ys).unwrap();
        assert_relative_eq!(fit.slope, -0.4, max_relative = 1e-12);
        assert!(fit.slope_stderr < 1e-12);
        assert_relative_eq!(fit.intercept, 3.5f64.ln(), max_relative = 1e-10);
    }

    #[test]
    fn fit_rejects_degenerate_inputs() {
        assert!(fit_loglog(&[1.0f64], &[2.0]).is_err());
        assert!(fit_loglog(&[1.0f64, 2.0], &[0.0, 1.0]).is_err());
        assert!(fit_loglog(&[2.0f64, 2.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn sconv_scaling_mc_is_stable_and_negative() {
        // small but real Monte Carlo: the fitted slope must be negative
        let params = params2();
        let cfg = SconvStudyConfig {
            params,
            mollifier: MollifierSpec::reference(2),
            grid: GridSpec::new(2, 64, 4.0).unwrap(),
            alpha: 0.15,
            beta: 0.0,
            z: 2.0,
            dt: 1e-3,
            n_steps: 30,
            init_variance: 0.25,
            harvest_stride: 10,
            table_radii: 96,
            table_tol: 0.05,
        };
        let seeds: Vec<u64> = (0..8).collect();
        let out = sconv_norm_scaling(&cfg, &[16, 64, 256], &seeds).unwrap();
        assert!(out.fit_lz.slope < 0.0, "slope {}", out.fit_lz.slope);
        assert!(out.rows.iter().all(|r| r.mean_lz.is_finite() && r.mean_lz > 0.0));
        assert_relative_eq!(out.theory_lz, -(1.0 - 0.15 * 2.0) / 2.0, max_relative = 1e-13);
        // beta = 0, z = 2: the two theory exponents coincide
        assert_relative_eq!(out.theory_bessel, out.theory_lz, max_relative = 1e-13);
        // seeds = 1 is rejected
        assert!(sconv_norm_scaling(&cfg, &[16, 64], &[1]).is_err());
    }

    #[test]
    fn associativity_witness_small() {
        let params = LjParams::new(1.0, 1.0, 0.3, 0.15, 2).unwrap();
        let spec = MollifierSpec::reference(2);
        let n = 128;
        let alpha = 0.15;
        let grid = GridSpec::new(2, 128, 2.5).unwrap();
        let table = build_mollified_kernel(&params, &spec, n, alpha, 512, 0.05).unwrap();
        let conv = KernelConvolution::exact(grid, &params, NearField::MomentCorrected).unwrap();
        let meso = MesoParams::new(&params, alpha, n, 0.0, 4.0).unwrap();
        let state = sample_initial(&gaussian_init::<f64>(2, 0.2 * 0.2), 2, n, 11).unwrap();
        let gap = associativity_gap(&state, &table, &conv, &meso, &spec, &grid).unwrap();
        assert!(gap < 0.05, "associativity gap {gap}");
    }

    #[test]
    fn self_interaction_term_vanishes() {
        // (1/N) |k_N(0)| = 0 exactly: the tabulated profile is zero at r = 0
        let spec = MollifierSpec::reference(2);
        let table = build_mollified_kernel(&params2(), &spec, 64, 0.15, 64, 0.05).unwrap();
        assert_eq!(table.radial(0.0), 0.0);
        let _ = normal_draw::<f64>(0, NoiseStream::Path, 0, 0, 0); // keep import exercised
    }
}
