//! The attraction-repulsion kernel with free exponents, its integrability
//! windows and constants, and the mollified kernel table.
//!
//! The potential is `Phi(x) = eps (R0^a / (a |x|^a) - R0^b / (b |x|^b))` and
//! the force `K = -grad Phi` is radial with profile
//! `k(r) = eps (R0^a r^{-(a+1)} - R0^b r^{-(b+1)})`: repulsive inside `R0`,
//! attractive outside, singular at the origin of order `a + 1`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::quad::{integrate, integrate_power_left};
use crate::scalar::{c, cu, Scalar};
use crate::special::{gamma_half, heat_gradient_constant, sphere_surface};

/// Singularity regime of the repulsive exponent relative to the dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// `a < d - 2`
    SubSingular,
    /// `a = d - 2` (needs `d >= 3`)
    Critical,
    /// `d - 2 < a < d - 1`
    SuperSingular,
}

/// Kernel parameters. Valid when `d - 1 > a > b > 0`, `eps >= 0`, `r0 > 0`,
/// `d >= 2`. `eps = 0` turns the interaction off entirely (control runs).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LjParams<T> {
    pub epsilon: T,
    pub r0: T,
    pub a: T,
    pub b: T,
    pub d: usize,
}

impl<T: Scalar> LjParams<T> {
    pub fn new(epsilon: T, r0: T, a: T, b: T, d: usize) -> Result<Self> {
        let p = Self { epsilon, r0, a, b, d };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.d < 2 {
            problems.push(format!("d = {} but the dimension must be >= 2", self.d));
        }
        if !(self.epsilon >= T::zero()) {
            problems.push(format!("epsilon = {} must be >= 0", self.epsilon));
        }
        if !(self.r0 > T::zero()) {
            problems.push(format!("r0 = {} must be > 0", self.r0));
        }
        let dm1 = cu::<T>(self.d) - T::one();
        if !(dm1 > self.a && self.a > self.b && self.b > T::zero()) {
            problems.push(format!(
                "exponents must satisfy d - 1 > a > b > 0; got a = {}, b = {}, d = {}",
                self.a, self.b, self.d
            ));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParams(problems.join("; ")))
        }
    }

    pub fn regime(&self) -> Regime {
        let dm2 = cu::<T>(self.d) - c(2.0);
        if self.a < dm2 {
            Regime::SubSingular
        } else if self.a == dm2 {
            Regime::Critical
        } else {
            Regime::SuperSingular
        }
    }

    /// Potential value as a function of the radius. Fails at `r = 0`.
    pub fn potential_radial(&self, r: T) -> Result<T> {
        if !(r > T::zero()) {
            return Err(Error::SingularPoint);
        }
        let rep = self.r0.powf(self.a) / (self.a * r.powf(self.a));
        let att = self.r0.powf(self.b) / (self.b * r.powf(self.b));
        Ok(self.epsilon * (rep - att))
    }

    /// Signed radial force profile `k(r)`; positive means repulsive
    /// (pointing away from the origin). By convention `k(0) = 0` so that grid
    /// samplers can treat the origin cell as the vanishing cell average of an
    /// odd kernel; pairwise code never queries it for the exact kernel.
    pub fn force_radial(&self, r: T) -> T {
        if r <= T::zero() {
            return T::zero();
        }
        let rep = self.r0.powf(self.a) * r.powf(-(self.a + T::one()));
        let att = self.r0.powf(self.b) * r.powf(-(self.b + T::one()));
        self.epsilon * (rep - att)
    }

    /// Radius where the potential crosses zero: `R0 (b/a)^{1/(a-b)}`.
    pub fn zero_radius(&self) -> T {
        self.r0 * (self.b / self.a).powf(T::one() / (self.a - self.b))
    }

    /// Minimum of the potential, attained at `r = R0`: `-eps (a-b) / (a b)`.
    pub fn potential_min(&self) -> T {
        -self.epsilon * (self.a - self.b) / (self.a * self.b)
    }
}

/// Exact evaluation of the potential at a point.
pub fn lj_potential<T: Scalar>(params: &LjParams<T>, x: &[T]) -> Result<T> {
    params.potential_radial(norm(x))
}

/// Exact evaluation of the force at a point: `k(|x|) x / |x|`.
pub fn lj_force<T: Scalar>(params: &LjParams<T>, x: &[T]) -> Result<Vec<T>> {
    let r = norm(x);
    if !(r > T::zero()) {
        return Err(Error::SingularPoint);
    }
    let scale = params.force_radial(r) / r;
    Ok(x.iter().map(|&xi| xi * scale).collect())
}

fn norm<T: Scalar>(x: &[T]) -> T {
    x.iter().map(|&v| v * v).sum::<T>().sqrt()
}

// ---------------------------------------------------------------------------
// Integrability windows
// ---------------------------------------------------------------------------

/// Half-open interval `[lo, sup)`.
#[derive(Debug, Clone, Copy)]
pub struct LowerWindow<T> {
    pub lo: T,
    pub sup: T,
}

impl<T: Scalar> LowerWindow<T> {
    pub fn is_empty(&self) -> bool {
        !(self.sup > self.lo)
    }
    pub fn contains(&self, p: T) -> bool {
        p >= self.lo && p < self.sup
    }
}

/// Open-closed interval `(inf, +inf]`.
#[derive(Debug, Clone, Copy)]
pub struct UpperWindow<T> {
    pub inf: T,
}

impl<T: Scalar> UpperWindow<T> {
    pub fn contains(&self, q: T) -> bool {
        q > self.inf
    }
}

/// Admissible integrability exponents: `K` lies in `L^p` near the origin for
/// `p` in `p_window` and in `L^q` away from it for `q` in `q_window`; the
/// barred windows are the analogues for the gradient of `K`.
#[derive(Debug, Clone, Copy)]
pub struct ExponentWindows<T> {
    pub p_window: LowerWindow<T>,
    pub q_window: UpperWindow<T>,
    pub pbar_window: LowerWindow<T>,
    pub qbar_window: UpperWindow<T>,
}

pub fn exponent_windows<T: Scalar>(params: &LjParams<T>) -> ExponentWindows<T> {
    let d = cu::<T>(params.d);
    ExponentWindows {
        p_window: LowerWindow {
            lo: T::one(),
            sup: d / (params.a + T::one()),
        },
        q_window: UpperWindow {
            inf: d / (params.b + T::one()),
        },
        pbar_window: LowerWindow {
            lo: T::one(),
            sup: d / (params.a + c(2.0)),
        },
        qbar_window: UpperWindow {
            inf: d / (params.b + c(2.0)),
        },
    }
}

// ---------------------------------------------------------------------------
// Empirical integrability verdicts
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpVerdict {
    Converged,
    Diverging,
}

/// Values of the truncated norm integral per refinement level plus the
/// convergence verdict.
#[derive(Debug, Clone)]
pub struct LpBallReport<T> {
    /// Cumulative integral with the inner (or outer) cutoff at each level.
    pub values: Vec<T>,
    pub verdict: LpVerdict,
}

/// Geometric cutoff shrink factor per refinement level.
const LEVEL_RATIO: f64 = 4.0;
/// Increments decaying at least this fast per level count as geometric decay.
const SIGMA_CONV: f64 = 0.985;
/// Cauchy acceptance: last increment below this fraction of the total.
const CAUCHY_REL: f64 = 1e-6;

fn verdict_from_levels<T: Scalar>(values: &[T]) -> LpVerdict {
    let n = values.len();
    let last = values[n - 1];
    let increments: Vec<T> = values.windows(2).map(|w| w[1] - w[0]).collect();
    if let Some(&d_last) = increments.last() {
        if d_last <= c::<T>(CAUCHY_REL) * last.abs() {
            return LpVerdict::Converged;
        }
        // Geometric mean of the trailing increment ratios.
        let take = increments.len().min(4);
        let tail = &increments[increments.len() - take..];
        let mut log_sum = T::zero();
        let mut count = 0usize;
        for w in tail.windows(2) {
            if w[0] > T::zero() && w[1] > T::zero() {
                log_sum += (w[1] / w[0]).ln();
                count += 1;
            }
        }
        if count > 0 {
            let sigma = (log_sum / cu::<T>(count)).exp();
            if sigma <= c(SIGMA_CONV) {
                return LpVerdict::Converged;
            }
        }
        LpVerdict::Diverging
    } else {
        LpVerdict::Converged
    }
}

/// `|k(r)|^p r^{d-1}` integral over `[lo, hi]`, split at the sign change.
fn band_integral<T: Scalar>(params: &LjParams<T>, p: T, lo: T, hi: T) -> Result<T> {
    let d = params.d;
    let f = |r: T| params.force_radial(r).abs().powf(p) * r.powf(cu::<T>(d) - T::one());
    let rel = c::<T>(1e-9);
    let mut total = T::zero();
    let mut cuts = vec![lo];
    if params.r0 > lo && params.r0 < hi {
        cuts.push(params.r0);
    }
    cuts.push(hi);
    for w in cuts.windows(2) {
        total += integrate(f, w[0], w[1], rel, T::zero(), 2000)?.value;
    }
    Ok(total)
}

/// Truncated `L^p` integral of the force over the ball of radius `nu`, with
/// the inner cutoff shrinking geometrically toward the singularity. The
/// verdict is `Converged` when successive values are Cauchy or the level
/// increments decay geometrically, `Diverging` otherwise; a genuine
/// quadrature breakdown surfaces as an error instead.
pub fn kernel_lp_ball<T: Scalar>(
    params: &LjParams<T>,
    p: T,
    nu: T,
    levels: usize,
) -> Result<LpBallReport<T>> {
    params.validate()?;
    if !(p >= T::one()) || !(nu > T::zero()) || levels < 3 {
        return Err(Error::InvalidParams(
            "need p >= 1, nu > 0 and at least 3 refinement levels".into(),
        ));
    }
    let surface = sphere_surface::<T>(params.d);
    let ratio = c::<T>(LEVEL_RATIO);
    let mut values = Vec::with_capacity(levels);
    let mut cumulative = T::zero();
    let mut outer = nu;
    for _ in 0..levels {
        let inner = outer / ratio;
        cumulative += band_integral(params, p, inner, outer)?;
        values.push(cumulative * surface);
        outer = inner;
    }
    let verdict = verdict_from_levels(&values);
    Ok(LpBallReport { values, verdict })
}

/// Outer counterpart on the complement of the ball: the outer radius grows
/// geometrically and the verdict reads the tail behaviour, `Converged`
/// exactly when `q` exceeds the far-field window edge.
pub fn kernel_lq_tail<T: Scalar>(
    params: &LjParams<T>,
    q: T,
    nu: T,
    levels: usize,
) -> Result<LpBallReport<T>> {
    params.validate()?;
    if !(q >= T::one()) || !(nu > T::zero()) || levels < 3 {
        return Err(Error::InvalidParams(
            "need q >= 1, nu > 0 and at least 3 refinement levels".into(),
        ));
    }
    let surface = sphere_surface::<T>(params.d);
    let ratio = c::<T>(LEVEL_RATIO);
    let mut values = Vec::with_capacity(levels);
    let mut cumulative = T::zero();
    let mut inner = nu;
    for _ in 0..levels {
        let outer = inner * ratio;
        cumulative += band_integral(params, q, inner, outer)?;
        values.push(cumulative * surface);
        inner = outer;
    }
    let verdict = verdict_from_levels(&values);
    Ok(LpBallReport { values, verdict })
}

// ---------------------------------------------------------------------------
// Kernel constants
// ---------------------------------------------------------------------------

/// Constants attached to the decomposition of the kernel at radius `nu`.
///
/// `c1_nu`, `c2_nu` bound the kernel and its gradient by pure powers inside
/// and outside the ball; `c_kpq` is the larger of the two piece norms;
/// `c_delta` is the heat-gradient constant and `c_delta_kpq` the product
/// `d * c_delta * c1_nu * c_kpq` entering the existence horizon.
#[derive(Debug, Clone, Copy)]
pub struct KernelConstants<T> {
    pub nu: T,
    pub p: T,
    pub q: T,
    pub c1_nu: T,
    pub c2_nu: T,
    pub c_kpq: T,
    pub c_delta: T,
    pub c_delta_kpq: T,
}

fn c_i_nu<T: Scalar>(params: &LjParams<T>, nu: T, i: usize) -> T {
    let i = cu::<T>(i);
    let ra = params.r0.powf(params.a);
    let rb = params.r0.powf(params.b);
    let gap = params.a - params.b;
    let first = (params.a + i) * ra + (params.b + i) * rb * nu.powf(gap);
    let second = (params.a + i) * ra * nu.powf(-gap) + (params.b + i) * rb;
    first.max(second)
}

/// `L^p` norm of the force over `B(0, nu)` by radial quadrature with a power
/// substitution absorbing the origin singularity.
pub fn ball_norm_lp<T: Scalar>(params: &LjParams<T>, p: T, nu: T) -> Result<T> {
    let d = cu::<T>(params.d);
    let gamma = d - (params.a + T::one()) * p;
    if !(gamma > T::zero()) {
        return Err(Error::ExponentOutOfWindow {
            exponent: p.to_f64().unwrap_or(f64::NAN),
            lo: 1.0,
            hi: (d / (params.a + T::one())).to_f64().unwrap_or(f64::NAN),
        });
    }
    // Factored integrand: |k(r)|^p r^{d-1} = eps^p R0^{ap} r^{gamma-1}
    // |1 - (r/R0)^{a-b}|^p. Keeping the singular power in one factor avoids
    // the intermediate overflow of |k(r)|^p near the endpoint.
    let prefactor = params.epsilon.powf(p) * params.r0.powf(params.a * p);
    let gap = params.a - params.b;
    let f = |r: T| {
        let balance = (T::one() - (r / params.r0).powf(gap)).abs().powf(p);
        prefactor * r.powf(gamma - T::one()) * balance
    };
    let rel = c::<T>(1e-10);
    let split = nu.min(params.r0);
    let mut total = integrate_power_left(f, T::zero(), split, gamma, rel, T::zero(), 4000)?.value;
    if nu > params.r0 {
        let g = |r: T| params.force_radial(r).abs().powf(p) * r.powf(d - T::one());
        total += integrate(g, params.r0, nu, rel, T::zero(), 2000)?.value;
    }
    Ok((total * sphere_surface::<T>(params.d)).powf(T::one() / p))
}

/// `L^q` norm of the force over the complement of `B(0, nu)`. Supports
/// `q = +inf` (the far-field sup, available in closed form).
pub fn complement_norm_lq<T: Scalar>(params: &LjParams<T>, q: T, nu: T) -> Result<T> {
    let d = cu::<T>(params.d);
    if q == T::infinity() {
        // |k| on [nu, inf): local max at r* = R0 ((a+1)/(b+1))^{1/(a-b)},
        // monotone decay beyond it.
        let rstar = params.r0
            * ((params.a + T::one()) / (params.b + T::one())).powf(T::one() / (params.a - params.b));
        let mut best = params.force_radial(nu).abs();
        if rstar > nu {
            best = best.max(params.force_radial(rstar).abs());
        }
        return Ok(best);
    }
    let gamma_u = (params.b + T::one()) * q - d;
    if !(gamma_u > T::zero()) {
        return Err(Error::ExponentOutOfWindow {
            exponent: q.to_f64().unwrap_or(f64::NAN),
            lo: (d / (params.b + T::one())).to_f64().unwrap_or(f64::NAN),
            hi: f64::INFINITY,
        });
    }
    let f = |r: T| params.force_radial(r).abs().powf(q) * r.powf(d - T::one());
    let rel = c::<T>(1e-10);
    let r_far = c::<T>(4.0) * nu.max(params.r0);
    let mut total = T::zero();
    if params.r0 > nu {
        total += integrate(f, nu, params.r0, rel, T::zero(), 2000)?.value;
        total += integrate(f, params.r0, r_far, rel, T::zero(), 2000)?.value;
    } else {
        total += integrate(f, nu, r_far, rel, T::zero(), 2000)?.value;
    }
    // Tail via u = 1/r: integrand eps^q u^{(b+1)q - d - 1} (R0^b - R0^a u^{a-b})^q.
    let tail = |u: T| {
        if u <= T::zero() {
            return T::zero();
        }
        let base = params.r0.powf(params.b) - params.r0.powf(params.a) * u.powf(params.a - params.b);
        params.epsilon.powf(q) * u.powf((params.b + T::one()) * q - d - T::one()) * base.abs().powf(q)
    };
    total += integrate_power_left(tail, T::zero(), r_far.recip(), gamma_u, rel, T::zero(), 4000)?.value;
    Ok((total * sphere_surface::<T>(params.d)).powf(T::one() / q))
}

/// Assemble the kernel constants for a given decomposition radius and
/// exponent pair. Both exponents are checked against their windows.
pub fn kernel_constants<T: Scalar>(
    params: &LjParams<T>,
    nu: T,
    p: T,
    q: T,
) -> Result<KernelConstants<T>> {
    params.validate()?;
    if !(nu > T::zero()) {
        return Err(Error::InvalidParams("nu must be positive".into()));
    }
    let windows = exponent_windows(params);
    if !windows.p_window.contains(p) {
        return Err(Error::ExponentOutOfWindow {
            exponent: p.to_f64().unwrap_or(f64::NAN),
            lo: 1.0,
            hi: windows.p_window.sup.to_f64().unwrap_or(f64::NAN),
        });
    }
    if !windows.q_window.contains(q) {
        return Err(Error::ExponentOutOfWindow {
            exponent: q.to_f64().unwrap_or(f64::NAN),
            lo: windows.q_window.inf.to_f64().unwrap_or(f64::NAN),
            hi: f64::INFINITY,
        });
    }
    let ball = ball_norm_lp(params, p, nu)?;
    let tail = complement_norm_lq(params, q, nu)?;
    let c_kpq = ball.max(tail);
    let c_delta = heat_gradient_constant::<T>(params.d);
    let c1 = c_i_nu(params, nu, 1);
    let c2 = c_i_nu(params, nu, 2);
    Ok(KernelConstants {
        nu,
        p,
        q,
        c1_nu: c1,
        c2_nu: c2,
        c_kpq,
        c_delta,
        c_delta_kpq: cu::<T>(params.d) * c_delta * c1 * c_kpq,
    })
}

// ---------------------------------------------------------------------------
// Mollifier
// ---------------------------------------------------------------------------

/// Radial bump profile identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MollifierProfile {
    /// `V(x) = c_d (1 - |x|^2)^3` on the unit ball: nonnegative, unit mass,
    /// value and first two radial derivatives vanish at the boundary.
    PolyBump3,
}

/// A compactly supported probability bump used to smooth point masses and
/// the kernel at the mesoscale.
#[derive(Debug, Clone, Copy)]
pub struct MollifierSpec<T> {
    pub profile: MollifierProfile,
    pub d: usize,
    pub support_radius: T,
    /// Prefactor making the bump integrate to one.
    pub normalization: T,
}

impl<T: Scalar> MollifierSpec<T> {
    /// Reference profile in dimension `d` with unit support radius.
    pub fn reference(d: usize) -> Self {
        Self::with_support(d, T::one())
    }

    pub fn with_support(d: usize, support_radius: T) -> Self {
        // c_d = Gamma(d/2 + 4) / (6 pi^{d/2}), then 1/s^d for support s.
        let unit = gamma_half(d as u32 + 8)
            / (6.0 * std::f64::consts::PI.powf(d as f64 / 2.0));
        let normalization = c::<T>(unit) / support_radius.powf(cu(d));
        MollifierSpec {
            profile: MollifierProfile::PolyBump3,
            d,
            support_radius,
            normalization,
        }
    }

    /// Unscaled radial value `V(r)`.
    pub fn value(&self, r: T) -> T {
        let u = r / self.support_radius;
        if u >= T::one() {
            return T::zero();
        }
        let w = T::one() - u * u;
        self.normalization * w * w * w
    }

    /// Unscaled radial derivative `dV/dr`.
    pub fn deriv(&self, r: T) -> T {
        let u = r / self.support_radius;
        if u >= T::one() {
            return T::zero();
        }
        let w = T::one() - u * u;
        -c::<T>(6.0) * self.normalization * u * w * w / self.support_radius
    }

    /// Support radius of the rescaled bump `V_N`, i.e. `N^{-alpha} * s`.
    pub fn scaled_support(&self, n: usize, alpha: T) -> T {
        self.support_radius * cu::<T>(n).powf(-alpha)
    }

    /// Rescaled radial value `V_N(r) = N^{d alpha} V(N^alpha r)`.
    pub fn scaled_value(&self, n: usize, alpha: T, r: T) -> T {
        let nt = cu::<T>(n);
        nt.powf(cu::<T>(self.d) * alpha) * self.value(nt.powf(alpha) * r)
    }

    /// Rescaled radial derivative `dV_N/dr`.
    pub fn scaled_deriv(&self, n: usize, alpha: T, r: T) -> T {
        let nt = cu::<T>(n);
        nt.powf((cu::<T>(self.d) + T::one()) * alpha) * self.deriv(nt.powf(alpha) * r)
    }

    /// `|1 - integral of V_N|` by radial quadrature; a direct check of the
    /// unit-mass normalization at any scale.
    pub fn normalization_defect(&self, n: usize, alpha: T) -> Result<T> {
        let d = cu::<T>(self.d);
        let support = self.scaled_support(n, alpha);
        let f = |r: T| self.scaled_value(n, alpha, r) * r.powf(d - T::one());
        let q = integrate(f, T::zero(), support, c(1e-12), T::zero(), 2000)?;
        Ok((q.value * sphere_surface::<T>(self.d) - T::one()).abs())
    }
}

/// `V_N(x)` at a point.
pub fn mollifier_value<T: Scalar>(spec: &MollifierSpec<T>, n: usize, alpha: T, x: &[T]) -> T {
    spec.scaled_value(n, alpha, norm(x))
}

// ---------------------------------------------------------------------------
// Mollified kernel table
// ---------------------------------------------------------------------------

/// Anything that provides a signed radial force profile.
pub trait ForceProfile<T>: Sync {
    fn radial(&self, r: T) -> T;
}

impl<T: Scalar> ForceProfile<T> for LjParams<T> {
    fn radial(&self, r: T) -> T {
        self.force_radial(r)
    }
}

/// Tabulated radial profile of the mollified kernel `K_N = K * V_N`,
/// finite everywhere; beyond `crossover_radius` the exact profile is used.
#[derive(Debug, Clone)]
pub struct RadialKernelTable<T> {
    pub n_built: usize,
    pub alpha: T,
    pub radii: Vec<T>,
    pub values: Vec<T>,
    pub crossover_radius: T,
    pub params: LjParams<T>,
    ln_r_min: T,
    inv_ln_step: T,
}

impl<T: Scalar> ForceProfile<T> for RadialKernelTable<T> {
    fn radial(&self, r: T) -> T {
        if r <= T::zero() {
            return T::zero();
        }
        if r >= self.crossover_radius {
            return self.params.force_radial(r);
        }
        let r_min = self.radii[1];
        if r <= r_min {
            return self.values[1] * (r / r_min);
        }
        let pos = (r.ln() - self.ln_r_min) * self.inv_ln_step;
        let idx = pos
            .floor()
            .to_usize()
            .unwrap_or(0)
            .min(self.radii.len() - 3);
        let lo = self.radii[idx + 1];
        let hi = self.radii[idx + 2];
        let t = ((r - lo) / (hi - lo)).max(T::zero()).min(T::one());
        self.values[idx + 1] * (T::one() - t) + self.values[idx + 2] * t
    }
}

impl<T: Scalar> RadialKernelTable<T> {
    /// Force vector `k_N(|x|) x/|x|` written into `out`; zero at the origin.
    pub fn force_into(&self, x: &[T], out: &mut [T]) {
        let r = norm(x);
        if r <= T::zero() {
            for o in out.iter_mut() {
                *o = T::zero();
            }
            return;
        }
        let scale = self.radial(r) / r;
        for (o, &xi) in out.iter_mut().zip(x.iter()) {
            *o = xi * scale;
        }
    }

    /// CSV export, columns `r,k_n`.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "r,k_n")?;
        for (r, v) in self.radii.iter().zip(self.values.iter()) {
            writeln!(w, "{},{}", r, v)?;
        }
        Ok(())
    }
}

/// Force vector of the tabulated mollified kernel at a point.
pub fn eval_kn<T: Scalar>(table: &RadialKernelTable<T>, x: &[T]) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    table.force_into(x, &mut out);
    out
}

/// Radial profile of `K * V_N` at radius `r`, by quadrature in polar
/// coordinates centered at the kernel singularity: the angular factor is a
/// smooth integral of the bump and the radial factor carries the known
/// `rho^{d-1-a-1}` endpoint behaviour when the support covers the origin.
fn mollified_profile_at<T: Scalar>(
    params: &LjParams<T>,
    spec: &MollifierSpec<T>,
    n: usize,
    alpha: T,
    r: T,
) -> Result<T> {
    let d = params.d;
    let delta = spec.scaled_support(n, alpha);
    let two = c::<T>(2.0);
    let angular = |rho: T| -> Result<T> {
        // integral over directions of cos(angle) * V_N(|x - rho, direction|)
        let rel = c::<T>(1e-8);
        if d == 2 {
            let f = |phi: T| {
                let cosp = phi.cos();
                let w2 = r * r + rho * rho - two * r * rho * cosp;
                cosp * spec.scaled_value(n, alpha, w2.max(T::zero()).sqrt())
            };
            Ok(two * integrate(f, T::zero(), T::PI(), rel, c(1e-14), 600)?.value)
        } else {
            let f = |cosp: T| {
                let w2 = r * r + rho * rho - two * r * rho * cosp;
                cosp * spec.scaled_value(n, alpha, w2.max(T::zero()).sqrt())
            };
            Ok(two * T::PI() * integrate(f, -T::one(), T::one(), rel, c(1e-14), 600)?.value)
        }
    };
    let integrand = |rho: T| -> T {
        let ang = match angular(rho) {
            Ok(v) => v,
            Err(_) => T::nan(), // propagate as quadrature failure upstream
        };
        params.force_radial(rho) * rho.powf(cu::<T>(d) - T::one()) * ang
    };
    let rel = c::<T>(1e-7);
    let lo = (r - delta).max(T::zero());
    let hi = r + delta;
    let q = if lo > T::zero() {
        integrate(integrand, lo, hi, rel, c(1e-13), 800)?
    } else {
        // gamma for k(rho) rho^{d-1} ~ rho^{(d-1-a) - 1} near zero
        let gamma = cu::<T>(d) - T::one() - params.a;
        integrate_power_left(integrand, T::zero(), hi, gamma, rel, c(1e-13), 1600)?
    };
    Ok(q.value)
}

/// Build the radial table of the mollified kernel for `N` particles at
/// mesoscale exponent `alpha`. Radii are log-spaced up to the crossover
/// `3 * N^{-alpha} * support + R0`; past it the exact profile takes over and
/// the relative mismatch at the crossover is checked against `tol`.
pub fn build_mollified_kernel<T: Scalar>(
    params: &LjParams<T>,
    spec: &MollifierSpec<T>,
    n: usize,
    alpha: T,
    n_radii: usize,
    tol: T,
) -> Result<RadialKernelTable<T>> {
    params.validate()?;
    if !(alpha > T::zero() && alpha < T::one()) {
        return Err(Error::InvalidParams("alpha must lie in (0, 1)".into()));
    }
    if n_radii < 16 {
        return Err(Error::InvalidParams("need at least 16 table radii".into()));
    }
    let delta = spec.scaled_support(n, alpha);
    let crossover = c::<T>(3.0) * delta + params.r0;
    let r_min = delta * c::<T>(1e-3);
    let m = n_radii - 1;
    let ln_step = (crossover / r_min).ln() / cu::<T>(m - 1);
    let mut radii = Vec::with_capacity(n_radii);
    radii.push(T::zero());
    for i in 0..m {
        radii.push(r_min * (ln_step * cu::<T>(i)).exp());
    }
    *radii.last_mut().unwrap() = crossover;

    let profile: Vec<Result<T>> = radii
        .par_iter()
        .map(|&r| {
            if r == T::zero() {
                Ok(T::zero())
            } else {
                mollified_profile_at(params, spec, n, alpha, r)
            }
        })
        .collect();
    let mut values = Vec::with_capacity(n_radii);
    for (r, v) in radii.iter().zip(profile.into_iter()) {
        match v {
            Ok(v) if v.is_finite() => values.push(v),
            _ => {
                return Err(Error::QuadratureFailure {
                    worst_location: r.to_f64().unwrap_or(f64::NAN),
                    error_estimate: f64::NAN,
                })
            }
        }
    }

    let exact_at_cross = params.force_radial(crossover);
    let mismatch = ((values[n_radii - 1] - exact_at_cross) / exact_at_cross).abs();
    if mismatch > tol {
        return Err(Error::TableTolerance {
            worst_radius: crossover.to_f64().unwrap_or(f64::NAN),
            mismatch: mismatch.to_f64().unwrap_or(f64::NAN),
            tol: tol.to_f64().unwrap_or(f64::NAN),
        });
    }

    Ok(RadialKernelTable {
        n_built: n,
        alpha,
        ln_r_min: r_min.ln(),
        inv_ln_step: ln_step.recip(),
        radii,
        values,
        crossover_radius: crossover,
        params: *params,
    })
}
