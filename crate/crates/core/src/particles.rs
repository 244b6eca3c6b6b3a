//! Euler-Maruyama simulation of the interacting particle system
//! `dX_i = (1/N) sum_k K_N(X_i - X_k) dt + sqrt(2) dW_i`, its saturated
//! (cut-off) variant, and single-path sampling against a solved density.
//!
//! Noise is counter-based: the normal draw for (seed, stream, particle,
//! step, axis) is a pure function of that tuple. Raw and cut-off runs with
//! the same seed therefore share identical noise paths, and drift workers
//! can be parallelized without touching RNG state.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fields::{GridSpec, ScalarField, VectorField};
use crate::lj_kernel::{KernelConstants, MollifierSpec, RadialKernelTable};
use crate::scalar::{c, cu, Scalar};

// ---------------------------------------------------------------------------
// Counter-based noise
// ---------------------------------------------------------------------------

/// Independent noise streams within one seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseStream {
    /// Initial-condition draws.
    Init = 1,
    /// Wiener increments along the path.
    Path = 2,
    /// Rejection-sampler proposals.
    Reject = 3,
}

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline]
fn counter_hash(seed: u64, stream: NoiseStream, particle: u64, step: u64, axis: u64) -> u64 {
    let mut h = mix(seed ^ 0x9E37_79B9_7F4A_7C15);
    h = mix(h ^ (stream as u64).wrapping_mul(0xD6E8_FEB8_6659_FD93));
    h = mix(h ^ particle.wrapping_add(0xA076_1D64_78BD_642F));
    h = mix(h ^ step.wrapping_add(0xE703_7ED1_A0B4_28DB));
    mix(h ^ axis.wrapping_add(0x8EBC_6AF0_9C88_C6E3))
}

#[inline]
fn to_unit(x: u64) -> f64 {
    // strictly inside (0, 1): safe for log
    ((x >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Uniform draw in [0, 1) for the tuple.
pub fn uniform_draw<T: Scalar>(
    seed: u64,
    stream: NoiseStream,
    particle: u64,
    step: u64,
    axis: u64,
) -> T {
    c(to_unit(counter_hash(seed, stream, particle, step, axis)))
}

/// Standard normal draw for the tuple (Box-Muller on two derived uniforms).
pub fn normal_draw<T: Scalar>(
    seed: u64,
    stream: NoiseStream,
    particle: u64,
    step: u64,
    axis: u64,
) -> T {
    let h = counter_hash(seed, stream, particle, step, axis);
    let u1 = to_unit(h);
    let u2 = to_unit(mix(h ^ 0xC2B2_AE3D_27D4_EB4F));
    let z = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
    c(z)
}

// ---------------------------------------------------------------------------
// State and trajectories
// ---------------------------------------------------------------------------

/// Positions of `N` particles in free space (no wrapping), flat `N x d`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleState<T> {
    pub d: usize,
    pub positions: Vec<T>,
    pub time: T,
}

impl<T: Scalar> ParticleState<T> {
    pub fn n_particles(&self) -> usize {
        self.positions.len() / self.d
    }

    pub fn pos(&self, i: usize) -> &[T] {
        &self.positions[i * self.d..(i + 1) * self.d]
    }
}

/// Recorded run: states at the record stride, optional per-step Wiener
/// increments (needed by the stochastic convolution), plus provenance.
#[derive(Debug, Clone)]
pub struct Trajectory<T> {
    pub d: usize,
    pub n_particles: usize,
    pub dt: T,
    /// Times of the recorded states, strictly increasing, starting at 0.
    pub times: Vec<T>,
    pub states: Vec<Vec<T>>,
    /// `wiener[step]` holds the flat `N x d` increments of step `step`
    /// (variance dt per coordinate; the dynamics add `sqrt(2) dW`).
    pub wiener: Option<Vec<Vec<T>>>,
    pub seed: u64,
    pub config_hash: u64,
}

impl<T: Scalar> Trajectory<T> {
    pub fn state_at(&self, idx: usize) -> ParticleState<T> {
        ParticleState {
            d: self.d,
            positions: self.states[idx].clone(),
            time: self.times[idx],
        }
    }

    /// CSV export: columns `t,i,x1..xd`.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        let mut header = String::from("t,i");
        for ax in 0..self.d {
            header.push_str(&format!(",x{}", ax + 1));
        }
        writeln!(w, "{header}")?;
        for (t, state) in self.times.iter().zip(self.states.iter()) {
            for i in 0..self.n_particles {
                let mut line = format!("{},{}", t, i);
                for ax in 0..self.d {
                    line.push_str(&format!(",{}", state[i * self.d + ax]));
                }
                writeln!(w, "{line}")?;
            }
        }
        Ok(())
    }

    /// Flat binary export of the recorded Wiener increments:
    /// `u32 n_steps, u32 n_particles, u32 d`, then step-major f64 values.
    pub fn write_wiener_binary<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        let wiener = self
            .wiener
            .as_ref()
            .ok_or(Error::MissingIncrements { needed: 0 })?;
        w.write_all(&(wiener.len() as u32).to_le_bytes())?;
        w.write_all(&(self.n_particles as u32).to_le_bytes())?;
        w.write_all(&(self.d as u32).to_le_bytes())?;
        for step in wiener {
            for v in step {
                w.write_all(&v.to_f64().unwrap().to_le_bytes())?;
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Initial conditions
// ---------------------------------------------------------------------------

/// Initial law of the particles.
#[derive(Debug, Clone)]
pub enum InitialCondition<T> {
    /// i.i.d. isotropic Gaussian draws.
    Gaussian { center: Vec<T>, variance: T },
    /// Rejection sampling against a nonnegative grid density.
    GridDensity(ScalarField<T>),
}

const MAX_REJECTION_PROPOSALS: usize = 1_000_000;

/// Draw `n` i.i.d. positions from the initial law; deterministic in `seed`.
pub fn sample_initial<T: Scalar>(
    init: &InitialCondition<T>,
    d: usize,
    n: usize,
    seed: u64,
) -> Result<ParticleState<T>> {
    let mut positions = vec![T::zero(); n * d];
    match init {
        InitialCondition::Gaussian { center, variance } => {
            let sigma = variance.sqrt();
            for i in 0..n {
                for ax in 0..d {
                    let z = normal_draw::<T>(seed, NoiseStream::Init, i as u64, 0, ax as u64);
                    positions[i * d + ax] = center[ax] + sigma * z;
                }
            }
        }
        InitialCondition::GridDensity(density) => {
            let grid = density.grid;
            if grid.d != d {
                return Err(Error::GridMismatch);
            }
            let sup = density.max_abs();
            if !(sup > T::zero()) {
                return Err(Error::BadInitialDensity("density is identically zero".into()));
            }
            let width = c::<T>(2.0) * grid.half_width;
            for i in 0..n {
                let mut accepted = false;
                for attempt in 0..MAX_REJECTION_PROPOSALS {
                    let mut x = [T::zero(); 3];
                    for ax in 0..d {
                        let u: T = uniform_draw(
                            seed,
                            NoiseStream::Reject,
                            i as u64,
                            attempt as u64,
                            ax as u64,
                        );
                        x[ax] = -grid.half_width + u * width;
                    }
                    let gate: T = uniform_draw(
                        seed,
                        NoiseStream::Reject,
                        i as u64,
                        attempt as u64,
                        d as u64,
                    );
                    if gate * sup <= density.interp(&x[..d]) {
                        positions[i * d..i * d + d].copy_from_slice(&x[..d]);
                        accepted = true;
                        break;
                    }
                }
                if !accepted {
                    return Err(Error::RejectionOverflow(MAX_REJECTION_PROPOSALS));
                }
            }
        }
    }
    Ok(ParticleState {
        d,
        positions,
        time: T::zero(),
    })
}

// ---------------------------------------------------------------------------
// Drift
// ---------------------------------------------------------------------------

/// Mean pairwise force `(1/N) sum_{k != i} K_N(X_i - X_k)`, exact O(N^2),
/// parallel over particles. Self-interaction is excluded.
pub fn pairwise_drift<T: Scalar>(state: &ParticleState<T>, table: &RadialKernelTable<T>) -> Vec<T> {
    let n = state.n_particles();
    let d = state.d;
    let inv_n = cu::<T>(n).recip();
    let mut out = vec![T::zero(); n * d];
    out.par_chunks_mut(d).enumerate().for_each(|(i, drift)| {
        let xi = state.pos(i);
        let mut dx = [T::zero(); 3];
        let mut force = [T::zero(); 3];
        for k in 0..n {
            if k == i {
                continue;
            }
            let xk = state.pos(k);
            for ax in 0..d {
                dx[ax] = xi[ax] - xk[ax];
            }
            table.force_into(&dx[..d], &mut force[..d]);
            for ax in 0..d {
                drift[ax] += force[ax];
            }
        }
        for v in drift.iter_mut() {
            *v *= inv_n;
        }
    });
    out
}

// ---------------------------------------------------------------------------
// Cut-off
// ---------------------------------------------------------------------------

/// Componentwise C^2 saturation: identity up to `threshold`, constant
/// `sign(y) * threshold` beyond `threshold + width`, slope at most one.
///
/// The transition is two-piece: the derivative ramps from 1 to 0 as a cubic
/// smoothstep on the first half (value and curvature continuous), then the
/// accumulated overshoot `width/4` descends back to the plateau through a
/// quintic smoothstep on the second half (peak slope 15/16 < 1).
#[derive(Debug, Clone, Copy)]
pub struct CutoffSpec<T> {
    pub threshold: T,
    pub width: T,
}

impl<T: Scalar> CutoffSpec<T> {
    /// Scalar saturation, applied componentwise in d dimensions. Values in
    /// the identity region are returned unchanged (bit-exact).
    pub fn apply(&self, y: T) -> T {
        let b = self.threshold;
        if y.abs() <= b {
            return y;
        }
        let sign = if y < T::zero() { -T::one() } else { T::one() };
        let z = y.abs();
        let half = self.width * c::<T>(0.5);
        if z >= b + self.width {
            return sign * b;
        }
        let peak = self.width * c::<T>(0.25);
        let v = if z <= b + half {
            // rise: f' = 1 - 3u^2 + 2u^3, integrated
            let u = (z - b) / half;
            b + half * (u - u.powi(3) + u.powi(4) * c(0.5))
        } else {
            // descent: quintic smoothstep from the peak back to the plateau
            let u = (z - b - half) / half;
            let s = u.powi(3) * (c::<T>(6.0) * u * u - c::<T>(15.0) * u + c(10.0));
            b + peak * (T::one() - s)
        };
        sign * v
    }

    /// Analytic derivative of the scalar saturation.
    pub fn derivative(&self, y: T) -> T {
        let b = self.threshold;
        let z = y.abs();
        if z <= b {
            return T::one();
        }
        if z >= b + self.width {
            return T::zero();
        }
        let half = self.width * c::<T>(0.5);
        let peak = self.width * c::<T>(0.25);
        let sign = if y < T::zero() { -T::one() } else { T::one() };
        let v = if z <= b + half {
            let u = (z - b) / half;
            T::one() - c::<T>(3.0) * u * u + c::<T>(2.0) * u.powi(3)
        } else {
            let u = (z - b - half) / half;
            let ds = c::<T>(30.0) * u * u * (u - T::one()) * (u - T::one());
            -peak * ds / half
        };
        sign * sign * v // odd function: f(-y) = -f(y), so f' is even
    }

    /// Saturate a flat `N x d` drift vector componentwise.
    pub fn apply_componentwise(&self, drift: &mut [T]) {
        for v in drift.iter_mut() {
            *v = self.apply(*v);
        }
    }
}

/// Build the saturation and verify its clauses on a fine sample:
/// identity region exact, plateau exact, |f'| <= 1, value bounded by
/// `threshold + width`.
pub fn cutoff_build<T: Scalar>(threshold: T, width: T) -> Result<CutoffSpec<T>> {
    if !(threshold > T::zero()) || !(width > T::zero()) {
        return Err(Error::InvalidParams(
            "cutoff threshold and transition width must be positive".into(),
        ));
    }
    let spec = CutoffSpec { threshold, width };
    let samples = 10_000;
    for k in 0..=samples {
        let y = threshold + width * cu::<T>(k) / cu::<T>(samples);
        let f = spec.apply(y);
        let fp = spec.derivative(y);
        if f.abs() > threshold + width || fp.abs() > T::one() + c(1e-12) {
            return Err(Error::InvalidParams(format!(
                "cutoff transition violates its bounds at y = {y}"
            )));
        }
    }
    Ok(spec)
}

/// Threshold `B = C_1 C_Kpq (eta + ||u||)` tying the saturation level to the
/// limiting drift bound.
pub fn cutoff_threshold<T: Scalar>(constants: &KernelConstants<T>, eta: T, u_norm: T) -> T {
    constants.c1_nu * constants.c_kpq * (eta + u_norm)
}

/// Pairwise drift followed by the componentwise saturation.
pub fn drift_cutoff<T: Scalar>(
    state: &ParticleState<T>,
    table: &RadialKernelTable<T>,
    spec: &CutoffSpec<T>,
) -> Vec<T> {
    let mut drift = pairwise_drift(state, table);
    spec.apply_componentwise(&mut drift);
    drift
}

// ---------------------------------------------------------------------------
// Time stepping
// ---------------------------------------------------------------------------

/// One Euler-Maruyama step: `X += drift dt + sqrt(2 dt) noise`.
pub fn em_step<T: Scalar>(
    state: &ParticleState<T>,
    drifts: &[T],
    dt: T,
    noise: &[T],
    step_index: usize,
) -> Result<ParticleState<T>> {
    let scale = (c::<T>(2.0) * dt).sqrt();
    let mut positions = state.positions.clone();
    for (idx, p) in positions.iter_mut().enumerate() {
        *p = *p + drifts[idx] * dt + scale * noise[idx];
        if !p.is_finite() {
            return Err(Error::NonFinite {
                particle: idx / state.d,
                step: step_index,
            });
        }
    }
    Ok(ParticleState {
        d: state.d,
        positions,
        time: state.time + dt,
    })
}

// ---------------------------------------------------------------------------
// Full simulation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DriftMode {
    /// Plain pairwise drift.
    Raw,
    /// Componentwise saturation applied to the pairwise drift.
    Cutoff,
}

#[derive(Debug, Clone)]
pub struct SimConfig<T> {
    pub n_particles: usize,
    pub d: usize,
    pub dt: T,
    pub n_steps: usize,
    pub mode: DriftMode,
    pub cutoff: Option<CutoffSpec<T>>,
    pub init: InitialCondition<T>,
    /// Record every `record_stride`-th state (t = 0 and the endpoint always).
    pub record_stride: usize,
    pub record_wiener: bool,
}

impl<T: Scalar> SimConfig<T> {
    fn fingerprint(&self) -> u64 {
        let mut h = mix(self.n_particles as u64 ^ 0x51_7C_C1B7_2722_0A95);
        h = mix(h ^ self.d as u64);
        h = mix(h ^ self.n_steps as u64);
        h = mix(h ^ self.dt.to_f64().unwrap_or(0.0).to_bits());
        h = mix(h ^ self.record_stride as u64);
        h = mix(h ^ matches!(self.mode, DriftMode::Cutoff) as u64);
        if let Some(cut) = &self.cutoff {
            h = mix(h ^ cut.threshold.to_f64().unwrap_or(0.0).to_bits());
            h = mix(h ^ cut.width.to_f64().unwrap_or(0.0).to_bits());
        }
        h
    }
}

/// Run the Euler-Maruyama scheme. The normal draw for (seed, particle, step,
/// axis) is a pure function of the tuple, so raw and cut-off runs with the
/// same seed consume identical noise.
pub fn simulate<T: Scalar>(
    config: &SimConfig<T>,
    table: &RadialKernelTable<T>,
    seed: u64,
) -> Result<Trajectory<T>> {
    if config.mode == DriftMode::Cutoff && config.cutoff.is_none() {
        return Err(Error::InvalidParams(
            "cutoff mode needs a CutoffSpec".into(),
        ));
    }
    if config.record_stride == 0 || config.dt <= T::zero() {
        return Err(Error::InvalidParams(
            "record stride must be >= 1 and dt > 0".into(),
        ));
    }
    let n = config.n_particles;
    let d = config.d;
    let mut state = sample_initial(&config.init, d, n, seed)?;
    let mut times = vec![T::zero()];
    let mut states = vec![state.positions.clone()];
    let mut wiener = config.record_wiener.then(Vec::new);

    let mut noise = vec![T::zero(); n * d];
    let mut increments = vec![T::zero(); n * d];
    for step in 0..config.n_steps {
        let mut drift = pairwise_drift(&state, table);
        if config.mode == DriftMode::Cutoff {
            config.cutoff.as_ref().unwrap().apply_componentwise(&mut drift);
        }
        let sqrt_dt = config.dt.sqrt();
        for i in 0..n {
            for ax in 0..d {
                let z: T =
                    normal_draw(seed, NoiseStream::Path, i as u64, step as u64, ax as u64);
                noise[i * d + ax] = z;
                increments[i * d + ax] = sqrt_dt * z;
            }
        }
        state = em_step(&state, &drift, config.dt, &noise, step)?;
        if let Some(w) = wiener.as_mut() {
            w.push(increments.clone());
        }
        if (step + 1) % config.record_stride == 0 || step + 1 == config.n_steps {
            times.push(state.time);
            states.push(state.positions.clone());
        }
    }

    Ok(Trajectory {
        d,
        n_particles: n,
        dt: config.dt,
        times,
        states,
        wiener,
        seed,
        config_hash: config.fingerprint(),
    })
}

// ---------------------------------------------------------------------------
// Single path against a solved density
// ---------------------------------------------------------------------------

/// Time-indexed drift fields `K * u(t_k, .)` for path sampling.
#[derive(Debug, Clone)]
pub struct PathDrift<T> {
    pub grid: GridSpec<T>,
    pub times: Vec<T>,
    pub fields: Vec<VectorField<T>>,
}

impl<T: Scalar> PathDrift<T> {
    /// Index of the last stored time <= t (left-endpoint convention).
    fn left_index(&self, t: T) -> usize {
        match self.times.iter().rposition(|&s| s <= t) {
            Some(i) => i,
            None => 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct McKeanPath<T> {
    pub times: Vec<T>,
    pub points: Vec<Vec<T>>,
    /// True when the path left the trusted region (within L/4 of the
    /// boundary) at any step.
    pub flagged: bool,
}

/// Euler-Maruyama for `dX = (K * u)(t, X) dt + sqrt(2) dW` with the drift
/// interpolated from precomputed snapshot fields (left snapshot in time,
/// multilinear in space).
pub fn mckean_simulate<T: Scalar>(
    drift: &PathDrift<T>,
    x0: &[T],
    dt: T,
    n_steps: usize,
    seed: u64,
    path_id: u64,
) -> McKeanPath<T> {
    let d = drift.grid.d;
    let trusted = drift.grid.half_width * c::<T>(0.75);
    let mut x = x0.to_vec();
    let mut times = vec![T::zero()];
    let mut points = vec![x.clone()];
    let mut flagged = false;
    let mut force = vec![T::zero(); d];
    let scale = (c::<T>(2.0) * dt).sqrt();
    for step in 0..n_steps {
        let t = cu::<T>(step) * dt;
        let idx = drift.left_index(t);
        drift.fields[idx].interp_into(&x, &mut force);
        for ax in 0..d {
            let z: T = normal_draw(seed, NoiseStream::Path, path_id, step as u64, ax as u64);
            x[ax] = x[ax] + force[ax] * dt + scale * z;
            if x[ax].abs() > trusted {
                flagged = true;
            }
        }
        times.push(cu::<T>(step + 1) * dt);
        points.push(x.clone());
    }
    McKeanPath {
        times,
        points,
        flagged,
    }
}

/// Assemble the path-drift fields `K * u(t_k, .)` from a solved density.
pub fn drift_fields_path<T: Scalar>(
    sol: &crate::fokker_planck::PdeSolution<T>,
    conv: &crate::fields::KernelConvolution<T>,
) -> Result<PathDrift<T>> {
    let fields = sol
        .fields
        .iter()
        .map(|f| conv.apply(f))
        .collect::<Result<Vec<_>>>()?;
    Ok(PathDrift {
        grid: sol.grid,
        times: sol.times.clone(),
        fields,
    })
}

/// Gaussian default initial density matched to a mollifier-spec dimension.
pub fn gaussian_init<T: Scalar>(d: usize, variance: T) -> InitialCondition<T> {
    InitialCondition::Gaussian {
        center: vec![T::zero(); d],
        variance,
    }
}

/// Convenience: a mollifier bump is resolvable on the grid when its support
/// covers at least two cells.
pub fn check_support_resolved<T: Scalar>(
    spec: &MollifierSpec<T>,
    n_particles: usize,
    alpha: T,
    grid: &GridSpec<T>,
) -> Result<()> {
    let support = spec.scaled_support(n_particles, alpha);
    let h = grid.spacing();
    if support < c::<T>(2.0) * h {
        return Err(Error::UnderResolvedMollifier {
            support: support.to_f64().unwrap_or(f64::NAN),
            spacing: h.to_f64().unwrap_or(f64::NAN),
        });
    }
    Ok(())
}
