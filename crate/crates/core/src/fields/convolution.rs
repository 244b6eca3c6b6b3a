//! Grid convolution with a radial force kernel.
//!
//! The kernel components are sampled on the torus, transformed once, and
//! applied to fields by pointwise spectral multiplication. For the exact
//! (singular) kernel the cells around the origin need care:
//!
//! * the origin cell is the cell average of an odd kernel, which vanishes;
//! * `CellAverage` replaces the samples in the 5^d patch around the origin
//!   by exact cell averages (zeroth moments);
//! * `MomentCorrected` (d = 2) additionally applies the first-moment
//!   correction `-sum_c m_c . grad f(x - z_c)` over the patch, removing the
//!   leading discretization error of the singular near field.

use rustfft::num_complex::Complex;

use super::spectral::{for_each_mode, forward, inverse_real, wavenumbers};
use super::{GridSpec, ScalarField, VectorField};
use crate::error::{Error, Result};
use crate::lj_kernel::{ForceProfile, LjParams};
use crate::quad::{gl16, integrate};
use crate::scalar::{c, Scalar};

/// Near-field handling for the exact singular kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NearField {
    /// Point samples everywhere except the origin cell.
    SampleOnly,
    /// Cell averages on the 5^d patch around the origin.
    CellAverage,
    /// Cell averages plus the first-moment gradient correction (d = 2 only;
    /// d = 3 falls back to `CellAverage`).
    MomentCorrected,
}

/// Half-extent of the corrected patch, in cells.
const PATCH: isize = 2;

#[derive(Debug, Clone)]
struct MomentStencil<T> {
    offset: [isize; 3],
    m: [[T; 3]; 3],
}

/// Precomputed spectral kernel for repeated convolutions on one grid.
#[derive(Debug, Clone)]
pub struct KernelConvolution<T> {
    grid: GridSpec<T>,
    spectra: Vec<Vec<Complex<T>>>,
    stencil: Vec<MomentStencil<T>>,
}

impl<T: Scalar> KernelConvolution<T> {
    /// Sample any radial profile pointwise (suitable for mollified tables,
    /// which are bounded and smooth on the grid scale).
    pub fn from_profile(grid: GridSpec<T>, profile: &dyn ForceProfile<T>) -> Self {
        let samples = sample_kernel(grid, profile);
        Self::from_samples(grid, samples, Vec::new())
    }

    /// Sample the exact singular kernel with the requested near-field rule.
    pub fn exact(grid: GridSpec<T>, params: &LjParams<T>, near: NearField) -> Result<Self> {
        let mut samples = sample_kernel(grid, params);
        let mut stencil = Vec::new();
        if near != NearField::SampleOnly {
            patch_cell_averages(grid, params, &mut samples)?;
            if near == NearField::MomentCorrected && grid.d == 2 {
                stencil = first_moment_stencil(grid, params)?;
            }
        }
        Ok(Self::from_samples(grid, samples, stencil))
    }

    fn from_samples(
        grid: GridSpec<T>,
        samples: Vec<Vec<T>>,
        stencil: Vec<MomentStencil<T>>,
    ) -> Self {
        let spectra = samples
            .into_iter()
            .map(|comp| forward(&grid, &comp))
            .collect();
        KernelConvolution {
            grid,
            spectra,
            stencil,
        }
    }

    pub fn grid(&self) -> &GridSpec<T> {
        &self.grid
    }

    /// Convolve a density with the kernel: `out_j = h^d IFFT(K_j^ * f^)`,
    /// plus the near-field moment correction when configured.
    pub fn apply(&self, f: &ScalarField<T>) -> Result<VectorField<T>> {
        if f.grid != self.grid {
            return Err(Error::GridMismatch);
        }
        let grid = self.grid;
        let vol = grid.cell_volume();
        let f_hat = forward(&grid, &f.values);
        let mut components = Vec::with_capacity(grid.d);
        for spec in &self.spectra {
            let mixed: Vec<Complex<T>> = spec
                .iter()
                .zip(f_hat.iter())
                .map(|(&k, &v)| k * v)
                .collect();
            let mut vals = inverse_real(&grid, mixed);
            for v in vals.iter_mut() {
                *v *= vol;
            }
            components.push(vals);
        }

        if !self.stencil.is_empty() {
            // gradient of f from the same spectrum
            let (_, odd) = wavenumbers(&grid);
            let mut grads: Vec<Vec<T>> = Vec::with_capacity(grid.d);
            for ax in 0..grid.d {
                let mut spec = f_hat.clone();
                for_each_mode(&grid, |flat, k| {
                    let xi = odd[k[ax]];
                    let z = spec[flat];
                    spec[flat] = Complex::new(-z.im * xi, z.re * xi);
                });
                grads.push(inverse_real(&grid, spec));
            }
            let n = grid.n as isize;
            for st in &self.stencil {
                for j in 0..grid.d {
                    for l in 0..grid.d {
                        let w = st.m[j][l] * vol;
                        if w == T::zero() {
                            continue;
                        }
                        // out_j(x) -= w * grad_l f(x - offset)
                        for i0 in 0..n {
                            let s0 = (i0 - st.offset[0]).rem_euclid(n) as usize;
                            for i1 in 0..n {
                                let s1 = (i1 - st.offset[1]).rem_euclid(n) as usize;
                                let dst = (i0 as usize) * grid.n + i1 as usize;
                                let src = s0 * grid.n + s1;
                                components[j][dst] -= w * grads[l][src];
                            }
                        }
                    }
                }
            }
        }

        Ok(VectorField {
            grid,
            components,
        })
    }
}

/// Sample the kernel in displacement layout: array index `m` holds the value
/// at the signed displacement `(m <= n/2 ? m : m - n) * h`, so that the
/// circular convolution `sum_y K[(i - y) mod n] f[y]` sees minimum-image
/// displacements and the origin sits at index 0.
fn sample_kernel<T: Scalar>(grid: GridSpec<T>, profile: &dyn ForceProfile<T>) -> Vec<Vec<T>> {
    let n = grid.n;
    let h = grid.spacing();
    let signed = |m: usize| -> T {
        let k = if m <= n / 2 {
            m as isize
        } else {
            m as isize - n as isize
        };
        h * c::<T>(k as f64)
    };
    let mut comps: Vec<Vec<T>> = (0..grid.d).map(|_| vec![T::zero(); grid.len()]).collect();
    let mut visit = |idx: [usize; 3]| {
        let flat = grid.flat(idx);
        let mut z = [T::zero(); 3];
        let mut r2 = T::zero();
        for ax in 0..grid.d {
            z[ax] = signed(idx[ax]);
            r2 += z[ax] * z[ax];
        }
        if r2 == T::zero() {
            return; // origin cell: odd-kernel cell average vanishes
        }
        let r = r2.sqrt();
        let scale = profile.radial(r) / r;
        for (ax, comp) in comps.iter_mut().enumerate() {
            comp[flat] = z[ax] * scale;
        }
    };
    if grid.d == 2 {
        for i0 in 0..n {
            for i1 in 0..n {
                visit([i0, i1, 0]);
            }
        }
    } else {
        for i0 in 0..n {
            for i1 in 0..n {
                for i2 in 0..n {
                    visit([i0, i1, i2]);
                }
            }
        }
    }
    comps
}

/// Replace the samples in the patch cells by exact cell averages of the
/// kernel components. The origin cell stays zero.
fn patch_cell_averages<T: Scalar>(
    grid: GridSpec<T>,
    params: &LjParams<T>,
    samples: &mut [Vec<T>],
) -> Result<()> {
    let h = grid.spacing();
    let n = grid.n as isize;
    let vol = grid.cell_volume();
    let offsets = patch_offsets(grid.d);
    for o in offsets {
        if o == [0, 0, 0] {
            continue;
        }
        let center = [
            h * c::<T>(o[0] as f64),
            h * c::<T>(o[1] as f64),
            h * c::<T>(o[2] as f64),
        ];
        let idx = [
            o[0].rem_euclid(n) as usize,
            o[1].rem_euclid(n) as usize,
            o[2].rem_euclid(n) as usize,
        ];
        let flat = grid.flat(idx);
        for j in 0..grid.d {
            let avg = cell_integral(params, grid.d, h, center, j, None) / vol;
            samples[j][flat] = avg;
        }
    }
    Ok(())
}

/// First-moment stencil for d = 2: `m[j][l] = (1/h^2) int_cell K_j (z - z_c)_l`.
fn first_moment_stencil<T: Scalar>(
    grid: GridSpec<T>,
    params: &LjParams<T>,
) -> Result<Vec<MomentStencil<T>>> {
    let h = grid.spacing();
    let vol = grid.cell_volume();
    let mut stencil = Vec::new();
    for o in patch_offsets(2) {
        let mut m = [[T::zero(); 3]; 3];
        if o == [0, 0, 0] {
            // Closed form in polar coordinates over the square cell:
            // diag entry = int cos^2(theta) * Rint(R(theta)) dtheta with
            // Rint(R) = int_0^R k(r) r^2 dr, off-diagonals vanish by symmetry.
            let rint = |radius: T| {
                let two = c::<T>(2.0);
                params.epsilon
                    * (params.r0.powf(params.a) * radius.powf(two - params.a) / (two - params.a)
                        - params.r0.powf(params.b) * radius.powf(two - params.b)
                            / (two - params.b))
            };
            let half = h * c::<T>(0.5);
            let f = |theta: T| {
                let cross = theta.cos().abs().max(theta.sin().abs());
                let radius = half / cross;
                theta.cos().powi(2) * rint(radius)
            };
            let diag = integrate(f, T::zero(), c::<T>(2.0) * T::PI(), c(1e-10), c(1e-14), 2000)?
                .value
                / vol;
            m[0][0] = diag;
            m[1][1] = diag;
        } else {
            let center = [h * c::<T>(o[0] as f64), h * c::<T>(o[1] as f64), T::zero()];
            for j in 0..2 {
                for l in 0..2 {
                    m[j][l] = cell_integral(params, 2, h, center, j, Some(l)) / vol;
                }
            }
        }
        stencil.push(MomentStencil { offset: o, m });
    }
    Ok(stencil)
}

fn patch_offsets(d: usize) -> Vec<[isize; 3]> {
    let mut out = Vec::new();
    if d == 2 {
        for o0 in -PATCH..=PATCH {
            for o1 in -PATCH..=PATCH {
                out.push([o0, o1, 0]);
            }
        }
    } else {
        for o0 in -PATCH..=PATCH {
            for o1 in -PATCH..=PATCH {
                for o2 in -PATCH..=PATCH {
                    out.push([o0, o1, o2]);
                }
            }
        }
    }
    out
}

/// Tensor Gauss-Legendre integral of `K_j(z)` (or `K_j(z)(z-z_c)_l` when
/// `moment_axis` is set) over the cell centered at `center`. Not used for
/// the origin cell, whose integrand is singular.
fn cell_integral<T: Scalar>(
    params: &LjParams<T>,
    d: usize,
    h: T,
    center: [T; 3],
    j: usize,
    moment_axis: Option<usize>,
) -> T {
    let half = h * c::<T>(0.5);
    let kernel_at = |z: [T; 3]| -> T {
        let mut r2 = T::zero();
        for &zi in z.iter().take(d) {
            r2 += zi * zi;
        }
        if r2 == T::zero() {
            return T::zero();
        }
        let r = r2.sqrt();
        let mut v = params.force_radial(r) / r * z[j];
        if let Some(l) = moment_axis {
            v *= z[l] - center[l];
        }
        v
    };
    if d == 2 {
        gl16(
            |z0| {
                gl16(
                    |z1| kernel_at([z0, z1, T::zero()]),
                    center[1] - half,
                    center[1] + half,
                )
            },
            center[0] - half,
            center[0] + half,
        )
    } else {
        gl16(
            |z0| {
                gl16(
                    |z1| {
                        gl16(
                            |z2| kernel_at([z0, z1, z2]),
                            center[2] - half,
                            center[2] + half,
                        )
                    },
                    center[1] - half,
                    center[1] + half,
                )
            },
            center[0] - half,
            center[0] + half,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lj_kernel::{build_mollified_kernel, kernel_constants, MollifierSpec};

    fn params() -> LjParams<f64> {
        LjParams::new(1.0, 1.0, 0.3, 0.15, 2).unwrap()
    }

    fn smooth_density(grid: GridSpec<f64>, seed: u64) -> ScalarField<f64> {
        // deterministic positive smooth density from a few Fourier modes
        let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15) | 1;
        let mut rand = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let l = grid.half_width;
        let modes: Vec<(f64, f64, f64, f64)> = (0..4)
            .map(|_| (rand() * 4.0, rand() * 4.0, rand(), rand() * 6.0))
            .collect();
        let mut f = ScalarField::from_fn(grid, |x| {
            let mut v = 1.0;
            for &(k0, k1, amp, phase) in &modes {
                let k0 = (k0.round()) * std::f64::consts::PI / l;
                let k1 = (k1.round()) * std::f64::consts::PI / l;
                v += amp * (k0 * x[0] + k1 * x[1] + phase).cos();
            }
            v
        });
        let min = f.min_value();
        for v in f.values.iter_mut() {
            *v = *v - min + 0.05;
        }
        let mass = f.mass();
        for v in f.values.iter_mut() {
            *v /= mass;
        }
        f
    }

    #[test]
    fn zero_density_gives_zero_field() {
        let grid = GridSpec::new(2, 32, 2.0).unwrap();
        let conv = KernelConvolution::exact(grid, &params(), NearField::CellAverage).unwrap();
        let out = conv.apply(&ScalarField::zeros(grid)).unwrap();
        assert!(out.components.iter().all(|c| c.iter().all(|v| v.abs() < 1e-14)));
    }

    #[test]
    fn even_density_vanishes_at_center() {
        let grid = GridSpec::new(2, 64, 2.0).unwrap();
        let f = ScalarField::gaussian(grid, &[0.0, 0.0], 0.1);
        let conv = KernelConvolution::exact(grid, &params(), NearField::SampleOnly).unwrap();
        let out = conv.apply(&f).unwrap();
        // x = 0 sits at index n/2 along each axis
        let flat = grid.flat([grid.n / 2, grid.n / 2, 0]);
        let scale = out.max_norm();
        for comp in &out.components {
            assert!(comp[flat].abs() <= 1e-8 * scale.max(1.0));
        }
    }

    #[test]
    fn matches_direct_circular_sum() {
        let grid = GridSpec::new(2, 32, 1.5).unwrap();
        let p = params();
        let f = smooth_density(grid, 7);
        let conv = KernelConvolution::exact(grid, &p, NearField::SampleOnly).unwrap();
        let out = conv.apply(&f).unwrap();

        // direct O(n^4) circular convolution of the same samples
        let h = grid.spacing();
        let n = grid.n as isize;
        let samples = sample_kernel(grid, &p);
        let mut worst = 0.0f64;
        for i0 in (0..n).step_by(7) {
            for i1 in (0..n).step_by(5) {
                let mut acc = [0.0f64; 2];
                for y0 in 0..n {
                    for y1 in 0..n {
                        let k0 = (i0 - y0).rem_euclid(n) as usize;
                        let k1 = (i1 - y1).rem_euclid(n) as usize;
                        let fv = f.values[(y0 as usize) * grid.n + y1 as usize];
                        for j in 0..2 {
                            acc[j] += samples[j][k0 * grid.n + k1] * fv * h * h;
                        }
                    }
                }
                let flat = (i0 as usize) * grid.n + i1 as usize;
                for j in 0..2 {
                    worst = worst.max((acc[j] - out.components[j][flat]).abs());
                }
            }
        }
        assert!(worst < 1e-10, "direct vs spectral gap {worst}");
    }

    #[test]
    fn operator_bound_with_grid_slack() {
        let grid = GridSpec::new(2, 128, 2.0).unwrap();
        let p = params();
        let pe = 1.2;
        let q = 3.0;
        let consts = kernel_constants(&p, 1.0, pe, q).unwrap();
        let p_conj = pe / (pe - 1.0);
        let conv = KernelConvolution::exact(grid, &p, NearField::CellAverage).unwrap();
        for seed in 0..5 {
            let f = smooth_density(grid, seed);
            let out = conv.apply(&f).unwrap();
            let lhs = out
                .components
                .iter()
                .map(|comp| comp.iter().fold(0.0f64, |m, v| m.max(v.abs())))
                .fold(0.0f64, f64::max);
            let rhs = consts.c1_nu * consts.c_kpq * f.norm_intersection(p_conj);
            assert!(
                lhs <= rhs * 1.05,
                "seed {seed}: {lhs} > {rhs} * 1.05"
            );
        }
    }

    #[test]
    fn moment_correction_builds_and_tightens_near_field() {
        let grid = GridSpec::new(2, 64, 2.0).unwrap();
        let p = params();
        let plain = KernelConvolution::exact(grid, &p, NearField::SampleOnly).unwrap();
        let corrected = KernelConvolution::exact(grid, &p, NearField::MomentCorrected).unwrap();
        assert_eq!(corrected.stencil.len(), 25);
        // reference: the same convolution on a finer grid, compared at shared points
        let fine_grid = GridSpec::new(2, 256, 2.0).unwrap();
        let conv_fine = KernelConvolution::exact(fine_grid, &p, NearField::MomentCorrected).unwrap();
        let f_coarse = ScalarField::gaussian(grid, &[0.2, -0.1], 0.09);
        let f_fine = ScalarField::gaussian(fine_grid, &[0.2, -0.1], 0.09);
        let out_plain = plain.apply(&f_coarse).unwrap();
        let out_corr = corrected.apply(&f_coarse).unwrap();
        let out_fine = conv_fine.apply(&f_fine).unwrap();
        let mut err_plain = 0.0f64;
        let mut err_corr = 0.0f64;
        for i0 in (0..grid.n).step_by(3) {
            for i1 in (0..grid.n).step_by(3) {
                let cf = grid.flat([i0, i1, 0]);
                let ff = fine_grid.flat([4 * i0, 4 * i1, 0]);
                for j in 0..2 {
                    err_plain = err_plain
                        .max((out_plain.components[j][cf] - out_fine.components[j][ff]).abs());
                    err_corr = err_corr
                        .max((out_corr.components[j][cf] - out_fine.components[j][ff]).abs());
                }
            }
        }
        assert!(
            err_corr < err_plain,
            "correction should tighten the near field: {err_corr} vs {err_plain}"
        );
    }

    #[test]
    fn table_profile_convolution_smoke() {
        let grid = GridSpec::<f64>::new(2, 64, 2.0).unwrap();
        let p = LjParams::new(2.0, 1.0, 0.8, 0.4, 2).unwrap();
        let spec = MollifierSpec::reference(2);
        let table = build_mollified_kernel(&p, &spec, 64, 0.15, 128, 0.05).unwrap();
        let conv = KernelConvolution::from_profile(grid, &table);
        let f = ScalarField::gaussian(grid, &[0.0, 0.0], 0.08);
        let out = conv.apply(&f).unwrap();
        assert!(out.max_norm().is_finite());
        // odd kernel against even density vanishes at the center
        let flat = grid.flat([grid.n / 2, grid.n / 2, 0]);
        for comp in &out.components {
            assert!(comp[flat].abs() < 1e-8 * out.max_norm().max(1.0));
        }
    }
}
