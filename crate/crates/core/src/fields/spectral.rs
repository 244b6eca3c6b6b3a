//! FFT plumbing and the spectral operators on periodic fields.
//!
//! Convention: wavenumbers are `xi = (pi/L) * k` with `k` the signed DFT
//! index, so the heat multiplier is exactly `exp(-t |xi|^2)`. First
//! derivatives zero the Nyquist mode, the standard choice keeping odd
//! operators real-symmetric on even grids.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::{GridSpec, ScalarField, VectorField};
use crate::scalar::{c, cu, Scalar};

/// Unnormalized forward DFT along every axis.
pub(crate) fn forward<T: Scalar>(grid: &GridSpec<T>, values: &[T]) -> Vec<Complex<T>> {
    let mut data: Vec<Complex<T>> = values
        .iter()
        .map(|&v| Complex::new(v, T::zero()))
        .collect();
    fft_axes(grid, &mut data, false);
    data
}

/// Inverse DFT (with 1/n^d normalization), real part extracted.
pub(crate) fn inverse_real<T: Scalar>(grid: &GridSpec<T>, mut spec: Vec<Complex<T>>) -> Vec<T> {
    fft_axes(grid, &mut spec, true);
    let scale = T::one() / cu::<T>(grid.len());
    spec.into_iter().map(|z| z.re * scale).collect()
}

fn fft_axes<T: Scalar>(grid: &GridSpec<T>, data: &mut [Complex<T>], inverse: bool) {
    let n = grid.n;
    let d = grid.d;
    let mut planner = FftPlanner::<T>::new();
    let fft = if inverse {
        planner.plan_fft_inverse(n)
    } else {
        planner.plan_fft_forward(n)
    };
    let len = data.len();
    let mut row = vec![Complex::new(T::zero(), T::zero()); n];
    for axis in 0..d {
        let stride = n.pow((d - 1 - axis) as u32);
        let block = stride * n;
        for base in (0..len).step_by(block) {
            for s in 0..stride {
                let start = base + s;
                for (i, slot) in row.iter_mut().enumerate() {
                    *slot = data[start + i * stride];
                }
                fft.process(&mut row);
                for (i, &v) in row.iter().enumerate() {
                    data[start + i * stride] = v;
                }
            }
        }
    }
}

/// Per-index wavenumber tables: full (Nyquist kept, for `|xi|^2`) and odd
/// (Nyquist zeroed, for first derivatives).
pub(crate) fn wavenumbers<T: Scalar>(grid: &GridSpec<T>) -> (Vec<T>, Vec<T>) {
    let n = grid.n;
    let base = T::PI() / grid.half_width;
    let mut full = Vec::with_capacity(n);
    let mut odd = Vec::with_capacity(n);
    for i in 0..n {
        let k = if i <= n / 2 {
            i as isize
        } else {
            i as isize - n as isize
        };
        let xi = base * c::<T>(k as f64);
        full.push(xi);
        odd.push(if i == n / 2 { T::zero() } else { xi });
    }
    (full, odd)
}

/// Visit every spectral mode: flat index plus per-axis index triplet
/// (third entry unused for d = 2).
pub(crate) fn for_each_mode<T: Scalar>(grid: &GridSpec<T>, mut f: impl FnMut(usize, [usize; 3])) {
    let n = grid.n;
    if grid.d == 2 {
        let mut flat = 0;
        for i0 in 0..n {
            for i1 in 0..n {
                f(flat, [i0, i1, 0]);
                flat += 1;
            }
        }
    } else {
        let mut flat = 0;
        for i0 in 0..n {
            for i1 in 0..n {
                for i2 in 0..n {
                    f(flat, [i0, i1, i2]);
                    flat += 1;
                }
            }
        }
    }
}

/// Heat semigroup: multiplier `exp(-t |xi|^2)`.
pub fn heat_propagate<T: Scalar>(f: &ScalarField<T>, t: T) -> ScalarField<T> {
    assert!(t >= T::zero(), "heat_propagate needs t >= 0");
    if t == T::zero() {
        return f.clone();
    }
    let grid = f.grid;
    let (full, _) = wavenumbers(&grid);
    let mut spec = forward(&grid, &f.values);
    for_each_mode(&grid, |flat, k| {
        let mut xi2 = T::zero();
        for ax in 0..grid.d {
            let xi = full[k[ax]];
            xi2 += xi * xi;
        }
        let m = (-t * xi2).exp();
        spec[flat] = spec[flat] * m;
    });
    ScalarField {
        grid,
        values: inverse_real(&grid, spec),
    }
}

/// Bessel multiplier `(1 + |xi|^2)^{beta/2}`.
pub fn bessel_apply<T: Scalar>(f: &ScalarField<T>, beta: T) -> ScalarField<T> {
    assert!(
        beta >= c(-2.0) && beta <= c(2.0),
        "bessel order limited to [-2, 2]"
    );
    if beta == T::zero() {
        return f.clone();
    }
    let grid = f.grid;
    let (full, _) = wavenumbers(&grid);
    let half = beta * c::<T>(0.5);
    let mut spec = forward(&grid, &f.values);
    for_each_mode(&grid, |flat, k| {
        let mut xi2 = T::zero();
        for ax in 0..grid.d {
            let xi = full[k[ax]];
            xi2 += xi * xi;
        }
        let m = (T::one() + xi2).powf(half);
        spec[flat] = spec[flat] * m;
    });
    ScalarField {
        grid,
        values: inverse_real(&grid, spec),
    }
}

/// Spectral gradient.
pub fn grad<T: Scalar>(f: &ScalarField<T>) -> VectorField<T> {
    let grid = f.grid;
    let (_, odd) = wavenumbers(&grid);
    let spec = forward(&grid, &f.values);
    let mut components = Vec::with_capacity(grid.d);
    for ax in 0..grid.d {
        let mut comp = spec.clone();
        for_each_mode(&grid, |flat, k| {
            let xi = odd[k[ax]];
            let z = comp[flat];
            comp[flat] = Complex::new(-z.im * xi, z.re * xi); // i*xi*z
        });
        components.push(inverse_real(&grid, comp));
    }
    VectorField { grid, components }
}

/// Spectral divergence.
pub fn div<T: Scalar>(field: &VectorField<T>) -> ScalarField<T> {
    let grid = field.grid;
    let (_, odd) = wavenumbers(&grid);
    let mut acc = vec![Complex::new(T::zero(), T::zero()); grid.len()];
    for ax in 0..grid.d {
        let spec = forward(&grid, &field.components[ax]);
        for_each_mode(&grid, |flat, k| {
            let xi = odd[k[ax]];
            let z = spec[flat];
            acc[flat] = acc[flat] + Complex::new(-z.im * xi, z.re * xi);
        });
    }
    ScalarField {
        grid,
        values: inverse_real(&grid, acc),
    }
}

/// One exact Duhamel increment: `int_0^dt div(e^{s Delta} F) ds`, evaluated
/// in Fourier space with multiplier `i xi_j (1 - e^{-dt |xi|^2}) / |xi|^2`
/// per component (value `dt * i xi_j` at the zero mode, hence exactly
/// mass-free).
pub fn duhamel_div_step<T: Scalar>(field: &VectorField<T>, dt: T) -> ScalarField<T> {
    assert!(dt > T::zero(), "duhamel step needs dt > 0");
    let grid = field.grid;
    let (full, odd) = wavenumbers(&grid);
    let mut acc = vec![Complex::new(T::zero(), T::zero()); grid.len()];
    for ax in 0..grid.d {
        let spec = forward(&grid, &field.components[ax]);
        for_each_mode(&grid, |flat, k| {
            let mut xi2 = T::zero();
            for a in 0..grid.d {
                let xi = full[k[a]];
                xi2 += xi * xi;
            }
            let phi = if xi2 == T::zero() {
                dt
            } else {
                -(-dt * xi2).exp_m1() / xi2
            };
            let m = odd[k[ax]] * phi;
            let z = spec[flat];
            acc[flat] = acc[flat] + Complex::new(-z.im * m, z.re * m);
        });
    }
    ScalarField {
        grid,
        values: inverse_real(&grid, acc),
    }
}
