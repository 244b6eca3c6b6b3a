//! Periodic-grid scalar and vector fields with spectral operators and norm
//! estimators. The domain is the torus `[-L, L)^d`; fields are immutable
//! values and every operation returns a new field.

mod convolution;
mod spectral;

pub use convolution::{KernelConvolution, NearField};
pub use spectral::{bessel_apply, div, duhamel_div_step, grad, heat_propagate};

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::scalar::{c, cu, Scalar};

/// Uniform periodic grid on `[-L, L)^d` with `n` points per dimension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec<T> {
    pub d: usize,
    pub n: usize,
    pub half_width: T,
}

impl<T: Scalar> GridSpec<T> {
    pub fn new(d: usize, n: usize, half_width: T) -> Result<Self> {
        if d != 2 && d != 3 {
            return Err(Error::InvalidParams(format!(
                "grid dimension must be 2 or 3, got {d}"
            )));
        }
        if n < 16 || n % 2 != 0 {
            return Err(Error::InvalidParams(format!(
                "grid needs at least 16 points per axis and an even count, got {n}"
            )));
        }
        if !(half_width > T::zero()) {
            return Err(Error::InvalidParams("grid half-width must be positive".into()));
        }
        Ok(GridSpec { d, n, half_width })
    }

    /// Grid spacing `h = 2L/n`.
    pub fn spacing(&self) -> T {
        c::<T>(2.0) * self.half_width / cu(self.n)
    }

    /// Total number of cells `n^d`.
    pub fn len(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Cell volume `h^d`.
    pub fn cell_volume(&self) -> T {
        self.spacing().powf(cu(self.d))
    }

    /// Coordinate of index `i` along one axis.
    pub fn coord(&self, i: usize) -> T {
        -self.half_width + cu::<T>(i) * self.spacing()
    }

    /// Flat index from per-axis indices (third ignored for d = 2).
    pub fn flat(&self, k: [usize; 3]) -> usize {
        if self.d == 2 {
            k[0] * self.n + k[1]
        } else {
            (k[0] * self.n + k[1]) * self.n + k[2]
        }
    }

    /// Visit every cell: flat index and coordinates (third = 0 for d = 2).
    pub fn for_each_cell(&self, mut f: impl FnMut(usize, [T; 3])) {
        let n = self.n;
        if self.d == 2 {
            let mut flat = 0;
            for i0 in 0..n {
                let x0 = self.coord(i0);
                for i1 in 0..n {
                    f(flat, [x0, self.coord(i1), T::zero()]);
                    flat += 1;
                }
            }
        } else {
            let mut flat = 0;
            for i0 in 0..n {
                let x0 = self.coord(i0);
                for i1 in 0..n {
                    let x1 = self.coord(i1);
                    for i2 in 0..n {
                        f(flat, [x0, x1, self.coord(i2)]);
                        flat += 1;
                    }
                }
            }
        }
    }

    /// Minimum-image displacement component on the torus.
    pub fn min_image(&self, dx: T) -> T {
        let width = c::<T>(2.0) * self.half_width;
        let mut v = dx;
        while v < -self.half_width {
            v += width;
        }
        while v >= self.half_width {
            v -= width;
        }
        v
    }
}

/// Real-valued field on a periodic grid, row-major storage.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField<T> {
    pub grid: GridSpec<T>,
    pub values: Vec<T>,
}

/// `d` real components on a shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField<T> {
    pub grid: GridSpec<T>,
    pub components: Vec<Vec<T>>,
}

impl<T: Scalar> ScalarField<T> {
    pub fn zeros(grid: GridSpec<T>) -> Self {
        ScalarField {
            grid,
            values: vec![T::zero(); grid.len()],
        }
    }

    pub fn from_fn(grid: GridSpec<T>, f: impl Fn(&[T]) -> T) -> Self {
        let mut values = vec![T::zero(); grid.len()];
        grid.for_each_cell(|flat, x| values[flat] = f(&x[..grid.d]));
        ScalarField { grid, values }
    }

    /// Isotropic Gaussian bump of the given variance, renormalized to unit
    /// mass on the torus.
    pub fn gaussian(grid: GridSpec<T>, center: &[T], variance: T) -> Self {
        let two = c::<T>(2.0);
        let mut field = Self::from_fn(grid, |x| {
            let mut q = T::zero();
            for (ax, &xi) in x.iter().enumerate() {
                let dx = grid.min_image(xi - center[ax]);
                q += dx * dx;
            }
            (-q / (two * variance)).exp()
        });
        let mass = field.mass();
        for v in field.values.iter_mut() {
            *v /= mass;
        }
        field
    }

    /// Riemann mass `h^d sum(values)`.
    pub fn mass(&self) -> T {
        self.values.iter().copied().sum::<T>() * self.grid.cell_volume()
    }

    /// Mass sitting within `margin_fraction * L` of the domain boundary
    /// (the truncation monitor: fields should keep this negligible).
    pub fn boundary_shell_mass(&self, margin_fraction: T) -> T {
        let cut = self.grid.half_width * (T::one() - margin_fraction);
        let mut total = T::zero();
        self.grid.for_each_cell(|flat, x| {
            if x[..self.grid.d].iter().any(|&v| v.abs() >= cut) {
                total += self.values[flat].abs();
            }
        });
        total * self.grid.cell_volume()
    }

    pub fn min_value(&self) -> T {
        self.values.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// Riemann `L^p` norm; `p = infinity` gives the sup norm.
    pub fn norm_lp(&self, p: T) -> T {
        assert!(p >= T::one(), "norm exponent must be >= 1");
        if p == T::infinity() {
            return self.max_abs();
        }
        let sum: T = self.values.iter().map(|v| v.abs().powf(p)).sum();
        (sum * self.grid.cell_volume()).powf(p.recip())
    }

    /// Intersection norm: `L^1` plus `L^r`.
    pub fn norm_intersection(&self, r: T) -> T {
        self.norm_lp(T::one()) + self.norm_lp(r)
    }

    /// `L^r` norm after the Bessel multiplier of order `beta`; monotone
    /// nondecreasing in `beta` for `beta >= 0`.
    pub fn bessel_norm(&self, beta: T, r: T) -> T {
        bessel_apply(self, beta).norm_lp(r)
    }

    /// Lower estimate of the Hoelder seminorm of order `zeta`: the maximum
    /// difference quotient over all grid pairs within `window` cells
    /// (minimum-image distances). Full pair enumeration would be O(n^{2d}).
    pub fn holder_seminorm_estimate(&self, zeta: T, window: usize) -> T {
        assert!(zeta > T::zero() && zeta <= T::one());
        let grid = self.grid;
        let n = grid.n as isize;
        let h = grid.spacing();
        let w = window as isize;
        let mut offsets: Vec<([isize; 3], T)> = Vec::new();
        let axes = grid.d;
        let range = |_: usize| -w..=w;
        let mut push = |o: [isize; 3]| {
            if o == [0, 0, 0] {
                return;
            }
            // keep one representative of each +/- pair
            let first_nonzero = o.iter().find(|&&v| v != 0).copied().unwrap_or(0);
            if first_nonzero < 0 {
                return;
            }
            let mut d2 = T::zero();
            for &oi in o.iter() {
                let dx = h * c::<T>(oi as f64);
                d2 += dx * dx;
            }
            offsets.push((o, d2.sqrt().powf(zeta)));
        };
        if axes == 2 {
            for o0 in range(0) {
                for o1 in range(1) {
                    push([o0, o1, 0]);
                }
            }
        } else {
            for o0 in range(0) {
                for o1 in range(1) {
                    for o2 in range(2) {
                        push([o0, o1, o2]);
                    }
                }
            }
        }

        use rayon::prelude::*;
        offsets
            .par_iter()
            .map(|(o, denom)| {
                let mut best = T::zero();
                let wrap = |i: isize| -> usize { i.rem_euclid(n) as usize };
                if axes == 2 {
                    for i0 in 0..n {
                        let j0 = wrap(i0 + o[0]);
                        for i1 in 0..n {
                            let j1 = wrap(i1 + o[1]);
                            let a = self.values[(i0 as usize) * grid.n + i1 as usize];
                            let b = self.values[j0 * grid.n + j1];
                            best = best.max((a - b).abs());
                        }
                    }
                } else {
                    for i0 in 0..n {
                        let j0 = wrap(i0 + o[0]);
                        for i1 in 0..n {
                            let j1 = wrap(i1 + o[1]);
                            for i2 in 0..n {
                                let j2 = wrap(i2 + o[2]);
                                let a = self.values
                                    [((i0 as usize) * grid.n + i1 as usize) * grid.n + i2 as usize];
                                let b = self.values[(j0 * grid.n + j1) * grid.n + j2];
                                best = best.max((a - b).abs());
                            }
                        }
                    }
                }
                best / *denom
            })
            .reduce(T::zero, T::max)
    }

    /// Multilinear interpolation at a point (torus wrap).
    pub fn interp(&self, x: &[T]) -> T {
        interp_values(&self.grid, &self.values, x)
    }

    /// Heat semigroup by time `t` (spectral; exact on the grid).
    pub fn heat_propagate(&self, t: T) -> Self {
        heat_propagate(self, t)
    }

    /// Bessel multiplier of order `beta`.
    pub fn bessel_apply(&self, beta: T) -> Self {
        bessel_apply(self, beta)
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok(ScalarField {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(other.values.iter())
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn scaled(&self, s: T) -> Self {
        ScalarField {
            grid: self.grid,
            values: self.values.iter().map(|&v| v * s).collect(),
        }
    }

    /// Flat binary serialization: `u32 d, u32 n, f64 L`, then row-major
    /// values as little-endian `f64`.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&(self.grid.d as u32).to_le_bytes())?;
        w.write_all(&(self.grid.n as u32).to_le_bytes())?;
        w.write_all(&self.grid.half_width.to_f64().unwrap().to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_f64().unwrap().to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b4)?;
        let d = u32::from_le_bytes(b4) as usize;
        r.read_exact(&mut b4)?;
        let n = u32::from_le_bytes(b4) as usize;
        r.read_exact(&mut b8)?;
        let half_width = c::<T>(f64::from_le_bytes(b8));
        let grid = GridSpec::new(d, n, half_width)?;
        let mut values = Vec::with_capacity(grid.len());
        for _ in 0..grid.len() {
            r.read_exact(&mut b8)?;
            values.push(c::<T>(f64::from_le_bytes(b8)));
        }
        Ok(ScalarField { grid, values })
    }

    /// CSV export for 2-D fields: columns `x,y,value`.
    pub fn write_csv_2d<W: Write>(&self, mut w: W) -> Result<()> {
        if self.grid.d != 2 {
            return Err(Error::InvalidParams("CSV export is for d = 2 fields".into()));
        }
        writeln!(w, "x,y,value")?;
        let mut res: Result<()> = Ok(());
        self.grid.for_each_cell(|flat, x| {
            if res.is_ok() {
                if let Err(e) = writeln!(w, "{},{},{}", x[0], x[1], self.values[flat]) {
                    res = Err(e.into());
                }
            }
        });
        res
    }
}

impl<T: Scalar> VectorField<T> {
    pub fn zeros(grid: GridSpec<T>) -> Self {
        VectorField {
            grid,
            components: (0..grid.d).map(|_| vec![T::zero(); grid.len()]).collect(),
        }
    }

    /// Pointwise product of a scalar field with each component.
    pub fn scaled_by(&self, f: &ScalarField<T>) -> Result<Self> {
        if self.grid != f.grid {
            return Err(Error::GridMismatch);
        }
        Ok(VectorField {
            grid: self.grid,
            components: self
                .components
                .iter()
                .map(|comp| {
                    comp.iter()
                        .zip(f.values.iter())
                        .map(|(&a, &b)| a * b)
                        .collect()
                })
                .collect(),
        })
    }

    /// Sup over the grid of the Euclidean norm of the vector values.
    pub fn max_norm(&self) -> T {
        let mut best = T::zero();
        for flat in 0..self.grid.len() {
            let mut q = T::zero();
            for comp in &self.components {
                q += comp[flat] * comp[flat];
            }
            best = best.max(q);
        }
        best.sqrt()
    }

    /// Multilinear interpolation of all components at a point.
    pub fn interp_into(&self, x: &[T], out: &mut [T]) {
        for (ax, comp) in self.components.iter().enumerate() {
            out[ax] = interp_values(&self.grid, comp, x);
        }
    }
}

fn interp_values<T: Scalar>(grid: &GridSpec<T>, values: &[T], x: &[T]) -> T {
    let n = grid.n;
    let h = grid.spacing();
    let mut base = [0usize; 3];
    let mut frac = [T::zero(); 3];
    for ax in 0..grid.d {
        let u = (grid.min_image(x[ax]) + grid.half_width) / h;
        let fl = u.floor();
        let mut i = fl.to_isize().unwrap_or(0);
        frac[ax] = u - fl;
        i = i.rem_euclid(n as isize);
        base[ax] = i as usize;
    }
    let corner = |idx: [usize; 3]| values[grid.flat(idx)];
    let lerp = |a: T, b: T, t: T| a + (b - a) * t;
    if grid.d == 2 {
        let i0 = base[0];
        let i1 = base[1];
        let j0 = (i0 + 1) % n;
        let j1 = (i1 + 1) % n;
        let v00 = corner([i0, i1, 0]);
        let v01 = corner([i0, j1, 0]);
        let v10 = corner([j0, i1, 0]);
        let v11 = corner([j0, j1, 0]);
        lerp(lerp(v00, v01, frac[1]), lerp(v10, v11, frac[1]), frac[0])
    } else {
        let [i0, i1, i2] = base;
        let j0 = (i0 + 1) % n;
        let j1 = (i1 + 1) % n;
        let j2 = (i2 + 1) % n;
        let v = |a, b, cc| corner([a, b, cc]);
        let c00 = lerp(v(i0, i1, i2), v(i0, i1, j2), frac[2]);
        let c01 = lerp(v(i0, j1, i2), v(i0, j1, j2), frac[2]);
        let c10 = lerp(v(j0, i1, i2), v(j0, i1, j2), frac[2]);
        let c11 = lerp(v(j0, j1, i2), v(j0, j1, j2), frac[2]);
        lerp(lerp(c00, c01, frac[1]), lerp(c10, c11, frac[1]), frac[0])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid64() -> GridSpec<f64> {
        GridSpec::new(2, 64, 2.0).unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(GridSpec::<f64>::new(4, 64, 2.0).is_err());
        assert!(GridSpec::<f64>::new(2, 15, 2.0).is_err());
        assert!(GridSpec::<f64>::new(2, 8, 2.0).is_err());
        assert!(GridSpec::<f64>::new(2, 64, -1.0).is_err());
    }

    #[test]
    fn heat_preserves_constants_and_mass() {
        let g = grid64();
        let f = ScalarField::from_fn(g, |_| 3.25);
        let out = f.heat_propagate(0.7);
        for &v in &out.values {
            assert_relative_eq!(v, 3.25, max_relative = 1e-12);
        }
        let f = ScalarField::gaussian(g, &[0.1, -0.2], 0.05);
        let out = f.heat_propagate(0.03);
        assert_relative_eq!(out.mass(), f.mass(), max_relative = 1e-12);
    }

    #[test]
    fn heat_spreads_gaussian_variance() {
        // variance s^2 becomes s^2 + 2t for a well-contained bump
        let g = GridSpec::<f64>::new(2, 128, 2.0).unwrap();
        let s2 = 0.04;
        let t = 0.02;
        let f = ScalarField::gaussian(g, &[0.0, 0.0], s2);
        let out = f.heat_propagate(t);
        let expect = ScalarField::gaussian(g, &[0.0, 0.0], s2 + 2.0 * t);
        let diff: f64 = out
            .values
            .iter()
            .zip(expect.values.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(diff < 1e-8, "max pointwise gap {diff}");
    }

    #[test]
    fn heat_semigroup_law() {
        let g = grid64();
        let k = std::f64::consts::PI / g.half_width;
        let f = ScalarField::from_fn(g, |x| (k * x[0]).sin() + 0.3 * (2.0 * k * x[1]).cos());
        let one = f.heat_propagate(0.02).heat_propagate(0.05);
        let two = f.heat_propagate(0.07);
        for (a, b) in one.values.iter().zip(two.values.iter()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn grad_and_div_eigenfunction() {
        let g = grid64();
        let k = std::f64::consts::PI / g.half_width; // lowest mode
        let f = ScalarField::from_fn(g, |x| (k * x[0]).sin());
        let gr = grad(&f);
        // d/dx0 sin(k x0) = k cos(k x0)
        let mut worst = 0.0f64;
        g.for_each_cell(|flat, x| {
            worst = worst.max((gr.components[0][flat] - k * (k * x[0]).cos()).abs());
        });
        assert!(worst < 1e-10);
        assert!(gr.components[1].iter().all(|v| v.abs() < 1e-10));
        let lap = div(&gr);
        let mut worst = 0.0f64;
        g.for_each_cell(|flat, _| {
            worst = worst.max((lap.values[flat] + k * k * f.values[flat]).abs());
        });
        assert!(worst < 1e-9);
    }

    #[test]
    fn grad_of_constant_vanishes_and_div_is_mass_free() {
        let g = grid64();
        let f = ScalarField::from_fn(g, |_| 1.7);
        let gr = grad(&f);
        assert!(gr.components.iter().all(|comp| comp.iter().all(|v| v.abs() < 1e-12)));

        let k = std::f64::consts::PI / g.half_width;
        let mut field = VectorField::zeros(g);
        g.for_each_cell(|flat, x| {
            field.components[0][flat] = (2.0 * k * x[0]).cos() * (k * x[1]).sin();
            field.components[1][flat] = (k * (x[0] + x[1])).sin();
        });
        assert!(div(&field).mass().abs() < 1e-12);
    }

    #[test]
    fn duhamel_zero_input_mass_and_small_dt_limit() {
        let g = grid64();
        let zero = VectorField::zeros(g);
        let out = duhamel_div_step(&zero, 1e-3);
        assert!(out.values.iter().all(|v| v.abs() < 1e-14));

        let k = std::f64::consts::PI / g.half_width;
        let mut field = VectorField::zeros(g);
        g.for_each_cell(|flat, x| {
            field.components[0][flat] = (k * x[0]).sin() * (k * x[1]).cos();
            field.components[1][flat] = (2.0 * k * x[0]).cos();
        });
        let dt = 1e-3;
        let out = duhamel_div_step(&field, dt);
        assert!(out.mass().abs() < 1e-12);

        let dt = 1e-6;
        let out = duhamel_div_step(&field, dt);
        let divf = div(&field);
        let scale = divf.norm_lp(f64::INFINITY);
        let mut worst = 0.0f64;
        for (a, b) in out.values.iter().zip(divf.values.iter()) {
            worst = worst.max((a / dt - b).abs());
        }
        assert!(worst / scale < 1e-4, "relative defect {}", worst / scale);
    }

    #[test]
    fn bessel_identity_inverse_and_monotone() {
        let g = grid64();
        let k = std::f64::consts::PI / g.half_width;
        let f = ScalarField::from_fn(g, |x| (k * x[0]).sin() + (3.0 * k * x[1]).cos());
        let same = f.bessel_apply(0.0);
        assert_eq!(same.values, f.values);

        let fwd = f.bessel_apply(0.8);
        let back = fwd.bessel_apply(-0.8);
        for (a, b) in back.values.iter().zip(f.values.iter()) {
            assert!((a - b).abs() < 1e-10);
        }

        // constant stays constant (multiplier 1 at xi = 0)
        let const_field = ScalarField::from_fn(g, |_| 2.0);
        let out = const_field.bessel_apply(1.3);
        for &v in &out.values {
            assert_relative_eq!(v, 2.0, max_relative = 1e-12);
        }

        let lo = f.bessel_norm(0.5, 2.0);
        let hi = f.bessel_norm(0.9, 2.0);
        assert!(lo <= hi * (1.0 + 1e-12));
        assert_relative_eq!(f.bessel_norm(0.0, 2.0), f.norm_lp(2.0), max_relative = 1e-12);
    }

    #[test]
    fn norms_on_indicator() {
        let g = grid64();
        // value 1 on a quarter of the cells
        let f = ScalarField::from_fn(g, |x| if x[0] < 0.0 && x[1] < 0.0 { 1.0 } else { 0.0 });
        let area = (2.0 * g.half_width).powi(2);
        assert_relative_eq!(f.norm_lp(1.0), 0.25 * area, max_relative = 1e-12);
        assert_eq!(f.norm_lp(f64::INFINITY), 1.0);
        assert!(f.norm_intersection(3.0) >= f.norm_lp(1.0));
    }

    #[test]
    fn holder_estimate_on_tent() {
        let g = GridSpec::<f64>::new(2, 128, 2.0).unwrap();
        // tent: slope +-1 in x0, continuous across the wrap
        let f = ScalarField::from_fn(g, |x| g.half_width - x[0].abs());
        let est = f.holder_seminorm_estimate(1.0, 6);
        assert_relative_eq!(est, 1.0, max_relative = 1e-10);
        let flat = ScalarField::from_fn(g, |_| 0.4);
        assert_eq!(flat.holder_seminorm_estimate(0.5, 4), 0.0);
        // for pair distances <= 1 the difference quotient grows with zeta
        let est_small = f.holder_seminorm_estimate(0.5, 6);
        assert!(est_small <= est + 1e-12);
    }

    #[test]
    fn interp_reproduces_nodes_and_is_linear() {
        let g = grid64();
        let f = ScalarField::from_fn(g, |x| 0.3 * x[0] + 0.9 * x[1] + 0.2);
        let x = [g.coord(10), g.coord(20)];
        assert_relative_eq!(f.interp(&x), f.values[g.flat([10, 20, 0])], max_relative = 1e-13);
        // midpoints of a bilinear function are exact away from the wrap
        let x = [g.coord(10) + 0.5 * g.spacing(), g.coord(20) + 0.25 * g.spacing()];
        assert_relative_eq!(f.interp(&x), 0.3 * x[0] + 0.9 * x[1] + 0.2, max_relative = 1e-12);
    }

    #[test]
    fn binary_roundtrip() {
        let g = grid64();
        let f = ScalarField::gaussian(g, &[0.3, -0.5], 0.07);
        let mut buf = Vec::new();
        f.write_binary(&mut buf).unwrap();
        let back = ScalarField::<f64>::read_binary(buf.as_slice()).unwrap();
        assert_eq!(back.grid, g);
        assert_eq!(back.values, f.values);
    }

    #[test]
    fn csv_export_smoke() {
        let g = GridSpec::new(2, 16, 1.0).unwrap();
        let f = ScalarField::from_fn(g, |x| x[0] + x[1]);
        let mut buf = Vec::new();
        f.write_csv_2d(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("x,y,value\n"));
        assert_eq!(text.lines().count(), 1 + 16 * 16);
    }

    #[test]
    fn gaussian_3d_mass_and_interp() {
        let g = GridSpec::new(3, 32, 2.0).unwrap();
        let f = ScalarField::gaussian(g, &[0.0, 0.0, 0.0], 0.25);
        assert_relative_eq!(f.mass(), 1.0, max_relative = 1e-12);
        let v = f.interp(&[0.01, -0.02, 0.03]);
        assert!(v > 0.0);
        let out = f.heat_propagate(0.01);
        assert_relative_eq!(out.mass(), 1.0, max_relative = 1e-12);
    }
}
