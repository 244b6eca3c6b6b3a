//! Adaptive 1-D quadrature: globally adaptive Gauss-Kronrod (7-15) with an
//! error heap, plus a power substitution for integrable endpoint
//! singularities of the form `(x-a)^{gamma-1} * smooth`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::scalar::{c, Scalar};

/// 15-point Kronrod abscissae on [0, 1] side (symmetric), QUADPACK values.
const XGK: [f64; 8] = [
    0.991455371120813,
    0.949107912342759,
    0.864864423359769,
    0.741531185599394,
    0.586087235467691,
    0.405845151377397,
    0.207784955007898,
    0.0,
];

const WGK: [f64; 8] = [
    0.022935322010529,
    0.063092092629979,
    0.104790010322250,
    0.140653259715525,
    0.169004726639267,
    0.190350578064785,
    0.204432940075298,
    0.209482141084728,
];

/// 7-point Gauss weights, matching the odd Kronrod abscissae.
const WG: [f64; 4] = [
    0.129484966168870,
    0.279705391489277,
    0.381830050505119,
    0.417959183673469,
];

/// 16-point Gauss-Legendre rule on [-1, 1] (positive half; symmetric).
/// Used for tensor-product cell averages in the convolution near field.
pub const GL16_NODES: [f64; 8] = [
    0.0950125098376374,
    0.2816035507792589,
    0.4580167776572274,
    0.6178762444026438,
    0.7554044083550030,
    0.8656312023878318,
    0.9445750230732326,
    0.9894009349916499,
];

pub const GL16_WEIGHTS: [f64; 8] = [
    0.1894506104550685,
    0.1826034150449236,
    0.1691565193950025,
    0.1495959888165767,
    0.1246289712555339,
    0.0951585116824928,
    0.0622535239386479,
    0.0271524594117541,
];

/// Evaluate `f` at the 16 Gauss-Legendre points of `[a, b]`, accumulating the
/// weighted sum. No error estimate; callers use it for smooth cell integrals.
pub fn gl16<T: Scalar, F: FnMut(T) -> T>(mut f: F, a: T, b: T) -> T {
    let half = (b - a) * c::<T>(0.5);
    let mid = (a + b) * c::<T>(0.5);
    let mut acc = T::zero();
    for i in 0..8 {
        let x = c::<T>(GL16_NODES[i]) * half;
        let w = c::<T>(GL16_WEIGHTS[i]);
        acc += w * (f(mid + x) + f(mid - x));
    }
    acc * half
}

#[derive(Debug, Clone, Copy)]
pub struct QuadResult<T> {
    pub value: T,
    pub error: T,
    pub panels: usize,
}

#[derive(Debug, Clone, Copy)]
struct Panel<T> {
    a: T,
    b: T,
    value: T,
    error: T,
}

impl<T: Scalar> PartialEq for Panel<T> {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl<T: Scalar> Eq for Panel<T> {}
impl<T: Scalar> PartialOrd for Panel<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T: Scalar> Ord for Panel<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error
            .partial_cmp(&other.error)
            .unwrap_or(Ordering::Equal)
    }
}

/// One Gauss-Kronrod 7-15 evaluation on `[a, b]`; returns the Kronrod value
/// and the |Kronrod - Gauss| error estimate. `None` on non-finite values.
fn gk15<T: Scalar, F: Fn(T) -> T>(f: &F, a: T, b: T) -> Option<(T, T)> {
    let half = (b - a) * c::<T>(0.5);
    let mid = (a + b) * c::<T>(0.5);
    let mut kronrod = T::zero();
    let mut gauss = T::zero();
    for i in 0..8 {
        let dx = c::<T>(XGK[i]) * half;
        let (fl, fr) = if i == 7 {
            let v = f(mid);
            (v, T::zero())
        } else {
            (f(mid - dx), f(mid + dx))
        };
        if !(fl.is_finite() && fr.is_finite()) {
            return None;
        }
        let pair = if i == 7 { fl } else { fl + fr };
        kronrod += c::<T>(WGK[i]) * pair;
        if i % 2 == 1 {
            gauss += c::<T>(WG[i / 2]) * pair;
        } else if i == 7 {
            gauss += c::<T>(WG[3]) * pair;
        }
    }
    let value = kronrod * half;
    let err = ((kronrod - gauss) * half).abs();
    Some((value, err))
}

/// Globally adaptive integral of `f` over `[a, b]`.
///
/// Splits the panel with the largest error estimate until the accumulated
/// estimate satisfies `max(abs_tol, rel_tol * |value|)` or the panel budget
/// runs out.
pub fn integrate<T: Scalar, F: Fn(T) -> T>(
    f: F,
    a: T,
    b: T,
    rel_tol: T,
    abs_tol: T,
    max_panels: usize,
) -> Result<QuadResult<T>> {
    if a == b {
        return Ok(QuadResult {
            value: T::zero(),
            error: T::zero(),
            panels: 0,
        });
    }
    let fail = |x: T, e: T| Error::QuadratureFailure {
        worst_location: x.to_f64().unwrap_or(f64::NAN),
        error_estimate: e.to_f64().unwrap_or(f64::NAN),
    };

    let (v0, e0) = gk15(&f, a, b).ok_or_else(|| fail((a + b) * c(0.5), T::infinity()))?;
    let mut heap = BinaryHeap::new();
    heap.push(Panel {
        a,
        b,
        value: v0,
        error: e0,
    });
    let mut total_v = v0;
    let mut total_e = e0;
    let mut panels = 1usize;

    while total_e > abs_tol.max(rel_tol * total_v.abs()) {
        let worst = heap.pop().expect("non-empty heap");
        if panels >= max_panels {
            return Err(fail((worst.a + worst.b) * c(0.5), total_e));
        }
        let mid = (worst.a + worst.b) * c::<T>(0.5);
        if mid <= worst.a || mid >= worst.b {
            // Interval no longer splittable in this precision.
            return Err(fail(mid, total_e));
        }
        let (vl, el) =
            gk15(&f, worst.a, mid).ok_or_else(|| fail((worst.a + mid) * c(0.5), total_e))?;
        let (vr, er) =
            gk15(&f, mid, worst.b).ok_or_else(|| fail((mid + worst.b) * c(0.5), total_e))?;
        total_v = total_v - worst.value + vl + vr;
        total_e = total_e - worst.error + el + er;
        heap.push(Panel {
            a: worst.a,
            b: mid,
            value: vl,
            error: el,
        });
        heap.push(Panel {
            a: mid,
            b: worst.b,
            value: vr,
            error: er,
        });
        panels += 1;
    }

    Ok(QuadResult {
        value: total_v,
        error: total_e,
        panels,
    })
}

/// Integral of `f` over `[a, b]` where `f(x) ~ (x - a)^{gamma - 1} * smooth`
/// with `gamma > 0`. Substitutes `x = a + (b - a) v^m` so the transformed
/// integrand behaves like `v^{m*gamma - 1}`, which is polynomial-tame for
/// `m >= 4/gamma`.
pub fn integrate_power_left<T: Scalar, F: Fn(T) -> T>(
    f: F,
    a: T,
    b: T,
    gamma: T,
    rel_tol: T,
    abs_tol: T,
    max_panels: usize,
) -> Result<QuadResult<T>> {
    let g = gamma.to_f64().unwrap_or(1.0);
    assert!(g > 0.0, "endpoint exponent must be positive");
    let m = (4.0 / g).ceil().clamp(1.0, 64.0);
    let mt = c::<T>(m);
    let width = b - a;
    // Below this offset the singular factor would leave the representable
    // range; the omitted mass is bounded by (floor/width)^gamma.
    let floor = width * c::<T>(1e-300);
    let transformed = |v: T| {
        let vm1 = v.powf(mt - T::one());
        let dx = width * vm1 * v; // v^m = v^{m-1} * v
        if dx <= floor {
            return T::zero();
        }
        f(a + dx) * width * mt * vm1
    };
    integrate(transformed, T::zero(), T::one(), rel_tol, abs_tol, max_panels)
}
