//! Small special-function helpers: half-integer gamma values and sphere
//! surface measures. Dimensions are integers throughout, so `Γ(k/2)` is all
//! that is ever needed and it has an exact closed form.

use crate::scalar::{c, Scalar};

/// `Γ(k/2)` for positive integer `k`, computed exactly from factorials:
/// `Γ(n) = (n-1)!` and `Γ(n + 1/2) = (2n)! √π / (4^n n!)`.
pub fn gamma_half(k: u32) -> f64 {
    assert!(k > 0, "gamma_half needs a positive half-integer index");
    if k % 2 == 0 {
        // Γ(m) with m = k/2
        let m = k / 2;
        let mut acc = 1.0;
        for i in 1..m {
            acc *= i as f64;
        }
        acc
    } else {
        // Γ(m + 1/2) with m = (k-1)/2: √π · (2m-1)!! / 2^m
        let m = (k - 1) / 2;
        let mut acc = std::f64::consts::PI.sqrt();
        for i in 0..m {
            acc *= (2 * i + 1) as f64 / 2.0;
        }
        acc
    }
}

/// Surface measure of the unit sphere `S^{d-1}`: `2 π^{d/2} / Γ(d/2)`.
pub fn sphere_surface<T: Scalar>(d: usize) -> T {
    let d = d as u32;
    let val = 2.0 * std::f64::consts::PI.powf(d as f64 / 2.0) / gamma_half(d);
    c(val)
}

/// Heat-gradient constant `Γ((d+1)/2) / Γ(d/2)`, the `L¹` norm scale of the
/// gradient of the heat kernel at unit time.
pub fn heat_gradient_constant<T: Scalar>(d: usize) -> T {
    let d = d as u32;
    c(gamma_half(d + 1) / gamma_half(d))
}
