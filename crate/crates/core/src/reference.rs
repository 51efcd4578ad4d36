//! Closed-form reference curves.

use crate::Vec3;

/// Autocorrelation of a central spin precessing in a static Gaussian
/// Overhauser field:
/// `(1/12){1 + 2[1 − J_Q² t²/4] exp(−J_Q² t²/8)}`.
pub fn s_frozen(t: f64, j_q: f64) -> f64 {
    let x = j_q * j_q * t * t;
    (1.0 + 2.0 * (1.0 - x / 4.0) * (-x / 8.0).exp()) / 12.0
}

/// Gaussian envelope `¼ exp(−J_Q² t²/8)` of the finite-field oscillations.
pub fn envelope(t: f64, j_q: f64) -> f64 {
    0.25 * (-(j_q * j_q * t * t) / 8.0).exp()
}

/// Shifted Larmor frequency `√(h² + J_Q²/2)`.
pub fn larmor_frequency(h: f64, j_q: f64) -> f64 {
    (h * h + 0.5 * j_q * j_q).sqrt()
}

pub fn dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn cross(a: &Vec3, b: &Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Precession of `s0` about the static field `b`, solving `dS/dt = b × S`:
/// `n(n·S) + [S − (n·S)n] cos(Bt) − (S×n) sin(Bt)`.
pub fn merkulov_rotation(s0: &Vec3, b: &Vec3, t: f64) -> Vec3 {
    let bb = dot(b, b).sqrt();
    if bb == 0.0 {
        return *s0;
    }
    let n = [b[0] / bb, b[1] / bb, b[2] / bb];
    let ns = dot(&n, s0);
    let sxn = cross(s0, &n);
    let (sin, cos) = (bb * t).sin_cos();
    std::array::from_fn(|i| n[i] * ns + (s0[i] - ns * n[i]) * cos - sxn[i] * sin)
}
