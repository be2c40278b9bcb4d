//! Finite-difference oracle for gradient tests. Only evaluates the scalar
//! function; it never calls a backward pass.

/// Default perturbation for central differences.
pub const EPSILON: f64 = 1e-5;

/// Magnitudes below this are compared absolutely rather than relatively,
/// since central differences carry ~1e-11 of rounding noise.
pub const RELATIVE_FLOOR: f64 = 1e-6;

/// `(f(x + εe_i) − f(x − εe_i)) / 2ε` for every coordinate `i`.
pub fn central_difference<F>(x: &[f64], eps: f64, mut f: F) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + eps;
            let up = f(&probe);
            probe[i] = orig - eps;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * eps)
        })
        .collect()
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| relative_error(a, n))
        .fold(0.0, f64::max)
}
