//! Central finite-difference oracle for checking analytic gradients.
//!
//! The oracle only evaluates the scalar loss, so it is independent of every
//! backward pass it is used to verify.

use super::Params;

/// Numerical gradient of `loss` with respect to every parameter of `model`,
/// in `params()` order.
pub fn numerical_gradient<P, F>(model: &P, step: f64, loss: F) -> Vec<f64>
where
    P: Params<f64> + Clone,
    F: Fn(&P) -> f64,
{
    let mut probe = model.clone();
    let sizes: Vec<usize> = model.params().iter().map(|t| t.data.len()).collect();
    let mut out = Vec::with_capacity(sizes.iter().sum());
    for (ti, &n) in sizes.iter().enumerate() {
        for j in 0..n {
            let orig = probe.params_mut()[ti][j];
            probe.params_mut()[ti][j] = orig + step;
            let up = loss(&probe);
            probe.params_mut()[ti][j] = orig - step;
            let down = loss(&probe);
            probe.params_mut()[ti][j] = orig;
            out.push((up - down) / (2.0 * step));
        }
    }
    out
}

/// Flattens a gradient structure in `params()` order.
pub fn flatten<P: Params<f64>>(grads: &P) -> Vec<f64> {
    grads.params().iter().flat_map(|t| t.data.iter().copied()).collect()
}

/// Largest entrywise relative error `|a − n| / max(|a|, |n|, floor)`.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}
