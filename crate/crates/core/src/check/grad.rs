//! Central finite differences over any [`Parameters`] container.

use crate::nn::Parameters;

/// `d f / d theta_i` by central differences with step `h`, in the
/// container's flat order.
pub fn finite_difference<P: Parameters + Clone>(params: &P, f: impl Fn(&P) -> f64, h: f64) -> Vec<f64> {
    let base = params.to_flat();
    let mut probe = params.clone();
    let mut flat = base.clone();
    let mut out = Vec::with_capacity(base.len());
    for i in 0..base.len() {
        flat[i] = base[i] + h;
        probe.set_flat(&flat);
        let up = f(&probe);
        flat[i] = base[i] - h;
        probe.set_flat(&flat);
        let down = f(&probe);
        flat[i] = base[i];
        out.push((up - down) / (2.0 * h));
    }
    out
}

/// Below this magnitude both gradients are treated as zero; central
/// differences at step 1e-5 cannot resolve smaller values on O(1) losses.
pub const GRADIENT_FLOOR: f64 = 1e-7;

/// Largest `|a - b| / max(|a|, |b|, GRADIENT_FLOOR)` over all entries.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()).max(GRADIENT_FLOOR))
        .fold(0.0, f64::max)
}
