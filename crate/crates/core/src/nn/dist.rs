//! Log-densities, entropies and their derivatives for the two action heads.

use std::f64::consts::{E, PI};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln()
}

pub fn categorical_logprob(index: usize, logits: &[f64]) -> f64 {
    logits[index] - log_sum_exp(logits)
}

pub fn categorical_entropy(logits: &[f64]) -> f64 {
    let lse = log_sum_exp(logits);
    logits.iter().map(|&l| -(l - lse).exp() * (l - lse)).sum()
}

/// `d log p(index) / d logits`.
pub fn categorical_logprob_grad(index: usize, logits: &[f64]) -> Vec<f64> {
    let mut g: Vec<f64> = softmax(logits).into_iter().map(|p| -p).collect();
    g[index] += 1.0;
    g
}

/// `d H / d logits`, which is `-p_j (log p_j + H)`.
pub fn categorical_entropy_grad(logits: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(logits);
    let h = categorical_entropy(logits);
    logits.iter().map(|&l| {
        let lp = l - lse;
        -lp.exp() * (lp + h)
    }).collect()
}

pub fn gaussian_logprob(x: f64, mean: f64, log_std: f64) -> f64 {
    let z = (x - mean) * (-log_std).exp();
    -0.5 * z * z - log_std - HALF_LN_2PI
}

/// `(d/d mean, d/d log_std)` of [`gaussian_logprob`].
pub fn gaussian_logprob_grad(x: f64, mean: f64, log_std: f64) -> (f64, f64) {
    let inv_var = (-2.0 * log_std).exp();
    let d = x - mean;
    (d * inv_var, d * d * inv_var - 1.0)
}

/// Differential entropy `log_std + 0.5 log(2 pi e)`; its derivative with
/// respect to `log_std` is 1.
pub fn gaussian_entropy(log_std: f64) -> f64 {
    log_std + 0.5 * (2.0 * PI * E).ln()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn peak_density_and_uniform_entropy() {
        let ls = -0.3;
        assert!((gaussian_logprob(1.2, 1.2, ls) - (-ls - 0.5 * (2.0 * PI).ln())).abs() < 1e-15);
        assert!((categorical_entropy(&[0.7, 0.7]) - 2f64.ln()).abs() < 1e-15);
        let p = softmax(&[0.0, 0.0]);
        assert_eq!(p, vec![0.5, 0.5]);
    }

    #[test]
    fn gaussian_entropy_matches_quadrature() {
        // Composite Simpson on -∫ p ln p over ±12 std.
        for &ls in &[-2.0, -0.5, 0.0, 0.5] {
            let s = f64::exp(ls);
            let (a, b) = (-12.0 * s, 12.0 * s);
            let n = 20_000;
            let h = (b - a) / n as f64;
            let f = |x: f64| {
                let lp = gaussian_logprob(x, 0.0, ls);
                -lp.exp() * lp
            };
            let mut acc = f(a) + f(b);
            for i in 1..n {
                acc += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
            }
            let numeric = acc * h / 3.0;
            assert!((numeric - gaussian_entropy(ls)).abs() < 1e-6, "ls={ls}: {numeric}");
        }
    }

    #[test]
    fn probabilities_sum_to_one() {
        for logits in [[3.0, -200.0], [1e3, 1e3 + 1.0], [-0.4, 0.9]] {
            let s: f64 = softmax(&logits).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn derivative_formulas_match_differences() {
        let h = 1e-6;
        let (x, m, ls) = (0.4, 0.1, -0.7);
        let (dm, dls) = gaussian_logprob_grad(x, m, ls);
        let num_m = (gaussian_logprob(x, m + h, ls) - gaussian_logprob(x, m - h, ls)) / (2.0 * h);
        let num_ls = (gaussian_logprob(x, m, ls + h) - gaussian_logprob(x, m, ls - h)) / (2.0 * h);
        assert!((dm - num_m).abs() < 1e-6 && (dls - num_ls).abs() < 1e-6);

        let logits = [0.3, -1.4];
        let g = categorical_entropy_grad(&logits);
        let gl = categorical_logprob_grad(1, &logits);
        for j in 0..2 {
            let mut up = logits;
            let mut dn = logits;
            up[j] += h;
            dn[j] -= h;
            let ne = (categorical_entropy(&up) - categorical_entropy(&dn)) / (2.0 * h);
            let nl = (categorical_logprob(1, &up) - categorical_logprob(1, &dn)) / (2.0 * h);
            assert!((g[j] - ne).abs() < 1e-8);
            assert!((gl[j] - nl).abs() < 1e-8);
        }
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
    }
}
