//! Generalised advantage estimation and the advantage post-processing shared
//! by the actor update and the graph-encoder update.

/// Backward recursion `A[n] = delta[n] + discount * lambda * A[n+1]` with
/// `delta[n] = r[n] + discount * V[n+1] - V[n]` and `V[N] = bootstrap`.
/// Returns `(advantages, advantages + values)`.
pub fn compute_gae(rewards: &[f64], values: &[f64], bootstrap: f64, discount: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(rewards.len(), values.len());
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut next_value = bootstrap;
    let mut acc = 0.0;
    for i in (0..n).rev() {
        let delta = rewards[i] + discount * next_value - values[i];
        acc = delta + discount * lambda * acc;
        adv[i] = acc;
        next_value = values[i];
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

/// Zero mean, unit (population) standard deviation over every agent and
/// slot together. A batch of one is only centred.
pub fn normalize_advantages(adv: &mut [Vec<f64>]) {
    let count: usize = adv.iter().map(Vec::len).sum();
    if count == 0 {
        return;
    }
    let mean = adv.iter().flatten().sum::<f64>() / count as f64;
    let var = adv.iter().flatten().map(|a| (a - mean).powi(2)).sum::<f64>() / count as f64;
    let scale = if count > 1 && var > 0.0 { 1.0 / var.sqrt() } else { 1.0 };
    for a in adv.iter_mut().flatten() {
        *a = (*a - mean) * scale;
    }
}

/// Per-agent time average.
pub fn mean_advantage(adv: &[Vec<f64>]) -> Vec<f64> {
    adv.iter().map(|a| if a.is_empty() { 0.0 } else { a.iter().sum::<f64>() / a.len() as f64 }).collect()
}
