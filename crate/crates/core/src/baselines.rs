//! Non-learning comparison policies.
//!
//! [`WmmsePolicy`] and [`ItlinqPolicy`] are physical-layer schemes. They
//! recompute powers every slot from that slot's instantaneous gains and never
//! drop a batch. [`RandomPolicy`] and [`ThresholdPolicy`] act per link.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{Episode, LinkAction, Policy};
use crate::error::ConfigError;
use crate::queue::{BatchDecision, QueueState};
use crate::topology::{build_channel, db_to_linear, place_vehicles, LinkMatrix, NetworkConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WmmseConfig {
    pub max_iterations: usize,
    /// Stop once the weighted sum rate (bit/s/Hz) moves by less than this.
    pub tolerance: f64,
    /// Per-link rate weights; empty means all ones.
    pub weights: Vec<f64>,
}

impl Default for WmmseConfig {
    fn default() -> Self {
        Self { max_iterations: 100, tolerance: 1e-4, weights: Vec::new() }
    }
}

impl WmmseConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.tolerance > 0.0) {
            return Err(ConfigError::Schema(format!("wmmse tolerance must be positive, got {}", self.tolerance)));
        }
        if self.weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(ConfigError::Schema("wmmse weights must be finite and non-negative".into()));
        }
        Ok(())
    }

    fn weight(&self, m: usize) -> f64 {
        self.weights.get(m).copied().unwrap_or(1.0)
    }
}

/// `sum_m alpha_m log2(1 + SINR_m)` with `gains.get(i, m)` from tx `i` to rx `m`.
pub fn weighted_sum_rate(gains: &LinkMatrix<f64>, powers: &[f64], noise: f64, cfg: &WmmseConfig) -> f64 {
    let n = gains.size();
    (0..n)
        .map(|m| {
            let interference: f64 = (0..n).filter(|&i| i != m).map(|i| gains.get(i, m) * powers[i]).sum();
            cfg.weight(m) * (1.0 + gains.get(m, m) * powers[m] / (noise + interference)).log2()
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct WmmseResult {
    pub powers: Vec<f64>,
    /// Weighted sum rate at the start and after every iteration.
    pub history: Vec<f64>,
}

/// Scalar WMMSE fixed-point iteration from the square-root powers `v`.
pub fn wmmse_iterate(gains: &LinkMatrix<f64>, noise: f64, p_max: f64, mut v: Vec<f64>, cfg: &WmmseConfig) -> WmmseResult {
    let n = gains.size();
    for m in 0..n {
        assert!(gains.get(m, m) > 0.0, "direct gain of link {m} must be positive");
    }
    let v_max = p_max.sqrt();
    let h = |i: usize, m: usize| gains.get(i, m).sqrt();
    let powers = |v: &[f64]| v.iter().map(|x| x * x).collect::<Vec<f64>>();
    let mut history = vec![weighted_sum_rate(gains, &powers(&v), noise, cfg)];
    let mut u = vec![0.0; n];
    let mut w = vec![0.0; n];
    for _ in 0..cfg.max_iterations {
        for m in 0..n {
            let rx: f64 = noise + (0..n).map(|i| gains.get(i, m) * v[i] * v[i]).sum::<f64>();
            u[m] = h(m, m) * v[m] / rx;
            // 1 - u h v = 1 - S/(S + I + noise) > 0 whenever noise > 0.
            w[m] = 1.0 / (1.0 - u[m] * h(m, m) * v[m]);
        }
        for m in 0..n {
            let num = cfg.weight(m) * w[m] * u[m] * h(m, m);
            let den: f64 = (0..n).map(|i| cfg.weight(i) * w[i] * u[i] * u[i] * gains.get(m, i)).sum();
            v[m] = if den > 0.0 { (num / den).clamp(0.0, v_max) } else { 0.0 };
        }
        let rate = weighted_sum_rate(gains, &powers(&v), noise, cfg);
        let prev = *history.last().expect("history starts non-empty");
        history.push(rate);
        if (rate - prev).abs() < cfg.tolerance {
            break;
        }
    }
    WmmseResult { powers: powers(&v).into_iter().map(|p| p.min(p_max)).collect(), history }
}

/// Runs [`wmmse_iterate`] from all links at full power and from each link
/// alone at full power, and keeps the best end point. A single start from
/// full power stalls at the symmetric stationary point under strong mutual
/// interference.
pub fn wmmse_run(gains: &LinkMatrix<f64>, noise: f64, p_max: f64, cfg: &WmmseConfig) -> WmmseResult {
    let n = gains.size();
    let v_max = p_max.sqrt();
    let mut best = wmmse_iterate(gains, noise, p_max, vec![v_max; n], cfg);
    if n > 1 {
        for m in 0..n {
            let mut v = vec![0.0; n];
            v[m] = v_max;
            let run = wmmse_iterate(gains, noise, p_max, v, cfg);
            if run.history.last() > best.history.last() {
                best = run;
            }
        }
    }
    best
}

pub fn wmmse_power(gains: &LinkMatrix<f64>, noise: f64, p_max: f64, cfg: &WmmseConfig) -> Vec<f64> {
    wmmse_run(gains, noise, p_max, cfg).powers
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ItlinqConfig {
    pub eta: f64,
    pub margin_db: f64,
}

impl Default for ItlinqConfig {
    fn default() -> Self {
        Self { eta: 0.7, margin_db: 25.0 }
    }
}

impl ItlinqConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(ConfigError::Schema(format!("itlinq eta must lie in (0, 1], got {}", self.eta)));
        }
        if !self.margin_db.is_finite() {
            return Err(ConfigError::Schema("itlinq margin must be finite".into()));
        }
        Ok(())
    }

    /// Largest INR tolerated next to a link of the given SNR (linear).
    pub fn inr_limit(&self, snr: f64) -> f64 {
        db_to_linear(self.margin_db) * snr.powf(self.eta)
    }
}

/// Greedy admission in descending direct-SNR order; admitted links transmit at
/// `p_max`, the rest stay silent. Returns the admitted links in admission order.
pub fn itlinq_schedule(gains: &LinkMatrix<f64>, noise: f64, p_max: f64, cfg: &ItlinqConfig) -> (Vec<usize>, Vec<f64>) {
    let n = gains.size();
    for m in 0..n {
        assert!(gains.get(m, m) > 0.0, "direct gain of link {m} must be positive");
    }
    let snr = |m: usize| gains.get(m, m) * p_max / noise;
    let inr = |i: usize, m: usize| gains.get(i, m) * p_max / noise;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| snr(b).total_cmp(&snr(a)).then(a.cmp(&b)));
    let mut active: Vec<usize> = Vec::new();
    for m in order {
        let fits = active.iter().all(|&j| inr(j, m) <= cfg.inr_limit(snr(m)) && inr(m, j) <= cfg.inr_limit(snr(j)));
        if fits {
            active.push(m);
        }
    }
    let mut powers = vec![0.0; n];
    for &m in &active {
        powers[m] = p_max;
    }
    (active, powers)
}

fn keep_all(powers: Vec<f64>) -> Vec<LinkAction> {
    powers.into_iter().map(|p| LinkAction { decision: BatchDecision::Keep, power_mw: p }).collect()
}

#[derive(Debug, Clone, Default)]
pub struct WmmsePolicy {
    pub config: WmmseConfig,
}

impl Policy for WmmsePolicy {
    fn act(&mut self, ep: &Episode) -> Vec<LinkAction> {
        let net = &ep.scenario().network;
        keep_all(wmmse_power(&ep.channel.gain_matrix(), net.noise_power_mw(), net.max_power_mw(), &self.config))
    }
}

#[derive(Debug, Clone, Default)]
pub struct ItlinqPolicy {
    pub config: ItlinqConfig,
}

impl Policy for ItlinqPolicy {
    fn act(&mut self, ep: &Episode) -> Vec<LinkAction> {
        let net = &ep.scenario().network;
        keep_all(itlinq_schedule(&ep.channel.gain_matrix(), net.noise_power_mw(), net.max_power_mw(), &self.config).1)
    }
}

/// Fair coin for the drop decision, uniform power on `[0, p_max]`.
pub fn random_action<R: Rng + ?Sized>(p_max: f64, rng: &mut R) -> LinkAction {
    let decision = if rng.random_bool(0.5) { BatchDecision::Keep } else { BatchDecision::Drop };
    LinkAction { decision, power_mw: rng.random_range(0.0..=p_max) }
}

pub const AOI_THRESHOLD: u32 = 3;

/// Drop at 70% power once the receiver AoI exceeds the threshold, otherwise
/// keep at 30%.
pub fn threshold_action(queue: &QueueState, p_max: f64) -> LinkAction {
    if queue.aoi_rx > AOI_THRESHOLD {
        LinkAction { decision: BatchDecision::Drop, power_mw: 0.7 * p_max }
    } else {
        LinkAction { decision: BatchDecision::Keep, power_mw: 0.3 * p_max }
    }
}

/// Independent stream, separate from the environment's, so paired episodes
/// see the same arrivals and fading whatever policy runs.
#[derive(Debug, Clone)]
pub struct RandomPolicy {
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

impl Policy for RandomPolicy {
    fn act(&mut self, ep: &Episode) -> Vec<LinkAction> {
        let p = ep.max_power_mw();
        (0..ep.num_links()).map(|_| random_action(p, &mut self.rng)).collect()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ThresholdPolicy;

impl Policy for ThresholdPolicy {
    fn act(&mut self, ep: &Episode) -> Vec<LinkAction> {
        let p = ep.max_power_mw();
        ep.queues().iter().map(|q| threshold_action(q, p)).collect()
    }
}

/// Gain matrix, noise and power budget of one slot drawn from the default
/// road layout with `links` links.
pub fn random_instance<R: Rng + ?Sized>(links: usize, rng: &mut R) -> (LinkMatrix<f64>, f64, f64) {
    let net = NetworkConfig { num_links: links, ..Default::default() };
    let geo = place_vehicles(&net, rng);
    let chan = build_channel(&geo, &net, rng);
    (chan.gain_matrix(), net.noise_power_mw(), net.max_power_mw())
}

/// Exhaustive `steps x steps` search over power pairs of a 2-link instance.
pub fn grid_search_2link(gains: &LinkMatrix<f64>, noise: f64, p_max: f64, steps: usize) -> (f64, [f64; 2]) {
    assert_eq!(gains.size(), 2);
    let cfg = WmmseConfig::default();
    let mut best = (f64::NEG_INFINITY, [0.0, 0.0]);
    for a in 0..steps {
        for b in 0..steps {
            let p = [p_max * a as f64 / (steps - 1) as f64, p_max * b as f64 / (steps - 1) as f64];
            let r = weighted_sum_rate(gains, &p, noise, &cfg);
            if r > best.0 {
                best = (r, p);
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    const NOISE: f64 = 1e-3;

    fn matrix(rows: &[&[f64]]) -> LinkMatrix<f64> {
        LinkMatrix::from_fn(rows.len(), |i, m| rows[i][m])
    }

    #[test]
    fn single_link_uses_full_power() {
        let g = matrix(&[&[0.3]]);
        assert_eq!(wmmse_power(&g, NOISE, 10.0, &WmmseConfig::default()), vec![10.0]);
        let (active, p) = itlinq_schedule(&g, NOISE, 10.0, &ItlinqConfig::default());
        assert_eq!((active, p), (vec![0], vec![10.0]));
    }

    #[test]
    fn weak_interference_keeps_both_links_on() {
        let g = matrix(&[&[1e-2, 1e-8], &[1e-8, 2e-2]]);
        let p = wmmse_power(&g, NOISE, 10.0, &WmmseConfig::default());
        assert!(p.iter().all(|&x| x >= 0.99 * 10.0), "{p:?}");
        let zero = matrix(&[&[1e-2, 0.0], &[0.0, 2e-2]]);
        assert_eq!(itlinq_schedule(&zero, NOISE, 10.0, &ItlinqConfig::default()).0.len(), 2);
    }

    #[test]
    fn strong_interference_near_grid_optimum() {
        let g = matrix(&[&[1e-2, 1e-2], &[1e-2, 1e-2]]);
        let cfg = WmmseConfig::default();
        let r = weighted_sum_rate(&g, &wmmse_power(&g, NOISE, 10.0, &cfg), NOISE, &cfg);
        let (best, _) = grid_search_2link(&g, NOISE, 10.0, 100);
        assert!(r >= 0.98 * best, "{r} vs {best}");
    }

    #[test]
    fn sum_rate_never_decreases_across_iterations() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let cfg = WmmseConfig { tolerance: 1e-12, ..Default::default() };
        for links in [2, 4, 6] {
            for _ in 0..20 {
                let (g, noise, pmax) = random_instance(links, &mut rng);
                let res = wmmse_run(&g, noise, pmax, &cfg);
                for w in res.history.windows(2) {
                    assert!(w[1] >= w[0] - 1e-9, "{:?}", res.history);
                }
                assert!(res.powers.iter().all(|&p| (0.0..=pmax).contains(&p)));
            }
        }
    }

    #[test]
    fn grid_gap_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cfg = WmmseConfig::default();
        let mut worst = f64::INFINITY;
        for _ in 0..50 {
            let (g, noise, pmax) = random_instance(2, &mut rng);
            let r = weighted_sum_rate(&g, &wmmse_power(&g, noise, pmax, &cfg), noise, &cfg);
            worst = worst.min(r / grid_search_2link(&g, noise, pmax, 100).0);
        }
        assert!(worst >= 0.98, "worst ratio {worst}");
    }

    #[test]
    fn itlinq_admissions_pass_independent_recheck() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cfg = ItlinqConfig::default();
        let m_const = 10f64.powf(cfg.margin_db / 10.0);
        for _ in 0..200 {
            let (g, noise, pmax) = random_instance(4, &mut rng);
            let (active, p) = itlinq_schedule(&g, noise, pmax, &cfg);
            assert!(!active.is_empty());
            let strongest = (0..4).max_by(|&a, &b| g.get(a, a).total_cmp(&g.get(b, b))).unwrap();
            assert!(active.contains(&strongest));
            for &a in &active {
                for &b in &active {
                    if a != b {
                        let snr_b = g.get(b, b) * pmax / noise;
                        let inr_ab = g.get(a, b) * pmax / noise;
                        assert!(inr_ab <= m_const * snr_b.powf(cfg.eta));
                    }
                }
            }
            for (m, &pm) in p.iter().enumerate() {
                assert_eq!(pm, if active.contains(&m) { pmax } else { 0.0 });
            }
        }
    }

    #[test]
    fn random_action_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let draws: Vec<LinkAction> = (0..10_000).map(|_| random_action(10.0, &mut rng)).collect();
        let keep = draws.iter().filter(|a| a.decision == BatchDecision::Keep).count() as f64 / 1e4;
        let mean_p = draws.iter().map(|a| a.power_mw).sum::<f64>() / 1e4;
        assert!((keep - 0.5).abs() <= 0.02);
        assert!((mean_p - 5.0).abs() <= 0.1);
        assert!(draws.iter().all(|a| (0.0..=10.0).contains(&a.power_mw)));
    }

    #[test]
    fn threshold_rule() {
        let q = |aoi| QueueState { aoi_rx: aoi, ..QueueState::empty() };
        assert_eq!(threshold_action(&q(5), 10.0), LinkAction { decision: BatchDecision::Drop, power_mw: 7.0 });
        assert_eq!(threshold_action(&q(3), 10.0), LinkAction { decision: BatchDecision::Keep, power_mw: 3.0 });
        assert_eq!(threshold_action(&q(0), 10.0), LinkAction { decision: BatchDecision::Keep, power_mw: 3.0 });
    }

    #[test]
    fn config_validation() {
        assert!(WmmseConfig { tolerance: 0.0, ..Default::default() }.validate().is_err());
        assert!(ItlinqConfig { eta: 1.5, ..Default::default() }.validate().is_err());
        assert!(ItlinqConfig::default().validate().is_ok());
    }
}
