//! Oracle suites shared by the `selftest` command and the acceptance run.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::grad::{finite_difference, max_relative_error};
use super::queue_reference::exhaustive_equivalence;
use crate::baselines::{grid_search_2link, random_action, random_instance, weighted_sum_rate, wmmse_run, WmmseConfig};
use crate::env::AgentState;
use crate::mappo::actor::{ppo_objective, ppo_stats, ActorParams, ActorSample, PpoConfig};
use crate::mappo::critic::CriticParams;
use crate::nn::dist::{gaussian_entropy, gaussian_logprob, softmax};
use crate::nn::{Activation, DenseNet, Parameters};
use crate::queue::{apply_arrival, apply_transmission, BatchDecision, QueueState};
use crate::sage::{loss_and_grad, NeighborSample, NodeFeatures, SageParams, GraphSpec, FEATURE_DIM};

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

pub const FD_STEP: f64 = 1e-5;
pub const FD_TOLERANCE: f64 = 1e-4;

/// Every arrival/drop/service sequence of length up to 6 from the empty
/// buffer, u = 3, y in 0..=7, against the packet-list simulator.
pub fn queue_exhaustive() -> SuiteResult {
    let r = exhaustive_equivalence(3, 7, 6);
    SuiteResult {
        name: "queue exhaustive equivalence",
        passed: r.mismatches.is_empty() && r.transitions_checked > 0,
        detail: format!("{} transitions, {} distinct states, {} mismatches", r.transitions_checked, r.distinct_states, r.mismatches.len()),
    }
}

fn q(q1: u32, q2: u32, age1: Option<u32>, age2: Option<u32>, aoi_rx: u32) -> QueueState {
    QueueState { q1, q2, age1, age2, aoi_rx }
}

/// The three arrival and three transmission worked examples.
pub fn queue_worked_examples() -> SuiteResult {
    let mut failures = Vec::new();
    let arrivals = [
        (q(0, 0, None, None, 0), true, BatchDecision::Keep, q(3, 0, Some(0), None, 0)),
        (q(0, 0, None, None, 0), true, BatchDecision::Drop, q(3, 0, Some(0), None, 0)),
        (q(2, 0, Some(4), None, 0), true, BatchDecision::Keep, q(2, 3, Some(4), Some(0), 0)),
        (q(2, 3, Some(7), Some(2), 0), false, BatchDecision::Drop, q(3, 0, Some(2), None, 0)),
    ];
    for (i, (s, arrived, d, want)) in arrivals.into_iter().enumerate() {
        let got = apply_arrival(s, arrived, d, 3).0;
        if got != want {
            failures.push(format!("arrival {i}: {got:?} != {want:?}"));
        }
    }
    let start = q(3, 2, Some(5), Some(1), 9);
    let transmissions = [(2, q(1, 2, Some(6), Some(2), 10)), (4, q(1, 0, Some(2), None, 6)), (5, q(0, 0, None, None, 2))];
    for (y, want) in transmissions {
        let got = apply_transmission(start, y).0;
        if got != want {
            failures.push(format!("transmission y={y}: {got:?} != {want:?}"));
        }
    }
    SuiteResult {
        name: "queue worked examples",
        passed: failures.is_empty(),
        detail: if failures.is_empty() { "7 of 7 reproduce".into() } else { failures.join("; ") },
    }
}

/// Largest relative error per top-level tensor group (`trunk`, `global`, ...).
fn grouped_errors<P: Parameters>(params: &P, analytic: &[f64], numeric: &[f64], label: &str) -> Vec<(String, f64)> {
    let mut spans: Vec<(String, usize, usize)> = Vec::new();
    let mut at = 0;
    params.visit(&mut |name, _, d| {
        let group = name.split('.').next().unwrap_or(name).to_string();
        match spans.last_mut() {
            Some((g, _, end)) if *g == group => *end += d.len(),
            _ => spans.push((group, at, at + d.len())),
        }
        at += d.len();
    });
    spans
        .into_iter()
        .map(|(g, a, b)| (format!("{label}.{g}"), max_relative_error(&analytic[a..b], &numeric[a..b])))
        .collect()
}

fn random_state(rng: &mut ChaCha8Rng) -> AgentState {
    AgentState(std::array::from_fn(|_| rng.random_range(-1.0..1.5)))
}

/// Central-difference checks of every trainable component on random small
/// instances. Returns the largest relative error per parameter group.
pub fn gradient_errors(seed: u64) -> Vec<(String, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();

    let net = DenseNet::new(&[5, 8, 3], &[Activation::Tanh, Activation::Relu], &mut rng);
    let x: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
    let w: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
    let f = |n: &DenseNet| n.forward(&x).iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
    let (g, _) = net.backward(&net.forward_tape(&x), &w);
    out.extend(grouped_errors(&net, &g.to_flat(), &finite_difference(&net, f, FD_STEP), "dense"));

    let mut actor = ActorParams::init(-0.3, &mut rng);
    actor.discrete.scale(3.0);
    actor.continuous.scale(3.0);
    let cfg = PpoConfig { clip: 0.2, entropy_coef: 0.02, l2_coef: 1e-4 };
    let batch: Vec<ActorSample> = (0..32)
        .map(|_| {
            let s = random_state(&mut rng);
            let a = actor.sample(&s, &mut rng);
            ActorSample { state: s, gamma: a.gamma, raw: a.raw, old_logprob: a.logprob + rng.random_range(-0.6..0.6), advantage: rng.random_range(-2.0..2.0) }
        })
        // Stay clear of the clip kinks, where the objective is not differentiable.
        .filter(|s| {
            let r = (actor.forward(&s.state).logprob(s.gamma, s.raw) - s.old_logprob).exp();
            (r - (1.0 - cfg.clip)).abs() > 1e-3 && (r - (1.0 + cfg.clip)).abs() > 1e-3
        })
        .collect();
    let (_, g) = ppo_objective(&actor, &batch, &cfg);
    let numeric = finite_difference(&actor, |p| -ppo_stats(p, &batch, &cfg).objective, FD_STEP);
    out.extend(grouped_errors(&actor, &g.to_flat(), &numeric, "actor"));

    let critic = CriticParams::init(2, &mut rng);
    let states: Vec<Vec<AgentState>> = (0..2).map(|_| (0..2).map(|_| random_state(&mut rng)).collect()).collect();
    let targets: Vec<Vec<f64>> = (0..2).map(|_| (0..2).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    let (_, g) = critic.loss_and_grad(&states, &targets);
    let numeric = finite_difference(&critic, |c| c.loss(&states, &targets), FD_STEP);
    out.extend(grouped_errors(&critic, &g.to_flat(), &numeric, "critic"));

    let sage = SageParams::init(&mut rng);
    let features: Vec<NodeFeatures> = (0..4).map(|_| std::array::from_fn::<f64, FEATURE_DIM, _>(|_| rng.random_range(-1.5..1.5))).collect();
    let sample = NeighborSample::draw(&GraphSpec::new(4), &mut rng);
    let adv: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
    let (_, g) = loss_and_grad(&features, &sage, &sample, &adv, 1.0, 1.0);
    let numeric = finite_difference(&sage, |p| loss_and_grad(&features, p, &sample, &adv, 1.0, 1.0).0, FD_STEP);
    out.extend(grouped_errors(&sage, &g.to_flat(), &numeric, "gnn"));
    out
}

pub fn gradient_checks() -> SuiteResult {
    let errs = gradient_errors(11);
    let worst = errs.iter().cloned().fold((String::new(), 0.0), |a, b| if b.1 > a.1 { b } else { a });
    SuiteResult {
        name: "gradient checks",
        passed: errs.iter().all(|(_, e)| *e <= FD_TOLERANCE),
        detail: format!("{} parameter groups, worst {} at {:.2e}", errs.len(), worst.0, worst.1),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WmmseReport {
    pub worst_ratio: f64,
    pub worst_decrease: f64,
}

/// WMMSE against a `grid x grid` power search on `instances` random 2-link
/// draws, plus the largest per-iteration drop of the weighted sum rate.
pub fn wmmse_report(seed: u64, instances: usize, grid: usize) -> WmmseReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = WmmseConfig::default();
    let mut worst_ratio = f64::INFINITY;
    let mut worst_decrease: f64 = 0.0;
    for _ in 0..instances {
        let (g, noise, p_max) = random_instance(2, &mut rng);
        let run = wmmse_run(&g, noise, p_max, &cfg);
        let rate = weighted_sum_rate(&g, &run.powers, noise, &cfg);
        worst_ratio = worst_ratio.min(rate / grid_search_2link(&g, noise, p_max, grid).0);
        for w in run.history.windows(2) {
            worst_decrease = worst_decrease.max(w[0] - w[1]);
        }
    }
    WmmseReport { worst_ratio, worst_decrease }
}

pub fn wmmse_quality() -> SuiteResult {
    let r = wmmse_report(2024, 50, 100);
    SuiteResult {
        name: "wmmse grid gap and monotonicity",
        passed: r.worst_ratio >= 0.98 && r.worst_decrease <= 1e-9,
        detail: format!("worst sum-rate ratio {:.4}, largest decrease {:.1e}", r.worst_ratio, r.worst_decrease),
    }
}

pub fn distribution_checks() -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut failures = Vec::new();
    let draws: Vec<_> = (0..10_000).map(|_| random_action(10.0, &mut rng)).collect();
    let keep = draws.iter().filter(|a| a.decision == BatchDecision::Keep).count() as f64 / 1e4;
    let mean_p = draws.iter().map(|a| a.power_mw).sum::<f64>() / 1e4;
    if (keep - 0.5).abs() > 0.02 {
        failures.push(format!("random keep rate {keep}"));
    }
    if (mean_p - 5.0).abs() > 0.1 {
        failures.push(format!("random mean power {mean_p}"));
    }
    for &ls in &[-2.0, 0.0, 0.5] {
        let s = f64::exp(ls);
        let n = 20_000;
        let (a, b) = (-12.0 * s, 12.0 * s);
        let h = (b - a) / n as f64;
        let f = |x: f64| {
            let lp = gaussian_logprob(x, 0.0, ls);
            -lp.exp() * lp
        };
        let inner: f64 = (1..n).map(|i| f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 }).sum();
        let numeric = (f(a) + f(b) + inner) * h / 3.0;
        if (numeric - gaussian_entropy(ls)).abs() > 1e-6 {
            failures.push(format!("gaussian entropy at log_std {ls}"));
        }
    }
    for _ in 0..100 {
        let l = [rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0)];
        if (softmax(&l).iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            failures.push("softmax normalisation".into());
            break;
        }
    }
    SuiteResult {
        name: "distribution checks",
        passed: failures.is_empty(),
        detail: if failures.is_empty() { "random policy moments, entropy quadrature, softmax".into() } else { failures.join("; ") },
    }
}

pub fn run_all() -> Vec<SuiteResult> {
    vec![queue_exhaustive(), queue_worked_examples(), gradient_checks(), wmmse_quality(), distribution_checks()]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_suite_passes() {
        for r in run_all() {
            assert!(r.passed, "{}: {}", r.name, r.detail);
        }
    }
}
