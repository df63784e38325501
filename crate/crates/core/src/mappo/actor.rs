//! Hybrid-action actor: a shared tanh trunk feeding a two-way drop/keep
//! head and a Gaussian power head over the normalised power `[0, 1]`.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::env::{AgentState, LinkAction, STATE_DIM};
use crate::nn::dist::{
    categorical_entropy, categorical_entropy_grad, categorical_logprob, categorical_logprob_grad, gaussian_entropy,
    gaussian_logprob, gaussian_logprob_grad, sigmoid, softmax,
};
use crate::nn::{Activation, DenseNet, Parameters, Tape};
use crate::queue::BatchDecision;

pub const TRUNK_WIDTH: usize = 64;
pub const LOG_STD_MIN: f64 = -2.0;
pub const LOG_STD_MAX: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct ActorParams {
    pub trunk: DenseNet,
    /// Logits for `[drop, keep]`, indexed by the drop factor.
    pub discrete: DenseNet,
    /// Pre-sigmoid mean of the normalised power.
    pub continuous: DenseNet,
    pub log_std: f64,
}

impl ActorParams {
    pub fn init<R: Rng + ?Sized>(log_std: f64, rng: &mut R) -> Self {
        Self {
            trunk: DenseNet::new(&[STATE_DIM, TRUNK_WIDTH, TRUNK_WIDTH], &[Activation::Tanh, Activation::Tanh], rng),
            discrete: DenseNet::new(&[TRUNK_WIDTH, 2], &[Activation::Identity], rng),
            continuous: DenseNet::new(&[TRUNK_WIDTH, 1], &[Activation::Identity], rng),
            log_std: log_std.clamp(LOG_STD_MIN, LOG_STD_MAX),
        }
    }

    pub fn zeros() -> Self {
        Self {
            trunk: DenseNet::zeros(&[STATE_DIM, TRUNK_WIDTH, TRUNK_WIDTH], &[Activation::Tanh, Activation::Tanh]),
            discrete: DenseNet::zeros(&[TRUNK_WIDTH, 2], &[Activation::Identity]),
            continuous: DenseNet::zeros(&[TRUNK_WIDTH, 1], &[Activation::Identity]),
            log_std: 0.0,
        }
    }

    pub fn clamp_log_std(&mut self) {
        self.log_std = self.log_std.clamp(LOG_STD_MIN, LOG_STD_MAX);
    }

    pub fn forward(&self, s: &AgentState) -> ActorForward {
        let trunk = self.trunk.forward_tape(&s.0);
        let disc = self.discrete.forward_tape(&trunk.output);
        let cont = self.continuous.forward_tape(&trunk.output);
        ActorForward {
            logits: [disc.output[0], disc.output[1]],
            mean: sigmoid(cont.output[0]),
            log_std: self.log_std,
            tapes: [trunk, disc, cont],
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, s: &AgentState, rng: &mut R) -> ActionSample {
        let out = self.forward(s);
        let p_keep = softmax(&out.logits)[1];
        let gamma = usize::from(rng.random::<f64>() < p_keep);
        let raw = Normal::new(out.mean, out.log_std.exp()).expect("finite std").sample(rng);
        ActionSample { gamma, raw, logprob: out.logprob(gamma, raw), entropy: out.entropy() }
    }

    /// Most likely drop factor and the mean power.
    pub fn mode(&self, s: &AgentState) -> ActionSample {
        let out = self.forward(s);
        let gamma = usize::from(out.logits[1] > out.logits[0]);
        ActionSample { gamma, raw: out.mean, logprob: out.logprob(gamma, out.mean), entropy: out.entropy() }
    }
}

impl Parameters for ActorParams {
    fn visit(&self, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        self.trunk.visit(&mut |n, s, d| f(&format!("trunk.{n}"), s, d));
        self.discrete.visit(&mut |n, s, d| f(&format!("discrete.{n}"), s, d));
        self.continuous.visit(&mut |n, s, d| f(&format!("continuous.{n}"), s, d));
        f("log_std", &[1], std::slice::from_ref(&self.log_std));
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &[usize], &mut [f64])) {
        self.trunk.visit_mut(&mut |n, s, d| f(&format!("trunk.{n}"), s, d));
        self.discrete.visit_mut(&mut |n, s, d| f(&format!("discrete.{n}"), s, d));
        self.continuous.visit_mut(&mut |n, s, d| f(&format!("continuous.{n}"), s, d));
        f("log_std", &[1], std::slice::from_mut(&mut self.log_std));
    }
}

#[derive(Debug, Clone)]
pub struct ActorForward {
    pub logits: [f64; 2],
    pub mean: f64,
    pub log_std: f64,
    tapes: [Tape; 3],
}

impl ActorForward {
    /// Joint log-density of a drop factor and an unclipped power sample.
    pub fn logprob(&self, gamma: usize, raw: f64) -> f64 {
        categorical_logprob(gamma, &self.logits) + gaussian_logprob(raw, self.mean, self.log_std)
    }

    pub fn entropy(&self) -> f64 {
        categorical_entropy(&self.logits) + gaussian_entropy(self.log_std)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionSample {
    /// 1 keeps the earlier batch, 0 drops it.
    pub gamma: usize,
    /// Normalised power before clipping.
    pub raw: f64,
    pub logprob: f64,
    pub entropy: f64,
}

impl ActionSample {
    pub fn to_action(&self, p_max: f64) -> LinkAction {
        LinkAction { decision: BatchDecision::from_gamma(self.gamma as u8), power_mw: self.raw.clamp(0.0, 1.0) * p_max }
    }
}

/// One stored decision of one agent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActorSample {
    pub state: AgentState,
    pub gamma: usize,
    pub raw: f64,
    pub old_logprob: f64,
    pub advantage: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PpoConfig {
    pub clip: f64,
    pub entropy_coef: f64,
    pub l2_coef: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ActorStats {
    /// Mean clipped surrogate plus entropy bonus minus the L2 penalty.
    pub objective: f64,
    pub surrogate: f64,
    pub unclipped_surrogate: f64,
    pub entropy: f64,
    pub ratio_min: f64,
    pub ratio_max: f64,
    pub clip_fraction: f64,
}

/// `min(r A, clip(r, 1 - eps, 1 + eps) A)`.
pub fn clipped_term(ratio: f64, advantage: f64, clip: f64) -> f64 {
    (ratio * advantage).min(ratio.clamp(1.0 - clip, 1.0 + clip) * advantage)
}

/// [`ppo_objective`] without the gradient.
pub fn ppo_stats(actor: &ActorParams, batch: &[ActorSample], cfg: &PpoConfig) -> ActorStats {
    assert!(!batch.is_empty(), "empty actor batch");
    let k = 1.0 / batch.len() as f64;
    let mut st = ActorStats { ratio_min: f64::INFINITY, ratio_max: f64::NEG_INFINITY, ..Default::default() };
    let mut clipped = 0usize;
    for s in batch {
        let out = actor.forward(&s.state);
        let ratio = (out.logprob(s.gamma, s.raw) - s.old_logprob).exp();
        st.surrogate += k * clipped_term(ratio, s.advantage, cfg.clip);
        st.unclipped_surrogate += k * ratio * s.advantage;
        st.entropy += k * out.entropy();
        st.ratio_min = st.ratio_min.min(ratio);
        st.ratio_max = st.ratio_max.max(ratio);
        if (ratio - 1.0).abs() > cfg.clip {
            clipped += 1;
        }
    }
    st.objective = st.surrogate + cfg.entropy_coef * st.entropy - cfg.l2_coef * actor.squared_norm();
    st.clip_fraction = clipped as f64 * k;
    st
}

/// PPO objective over `batch` and the gradient of its negation, so that the
/// result can be handed straight to a minimiser.
pub fn ppo_objective(actor: &ActorParams, batch: &[ActorSample], cfg: &PpoConfig) -> (ActorStats, ActorParams) {
    assert!(!batch.is_empty(), "empty actor batch");
    let k = 1.0 / batch.len() as f64;
    let mut grads = ActorParams::zeros();
    let mut st = ActorStats { ratio_min: f64::INFINITY, ratio_max: f64::NEG_INFINITY, ..Default::default() };
    let mut clipped = 0usize;
    for s in batch {
        let out = actor.forward(&s.state);
        let ratio = (out.logprob(s.gamma, s.raw) - s.old_logprob).exp();
        let a = s.advantage;
        let term = clipped_term(ratio, a, cfg.clip);
        st.surrogate += k * term;
        st.unclipped_surrogate += k * ratio * a;
        st.entropy += k * out.entropy();
        st.ratio_min = st.ratio_min.min(ratio);
        st.ratio_max = st.ratio_max.max(ratio);
        if (ratio - 1.0).abs() > cfg.clip {
            clipped += 1;
        }
        // d term / d logprob: the unclipped branch carries r A, the clipped one is flat.
        let d_lp = if ratio * a <= ratio.clamp(1.0 - cfg.clip, 1.0 + cfg.clip) * a { ratio * a } else { 0.0 };

        let lp_logits = categorical_logprob_grad(s.gamma, &out.logits);
        let ent_logits = categorical_entropy_grad(&out.logits);
        let (lp_mean, lp_logstd) = gaussian_logprob_grad(s.raw, out.mean, out.log_std);
        // Upstream gradients of the loss (negated objective).
        let d_logits: Vec<f64> = (0..2).map(|j| -k * (d_lp * lp_logits[j] + cfg.entropy_coef * ent_logits[j])).collect();
        let d_z = -k * d_lp * lp_mean * out.mean * (1.0 - out.mean);
        grads.log_std += -k * (d_lp * lp_logstd + cfg.entropy_coef);

        let [trunk_tape, disc_tape, cont_tape] = &out.tapes;
        let mut d_h = actor.discrete.backward_into(disc_tape, &d_logits, &mut grads.discrete);
        let d_h2 = actor.continuous.backward_into(cont_tape, &[d_z], &mut grads.continuous);
        for (a, b) in d_h.iter_mut().zip(&d_h2) {
            *a += b;
        }
        actor.trunk.backward_into(trunk_tape, &d_h, &mut grads.trunk);
    }
    let norm = actor.squared_norm();
    st.objective = st.surrogate + cfg.entropy_coef * st.entropy - cfg.l2_coef * norm;
    st.clip_fraction = clipped as f64 * k;
    let theta = actor.to_flat();
    let mut g = grads.to_flat();
    for (gi, t) in g.iter_mut().zip(&theta) {
        *gi += 2.0 * cfg.l2_coef * t;
    }
    grads.set_flat(&g);
    (st, grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::check::grad::{finite_difference, max_relative_error};
    use crate::queue::QueueState;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn state(rng: &mut ChaCha8Rng) -> AgentState {
        AgentState(std::array::from_fn(|_| rng.random_range(-1.0..1.5)))
    }

    fn batch(actor: &ActorParams, n: usize, rng: &mut ChaCha8Rng, perturb: f64) -> Vec<ActorSample> {
        (0..n)
            .map(|_| {
                let s = state(rng);
                let a = actor.sample(&s, rng);
                ActorSample {
                    state: s,
                    gamma: a.gamma,
                    raw: a.raw,
                    old_logprob: a.logprob + rng.random_range(-perturb..=perturb),
                    advantage: rng.random_range(-2.0..2.0),
                }
            })
            .collect()
    }

    const CFG: PpoConfig = PpoConfig { clip: 0.2, entropy_coef: 0.02, l2_coef: 1e-4 };

    #[test]
    fn equal_logits_are_a_fair_coin() {
        let mut actor = ActorParams::zeros();
        actor.log_std = -1.0;
        let s = AgentState::new(0.0, 1.0, &QueueState::empty(), 3, 100);
        let out = actor.forward(&s);
        assert_eq!(softmax(&out.logits), vec![0.5, 0.5]);
        assert_eq!(out.mean, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let keeps = (0..10_000).filter(|_| actor.sample(&s, &mut rng).gamma == 1).count();
        assert!((keeps as f64 / 1e4 - 0.5).abs() < 0.02);
    }

    #[test]
    fn joint_logprob_is_sum_of_parts_and_power_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let actor = ActorParams::init(0.5, &mut rng);
        for _ in 0..200 {
            let s = state(&mut rng);
            let a = actor.sample(&s, &mut rng);
            let out = actor.forward(&s);
            let want = categorical_logprob(a.gamma, &out.logits) + gaussian_logprob(a.raw, out.mean, out.log_std);
            assert!((a.logprob - want).abs() < 1e-12);
            let act = a.to_action(10.0);
            assert!((0.0..=10.0).contains(&act.power_mw));
        }
    }

    #[test]
    fn first_epoch_ratios_are_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let actor = ActorParams::init(-0.5, &mut rng);
        let b = batch(&actor, 64, &mut rng, 0.0);
        let (st, _) = ppo_objective(&actor, &b, &CFG);
        assert!((st.ratio_min - 1.0).abs() < 1e-9 && (st.ratio_max - 1.0).abs() < 1e-9);
        let mean_adv = b.iter().map(|s| s.advantage).sum::<f64>() / b.len() as f64;
        assert!((st.surrogate - mean_adv).abs() < 1e-9);
        assert_eq!(st.surrogate, st.unclipped_surrogate);
    }

    #[test]
    fn clip_arithmetic() {
        assert!((clipped_term(1.5, 1.0, 0.2) - 1.2).abs() < 1e-15);
        assert_eq!(clipped_term(1.5, -1.0, 0.2), -1.5);
        assert!((clipped_term(0.5, -1.0, 0.2) + 0.8).abs() < 1e-15);
        assert_eq!(clipped_term(1.1, 2.0, 0.2), 2.2);
    }

    #[test]
    fn objective_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut actor = ActorParams::init(-0.3, &mut rng);
        // Scale up the heads so the gradient is not dominated by the L2 term.
        actor.discrete.scale(3.0);
        actor.continuous.scale(3.0);
        // Ratios spread beyond the clip band, but away from its edges.
        let b: Vec<ActorSample> = batch(&actor, 24, &mut rng, 0.6)
            .into_iter()
            .filter(|s| {
                let r = (actor.forward(&s.state).logprob(s.gamma, s.raw) - s.old_logprob).exp();
                (r - 0.8).abs() > 1e-3 && (r - 1.2).abs() > 1e-3
            })
            .collect();
        let (st, g) = ppo_objective(&actor, &b, &CFG);
        assert_eq!(ppo_stats(&actor, &b, &CFG), st);
        assert!(st.clip_fraction > 0.0 && st.clip_fraction < 1.0);
        let numeric = finite_difference(&actor, |p| -ppo_stats(p, &b, &CFG).objective, 1e-5);
        let err = max_relative_error(&g.to_flat(), &numeric);
        assert!(err <= 1e-4, "relative error {err}");
    }

    #[test]
    fn log_std_is_clamped() {
        let mut a = ActorParams::init(3.0, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(a.log_std, LOG_STD_MAX);
        a.log_std = -7.0;
        a.clamp_log_std();
        assert_eq!(a.log_std, LOG_STD_MIN);
    }
}
