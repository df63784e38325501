//! Multi-agent PPO with a centralised critic and a graph-embedding input.
//!
//! Training is centralised: the critic sees every agent's state and the
//! graph encoder is fitted to per-agent mean advantages once per episode.
//! Execution is decentralised: [`evaluate`] takes only actors and encoder
//! weights, and each actor reads only its own link's observation.

pub mod actor;
pub mod checkpoint;
pub mod critic;
pub mod gae;
mod trainer;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use actor::{ActorParams, ActorSample, PpoConfig};
pub use critic::{CriticParams, ValueNormalizer};
pub use trainer::{CurveRow, Trainer};

use crate::env::{Embedder, Episode, EpisodeMetrics, LinkAction, Policy, Scenario};
use crate::error::ConfigError;
use crate::sage::{encode_with_sample, GraphSpec, NeighborSample, NodeFeatures, SageParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub episodes: usize,
    pub discount: f64,
    pub gae_lambda: f64,
    pub clip: f64,
    pub entropy_coef: f64,
    pub l2_coef: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub gnn_lr: f64,
    pub epochs: usize,
    pub max_grad_norm: f64,
    pub tau1: f64,
    pub tau2: f64,
    pub initial_log_std: f64,
    /// Per-episode decay of the running return statistics.
    pub value_norm_decay: f64,
    /// One actor for every link instead of one per link.
    pub shared_actor: bool,
    /// When false the embedding is a constant 0 and the encoder never trains.
    pub use_gnn: bool,
    /// Write a checkpoint every this many episodes (0: only at the end).
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            episodes: 1000,
            discount: 0.95,
            gae_lambda: 0.95,
            clip: 0.2,
            entropy_coef: 0.02,
            l2_coef: 1e-4,
            actor_lr: 3e-4,
            critic_lr: 3e-4,
            gnn_lr: 1e-3,
            epochs: 4,
            max_grad_norm: 0.5,
            tau1: 1.0,
            tau2: 1.0,
            initial_log_std: -0.5,
            value_norm_decay: 0.95,
            shared_actor: false,
            use_gnn: true,
            checkpoint_every: 100,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) { Ok(()) } else { Err(ConfigError::Schema(format!("train.{name} must lie in [0, 1], got {v}"))) }
        };
        let non_negative = |name: &str, v: f64| {
            if v >= 0.0 && v.is_finite() { Ok(()) } else { Err(ConfigError::Schema(format!("train.{name} must be finite and non-negative, got {v}"))) }
        };
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() { Ok(()) } else { Err(ConfigError::Schema(format!("train.{name} must be positive, got {v}"))) }
        };
        unit("discount", self.discount)?;
        unit("gae_lambda", self.gae_lambda)?;
        unit("value_norm_decay", self.value_norm_decay)?;
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return Err(ConfigError::Schema(format!("train.clip must lie in (0, 1), got {}", self.clip)));
        }
        non_negative("entropy_coef", self.entropy_coef)?;
        non_negative("l2_coef", self.l2_coef)?;
        non_negative("actor_lr", self.actor_lr)?;
        non_negative("critic_lr", self.critic_lr)?;
        non_negative("gnn_lr", self.gnn_lr)?;
        positive("max_grad_norm", self.max_grad_norm)?;
        positive("tau1", self.tau1)?;
        positive("tau2", self.tau2)?;
        if !self.initial_log_std.is_finite() {
            return Err(ConfigError::Schema("train.initial_log_std must be finite".into()));
        }
        if self.episodes == 0 || self.epochs == 0 {
            return Err(ConfigError::Schema("train.episodes and train.epochs must be at least 1".into()));
        }
        Ok(())
    }

    pub fn ppo(&self) -> PpoConfig {
        PpoConfig { clip: self.clip, entropy_coef: self.entropy_coef, l2_coef: self.l2_coef }
    }
}

/// Independent random streams derived from one base seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    /// Geometry, fading and arrivals of episode `index`.
    Environment = 0,
    /// Action sampling.
    Policy = 1,
    /// Neighbour sampling of the graph encoder.
    Graph = 2,
    /// Weight initialisation.
    Init = 3,
}

/// Deterministic 64-bit seed for `(base, stream, index)`.
pub fn derive_seed(base: u64, stream: Stream, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(stream as u64);
    rng.set_word_pos(u128::from(index) * 2);
    rng.next_u64()
}

pub fn stream_rng(base: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, stream, index))
}

/// Everything a deployed agent needs: actors and graph-encoder weights.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub actors: Vec<ActorParams>,
    pub gnn: SageParams,
    pub shared_actor: bool,
    pub use_gnn: bool,
}

impl PolicyParams {
    pub fn init<R: rand::Rng + ?Sized>(links: usize, cfg: &TrainConfig, rng: &mut R) -> Self {
        let count = if cfg.shared_actor { 1 } else { links };
        Self {
            actors: (0..count).map(|_| ActorParams::init(cfg.initial_log_std, rng)).collect(),
            gnn: SageParams::init(rng),
            shared_actor: cfg.shared_actor,
            use_gnn: cfg.use_gnn,
        }
    }

    pub fn actor(&self, link: usize) -> &ActorParams {
        if self.shared_actor { &self.actors[0] } else { &self.actors[link] }
    }

    /// Whether the actors can drive a network of `links` links.
    pub fn supports(&self, links: usize) -> bool {
        self.shared_actor || self.actors.len() == links
    }
}

/// Computes embeddings with a fresh neighbour sample and remembers it.
pub struct SageEmbedder<'a> {
    params: &'a SageParams,
    rng: &'a mut ChaCha8Rng,
    pub sample: Option<NeighborSample>,
}

impl<'a> SageEmbedder<'a> {
    pub fn new(params: &'a SageParams, rng: &'a mut ChaCha8Rng) -> Self {
        Self { params, rng, sample: None }
    }
}

impl Embedder for SageEmbedder<'_> {
    fn embed(&mut self, features: &[NodeFeatures]) -> Vec<f64> {
        let sample = NeighborSample::draw(&GraphSpec::new(features.len()), self.rng);
        let out = encode_with_sample(features, self.params, &sample);
        self.sample = Some(sample);
        out
    }
}

/// Decentralised execution of trained actors.
pub struct MappoPolicy<'a> {
    params: &'a PolicyParams,
    rng: ChaCha8Rng,
    deterministic: bool,
}

impl<'a> MappoPolicy<'a> {
    pub fn new(params: &'a PolicyParams, rng: ChaCha8Rng, deterministic: bool) -> Self {
        Self { params, rng, deterministic }
    }
}

impl Policy for MappoPolicy<'_> {
    fn act(&mut self, ep: &Episode) -> Vec<LinkAction> {
        let p_max = ep.max_power_mw();
        (0..ep.num_links())
            .map(|m| {
                let s = ep.observation(m);
                let actor = self.params.actor(m);
                let a = if self.deterministic { actor.mode(&s) } else { actor.sample(&s, &mut self.rng) };
                a.to_action(p_max)
            })
            .collect()
    }
}

/// Plays one episode per entry of `env_seeds`. Action sampling and neighbour
/// sampling for episode `k` come from streams of `policy_seed` indexed by `k`.
pub fn evaluate(
    params: &PolicyParams,
    scenario: &Scenario,
    env_seeds: &[u64],
    policy_seed: u64,
    deterministic: bool,
    keep_trace: bool,
) -> Vec<EpisodeMetrics> {
    assert!(params.supports(scenario.network.num_links), "actor count does not match the number of links");
    env_seeds
        .iter()
        .enumerate()
        .map(|(k, &seed)| {
            let mut graph_rng = stream_rng(policy_seed, Stream::Graph, k as u64);
            let ep = if params.use_gnn {
                Episode::reset(scenario, seed, &mut SageEmbedder::new(&params.gnn, &mut graph_rng))
            } else {
                Episode::reset(scenario, seed, &mut crate::env::NoEmbedding)
            };
            let mut policy = MappoPolicy::new(params, stream_rng(policy_seed, Stream::Policy, k as u64), deterministic);
            ep.run(&mut policy, keep_trace)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_seeds_are_distinct_and_stable() {
        let a = derive_seed(7, Stream::Environment, 3);
        assert_eq!(a, derive_seed(7, Stream::Environment, 3));
        assert_ne!(a, derive_seed(7, Stream::Environment, 4));
        assert_ne!(a, derive_seed(7, Stream::Policy, 3));
        assert_ne!(a, derive_seed(8, Stream::Environment, 3));
    }

    #[test]
    fn config_defaults_validate() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { clip: 1.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { discount: 1.5, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { episodes: 0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn evaluation_is_reproducible_and_local() {
        let sc = Scenario::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let params = PolicyParams::init(4, &TrainConfig::default(), &mut rng);
        let seeds = [11, 12];
        let a = evaluate(&params, &sc, &seeds, 5, false, true);
        let b = evaluate(&params, &sc, &seeds, 5, false, true);
        assert_eq!(a, b);
        assert_eq!(a[0].trace.len(), 400);
    }

    #[test]
    fn short_evaluation_agrees_with_long_one() {
        let sc = Scenario::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let params = PolicyParams::init(4, &TrainConfig::default(), &mut rng);
        let aoi = |seeds: Vec<u64>| -> (f64, f64) {
            let m = evaluate(&params, &sc, &seeds, 3, false, false);
            let x: Vec<f64> = m.iter().map(|e| e.mean_aoi_slots).collect();
            let n = x.len() as f64;
            let mean = x.iter().sum::<f64>() / n;
            let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (mean, (var / n).sqrt())
        };
        let (short, se) = aoi((0..20).collect());
        let (long, _) = aoi((1000..1200).collect());
        assert!((short - long).abs() <= 2.0 * se, "{short} vs {long}, se {se}");
    }
}
