use rand_chacha::ChaCha8Rng;

use super::actor::{ppo_objective, ActionSample, ActorSample, ActorStats};
use super::critic::{CriticParams, ValueNormalizer};
use super::gae::{compute_gae, mean_advantage, normalize_advantages};
use super::{derive_seed, stream_rng, PolicyParams, SageEmbedder, Stream, TrainConfig};
use crate::env::{AgentState, Episode, MetricsAccumulator, NoEmbedding, Scenario};
use crate::error::{Error, Result};
use crate::nn::{clip_global_norm, Adam, AdamConfig, Parameters};
use crate::sage::{update_with_sample, MetricLossConfig};

/// One line of the learning curve. Losses are the values before the first
/// optimiser step of the episode; `mean_aoi` is in slots.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct CurveRow {
    pub episode: usize,
    /// Sum of all links' rewards over the episode.
    pub mean_return: f64,
    pub mean_aoi: f64,
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub gnn_loss: f64,
    pub entropy: f64,
}

/// Diagnostics of the most recent update.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct UpdateReport {
    /// Per actor, statistics of the first epoch (before any step).
    pub first_epoch: Vec<ActorStats>,
    /// Per actor, the mean normalised advantage of its batch.
    pub batch_mean_advantage: Vec<f64>,
    /// Per link, the episode mean of the normalised advantages.
    pub mean_advantage: Vec<f64>,
    pub env_seed: u64,
}

/// The full centralised-training state of one seed.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub scenario: Scenario,
    pub config: TrainConfig,
    pub seed: u64,
    pub policy: PolicyParams,
    pub critic: CriticParams,
    pub value_norm: ValueNormalizer,
    /// Episodes completed so far.
    pub episode: usize,
    pub last_update: UpdateReport,
    actor_opts: Vec<Adam>,
    critic_opt: Adam,
    policy_rng: ChaCha8Rng,
    graph_rng: ChaCha8Rng,
}

impl Trainer {
    pub fn new(scenario: &Scenario, config: &TrainConfig, seed: u64) -> Self {
        let links = scenario.network.num_links;
        let mut init = stream_rng(seed, Stream::Init, 0);
        let policy = PolicyParams::init(links, config, &mut init);
        let critic = CriticParams::init(links, &mut init);
        let actor_opts = policy.actors.iter().map(|a| Adam::new(AdamConfig::with_lr(config.actor_lr), a.num_params())).collect();
        let critic_opt = Adam::new(AdamConfig::with_lr(config.critic_lr), critic.num_params());
        Self {
            scenario: scenario.clone(),
            config: config.clone(),
            seed,
            policy,
            critic,
            value_norm: ValueNormalizer::new(config.value_norm_decay),
            episode: 0,
            last_update: UpdateReport::default(),
            actor_opts,
            critic_opt,
            policy_rng: stream_rng(seed, Stream::Policy, 0),
            graph_rng: stream_rng(seed, Stream::Graph, 0),
        }
    }

    /// Environment seed of training episode `k`; paired comparisons replay it.
    pub fn env_seed(seed: u64, k: usize) -> u64 {
        derive_seed(seed, Stream::Environment, k as u64)
    }

    /// Policy-sampling generator state, saved in checkpoints.
    pub fn policy_rng(&self) -> &ChaCha8Rng {
        &self.policy_rng
    }

    /// One episode of interaction, then the actor/critic update and the
    /// graph-encoder update.
    pub fn train_episode(&mut self) -> Result<CurveRow> {
        let cfg = self.config.clone();
        let links = self.scenario.network.num_links;
        let env_seed = Self::env_seed(self.seed, self.episode);

        let (mut ep, sample) = if cfg.use_gnn {
            let mut emb = SageEmbedder::new(&self.policy.gnn, &mut self.graph_rng);
            let ep = Episode::reset(&self.scenario, env_seed, &mut emb);
            (ep, emb.sample)
        } else {
            (Episode::reset(&self.scenario, env_seed, &mut NoEmbedding), None)
        };

        let p_max = ep.max_power_mw();
        let mut states: Vec<Vec<AgentState>> = Vec::new();
        let mut taken: Vec<Vec<ActionSample>> = vec![Vec::new(); links];
        let mut rewards: Vec<Vec<f64>> = vec![Vec::new(); links];
        let mut values: Vec<Vec<f64>> = vec![Vec::new(); links];
        let mut acc = MetricsAccumulator::new(links, false);
        while !ep.is_done() {
            let obs = ep.observations();
            let v = self.critic.values(&obs);
            let mut actions = Vec::with_capacity(links);
            for m in 0..links {
                let a = self.policy.actor(m).sample(&obs[m], &mut self.policy_rng);
                actions.push(a.to_action(p_max));
                taken[m].push(a);
                values[m].push(self.value_norm.denormalize(v[m]));
            }
            let out = ep.step(&actions);
            acc.push(&out.records);
            for m in 0..links {
                rewards[m].push(out.rewards[m]);
            }
            states.push(obs);
        }
        let metrics = acc.finish(self.scenario.network.slot_duration_s);

        let mut adv = Vec::with_capacity(links);
        let mut returns = Vec::with_capacity(links);
        for m in 0..links {
            let (a, r) = compute_gae(&rewards[m], &values[m], 0.0, cfg.discount, cfg.gae_lambda);
            adv.push(a);
            returns.push(r);
        }
        normalize_advantages(&mut adv);
        let mean_adv = mean_advantage(&adv);
        self.value_norm.update(returns.iter().flatten().copied());
        let slots = states.len();
        let targets: Vec<Vec<f64>> =
            (0..slots).map(|n| (0..links).map(|m| self.value_norm.normalize(returns[m][n])).collect()).collect();

        let owner = |m: usize| if self.policy.shared_actor { 0 } else { m };
        let mut batches: Vec<Vec<ActorSample>> = vec![Vec::new(); self.policy.actors.len()];
        for m in 0..links {
            for n in 0..slots {
                let t = taken[m][n];
                batches[owner(m)].push(ActorSample {
                    state: states[n][m],
                    gamma: t.gamma,
                    raw: t.raw,
                    old_logprob: t.logprob,
                    advantage: adv[m][n],
                });
            }
        }

        let ppo = cfg.ppo();
        let mut report = UpdateReport {
            batch_mean_advantage: batches.iter().map(|b| b.iter().map(|s| s.advantage).sum::<f64>() / b.len() as f64).collect(),
            mean_advantage: mean_adv.clone(),
            env_seed,
            ..Default::default()
        };
        let mut critic_loss = f64::NAN;
        for epoch in 0..cfg.epochs {
            for (i, batch) in batches.iter().enumerate() {
                let (stats, mut g) = ppo_objective(&self.policy.actors[i], batch, &ppo);
                if epoch == 0 {
                    report.first_epoch.push(stats);
                }
                if !stats.objective.is_finite() || !g.all_finite() {
                    return Err(Error::Diverged { episode: self.episode, what: "actor loss" });
                }
                clip_global_norm(&mut g, cfg.max_grad_norm);
                self.actor_opts[i].step(&mut self.policy.actors[i], &g);
                self.policy.actors[i].clamp_log_std();
            }
            let (loss, mut g) = self.critic.loss_and_grad(&states, &targets);
            if epoch == 0 {
                critic_loss = loss;
            }
            if !loss.is_finite() || !g.all_finite() {
                return Err(Error::Diverged { episode: self.episode, what: "critic loss" });
            }
            clip_global_norm(&mut g, cfg.max_grad_norm);
            self.critic_opt.step(&mut self.critic, &g);
        }

        let gnn_loss = match (&sample, cfg.use_gnn) {
            (Some(sample), true) => {
                let mcfg = MetricLossConfig { tau1: cfg.tau1, tau2: cfg.tau2, lr: cfg.gnn_lr };
                let (next, loss) = update_with_sample(&self.policy.gnn, &ep.features, sample, &mean_adv, mcfg);
                if !loss.is_finite() || !next.all_finite() {
                    return Err(Error::Diverged { episode: self.episode, what: "graph-encoder loss" });
                }
                self.policy.gnn = next;
                loss
            }
            _ => 0.0,
        };
        if !self.policy.actors.iter().all(Parameters::all_finite) || !self.critic.all_finite() {
            return Err(Error::Diverged { episode: self.episode, what: "parameters" });
        }

        let k = 1.0 / report.first_epoch.len() as f64;
        let row = CurveRow {
            episode: self.episode,
            mean_return: metrics.total_return,
            mean_aoi: metrics.mean_aoi_slots,
            actor_loss: -k * report.first_epoch.iter().map(|s| s.objective).sum::<f64>(),
            critic_loss,
            gnn_loss,
            entropy: k * report.first_epoch.iter().map(|s| s.entropy).sum::<f64>(),
        };
        self.last_update = report;
        self.episode += 1;
        Ok(row)
    }

    /// Restores a trainer from checkpointed weights and generator state.
    /// Optimiser moments restart from zero.
    pub fn resume(
        scenario: &Scenario,
        config: &TrainConfig,
        seed: u64,
        episode: usize,
        policy: PolicyParams,
        critic: CriticParams,
        value_norm: ValueNormalizer,
        policy_rng: ChaCha8Rng,
    ) -> Self {
        let mut t = Self::new(scenario, config, seed);
        t.policy = policy;
        t.critic = critic;
        t.value_norm = value_norm;
        t.episode = episode;
        t.policy_rng = policy_rng;
        t.graph_rng = stream_rng(seed, Stream::Graph, episode as u64);
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::NetworkConfig;

    fn small() -> Scenario {
        Scenario { network: NetworkConfig { episode_slots: 30, ..Default::default() }, ..Default::default() }
    }

    #[test]
    fn zero_learning_rates_freeze_parameters() {
        let cfg = TrainConfig { actor_lr: 0.0, critic_lr: 0.0, gnn_lr: 0.0, ..Default::default() };
        let mut t = Trainer::new(&small(), &cfg, 1);
        let (p, c) = (t.policy.clone(), t.critic.clone());
        t.train_episode().unwrap();
        assert_eq!(t.policy, p);
        assert_eq!(t.critic, c);
    }

    #[test]
    fn first_epoch_ratio_identity_and_return_scaling() {
        let sc = small();
        for shared in [false, true] {
            let mut t = Trainer::new(&sc, &TrainConfig { shared_actor: shared, ..Default::default() }, 2);
            for _ in 0..3 {
                let row = t.train_episode().unwrap();
                let r = &t.last_update;
                for (st, mean) in r.first_epoch.iter().zip(&r.batch_mean_advantage) {
                    assert!((st.ratio_min - 1.0).abs() <= 1e-9 && (st.ratio_max - 1.0).abs() <= 1e-9);
                    assert!((st.surrogate - mean).abs() <= 1e-9);
                }
                let n = sc.network.episode_slots as f64;
                assert!((row.mean_return + row.mean_aoi * n * 4.0).abs() < 1e-9);
                assert!(t.policy.actors.iter().all(|a| (-2.0..=0.5).contains(&a.log_std)));
            }
        }
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        let sc = small();
        let cfg = TrainConfig::default();
        let run = |seed| {
            let mut t = Trainer::new(&sc, &cfg, seed);
            let rows: Vec<CurveRow> = (0..2).map(|_| t.train_episode().unwrap()).collect();
            (rows, t.policy)
        };
        assert_eq!(run(4), run(4));
        assert_ne!(run(4).0, run(5).0);
    }

    #[test]
    fn no_gnn_ablation_keeps_embeddings_zero() {
        let cfg = TrainConfig { use_gnn: false, ..Default::default() };
        let mut t = Trainer::new(&small(), &cfg, 3);
        let gnn = t.policy.gnn.clone();
        let row = t.train_episode().unwrap();
        assert_eq!(row.gnn_loss, 0.0);
        assert_eq!(t.policy.gnn, gnn);
    }

    #[test]
    fn divergence_is_reported() {
        let mut t = Trainer::new(&small(), &TrainConfig::default(), 0);
        t.critic.global.layers[0].weight[0] = f64::NAN;
        let err = t.train_episode().unwrap_err();
        assert!(matches!(err, Error::Diverged { .. }), "{err}");
    }
}
