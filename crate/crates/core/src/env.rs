//! Slot-level simulation of `M` links sharing one band.
//!
//! An [`Episode`] owns one geometry and large-scale channel, one queue per
//! link and a private random stream that drives arrivals and fading. The
//! stream is consumed identically whatever the policy does, so two policies
//! run on the same episode seed see the same geometry, fading and arrivals.
//!
//! Per slot the order of events is: arrivals are drawn, each link's drop
//! decision is applied, capacities follow from the current fading and the
//! joint powers, the deliverable packets are drained, rewards are read from
//! the updated receiver AoI, fading is redrawn and fresh observations are
//! assembled.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::queue::{slot_step, ArrivalProcess, BatchDecision, QueueState, SlotEvents};
use crate::sage::{node_features, NodeFeatures};
use crate::topology::{build_channel, capacity, packets_transmittable, place_vehicles, ChannelRealization, LinkGeometry, NetworkConfig};

pub const STATE_DIM: usize = 7;

/// Network plus traffic parameters: everything an episode needs.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Scenario {
    pub network: NetworkConfig,
    pub arrival: ArrivalProcess,
}

/// Normalised local observation of one link:
/// `[embedding, |h_mm|, q1/u, age1/N, q2/u, age2/N, aoi_rx/N]`.
/// Absent batches report an age of `(N + 1) / N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentState(pub [f64; STATE_DIM]);

impl AgentState {
    pub const EMBEDDING: usize = 0;
    pub const FADING: usize = 1;
    pub const AOI: usize = 6;

    pub fn new(embedding: f64, fading_magnitude: f64, queue: &QueueState, batch_size: u32, episode_slots: usize) -> Self {
        let n = episode_slots as f64;
        let u = f64::from(batch_size);
        let age = |a: Option<u32>| a.map_or((n + 1.0) / n, |a| f64::from(a) / n);
        Self([
            embedding,
            fading_magnitude,
            f64::from(queue.q1) / u,
            age(queue.age1),
            f64::from(queue.q2) / u,
            age(queue.age2),
            f64::from(queue.aoi_rx) / n,
        ])
    }

    pub fn embedding(&self) -> f64 {
        self.0[Self::EMBEDDING]
    }

    /// Everything but the embedding.
    pub fn local(&self) -> [f64; STATE_DIM - 1] {
        std::array::from_fn(|i| self.0[i + 1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkAction {
    pub decision: BatchDecision,
    pub power_mw: f64,
}

/// Outcome of one slot for one link.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotRecord {
    pub slot: usize,
    pub link: usize,
    pub state: AgentState,
    pub action: LinkAction,
    pub arrived: bool,
    pub capacity_bps: f64,
    pub deliverable: u32,
    pub events: SlotEvents,
    pub queue: QueueState,
    pub reward: f64,
}

/// Produces the per-link embeddings once per episode.
pub trait Embedder {
    fn embed(&mut self, features: &[NodeFeatures]) -> Vec<f64>;
}

/// Constant zero embedding: no topology information.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoEmbedding;

impl Embedder for NoEmbedding {
    fn embed(&mut self, features: &[NodeFeatures]) -> Vec<f64> {
        vec![0.0; features.len()]
    }
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub states: Vec<AgentState>,
    pub rewards: Vec<f64>,
    pub records: Vec<SlotRecord>,
    pub done: bool,
}

/// One large-scale realisation played out over `N` slots.
#[derive(Debug, Clone)]
pub struct Episode {
    scenario: Scenario,
    pub geometry: LinkGeometry,
    pub channel: ChannelRealization,
    pub features: Vec<NodeFeatures>,
    pub embeddings: Vec<f64>,
    queues: Vec<QueueState>,
    slot: usize,
    rng: ChaCha8Rng,
}

impl Episode {
    /// Places vehicles, builds the channel, computes the embeddings and takes
    /// the first fading draw. All queues start empty with zero AoI.
    pub fn reset(scenario: &Scenario, seed: u64, embedder: &mut dyn Embedder) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let geometry = place_vehicles(&scenario.network, &mut rng);
        let channel = build_channel(&geometry, &scenario.network, &mut rng);
        let features = node_features(&geometry, &scenario.network);
        let embeddings = embedder.embed(&features);
        assert_eq!(embeddings.len(), geometry.num_links(), "one embedding per link");
        Self {
            scenario: scenario.clone(),
            queues: vec![QueueState::empty(); geometry.num_links()],
            geometry,
            channel,
            features,
            embeddings,
            slot: 0,
            rng,
        }
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn num_links(&self) -> usize {
        self.queues.len()
    }

    pub fn slot(&self) -> usize {
        self.slot
    }

    pub fn is_done(&self) -> bool {
        self.slot >= self.scenario.network.episode_slots
    }

    pub fn queues(&self) -> &[QueueState] {
        &self.queues
    }

    pub fn max_power_mw(&self) -> f64 {
        self.scenario.network.max_power_mw()
    }

    /// Observation of link `m`: its own queue, its own direct-link fading and
    /// its episode embedding only.
    pub fn observation(&self, m: usize) -> AgentState {
        AgentState::new(
            self.embeddings[m],
            self.channel.small_scale.get(m, m).norm(),
            &self.queues[m],
            self.scenario.arrival.batch_size,
            self.scenario.network.episode_slots,
        )
    }

    pub fn observations(&self) -> Vec<AgentState> {
        (0..self.num_links()).map(|m| self.observation(m)).collect()
    }

    /// # Panics
    ///
    /// If the episode is over, the action count is wrong, or a power lies
    /// outside `[0, Pmax]`.
    pub fn step(&mut self, actions: &[LinkAction]) -> StepOutcome {
        assert!(!self.is_done(), "step called after the last slot");
        let m_links = self.num_links();
        assert_eq!(actions.len(), m_links, "one action per link");
        let p_max = self.max_power_mw();
        for a in actions {
            assert!(a.power_mw >= 0.0 && a.power_mw <= p_max * (1.0 + 1e-12), "power {} outside [0, {p_max}]", a.power_mw);
        }
        let net = &self.scenario.network;
        let batch = self.scenario.arrival.batch_size;
        let states = self.observations();

        let arrivals: Vec<bool> = (0..m_links).map(|_| self.rng.random_bool(self.scenario.arrival.arrival_prob)).collect();
        let powers: Vec<f64> = actions.iter().map(|a| a.power_mw).collect();
        let mut records = Vec::with_capacity(m_links);
        let mut rewards = Vec::with_capacity(m_links);
        for m in 0..m_links {
            let c = capacity(&self.channel, &powers, m, net);
            let y = packets_transmittable(c, net);
            let (next, events) = slot_step(self.queues[m], arrivals[m], actions[m].decision, y, batch);
            self.queues[m] = next;
            let reward = -f64::from(next.aoi_rx);
            rewards.push(reward);
            records.push(SlotRecord {
                slot: self.slot,
                link: m,
                state: states[m],
                action: actions[m],
                arrived: arrivals[m],
                capacity_bps: c,
                deliverable: y,
                events,
                queue: next,
                reward,
            });
        }
        self.channel.resample_fading(&mut self.rng);
        self.slot += 1;
        StepOutcome { states: self.observations(), rewards, records, done: self.is_done() }
    }

    /// Plays the remaining slots with `policy` and aggregates the records.
    pub fn run(mut self, policy: &mut dyn Policy, keep_trace: bool) -> EpisodeMetrics {
        let mut acc = MetricsAccumulator::new(self.num_links(), keep_trace);
        while !self.is_done() {
            let actions = policy.act(&self);
            let out = self.step(&actions);
            acc.push(&out.records);
        }
        acc.finish(self.scenario.network.slot_duration_s)
    }
}

/// Any per-slot decision rule. Decentralised policies read only
/// [`Episode::observation`]; physical-layer baselines may read the channel.
pub trait Policy {
    fn act(&mut self, episode: &Episode) -> Vec<LinkAction>;
}

/// Aggregates of one episode. AoI values are post-step receiver AoI averaged
/// over all links and slots.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeMetrics {
    pub mean_aoi_slots: f64,
    pub mean_aoi_ms: f64,
    pub per_link_mean_aoi: Vec<f64>,
    /// Sum of every link's reward over the episode.
    pub total_return: f64,
    pub mean_reward: f64,
    pub drops: u64,
    pub completed_batches: u64,
    pub packets_sent: u64,
    /// Packets delivered per link per slot.
    pub throughput: f64,
    pub trace: Vec<SlotRecord>,
}

#[derive(Debug, Clone)]
pub struct MetricsAccumulator {
    links: usize,
    slots: usize,
    aoi_sum: Vec<f64>,
    reward_sum: f64,
    drops: u64,
    completed: u64,
    sent: u64,
    trace: Option<Vec<SlotRecord>>,
}

impl MetricsAccumulator {
    pub fn new(links: usize, keep_trace: bool) -> Self {
        Self {
            links,
            slots: 0,
            aoi_sum: vec![0.0; links],
            reward_sum: 0.0,
            drops: 0,
            completed: 0,
            sent: 0,
            trace: keep_trace.then(Vec::new),
        }
    }

    pub fn push(&mut self, records: &[SlotRecord]) {
        self.slots += 1;
        for r in records {
            self.aoi_sum[r.link] += f64::from(r.queue.aoi_rx);
            self.reward_sum += r.reward;
            self.drops += u64::from(r.events.batches_dropped);
            self.completed += u64::from(r.events.batches_completed);
            self.sent += u64::from(r.events.packets_sent);
        }
        if let Some(t) = self.trace.as_mut() {
            t.extend_from_slice(records);
        }
    }

    pub fn finish(self, slot_duration_s: f64) -> EpisodeMetrics {
        let slots = self.slots.max(1) as f64;
        let per_link: Vec<f64> = self.aoi_sum.iter().map(|s| s / slots).collect();
        let mean = per_link.iter().sum::<f64>() / self.links as f64;
        let cells = slots * self.links as f64;
        EpisodeMetrics {
            mean_aoi_slots: mean,
            mean_aoi_ms: mean * slot_duration_s * 1e3,
            per_link_mean_aoi: per_link,
            total_return: self.reward_sum,
            mean_reward: self.reward_sum / cells,
            drops: self.drops,
            completed_batches: self.completed,
            packets_sent: self.sent,
            throughput: self.sent as f64 / cells,
            trace: self.trace.unwrap_or_default(),
        }
    }
}

/// Closure adapter for [`Policy`].
pub struct FnPolicy<F>(pub F);

impl<F: FnMut(&Episode) -> Vec<LinkAction>> Policy for FnPolicy<F> {
    fn act(&mut self, episode: &Episode) -> Vec<LinkAction> {
        (self.0)(episode)
    }
}
