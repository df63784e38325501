//! Centralised critic. Each agent's state is split into its graph embedding
//! and its local part, both encoded by encoders shared across agents,
//! concatenated per agent, flattened in link order and passed through a
//! global network with one value output per agent.
//!
//! The flattening makes the critic sensitive to link order.

use rand::Rng;

use crate::env::{AgentState, STATE_DIM};
use crate::nn::{Activation, DenseNet, NamedTensor, Parameters, Tape};
use crate::error::CheckpointError;

pub const GNN_CODE: usize = 16;
pub const LOCAL_CODE: usize = 32;
pub const AGENT_CODE: usize = GNN_CODE + LOCAL_CODE;
pub const GLOBAL_WIDTH: usize = 128;

#[derive(Debug, Clone, PartialEq)]
pub struct CriticParams {
    pub gnn_encoder: DenseNet,
    pub local_encoder: DenseNet,
    pub global: DenseNet,
}

fn dims(agents: usize) -> ([usize; 2], [usize; 2], [usize; 4]) {
    ([1, GNN_CODE], [STATE_DIM - 1, LOCAL_CODE], [agents * AGENT_CODE, GLOBAL_WIDTH, GLOBAL_WIDTH, agents])
}

const ENC: [Activation; 1] = [Activation::Tanh];
const GLOBAL: [Activation; 3] = [Activation::Tanh, Activation::Tanh, Activation::Identity];

struct CriticTape {
    gnn: Vec<Tape>,
    local: Vec<Tape>,
    global: Tape,
}

impl CriticParams {
    pub fn init<R: Rng + ?Sized>(agents: usize, rng: &mut R) -> Self {
        let (g, l, h) = dims(agents);
        Self { gnn_encoder: DenseNet::new(&g, &ENC, rng), local_encoder: DenseNet::new(&l, &ENC, rng), global: DenseNet::new(&h, &GLOBAL, rng) }
    }

    pub fn zeros(agents: usize) -> Self {
        let (g, l, h) = dims(agents);
        Self { gnn_encoder: DenseNet::zeros(&g, &ENC), local_encoder: DenseNet::zeros(&l, &ENC), global: DenseNet::zeros(&h, &GLOBAL) }
    }

    pub fn agents(&self) -> usize {
        self.global.out_dim()
    }

    fn forward_tape(&self, states: &[AgentState]) -> CriticTape {
        assert_eq!(states.len(), self.agents(), "critic built for {} agents", self.agents());
        let gnn: Vec<Tape> = states.iter().map(|s| self.gnn_encoder.forward_tape(&[s.embedding()])).collect();
        let local: Vec<Tape> = states.iter().map(|s| self.local_encoder.forward_tape(&s.local())).collect();
        let mut joint = Vec::with_capacity(states.len() * AGENT_CODE);
        for (g, l) in gnn.iter().zip(&local) {
            joint.extend_from_slice(&g.output);
            joint.extend_from_slice(&l.output);
        }
        let global = self.global.forward_tape(&joint);
        CriticTape { gnn, local, global }
    }

    pub fn values(&self, states: &[AgentState]) -> Vec<f64> {
        self.forward_tape(states).global.output
    }

    /// `0.5 * mean_{n,m} (V_m(S_n) - target[n][m])^2`.
    pub fn loss(&self, states: &[Vec<AgentState>], targets: &[Vec<f64>]) -> f64 {
        let k = 0.5 / (states.len() * self.agents()) as f64;
        states
            .iter()
            .zip(targets)
            .map(|(s, t)| self.values(s).iter().zip(t).map(|(v, t)| (v - t) * (v - t)).sum::<f64>())
            .sum::<f64>()
            * k
    }

    /// [`CriticParams::loss`] and its gradient.
    pub fn loss_and_grad(&self, states: &[Vec<AgentState>], targets: &[Vec<f64>]) -> (f64, CriticParams) {
        assert_eq!(states.len(), targets.len());
        let agents = self.agents();
        let k = 1.0 / (states.len() * agents) as f64;
        let mut grads = CriticParams::zeros(agents);
        let mut loss = 0.0;
        for (s, t) in states.iter().zip(targets) {
            let tape = self.forward_tape(s);
            let diff: Vec<f64> = tape.global.output.iter().zip(t).map(|(v, t)| v - t).collect();
            loss += 0.5 * k * diff.iter().map(|d| d * d).sum::<f64>();
            let up: Vec<f64> = diff.iter().map(|d| k * d).collect();
            let d_joint = self.global.backward_into(&tape.global, &up, &mut grads.global);
            for m in 0..agents {
                let at = m * AGENT_CODE;
                self.gnn_encoder.backward_into(&tape.gnn[m], &d_joint[at..at + GNN_CODE], &mut grads.gnn_encoder);
                self.local_encoder.backward_into(&tape.local[m], &d_joint[at + GNN_CODE..at + AGENT_CODE], &mut grads.local_encoder);
            }
        }
        (loss, grads)
    }
}

impl Parameters for CriticParams {
    fn visit(&self, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        self.gnn_encoder.visit(&mut |n, s, d| f(&format!("gnn_encoder.{n}"), s, d));
        self.local_encoder.visit(&mut |n, s, d| f(&format!("local_encoder.{n}"), s, d));
        self.global.visit(&mut |n, s, d| f(&format!("global.{n}"), s, d));
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &[usize], &mut [f64])) {
        self.gnn_encoder.visit_mut(&mut |n, s, d| f(&format!("gnn_encoder.{n}"), s, d));
        self.local_encoder.visit_mut(&mut |n, s, d| f(&format!("local_encoder.{n}"), s, d));
        self.global.visit_mut(&mut |n, s, d| f(&format!("global.{n}"), s, d));
    }
}

/// Running return statistics. The critic regresses normalised returns and
/// its outputs are mapped back before they enter the advantage recursion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueNormalizer {
    decay: f64,
    mean: f64,
    mean_sq: f64,
    /// Bias-correction weight, `1 - decay^updates`.
    weight: f64,
}

impl ValueNormalizer {
    const EPS: f64 = 1e-5;
    pub const TENSOR: &'static str = "value_norm";

    pub fn new(decay: f64) -> Self {
        Self { decay, mean: 0.0, mean_sq: 0.0, weight: 0.0 }
    }

    pub fn update(&mut self, batch: impl IntoIterator<Item = f64>) {
        let (mut n, mut s, mut s2) = (0usize, 0.0, 0.0);
        for x in batch {
            n += 1;
            s += x;
            s2 += x * x;
        }
        if n == 0 {
            return;
        }
        let d = self.decay;
        self.mean = d * self.mean + (1.0 - d) * s / n as f64;
        self.mean_sq = d * self.mean_sq + (1.0 - d) * s2 / n as f64;
        self.weight = d * self.weight + (1.0 - d);
    }

    pub fn mean_std(&self) -> (f64, f64) {
        if self.weight == 0.0 {
            return (0.0, 1.0);
        }
        let mean = self.mean / self.weight;
        let var = (self.mean_sq / self.weight - mean * mean).max(0.0);
        (mean, (var + Self::EPS).sqrt().max(1e-2))
    }

    pub fn normalize(&self, x: f64) -> f64 {
        let (m, s) = self.mean_std();
        (x - m) / s
    }

    pub fn denormalize(&self, y: f64) -> f64 {
        let (m, s) = self.mean_std();
        y * s + m
    }

    pub fn to_tensor(&self) -> NamedTensor {
        NamedTensor { name: Self::TENSOR.into(), shape: vec![4], data: vec![self.decay, self.mean, self.mean_sq, self.weight] }
    }

    pub fn from_tensor(t: &NamedTensor) -> Result<Self, CheckpointError> {
        match t.data.as_slice() {
            &[decay, mean, mean_sq, weight] if t.shape == [4] => Ok(Self { decay, mean, mean_sq, weight }),
            _ => Err(CheckpointError::ShapeMismatch { name: t.name.clone(), expected: vec![4], found: t.shape.clone() }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::check::grad::{finite_difference, max_relative_error};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn joint(agents: usize, rng: &mut ChaCha8Rng) -> Vec<AgentState> {
        (0..agents).map(|_| AgentState(std::array::from_fn(|_| rng.random_range(-1.0..1.5)))).collect()
    }

    #[test]
    fn zero_critic_and_output_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for m in [2, 4, 8] {
            assert_eq!(CriticParams::zeros(m).values(&joint(m, &mut rng)), vec![0.0; m]);
            assert_eq!(CriticParams::init(m, &mut rng).values(&joint(m, &mut rng)).len(), m);
        }
    }

    #[test]
    fn critic_depends_on_link_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = CriticParams::init(3, &mut rng);
        let s = joint(3, &mut rng);
        let v = c.values(&s);
        let swapped = vec![s[1], s[0], s[2]];
        let w = c.values(&swapped);
        assert_ne!(vec![w[1], w[0], w[2]], v);
    }

    #[test]
    fn loss_closed_forms() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let c = CriticParams::init(4, &mut rng);
        let states: Vec<Vec<AgentState>> = (0..5).map(|_| joint(4, &mut rng)).collect();
        let exact: Vec<Vec<f64>> = states.iter().map(|s| c.values(s)).collect();
        assert_eq!(c.loss_and_grad(&states, &exact).0, 0.0);
        let shifted: Vec<Vec<f64>> = exact.iter().map(|v| v.iter().map(|x| x - 0.7).collect()).collect();
        assert!((c.loss_and_grad(&states, &shifted).0 - 0.5 * 0.49).abs() < 1e-12);

        let targets: Vec<Vec<f64>> = (0..5).map(|_| (0..4).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
        let mut direct = 0.0;
        for (s, t) in states.iter().zip(&targets) {
            for (v, y) in c.values(s).iter().zip(t) {
                direct += (v - y) * (v - y);
            }
        }
        direct *= 0.5 / 20.0;
        assert!((c.loss_and_grad(&states, &targets).0 - direct).abs() < 1e-12);
        assert!((c.loss(&states, &targets) - direct).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = CriticParams::init(2, &mut rng);
        let states: Vec<Vec<AgentState>> = (0..3).map(|_| joint(2, &mut rng)).collect();
        let targets: Vec<Vec<f64>> = (0..3).map(|_| (0..2).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let (_, g) = c.loss_and_grad(&states, &targets);
        let numeric = finite_difference(&c, |p| p.loss(&states, &targets), 1e-5);
        let err = max_relative_error(&g.to_flat(), &numeric);
        assert!(err <= 1e-4, "relative error {err}");
    }

    #[test]
    fn normalizer_round_trip_and_statistics() {
        let mut n = ValueNormalizer::new(0.9);
        assert_eq!(n.normalize(3.0), 3.0);
        n.update([-10.0, -20.0, -30.0]);
        let (m, s) = n.mean_std();
        assert!((m + 20.0).abs() < 1e-12);
        assert!((s - (200.0f64 / 3.0 + 1e-5).sqrt()).abs() < 1e-9);
        assert!((n.denormalize(n.normalize(-17.5)) + 17.5).abs() < 1e-12);
        assert_eq!(ValueNormalizer::from_tensor(&n.to_tensor()).unwrap(), n);
    }
}
