//! Two-layer GraphSAGE encoder over the link interference graph.
//!
//! Every link is a node; every ordered pair of distinct links is a directed
//! interference edge. Each layer concatenates a node's vector with the mean of
//! a neighbour sample and applies a learned linear map, a rectifier after the
//! first layer and nothing after the second, so every link ends up with one
//! scalar embedding. The encoder is trained once per episode with a pairwise
//! kernel loss that asks links with similar mean advantage to have similar
//! embeddings.

use rand::seq::index::sample;
use rand::Rng;

use crate::nn::Parameters;
use crate::topology::{path_loss_db, LinkGeometry, NetworkConfig};

pub const FEATURE_DIM: usize = 5;
pub const HIDDEN_DIM: usize = 16;

pub type NodeFeatures = [f64; FEATURE_DIM];

/// Per-link `[direct path loss dB, tx x, tx y, rx x, rx y]`, standardised per
/// coordinate over the links of one graph.
pub fn node_features(geometry: &LinkGeometry, config: &NetworkConfig) -> Vec<NodeFeatures> {
    let raw: Vec<NodeFeatures> = (0..geometry.num_links())
        .map(|m| {
            let (t, r) = (geometry.tx[m], geometry.rx[m]);
            [path_loss_db(geometry.distance(m, m), config), t.x, t.y, r.x, r.y]
        })
        .collect();
    standardize(&raw)
}

/// Zero mean, unit (population) variance per coordinate; constant
/// coordinates map to zero.
pub fn standardize(raw: &[NodeFeatures]) -> Vec<NodeFeatures> {
    let n = raw.len() as f64;
    let mut out = raw.to_vec();
    for c in 0..FEATURE_DIM {
        let mean = raw.iter().map(|x| x[c]).sum::<f64>() / n;
        let var = raw.iter().map(|x| (x[c] - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        for (o, x) in out.iter_mut().zip(raw) {
            o[c] = if std > 1e-12 * mean.abs().max(1.0) { (x[c] - mean) / std } else { 0.0 };
        }
    }
    out
}

/// Neighbour sample size for a graph of `num_nodes` links, before clamping
/// to the `num_nodes - 1` neighbours that actually exist.
pub fn sample_size(num_nodes: usize) -> usize {
    let root = 2.0 * (num_nodes as f64).sqrt();
    let by_size = root.floor() as usize;
    2usize.max(num_nodes.saturating_sub(1).min(by_size))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GraphSpec {
    pub num_nodes: usize,
    pub sample_size: usize,
}

impl GraphSpec {
    pub fn new(num_nodes: usize) -> Self {
        Self { num_nodes, sample_size: sample_size(num_nodes) }
    }

    pub fn effective_sample(&self) -> usize {
        self.sample_size.min(self.num_nodes.saturating_sub(1))
    }
}

/// Sampled neighbourhoods, `layers[k][m]` for layer `k` and node `m`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborSample {
    pub layers: [Vec<Vec<usize>>; 2],
}

impl NeighborSample {
    /// Draws each node's neighbours without replacement, independently per layer.
    pub fn draw<R: Rng + ?Sized>(spec: &GraphSpec, rng: &mut R) -> Self {
        let n = spec.num_nodes;
        let k = spec.effective_sample();
        let mut layer = || -> Vec<Vec<usize>> {
            (0..n)
                .map(|m| {
                    if k >= n.saturating_sub(1) {
                        (0..n).filter(|&j| j != m).collect()
                    } else {
                        let mut picked: Vec<usize> =
                            sample(rng, n - 1, k).into_iter().map(|j| if j >= m { j + 1 } else { j }).collect();
                        picked.sort_unstable();
                        picked
                    }
                })
                .collect()
        };
        let first = layer();
        let second = layer();
        Self { layers: [first, second] }
    }

    /// Every node sees every other node.
    pub fn full(num_nodes: usize) -> Self {
        let all: Vec<Vec<usize>> = (0..num_nodes).map(|m| (0..num_nodes).filter(|&j| j != m).collect()).collect();
        Self { layers: [all.clone(), all] }
    }
}

/// Layer weights; neither layer has a bias.
#[derive(Debug, Clone, PartialEq)]
pub struct SageParams {
    /// `[HIDDEN_DIM, 2 * FEATURE_DIM]`, row-major.
    pub w0: Vec<f64>,
    /// `[1, 2 * HIDDEN_DIM]`.
    pub w1: Vec<f64>,
}

impl SageParams {
    pub fn zeros() -> Self {
        Self { w0: vec![0.0; HIDDEN_DIM * 2 * FEATURE_DIM], w1: vec![0.0; 2 * HIDDEN_DIM] }
    }

    pub fn init<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let b0 = 1.0 / ((2 * FEATURE_DIM) as f64).sqrt();
        let b1 = 1.0 / ((2 * HIDDEN_DIM) as f64).sqrt();
        Self {
            w0: (0..HIDDEN_DIM * 2 * FEATURE_DIM).map(|_| rng.random_range(-b0..=b0)).collect(),
            w1: (0..2 * HIDDEN_DIM).map(|_| rng.random_range(-b1..=b1)).collect(),
        }
    }
}

impl Parameters for SageParams {
    fn visit(&self, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        f("w0", &[HIDDEN_DIM, 2 * FEATURE_DIM], &self.w0);
        f("w1", &[1, 2 * HIDDEN_DIM], &self.w1);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &[usize], &mut [f64])) {
        f("w0", &[HIDDEN_DIM, 2 * FEATURE_DIM], &mut self.w0);
        f("w1", &[1, 2 * HIDDEN_DIM], &mut self.w1);
    }
}

fn mean_of<const D: usize>(rows: &[[f64; D]], idx: &[usize]) -> [f64; D] {
    let mut acc = [0.0; D];
    if idx.is_empty() {
        return acc;
    }
    for &j in idx {
        for (a, v) in acc.iter_mut().zip(&rows[j]) {
            *a += v;
        }
    }
    let k = idx.len() as f64;
    acc.map(|a| a / k)
}

/// Intermediate values of one forward pass, kept for the gradient.
#[derive(Debug, Clone)]
struct Forward {
    concat0: Vec<[f64; 2 * FEATURE_DIM]>,
    pre0: Vec<[f64; HIDDEN_DIM]>,
    hidden: Vec<[f64; HIDDEN_DIM]>,
    concat1: Vec<[f64; 2 * HIDDEN_DIM]>,
    out: Vec<f64>,
}

fn forward(features: &[NodeFeatures], params: &SageParams, sample: &NeighborSample) -> Forward {
    let n = features.len();
    let mut concat0 = Vec::with_capacity(n);
    let mut pre0 = Vec::with_capacity(n);
    let mut hidden = Vec::with_capacity(n);
    for m in 0..n {
        let nb = mean_of(features, &sample.layers[0][m]);
        let mut c = [0.0; 2 * FEATURE_DIM];
        c[..FEATURE_DIM].copy_from_slice(&features[m]);
        c[FEATURE_DIM..].copy_from_slice(&nb);
        let mut z = [0.0; HIDDEN_DIM];
        for (o, zo) in z.iter_mut().enumerate() {
            let row = &params.w0[o * 2 * FEATURE_DIM..(o + 1) * 2 * FEATURE_DIM];
            *zo = row.iter().zip(&c).map(|(w, x)| w * x).sum();
        }
        concat0.push(c);
        pre0.push(z);
        hidden.push(z.map(|v| v.max(0.0)));
    }
    let mut concat1 = Vec::with_capacity(n);
    let mut out = Vec::with_capacity(n);
    for m in 0..n {
        let nb = mean_of(&hidden, &sample.layers[1][m]);
        let mut c = [0.0; 2 * HIDDEN_DIM];
        c[..HIDDEN_DIM].copy_from_slice(&hidden[m]);
        c[HIDDEN_DIM..].copy_from_slice(&nb);
        out.push(params.w1.iter().zip(&c).map(|(w, x)| w * x).sum());
        concat1.push(c);
    }
    Forward { concat0, pre0, hidden, concat1, out }
}

/// Embeddings for a fixed neighbour sample.
pub fn encode_with_sample(features: &[NodeFeatures], params: &SageParams, sample: &NeighborSample) -> Vec<f64> {
    forward(features, params, sample).out
}

/// Draws a fresh neighbour sample and returns one scalar per link.
pub fn encode<R: Rng + ?Sized>(features: &[NodeFeatures], params: &SageParams, spec: &GraphSpec, rng: &mut R) -> Vec<f64> {
    encode_with_sample(features, params, &NeighborSample::draw(spec, rng))
}

fn kernel_terms<'a>(
    f: &'a [f64],
    mean_adv: &'a [f64],
    tau1: f64,
    tau2: f64,
) -> impl Iterator<Item = (usize, usize, f64, f64)> + 'a {
    let n = f.len();
    (0..n).flat_map(move |i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(move |(i, j)| {
        let k = (-(f[i] - f[j]).powi(2) / tau1).exp();
        let t = (-(mean_adv[i] - mean_adv[j]).abs() / tau2).exp();
        (i, j, k, t)
    })
}

/// Mean squared gap between the embedding kernel and the advantage kernel
/// over all ordered pairs of distinct links. Zero for fewer than two links.
pub fn metric_loss(f: &[f64], mean_adv: &[f64], tau1: f64, tau2: f64) -> f64 {
    let n = f.len();
    if n < 2 {
        return 0.0;
    }
    let pairs = (n * (n - 1)) as f64;
    kernel_terms(f, mean_adv, tau1, tau2).map(|(_, _, k, t)| (k - t).powi(2)).sum::<f64>() / pairs
}

/// `d metric_loss / d f`.
pub fn metric_loss_grad(f: &[f64], mean_adv: &[f64], tau1: f64, tau2: f64) -> Vec<f64> {
    let n = f.len();
    let mut g = vec![0.0; n];
    if n < 2 {
        return g;
    }
    let pairs = (n * (n - 1)) as f64;
    for (i, j, k, t) in kernel_terms(f, mean_adv, tau1, tau2) {
        // d k / d f_i = -2 (f_i - f_j) / tau1 * k, and the opposite for f_j.
        let dk = 2.0 * (k - t) / pairs * k * (-2.0 * (f[i] - f[j]) / tau1);
        g[i] += dk;
        g[j] -= dk;
    }
    g
}

/// Metric loss and its gradient with respect to the encoder weights, for a
/// fixed neighbour sample.
pub fn loss_and_grad(
    features: &[NodeFeatures],
    params: &SageParams,
    sample: &NeighborSample,
    mean_adv: &[f64],
    tau1: f64,
    tau2: f64,
) -> (f64, SageParams) {
    let fw = forward(features, params, sample);
    let loss = metric_loss(&fw.out, mean_adv, tau1, tau2);
    let d_out = metric_loss_grad(&fw.out, mean_adv, tau1, tau2);
    let n = features.len();
    let mut grad = SageParams::zeros();

    let mut d_hidden = vec![[0.0; HIDDEN_DIM]; n];
    for m in 0..n {
        let g = d_out[m];
        for (w, c) in grad.w1.iter_mut().zip(&fw.concat1[m]) {
            *w += g * c;
        }
        for h in 0..HIDDEN_DIM {
            d_hidden[m][h] += g * params.w1[h];
        }
        let nb = &sample.layers[1][m];
        if !nb.is_empty() {
            let share = g / nb.len() as f64;
            for &j in nb {
                for h in 0..HIDDEN_DIM {
                    d_hidden[j][h] += share * params.w1[HIDDEN_DIM + h];
                }
            }
        }
    }
    for m in 0..n {
        for o in 0..HIDDEN_DIM {
            if fw.pre0[m][o] <= 0.0 {
                continue;
            }
            let d = d_hidden[m][o];
            let row = &mut grad.w0[o * 2 * FEATURE_DIM..(o + 1) * 2 * FEATURE_DIM];
            for (w, c) in row.iter_mut().zip(&fw.concat0[m]) {
                *w += d * c;
            }
        }
    }
    debug_assert_eq!(fw.hidden.len(), n);
    (loss, grad)
}

/// Loss hyperparameters of the once-per-episode encoder update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricLossConfig {
    pub tau1: f64,
    pub tau2: f64,
    pub lr: f64,
}

/// One gradient-descent step on the metric loss with the neighbour sample
/// held fixed. Returns the updated weights and the loss before the step.
pub fn update_with_sample(
    params: &SageParams,
    features: &[NodeFeatures],
    sample: &NeighborSample,
    mean_adv: &[f64],
    cfg: MetricLossConfig,
) -> (SageParams, f64) {
    let (loss, grad) = loss_and_grad(features, params, sample, mean_adv, cfg.tau1, cfg.tau2);
    let mut next = params.clone();
    for (p, g) in next.w0.iter_mut().zip(&grad.w0).chain(next.w1.iter_mut().zip(&grad.w1)) {
        *p -= cfg.lr * g;
    }
    (next, loss)
}

pub fn update<R: Rng + ?Sized>(
    params: &SageParams,
    features: &[NodeFeatures],
    spec: &GraphSpec,
    mean_adv: &[f64],
    cfg: MetricLossConfig,
    rng: &mut R,
) -> (SageParams, f64) {
    let sample = NeighborSample::draw(spec, rng);
    update_with_sample(params, features, &sample, mean_adv, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::check::grad::{finite_difference, max_relative_error};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_features(n: usize, rng: &mut ChaCha8Rng) -> Vec<NodeFeatures> {
        let raw: Vec<NodeFeatures> = (0..n).map(|_| std::array::from_fn(|_| rng.random_range(-50.0..50.0))).collect();
        standardize(&raw)
    }

    #[test]
    fn sample_size_formula() {
        assert_eq!(sample_size(4), 3);
        assert_eq!(sample_size(100), 20);
        assert_eq!(sample_size(2), 2);
        assert_eq!(GraphSpec::new(2).effective_sample(), 1);
        assert_eq!(sample_size(1), 2);
        assert_eq!(GraphSpec::new(1).effective_sample(), 0);
    }

    #[test]
    fn sampling_without_replacement_excludes_self() {
        let spec = GraphSpec::new(30);
        let s = NeighborSample::draw(&spec, &mut ChaCha8Rng::seed_from_u64(2));
        for layer in &s.layers {
            for (m, nb) in layer.iter().enumerate() {
                assert_eq!(nb.len(), spec.effective_sample());
                assert!(!nb.contains(&m));
                let mut d = nb.clone();
                d.dedup();
                assert_eq!(d.len(), nb.len());
            }
        }
    }

    #[test]
    fn zero_weights_give_zero_embedding() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let x = random_features(5, &mut rng);
        let f = encode(&x, &SageParams::zeros(), &GraphSpec::new(5), &mut rng);
        assert_eq!(f, vec![0.0; 5]);
    }

    #[test]
    fn single_node_uses_zero_neighbour_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let params = SageParams::init(&mut rng);
        let x = [[0.5, -1.0, 0.25, 2.0, -0.3]];
        let f = encode(&x, &params, &GraphSpec::new(1), &mut rng);
        let mut expected = 0.0;
        for o in 0..HIDDEN_DIM {
            let z: f64 = (0..FEATURE_DIM).map(|i| params.w0[o * 10 + i] * x[0][i]).sum();
            expected += params.w1[o] * z.max(0.0);
        }
        assert!((f[0] - expected).abs() < 1e-14);
    }

    #[test]
    fn full_sampling_matches_dense_reference() {
        // Dense formulation: neighbour mean = A X with A_ij = 1/(n-1) off the diagonal.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 3;
        let params = SageParams::init(&mut rng);
        let x = random_features(n, &mut rng);
        let adj = |i: usize, j: usize| if i == j { 0.0 } else { 1.0 / (n - 1) as f64 };
        let mut h = vec![vec![0.0; HIDDEN_DIM]; n];
        for m in 0..n {
            for o in 0..HIDDEN_DIM {
                let mut z = 0.0;
                for i in 0..FEATURE_DIM {
                    let agg: f64 = (0..n).map(|j| adj(m, j) * x[j][i]).sum();
                    z += params.w0[o * 10 + i] * x[m][i] + params.w0[o * 10 + 5 + i] * agg;
                }
                h[m][o] = z.max(0.0);
            }
        }
        let dense: Vec<f64> = (0..n)
            .map(|m| {
                (0..HIDDEN_DIM)
                    .map(|o| {
                        let agg: f64 = (0..n).map(|j| adj(m, j) * h[j][o]).sum();
                        params.w1[o] * h[m][o] + params.w1[HIDDEN_DIM + o] * agg
                    })
                    .sum()
            })
            .collect();
        let got = encode(&x, &params, &GraphSpec::new(n), &mut rng);
        for (a, b) in got.iter().zip(&dense) {
            assert!((a - b).abs() < 1e-9);
        }
        // Deterministic once the sample covers the whole neighbourhood.
        assert_eq!(got, encode(&x, &params, &GraphSpec::new(n), &mut ChaCha8Rng::seed_from_u64(99)));
    }

    #[test]
    fn metric_loss_closed_forms() {
        assert_eq!(metric_loss(&[0.3, 0.3, 0.3], &[1.0, 1.0, 1.0], 1.0, 1.0), 0.0);
        let tau1 = 2.0f64;
        let l = metric_loss(&[0.0, tau1.sqrt()], &[0.4, 0.4], tau1, 1.0);
        let expected = ((-1f64).exp() - 1.0).powi(2);
        assert!((l - expected).abs() < 1e-12);
        assert!((expected - 0.399_576).abs() < 1e-6);
        assert_eq!(metric_loss(&[1.0], &[5.0], 1.0, 1.0), 0.0);
    }

    #[test]
    fn metric_loss_matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let f: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
        let a: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (t1, t2) = (0.7, 1.3);
        let mut s = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    let e = (-((f[i] - f[j]) * (f[i] - f[j])) / t1).exp() - (-((a[i] - a[j]).abs()) / t2).exp();
                    s += e * e;
                }
            }
        }
        assert!((metric_loss(&f, &a, t1, t2) - s / 12.0).abs() < 1e-12);
    }

    #[test]
    fn encoder_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 6;
        let params = SageParams::init(&mut rng);
        let x = random_features(n, &mut rng);
        let spec = GraphSpec::new(n);
        let sample = NeighborSample::draw(&spec, &mut rng);
        let adv: Vec<f64> = (0..n).map(|_| rng.random_range(-1.5..1.5)).collect();
        let (_, grad) = loss_and_grad(&x, &params, &sample, &adv, 1.0, 1.0);
        let numeric = finite_difference(
            &params,
            |p| metric_loss(&encode_with_sample(&x, p, &sample), &adv, 1.0, 1.0),
            1e-5,
        );
        let err = max_relative_error(&grad.to_flat(), &numeric);
        assert!(err <= 1e-4, "relative error {err}");
    }

    #[test]
    fn zero_learning_rate_is_identity_and_descent_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 4;
        let params = SageParams::init(&mut rng);
        let x = random_features(n, &mut rng);
        let spec = GraphSpec::new(n);
        let adv = [0.9, -0.4, 0.1, -1.2];
        let cfg = MetricLossConfig { tau1: 1.0, tau2: 1.0, lr: 0.0 };
        let (same, _) = update(&params, &x, &spec, &adv, cfg, &mut rng);
        assert_eq!(same, params);

        let sample = NeighborSample::draw(&spec, &mut rng);
        let cfg = MetricLossConfig { lr: 1e-3, ..cfg };
        let mut p = params;
        let mut losses = Vec::new();
        for _ in 0..40 {
            let (next, loss) = update_with_sample(&p, &x, &sample, &adv, cfg);
            losses.push(loss);
            p = next;
        }
        for w in losses[5..].windows(2) {
            assert!(w[1] <= w[0] + 1e-15, "{losses:?}");
        }
    }

    #[test]
    fn metric_loss_is_permutation_symmetric() {
        let f = [0.3, -1.0, 2.2, 0.0];
        let a = [1.0, 0.2, -0.5, 0.9];
        let perm = [2, 0, 3, 1];
        let fp: Vec<f64> = perm.iter().map(|&i| f[i]).collect();
        let ap: Vec<f64> = perm.iter().map(|&i| a[i]).collect();
        assert!((metric_loss(&f, &a, 1.0, 1.0) - metric_loss(&fp, &ap, 1.0, 1.0)).abs() < 1e-15);
    }
}
