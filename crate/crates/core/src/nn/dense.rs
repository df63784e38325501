use rand::Rng;

use super::{dot, Parameters};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
            Activation::Identity => 1.0,
        }
    }
}

/// Affine layer followed by an element-wise activation. The weight is stored
/// row-major with shape `[out_dim, in_dim]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Dense {
    pub fn zeros(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self { in_dim, out_dim, weight: vec![0.0; in_dim * out_dim], bias: vec![0.0; out_dim], activation }
    }

    /// Uniform on `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, zero bias.
    pub fn init<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, activation: Activation, rng: &mut R) -> Self {
        let bound = 1.0 / (in_dim.max(1) as f64).sqrt();
        let weight = (0..in_dim * out_dim).map(|_| rng.random_range(-bound..=bound)).collect();
        Self { in_dim, out_dim, weight, bias: vec![0.0; out_dim], activation }
    }

    pub fn row(&self, o: usize) -> &[f64] {
        &self.weight[o * self.in_dim..(o + 1) * self.in_dim]
    }

    pub fn preactivation(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.in_dim, "dense layer input dimension");
        (0..self.out_dim).map(|o| dot(self.row(o), x) + self.bias[o]).collect()
    }
}

/// Values cached by [`DenseNet::forward_tape`]: the input of every layer,
/// every pre-activation, and the final output.
#[derive(Debug, Clone)]
pub struct Tape {
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    pub output: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    pub layers: Vec<Dense>,
}

impl DenseNet {
    /// `dims` lists the input width followed by each layer's output width.
    pub fn new<R: Rng + ?Sized>(dims: &[usize], activations: &[Activation], rng: &mut R) -> Self {
        assert_eq!(dims.len(), activations.len() + 1);
        let layers = dims.windows(2).zip(activations).map(|(w, &a)| Dense::init(w[0], w[1], a, rng)).collect();
        Self { layers }
    }

    pub fn zeros(dims: &[usize], activations: &[Activation]) -> Self {
        assert_eq!(dims.len(), activations.len() + 1);
        let layers = dims.windows(2).zip(activations).map(|(w, &a)| Dense::zeros(w[0], w[1], a)).collect();
        Self { layers }
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.fill(0.0);
        z
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_dim)
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.layers.iter().fold(x.to_vec(), |h, layer| {
            layer.preactivation(&h).into_iter().map(|z| layer.activation.apply(z)).collect()
        })
    }

    pub fn forward_tape(&self, x: &[f64]) -> Tape {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut h = x.to_vec();
        for layer in &self.layers {
            let z = layer.preactivation(&h);
            let a = z.iter().map(|&v| layer.activation.apply(v)).collect();
            inputs.push(h);
            pre.push(z);
            h = a;
        }
        Tape { inputs, pre, output: h }
    }

    /// Reverse pass for `d loss / d output = upstream`. Parameter gradients
    /// are added into `grads`; the gradient w.r.t. the input is returned.
    pub fn backward_into(&self, tape: &Tape, upstream: &[f64], grads: &mut DenseNet) -> Vec<f64> {
        assert_eq!(upstream.len(), self.out_dim());
        let mut delta_out = upstream.to_vec();
        for (k, layer) in self.layers.iter().enumerate().rev() {
            let out = if k + 1 == self.layers.len() { &tape.output } else { &tape.inputs[k + 1] };
            let z = &tape.pre[k];
            let x = &tape.inputs[k];
            let delta: Vec<f64> =
                (0..layer.out_dim).map(|o| delta_out[o] * layer.activation.derivative(z[o], out[o])).collect();
            let g = &mut grads.layers[k];
            let mut delta_in = vec![0.0; layer.in_dim];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                g.bias[o] += d;
                let row = o * layer.in_dim;
                for i in 0..layer.in_dim {
                    g.weight[row + i] += d * x[i];
                    delta_in[i] += d * layer.weight[row + i];
                }
            }
            delta_out = delta_in;
        }
        delta_out
    }

    pub fn backward(&self, tape: &Tape, upstream: &[f64]) -> (DenseNet, Vec<f64>) {
        let mut grads = self.zeros_like();
        let dx = self.backward_into(tape, upstream, &mut grads);
        (grads, dx)
    }
}

impl Parameters for DenseNet {
    fn visit(&self, f: &mut dyn FnMut(&str, &[usize], &[f64])) {
        for (k, l) in self.layers.iter().enumerate() {
            f(&format!("layer{k}.weight"), &[l.out_dim, l.in_dim], &l.weight);
            f(&format!("layer{k}.bias"), &[l.out_dim], &l.bias);
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &[usize], &mut [f64])) {
        for (k, l) in self.layers.iter_mut().enumerate() {
            f(&format!("layer{k}.weight"), &[l.out_dim, l.in_dim], &mut l.weight);
            f(&format!("layer{k}.bias"), &[l.out_dim], &mut l.bias);
        }
    }
}
