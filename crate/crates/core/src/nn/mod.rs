//! Small dense networks with hand-written reverse-mode gradients, the
//! closed-form distribution math used by the policy heads, an Adam optimizer
//! and the named-tensor serialization shared with checkpoints.
//!
//! Everything runs in `f64`. Parameter containers implement [`Parameters`],
//! which walks their tensors in a fixed order; gradients are stored in a
//! container of the same type so the two flatten identically.

mod adam;
mod dense;
pub mod dist;
pub(crate) mod tensor_io;

pub use adam::{Adam, AdamConfig};
pub use dense::{Activation, Dense, DenseNet, Tape};
pub use tensor_io::{read_tensors, write_tensors, NamedTensor, TENSOR_FORMAT_VERSION};

use crate::error::CheckpointError;

/// A fixed, ordered collection of named `f64` tensors.
pub trait Parameters {
    fn visit(&self, f: &mut dyn FnMut(&str, &[usize], &[f64]));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&str, &[usize], &mut [f64]));

    fn num_params(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, _, d| n += d.len());
        n
    }

    fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        self.visit(&mut |_, _, d| out.extend_from_slice(d));
        out
    }

    fn set_flat(&mut self, flat: &[f64]) {
        let mut at = 0;
        self.visit_mut(&mut |_, _, d| {
            d.copy_from_slice(&flat[at..at + d.len()]);
            at += d.len();
        });
        assert_eq!(at, flat.len(), "flat parameter length mismatch");
    }

    fn fill(&mut self, value: f64) {
        self.visit_mut(&mut |_, _, d| d.fill(value));
    }

    fn squared_norm(&self) -> f64 {
        let mut s = 0.0;
        self.visit(&mut |_, _, d| s += d.iter().map(|x| x * x).sum::<f64>());
        s
    }

    fn scale(&mut self, k: f64) {
        self.visit_mut(&mut |_, _, d| d.iter_mut().for_each(|x| *x *= k));
    }

    fn all_finite(&self) -> bool {
        let mut ok = true;
        self.visit(&mut |_, _, d| ok &= d.iter().all(|x| x.is_finite()));
        ok
    }

    fn named_tensors(&self, prefix: &str) -> Vec<NamedTensor> {
        let mut out = Vec::new();
        self.visit(&mut |name, shape, data| {
            out.push(NamedTensor { name: format!("{prefix}{name}"), shape: shape.to_vec(), data: data.to_vec() });
        });
        out
    }

    /// Overwrites every tensor from `tensors`, matching by `prefix + name`.
    fn load_named(&mut self, prefix: &str, tensors: &[NamedTensor]) -> Result<(), CheckpointError> {
        let mut result = Ok(());
        self.visit_mut(&mut |name, shape, data| {
            if result.is_err() {
                return;
            }
            let full = format!("{prefix}{name}");
            match tensors.iter().find(|t| t.name == full) {
                None => result = Err(CheckpointError::MissingTensor(full)),
                Some(t) if t.shape != shape => {
                    result = Err(CheckpointError::ShapeMismatch { name: full, expected: shape.to_vec(), found: t.shape.clone() })
                }
                Some(t) => data.copy_from_slice(&t.data),
            }
        });
        result
    }
}

/// Accumulates `other` into `acc` element-wise.
pub fn add_assign<P: Parameters>(acc: &mut P, other: &P) {
    let flat = other.to_flat();
    let mut at = 0;
    acc.visit_mut(&mut |_, _, d| {
        for x in d.iter_mut() {
            *x += flat[at];
            at += 1;
        }
    });
}

/// Rescales `grads` so that its global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm<P: Parameters>(grads: &mut P, max_norm: f64) -> f64 {
    let norm = grads.squared_norm().sqrt();
    if norm > max_norm && norm > 0.0 {
        grads.scale(max_norm / norm);
    }
    norm
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
