//! Deterministic weight materialization.
//!
//! A missing tensor is generated from a ChaCha stream seeded by the graph
//! seed, the owning node id and the tensor role, so the same graph always
//! produces the same bytes. Values are uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`
//! and filled in row-major order. Running variances are drawn from `[0.5, 1.5]`
//! instead so batch-norm stays well defined.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::catalog::{expected_weights, fan_in, LayerKind};
use crate::ids::NodeId;
use crate::params::ParamMap;
use crate::tensor::TensorValue;

fn stream(seed: u64, node: NodeId, role: &str) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(node.to_string().as_bytes());
    h.update([0u8]);
    h.update(role.as_bytes());
    let digest: [u8; 32] = h.finalize().into();
    ChaCha8Rng::from_seed(digest)
}

/// Uniform in `[0, 1)` with 24 bits of precision.
fn unit(rng: &mut ChaCha8Rng) -> f32 {
    (rng.next_u32() >> 8) as f32 / (1u32 << 24) as f32
}

pub fn generate(
    seed: u64,
    node: NodeId,
    role: &str,
    dims: &[usize],
    fan_in: usize,
) -> TensorValue {
    let mut rng = stream(seed, node, role);
    let (lo, hi) = if role == "running_var" {
        (0.5f32, 1.5f32)
    } else {
        let bound = 1.0 / (fan_in.max(1) as f32).sqrt();
        (-bound, bound)
    };
    let count: usize = dims.iter().product();
    let values: Vec<f32> = (0..count).map(|_| lo + unit(&mut rng) * (hi - lo)).collect();
    TensorValue::from_f32(role, dims.to_vec(), &values).expect("dims and data agree")
}

/// Tensors a node needs that are not present yet, generated deterministically.
pub fn missing_for(
    seed: u64,
    node: NodeId,
    kind: LayerKind,
    params: &ParamMap,
    present: impl Fn(&str, &[usize]) -> bool,
) -> Vec<TensorValue> {
    let fan = fan_in(kind, params);
    expected_weights(kind, params)
        .into_iter()
        .filter(|(role, dims)| !present(role, dims))
        .map(|(role, dims)| generate(seed, node, role, &dims, fan))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_bounded() {
        let id = NodeId::from_counter(3);
        let a = generate(7, id, "weight", &[4, 9], 9);
        let b = generate(7, id, "weight", &[4, 9], 9);
        assert_eq!(a, b);
        let bound = 1.0 / 3.0;
        assert!(a.to_f32().iter().all(|v| (-bound..=bound).contains(v)));
        let c = generate(8, id, "weight", &[4, 9], 9);
        assert_ne!(a, c);
        let d = generate(7, id, "bias", &[4, 9], 9);
        assert_ne!(a.data(), d.data());
    }

    #[test]
    fn running_var_positive() {
        let v = generate(1, NodeId::from_counter(1), "running_var", &[64], 1);
        assert!(v.to_f32().iter().all(|x| (0.5..=1.5).contains(x)));
    }
}
