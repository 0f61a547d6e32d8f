use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::domain::ReasoningStep;
use crate::math;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(salt: u8, bytes: impl Iterator<Item = u8>) -> u64 {
    let mut h = FNV_OFFSET ^ u64::from(salt);
    h = h.wrapping_mul(FNV_PRIME);
    for b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    // final avalanche so low bits depend on every input byte
    h ^= h >> 33;
    h = h.wrapping_mul(0xff51_afd7_ed55_8ccd);
    h ^ (h >> 33)
}

/// Signed feature hashing over lowercase alphanumeric tokens.
///
/// Step tokens add `±1` to bucket `hash(token) mod dim`; tokens of the
/// preceding context add `±0.5` using a different salt, so the same word
/// lands in unrelated buckets depending on where it appears. The vector is
/// L2-normalized unless it is all zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashingFeaturizer {
    pub dim: usize,
}

impl HashingFeaturizer {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "feature dimension must be positive");
        Self { dim }
    }

    pub fn featurize(&self, context: &[ReasoningStep], step: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        for c in context {
            self.add_tokens(&mut v, &c.text, 1, 0.5);
        }
        self.add_tokens(&mut v, step, 0, 1.0);
        let norm = math::sqrt(v.iter().map(|x| x * x).sum());
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }

    fn add_tokens(&self, v: &mut [f64], text: &str, salt: u8, weight: f64) {
        for tok in text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
            let h = fnv1a(salt, tok.bytes().map(|b| b.to_ascii_lowercase()));
            let bucket = (h % self.dim as u64) as usize;
            let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
            v[bucket] += sign * weight;
        }
    }
}
