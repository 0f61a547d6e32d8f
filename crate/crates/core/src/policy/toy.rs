use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::math;
use crate::params::{ParamVector, Segment};

/// Tabular autoregressive softmax policy.
///
/// Logits are looked up by `(input, position, previous token)`; position 0
/// uses a dedicated begin-of-sequence row. Outputs always have exactly
/// `max_len` tokens drawn from `0..vocab_size`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyPolicy {
    pub num_inputs: usize,
    pub vocab_size: usize,
    pub max_len: usize,
    pub params: ParamVector,
}

impl ToyPolicy {
    /// All logits zero, i.e. uniform at every position.
    pub fn uniform(num_inputs: usize, vocab_size: usize, max_len: usize) -> Self {
        assert!(num_inputs > 0 && vocab_size > 0 && max_len > 0);
        let n = num_inputs * max_len * (vocab_size + 1) * vocab_size;
        Self { num_inputs, vocab_size, max_len, params: ParamVector::zeros(&[(Segment::PolicyLogits, n)]) }
    }

    /// Prefix identifier for `(input, position, previous token)`; the
    /// previous token is `None` at position 0.
    pub(crate) fn row(&self, input: usize, t: usize, prev: Option<usize>) -> usize {
        debug_assert!(input < self.num_inputs && t < self.max_len);
        let prev = prev.unwrap_or(self.vocab_size);
        ((input * self.max_len + t) * (self.vocab_size + 1) + prev) * self.vocab_size
    }

    pub fn logits(&self, input: usize, t: usize, prev: Option<usize>) -> &[f64] {
        let r = self.row(input, t, prev);
        &self.params.values[r..r + self.vocab_size]
    }

    pub fn logits_mut(&mut self, input: usize, t: usize, prev: Option<usize>) -> &mut [f64] {
        let r = self.row(input, t, prev);
        let v = self.vocab_size;
        &mut self.params.values[r..r + v]
    }

    pub fn probs(&self, input: usize, t: usize, prev: Option<usize>) -> Vec<f64> {
        let mut p = vec![0.0; self.vocab_size];
        math::softmax_into(self.logits(input, t, prev), &mut p);
        p
    }

    pub fn log_probs(&self, input: usize, t: usize, prev: Option<usize>) -> Vec<f64> {
        let z = self.logits(input, t, prev);
        let lse = math::log_sum_exp(z);
        z.iter().map(|x| x - lse).collect()
    }

    /// Prefixes `(position, previous token)` visited by `output`.
    pub fn prefixes(output: &[usize]) -> impl Iterator<Item = (usize, Option<usize>, usize)> + '_ {
        output.iter().enumerate().map(|(t, &tok)| (t, if t == 0 { None } else { Some(output[t - 1]) }, tok))
    }

    /// Teacher-forced per-token `log p(o_t | x, o_<t)`.
    pub fn token_logprobs(&self, input: usize, output: &[usize]) -> Vec<f64> {
        Self::prefixes(output).map(|(t, prev, tok)| self.log_probs(input, t, prev)[tok]).collect()
    }

    pub fn sequence_logprob(&self, input: usize, output: &[usize]) -> f64 {
        self.token_logprobs(input, output).iter().sum()
    }

    /// Add `scale * ∇ log π(output | input)` into `grad`.
    pub fn accumulate_logprob_grad(&self, input: usize, output: &[usize], scale: f64, grad: &mut ParamVector) {
        for (t, prev, tok) in Self::prefixes(output) {
            let r = self.row(input, t, prev);
            let p = self.probs(input, t, prev);
            for (v, pv) in p.iter().enumerate() {
                let indicator = if v == tok { 1.0 } else { 0.0 };
                grad.values[r + v] += scale * (indicator - pv);
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, input: usize, rng: &mut R) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.max_len);
        for t in 0..self.max_len {
            let prev = out.last().copied();
            let p = self.probs(input, t, prev);
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut pick = self.vocab_size - 1;
            for (v, pv) in p.iter().enumerate() {
                acc += pv;
                if u < acc {
                    pick = v;
                    break;
                }
            }
            out.push(pick);
        }
        out
    }

    /// Total variation distance between the two policies' distributions at
    /// every prefix row, maximized over rows.
    pub fn max_total_variation(&self, other: &ToyPolicy) -> f64 {
        let mut worst: f64 = 0.0;
        for x in 0..self.num_inputs {
            for t in 0..self.max_len {
                let prevs: Vec<Option<usize>> =
                    if t == 0 { vec![None] } else { (0..self.vocab_size).map(Some).collect() };
                for prev in prevs {
                    let p = self.probs(x, t, prev);
                    let q = other.probs(x, t, prev);
                    let tv = 0.5 * p.iter().zip(&q).map(|(a, b)| (a - b).abs()).sum::<f64>();
                    worst = worst.max(tv);
                }
            }
        }
        worst
    }
}
