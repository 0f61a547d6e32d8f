//! Flat parameter storage with named segments and a freeze mask.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Segment {
    Embedding,
    Backbone,
    FinalLayer,
    RewardHead,
    PolicyLogits,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentSpan {
    pub segment: Segment,
    pub offset: usize,
    pub len: usize,
}

/// Parameters, their segment layout and a per-entry freeze mask.
///
/// Segments partition `values` in declaration order. A `true` mask entry is
/// frozen: [`ParamVector::mask_gradient`] zeroes it and
/// [`ParamVector::descend`]/[`ParamVector::ascend`] never touch it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub values: Vec<f64>,
    pub layout: Vec<SegmentSpan>,
    pub freeze_mask: Vec<bool>,
}

impl ParamVector {
    /// Zero-initialized parameters for the given `(segment, len)` list.
    pub fn zeros(segments: &[(Segment, usize)]) -> Self {
        let mut layout = Vec::with_capacity(segments.len());
        let mut offset = 0;
        for &(segment, len) in segments {
            layout.push(SegmentSpan { segment, offset, len });
            offset += len;
        }
        Self { values: vec![0.0; offset], layout, freeze_mask: vec![false; offset] }
    }

    /// A zero vector with the same layout and no frozen entries, used for
    /// gradients.
    pub fn zeros_like(&self) -> Self {
        Self {
            values: vec![0.0; self.values.len()],
            layout: self.layout.clone(),
            freeze_mask: vec![false; self.values.len()],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn span(&self, segment: Segment) -> Option<SegmentSpan> {
        self.layout.iter().copied().find(|s| s.segment == segment)
    }

    pub fn segment(&self, segment: Segment) -> &[f64] {
        match self.span(segment) {
            Some(s) => &self.values[s.offset..s.offset + s.len],
            None => &[],
        }
    }

    pub fn segment_mut(&mut self, segment: Segment) -> &mut [f64] {
        match self.span(segment) {
            Some(s) => &mut self.values[s.offset..s.offset + s.len],
            None => &mut [],
        }
    }

    /// Checks that the layout partitions `values` and the mask is aligned.
    pub fn is_consistent(&self) -> bool {
        let mut expected = 0;
        for s in &self.layout {
            if s.offset != expected {
                return false;
            }
            expected += s.len;
        }
        expected == self.values.len() && self.freeze_mask.len() == self.values.len()
    }

    /// Freeze exactly the listed segments; everything else becomes trainable.
    pub fn freeze_only(&mut self, frozen: &[Segment]) {
        for s in &self.layout {
            let f = frozen.contains(&s.segment);
            self.freeze_mask[s.offset..s.offset + s.len].fill(f);
        }
    }

    pub fn unfreeze_all(&mut self) {
        self.freeze_mask.fill(false);
    }

    pub fn is_frozen(&self, i: usize) -> bool {
        self.freeze_mask[i]
    }

    /// Zero every gradient entry that is frozen in `self`.
    pub fn mask_gradient(&self, grad: &mut ParamVector) {
        for (g, &frozen) in grad.values.iter_mut().zip(&self.freeze_mask) {
            if frozen {
                *g = 0.0;
            }
        }
    }

    pub fn descend(&mut self, grad: &ParamVector, lr: f64) {
        self.step(grad, -lr);
    }

    pub fn ascend(&mut self, grad: &ParamVector, lr: f64) {
        self.step(grad, lr);
    }

    fn step(&mut self, grad: &ParamVector, scale: f64) {
        debug_assert_eq!(grad.len(), self.len());
        for ((v, &g), &frozen) in self.values.iter_mut().zip(&grad.values).zip(&self.freeze_mask) {
            if !frozen {
                *v += scale * g;
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// `self += scale * other`, ignoring the mask. Used to accumulate gradients.
    pub fn add_scaled(&mut self, other: &ParamVector, scale: f64) {
        for (a, &b) in self.values.iter_mut().zip(&other.values) {
            *a += scale * b;
        }
    }
}
