//! State importance scores and prune-mask selection.
//!
//! Scores are computed per *unit*: a conjugate pair is evaluated once and
//! both members share the value, so masks never split a pair.

mod greedy;
mod mask;
mod scores;
mod select;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use greedy::greedy_last_trace;
pub use mask::{apply_element_mask, apply_mask, prune_model, MaskMode, PrunedModel};
pub use scores::{
    hinf_scores, lamp_scores, last_scores, magnitude_scores, prefix_normalize, score_model,
    LayerScores, ScoreKind, ScoreTable, ScoreWarning,
};
pub use select::{select_global, select_mask, select_random, select_uniform, uniform_prune_count};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Criterion {
    UniformHinf,
    GlobalHinf,
    Last,
    UniformMagnitude,
    GlobalMagnitude,
    Lamp,
    RandomStructured,
    RandomUnstructured,
}

impl Criterion {
    pub const ALL: [Criterion; 8] = [
        Criterion::UniformHinf,
        Criterion::GlobalHinf,
        Criterion::Last,
        Criterion::UniformMagnitude,
        Criterion::GlobalMagnitude,
        Criterion::Lamp,
        Criterion::RandomStructured,
        Criterion::RandomUnstructured,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Criterion::UniformHinf => "uniform-hinf",
            Criterion::GlobalHinf => "global-hinf",
            Criterion::Last => "last",
            Criterion::UniformMagnitude => "uniform-magnitude",
            Criterion::GlobalMagnitude => "global-magnitude",
            Criterion::Lamp => "lamp",
            Criterion::RandomStructured => "random-structured",
            Criterion::RandomUnstructured => "random-unstructured",
        }
    }

    /// Whether per-layer ratios are chosen by the criterion rather than fixed.
    pub fn is_layer_adaptive(self) -> bool {
        matches!(
            self,
            Criterion::GlobalHinf | Criterion::Last | Criterion::GlobalMagnitude | Criterion::Lamp
        )
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Criterion {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Criterion::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown criterion {s:?}"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrunePlan {
    pub criterion: Criterion,
    pub ratio: f64,
    pub seed: Option<u64>,
}

/// Element-level keep flags for unstructured pruning. `b` is `n x h` and
/// `c` is `h x n`, both row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElementMask {
    pub lambda: Vec<bool>,
    pub b: Vec<bool>,
    pub c: Vec<bool>,
}

impl ElementMask {
    pub fn pruned_count(&self) -> usize {
        [&self.lambda, &self.b, &self.c].iter().map(|v| v.iter().filter(|k| !**k).count()).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerMask {
    pub keep: Vec<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub elements: Option<ElementMask>,
}

impl LayerMask {
    pub fn all_keep(n: usize) -> Self {
        LayerMask { keep: vec![true; n], elements: None }
    }

    pub fn pruned(&self) -> usize {
        self.keep.iter().filter(|k| !**k).count()
    }

    pub fn pruned_indices(&self) -> Vec<usize> {
        (0..self.keep.len()).filter(|&i| !self.keep[i]).collect()
    }

    pub fn kept_indices(&self) -> Vec<usize> {
        (0..self.keep.len()).filter(|&i| self.keep[i]).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PruneMask {
    pub plan: PrunePlan,
    pub layers: Vec<LayerMask>,
}

impl PruneMask {
    pub fn all_keep(model: &crate::layer::Model, plan: PrunePlan) -> Self {
        PruneMask { plan, layers: model.layers.iter().map(|l| LayerMask::all_keep(l.order())).collect() }
    }

    pub fn total_states(&self) -> usize {
        self.layers.iter().map(|l| l.keep.len()).sum()
    }

    pub fn pruned_states(&self) -> usize {
        self.layers.iter().map(LayerMask::pruned).sum()
    }

    /// Fraction of all states pruned across the model.
    pub fn global_ratio(&self) -> f64 {
        let total = self.total_states();
        if total == 0 {
            0.0
        } else {
            self.pruned_states() as f64 / total as f64
        }
    }

    /// Mean of the per-layer pruned fractions.
    pub fn average_layer_ratio(&self) -> f64 {
        if self.layers.is_empty() {
            return 0.0;
        }
        let sum: f64 = self
            .layers
            .iter()
            .map(|l| if l.keep.is_empty() { 0.0 } else { l.pruned() as f64 / l.keep.len() as f64 })
            .sum();
        sum / self.layers.len() as f64
    }

    pub fn remaining_per_layer(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.keep.len() - l.pruned()).collect()
    }
}
