use std::cmp::Ordering;

use crate::error::Result;
use crate::layer::{DtLayer, Model};
use crate::norms::{state_gain_sq, subsystem_hinf};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ScoreKind {
    /// Squared subsystem H∞ norm.
    Hinf,
    /// H∞ score normalized by the prefix sum of its layer's sorted scores.
    Last,
    /// `|λ̄| ‖B̄‖ ‖C‖`.
    Magnitude,
    /// Squared magnitude normalized by descending prefix sums.
    Lamp,
}

impl ScoreKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScoreKind::Hinf => "hinf",
            ScoreKind::Last => "last",
            ScoreKind::Magnitude => "magnitude",
            ScoreKind::Lamp => "lamp",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [ScoreKind::Hinf, ScoreKind::Last, ScoreKind::Magnitude, ScoreKind::Lamp]
            .into_iter()
            .find(|k| k.as_str() == s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ScoreWarning {
    /// Every state of the layer scored zero; it is treated as uniformly
    /// unimportant and reported non-compressible.
    DegenerateLayer { layer: usize, kind: ScoreKind },
}

/// All per-state scores of one layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerScores {
    pub hinf_sq: Vec<f64>,
    pub last: Vec<f64>,
    pub magnitude: Vec<f64>,
    pub lamp: Vec<f64>,
    /// State indices sorted by descending `hinf_sq`.
    pub rank: Vec<usize>,
    /// State indices sorted by descending `magnitude`.
    pub magnitude_rank: Vec<usize>,
    pub units: Vec<Vec<usize>>,
    pub degenerate_hinf: bool,
    pub degenerate_magnitude: bool,
}

impl LayerScores {
    /// Build the derived scores from raw per-state H∞ and magnitude values.
    /// Members of a unit must already carry equal raw scores.
    pub fn from_raw(hinf_sq: Vec<f64>, magnitude: Vec<f64>, units: Vec<Vec<usize>>) -> Self {
        let (last, rank, degenerate_hinf) = prefix_normalize(&hinf_sq, &units);
        let squared: Vec<f64> = magnitude.iter().map(|m| m * m).collect();
        let (lamp, magnitude_rank, degenerate_magnitude) = prefix_normalize(&squared, &units);
        LayerScores {
            hinf_sq,
            last,
            magnitude,
            lamp,
            rank,
            magnitude_rank,
            units,
            degenerate_hinf,
            degenerate_magnitude,
        }
    }

    pub fn singletons(n: usize) -> Vec<Vec<usize>> {
        (0..n).map(|i| vec![i]).collect()
    }

    pub fn order(&self) -> usize {
        self.hinf_sq.len()
    }

    pub fn values(&self, kind: ScoreKind) -> &[f64] {
        match kind {
            ScoreKind::Hinf => &self.hinf_sq,
            ScoreKind::Last => &self.last,
            ScoreKind::Magnitude => &self.magnitude,
            ScoreKind::Lamp => &self.lamp,
        }
    }

    /// Ranking (most important first) that the given kind is based on.
    pub fn rank_for(&self, kind: ScoreKind) -> &[usize] {
        match kind {
            ScoreKind::Hinf | ScoreKind::Last => &self.rank,
            ScoreKind::Magnitude | ScoreKind::Lamp => &self.magnitude_rank,
        }
    }

    /// Position of every state in [`Self::rank_for`].
    pub fn rank_positions(&self, kind: ScoreKind) -> Vec<usize> {
        let mut pos = vec![0; self.order()];
        for (p, &i) in self.rank_for(kind).iter().enumerate() {
            pos[i] = p;
        }
        pos
    }

    /// Units ordered least important first; ties go to the lower index.
    pub fn prune_order(&self, kind: ScoreKind) -> Vec<&Vec<usize>> {
        let values = self.values(kind);
        let mut units: Vec<&Vec<usize>> = self.units.iter().collect();
        units.sort_by(|a, b| {
            values[a[0]].partial_cmp(&values[b[0]]).unwrap_or(Ordering::Equal).then(a[0].cmp(&b[0]))
        });
        units
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoreTable {
    pub kind: ScoreKind,
    pub layers: Vec<LayerScores>,
    pub warnings: Vec<ScoreWarning>,
}

impl ScoreTable {
    pub fn new(kind: ScoreKind, layers: Vec<LayerScores>) -> Self {
        let mut warnings = Vec::new();
        for (l, s) in layers.iter().enumerate() {
            let degenerate = match kind {
                ScoreKind::Hinf | ScoreKind::Last => s.degenerate_hinf,
                ScoreKind::Magnitude | ScoreKind::Lamp => s.degenerate_magnitude,
            };
            if degenerate {
                warnings.push(ScoreWarning::DegenerateLayer { layer: l, kind });
            }
        }
        ScoreTable { kind, layers, warnings }
    }

    pub fn score(&self, layer: usize, state: usize) -> f64 {
        self.layers[layer].values(self.kind)[state]
    }
}

fn desc(a: f64, b: f64) -> Ordering {
    b.partial_cmp(&a).unwrap_or(Ordering::Equal)
}

/// Sort units by descending score (ties: lower index first) and divide each
/// unit's score by the running sum over units ranked at or above it.
///
/// Returns per-state normalized values, the state ranking, and whether the
/// layer is degenerate (every score zero).
pub fn prefix_normalize(scores: &[f64], units: &[Vec<usize>]) -> (Vec<f64>, Vec<usize>, bool) {
    let mut order: Vec<&Vec<usize>> = units.iter().collect();
    order.sort_by(|a, b| desc(scores[a[0]], scores[b[0]]).then(a[0].cmp(&b[0])));
    let mut normalized = vec![0.0; scores.len()];
    let mut rank = Vec::with_capacity(scores.len());
    let mut running = 0.0;
    for unit in &order {
        let s = scores[unit[0]];
        running += s;
        let v = if running > 0.0 { s / running } else { 0.0 };
        for &i in unit.iter() {
            normalized[i] = v;
            rank.push(i);
        }
    }
    let degenerate = !scores.is_empty() && scores.iter().all(|&s| s == 0.0);
    (normalized, rank, degenerate)
}

/// Evaluate `f` once per unit and copy the value to every member.
fn per_unit(units: &[Vec<usize>], n: usize, mut f: impl FnMut(usize) -> Result<f64>) -> Result<Vec<f64>> {
    let mut out = vec![0.0; n];
    for unit in units {
        let v = f(unit[0])?;
        for &i in unit {
            out[i] = v;
        }
    }
    Ok(out)
}

/// Squared subsystem H∞ norms `‖C_i‖² ‖B̄_i‖² / (1 - |λ̄_i|)²`.
pub fn hinf_scores(dt: &DtLayer) -> Result<Vec<f64>> {
    per_unit(&dt.units(), dt.order(), |i| subsystem_hinf(dt, i).map(|g| g * g))
}

/// `|λ̄_i| ‖B̄_i‖ ‖C_i‖`.
pub fn magnitude_scores(dt: &DtLayer) -> Vec<f64> {
    per_unit(&dt.units(), dt.order(), |i| Ok(dt.lambda_bar[i].norm() * state_gain_sq(dt, i).sqrt()))
        .expect("magnitude scoring is infallible")
}

pub fn score_model(model: &Model, kind: ScoreKind) -> Result<ScoreTable> {
    let layers = model
        .layers
        .iter()
        .map(|dt| Ok(LayerScores::from_raw(hinf_scores(dt)?, magnitude_scores(dt), dt.units())))
        .collect::<Result<Vec<_>>>()?;
    Ok(ScoreTable::new(kind, layers))
}

pub fn last_scores(model: &Model) -> Result<ScoreTable> {
    score_model(model, ScoreKind::Last)
}

pub fn lamp_scores(model: &Model) -> Result<ScoreTable> {
    score_model(model, ScoreKind::Lamp)
}
