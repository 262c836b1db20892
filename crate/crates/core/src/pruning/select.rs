use std::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::layer::Model;

use super::scores::{score_model, LayerScores, ScoreKind, ScoreTable};
use super::{Criterion, ElementMask, LayerMask, PruneMask, PrunePlan};

fn check_ratio(ratio: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::InvalidRatio(ratio));
    }
    Ok(())
}

/// Per-layer prune count: `round(ratio * n)` (half away from zero), made
/// even when the layer carries conjugate pairs.
pub fn uniform_prune_count(ratio: f64, n: usize, paired: bool) -> usize {
    let k = (ratio * n as f64).round() as usize;
    if paired {
        k - k % 2
    } else {
        k
    }
}

fn is_paired(units: &[Vec<usize>]) -> bool {
    units.iter().any(|u| u.len() > 1)
}

/// Walk `order` (least important first) pruning whole units while they fit
/// in `budget` and at least one unit survives.
fn prune_units<'a>(order: impl IntoIterator<Item = &'a Vec<usize>>, total_units: usize, budget: usize, keep: &mut [bool]) {
    let mut pruned = 0;
    let mut remaining = total_units;
    for unit in order {
        if pruned == budget || remaining == 1 {
            break;
        }
        if pruned + unit.len() <= budget {
            unit.iter().for_each(|&i| keep[i] = false);
            pruned += unit.len();
            remaining -= 1;
        }
    }
}

fn plan_for(kind: ScoreKind, global: bool, ratio: f64) -> Result<PrunePlan> {
    let criterion = match (kind, global) {
        (ScoreKind::Hinf, false) => Criterion::UniformHinf,
        (ScoreKind::Magnitude, false) => Criterion::UniformMagnitude,
        (ScoreKind::Hinf, true) => Criterion::GlobalHinf,
        (ScoreKind::Magnitude, true) => Criterion::GlobalMagnitude,
        (ScoreKind::Last, true) => Criterion::Last,
        (ScoreKind::Lamp, true) => Criterion::Lamp,
        (k, false) => {
            return Err(Error::InvalidArgument(format!(
                "{} scores are layer-normalized; use global selection",
                k.as_str()
            )))
        }
    };
    Ok(PrunePlan { criterion, ratio, seed: None })
}

/// Prune the same fraction of every layer, least important states first.
pub fn select_uniform(table: &ScoreTable, ratio: f64) -> Result<PruneMask> {
    check_ratio(ratio)?;
    let plan = plan_for(table.kind, false, ratio)?;
    let layers = table
        .layers
        .iter()
        .map(|s| {
            let mut keep = vec![true; s.order()];
            let k = uniform_prune_count(ratio, s.order(), is_paired(&s.units));
            prune_units(s.prune_order(table.kind), s.units.len(), k, &mut keep);
            LayerMask { keep, elements: None }
        })
        .collect();
    Ok(PruneMask { plan, layers })
}

/// Pool every layer's units and prune the lowest-scoring ones until
/// `round(ratio * N)` states are gone, skipping units that would break a
/// layer's survival floor or overshoot the budget.
pub fn select_global(table: &ScoreTable, ratio: f64) -> Result<PruneMask> {
    check_ratio(ratio)?;
    let plan = plan_for(table.kind, true, ratio)?;
    let total: usize = table.layers.iter().map(LayerScores::order).sum();
    let budget = (ratio * total as f64).round() as usize;
    let mut pool: Vec<(f64, usize, usize, &Vec<usize>)> = Vec::new();
    for (l, s) in table.layers.iter().enumerate() {
        let values = s.values(table.kind);
        pool.extend(s.units.iter().map(|u| (values[u[0]], l, u[0], u)));
    }
    pool.sort_by(|a, b| {
        a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2))
    });
    let mut keep: Vec<Vec<bool>> = table.layers.iter().map(|s| vec![true; s.order()]).collect();
    let mut remaining: Vec<usize> = table.layers.iter().map(|s| s.units.len()).collect();
    let mut pruned = 0;
    for (_, l, _, unit) in pool {
        if pruned == budget {
            break;
        }
        if remaining[l] > 1 && pruned + unit.len() <= budget {
            unit.iter().for_each(|&i| keep[l][i] = false);
            remaining[l] -= 1;
            pruned += unit.len();
        }
    }
    Ok(PruneMask { plan, layers: keep.into_iter().map(|keep| LayerMask { keep, elements: None }).collect() })
}

/// Random baselines. Structured pruning drops whole random units at the
/// uniform per-layer count. Unstructured pruning zeroes the same number of
/// parameters, counted as `1 + 2h` per state, at random positions in `λ̄`,
/// `B̄` and `C`.
pub fn select_random(model: &Model, ratio: f64, seed: u64, structured: bool) -> Result<PruneMask> {
    check_ratio(ratio)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let criterion = if structured { Criterion::RandomStructured } else { Criterion::RandomUnstructured };
    let plan = PrunePlan { criterion, ratio, seed: Some(seed) };
    let mut layers = Vec::with_capacity(model.layers.len());
    for dt in &model.layers {
        let n = dt.order();
        let h = dt.channels();
        let mut units = dt.units();
        units.shuffle(&mut rng);
        let k = uniform_prune_count(ratio, n, is_paired(&units));
        let mut keep = vec![true; n];
        prune_units(&units, units.len(), k, &mut keep);
        if structured {
            layers.push(LayerMask { keep, elements: None });
            continue;
        }
        let states = keep.iter().filter(|k| !**k).count();
        let size = n + 2 * n * h;
        let budget = (states * (1 + 2 * h)).min(size);
        let mut flags = vec![true; size];
        rand::seq::index::sample(&mut rng, size, budget).into_iter().for_each(|i| flags[i] = false);
        let c = flags.split_off(n + n * h);
        let b = flags.split_off(n);
        layers.push(LayerMask {
            keep: vec![true; n],
            elements: Some(ElementMask { lambda: flags, b, c }),
        });
    }
    Ok(PruneMask { plan, layers })
}

/// Score the model and select a mask with the given criterion.
pub fn select_mask(model: &Model, criterion: Criterion, ratio: f64, seed: Option<u64>) -> Result<PruneMask> {
    let scored = |kind| score_model(model, kind);
    let mut mask = match criterion {
        Criterion::UniformHinf => select_uniform(&scored(ScoreKind::Hinf)?, ratio)?,
        Criterion::GlobalHinf => select_global(&scored(ScoreKind::Hinf)?, ratio)?,
        Criterion::Last => select_global(&scored(ScoreKind::Last)?, ratio)?,
        Criterion::UniformMagnitude => select_uniform(&scored(ScoreKind::Magnitude)?, ratio)?,
        Criterion::GlobalMagnitude => select_global(&scored(ScoreKind::Magnitude)?, ratio)?,
        Criterion::Lamp => select_global(&scored(ScoreKind::Lamp)?, ratio)?,
        Criterion::RandomStructured => select_random(model, ratio, seed.unwrap_or(0), true)?,
        Criterion::RandomUnstructured => select_random(model, ratio, seed.unwrap_or(0), false)?,
    };
    mask.plan.seed = seed.or(mask.plan.seed);
    Ok(mask)
}
