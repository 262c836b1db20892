use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layer::{Arch, DtLayer, Model, C64};

use super::{ElementMask, PruneMask};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskMode {
    /// Zero the pruned rows of `B̄` and columns of `C`; dimensions unchanged.
    Masked,
    /// Drop pruned states entirely.
    Compacted,
}

impl MaskMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "masked" => Some(MaskMode::Masked),
            "compacted" => Some(MaskMode::Compacted),
            _ => None,
        }
    }
}

fn check_len(dt: &DtLayer, keep: &[bool]) -> Result<()> {
    if keep.len() != dt.order() {
        return Err(Error::MaskLength { expected: dt.order(), found: keep.len() });
    }
    Ok(())
}

pub fn apply_mask(dt: &DtLayer, keep: &[bool], mode: MaskMode) -> Result<DtLayer> {
    check_len(dt, keep)?;
    if !keep.iter().any(|&k| k) {
        return Err(Error::EmptyLayer);
    }
    if keep.iter().all(|&k| k) {
        return Ok(dt.clone());
    }
    let zero = C64::new(0.0, 0.0);
    match mode {
        MaskMode::Masked => {
            let mut out = dt.clone();
            for i in (0..dt.order()).filter(|&i| !keep[i]) {
                out.b_bar.row_mut(i).fill(zero);
                out.c_fwd.column_mut(i).fill(zero);
                if let Some(cb) = out.c_bwd.as_mut() {
                    cb.column_mut(i).fill(zero);
                }
            }
            Ok(out)
        }
        MaskMode::Compacted => {
            let kept: Vec<usize> = (0..dt.order()).filter(|&i| keep[i]).collect();
            let mut new_index = vec![None; dt.order()];
            for (j, &i) in kept.iter().enumerate() {
                new_index[i] = Some(j);
            }
            let m = kept.len();
            let h = dt.channels();
            let pick_cols = |c: &DMatrix<C64>| DMatrix::from_fn(h, m, |r, j| c[(r, kept[j])]);
            let conj_pairs = dt.conj_pairs.as_ref().map(|pairs| {
                pairs
                    .iter()
                    .filter_map(|&(i, j)| Some((new_index[i]?, new_index[j]?)))
                    .collect()
            });
            Ok(DtLayer {
                lambda_bar: kept.iter().map(|&i| dt.lambda_bar[i]).collect(),
                b_bar: DMatrix::from_fn(m, dt.b_bar.ncols(), |j, ch| dt.b_bar[(kept[j], ch)]),
                c_fwd: pick_cols(&dt.c_fwd),
                c_bwd: dt.c_bwd.as_ref().map(pick_cols),
                d: dt.d.clone(),
                b_fixed: dt.b_fixed,
                // block structure is lost once states are removed unevenly
                arch: Arch::Mimo,
                conj_pairs,
            })
        }
    }
}

/// Zero individual entries of `λ̄`, `B̄` and `C` (forward and backward).
pub fn apply_element_mask(dt: &DtLayer, el: &ElementMask) -> Result<DtLayer> {
    let n = dt.order();
    let h = dt.channels();
    if el.lambda.len() != n || el.b.len() != n * h || el.c.len() != h * n {
        return Err(Error::MaskLength { expected: n + 2 * n * h, found: el.lambda.len() + el.b.len() + el.c.len() });
    }
    let zero = C64::new(0.0, 0.0);
    let mut out = dt.clone();
    for i in 0..n {
        if !el.lambda[i] {
            out.lambda_bar[i] = zero;
        }
        for ch in 0..h {
            if !el.b[i * h + ch] {
                out.b_bar[(i, ch)] = zero;
            }
        }
    }
    for r in 0..h {
        for i in 0..n {
            if !el.c[r * n + i] {
                out.c_fwd[(r, i)] = zero;
                if let Some(cb) = out.c_bwd.as_mut() {
                    cb[(r, i)] = zero;
                }
            }
        }
    }
    Ok(out)
}

/// A model with a mask applied, and the original indices of the states
/// that remain in every layer.
#[derive(Clone, Debug, PartialEq)]
pub struct PrunedModel {
    pub model: Model,
    pub surviving: Vec<Vec<usize>>,
}

pub fn prune_model(model: &Model, mask: &PruneMask, mode: MaskMode) -> Result<PrunedModel> {
    if mask.layers.len() != model.layers.len() {
        return Err(Error::DimensionMismatch(format!(
            "mask has {} layers, model has {}",
            mask.layers.len(),
            model.layers.len()
        )));
    }
    let mut layers = Vec::with_capacity(model.layers.len());
    let mut surviving = Vec::with_capacity(model.layers.len());
    for (dt, lm) in model.layers.iter().zip(&mask.layers) {
        let base = match &lm.elements {
            Some(el) => apply_element_mask(dt, el)?,
            None => dt.clone(),
        };
        layers.push(apply_mask(&base, &lm.keep, mode)?);
        surviving.push(lm.kept_indices());
    }
    let mut pruned = Model::new(layers, model.activation)?;
    pruned.meta = model.meta.clone();
    Ok(PrunedModel { model: pruned, surviving })
}
