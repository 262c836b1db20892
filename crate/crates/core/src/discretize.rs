//! Zero-order-hold discretization and timescale handling.

use crate::error::{Error, Result};
use crate::layer::{CtLayer, CtModel, DtLayer, Model, Validate, C64};

/// Below this |lambda * delta| the input gain is evaluated by its Taylor series.
pub const SERIES_THRESHOLD: f64 = 1e-6;

/// `e^z - 1` without cancellation for small `z`.
pub(crate) fn expm1c(z: C64) -> C64 {
    let (s, c) = z.im.sin_cos();
    let half = (0.5 * z.im).sin();
    let re = z.re.exp_m1() * c - 2.0 * half * half;
    let im = z.re.exp() * s;
    C64::new(re, im)
}

/// `(e^{lambda delta} - 1) / lambda`, the per-state ZOH input gain.
pub fn zoh_input_gain(lambda: C64, delta: f64) -> C64 {
    let z = lambda * delta;
    if z.norm() < SERIES_THRESHOLD {
        // (e^z - 1)/z = 1 + z/2 + z^2/6 + z^3/24 + ...
        let series = C64::new(1.0, 0.0) + z / 2.0 + z * z / 6.0 + z * z * z / 24.0;
        series * delta
    } else {
        expm1c(z) / lambda
    }
}

/// `e^{lambda delta}` built from its polar form so that the modulus is
/// `exp(Re(lambda delta))` up to the rounding of sin/cos.
pub fn discrete_pole(lambda: C64, delta: f64) -> C64 {
    let z = lambda * delta;
    let r = z.re.exp();
    let (s, c) = z.im.sin_cos();
    C64::new(r * c, r * s)
}

pub fn zoh_discretize(ct: &CtLayer) -> Result<DtLayer> {
    let report = ct.validate();
    if !report.is_empty() {
        if let Some((index, l)) = ct.lambda.iter().enumerate().find(|(_, l)| l.re >= 0.0) {
            return Err(Error::NonHurwitz { index, re: l.re });
        }
        return Err(Error::ValidationFailed(report));
    }
    let n = ct.order();
    let mut lambda_bar = Vec::with_capacity(n);
    let mut b_bar = ct.b.clone();
    for i in 0..n {
        let pole = discrete_pole(ct.lambda[i], ct.delta[i]);
        let modulus = pole.norm();
        if modulus >= 1.0 {
            return Err(Error::DiscretizationUnstable { index: i, modulus });
        }
        lambda_bar.push(pole);
        let gain = zoh_input_gain(ct.lambda[i], ct.delta[i]);
        b_bar.row_mut(i).iter_mut().for_each(|v| *v *= gain);
    }
    Ok(DtLayer {
        lambda_bar,
        b_bar,
        c_fwd: ct.c_fwd.clone(),
        c_bwd: ct.c_bwd.clone(),
        d: ct.d.clone(),
        b_fixed: ct.b_fixed,
        arch: ct.arch,
        conj_pairs: ct.conj_pairs.clone(),
    })
}

pub fn discretize_model(ct: &CtModel) -> Result<Model> {
    let layers = ct.layers.iter().map(zoh_discretize).collect::<Result<Vec<_>>>()?;
    let mut model = Model::new(layers, ct.activation)?;
    model.meta = ct.meta.clone();
    Ok(model)
}

/// Per-state stability margins `1 - |lambda_bar[i]|`.
#[derive(Clone, Debug, PartialEq)]
pub struct StabilityReport {
    pub margins: Vec<f64>,
}

impl StabilityReport {
    pub fn min_margin(&self) -> Option<f64> {
        self.margins.iter().copied().reduce(f64::min)
    }

    pub fn is_stable(&self) -> bool {
        self.min_margin().is_none_or(|m| m > 0.0)
    }
}

pub fn check_dt_stability(dt: &DtLayer) -> StabilityReport {
    StabilityReport { margins: dt.lambda_bar.iter().map(|l| 1.0 - l.norm()).collect() }
}

/// Adapt learned timescales to a new sampling rate.
///
/// `rate_ratio` is `f_train / f_new`; every delta is multiplied by it.
pub fn rescale_timescales(ct: &CtLayer, rate_ratio: f64) -> Result<CtLayer> {
    if !(rate_ratio.is_finite() && rate_ratio > 0.0) {
        return Err(Error::NonPositiveRatio(rate_ratio));
    }
    let mut out = ct.clone();
    out.delta.iter_mut().for_each(|d| *d *= rate_ratio);
    Ok(out)
}

pub fn rescale_model(ct: &CtModel, rate_ratio: f64) -> Result<CtModel> {
    let layers = ct
        .layers
        .iter()
        .map(|l| rescale_timescales(l, rate_ratio))
        .collect::<Result<Vec<_>>>()?;
    Ok(CtModel { layers, activation: ct.activation, meta: ct.meta.clone() })
}
