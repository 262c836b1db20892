//! Empirical checks of the energy-loss bounds on concrete inputs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::layer::{Activation, DtLayer, Model, C64};
use crate::norms::{ensure_stable, hinf_sweep, layer_hinf, signal_energy, subsystem_hinf, SweepOptions};
use crate::pruning::{
    hinf_scores, prune_model, score_model, select_global, select_mask, select_uniform, Criterion, MaskMode,
    PruneMask, ScoreKind,
};
use crate::simulate::{decay_padding, layer_forward, model_forward, transfer_matrix, Signal};
use crate::synth::{random_dt_layer, random_model, stack_states, white_noise, SynthConfig};

/// Lipschitz constant of the erf-based GELU.
pub const GELU_LIPSCHITZ: f64 = 1.0829;
/// Relative slack allowed before a measurement counts as a violation.
pub const BOUND_REL_TOL: f64 = 1e-8;
/// Horizon cap used by the verification suites.
pub const VERIFY_MAX_TAIL: usize = 4096;

pub fn lipschitz(act: Activation) -> f64 {
    match act {
        Activation::Gelu => GELU_LIPSCHITZ,
        Activation::Relu | Activation::Identity => 1.0,
    }
}

/// Deterministic per-trial generator: one ChaCha stream per trial.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

pub fn ratio(measured: f64, bound: f64) -> f64 {
    if bound > 0.0 {
        measured / bound
    } else if measured == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbeKind {
    Noise,
    Impulse,
    Sinusoid,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Probe {
    pub kind: ProbeKind,
    pub signal: Signal,
}

/// Peak frequency of `subset` and the input direction that attains it.
pub fn worst_direction(dt: &DtLayer, subset: &[usize]) -> Result<(f64, Vec<C64>)> {
    let est = hinf_sweep(dt, subset, &SweepOptions::default())?;
    let g = transfer_matrix(dt, subset, est.theta);
    let svd = g.svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let top = (0..svd.singular_values.len())
        .max_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]))
        .unwrap_or(0);
    Ok((est.theta, v_t.row(top).iter().map(|z| z.conj()).collect()))
}

/// `u_k = Re(v e^{jθk})`, scaled to unit peak amplitude per channel vector.
pub fn phased_sinusoid(len: usize, theta: f64, v: &[C64]) -> Signal {
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    Signal::from_fn(len, v.len(), |k, c| (v[c] * C64::from_polar(1.0, theta * k as f64)).re / norm)
}

/// `noise` white-noise inputs, one impulse on channel 0, and one sinusoid at
/// the peak gain of `subset`. The sinusoid is long enough to approach its
/// steady state.
pub fn probe_set(
    rng: &mut ChaCha8Rng,
    dt: &DtLayer,
    subset: &[usize],
    noise: usize,
    len: usize,
    max_len: usize,
) -> Result<Vec<Probe>> {
    let h = dt.channels();
    let mut probes: Vec<Probe> =
        (0..noise).map(|_| Probe { kind: ProbeKind::Noise, signal: white_noise(rng, len, h) }).collect();
    probes.push(Probe { kind: ProbeKind::Impulse, signal: Signal::impulse(len, h, 0) });
    if !subset.is_empty() {
        let (theta, v) = worst_direction(dt, subset)?;
        let r = subset.iter().map(|&i| dt.lambda_bar[i].norm()).fold(0.0, f64::max);
        let steady = decay_padding(r, 1e-3, max_len).max(len);
        probes.push(Probe { kind: ProbeKind::Sinusoid, signal: phased_sinusoid(steady, theta, &v) });
    }
    Ok(probes)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct InputDistortion {
    pub energy_in: f64,
    pub energy_full: f64,
    pub energy_pruned: f64,
    pub distortion: f64,
    pub bound: f64,
    pub ratio: f64,
}

impl InputDistortion {
    fn new(u: &Signal, full: &Signal, pruned: &Signal, gain: f64) -> Self {
        let energy_in = signal_energy(u);
        let distortion = signal_energy(&full.sub(pruned));
        let bound = gain * energy_in;
        InputDistortion {
            energy_in,
            energy_full: signal_energy(full),
            energy_pruned: signal_energy(pruned),
            distortion,
            bound,
            ratio: ratio(distortion, bound),
        }
    }

    pub fn holds(&self) -> bool {
        self.distortion <= self.bound * (1.0 + BOUND_REL_TOL)
    }
}

fn worst(per_input: &[InputDistortion]) -> Option<&InputDistortion> {
    per_input.iter().max_by(|a, b| a.ratio.total_cmp(&b.ratio))
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerBoundReport {
    /// Distortion of the input with the largest ratio.
    pub measured: f64,
    pub bound: f64,
    /// Largest distortion/bound ratio over the inputs.
    pub ratio: f64,
    pub per_input: Vec<InputDistortion>,
    /// Squared Lipschitz factor folded into `bound`.
    pub lipschitz_sq: f64,
}

impl LayerBoundReport {
    pub fn violations(&self) -> usize {
        self.per_input.iter().filter(|d| !d.holds()).count()
    }
}

fn padded(u: &Signal, r: f64, max_tail: usize) -> Signal {
    u.zero_padded(decay_padding(r, crate::norms::DECAY_TOL, max_tail))
}

/// Distortion from removing the states in `pruned` from one layer, against
/// `Σ_{i∈pruned} ‖G_i‖²∞ ‖u‖²`.
pub fn layer_bound_report(dt: &DtLayer, pruned: &[usize], inputs: &[Signal], act: Activation) -> Result<LayerBoundReport> {
    layer_bound_report_with(dt, pruned, inputs, act, VERIFY_MAX_TAIL)
}

pub fn layer_bound_report_with(
    dt: &DtLayer,
    pruned: &[usize],
    inputs: &[Signal],
    act: Activation,
    max_tail: usize,
) -> Result<LayerBoundReport> {
    ensure_stable(dt)?;
    let mut keep = vec![true; dt.order()];
    for &i in pruned {
        *keep.get_mut(i).ok_or(Error::MaskLength { expected: dt.order(), found: i + 1 })? = false;
    }
    let lipschitz_sq = lipschitz(act).powi(2);
    let gain = lipschitz_sq
        * pruned.iter().map(|&i| subsystem_hinf(dt, i).map(|g| g * g)).sum::<Result<f64>>()?;
    let r = dt.max_pole_modulus();
    let per_input = inputs
        .iter()
        .map(|u| {
            let p = padded(u, r, max_tail);
            let full = layer_forward(dt, act, &p, None)?;
            let cut = layer_forward(dt, act, &p, Some(&keep))?;
            Ok(InputDistortion::new(u, &full, &cut, gain))
        })
        .collect::<Result<Vec<_>>>()?;
    let (measured, bound, ratio) = worst(&per_input).map_or((0.0, 0.0, 0.0), |w| (w.distortion, w.bound, w.ratio));
    Ok(LayerBoundReport { measured, bound, ratio, per_input, lipschitz_sq })
}

/// One single-state pruning step measured against the product bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StepBound {
    pub layer: usize,
    pub state: usize,
    pub measured: f64,
    pub bound: f64,
    pub ratio: f64,
    /// `‖G_i‖²∞ / ‖G_remaining‖²∞` with the layer norm from the frequency sweep.
    pub eq8_ratio: f64,
    pub last_score: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TotalBound {
    pub measured: f64,
    /// Sum of the per-state product bounds.
    pub summed_bound: f64,
    /// Square of the summed per-state norms, which also covers cross terms.
    pub triangle_bound: f64,
    pub summed_ratio: f64,
    pub triangle_ratio: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelBoundReport {
    pub steps: Vec<StepBound>,
    pub total: TotalBound,
}

impl ModelBoundReport {
    pub fn step_violations(&self) -> usize {
        self.steps.iter().filter(|s| s.measured > s.bound * (1.0 + BOUND_REL_TOL)).count()
    }

    pub fn total_violation(&self) -> bool {
        self.total.measured > self.total.summed_bound * (1.0 + BOUND_REL_TOL)
    }
}

/// Model-level distortion under `mask`, per pruned state and in total.
///
/// Each pruned state is also removed on its own from the full model; that
/// step's distortion is compared with `‖G_i‖²∞ Π_{k≠l} M_k² ‖u‖²`, where
/// `M_k` is the larger of layer `k`'s full and pruned norms (feedthrough
/// included). Ratios are the worst over `inputs`.
pub fn model_bound_report(model: &Model, mask: &PruneMask, inputs: &[Signal]) -> Result<ModelBoundReport> {
    model_bound_report_with(model, mask, inputs, VERIFY_MAX_TAIL)
}

pub fn model_bound_report_with(
    model: &Model,
    mask: &PruneMask,
    inputs: &[Signal],
    max_tail: usize,
) -> Result<ModelBoundReport> {
    if mask.layers.len() != model.layers.len() {
        return Err(Error::DimensionMismatch("mask and model differ in layer count".into()));
    }
    for dt in &model.layers {
        ensure_stable(dt)?;
    }
    let lip_sq = lipschitz(model.activation).powi(2 * model.layers.len() as i32);
    let mut norms = Vec::with_capacity(model.layers.len());
    for (dt, lm) in model.layers.iter().zip(&mask.layers) {
        let full = layer_hinf(dt, None)?.value;
        let cut = layer_hinf(dt, Some(&lm.keep))?.value;
        norms.push((full, cut, full.max(cut)));
    }
    let others = |l: usize| -> f64 {
        norms.iter().enumerate().filter(|(k, _)| *k != l).map(|(_, n)| n.2 * n.2).product()
    };
    let last = score_model(model, ScoreKind::Last)?;
    let r = model.layers.iter().map(DtLayer::max_pole_modulus).fold(0.0, f64::max);
    let padded_inputs: Vec<Signal> = inputs.iter().map(|u| padded(u, r, max_tail)).collect();
    let full_out = padded_inputs
        .iter()
        .map(|p| model_forward(model, p, None))
        .collect::<Result<Vec<_>>>()?;

    let plan = mask.plan.clone();
    let mut steps = Vec::new();
    let mut summed = 0.0;
    let mut root_sum = 0.0;
    for (l, lm) in mask.layers.iter().enumerate() {
        for i in lm.pruned_indices() {
            let g = subsystem_hinf(&model.layers[l], i)?;
            let gain = lip_sq * g * g * others(l);
            summed += gain;
            root_sum += gain.sqrt();
            let mut single = PruneMask::all_keep(model, plan.clone());
            single.layers[l].keep[i] = false;
            let per_input = padded_inputs
                .iter()
                .zip(inputs)
                .zip(&full_out)
                .map(|((p, u), full)| Ok(InputDistortion::new(u, full, &model_forward(model, p, Some(&single))?, gain)))
                .collect::<Result<Vec<_>>>()?;
            let w = worst(&per_input).copied().expect("at least one input");
            let remaining = norms[l].1;
            steps.push(StepBound {
                layer: l,
                state: i,
                measured: w.distortion,
                bound: w.bound,
                ratio: w.ratio,
                eq8_ratio: ratio(g * g, remaining * remaining),
                last_score: last.layers[l].last[i],
            });
        }
    }
    let mut total = TotalBound {
        measured: 0.0,
        summed_bound: 0.0,
        triangle_bound: 0.0,
        summed_ratio: 0.0,
        triangle_ratio: 0.0,
    };
    for ((p, u), full) in padded_inputs.iter().zip(inputs).zip(&full_out) {
        let cut = model_forward(model, p, Some(mask))?;
        let e = signal_energy(u);
        let d = InputDistortion::new(u, full, &cut, summed);
        let tri = root_sum * root_sum * e;
        if d.ratio >= total.summed_ratio {
            total = TotalBound {
                measured: d.distortion,
                summed_bound: d.bound,
                triangle_bound: tri,
                summed_ratio: d.ratio,
                triangle_ratio: ratio(d.distortion, tri),
            };
        }
    }
    Ok(ModelBoundReport { steps, total })
}

// ---------------------------------------------------------------------------
// Synthetic experiments

/// Relative output distortion `Σ‖y - ỹ‖² / Σ‖y‖²` over a batch of inputs.
pub fn relative_distortion(model: &Model, mask: &PruneMask, inputs: &[Signal], max_tail: usize) -> Result<f64> {
    let r = model.layers.iter().map(DtLayer::max_pole_modulus).fold(0.0, f64::max);
    let mut num = 0.0;
    let mut den = 0.0;
    for u in inputs {
        let p = padded(u, r, max_tail);
        let full = model_forward(model, &p, None)?;
        let cut = model_forward(model, &p, Some(mask))?;
        num += signal_energy(&full.sub(&cut));
        den += signal_energy(&full);
    }
    Ok(ratio(num, den))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AblationRow {
    pub method: Criterion,
    pub distortion: f64,
    pub remaining: Vec<usize>,
    pub at_floor: Vec<bool>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationReport {
    pub seed: u64,
    pub scale_gap: f64,
    pub ratio: f64,
    pub state_dim: usize,
    pub weak_layers: Vec<usize>,
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn row(&self, method: Criterion) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.method == method)
    }
}

/// Two-layer stack whose layers share one parameter draw, the second layer's
/// readout scaled down by `scale_gap`.
pub fn ablation_config(scale_gap: f64) -> SynthConfig {
    SynthConfig {
        scale_gap,
        replicate: true,
        d_scale: 0.0,
        activation: Activation::Relu,
        ..SynthConfig::new(2, 16, 4)
    }
}

/// Compare UniformHinf, GlobalHinf and LAST on a model with an H∞ scale gap
/// between its layers.
pub fn ablation_scale_mismatch(seed: u64, scale_gap: f64, ratio: f64) -> Result<AblationReport> {
    if scale_gap.is_nan() || scale_gap < 1.0 {
        return Err(Error::InvalidArgument(format!("scale_gap must be at least 1, got {scale_gap}")));
    }
    let cfg = ablation_config(scale_gap);
    let mut rng = trial_rng(seed, 0);
    let model = random_model(&mut rng, &cfg)?;
    let inputs: Vec<Signal> = (0..8).map(|_| white_noise(&mut rng, 256, cfg.channels)).collect();
    let weak = (0..cfg.layers).filter(|&l| cfg.is_weak(l)).collect();
    ablation_compare(&model, &inputs, seed, scale_gap, ratio, weak)
}

/// Scale the readouts of the second half of `model`'s layers down by
/// `scale_gap` and compare the three criteria on it.
pub fn ablation_on(model: &Model, seed: u64, scale_gap: f64, ratio: f64) -> Result<AblationReport> {
    if scale_gap.is_nan() || scale_gap < 1.0 {
        return Err(Error::InvalidArgument(format!("scale_gap must be at least 1, got {scale_gap}")));
    }
    let mut scaled = model.clone();
    let weak: Vec<usize> = (model.layers.len().div_ceil(2)..model.layers.len()).collect();
    let s = C64::new(scale_gap, 0.0);
    for &l in &weak {
        let layer = &mut scaled.layers[l];
        layer.c_fwd /= s;
        if let Some(cb) = layer.c_bwd.as_mut() {
            *cb /= s;
        }
    }
    let mut rng = trial_rng(seed, 0);
    let inputs: Vec<Signal> = (0..8).map(|_| white_noise(&mut rng, 256, model.channels())).collect();
    ablation_compare(&scaled, &inputs, seed, scale_gap, ratio, weak)
}

fn ablation_compare(
    model: &Model,
    inputs: &[Signal],
    seed: u64,
    scale_gap: f64,
    ratio: f64,
    weak_layers: Vec<usize>,
) -> Result<AblationReport> {
    let hinf = score_model(model, ScoreKind::Hinf)?;
    let last = score_model(model, ScoreKind::Last)?;
    let masks = [
        (Criterion::UniformHinf, select_uniform(&hinf, ratio)?),
        (Criterion::GlobalHinf, select_global(&hinf, ratio)?),
        (Criterion::Last, select_global(&last, ratio)?),
    ];
    let mut rows = Vec::new();
    for (method, mask) in masks {
        let remaining = mask.remaining_per_layer();
        let at_floor = model
            .layers
            .iter()
            .zip(&remaining)
            .map(|(dt, &m)| m < dt.order() && m <= floor_size(dt))
            .collect();
        rows.push(AblationRow {
            method,
            distortion: relative_distortion(model, &mask, inputs, VERIFY_MAX_TAIL)?,
            remaining,
            at_floor,
        });
    }
    Ok(AblationReport {
        seed,
        scale_gap,
        ratio,
        state_dim: model.layers.first().map_or(0, DtLayer::order),
        weak_layers,
        rows,
    })
}

fn floor_size(dt: &DtLayer) -> usize {
    dt.units().iter().map(Vec::len).max().unwrap_or(1)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PairedDistortion {
    pub seed: u64,
    pub first: f64,
    pub second: f64,
}

/// Structured (`first`) vs unstructured (`second`) random pruning at a
/// matched parameter budget, averaged over white-noise inputs.
pub fn random_pruning_comparison(seed: u64, ratio: f64) -> Result<PairedDistortion> {
    let mut rng = trial_rng(seed, 1);
    let cfg = SynthConfig::new(2, 16, 4);
    let model = random_model(&mut rng, &cfg)?;
    let inputs: Vec<Signal> = (0..20).map(|_| white_noise(&mut rng, 256, cfg.channels)).collect();
    let structured = select_mask(&model, Criterion::RandomStructured, ratio, Some(seed))?;
    let unstructured = select_mask(&model, Criterion::RandomUnstructured, ratio, Some(seed))?;
    Ok(PairedDistortion {
        seed,
        first: relative_distortion(&model, &structured, &inputs, VERIFY_MAX_TAIL)?,
        second: relative_distortion(&model, &unstructured, &inputs, VERIFY_MAX_TAIL)?,
    })
}

/// Layer mixing slow poles (`|λ̄| ≈ 1 - 1e-3`) with weak readouts and fast
/// poles (`|λ̄| ∈ [0.1, 0.5]`) with unit-scale readouts. Magnitude scores rank
/// the slow states lowest even though they carry the larger gains.
pub fn separation_model(seed: u64, h: usize) -> Result<Model> {
    let mut rng = trial_rng(seed, 2);
    let slow = random_dt_layer(&mut rng, 8, h, (1.0 - 1.2e-3, 1.0 - 0.8e-3), 0.1);
    let fast = random_dt_layer(&mut rng, 8, h, (0.1, 0.5), 1.0);
    Model::new(vec![stack_states(&[slow, fast])?], Activation::Relu)
}

/// H∞-based (`first`) vs magnitude-based (`second`) uniform pruning.
pub fn criterion_separation(seed: u64, ratio: f64) -> Result<PairedDistortion> {
    let model = separation_model(seed, 2)?;
    let mut rng = trial_rng(seed, 3);
    let inputs: Vec<Signal> = (0..20).map(|_| white_noise(&mut rng, 1024, 2)).collect();
    let by_hinf = select_mask(&model, Criterion::UniformHinf, ratio, None)?;
    let by_mag = select_mask(&model, Criterion::UniformMagnitude, ratio, None)?;
    Ok(PairedDistortion {
        seed,
        first: relative_distortion(&model, &by_hinf, &inputs, 16_384)?,
        second: relative_distortion(&model, &by_mag, &inputs, 16_384)?,
    })
}

// ---------------------------------------------------------------------------
// Randomized suites

/// One row of the layer suite: an order-8 layer with its weakest conjugate
/// pair removed, probed by one input.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LayerSuiteRow {
    pub trial: u64,
    pub layer: usize,
    pub input_id: usize,
    pub probe: ProbeKind,
    pub pruned: String,
    pub energy_in: f64,
    pub output_energy: f64,
    pub gain_bound: f64,
    pub distortion: f64,
    pub bound: f64,
    pub ratio: f64,
    /// `(Σ ‖G_i‖∞)² ‖u‖²`, which also covers the cross terms between
    /// pruned states.
    pub triangle_bound: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SuiteConfig {
    pub state_dim: usize,
    pub channels: usize,
    pub noise_inputs: usize,
    pub input_len: usize,
    pub activation: Activation,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig { state_dim: 8, channels: 2, noise_inputs: 48, input_len: 256, activation: Activation::Relu }
    }
}

/// Remove the weakest conjugate pair of `dt` and probe it with `rng`.
pub fn layer_trial(
    dt: &DtLayer,
    layer: usize,
    trial: u64,
    rng: &mut ChaCha8Rng,
    cfg: &SuiteConfig,
) -> Result<Vec<LayerSuiteRow>> {
    let scores = hinf_scores(dt)?;
    let units = dt.units();
    let weakest = units
        .iter()
        .min_by(|a, b| scores[a[0]].total_cmp(&scores[b[0]]).then(a[0].cmp(&b[0])))
        .cloned()
        .unwrap_or_default();
    let probes = probe_set(rng, dt, &weakest, cfg.noise_inputs, cfg.input_len, VERIFY_MAX_TAIL)?;
    let signals: Vec<Signal> = probes.iter().map(|p| p.signal.clone()).collect();
    let report = layer_bound_report(dt, &weakest, &signals, cfg.activation)?;
    let norm = layer_hinf(dt, None)?.value;
    let triangle_gain = lipschitz(cfg.activation).powi(2)
        * weakest.iter().map(|&i| subsystem_hinf(dt, i)).sum::<Result<f64>>()?.powi(2);
    let r = dt.max_pole_modulus();
    let pruned = weakest.iter().map(usize::to_string).collect::<Vec<_>>().join(" ");
    probes
        .iter()
        .zip(&report.per_input)
        .enumerate()
        .map(|(k, (p, d))| {
            let y = crate::simulate::run_recursion(dt, &padded(&p.signal, r, VERIFY_MAX_TAIL), None)?;
            Ok(LayerSuiteRow {
                trial,
                layer,
                input_id: k,
                probe: p.kind,
                pruned: pruned.clone(),
                energy_in: d.energy_in,
                output_energy: signal_energy(&y),
                gain_bound: norm * norm * d.energy_in,
                distortion: d.distortion,
                bound: d.bound,
                ratio: d.ratio,
                triangle_bound: triangle_gain * d.energy_in,
            })
        })
        .collect()
}

/// Fresh random order-`state_dim` layer per trial.
pub fn layer_suite_trial(seed: u64, trial: u64, cfg: &SuiteConfig) -> Result<Vec<LayerSuiteRow>> {
    let mut rng = trial_rng(seed, trial);
    let synth = SynthConfig::new(1, cfg.state_dim, cfg.channels);
    let model = random_model(&mut rng, &synth)?;
    layer_trial(&model.layers[0], 0, trial, &mut rng, cfg)
}

/// Trials cycle through the layers of a given model.
pub fn layer_suite_on(model: &Model, seed: u64, trials: u64, cfg: &SuiteConfig) -> Result<Vec<LayerSuiteRow>> {
    if model.layers.is_empty() {
        return Ok(Vec::new());
    }
    let cfg = SuiteConfig { activation: model.activation, ..*cfg };
    let rows: Vec<Result<Vec<LayerSuiteRow>>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let l = (t % model.layers.len() as u64) as usize;
            layer_trial(&model.layers[l], l, t, &mut trial_rng(seed, t), &cfg)
        })
        .collect();
    Ok(rows.into_iter().collect::<Result<Vec<_>>>()?.into_iter().flatten().collect())
}

pub fn layer_suite(seed: u64, trials: u64, cfg: &SuiteConfig) -> Result<Vec<LayerSuiteRow>> {
    let rows: Vec<Result<Vec<LayerSuiteRow>>> =
        (0..trials).into_par_iter().map(|t| layer_suite_trial(seed, t, cfg)).collect();
    Ok(rows.into_iter().collect::<Result<Vec<_>>>()?.into_iter().flatten().collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelSuiteRow {
    pub trial: u64,
    pub mask: String,
    pub layer: Option<usize>,
    pub state: Option<usize>,
    pub measured: f64,
    pub bound: f64,
    pub ratio: f64,
    pub triangle_bound: Option<f64>,
    pub eq8_ratio: Option<f64>,
    pub last_score: Option<f64>,
}

/// One random single-state mask in the middle layer and one LAST mask at
/// ratio 0.25, each probed with noise, an impulse and a peak sinusoid.
pub fn model_trial(model: &Model, seed: u64, trial: u64, rng: &mut ChaCha8Rng, cfg: &SuiteConfig) -> Result<Vec<ModelSuiteRow>> {
    use rand::Rng;
    let h = model.channels();
    let mut inputs: Vec<Signal> =
        (0..cfg.noise_inputs.min(6)).map(|_| white_noise(rng, cfg.input_len, h)).collect();
    inputs.push(Signal::impulse(cfg.input_len, h, 0));
    let first = &model.layers[0];
    let (theta, v) = worst_direction(first, &(0..first.order()).collect::<Vec<_>>())?;
    inputs.push(phased_sinusoid(cfg.input_len * 4, theta, &v));

    let mid = model.layers.len() / 2;
    let state = rng.random_range(0..model.layers[mid].order());
    let plan = crate::pruning::PrunePlan { criterion: Criterion::Last, ratio: 0.0, seed: Some(seed) };
    let mut single = PruneMask::all_keep(model, plan);
    single.layers[mid].keep[state] = false;
    let multi = select_mask(model, Criterion::Last, 0.25, None)?;
    let mut rows = Vec::new();
    for (name, mask) in [("single", &single), ("multi", &multi)] {
        let report = model_bound_report(model, mask, &inputs)?;
        rows.extend(report.steps.iter().map(|s| ModelSuiteRow {
            trial,
            mask: name.into(),
            layer: Some(s.layer),
            state: Some(s.state),
            measured: s.measured,
            bound: s.bound,
            ratio: s.ratio,
            triangle_bound: None,
            eq8_ratio: Some(s.eq8_ratio),
            last_score: Some(s.last_score),
        }));
        rows.push(ModelSuiteRow {
            trial,
            mask: name.into(),
            layer: None,
            state: None,
            measured: report.total.measured,
            bound: report.total.summed_bound,
            ratio: report.total.summed_ratio,
            triangle_bound: Some(report.total.triangle_bound),
            eq8_ratio: None,
            last_score: None,
        });
    }
    Ok(rows)
}

/// Fresh random three-layer model per trial.
pub fn model_suite_trial(seed: u64, trial: u64, cfg: &SuiteConfig) -> Result<Vec<ModelSuiteRow>> {
    let mut rng = trial_rng(seed, trial);
    let synth = SynthConfig { activation: cfg.activation, ..SynthConfig::new(3, cfg.state_dim, cfg.channels) };
    let model = random_model(&mut rng, &synth)?;
    model_trial(&model, seed, trial, &mut rng, cfg)
}

pub fn model_suite_on(model: &Model, seed: u64, trials: u64, cfg: &SuiteConfig) -> Result<Vec<ModelSuiteRow>> {
    let rows: Vec<Result<Vec<ModelSuiteRow>>> = (0..trials)
        .into_par_iter()
        .map(|t| model_trial(model, seed, t, &mut trial_rng(seed, t), cfg))
        .collect();
    Ok(rows.into_iter().collect::<Result<Vec<_>>>()?.into_iter().flatten().collect())
}

pub fn model_suite(seed: u64, trials: u64, cfg: &SuiteConfig) -> Result<Vec<ModelSuiteRow>> {
    let rows: Vec<Result<Vec<ModelSuiteRow>>> =
        (0..trials).into_par_iter().map(|t| model_suite_trial(seed, t, cfg)).collect();
    Ok(rows.into_iter().collect::<Result<Vec<_>>>()?.into_iter().flatten().collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AblationSuiteRow {
    pub seed: u64,
    pub method: Criterion,
    pub layer: usize,
    pub remaining: usize,
    pub at_floor: bool,
    pub distortion: f64,
}

fn ablation_rows(reports: Vec<Result<AblationReport>>) -> Result<Vec<AblationSuiteRow>> {
    let mut rows = Vec::new();
    for rep in reports {
        let rep = rep?;
        for row in &rep.rows {
            for (l, (&m, &f)) in row.remaining.iter().zip(&row.at_floor).enumerate() {
                rows.push(AblationSuiteRow {
                    seed: rep.seed,
                    method: row.method,
                    layer: l,
                    remaining: m,
                    at_floor: f,
                    distortion: row.distortion,
                });
            }
        }
    }
    Ok(rows)
}

/// Fresh synthetic scale-gap model per trial, seeds `seed..seed + trials`.
pub fn ablation_suite(seed: u64, trials: u64, scale_gap: f64, ratio: f64) -> Result<Vec<AblationSuiteRow>> {
    ablation_rows(
        (0..trials)
            .into_par_iter()
            .map(|t| ablation_scale_mismatch(seed.wrapping_add(t), scale_gap, ratio))
            .collect(),
    )
}

/// The given model with its later layers weakened; trials vary the inputs.
pub fn ablation_suite_on(model: &Model, seed: u64, trials: u64, scale_gap: f64, ratio: f64) -> Result<Vec<AblationSuiteRow>> {
    ablation_rows(
        (0..trials)
            .into_par_iter()
            .map(|t| ablation_on(model, seed.wrapping_add(t), scale_gap, ratio))
            .collect(),
    )
}

/// `Σ_{i} ‖G_i‖²∞ Π_{k≠l} M_k²` over the pruned states of `mask`, with
/// `M_k` the larger of layer `k`'s full and pruned norms. Multiply by the
/// input energy to get the summed model-level bound.
pub fn mask_bound_gain(model: &Model, mask: &PruneMask) -> Result<f64> {
    if mask.layers.len() != model.layers.len() {
        return Err(Error::DimensionMismatch("mask and model differ in layer count".into()));
    }
    let mut norms = Vec::with_capacity(model.layers.len());
    for (dt, lm) in model.layers.iter().zip(&mask.layers) {
        let full = layer_hinf(dt, None)?.value;
        let cut = layer_hinf(dt, Some(&lm.keep))?.value;
        norms.push(full.max(cut));
    }
    let lip_sq = lipschitz(model.activation).powi(2 * model.layers.len() as i32);
    let mut gain = 0.0;
    for (l, lm) in mask.layers.iter().enumerate() {
        let others: f64 = norms.iter().enumerate().filter(|(k, _)| *k != l).map(|(_, m)| m * m).product();
        for i in lm.pruned_indices() {
            let g = subsystem_hinf(&model.layers[l], i)?;
            gain += lip_sq * g * g * others;
        }
    }
    Ok(gain)
}

/// Masked and compacted pruning of the same model, compared sample by sample.
/// Returns the largest difference relative to the largest output magnitude.
pub fn masked_compacted_gap(model: &Model, mask: &PruneMask, inputs: &[Signal]) -> Result<f64> {
    let masked = prune_model(model, mask, MaskMode::Masked)?.model;
    let compact = prune_model(model, mask, MaskMode::Compacted)?.model;
    let mut worst = 0.0f64;
    for u in inputs {
        let a = model_forward(&masked, u, None)?;
        let b = model_forward(&compact, u, None)?;
        let scale = a.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let diff = a.data().iter().zip(b.data()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        worst = worst.max(if scale > 0.0 { diff / scale } else { diff });
    }
    Ok(worst)
}
