//! Command-line surface. Every command is a pure function of its flags and
//! input files; [`run`] returns what should go to stdout.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::discretize::{check_dt_stability, rescale_model};
use crate::error::{Error, Result};
use crate::io::{
    load_checkpoint, load_ct_model, read_signal, save_ct_model, save_pruned_model, signal_files, write_csv,
    Checkpoint, DistortionRow, PruningRecord, ScoreRow,
};
use crate::layer::{Activation, Model};
use crate::norms::{layer_hinf, signal_energy, DEFAULT_MAX_TAIL, DECAY_TOL};
use crate::pruning::{prune_model, score_model, select_mask, Criterion, MaskMode, ScoreKind, ScoreWarning};
use crate::simulate::{decay_padding, frequency_response, model_forward, FreqGrid, Signal};
use crate::synth::{random_ct_model, white_noise, SynthConfig};
use crate::verify::{
    ablation_suite, ablation_suite_on, layer_suite, layer_suite_on, mask_bound_gain, model_suite, model_suite_on,
    SuiteConfig,
};

#[derive(Debug, Parser)]
#[command(name = "ssm-prune", version, about = "State pruning for diagonal deep state space models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ScoreArg {
    Hinf,
    Last,
    Magnitude,
    Lamp,
}

impl From<ScoreArg> for ScoreKind {
    fn from(a: ScoreArg) -> Self {
        match a {
            ScoreArg::Hinf => ScoreKind::Hinf,
            ScoreArg::Last => ScoreKind::Last,
            ScoreArg::Magnitude => ScoreKind::Magnitude,
            ScoreArg::Lamp => ScoreKind::Lamp,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Masked,
    Compacted,
}

impl From<ModeArg> for MaskMode {
    fn from(a: ModeArg) -> Self {
        match a {
            ModeArg::Masked => MaskMode::Masked,
            ModeArg::Compacted => MaskMode::Compacted,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Layer,
    Model,
    Ablation,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Dimensions, stability margins and H∞ summaries per layer.
    Inspect { model: PathBuf },
    /// Per-state scores as CSV.
    Score {
        model: PathBuf,
        #[arg(long, value_enum)]
        criterion: ScoreArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Select a mask and write the pruned model plus the mask as JSON.
    Prune {
        model: PathBuf,
        /// uniform-hinf, global-hinf, last, uniform-magnitude,
        /// global-magnitude, lamp, random-structured or random-unstructured
        #[arg(long)]
        criterion: Criterion,
        #[arg(long, allow_negative_numbers = true)]
        ratio: f64,
        #[arg(long, value_enum, default_value = "masked")]
        mode: ModeArg,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Defaults to `<out>.mask.json` next to the model.
        #[arg(long)]
        mask_out: Option<PathBuf>,
    },
    /// Output distortion between a full and a pruned model.
    EvalDistortion {
        full: PathBuf,
        pruned: PathBuf,
        /// A directory of .csv/.bin signals, or gen:noise:COUNT:LEN[:SEED],
        /// gen:impulse:LEN, gen:sine:LEN:THETA
        #[arg(long)]
        signals: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Empirical bound checks on random or given models.
    VerifyBounds {
        model: Option<PathBuf>,
        #[arg(long, value_enum)]
        suite: Suite,
        #[arg(long, default_value_t = 100)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Readout scale gap for the ablation suite.
        #[arg(long, default_value_t = 1e3)]
        scale_gap: f64,
        /// Pruning ratio for the ablation suite.
        #[arg(long, default_value_t = 0.5)]
        ratio: f64,
    },
    /// Frequency response of one layer's state part on a uniform grid.
    Freqresp {
        model: PathBuf,
        #[arg(long)]
        layer: usize,
        #[arg(long)]
        grid: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Random continuous-time checkpoint.
    GenSynthetic {
        #[arg(long)]
        layers: usize,
        #[arg(long)]
        state_dim: usize,
        #[arg(long)]
        channels: usize,
        #[arg(long)]
        seed: u64,
        /// Divide the readouts of the second half of the layers by this.
        #[arg(long)]
        scale_gap: Option<f64>,
        #[arg(long, default_value = "relu")]
        activation: Activation,
        #[arg(long)]
        bidirectional: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Scale every continuous-time step size by `rate_ratio`.
    Rescale {
        model: PathBuf,
        #[arg(long, allow_negative_numbers = true)]
        rate_ratio: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

pub fn run(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Inspect { model } => inspect(&model),
        Command::Score { model, criterion, out } => score(&model, criterion.into(), &out),
        Command::Prune { model, criterion, ratio, mode, seed, out, mask_out } => {
            let mask_out = mask_out.unwrap_or_else(|| default_mask_path(&out));
            prune(&model, criterion, ratio, mode.into(), seed, &out, &mask_out)
        }
        Command::EvalDistortion { full, pruned, signals, out } => eval_distortion(&full, &pruned, &signals, &out),
        Command::VerifyBounds { model, suite, trials, seed, out, scale_gap, ratio } => {
            verify_bounds(model.as_deref(), suite, trials, seed, &out, scale_gap, ratio)
        }
        Command::Freqresp { model, layer, grid, out } => freqresp(&model, layer, grid, &out),
        Command::GenSynthetic { layers, state_dim, channels, seed, scale_gap, activation, bidirectional, out } => {
            let cfg = SynthConfig {
                activation,
                bidirectional,
                scale_gap: scale_gap.unwrap_or(1.0),
                ..SynthConfig::new(layers, state_dim, channels)
            };
            gen_synthetic(&cfg, seed, &out)
        }
        Command::Rescale { model, rate_ratio, out } => rescale(&model, rate_ratio, &out),
    }
}

/// `{"error": {"kind", "message", "violations"?}}` for stderr.
pub fn error_json(e: &Error) -> Value {
    let mut body = json!({ "kind": e.kind(), "message": e.to_string() });
    if let Error::ValidationFailed(report) = e {
        body["violations"] = serde_json::to_value(&report.violations).unwrap_or(Value::Null);
    }
    json!({ "error": body })
}

pub fn usage_error_json(message: &str) -> Value {
    json!({ "error": { "kind": "Usage", "message": message.trim_end() } })
}

fn pretty(v: &impl Serialize) -> Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

fn default_mask_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map_or_else(|| "model".into(), |s| s.to_string_lossy().into_owned());
    out.with_file_name(format!("{stem}.mask.json"))
}

fn load(path: &Path) -> Result<(Model, Option<PruningRecord>, bool)> {
    let (ck, record) = load_checkpoint(path)?;
    let continuous = matches!(ck, Checkpoint::Continuous(_));
    Ok((ck.into_model()?, record, continuous))
}

#[derive(Serialize)]
struct Spread {
    min: f64,
    median: f64,
    max: f64,
    sum: f64,
}

impl Spread {
    fn of(values: &[f64]) -> Self {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let median = match v.len() {
            0 => 0.0,
            n if n % 2 == 1 => v[n / 2],
            n => 0.5 * (v[n / 2 - 1] + v[n / 2]),
        };
        Spread { min: v.first().copied().unwrap_or(0.0), median, max: v.last().copied().unwrap_or(0.0), sum: v.iter().sum() }
    }
}

fn inspect(path: &Path) -> Result<String> {
    let (model, record, continuous) = load(path)?;
    let hinf = score_model(&model, ScoreKind::Hinf)?;
    let mut layers = Vec::new();
    for (l, (dt, s)) in model.layers.iter().zip(&hinf.layers).enumerate() {
        let norm = layer_hinf(dt, None)?;
        layers.push(json!({
            "layer": l,
            "order": dt.order(),
            "channels": dt.channels(),
            "arch": match dt.arch {
                crate::layer::Arch::Mimo => "MIMO".to_string(),
                crate::layer::Arch::MultiSiso { n_s, h } => format!("MultiSISO(n_s={n_s}, h={h})"),
            },
            "bidirectional": dt.is_bidirectional(),
            "b_fixed": dt.b_fixed,
            "conj_pairs": dt.conj_pairs.as_ref().map_or(0, Vec::len),
            "max_pole_modulus": dt.max_pole_modulus(),
            "min_stability_margin": check_dt_stability(dt).min_margin(),
            "hinf_sq": Spread::of(&s.hinf_sq),
            "layer_hinf": norm.value,
            "layer_hinf_theta": norm.theta,
        }));
    }
    let mut out = json!({
        "time_domain": if continuous { "continuous" } else { "discrete" },
        "activation": model.activation.as_str(),
        "layers_count": model.layers.len(),
        "channels": model.channels(),
        "total_states": model.total_states(),
        "layers": layers,
    });
    if let Some(r) = record {
        out["pruning"] = json!({
            "criterion": r.mask.plan.criterion.as_str(),
            "ratio": r.mask.plan.ratio,
            "mode": r.mode,
            "pruned_states": r.mask.pruned_states(),
            "surviving_indices": r.surviving_indices,
        });
    }
    pretty(&out)
}

fn warnings_json(ws: &[ScoreWarning]) -> Vec<Value> {
    ws.iter()
        .map(|w| match w {
            ScoreWarning::DegenerateLayer { layer, kind } => {
                json!({ "kind": "DegenerateLayer", "layer": layer, "score": kind.as_str() })
            }
        })
        .collect()
}

fn score(path: &Path, kind: ScoreKind, out: &Path) -> Result<String> {
    let (model, _, _) = load(path)?;
    let table = score_model(&model, kind)?;
    let last = if kind == ScoreKind::Last { None } else { Some(score_model(&model, ScoreKind::Last)?) };
    let mut rows = Vec::with_capacity(model.total_states());
    for (l, s) in table.layers.iter().enumerate() {
        let pos = s.rank_positions(kind);
        let last_vals = last.as_ref().map_or(&s.last, |t| &t.layers[l].last);
        rows.extend((0..s.order()).map(|i| ScoreRow {
            layer: l,
            state: i,
            hinf_sq: s.hinf_sq[i],
            last: last_vals[i],
            rank: pos[i],
            score: s.values(kind)[i],
        }));
    }
    write_csv(&rows, out)?;
    pretty(&json!({
        "criterion": kind.as_str(),
        "rows": rows.len(),
        "out": out.display().to_string(),
        "warnings": warnings_json(&table.warnings),
    }))
}

fn prune(
    path: &Path,
    criterion: Criterion,
    ratio: f64,
    mode: MaskMode,
    seed: Option<u64>,
    out: &Path,
    mask_out: &Path,
) -> Result<String> {
    let (model, _, _) = load(path)?;
    let mask = select_mask(&model, criterion, ratio, seed)?;
    let pruned = prune_model(&model, &mask, mode)?;
    let record = PruningRecord { mode, mask: mask.clone(), surviving_indices: pruned.surviving.clone() };
    save_pruned_model(&pruned.model, record, out)?;
    std::fs::write(mask_out, pretty(&mask)?)?;
    let reported = if criterion.is_layer_adaptive() { mask.average_layer_ratio() } else { mask.global_ratio() };
    let elements: usize = mask.layers.iter().filter_map(|l| l.elements.as_ref()).map(|e| e.pruned_count()).sum();
    pretty(&json!({
        "criterion": criterion.as_str(),
        "target_ratio": ratio,
        "reported_ratio": reported,
        "global_ratio": mask.global_ratio(),
        "average_layer_ratio": mask.average_layer_ratio(),
        "pruned_states": mask.pruned_states(),
        "pruned_elements": elements,
        "remaining_per_layer": mask.remaining_per_layer(),
        "mode": mode,
        "out": out.display().to_string(),
        "mask_out": mask_out.display().to_string(),
    }))
}

fn parse_field<T: std::str::FromStr>(spec: &str, field: &str) -> Result<T> {
    field
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("bad field {field:?} in signal spec {spec:?}")))
}

/// Signals named by `spec`, each with an id for the report.
pub fn resolve_signals(spec: &str, channels: usize) -> Result<Vec<(String, Signal)>> {
    let Some(rest) = spec.strip_prefix("gen:") else {
        let files = signal_files(spec)?;
        return files
            .into_iter()
            .map(|p| {
                let id = p.file_name().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
                let u = read_signal(&p)?;
                if u.channels() != channels {
                    return Err(Error::ChannelMismatch { expected: channels, found: u.channels() });
                }
                Ok((id, u))
            })
            .collect();
    };
    let parts: Vec<&str> = rest.split(':').collect();
    match parts.as_slice() {
        ["noise", count, len, seed @ ..] if seed.len() <= 1 => {
            let count: usize = parse_field(spec, count)?;
            let len: usize = parse_field(spec, len)?;
            let seed: u64 = seed.first().map_or(Ok(0), |s| parse_field(spec, s))?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Ok((0..count).map(|k| (format!("noise-{k}"), white_noise(&mut rng, len, channels))).collect())
        }
        ["impulse", len] => {
            let len: usize = parse_field(spec, len)?;
            Ok((0..channels).map(|c| (format!("impulse-{c}"), Signal::impulse(len, channels, c))).collect())
        }
        ["sine", len, theta] => {
            let len: usize = parse_field(spec, len)?;
            let theta: f64 = parse_field(spec, theta)?;
            let dir = vec![1.0 / (channels as f64).sqrt(); channels];
            Ok(vec![(format!("sine-{theta}"), crate::synth::sinusoid(len, theta, &dir))])
        }
        _ => Err(Error::InvalidArgument(format!("unrecognized signal spec {spec:?}"))),
    }
}

fn eval_distortion(full_path: &Path, pruned_path: &Path, signals: &str, out: &Path) -> Result<String> {
    let (full, _, _) = load(full_path)?;
    let (pruned, record, _) = load(pruned_path)?;
    if full.channels() != pruned.channels() {
        return Err(Error::ChannelMismatch { expected: full.channels(), found: pruned.channels() });
    }
    let gain = match &record {
        Some(r) if r.mask.layers.iter().all(|l| l.elements.is_none()) => Some(mask_bound_gain(&full, &r.mask)?),
        _ => None,
    };
    let r = full.layers.iter().chain(&pruned.layers).map(|l| l.max_pole_modulus()).fold(0.0, f64::max);
    let tail = decay_padding(r, DECAY_TOL, DEFAULT_MAX_TAIL);
    let mut rows = Vec::new();
    for (id, u) in resolve_signals(signals, full.channels())? {
        let p = u.zero_padded(tail);
        let yf = model_forward(&full, &p, None)?;
        let yp = model_forward(&pruned, &p, None)?;
        let distortion = signal_energy(&yf.sub(&yp));
        let bound = gain.map(|g| g * signal_energy(&u));
        rows.push(DistortionRow {
            input_id: id,
            energy_full: signal_energy(&yf),
            energy_pruned: signal_energy(&yp),
            distortion,
            bound,
            ratio: bound.map(|b| crate::verify::ratio(distortion, b)),
        });
    }
    write_csv(&rows, out)?;
    let worst = rows.iter().filter_map(|r| r.ratio).fold(0.0, f64::max);
    pretty(&json!({
        "signals": rows.len(),
        "bound_available": gain.is_some(),
        "max_ratio": gain.map(|_| worst),
        "out": out.display().to_string(),
    }))
}

fn verify_bounds(
    model: Option<&Path>,
    suite: Suite,
    trials: u64,
    seed: u64,
    out: &Path,
    scale_gap: f64,
    ratio: f64,
) -> Result<String> {
    let model = model.map(load).transpose()?.map(|(m, _, _)| m);
    let cfg = SuiteConfig::default();
    let (rows, worst, violations) = match suite {
        Suite::Layer => {
            let rows = match &model {
                Some(m) => layer_suite_on(m, seed, trials, &cfg)?,
                None => layer_suite(seed, trials, &cfg)?,
            };
            write_csv(&rows, out)?;
            let worst = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
            let v = rows.iter().filter(|r| r.distortion > r.bound * (1.0 + crate::verify::BOUND_REL_TOL)).count();
            (rows.len(), Some(worst), Some(v))
        }
        Suite::Model => {
            let rows = match &model {
                Some(m) => model_suite_on(m, seed, trials, &cfg)?,
                None => model_suite(seed, trials, &cfg)?,
            };
            write_csv(&rows, out)?;
            let worst = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
            let v = rows.iter().filter(|r| r.measured > r.bound * (1.0 + crate::verify::BOUND_REL_TOL)).count();
            (rows.len(), Some(worst), Some(v))
        }
        Suite::Ablation => {
            let rows = match &model {
                Some(m) => ablation_suite_on(m, seed, trials, scale_gap, ratio)?,
                None => ablation_suite(seed, trials, scale_gap, ratio)?,
            };
            write_csv(&rows, out)?;
            let mut mean: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
            for r in rows.iter().filter(|r| r.layer == 0) {
                let e = mean.entry(r.method.as_str()).or_default();
                e.0 += r.distortion;
                e.1 += 1;
            }
            let summary: BTreeMap<&str, f64> = mean.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect();
            write_summary(out, &summary)?;
            (rows.len(), None, None)
        }
    };
    pretty(&json!({
        "suite": format!("{suite:?}").to_lowercase(),
        "trials": trials,
        "seed": seed,
        "rows": rows,
        "max_ratio": worst,
        "violations": violations,
        "out": out.display().to_string(),
    }))
}

fn write_summary(out: &Path, summary: &BTreeMap<&str, f64>) -> Result<()> {
    let path = out.with_extension("summary.json");
    std::fs::write(path, pretty(&json!({ "mean_relative_distortion": summary }))?)?;
    Ok(())
}

fn freqresp(path: &Path, layer: usize, grid: usize, out: &Path) -> Result<String> {
    let (model, _, _) = load(path)?;
    let dt = model
        .layers
        .get(layer)
        .ok_or_else(|| Error::InvalidArgument(format!("layer {layer} out of range (model has {})", model.layers.len())))?;
    if grid == 0 {
        return Err(Error::InvalidArgument("grid must be positive".into()));
    }
    let grid = FreqGrid::uniform(grid);
    let all: Vec<usize> = (0..dt.order()).collect();
    let responses = frequency_response(dt, &all, &grid);
    let h = dt.channels();
    let mut w = csv::Writer::from_path(out)?;
    let mut header = vec!["theta".to_string(), "sigma_max".to_string()];
    for r in 0..h {
        for c in 0..h {
            header.push(format!("g_{r}_{c}_re"));
            header.push(format!("g_{r}_{c}_im"));
        }
    }
    w.write_record(&header)?;
    for (theta, g) in grid.thetas().iter().zip(&responses) {
        let mut rec = vec![theta.to_string(), crate::norms::sigma_max(g).to_string()];
        for r in 0..h {
            for c in 0..h {
                rec.push(g[(r, c)].re.to_string());
                rec.push(g[(r, c)].im.to_string());
            }
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    pretty(&json!({ "layer": layer, "points": responses.len(), "out": out.display().to_string() }))
}

fn gen_synthetic(cfg: &SynthConfig, seed: u64, out: &Path) -> Result<String> {
    if cfg.scale_gap.is_nan() || cfg.scale_gap < 1.0 {
        return Err(Error::InvalidArgument(format!("scale gap must be at least 1, got {}", cfg.scale_gap)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = random_ct_model(&mut rng, cfg)?;
    model.meta.insert("generator".into(), "synthetic".into());
    model.meta.insert("seed".into(), seed.to_string());
    model.meta.insert("scale_gap".into(), cfg.scale_gap.to_string());
    save_ct_model(&model, out)?;
    pretty(&json!({
        "layers": cfg.layers,
        "state_dim": cfg.state_dim,
        "channels": cfg.channels,
        "seed": seed,
        "out": out.display().to_string(),
    }))
}

fn rescale(path: &Path, rate_ratio: f64, out: &Path) -> Result<String> {
    let model = load_ct_model(path)?;
    let mut scaled = rescale_model(&model, rate_ratio)?;
    let prior = scaled.meta.get("rate_ratio").and_then(|s| s.parse::<f64>().ok()).unwrap_or(1.0);
    scaled.meta.insert("rate_ratio".into(), (prior * rate_ratio).to_string());
    save_ct_model(&scaled, out)?;
    pretty(&json!({ "rate_ratio": rate_ratio, "out": out.display().to_string() }))
}
