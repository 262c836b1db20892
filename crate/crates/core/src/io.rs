//! Checkpoint JSON, signal files and report CSVs.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::discretize::discretize_model;
use crate::error::{Error, Result};
use crate::layer::{Activation, Arch, CtLayer, CtModel, DtLayer, Model, Validate, ValidationReport, C64};
use crate::pruning::{MaskMode, PruneMask};
use crate::simulate::Signal;

pub const SCHEMA_VERSION: &str = "1.0";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Architecture {
    #[serde(rename = "MIMO")]
    Mimo,
    #[serde(rename = "MultiSISO")]
    MultiSiso,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeDomain {
    Continuous,
    Discrete,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Flags {
    pub b_fixed: bool,
    pub bidirectional: bool,
    pub conj_paired: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerArch {
    Mimo,
    MultiSiso { n_s: usize, h: usize },
}

impl From<Arch> for LayerArch {
    fn from(a: Arch) -> Self {
        match a {
            Arch::Mimo => LayerArch::Mimo,
            Arch::MultiSiso { n_s, h } => LayerArch::MultiSiso { n_s, h },
        }
    }
}

impl From<LayerArch> for Arch {
    fn from(a: LayerArch) -> Self {
        match a {
            LayerArch::Mimo => Arch::Mimo,
            LayerArch::MultiSiso { n_s, h } => Arch::MultiSiso { n_s, h },
        }
    }
}

type Rows<T> = Vec<Vec<T>>;

/// One serialized layer. Continuous-time files use `lambda`, `b` and
/// `delta`; discrete-time files use `lambda_bar` and `b_bar`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<Vec<C64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_bar: Option<Vec<C64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Rows<C64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_bar: Option<Rows<C64>>,
    pub c_fwd: Rows<C64>,
    #[serde(default)]
    pub c_bwd: Option<Rows<C64>>,
    pub d: Rows<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<Vec<f64>>,
    #[serde(default)]
    pub b_fixed: bool,
    pub arch: LayerArch,
    #[serde(default)]
    pub conj_pairs: Option<Vec<(usize, usize)>>,
}

/// How a pruned model was produced, so reports can map states back to the
/// original indices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PruningRecord {
    pub mode: MaskMode,
    pub mask: PruneMask,
    pub surviving_indices: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointFile {
    pub schema_version: String,
    pub architecture: Architecture,
    pub time_domain: TimeDomain,
    pub activation: Activation,
    pub flags: Flags,
    #[serde(default)]
    pub provenance: BTreeMap<String, String>,
    pub layers: Vec<LayerRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pruning: Option<PruningRecord>,
}

/// A loaded checkpoint in whichever time domain it was stored.
#[derive(Clone, Debug, PartialEq)]
pub enum Checkpoint {
    Continuous(CtModel),
    Discrete(Model),
}

impl Checkpoint {
    /// Discrete-time model, discretizing continuous-time checkpoints.
    pub fn into_model(self) -> Result<Model> {
        match self {
            Checkpoint::Continuous(ct) => discretize_model(&ct),
            Checkpoint::Discrete(m) => Ok(m),
        }
    }
}

fn rows_of<T: Clone + nalgebra::Scalar>(m: &DMatrix<T>) -> Rows<T> {
    (0..m.nrows()).map(|r| m.row(r).iter().cloned().collect()).collect()
}

fn matrix_of<T: Clone + nalgebra::Scalar>(rows: &Rows<T>, nrows: usize, ncols: usize, what: &str) -> Result<DMatrix<T>> {
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::DimensionMismatch(format!("{what} is not {nrows} x {ncols}")));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |r, c| rows[r][c].clone()))
}

fn architecture_of(archs: impl Iterator<Item = Arch>) -> Architecture {
    let mut any = false;
    for a in archs {
        any = true;
        if a == Arch::Mimo {
            return Architecture::Mimo;
        }
    }
    if any {
        Architecture::MultiSiso
    } else {
        Architecture::Mimo
    }
}

fn dt_record(l: &DtLayer) -> LayerRecord {
    LayerRecord {
        lambda: None,
        lambda_bar: Some(l.lambda_bar.clone()),
        b: None,
        b_bar: Some(rows_of(&l.b_bar)),
        c_fwd: rows_of(&l.c_fwd),
        c_bwd: l.c_bwd.as_ref().map(rows_of),
        d: rows_of(&l.d),
        delta: None,
        b_fixed: l.b_fixed,
        arch: l.arch.into(),
        conj_pairs: l.conj_pairs.clone(),
    }
}

fn ct_record(l: &CtLayer) -> LayerRecord {
    LayerRecord {
        lambda: Some(l.lambda.clone()),
        lambda_bar: None,
        b: Some(rows_of(&l.b)),
        b_bar: None,
        c_fwd: rows_of(&l.c_fwd),
        c_bwd: l.c_bwd.as_ref().map(rows_of),
        d: rows_of(&l.d),
        delta: Some(l.delta.clone()),
        b_fixed: l.b_fixed,
        arch: l.arch.into(),
        conj_pairs: l.conj_pairs.clone(),
    }
}

fn flags_of<'a>(
    mut b_fixed: impl Iterator<Item = bool>,
    mut bidir: impl Iterator<Item = bool>,
    pairs: impl Iterator<Item = &'a Option<Vec<(usize, usize)>>>,
) -> Flags {
    let mut p = pairs.peekable();
    let has_layers = p.peek().is_some();
    Flags {
        b_fixed: b_fixed.any(|b| b),
        bidirectional: bidir.any(|b| b),
        conj_paired: has_layers && p.all(|c| c.is_some()),
    }
}

impl CheckpointFile {
    pub fn from_model(model: &Model) -> Self {
        CheckpointFile {
            schema_version: SCHEMA_VERSION.into(),
            architecture: architecture_of(model.layers.iter().map(|l| l.arch)),
            time_domain: TimeDomain::Discrete,
            activation: model.activation,
            flags: flags_of(
                model.layers.iter().map(|l| l.b_fixed),
                model.layers.iter().map(|l| l.is_bidirectional()),
                model.layers.iter().map(|l| &l.conj_pairs),
            ),
            provenance: model.meta.clone(),
            layers: model.layers.iter().map(dt_record).collect(),
            pruning: None,
        }
    }

    pub fn from_ct_model(model: &CtModel) -> Self {
        CheckpointFile {
            schema_version: SCHEMA_VERSION.into(),
            architecture: architecture_of(model.layers.iter().map(|l| l.arch)),
            time_domain: TimeDomain::Continuous,
            activation: model.activation,
            flags: flags_of(
                model.layers.iter().map(|l| l.b_fixed),
                model.layers.iter().map(|l| l.c_bwd.is_some()),
                model.layers.iter().map(|l| &l.conj_pairs),
            ),
            provenance: model.meta.clone(),
            layers: model.layers.iter().map(ct_record).collect(),
            pruning: None,
        }
    }

    /// Check the schema version, rebuild the layers and validate them.
    pub fn into_checkpoint(self) -> Result<Checkpoint> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::SchemaMismatch { found: self.schema_version, expected: SCHEMA_VERSION.into() });
        }
        let mut report = ValidationReport::default();
        let checkpoint = match self.time_domain {
            TimeDomain::Continuous => {
                let layers = self.layers.iter().map(ct_layer).collect::<Result<Vec<_>>>()?;
                for (l, layer) in layers.iter().enumerate() {
                    report.merge(layer.validate().in_layer(l));
                }
                let mut m = CtModel::new(layers, self.activation)?;
                m.meta = self.provenance;
                Checkpoint::Continuous(m)
            }
            TimeDomain::Discrete => {
                let layers = self.layers.iter().map(dt_layer).collect::<Result<Vec<_>>>()?;
                for (l, layer) in layers.iter().enumerate() {
                    report.merge(layer.validate().in_layer(l));
                }
                let mut m = Model::new(layers, self.activation)?;
                m.meta = self.provenance;
                Checkpoint::Discrete(m)
            }
        };
        if !report.is_empty() {
            return Err(Error::ValidationFailed(report));
        }
        Ok(checkpoint)
    }
}

fn required<'a, T>(v: &'a Option<T>, name: &str) -> Result<&'a T> {
    v.as_ref().ok_or_else(|| Error::DimensionMismatch(format!("missing field {name}")))
}

fn ct_layer(r: &LayerRecord) -> Result<CtLayer> {
    let lambda = required(&r.lambda, "lambda")?.clone();
    let n = lambda.len();
    let h = r.d.len();
    Ok(CtLayer {
        b: matrix_of(required(&r.b, "b")?, n, h, "b")?,
        c_fwd: matrix_of(&r.c_fwd, h, n, "c_fwd")?,
        c_bwd: r.c_bwd.as_ref().map(|c| matrix_of(c, h, n, "c_bwd")).transpose()?,
        d: matrix_of(&r.d, h, h, "d")?,
        delta: required(&r.delta, "delta")?.clone(),
        lambda,
        b_fixed: r.b_fixed,
        arch: r.arch.into(),
        conj_pairs: r.conj_pairs.clone(),
    })
}

fn dt_layer(r: &LayerRecord) -> Result<DtLayer> {
    let lambda_bar = required(&r.lambda_bar, "lambda_bar")?.clone();
    let n = lambda_bar.len();
    let h = r.d.len();
    Ok(DtLayer {
        b_bar: matrix_of(required(&r.b_bar, "b_bar")?, n, h, "b_bar")?,
        c_fwd: matrix_of(&r.c_fwd, h, n, "c_fwd")?,
        c_bwd: r.c_bwd.as_ref().map(|c| matrix_of(c, h, n, "c_bwd")).transpose()?,
        d: matrix_of(&r.d, h, h, "d")?,
        lambda_bar,
        b_fixed: r.b_fixed,
        arch: r.arch.into(),
        conj_pairs: r.conj_pairs.clone(),
    })
}

fn malformed(path: &Path, reason: impl ToString) -> Error {
    Error::MalformedFile { path: path.to_path_buf(), reason: reason.to_string() }
}

pub fn read_checkpoint_file(path: &Path) -> Result<CheckpointFile> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| malformed(path, e))
}

/// Load a checkpoint and the pruning record it carries, if any.
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(Checkpoint, Option<PruningRecord>)> {
    let path = path.as_ref();
    let mut file = read_checkpoint_file(path)?;
    let pruning = file.pruning.take();
    let checkpoint = file.into_checkpoint().map_err(|e| match e {
        Error::DimensionMismatch(reason) => malformed(path, reason),
        other => other,
    })?;
    Ok((checkpoint, pruning))
}

/// Load a model in discrete time; continuous-time checkpoints are discretized.
pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    load_checkpoint(path)?.0.into_model()
}

pub fn load_ct_model(path: impl AsRef<Path>) -> Result<CtModel> {
    match load_checkpoint(path.as_ref())?.0 {
        Checkpoint::Continuous(m) => Ok(m),
        Checkpoint::Discrete(_) => Err(Error::InvalidArgument(format!(
            "{} holds a discrete-time model; a continuous-time checkpoint is required",
            path.as_ref().display()
        ))),
    }
}

pub fn write_checkpoint_file(file: &CheckpointFile, path: impl AsRef<Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(file)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    write_checkpoint_file(&CheckpointFile::from_model(model), path)
}

pub fn save_ct_model(model: &CtModel, path: impl AsRef<Path>) -> Result<()> {
    write_checkpoint_file(&CheckpointFile::from_ct_model(model), path)
}

pub fn save_pruned_model(model: &Model, record: PruningRecord, path: impl AsRef<Path>) -> Result<()> {
    let mut file = CheckpointFile::from_model(model);
    file.pruning = Some(record);
    write_checkpoint_file(&file, path)
}

// ---------------------------------------------------------------------------
// Signals

pub const SIGNAL_MAGIC: &[u8; 8] = b"SSMSIG01";
/// Dtype tag for little-endian IEEE-754 binary64.
pub const DTYPE_F64_LE: u64 = 1;
const HEADER_LEN: usize = 32;

/// Binary layout: magic, then `T`, `h` and the dtype tag as little-endian
/// u64, then `T * h` row-major little-endian f64 values.
pub fn write_signal_bin(u: &Signal, path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::with_capacity(HEADER_LEN + 8 * u.data().len());
    buf.extend_from_slice(SIGNAL_MAGIC);
    buf.extend_from_slice(&(u.len() as u64).to_le_bytes());
    buf.extend_from_slice(&(u.channels() as u64).to_le_bytes());
    buf.extend_from_slice(&DTYPE_F64_LE.to_le_bytes());
    for v in u.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::File::create(path)?.write_all(&buf)?;
    Ok(())
}

pub fn read_signal_bin(path: impl AsRef<Path>) -> Result<Signal> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    if bytes.len() < HEADER_LEN || &bytes[..8] != SIGNAL_MAGIC {
        return Err(malformed(path, "missing signal header"));
    }
    let word = |k: usize| u64::from_le_bytes(bytes[8 * k..8 * k + 8].try_into().expect("8-byte slice"));
    let (t, h, dtype) = (word(1), word(2), word(3));
    if dtype != DTYPE_F64_LE {
        return Err(malformed(path, format!("unsupported dtype tag {dtype}")));
    }
    let count = t.checked_mul(h).and_then(|c| c.checked_mul(8)).and_then(|c| usize::try_from(c).ok());
    if count != Some(bytes.len() - HEADER_LEN) {
        return Err(malformed(path, format!("header says {t} x {h} samples, payload has {} bytes", bytes.len() - HEADER_LEN)));
    }
    let data = bytes[HEADER_LEN..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect();
    Signal::new(t as usize, h as usize, data).map_err(|e| malformed(path, e))
}

/// CSV layout: header `ch0,ch1,...`, one row per time step.
pub fn write_signal_csv(u: &Signal, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record((0..u.channels()).map(|c| format!("ch{c}")))?;
    for k in 0..u.len() {
        w.write_record(u.row(k).iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_signal_csv(path: impl AsRef<Path>) -> Result<Signal> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path)?;
    let h = r.headers()?.len();
    let mut data = Vec::new();
    let mut len = 0;
    for rec in r.records() {
        let rec = rec?;
        for field in rec.iter() {
            data.push(field.trim().parse::<f64>().map_err(|e| malformed(path, format!("row {len}: {e}")))?);
        }
        len += 1;
    }
    Signal::new(len, h, data).map_err(|e| malformed(path, e))
}

/// Read a signal, choosing the format by extension (`.csv` or binary).
pub fn read_signal(path: impl AsRef<Path>) -> Result<Signal> {
    let path = path.as_ref();
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        read_signal_csv(path)
    } else {
        read_signal_bin(path)
    }
}

/// Signal files in a directory, sorted by file name.
pub fn signal_files(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file() && p.extension().is_some_and(|e| matches!(e.to_str(), Some("csv" | "bin" | "sig")))
        })
        .collect();
    files.sort();
    Ok(files)
}

// ---------------------------------------------------------------------------
// Reports

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub layer: usize,
    pub state: usize,
    pub hinf_sq: f64,
    pub last: f64,
    pub rank: usize,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistortionRow {
    pub input_id: String,
    pub energy_full: f64,
    pub energy_pruned: f64,
    pub distortion: f64,
    pub bound: Option<f64>,
    pub ratio: Option<f64>,
}

pub fn write_csv<T: Serialize>(rows: &[T], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<Vec<T>, _>>()?)
}
