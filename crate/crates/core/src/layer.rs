//! Layer and model types for diagonal state space models.
//!
//! A layer stores one diagonal linear system. Poles are kept as the full
//! spectrum: a complex pole and its conjugate are two separate states, and
//! `conj_pairs` records which indices belong together.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Relative tolerance used when matching conjugate poles.
pub const DEFAULT_PAIR_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Arch {
    Mimo,
    /// `h` independent SISO systems of order `n_s`, stored block-diagonally.
    MultiSiso { n_s: usize, h: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Gelu,
    Relu,
    Identity,
}

impl Activation {
    pub fn as_str(self) -> &'static str {
        match self {
            Activation::Gelu => "gelu",
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        [Activation::Gelu, Activation::Relu, Activation::Identity]
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| format!("unknown activation {s:?}"))
    }
}

/// Continuous-time layer parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct CtLayer {
    pub lambda: Vec<C64>,
    /// n x h
    pub b: DMatrix<C64>,
    /// h x n
    pub c_fwd: DMatrix<C64>,
    pub c_bwd: Option<DMatrix<C64>>,
    /// h x h
    pub d: DMatrix<f64>,
    pub delta: Vec<f64>,
    pub b_fixed: bool,
    pub arch: Arch,
    pub conj_pairs: Option<Vec<(usize, usize)>>,
}

/// Zero-order-hold discretized layer.
#[derive(Clone, Debug, PartialEq)]
pub struct DtLayer {
    pub lambda_bar: Vec<C64>,
    /// n x h
    pub b_bar: DMatrix<C64>,
    /// h x n
    pub c_fwd: DMatrix<C64>,
    pub c_bwd: Option<DMatrix<C64>>,
    /// h x h
    pub d: DMatrix<f64>,
    pub b_fixed: bool,
    pub arch: Arch,
    pub conj_pairs: Option<Vec<(usize, usize)>>,
}

impl CtLayer {
    pub fn order(&self) -> usize {
        self.lambda.len()
    }

    pub fn channels(&self) -> usize {
        self.d.nrows()
    }
}

impl DtLayer {
    pub fn order(&self) -> usize {
        self.lambda_bar.len()
    }

    pub fn channels(&self) -> usize {
        self.d.nrows()
    }

    pub fn is_bidirectional(&self) -> bool {
        self.c_bwd.is_some()
    }

    pub fn max_pole_modulus(&self) -> f64 {
        self.lambda_bar.iter().map(|l| l.norm()).fold(0.0, f64::max)
    }

    /// Pull SISO system `k` back out of a block-diagonal multi-SISO layer.
    pub fn siso_channel(&self, k: usize) -> Result<DtLayer> {
        let Arch::MultiSiso { n_s, h } = self.arch else {
            return Err(Error::InvalidArgument(
                "siso_channel requires a multi-SISO layer".into(),
            ));
        };
        if k >= h {
            return Err(Error::DimensionMismatch(format!(
                "channel {k} out of range for h = {h}"
            )));
        }
        let states = k * n_s..(k + 1) * n_s;
        let lambda_bar = self.lambda_bar[states.clone()].to_vec();
        let b_bar = DMatrix::from_fn(n_s, 1, |r, _| self.b_bar[(k * n_s + r, k)]);
        let c_fwd = DMatrix::from_fn(1, n_s, |_, c| self.c_fwd[(k, k * n_s + c)]);
        let c_bwd = self
            .c_bwd
            .as_ref()
            .map(|cb| DMatrix::from_fn(1, n_s, |_, c| cb[(k, k * n_s + c)]));
        let conj_pairs = self.conj_pairs.as_ref().map(|pairs| {
            pairs
                .iter()
                .filter(|(i, j)| states.contains(i) && states.contains(j))
                .map(|&(i, j)| (i - k * n_s, j - k * n_s))
                .collect()
        });
        Ok(DtLayer {
            lambda_bar,
            b_bar,
            c_fwd,
            c_bwd,
            d: DMatrix::from_element(1, 1, self.d[(k, k)]),
            b_fixed: self.b_fixed,
            arch: Arch::MultiSiso { n_s, h: 1 },
            conj_pairs,
        })
    }

    /// Groups of states that are scored and pruned together: conjugate pairs
    /// and the remaining singletons, ordered by their lowest index.
    pub fn units(&self) -> Vec<Vec<usize>> {
        let n = self.order();
        let mut seen = vec![false; n];
        let mut units = Vec::with_capacity(n);
        let mut partner = vec![None; n];
        if let Some(pairs) = &self.conj_pairs {
            for &(i, j) in pairs {
                if i < n && j < n {
                    partner[i] = Some(j);
                    partner[j] = Some(i);
                }
            }
        }
        for i in 0..n {
            if seen[i] {
                continue;
            }
            seen[i] = true;
            match partner[i] {
                Some(j) if !seen[j] => {
                    seen[j] = true;
                    units.push(vec![i, j]);
                }
                _ => units.push(vec![i]),
            }
        }
        units
    }
}

/// Ordered stack of layers sharing one channel width and one activation.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub layers: Vec<DtLayer>,
    pub activation: Activation,
    pub meta: BTreeMap<String, String>,
}

impl Model {
    pub fn new(layers: Vec<DtLayer>, activation: Activation) -> Result<Self> {
        check_channel_chain(layers.iter().map(|l| l.channels()))?;
        Ok(Model { layers, activation, meta: BTreeMap::new() })
    }

    pub fn channels(&self) -> usize {
        self.layers.first().map_or(0, |l| l.channels())
    }

    pub fn total_states(&self) -> usize {
        self.layers.iter().map(|l| l.order()).sum()
    }
}

/// Continuous-time counterpart of [`Model`], as stored in CT checkpoints.
#[derive(Clone, Debug, PartialEq)]
pub struct CtModel {
    pub layers: Vec<CtLayer>,
    pub activation: Activation,
    pub meta: BTreeMap<String, String>,
}

impl CtModel {
    pub fn new(layers: Vec<CtLayer>, activation: Activation) -> Result<Self> {
        check_channel_chain(layers.iter().map(|l| l.channels()))?;
        Ok(CtModel { layers, activation, meta: BTreeMap::new() })
    }
}

fn check_channel_chain(widths: impl Iterator<Item = usize>) -> Result<()> {
    let mut first = None;
    for (l, h) in widths.enumerate() {
        match first {
            None => first = Some(h),
            Some(h0) if h0 != h => {
                return Err(Error::DimensionMismatch(format!(
                    "layer {l} has {h} channels, layer 0 has {h0}"
                )))
            }
            _ => {}
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Validation

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub field: String,
    pub index: Option<usize>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, field: &str, index: Option<usize>, message: String) {
        self.violations.push(Violation { field: field.to_string(), index, message });
    }

    /// Prefix every violation with a layer label.
    pub fn in_layer(mut self, layer: usize) -> Self {
        for v in &mut self.violations {
            v.message = format!("layer {layer}: {}", v.message);
        }
        self
    }

    pub fn merge(&mut self, other: ValidationReport) {
        self.violations.extend(other.violations);
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in self.violations.iter().enumerate() {
            if k > 0 {
                writeln!(f)?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

pub trait Validate {
    fn validate(&self) -> ValidationReport;
}

/// Report every invariant violation of a CT or DT layer.
pub fn validate_layer<L: Validate + ?Sized>(layer: &L) -> ValidationReport {
    layer.validate()
}

impl Validate for CtLayer {
    fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        let n = self.order();
        let h = self.channels();
        check_dims(&mut report, n, h, &self.b, &self.c_fwd, self.c_bwd.as_ref(), &self.d, "b");
        if self.delta.len() != n {
            report.push(
                "delta",
                None,
                format!("delta has length {}, expected {n}", self.delta.len()),
            );
        }
        for (i, l) in self.lambda.iter().enumerate() {
            if !(l.re.is_finite() && l.im.is_finite()) {
                report.push("lambda", Some(i), format!("lambda[{i}] is not finite ({l})"));
            } else if l.re >= 0.0 {
                report.push(
                    "lambda",
                    Some(i),
                    format!("Re(lambda[{i}]) ≥ 0 (observed {})", l.re),
                );
            }
        }
        for (i, &d) in self.delta.iter().enumerate() {
            if !(d.is_finite() && d > 0.0) {
                report.push("delta", Some(i), format!("delta[{i}] ≤ 0 or not finite (observed {d})"));
            }
        }
        check_finite(&mut report, "b", &self.b);
        check_finite(&mut report, "c_fwd", &self.c_fwd);
        if let Some(cb) = &self.c_bwd {
            check_finite(&mut report, "c_bwd", cb);
        }
        check_arch(&mut report, self.arch, n, h);
        if report.is_empty() {
            if let Some(pairs) = &self.conj_pairs {
                check_pairs(
                    &mut report,
                    pairs,
                    &self.lambda,
                    &self.b,
                    &self.c_fwd,
                    self.c_bwd.as_ref(),
                    "lambda",
                );
                for &(i, j) in pairs {
                    if i < n && j < n && !close(self.delta[i], self.delta[j]) {
                        report.push(
                            "delta",
                            Some(i),
                            format!(
                                "conjugate pair ({i}, {j}) does not share delta ({} vs {})",
                                self.delta[i], self.delta[j]
                            ),
                        );
                    }
                }
            }
        }
        report
    }
}

impl Validate for DtLayer {
    fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        let n = self.order();
        let h = self.channels();
        check_dims(
            &mut report,
            n,
            h,
            &self.b_bar,
            &self.c_fwd,
            self.c_bwd.as_ref(),
            &self.d,
            "b_bar",
        );
        for (i, l) in self.lambda_bar.iter().enumerate() {
            let m = l.norm();
            if !m.is_finite() {
                report.push("lambda_bar", Some(i), format!("lambda_bar[{i}] is not finite ({l})"));
            } else if m >= 1.0 {
                report.push(
                    "lambda_bar",
                    Some(i),
                    format!("|lambda_bar[{i}]| ≥ 1 (observed {m})"),
                );
            }
        }
        check_finite(&mut report, "b_bar", &self.b_bar);
        check_finite(&mut report, "c_fwd", &self.c_fwd);
        if let Some(cb) = &self.c_bwd {
            check_finite(&mut report, "c_bwd", cb);
        }
        check_arch(&mut report, self.arch, n, h);
        if report.is_empty() {
            if let Some(pairs) = &self.conj_pairs {
                check_pairs(
                    &mut report,
                    pairs,
                    &self.lambda_bar,
                    &self.b_bar,
                    &self.c_fwd,
                    self.c_bwd.as_ref(),
                    "lambda_bar",
                );
            }
        }
        report
    }
}

impl Validate for Model {
    fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        for (l, layer) in self.layers.iter().enumerate() {
            report.merge(layer.validate().in_layer(l));
        }
        report
    }
}

impl Validate for CtModel {
    fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        for (l, layer) in self.layers.iter().enumerate() {
            report.merge(layer.validate().in_layer(l));
        }
        report
    }
}

#[allow(clippy::too_many_arguments)]
fn check_dims(
    report: &mut ValidationReport,
    n: usize,
    h: usize,
    b: &DMatrix<C64>,
    c: &DMatrix<C64>,
    c_bwd: Option<&DMatrix<C64>>,
    d: &DMatrix<f64>,
    b_name: &str,
) {
    if d.ncols() != h {
        report.push("d", None, format!("d is {}x{}, expected square", d.nrows(), d.ncols()));
    }
    if b.shape() != (n, h) {
        report.push(
            b_name,
            None,
            format!("{b_name} is {}x{}, expected {n}x{h}", b.nrows(), b.ncols()),
        );
    }
    if c.shape() != (h, n) {
        report.push("c_fwd", None, format!("c_fwd is {}x{}, expected {h}x{n}", c.nrows(), c.ncols()));
    }
    if let Some(cb) = c_bwd {
        if cb.shape() != (h, n) {
            report.push(
                "c_bwd",
                None,
                format!("c_bwd is {}x{}, expected {h}x{n}", cb.nrows(), cb.ncols()),
            );
        }
    }
}

fn check_finite(report: &mut ValidationReport, field: &str, m: &DMatrix<C64>) {
    if let Some(pos) = m.iter().position(|z| !(z.re.is_finite() && z.im.is_finite())) {
        report.push(field, Some(pos), format!("{field} has a non-finite entry at flat index {pos}"));
    }
}

fn check_arch(report: &mut ValidationReport, arch: Arch, n: usize, h: usize) {
    if let Arch::MultiSiso { n_s, h: hs } = arch {
        if hs != h || n_s * hs != n {
            report.push(
                "arch",
                None,
                format!("arch MultiSiso({n_s}, {hs}) inconsistent with n = {n}, h = {h}"),
            );
        }
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= DEFAULT_PAIR_TOL * a.abs().max(b.abs())
}

fn conj_close(a: C64, b: C64) -> bool {
    (a - b.conj()).norm() <= DEFAULT_PAIR_TOL * a.norm().max(b.norm())
}

fn check_pairs(
    report: &mut ValidationReport,
    pairs: &[(usize, usize)],
    poles: &[C64],
    b: &DMatrix<C64>,
    c: &DMatrix<C64>,
    c_bwd: Option<&DMatrix<C64>>,
    pole_name: &str,
) {
    let n = poles.len();
    let mut used = vec![false; n];
    for &(i, j) in pairs {
        if i >= n || j >= n || i == j {
            report.push("conj_pairs", Some(i), format!("invalid conjugate pair ({i}, {j}) for n = {n}"));
            continue;
        }
        if used[i] || used[j] {
            report.push("conj_pairs", Some(i), format!("state reused in conjugate pair ({i}, {j})"));
        }
        used[i] = true;
        used[j] = true;
        if !conj_close(poles[i], poles[j]) {
            report.push(
                pole_name,
                Some(i),
                format!("{pole_name}[{i}] = {} is not the conjugate of {pole_name}[{j}] = {}", poles[i], poles[j]),
            );
        }
        let rows_ok = (0..b.ncols()).all(|k| conj_close(b[(i, k)], b[(j, k)]));
        if !rows_ok {
            report.push("b", Some(i), format!("input rows {i} and {j} are not conjugate"));
        }
        let cols_ok = |m: &DMatrix<C64>| (0..m.nrows()).all(|k| conj_close(m[(k, i)], m[(k, j)]));
        if !cols_ok(c) {
            report.push("c_fwd", Some(i), format!("output columns {i} and {j} are not conjugate"));
        }
        if let Some(cb) = c_bwd {
            if !cols_ok(cb) {
                report.push("c_bwd", Some(i), format!("backward output columns {i} and {j} are not conjugate"));
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Conjugate pairing

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PairingWarning {
    /// Several partners were equally close; the lowest index was taken.
    Ambiguous { index: usize, chosen: usize, rejected: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Pairing {
    pub pairs: Vec<(usize, usize)>,
    pub warnings: Vec<PairingWarning>,
}

/// Match every discretized pole with its conjugate.
///
/// `tol` is relative to the larger of the two pole moduli. Pairs come back
/// ordered by their first index.
pub fn pair_conjugates(layer: &DtLayer, tol: f64) -> Result<Pairing> {
    pair_poles(&layer.lambda_bar, tol)
}

pub fn pair_poles(poles: &[C64], tol: f64) -> Result<Pairing> {
    let n = poles.len();
    if !n.is_multiple_of(2) {
        return Err(Error::OddStateCount { n });
    }
    let mut matched = vec![false; n];
    let mut pairs = Vec::with_capacity(n / 2);
    let mut warnings = Vec::new();
    for i in 0..n {
        if matched[i] {
            continue;
        }
        let target = poles[i].conj();
        let mut best: Option<(usize, f64)> = None;
        for j in 0..n {
            if j == i || matched[j] {
                continue;
            }
            let dist = (poles[j] - target).norm();
            if dist > tol * poles[i].norm().max(poles[j].norm()) {
                continue;
            }
            match best {
                None => best = Some((j, dist)),
                Some((_, bd)) if dist < bd => best = Some((j, dist)),
                Some((b, bd)) if dist == bd => {
                    warnings.push(PairingWarning::Ambiguous { index: i, chosen: b, rejected: j });
                }
                _ => {}
            }
        }
        let Some((j, _)) = best else {
            return Err(Error::UnpairedState { index: i });
        };
        matched[i] = true;
        matched[j] = true;
        pairs.push((i, j));
    }
    // a warning only stands if its rejected candidate did not win later
    warnings.retain(|PairingWarning::Ambiguous { index, chosen, .. }| {
        pairs.contains(&(*index, *chosen))
    });
    Ok(Pairing { pairs, warnings })
}

// ---------------------------------------------------------------------------
// Multi-SISO embedding

/// Stack `h` single-channel systems of equal order into one block-diagonal
/// MIMO layer. Channel `k` of the result is driven by, and reads out, only
/// the states of system `k`.
pub fn siso_block_to_mimo(systems: &[DtLayer]) -> Result<DtLayer> {
    let h = systems.len();
    let Some(first) = systems.first() else {
        return Err(Error::DimensionMismatch("no SISO systems given".into()));
    };
    let n_s = first.order();
    let bidirectional = first.is_bidirectional();
    for (k, s) in systems.iter().enumerate() {
        if s.channels() != 1 || s.b_bar.ncols() != 1 || s.c_fwd.nrows() != 1 {
            return Err(Error::DimensionMismatch(format!("system {k} is not single-channel")));
        }
        if s.order() != n_s {
            return Err(Error::DimensionMismatch(format!(
                "system {k} has order {}, system 0 has {n_s}",
                s.order()
            )));
        }
        if s.is_bidirectional() != bidirectional {
            return Err(Error::DimensionMismatch(format!(
                "system {k} differs in directionality from system 0"
            )));
        }
        let report = s.validate();
        if !report.is_empty() {
            return Err(Error::ValidationFailed(report));
        }
    }
    let n = n_s * h;
    let zero = C64::new(0.0, 0.0);
    let mut lambda_bar = Vec::with_capacity(n);
    let mut b_bar = DMatrix::from_element(n, h, zero);
    let mut c_fwd = DMatrix::from_element(h, n, zero);
    let mut c_bwd = bidirectional.then(|| DMatrix::from_element(h, n, zero));
    let mut d = DMatrix::zeros(h, h);
    let mut pairs = Vec::new();
    let mut any_pairs = false;
    for (k, s) in systems.iter().enumerate() {
        let off = k * n_s;
        lambda_bar.extend_from_slice(&s.lambda_bar);
        for i in 0..n_s {
            b_bar[(off + i, k)] = s.b_bar[(i, 0)];
            c_fwd[(k, off + i)] = s.c_fwd[(0, i)];
            if let (Some(cb), Some(src)) = (c_bwd.as_mut(), s.c_bwd.as_ref()) {
                cb[(k, off + i)] = src[(0, i)];
            }
        }
        d[(k, k)] = s.d[(0, 0)];
        if let Some(p) = &s.conj_pairs {
            any_pairs = true;
            pairs.extend(p.iter().map(|&(i, j)| (i + off, j + off)));
        }
    }
    Ok(DtLayer {
        lambda_bar,
        b_bar,
        c_fwd,
        c_bwd,
        d,
        b_fixed: systems.iter().any(|s| s.b_fixed),
        arch: Arch::MultiSiso { n_s, h },
        conj_pairs: any_pairs.then_some(pairs),
    })
}
