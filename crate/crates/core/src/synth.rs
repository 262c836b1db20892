//! Random stable models and test signals.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::discretize::discretize_model;
use crate::error::{Error, Result};
use crate::layer::{Activation, Arch, CtLayer, CtModel, DtLayer, Model, C64};
use crate::simulate::Signal;

#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub layers: usize,
    pub state_dim: usize,
    pub channels: usize,
    pub activation: Activation,
    /// Layers in the second half of the stack get `C / scale_gap`.
    pub scale_gap: f64,
    /// Every layer reuses the first layer's parameters before scaling.
    pub replicate: bool,
    /// `ln` range of `-Re(λ)`.
    pub decay_log_range: (f64, f64),
    /// `ln` range of `|Im(λ)|`.
    pub freq_log_range: (f64, f64),
    pub delta_range: (f64, f64),
    /// Standard deviation of the entries of `D`.
    pub d_scale: f64,
    pub bidirectional: bool,
    pub b_fixed: bool,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            layers: 2,
            state_dim: 8,
            channels: 2,
            activation: Activation::Relu,
            scale_gap: 1.0,
            replicate: false,
            decay_log_range: (0.001f64.ln(), 0.0),
            freq_log_range: (0.1f64.ln(), 10f64.ln()),
            delta_range: (0.001, 0.1),
            d_scale: 0.1,
            bidirectional: false,
            b_fixed: false,
        }
    }
}

impl SynthConfig {
    pub fn new(layers: usize, state_dim: usize, channels: usize) -> Self {
        SynthConfig { layers, state_dim, channels, ..Default::default() }
    }

    fn check(&self) -> Result<()> {
        if self.layers == 0 || self.channels == 0 || self.state_dim == 0 {
            return Err(Error::InvalidArgument("layers, state_dim and channels must be positive".into()));
        }
        if !self.state_dim.is_multiple_of(2) {
            return Err(Error::OddStateCount { n: self.state_dim });
        }
        if !(self.scale_gap.is_finite() && self.scale_gap > 0.0) {
            return Err(Error::InvalidArgument(format!("scale_gap must be positive, got {}", self.scale_gap)));
        }
        Ok(())
    }

    pub fn is_weak(&self, layer: usize) -> bool {
        self.scale_gap != 1.0 && layer >= self.layers.div_ceil(2)
    }
}

pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

fn log_uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if lo == hi {
        lo.exp()
    } else {
        rng.random_range(lo..hi).exp()
    }
}

/// One continuous-time layer with poles in adjacent conjugate pairs.
pub fn random_ct_layer<R: Rng + ?Sized>(rng: &mut R, cfg: &SynthConfig) -> CtLayer {
    let n = cfg.state_dim;
    let h = cfg.channels;
    let zero = C64::new(0.0, 0.0);
    let mut lambda = Vec::with_capacity(n);
    let mut delta = Vec::with_capacity(n);
    let mut b = DMatrix::from_element(n, h, zero);
    let mut c_fwd = DMatrix::from_element(h, n, zero);
    let mut c_bwd = cfg.bidirectional.then(|| DMatrix::from_element(h, n, zero));
    let (dlo, dhi) = cfg.delta_range;
    for p in 0..n / 2 {
        let (i, j) = (2 * p, 2 * p + 1);
        let re = -log_uniform(rng, cfg.decay_log_range.0, cfg.decay_log_range.1);
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let im = sign * log_uniform(rng, cfg.freq_log_range.0, cfg.freq_log_range.1);
        let l = C64::new(re, im);
        lambda.extend([l, l.conj()]);
        let d = log_uniform(rng, dlo.ln(), dhi.ln());
        delta.extend([d, d]);
        for ch in 0..h {
            let v = complex_normal(rng);
            b[(i, ch)] = v;
            b[(j, ch)] = v.conj();
        }
        for r in 0..h {
            let v = complex_normal(rng);
            c_fwd[(r, i)] = v;
            c_fwd[(r, j)] = v.conj();
        }
        if let Some(cb) = c_bwd.as_mut() {
            for r in 0..h {
                let v = complex_normal(rng);
                cb[(r, i)] = v;
                cb[(r, j)] = v.conj();
            }
        }
    }
    let d = DMatrix::from_fn(h, h, |_, _| cfg.d_scale * rng.sample::<f64, _>(StandardNormal));
    CtLayer {
        lambda,
        b,
        c_fwd,
        c_bwd,
        d,
        delta,
        b_fixed: cfg.b_fixed,
        arch: Arch::Mimo,
        conj_pairs: Some((0..n / 2).map(|p| (2 * p, 2 * p + 1)).collect()),
    }
}

pub fn random_ct_model<R: Rng + ?Sized>(rng: &mut R, cfg: &SynthConfig) -> Result<CtModel> {
    cfg.check()?;
    let base = random_ct_layer(rng, cfg);
    let mut layers = Vec::with_capacity(cfg.layers);
    for l in 0..cfg.layers {
        let mut layer = if l == 0 || cfg.replicate { base.clone() } else { random_ct_layer(rng, cfg) };
        if cfg.is_weak(l) {
            layer.c_fwd /= C64::new(cfg.scale_gap, 0.0);
            if let Some(cb) = layer.c_bwd.as_mut() {
                *cb /= C64::new(cfg.scale_gap, 0.0);
            }
        }
        layers.push(layer);
    }
    let mut model = CtModel::new(layers, cfg.activation)?;
    model.meta.insert("generator".into(), "synthetic".into());
    Ok(model)
}

pub fn random_model<R: Rng + ?Sized>(rng: &mut R, cfg: &SynthConfig) -> Result<Model> {
    discretize_model(&random_ct_model(rng, cfg)?)
}

/// Discrete-time layer with a prescribed pole modulus range, built directly
/// without going through discretization.
pub fn random_dt_layer<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    h: usize,
    modulus: (f64, f64),
    c_scale: f64,
) -> DtLayer {
    let zero = C64::new(0.0, 0.0);
    let mut lambda_bar = Vec::with_capacity(n);
    let mut b_bar = DMatrix::from_element(n, h, zero);
    let mut c_fwd = DMatrix::from_element(h, n, zero);
    for p in 0..n / 2 {
        let (i, j) = (2 * p, 2 * p + 1);
        let r = if modulus.0 == modulus.1 { modulus.0 } else { rng.random_range(modulus.0..modulus.1) };
        let angle = rng.random_range(0.05..std::f64::consts::PI - 0.05);
        let l = C64::from_polar(r, angle);
        lambda_bar.extend([l, l.conj()]);
        for ch in 0..h {
            let v = complex_normal(rng);
            b_bar[(i, ch)] = v;
            b_bar[(j, ch)] = v.conj();
        }
        for row in 0..h {
            let v = complex_normal(rng) * c_scale;
            c_fwd[(row, i)] = v;
            c_fwd[(row, j)] = v.conj();
        }
    }
    DtLayer {
        lambda_bar,
        b_bar,
        c_fwd,
        c_bwd: None,
        d: DMatrix::zeros(h, h),
        b_fixed: false,
        arch: Arch::Mimo,
        conj_pairs: Some((0..n / 2).map(|p| (2 * p, 2 * p + 1)).collect()),
    }
}

/// Concatenate the states of several layers with equal channel counts.
pub fn stack_states(parts: &[DtLayer]) -> Result<DtLayer> {
    let Some(first) = parts.first() else {
        return Err(Error::EmptyLayer);
    };
    let h = first.channels();
    if parts.iter().any(|p| p.channels() != h) {
        return Err(Error::DimensionMismatch("stacked layers differ in channel count".into()));
    }
    let n: usize = parts.iter().map(DtLayer::order).sum();
    let mut out = DtLayer {
        lambda_bar: Vec::with_capacity(n),
        b_bar: DMatrix::from_element(n, h, C64::new(0.0, 0.0)),
        c_fwd: DMatrix::from_element(h, n, C64::new(0.0, 0.0)),
        c_bwd: None,
        d: first.d.clone(),
        b_fixed: false,
        arch: Arch::Mimo,
        conj_pairs: Some(Vec::new()),
    };
    let mut off = 0;
    for p in parts {
        out.lambda_bar.extend_from_slice(&p.lambda_bar);
        out.b_bar.rows_mut(off, p.order()).copy_from(&p.b_bar);
        out.c_fwd.columns_mut(off, p.order()).copy_from(&p.c_fwd);
        if let (Some(pairs), Some(src)) = (out.conj_pairs.as_mut(), p.conj_pairs.as_ref()) {
            pairs.extend(src.iter().map(|&(i, j)| (i + off, j + off)));
        }
        off += p.order();
    }
    Ok(out)
}

/// Zero-mean unit-variance Gaussian white noise.
pub fn white_noise<R: Rng + ?Sized>(rng: &mut R, len: usize, channels: usize) -> Signal {
    Signal::from_fn(len, channels, |_, _| rng.sample(StandardNormal))
}

/// `cos(θk)` driven along a fixed real direction of unit norm.
pub fn sinusoid(len: usize, theta: f64, direction: &[f64]) -> Signal {
    let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    Signal::from_fn(len, direction.len(), |k, c| (theta * k as f64).cos() * direction[c] / norm)
}
