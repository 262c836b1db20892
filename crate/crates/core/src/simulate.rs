//! Time-domain recursion, layer and model forward passes, frequency response.

use std::f64::consts::{FRAC_1_SQRT_2, TAU};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::layer::{Activation, DtLayer, Model, C64};
use crate::pruning::PruneMask;

/// Real multichannel signal, time-major (`len x channels`).
#[derive(Clone, Debug, PartialEq)]
pub struct Signal {
    data: Vec<f64>,
    len: usize,
    channels: usize,
}

impl Signal {
    pub fn new(len: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != len * channels {
            return Err(Error::DimensionMismatch(format!(
                "signal data has {} values, expected {len} x {channels}",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("signal value {pos} is not finite")));
        }
        Ok(Signal { data, len, channels })
    }

    pub fn zeros(len: usize, channels: usize) -> Self {
        Signal { data: vec![0.0; len * channels], len, channels }
    }

    pub fn from_fn(len: usize, channels: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(len * channels);
        for k in 0..len {
            for c in 0..channels {
                data.push(f(k, c));
            }
        }
        Signal { data, len, channels }
    }

    /// Unit impulse at time 0 on `channel`.
    pub fn impulse(len: usize, channels: usize, channel: usize) -> Self {
        let mut s = Signal::zeros(len, channels);
        if len > 0 && channel < channels {
            s.data[channel] = 1.0;
        }
        s
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.data[k * self.channels..(k + 1) * self.channels]
    }

    pub fn at(&self, k: usize, c: usize) -> f64 {
        self.data[k * self.channels + c]
    }

    pub fn channel(&self, c: usize) -> Vec<f64> {
        (0..self.len).map(|k| self.at(k, c)).collect()
    }

    /// Append `extra` zero samples.
    pub fn zero_padded(&self, extra: usize) -> Signal {
        let mut data = self.data.clone();
        data.resize((self.len + extra) * self.channels, 0.0);
        Signal { data, len: self.len + extra, channels: self.channels }
    }

    pub fn reversed(&self) -> Signal {
        let mut data = Vec::with_capacity(self.data.len());
        for k in (0..self.len).rev() {
            data.extend_from_slice(self.row(k));
        }
        Signal { data, len: self.len, channels: self.channels }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Signal {
        Signal { data: self.data.iter().map(|&v| f(v)).collect(), len: self.len, channels: self.channels }
    }

    /// `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &Signal, b: f64) -> Signal {
        assert_eq!(self.len, other.len);
        assert_eq!(self.channels, other.channels);
        let data = self.data.iter().zip(&other.data).map(|(x, y)| a * x + b * y).collect();
        Signal { data, len: self.len, channels: self.channels }
    }

    pub fn sub(&self, other: &Signal) -> Signal {
        self.combine(1.0, other, -1.0)
    }
}

/// Frequencies on the unit circle, ascending from 0.
#[derive(Clone, Debug, PartialEq)]
pub struct FreqGrid {
    thetas: Vec<f64>,
}

impl FreqGrid {
    pub fn new(thetas: Vec<f64>) -> Result<Self> {
        if thetas.first().is_some_and(|&t| t != 0.0) {
            return Err(Error::InvalidArgument("frequency grid must start at 0".into()));
        }
        if thetas.last().is_some_and(|&t| t > TAU) {
            return Err(Error::InvalidArgument("frequency grid must end at or below 2π".into()));
        }
        if thetas.windows(2).any(|w| w[0].partial_cmp(&w[1]) != Some(std::cmp::Ordering::Less)) {
            return Err(Error::InvalidArgument("frequency grid must be strictly ascending".into()));
        }
        Ok(FreqGrid { thetas })
    }

    /// `n` equispaced points `2πk/n`, `k = 0..n`.
    pub fn uniform(n: usize) -> Self {
        FreqGrid { thetas: (0..n).map(|k| TAU * k as f64 / n as f64).collect() }
    }

    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }
}

pub fn activation_apply(act: Activation, x: f64) -> f64 {
    match act {
        Activation::Identity => x,
        Activation::Relu => x.max(0.0),
        Activation::Gelu => 0.5 * x * (1.0 + libm::erf(x * FRAC_1_SQRT_2)),
    }
}

/// Zero-padding length after which a pole of modulus `r` has decayed below `tol`.
pub fn decay_padding(r: f64, tol: f64, cap: usize) -> usize {
    if r <= 0.0 {
        return 1;
    }
    if r >= 1.0 {
        return cap;
    }
    let steps = (tol.ln() / r.ln()).ceil();
    if steps.is_finite() && steps < cap as f64 {
        (steps as usize).max(1)
    } else {
        cap
    }
}

fn check_mask(dt: &DtLayer, keep: Option<&[bool]>) -> Result<()> {
    if let Some(k) = keep {
        if k.len() != dt.order() {
            return Err(Error::MaskLength { expected: dt.order(), found: k.len() });
        }
    }
    Ok(())
}

/// One causal pass `x_{k+1} = Λ̄ x_k + B̄ u_k`, accumulating `C x_k` into `out`.
/// Returns the largest imaginary residue seen before it is dropped.
fn causal_pass(
    dt: &DtLayer,
    c: &DMatrix<C64>,
    u: &Signal,
    keep: Option<&[bool]>,
    reverse: bool,
    out: &mut [f64],
) -> f64 {
    let h = dt.channels();
    let active: Vec<usize> =
        (0..dt.order()).filter(|&i| keep.is_none_or(|k| k[i])).collect();
    let poles: Vec<C64> = active.iter().map(|&i| dt.lambda_bar[i]).collect();
    let b_rows: Vec<C64> =
        active.iter().flat_map(|&i| (0..h).map(move |ch| dt.b_bar[(i, ch)])).collect();
    let c_cols: Vec<C64> =
        active.iter().flat_map(|&i| (0..h).map(move |r| c[(r, i)])).collect();
    let m = active.len();
    let mut x = vec![C64::new(0.0, 0.0); m];
    let mut acc = vec![C64::new(0.0, 0.0); h];
    let mut max_imag = 0.0f64;
    let t_len = u.len();
    for step in 0..t_len {
        let k = if reverse { t_len - 1 - step } else { step };
        acc.iter_mut().for_each(|a| *a = C64::new(0.0, 0.0));
        for s in 0..m {
            let xs = x[s];
            let col = &c_cols[s * h..(s + 1) * h];
            for r in 0..h {
                acc[r] += col[r] * xs;
            }
        }
        let y = &mut out[k * h..(k + 1) * h];
        for r in 0..h {
            y[r] += acc[r].re;
            max_imag = max_imag.max(acc[r].im.abs());
        }
        let uk = u.row(k);
        for s in 0..m {
            let row = &b_rows[s * h..(s + 1) * h];
            let mut drive = C64::new(0.0, 0.0);
            for ch in 0..h {
                drive += row[ch] * uk[ch];
            }
            x[s] = poles[s] * x[s] + drive;
        }
    }
    max_imag
}

fn linear_pass(dt: &DtLayer, u: &Signal, keep: Option<&[bool]>) -> Result<(Signal, f64)> {
    let h = dt.channels();
    if u.channels() != h {
        return Err(Error::ChannelMismatch { expected: h, found: u.channels() });
    }
    check_mask(dt, keep)?;
    let mut out = vec![0.0; u.len() * h];
    let mut imag = causal_pass(dt, &dt.c_fwd, u, keep, false, &mut out);
    if let Some(cb) = &dt.c_bwd {
        imag = imag.max(causal_pass(dt, cb, u, keep, true, &mut out));
    }
    for k in 0..u.len() {
        let uk = u.row(k);
        let y = &mut out[k * h..(k + 1) * h];
        for (r, yr) in y.iter_mut().enumerate() {
            *yr += uk.iter().enumerate().map(|(ch, v)| dt.d[(r, ch)] * v).sum::<f64>();
        }
    }
    Ok((Signal { data: out, len: u.len(), channels: h }, imag))
}

/// Run the linear recursion from `x_0 = 0`. States with `keep[i] == false`
/// contribute nothing. Bidirectional layers add a time-reversed pass read
/// out through `c_bwd`.
pub fn run_recursion(dt: &DtLayer, u: &Signal, keep: Option<&[bool]>) -> Result<Signal> {
    linear_pass(dt, u, keep).map(|(y, _)| y)
}

/// Largest imaginary part discarded by [`run_recursion`], relative to the
/// largest output magnitude.
pub fn imag_residue(dt: &DtLayer, u: &Signal, keep: Option<&[bool]>) -> Result<f64> {
    let (y, imag) = linear_pass(dt, u, keep)?;
    let scale = y.data().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(if scale > 0.0 { imag / scale } else { imag })
}

pub fn layer_forward(
    dt: &DtLayer,
    act: Activation,
    u: &Signal,
    keep: Option<&[bool]>,
) -> Result<Signal> {
    let y = run_recursion(dt, u, keep)?;
    Ok(match act {
        Activation::Identity => y,
        _ => y.map(|v| activation_apply(act, v)),
    })
}

/// Compose all layer forward passes, optionally under a prune mask.
pub fn model_forward(model: &Model, u: &Signal, masks: Option<&PruneMask>) -> Result<Signal> {
    if let Some(m) = masks {
        if m.layers.len() != model.layers.len() {
            return Err(Error::DimensionMismatch(format!(
                "mask has {} layers, model has {}",
                m.layers.len(),
                model.layers.len()
            )));
        }
    }
    let mut x = u.clone();
    for (l, layer) in model.layers.iter().enumerate() {
        let lm = masks.map(|m| &m.layers[l]);
        x = match lm.and_then(|m| m.elements.as_ref()) {
            Some(el) => {
                let zeroed = crate::pruning::apply_element_mask(layer, el)?;
                layer_forward(&zeroed, model.activation, &x, lm.map(|m| m.keep.as_slice()))?
            }
            None => layer_forward(layer, model.activation, &x, lm.map(|m| m.keep.as_slice()))?,
        };
    }
    Ok(x)
}

/// `C (zI - Λ̄)^{-1} B̄` restricted to `subset`, at `z = e^{jθ}`.
/// Bidirectional layers add the reversed pass, which acts at `e^{-jθ}`.
pub fn transfer_matrix(dt: &DtLayer, subset: &[usize], theta: f64) -> DMatrix<C64> {
    let h = dt.channels();
    let mut g = DMatrix::from_element(h, h, C64::new(0.0, 0.0));
    let z = C64::from_polar(1.0, theta);
    accumulate_modes(&mut g, dt, &dt.c_fwd, subset, z);
    if let Some(cb) = &dt.c_bwd {
        accumulate_modes(&mut g, dt, cb, subset, z.conj());
    }
    g
}

fn accumulate_modes(g: &mut DMatrix<C64>, dt: &DtLayer, c: &DMatrix<C64>, subset: &[usize], z: C64) {
    let h = dt.channels();
    for &i in subset {
        let w = (z - dt.lambda_bar[i]).inv();
        for r in 0..h {
            let cr = c[(r, i)] * w;
            for col in 0..h {
                g[(r, col)] += cr * dt.b_bar[(i, col)];
            }
        }
    }
}

/// Transfer function matrices of the subsystems in `subset`, summed, on `grid`.
pub fn frequency_response(dt: &DtLayer, subset: &[usize], grid: &FreqGrid) -> Vec<DMatrix<C64>> {
    grid.thetas().iter().map(|&t| transfer_matrix(dt, subset, t)).collect()
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::layer::Arch;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    pub(crate) fn first_order(pole: f64, b: f64, cc: f64, d: f64) -> DtLayer {
        DtLayer {
            lambda_bar: vec![c(pole, 0.0)],
            b_bar: DMatrix::from_element(1, 1, c(b, 0.0)),
            c_fwd: DMatrix::from_element(1, 1, c(cc, 0.0)),
            c_bwd: None,
            d: DMatrix::from_element(1, 1, d),
            b_fixed: false,
            arch: Arch::Mimo,
            conj_pairs: None,
        }
    }

    #[test]
    fn zero_input_gives_zero_output() {
        let dt = first_order(0.5, 0.5, 1.0, 0.3);
        let y = run_recursion(&dt, &Signal::zeros(16, 1), None).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn first_order_impulse_response() {
        // hand unrolled: x_1 = b̄ = 0.5, y_k = c λ̄^{k-1} b̄ = 0.5^k for k >= 1
        let dt = first_order(0.5, 0.5, 1.0, 0.0);
        let y = run_recursion(&dt, &Signal::impulse(6, 1, 0), None).unwrap();
        assert_eq!(y.channel(0), vec![0.0, 0.5, 0.25, 0.125, 0.0625, 0.03125]);
    }

    #[test]
    fn feedthrough_adds_du() {
        let dt = first_order(0.5, 0.5, 1.0, 1.0);
        let y = run_recursion(&dt, &Signal::impulse(4, 1, 0), None).unwrap();
        assert_eq!(y.channel(0), vec![1.0, 0.5, 0.25, 0.125]);
    }

    #[test]
    fn channel_mismatch_is_an_error() {
        let dt = first_order(0.5, 0.5, 1.0, 0.0);
        assert!(matches!(
            run_recursion(&dt, &Signal::zeros(4, 2), None),
            Err(Error::ChannelMismatch { expected: 1, found: 2 })
        ));
    }

    #[test]
    fn activations() {
        assert_eq!(activation_apply(Activation::Gelu, 0.0), 0.0);
        assert_eq!(activation_apply(Activation::Relu, -3.0), 0.0);
        assert_eq!(activation_apply(Activation::Relu, 3.0), 3.0);
        assert_eq!(activation_apply(Activation::Identity, -2.5), -2.5);
        assert!((activation_apply(Activation::Gelu, 1e6) - 1e6).abs() < 1e-9);
        // x Φ(x) at x = 1: Φ(1) = 0.8413447460685429
        assert!((activation_apply(Activation::Gelu, 1.0) - 0.8413447460685429).abs() < 1e-15);
    }

    #[test]
    fn relu_kills_negative_output() {
        let dt = first_order(0.5, 0.5, -1.0, 0.0);
        let u = Signal::from_fn(10, 1, |_, _| 1.0);
        let y = layer_forward(&dt, Activation::Relu, &u, None).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
        let lin = run_recursion(&dt, &u, None).unwrap();
        assert_eq!(layer_forward(&dt, Activation::Identity, &u, None).unwrap(), lin);
    }

    #[test]
    fn dc_gain_of_first_order_system() {
        let dt = first_order(0.5, 0.5, 1.0, 0.0);
        let g = frequency_response(&dt, &[0], &FreqGrid::uniform(8));
        assert!((g[0][(0, 0)] - c(1.0, 0.0)).norm() < 1e-15);
        let empty = frequency_response(&dt, &[], &FreqGrid::uniform(8));
        assert!(empty.iter().all(|m| m[(0, 0)] == c(0.0, 0.0)));
    }

    #[test]
    fn grid_validation() {
        assert!(FreqGrid::new(vec![0.0, 1.0, 2.0]).is_ok());
        assert!(FreqGrid::new(vec![0.1, 1.0]).is_err());
        assert!(FreqGrid::new(vec![0.0, 2.0, 1.0]).is_err());
        assert!(FreqGrid::new(vec![0.0, 7.0]).is_err());
    }

    #[test]
    fn padding_rule() {
        assert_eq!(decay_padding(0.5, 1e-12, 1 << 20), 40);
        assert_eq!(decay_padding(0.0, 1e-12, 100), 1);
        assert_eq!(decay_padding(0.999_999, 1e-12, 100), 100);
    }

    #[test]
    fn bidirectional_layer_adds_reversed_pass() {
        let mut dt = first_order(0.5, 1.0, 1.0, 0.0);
        dt.c_bwd = Some(DMatrix::from_element(1, 1, c(2.0, 0.0)));
        let centre = Signal::from_fn(5, 1, |k, _| if k == 2 { 1.0 } else { 0.0 });
        let y = run_recursion(&dt, &centre, None).unwrap();
        // forward: y_3 = 1, y_4 = 0.5 ; backward: y_1 = 2, y_0 = 1
        assert_eq!(y.channel(0), vec![1.0, 2.0, 0.0, 1.0, 0.5]);
    }
}
