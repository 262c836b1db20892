//! H∞ norms (closed form and frequency sweep), signal energies, Parseval.

use std::f64::consts::TAU;

use nalgebra::DMatrix;
use rustfft::num_complex::Complex as FftComplex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::layer::{DtLayer, C64};
use crate::simulate::{decay_padding, run_recursion, transfer_matrix, FreqGrid, Signal};

/// Guard for relative-error denominators.
pub const REL_EPS: f64 = 1e-300;

/// Gram eigen-solve up to this channel count, power iteration above it.
const GRAM_EIG_MAX_DIM: usize = 8;

/// `‖C_i‖² ‖B̄_i‖²` for state `i`, with the fixed-B and bidirectional variants.
pub(crate) fn state_gain_sq(dt: &DtLayer, i: usize) -> f64 {
    let c_sq = match &dt.c_bwd {
        Some(cb) => 0.5 * (dt.c_fwd.column(i).norm_squared() + cb.column(i).norm_squared()),
        None => dt.c_fwd.column(i).norm_squared(),
    };
    let b_sq = if dt.b_fixed { 1.0 } else { dt.b_bar.row(i).norm_squared() };
    c_sq * b_sq
}

/// Closed-form H∞ norm of the rank-1 subsystem of state `i`:
/// `‖C_i‖ ‖B̄_i‖ / (1 - |λ̄_i|)`.
pub fn subsystem_hinf(dt: &DtLayer, i: usize) -> Result<f64> {
    let modulus = dt.lambda_bar[i].norm();
    if modulus.is_nan() || modulus >= 1.0 {
        return Err(Error::UnstableState { index: i, modulus });
    }
    Ok(state_gain_sq(dt, i).sqrt() / (1.0 - modulus))
}

/// Largest singular value of a square complex matrix.
pub fn sigma_max(g: &DMatrix<C64>) -> f64 {
    let h = g.ncols();
    if h == 0 || g.nrows() == 0 {
        return 0.0;
    }
    if g.nrows() == 1 && h == 1 {
        return g[(0, 0)].norm();
    }
    let gram = g.adjoint() * g;
    if h <= GRAM_EIG_MAX_DIM {
        let top = gram.symmetric_eigenvalues().iter().copied().fold(0.0f64, f64::max);
        return top.max(0.0).sqrt();
    }
    power_iteration_top(&gram).sqrt()
}

fn power_iteration_top(gram: &DMatrix<C64>) -> f64 {
    let n = gram.ncols();
    let mut v = nalgebra::DVector::from_fn(n, |i, _| C64::new(1.0 + i as f64 * 1e-3, 0.0));
    v /= C64::new(v.norm(), 0.0);
    let mut est = 0.0;
    for _ in 0..10_000 {
        let w = gram * &v;
        let next = w.norm();
        if next == 0.0 {
            return 0.0;
        }
        v = w / C64::new(next, 0.0);
        if (next - est).abs() <= 1e-10 * next {
            return next;
        }
        est = next;
    }
    est
}

/// Frequency sweep settings for [`hinf_sweep`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepOptions {
    pub grid_size: usize,
    pub refine_iters: usize,
    /// Also start refinements at the pole angles of the subset.
    pub seed_pole_angles: bool,
    /// Sweep `G + D` instead of `G`.
    pub include_feedthrough: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions { grid_size: 4096, refine_iters: 60, seed_pole_angles: true, include_feedthrough: false }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HinfEstimate {
    pub value: f64,
    /// Frequency at which `value` was attained.
    pub theta: f64,
}

pub(crate) fn ensure_stable(dt: &DtLayer) -> Result<()> {
    let modulus = dt.max_pole_modulus();
    if modulus.is_nan() || modulus >= 1.0 {
        return Err(Error::UnstableLayer { modulus });
    }
    Ok(())
}

fn sigma_at(dt: &DtLayer, subset: &[usize], theta: f64, feedthrough: bool) -> f64 {
    let mut g = transfer_matrix(dt, subset, theta);
    if feedthrough {
        for r in 0..g.nrows() {
            for c in 0..g.ncols() {
                g[(r, c)] += C64::new(dt.d[(r, c)], 0.0);
            }
        }
    }
    sigma_max(&g)
}

/// Golden-section search for a maximum of `f` on `[lo, hi]`.
fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, iters: usize) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    let mut best = if f1 >= f2 { (f1, x1) } else { (f2, x2) };
    for _ in 0..iters {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
            if f1 > best.0 {
                best = (f1, x1);
            }
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
            if f2 > best.0 {
                best = (f2, x2);
            }
        }
    }
    best
}

/// Sweep `σ̄(G(e^{jθ}))` over a uniform grid and refine the best cell.
/// The result is a lower bound on the true supremum.
pub fn hinf_sweep(dt: &DtLayer, subset: &[usize], opts: &SweepOptions) -> Result<HinfEstimate> {
    ensure_stable(dt)?;
    if opts.grid_size < 2 {
        return Err(Error::InvalidArgument("grid_size must be at least 2".into()));
    }
    let feed = opts.include_feedthrough;
    if subset.is_empty() && !feed {
        return Ok(HinfEstimate { value: 0.0, theta: 0.0 });
    }
    let f = |t: f64| sigma_at(dt, subset, t, feed);
    let grid = FreqGrid::uniform(opts.grid_size);
    let step = TAU / opts.grid_size as f64;
    let mut best = HinfEstimate { value: f64::NEG_INFINITY, theta: 0.0 };
    let mut best_cell = 0.0;
    for &t in grid.thetas() {
        let v = f(t);
        if v > best.value {
            best = HinfEstimate { value: v, theta: t };
            best_cell = t;
        }
    }
    let mut centres = vec![best_cell];
    if opts.seed_pole_angles {
        let mut seed: Option<(f64, f64)> = None;
        for &i in subset {
            let angle = dt.lambda_bar[i].arg();
            let mut angles = vec![angle];
            if dt.is_bidirectional() {
                angles.push(-angle);
            }
            for a in angles {
                let v = f(a);
                if seed.is_none_or(|(sv, _)| v > sv) {
                    seed = Some((v, a));
                }
            }
        }
        if let Some((v, a)) = seed {
            if v > best.value {
                best = HinfEstimate { value: v, theta: a };
            }
            centres.push(a);
        }
    }
    for c in centres {
        let (v, t) = golden_max(f, c - step, c + step, opts.refine_iters);
        if v > best.value {
            best = HinfEstimate { value: v, theta: t.rem_euclid(TAU) };
        }
    }
    Ok(best)
}

/// Brute-force `‖G_subset‖∞`: uniform grid of `grid_size` points, then
/// `refine_iters` golden-section steps around the best grid cell.
pub fn hinf_bruteforce(dt: &DtLayer, subset: &[usize], grid_size: usize, refine_iters: usize) -> Result<f64> {
    let opts = SweepOptions { grid_size, refine_iters, seed_pole_angles: false, include_feedthrough: false };
    hinf_sweep(dt, subset, &opts).map(|e| e.value)
}

/// H∞ norm of the whole layer including feedthrough, as used in energy bounds.
pub fn layer_hinf(dt: &DtLayer, keep: Option<&[bool]>) -> Result<HinfEstimate> {
    let subset: Vec<usize> = (0..dt.order()).filter(|&i| keep.is_none_or(|k| k[i])).collect();
    let opts = SweepOptions { include_feedthrough: true, ..SweepOptions::default() };
    hinf_sweep(dt, &subset, &opts)
}

pub fn signal_energy(u: &Signal) -> f64 {
    u.data().iter().map(|v| v * v).sum()
}

/// Relative gap between time-domain energy and unitary-DFT energy.
pub fn parseval_check(u: &Signal) -> f64 {
    let n = u.len();
    let e_time = signal_energy(u);
    if n == 0 {
        return 0.0;
    }
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(n);
    let mut e_freq = 0.0;
    for ch in 0..u.channels() {
        let mut buf: Vec<FftComplex<f64>> = u.channel(ch).into_iter().map(|v| FftComplex::new(v, 0.0)).collect();
        fft.process(&mut buf);
        e_freq += buf.iter().map(|z| z.norm_sqr()).sum::<f64>() / n as f64;
    }
    (e_time - e_freq).abs() / e_time.max(REL_EPS)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyGain {
    pub output_energy: f64,
    pub bound: f64,
    pub slack: f64,
}

impl EnergyGain {
    /// Whether `output_energy ≤ bound` within `rel_tol * bound`.
    pub fn holds(&self, rel_tol: f64) -> bool {
        self.slack >= -rel_tol * self.bound
    }
}

/// Longest zero tail appended before reading output energy.
pub const DEFAULT_MAX_TAIL: usize = 16_384;
/// Transients are run out until they fall below this factor.
pub const DECAY_TOL: f64 = 1e-12;

/// Compare `‖y‖²` against `‖G + D‖²∞ ‖u‖²` on a zero-padded copy of `u`.
pub fn energy_gain_check(dt: &DtLayer, u: &Signal) -> Result<EnergyGain> {
    energy_gain_check_with(dt, u, DEFAULT_MAX_TAIL)
}

pub fn energy_gain_check_with(dt: &DtLayer, u: &Signal, max_tail: usize) -> Result<EnergyGain> {
    ensure_stable(dt)?;
    let tail = decay_padding(dt.max_pole_modulus(), DECAY_TOL, max_tail);
    let padded = u.zero_padded(tail);
    let y = run_recursion(dt, &padded, None)?;
    let norm = layer_hinf(dt, None)?.value;
    let output_energy = signal_energy(&y);
    let bound = norm * norm * signal_energy(u);
    Ok(EnergyGain { output_energy, bound, slack: bound - output_energy })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layer::Arch;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn rank_one(pole: C64, cvec: &[C64], bvec: &[C64]) -> DtLayer {
        let h = cvec.len();
        DtLayer {
            lambda_bar: vec![pole],
            b_bar: DMatrix::from_row_slice(1, h, bvec),
            c_fwd: DMatrix::from_column_slice(h, 1, cvec),
            c_bwd: None,
            d: DMatrix::zeros(h, h),
            b_fixed: false,
            arch: Arch::Mimo,
            conj_pairs: None,
        }
    }

    #[test]
    fn closed_form_examples() {
        let l = rank_one(c(0.5, 0.0), &[c(1.0, 0.0)], &[c(0.5, 0.0)]);
        assert!((subsystem_hinf(&l, 0).unwrap() - 1.0).abs() < 1e-15);
        let l = rank_one(c(0.0, 0.0), &[c(3.0, 4.0)], &[c(0.0, 2.0)]);
        assert!((subsystem_hinf(&l, 0).unwrap() - 10.0).abs() < 1e-14);
        // ‖c‖ = 2, ‖b̄‖ = 3, λ̄ = 0.9
        let l = rank_one(c(0.9, 0.0), &[c(2.0, 0.0), c(0.0, 0.0)], &[c(0.0, 3.0), c(0.0, 0.0)]);
        assert!((subsystem_hinf(&l, 0).unwrap() - 60.0).abs() < 1e-12);
        let l = rank_one(c(1.0, 0.0), &[c(1.0, 0.0)], &[c(1.0, 0.0)]);
        assert!(matches!(subsystem_hinf(&l, 0), Err(Error::UnstableState { index: 0, .. })));
    }

    #[test]
    fn sweep_matches_closed_form_at_dc_peak() {
        let l = rank_one(c(0.5, 0.0), &[c(1.0, 0.0)], &[c(0.5, 0.0)]);
        let v = hinf_bruteforce(&l, &[0], 4096, 60).unwrap();
        assert!((v - 1.0).abs() < 1e-8);
        assert_eq!(hinf_bruteforce(&l, &[], 4096, 60).unwrap(), 0.0);
    }

    #[test]
    fn negative_real_pole_peaks_at_nyquist() {
        let l = rank_one(c(-0.5, 0.0), &[c(1.0, 0.0)], &[c(1.0, 0.0)]);
        let est = hinf_sweep(&l, &[0], &SweepOptions { seed_pole_angles: false, ..Default::default() }).unwrap();
        assert!((est.theta - std::f64::consts::PI).abs() < 1e-6, "{}", est.theta);
        assert!((est.value - 2.0).abs() < 1e-9);
        // the sweep oracle agrees with a dense scan of |e^{jθ} + 0.5|^{-1}
        let dense = (0..100_000)
            .map(|k| 1.0 / (C64::from_polar(1.0, TAU * k as f64 / 100_000.0) + c(0.5, 0.0)).norm())
            .fold(0.0f64, f64::max);
        assert!((dense - est.value).abs() < 1e-9);
    }

    #[test]
    fn rank_one_spectral_norm_factorizes() {
        let cvec = [c(1.0, -2.0), c(0.3, 0.7), c(-1.1, 0.0)];
        let bvec = [c(0.2, 0.1), c(-0.5, 2.0), c(1.0, 1.0)];
        let outer = DMatrix::from_fn(3, 3, |r, col| cvec[r] * bvec[col]);
        let cn: f64 = cvec.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let bn: f64 = bvec.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        assert!((sigma_max(&outer) - cn * bn).abs() <= 1e-12 * cn * bn);
    }

    #[test]
    fn power_iteration_matches_gram_eigensolve() {
        let g = DMatrix::from_fn(10, 10, |r, col| {
            c(((r * 7 + col * 3) % 11) as f64 - 5.0, ((r + 2 * col) % 5) as f64 * 0.3)
        });
        let gram = g.adjoint() * &g;
        let eig = gram.symmetric_eigenvalues().iter().copied().fold(0.0f64, f64::max).sqrt();
        assert!((sigma_max(&g) - eig).abs() <= 1e-8 * eig);
    }

    #[test]
    fn energies() {
        assert_eq!(signal_energy(&Signal::zeros(8, 2)), 0.0);
        assert_eq!(signal_energy(&Signal::impulse(8, 2, 1)), 1.0);
        // y_k = 0.25 * 0.5^k: Σ 0.0625 * 0.25^k = 1/12
        let y = Signal::from_fn(200, 1, |k, _| 0.25 * 0.5f64.powi(k as i32));
        assert!((signal_energy(&y) - 1.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn parseval_examples() {
        assert!(parseval_check(&Signal::impulse(64, 1, 0)) < 1e-12);
        assert_eq!(parseval_check(&Signal::zeros(64, 3)), 0.0);
    }

    #[test]
    fn energy_gain_examples() {
        let l = rank_one(c(0.5, 0.0), &[c(1.0, 0.0)], &[c(0.5, 0.0)]);
        let z = energy_gain_check(&l, &Signal::zeros(16, 1)).unwrap();
        assert_eq!((z.output_energy, z.bound), (0.0, 0.0));
        // impulse response 0.5^k, k >= 1: energy (1/4)/(1 - 1/4) = 1/3
        let e = energy_gain_check(&l, &Signal::impulse(1, 1, 0)).unwrap();
        assert!((e.output_energy - 1.0 / 3.0).abs() < 1e-12, "{}", e.output_energy);
        assert!((e.bound - 1.0).abs() < 1e-8);
        assert!(e.holds(1e-8));
    }

    #[test]
    fn peak_frequency_input_approaches_bound_monotonically() {
        // peak gain is at θ = 0, so the worst input is a constant
        let l = rank_one(c(0.5, 0.0), &[c(1.0, 0.0)], &[c(0.5, 0.0)]);
        let mut last = 0.0;
        for len in [8usize, 32, 128, 512, 2048] {
            let e = energy_gain_check(&l, &Signal::from_fn(len, 1, |_, _| 1.0)).unwrap();
            let ratio = e.output_energy / e.bound;
            assert!(ratio < 1.0 && ratio > last, "len {len}: {ratio}");
            last = ratio;
        }
        assert!(last > 0.998);
    }
}
