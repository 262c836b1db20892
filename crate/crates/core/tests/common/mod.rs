#![allow(dead_code)]

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ssm_prune::simulate::Signal;
use ssm_prune::synth::{random_dt_layer, random_model, white_noise, SynthConfig};
use ssm_prune::{Activation, DtLayer, Model};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn model(seed: u64, layers: usize, n: usize, h: usize) -> Model {
    random_model(&mut rng(seed), &SynthConfig::new(layers, n, h)).expect("synthetic model")
}

pub fn model_with(seed: u64, cfg: &SynthConfig) -> Model {
    random_model(&mut rng(seed), cfg).expect("synthetic model")
}

/// Layer whose poles stay well inside the unit circle, so short horizons
/// capture the whole response.
pub fn fast_layer(seed: u64, n: usize, h: usize) -> DtLayer {
    let mut r = rng(seed);
    let mut dt = random_dt_layer(&mut r, n, h, (0.1, 0.9), 1.0);
    for v in dt.d.iter_mut() {
        *v = rand::Rng::random_range(&mut r, -0.5..0.5);
    }
    dt
}

pub fn fast_model(seed: u64, layers: usize, n: usize, h: usize, act: Activation) -> Model {
    Model::new((0..layers as u64).map(|l| fast_layer(seed.wrapping_mul(31).wrapping_add(l), n, h)).collect(), act)
        .expect("valid model")
}

pub fn noise(seed: u64, len: usize, h: usize) -> Signal {
    white_noise(&mut rng(seed), len, h)
}

pub fn energy(s: &Signal) -> f64 {
    s.data().iter().map(|v| v * v).sum()
}

pub fn max_abs(s: &Signal) -> f64 {
    s.data().iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

pub fn rel_gap(a: &Signal, b: &Signal) -> f64 {
    let diff = a.data().iter().zip(b.data()).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    diff / max_abs(a).max(1e-300)
}
