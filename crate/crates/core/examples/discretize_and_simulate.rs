//! Draw a continuous-time model, discretize it and run an input through it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ssm_prune::discretize::{check_dt_stability, discretize_model};
use ssm_prune::simulate::{imag_residue, model_forward};
use ssm_prune::synth::{random_ct_model, white_noise, SynthConfig};

fn main() -> ssm_prune::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let ct = random_ct_model(&mut rng, &SynthConfig::new(2, 8, 2))?;
    let model = discretize_model(&ct)?;

    for (l, dt) in model.layers.iter().enumerate() {
        let margin = check_dt_stability(dt).min_margin().unwrap_or(f64::NAN);
        println!("layer {l}: order {}, max |pole| {:.6}, margin {margin:.3e}", dt.order(), dt.max_pole_modulus());
    }

    let u = white_noise(&mut rng, 128, model.channels());
    let y = model_forward(&model, &u, None)?;
    let residue = imag_residue(&model.layers[0], &u, None)?;
    println!("output energy {:.4}, imaginary residue in layer 0 {residue:.2e}", y.data().iter().map(|v| v * v).sum::<f64>());
    Ok(())
}
