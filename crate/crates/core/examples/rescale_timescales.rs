//! Adapt step sizes to a new sampling rate: halving the rate doubles every
//! delta and moves the discrete poles toward the origin.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ssm_prune::discretize::{discretize_model, rescale_model};
use ssm_prune::synth::{random_ct_model, SynthConfig};

fn main() -> ssm_prune::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let ct = random_ct_model(&mut rng, &SynthConfig::new(1, 4, 1))?;
    for r in [0.5, 1.0, 2.0] {
        let dt = discretize_model(&rescale_model(&ct, r)?)?;
        let moduli: Vec<String> = dt.layers[0].lambda_bar.iter().map(|l| format!("{:.5}", l.norm())).collect();
        println!("rate ratio {r}: |poles| {}", moduli.join(" "));
    }
    Ok(())
}
