//! Closed-form subsystem norms against a brute-force frequency sweep.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ssm_prune::norms::{hinf_bruteforce, layer_hinf, subsystem_hinf};
use ssm_prune::synth::{random_model, SynthConfig};

fn main() -> ssm_prune::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let model = random_model(&mut rng, &SynthConfig::new(1, 6, 2))?;
    let dt = &model.layers[0];

    println!("state  |pole|     closed form    sweep          rel err");
    for i in 0..dt.order() {
        let exact = subsystem_hinf(dt, i)?;
        let swept = hinf_bruteforce(dt, &[i], 4096, 60)?;
        println!(
            "{i:>5}  {:.6}  {exact:>13.6e}  {swept:>13.6e}  {:.1e}",
            dt.lambda_bar[i].norm(),
            (exact - swept).abs() / exact
        );
    }
    let whole = layer_hinf(dt, None)?;
    println!("layer norm {:.6e} at theta {:.4}", whole.value, whole.theta);
    Ok(())
}
