//! Write a checkpoint and signals to disk and read them back.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ssm_prune::io::{load_model, read_signal, save_model, write_signal_bin, write_signal_csv};
use ssm_prune::synth::{random_model, white_noise, SynthConfig};

fn main() -> ssm_prune::Result<()> {
    let dir = std::env::temp_dir().join("ssm-prune-checkpoint-io");
    std::fs::create_dir_all(&dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let model = random_model(&mut rng, &SynthConfig::new(2, 4, 2))?;

    let path = dir.join("model.json");
    save_model(&model, &path)?;
    let back = load_model(&path)?;
    println!("checkpoint {} round trip exact: {}", path.display(), back == model);

    let u = white_noise(&mut rng, 64, 2);
    write_signal_bin(&u, dir.join("u.bin"))?;
    write_signal_csv(&u, dir.join("u.csv"))?;
    println!("binary exact: {}", read_signal(dir.join("u.bin"))? == u);
    println!("csv exact: {}", read_signal(dir.join("u.csv"))? == u);
    Ok(())
}
