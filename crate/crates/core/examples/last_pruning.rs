//! Score states with LAST, prune half of them across layers and measure the
//! output distortion.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ssm_prune::pruning::{prune_model, score_model, select_global, MaskMode, ScoreKind};
use ssm_prune::simulate::model_forward;
use ssm_prune::synth::{random_model, white_noise, SynthConfig};

fn main() -> ssm_prune::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let model = random_model(&mut rng, &SynthConfig::new(3, 8, 2))?;

    let table = score_model(&model, ScoreKind::Last)?;
    for (l, s) in table.layers.iter().enumerate() {
        let scores: Vec<String> = s.rank.iter().map(|&i| format!("{:.3}", s.last[i])).collect();
        println!("layer {l} LAST (sorted): {}", scores.join(" "));
    }

    let mask = select_global(&table, 0.5)?;
    println!(
        "remaining {:?}, global ratio {:.3}, average layer ratio {:.3}",
        mask.remaining_per_layer(),
        mask.global_ratio(),
        mask.average_layer_ratio()
    );

    let pruned = prune_model(&model, &mask, MaskMode::Compacted)?;
    let u = white_noise(&mut rng, 256, model.channels());
    let y = model_forward(&model, &u, None)?;
    let y_hat = model_forward(&pruned.model, &u, None)?;
    let err: f64 = y.sub(&y_hat).data().iter().map(|v| v * v).sum();
    let energy: f64 = y.data().iter().map(|v| v * v).sum();
    println!("relative distortion {:.4}", err / energy);
    println!("surviving original indices {:?}", pruned.surviving);
    Ok(())
}
