//! Model-level distortion of a LAST mask against the product bound, one
//! pruned state at a time.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ssm_prune::pruning::{select_mask, Criterion};
use ssm_prune::synth::{random_model, white_noise, SynthConfig};
use ssm_prune::verify::model_bound_report;

fn main() -> ssm_prune::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let model = random_model(&mut rng, &SynthConfig::new(3, 8, 2))?;
    let mask = select_mask(&model, Criterion::Last, 0.25, None)?;
    let inputs: Vec<_> = (0..4).map(|_| white_noise(&mut rng, 256, model.channels())).collect();

    let report = model_bound_report(&model, &mask, &inputs)?;
    for s in &report.steps {
        println!(
            "layer {} state {:>2}: measured {:.3e}  bound {:.3e}  ratio {:.2e}  LAST {:.3}",
            s.layer, s.state, s.measured, s.bound, s.ratio, s.last_score
        );
    }
    let t = report.total;
    println!(
        "total: measured {:.3e}, summed bound {:.3e} ({:.2e}), triangle bound {:.3e} ({:.2e})",
        t.measured, t.summed_bound, t.summed_ratio, t.triangle_bound, t.triangle_ratio
    );
    Ok(())
}
