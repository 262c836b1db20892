//! Remove the weakest pair from a layer and compare the distortion with the
//! per-state bound on noise, an impulse and a peak-frequency sinusoid.

use ssm_prune::verify::{layer_suite_trial, SuiteConfig};

fn main() -> ssm_prune::Result<()> {
    let cfg = SuiteConfig { noise_inputs: 4, ..SuiteConfig::default() };
    for trial in 0..3 {
        let rows = layer_suite_trial(1, trial, &cfg)?;
        println!("trial {trial}: pruned states [{}]", rows[0].pruned);
        for r in &rows {
            println!(
                "  {:<9?} distortion {:.3e}  bound {:.3e}  ratio {:.4}  triangle bound {:.3e}",
                r.probe, r.distortion, r.bound, r.ratio, r.triangle_bound
            );
        }
    }
    Ok(())
}
