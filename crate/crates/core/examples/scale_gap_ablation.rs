//! Two layers identical up to a 1000x readout scale: Global H∞ empties the
//! weak layer while LAST prunes both evenly.

use ssm_prune::pruning::Criterion;
use ssm_prune::verify::ablation_scale_mismatch;

fn main() -> ssm_prune::Result<()> {
    let methods = [Criterion::UniformHinf, Criterion::GlobalHinf, Criterion::Last];
    let mut mean = [0.0; 3];
    let seeds = 10;
    for seed in 0..seeds {
        let report = ablation_scale_mismatch(seed, 1e3, 0.5)?;
        let line: Vec<String> = methods
            .iter()
            .map(|&m| {
                let row = report.row(m).expect("every method is evaluated");
                format!("{m}: {:?}{}", row.remaining, if row.at_floor[1] { " (floor)" } else { "" })
            })
            .collect();
        println!("seed {seed}: {}", line.join("  "));
        for (k, &m) in methods.iter().enumerate() {
            mean[k] += report.row(m).map_or(0.0, |r| r.distortion) / seeds as f64;
        }
    }
    for (m, d) in methods.iter().zip(mean) {
        println!("{m:>14}: mean relative distortion {d:.4}");
    }
    Ok(())
}
