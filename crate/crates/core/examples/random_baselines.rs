//! Structured vs unstructured random pruning at the same parameter budget.

use ssm_prune::verify::random_pruning_comparison;

fn main() -> ssm_prune::Result<()> {
    let (mut s, mut u) = (0.0, 0.0);
    for seed in 0..10 {
        let p = random_pruning_comparison(seed, 0.33)?;
        println!("seed {seed}: structured {:.4}  unstructured {:.4}", p.first, p.second);
        s += p.first / 10.0;
        u += p.second / 10.0;
    }
    println!("mean: structured {s:.4}  unstructured {u:.4}");
    Ok(())
}
