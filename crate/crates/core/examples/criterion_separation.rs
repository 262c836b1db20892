//! Slow poles with small readouts look important by magnitude but carry
//! little energy; H∞ scores see through that.

use ssm_prune::verify::criterion_separation;

fn main() -> ssm_prune::Result<()> {
    let (mut h, mut m) = (0.0, 0.0);
    for seed in 0..10 {
        let p = criterion_separation(seed, 0.5)?;
        println!("seed {seed}: H∞ {:.4}  magnitude {:.4}", p.first, p.second);
        h += p.first / 10.0;
        m += p.second / 10.0;
    }
    println!("mean: H∞ {h:.4}  magnitude {m:.4}");
    Ok(())
}
