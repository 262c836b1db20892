//! Embed per-channel SISO systems as one block-diagonal layer and prune it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ssm_prune::layer::{siso_block_to_mimo, Activation, Model};
use ssm_prune::pruning::{select_mask, Criterion};
use ssm_prune::synth::random_dt_layer;

fn main() -> ssm_prune::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let systems: Vec<_> = (0..3).map(|_| random_dt_layer(&mut rng, 4, 1, (0.3, 0.95), 1.0)).collect();
    let layer = siso_block_to_mimo(&systems)?;
    println!("arch {:?}, order {}, channels {}", layer.arch, layer.order(), layer.channels());

    let back = layer.siso_channel(1)?;
    println!("channel 1 poles recovered: {}", back.lambda_bar == systems[1].lambda_bar);

    let model = Model::new(vec![layer], Activation::Identity)?;
    let mask = select_mask(&model, Criterion::UniformHinf, 0.5, None)?;
    println!("kept states {:?}", mask.layers[0].kept_indices());
    Ok(())
}
