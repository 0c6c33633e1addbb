//! Fuses three fixed embeddings with each fusion kind.

use modgate::autodiff::{ParamStore, Tensor, Value};
use modgate::fusion::{Fusion, FusionKind};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> modgate::Result<()> {
    let d = 4;
    let xs = [
        Value::constant(Tensor::vector(vec![1.0, 0.0, 0.5, -0.5])),
        Value::constant(Tensor::vector(vec![0.0, 1.0, -1.0, 0.0])),
        Value::constant(Tensor::vector(vec![0.2, 0.2, 0.2, 0.2])),
    ];
    for kind in FusionKind::ALL {
        let mut store = ParamStore::new();
        let fusion = Fusion::register(&mut store, kind, d, &mut ChaCha8Rng::seed_from_u64(1))?;
        let out = fusion.forward(&xs)?;
        println!(
            "{:<10} params={:<4} out={:.3?}",
            kind.as_str(),
            store.count("fusion"),
            out.to_vec()
        );
    }
    Ok(())
}
