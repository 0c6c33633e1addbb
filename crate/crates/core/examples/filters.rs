//! Soft and Hard Concrete gate outputs for a range of logits.

use modgate::autodiff::{Tensor, Value};
use modgate::mfm::{hard_decision, open_unit, soft_decision, HardConcreteParams, Phase};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> modgate::Result<()> {
    println!("soft gate keep fraction for logit gap z1 - z2:");
    for lambda in [1.0, 10.0, 1000.0] {
        let row: Vec<String> = [-0.5, -0.05, 0.0, 0.05, 0.5]
            .iter()
            .map(|&gap| {
                let s = Value::constant(Tensor::vector(vec![gap, 0.0])).softmax(lambda).unwrap();
                format!("{:.4}", soft_decision(&s).unwrap().values().keep)
            })
            .collect();
        println!("  lambda={lambda:<6} {}", row.join("  "));
    }

    let hc = HardConcreteParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    println!("hard gate: training samples and evaluation gate");
    for z in [-2.0, -1.0, 0.0, 1.0, 2.0] {
        let samples: Vec<String> = (0..6)
            .map(|_| {
                let d = hard_decision(&Value::scalar(z), &hc, open_unit(&mut rng), Phase::Train).unwrap();
                format!("{:.3}", d.values().keep)
            })
            .collect();
        let eval = hard_decision(&Value::scalar(z), &hc, 0.5, Phase::Eval)?.values().keep;
        println!("  z={z:>4}: {}  eval={eval}", samples.join(" "));
    }
    Ok(())
}
