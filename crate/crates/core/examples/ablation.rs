//! Trains the full model and the three ablations on the noise-injected
//! benchmark and prints test MAE per seed.
//!
//! `cargo run --release --example ablation -- [seed ...]`

use modgate::cli::Ablation;
use modgate::experiments::{ablation_data, run, variant};
use modgate::fusion::FusionKind;

fn main() -> modgate::Result<()> {
    let seeds: Vec<u64> = std::env::args().skip(1).map(|s| s.parse().expect("seed")).collect();
    let seeds = if seeds.is_empty() { vec![0, 1, 2] } else { seeds };
    println!("seed  {:>8}  {:>8}  {:>8}  {:>8}", "full", "no-ml", "no-mfm", "no-be");
    for seed in seeds {
        let data = ablation_data(seed);
        let mut row = format!("{seed:>4}");
        for ab in Ablation::ALL {
            let (model, train) = variant(data.feature_dims, FusionKind::Addition, ab, seed);
            let r = run(&data, model, train, |_| {})?;
            row.push_str(&format!("  {:>8.4}", r.metrics.mae));
        }
        println!("{row}");
    }
    Ok(())
}
