//! Trains a soft-filter model on synthetic data whose acoustic channel is pure
//! noise and prints how much of each modality the filter keeps.
//!
//! `cargo run --release --example noise_filtering -- [seed] [epochs]`

use modgate::cli::Ablation;
use modgate::experiments::{noise_filtering_data, run, variant};
use modgate::fusion::FusionKind;

fn main() -> modgate::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed: u64 = args.next().map_or(0, |s| s.parse().expect("seed"));
    let data = noise_filtering_data(seed);
    let (model, mut train) = variant(data.feature_dims, FusionKind::Addition, Ablation::Full, seed);
    if let Some(e) = args.next() {
        train.epochs = e.parse().expect("epochs");
    }

    let r = run(&data, model, train, |log| println!("{log}"))?;
    let keep = r.mean_keep.expect("soft filter");
    println!("{}", r.metrics);
    println!(
        "test mean keep: language={:.3} acoustic={:.3} visual={:.3}",
        keep[0], keep[1], keep[2]
    );
    Ok(())
}
