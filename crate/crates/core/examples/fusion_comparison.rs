//! Trains one model per fusion kind on clean synthetic data.
//!
//! `cargo run --release --example fusion_comparison -- [seed]`

use modgate::cli::Ablation;
use modgate::experiments::{clean_data, run, variant};
use modgate::fusion::FusionKind;

fn main() -> modgate::Result<()> {
    let seed: u64 = std::env::args().nth(1).map_or(0, |s| s.parse().expect("seed"));
    let data = clean_data(seed);
    for kind in FusionKind::ALL {
        let (model, train) = variant(data.feature_dims, kind, Ablation::Full, seed);
        let d = model.d;
        let r = run(&data, model, train, |_| {})?;
        println!(
            "{:<10} params={:<6} mae={:.4} corr={:.4} acc2={:.4}",
            kind.as_str(),
            kind.param_count(d),
            r.metrics.mae,
            r.metrics.corr,
            r.metrics.acc2
        );
    }
    Ok(())
}
