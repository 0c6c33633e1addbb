//! Generates a small noisy dataset, writes it as JSONL, and summarizes it.
//!
//! `cargo run --example synthetic_data -- [out.jsonl]`

use modgate::data::{generate_synthetic, load_jsonl, save_jsonl, SynthConfig};
use modgate::Modality;

fn main() -> modgate::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "synthetic.jsonl".into());
    let cfg = SynthConfig {
        size: 200,
        noise_prob: [0.0, 0.5, 0.1],
        ..Default::default()
    };
    let ds = generate_synthetic(&cfg)?;
    save_jsonl(&ds, &out)?;
    let back = load_jsonl(&out)?;
    assert_eq!(back, ds);

    let labels = ds.labels();
    let mean = labels.iter().sum::<f64>() / labels.len() as f64;
    println!("{} utterances written to {out}, mean label {mean:.3}", ds.len());
    println!("feature dims {:?}", ds.feature_dims()?);
    for m in Modality::ALL {
        let noisy = ds
            .iter()
            .filter(|u| u.noise_flags.is_some_and(|f| f[m.index()]))
            .count();
        println!("  {:<8} noise-replaced in {noisy} utterances", m.name());
    }
    Ok(())
}
