//! Trains briefly, saves the model, reloads it and compares evaluations.

use modgate::cli::{load_model, save_model};
use modgate::data::{generate_synthetic, split, SynthConfig, DEFAULT_SPLIT};
use modgate::model::{Model, ModelConfig};
use modgate::training::{evaluate, TrainConfig, Trainer, ZeroLabelPolicy};

fn main() -> modgate::Result<()> {
    let ds = generate_synthetic(&SynthConfig {
        size: 300,
        ..Default::default()
    })?;
    let sp = split(&ds, DEFAULT_SPLIT, 0)?;
    let model = Model::new(ModelConfig::desk_scale(ds.feature_dims()?), 0)?;
    let mut trainer = Trainer::new(
        model,
        TrainConfig {
            epochs: 3,
            ..Default::default()
        },
    )?;
    trainer.fit(&sp, |_| {})?;
    let model = trainer.into_model();

    let path = std::env::temp_dir().join("modgate-example-model.bin");
    save_model(&model, &path)?;
    let loaded = load_model(&path)?;
    let bytes = std::fs::metadata(&path)?.len();
    let a = evaluate(&model, &sp.test, ZeroLabelPolicy::Exclude)?;
    let b = evaluate(&loaded, &sp.test, ZeroLabelPolicy::Exclude)?;
    let drift = a
        .predictions
        .iter()
        .zip(&b.predictions)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    println!("{} tensors, {bytes} bytes at {}", model.params().len(), path.display());
    println!(
        "in-memory mae {:.6}, loaded mae {:.6}, max prediction drift {drift:.2e}",
        a.metrics.mae, b.metrics.mae
    );
    std::fs::remove_file(&path)?;
    Ok(())
}
