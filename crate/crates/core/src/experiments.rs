//! Synthetic benchmark setups shared by the examples and the acceptance
//! suite, plus a one-call generate → split → train → test runner.

use crate::cli::Ablation;
use crate::data::{generate_synthetic, split, SynthConfig, DEFAULT_SPLIT};
use crate::error::Result;
use crate::fusion::FusionKind;
use crate::model::{Model, ModelConfig};
use crate::training::{evaluate, EpochLog, MetricsReport, TrainConfig, Trainer, ZeroLabelPolicy};

/// Acoustic channel is pure noise in every utterance, language is clean, and
/// visual carries the label under full additive noise (`w_v = 0`, `σ = 1`).
/// With visual as informative as language the two would be redundant and
/// the filter would have no reason to prefer either.
pub fn noise_filtering_data(seed: u64) -> SynthConfig {
    SynthConfig {
        seed,
        sigma: 1.0,
        informativeness: [1.0, 1.0, 0.0],
        noise_prob: [0.0, 1.0, 0.0],
        ..Default::default()
    }
}

/// Every modality independently replaced by noise with probability 0.3.
pub fn ablation_data(seed: u64) -> SynthConfig {
    SynthConfig {
        seed,
        noise_prob: [0.3; 3],
        ..Default::default()
    }
}

/// Default data without injected noise.
pub fn clean_data(seed: u64) -> SynthConfig {
    SynthConfig {
        seed,
        ..Default::default()
    }
}

pub const BENCHMARK_EPOCHS: usize = 30;

/// Model and training settings of one benchmark variant.
pub fn variant(dims: [usize; 3], fusion: FusionKind, ablation: Ablation, seed: u64) -> (ModelConfig, TrainConfig) {
    let mut model = ModelConfig {
        fusion,
        ..ModelConfig::desk_scale(dims)
    };
    let mut train = TrainConfig {
        epochs: BENCHMARK_EPOCHS,
        seed,
        ..Default::default()
    };
    ablation.apply(&mut model, &mut train);
    (model, train)
}

#[derive(Debug, Clone)]
pub struct RunResult {
    /// On the test split.
    pub metrics: MetricsReport,
    pub mean_keep: Option<[f64; 3]>,
    pub logs: Vec<EpochLog>,
    pub model: Model,
}

/// Generates `data`, splits it with the training seed, trains, and scores the
/// test split. `model.input_dims` is taken from the generated data.
pub fn run(
    data: &SynthConfig,
    mut model: ModelConfig,
    train: TrainConfig,
    on_epoch: impl FnMut(&EpochLog),
) -> Result<RunResult> {
    let ds = generate_synthetic(data)?;
    let sp = split(&ds, DEFAULT_SPLIT, train.seed)?;
    model.input_dims = ds.feature_dims()?;
    let seed = train.seed;
    let mut trainer = Trainer::new(Model::new(model, seed)?, train)?;
    let logs = trainer.fit(&sp, on_epoch)?;
    let model = trainer.into_model();
    let ev = evaluate(&model, &sp.test, ZeroLabelPolicy::Exclude)?;
    Ok(RunResult {
        metrics: ev.metrics,
        mean_keep: ev.mean_keep,
        logs,
        model,
    })
}
