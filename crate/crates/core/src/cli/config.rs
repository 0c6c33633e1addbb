//! Flat `key = value` configuration files.
//!
//! Grammar, one entry per line:
//!
//! ```text
//! line    := blank | comment | entry
//! comment := '#' any*
//! entry   := key '=' value [comment]
//! list    := value (',' value)*        per-modality lists are in l,a,v order
//! bool    := true | false | on | off | yes | no | 1 | 0
//! ```
//!
//! Keys are unique; unknown keys are rejected. A single file may carry
//! data-generation, model and training keys.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{SynthConfig, DEFAULT_SPLIT};
use crate::error::{Error, Result};
use crate::fusion::FusionKind;
use crate::mfm::FilterMode;
use crate::model::ModelConfig;
use crate::training::{Schedule, TrainConfig, ZeroLabelPolicy};

/// Named ablation variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    #[default]
    Full,
    /// Plain unimodal losses instead of modulated ones.
    NoMl,
    /// No modality filter.
    NoMfm,
    /// Filter without baseline embeddings.
    NoBe,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [Ablation::Full, Ablation::NoMl, Ablation::NoMfm, Ablation::NoBe];

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Self::Full),
            "no-ml" => Ok(Self::NoMl),
            "no-mfm" => Ok(Self::NoMfm),
            "no-be" => Ok(Self::NoBe),
            other => Err(Error::Config(format!(
                "unknown ablation {other:?} (expected full | no-ml | no-mfm | no-be)"
            ))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Full => "full",
            Self::NoMl => "no-ml",
            Self::NoMfm => "no-mfm",
            Self::NoBe => "no-be",
        }
    }

    /// Applies the variant on top of a full configuration.
    pub fn apply(self, model: &mut ModelConfig, train: &mut TrainConfig) {
        match self {
            Self::Full => {}
            Self::NoMl => train.modulation = false,
            Self::NoMfm => model.filter = FilterMode::None,
            Self::NoBe => model.baseline = false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub synth: SynthConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub split: [f64; 3],
    pub ablation: Ablation,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            synth: SynthConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            split: DEFAULT_SPLIT,
            ablation: Ablation::Full,
        }
    }
}

/// Splits text into an ordered key → value map.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Config(format!("line {}: expected key = value", i + 1)));
        };
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", i + 1)));
        }
        if out.insert(k.to_string(), v.to_string()).is_some() {
            return Err(Error::Config(format!("line {}: duplicate key {k}", i + 1)));
        }
    }
    Ok(out)
}

fn scalar<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
}

fn boolean(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected a boolean, got {v:?}"))),
    }
}

/// A per-modality triple; a single value is broadcast to all three.
fn triple<T: FromStr + Copy>(key: &str, v: &str) -> Result<[T; 3]> {
    let parts: Vec<&str> = v.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [one] => Ok([scalar(key, one)?; 3]),
        [a, b, c] => Ok([scalar(key, a)?, scalar(key, b)?, scalar(key, c)?]),
        _ => Err(Error::Config(format!("{key}: expected 1 or 3 comma-separated values"))),
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut kv = parse_kv(text)?;
        // `seed` sets both seeds, so `train_seed` must come after it.
        let train_seed = kv.remove("train_seed");
        for (k, v) in &kv {
            cfg.set(k, v)?;
        }
        if let Some(v) = train_seed {
            cfg.set("train_seed", &v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let (s, m, t) = (&mut self.synth, &mut self.model, &mut self.train);
        match key {
            "size" => s.size = scalar(key, v)?,
            "seed" => {
                s.seed = scalar(key, v)?;
                t.seed = s.seed;
            }
            "train_seed" => t.seed = scalar(key, v)?,
            "feature_dims" => s.feature_dims = triple(key, v)?,
            "seq_lens" => s.seq_lens = triple(key, v)?,
            "informativeness" => s.informativeness = triple(key, v)?,
            "noise_prob" => s.noise_prob = triple(key, v)?,
            "sigma" => s.sigma = scalar(key, v)?,
            "latent_dim" => s.latent_dim = scalar(key, v)?,
            "noise_scale" => s.noise_scale = scalar(key, v)?,

            "d" => m.d = scalar(key, v)?,
            "kernel" => m.kernel = triple(key, v)?,
            "layers" => m.layers = scalar(key, v)?,
            "fusion" => m.fusion = FusionKind::parse(v)?,
            "filter" => m.filter = FilterMode::parse(v)?,
            "baseline" => m.baseline = boolean(key, v)?,
            "shared_filter" => m.shared_filter = boolean(key, v)?,
            "lambda" => m.lambda = scalar(key, v)?,
            "hc_beta" => m.hard_concrete.beta = scalar(key, v)?,
            "hc_zeta" => m.hard_concrete.zeta = scalar(key, v)?,
            "hc_gamma" => m.hard_concrete.gamma = scalar(key, v)?,

            "learning_rate" => t.learning_rate = scalar(key, v)?,
            "batch_size" => t.batch_size = scalar(key, v)?,
            "epochs" => t.epochs = scalar(key, v)?,
            "modulation" => t.modulation = boolean(key, v)?,
            "penalty_weight" => t.penalty_weight = scalar(key, v)?,
            "schedule" => t.schedule = Schedule::parse(v)?,
            "freeze_classifier_phase1" => t.freeze_classifier_phase1 = boolean(key, v)?,
            "modulation_eps" => t.modulation_eps = scalar(key, v)?,
            "acc2_zero" => t.zero_label = ZeroLabelPolicy::parse(v)?,

            "split" => self.split = triple(key, v)?,
            "ablation" => self.ablation = Ablation::parse(v)?,
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.train.validate()?;
        let mut model = self.model.clone();
        model.input_dims = self.synth.feature_dims;
        model.validate()?;
        if (self.split.iter().sum::<f64>() - 1.0).abs() > 1e-9 || self.split.iter().any(|&r| r < 0.0) {
            return Err(Error::Config(format!(
                "split {:?} must be >= 0 and sum to 1",
                self.split
            )));
        }
        Ok(())
    }

    /// Model and training settings with the ablation applied.
    pub fn resolved(&self) -> (ModelConfig, TrainConfig) {
        let (mut model, mut train) = (self.model.clone(), self.train.clone());
        self.ablation.apply(&mut model, &mut train);
        (model, train)
    }

    /// Renders every key back into the file grammar.
    pub fn to_text(&self) -> String {
        fn join<T: ToString>(xs: &[T]) -> String {
            xs.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
        }
        let (s, m, t) = (&self.synth, &self.model, &self.train);
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        kv("size", s.size.to_string());
        kv("seed", s.seed.to_string());
        kv("train_seed", self.train.seed.to_string());
        kv("feature_dims", join(&s.feature_dims));
        kv("seq_lens", join(&s.seq_lens));
        kv("informativeness", join(&s.informativeness));
        kv("noise_prob", join(&s.noise_prob));
        kv("sigma", s.sigma.to_string());
        kv("latent_dim", s.latent_dim.to_string());
        kv("noise_scale", s.noise_scale.to_string());
        kv("d", m.d.to_string());
        kv("kernel", join(&m.kernel));
        kv("layers", m.layers.to_string());
        kv("fusion", m.fusion.as_str().into());
        kv("filter", m.filter.as_str().into());
        kv("baseline", m.baseline.to_string());
        kv("shared_filter", m.shared_filter.to_string());
        kv("lambda", m.lambda.to_string());
        kv("hc_beta", m.hard_concrete.beta.to_string());
        kv("hc_zeta", m.hard_concrete.zeta.to_string());
        kv("hc_gamma", m.hard_concrete.gamma.to_string());
        kv("learning_rate", t.learning_rate.to_string());
        kv("batch_size", t.batch_size.to_string());
        kv("epochs", t.epochs.to_string());
        kv("modulation", t.modulation.to_string());
        kv("penalty_weight", t.penalty_weight.to_string());
        kv(
            "schedule",
            match t.schedule {
                Schedule::PerBatch => "per_batch".into(),
                Schedule::PerEpoch => "per_epoch".into(),
            },
        );
        kv("freeze_classifier_phase1", t.freeze_classifier_phase1.to_string());
        kv("modulation_eps", t.modulation_eps.to_string());
        kv(
            "acc2_zero",
            match t.zero_label {
                ZeroLabelPolicy::Exclude => "exclude".into(),
                ZeroLabelPolicy::Negative => "negative".into(),
            },
        );
        kv("split", join(&self.split));
        kv("ablation", self.ablation.as_str().into());
        out
    }
}
