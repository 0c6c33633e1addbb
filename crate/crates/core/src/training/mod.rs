//! Two-phase optimization, Adam, and evaluation metrics.
//!
//! Each training step first updates the unimodal encoders (and the shared
//! classifier) with the modulated unimodal losses, then runs a fresh forward
//! through the filter and fusion and updates every parameter with the
//! multimodal loss plus the weighted soft-filter penalty.

mod adam;
mod metrics;

pub use adam::{AdamConfig, AdamState};
pub use metrics::{
    compute_metrics, metric_acc2_f1, metric_acc7, metric_corr, metric_mae, MetricsReport, ZeroLabelPolicy,
};

use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::Value;
use crate::data::{Dataset, Split, Utterance};
use crate::error::{Error, Result};
use crate::mfm::{DecisionValues, Phase};
use crate::model::Model;
use crate::modulation::{ModulatedLoss, UnimodalLosses, DEFAULT_EPS};

/// When the two phases alternate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    /// Phase 1 then phase 2 on every batch.
    #[default]
    PerBatch,
    /// Phase 1 over the whole epoch, then phase 2 over the whole epoch.
    PerEpoch,
}

impl Schedule {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "per_batch" => Ok(Self::PerBatch),
            "per_epoch" => Ok(Self::PerEpoch),
            other => Err(Error::Config(format!(
                "unknown schedule {other:?} (expected per_batch | per_epoch)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub modulation: bool,
    pub penalty_weight: f64,
    pub seed: u64,
    pub schedule: Schedule,
    /// Keep the shared classifier out of the unimodal update.
    pub freeze_classifier_phase1: bool,
    pub modulation_eps: f64,
    pub zero_label: ZeroLabelPolicy,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 32,
            epochs: 20,
            modulation: true,
            penalty_weight: 0.1,
            seed: 0,
            schedule: Schedule::PerBatch,
            freeze_classifier_phase1: false,
            modulation_eps: DEFAULT_EPS,
            zero_label: ZeroLabelPolicy::Exclude,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) {
            return Err(Error::Config(format!(
                "learning rate must be >= 0, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        if !(self.penalty_weight >= 0.0) {
            return Err(Error::Config("penalty weight must be >= 0".into()));
        }
        Ok(())
    }
}

/// Scalars from one two-phase step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub phase1_loss: f64,
    pub phase2_loss: f64,
    /// Batch-mean keep fraction per modality (1 without a filter).
    pub mean_keep: [f64; 3],
}

/// One line of the training log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub phase1_loss: f64,
    pub phase2_loss: f64,
    pub eval: MetricsReport,
    pub mean_keep: [f64; 3],
}

impl fmt::Display for EpochLog {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "epoch={} phase1_loss={:.6} phase2_loss={:.6} eval_mae={:.6} eval_corr={:.6} eval_acc2={:.6} keep_l={:.6} keep_a={:.6} keep_v={:.6}",
            self.epoch,
            self.phase1_loss,
            self.phase2_loss,
            self.eval.mae,
            self.eval.corr,
            self.eval.acc2,
            self.mean_keep[0],
            self.mean_keep[1],
            self.mean_keep[2],
        )
    }
}

/// Evaluation output: metrics plus per-utterance predictions and gates.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub metrics: MetricsReport,
    pub predictions: Vec<f64>,
    pub decisions: Vec<[DecisionValues; 3]>,
    /// Mean keep per modality; `None` for models without a filter.
    pub mean_keep: Option<[f64; 3]>,
}

/// Deterministic evaluation-mode pass over a dataset.
pub fn evaluate(model: &Model, dataset: &Dataset, policy: ZeroLabelPolicy) -> Result<Evaluation> {
    if dataset.is_empty() {
        return Err(Error::Data("cannot evaluate an empty dataset".into()));
    }
    let mut predictions = Vec::with_capacity(dataset.len());
    let mut decisions = Vec::with_capacity(dataset.len());
    for u in dataset.iter() {
        let (p, d) = model.predict(u)?;
        predictions.push(p);
        decisions.push(d);
    }
    let metrics = compute_metrics(&predictions, &dataset.labels(), policy)?;
    let mean_keep = model.mfm().map(|_| {
        let n = decisions.len() as f64;
        [0, 1, 2].map(|i| decisions.iter().map(|d| d[i].keep).sum::<f64>() / n)
    });
    Ok(Evaluation {
        metrics,
        predictions,
        decisions,
        mean_keep,
    })
}

pub struct Trainer {
    model: Model,
    config: TrainConfig,
    adam: AdamState,
    rng: ChaCha8Rng,
    steps: usize,
}

fn batch_mean(terms: Vec<Value>) -> Result<Value> {
    Ok(Value::concat(&terms)?.mean())
}

impl Trainer {
    pub fn new(model: Model, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let adam = AdamState::new(AdamConfig {
            lr: config.learning_rate,
            ..Default::default()
        });
        let rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x5eed));
        Ok(Self {
            model,
            config,
            adam,
            rng,
            steps: 0,
        })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn into_model(self) -> Model {
        self.model
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    fn check_batch(&self, batch: &[&Utterance]) -> Result<()> {
        if batch.is_empty() {
            return Err(Error::Contract("empty batch".into()));
        }
        batch.iter().try_for_each(|u| self.model.check_compatible(u))
    }

    /// Unimodal update. Returns the batch objective.
    pub fn phase1(&mut self, batch: &[&Utterance]) -> Result<f64> {
        self.check_batch(batch)?;
        let mut terms = Vec::with_capacity(batch.len());
        for u in batch {
            let xs = self.model.encode(u)?;
            let preds = self.model.unimodal_predictions(&xs)?;
            let losses = preds.map(|p| p.add_scalar(-u.label).abs());
            let term = if self.config.modulation {
                match UnimodalLosses::new(losses) {
                    Ok(l) => ModulatedLoss::compute(&l, self.config.modulation_eps).total()?,
                    // Non-finite unimodal loss; reported below as a non-finite objective.
                    Err(_) => Value::scalar(f64::NAN),
                }
            } else {
                Value::concat(&losses)?.sum()
            };
            terms.push(term);
        }
        let objective = batch_mean(terms)?;
        let loss = objective.item();
        if !loss.is_finite() {
            return Err(Error::NonFinite {
                step: self.steps,
                phase1: loss,
                phase2: f64::NAN,
            });
        }
        objective.backward()?;
        let include_cls = !self.config.freeze_classifier_phase1;
        self.adam
            .step(self.model.params(), |n| Model::is_unimodal_param(n, include_cls));
        self.model.params().zero_grad();
        Ok(loss)
    }

    /// Whole-model update with the multimodal loss. Returns the objective and
    /// the batch-mean keep fractions.
    pub fn phase2(&mut self, batch: &[&Utterance]) -> Result<(f64, [f64; 3])> {
        self.check_batch(batch)?;
        let mut terms = Vec::with_capacity(batch.len());
        let mut keep = [0.0; 3];
        let w_p = self.config.penalty_weight;
        for u in batch {
            let xs = self.model.encode(u)?;
            let out = self.model.multimodal(&xs, Phase::Train, &mut self.rng)?;
            let mut term = out.prediction.add_scalar(-u.label).abs();
            if w_p > 0.0 {
                let penalties: Vec<Value> = out.decisions.iter().map(|d| d.penalty.clone()).collect();
                term = term.add(&Value::concat(&penalties)?.sum().scale(w_p))?;
            }
            for (k, d) in keep.iter_mut().zip(&out.decisions) {
                *k += d.keep.item();
            }
            terms.push(term);
        }
        let objective = batch_mean(terms)?;
        let loss = objective.item();
        if !loss.is_finite() {
            return Err(Error::NonFinite {
                step: self.steps,
                phase1: f64::NAN,
                phase2: loss,
            });
        }
        objective.backward()?;
        self.adam.step(self.model.params(), |_| true);
        self.model.params().zero_grad();
        let n = batch.len() as f64;
        Ok((loss, keep.map(|k| k / n)))
    }

    /// Phase 1 then phase 2 on one batch.
    pub fn train_step(&mut self, batch: &[&Utterance]) -> Result<StepReport> {
        let phase1_loss = self.phase1(batch)?;
        let (phase2_loss, mean_keep) = self.phase2(batch).map_err(|e| match e {
            Error::NonFinite { step, phase2, .. } => Error::NonFinite {
                step,
                phase1: phase1_loss,
                phase2,
            },
            other => other,
        })?;
        self.steps += 1;
        Ok(StepReport {
            phase1_loss,
            phase2_loss,
            mean_keep,
        })
    }

    fn batches<'a>(&mut self, data: &'a Dataset) -> Vec<Vec<&'a Utterance>> {
        let mut order: Vec<&Utterance> = data.iter().collect();
        order.shuffle(&mut self.rng);
        order
            .chunks(self.config.batch_size)
            .map(<[&Utterance]>::to_vec)
            .collect()
    }

    /// One pass over `train`; returns mean phase losses and mean keep.
    pub fn train_epoch(&mut self, train: &Dataset) -> Result<(f64, f64, [f64; 3])> {
        if train.is_empty() {
            return Err(Error::Data("empty training set".into()));
        }
        let batches = self.batches(train);
        let nb = batches.len() as f64;
        let (mut p1, mut p2, mut keep) = (0.0, 0.0, [0.0; 3]);
        match self.config.schedule {
            Schedule::PerBatch => {
                for b in &batches {
                    let r = self.train_step(b)?;
                    p1 += r.phase1_loss;
                    p2 += r.phase2_loss;
                    for (k, v) in keep.iter_mut().zip(r.mean_keep) {
                        *k += v;
                    }
                }
            }
            Schedule::PerEpoch => {
                for b in &batches {
                    p1 += self.phase1(b)?;
                }
                for b in &batches {
                    let (l, kb) = self.phase2(b).map_err(|e| match e {
                        Error::NonFinite { step, phase2, .. } => Error::NonFinite {
                            step,
                            phase1: p1 / nb,
                            phase2,
                        },
                        other => other,
                    })?;
                    p2 += l;
                    for (k, v) in keep.iter_mut().zip(kb) {
                        *k += v;
                    }
                    self.steps += 1;
                }
            }
        }
        Ok((p1 / nb, p2 / nb, keep.map(|k| k / nb)))
    }

    /// Runs `epochs` epochs, evaluating on `split.val` (or `split.test` when
    /// the validation split is empty) after each one.
    pub fn fit(&mut self, split: &Split, mut on_epoch: impl FnMut(&EpochLog)) -> Result<Vec<EpochLog>> {
        let eval_set = if split.val.is_empty() { &split.test } else { &split.val };
        let mut logs = Vec::with_capacity(self.config.epochs);
        for epoch in 1..=self.config.epochs {
            let (phase1_loss, phase2_loss, mean_keep) = self.train_epoch(&split.train)?;
            let eval = evaluate(&self.model, eval_set, self.config.zero_label)?.metrics;
            let log = EpochLog {
                epoch,
                phase1_loss,
                phase2_loss,
                eval,
                mean_keep,
            };
            on_epoch(&log);
            logs.push(log);
        }
        Ok(logs)
    }
}
