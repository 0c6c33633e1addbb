//! Utterances, datasets, synthetic generation and JSONL IO.

mod jsonl;
mod synth;

pub use jsonl::{load_jsonl, parse_jsonl, save_jsonl, write_jsonl};
pub use synth::{generate_synthetic, SynthConfig};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::modality::Modality;

pub const LABEL_RANGE: (f64, f64) = (-3.0, 3.0);

/// One aligned three-modality sample with a sentiment label in `[-3, 3]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub label: f64,
    /// `T_m × d_m` sequences in (l, a, v) order.
    pub sequences: [Tensor; 3],
    /// Ground-truth "this modality is pure noise" flags, when known.
    pub noise_flags: Option<[bool; 3]>,
}

impl Utterance {
    pub fn sequence(&self, m: Modality) -> &Tensor {
        &self.sequences[m.index()]
    }

    pub fn feature_dims(&self) -> [usize; 3] {
        [0, 1, 2].map(|i| self.sequences[i].cols())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.label >= LABEL_RANGE.0 && self.label <= LABEL_RANGE.1) {
            return Err(Error::Schema(format!(
                "utterance {}: label {} outside [-3, 3]",
                self.id, self.label
            )));
        }
        for m in Modality::ALL {
            let s = self.sequence(m);
            if s.rank() != 2 || s.shape()[0] == 0 || s.shape()[1] == 0 {
                return Err(Error::Schema(format!(
                    "utterance {}: {m} sequence has shape {:?}, need T >= 1 and d >= 1",
                    self.id,
                    s.shape()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub utterances: Vec<Utterance>,
}

impl Dataset {
    /// Validates every utterance and that feature dims agree across the set.
    pub fn new(utterances: Vec<Utterance>) -> Result<Self> {
        let ds = Self { utterances };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let Some(first) = self.utterances.first() else {
            return Err(Error::Data("empty dataset".into()));
        };
        let dims = first.feature_dims();
        for u in &self.utterances {
            u.validate()?;
            if u.feature_dims() != dims {
                return Err(Error::Schema(format!(
                    "utterance {} has feature dims {:?}, dataset uses {:?}",
                    u.id,
                    u.feature_dims(),
                    dims
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    /// Per-modality feature dims `(d_l, d_a, d_v)`.
    pub fn feature_dims(&self) -> Result<[usize; 3]> {
        self.utterances
            .first()
            .map(Utterance::feature_dims)
            .ok_or_else(|| Error::Data("empty dataset".into()))
    }

    pub fn labels(&self) -> Vec<f64> {
        self.utterances.iter().map(|u| u.label).collect()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Utterance> {
        self.utterances.iter()
    }
}

/// Train / validation / test partition.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

pub const DEFAULT_SPLIT: [f64; 3] = [0.7, 0.1, 0.2];

/// Seeded shuffle, then contiguous slices with the given ratios.
pub fn split(dataset: &Dataset, ratios: [f64; 3], seed: u64) -> Result<Split> {
    if ratios.iter().any(|&r| !(r >= 0.0)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "split ratios {ratios:?} must be >= 0 and sum to 1"
        )));
    }
    let n = dataset.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (ratios[0] * n as f64).round() as usize;
    let n_val = ((ratios[1] * n as f64).round() as usize).min(n - n_train);
    let take = |range: &[usize]| Dataset {
        utterances: range.iter().map(|&i| dataset.utterances[i].clone()).collect(),
    };
    Ok(Split {
        train: take(&idx[..n_train]),
        val: take(&idx[n_train..n_train + n_val]),
        test: take(&idx[n_train + n_val..]),
    })
}
