use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data::LABEL_RANGE;
use crate::error::{Error, Result};

/// How utterances with label exactly 0 enter the binary metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ZeroLabelPolicy {
    #[default]
    Exclude,
    Negative,
}

impl ZeroLabelPolicy {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "exclude" => Ok(Self::Exclude),
            "negative" => Ok(Self::Negative),
            other => Err(Error::Config(format!(
                "unknown acc2 zero-label policy {other:?} (expected exclude | negative)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub acc7: f64,
    pub acc2: f64,
    pub f1: f64,
    pub mae: f64,
    pub corr: f64,
    /// False when no utterance qualified for the binary metrics; `acc2` and
    /// `f1` are then reported as 0.
    pub binary_defined: bool,
}

impl fmt::Display for MetricsReport {
    /// One `key=value` pair per line.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "acc7={:.6}", self.acc7)?;
        writeln!(f, "acc2={:.6}", self.acc2)?;
        writeln!(f, "f1={:.6}", self.f1)?;
        writeln!(f, "mae={:.6}", self.mae)?;
        write!(f, "corr={:.6}", self.corr)?;
        if !self.binary_defined {
            write!(f, "\nbinary_defined=false")?;
        }
        Ok(())
    }
}

fn check_lengths(preds: &[f64], labels: &[f64]) -> Result<()> {
    if preds.len() != labels.len() {
        return Err(Error::dim("metrics", &[preds.len()], &[labels.len()]));
    }
    if preds.is_empty() {
        return Err(Error::Data("cannot compute metrics over an empty set".into()));
    }
    Ok(())
}

fn sentiment_class(x: f64) -> i64 {
    // f64::round rounds half away from zero.
    x.clamp(LABEL_RANGE.0, LABEL_RANGE.1).round() as i64
}

/// Seven-class accuracy after clamping to `[-3, 3]` and rounding half away
/// from zero.
pub fn metric_acc7(preds: &[f64], labels: &[f64]) -> f64 {
    let hits = preds
        .iter()
        .zip(labels)
        .filter(|(&p, &y)| sentiment_class(p) == sentiment_class(y))
        .count();
    hits as f64 / preds.len() as f64
}

/// Binary accuracy and positive-class F1. Positive means `> 0` for both
/// predictions and labels. F1 is 0 when precision or recall is undefined.
pub fn metric_acc2_f1(preds: &[f64], labels: &[f64], policy: ZeroLabelPolicy) -> Result<(f64, f64)> {
    let (mut tp, mut fp, mut fn_, mut tn) = (0usize, 0usize, 0usize, 0usize);
    for (&p, &y) in preds.iter().zip(labels) {
        if y == 0.0 && policy == ZeroLabelPolicy::Exclude {
            continue;
        }
        match (p > 0.0, y > 0.0) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let n = tp + fp + fn_ + tn;
    if n == 0 {
        return Err(Error::Metric("no utterance with a non-zero label".into()));
    }
    let acc = (tp + tn) as f64 / n as f64;
    let f1 = if tp == 0 {
        0.0
    } else {
        let precision = tp as f64 / (tp + fp) as f64;
        let recall = tp as f64 / (tp + fn_) as f64;
        2.0 * precision * recall / (precision + recall)
    };
    Ok((acc, f1))
}

pub fn metric_mae(preds: &[f64], labels: &[f64]) -> f64 {
    let total: f64 = preds.iter().zip(labels).map(|(p, y)| (p - y).abs()).sum();
    total / preds.len() as f64
}

/// Pearson correlation; 0 when either side has zero variance.
pub fn metric_corr(preds: &[f64], labels: &[f64]) -> f64 {
    let n = preds.len() as f64;
    let mp = preds.iter().sum::<f64>() / n;
    let my = labels.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&p, &y) in preds.iter().zip(labels) {
        let (dp, dy) = (p - mp, y - my);
        sxy += dp * dy;
        sxx += dp * dp;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0)
}

pub fn compute_metrics(preds: &[f64], labels: &[f64], policy: ZeroLabelPolicy) -> Result<MetricsReport> {
    check_lengths(preds, labels)?;
    let (acc2, f1, binary_defined) = match metric_acc2_f1(preds, labels, policy) {
        Ok((a, f)) => (a, f, true),
        Err(Error::Metric(_)) => (0.0, 0.0, false),
        Err(e) => return Err(e),
    };
    Ok(MetricsReport {
        acc7: metric_acc7(preds, labels),
        acc2,
        f1,
        mae: metric_mae(preds, labels),
        corr: metric_corr(preds, labels),
        binary_defined,
    })
}
