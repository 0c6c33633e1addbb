//! Fusion of the three (filtered) `d`-dimensional embeddings into one
//! `d`-dimensional multimodal representation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamStore, Value};
use crate::error::{Error, Result};
use crate::modality::Modality;
use crate::nn::Linear;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionKind {
    Addition,
    ConcatFc,
    Tensor,
}

impl FusionKind {
    pub const ALL: [FusionKind; 3] = [FusionKind::Addition, FusionKind::ConcatFc, FusionKind::Tensor];

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "addition" => Ok(Self::Addition),
            "concat_fc" => Ok(Self::ConcatFc),
            "tensor" => Ok(Self::Tensor),
            other => Err(Error::Config(format!(
                "unknown fusion {other:?} (expected addition | concat_fc | tensor)"
            ))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Addition => "addition",
            Self::ConcatFc => "concat_fc",
            Self::Tensor => "tensor",
        }
    }

    /// Number of trainable scalars the fusion adds for embedding width `d`.
    pub fn param_count(self, d: usize) -> usize {
        match self {
            Self::Addition => 0,
            Self::ConcatFc => 3 * d * d + d,
            Self::Tensor => (d + 1).pow(3) * d + d,
        }
    }
}

fn check_dims(xs: [&Value; 3], d: usize) -> Result<()> {
    for (m, x) in Modality::ALL.iter().zip(xs) {
        if x.shape() != [d] {
            return Err(Error::Data(format!(
                "{m} embedding has shape {:?}, fusion expects [{d}]",
                x.shape()
            )));
        }
    }
    Ok(())
}

/// `x_l + x_a + x_v`.
pub fn fuse_addition(x_l: &Value, x_a: &Value, x_v: &Value) -> Result<Value> {
    let d = x_l.numel();
    check_dims([x_l, x_a, x_v], d)?;
    x_l.add(x_a)?.add(x_v)
}

/// `Linear([x_l, x_a, x_v])`, `3d → d`.
pub fn fuse_concat(x_l: &Value, x_a: &Value, x_v: &Value, fc: &Linear) -> Result<Value> {
    check_dims([x_l, x_a, x_v], fc.outputs())?;
    fc.forward(&Value::concat(&[x_l.clone(), x_a.clone(), x_v.clone()])?)
}

/// Each input padded with a trailing 1, outer product flattened row-major in
/// (l, a, v) order, then `Linear((d+1)³ → d)`.
pub fn fuse_tensor(x_l: &Value, x_a: &Value, x_v: &Value, fc: &Linear) -> Result<Value> {
    check_dims([x_l, x_a, x_v], fc.outputs())?;
    let one = Value::scalar(1.0);
    let pad = |x: &Value| Value::concat(&[x.clone(), one.clone()]);
    let outer = Value::outer3(&pad(x_l)?, &pad(x_a)?, &pad(x_v)?)?;
    fc.forward(&outer)
}

#[derive(Debug, Clone)]
pub struct Fusion {
    kind: FusionKind,
    d: usize,
    fc: Option<Linear>,
}

pub const FUSION_PREFIX: &str = "fusion";

impl Fusion {
    pub fn register<R: Rng + ?Sized>(store: &mut ParamStore, kind: FusionKind, d: usize, rng: &mut R) -> Result<Self> {
        let fc = match kind {
            FusionKind::Addition => None,
            FusionKind::ConcatFc => Some(Linear::register(store, FUSION_PREFIX, 3 * d, d, rng)?),
            FusionKind::Tensor => {
                let fc = Linear::register(store, FUSION_PREFIX, (d + 1).pow(3), d, rng)?;
                Some(fc)
            }
        };
        Ok(Self { kind, d, fc })
    }

    pub fn lookup(store: &ParamStore, kind: FusionKind, d: usize) -> Result<Self> {
        let fc = match kind {
            FusionKind::Addition => None,
            _ => Some(Linear::lookup(store, FUSION_PREFIX)?),
        };
        Ok(Self { kind, d, fc })
    }

    pub fn kind(&self) -> FusionKind {
        self.kind
    }

    pub fn forward(&self, xs: &[Value; 3]) -> Result<Value> {
        let [l, a, v] = xs;
        let out = match (self.kind, &self.fc) {
            (FusionKind::Addition, _) => fuse_addition(l, a, v)?,
            (FusionKind::ConcatFc, Some(fc)) => fuse_concat(l, a, v, fc)?,
            (FusionKind::Tensor, Some(fc)) => fuse_tensor(l, a, v, fc)?,
            _ => unreachable!("learnable fusion always carries its layer"),
        };
        debug_assert_eq!(out.shape(), [self.d]);
        Ok(out)
    }
}
