//! Cross-modal modulation of the unimodal losses.
//!
//! For per-utterance losses `ℓ = (ℓ_l, ℓ_a, ℓ_v)`:
//!
//! ```text
//! α   = 3 / Σ_m 1/ℓ_m            (harmonic mean)
//! α_m = α · Π_{m' ≠ m} ℓ_{m'}
//! ℓ₂_m = α_m · ℓ_m
//! ```
//!
//! The weights `α_m` are constants with respect to differentiation, so the
//! gradient of `ℓ₂_m` reaches only modality `m`'s own network. All three
//! modulated values coincide numerically (`α·ℓ_l·ℓ_a·ℓ_v`); their gradients do
//! not.

use crate::autodiff::Value;
use crate::error::{Error, Result};
use crate::modality::Modality;

/// Lower bound applied to each loss inside the harmonic mean's reciprocals.
pub const DEFAULT_EPS: f64 = 1e-8;

/// Per-utterance unimodal absolute errors `|y_m - y|`, in (l, a, v) order.
#[derive(Debug, Clone)]
pub struct UnimodalLosses {
    losses: [Value; 3],
}

impl UnimodalLosses {
    pub fn new(losses: [Value; 3]) -> Result<Self> {
        for (m, l) in Modality::ALL.iter().zip(&losses) {
            if l.numel() != 1 {
                return Err(Error::dim("unimodal loss", &l.shape(), &[]));
            }
            let x = l.item();
            if !(x.is_finite() && x >= 0.0) {
                return Err(Error::Contract(format!("{m} loss must be finite and >= 0, got {x}")));
            }
        }
        Ok(Self { losses })
    }

    pub fn get(&self, m: Modality) -> &Value {
        &self.losses[m.index()]
    }

    pub fn values(&self) -> [f64; 3] {
        [0, 1, 2].map(|i| self.losses[i].item())
    }
}

/// Harmonic mean of the three losses, each bounded below by `eps`.
pub fn harmonic_scale(losses: [f64; 3], eps: f64) -> f64 {
    3.0 / losses.iter().map(|&l| 1.0 / l.max(eps)).sum::<f64>()
}

/// `α · Π_{m' ≠ m} ℓ_{m'}`.
pub fn modality_weight(losses: [f64; 3], m: Modality, eps: f64) -> f64 {
    let others: f64 = Modality::ALL
        .iter()
        .filter(|&&o| o != m)
        .map(|o| losses[o.index()])
        .product();
    harmonic_scale(losses, eps) * others
}

/// `ℓ₂_m = α_m · ℓ_m` with `α_m` detached.
pub fn modulated_loss(losses: &UnimodalLosses, m: Modality, eps: f64) -> Value {
    let weight = modality_weight(losses.values(), m, eps);
    losses.get(m).scale(weight)
}

/// The full modulation of one utterance.
#[derive(Debug, Clone)]
pub struct ModulatedLoss {
    pub losses: [Value; 3],
    pub weights: [f64; 3],
    pub scale: f64,
}

impl ModulatedLoss {
    pub fn compute(losses: &UnimodalLosses, eps: f64) -> Self {
        let raw = losses.values();
        let weights = Modality::ALL.map(|m| modality_weight(raw, m, eps));
        Self {
            losses: Modality::ALL.map(|m| losses.get(m).scale(weights[m.index()])),
            weights,
            scale: harmonic_scale(raw, eps),
        }
    }

    /// `ℓ₂_l + ℓ₂_a + ℓ₂_v`.
    pub fn total(&self) -> Result<Value> {
        Ok(Value::concat(&self.losses)?.sum())
    }
}
