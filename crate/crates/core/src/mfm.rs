//! Modality filter: feature shift, soft and Hard Concrete gates, and the
//! learned baseline embeddings that replace filtered-out content.
//!
//! ```text
//! x'       = Linear([x_l, x_a, x_v])            (3d -> d)
//! shift_m  = ReLU(x' - x_m)
//! keep_m   = Filter(shift_m)
//! x2_m     = keep_m · x_m + replace_m · b_m      (replace_m = 1 - keep_m)
//! ```

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::autodiff::{stable_sigmoid, ParamStore, Tensor, Value};
use crate::error::{Error, Result};
use crate::modality::Modality;
use crate::nn::Linear;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterMode {
    Soft,
    Hard,
    None,
}

impl FilterMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "soft" => Ok(Self::Soft),
            "hard" => Ok(Self::Hard),
            "none" => Ok(Self::None),
            other => Err(Error::Config(format!(
                "unknown filter mode {other:?} (expected soft | hard | none)"
            ))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Soft => "soft",
            Self::Hard => "hard",
            Self::None => "none",
        }
    }
}

/// Temperature `beta` and stretch interval `(gamma, zeta)` of the Hard
/// Concrete gate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HardConcreteParams {
    pub beta: f64,
    pub zeta: f64,
    pub gamma: f64,
}

impl Default for HardConcreteParams {
    fn default() -> Self {
        Self {
            beta: 2.0 / 3.0,
            zeta: 1.1,
            gamma: -0.1,
        }
    }
}

impl HardConcreteParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) {
            return Err(Error::Config(format!("beta must be > 0, got {}", self.beta)));
        }
        if !(self.gamma < 0.0 && self.zeta > 1.0) {
            return Err(Error::Config(format!(
                "need gamma < 0 < 1 < zeta, got gamma={} zeta={}",
                self.gamma, self.zeta
            )));
        }
        Ok(())
    }

    /// Stretched sample `s̄ = sigmoid((logit(u) + z)/beta)·(zeta - gamma) + gamma`.
    pub fn stretched(&self, z: f64, u: f64) -> Result<f64> {
        check_uniform(u)?;
        let logit = (u / (1.0 - u)).ln();
        Ok(stable_sigmoid((logit + z) / self.beta) * (self.zeta - self.gamma) + self.gamma)
    }

    /// Deterministic evaluation gate: open iff the noise-free stretched value
    /// exceeds one half.
    pub fn eval_gate(&self, z: f64) -> bool {
        stable_sigmoid(z / self.beta) * (self.zeta - self.gamma) + self.gamma > 0.5
    }
}

fn check_uniform(u: f64) -> Result<()> {
    if u > 0.0 && u < 1.0 {
        Ok(())
    } else {
        Err(Error::Sampling(format!("uniform sample must lie in (0, 1), got {u}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Train,
    Eval,
}

/// Non-negative per-modality feature shifts, in (l, a, v) order.
#[derive(Debug, Clone)]
pub struct FeatureShift {
    pub shifts: [Value; 3],
}

/// Gate output for one modality of one utterance.
#[derive(Debug, Clone)]
pub struct FilterDecision {
    pub mode: FilterMode,
    pub keep: Value,
    pub replace: Value,
    /// Binarization penalty; zero outside soft mode.
    pub penalty: Value,
}

/// Plain numbers of a [`FilterDecision`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionValues {
    pub keep: f64,
    pub replace: f64,
    pub penalty: f64,
}

impl FilterDecision {
    pub fn values(&self) -> DecisionValues {
        DecisionValues {
            keep: self.keep.item(),
            replace: self.replace.item(),
            penalty: self.penalty.item(),
        }
    }

    /// Decision of an absent filter: everything kept.
    pub fn pass_through() -> Self {
        Self {
            mode: FilterMode::None,
            keep: Value::scalar(1.0),
            replace: Value::scalar(0.0),
            penalty: Value::scalar(0.0),
        }
    }
}

/// Two-layer gate network `Linear(d→d) → ReLU → Linear(d→outputs)`.
#[derive(Debug, Clone)]
pub struct FilterNet {
    hidden: Linear,
    out: Linear,
}

impl FilterNet {
    /// The output layer starts at zero so every gate starts undecided.
    pub fn register<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        d: usize,
        outputs: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let hidden = Linear::register(store, &format!("{name}.fc1"), d, d, rng)?;
        let out = Linear::register(store, &format!("{name}.fc2"), d, outputs, rng)?;
        out.weight.data_mut().fill(0.0);
        Ok(Self { hidden, out })
    }

    pub fn lookup(store: &ParamStore, name: &str) -> Result<Self> {
        Ok(Self {
            hidden: Linear::lookup(store, &format!("{name}.fc1"))?,
            out: Linear::lookup(store, &format!("{name}.fc2"))?,
        })
    }

    pub fn outputs(&self) -> usize {
        self.out.outputs()
    }

    pub fn forward(&self, shift: &Value) -> Result<Value> {
        self.out.forward(&self.hidden.forward(shift)?.relu())
    }
}

/// `ReLU(Linear([x_l, x_a, x_v]) - x_m)` for each modality.
pub fn feature_shift(projection: &Linear, xs: &[Value; 3]) -> Result<FeatureShift> {
    let d = projection.outputs();
    for (m, x) in Modality::ALL.iter().zip(xs) {
        if x.shape() != [d] {
            return Err(Error::Data(format!(
                "{m} embedding has shape {:?}, expected [{d}]",
                x.shape()
            )));
        }
    }
    let projected = projection.forward(&Value::concat(xs)?)?;
    let shifts = [0, 1, 2].map(|i| projected.sub(&xs[i]).map(|v| v.relu()));
    let [l, a, v] = shifts;
    Ok(FeatureShift { shifts: [l?, a?, v?] })
}

/// Scaled two-way softmax gate with the binarization penalty
/// `1 - (s₁ - s₂)²`.
pub fn soft_filter(net: &FilterNet, shift: &Value, lambda: f64) -> Result<FilterDecision> {
    if net.outputs() != 2 {
        return Err(Error::Contract("soft filter needs a two-output gate network".into()));
    }
    let s = net.forward(shift)?.softmax(lambda)?;
    soft_decision(&s)
}

/// Builds the soft decision from an already normalized 2-vector.
pub fn soft_decision(s: &Value) -> Result<FilterDecision> {
    let keep = s.index(0)?;
    let replace = s.index(1)?;
    let gap = keep.sub(&replace)?;
    let penalty = gap.mul(&gap)?.scale(-1.0).add_scalar(1.0).clamp(0.0, 1.0);
    Ok(FilterDecision {
        mode: FilterMode::Soft,
        keep,
        replace,
        penalty,
    })
}

/// Hard Concrete gate. In training the clamped stretched sample is the keep
/// fraction (differentiable almost everywhere); in evaluation the gate is the
/// deterministic 0/1 threshold and `u` is ignored.
pub fn hard_filter(
    net: &FilterNet,
    shift: &Value,
    hc: &HardConcreteParams,
    u: f64,
    phase: Phase,
) -> Result<FilterDecision> {
    if net.outputs() != 1 {
        return Err(Error::Contract("hard filter needs a one-output gate network".into()));
    }
    let z = net.forward(shift)?.reshape(&[])?;
    hard_decision(&z, hc, u, phase)
}

pub fn hard_decision(z: &Value, hc: &HardConcreteParams, u: f64, phase: Phase) -> Result<FilterDecision> {
    let keep = match phase {
        Phase::Train => {
            check_uniform(u)?;
            let logit = (u / (1.0 - u)).ln();
            z.add_scalar(logit)
                .scale(1.0 / hc.beta)
                .sigmoid()
                .scale(hc.zeta - hc.gamma)
                .add_scalar(hc.gamma)
                .clamp(0.0, 1.0)
        }
        Phase::Eval => Value::scalar(if hc.eval_gate(z.item()) { 1.0 } else { 0.0 }),
    };
    let replace = keep.scale(-1.0).add_scalar(1.0);
    Ok(FilterDecision {
        mode: FilterMode::Hard,
        keep,
        replace,
        penalty: Value::scalar(0.0),
    })
}

/// `keep · x + replace · b`; without a baseline the replaced share is zero.
pub fn apply_filter(x: &Value, baseline: Option<&Value>, dec: &FilterDecision) -> Result<Value> {
    let kept = x.scale_by(&dec.keep)?;
    match baseline {
        Some(b) => {
            if b.shape() != x.shape() {
                return Err(Error::dim("apply_filter", &x.shape(), &b.shape()));
            }
            kept.add(&b.scale_by(&dec.replace)?)
        }
        None => Ok(kept),
    }
}

/// Settings that shape the filter's forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MfmConfig {
    pub d: usize,
    pub mode: FilterMode,
    pub baseline: bool,
    pub shared_filter: bool,
    pub lambda: f64,
    pub hard_concrete: HardConcreteParams,
}

impl MfmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) {
            return Err(Error::Config(format!("lambda must be > 0, got {}", self.lambda)));
        }
        self.hard_concrete.validate()
    }
}

/// The assembled filter module.
#[derive(Debug, Clone)]
pub struct Mfm {
    config: MfmConfig,
    projection: Linear,
    /// One entry when shared, otherwise one per modality.
    filters: Vec<FilterNet>,
    baselines: Option<[Value; 3]>,
}

pub const MFM_PREFIX: &str = "mfm";

impl Mfm {
    pub fn register<R: Rng + ?Sized>(store: &mut ParamStore, config: MfmConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let outputs = match config.mode {
            FilterMode::Soft => 2,
            FilterMode::Hard => 1,
            FilterMode::None => return Err(Error::Contract("filter module requested with mode none".into())),
        };
        let d = config.d;
        let projection = Linear::register(store, "mfm.shift", 3 * d, d, rng)?;
        let filters = if config.shared_filter {
            vec![FilterNet::register(store, "mfm.filter", d, outputs, rng)?]
        } else {
            Modality::ALL
                .iter()
                .map(|m| FilterNet::register(store, &format!("mfm.filter.{}", m.tag()), d, outputs, rng))
                .collect::<Result<_>>()?
        };
        let baselines = if config.baseline {
            let mut bs = Vec::with_capacity(3);
            for m in Modality::ALL {
                bs.push(store.insert(format!("mfm.baseline.{}", m.tag()), Tensor::vector(vec![0.0; d]))?);
            }
            Some([bs[0].clone(), bs[1].clone(), bs[2].clone()])
        } else {
            None
        };
        Ok(Self {
            config,
            projection,
            filters,
            baselines,
        })
    }

    pub fn lookup(store: &ParamStore, config: MfmConfig) -> Result<Self> {
        config.validate()?;
        let projection = Linear::lookup(store, "mfm.shift")?;
        let filters = if config.shared_filter {
            vec![FilterNet::lookup(store, "mfm.filter")?]
        } else {
            Modality::ALL
                .iter()
                .map(|m| FilterNet::lookup(store, &format!("mfm.filter.{}", m.tag())))
                .collect::<Result<_>>()?
        };
        let baselines = if config.baseline {
            let get = |m: Modality| store.require(&format!("mfm.baseline.{}", m.tag())).cloned();
            Some([
                get(Modality::Language)?,
                get(Modality::Acoustic)?,
                get(Modality::Visual)?,
            ])
        } else {
            None
        };
        Ok(Self {
            config,
            projection,
            filters,
            baselines,
        })
    }

    pub fn config(&self) -> &MfmConfig {
        &self.config
    }

    pub fn baseline(&self, m: Modality) -> Option<&Value> {
        self.baselines.as_ref().map(|b| &b[m.index()])
    }

    pub fn filter_net(&self, m: Modality) -> &FilterNet {
        if self.filters.len() == 1 {
            &self.filters[0]
        } else {
            &self.filters[m.index()]
        }
    }

    /// Filters the three embeddings. Hard-mode training draws one uniform
    /// sample per modality from `rng`.
    pub fn forward(
        &self,
        xs: &[Value; 3],
        phase: Phase,
        rng: &mut dyn RngCore,
    ) -> Result<([Value; 3], [FilterDecision; 3])> {
        let shift = feature_shift(&self.projection, xs)?;
        let mut outs = Vec::with_capacity(3);
        let mut decisions = Vec::with_capacity(3);
        for m in Modality::ALL {
            let i = m.index();
            let net = self.filter_net(m);
            let dec = match self.config.mode {
                FilterMode::Soft => soft_filter(net, &shift.shifts[i], self.config.lambda)?,
                FilterMode::Hard => {
                    let u = match phase {
                        Phase::Train => open_unit(rng),
                        Phase::Eval => 0.5,
                    };
                    hard_filter(net, &shift.shifts[i], &self.config.hard_concrete, u, phase)?
                }
                FilterMode::None => FilterDecision::pass_through(),
            };
            outs.push(apply_filter(&xs[i], self.baseline(m), &dec)?);
            decisions.push(dec);
        }
        let [a, b, c]: [Value; 3] = outs.try_into().expect("three modalities");
        let decisions: [FilterDecision; 3] = decisions.try_into().expect("three modalities");
        Ok(([a, b, c], decisions))
    }
}

/// Uniform draw from the open interval (0, 1).
pub fn open_unit(rng: &mut dyn RngCore) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}
