//! The assembled network: three encoders, the shared classifier, the optional
//! modality filter, and a fusion layer.
//!
//! Parameter layout (names in the [`ParamStore`]):
//!
//! | prefix            | contents                                         |
//! |-------------------|--------------------------------------------------|
//! | `enc.{l,a,v}.*`   | conv weights and attention blocks per modality    |
//! | `cls.*`           | shared regression head (exactly one)              |
//! | `mfm.shift.*`     | feature-shift projection `3d → d`                 |
//! | `mfm.filter*`     | gate network, shared or `mfm.filter.{l,a,v}.*`    |
//! | `mfm.baseline.*`  | baseline embeddings                               |
//! | `fusion.*`        | fusion layer (absent for addition)                |

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamStore, Value};
use crate::data::Utterance;
use crate::encoders::{Classifier, Encoder, EncoderConfig};
use crate::error::{Error, Result};
use crate::fusion::{Fusion, FusionKind};
use crate::mfm::{DecisionValues, FilterDecision, FilterMode, HardConcreteParams, Mfm, MfmConfig, Phase};
use crate::modality::Modality;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// `(d_l, d_a, d_v)`.
    pub input_dims: [usize; 3],
    /// Shared embedding width.
    pub d: usize,
    pub kernel: [usize; 3],
    /// Attention blocks per encoder.
    pub layers: usize,
    pub fusion: FusionKind,
    pub filter: FilterMode,
    pub baseline: bool,
    pub shared_filter: bool,
    pub lambda: f64,
    pub hard_concrete: HardConcreteParams,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_dims: [8, 4, 4],
            d: 16,
            kernel: [3; 3],
            layers: 1,
            fusion: FusionKind::Addition,
            filter: FilterMode::Soft,
            baseline: true,
            shared_filter: true,
            lambda: 1000.0,
            hard_concrete: HardConcreteParams::default(),
        }
    }
}

impl ModelConfig {
    /// Gate settings for training at the default learning rate of `1e-3`:
    /// one filter network per modality and `lambda = 10`.
    ///
    /// The soft gate's logit gap moves by roughly `lambda · lr` per Adam step,
    /// so `lambda = 1000` at `lr = 1e-3` saturates the softmax within the
    /// first few updates and freezes whatever the gates did at
    /// initialization. `lambda = 10` restores the `lambda · lr` product of
    /// `lambda = 1000, lr = 1e-5`.
    pub fn desk_scale(input_dims: [usize; 3]) -> Self {
        Self {
            input_dims,
            shared_filter: false,
            lambda: 10.0,
            ..Self::default()
        }
    }

    pub fn encoder(&self, m: Modality) -> EncoderConfig {
        EncoderConfig {
            input_dim: self.input_dims[m.index()],
            d: self.d,
            kernel: self.kernel[m.index()],
            layers: self.layers,
        }
    }

    pub fn mfm(&self) -> Option<MfmConfig> {
        (self.filter != FilterMode::None).then_some(MfmConfig {
            d: self.d,
            mode: self.filter,
            baseline: self.baseline,
            shared_filter: self.shared_filter,
            lambda: self.lambda,
            hard_concrete: self.hard_concrete,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::Config("embedding width d must be >= 1".into()));
        }
        for m in Modality::ALL {
            self.encoder(m).validate()?;
        }
        if let Some(c) = self.mfm() {
            c.validate()?;
        }
        Ok(())
    }
}

/// Output of the multimodal path for one utterance.
#[derive(Debug, Clone)]
pub struct MultimodalOutput {
    pub prediction: Value,
    pub decisions: [FilterDecision; 3],
}

#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    store: ParamStore,
    encoders: [Encoder; 3],
    classifier: Classifier,
    mfm: Option<Mfm>,
    fusion: Fusion,
}

impl Model {
    /// Fresh model with parameters drawn from a seeded generator.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let mut encs = Vec::with_capacity(3);
        for m in Modality::ALL {
            encs.push(Encoder::register(&mut store, m, config.encoder(m), &mut rng)?);
        }
        let classifier = Classifier::register(&mut store, config.d, &mut rng)?;
        let mfm = config
            .mfm()
            .map(|c| Mfm::register(&mut store, c, &mut rng))
            .transpose()?;
        let fusion = Fusion::register(&mut store, config.fusion, config.d, &mut rng)?;
        Ok(Self {
            encoders: encs.try_into().expect("three modalities"),
            config,
            store,
            classifier,
            mfm,
            fusion,
        })
    }

    /// Rebinds a model to an existing parameter store. The store must hold
    /// exactly the tensors `config` implies, with matching shapes.
    pub fn from_store(config: ModelConfig, store: ParamStore) -> Result<Self> {
        let template = Self::new(config.clone(), 0)?;
        for (name, v) in template.store.iter() {
            let got = store
                .get(name)
                .ok_or_else(|| Error::ModelFile(format!("missing tensor {name}")))?;
            if got.shape() != v.shape() {
                return Err(Error::ModelFile(format!(
                    "tensor {name} has shape {:?}, expected {:?}",
                    got.shape(),
                    v.shape()
                )));
            }
        }
        if let Some(extra) = store.names().find(|n| !template.store.contains(n)) {
            return Err(Error::ModelFile(format!("unknown tensor {extra}")));
        }
        let encs = Modality::ALL
            .iter()
            .map(|&m| Encoder::lookup(&store, m, config.encoder(m)))
            .collect::<Result<Vec<_>>>()?;
        let classifier = Classifier::lookup(&store)?;
        let mfm = config.mfm().map(|c| Mfm::lookup(&store, c)).transpose()?;
        let fusion = Fusion::lookup(&store, config.fusion, config.d)?;
        Ok(Self {
            encoders: encs.try_into().expect("three modalities"),
            config,
            store,
            classifier,
            mfm,
            fusion,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn classifier(&self) -> &Classifier {
        &self.classifier
    }

    pub fn mfm(&self) -> Option<&Mfm> {
        self.mfm.as_ref()
    }

    pub fn encoder(&self, m: Modality) -> &Encoder {
        &self.encoders[m.index()]
    }

    pub fn check_compatible(&self, utt: &Utterance) -> Result<()> {
        if utt.feature_dims() != self.config.input_dims {
            return Err(Error::Data(format!(
                "utterance {} has feature dims {:?}, model expects {:?}",
                utt.id,
                utt.feature_dims(),
                self.config.input_dims
            )));
        }
        Ok(())
    }

    /// Unimodal embeddings in (l, a, v) order.
    pub fn encode(&self, utt: &Utterance) -> Result<[Value; 3]> {
        let [l, a, v] = Modality::ALL.map(|m| self.encoders[m.index()].encode(utt.sequence(m)));
        Ok([l?.vector, a?.vector, v?.vector])
    }

    /// Shared-classifier predictions from each unimodal embedding.
    pub fn unimodal_predictions(&self, xs: &[Value; 3]) -> Result<[Value; 3]> {
        let [l, a, v] = [0, 1, 2].map(|i| self.classifier.classify(&xs[i]));
        Ok([l?, a?, v?])
    }

    /// Filter (when present), fuse, and classify.
    pub fn multimodal(&self, xs: &[Value; 3], phase: Phase, rng: &mut dyn RngCore) -> Result<MultimodalOutput> {
        let (filtered, decisions) = match &self.mfm {
            Some(mfm) => mfm.forward(xs, phase, rng)?,
            None => (xs.clone(), [0, 1, 2].map(|_| FilterDecision::pass_through())),
        };
        let fused = self.fusion.forward(&filtered)?;
        Ok(MultimodalOutput {
            prediction: self.classifier.classify(&fused)?,
            decisions,
        })
    }

    /// Deterministic evaluation-mode prediction and gate values.
    pub fn predict(&self, utt: &Utterance) -> Result<(f64, [DecisionValues; 3])> {
        self.check_compatible(utt)?;
        let xs = self.encode(utt)?;
        // Evaluation never samples; the generator is a placeholder.
        let mut unused = ChaCha8Rng::seed_from_u64(0);
        let out = self.multimodal(&xs, Phase::Eval, &mut unused)?;
        let dec = [0, 1, 2].map(|i| out.decisions[i].values());
        Ok((out.prediction.item(), dec))
    }

    /// Names updated in the unimodal phase.
    pub fn is_unimodal_param(name: &str, include_classifier: bool) -> bool {
        name.starts_with("enc.") || (include_classifier && name.starts_with("cls."))
    }
}
