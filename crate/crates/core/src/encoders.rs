//! Unimodal sequence encoders and the shared regression head.
//!
//! Each encoder is a same-padded temporal convolution mapping `d_m → d`
//! followed by `layers` single-head self-attention blocks with residual
//! connections. The embedding is the last timestep. No positional encoding is
//! added; the last-timestep readout already breaks permutation symmetry.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamStore, Tensor, Value};
use crate::error::{Error, Result};
use crate::modality::Modality;
use crate::nn::{xavier, Linear};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub input_dim: usize,
    pub d: usize,
    pub kernel: usize,
    pub layers: usize,
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.d == 0 {
            return Err(Error::Config("encoder dims must be at least 1".into()));
        }
        if self.kernel.is_multiple_of(2) {
            return Err(Error::Config(format!("conv kernel must be odd, got {}", self.kernel)));
        }
        Ok(())
    }
}

/// Embedding produced by one modality's encoder.
#[derive(Debug, Clone)]
pub struct UnimodalEmbedding {
    pub modality: Modality,
    pub vector: Value,
}

#[derive(Debug, Clone)]
struct AttentionBlock {
    query: Value,
    key: Value,
    value: Value,
    output: Value,
}

impl AttentionBlock {
    const NAMES: [&'static str; 4] = ["q", "k", "v", "o"];

    fn forward(&self, x: &Value, d: usize) -> Result<Value> {
        let q = x.matmul(&self.query)?;
        let k = x.matmul(&self.key)?;
        let v = x.matmul(&self.value)?;
        let weights = q.matmul(&k.transpose()?)?.softmax(1.0 / (d as f64).sqrt())?;
        let attended = weights.matmul(&v)?.matmul(&self.output)?;
        x.add(&attended)
    }
}

#[derive(Debug, Clone)]
pub struct Encoder {
    modality: Modality,
    config: EncoderConfig,
    conv: Linear,
    blocks: Vec<AttentionBlock>,
}

fn prefix(modality: Modality) -> String {
    format!("enc.{}", modality.tag())
}

impl Encoder {
    pub fn register<R: Rng + ?Sized>(
        store: &mut ParamStore,
        modality: Modality,
        config: EncoderConfig,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        let p = prefix(modality);
        let conv = Linear::register(
            store,
            &format!("{p}.conv"),
            config.kernel * config.input_dim,
            config.d,
            rng,
        )?;
        let mut blocks = Vec::with_capacity(config.layers);
        for i in 0..config.layers {
            let mut mats = AttentionBlock::NAMES
                .iter()
                .map(|n| store.insert(format!("{p}.attn{i}.{n}"), xavier(rng, config.d, config.d)))
                .collect::<Result<Vec<_>>>()?
                .into_iter();
            blocks.push(AttentionBlock {
                query: mats.next().unwrap(),
                key: mats.next().unwrap(),
                value: mats.next().unwrap(),
                output: mats.next().unwrap(),
            });
        }
        Ok(Self {
            modality,
            config,
            conv,
            blocks,
        })
    }

    pub fn lookup(store: &ParamStore, modality: Modality, config: EncoderConfig) -> Result<Self> {
        config.validate()?;
        let p = prefix(modality);
        let conv = Linear::lookup(store, &format!("{p}.conv"))?;
        let blocks = (0..config.layers)
            .map(|i| {
                let get = |n: &str| store.require(&format!("{p}.attn{i}.{n}")).cloned();
                Ok(AttentionBlock {
                    query: get("q")?,
                    key: get("k")?,
                    value: get("v")?,
                    output: get("o")?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            modality,
            config,
            conv,
            blocks,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    /// Encodes a `T × d_m` sequence into a `d`-vector.
    pub fn encode(&self, seq: &Tensor) -> Result<UnimodalEmbedding> {
        let shape = seq.shape();
        if shape.len() != 2 || shape[1] != self.config.input_dim {
            return Err(Error::Data(format!(
                "{} sequence has shape {:?}, expected T x {}",
                self.modality, shape, self.config.input_dim
            )));
        }
        if shape[0] == 0 {
            return Err(Error::Data(format!("empty {} sequence", self.modality)));
        }
        let t_len = shape[0];
        let input = Value::constant(seq.clone());
        let mut x = self.conv.forward_rows(&input.unfold_same(self.config.kernel)?)?;
        for block in &self.blocks {
            x = block.forward(&x, self.config.d)?;
        }
        Ok(UnimodalEmbedding {
            modality: self.modality,
            vector: x.row(t_len - 1)?,
        })
    }
}

/// Affine regression head `y = x·W + b` shared by the unimodal and multimodal
/// prediction paths.
#[derive(Debug, Clone)]
pub struct Classifier {
    head: Linear,
}

impl Classifier {
    pub const PREFIX: &'static str = "cls";

    pub fn register<R: Rng + ?Sized>(store: &mut ParamStore, d: usize, rng: &mut R) -> Result<Self> {
        Ok(Self {
            head: Linear::register(store, Self::PREFIX, d, 1, rng)?,
        })
    }

    pub fn lookup(store: &ParamStore) -> Result<Self> {
        Ok(Self {
            head: Linear::lookup(store, Self::PREFIX)?,
        })
    }

    pub fn weight(&self) -> &Value {
        &self.head.weight
    }

    pub fn bias(&self) -> &Value {
        &self.head.bias
    }

    /// Scalar prediction for a `d`-vector.
    pub fn classify(&self, x: &Value) -> Result<Value> {
        let shape = x.shape();
        if shape != [self.head.inputs()] {
            return Err(Error::Data(format!(
                "classifier expects a vector of length {}, got shape {:?}",
                self.head.inputs(),
                shape
            )));
        }
        self.head.forward(x)?.reshape(&[])
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn cfg() -> EncoderConfig {
        EncoderConfig {
            input_dim: 3,
            d: 4,
            kernel: 3,
            layers: 1,
        }
    }

    fn random_seq(rng: &mut ChaCha8Rng, t: usize, c: usize) -> Tensor {
        let data = (0..t * c).map(|_| rng.random_range(-1.0..1.0)).collect();
        Tensor::new(&[t, c], data).unwrap()
    }

    fn setup() -> (ParamStore, Encoder, ChaCha8Rng) {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut store = ParamStore::new();
        let enc = Encoder::register(&mut store, Modality::Acoustic, cfg(), &mut rng).unwrap();
        (store, enc, rng)
    }

    #[test]
    fn output_dim_is_shared_d() {
        let (_, enc, mut rng) = setup();
        let seq = random_seq(&mut rng, 5, 3);
        assert_eq!(enc.encode(&seq).unwrap().vector.shape(), vec![4]);
    }

    #[test]
    fn length_one_attention_is_identity_mixing() {
        // With one timestep the attention weight is exactly 1, so the block
        // adds (x·Wv)·Wo to x.
        let (store, enc, mut rng) = setup();
        let seq = random_seq(&mut rng, 1, 3);
        let out = enc.encode(&seq).unwrap().vector.to_vec();

        let conv = Linear::lookup(&store, "enc.a.conv").unwrap();
        let x = conv
            .forward_rows(&Value::constant(seq).unfold_same(3).unwrap())
            .unwrap();
        let v = store.get("enc.a.attn0.v").unwrap();
        let o = store.get("enc.a.attn0.o").unwrap();
        let expected = x.add(&x.matmul(v).unwrap().matmul(o).unwrap()).unwrap();
        for (a, b) in out.iter().zip(expected.to_vec()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_timesteps_give_identical_outputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        // With kernel 1 no padding breaks the symmetry between positions.
        let enc = Encoder::register(
            &mut ParamStore::new(),
            Modality::Visual,
            EncoderConfig { kernel: 1, ..cfg() },
            &mut rng,
        )
        .unwrap();
        let row = random_seq(&mut rng, 1, 3).into_data();
        let seq = Value::constant(Tensor::new(&[2, 3], [row.clone(), row].concat()).unwrap());
        let x = enc.conv.forward_rows(&seq.unfold_same(1).unwrap()).unwrap();
        let rows = enc.blocks[0].forward(&x, 4).unwrap().data().to_rows();
        assert_eq!(rows[0], rows[1]);
    }

    #[test]
    fn attention_mixes_early_timesteps_into_readout() {
        let (_, enc, mut rng) = setup();
        let seq = random_seq(&mut rng, 8, 3);
        let base = enc.encode(&seq).unwrap().vector.to_vec();
        let mut perturbed = seq.clone();
        perturbed.data_mut()[3] += 0.5; // timestep 1, far outside the conv window of the last step
        let out = enc.encode(&perturbed).unwrap().vector.to_vec();
        assert!(base.iter().zip(&out).any(|(a, b)| (a - b).abs() > 1e-9));
    }

    #[test]
    fn deterministic() {
        let (_, enc, mut rng) = setup();
        let seq = random_seq(&mut rng, 6, 3);
        assert_eq!(
            enc.encode(&seq).unwrap().vector.to_vec(),
            enc.encode(&seq).unwrap().vector.to_vec()
        );
    }

    #[test]
    fn bad_inputs_rejected_with_modality() {
        let (_, enc, _) = setup();
        let err = enc.encode(&Tensor::zeros(&[4, 2])).unwrap_err();
        assert!(err.to_string().contains("acoustic"));
        assert!(matches!(enc.encode(&Tensor::zeros(&[0, 3])), Err(Error::Data(_))));
    }

    #[test]
    fn even_kernel_rejected() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let bad = EncoderConfig { kernel: 2, ..cfg() };
        assert!(Encoder::register(&mut store, Modality::Language, bad, &mut rng).is_err());
    }

    #[test]
    fn classifier_constant_and_pick() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let c = Classifier::register(&mut store, 3, &mut rng).unwrap();
        store
            .assign("cls.w", Tensor::new(&[3, 1], vec![0.0; 3]).unwrap())
            .unwrap();
        store.assign("cls.b", Tensor::vector(vec![0.5])).unwrap();
        let x = Value::constant(Tensor::vector(vec![1.0, -2.0, 7.0]));
        assert_eq!(c.classify(&x).unwrap().item(), 0.5);

        store
            .assign("cls.w", Tensor::new(&[3, 1], vec![1.0, 0.0, 0.0]).unwrap())
            .unwrap();
        store.assign("cls.b", Tensor::vector(vec![0.0])).unwrap();
        let x = Value::constant(Tensor::vector(vec![2.0, 0.0, 0.0]));
        assert_eq!(c.classify(&x).unwrap().item(), 2.0);

        let wrong = Value::constant(Tensor::vector(vec![1.0, 2.0]));
        assert!(matches!(c.classify(&wrong), Err(Error::Data(_))));
    }
}
