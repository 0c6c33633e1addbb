//! Small building blocks shared by the network modules.

use rand::Rng;

use crate::autodiff::{ParamStore, Tensor, Value};
use crate::error::{Error, Result};

/// Xavier-uniform `rows × cols` matrix.
pub fn xavier<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Tensor {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.random_range(-bound..bound)).collect();
    Tensor::new(&[rows, cols], data).expect("shape matches data")
}

/// Affine map `x·W + b` with `W: in×out`, `b: out`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: Value,
    pub bias: Value,
}

impl Linear {
    pub fn register<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        inputs: usize,
        outputs: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let weight = store.insert(format!("{name}.w"), xavier(rng, inputs, outputs))?;
        let bias = store.insert(format!("{name}.b"), Tensor::vector(vec![0.0; outputs]))?;
        Ok(Self { weight, bias })
    }

    pub fn lookup(store: &ParamStore, name: &str) -> Result<Self> {
        Ok(Self {
            weight: store.require(&format!("{name}.w"))?.clone(),
            bias: store.require(&format!("{name}.b"))?.clone(),
        })
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape()[1]
    }

    /// Applies the map to every row of an `r × in` matrix.
    pub fn forward_rows(&self, x: &Value) -> Result<Value> {
        x.matmul(&self.weight)?.add_bias(&self.bias)
    }

    /// Applies the map to a rank-1 vector.
    pub fn forward(&self, x: &Value) -> Result<Value> {
        let shape = x.shape();
        if shape.len() != 1 || shape[0] != self.inputs() {
            return Err(Error::dim("linear", &shape, &[self.inputs()]));
        }
        let out = self.forward_rows(&x.reshape(&[1, shape[0]])?)?;
        out.reshape(&[self.outputs()])
    }
}
