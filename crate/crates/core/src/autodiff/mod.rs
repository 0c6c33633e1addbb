//! Minimal reverse-mode automatic differentiation over dense tensors of rank
//! at most 3.
//!
//! Graphs are built dynamically: every op on a [`Value`] records its inputs
//! and [`Value::backward`] walks the recorded graph once in reverse
//! topological order. Leaves created with [`Value::param`] (usually through a
//! [`ParamStore`]) collect gradients; everything else is transient.

mod params;
mod tensor;
mod value;

pub use params::ParamStore;
pub use tensor::Tensor;
pub use value::Value;

pub(crate) use value::stable_sigmoid;
