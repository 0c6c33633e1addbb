//! Multimodal sentiment regression with cross-modal loss modulation and a
//! learned modality filter.
//!
//! The crate is organized bottom-up:
//!
//! - [`autodiff`]: a small reverse-mode autodiff engine over `f64` tensors.
//! - [`encoders`]: per-modality conv + self-attention encoders and the shared
//!   regression head.
//! - [`modulation`]: reweighting of unimodal losses by the other modalities'
//!   losses.
//! - [`mfm`]: feature shift, soft and Hard Concrete filters, baseline
//!   embeddings.
//! - [`fusion`]: addition, concatenation and tensor fusion.
//! - [`model`]: the assembled network and its parameter layout.
//! - [`training`]: the two-phase schedule, Adam, and evaluation metrics.
//! - [`data`]: synthetic datasets with controllable modality noise, JSONL IO.
//! - [`cli`]: configuration files, model files, run manifests, subcommands.
//! - [`experiments`]: the synthetic benchmark setups and a one-call runner.

pub mod autodiff;
pub mod cli;
pub mod data;
pub mod encoders;
mod error;
pub mod experiments;
pub mod fusion;
pub mod mfm;
pub mod modality;
pub mod model;
pub mod modulation;
pub mod nn;
pub mod training;

pub use error::{Error, Result};
pub use modality::Modality;
