//! Gene prioritization from multimodal expression and multiple gene
//! networks: per-modality VAE embeddings, masked-token embeddings of
//! random-walk corpora, a graph transformer trained by link prediction,
//! and attention-derived influence scores with an evaluation harness.

pub mod datamodel;
pub mod ensemble;
pub mod error;
pub mod evalsuite;
pub mod gtcore;
pub mod linkpred;
pub mod mlm;
pub mod netra;
pub mod numerics;
pub mod synth;
pub mod vae;
pub mod walks;

pub use error::{Error, Result};
