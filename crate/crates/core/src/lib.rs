//! Relevance-weighted, curriculum-paced meta-learning for few-shot fault
//! diagnosis on vibration signals.
//!
//! The pipeline runs in this order:
//!
//! 1. [`data`]: window raw signals into per-condition task datasets.
//! 2. [`relevance`]: score each auxiliary condition against the target with an
//!    autoencoder's latent means.
//! 3. [`curriculum`]: rate each auxiliary condition's difficulty with a
//!    teacher classifier and pace sampling easy-first.
//! 4. [`metatrain`]: MAML-style meta-training with relevance-scaled inner steps.
//! 5. [`finetune`]: freeze the first layers, fine-tune on the target, predict.
//!
//! [`pipeline`] chains the stages and writes every artifact to disk.

pub mod autodiff;
pub mod checkpoint;
pub mod curriculum;
pub mod data;
pub mod error;
pub mod finetune;
pub mod metatrain;
pub mod metrics;
pub mod nets;
pub mod optim;
pub mod pipeline;
pub mod relevance;
pub mod seed;

pub use error::{Error, Result};
