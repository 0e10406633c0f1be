//! Reduced kernel mean embeddings (RKME) as model specifications.
//!
//! Providers summarise their private training data with a small weighted
//! set of constructed points whose kernel mean embedding approximates the
//! data's ([`rkme::reduce`]) and upload it next to their model
//! ([`market::Pool::upload`]). A user holding only unlabeled test data then
//! finds reusable models by comparing embeddings ([`deploy`]): either one
//! closest model for the whole task, or a per-instance selector trained on a
//! sample herded from the specifications ([`herding`]).
//!
//! Hot loops run on rayon behind the default `parallel` feature; disabling
//! it gives the sequential build with bit-identical results.

pub mod data;
pub mod demo;
pub mod deploy;
pub mod error;
pub mod herding;
pub mod kernel;
pub mod kmeans;
mod linalg;
pub mod market;
pub mod models;
pub mod par;
pub mod rkme;
pub mod synth;

pub use data::{Dataset, Points};
pub use error::{Error, Result};
pub use kernel::{KernelConfig, KernelFamily};
pub use market::{LearnwareEntry, Pool};
pub use models::ModelRef;
pub use rkme::{Embedding, Rkme};
