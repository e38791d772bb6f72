//! Differentiable latent-graph learning for population-graph node
//! classification.
//!
//! Patients (nodes) are embedded by a small MLP; a soft threshold on the
//! embedded distances yields a dense weighted adjacency that feeds a stack
//! of spatial graph convolutions. The whole pipeline is differentiable, so
//! the graph is trained jointly with the classifier.
//!
//! - [`autodiff`]: dense reverse-mode tape
//! - [`latent_graph`]: embedding MLP and soft adjacency
//! - [`gcn`]: `D⁻¹AHW` layers and prediction
//! - [`model`]: the composed model
//! - [`training`]: Adam training loop, cross-validation, metrics, baselines
//! - [`synthetic`]: random graphs, graph recovery, synthetic datasets
//! - [`data_io`]: CSV ingest, preprocessing, exports

pub mod autodiff;
pub mod data_io;
pub mod error;
pub mod gcn;
pub mod gradcheck;
pub mod latent_graph;
pub mod linalg;
pub mod matrix;
pub mod model;
pub mod optim;
pub mod synthetic;
pub mod training;

pub use autodiff::{Gradients, Tape, Var};

pub use data_io::Dataset;
pub use error::{Error, Result};
pub use latent_graph::{EdgeParams, EmbedderParams};
pub use matrix::Matrix;
pub use model::{Architecture, Graph, ModelParams};
pub use optim::{Adam, AdamConfig, LrSchedule};
pub use training::TrainConfig;

pub(crate) fn seeded_rng(seed: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}
