//! Neural random-utility discrete choice models.
//!
//! The crate is organised bottom-up:
//!
//! - [`netcore`]: dense feed-forward networks with exact reverse-mode gradients.
//! - [`models`]: MNL, TasteNet, DeepMNL, RUMnet and VNN choice models.
//! - [`training`]: minibatch Adam with early stopping, splits and repeated CV.
//! - [`synthdata`]: ground-truth generators for synthetic recovery experiments.
//! - [`theory`]: generalization-gap, compact-sample and minimum-probability bounds.
//! - [`analysis`]: k-means customer typing and attribute-sweep curves.
//! - [`dataio`]: the long-format choice CSV and its loaders.
//! - [`cli`]: the `rumnet` batch command line.

pub mod analysis;
pub mod cli;
pub mod dataio;
pub mod error;
pub mod models;
pub mod netcore;
pub mod synthdata;
pub mod theory;
pub mod training;

pub use dataio::Dataset;
pub use error::{Error, Result};
pub use models::{ChoiceEvent, ModelKind, RumnetConfig, RumnetModel};
pub use netcore::{Activation, DenseNetwork, ForwardCache, GradientBuffer, NetworkSpec};
pub use training::{FitReport, TrainConfig};
