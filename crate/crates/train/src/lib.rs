//! Data loading, MLP models, SGD and the training/distillation loops built on
//! the `ldrld-core` objective.

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod model;
pub mod optim;
pub mod train;

pub use data::{make_blobs, BlobsSpec, Dataset, DelimitedOptions, Split};
pub use error::{Error, Result};
pub use model::{MlpSpec, Model};
pub use train::{distill, train_supervised, EpochRecord, TrainRecord, TrainSpec};
