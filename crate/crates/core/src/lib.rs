//! KACQ-DCNN: a dual-channel classifier that pairs a BiLSTM/KAN channel with
//! a KAN-dressed quantum channel, plus the tooling around it (preprocessing,
//! training, metrics, conformal prediction and attributions).

pub mod conformal;
pub mod dataset;
pub mod error;
pub mod explain;
pub mod gradcheck;
pub mod kan;
pub mod linalg;
pub mod metrics;
pub mod models;
pub mod optim;
pub mod par;
pub mod qsim;
pub mod recurrent;
pub mod rng;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use rng::RngStream;
pub use tensor::Tensor;
