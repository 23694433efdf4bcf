//! Deterministic single-process federated-distillation simulator with a
//! pluggable logits-poisoning layer.
//!
//! Clients exchange per-sample confidence vectors ("knowledge") instead
//! of model parameters. The server aggregates either per-class means
//! (`fd_avg`) or a per-sample cosine-similarity cache (`cache`), and
//! malicious clients may transform their uploads (confidence
//! permutation, random, or zero poisoning) before they reach the server.
//!
//! The numeric kernels in [`nn`] are generic over the floating-point
//! scalar; the simulator itself runs in `f64` via the [`Mat`] and
//! [`Net`] aliases below.

pub mod attacks;
pub mod config;
pub mod data;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod protocol;
pub mod scalar;
pub mod sweep;

pub use error::{Result, SimError};

/// The simulator's working matrix type.
pub type Mat = nn::Matrix<f64>;
/// The simulator's working network type.
pub type Net = nn::DenseNet<f64>;
