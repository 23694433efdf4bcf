//! Minimal dense-network machinery: forward pass, stable softmax,
//! cross-entropy, distillation loss, and plain SGD, generic over the
//! floating-point scalar.

pub mod loss;
pub mod matrix;
pub mod net;

pub use loss::{
    backward_and_step, cross_entropy, kd_loss, local_objective, normalize_teacher,
    objective_gradient, softmax, LossBreakdown,
};
pub use matrix::Matrix;
pub use net::{make_model, Activation, ArchId, DenseNet, Layer, NetGrads};
