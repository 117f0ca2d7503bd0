//! Numeric substrate: dense tensors, a reverse-mode tape, the layers the
//! three-stream classifier is built from, Adam, finite-difference gradient
//! checks, and the on-disk weight manifest.

pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod layers;
pub mod manifest;
pub mod ops;
pub mod optim;
pub mod params;
pub mod rng;
pub mod tensor;

pub use error::{Result, TensorError};
pub use graph::{Gradients, Graph, Var};
pub use ops::Mode;
pub use params::{Init, ParamId, ParamStore, Parameter};
pub use tensor::{DType, Scalar, Tensor};
