//! Backbones, the visual, auditory and proprioceptive streams, late fusion,
//! preprocessing and Grad-CAM.

pub mod backbone;
pub mod config;
mod error;
pub mod explain;
pub mod model;
pub mod preprocess;

pub use backbone::Backbone;
pub use config::{BackboneConfig, BackboneKind, ModalityMask, ModelConfig, RecurrentKind, NUM_CLASSES};
pub use error::{CoreError, Result};
pub use explain::{grad_cam, overlay, ActivationMap};
pub use model::{Architecture, ClueModel, ForwardVars, InputDims, ModelInput, Prediction, VisualInput};
pub use preprocess::{crop_and_scale, PrepConfig, PreparedEpisode, Preprocessor};
