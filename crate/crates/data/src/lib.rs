//! Synthetic seven-class multimodal manipulation episodes.

mod episode;
mod error;
mod generate;
mod label;
pub mod manifest;
pub mod ppm;
pub mod proprio;
pub mod render;
mod split;

pub use episode::{
    frame_file, load_dataset, load_episode, read_dataset_manifest, Episode, AUDIO_FILE,
    PROPRIO_FILE,
};
pub use error::{DataError, Result};
pub use generate::{episode_seed, generate_dataset, generate_episode, generate_episodes};
pub use label::{Label, Quadrant, NUM_CLASSES};
pub use manifest::{ClassCounts, DatasetManifest, GenParams, ManifestRow};
pub use proprio::ProprioTrace;
pub use split::{class_weights, stratified_split, temporal_subsample, test_count, Split};
