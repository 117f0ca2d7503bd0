//! Training protocol, evaluation metrics and the experiment grid.

mod dataset;
mod error;
pub mod metrics;
pub mod report;
pub mod runner;
pub mod settings;
pub mod suites;
pub mod train;

pub use dataset::{Corpus, PreparedDataset, SplitIndices};
pub use error::{ExperimentError, Result};
pub use metrics::{ClassScores, ConfusionMatrix, MeanStd, MetricsReport, Summary};
pub use runner::{run_seed, run_seeded, ConfigResult, SeedRun};
pub use settings::{RunConfig, TrainSettings};
pub use suites::{ablation_suite, backbone_sweep, kernel_sweep, noise_sweep, AblationRow, ABLATION_ROWS};
pub use train::{build_samples, evaluate, train, Evaluation, Sample};
