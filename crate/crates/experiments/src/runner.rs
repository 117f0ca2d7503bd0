//! Seeded runs: re-split, re-initialise, train and evaluate once per seed.

use std::time::Instant;

use clue_core::ClueModel;
use clue_tensor::rng::derive_seed;
use rayon::prelude::*;

use crate::dataset::{PreparedDataset, SplitIndices};
use crate::error::{ExperimentError, Result};
use crate::metrics::Summary;
use crate::settings::RunConfig;
use crate::train::{build_samples, evaluate, train, Evaluation};

const INIT_STREAM: u64 = 0x1417;
const TRAIN_STREAM: u64 = 0x7a17;

/// Parameter initialisation seed for a run seed.
pub fn init_seed(seed: u64) -> u64 {
    derive_seed(&[seed, INIT_STREAM])
}

/// Shuffling and dropout seed for a run seed.
pub fn train_seed(seed: u64) -> u64 {
    derive_seed(&[seed, TRAIN_STREAM])
}

#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub split: SplitIndices,
    pub loss_history: Vec<f64>,
    pub evaluation: Evaluation,
    pub train_secs: f64,
    pub test_secs: f64,
    pub model: ClueModel<f32>,
}

/// All seeds of one configuration.
#[derive(Debug, Clone)]
pub struct ConfigResult {
    pub id: String,
    pub config: RunConfig,
    pub runs: Vec<SeedRun>,
}

impl ConfigResult {
    pub fn summary(&self) -> Summary {
        Summary::of(self.runs.iter().map(|r| &r.evaluation.report))
    }
}

/// Builds an untrained model for `seed` on `data`.
pub fn fresh_model(cfg: &RunConfig, data: &PreparedDataset, seed: u64) -> Result<ClueModel<f32>> {
    if cfg.model.modalities.visual && cfg.model.backbone.input_size != data.input_size {
        return Err(ExperimentError::Config(format!(
            "dataset prepared for {0}×{0} frames, model expects {1}×{1}",
            data.input_size, cfg.model.backbone.input_size
        )));
    }
    Ok(ClueModel::build(&cfg.model, data.dims, init_seed(seed))?)
}

pub fn run_seed(cfg: &RunConfig, data: &PreparedDataset, seed: u64) -> Result<SeedRun> {
    let split = data.split(cfg.train.train_frac, seed)?;
    let mut model = fresh_model(cfg, data, seed)?;
    let start = Instant::now();
    let train_set = build_samples(&model, split.train.iter().map(|&i| &data.episodes[i]))?;
    let loss_history = train(&mut model, &train_set, &cfg.train, &data.class_weights, train_seed(seed))?;
    let train_secs = start.elapsed().as_secs_f64();
    let start = Instant::now();
    let test_set = build_samples(&model, split.test.iter().map(|&i| &data.episodes[i]))?;
    let evaluation = evaluate(&model, &test_set)?;
    let test_secs = start.elapsed().as_secs_f64();
    Ok(SeedRun {
        seed,
        split,
        loss_history,
        evaluation,
        train_secs,
        test_secs,
        model,
    })
}

/// Runs `f` over `items` on up to `jobs` threads, keeping input order.
pub fn parallel_map<I: Sync, O: Send>(
    items: &[I],
    jobs: usize,
    f: impl Fn(&I) -> Result<O> + Sync + Send,
) -> Result<Vec<O>> {
    if jobs <= 1 || items.len() <= 1 {
        return items.iter().map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| ExperimentError::Config(format!("cannot start {jobs} worker threads: {e}")))?;
    pool.install(|| items.par_iter().map(f).collect())
}

/// Every seed of `cfg.seeds`, in order. Each seed owns its model and random streams,
/// so results do not depend on `jobs`.
pub fn run_seeded(id: &str, cfg: &RunConfig, data: &PreparedDataset, jobs: usize) -> Result<ConfigResult> {
    cfg.validate()?;
    let runs = parallel_map(&cfg.seeds, jobs, |&s| run_seed(cfg, data, s))?;
    Ok(ConfigResult {
        id: id.to_string(),
        config: cfg.clone(),
        runs,
    })
}
