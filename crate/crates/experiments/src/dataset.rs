//! Datasets in memory: raw episodes and their model-ready form.

use std::collections::HashMap;
use std::path::Path;

use clue_core::{InputDims, PrepConfig, PreparedEpisode, Preprocessor};
use clue_data::{
    class_weights, generate_episodes, load_dataset, stratified_split, ClassCounts, DatasetManifest, Episode,
    GenParams, Label, NUM_CLASSES,
};
use rayon::prelude::*;

use crate::error::Result;

/// A dataset as stored on disk.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub manifest: DatasetManifest,
    pub episodes: Vec<Episode>,
}

impl Corpus {
    pub fn load(root: &Path) -> Result<Self> {
        let (manifest, episodes) = load_dataset(root)?;
        Ok(Corpus { manifest, episodes })
    }

    pub fn generate(counts: &ClassCounts, seed: u64, params: &GenParams) -> Result<Self> {
        let (manifest, episodes) = generate_episodes(counts, seed, params)?;
        Ok(Corpus { manifest, episodes })
    }

    /// Preprocesses every episode for a backbone with `input_size × input_size` frames.
    pub fn prepare(&self, prep: &PrepConfig, input_size: usize) -> Result<PreparedDataset> {
        let params = &self.manifest.params;
        prep.validate(params)?;
        let pre = Preprocessor::new(prep.clone(), input_size, params.sample_rate)?;
        let episodes = self
            .episodes
            .par_iter()
            .map(|ep| pre.prepare(ep))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(PreparedDataset {
            class_weights: class_weights(&self.manifest.counts())?,
            labelled: self.manifest.labelled_ids(),
            dims: prep.dims(params),
            input_size,
            episodes,
        })
    }
}

/// Preprocessed episodes plus the dataset-level quantities training needs.
#[derive(Debug, Clone)]
pub struct PreparedDataset {
    pub episodes: Vec<PreparedEpisode>,
    pub labelled: Vec<(String, Label)>,
    pub dims: InputDims,
    pub input_size: usize,
    /// inverse-frequency weights over the whole dataset
    pub class_weights: [f64; NUM_CLASSES],
}

/// Episode indices of one seed's partition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl PreparedDataset {
    pub fn split(&self, train_frac: f64, seed: u64) -> Result<SplitIndices> {
        let split = stratified_split(&self.labelled, train_frac, seed)?;
        let index: HashMap<&str, usize> = self.episodes.iter().enumerate().map(|(i, e)| (e.id.as_str(), i)).collect();
        let lookup = |ids: &[String]| ids.iter().map(|id| index[id.as_str()]).collect();
        Ok(SplitIndices {
            train: lookup(&split.train),
            test: lookup(&split.test),
        })
    }
}
