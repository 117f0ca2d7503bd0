//! The experiment grid: modality/attention ablation, image-noise sweep,
//! audio kernel shapes and backbone comparison.

use std::collections::BTreeMap;

use clue_core::{BackboneKind, ClueModel, ModalityMask, PreparedEpisode};
use clue_tensor::rng::{derive_seed, seeded};
use clue_tensor::Tensor;
use rand::Rng;

use crate::dataset::{Corpus, PreparedDataset};
use crate::error::Result;
use crate::metrics::{MeanStd, MetricsReport};
use crate::runner::{parallel_map, run_seed, run_seeded, ConfigResult};
use crate::settings::RunConfig;
use crate::train::{build_samples, evaluate};

/// One row of the modality/attention grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AblationRow {
    pub mask: ModalityMask,
    pub attention: bool,
}

impl AblationRow {
    const fn new(visual: bool, audio: bool, proprio: bool, attention: bool) -> Self {
        AblationRow {
            mask: ModalityMask { visual, audio, proprio },
            attention,
        }
    }

    pub fn id(&self) -> String {
        let mut parts: Vec<&str> = [(self.mask.visual, "v"), (self.mask.audio, "a"), (self.mask.proprio, "p")]
            .into_iter()
            .filter_map(|(on, s)| on.then_some(s))
            .collect();
        if self.attention {
            parts.push("attn");
        }
        parts.join("+")
    }
}

/// Proprio only, audio only, then visual with attention alone and with each
/// other stream, and finally all three without and with attention.
pub const ABLATION_ROWS: [AblationRow; 7] = [
    AblationRow::new(false, false, true, false),
    AblationRow::new(false, true, false, false),
    AblationRow::new(true, false, false, true),
    AblationRow::new(true, false, true, true),
    AblationRow::new(true, true, false, true),
    AblationRow::new(true, true, true, false),
    AblationRow::new(true, true, true, true),
];

pub fn ablation_configs(base: &RunConfig) -> Vec<(String, RunConfig)> {
    ABLATION_ROWS
        .iter()
        .map(|row| {
            let mut cfg = base.clone();
            cfg.model.modalities = row.mask;
            cfg.model.attention = row.attention;
            (row.id(), cfg)
        })
        .collect()
}

/// Runs a list of configurations on one prepared dataset, parallel over seeds within each.
pub fn run_configs(configs: &[(String, RunConfig)], data: &PreparedDataset, jobs: usize) -> Result<Vec<ConfigResult>> {
    configs.iter().map(|(id, cfg)| run_seeded(id, cfg, data, jobs)).collect()
}

pub fn ablation_suite(base: &RunConfig, data: &PreparedDataset, jobs: usize) -> Result<Vec<ConfigResult>> {
    run_configs(&ablation_configs(base), data, jobs)
}

/// Square 3×3 kernels against two rectangular stride-equal layers followed by two square ones.
pub fn kernel_configs(base: &RunConfig) -> Vec<(String, RunConfig)> {
    ["square", "rectangular"]
        .into_iter()
        .map(|preset| {
            let mut cfg = base.clone();
            cfg.model.set("audio_preset", preset).expect("known preset");
            (preset.to_string(), cfg)
        })
        .collect()
}

pub fn kernel_sweep(base: &RunConfig, data: &PreparedDataset, jobs: usize) -> Result<Vec<ConfigResult>> {
    let configs = kernel_configs(base);
    for (_, cfg) in &configs {
        // fail before any training if the MFCC is too short for a kernel
        ClueModel::<f32>::build(&cfg.model, data.dims, 0)?;
    }
    run_configs(&configs, data, jobs)
}

/// ResNet18 with and without the final average pool, AlexNet and VGG16. AlexNet
/// needs at least 63×63 inputs. ResNet18 runs at 64×64 too, since at 32×32 its
/// last map is 1×1 and the pool changes nothing.
pub fn backbone_configs(base: &RunConfig) -> Vec<(String, RunConfig)> {
    [
        ("resnet18_ap", BackboneKind::ResNet18, true, 64),
        ("resnet18", BackboneKind::ResNet18, false, 64),
        ("alexnet", BackboneKind::AlexNet, false, 64),
        ("vgg16", BackboneKind::Vgg16, false, 32),
    ]
    .into_iter()
    .map(|(id, kind, ap, size)| {
        let mut cfg = base.clone();
        cfg.model.backbone.kind = kind;
        cfg.model.backbone.with_avg_pool = ap;
        cfg.model.backbone.input_size = size;
        (id.to_string(), cfg)
    })
    .collect()
}

#[derive(Debug, Clone)]
pub struct BackboneResult {
    pub feature_dim: usize,
    pub result: ConfigResult,
}

pub fn backbone_sweep(base: &RunConfig, corpus: &Corpus, jobs: usize) -> Result<Vec<BackboneResult>> {
    let mut prepared: BTreeMap<usize, PreparedDataset> = BTreeMap::new();
    let mut out = Vec::new();
    for (id, cfg) in backbone_configs(base) {
        let size = cfg.model.backbone.input_size;
        if let std::collections::btree_map::Entry::Vacant(e) = prepared.entry(size) {
            e.insert(corpus.prepare(&cfg.prep, size)?);
        }
        let data = &prepared[&size];
        let feature_dim = ClueModel::<f32>::build(&cfg.model, data.dims, 0)?
            .arch
            .visual
            .as_ref()
            .map_or(0, |v| v.backbone.feature_dim());
        out.push(BackboneResult {
            feature_dim,
            result: run_seeded(&id, &cfg, data, jobs)?,
        });
    }
    Ok(out)
}

/// Zeroes every pixel (all three channels) independently with probability `p`.
/// Returns the corrupted frame and the number of zeroed pixels.
pub fn corrupt_frame(frame: &Tensor<f32>, p: f64, rng: &mut impl Rng) -> (Tensor<f32>, usize) {
    let mut out = frame.clone();
    if p <= 0.0 {
        return (out, 0);
    }
    let &[c, h, w] = frame.shape() else { panic!("frame must be [c, h, w]") };
    let plane = h * w;
    let mut zeroed = 0;
    let data = out.data_mut();
    for i in 0..plane {
        if rng.random_bool(p) {
            zeroed += 1;
            for ch in 0..c {
                data[ch * plane + i] = 0.0;
            }
        }
    }
    (out, zeroed)
}

const NOISE_STREAM: u64 = 0x9015e;

/// Test-set reports of one trained model at each noise probability. Only the
/// frames are corrupted; p = 0 evaluates the clean test set.
pub fn noise_curve(
    model: &ClueModel<f32>,
    test: &[&PreparedEpisode],
    probs: &[f64],
    seed: u64,
) -> Result<Vec<MetricsReport>> {
    probs
        .iter()
        .map(|&p| {
            let mut rng = seeded(derive_seed(&[NOISE_STREAM, seed, p.to_bits()]));
            let noisy: Vec<PreparedEpisode> = test
                .iter()
                .map(|ep| {
                    let mut e = (*ep).clone();
                    e.frames = e.frames.iter().map(|f| corrupt_frame(f, p, &mut rng).0).collect();
                    e
                })
                .collect();
            Ok(evaluate(model, &build_samples(model, &noisy)?)?.report)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct NoiseSeed {
    pub seed: u64,
    /// clean test-set F1 of the trained model
    pub clean_f1: f64,
    /// weighted F1 for each probability of the sweep
    pub f1: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct NoiseSweep {
    pub probs: Vec<f64>,
    pub seeds: Vec<NoiseSeed>,
}

impl NoiseSweep {
    pub fn curve(&self) -> Vec<(f64, MeanStd)> {
        self.probs
            .iter()
            .enumerate()
            .map(|(i, &p)| (p, MeanStd::of(&self.seeds.iter().map(|s| s.f1[i]).collect::<Vec<_>>())))
            .collect()
    }
}

/// Trains on clean data once per seed, then evaluates the noisy test sets.
pub fn noise_sweep(cfg: &RunConfig, data: &PreparedDataset, jobs: usize) -> Result<NoiseSweep> {
    cfg.validate()?;
    let seeds = parallel_map(&cfg.seeds, jobs, |&seed| {
        let run = run_seed(cfg, data, seed)?;
        let test: Vec<&PreparedEpisode> = run.split.test.iter().map(|&i| &data.episodes[i]).collect();
        let reports = noise_curve(&run.model, &test, &cfg.noise_probs, seed)?;
        Ok(NoiseSeed {
            seed,
            clean_f1: run.evaluation.report.weighted_f1,
            f1: reports.iter().map(|r| r.weighted_f1).collect(),
        })
    })?;
    Ok(NoiseSweep {
        probs: cfg.noise_probs.clone(),
        seeds,
    })
}
