//! The `clue` command line: dataset generation, training, the experiment grid
//! and Grad-CAM, each run echoing its resolved configuration first.

mod error;

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use clue_core::config::parse_assignments;
use clue_core::explain::format_map_tsv;
use clue_core::{grad_cam, overlay, ClueModel, Preprocessor};
use clue_data::ppm::encode_ppm;
use clue_data::{generate_dataset, read_dataset_manifest, ClassCounts, GenParams, Label};
use clue_experiments::report::{
    ablation_csv, backbones_csv, confusion_csv, kernels_csv, noise_csv, noise_per_seed_csv, per_seed_csv,
    summary_csv, write_file, write_run_outputs,
};
use clue_experiments::runner::{init_seed, run_seed, ConfigResult, SeedRun};
use clue_experiments::suites::{noise_curve, NoiseSeed, NoiseSweep};
use clue_experiments::{
    ablation_suite, backbone_sweep, build_samples, evaluate, kernel_sweep, noise_sweep, Corpus, PreparedDataset,
    RunConfig,
};

pub use error::{CliError, Result};
use error::io_err;

pub const RESOLVED_CONFIG: &str = "resolved_config.txt";
/// Copy of the training configuration stored next to saved weights.
pub const WEIGHTS_CONFIG: &str = "config.txt";
pub const WEIGHTS_DIR: &str = "weights";

#[derive(Debug, Parser)]
#[command(name = "clue", version, about = "Multimodal anomaly classification experiments")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// `key=value` configuration file applied over the defaults
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Single override, applied after the config file; repeatable
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub set: Vec<String>,
    /// Dataset directory
    #[arg(long, global = true, env = "CLUE_DATA_DIR")]
    pub data: Option<PathBuf>,
    /// Output directory
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads across seeds
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args, Default)]
pub struct Overrides {
    /// Enabled streams, e.g. `v,a,p`
    #[arg(long)]
    pub modality: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Single run seed
    #[arg(long, conflicts_with = "seeds")]
    pub seed: Option<u64>,
    /// Comma-separated run seeds
    #[arg(long)]
    pub seeds: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset into --out
    Gen {
        #[arg(long)]
        seed: Option<u64>,
        /// Seven comma-separated per-class counts
        #[arg(long)]
        counts: Option<String>,
    },
    /// Train one seed; writes weights, loss history and metrics
    Train(#[command(flatten)] Overrides),
    /// Evaluate saved weights on the test split of a seed
    Eval {
        #[command(flatten)]
        overrides: Overrides,
        /// Weights directory (default: <out>/weights)
        #[arg(long)]
        weights: Option<PathBuf>,
    },
    /// Seven-row modality and attention ablation
    Ablate(#[command(flatten)] Overrides),
    /// F1 under per-pixel frame corruption
    Noise {
        #[command(flatten)]
        overrides: Overrides,
        /// Comma-separated corruption probabilities
        #[arg(long)]
        probs: Option<String>,
        /// Evaluate these weights instead of training one model per seed
        #[arg(long)]
        weights: Option<PathBuf>,
    },
    /// Square versus rectangular auditory kernels
    Kernels(#[command(flatten)] Overrides),
    /// ResNet18 with and without pooling, AlexNet and VGG16
    Backbones(#[command(flatten)] Overrides),
    /// Grad-CAM heat map for one episode frame
    Cam {
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long)]
        episode: String,
        /// Target class (default: the episode's label)
        #[arg(long = "class")]
        class: Option<String>,
        /// Frame index (default: the event frame)
        #[arg(long)]
        frame: Option<usize>,
    },
    /// Write the visual backbone of saved weights as a manifest in --out
    ExportWeights {
        #[arg(long)]
        weights: Option<PathBuf>,
    },
    /// Load backbone weights into a model and save it under <out>/weights
    ImportWeights {
        #[command(flatten)]
        overrides: Overrides,
        /// Backbone manifest directory
        #[arg(long)]
        backbone: PathBuf,
        /// Full weights to start from (default: fresh initialisation)
        #[arg(long)]
        weights: Option<PathBuf>,
    },
}

/// Dataset generation settings.
#[derive(Debug, Clone, PartialEq)]
pub struct GenSettings {
    pub dataset_seed: u64,
    pub counts: ClassCounts,
    pub params: GenParams,
}

impl Default for GenSettings {
    fn default() -> Self {
        GenSettings {
            dataset_seed: 0,
            counts: ClassCounts::FULL,
            params: GenParams::default(),
        }
    }
}

impl GenSettings {
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "dataset_seed" => {
                self.dataset_seed = v
                    .trim()
                    .parse()
                    .map_err(|_| CliError::Usage(format!("invalid dataset_seed {v:?}")))?
            }
            "counts" => self.counts = v.parse()?,
            _ => self.params.set(key, v)?,
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("dataset_seed={}\ncounts={}\n", self.dataset_seed, self.counts);
        for (k, v) in self.params.pairs() {
            s.push_str(&format!("{k}={v}\n"));
        }
        s
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(io_err(path))
}

fn split_assignment(s: &str) -> Result<(&str, &str)> {
    s.split_once('=')
        .map(|(k, v)| (k.trim(), v.trim()))
        .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got {s:?}")))
}

/// Applies `--config` then every `--set` through `set`; unknown keys fail here,
/// before any work starts.
fn apply_sources(common: &Common, mut set: impl FnMut(&str, &str) -> Result<()>) -> Result<()> {
    if let Some(path) = &common.config {
        for a in parse_assignments(&read_text(path)?)? {
            set(&a.key, &a.value)
                .map_err(|e| CliError::Usage(format!("{}: line {}: {e}", path.display(), a.line)))?;
        }
    }
    for s in &common.set {
        let (k, v) = split_assignment(s)?;
        set(k, v)?;
    }
    Ok(())
}

/// Defaults, then a weights directory's stored config, then `--config`,
/// `--set` and the dedicated flags.
pub fn resolve_run_config(common: &Common, overrides: &Overrides, weights: Option<&Path>) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(stored) = weights.map(|w| w.join(WEIGHTS_CONFIG)).filter(|p| p.is_file()) {
        cfg.apply_text(&read_text(&stored)?)?;
    }
    apply_sources(common, |k, v| Ok(cfg.set(k, v)?))?;
    if let Some(m) = &overrides.modality {
        cfg.set("modalities", m)?;
    }
    if let Some(e) = overrides.epochs {
        cfg.train.epochs = e;
    }
    if let Some(s) = overrides.seed {
        cfg.seeds = vec![s];
    }
    if let Some(s) = &overrides.seeds {
        cfg.set("seeds", s)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn resolve_gen_settings(common: &Common, seed: Option<u64>, counts: Option<&str>) -> Result<GenSettings> {
    let mut settings = GenSettings::default();
    apply_sources(common, |k, v| settings.set(k, v))?;
    if let Some(s) = seed {
        settings.dataset_seed = s;
    }
    if let Some(c) = counts {
        settings.counts = c.parse()?;
    }
    settings.counts.validate()?;
    settings.params.validate()?;
    Ok(settings)
}

fn write_resolved(out: &Path, text: &str) -> Result<()> {
    Ok(write_file(out, RESOLVED_CONFIG, text)?)
}

fn data_dir(common: &Common) -> Result<&Path> {
    common
        .data
        .as_deref()
        .ok_or_else(|| CliError::Usage("no dataset: pass --data or set CLUE_DATA_DIR".into()))
}

fn load_prepared(common: &Common, cfg: &RunConfig) -> Result<(Corpus, PreparedDataset)> {
    let corpus = Corpus::load(data_dir(common)?)?;
    let data = corpus.prepare(&cfg.prep, cfg.model.backbone.input_size)?;
    Ok((corpus, data))
}

fn weights_dir(common: &Common, given: Option<&PathBuf>) -> PathBuf {
    given.cloned().unwrap_or_else(|| common.out.join(WEIGHTS_DIR))
}

/// Keeps only the first seed for commands that produce a single model.
fn single_seed(mut cfg: RunConfig) -> (RunConfig, u64) {
    let seed = cfg.seeds[0];
    cfg.seeds = vec![seed];
    (cfg, seed)
}

fn load_model(cfg: &RunConfig, data: &PreparedDataset, weights: &Path) -> Result<ClueModel<f32>> {
    let mut model = ClueModel::build(&cfg.model, data.dims, 0)?;
    model.load_weights(weights)?;
    Ok(model)
}

fn save_model(model: &ClueModel<f32>, cfg: &RunConfig, dir: &Path) -> Result<()> {
    model.save_weights(dir)?;
    Ok(write_file(dir, WEIGHTS_CONFIG, cfg.to_text())?)
}

fn print_summary(results: &[ConfigResult]) {
    for r in results {
        let s = r.summary();
        println!(
            "{}: F1 {:.4} ± {:.4} over {} seed(s)",
            r.id,
            s.f1.mean,
            s.f1.std,
            r.runs.len()
        );
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let common = &cli.common;
    let out = common.out.as_path();
    match &cli.command {
        Command::Gen { seed, counts } => {
            let settings = resolve_gen_settings(common, *seed, counts.as_deref())?;
            write_resolved(out, &settings.to_text())?;
            let manifest = generate_dataset(&settings.counts, settings.dataset_seed, &settings.params, out)?;
            let counts = manifest.counts();
            for l in Label::ALL {
                println!("{l}\t{}", counts[l.index()]);
            }
            println!("total\t{}", manifest.rows.len());
        }
        Command::Train(o) => {
            let (cfg, seed) = single_seed(resolve_run_config(common, o, None)?);
            write_resolved(out, &cfg.to_text())?;
            let (_, data) = load_prepared(common, &cfg)?;
            let run = run_seed(&cfg, &data, seed)?;
            save_model(&run.model, &cfg, &out.join(WEIGHTS_DIR))?;
            let results = [ConfigResult {
                id: "clue".into(),
                config: cfg,
                runs: vec![run],
            }];
            write_run_outputs(out, &results)?;
            print_summary(&results);
        }
        Command::Eval { overrides, weights } => {
            let weights = weights_dir(common, weights.as_ref());
            let (cfg, seed) = single_seed(resolve_run_config(common, overrides, Some(&weights))?);
            write_resolved(out, &cfg.to_text())?;
            let (_, data) = load_prepared(common, &cfg)?;
            let model = load_model(&cfg, &data, &weights)?;
            let split = data.split(cfg.train.train_frac, seed)?;
            let test = build_samples(&model, split.test.iter().map(|&i| &data.episodes[i]))?;
            let evaluation = evaluate(&model, &test)?;
            let confusion = confusion_csv(&evaluation.report);
            let results = [ConfigResult {
                id: "clue".into(),
                config: cfg,
                runs: vec![SeedRun {
                    seed,
                    split,
                    loss_history: Vec::new(),
                    evaluation,
                    train_secs: 0.0,
                    test_secs: 0.0,
                    model,
                }],
            }];
            write_file(out, "per_seed.csv", per_seed_csv(&results))?;
            write_file(out, "summary.csv", summary_csv(&results))?;
            write_file(out, &format!("confusion_clue_{seed}.csv"), confusion)?;
            print_summary(&results);
        }
        Command::Ablate(o) => {
            let cfg = resolve_run_config(common, o, None)?;
            write_resolved(out, &cfg.to_text())?;
            let (_, data) = load_prepared(common, &cfg)?;
            let results = ablation_suite(&cfg, &data, common.jobs)?;
            write_run_outputs(out, &results)?;
            write_file(out, "ablation.csv", ablation_csv(&results))?;
            print_summary(&results);
        }
        Command::Noise {
            overrides,
            probs,
            weights,
        } => {
            let mut cfg = resolve_run_config(common, overrides, weights.as_deref())?;
            if let Some(p) = probs {
                cfg.set("noise_probs", p)?;
                cfg.validate()?;
            }
            if weights.is_some() {
                cfg = single_seed(cfg).0;
            }
            write_resolved(out, &cfg.to_text())?;
            let (_, data) = load_prepared(common, &cfg)?;
            let sweep = match weights {
                Some(w) => {
                    let seed = cfg.seeds[0];
                    let model = load_model(&cfg, &data, w)?;
                    let split = data.split(cfg.train.train_frac, seed)?;
                    let test: Vec<_> = split.test.iter().map(|&i| &data.episodes[i]).collect();
                    let clean = evaluate(&model, &build_samples(&model, test.iter().copied())?)?;
                    let reports = noise_curve(&model, &test, &cfg.noise_probs, seed)?;
                    NoiseSweep {
                        probs: cfg.noise_probs.clone(),
                        seeds: vec![NoiseSeed {
                            seed,
                            clean_f1: clean.report.weighted_f1,
                            f1: reports.iter().map(|r| r.weighted_f1).collect(),
                        }],
                    }
                }
                None => noise_sweep(&cfg, &data, common.jobs)?,
            };
            write_file(out, "noise.csv", noise_csv(&sweep))?;
            write_file(out, "noise_per_seed.csv", noise_per_seed_csv(&sweep))?;
            for (p, m) in sweep.curve() {
                println!("p={p:.2}: F1 {:.4} ± {:.4}", m.mean, m.std);
            }
        }
        Command::Kernels(o) => {
            let cfg = resolve_run_config(common, o, None)?;
            write_resolved(out, &cfg.to_text())?;
            let (_, data) = load_prepared(common, &cfg)?;
            let results = kernel_sweep(&cfg, &data, common.jobs)?;
            write_run_outputs(out, &results)?;
            write_file(out, "kernels.csv", kernels_csv(&results))?;
            print_summary(&results);
        }
        Command::Backbones(o) => {
            let cfg = resolve_run_config(common, o, None)?;
            write_resolved(out, &cfg.to_text())?;
            let corpus = Corpus::load(data_dir(common)?)?;
            let results = backbone_sweep(&cfg, &corpus, common.jobs)?;
            let plain: Vec<ConfigResult> = results.iter().map(|b| b.result.clone()).collect();
            write_run_outputs(out, &plain)?;
            write_file(out, "backbones.csv", backbones_csv(&results))?;
            print_summary(&plain);
        }
        Command::Cam {
            overrides,
            weights,
            episode,
            class,
            frame,
        } => {
            let weights = weights_dir(common, weights.as_ref());
            let (cfg, _) = single_seed(resolve_run_config(common, overrides, Some(&weights))?);
            write_resolved(out, &cfg.to_text())?;
            let corpus = Corpus::load(data_dir(common)?)?;
            let ep = corpus
                .episodes
                .iter()
                .find(|e| &e.id == episode)
                .ok_or_else(|| CliError::Usage(format!("episode {episode:?} not in the dataset")))?;
            let params = &corpus.manifest.params;
            cfg.prep.validate(params)?;
            let prepared = Preprocessor::new(cfg.prep.clone(), cfg.model.backbone.input_size, params.sample_rate)?
                .prepare(ep)?;
            let mut model = ClueModel::build(&cfg.model, cfg.prep.dims(params), 0)?;
            model.load_weights(&weights)?;
            let target: Label = match class {
                Some(c) => c.parse()?,
                None => prepared.label,
            };
            let frame = frame.unwrap_or(prepared.event_frame);
            let map = grad_cam(&model, &prepared.input(cfg.model.modalities), target, frame)?;
            let frame_img = prepared
                .frames
                .get(frame)
                .ok_or_else(|| CliError::Usage(format!("frame {frame} out of range")))?;
            let stem = format!("cam_{episode}_{target}_{frame}");
            write_file(out, &format!("{stem}.ppm"), encode_ppm(&overlay(&map, frame_img)?)?)?;
            write_file(out, &format!("{stem}.tsv"), format_map_tsv(&map))?;
            println!(
                "{stem}: mass in {} {:.4}{}",
                prepared.signal_region.as_str(),
                map.quadrant_mass(prepared.signal_region),
                if map.is_zero { " (zero map)" } else { "" }
            );
        }
        Command::ExportWeights { weights } => {
            let weights = weights_dir(common, weights.as_ref());
            let cfg = resolve_run_config(common, &Overrides::default(), Some(&weights))?;
            write_resolved(out, &cfg.to_text())?;
            let mut model = ClueModel::<f32>::build(&cfg.model, model_dims(common, &cfg)?, 0)?;
            model.load_weights(&weights)?;
            model.save_backbone(out)?;
            println!("backbone written to {}", out.display());
        }
        Command::ImportWeights {
            overrides,
            backbone,
            weights,
        } => {
            let (cfg, seed) = single_seed(resolve_run_config(common, overrides, weights.as_deref())?);
            write_resolved(out, &cfg.to_text())?;
            let mut model = ClueModel::<f32>::build(&cfg.model, model_dims(common, &cfg)?, init_seed(seed))?;
            if let Some(w) = weights {
                model.load_weights(w)?;
            }
            model.load_backbone(backbone)?;
            save_model(&model, &cfg, &out.join(WEIGHTS_DIR))?;
            println!("weights written to {}", out.join(WEIGHTS_DIR).display());
        }
    }
    Ok(())
}

/// Input dimensions from the dataset's generator settings, or the generator
/// defaults when no dataset is given.
fn model_dims(common: &Common, cfg: &RunConfig) -> Result<clue_core::InputDims> {
    let params = match &common.data {
        Some(dir) => read_dataset_manifest(dir)?.params,
        None => GenParams::default(),
    };
    cfg.prep.validate(&params)?;
    Ok(cfg.prep.dims(&params))
}
