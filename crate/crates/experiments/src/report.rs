//! CSV outputs. Every float is printed with six decimals; standard deviations
//! are population standard deviations over seeds.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use clue_core::config::fmt_bool;
use clue_data::Label;

use crate::error::{io_err, Result};
use crate::metrics::{MeanStd, MetricsReport, Summary};
use crate::runner::ConfigResult;
use crate::suites::{BackboneResult, NoiseSweep, ABLATION_ROWS};

fn f6(v: f64) -> String {
    format!("{v:.6}")
}

fn flag(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

const SUMMARY_COLUMNS: &str =
    "precision_mean,precision_std_pop,recall_mean,recall_std_pop,f1_mean,f1_std_pop";

fn summary_cells(s: &Summary) -> String {
    [s.precision, s.recall, s.f1]
        .iter()
        .flat_map(|m: &MeanStd| [f6(m.mean), f6(m.std)])
        .collect::<Vec<_>>()
        .join(",")
}

/// One row per (configuration, seed) with per-class and weighted scores.
pub fn per_seed_csv(results: &[ConfigResult]) -> String {
    let mut out = String::from("seed,config");
    for l in Label::ALL {
        write!(out, ",{l}_precision,{l}_recall,{l}_f1").unwrap();
    }
    out.push_str(",weighted_precision,weighted_recall,weighted_f1,accuracy,zero_division\n");
    for res in results {
        for run in &res.runs {
            let r = &run.evaluation.report;
            write!(out, "{},{}", run.seed, res.id).unwrap();
            for s in &r.per_class {
                write!(out, ",{},{},{}", f6(s.precision), f6(s.recall), f6(s.f1)).unwrap();
            }
            writeln!(
                out,
                ",{},{},{},{},{}",
                f6(r.weighted_precision),
                f6(r.weighted_recall),
                f6(r.weighted_f1),
                f6(r.accuracy),
                flag(r.zero_division())
            )
            .unwrap();
        }
    }
    out
}

pub fn summary_csv(results: &[ConfigResult]) -> String {
    let mut out = format!("config,seeds,{SUMMARY_COLUMNS}\n");
    for res in results {
        let s = res.summary();
        writeln!(out, "{},{},{}", res.id, s.seeds, summary_cells(&s)).unwrap();
    }
    out
}

/// Row-normalised 7×7 matrix, rows are true classes. `no_support` marks rows without test examples.
pub fn confusion_csv(report: &MetricsReport) -> String {
    let mut out = String::from("true\\predicted");
    for l in Label::ALL {
        write!(out, ",{l}").unwrap();
    }
    out.push_str(",no_support\n");
    for (l, row) in Label::ALL.iter().zip(report.confusion.normalized()) {
        let cells: Vec<String> = row.iter().map(|&v| f6(v)).collect();
        writeln!(out, "{l},{},{}", cells.join(","), flag(report.confusion.support(l.index()) == 0)).unwrap();
    }
    out
}

pub fn loss_csv(results: &[ConfigResult]) -> String {
    let mut out = String::from("config,seed,epoch,loss\n");
    for res in results {
        for run in &res.runs {
            for (e, l) in run.loss_history.iter().enumerate() {
                writeln!(out, "{},{},{},{}", res.id, run.seed, e + 1, f6(*l)).unwrap();
            }
        }
    }
    out
}

/// Wall-clock seconds; the only output that differs between identical runs.
pub fn timing_csv(results: &[ConfigResult]) -> String {
    let mut out = String::from("config,seed,train_secs,test_secs\n");
    for res in results {
        for run in &res.runs {
            writeln!(out, "{},{},{},{}", res.id, run.seed, f6(run.train_secs), f6(run.test_secs)).unwrap();
        }
    }
    out
}

/// Modality/attention grid in the fixed row order.
pub fn ablation_csv(results: &[ConfigResult]) -> String {
    let mut out = format!("config,s_v,s_a,s_p,attention,{SUMMARY_COLUMNS}\n");
    for (row, res) in ABLATION_ROWS.iter().zip(results) {
        let m = row.mask;
        writeln!(
            out,
            "{},{},{},{},{},{}",
            res.id,
            flag(m.visual),
            flag(m.audio),
            flag(m.proprio),
            flag(row.attention),
            summary_cells(&res.summary())
        )
        .unwrap();
    }
    out
}

pub fn kernels_csv(results: &[ConfigResult]) -> String {
    let mut out = format!("kernels,audio_kernels,audio_strides,{SUMMARY_COLUMNS}\n");
    for res in results {
        let pairs = res.config.model.pairs();
        let get = |k: &str| pairs.iter().find(|(key, _)| *key == k).map(|(_, v)| v.clone()).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{}",
            res.id,
            get("audio_kernels").replace(',', " "),
            get("audio_strides").replace(',', " "),
            summary_cells(&res.summary())
        )
        .unwrap();
    }
    out
}

/// Scores and mean wall-clock seconds per backbone. The timing columns are the
/// only non-reproducible cells of any CSV.
pub fn backbones_csv(results: &[BackboneResult]) -> String {
    let mut out = format!(
        "config,backbone,avg_pool,input_size,feature_dim,{SUMMARY_COLUMNS},train_secs_mean,test_secs_mean\n"
    );
    for (b, (_, train, test)) in results.iter().zip(backbone_timing_rows(results)) {
        let bb = &b.result.config.model.backbone;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            b.result.id,
            bb.kind,
            fmt_bool(bb.with_avg_pool),
            bb.input_size,
            b.feature_dim,
            summary_cells(&b.result.summary()),
            f6(train.mean),
            f6(test.mean)
        )
        .unwrap();
    }
    out
}

/// Mean wall-clock per configuration, for the backbone timing table.
pub fn backbone_timing_rows(results: &[BackboneResult]) -> Vec<(String, MeanStd, MeanStd)> {
    results
        .iter()
        .map(|b| {
            let col = |f: fn(&crate::runner::SeedRun) -> f64| {
                MeanStd::of(&b.result.runs.iter().map(f).collect::<Vec<_>>())
            };
            (b.result.id.clone(), col(|r| r.train_secs), col(|r| r.test_secs))
        })
        .collect()
}

pub fn noise_csv(sweep: &NoiseSweep) -> String {
    let mut out = String::from("p,f1_mean,f1_std_pop\n");
    for (p, m) in sweep.curve() {
        writeln!(out, "{},{},{}", f6(p), f6(m.mean), f6(m.std)).unwrap();
    }
    out
}

pub fn noise_per_seed_csv(sweep: &NoiseSweep) -> String {
    let mut out = String::from("seed,p,f1,clean_f1\n");
    for s in &sweep.seeds {
        for (p, f1) in sweep.probs.iter().zip(&s.f1) {
            writeln!(out, "{},{},{},{}", s.seed, f6(*p), f6(*f1), f6(s.clean_f1)).unwrap();
        }
    }
    out
}

pub fn write_file(dir: &Path, name: &str, content: impl AsRef<[u8]>) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join(name);
    fs::write(&path, content).map_err(io_err(path))
}

/// Writes `per_seed.csv`, `summary.csv`, `loss_history.csv`, `timing.csv` and one
/// `confusion_<config>_<seed>.csv` per run.
pub fn write_run_outputs(dir: &Path, results: &[ConfigResult]) -> Result<()> {
    write_file(dir, "per_seed.csv", per_seed_csv(results))?;
    write_file(dir, "summary.csv", summary_csv(results))?;
    write_file(dir, "loss_history.csv", loss_csv(results))?;
    write_file(dir, "timing.csv", timing_csv(results))?;
    for res in results {
        for run in &res.runs {
            let name = format!("confusion_{}_{}.csv", res.id.replace('+', "_"), run.seed);
            write_file(dir, &name, confusion_csv(&run.evaluation.report))?;
        }
    }
    Ok(())
}
