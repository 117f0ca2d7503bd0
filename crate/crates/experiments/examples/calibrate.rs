//! Trains the 249-episode synthetic set (dataset seed 7) once per seed and
//! prints F1, timing and a thinned loss curve.
//!
//!     cargo run --release -p clue-experiments --example calibrate -- epochs=40 seeds=0,1,2

use std::time::Instant;

use clue_data::{ClassCounts, GenParams};
use clue_experiments::{run_seed, Corpus, RunConfig};

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mut cfg = RunConfig::default();
    for a in &args {
        let (k, v) = a.split_once('=').unwrap();
        cfg.set(k, v).unwrap();
    }
    let t = Instant::now();
    let corpus = Corpus::generate(&ClassCounts::FULL, 7, &GenParams::default()).unwrap();
    let data = corpus.prepare(&cfg.prep, cfg.model.backbone.input_size).unwrap();
    println!("data ready in {:.1}s", t.elapsed().as_secs_f64());
    for &seed in &cfg.seeds {
        let run = run_seed(&cfg, &data, seed).unwrap();
        let r = &run.evaluation.report;
        println!(
            "seed {seed}: f1 {:.4} acc {:.4} train {:.1}s test {:.1}s loss {:?}",
            r.weighted_f1,
            r.accuracy,
            run.train_secs,
            run.test_secs,
            run.loss_history.iter().step_by(5).map(|l| format!("{l:.3}")).collect::<Vec<_>>()
        );
        println!("  per-class f1 {:?}", r.per_class.iter().map(|s| format!("{:.2}", s.f1)).collect::<Vec<_>>());
    }
}
