//! Generates a synthetic corpus and runs clean, cluster, train and eval on it.
//!
//!     cargo run --release --example desk_experiment -- [out_dir]

use std::path::PathBuf;
use std::time::Instant;

use sqlpattern::eval::BaselineKind;
use sqlpattern::pipeline;
use sqlpattern::synth::{desk_pipeline_config, generate, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let out: PathBuf = std::env::args().nth(1).map_or_else(|| "target/desk_experiment".into(), PathBuf::from);
    let synth = SynthConfig::default();
    let data_dir = out.join("data");
    std::fs::create_dir_all(&data_dir)?;
    let files = generate(&synth).write(&data_dir)?;
    let config = desk_pipeline_config(&files, &out, synth.embedding_dim, synth.seed);

    let t = Instant::now();
    let cleaned = pipeline::cmd_clean(&config)?;
    println!("clean: {} of {} retained", cleaned.report.retained, cleaned.report.input);
    let (_, summary) = pipeline::cmd_cluster(&config)?;
    println!("cluster: {summary:?}");
    let model = pipeline::cmd_train(&config)?;
    println!("train: epoch losses {:?}", model.metadata().epoch_losses);
    let report = pipeline::cmd_eval(&config)?;
    let best = report.best_row().expect("non-empty grid");
    println!(
        "eval: best beta {} accuracy_all {:.3} accuracy_non_rejected {:.3} pct_rejected {:.3}",
        best.beta, best.accuracy_all, best.accuracy_non_rejected, best.pct_rejected
    );
    for kind in [BaselineKind::EmbeddingsAverage, BaselineKind::AcceptAll] {
        println!("baseline {}: accuracy_all {:.3}", kind.name(), report.baseline(kind).unwrap().accuracy_all);
    }
    println!("elapsed {:.1}s", t.elapsed().as_secs_f64());
    Ok(())
}
