//! Sweeps the rejection threshold over a test split and compares against the
//! embeddings-average and accept-all baselines.
//!
//!     cargo run --release --example evaluate_sweep

use sqlpattern::eval::{baseline_accept_all, baseline_embeddings, evaluate, BaselineKind, default_beta_grid};
use sqlpattern::matcher::build_index;
use sqlpattern::synth::SynthConfig;

#[path = "shared/mod.rs"]
mod shared;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = shared::cleaned(&SynthConfig { questions: 1200, ..Default::default() })?;
    let (lexical, model) = shared::trained(&data, 12)?;
    let index = build_index(&data.train, &lexical, Some(&model))?;

    let mut report = evaluate(&data.test, &index, &model, &default_beta_grid())?;
    report.baselines.push((BaselineKind::EmbeddingsAverage, baseline_embeddings(&data.test, &index, &data.embeddings)?));
    report.baselines.push((BaselineKind::AcceptAll, baseline_accept_all(&data.test, &index, &model)?));
    // every fourth beta keeps the table short
    let csv = report.to_csv();
    let lines: Vec<&str> = csv.lines().collect();
    println!("{}", lines[0]);
    for (i, line) in lines[1..].iter().enumerate() {
        if i % 4 == 0 || !line.starts_with(|c: char| c.is_ascii_digit()) {
            println!("{line}");
        }
    }
    Ok(())
}
