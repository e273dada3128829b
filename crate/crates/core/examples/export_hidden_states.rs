//! Exports encoder hidden states grouped by template, ready for an external
//! 2-D projection.
//!
//!     cargo run --release --example export_hidden_states -- states.csv

use sqlpattern::eval::{export_hidden_states, hidden_states_csv};
use sqlpattern::synth::SynthConfig;

#[path = "shared/mod.rs"]
mod shared;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "hidden_states.csv".into());
    let data = shared::cleaned(&SynthConfig { questions: 1200, ..Default::default() })?;
    let (_, model) = shared::trained(&data, 12)?;
    // templates with at least 50 questions
    let rows = export_hidden_states(&data.train, &model, 50)?;
    std::fs::write(&out, hidden_states_csv(&rows, model.hidden_size())?)?;
    println!("wrote {} rows of {} dimensions to {out}", rows.len(), model.hidden_size());
    Ok(())
}
