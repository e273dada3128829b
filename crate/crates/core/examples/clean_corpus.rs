//! Loads a corpus, repairs column types and filters unusable questions.
//!
//!     cargo run --example clean_corpus

use sqlpattern::corpus::{clean_questions, load_dataset, repair_tables, CleaningConfig};
use sqlpattern::synth::{generate, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let files = generate(&SynthConfig { questions: 300, ..Default::default() }).write(dir.path())?;

    let (records, tables) = load_dataset(&files.questions, &files.tables)?;
    let config = CleaningConfig::default();
    let (tables, retyped) = repair_tables(&tables, &config);
    let (questions, report) = clean_questions(&records, &tables, &config)?;
    let report = report.merge(&retyped);

    println!("{}", serde_json::to_string_pretty(&report)?);
    for q in questions.iter().take(5) {
        println!("{:<24} {}", q.template.to_string(), q.tokens.join(" "));
    }
    Ok(())
}
