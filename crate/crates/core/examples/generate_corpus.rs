//! Writes a synthetic corpus (questions, tables, embeddings) in the on-disk
//! formats the command line reads.
//!
//!     cargo run --example generate_corpus -- data 2400

use std::path::PathBuf;

use sqlpattern::synth::{generate, templates, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let dir: PathBuf = args.next().unwrap_or_else(|| "data".into()).into();
    let questions = args.next().map(|n| n.parse()).transpose()?.unwrap_or(2400);
    let config = SynthConfig { questions, ..Default::default() };
    std::fs::create_dir_all(&dir)?;
    let corpus = generate(&config);
    let files = corpus.write(&dir)?;
    println!(
        "{} questions over {} tables from {} templates, {} embedding rows",
        corpus.records.len(),
        corpus.tables.len(),
        templates().len(),
        corpus.embeddings.len()
    );
    for p in [files.questions, files.tables, files.embeddings] {
        println!("wrote {}", p.display());
    }
    Ok(())
}
