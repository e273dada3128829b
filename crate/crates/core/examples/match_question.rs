//! Matches unseen questions against the training set, rejecting those with no
//! close enough candidate.
//!
//!     cargo run --release --example match_question -- "how many goals when the team is kador?"

use sqlpattern::corpus::tokenize;
use sqlpattern::matcher::{build_index, match_query, MatchResult, MatcherConfig, Query};
use sqlpattern::synth::SynthConfig;

#[path = "shared/mod.rs"]
mod shared;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = shared::cleaned(&SynthConfig { questions: 1200, ..Default::default() })?;
    let (lexical, model) = shared::trained(&data, 12)?;
    let index = build_index(&data.train, &lexical, Some(&model))?;
    let config = MatcherConfig::new(0.75)?;

    let mut questions: Vec<String> = std::env::args().skip(1).collect();
    if questions.is_empty() {
        questions = vec![
            "What is the average points when the team is kador?".into(),
            "How many players with goals greater than 12?".into(),
            "Give me a recipe for soup".into(),
        ];
    }
    let by_id = |id: &str| data.train.iter().find(|q| q.id == id).unwrap();
    for text in &questions {
        let tokens = tokenize(text);
        match match_query(Query { tokens: &tokens, template: None }, &index, &model, &config)? {
            MatchResult::Matched { train_id, distance, cluster } => {
                let q = by_id(&train_id);
                println!("{text}\n  matched {train_id} (cluster {cluster}, distance {distance:.3}) [{}]: {}", q.template, q.tokens.join(" "));
            }
            MatchResult::Rejected { cluster, min_distance } => {
                println!("{text}\n  rejected (cluster {cluster}, closest {min_distance:.3})");
            }
        }
    }
    Ok(())
}
