//! Vocabulary thresholding and k-means over binary bag-of-words vectors.
//!
//!     cargo run --example lexical_clusters

use std::collections::BTreeMap;

use sqlpattern::lexical::{LexicalConfig, LexicalModel};
use sqlpattern::synth::SynthConfig;

#[path = "shared/mod.rs"]
mod shared;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let corpus = shared::cleaned(&SynthConfig { questions: 1200, ..Default::default() })?;
    let config = LexicalConfig { alpha: 15, k: 10, seed: 1, ..Default::default() };
    let model = LexicalModel::fit(&corpus.train, &config)?;
    println!(
        "vocabulary {} words, {} clusters, {} iterations, inertia {:.1}",
        model.vocabulary.len(),
        model.clusters.k(),
        model.clusters.iterations(),
        model.clusters.inertia()
    );
    for (c, members) in model.clusters.members().iter().enumerate() {
        let mut templates: BTreeMap<String, usize> = BTreeMap::new();
        for &i in members {
            *templates.entry(corpus.train[i].template.to_string()).or_default() += 1;
        }
        let mut top: Vec<_> = templates.into_iter().collect();
        top.sort_by_key(|e| std::cmp::Reverse(e.1));
        println!("cluster {c:>2}: {:>4} questions, top templates {:?}", members.len(), &top[..top.len().min(3)]);
    }
    let probe = sqlpattern::corpus::tokenize("How many wins when the team is kador?");
    println!("'how many wins when the team is kador?' -> cluster {}", model.cluster_of(&probe));
    Ok(())
}
