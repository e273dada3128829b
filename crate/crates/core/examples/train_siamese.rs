//! Trains the Siamese LSTM on sampled question pairs and compares its
//! predictions with the true structure distance.
//!
//!     cargo run --release --example train_siamese

use sqlpattern::encoder::predict_distance;
use sqlpattern::sql_template::sqlsd;
use sqlpattern::synth::SynthConfig;

#[path = "shared/mod.rs"]
mod shared;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let data = shared::cleaned(&SynthConfig { questions: 1200, ..Default::default() })?;
    let (_, model) = shared::trained(&data, 12)?;
    println!("epoch losses {:.4?}", model.metadata().epoch_losses);

    let probe = &data.test[0];
    println!("probe: {}  [{}]", probe.tokens.join(" "), probe.template);
    for other in data.train.iter().step_by(97).take(8) {
        println!(
            "  predicted {:.2}  true {}  {}",
            predict_distance(&probe.tokens, &other.tokens, &model)?,
            sqlsd(&probe.template, &other.template),
            other.tokens.join(" ")
        );
    }
    Ok(())
}
