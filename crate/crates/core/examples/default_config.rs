//! Prints the full default configuration as TOML, a starting point for the
//! `--config` file of the command line.
//!
//!     cargo run --example default_config > sqlpattern.toml

use sqlpattern::pipeline::PipelineConfig;

fn main() {
    print!("{}", PipelineConfig::default().to_toml_string());
}
