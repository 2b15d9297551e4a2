//! Config-driven evaluation without touching the file system.
//!
//! `cargo run --release --example run_config`

use std::path::Path;

use mgt_core::cli::runner::evaluate;
use mgt_core::cli::{ExperimentConfig, VerdictReport};

const CONFIG: &str = r#"
[model]
tau = 1.0
alpha = 2.0
b = 1.0
c2 = 1.0
memory_type = "type2"

[kernel]
kind = "prony"
weights = [0.2]
rates = [2.0]

[operator]
kind = "eigenvalues"
eigenvalues = [1.0, 4.0, 9.0]

[initial]
preset = "first_mode_bump"

[time]
t_end = 20.0
h = 0.002

[analysis]
refinement_levels = 3
"#;

pub fn run_example() -> Result<VerdictReport, Box<dyn std::error::Error>> {
    let cfg = ExperimentConfig::parse(CONFIG)?;
    let exp = cfg.build(Path::new("."))?;
    let eval = evaluate(&exp, Path::new("inline.toml"), false, true)?;
    let report = eval.report;
    println!("status: {}", report.status);
    for (name, entry) in &report.decay_fits {
        if let Some(fit) = &entry.fit {
            println!("{name}: omega = {:.4}, r2 = {:.4}", fit.omega, fit.r_squared);
        }
    }
    for audit in &report.audits {
        println!("{}: winner {:?}", audit.identity_id.name(), audit.winner);
    }
    Ok(report)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example().map(|_| ())
}
