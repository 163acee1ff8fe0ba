//! Runs a scenario file through the same path as the command-line tool and
//! prints the JSON record.
//!
//! cargo run --example scenario_file -- [scenarios/complete_case.toml]

use std::path::PathBuf;

use cascade_risk::scenario::*;

fn main() -> cascade_risk::Result<()> {
    let path = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios/complete_case.toml")
    });
    let (cfg, base) = ScenarioConfig::load(&path)?;
    let prepared = cfg.prepare(&base)?;
    let mut records = vec![run_profile(&prepared)?];
    if cfg.sequence.is_some() {
        records.push(run_sequence(&prepared)?);
    }
    for r in &records {
        print!("{}", render(std::slice::from_ref(r), OutputFormat::Json));
    }
    Ok(())
}
