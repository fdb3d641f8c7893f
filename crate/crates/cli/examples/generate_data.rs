//! Regenerate the committed reproduction data and scenario files.
//!
//! Run from the workspace root: `cargo run -p floodcast-cli --example generate_data`.

use std::fs::{self, File};
use std::path::Path;

use anyhow::Result;
use floodcast_cli::write_readings;
use floodcast_core::synthetic::{
    corrupting_link, demo_scenario, reproduction_history, reproduction_live, single_zone_rise,
    REPRODUCTION_SEED,
};

fn main() -> Result<()> {
    let data = Path::new("data");
    fs::create_dir_all(data)?;
    write_readings(
        File::create(data.join("reproduction_history.csv"))?,
        &reproduction_history(REPRODUCTION_SEED),
    )?;
    write_readings(
        File::create(data.join("reproduction.csv"))?,
        &reproduction_live(true, REPRODUCTION_SEED),
    )?;
    write_readings(
        File::create(data.join("reproduction_no_crossing.csv"))?,
        &reproduction_live(false, REPRODUCTION_SEED),
    )?;

    let scenarios = Path::new("scenarios");
    fs::create_dir_all(scenarios)?;
    let header = "# Generated by `cargo run -p floodcast-cli --example generate_data`.\n";
    for (name, scenario) in [
        ("demo.toml", demo_scenario()),
        ("single_zone_rise.toml", single_zone_rise(1)),
        ("corrupting_link.toml", corrupting_link(1)),
    ] {
        fs::write(scenarios.join(name), format!("{header}{}", scenario.to_toml()))?;
    }
    Ok(())
}
