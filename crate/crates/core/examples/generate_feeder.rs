//! Generates the seeded desk feeder and a paper-scale feeder, prints their
//! composition and writes the desk pair as TOML.
//!
//! `cargo run --example generate_feeder -- [out_dir]`

use dlmc::gen::{generate_feeder, generate_fleet, GeneratorSpec};
use dlmc::io::{save_feeder, save_scenario, summarize};

fn main() -> dlmc::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| std::env::temp_dir().join("desk-feeder").display().to_string());
    for (name, spec) in [("desk", GeneratorSpec::desk(42)), ("paper-scale", GeneratorSpec::paper_scale(42))] {
        let model = generate_feeder(&spec)?;
        let fleet = generate_fleet(&spec, &model)?;
        println!("{name}:");
        for (key, count) in summarize(&model) {
            println!("  {key:<14} {count}");
        }
        println!("  {:<14} {}", "evs", fleet.evs.len());
        println!("  {:<14} {}", "pvs", fleet.pvs.len());
        let (lo, hi) = fleet.price_p.iter().fold((f64::MAX, f64::MIN), |(a, b), &c| (a.min(c), b.max(c)));
        println!("  price range    {lo:.2} .. {hi:.2} $/MWh");
        if name == "desk" {
            std::fs::create_dir_all(&out)?;
            std::fs::write(format!("{out}/feeder.toml"), save_feeder(&model)?)?;
            std::fs::write(format!("{out}/scenario.toml"), save_scenario(&fleet)?)?;
            println!("  written to {out}/");
        }
    }
    Ok(())
}
