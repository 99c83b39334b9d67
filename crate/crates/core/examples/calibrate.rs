//! Calibrates the sample-size constants on the bundled G/H suite.
//!
//! ```text
//! cargo run --release --example calibrate -- [suite.json] [constants_out.json]
//! ```
//!
//! Prints the bisection history for each mode and writes a versioned
//! constants file (by default to stdout only).

use std::path::PathBuf;

use markov_identity::experiment::{calibrate_constants, CalibrationSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let suite = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/data/calibration_suite.json")));
    let out = args.next().map(PathBuf::from);

    let spec = CalibrationSpec::read(&suite)?;
    let report = calibrate_constants(&spec, None)?;
    for mode in &report.modes {
        println!("mode {}:", mode.mode);
        for r in &mode.history {
            println!(
                "  c = {:>9.5}  null reject {:.4}  alt accept {:.4}",
                r.multiplier, r.max_null_reject_rate, r.max_alt_accept_rate
            );
        }
        println!("  chosen {:.5} (fails at {:?})", mode.multiplier, mode.failing_below);
    }
    println!("rate band (3 sigma): {:.4}", report.rate_band);
    let text = serde_json::to_string_pretty(&report)?;
    match out {
        Some(p) => std::fs::write(p, text + "\n")?,
        None => println!("{text}"),
    }
    Ok(())
}
