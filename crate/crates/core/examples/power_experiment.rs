//! A small Monte Carlo power curve over a grid of trajectory lengths, as
//! CSV on stdout.
//!
//! ```text
//! cargo run --release --example power_experiment
//! ```

use markov_identity::experiment::{run_experiment, write_csv, ExperimentSpec};

const SPEC: &str = r#"{
  "reference": { "kind": "family_g", "d": 6, "p_star": 0.05 },
  "alternatives": [
    { "name": "corrupt_special",
      "source": { "kind": "corrupt_row", "base": { "kind": "family_g", "d": 6, "p_star": 0.05 },
                  "row": 6, "toward": 0, "l1": 0.51 } }
  ],
  "m_grid": [{ "required_times": 0.25 }, { "required_times": 0.5 }, { "required_times": 1.0 }],
  "trials": 40,
  "eps": 0.25,
  "delta": 0.1,
  "seed": 11
}"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = ExperimentSpec::from_json(SPEC, std::path::Path::new("."))?;
    let rows = run_experiment(&spec, None)?;
    write_csv(&rows, std::io::stdout())?;
    Ok(())
}
