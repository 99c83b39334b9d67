//! End-to-end identity test: simulate a path from the reference and from a
//! chain with one corrupted row, and test both.
//!
//! ```text
//! cargo run --release --example identity_test
//! ```

use markov_identity::prelude::*;

fn main() -> Result<()> {
    let reference = build_g_chain(&GFamilySpec::uniform(6, 0.05)?)?;
    let initial = g_initial(6, 0.05);
    let analysis = ChainAnalysis::compute(&reference)?;
    let tester = IdentityTester::new(&reference, analysis, 0.25, 0.1, TesterOptions::default())?;
    let m = tester.required_length();
    println!("required m = {m}");

    let far = corrupt_row_toward(&reference, 6, 0, 0.51)?;
    println!("matrix tv to alternative = {:.3}", matrix_tv_norm(&reference, &far)?);

    for (name, chain, seed) in [("reference", &reference, 1), ("corrupted", &far, 2)] {
        let x = sample_trajectory(chain, &initial, m, RngSeed(seed))?;
        let r = tester.test(&x)?;
        let rejecting: Vec<usize> = r.substates.iter().filter(|s| s.rejects()).map(|s| s.state).collect();
        println!(
            "{name:>9}: verdict {} at {:?}, gate failures {}, rejecting states {:?}",
            r.verdict(),
            r.rejected_at,
            r.gate_failures.len(),
            rejecting
        );
    }
    Ok(())
}
