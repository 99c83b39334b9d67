//! Structural analysis of a reference chain: stationary law, exact mixing
//! time, spectral brackets and the sample-size plan in both modes.
//!
//! ```text
//! cargo run --example analyze_reference
//! ```

use markov_identity::complexity::theorem_bounds;
use markov_identity::prelude::*;

fn main() -> Result<()> {
    // a lazy directed 4-cycle with a shortcut: ergodic, not reversible
    let chain = TransitionMatrix::new(vec![
        vec![0.5, 0.4, 0.0, 0.1],
        vec![0.0, 0.5, 0.5, 0.0],
        vec![0.0, 0.0, 0.5, 0.5],
        vec![0.5, 0.0, 0.0, 0.5],
    ])?;
    let a = ChainAnalysis::compute(&chain)?;
    println!("pi         = {:?}", a.pi.probs());
    println!("pi_min     = {:.5}", a.pi_min);
    println!("t_mix      = {}", a.t_mix_exact);
    println!("reversible = {}", a.reversible);
    if let Some(g) = &a.gamma_ps {
        println!("gamma_ps   = {:.5} (k = {})", g.value, g.best_k);
    }
    let bracket = mixing_time_bounds(&a)?;
    println!(
        "bracket    = [{:.2}, {:.2}] ({:?}), contains t_mix: {}",
        bracket.lower,
        bracket.upper,
        bracket.kind,
        bracket.contains(a.t_mix_exact as f64)
    );
    println!("||M||_(2/3,pi) = {:.4}", a.two_thirds_pi_norm);

    let constants = Constants::shipped();
    for mode in [Mode::WorstCase, Mode::Instance] {
        let plan = sample_complexity(&a, 0.25, 0.1, mode, &constants)?;
        println!(
            "{mode:>9}: m = {} (mixing branch {}, budget branch {})",
            plan.m,
            plan.mixing_branch,
            match mode {
                Mode::WorstCase => plan.worst_budget_branch,
                Mode::Instance => plan.instance_budget_branch,
            }
        );
    }
    let t = theorem_bounds(&a, 0.25, 0.1, &constants)?;
    println!("textbook formula: worst {:.0}, instance {:.0}", t.worst_case, t.instance);
    Ok(())
}
