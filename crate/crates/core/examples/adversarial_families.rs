//! The two hard families: the rarely-visited special state of `G` and the
//! slowly mixing block structure of `H`.
//!
//! ```text
//! cargo run --release --example adversarial_families
//! ```

use markov_identity::analysis::exact_mixing_time;
use markov_identity::families::{build_h_chain_relaxed, half_cover_exact_mean, half_cover_times};
use markov_identity::prelude::*;

fn main() -> Result<()> {
    let g = GFamilySpec::uniform(6, 0.05)?;
    let chain = build_g_chain(&g)?;
    let a = ChainAnalysis::compute(&chain)?;
    println!("G: pi(special) = {:.5} (closed form {:.5})", a.pi.probs()[6], g.special_stationary_mass());
    for n in 0..4 {
        println!("   P[N_special = {n} in 20 steps] = {:.6}", visit_count_pmf(20, n, 0.05)?);
    }

    for eta in [0.04, 0.02, 0.01] {
        // eta = 0.04 sits outside the lower-bound regime, so skip its check
        let spec = HFamilySpec {
            d: 12,
            eta,
            tau: vec![false; 4],
            eps: 0.125,
        };
        let h = build_h_chain_relaxed(&spec)?;
        let pi = stationary_distribution(&h, 1e-12)?;
        println!("H: eta = {eta:<5} t_mix = {}", exact_mixing_time(&h, &pi, 1_000_000)?);
    }

    let (d, eta) = (12, 0.02);
    let clique = inner_clique_chain(d, eta)?;
    let times = half_cover_times(&clique, d, &Distribution::uniform(d / 3), 100_000, 2000, RngSeed(7))?;
    let m = (d as f64 / (120.0 * eta)) as usize;
    let tail = times.iter().filter(|t| t.exceeds(m)).count() as f64 / times.len() as f64;
    let mean = times.iter().map(|t| t.lower_bound() as f64).sum::<f64>() / times.len() as f64;
    println!("half cover: mean {mean:.1} (exact {:.1}), P[T > {m}] = {tail:.3}", half_cover_exact_mean(d, eta)?);
    Ok(())
}
