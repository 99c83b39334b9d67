//! Exact path enumeration on tiny chains, in rational arithmetic.
//!
//! Kernel entries are the exact rationals of their f64 values, so the
//! results are exact for the kernel as stored, not for its decimal intent.
//!
//! ```text
//! cargo run --example exact_oracles
//! ```

use markov_identity::families::build_g_chain;
use markov_identity::oracle::{
    enumerate_paths, exact_conditional_tv, exact_visit_pmf, product_tv, rational_kernel, rational_vec, to_f64, Conditioning,
};
use markov_identity::prelude::*;

fn main() -> Result<()> {
    let d = 2;
    let p_star = 0.1;
    let eta_a = perturbed_uniform(d, 0.5, &[1])?;
    let eta_b = Distribution::uniform(d);
    let a = rational_kernel(&build_g_chain(&GFamilySpec::new(d, p_star, eta_a.clone())?)?);
    let b = rational_kernel(&build_g_chain(&GFamilySpec::new(d, p_star, eta_b.clone())?)?);
    let init = rational_vec(&g_initial(d, p_star));

    let m = 6;
    let paths = enumerate_paths(&a, &init, m)?;
    println!("{} paths, total mass off 1 by {:.1e}", paths.len(), (1.0 - to_f64(&paths.total())).abs());
    let pmf = exact_visit_pmf(&a, &init, m, d)?;
    for (n, p) in pmf.iter().enumerate() {
        println!("  P[N = {n}] = {:.12}  closed form {:.12}", to_f64(p), visit_count_pmf(m, n, p_star)?);
    }

    let (qa, qb) = (rational_vec(&eta_a), rational_vec(&eta_b));
    for n in 0..=2 {
        let cond = exact_conditional_tv(&a, &b, &init, m, d, Conditioning::Exactly(n))?;
        println!(
            "n = {n}: path tv given N = n {:.6} <= product tv {:.6}",
            to_f64(&cond),
            to_f64(&product_tv(&qa, &qb, n)?)
        );
    }
    Ok(())
}
