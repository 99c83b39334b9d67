//! Matrix TV versus the Kazakos pseudo-distance, including a pair the
//! latter cannot separate.
//!
//! ```text
//! cargo run --example metric_comparison
//! ```

use markov_identity::prelude::*;

fn main() -> Result<()> {
    // two closed classes; theta only reshapes the last row, inside the second
    for theta in [0.25, 0.5, 1.0] {
        let base = TransitionMatrix::new(vec![
            vec![0.5, 0.5, 0.0, 0.0],
            vec![0.5, 0.5, 0.0, 0.0],
            vec![0.0, 0.0, 0.5, 0.5],
            vec![0.0, 0.0, 0.5, 0.5],
        ])?;
        let shifted = base.with_row(3, &Distribution::new(vec![0.0, 0.0, 0.5 + theta / 2.0, 0.5 - theta / 2.0])?)?;
        println!(
            "theta {theta:<4}: kazakos {:.3e}, matrix tv {:.4}",
            kazakos_dist(&base, &shifted)?,
            matrix_tv_norm(&base, &shifted)?
        );
    }

    let a = TransitionMatrix::new(vec![vec![0.9, 0.1], vec![0.2, 0.8]])?;
    let b = TransitionMatrix::new(vec![vec![0.6, 0.4], vec![0.5, 0.5]])?;
    println!(
        "ergodic pair: max row l1 {:.4} >= 2 kazakos {:.4}",
        max_row_l1(&a, &b)?,
        2.0 * kazakos_dist(&a, &b)?
    );
    Ok(())
}
