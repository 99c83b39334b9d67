//! Random chain generators shared by the integration tests.
#![allow(dead_code)]

use markov_identity::chain::TransitionMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn normalize(w: Vec<f64>) -> Vec<f64> {
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}

/// Random stochastic matrix with rows of random sparsity; may be reducible.
pub fn random_stochastic(d: usize, rng: &mut ChaCha8Rng) -> TransitionMatrix {
    let density = rng.random_range(0.2..1.0);
    let rows = (0..d)
        .map(|_| {
            let mut w: Vec<f64> = (0..d)
                .map(|_| if rng.random_bool(density) { rng.random_range(0.0..1.0) } else { 0.0 })
                .collect();
            if w.iter().all(|&v| v == 0.0) {
                w[rng.random_range(0..d)] = 1.0;
            }
            normalize(w)
        })
        .collect();
    TransitionMatrix::new(rows).unwrap()
}

/// Ergodic and typically non-reversible: a directed cycle keeps the support
/// strongly connected, one self-loop breaks periodicity, and random extra
/// arcs vary the mixing speed.
pub fn random_ergodic(d: usize, rng: &mut ChaCha8Rng) -> TransitionMatrix {
    let density = rng.random_range(0.0..0.6);
    let rows = (0..d)
        .map(|i| {
            let mut w = vec![0.0; d];
            w[(i + 1) % d] = rng.random_range(0.2..1.0);
            for (j, v) in w.iter_mut().enumerate() {
                if j != (i + 1) % d && rng.random_bool(density) {
                    *v = rng.random_range(0.0..1.0);
                }
            }
            if i == 0 {
                w[0] += rng.random_range(0.05..1.0);
            }
            normalize(w)
        })
        .collect();
    TransitionMatrix::new(rows).unwrap()
}

/// Random walk on a random connected weighted graph, lazy at one vertex.
/// Symmetric weights make it reversible with `pi` proportional to degree.
pub fn random_reversible(d: usize, rng: &mut ChaCha8Rng) -> TransitionMatrix {
    let density = rng.random_range(0.0..0.7);
    let mut w = vec![vec![0.0; d]; d];
    for i in 1..d {
        let j = rng.random_range(0..i);
        let x = rng.random_range(0.1..1.0);
        w[i][j] = x;
        w[j][i] = x;
    }
    for i in 0..d {
        for j in 0..i {
            if w[i][j] == 0.0 && rng.random_bool(density) {
                let x = rng.random_range(0.0..1.0);
                w[i][j] = x;
                w[j][i] = x;
            }
        }
    }
    let lazy = rng.random_range(0..d);
    w[lazy][lazy] += rng.random_range(0.05..1.0);
    TransitionMatrix::new(w.into_iter().map(normalize).collect()).unwrap()
}

pub fn binomial_sigma(p: f64, trials: usize) -> f64 {
    (p * (1.0 - p) / trials as f64).sqrt()
}
