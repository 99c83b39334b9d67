//! Distances between distributions and between kernels.
//!
//! Conventions: `tv_dist` is half the l1 distance, and `matrix_tv_norm` is
//! half the largest row-wise l1 distance. Every separation parameter in the
//! tester API is measured with `matrix_tv_norm`.

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use rand::Rng;

use crate::chain::{Distribution, RngSeed, TransitionMatrix};
use crate::error::{Error, Result};

fn check_dims(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch {
            expected: a,
            found: b,
        });
    }
    Ok(())
}

fn l1(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum()
}

pub fn l1_dist(p: &Distribution, q: &Distribution) -> Result<f64> {
    check_dims(p.d(), q.d())?;
    Ok(l1(p.probs(), q.probs()))
}

pub fn tv_dist(p: &Distribution, q: &Distribution) -> Result<f64> {
    Ok(0.5 * l1_dist(p, q)?)
}

/// Squared Hellinger distance `1/2 sum (sqrt p - sqrt q)^2`.
pub fn hellinger_sq(p: &Distribution, q: &Distribution) -> Result<f64> {
    check_dims(p.d(), q.d())?;
    Ok(0.5
        * p.probs()
            .iter()
            .zip(q.probs())
            .map(|(a, b)| (a.sqrt() - b.sqrt()).powi(2))
            .sum::<f64>())
}

/// `max_i ||a(i, .) - b(i, .)||_1`.
pub fn max_row_l1(a: &TransitionMatrix, b: &TransitionMatrix) -> Result<f64> {
    check_dims(a.d(), b.d())?;
    Ok(a.rows()
        .zip(b.rows())
        .map(|(ra, rb)| l1(ra, rb))
        .fold(0.0, f64::max))
}

pub fn matrix_tv_norm(a: &TransitionMatrix, b: &TransitionMatrix) -> Result<f64> {
    Ok(0.5 * max_row_l1(a, b)?)
}

/// Start vector for power iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StartVector {
    /// Entries drawn uniformly from `[0.5, 1.5)`.
    Random(RngSeed),
    Ones,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerIterationOptions {
    pub max_iter: usize,
    pub rel_tol: f64,
    pub start: StartVector,
}

impl Default for PowerIterationOptions {
    fn default() -> Self {
        Self {
            max_iter: 1_000_000,
            rel_tol: 1e-10,
            start: StartVector::Random(RngSeed(0x6b61_7a61_6b6f_73)),
        }
    }
}

/// Spectral radius of a nonnegative square matrix (row-major, `d x d`).
///
/// The radius of a reducible matrix is the largest radius over its
/// irreducible diagonal blocks, so each strongly connected component of the
/// support is iterated on separately. That keeps the Collatz-Wielandt
/// bracket closing even when two blocks have nearly equal radii.
pub fn nonnegative_spectral_radius(a: &[f64], d: usize, opts: &PowerIterationOptions) -> Result<f64> {
    debug_assert_eq!(a.len(), d * d);
    let mut g = DiGraph::<(), ()>::with_capacity(d, 0);
    let nodes: Vec<_> = (0..d).map(|_| g.add_node(())).collect();
    for i in 0..d {
        for j in 0..d {
            if a[i * d + j] > 0.0 {
                g.add_edge(nodes[i], nodes[j], ());
            }
        }
    }
    let mut rho = 0.0f64;
    for comp in tarjan_scc(&g) {
        let idx: Vec<usize> = comp.iter().map(|n| n.index()).collect();
        let k = idx.len();
        let sub: Vec<f64> = idx.iter().flat_map(|&i| idx.iter().map(move |&j| a[i * d + j])).collect();
        if sub.iter().all(|&v| v == 0.0) {
            continue;
        }
        rho = rho.max(irreducible_radius(&sub, k, opts)?);
    }
    Ok(rho)
}

/// Iterates on `(A + I) / 2`, whose only peripheral eigenvalue is
/// `(rho + 1) / 2` when `A` is irreducible, so periodic blocks do not stall
/// convergence.
fn irreducible_radius(a: &[f64], d: usize, opts: &PowerIterationOptions) -> Result<f64> {
    let mut x: Vec<f64> = match opts.start {
        StartVector::Ones => vec![1.0; d],
        StartVector::Random(seed) => {
            let mut rng = seed.rng();
            (0..d).map(|_| rng.random_range(0.5..1.5)).collect()
        }
    };
    let norm: f64 = x.iter().sum();
    x.iter_mut().for_each(|v| *v /= norm);

    let mut y = vec![0.0; d];
    for _ in 0..opts.max_iter {
        for i in 0..d {
            let row = &a[i * d..(i + 1) * d];
            y[i] = 0.5 * (x[i] + row.iter().zip(&x).map(|(r, v)| r * v).sum::<f64>());
        }
        let lambda: f64 = y.iter().sum();
        // Collatz-Wielandt bounds on the shifted matrix; x stays positive
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for (yi, xi) in y.iter().zip(&x) {
            let r = yi / xi;
            lo = lo.min(r);
            hi = hi.max(r);
        }
        if hi - lo <= opts.rel_tol * hi {
            return Ok((lo + hi - 1.0).max(0.0));
        }
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = yi / lambda;
        }
    }
    Err(Error::PowerIterationNoConvergence {
        iterations: opts.max_iter,
    })
}

/// Kazakos pseudo-distance `1 - rho(sqrt(a .* b))`, clamped to `[0, 1]`.
pub fn kazakos_dist(a: &TransitionMatrix, b: &TransitionMatrix) -> Result<f64> {
    kazakos_dist_with(a, b, &PowerIterationOptions::default())
}

pub fn kazakos_dist_with(
    a: &TransitionMatrix,
    b: &TransitionMatrix,
    opts: &PowerIterationOptions,
) -> Result<f64> {
    check_dims(a.d(), b.d())?;
    let d = a.d();
    let g: Vec<f64> = a
        .rows()
        .flatten()
        .zip(b.rows().flatten())
        .map(|(x, y)| (x * y).sqrt())
        .collect();
    let rho = nonnegative_spectral_radius(&g, d, opts)?;
    Ok((1.0 - rho).clamp(0.0, 1.0))
}
