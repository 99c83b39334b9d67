//! Exact ground truth for tiny instances.
//!
//! Everything here is generic over the probability type, so the same code
//! runs in `f64` and in exact `BigRational` arithmetic. Kernels are plain
//! nested vectors; entries are not re-validated, so rational inputs should
//! be built with exactly stochastic rows.

use std::fmt::Debug;

use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;

use crate::chain::{Distribution, TransitionMatrix};
use crate::error::{Error, Result};

/// Largest `d^m` accepted by path enumeration.
pub const MAX_PATHS: u64 = 10_000_000;
pub const MAX_DP_LENGTH: usize = 10_000;
pub const MAX_DP_STATES: usize = 100;

pub trait Scalar: Clone + Debug + Zero + One + Signed + PartialOrd + ToPrimitive + Send + Sync {}

impl<T: Clone + Debug + Zero + One + Signed + PartialOrd + ToPrimitive + Send + Sync> Scalar for T {}

pub type Kernel<T> = Vec<Vec<T>>;

pub fn f64_kernel(chain: &TransitionMatrix) -> Kernel<f64> {
    chain.to_rows()
}

/// Exact rational images of the stored `f64` entries.
pub fn rational_kernel(chain: &TransitionMatrix) -> Kernel<BigRational> {
    chain.rows().map(|r| r.iter().map(|&x| to_rational(x)).collect()).collect()
}

pub fn to_rational(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite value")
}

pub fn rational_vec(d: &Distribution) -> Vec<BigRational> {
    d.probs().iter().map(|&x| to_rational(x)).collect()
}

pub fn to_f64<T: Scalar>(x: &T) -> f64 {
    x.to_f64().expect("representable as f64")
}

fn path_count(d: usize, m: usize, limit: u64) -> Result<u64> {
    let size = (d as f64).powi(m as i32);
    match (d as u64).checked_pow(m as u32) {
        Some(n) if n <= limit => Ok(n),
        _ => Err(Error::InstanceTooLarge {
            size,
            limit: limit as f64,
        }),
    }
}

/// Probability of every length-`m` path, indexed by the base-`d` number
/// `x_1 x_2 ... x_m` (most significant digit first).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathDistribution<T> {
    pub m: usize,
    pub d: usize,
    pub probs: Vec<T>,
}

impl<T: Scalar> PathDistribution<T> {
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn path(&self, mut index: usize) -> Vec<usize> {
        let mut out = vec![0; self.m];
        for slot in out.iter_mut().rev() {
            *slot = index % self.d;
            index /= self.d;
        }
        out
    }

    pub fn index_of(&self, path: &[usize]) -> usize {
        path.iter().fold(0, |acc, &x| acc * self.d + x)
    }

    pub fn prob(&self, path: &[usize]) -> &T {
        &self.probs[self.index_of(path)]
    }

    /// Paths with positive probability.
    pub fn support(&self) -> impl Iterator<Item = (Vec<usize>, &T)> + '_ {
        self.probs
            .iter()
            .enumerate()
            .filter(|(_, p)| **p > T::zero())
            .map(|(i, p)| (self.path(i), p))
    }

    pub fn total(&self) -> T {
        self.probs.iter().fold(T::zero(), |a, b| a + b.clone())
    }

    /// Law of `X_t`, `t` one-based.
    pub fn marginal(&self, t: usize) -> Vec<T> {
        assert!(t >= 1 && t <= self.m, "time {t} outside 1..={}", self.m);
        let stride = self.d.pow((self.m - t) as u32);
        let mut out = vec![T::zero(); self.d];
        for (i, p) in self.probs.iter().enumerate() {
            let x = (i / stride) % self.d;
            out[x] = out[x].clone() + p.clone();
        }
        out
    }

    /// Number of visits to `state` along each path.
    pub fn visit_counts(&self, state: usize) -> Vec<usize> {
        let mut counts = vec![0usize; 1];
        for _ in 0..self.m {
            counts = counts
                .iter()
                .flat_map(|&c| (0..self.d).map(move |x| c + usize::from(x == state)))
                .collect();
        }
        counts
    }
}

/// `P[X_1..X_m = x] = mu(x_1) prod M(x_t, x_{t+1})` for every path.
pub fn enumerate_paths<T: Scalar>(chain: &Kernel<T>, initial: &[T], m: usize) -> Result<PathDistribution<T>> {
    enumerate_paths_with_limit(chain, initial, m, MAX_PATHS)
}

pub fn enumerate_paths_with_limit<T: Scalar>(
    chain: &Kernel<T>,
    initial: &[T],
    m: usize,
    limit: u64,
) -> Result<PathDistribution<T>> {
    let d = chain.len();
    if initial.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: initial.len(),
        });
    }
    if m == 0 {
        return Err(Error::TooShort { m, required: 1 });
    }
    path_count(d, m, limit)?;
    let mut probs = initial.to_vec();
    for _ in 1..m {
        let mut next = Vec::with_capacity(probs.len() * d);
        for (i, p) in probs.iter().enumerate() {
            let row = &chain[i % d];
            next.extend(row.iter().map(|q| p.clone() * q.clone()));
        }
        probs = next;
    }
    Ok(PathDistribution { m, d, probs })
}

/// Exact law of `N = #{t <= m : X_t = state}`, indexed by `n`.
///
/// Without a self-loop at `state` the visits are non-adjacent and `N` never
/// exceeds `ceil(m/2)`; the count axis is then capped at `ceil((m+1)/2)`,
/// otherwise at `m`.
pub fn exact_visit_pmf<T: Scalar>(chain: &Kernel<T>, initial: &[T], m: usize, state: usize) -> Result<Vec<T>> {
    let d = chain.len();
    if m > MAX_DP_LENGTH || d > MAX_DP_STATES {
        return Err(Error::InstanceTooLarge {
            size: (m * d) as f64,
            limit: (MAX_DP_LENGTH * MAX_DP_STATES) as f64,
        });
    }
    if initial.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: initial.len(),
        });
    }
    if state >= d {
        return Err(Error::ParameterOutOfRange(format!("state {state} out of range")));
    }
    if m == 0 {
        return Err(Error::TooShort { m, required: 1 });
    }
    let cap = if chain[state][state].is_zero() { (m + 2) / 2 } else { m };
    // dp[x][c]: P[X_t = x, visits so far = c]
    let mut dp = vec![vec![T::zero(); cap + 1]; d];
    for (x, p) in initial.iter().enumerate() {
        dp[x][usize::from(x == state)] = p.clone();
    }
    for _ in 1..m {
        let mut next = vec![vec![T::zero(); cap + 1]; d];
        for (x, row) in dp.iter().enumerate() {
            for (c, p) in row.iter().enumerate() {
                if p.is_zero() {
                    continue;
                }
                for (y, q) in chain[x].iter().enumerate() {
                    if q.is_zero() {
                        continue;
                    }
                    let c2 = c + usize::from(y == state);
                    next[y][c2] = next[y][c2].clone() + p.clone() * q.clone();
                }
            }
        }
        dp = next;
    }
    let mut pmf = vec![T::zero(); cap + 1];
    for row in &dp {
        for (c, p) in row.iter().enumerate() {
            pmf[c] = pmf[c].clone() + p.clone();
        }
    }
    Ok(pmf)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Conditioning {
    Exactly(usize),
    AtMost(usize),
}

impl Conditioning {
    fn admits(&self, count: usize) -> bool {
        match *self {
            Self::Exactly(n) => count == n,
            Self::AtMost(n) => count <= n,
        }
    }
}

fn half_l1<T: Scalar>(p: &[T], q: &[T]) -> T {
    let sum = p.iter().zip(q).fold(T::zero(), |acc, (a, b)| acc + (a.clone() - b.clone()).abs());
    sum / (T::one() + T::one())
}

/// TV between the path laws of two chains given the visit count to `state`.
pub fn exact_conditional_tv<T: Scalar>(
    chain_a: &Kernel<T>,
    chain_b: &Kernel<T>,
    initial: &[T],
    m: usize,
    state: usize,
    event: Conditioning,
) -> Result<T> {
    if chain_a.len() != chain_b.len() {
        return Err(Error::DimensionMismatch {
            expected: chain_a.len(),
            found: chain_b.len(),
        });
    }
    let pa = enumerate_paths(chain_a, initial, m)?;
    let pb = enumerate_paths(chain_b, initial, m)?;
    let counts = pa.visit_counts(state);
    let select = |probs: &[T]| -> Result<Vec<T>> {
        let kept: Vec<T> = probs
            .iter()
            .zip(&counts)
            .map(|(p, &c)| if event.admits(c) { p.clone() } else { T::zero() })
            .collect();
        let z = kept.iter().fold(T::zero(), |a, b| a + b.clone());
        if !(z > T::zero()) {
            return Err(Error::ZeroProbabilityEvent);
        }
        Ok(kept.into_iter().map(|p| p / z.clone()).collect())
    };
    Ok(half_l1(&select(&pa.probs)?, &select(&pb.probs)?))
}

fn product_law<T: Scalar>(p: &[T], n: usize) -> Vec<T> {
    let mut law = vec![T::one()];
    for _ in 0..n {
        law = law.iter().flat_map(|a| p.iter().map(move |b| a.clone() * b.clone())).collect();
    }
    law
}

/// `tv(p^{(x)n}, q^{(x)n})` by enumeration of `d^n` tuples.
pub fn product_tv<T: Scalar>(p: &[T], q: &[T], n: usize) -> Result<T> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch {
            expected: p.len(),
            found: q.len(),
        });
    }
    path_count(p.len(), n, MAX_PATHS)?;
    Ok(half_l1(&product_law(p, n), &product_law(q, n)))
}

/// TV between the uniform mixture of `components[k]^{(x)n}` and `q^{(x)n}`.
pub fn mixture_product_tv<T: Scalar>(components: &[Vec<T>], q: &[T], n: usize) -> Result<T> {
    if components.is_empty() {
        return Err(Error::ParameterOutOfRange("mixture needs at least one component".into()));
    }
    if let Some(c) = components.iter().find(|c| c.len() != q.len()) {
        return Err(Error::DimensionMismatch {
            expected: q.len(),
            found: c.len(),
        });
    }
    path_count(q.len(), n, MAX_PATHS)?;
    let mut mix = vec![T::zero(); q.len().pow(n as u32)];
    for c in components {
        for (acc, v) in mix.iter_mut().zip(product_law(c, n)) {
            *acc = acc.clone() + v;
        }
    }
    let k = T::from_count(components.len());
    let mix: Vec<T> = mix.into_iter().map(|v| v / k.clone()).collect();
    Ok(half_l1(&mix, &product_law(q, n)))
}

trait FromCount {
    fn from_count(n: usize) -> Self;
}

impl<T: Scalar> FromCount for T {
    fn from_count(n: usize) -> Self {
        (0..n).fold(T::zero(), |a, _| a + T::one())
    }
}
