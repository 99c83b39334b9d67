//! Core value types: distributions on `[0, d)`, row-stochastic kernels,
//! trajectories and reproducible seeds, plus trajectory sampling and time
//! reversal.
//!
//! State indices are 0-based throughout.

use std::fmt;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default tolerance used when validating sums of probabilities.
pub const DEFAULT_TOL: f64 = 1e-9;

/// Tolerance for the stationarity check in [`time_reversal`].
pub const STATIONARITY_TOL: f64 = 1e-8;

/// A probability vector on `d >= 1` states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Distribution {
    probs: Vec<f64>,
}

impl Distribution {
    /// Validates with [`DEFAULT_TOL`] and renormalizes.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        Self::with_tolerance(probs, DEFAULT_TOL)
    }

    pub fn with_tolerance(mut probs: Vec<f64>, tol: f64) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidDistribution("empty support".into()));
        }
        for (i, &p) in probs.iter().enumerate() {
            if !p.is_finite() {
                return Err(Error::InvalidDistribution(format!("entry {i} is not finite")));
            }
            if p < 0.0 {
                return Err(Error::InvalidDistribution(format!("entry {i} is negative ({p})")));
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > tol {
            return Err(Error::InvalidDistribution(format!(
                "entries sum to {sum}, outside tolerance {tol}"
            )));
        }
        if sum != 1.0 {
            probs.iter_mut().for_each(|p| *p /= sum);
        }
        Ok(Self { probs })
    }

    pub fn uniform(d: usize) -> Self {
        assert!(d >= 1, "uniform distribution needs d >= 1");
        Self {
            probs: vec![1.0 / d as f64; d],
        }
    }

    pub fn point_mass(d: usize, state: usize) -> Self {
        assert!(state < d, "point mass outside support");
        let mut probs = vec![0.0; d];
        probs[state] = 1.0;
        Self { probs }
    }

    pub fn d(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn min(&self) -> f64 {
        self.probs.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.probs
    }
}

impl std::ops::Index<usize> for Distribution {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.probs[i]
    }
}

impl TryFrom<Vec<f64>> for Distribution {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<Distribution> for Vec<f64> {
    fn from(d: Distribution) -> Self {
        d.probs
    }
}

/// A validated row-stochastic `d x d` kernel, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct TransitionMatrix {
    d: usize,
    data: Vec<f64>,
}

/// Validates a raw square matrix as a transition kernel.
///
/// Rows whose sum is within `tol` of one are renormalized; anything further
/// off is rejected with the offending row and its deviation.
pub fn validate_chain(raw: &[Vec<f64>], tol: f64) -> Result<TransitionMatrix> {
    let d = raw.len();
    if d == 0 {
        return Err(Error::InvalidDistribution("empty matrix".into()));
    }
    let mut data = Vec::with_capacity(d * d);
    for (i, row) in raw.iter().enumerate() {
        if row.len() != d {
            return Err(Error::NonSquare {
                row: i,
                len: row.len(),
                expected: d,
            });
        }
        for (j, &v) in row.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite { row: i, col: j });
            }
            if v < 0.0 {
                return Err(Error::NegativeEntry {
                    row: i,
                    col: j,
                    value: v,
                });
            }
        }
        let sum: f64 = row.iter().sum();
        let deviation = sum - 1.0;
        if deviation.abs() > tol {
            return Err(Error::RowSumOutOfTolerance { row: i, deviation });
        }
        if sum == 1.0 {
            data.extend_from_slice(row);
        } else {
            data.extend(row.iter().map(|v| v / sum));
        }
    }
    Ok(TransitionMatrix { d, data })
}

impl TransitionMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        validate_chain(&rows, DEFAULT_TOL)
    }

    pub fn identity(d: usize) -> Self {
        let mut data = vec![0.0; d * d];
        for i in 0..d {
            data[i * d + i] = 1.0;
        }
        Self { d, data }
    }

    /// Builds a kernel from nonnegative row-major data whose rows are known to
    /// be stochastic up to rounding; every row is divided by its sum.
    pub(crate) fn from_raw_normalized(d: usize, mut data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), d * d);
        for row in data.chunks_mut(d) {
            let s: f64 = row.iter().sum();
            if s > 0.0 && s != 1.0 {
                row.iter_mut().for_each(|v| *v /= s);
            }
        }
        Self { d, data }
    }

    pub fn from_dmatrix(m: &DMatrix<f64>, tol: f64) -> Result<Self> {
        let rows: Vec<Vec<f64>> = (0..m.nrows())
            .map(|i| m.row(i).iter().copied().collect())
            .collect();
        if m.nrows() != m.ncols() {
            return Err(Error::NonSquare {
                row: 0,
                len: m.ncols(),
                expected: m.nrows(),
            });
        }
        validate_chain(&rows, tol)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.d + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.d)
    }

    pub fn row_distribution(&self, i: usize) -> Distribution {
        Distribution {
            probs: self.row(i).to_vec(),
        }
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(<[f64]>::to_vec).collect()
    }

    pub fn to_dmatrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.d, self.d, &self.data)
    }

    /// One step of the chain applied to a row vector: `mu * M`.
    pub fn step(&self, mu: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.d];
        for (i, &w) in mu.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (o, &p) in out.iter_mut().zip(self.row(i)) {
                *o += w * p;
            }
        }
        out
    }

    /// Returns a copy with row `i` replaced; the row is validated.
    pub fn with_row(&self, i: usize, row: &Distribution) -> Result<Self> {
        if row.d() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                found: row.d(),
            });
        }
        let mut data = self.data.clone();
        data[i * self.d..(i + 1) * self.d].copy_from_slice(row.probs());
        Ok(Self { d: self.d, data })
    }

    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.d {
            for j in (i + 1)..self.d {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }
}

impl TryFrom<Vec<Vec<f64>>> for TransitionMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(rows)
    }
}

impl From<TransitionMatrix> for Vec<Vec<f64>> {
    fn from(m: TransitionMatrix) -> Self {
        m.to_rows()
    }
}

/// A finite state sequence `X_1..X_m` over `[0, d)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Trajectory {
    states: Vec<usize>,
    d: usize,
}

impl Trajectory {
    pub fn new(states: Vec<usize>, d: usize) -> Result<Self> {
        if states.is_empty() {
            return Err(Error::TooShort { m: 0, required: 1 });
        }
        if let Some((position, &state)) = states.iter().enumerate().find(|(_, &s)| s >= d) {
            return Err(Error::StateOutOfRange { position, state, d });
        }
        Ok(Self { states, d })
    }

    /// Parses whitespace-separated 0-based state indices.
    pub fn parse(text: &str, d: usize) -> Result<Self> {
        let states = text
            .split_whitespace()
            .map(|tok| {
                tok.parse::<usize>()
                    .map_err(|e| Error::Parse(format!("bad state index {tok:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(states, d)
    }

    pub fn states(&self) -> &[usize] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn d(&self) -> usize {
        self.d
    }
}

impl fmt::Display for Trajectory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, s) in self.states.iter().enumerate() {
            if k > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{s}")?;
        }
        Ok(())
    }
}

/// A 64-bit master seed.
///
/// Child seeds are derived with [`RngSeed::derive`]:
/// `h_0 = splitmix64(seed)`, `h_{k+1} = splitmix64(h_k ^ splitmix64(path[k]))`.
/// The generator behind every seed is ChaCha8, so streams are identical
/// across platforms and thread counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RngSeed(pub u64);

pub(crate) fn splitmix64(z: u64) -> u64 {
    let mut z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngSeed {
    pub fn derive(self, path: &[u64]) -> RngSeed {
        let mut h = splitmix64(self.0);
        for &k in path {
            h = splitmix64(h ^ splitmix64(k));
        }
        RngSeed(h)
    }

    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}

/// Inverse-CDF sampler for one categorical distribution.
#[derive(Debug, Clone)]
pub struct Categorical {
    cdf: Vec<f64>,
    last_positive: usize,
}

impl Categorical {
    pub fn new(probs: &[f64]) -> Self {
        let mut acc = 0.0;
        let cdf = probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        let last_positive = probs.iter().rposition(|&p| p > 0.0).unwrap_or(0);
        Self { cdf, last_positive }
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        // first index with cdf > u; zero-probability cells have equal cdf
        // to their predecessor and are never selected
        let k = self.cdf.partition_point(|&c| c <= u);
        k.min(self.last_positive)
    }
}

/// Per-row samplers for a kernel, built once and reused across trajectories.
#[derive(Debug, Clone)]
pub struct ChainSampler {
    rows: Vec<Categorical>,
}

impl ChainSampler {
    pub fn new(chain: &TransitionMatrix) -> Self {
        Self {
            rows: chain.rows().map(Categorical::new).collect(),
        }
    }

    pub fn d(&self) -> usize {
        self.rows.len()
    }

    pub fn sample_into<R: Rng + ?Sized>(
        &self,
        initial: &Categorical,
        m: usize,
        rng: &mut R,
        out: &mut Vec<usize>,
    ) {
        out.clear();
        if m == 0 {
            return;
        }
        let mut x = initial.sample(rng);
        out.push(x);
        for _ in 1..m {
            x = self.rows[x].sample(rng);
            out.push(x);
        }
    }
}

/// Draws `X_1..X_m` with `X_1 ~ initial` and `X_{t+1} ~ chain(X_t, .)`.
pub fn sample_trajectory(
    chain: &TransitionMatrix,
    initial: &Distribution,
    m: usize,
    seed: RngSeed,
) -> Result<Trajectory> {
    if initial.d() != chain.d() {
        return Err(Error::DimensionMismatch {
            expected: chain.d(),
            found: initial.d(),
        });
    }
    if m == 0 {
        return Err(Error::TooShort { m, required: 1 });
    }
    let sampler = ChainSampler::new(chain);
    let init = Categorical::new(initial.probs());
    let mut rng = seed.rng();
    let mut states = Vec::with_capacity(m);
    sampler.sample_into(&init, m, &mut rng, &mut states);
    Ok(Trajectory {
        states,
        d: chain.d(),
    })
}

/// `||pi M - pi||_1`.
pub fn stationarity_residual(chain: &TransitionMatrix, pi: &Distribution) -> f64 {
    chain
        .step(pi.probs())
        .iter()
        .zip(pi.probs())
        .map(|(a, b)| (a - b).abs())
        .sum()
}

/// The time reversal `M†(i, j) = pi(j) M(j, i) / pi(i)`.
pub fn time_reversal(chain: &TransitionMatrix, pi: &Distribution) -> Result<TransitionMatrix> {
    let d = chain.d();
    if pi.d() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: pi.d(),
        });
    }
    if let Some(state) = pi.probs().iter().position(|&p| p <= 0.0) {
        return Err(Error::ZeroStationaryMass { state });
    }
    let residual = stationarity_residual(chain, pi);
    if residual > STATIONARITY_TOL {
        return Err(Error::NotStationary { residual });
    }
    let mut data = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            data[i * d + j] = pi[j] * chain.get(j, i) / pi[i];
        }
    }
    Ok(TransitionMatrix::from_raw_normalized(d, data))
}
