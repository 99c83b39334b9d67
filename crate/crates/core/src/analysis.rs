//! Quantities derived from a fully known reference chain: stationary
//! distribution, exact mixing time, spectral gaps and the mixing-time
//! brackets they imply, and the pi-weighted 2/3-norm.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::chain::{stationarity_residual, time_reversal, Distribution, TransitionMatrix};
use crate::error::{ErgodicityFailure, Error, Result};

/// Detailed-balance tolerance.
pub const REVERSIBILITY_TOL: f64 = 1e-8;
/// Default cap for [`exact_mixing_time`].
pub const DEFAULT_T_CAP: usize = 1_000_000;

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn reaches_all(d: usize, adj: &[Vec<usize>]) -> bool {
    let mut seen = vec![false; d];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                queue.push_back(v);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// Period of the support digraph, or `None` if it is not strongly connected.
///
/// Uses BFS levels from state 0: the period is the gcd of
/// `level(u) + 1 - level(v)` over all edges `u -> v`.
pub fn support_period(chain: &TransitionMatrix) -> Option<usize> {
    let d = chain.d();
    let mut fwd = vec![Vec::new(); d];
    let mut bwd = vec![Vec::new(); d];
    for i in 0..d {
        for j in 0..d {
            if chain.get(i, j) > 0.0 {
                fwd[i].push(j);
                bwd[j].push(i);
            }
        }
    }
    if !reaches_all(d, &fwd) || !reaches_all(d, &bwd) {
        return None;
    }
    let mut level = vec![usize::MAX; d];
    level[0] = 0;
    let mut queue = VecDeque::from([0]);
    while let Some(u) = queue.pop_front() {
        for &v in &fwd[u] {
            if level[v] == usize::MAX {
                level[v] = level[u] + 1;
                queue.push_back(v);
            }
        }
    }
    let mut g = 0;
    for u in 0..d {
        for &v in &fwd[u] {
            g = gcd(g, (level[u] + 1).abs_diff(level[v]));
        }
    }
    Some(g)
}

pub fn check_ergodic(chain: &TransitionMatrix) -> Result<()> {
    match support_period(chain) {
        None => Err(Error::NotErgodic(ErgodicityFailure::Reducible)),
        Some(1) => Ok(()),
        Some(period) => Err(Error::NotErgodic(ErgodicityFailure::Periodic { period })),
    }
}

/// The unique `pi` with `pi M = pi`.
///
/// Solves `(I - M^T) x = 0` with one equation replaced by `sum x = 1`, then
/// refines by power steps until `||pi M - pi||_1 <= tol` (or no further
/// improvement is possible).
pub fn stationary_distribution(chain: &TransitionMatrix, tol: f64) -> Result<Distribution> {
    check_ergodic(chain)?;
    let d = chain.d();
    let mut a = DMatrix::<f64>::identity(d, d) - chain.to_dmatrix().transpose();
    for j in 0..d {
        a[(d - 1, j)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(d);
    b[d - 1] = 1.0;
    let mut x: Vec<f64> = match a.lu().solve(&b) {
        Some(sol) => sol.iter().map(|v| v.max(0.0)).collect(),
        None => vec![1.0 / d as f64; d],
    };
    normalize(&mut x);

    let mut best = x.clone();
    let mut best_res = residual(chain, &x);
    let mut iter = 0;
    while best_res > tol && iter < 10_000 {
        x = chain.step(&x);
        normalize(&mut x);
        let r = residual(chain, &x);
        if r < best_res {
            best_res = r;
            best.clone_from(&x);
        }
        iter += 1;
    }
    Distribution::with_tolerance(best, 1e-6)
}

fn normalize(x: &mut [f64]) {
    let s: f64 = x.iter().sum();
    x.iter_mut().for_each(|v| *v /= s);
}

fn residual(chain: &TransitionMatrix, x: &[f64]) -> f64 {
    chain
        .step(x)
        .iter()
        .zip(x)
        .map(|(a, b)| (a - b).abs())
        .sum()
}

/// `max_i tv(e_i M^t, pi)` for `t = 1..=t_max`.
pub fn mixing_profile(chain: &TransitionMatrix, pi: &Distribution, t_max: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(t_max);
    let m = chain.to_dmatrix();
    let mut power = m.clone();
    for t in 1..=t_max {
        if t > 1 {
            power = &power * &m;
        }
        out.push(worst_vertex_tv(&power, pi));
    }
    out
}

fn worst_vertex_tv(power: &DMatrix<f64>, pi: &Distribution) -> f64 {
    (0..power.nrows())
        .map(|i| {
            0.5 * power
                .row(i)
                .iter()
                .zip(pi.probs())
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>()
        })
        .fold(0.0, f64::max)
}

/// Smallest `t >= 1` with `max_i tv(e_i M^t, pi) <= 1/4`.
///
/// Point-mass starts suffice: TV to `pi` is convex in the initial
/// distribution, so its supremum over the simplex sits at a vertex.
pub fn exact_mixing_time(chain: &TransitionMatrix, pi: &Distribution, t_cap: usize) -> Result<usize> {
    if pi.d() != chain.d() {
        return Err(Error::DimensionMismatch {
            expected: chain.d(),
            found: pi.d(),
        });
    }
    let m = chain.to_dmatrix();
    let mut power = m.clone();
    for t in 1..=t_cap {
        if t > 1 {
            power = &power * &m;
        }
        if worst_vertex_tv(&power, pi) <= 0.25 + 1e-12 {
            return Ok(t);
        }
    }
    Err(Error::CapExceeded { t_cap })
}

/// Largest detailed-balance violation `|pi_i M_ij - pi_j M_ji|`.
pub fn reversibility_defect(chain: &TransitionMatrix, pi: &Distribution) -> (usize, usize, f64) {
    let d = chain.d();
    let mut worst = (0, 0, 0.0);
    for i in 0..d {
        for j in (i + 1)..d {
            let dev = (pi[i] * chain.get(i, j) - pi[j] * chain.get(j, i)).abs();
            if dev > worst.2 {
                worst = (i, j, dev);
            }
        }
    }
    worst
}

pub fn is_reversible(chain: &TransitionMatrix, pi: &Distribution) -> bool {
    reversibility_defect(chain, pi).2 <= REVERSIBILITY_TOL
}

/// Eigenvalues (descending) of a kernel that is self-adjoint in `L2(pi)`,
/// computed through `D^{1/2} K D^{-1/2}`, which is then symmetric.
fn reversible_spectrum(kernel: &DMatrix<f64>, pi: &Distribution) -> Vec<f64> {
    let d = kernel.nrows();
    let sq: Vec<f64> = pi.probs().iter().map(|p| p.sqrt()).collect();
    let mut s = DMatrix::<f64>::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            s[(i, j)] = sq[i] * kernel[(i, j)] / sq[j];
        }
    }
    let sym = (&s + s.transpose()) * 0.5;
    let mut ev: Vec<f64> = SymmetricEigen::new(sym).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

fn require_positive(pi: &Distribution) -> Result<()> {
    match pi.probs().iter().position(|&p| p <= 0.0) {
        Some(state) => Err(Error::ZeroStationaryMass { state }),
        None => Ok(()),
    }
}

/// `1 - max(lambda_2, |lambda_d|)` for a reversible kernel.
pub fn absolute_spectral_gap(chain: &TransitionMatrix, pi: &Distribution) -> Result<f64> {
    require_positive(pi)?;
    let (i, j, deviation) = reversibility_defect(chain, pi);
    if deviation > REVERSIBILITY_TOL {
        return Err(Error::NotReversible { i, j, deviation });
    }
    let ev = reversible_spectrum(&chain.to_dmatrix(), pi);
    if ev.len() < 2 {
        return Ok(1.0);
    }
    let second = ev[1].max(ev[ev.len() - 1].abs());
    Ok((1.0 - second).clamp(0.0, 1.0))
}

/// Pseudo-spectral gap truncated at `k_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PseudoSpectralGap {
    pub value: f64,
    /// The `k` attaining the maximum.
    pub best_k: usize,
    pub k_max: usize,
    /// Terms beyond `k_max` are at most `1/k`, so the truncation can only
    /// undershoot the full maximum by this much.
    pub additive_error: f64,
}

/// `max_{1 <= k <= k_max} gap((M†)^k M^k) / k`.
pub fn pseudo_spectral_gap(
    chain: &TransitionMatrix,
    pi: &Distribution,
    k_max: usize,
) -> Result<PseudoSpectralGap> {
    if k_max == 0 {
        return Err(Error::ParameterOutOfRange("k_max must be >= 1".into()));
    }
    let rev = time_reversal(chain, pi)?.to_dmatrix();
    let m = chain.to_dmatrix();
    let mut mk = m.clone();
    let mut rk = rev.clone();
    let mut best = (0.0f64, 1usize);
    for k in 1..=k_max {
        if k > 1 {
            mk = &mk * &m;
            rk = &rk * &rev;
        }
        let kernel = &rk * &mk;
        let ev = reversible_spectrum(&kernel, pi);
        let gap = if ev.len() < 2 { 1.0 } else { (1.0 - ev[1]).clamp(0.0, 1.0) };
        let val = gap / k as f64;
        if val > best.0 {
            best = (val, k);
        }
    }
    Ok(PseudoSpectralGap {
        value: best.0,
        best_k: best.1,
        k_max,
        additive_error: 1.0 / k_max as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BracketKind {
    Reversible,
    PseudoSpectral,
}

/// Lower and upper bounds on the mixing time implied by a spectral gap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MixingBracket {
    pub lower: f64,
    pub upper: f64,
    pub kind: BracketKind,
}

impl MixingBracket {
    pub fn contains(&self, t: f64) -> bool {
        self.lower <= t && t <= self.upper
    }
}

/// `(1/gamma - 1) ln 2 <= t_mix <= ln(4/pi_min) / gamma`.
pub fn reversible_mixing_bounds(gamma_abs: f64, pi_min: f64) -> MixingBracket {
    MixingBracket {
        lower: (1.0 / gamma_abs - 1.0) * std::f64::consts::LN_2,
        upper: (4.0 / pi_min).ln() / gamma_abs,
        kind: BracketKind::Reversible,
    }
}

/// `1/(2 gamma_ps) <= t_mix <= (ln(1/pi_min) + 2 ln 2 + 1) / gamma_ps`.
pub fn pseudo_spectral_mixing_bounds(gamma_ps: f64, pi_min: f64) -> MixingBracket {
    MixingBracket {
        lower: 1.0 / (2.0 * gamma_ps),
        upper: ((1.0 / pi_min).ln() + 2.0 * std::f64::consts::LN_2 + 1.0) / gamma_ps,
        kind: BracketKind::PseudoSpectral,
    }
}

/// The applicable bracket: reversible when the absolute gap is known,
/// pseudo-spectral otherwise.
pub fn mixing_time_bounds(analysis: &ChainAnalysis) -> Result<MixingBracket> {
    if let Some(g) = analysis.gamma_abs {
        return Ok(reversible_mixing_bounds(g, analysis.pi_min));
    }
    match analysis.gamma_ps {
        Some(ps) if ps.value > 0.0 => Ok(pseudo_spectral_mixing_bounds(ps.value, analysis.pi_min)),
        _ => Err(Error::MissingGap),
    }
}

/// `(sum_j q_j^{2/3})^{3/2}`.
pub fn two_thirds_norm(q: &[f64]) -> f64 {
    q.iter().map(|p| p.powf(2.0 / 3.0)).sum::<f64>().powf(1.5)
}

/// `max_i (sum_j M(i,j)^{2/3})^{3/2} / pi(i)`.
pub fn two_thirds_pi_norm(chain: &TransitionMatrix, pi: &Distribution) -> Result<f64> {
    require_positive(pi)?;
    Ok(chain
        .rows()
        .zip(pi.probs())
        .map(|(row, p)| two_thirds_norm(row) / p)
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalysisOptions {
    pub stationary_tol: f64,
    pub t_cap: usize,
    /// Defaults to `max(64, 4 t_mix)`.
    pub k_max: Option<usize>,
    /// Skip the pseudo-spectral gap (it costs `k_max` eigendecompositions).
    pub pseudo_spectral: bool,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            stationary_tol: 1e-12,
            t_cap: DEFAULT_T_CAP,
            k_max: None,
            pseudo_spectral: true,
        }
    }
}

/// Everything the tester needs to know about the reference chain.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainAnalysis {
    pub d: usize,
    pub pi: Distribution,
    pub pi_min: f64,
    pub t_mix_exact: usize,
    pub gamma_abs: Option<f64>,
    pub gamma_ps: Option<PseudoSpectralGap>,
    pub two_thirds_pi_norm: f64,
    /// `||M(i, .)||_{2/3}` per row.
    pub row_two_thirds_norms: Vec<f64>,
    pub reversible: bool,
}

impl ChainAnalysis {
    pub fn compute(chain: &TransitionMatrix) -> Result<Self> {
        Self::compute_with(chain, &AnalysisOptions::default())
    }

    pub fn compute_with(chain: &TransitionMatrix, opts: &AnalysisOptions) -> Result<Self> {
        let pi = stationary_distribution(chain, opts.stationary_tol)?;
        let pi_min = pi.min();
        let t_mix_exact = exact_mixing_time(chain, &pi, opts.t_cap)?;
        let reversible = is_reversible(chain, &pi);
        let gamma_abs = if reversible {
            Some(absolute_spectral_gap(chain, &pi)?)
        } else {
            None
        };
        let gamma_ps = if opts.pseudo_spectral {
            let k_max = opts.k_max.unwrap_or_else(|| (4 * t_mix_exact).max(64));
            Some(pseudo_spectral_gap(chain, &pi, k_max)?)
        } else {
            None
        };
        Ok(Self {
            d: chain.d(),
            two_thirds_pi_norm: two_thirds_pi_norm(chain, &pi)?,
            row_two_thirds_norms: chain.rows().map(two_thirds_norm).collect(),
            pi,
            pi_min,
            t_mix_exact,
            gamma_abs,
            gamma_ps,
            reversible,
        })
    }

    /// `||pi M - pi||_1` for the stored `pi`.
    pub fn stationarity_residual(&self, chain: &TransitionMatrix) -> f64 {
        stationarity_residual(chain, &self.pi)
    }
}
