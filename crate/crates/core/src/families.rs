//! Hard instances for the tester, together with their closed-form quantities.
//!
//! * `G`: `d + 1` states. Every ordinary state moves to `p = ((1-p*)/d, ..., p*)`;
//!   the special state `d` moves to `eta` on the ordinary states and never
//!   stays put. Distinguishing rows of the special state needs many visits
//!   to a state of mass about `p*`.
//! * `H`: `d = 6k` states. An inner clique of `d/3` states, each leaking to
//!   a private pair of outer states. Mixing takes order `1/eta` steps, and
//!   an alternative that perturbs only one inner state's pair is invisible
//!   until that state is visited.
//!
//! State indices are zero-based: the special state of `G` is `d`, the inner
//! clique of `H` is `0..d/3`, and inner state `i` owns outer states
//! `d/3 + 2i` and `d/3 + 2i + 1`.

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chain::{validate_chain, Categorical, Distribution, RngSeed, TransitionMatrix};
use crate::error::{Error, Result};

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidSpec(msg.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GFamilySpec {
    /// Number of ordinary states.
    pub d: usize,
    pub p_star: f64,
    /// Row of the special state, on the `d` ordinary states.
    pub eta: Distribution,
}

impl GFamilySpec {
    pub fn new(d: usize, p_star: f64, eta: Distribution) -> Result<Self> {
        let spec = Self { d, p_star, eta };
        spec.validate()?;
        Ok(spec)
    }

    pub fn uniform(d: usize, p_star: f64) -> Result<Self> {
        Self::new(d, p_star, Distribution::uniform(d.max(1)))
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(invalid("G family needs d >= 1"));
        }
        let cap = 1.0 / (2.0 * (self.d + 1) as f64);
        if !(self.p_star > 0.0 && self.p_star <= cap) {
            return Err(invalid(format!("p_star = {} must lie in (0, {cap}]", self.p_star)));
        }
        if self.eta.d() != self.d {
            return Err(invalid(format!(
                "eta has {} entries, expected {}",
                self.eta.d(),
                self.d
            )));
        }
        Ok(())
    }

    /// Stationary mass of the special state, `p* / (1 + p*)`.
    pub fn special_stationary_mass(&self) -> f64 {
        self.p_star / (1.0 + self.p_star)
    }
}

/// The initial distribution `p`, which is also every ordinary row.
pub fn g_initial(d: usize, p_star: f64) -> Distribution {
    let mut probs = vec![(1.0 - p_star) / d as f64; d + 1];
    probs[d] = p_star;
    Distribution::with_tolerance(probs, 1e-12).expect("p is a distribution")
}

pub fn build_g_chain(spec: &GFamilySpec) -> Result<TransitionMatrix> {
    spec.validate()?;
    let d = spec.d;
    let p = g_initial(d, spec.p_star).into_vec();
    let mut rows = vec![p; d];
    let mut last = spec.eta.probs().to_vec();
    last.push(0.0);
    rows.push(last);
    validate_chain(&rows, 1e-15)
}

/// `((1 + s_1 eps)/d, (1 - s_1 eps)/d, ..., (1 + s_{d/2} eps)/d, (1 - s_{d/2} eps)/d)`.
///
/// Each sign must be `+1` or `-1`; the l1 distance to uniform is `eps`.
pub fn perturbed_uniform(d: usize, eps: f64, sigma: &[i8]) -> Result<Distribution> {
    if d == 0 || d % 2 != 0 {
        return Err(invalid(format!("d = {d} must be even and positive")));
    }
    if sigma.len() != d / 2 {
        return Err(invalid(format!("sigma has {} signs, expected {}", sigma.len(), d / 2)));
    }
    if !(0.0..1.0).contains(&eps) {
        return Err(invalid(format!("eps = {eps} must lie in [0, 1)")));
    }
    let mut probs = Vec::with_capacity(d);
    for &s in sigma {
        let s = match s {
            1 => 1.0,
            -1 => -1.0,
            other => return Err(invalid(format!("sign {other} is not +-1"))),
        };
        probs.push((1.0 + s * eps) / d as f64);
        probs.push((1.0 - s * eps) / d as f64);
    }
    Distribution::with_tolerance(probs, 1e-12)
}

/// Ways to pick `n` pairwise non-adjacent integers from `1..=m`:
/// `binomial(m - n + 1, n)`.
pub fn nonconsecutive_count(m: usize, n: usize) -> Result<BigUint> {
    if 2 * n > m + 1 {
        return Err(Error::ParameterOutOfRange(format!(
            "cannot pick {n} non-adjacent integers from {m}"
        )));
    }
    Ok(binomial_big(m - n + 1, n))
}

fn binomial_big(n: usize, k: usize) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 0..k {
        acc = acc * BigUint::from(n - i) / BigUint::from(i + 1);
    }
    acc
}

fn ln_binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).map(|i| ((n - i) as f64 / (i + 1) as f64).ln()).sum()
}

/// Law of the number of visits to the special state among `X_1..X_m` for
/// any `G` chain started from `p`.
///
/// The special state is entered with probability `p*` from anywhere else
/// and always left, so the visit pattern is a set of non-adjacent times and
/// `eta` plays no role.
pub fn visit_count_pmf(m: usize, n: usize, p_star: f64) -> Result<f64> {
    if !(p_star > 0.0 && p_star < 1.0) {
        return Err(Error::ParameterOutOfRange(format!("p_star = {p_star} must lie in (0, 1)")));
    }
    if m == 0 {
        return Err(Error::ParameterOutOfRange("m must be >= 1".into()));
    }
    if n == 0 {
        return Ok((1.0 - p_star).powi(m as i32));
    }
    if 2 * n > m + 1 {
        return Ok(0.0);
    }
    // C(m-n+1, n) - C(m-n, n-1) p*  =  C(m-n+1, n) (1 - p* n / (m-n+1))
    let correction = 1.0 - p_star * n as f64 / (m - n + 1) as f64;
    let log_weight = n as f64 * p_star.ln() + (m as f64 - 2.0 * n as f64) * (1.0 - p_star).ln();
    let c = binomial_big(m - n + 1, n);
    let value = match c.to_u64().filter(|&c| c < 1 << 53) {
        Some(c) => c as f64 * log_weight.exp() * correction,
        None => (ln_binomial(m - n + 1, n) + log_weight).exp() * correction,
    };
    Ok(value)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HFamilySpec {
    pub d: usize,
    pub eta: f64,
    /// One bit per inner state.
    pub tau: Vec<bool>,
    pub eps: f64,
}

impl HFamilySpec {
    pub fn new(d: usize, eta: f64, tau: Vec<bool>, eps: f64) -> Result<Self> {
        let spec = Self { d, eta, tau, eps };
        spec.validate()?;
        Ok(spec)
    }

    /// The reference `tau = 0`.
    pub fn reference(d: usize, eta: f64, eps: f64) -> Result<Self> {
        Self::new(d, eta, vec![false; d / 3], eps)
    }

    /// `tau` with a single bit set at inner state `i`.
    pub fn one_hot(d: usize, eta: f64, i: usize, eps: f64) -> Result<Self> {
        let mut tau = vec![false; d / 3];
        if i >= tau.len() {
            return Err(invalid(format!("inner state {i} out of range")));
        }
        tau[i] = true;
        Self::new(d, eta, tau, eps)
    }

    /// The lower-bound regime: `d = 6k >= 12`, `0 < eta < 1/48`, `0 < eps <= 1/8`.
    pub fn validate(&self) -> Result<()> {
        if self.d < 12 {
            return Err(invalid(format!("d = {} must be at least 12", self.d)));
        }
        if !(self.eta > 0.0 && self.eta < 1.0 / 48.0) {
            return Err(invalid(format!("eta = {} must lie in (0, 1/48)", self.eta)));
        }
        if !(self.eps > 0.0 && self.eps <= 0.125) {
            return Err(invalid(format!("eps = {} must lie in (0, 1/8]", self.eps)));
        }
        self.validate_relaxed()
    }

    /// Only what is needed for a valid ergodic kernel: `d = 6k`,
    /// `0 < eta <= 3/4`, `0 <= eps <= 1/4`.
    pub fn validate_relaxed(&self) -> Result<()> {
        if self.d < 6 || self.d % 6 != 0 {
            return Err(invalid(format!("d = {} must be a positive multiple of 6", self.d)));
        }
        if self.tau.len() != self.d / 3 {
            return Err(invalid(format!(
                "tau has {} bits, expected {}",
                self.tau.len(),
                self.d / 3
            )));
        }
        if !(self.eta > 0.0 && self.eta <= 0.75) {
            return Err(invalid(format!("eta = {} must lie in (0, 3/4]", self.eta)));
        }
        if !(0.0..=0.25).contains(&self.eps) {
            return Err(invalid(format!("eps = {} must lie in [0, 1/4]", self.eps)));
        }
        Ok(())
    }
}

fn rational(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite float")
}

/// The `H` kernel in exact arithmetic. `eta` and `eps` are taken at their
/// exact binary values.
pub fn build_h_rational(spec: &HFamilySpec) -> Result<Vec<Vec<BigRational>>> {
    spec.validate_relaxed()?;
    let d = spec.d;
    let k = d / 3;
    let eta = rational(spec.eta);
    let eps4 = rational(spec.eps) * BigRational::from_integer(4.into());
    let eighth = BigRational::new(1.into(), 8.into());
    let int = |v: i64| BigRational::from_integer(v.into());
    let mut m = vec![vec![BigRational::zero(); d]; d];
    let off = &eta / int(k as i64 - 1);
    for i in 0..k {
        for j in 0..k {
            m[i][j] = if i == j {
                BigRational::new(3.into(), 4.into()) - &eta
            } else {
                off.clone()
            };
        }
        let t = if spec.tau[i] { eps4.clone() } else { BigRational::zero() };
        let (a, b) = (k + 2 * i, k + 2 * i + 1);
        let plus = &eighth * (int(1) + &t);
        let minus = &eighth * (int(1) - &t);
        m[i][a] = plus.clone();
        m[i][b] = minus.clone();
        m[a][i] = plus;
        m[b][i] = minus;
        m[a][a] = &eighth * (int(7) - &t);
        m[b][b] = &eighth * (int(7) + &t);
    }
    debug_assert!(m.iter().all(|row| row.iter().sum::<BigRational>() == int(1)));
    Ok(m)
}

fn rational_rows_to_chain(rows: &[Vec<BigRational>]) -> Result<TransitionMatrix> {
    let raw: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| r.iter().map(|x| x.to_f64().expect("bounded rational")).collect())
        .collect();
    validate_chain(&raw, 1e-15)
}

/// Builds an `H` chain inside the lower-bound regime.
pub fn build_h_chain(spec: &HFamilySpec) -> Result<TransitionMatrix> {
    spec.validate()?;
    rational_rows_to_chain(&build_h_rational(spec)?)
}

/// Builds an `H`-shaped chain under [`HFamilySpec::validate_relaxed`].
pub fn build_h_chain_relaxed(spec: &HFamilySpec) -> Result<TransitionMatrix> {
    rational_rows_to_chain(&build_h_rational(spec)?)
}

/// Uniform on the inner clique of a `d`-state `H` chain.
pub fn h_initial(d: usize) -> Distribution {
    let k = d / 3;
    let mut probs = vec![0.0; d];
    probs[..k].iter_mut().for_each(|p| *p = 1.0 / k as f64);
    Distribution::with_tolerance(probs, 1e-12).expect("uniform block")
}

/// Inner clique with every outer excursion collapsed into a self-loop:
/// `d/3` states, diagonal `1 - eta`, off-diagonal `eta / (d/3 - 1)`.
pub fn inner_clique_chain(d: usize, eta: f64) -> Result<TransitionMatrix> {
    if d < 6 || d % 6 != 0 {
        return Err(invalid(format!("d = {d} must be a positive multiple of 6")));
    }
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(invalid(format!("eta = {eta} must lie in (0, 1]")));
    }
    let k = d / 3;
    let off = eta / (k - 1) as f64;
    let rows = (0..k)
        .map(|i| (0..k).map(|j| if i == j { 1.0 - eta } else { off }).collect())
        .collect::<Vec<Vec<f64>>>();
    validate_chain(&rows, 1e-12)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HalfCover {
    /// First time `d/6` distinct inner states have been seen.
    Hit(usize),
    /// Not reached by `t_cap`.
    Censored(usize),
}

impl HalfCover {
    /// `t`, or the cap for censored runs (a lower bound on `t`).
    pub fn lower_bound(&self) -> usize {
        match *self {
            Self::Hit(t) | Self::Censored(t) => t,
        }
    }

    pub fn exceeds(&self, m: usize) -> bool {
        self.lower_bound() > m
    }
}

pub const DEFAULT_HALF_COVER_CAP: usize = 10_000_000;

fn check_half_cover_inputs(chain: &TransitionMatrix, d: usize, initial: &Distribution) -> Result<usize> {
    if d < 6 || d % 6 != 0 {
        return Err(invalid(format!("d = {d} must be a positive multiple of 6")));
    }
    let inner = d / 3;
    if chain.d() < inner {
        return Err(invalid(format!("chain has {} states, fewer than d/3 = {inner}", chain.d())));
    }
    if initial.d() != chain.d() {
        return Err(Error::DimensionMismatch {
            expected: chain.d(),
            found: initial.d(),
        });
    }
    if initial.probs()[inner..].iter().any(|&p| p > 0.0) {
        return Err(invalid("initial distribution must be supported on the inner clique"));
    }
    Ok(inner)
}

fn half_cover_run<R: Rng>(rows: &[Categorical], init: &Categorical, inner: usize, t_cap: usize, rng: &mut R) -> HalfCover {
    let target = inner / 2;
    let mut seen = vec![false; inner];
    let mut x = init.sample(rng);
    seen[x] = true;
    let mut distinct = 1;
    let mut t = 1;
    while distinct < target {
        if t >= t_cap {
            return HalfCover::Censored(t_cap);
        }
        x = rows[x].sample(rng);
        t += 1;
        if x < inner && !seen[x] {
            seen[x] = true;
            distinct += 1;
        }
    }
    HalfCover::Hit(t)
}

/// One half-cover time. `d` is the size of the full `H` chain, so the inner
/// clique is `0..d/3`; `chain` may be the `H` chain itself or
/// [`inner_clique_chain`].
pub fn half_cover_time_sample(
    chain: &TransitionMatrix,
    d: usize,
    initial: &Distribution,
    t_cap: usize,
    seed: RngSeed,
) -> Result<HalfCover> {
    let inner = check_half_cover_inputs(chain, d, initial)?;
    let rows: Vec<Categorical> = chain.rows().map(Categorical::new).collect();
    Ok(half_cover_run(&rows, &Categorical::new(initial.probs()), inner, t_cap, &mut seed.rng()))
}

/// `trials` independent half-cover times, trial `k` seeded by `seed.derive(&[k])`.
pub fn half_cover_times(
    chain: &TransitionMatrix,
    d: usize,
    initial: &Distribution,
    t_cap: usize,
    trials: usize,
    seed: RngSeed,
) -> Result<Vec<HalfCover>> {
    let inner = check_half_cover_inputs(chain, d, initial)?;
    let rows: Vec<Categorical> = chain.rows().map(Categorical::new).collect();
    let init = Categorical::new(initial.probs());
    Ok((0..trials)
        .into_par_iter()
        .map(|k| half_cover_run(&rows, &init, inner, t_cap, &mut seed.derive(&[k as u64]).rng()))
        .collect())
}

fn harmonic(k: usize) -> f64 {
    (1..=k).map(|i| 1.0 / i as f64).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HalfCoverBounds {
    /// `1 + (d/3)/eta (H_{d/3} - H_{d/6})`.
    pub mean_lower: f64,
    /// `(d/3)^2 / eta^2 * pi^2 / 6`.
    pub var_upper: f64,
}

/// Closed-form moment bounds for the half-cover time, as stated for the
/// collapsed inner clique. `H_k` is the `k`-th harmonic number.
///
/// The mean expression is not a lower bound on the collapsed clique's
/// actual mean (compare [`half_cover_exact_mean`]).
pub fn half_cover_expectation_bounds(d: usize, eta: f64) -> Result<HalfCoverBounds> {
    if d < 6 || d % 6 != 0 {
        return Err(Error::ParameterOutOfRange(format!("d = {d} must be a positive multiple of 6")));
    }
    if !(eta > 0.0) {
        return Err(Error::ParameterOutOfRange(format!("eta = {eta} must be positive")));
    }
    let k = (d / 3) as f64;
    Ok(HalfCoverBounds {
        mean_lower: 1.0 + k / eta * (harmonic(d / 3) - harmonic(d / 6)),
        var_upper: k * k / (eta * eta) * std::f64::consts::PI.powi(2) / 6.0,
    })
}

/// Exact mean of the half-cover time on [`inner_clique_chain`] from a
/// uniform inner start: with `j` states seen, a new one arrives with
/// probability `eta (d/3 - j) / (d/3 - 1)` per step.
pub fn half_cover_exact_mean(d: usize, eta: f64) -> Result<f64> {
    half_cover_expectation_bounds(d, eta)?;
    let k = d / 3;
    Ok(1.0
        + (1..d / 6)
            .map(|j| (k - 1) as f64 / (eta * (k - j) as f64))
            .sum::<f64>())
}

/// Moves mass `lambda = l1 / (2 (1 - q_j))` of row `row` onto state
/// `toward`, which shifts that row by exactly `l1` in l1.
pub fn corrupt_row_toward(chain: &TransitionMatrix, row: usize, toward: usize, l1: f64) -> Result<TransitionMatrix> {
    let d = chain.d();
    if row >= d || toward >= d {
        return Err(Error::ParameterOutOfRange(format!("state out of range for d = {d}")));
    }
    let q = chain.row(row);
    let room = 2.0 * (1.0 - q[toward]);
    if !(l1 >= 0.0 && l1 <= room) {
        return Err(Error::ParameterOutOfRange(format!(
            "l1 shift {l1} exceeds the maximum {room} toward state {toward}"
        )));
    }
    let lambda = if room > 0.0 { l1 / room } else { 0.0 };
    let mut new_row: Vec<f64> = q.iter().map(|&v| (1.0 - lambda) * v).collect();
    new_row[toward] += lambda;
    chain.with_row(row, &Distribution::with_tolerance(new_row, 1e-12)?)
}

/// Makes `row` absorbing. The result is not ergodic.
pub fn absorbing_row(chain: &TransitionMatrix, row: usize) -> Result<TransitionMatrix> {
    if row >= chain.d() {
        return Err(Error::ParameterOutOfRange(format!("state {row} out of range")));
    }
    chain.with_row(row, &Distribution::point_mass(chain.d(), row))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{check_ergodic, stationary_distribution};
    use crate::distance::{l1_dist, matrix_tv_norm};

    #[test]
    fn g_chain_small_example() {
        let spec = GFamilySpec::uniform(2, 0.1).unwrap();
        let m = build_g_chain(&spec).unwrap();
        for i in 0..2 {
            let r = m.row(i);
            assert!((r[0] - 0.45).abs() < 1e-15 && (r[1] - 0.45).abs() < 1e-15 && (r[2] - 0.1).abs() < 1e-15);
        }
        assert_eq!(m.row(2), &[0.5, 0.5, 0.0]);
        check_ergodic(&m).unwrap();
    }

    #[test]
    fn g_stationary_closed_form() {
        let eta = Distribution::new(vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let spec = GFamilySpec::new(4, 0.08, eta).unwrap();
        let pi = stationary_distribution(&build_g_chain(&spec).unwrap(), 1e-12).unwrap();
        assert!((pi[4] - spec.special_stationary_mass()).abs() < 1e-12);
    }

    #[test]
    fn g_spec_validation() {
        assert!(GFamilySpec::uniform(4, 0.2).is_err());
        assert!(GFamilySpec::uniform(4, 0.0).is_err());
        assert!(GFamilySpec::new(4, 0.05, Distribution::uniform(3)).is_err());
        assert!(GFamilySpec::uniform(4, 0.1).is_ok());
    }

    #[test]
    fn g_distance_only_in_last_row() {
        let e1 = Distribution::uniform(4);
        let e2 = perturbed_uniform(4, 0.2, &[1, 1]).unwrap();
        let a = build_g_chain(&GFamilySpec::new(4, 0.1, e1.clone()).unwrap()).unwrap();
        let b = build_g_chain(&GFamilySpec::new(4, 0.1, e2.clone()).unwrap()).unwrap();
        assert!((l1_dist(&e1, &e2).unwrap() - 0.2).abs() < 1e-15);
        assert!((matrix_tv_norm(&a, &b).unwrap() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn perturbed_uniform_examples() {
        assert_eq!(perturbed_uniform(4, 0.0, &[1, -1]).unwrap(), Distribution::uniform(4));
        let p = perturbed_uniform(4, 0.2, &[1, -1]).unwrap();
        let want = [0.3, 0.2, 0.2, 0.3];
        for (a, b) in p.probs().iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(perturbed_uniform(3, 0.2, &[1]).is_err());
        assert!(perturbed_uniform(4, 0.2, &[1, 0]).is_err());
        assert!(perturbed_uniform(4, 0.2, &[1]).is_err());
    }

    #[test]
    fn nonconsecutive_examples() {
        assert_eq!(nonconsecutive_count(7, 1).unwrap(), BigUint::from(7u32));
        assert_eq!(nonconsecutive_count(5, 2).unwrap(), BigUint::from(6u32));
        assert_eq!(nonconsecutive_count(3, 2).unwrap(), BigUint::from(1u32));
        assert_eq!(nonconsecutive_count(4, 0).unwrap(), BigUint::from(1u32));
        assert!(nonconsecutive_count(3, 3).is_err());
    }

    #[test]
    fn visit_pmf_examples() {
        assert!((visit_count_pmf(1, 1, 0.3).unwrap() - 0.3).abs() < 1e-15);
        assert!((visit_count_pmf(2, 1, 0.5).unwrap() - 0.75).abs() < 1e-15);
        assert!((visit_count_pmf(3, 2, 0.5).unwrap() - 0.25).abs() < 1e-15);
        assert!((visit_count_pmf(5, 0, 0.1).unwrap() - 0.9f64.powi(5)).abs() < 1e-15);
        assert_eq!(visit_count_pmf(5, 4, 0.1).unwrap(), 0.0);
        assert!(visit_count_pmf(5, 1, 1.0).is_err());
    }

    #[test]
    fn visit_pmf_large_m_sums_to_one() {
        let total: f64 = (0..=1001).map(|n| visit_count_pmf(2000, n, 0.02).unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-9, "{total}");
    }

    #[test]
    fn h_chain_structure() {
        let spec = HFamilySpec::one_hot(12, 0.02, 1, 0.125).unwrap();
        let m = build_h_chain(&spec).unwrap();
        assert!(m.max_asymmetry() < 1e-15);
        // doubly stochastic
        for j in 0..12 {
            let col: f64 = (0..12).map(|i| m.get(i, j)).sum();
            assert!((col - 1.0).abs() < 1e-14);
        }
        let exact = build_h_rational(&spec).unwrap();
        for (i, row) in exact.iter().enumerate() {
            assert!(row.iter().sum::<BigRational>().is_one());
            for j in 0..12 {
                assert_eq!(row[j], exact[j][i]);
            }
        }
        let pi = stationary_distribution(&m, 1e-12).unwrap();
        assert!(pi.probs().iter().all(|p| (p - 1.0 / 12.0).abs() < 1e-12));
    }

    #[test]
    fn h_one_hot_distance_is_half_eps() {
        let eps = 0.125;
        let a = build_h_chain(&HFamilySpec::reference(12, 0.02, eps).unwrap()).unwrap();
        let b = build_h_chain(&HFamilySpec::one_hot(12, 0.02, 0, eps).unwrap()).unwrap();
        // inner row: two entries move by eps/2; outer rows: off-diagonal and diagonal move by eps/2
        assert!((matrix_tv_norm(&a, &b).unwrap() - eps / 2.0).abs() < 1e-15);
    }

    #[test]
    fn h_spec_validation() {
        assert!(HFamilySpec::reference(6, 0.01, 0.1).is_err());
        assert!(HFamilySpec::reference(12, 0.04, 0.1).is_err());
        assert!(HFamilySpec::reference(12, 0.01, 0.2).is_err());
        assert!(HFamilySpec::new(12, 0.01, vec![false; 3], 0.1).is_err());
        let relaxed = HFamilySpec {
            d: 12,
            eta: 0.04,
            tau: vec![false; 4],
            eps: 0.1,
        };
        let m = build_h_chain_relaxed(&relaxed).unwrap();
        check_ergodic(&m).unwrap();
    }

    #[test]
    fn half_cover_degenerate_clique() {
        let chain = inner_clique_chain(6, 0.3).unwrap();
        let init = Distribution::uniform(2);
        for s in 0..20 {
            assert_eq!(half_cover_time_sample(&chain, 6, &init, 100, RngSeed(s)).unwrap(), HalfCover::Hit(1));
        }
    }

    #[test]
    fn half_cover_censoring_and_inputs() {
        let chain = inner_clique_chain(36, 1e-9).unwrap();
        let init = Distribution::uniform(12);
        assert_eq!(half_cover_time_sample(&chain, 36, &init, 50, RngSeed(0)).unwrap(), HalfCover::Censored(50));
        let h = build_h_chain(&HFamilySpec::reference(12, 0.02, 0.1).unwrap()).unwrap();
        assert!(half_cover_time_sample(&h, 12, &Distribution::uniform(12), 50, RngSeed(0)).is_err());
        assert!(half_cover_time_sample(&h, 12, &h_initial(12), 10_000, RngSeed(0)).is_ok());
    }

    #[test]
    fn half_cover_bound_arithmetic() {
        let b = half_cover_expectation_bounds(12, 0.02).unwrap();
        assert!((b.mean_lower - (1.0 + 200.0 * (1.0 / 3.0 + 0.25))).abs() < 1e-9);
        assert!((b.mean_lower - 117.67).abs() < 0.01);
        // H_{2k} - H_k increases to ln 2 from below; it is bracketed by
        // ln((2k+1)/(k+1)) and ln 2
        for k in 2..10 {
            let gap = harmonic(2 * k) - harmonic(k);
            let lo = ((2 * k + 1) as f64 / (k + 1) as f64).ln();
            assert!(gap >= lo && gap < std::f64::consts::LN_2);
            let b = half_cover_expectation_bounds(6 * k, 0.01).unwrap();
            assert!((b.mean_lower - (1.0 + 2.0 * k as f64 / 0.01 * gap)).abs() < 1e-9);
        }
        assert!((half_cover_exact_mean(12, 0.02).unwrap() - 51.0).abs() < 1e-9);
    }

    #[test]
    fn half_cover_mean_matches_exact() {
        let (d, eta) = (12, 0.02);
        let chain = inner_clique_chain(d, eta).unwrap();
        let times = half_cover_times(&chain, d, &Distribution::uniform(d / 3), 1_000_000, 4000, RngSeed(9)).unwrap();
        let mean = times.iter().map(|t| t.lower_bound() as f64).sum::<f64>() / times.len() as f64;
        let exact = half_cover_exact_mean(d, eta).unwrap();
        // geometric waiting time with mean 50: sd 49.5, standard error < 0.8
        assert!((mean - exact).abs() < 4.0, "{mean} vs {exact}");
    }

    #[test]
    fn corrupt_row_shifts_exact_l1() {
        let h = build_h_chain(&HFamilySpec::reference(12, 0.02, 0.1).unwrap()).unwrap();
        let alt = corrupt_row_toward(&h, 0, 1, 0.51).unwrap();
        let d = l1_dist(&h.row_distribution(0), &alt.row_distribution(0)).unwrap();
        assert!((d - 0.51).abs() < 1e-12);
        assert!(corrupt_row_toward(&h, 0, 1, 2.5).is_err());
        let abs = absorbing_row(&h, 0).unwrap();
        assert!(check_ergodic(&abs).is_err());
        assert_eq!(abs.get(0, 0), 1.0);
    }
}
