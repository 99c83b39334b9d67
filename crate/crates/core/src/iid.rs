//! Identity testers for iid samples, used on the successors of each state.
//!
//! A single statistic serves both the worst-case and the instance-optimal
//! sample sizes:
//!
//! ```text
//! Z = sum_{i : q_i > 0} ((N_i - n q_i)^2 - N_i) / q_i^{2/3}
//! ```
//!
//! Under the null `E[(N_i - n q_i)^2 - N_i] = -n q_i^2`, so `Z` is centred
//! below zero. With `q` uniform the weights are constant and `Z` reduces to
//! the collision-style uniformity statistic. Any observation on a cell with
//! `q_i = 0` is a support violation and rejects outright.
//!
//! Thresholds are not taken from theory: [`calibrate_threshold`] simulates
//! the null and takes an empirical quantile. [`AmplifiedTester`] boosts a
//! fixed-confidence tester by majority vote over disjoint blocks.

use std::collections::HashMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::two_thirds_norm;
use crate::chain::{Categorical, Distribution, RngSeed};
use crate::complexity::{Constants, Mode};
use crate::error::{Error, Result};

/// Per-invocation failure probability of the base tester.
pub const DEFAULT_BASE_DELTA: f64 = 0.4;
/// Null simulations used for each threshold.
pub const DEFAULT_CALIBRATION_TRIALS: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Statistic {
    pub value: f64,
    pub support_violation: bool,
}

/// Computes `Z` for a count vector against `q`.
pub fn vv_statistic(counts: &[usize], q: &Distribution, n: usize) -> Result<Statistic> {
    if counts.len() != q.d() {
        return Err(Error::DimensionMismatch {
            expected: q.d(),
            found: counts.len(),
        });
    }
    let total: usize = counts.iter().sum();
    if total != n {
        return Err(Error::CountMismatch {
            expected: n,
            found: total,
        });
    }
    let nf = n as f64;
    let mut value = 0.0;
    let mut support_violation = false;
    for (&c, &qi) in counts.iter().zip(q.probs()) {
        if qi > 0.0 {
            let dev = c as f64 - nf * qi;
            value += (dev * dev - c as f64) / qi.powf(2.0 / 3.0);
        } else if c > 0 {
            support_violation = true;
        }
    }
    Ok(Statistic {
        value,
        support_violation,
    })
}

fn check_delta(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v < 1.0) {
        return Err(Error::ParameterOutOfRange(format!("{name} = {v} must lie in (0, 1)")));
    }
    Ok(())
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 2.0) {
        return Err(Error::ParameterOutOfRange(format!("eps = {eps} must lie in (0, 2)")));
    }
    Ok(())
}

/// Empirical `(1 - delta0)`-quantile of `Z` over `trials` null samples of
/// size `n` drawn from `q`.
pub fn calibrate_threshold(
    q: &Distribution,
    n: usize,
    delta0: f64,
    trials: usize,
    seed: RngSeed,
) -> Result<f64> {
    check_delta("delta0", delta0)?;
    if n == 0 || trials == 0 {
        return Err(Error::ParameterOutOfRange(
            "threshold calibration needs n >= 1 and trials >= 1".into(),
        ));
    }
    let sampler = Categorical::new(q.probs());
    let mut zs: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = seed.derive(&[t as u64]).rng();
            let mut counts = vec![0usize; q.d()];
            for _ in 0..n {
                counts[sampler.sample(&mut rng)] += 1;
            }
            vv_statistic(&counts, q, n).map(|s| s.value)
        })
        .collect::<Result<_>>()?;
    zs.sort_by(f64::total_cmp);
    let k = ((1.0 - delta0) * trials as f64).ceil() as usize;
    Ok(zs[k.clamp(1, trials) - 1])
}

/// Configuration of the fixed-confidence base tester.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IidTestConfig {
    pub reference: Distribution,
    /// Row-level l1 separation.
    pub eps: f64,
    pub delta0: f64,
    pub threshold: f64,
    pub n_required: usize,
}

impl IidTestConfig {
    pub fn new(
        reference: Distribution,
        eps: f64,
        delta0: f64,
        threshold: f64,
        n_required: usize,
    ) -> Result<Self> {
        check_eps(eps)?;
        check_delta("delta0", delta0)?;
        if n_required == 0 {
            return Err(Error::ParameterOutOfRange("n_required must be >= 1".into()));
        }
        Ok(Self {
            reference,
            eps,
            delta0,
            threshold,
            n_required,
        })
    }

    /// Calibrates the threshold by simulation.
    pub fn calibrated(
        reference: Distribution,
        eps: f64,
        delta0: f64,
        n_required: usize,
        trials: usize,
        seed: RngSeed,
    ) -> Result<Self> {
        let threshold = calibrate_threshold(&reference, n_required, delta0, trials, seed)?;
        Self::new(reference, eps, delta0, threshold, n_required)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IidVerdict {
    pub reject: bool,
    pub statistic: f64,
    pub threshold: f64,
    pub n_used: usize,
    pub support_violation: bool,
}

/// `(eps, delta0)` test on exactly the first `n_required` observations.
pub fn iid_identity_test(sample: &[usize], config: &IidTestConfig) -> Result<IidVerdict> {
    let n = config.n_required;
    if sample.len() < n {
        return Err(Error::InsufficientSample {
            needed: n,
            available: sample.len(),
        });
    }
    test_block(&sample[..n], &config.reference, config.threshold)
}

fn test_block(block: &[usize], q: &Distribution, threshold: f64) -> Result<IidVerdict> {
    let d = q.d();
    let mut counts = vec![0usize; d];
    for &x in block {
        if x >= d {
            return Err(Error::StateOutOfRange {
                position: 0,
                state: x,
                d,
            });
        }
        counts[x] += 1;
    }
    let stat = vv_statistic(&counts, q, block.len())?;
    Ok(IidVerdict {
        reject: stat.support_violation || stat.value > threshold,
        statistic: stat.value,
        threshold,
        n_used: block.len(),
        support_violation: stat.support_violation,
    })
}

/// The complexity measure `B`: `sqrt(d)` in worst-case mode, `||q||_{2/3}`
/// in instance mode.
pub fn complexity_measure(d: usize, mode: Mode, q: Option<&Distribution>) -> Result<f64> {
    match mode {
        Mode::WorstCase => Ok((d as f64).sqrt()),
        Mode::Instance => {
            let q = q.ok_or_else(|| {
                Error::ParameterOutOfRange("instance mode needs the reference distribution".into())
            })?;
            Ok(two_thirds_norm(q.probs()))
        }
    }
}

/// Sample size of the fixed-confidence tester: `ceil(C B / eps^2)`.
pub fn base_sample_size(measure: f64, eps: f64, constant: f64) -> Result<usize> {
    check_eps(eps)?;
    if !(constant > 0.0) {
        return Err(Error::ParameterOutOfRange(format!("constant {constant} must be > 0")));
    }
    Ok(((constant * measure / (eps * eps)).ceil() as usize).max(1))
}

/// Number of majority-vote blocks: `ceil(18 ln(2 / delta))`.
pub fn amplification_blocks(delta: f64) -> Result<usize> {
    check_delta("delta", delta)?;
    Ok(((18.0 * (2.0 / delta).ln()).ceil() as usize).max(1))
}

/// Total sample size of the amplified tester: blocks times base size.
pub fn iid_sample_size(
    d: usize,
    eps: f64,
    delta: f64,
    mode: Mode,
    q: Option<&Distribution>,
    constants: &Constants,
) -> Result<usize> {
    let measure = complexity_measure(d, mode, q)?;
    let base = base_sample_size(measure, eps, constants.iid_constant(mode))?;
    Ok(amplification_blocks(delta)? * base)
}

/// Threshold calibration settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Calibration {
    pub delta0: f64,
    pub trials: usize,
    pub seed: RngSeed,
}

impl Calibration {
    pub fn new(seed: RngSeed) -> Self {
        Self {
            delta0: DEFAULT_BASE_DELTA,
            trials: DEFAULT_CALIBRATION_TRIALS,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmplifiedVerdict {
    pub reject: bool,
    pub blocks: usize,
    pub block_size: usize,
    pub rejecting_blocks: usize,
    pub base_threshold: f64,
    pub support_violation: bool,
}

/// Majority vote over disjoint blocks of a calibrated base tester.
///
/// Ties reject. Observations beyond `blocks * block_size` are ignored.
#[derive(Debug, Clone, PartialEq)]
pub struct AmplifiedTester {
    reference: Distribution,
    blocks: usize,
    block_size: usize,
    threshold: f64,
}

impl AmplifiedTester {
    pub fn new(reference: Distribution, blocks: usize, block_size: usize, calibration: &Calibration) -> Result<Self> {
        if blocks == 0 || block_size == 0 {
            return Err(Error::ParameterOutOfRange(
                "amplified tester needs at least one block of one sample".into(),
            ));
        }
        let threshold = calibrate_threshold(
            &reference,
            block_size,
            calibration.delta0,
            calibration.trials,
            calibration.seed,
        )?;
        Ok(Self {
            reference,
            blocks,
            block_size,
            threshold,
        })
    }

    /// Sizes the tester from `(eps, delta)` and the constants.
    pub fn for_budget(
        reference: Distribution,
        eps: f64,
        delta: f64,
        mode: Mode,
        constants: &Constants,
        calibration: &Calibration,
    ) -> Result<Self> {
        let measure = complexity_measure(reference.d(), mode, Some(&reference))?;
        let block_size = base_sample_size(measure, eps, constants.iid_constant(mode))?;
        let blocks = amplification_blocks(delta)?;
        Self::new(reference, blocks, block_size, calibration)
    }

    pub fn blocks(&self) -> usize {
        self.blocks
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn required(&self) -> usize {
        self.blocks * self.block_size
    }

    pub fn test(&self, sample: &[usize]) -> Result<AmplifiedVerdict> {
        if sample.len() < self.required() {
            return Err(Error::InsufficientSample {
                needed: self.required(),
                available: sample.len(),
            });
        }
        let mut rejecting = 0;
        let mut support_violation = false;
        for block in sample.chunks_exact(self.block_size).take(self.blocks) {
            let v = test_block(block, &self.reference, self.threshold)?;
            rejecting += usize::from(v.reject);
            support_violation |= v.support_violation;
        }
        Ok(AmplifiedVerdict {
            reject: 2 * rejecting >= self.blocks,
            blocks: self.blocks,
            block_size: self.block_size,
            rejecting_blocks: rejecting,
            base_threshold: self.threshold,
            support_violation,
        })
    }
}

/// One-shot amplified test; calibrates a fresh threshold from `seed`.
pub fn amplified_test(
    sample: &[usize],
    q: &Distribution,
    eps: f64,
    delta: f64,
    mode: Mode,
    constants: &Constants,
    seed: RngSeed,
) -> Result<AmplifiedVerdict> {
    AmplifiedTester::for_budget(q.clone(), eps, delta, mode, constants, &Calibration::new(seed))?.test(sample)
}

/// Hex SHA-256 of the little-endian bytes of `q`.
pub fn distribution_hash(q: &Distribution) -> String {
    let mut h = Sha256::new();
    for p in q.probs() {
        h.update(p.to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ThresholdKey {
    pub q_hash: String,
    pub n: usize,
    pub delta0_bits: u64,
    pub trials: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CacheEntry {
    key: ThresholdKey,
    threshold: f64,
}

/// Calibrated thresholds keyed by `(q, n, delta0, trials, seed)`, storable
/// as a JSON sidecar.
#[derive(Debug, Clone, Default)]
pub struct ThresholdCache {
    entries: HashMap<ThresholdKey, f64>,
}

impl ThresholdCache {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get_or_calibrate(
        &mut self,
        q: &Distribution,
        n: usize,
        delta0: f64,
        trials: usize,
        seed: RngSeed,
    ) -> Result<f64> {
        let key = ThresholdKey {
            q_hash: distribution_hash(q),
            n,
            delta0_bits: delta0.to_bits(),
            trials,
            seed: seed.0,
        };
        if let Some(&t) = self.entries.get(&key) {
            return Ok(t);
        }
        let t = calibrate_threshold(q, n, delta0, trials, seed)?;
        self.entries.insert(key, t);
        Ok(t)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut list: Vec<CacheEntry> = self
            .entries
            .iter()
            .map(|(k, &t)| CacheEntry {
                key: k.clone(),
                threshold: t,
            })
            .collect();
        list.sort_by(|a, b| {
            (&a.key.q_hash, a.key.n, a.key.trials, a.key.seed)
                .cmp(&(&b.key.q_hash, b.key.n, b.key.trials, b.key.seed))
        });
        std::fs::write(path, serde_json::to_string_pretty(&list)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let list: Vec<CacheEntry> = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        Ok(Self {
            entries: list.into_iter().map(|e| (e.key, e.threshold)).collect(),
        })
    }
}
