//! Single-trajectory identity tester.
//!
//! Three stages, each of which can reject:
//!
//! 1. the visit-count gate: `|N_i - (m-1) pi_i| <= (m-1) pi_i / 2` for every `i`,
//!    where `N_i` counts visits at times `1..m-1`;
//! 2. successor extraction: the first `nu(i) = ceil((m-1) pi_i / 2)` states
//!    observed right after a visit to `i`;
//! 3. an amplified iid test of each successor sample against row `i` of the
//!    reference, with failure budget `delta / (3d)` and l1 budget `2 eps`.
//!
//! Given the thresholds, the procedure is a deterministic function of the
//! trajectory. Thresholds are calibrated once per tester from the seed in
//! [`TesterOptions`], so one tester can be reused across many trajectories.

use std::collections::HashMap;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::analysis::{check_ergodic, ChainAnalysis};
use crate::chain::{stationarity_residual, Distribution, RngSeed, Trajectory, TransitionMatrix, STATIONARITY_TOL};
use crate::complexity::{nu, sample_complexity, state_budgets, Constants, Mode, SampleComplexityPlan, StateBudget};
use crate::error::{Error, Result};
use crate::iid::{calibrate_threshold, AmplifiedVerdict, DEFAULT_CALIBRATION_TRIALS};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VisitVector {
    pub counts: Vec<usize>,
    pub m: usize,
}

/// Visits at times `1..m-1`; the final state is not counted.
pub fn visit_counts(x: &Trajectory) -> Result<VisitVector> {
    if x.len() < 2 {
        return Err(Error::TooShort { m: x.len(), required: 2 });
    }
    let mut counts = vec![0usize; x.d()];
    for &s in &x.states()[..x.len() - 1] {
        counts[s] += 1;
    }
    Ok(VisitVector { counts, m: x.len() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GateFailure {
    pub state: usize,
    pub observed: usize,
    pub expected: f64,
}

/// Every state whose visit count leaves the `+-50%` band around `(m-1) pi_i`.
/// An empty result means the gate passes.
///
/// # Panics
/// If `v` and `pi` have different dimensions.
pub fn visit_count_gate(v: &VisitVector, pi: &Distribution) -> Vec<GateFailure> {
    assert_eq!(v.counts.len(), pi.d(), "visit vector and pi dimensions differ");
    let steps = (v.m - 1) as f64;
    v.counts
        .iter()
        .zip(pi.probs())
        .enumerate()
        .filter_map(|(state, (&n, &p))| {
            let expected = steps * p;
            ((n as f64 - expected).abs() > expected / 2.0).then_some(GateFailure {
                state,
                observed: n,
                expected,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SuccessorSample {
    pub states: Vec<usize>,
    pub requested: usize,
    /// Fewer than `requested` visits to the state occurred before time `m`.
    pub undersupplied: bool,
}

/// Successors of the first `n` visits to `i` at times `1..m-1`.
pub fn successor_sample(x: &Trajectory, i: usize, n: usize) -> SuccessorSample {
    let states: Vec<usize> = x
        .states()
        .windows(2)
        .filter(|w| w[0] == i)
        .map(|w| w[1])
        .take(n)
        .collect();
    SuccessorSample {
        undersupplied: states.len() < n,
        states,
        requested: n,
    }
}

/// All successor lists in one pass, each truncated at `caps[i]`.
fn successor_lists(x: &Trajectory, caps: &[usize]) -> Vec<Vec<usize>> {
    let mut lists: Vec<Vec<usize>> = caps.iter().map(|&c| Vec::with_capacity(c.min(x.len()))).collect();
    for w in x.states().windows(2) {
        let list = &mut lists[w[0]];
        if list.len() < caps[w[0]] {
            list.push(w[1]);
        }
    }
    lists
}

#[derive(Debug, Clone, PartialEq)]
pub struct TesterOptions {
    pub mode: Mode,
    /// Seeds threshold calibration.
    pub seed: RngSeed,
    /// Run on trajectories shorter than the required length.
    pub force: bool,
    /// Feed every observed transition to the sub-testers, not just the
    /// first `nu(i)`.
    pub use_all_transitions: bool,
    pub constants: Constants,
    /// Error level of each base block inside the majority vote. With
    /// `ceil(18 ln(2/delta'))` blocks, 1/3 makes the vote's Hoeffding bound
    /// equal to `delta' / 2`.
    pub base_delta: f64,
    pub calibration_trials: usize,
}

impl Default for TesterOptions {
    fn default() -> Self {
        Self {
            mode: Mode::WorstCase,
            seed: RngSeed(0),
            force: false,
            use_all_transitions: false,
            constants: Constants::shipped(),
            base_delta: 1.0 / 3.0,
            calibration_trials: DEFAULT_CALIBRATION_TRIALS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubstateReport {
    pub state: usize,
    /// `ceil((m-1) pi_i / 2)`.
    pub nu: usize,
    /// Successors handed to the sub-tester.
    pub n_used: usize,
    pub undersupplied: bool,
    /// Absent when no successor was available to test.
    pub verdict: Option<AmplifiedVerdict>,
}

impl SubstateReport {
    pub fn rejects(&self) -> bool {
        self.undersupplied || self.verdict.is_some_and(|v| v.reject)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Gate,
    Extraction,
    SubTests,
}

fn verdict_as_int<S: Serializer>(v: &bool, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_u8(u8::from(*v))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestReport {
    /// `true` (serialized as 1) means reject.
    #[serde(rename = "verdict", serialize_with = "verdict_as_int")]
    pub reject: bool,
    /// Stage that produced the rejection.
    pub rejected_at: Option<Stage>,
    pub gate_failures: Vec<GateFailure>,
    /// Empty when the gate rejected.
    pub substates: Vec<SubstateReport>,
    pub m_used: usize,
    pub plan: SampleComplexityPlan,
    /// Shorter than required, or some state got fewer samples than its budget.
    pub under_powered: bool,
}

impl TestReport {
    pub fn verdict(&self) -> u8 {
        u8::from(self.reject)
    }
}

/// A tester bound to one reference chain and one `(eps, delta)`.
#[derive(Debug)]
pub struct IdentityTester {
    rows: Vec<Distribution>,
    analysis: ChainAnalysis,
    options: TesterOptions,
    plan: SampleComplexityPlan,
    budgets: Vec<StateBudget>,
    thresholds: Mutex<HashMap<(usize, usize), f64>>,
}

impl IdentityTester {
    pub fn new(
        reference: &TransitionMatrix,
        analysis: ChainAnalysis,
        eps: f64,
        delta: f64,
        options: TesterOptions,
    ) -> Result<Self> {
        if analysis.d != reference.d() {
            return Err(Error::DimensionMismatch {
                expected: reference.d(),
                found: analysis.d,
            });
        }
        check_ergodic(reference)?;
        let residual = stationarity_residual(reference, &analysis.pi);
        if residual > STATIONARITY_TOL {
            return Err(Error::NotStationary { residual });
        }
        if !(options.base_delta > 0.0 && options.base_delta < 0.5) {
            return Err(Error::ParameterOutOfRange(format!(
                "base_delta = {} must lie in (0, 1/2) for majority voting",
                options.base_delta
            )));
        }
        let plan = sample_complexity(&analysis, eps, delta, options.mode, &options.constants)?;
        let budgets = state_budgets(&analysis, eps, delta, options.mode, &options.constants)?;
        let tester = Self {
            rows: (0..reference.d()).map(|i| reference.row_distribution(i)).collect(),
            analysis,
            options,
            plan,
            budgets,
            thresholds: Mutex::new(HashMap::new()),
        };
        // thresholds for the nominal configuration are needed by every run
        let nominal: Vec<(usize, usize)> = tester.budgets.iter().map(|b| b.block_size).enumerate().collect();
        let values = nominal
            .par_iter()
            .map(|&(i, n)| tester.calibrate(i, n))
            .collect::<Result<Vec<_>>>()?;
        tester.thresholds.lock().unwrap().extend(nominal.into_iter().zip(values));
        Ok(tester)
    }

    pub fn plan(&self) -> &SampleComplexityPlan {
        &self.plan
    }

    pub fn analysis(&self) -> &ChainAnalysis {
        &self.analysis
    }

    pub fn budgets(&self) -> &[StateBudget] {
        &self.budgets
    }

    pub fn options(&self) -> &TesterOptions {
        &self.options
    }

    pub fn required_length(&self) -> usize {
        self.plan.m
    }

    fn calibrate(&self, state: usize, n: usize) -> Result<f64> {
        calibrate_threshold(
            &self.rows[state],
            n,
            self.options.base_delta,
            self.options.calibration_trials,
            self.options.seed.derive(&[state as u64, n as u64]),
        )
    }

    fn threshold(&self, state: usize, n: usize) -> Result<f64> {
        if let Some(&t) = self.thresholds.lock().unwrap().get(&(state, n)) {
            return Ok(t);
        }
        let t = self.calibrate(state, n)?;
        self.thresholds.lock().unwrap().insert((state, n), t);
        Ok(t)
    }

    fn run_state(&self, state: usize, sample: &[usize]) -> Result<(AmplifiedVerdict, bool)> {
        let budget = self.budgets[state];
        let (blocks, block_size) = if sample.len() >= budget.total() && !self.options.use_all_transitions {
            (budget.blocks, budget.block_size)
        } else {
            let size = (sample.len() / budget.blocks).max(1);
            (budget.blocks.min(sample.len() / size), size)
        };
        let short = blocks < budget.blocks || block_size < budget.block_size;
        let threshold = self.threshold(state, block_size)?;
        let q = &self.rows[state];
        let mut rejecting = 0;
        let mut support_violation = false;
        for block in sample.chunks_exact(block_size).take(blocks) {
            let mut counts = vec![0usize; q.d()];
            block.iter().for_each(|&s| counts[s] += 1);
            let z = crate::iid::vv_statistic(&counts, q, block_size)?;
            rejecting += usize::from(z.support_violation || z.value > threshold);
            support_violation |= z.support_violation;
        }
        let verdict = AmplifiedVerdict {
            reject: 2 * rejecting >= blocks,
            blocks,
            block_size,
            rejecting_blocks: rejecting,
            base_threshold: threshold,
            support_violation,
        };
        Ok((verdict, short))
    }

    pub fn test(&self, x: &Trajectory) -> Result<TestReport> {
        let d = self.rows.len();
        if x.d() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: x.d(),
            });
        }
        let m = x.len();
        if m < self.plan.m && !self.options.force {
            return Err(Error::TrajectoryTooShort {
                m,
                required: self.plan.m,
            });
        }
        let mut report = TestReport {
            reject: false,
            rejected_at: None,
            gate_failures: Vec::new(),
            substates: Vec::new(),
            m_used: m,
            plan: self.plan.clone(),
            under_powered: m < self.plan.m,
        };

        let visits = visit_counts(x)?;
        report.gate_failures = visit_count_gate(&visits, &self.analysis.pi);
        if !report.gate_failures.is_empty() {
            report.reject = true;
            report.rejected_at = Some(Stage::Gate);
            return Ok(report);
        }

        let nus: Vec<usize> = self.analysis.pi.probs().iter().map(|&p| nu(m, p)).collect();
        let caps: Vec<usize> = if self.options.use_all_transitions {
            visits.counts.clone()
        } else {
            nus.clone()
        };
        let lists = successor_lists(x, &caps);

        let results = lists
            .par_iter()
            .enumerate()
            .map(|(i, sample)| {
                let undersupplied = sample.len() < nus[i];
                if undersupplied || sample.is_empty() {
                    return Ok((
                        SubstateReport {
                            state: i,
                            nu: nus[i],
                            n_used: 0,
                            undersupplied,
                            verdict: None,
                        },
                        true,
                    ));
                }
                let (v, short) = self.run_state(i, sample)?;
                Ok((
                    SubstateReport {
                        state: i,
                        nu: nus[i],
                        n_used: v.blocks * v.block_size,
                        undersupplied: false,
                        verdict: Some(v),
                    },
                    short,
                ))
            })
            .collect::<Result<Vec<_>>>()?;

        for (sub, short) in results {
            report.under_powered |= short;
            report.substates.push(sub);
        }
        if report.substates.iter().any(|s| s.undersupplied) {
            report.reject = true;
            report.rejected_at = Some(Stage::Extraction);
        } else if report.substates.iter().any(SubstateReport::rejects) {
            report.reject = true;
            report.rejected_at = Some(Stage::SubTests);
        }
        Ok(report)
    }
}

/// One-shot test; builds (and calibrates) a tester for this call only.
pub fn identity_test(
    reference: &TransitionMatrix,
    analysis: &ChainAnalysis,
    x: &Trajectory,
    eps: f64,
    delta: f64,
    options: TesterOptions,
) -> Result<TestReport> {
    IdentityTester::new(reference, analysis.clone(), eps, delta, options)?.test(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::sample_trajectory;

    fn traj(s: &[usize], d: usize) -> Trajectory {
        Trajectory::new(s.to_vec(), d).unwrap()
    }

    #[test]
    fn visit_count_examples() {
        assert_eq!(visit_counts(&traj(&[0, 0, 0], 2)).unwrap().counts, vec![2, 0]);
        assert_eq!(visit_counts(&traj(&[0, 1, 0, 1], 2)).unwrap().counts, vec![2, 1]);
        assert!(matches!(
            visit_counts(&traj(&[1], 2)),
            Err(Error::TooShort { m: 1, required: 2 })
        ));
    }

    #[test]
    fn gate_examples() {
        let pi = Distribution::new(vec![0.2, 0.8]).unwrap();
        let v = |c0: usize| VisitVector {
            counts: vec![c0, 100 - c0],
            m: 101,
        };
        assert!(visit_count_gate(&v(20), &pi).is_empty());
        assert!(visit_count_gate(&v(30), &pi).is_empty());
        for bad in [5, 31] {
            let f = visit_count_gate(&v(bad), &pi);
            assert_eq!(f[0].state, 0);
            assert_eq!(f[0].observed, bad);
        }
    }

    #[test]
    fn successor_examples() {
        let x = traj(&[0, 1, 0, 2, 0, 1], 3);
        let s = successor_sample(&x, 0, 2);
        assert_eq!(s.states, vec![1, 2]);
        assert!(!s.undersupplied);
        let s = successor_sample(&traj(&[1, 1, 2], 3), 0, 1);
        assert!(s.states.is_empty() && s.undersupplied);
        let full = successor_sample(&x, 0, 10);
        assert_eq!(full.states, vec![1, 2, 1]);
        assert!(full.undersupplied);
    }

    #[test]
    fn successor_lists_match_single_extraction() {
        let chain = TransitionMatrix::new(vec![vec![0.3, 0.7, 0.0], vec![0.2, 0.2, 0.6], vec![0.5, 0.0, 0.5]]).unwrap();
        let x = sample_trajectory(&chain, &Distribution::uniform(3), 400, RngSeed(3)).unwrap();
        let caps = [10, 1000, 0];
        let lists = successor_lists(&x, &caps);
        for i in 0..3 {
            assert_eq!(lists[i], successor_sample(&x, i, caps[i]).states);
        }
    }

    fn lazy_cycle() -> TransitionMatrix {
        TransitionMatrix::new(vec![vec![0.5, 0.5, 0.0], vec![0.0, 0.5, 0.5], vec![0.5, 0.0, 0.5]]).unwrap()
    }

    fn options() -> TesterOptions {
        TesterOptions {
            constants: Constants::uniform(1.0),
            calibration_trials: 400,
            ..Default::default()
        }
    }

    #[test]
    fn gate_short_circuits() {
        let chain = lazy_cycle();
        let a = ChainAnalysis::compute(&chain).unwrap();
        let tester = IdentityTester::new(&chain, a, 0.4, 0.2, TesterOptions { force: true, ..options() }).unwrap();
        // never visits state 0
        let x = traj(&[1; 200], 3);
        let r = tester.test(&x).unwrap();
        assert!(r.reject);
        assert_eq!(r.rejected_at, Some(Stage::Gate));
        assert!(r.substates.is_empty());
        assert!(r.gate_failures.iter().any(|g| g.state == 0));
    }

    #[test]
    fn short_trajectory_is_an_error_unless_forced() {
        let chain = lazy_cycle();
        let a = ChainAnalysis::compute(&chain).unwrap();
        let tester = IdentityTester::new(&chain, a.clone(), 0.4, 0.2, options()).unwrap();
        let x = traj(&[0, 1, 2, 0], 3);
        let need = tester.required_length();
        assert!(matches!(tester.test(&x), Err(Error::TrajectoryTooShort { m: 4, required }) if required == need));
        let forced = IdentityTester::new(&chain, a, 0.4, 0.2, TesterOptions { force: true, ..options() }).unwrap();
        assert!(forced.test(&x).unwrap().under_powered);
    }

    #[test]
    fn rejects_dimension_mismatch_and_non_ergodic_reference() {
        let chain = lazy_cycle();
        let a = ChainAnalysis::compute(&chain).unwrap();
        let tester = IdentityTester::new(&chain, a.clone(), 0.4, 0.2, options()).unwrap();
        assert!(matches!(
            tester.test(&traj(&[0, 1], 2)),
            Err(Error::DimensionMismatch { .. })
        ));
        let periodic = TransitionMatrix::new(vec![vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0]]).unwrap();
        assert!(matches!(
            IdentityTester::new(&periodic, a, 0.4, 0.2, options()),
            Err(Error::NotErgodic(_))
        ));
    }

    #[test]
    fn accepts_null_and_rejects_far_alternative() {
        let chain = lazy_cycle();
        let a = ChainAnalysis::compute(&chain).unwrap();
        let tester = IdentityTester::new(&chain, a, 0.4, 0.2, options()).unwrap();
        let m = tester.required_length();
        let null = sample_trajectory(&chain, &Distribution::uniform(3), m, RngSeed(8)).unwrap();
        let r = tester.test(&null).unwrap();
        assert!(!r.reject, "{r:?}");
        assert_eq!(r.verdict(), 0);
        assert!(!r.under_powered);
        for s in &r.substates {
            assert!(s.n_used <= s.nu);
        }
        let alt = chain.with_row(0, &Distribution::new(vec![0.5, 0.0, 0.5]).unwrap()).unwrap();
        let x = sample_trajectory(&alt, &Distribution::uniform(3), m, RngSeed(8)).unwrap();
        assert!(tester.test(&x).unwrap().reject);
    }

    #[test]
    fn report_is_deterministic_and_serializes_verdict_as_int() {
        let chain = lazy_cycle();
        let a = ChainAnalysis::compute(&chain).unwrap();
        let x = sample_trajectory(&chain, &Distribution::uniform(3), 3000, RngSeed(1)).unwrap();
        let opts = TesterOptions { force: true, ..options() };
        let r1 = identity_test(&chain, &a, &x, 0.4, 0.2, opts.clone()).unwrap();
        let r2 = identity_test(&chain, &a, &x, 0.4, 0.2, opts).unwrap();
        assert_eq!(r1, r2);
        let json = serde_json::to_value(&r1).unwrap();
        assert!(json["verdict"].is_u64());
    }

    #[test]
    fn use_all_transitions_feeds_every_successor() {
        let chain = lazy_cycle();
        let a = ChainAnalysis::compute(&chain).unwrap();
        let opts = TesterOptions {
            use_all_transitions: true,
            ..options()
        };
        let tester = IdentityTester::new(&chain, a, 0.4, 0.2, opts).unwrap();
        let m = tester.required_length();
        let x = sample_trajectory(&chain, &Distribution::uniform(3), m, RngSeed(2)).unwrap();
        let r = tester.test(&x).unwrap();
        if r.rejected_at != Some(Stage::Gate) {
            let v = visit_counts(&x).unwrap();
            for s in &r.substates {
                let used = s.verdict.unwrap();
                assert!(used.blocks * used.block_size <= v.counts[s.state]);
                assert!(used.blocks * used.block_size > v.counts[s.state] - used.blocks);
            }
        }
    }
}
