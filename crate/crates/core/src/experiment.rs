//! Monte Carlo harness: error-rate tables and constant calibration.
//!
//! Seeding contract. Trial `t` at grid index `k` draws its trajectory from
//! `seed.derive(&[k, t, a])`, where `a = 0` for the reference and `a = j + 1`
//! for alternative `j`. Thresholds are calibrated from
//! `seed.derive(&[THRESHOLD_STREAM])`. Verdicts are collected in trial
//! order and then counted, so the output does not depend on the thread count.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::ChainAnalysis;
use crate::chain::{sample_trajectory, Distribution, RngSeed, TransitionMatrix};
use crate::complexity::{Constants, Mode};
use crate::error::{Error, Result};
use crate::families::{
    absorbing_row, build_g_chain, build_h_chain, build_h_chain_relaxed, corrupt_row_toward, g_initial, h_initial,
    GFamilySpec, HFamilySpec,
};
use crate::io::ChainFile;
use crate::tester::{IdentityTester, Stage, TesterOptions};

pub const THRESHOLD_STREAM: u64 = u64::MAX;

fn default_h_eps() -> f64 {
    0.125
}

/// Where a chain comes from. Initial distributions default to the family's
/// own (`p` for `G`, uniform on the inner clique for `H`), to the file's
/// `initial` field, or to uniform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChainSource {
    Path {
        path: PathBuf,
    },
    Inline {
        matrix: TransitionMatrix,
        #[serde(default)]
        initial: Option<Distribution>,
    },
    FamilyG {
        d: usize,
        p_star: f64,
        /// Defaults to uniform.
        #[serde(default)]
        eta: Option<Distribution>,
    },
    FamilyH {
        d: usize,
        eta: f64,
        /// Defaults to all zeros.
        #[serde(default)]
        tau: Option<Vec<bool>>,
        #[serde(default = "default_h_eps")]
        eps: f64,
        /// Allow parameters outside the lower-bound regime.
        #[serde(default)]
        relaxed: bool,
    },
    /// Row `row` of `base` shifted by `l1` toward state `toward`.
    CorruptRow {
        base: Box<ChainSource>,
        row: usize,
        toward: usize,
        l1: f64,
    },
    /// Row `row` of `base` made absorbing.
    Absorbing {
        base: Box<ChainSource>,
        row: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedChain {
    pub matrix: TransitionMatrix,
    pub initial: Distribution,
}

impl ChainSource {
    pub fn resolve(&self, base_dir: &Path) -> Result<ResolvedChain> {
        match self {
            Self::Path { path } => {
                let f = ChainFile::read(&base_dir.join(path))?;
                let d = f.matrix.d();
                Ok(ResolvedChain {
                    initial: f.initial.unwrap_or_else(|| Distribution::uniform(d)),
                    matrix: f.matrix,
                })
            }
            Self::Inline { matrix, initial } => {
                let f = ChainFile::new(matrix.clone(), initial.clone())?;
                Ok(ResolvedChain {
                    initial: f.initial.unwrap_or_else(|| Distribution::uniform(matrix.d())),
                    matrix: f.matrix,
                })
            }
            Self::FamilyG { d, p_star, eta } => {
                let eta = eta.clone().unwrap_or_else(|| Distribution::uniform(*d));
                let spec = GFamilySpec::new(*d, *p_star, eta)?;
                Ok(ResolvedChain {
                    matrix: build_g_chain(&spec)?,
                    initial: g_initial(*d, *p_star),
                })
            }
            Self::FamilyH {
                d,
                eta,
                tau,
                eps,
                relaxed,
            } => {
                let spec = HFamilySpec {
                    d: *d,
                    eta: *eta,
                    tau: tau.clone().unwrap_or_else(|| vec![false; d / 3]),
                    eps: *eps,
                };
                let matrix = if *relaxed {
                    build_h_chain_relaxed(&spec)?
                } else {
                    build_h_chain(&spec)?
                };
                Ok(ResolvedChain {
                    matrix,
                    initial: h_initial(*d),
                })
            }
            Self::CorruptRow { base, row, toward, l1 } => {
                let b = base.resolve(base_dir)?;
                Ok(ResolvedChain {
                    matrix: corrupt_row_toward(&b.matrix, *row, *toward, *l1)?,
                    initial: b.initial,
                })
            }
            Self::Absorbing { base, row } => {
                let b = base.resolve(base_dir)?;
                Ok(ResolvedChain {
                    matrix: absorbing_row(&b.matrix, *row)?,
                    initial: b.initial,
                })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alternative {
    pub name: String,
    pub source: ChainSource,
}

/// A trajectory length, fixed or relative to the required length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LengthSpec {
    Fixed(usize),
    Relative { required_times: f64 },
}

fn default_true() -> bool {
    true
}

fn default_base_delta() -> f64 {
    1.0 / 3.0
}

fn default_calibration_trials() -> usize {
    crate::iid::DEFAULT_CALIBRATION_TRIALS
}

fn default_mode() -> Mode {
    Mode::WorstCase
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub reference: ChainSource,
    #[serde(default)]
    pub alternatives: Vec<Alternative>,
    pub m_grid: Vec<LengthSpec>,
    pub trials: usize,
    pub eps: f64,
    pub delta: f64,
    pub seed: RngSeed,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    /// Defaults to the shipped constants.
    #[serde(default)]
    pub constants: Option<Constants>,
    /// Run grid points below the required length.
    #[serde(default = "default_true")]
    pub force: bool,
    #[serde(default)]
    pub use_all_transitions: bool,
    #[serde(default = "default_base_delta")]
    pub base_delta: f64,
    #[serde(default = "default_calibration_trials")]
    pub calibration_trials: usize,
    /// Record wall-clock times. Off by default so output is reproducible.
    #[serde(default)]
    pub timing: bool,
    /// Directory that relative chain paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ExperimentSpec {
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self> {
        let mut spec: Self = serde_json::from_str(text)?;
        spec.base_dir = base_dir.to_path_buf();
        Ok(spec)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_json(&std::fs::read_to_string(path)?, &dir)
    }

    pub fn tester_options(&self) -> TesterOptions {
        TesterOptions {
            mode: self.mode,
            seed: self.seed.derive(&[THRESHOLD_STREAM]),
            force: self.force,
            use_all_transitions: self.use_all_transitions,
            constants: self.constants.unwrap_or_else(Constants::shipped),
            base_delta: self.base_delta,
            calibration_trials: self.calibration_trials,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::ParameterOutOfRange("trials must be >= 1".into()));
        }
        if self.m_grid.is_empty() {
            return Err(Error::ParameterOutOfRange("m_grid must not be empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub m: usize,
    pub trials: usize,
    pub null_reject_rate: f64,
    /// Empty when the spec has no alternatives.
    pub alt_name: String,
    pub alt_accept_rate: Option<f64>,
    /// Fraction of this row's alternative trials (or null trials, without
    /// alternatives) rejected by the visit-count gate.
    pub gate_reject_fraction: f64,
    pub wall_time_ms: u64,
}

struct Outcome {
    reject: bool,
    gate: bool,
}

fn run_trials(
    tester: &IdentityTester,
    chain: &ResolvedChain,
    m: usize,
    trials: usize,
    seed: RngSeed,
    grid_index: usize,
    stream: u64,
) -> Result<Vec<Outcome>> {
    (0..trials)
        .into_par_iter()
        .map(|t| {
            let x = sample_trajectory(
                &chain.matrix,
                &chain.initial,
                m,
                seed.derive(&[grid_index as u64, t as u64, stream]),
            )?;
            let r = tester.test(&x)?;
            Ok(Outcome {
                reject: r.reject,
                gate: r.rejected_at == Some(Stage::Gate),
            })
        })
        .collect()
}

fn rate(n: usize, total: usize) -> f64 {
    n as f64 / total as f64
}

/// Everything needed to run a spec, prepared once.
pub struct PreparedExperiment {
    pub reference: ResolvedChain,
    pub alternatives: Vec<(String, ResolvedChain)>,
    pub tester: IdentityTester,
    pub lengths: Vec<usize>,
}

pub fn prepare_experiment(spec: &ExperimentSpec) -> Result<PreparedExperiment> {
    spec.validate()?;
    let reference = spec.reference.resolve(&spec.base_dir)?;
    let alternatives = spec
        .alternatives
        .iter()
        .map(|a| Ok((a.name.clone(), a.source.resolve(&spec.base_dir)?)))
        .collect::<Result<Vec<_>>>()?;
    for (name, alt) in &alternatives {
        if alt.matrix.d() != reference.matrix.d() {
            return Err(Error::InvalidSpec(format!(
                "alternative {name} has {} states, reference has {}",
                alt.matrix.d(),
                reference.matrix.d()
            )));
        }
    }
    let analysis = ChainAnalysis::compute(&reference.matrix)?;
    let tester = IdentityTester::new(&reference.matrix, analysis, spec.eps, spec.delta, spec.tester_options())?;
    let required = tester.required_length();
    let lengths: Vec<usize> = spec
        .m_grid
        .iter()
        .map(|l| match *l {
            LengthSpec::Fixed(m) => m,
            LengthSpec::Relative { required_times } => ((required as f64 * required_times).ceil() as usize).max(2),
        })
        .collect();
    if lengths.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidSpec(format!("m_grid {lengths:?} must be strictly ascending")));
    }
    Ok(PreparedExperiment {
        reference,
        alternatives,
        tester,
        lengths,
    })
}

fn run_prepared(spec: &ExperimentSpec, prep: &PreparedExperiment) -> Result<Vec<ExperimentRow>> {
    let mut rows = Vec::new();
    for (k, &m) in prep.lengths.iter().enumerate() {
        let start = Instant::now();
        let null = run_trials(&prep.tester, &prep.reference, m, spec.trials, spec.seed, k, 0)?;
        let null_rate = rate(null.iter().filter(|o| o.reject).count(), spec.trials);
        let ms = |s: Instant| if spec.timing { s.elapsed().as_millis() as u64 } else { 0 };
        if prep.alternatives.is_empty() {
            rows.push(ExperimentRow {
                m,
                trials: spec.trials,
                null_reject_rate: null_rate,
                alt_name: String::new(),
                alt_accept_rate: None,
                gate_reject_fraction: rate(null.iter().filter(|o| o.gate).count(), spec.trials),
                wall_time_ms: ms(start),
            });
            continue;
        }
        for (j, (name, alt)) in prep.alternatives.iter().enumerate() {
            let out = run_trials(&prep.tester, alt, m, spec.trials, spec.seed, k, j as u64 + 1)?;
            rows.push(ExperimentRow {
                m,
                trials: spec.trials,
                null_reject_rate: null_rate,
                alt_name: name.clone(),
                alt_accept_rate: Some(rate(out.iter().filter(|o| !o.reject).count(), spec.trials)),
                gate_reject_fraction: rate(out.iter().filter(|o| o.gate).count(), spec.trials),
                wall_time_ms: ms(start),
            });
        }
    }
    Ok(rows)
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match threads {
        None => f(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::ParameterOutOfRange(format!("thread pool: {e}")))?
            .install(f),
    }
}

/// Runs the spec; `threads = None` uses the global pool.
pub fn run_experiment(spec: &ExperimentSpec, threads: Option<usize>) -> Result<Vec<ExperimentRow>> {
    with_threads(threads, || run_prepared(spec, &prepare_experiment(spec)?))
}

pub const CSV_HEADER: [&str; 7] = [
    "m",
    "trials",
    "null_reject_rate",
    "alt_name",
    "alt_accept_rate",
    "gate_reject_fraction",
    "wall_time_ms",
];

pub fn write_csv<W: std::io::Write>(rows: &[ExperimentRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.m.to_string(),
            r.trials.to_string(),
            r.null_reject_rate.to_string(),
            r.alt_name.clone(),
            r.alt_accept_rate.map(|v| v.to_string()).unwrap_or_default(),
            r.gate_reject_fraction.to_string(),
            r.wall_time_ms.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn to_csv_string(rows: &[ExperimentRow]) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

/// One reference with its adversaries, for calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteEntry {
    pub reference: ChainSource,
    pub alternatives: Vec<Alternative>,
}

fn default_modes() -> Vec<Mode> {
    vec![Mode::WorstCase, Mode::Instance]
}

fn default_min_multiplier() -> f64 {
    1.0 / 64.0
}

fn default_max_multiplier() -> f64 {
    64.0
}

fn default_steps() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSpec {
    pub suite: Vec<SuiteEntry>,
    pub eps: f64,
    pub delta: f64,
    pub trials: usize,
    pub seed: RngSeed,
    #[serde(default = "default_modes")]
    pub modes: Vec<Mode>,
    #[serde(default = "default_min_multiplier")]
    pub min_multiplier: f64,
    #[serde(default = "default_max_multiplier")]
    pub max_multiplier: f64,
    /// Bisection steps in log space.
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_base_delta")]
    pub base_delta: f64,
    #[serde(default = "default_calibration_trials")]
    pub calibration_trials: usize,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl CalibrationSpec {
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self> {
        let mut spec: Self = serde_json::from_str(text)?;
        spec.base_dir = base_dir.to_path_buf();
        Ok(spec)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_json(&std::fs::read_to_string(path)?, &dir)
    }
}

/// Worst error rates of the suite at one multiplier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuiteRates {
    pub multiplier: f64,
    pub max_null_reject_rate: f64,
    pub max_alt_accept_rate: f64,
}

impl SuiteRates {
    fn passes(&self, delta: f64) -> bool {
        self.max_null_reject_rate <= delta && self.max_alt_accept_rate <= delta
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeCalibration {
    pub mode: Mode,
    /// Smallest passing multiplier found.
    pub multiplier: f64,
    /// Largest multiplier seen to fail (the bracket's lower end).
    pub failing_below: Option<f64>,
    pub rates: SuiteRates,
    /// Every evaluated multiplier, in evaluation order.
    pub history: Vec<SuiteRates>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub version: u32,
    pub constants: Constants,
    pub delta: f64,
    pub eps: f64,
    pub trials: usize,
    /// `3 sqrt(delta (1 - delta) / trials)`: the binomial band on each rate.
    pub rate_band: f64,
    pub modes: Vec<ModeCalibration>,
}

pub const CONSTANTS_VERSION: u32 = 1;

/// Suite error rates with every constant set to `multiplier`.
pub fn evaluate_multiplier(spec: &CalibrationSpec, mode: Mode, multiplier: f64) -> Result<SuiteRates> {
    let mut rates = SuiteRates {
        multiplier,
        max_null_reject_rate: 0.0,
        max_alt_accept_rate: 0.0,
    };
    for (i, entry) in spec.suite.iter().enumerate() {
        let exp = ExperimentSpec {
            reference: entry.reference.clone(),
            alternatives: entry.alternatives.clone(),
            m_grid: vec![LengthSpec::Relative { required_times: 1.0 }],
            trials: spec.trials,
            eps: spec.eps,
            delta: spec.delta,
            seed: spec.seed.derive(&[i as u64]),
            mode,
            constants: Some(Constants::uniform(multiplier)),
            force: false,
            use_all_transitions: false,
            base_delta: spec.base_delta,
            calibration_trials: spec.calibration_trials,
            timing: false,
            base_dir: spec.base_dir.clone(),
        };
        for row in run_prepared(&exp, &prepare_experiment(&exp)?)? {
            rates.max_null_reject_rate = rates.max_null_reject_rate.max(row.null_reject_rate);
            rates.max_alt_accept_rate = rates.max_alt_accept_rate.max(row.alt_accept_rate.unwrap_or(0.0));
        }
    }
    Ok(rates)
}

fn calibrate_mode(spec: &CalibrationSpec, mode: Mode) -> Result<ModeCalibration> {
    let mut history = Vec::new();
    let top = evaluate_multiplier(spec, mode, spec.max_multiplier)?;
    history.push(top);
    if !top.passes(spec.delta) {
        return Err(Error::CalibrationFailed {
            max_multiplier: spec.max_multiplier,
        });
    }
    let (mut lo, mut hi) = (spec.min_multiplier.ln(), spec.max_multiplier.ln());
    let mut best = top;
    let mut failing = None;
    let bottom = evaluate_multiplier(spec, mode, spec.min_multiplier)?;
    history.push(bottom);
    if bottom.passes(spec.delta) {
        best = bottom;
    } else {
        failing = Some(spec.min_multiplier);
        for _ in 0..spec.steps {
            let mid = 0.5 * (lo + hi);
            let r = evaluate_multiplier(spec, mode, mid.exp())?;
            history.push(r);
            if r.passes(spec.delta) {
                hi = mid;
                best = r;
            } else {
                lo = mid;
                failing = Some(mid.exp());
            }
        }
    }
    Ok(ModeCalibration {
        mode,
        multiplier: best.multiplier,
        failing_below: failing,
        rates: best,
        history,
    })
}

/// Bisects, per mode, for the smallest multiplier of all constants under
/// which every suite entry has null rejection and alternative acceptance
/// rates at most `delta`. The worst-case multiplier becomes `c_iid`, the
/// instance multiplier `c_io`, and `c_m` takes the larger of the two.
pub fn calibrate_constants(spec: &CalibrationSpec, threads: Option<usize>) -> Result<CalibrationReport> {
    if spec.suite.is_empty() || spec.modes.is_empty() {
        return Err(Error::ParameterOutOfRange("calibration needs a suite and at least one mode".into()));
    }
    if !(spec.min_multiplier > 0.0 && spec.min_multiplier < spec.max_multiplier) {
        return Err(Error::ParameterOutOfRange("need 0 < min_multiplier < max_multiplier".into()));
    }
    let modes = with_threads(threads, || {
        spec.modes.iter().map(|&m| calibrate_mode(spec, m)).collect::<Result<Vec<_>>>()
    })?;
    let pick = |mode: Mode| modes.iter().find(|c| c.mode == mode).map(|c| c.multiplier);
    let worst = pick(Mode::WorstCase);
    let inst = pick(Mode::Instance);
    let either = worst.or(inst).expect("at least one mode");
    let constants = Constants {
        c_m: worst.unwrap_or(either).max(inst.unwrap_or(either)),
        c_iid: worst.unwrap_or(either),
        c_io: inst.unwrap_or(either),
    };
    Ok(CalibrationReport {
        version: CONSTANTS_VERSION,
        constants,
        delta: spec.delta,
        eps: spec.eps,
        trials: spec.trials,
        rate_band: 3.0 * (spec.delta * (1.0 - spec.delta) / spec.trials as f64).sqrt(),
        modes,
    })
}
