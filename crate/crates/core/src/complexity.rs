//! Trajectory-length calculators.
//!
//! The operational length is what the tester actually needs: long enough
//! for the visit-count gate to pass under the null (mixing branch) and for
//! every state to supply `n_iid(i)` successors through `nu(i) = ceil((m-1) pi_i / 2)`
//! (budget branch). The textbook formula with its own log factors is kept
//! alongside in [`TheoremBounds`] for comparison.

use serde::{Deserialize, Serialize};

use crate::analysis::ChainAnalysis;
use crate::error::{Error, Result};
use crate::iid::{amplification_blocks, base_sample_size};

/// Calibrated constants shipped with the crate.
const SHIPPED_CONSTANTS: &str = include_str!("../data/constants.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "worst", alias = "worst_case")]
    WorstCase,
    #[serde(rename = "instance")]
    Instance,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "worst" | "worst_case" | "worst-case" => Ok(Self::WorstCase),
            "instance" => Ok(Self::Instance),
            other => Err(Error::Parse(format!("unknown mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::WorstCase => "worst",
            Self::Instance => "instance",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    /// Mixing-branch constant.
    pub c_m: f64,
    /// Base-tester constant, worst-case mode.
    pub c_iid: f64,
    /// Base-tester constant, instance mode.
    pub c_io: f64,
}

#[derive(Debug, Clone, Deserialize)]
struct ConstantsFile {
    #[allow(dead_code)]
    version: u32,
    constants: Constants,
}

impl Constants {
    pub fn uniform(c: f64) -> Self {
        Self {
            c_m: c,
            c_iid: c,
            c_io: c,
        }
    }

    /// Reads a versioned constants file, or a bare `{c_m, c_iid, c_io}` record.
    pub fn from_json(text: &str) -> Result<Self> {
        let c = match serde_json::from_str::<ConstantsFile>(text) {
            Ok(f) => f.constants,
            Err(_) => serde_json::from_str::<Constants>(text)?,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn shipped() -> Self {
        Self::from_json(SHIPPED_CONSTANTS).expect("shipped constants file is valid")
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("c_m", self.c_m), ("c_iid", self.c_iid), ("c_io", self.c_io)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::ParameterOutOfRange(format!("{name} = {v} must be positive")));
            }
        }
        Ok(())
    }

    pub fn iid_constant(&self, mode: Mode) -> f64 {
        match mode {
            Mode::WorstCase => self.c_iid,
            Mode::Instance => self.c_io,
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            c_m: self.c_m * factor,
            c_iid: self.c_iid * factor,
            c_io: self.c_io * factor,
        }
    }
}

impl Default for Constants {
    fn default() -> Self {
        Self::shipped()
    }
}

fn check_params(eps: f64, delta: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::ParameterOutOfRange(format!(
            "eps = {eps} must lie in (0, 1) so that the row budget 2 eps stays below 2"
        )));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::ParameterOutOfRange(format!("delta = {delta} must lie in (0, 1)")));
    }
    Ok(())
}

/// Per-state sizing of the sub-testers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StateBudget {
    pub blocks: usize,
    pub block_size: usize,
}

impl StateBudget {
    pub fn total(&self) -> usize {
        self.blocks * self.block_size
    }
}

/// Sub-tester sizing for every state: failure budget `delta / (3d)`, row
/// l1 budget `2 eps`, complexity measure `sqrt(d)` or `||M(i, .)||_{2/3}`.
pub fn state_budgets(
    analysis: &ChainAnalysis,
    eps: f64,
    delta: f64,
    mode: Mode,
    constants: &Constants,
) -> Result<Vec<StateBudget>> {
    check_params(eps, delta)?;
    let d = analysis.d;
    let blocks = amplification_blocks(delta / (3.0 * d as f64))?;
    let c = constants.iid_constant(mode);
    (0..d)
        .map(|i| {
            let measure = match mode {
                Mode::WorstCase => (d as f64).sqrt(),
                Mode::Instance => analysis.row_two_thirds_norms[i],
            };
            Ok(StateBudget {
                blocks,
                block_size: base_sample_size(measure, 2.0 * eps, c)?,
            })
        })
        .collect()
}

/// Smallest `m` with `ceil((m-1) pi / 2) >= n`.
pub fn length_for_successors(n: usize, pi: f64) -> usize {
    let mut m = 1 + (2.0 * n as f64 / pi).ceil() as usize;
    // guard against rounding in the division
    while m > 2 && nu(m - 1, pi) >= n {
        m -= 1;
    }
    while nu(m, pi) < n {
        m += 1;
    }
    m
}

/// `nu = ceil((m-1) pi / 2)`.
pub fn nu(m: usize, pi: f64) -> usize {
    (0.5 * m.saturating_sub(1) as f64 * pi).ceil() as usize
}

/// The literal theorem expressions, with `C_M` as the sole constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TheoremBounds {
    /// `(C_M / pi*) max{ sqrt(d)/eps^2 ln(d/(delta eps)), t_mix ln(d/(delta pi*)) }`.
    pub worst_case: f64,
    /// Same with `sqrt(d)/pi*` replaced by the pi-weighted 2/3-norm.
    pub instance: f64,
}

pub fn theorem_bounds(analysis: &ChainAnalysis, eps: f64, delta: f64, constants: &Constants) -> Result<TheoremBounds> {
    check_params(eps, delta)?;
    let d = analysis.d as f64;
    let pi = analysis.pi_min;
    let log_eps = (d / (delta * eps)).ln();
    let mixing = analysis.t_mix_exact as f64 / pi * (d / (delta * pi)).ln();
    let worst = d.sqrt() / (pi * eps * eps) * log_eps;
    let inst = analysis.two_thirds_pi_norm / (eps * eps) * log_eps;
    Ok(TheoremBounds {
        worst_case: constants.c_m * worst.max(mixing),
        instance: constants.c_m * inst.max(mixing),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleComplexityPlan {
    pub mode: Mode,
    pub eps: f64,
    pub delta: f64,
    pub constants: Constants,
    /// `ceil(C_M (t_mix / pi*) ln(d / (delta pi*)))`.
    pub mixing_branch: usize,
    pub worst_budget_branch: usize,
    pub instance_budget_branch: usize,
    pub m_worst_case: usize,
    pub m_instance: usize,
    /// Length for `mode`.
    pub m: usize,
    pub theorem: TheoremBounds,
}

impl SampleComplexityPlan {
    pub fn mixing_dominates(&self) -> bool {
        let budget = match self.mode {
            Mode::WorstCase => self.worst_budget_branch,
            Mode::Instance => self.instance_budget_branch,
        };
        self.mixing_branch >= budget
    }
}

fn budget_branch(analysis: &ChainAnalysis, budgets: &[StateBudget]) -> usize {
    budgets
        .iter()
        .zip(analysis.pi.probs())
        .map(|(b, &p)| length_for_successors(b.total(), p))
        .max()
        .unwrap_or(2)
}

fn mixing_branch(analysis: &ChainAnalysis, delta: f64, constants: &Constants) -> usize {
    let pi = analysis.pi_min;
    let d = analysis.d as f64;
    let t = analysis.t_mix_exact.max(1) as f64;
    ((constants.c_m * t / pi * (d / (delta * pi)).ln()).ceil() as usize).max(2)
}

pub fn sample_complexity(
    analysis: &ChainAnalysis,
    eps: f64,
    delta: f64,
    mode: Mode,
    constants: &Constants,
) -> Result<SampleComplexityPlan> {
    check_params(eps, delta)?;
    constants.validate()?;
    let mixing = mixing_branch(analysis, delta, constants);
    let worst = budget_branch(analysis, &state_budgets(analysis, eps, delta, Mode::WorstCase, constants)?);
    let inst = budget_branch(analysis, &state_budgets(analysis, eps, delta, Mode::Instance, constants)?);
    let m_worst_case = mixing.max(worst);
    let m_instance = mixing.max(inst);
    Ok(SampleComplexityPlan {
        mode,
        eps,
        delta,
        constants: *constants,
        mixing_branch: mixing,
        worst_budget_branch: worst,
        instance_budget_branch: inst,
        m_worst_case,
        m_instance,
        m: match mode {
            Mode::WorstCase => m_worst_case,
            Mode::Instance => m_instance,
        },
        theorem: theorem_bounds(analysis, eps, delta, constants)?,
    })
}

/// Minimum trajectory length accepted by the tester without `force`.
pub fn required_trajectory_length(
    analysis: &ChainAnalysis,
    eps: f64,
    delta: f64,
    mode: Mode,
    constants: &Constants,
) -> Result<usize> {
    Ok(sample_complexity(analysis, eps, delta, mode, constants)?.m)
}
