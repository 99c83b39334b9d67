//! Identity testing for finite Markov chains from one trajectory.
//!
//! Given a known reference kernel and a single observed path `X_1..X_m` of
//! an unknown chain, decide whether the unknown chain is the reference or is
//! `eps`-far from it in the half-max-row-l1 norm. The tester checks visit
//! counts against the reference's stationary distribution, extracts iid
//! successor samples for every state, and runs amplified iid identity tests
//! row by row.
//!
//! Around the tester sit the analyses its sample size depends on (stationary
//! distribution, exact mixing time, spectral and pseudo-spectral gaps,
//! the pi-weighted 2/3-norm), the hard chain families used to probe it, exact
//! enumeration oracles for tiny instances, and a seeded Monte Carlo harness.
//!
//! ```
//! use markov_identity::prelude::*;
//!
//! let reference = TransitionMatrix::new(vec![
//!     vec![0.5, 0.5, 0.0],
//!     vec![0.0, 0.5, 0.5],
//!     vec![0.5, 0.0, 0.5],
//! ])?;
//! let analysis = ChainAnalysis::compute(&reference)?;
//! let options = TesterOptions { calibration_trials: 500, ..Default::default() };
//! let tester = IdentityTester::new(&reference, analysis, 0.4, 0.2, options)?;
//! let x = sample_trajectory(&reference, &Distribution::uniform(3), tester.required_length(), RngSeed(1))?;
//! let report = tester.test(&x)?;
//! assert_eq!(report.m_used, x.len());
//! # Ok::<(), markov_identity::Error>(())
//! ```

pub mod analysis;
pub mod chain;
pub mod cli;
pub mod complexity;
pub mod distance;
pub mod error;
pub mod experiment;
pub mod families;
pub mod iid;
pub mod io;
pub mod oracle;
pub mod tester;

pub use error::{ErgodicityFailure, Error, Result};

pub mod prelude {
    pub use crate::analysis::{
        absolute_spectral_gap, check_ergodic, exact_mixing_time, mixing_time_bounds, pseudo_spectral_gap,
        stationary_distribution, two_thirds_norm, two_thirds_pi_norm, AnalysisOptions, ChainAnalysis, MixingBracket,
    };
    pub use crate::chain::{
        sample_trajectory, time_reversal, validate_chain, Distribution, RngSeed, Trajectory, TransitionMatrix,
    };
    pub use crate::complexity::{required_trajectory_length, sample_complexity, Constants, Mode, SampleComplexityPlan};
    pub use crate::distance::{hellinger_sq, kazakos_dist, l1_dist, matrix_tv_norm, max_row_l1, tv_dist};
    pub use crate::error::{Error, Result};
    pub use crate::families::{
        absorbing_row, build_g_chain, build_h_chain, corrupt_row_toward, g_initial, h_initial, inner_clique_chain,
        perturbed_uniform, visit_count_pmf, GFamilySpec, HFamilySpec,
    };
    pub use crate::iid::{amplified_test, iid_identity_test, iid_sample_size, vv_statistic, IidTestConfig};
    pub use crate::tester::{identity_test, IdentityTester, TestReport, TesterOptions};
}
