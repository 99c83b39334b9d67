//! The `mcid` command line.
//!
//! Exit codes: 0 for success (and for an accepted trajectory), 1 when `test`
//! rejects, 2 for usage, input or numerical errors.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::analysis::{mixing_time_bounds, ChainAnalysis};
use crate::chain::{sample_trajectory, Distribution, RngSeed};
use crate::complexity::{sample_complexity, Constants, Mode};
use crate::error::{Error, Result};
use crate::experiment::{calibrate_constants, run_experiment, write_csv, CalibrationSpec, ExperimentSpec};
use crate::families::{build_g_chain, build_h_chain, build_h_chain_relaxed, g_initial, h_initial, GFamilySpec, HFamilySpec};
use crate::io::{read_trajectory, write_trajectory, ChainFile};
use crate::tester::{IdentityTester, TesterOptions};

#[derive(Debug, Parser)]
#[command(name = "mcid", version, about = "Identity testing for Markov chains from a single trajectory")]
pub struct Cli {
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Machine-readable output.
    #[arg(long, global = true)]
    pub json: bool,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Stationary distribution, mixing time, gaps and trajectory-length plan.
    Analyze(AnalyzeArgs),
    /// Test a trajectory against a reference chain.
    Test(TestArgs),
    /// Sample a trajectory.
    Simulate(SimulateArgs),
    /// Emit a chain from one of the built-in families.
    Family {
        #[command(subcommand)]
        family: FamilyCommand,
    },
    /// Run a Monte Carlo experiment and write CSV.
    Experiment(ExperimentArgs),
    /// Calibrate the sample-size constants.
    Calibrate(CalibrateArgs),
}

#[derive(Debug, Args)]
pub struct Budget {
    #[arg(long, default_value_t = 0.25)]
    pub eps: f64,
    #[arg(long, default_value_t = 0.1)]
    pub delta: f64,
    /// `worst` or `instance`.
    #[arg(long, default_value = "worst")]
    pub mode: Mode,
    /// Constants file (defaults to the shipped calibration).
    #[arg(long)]
    pub constants: Option<PathBuf>,
}

impl Budget {
    fn constants(&self) -> Result<Constants> {
        match &self.constants {
            Some(p) => Constants::from_json(&std::fs::read_to_string(p)?),
            None => Ok(Constants::shipped()),
        }
    }
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub chain: PathBuf,
    #[command(flatten)]
    pub budget: Budget,
}

#[derive(Debug, Args)]
pub struct TestArgs {
    #[arg(long)]
    pub reference: PathBuf,
    #[arg(long)]
    pub trajectory: PathBuf,
    #[command(flatten)]
    pub budget: Budget,
    /// Test trajectories shorter than the required length.
    #[arg(long)]
    pub force: bool,
    /// Feed every observed transition to the per-state testers.
    #[arg(long)]
    pub use_all_transitions: bool,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub chain: PathBuf,
    #[arg(long)]
    pub m: usize,
    /// Initial distribution as JSON array; defaults to the chain file's, then uniform.
    #[arg(long)]
    pub initial: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum FamilyCommand {
    /// `d + 1` states with a rarely visited special state.
    G {
        #[arg(long)]
        d: usize,
        #[arg(long)]
        p_star: f64,
        /// JSON array with the special state's row.
        #[arg(long, conflicts_with = "uniform")]
        eta_file: Option<PathBuf>,
        #[arg(long)]
        uniform: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Inner clique with outer rim.
    H {
        #[arg(long)]
        d: usize,
        #[arg(long)]
        eta: f64,
        /// One 0/1 character per inner state; defaults to all zeros.
        #[arg(long)]
        tau: Option<String>,
        #[arg(long, default_value_t = 0.125)]
        eps: f64,
        /// Accept parameters outside the lower-bound regime.
        #[arg(long)]
        relaxed: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(long)]
    pub spec: PathBuf,
    /// CSV destination (defaults to stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub spec: PathBuf,
    /// Where to write the versioned constants file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_tau(bits: &str) -> Result<Vec<bool>> {
    bits.chars()
        .filter(|c| !matches!(c, ',' | ' '))
        .map(|c| match c {
            '0' => Ok(false),
            '1' => Ok(true),
            other => Err(Error::Parse(format!("tau bit {other:?} is not 0 or 1"))),
        })
        .collect()
}

fn emit(out: &mut dyn Write, path: Option<&PathBuf>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => out.write_all(text.as_bytes())?,
    }
    Ok(())
}

fn analyze(cli: &Cli, a: &AnalyzeArgs, out: &mut dyn Write) -> Result<i32> {
    let f = ChainFile::read(&a.chain)?;
    let analysis = ChainAnalysis::compute(&f.matrix)?;
    let bracket = mixing_time_bounds(&analysis).ok();
    let plan = sample_complexity(&analysis, a.budget.eps, a.budget.delta, a.budget.mode, &a.budget.constants()?)?;
    if cli.json {
        let report = json!({ "analysis": analysis, "mixing_bracket": bracket, "plan": plan });
        writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
        return Ok(0);
    }
    writeln!(out, "states        {}", analysis.d)?;
    writeln!(out, "pi_min        {:.6}", analysis.pi_min)?;
    writeln!(out, "t_mix         {}", analysis.t_mix_exact)?;
    writeln!(out, "reversible    {}", analysis.reversible)?;
    if let Some(g) = analysis.gamma_abs {
        writeln!(out, "gamma_abs     {g:.6}")?;
    }
    if let Some(g) = &analysis.gamma_ps {
        writeln!(out, "gamma_ps      {:.6} (k = {})", g.value, g.best_k)?;
    }
    if let Some(b) = bracket {
        writeln!(out, "t_mix bracket [{:.2}, {:.2}]", b.lower, b.upper)?;
    }
    writeln!(out, "2/3 pi-norm   {:.4}", analysis.two_thirds_pi_norm)?;
    writeln!(out, "required m    {} ({} mode)", plan.m, plan.mode)?;
    Ok(0)
}

fn test(cli: &Cli, a: &TestArgs, out: &mut dyn Write) -> Result<i32> {
    let f = ChainFile::read(&a.reference)?;
    let x = read_trajectory(&a.trajectory, f.matrix.d())?;
    let analysis = ChainAnalysis::compute(&f.matrix)?;
    let options = TesterOptions {
        mode: a.budget.mode,
        seed: RngSeed(cli.seed),
        force: a.force,
        use_all_transitions: a.use_all_transitions,
        constants: a.budget.constants()?,
        ..Default::default()
    };
    let tester = IdentityTester::new(&f.matrix, analysis, a.budget.eps, a.budget.delta, options)?;
    let report = tester.test(&x)?;
    if cli.json {
        writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
    } else {
        let word = if report.reject { "reject" } else { "accept" };
        match report.rejected_at {
            Some(stage) => writeln!(out, "{word} ({})", serde_json::to_value(stage)?.as_str().unwrap_or(""))?,
            None => writeln!(out, "{word}")?,
        }
        if report.under_powered {
            writeln!(out, "warning: under-powered (m = {}, required {})", report.m_used, report.plan.m)?;
        }
    }
    Ok(i32::from(report.verdict()))
}

fn simulate(cli: &Cli, a: &SimulateArgs, out: &mut dyn Write) -> Result<i32> {
    let f = ChainFile::read(&a.chain)?;
    let d = f.matrix.d();
    let initial = match &a.initial {
        Some(s) => serde_json::from_str::<Distribution>(s)?,
        None => f.initial.clone().unwrap_or_else(|| Distribution::uniform(d)),
    };
    let x = sample_trajectory(&f.matrix, &initial, a.m, RngSeed(cli.seed))?;
    match &a.out {
        Some(p) => write_trajectory(p, &x)?,
        None => writeln!(out, "{x}")?,
    }
    Ok(0)
}

fn family(f: &FamilyCommand, out: &mut dyn Write) -> Result<i32> {
    let (file, path) = match f {
        FamilyCommand::G {
            d,
            p_star,
            eta_file,
            uniform: _,
            out: path,
        } => {
            let eta = match eta_file {
                Some(p) => serde_json::from_str::<Distribution>(&std::fs::read_to_string(p)?)?,
                None => Distribution::uniform(*d),
            };
            let spec = GFamilySpec::new(*d, *p_star, eta)?;
            (ChainFile::new(build_g_chain(&spec)?, Some(g_initial(*d, *p_star)))?, path)
        }
        FamilyCommand::H {
            d,
            eta,
            tau,
            eps,
            relaxed,
            out: path,
        } => {
            let tau = match tau {
                Some(bits) => parse_tau(bits)?,
                None => vec![false; d / 3],
            };
            let spec = HFamilySpec {
                d: *d,
                eta: *eta,
                tau,
                eps: *eps,
            };
            let m = if *relaxed {
                build_h_chain_relaxed(&spec)?
            } else {
                build_h_chain(&spec)?
            };
            (ChainFile::new(m, Some(h_initial(*d)))?, path)
        }
    };
    emit(out, path.as_ref(), &(file.to_json()? + "\n"))?;
    Ok(0)
}

fn experiment(cli: &Cli, a: &ExperimentArgs, out: &mut dyn Write) -> Result<i32> {
    let spec = ExperimentSpec::read(&a.spec)?;
    let rows = run_experiment(&spec, cli.threads)?;
    match &a.out {
        Some(p) => write_csv(&rows, std::fs::File::create(p)?)?,
        None => write_csv(&rows, &mut *out)?,
    }
    Ok(0)
}

fn calibrate(cli: &Cli, a: &CalibrateArgs, out: &mut dyn Write) -> Result<i32> {
    let spec = CalibrationSpec::read(&a.spec)?;
    let report = calibrate_constants(&spec, cli.threads)?;
    let text = serde_json::to_string_pretty(&report)? + "\n";
    emit(out, a.out.as_ref(), &text)?;
    Ok(0)
}

/// Runs a parsed command line, writing regular output to `out`.
pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<i32> {
    match &cli.command {
        Command::Analyze(a) => analyze(cli, a, out),
        Command::Test(a) => test(cli, a, out),
        Command::Simulate(a) => simulate(cli, a, out),
        Command::Family { family: f } => family(f, out),
        Command::Experiment(a) => experiment(cli, a, out),
        Command::Calibrate(a) => calibrate(cli, a, out),
    }
}

/// Parses `args` and runs; returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            // help and version go to stdout with success
            if e.use_stderr() {
                let _ = write!(err, "{e}");
                return 2;
            }
            let _ = write!(out, "{e}");
            return 0;
        }
    };
    match execute(&cli, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            2
        }
    }
}
