//! Command-line surface.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand};
use dstab_core::dstab::{CertifyOptions, CertifyReport, Sampler, Verdict, DEFAULT_FALSIFY_TOL};
use dstab_core::pairing::{PairingClass, DEFAULT_CAP};
use dstab_core::sim::{
    closed_loop_matrix, default_eta_grid, quasi_steady_state_check, simulate, steady_state_gain, Trajectory,
};
use dstab_core::vl::VlOptions;
use dstab_core::weights::{construct_weights, verify_ratios};
use dstab_core::DVector;
use log::{debug, info};
use serde::Serialize;

use crate::doc::{load, GainDocument, PlantDocument, WeightDocument};
use crate::parallel;
use crate::report::{self, GainInput, Report, RunConfig, SamplerConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_REFUTED: i32 = 2;
pub const EXIT_INCONCLUSIVE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "dstab", version, about = "D-stability certification for non-square decentralized gains")]
pub struct Cli {
    /// More log output on stderr (repeat for more).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Certify a partitioned gain matrix and search for counterexamples.
    Certify(CertifyArgs),
    /// Construct positive combination weights for prescribed payoff ratios.
    Weights(WeightsArgs),
    /// Search for detunings that destabilize A·E·K.
    Falsify(FalsifyArgs),
    /// Sweep η and integrate the singularly perturbed closed loop.
    Simulate(SimulateArgs),
    /// Rank input-output pairings of a gain matrix.
    Pair(PairArgs),
}

#[derive(Debug, Args)]
pub struct OutArgs {
    /// Write the JSON report here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VlArgs {
    /// Relative tolerance of the diagonal Lyapunov search.
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    /// Iteration budget of the diagonal Lyapunov search.
    #[arg(long, default_value_t = 2000)]
    pub budget: usize,
}

impl VlArgs {
    fn options(&self) -> Result<VlOptions> {
        ensure!(self.tol.is_finite() && self.tol > 0.0, "--tol must be positive, found {}", self.tol);
        ensure!(self.budget > 0, "--budget must be at least 1");
        Ok(VlOptions { tol: self.tol, budget: self.budget, ..VlOptions::default() })
    }
}

#[derive(Debug, Args)]
pub struct SamplerArgs {
    /// Number of random detunings.
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    /// Seed of the detuning generator.
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Probability that a block's detuning is zero.
    #[arg(long, default_value_t = 0.15)]
    pub zero_prob: f64,
    /// Smallest nonzero detuning magnitude.
    #[arg(long, default_value_t = 1e-3)]
    pub min_mag: f64,
    /// Largest detuning magnitude.
    #[arg(long, default_value_t = 1e3)]
    pub max_mag: f64,
}

impl SamplerArgs {
    fn sampler(&self) -> Result<Sampler> {
        let s = Sampler {
            count: self.samples,
            zero_probability: self.zero_prob,
            magnitude: (self.min_mag, self.max_mag),
            seed: self.seed,
        };
        s.validate()?;
        Ok(s)
    }
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    /// Gain document.
    pub input: PathBuf,
    #[command(flatten)]
    pub vl: VlArgs,
    #[command(flatten)]
    pub sampler: SamplerArgs,
    /// Spectral tolerance of the counterexample search (nonpositive).
    #[arg(long, default_value_t = DEFAULT_FALSIFY_TOL, allow_hyphen_values = true)]
    pub falsify_tol: f64,
    /// Number of positive detunings used to check the aggregate witness.
    #[arg(long, default_value_t = 20)]
    pub witness_samples: usize,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct FalsifyArgs {
    /// Gain document.
    pub input: PathBuf,
    #[command(flatten)]
    pub sampler: SamplerArgs,
    /// Spectral tolerance (nonpositive).
    #[arg(long, default_value_t = DEFAULT_FALSIFY_TOL, allow_hyphen_values = true)]
    pub tol: f64,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct WeightsArgs {
    /// Weight problem document.
    pub input: PathBuf,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Plant document.
    pub input: PathBuf,
    /// Comma-separated η values, strictly decreasing (default 10^(-k/4), k = 0..16).
    #[arg(long, value_delimiter = ',')]
    pub eta_grid: Option<Vec<f64>>,
    /// η of the integrated trajectory.
    #[arg(long, default_value_t = 0.1)]
    pub eta: f64,
    /// Integration horizon.
    #[arg(long, default_value_t = 100.0)]
    pub horizon: f64,
    /// Integration step (default min(1e-2, 0.1/ρ) with ρ the spectral radius).
    #[arg(long)]
    pub step: Option<f64>,
    /// Write the trajectory as CSV (t, x1..xm, z1..zq).
    #[arg(long)]
    pub trajectory: Option<PathBuf>,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Args)]
pub struct PairArgs {
    /// Gain document (`partition` and `K_gains` are ignored).
    pub input: PathBuf,
    /// Maximum number of assignments evaluated.
    #[arg(long, default_value_t = DEFAULT_CAP)]
    pub cap: usize,
    #[command(flatten)]
    pub vl: VlArgs,
    /// Write a CSV summary of the ranking.
    #[arg(long)]
    pub summary: Option<PathBuf>,
    #[command(flatten)]
    pub out: OutArgs,
}

/// Parses `args` (program name first), runs the subcommand and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        }
    };
    init_logging(cli.verbose);
    let result = parallel::init_threads().and_then(|()| dispatch(&cli.command));
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_ERROR
        }
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    let _ = env_logger::Builder::new().filter_level(level).format_timestamp(None).try_init();
}

fn dispatch(cmd: &Command) -> Result<i32> {
    match cmd {
        Command::Certify(a) => cmd_certify(a),
        Command::Weights(a) => cmd_weights(a),
        Command::Falsify(a) => cmd_falsify(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Pair(a) => cmd_pair(a),
    }
}

fn path_string(p: &Path) -> String {
    p.display().to_string()
}

fn base_config(input: &Path, out: &OutArgs) -> RunConfig {
    RunConfig { input: path_string(input), out: out.out.as_deref().map(path_string), ..RunConfig::default() }
}

/// Writes the report to `--out` (summary on stdout) or to stdout (summary on stderr).
fn emit<T: Serialize>(report: &Report<T>, summary: &str, out: &OutArgs) -> Result<()> {
    let text = serde_json::to_string_pretty(report)?;
    match &out.out {
        Some(path) => {
            std::fs::write(path, format!("{text}\n")).with_context(|| format!("writing {}", path.display()))?;
            println!("{summary}");
        }
        None => {
            let mut stdout = io::stdout().lock();
            writeln!(stdout, "{text}")?;
            eprintln!("{summary}");
        }
    }
    Ok(())
}

fn gain_input(doc: &GainDocument, k: &dstab_core::MixingMatrix) -> Result<GainInput> {
    Ok(GainInput { m: doc.m, n: doc.n, partition: doc.partition()?.sizes().to_vec(), k_gains: k.to_blocks() })
}

fn check_falsify_tol(tol: f64, flag: &str) -> Result<()> {
    ensure!(tol.is_finite() && tol <= 0.0, "{flag} must be finite and nonpositive, found {tol}");
    Ok(())
}

fn cmd_certify(args: &CertifyArgs) -> Result<i32> {
    let doc: GainDocument = load(&args.input)?;
    let a = doc.gain()?;
    let k = doc.mixing(a.partition())?;
    let opts = CertifyOptions {
        vl: args.vl.options()?,
        sampler: args.sampler.sampler()?,
        falsify_tol: args.falsify_tol,
        witness_samples: args.witness_samples,
    };
    check_falsify_tol(opts.falsify_tol, "--falsify-tol")?;
    info!("certifying {}x{} gain, partition {:?}", doc.m, doc.n, a.partition().sizes());
    let individual = parallel::certify_individual_vl(&a, &opts.vl)?;
    debug!("individual VL status {:?}", individual.status);
    let falsification = parallel::falsify(&a, &k, &opts.sampler, opts.falsify_tol)?;
    debug!("falsification over {} samples", falsification.samples);
    let r = CertifyReport::assemble(&a, &k, &opts, individual, falsification)?;
    let body = report::certify_body(gain_input(&doc, &k)?, a.partition(), &r);
    let config = RunConfig {
        tol: Some(opts.vl.tol),
        budget: Some(opts.vl.budget),
        floor: Some(opts.vl.floor),
        sampler: Some(SamplerConfig::from(&opts.sampler)),
        falsify_tol: Some(opts.falsify_tol),
        witness_samples: Some(opts.witness_samples),
        ..base_config(&args.input, &args.out)
    };
    let summary = body.summary.clone();
    emit(&Report::new("certify", config, body), &summary, &args.out)?;
    Ok(match r.verdict {
        Verdict::CertifiedSufficient => EXIT_OK,
        Verdict::RefutedByCounterexample => EXIT_REFUTED,
        Verdict::Inconclusive => EXIT_INCONCLUSIVE,
    })
}

fn cmd_falsify(args: &FalsifyArgs) -> Result<i32> {
    let doc: GainDocument = load(&args.input)?;
    let a = doc.gain()?;
    let k = doc.mixing(a.partition())?;
    let sampler = args.sampler.sampler()?;
    check_falsify_tol(args.tol, "--tol")?;
    let f = parallel::falsify(&a, &k, &sampler, args.tol)?;
    let found = f.counterexample.is_some();
    let body = report::falsify_body(gain_input(&doc, &k)?, &f);
    let config = RunConfig {
        sampler: Some(SamplerConfig::from(&sampler)),
        falsify_tol: Some(args.tol),
        ..base_config(&args.input, &args.out)
    };
    let summary = body.summary.clone();
    emit(&Report::new("falsify", config, body), &summary, &args.out)?;
    Ok(if found { EXIT_REFUTED } else { EXIT_OK })
}

fn cmd_weights(args: &WeightsArgs) -> Result<i32> {
    let doc: WeightDocument = load(&args.input)?;
    let wp = doc.problem()?;
    let ws = construct_weights(&wp, doc.base())?;
    let err = verify_ratios(&ws, &wp)?;
    let body = report::weights_body(&wp, &ws, err)?;
    let summary = body.summary.clone();
    emit(&Report::new("weights", base_config(&args.input, &args.out), body), &summary, &args.out)?;
    Ok(EXIT_OK)
}

fn write_trajectory(path: &Path, traj: &Trajectory, m: usize, q: usize) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = csv::Writer::from_writer(file);
    let header: Vec<String> = std::iter::once("t".to_string())
        .chain((1..=m).map(|i| format!("x{i}")))
        .chain((1..=q).map(|i| format!("z{i}")))
        .collect();
    w.write_record(&header)?;
    for (t, s) in traj.times.iter().zip(&traj.states) {
        let row: Vec<String> = std::iter::once(*t).chain(s.iter().copied()).map(|v| v.to_string()).collect();
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_simulate(args: &SimulateArgs) -> Result<i32> {
    let doc: PlantDocument = load(&args.input)?;
    let plant = doc.plant()?;
    let kbar = doc.controller_gain()?;
    let (x0, z0) = doc.initial_state()?;
    ensure!(args.horizon.is_finite() && args.horizon > 0.0, "--horizon must be positive");
    if let Some(h) = args.step {
        ensure!(h.is_finite() && h > 0.0, "--step must be positive");
    }
    let grid = args.eta_grid.clone().unwrap_or_else(default_eta_grid);
    let sweep = parallel::eta_threshold(&plant, &kbar, &grid)?;
    let h0 = steady_state_gain(&plant)?;
    let cl = closed_loop_matrix(&plant, &kbar, args.eta)?;
    let traj = simulate(&cl, &DVector::from_vec(x0), &DVector::from_vec(z0), args.horizon, args.step)?;
    let qss = if args.eta > 0.0 && traj.diverged_at.is_none() {
        Some(quasi_steady_state_check(&plant, &kbar, &traj)?)
    } else {
        None
    };
    if let Some(path) = &args.trajectory {
        write_trajectory(path, &traj, plant.outputs(), plant.states())?;
    }
    let body = report::simulate_body(&plant, &h0, &kbar, &sweep, &traj, qss.as_ref());
    let config = RunConfig {
        eta_grid: Some(grid),
        eta: Some(args.eta),
        horizon: Some(args.horizon),
        step: Some(traj.step),
        trajectory: args.trajectory.as_deref().map(path_string),
        ..base_config(&args.input, &args.out)
    };
    let summary = body.summary.clone();
    emit(&Report::new("simulate", config, body), &summary, &args.out)?;
    Ok(EXIT_OK)
}

fn write_pair_summary(path: &Path, body: &report::PairBody) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(["rank", "groups", "class", "margin", "vl_status", "min_dominance_slack"])?;
    for p in &body.pairings {
        let groups = p
            .groups
            .iter()
            .map(|g| g.iter().map(ToString::to_string).collect::<Vec<_>>().join(" "))
            .collect::<Vec<_>>()
            .join(" | ");
        w.write_record([
            p.rank.to_string(),
            groups,
            p.class.to_string(),
            p.margin.to_string(),
            p.vl_status.to_string(),
            p.min_dominance_slack.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_pair(args: &PairArgs) -> Result<i32> {
    let doc: GainDocument = load(&args.input)?;
    if doc.n < doc.m {
        bail!("pairing needs at least as many inputs as outputs (m = {}, n = {})", doc.m, doc.n);
    }
    ensure!(args.cap > 0, "--cap must be at least 1");
    let a = doc.matrix()?;
    let opts = args.vl.options()?;
    let ranking = parallel::rank_pairings(&a, args.cap, &opts)?;
    let certified = ranking.reports.iter().any(|r| r.class == PairingClass::CertifiedSufficient);
    let body = report::pair_body(doc.m, doc.n, &ranking);
    if let Some(path) = &args.summary {
        write_pair_summary(path, &body)?;
    }
    let config = RunConfig {
        tol: Some(opts.tol),
        budget: Some(opts.budget),
        floor: Some(opts.floor),
        cap: Some(args.cap),
        summary_csv: args.summary.as_deref().map(path_string),
        ..base_config(&args.input, &args.out)
    };
    let summary = body.summary.clone();
    emit(&Report::new("pair", config, body), &summary, &args.out)?;
    Ok(if certified { EXIT_OK } else { EXIT_INCONCLUSIVE })
}
