//! Batch certification tool: reads a declarative model/run configuration,
//! dispatches one verification subcommand, and emits a deterministic,
//! schema-versioned report (JSON, or CSV for tabular sweeps).
//!
//! Exit codes: 0 success, 1 error, 2 certification refused.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use entrocert::certify::{
    lsi_bound, pathological_example_report, theorem1_constant, theorem1_verify,
};
use entrocert::conditions::{
    beta_matrices, delta_from_condition_c, full_condition_report, SamplerConfig,
};
use entrocert::divergence::{avg_conditional_relative_entropy, relative_entropy};
use entrocert::expr::HamiltonianExpr;
use entrocert::gibbs::{contraction_rate_formula, run_trajectory};
use entrocert::model::{
    build_gaussian, Density, GaussianDensity, GridDensity, GridModel, Model, Weights,
};

const SCHEMA_VERSION: u32 = 1;

#[derive(Parser)]
#[command(name = "entrocert", version, about = "Entropy tensorization certifier")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the weak-dependence hypothesis checks and report the outcome.
    CheckConditions(CommonArgs),
    /// Produce a certified constant bundle (refuses when hypotheses fail).
    Certify(CommonArgs),
    /// Check the tensorization inequality on sampled densities.
    VerifyTheorem1(CommonArgs),
    /// Run exact Gibbs sweeps from a random start and record the entropies.
    SimulateGibbs(CommonArgs),
    /// Tabulate delta and the certified constants over an interaction sweep.
    SweepDelta(CommonArgs),
    /// Diagnose the mean-field family that defeats the certification method.
    Pathological(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Path to the TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the configured sample count.
    #[arg(long)]
    samples: Option<usize>,
    /// Override the configured sweep cap.
    #[arg(long)]
    sweeps: Option<usize>,
    /// Write the report here instead of the configured path / stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Report format: json or csv.
    #[arg(long)]
    format: Option<String>,
    /// Skip the sampled hypothesis checks (constants still require delta > 0).
    #[arg(long)]
    unchecked: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfig {
    schema_version: u32,
    model: ModelConfig,
    run: RunBlock,
    #[serde(default)]
    output: OutputBlock,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "type", rename_all = "lowercase")]
enum ModelConfig {
    Gaussian {
        /// Precision matrix, one row per line.
        precision: Vec<Vec<f64>>,
        linear: Vec<f64>,
    },
    Grid {
        grids: Vec<Vec<f64>>,
        hamiltonian: String,
        base: Vec<Vec<f64>>,
        /// Per-coordinate LSI weights of the local specifications.
        rho: Vec<f64>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunBlock {
    /// Mandatory: every sampled check is seeded.
    seed: u64,
    #[serde(default = "default_samples")]
    samples: usize,
    #[serde(default = "default_sweeps")]
    sweeps: usize,
    #[serde(default)]
    exhaustive: bool,
    /// Number of sampled densities for verify-theorem1.
    #[serde(default = "default_densities")]
    densities: usize,
    /// Off-diagonal multipliers for sweep-delta.
    #[serde(default)]
    multipliers: Option<Vec<f64>>,
    /// Mean-field target mean for pathological.
    #[serde(default = "default_target_mean")]
    target_mean: f64,
    /// Mean-field dimensions for pathological.
    #[serde(default)]
    dims: Option<Vec<usize>>,
}

fn default_samples() -> usize {
    10_000
}
fn default_sweeps() -> usize {
    20
}
fn default_densities() -> usize {
    100
}
fn default_target_mean() -> f64 {
    1.0
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutputBlock {
    #[serde(default)]
    format: Option<String>,
    #[serde(default)]
    path: Option<String>,
}

#[derive(Serialize)]
struct Report {
    schema_version: u32,
    config_echo: RunConfig,
    seed: u64,
    results: serde_json::Value,
    flags: BTreeMap<String, bool>,
    runtime_ms: u128,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let started = Instant::now();
    let outcome = dispatch(&cli.command, started);
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            // a refusal raised from inside the library is still a refusal
            if matches!(e, CliError::Lib(entrocert::Error::NotCertified(_))) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

#[derive(Debug)]
enum CliError {
    Io(std::io::Error),
    Config(String),
    Lib(entrocert::Error),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Io(e) => write!(f, "io: {e}"),
            CliError::Config(m) => write!(f, "config: {m}"),
            CliError::Lib(e) => write!(f, "{e}"),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}
impl From<entrocert::Error> for CliError {
    fn from(e: entrocert::Error) -> Self {
        CliError::Lib(e)
    }
}

type CliResult<T> = Result<T, CliError>;

fn parse_config(text: &str) -> CliResult<RunConfig> {
    let cfg: RunConfig =
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
    if cfg.schema_version != SCHEMA_VERSION {
        return Err(CliError::Config(format!(
            "unsupported schema_version {} (expected {SCHEMA_VERSION})",
            cfg.schema_version
        )));
    }
    Ok(cfg)
}

fn build_model(mc: &ModelConfig) -> CliResult<Model> {
    match mc {
        ModelConfig::Gaussian { precision, linear } => {
            let n = precision.len();
            for (k, row) in precision.iter().enumerate() {
                if row.len() != n {
                    return Err(CliError::Config(format!(
                        "precision row {} has {} entries, expected {n}",
                        k + 1,
                        row.len()
                    )));
                }
            }
            let j = DMatrix::from_fn(n, n, |r, c| precision[r][c]);
            let b = DVector::from_vec(linear.clone());
            Ok(Model::Gaussian(build_gaussian(j, b)?))
        }
        ModelConfig::Grid {
            grids,
            hamiltonian,
            base,
            rho,
        } => {
            let n = grids.len();
            let expr = HamiltonianExpr::parse(hamiltonian, n)?;
            let m = GridModel::from_expr(grids.clone(), base.clone(), expr)?
                .with_weights(Weights::new(rho.clone())?)?;
            Ok(Model::Grid(m))
        }
    }
}

struct Resolved {
    cfg: RunConfig,
    seed: u64,
    samples: usize,
    sweeps: usize,
    out: Option<PathBuf>,
    format: String,
    unchecked: bool,
}

fn resolve(args: &CommonArgs, default_format: &str) -> CliResult<Resolved> {
    let text = std::fs::read_to_string(&args.config)?;
    let cfg = parse_config(&text)?;
    let seed = args.seed.unwrap_or(cfg.run.seed);
    let samples = args.samples.unwrap_or(cfg.run.samples);
    let sweeps = args.sweeps.unwrap_or(cfg.run.sweeps);
    let out = args
        .out
        .clone()
        .or_else(|| cfg.output.path.as_ref().map(PathBuf::from));
    let format = args
        .format
        .clone()
        .or_else(|| cfg.output.format.clone())
        .unwrap_or_else(|| default_format.to_string());
    if format != "json" && format != "csv" {
        return Err(CliError::Config(format!("unknown format {format:?}")));
    }
    Ok(Resolved {
        cfg,
        seed,
        samples,
        sweeps,
        out,
        format,
        unchecked: args.unchecked,
    })
}

fn sampler(r: &Resolved) -> SamplerConfig {
    SamplerConfig {
        count: r.samples,
        seed: r.seed,
        exhaustive: r.cfg.run.exhaustive,
    }
}

fn emit(r: &Resolved, body: &str) -> CliResult<()> {
    match &r.out {
        Some(path) => std::fs::write(path, body)?,
        None => println!("{body}"),
    }
    Ok(())
}

fn emit_report(
    r: &Resolved,
    started: Instant,
    results: serde_json::Value,
    flags: BTreeMap<String, bool>,
) -> CliResult<()> {
    let report = Report {
        schema_version: SCHEMA_VERSION,
        config_echo: r.cfg.clone(),
        seed: r.seed,
        results,
        flags,
        runtime_ms: started.elapsed().as_millis(),
    };
    let body = serde_json::to_string_pretty(&report).expect("report serialization");
    emit(r, &body)
}

fn json<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("value serialization")
}

fn dispatch(command: &Command, started: Instant) -> CliResult<ExitCode> {
    match command {
        Command::CheckConditions(a) => check_conditions(a, started),
        Command::Certify(a) => certify(a, started),
        Command::VerifyTheorem1(a) => verify_theorem1(a, started),
        Command::SimulateGibbs(a) => simulate_gibbs(a, started),
        Command::SweepDelta(a) => sweep_delta(a, started),
        Command::Pathological(a) => pathological(a, started),
    }
}

fn check_conditions(args: &CommonArgs, started: Instant) -> CliResult<ExitCode> {
    let r = resolve(args, "json")?;
    let model = build_model(&r.cfg.model)?;
    let report = full_condition_report(&model, &sampler(&r))?;
    let mut flags = BTreeMap::new();
    flags.insert("certified".into(), report.certified);
    flags.insert("sq_pass".into(), report.sq.pass);
    flags.insert("ed_pass".into(), report.ed.pass);
    flags.insert("co_pass".into(), report.co.pass);
    emit_report(&r, started, json(&report), flags)?;
    Ok(ExitCode::SUCCESS)
}

fn certify(args: &CommonArgs, started: Instant) -> CliResult<ExitCode> {
    let r = resolve(args, "json")?;
    let model = build_model(&r.cfg.model)?;
    let report = full_condition_report(&model, &sampler(&r))?;
    let mut flags = BTreeMap::new();
    flags.insert("certified".into(), report.certified);
    if !report.certified {
        emit_report(
            &r,
            started,
            serde_json::json!({ "report": report }),
            flags,
        )?;
        return Ok(ExitCode::from(2));
    }
    let bound = lsi_bound(&model, &report)?;
    emit_report(
        &r,
        started,
        serde_json::json!({ "report": report, "bound": bound }),
        flags,
    )?;
    Ok(ExitCode::SUCCESS)
}

/// Deterministic sampled density for the configured model.
fn sample_density(model: &Model, rng: &mut impl rand::Rng) -> Density {
    match model {
        Model::Gaussian(m) => {
            let n = m.dim();
            let mean = DVector::from_fn(n, |_, _| rng.gen_range(-2.0..2.0));
            let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-0.7..0.7));
            let cov = &a * a.transpose() + DMatrix::identity(n, n) * 0.3;
            Density::Gaussian(GaussianDensity::new(mean, cov).expect("sampled covariance"))
        }
        Model::Grid(m) => {
            let count = m.state_count();
            let lw: Vec<f64> = (0..count).map(|_| rng.gen_range(-2.0..2.0)).collect();
            Density::Grid(
                GridDensity::normalized(m.grids().to_vec(), lw).expect("sampled masses"),
            )
        }
    }
}

fn verify_theorem1(args: &CommonArgs, started: Instant) -> CliResult<ExitCode> {
    let r = resolve(args, "json")?;
    let model = build_model(&r.cfg.model)?;
    let mut flags = BTreeMap::new();

    // with --unchecked, only the interaction norms are consulted for delta;
    // the sampled hypothesis checks are skipped
    let (delta, report) = if r.unchecked {
        let beta = beta_matrices(&model)?;
        (delta_from_condition_c(&beta), None)
    } else {
        let report = full_condition_report(&model, &sampler(&r))?;
        flags.insert("certified".into(), report.certified);
        if !report.certified {
            emit_report(&r, started, serde_json::json!({ "report": report }), flags)?;
            return Ok(ExitCode::from(2));
        }
        (report.delta, Some(report))
    };
    if delta <= 0.0 {
        flags.insert("certified".into(), false);
        emit_report(&r, started, serde_json::json!({ "delta": delta }), flags)?;
        return Ok(ExitCode::from(2));
    }
    let constant = theorem1_constant(delta)?;
    let mut rng = rand_seeded(r.seed);
    let mut min_ratio = f64::INFINITY;
    let mut all_hold = true;
    let mut checked = 0usize;
    for _ in 0..r.cfg.run.densities {
        let p = sample_density(&model, &mut rng);
        let out = match &report {
            Some(rep) => theorem1_verify(&model, &p, rep)?,
            None => {
                // unchecked path: evaluate both sides directly
                let q = model.stationary();
                let lhs = relative_entropy(&p, &q)?;
                let mut sum = 0.0;
                for i in 1..=model.dim() {
                    sum += avg_conditional_relative_entropy(&p, &model, i)?;
                }
                let rhs = constant * sum;
                entrocert::certify::VerifyOutcome {
                    lhs,
                    rhs,
                    ratio: if lhs <= 1e-15 {
                        if rhs <= 1e-15 {
                            1.0
                        } else {
                            f64::INFINITY
                        }
                    } else {
                        rhs / lhs
                    },
                    holds: rhs >= lhs - 1e-9,
                }
            }
        };
        all_hold &= out.holds;
        min_ratio = min_ratio.min(out.ratio);
        checked += 1;
    }
    flags.insert("all_hold".into(), all_hold);
    let results = serde_json::json!({
        "delta": delta,
        "t1_constant": constant,
        "densities_checked": checked,
        "min_ratio": min_ratio,
        "report": report,
    });
    emit_report(&r, started, results, flags)?;
    Ok(ExitCode::SUCCESS)
}

fn rand_seeded(seed: u64) -> impl rand::Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}

fn simulate_gibbs(args: &CommonArgs, started: Instant) -> CliResult<ExitCode> {
    let r = resolve(args, "json")?;
    let model = build_model(&r.cfg.model)?;
    let mut rng = rand_seeded(r.seed);
    let p = sample_density(&model, &mut rng);
    let traj = run_trajectory(&model, &p, r.sweeps)?;
    let term_sums: Vec<f64> = traj
        .sweep_terms
        .iter()
        .map(|t| t.iter().sum())
        .collect();
    let final_entropy = *traj.entropies.last().unwrap();
    let mut flags = BTreeMap::new();
    flags.insert("monotone".into(), true);
    flags.insert("converged".into(), final_entropy < 1e-10);
    let results = serde_json::json!({
        "sweeps_run": traj.sweep_terms.len(),
        "entropies": traj.entropies,
        "sweep_term_sums": term_sums,
        "w_gaps": traj.w_gaps,
    });
    emit_report(&r, started, results, flags)?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct SweepRow {
    multiplier: f64,
    delta: f64,
    t1_constant: f64,
    rate: f64,
    lsi_bound: f64,
    certified: bool,
}

fn sweep_delta(args: &CommonArgs, started: Instant) -> CliResult<ExitCode> {
    let r = resolve(args, "csv")?;
    let (precision, linear) = match &r.cfg.model {
        ModelConfig::Gaussian { precision, linear } => (precision.clone(), linear.clone()),
        ModelConfig::Grid { .. } => {
            return Err(CliError::Config(
                "sweep-delta requires a gaussian model".into(),
            ))
        }
    };
    let multipliers = r
        .cfg
        .run
        .multipliers
        .clone()
        .unwrap_or_else(|| (0..=10).map(|k| k as f64 / 10.0).collect());
    let n = precision.len();
    let mut rows = Vec::new();
    for m in multipliers {
        let j = DMatrix::from_fn(n, n, |a, b| {
            if a == b {
                precision[a][b]
            } else {
                m * precision[a][b]
            }
        });
        let model = Model::Gaussian(build_gaussian(j, DVector::from_vec(linear.clone()))?);
        let beta = beta_matrices(&model)?;
        let delta = delta_from_condition_c(&beta);
        let certified = delta > 0.0;
        let rho_min = model.weights()?.min();
        let (t1, rate, lsi) = if certified {
            (
                theorem1_constant(delta)?,
                contraction_rate_formula(delta)?,
                delta * (1.0 - delta / 2.0) * rho_min,
            )
        } else {
            (f64::NAN, f64::NAN, f64::NAN)
        };
        rows.push(SweepRow {
            multiplier: m,
            delta,
            t1_constant: t1,
            rate,
            lsi_bound: lsi,
            certified,
        });
    }
    if r.format == "csv" {
        let mut body = String::from("multiplier,delta,t1_constant,rate,lsi_bound,certified\n");
        for row in &rows {
            body.push_str(&format!(
                "{},{},{},{},{},{}\n",
                row.multiplier, row.delta, row.t1_constant, row.rate, row.lsi_bound,
                row.certified
            ));
        }
        emit(&r, &body)?;
    } else {
        let mut flags = BTreeMap::new();
        flags.insert("all_certified".into(), rows.iter().all(|x| x.certified));
        emit_report(&r, started, json(&rows), flags)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn pathological(args: &CommonArgs, started: Instant) -> CliResult<ExitCode> {
    let r = resolve(args, "json")?;
    let dims = r.cfg.run.dims.clone().unwrap_or_else(|| vec![2, 5, 10]);
    let mut reports = Vec::new();
    let mut any_certified = false;
    for n in dims {
        let rep = pathological_example_report(r.cfg.run.target_mean, n, &sampler(&r))?;
        any_certified |= rep.certified;
        reports.push(rep);
    }
    let mut flags = BTreeMap::new();
    flags.insert("any_certified".into(), any_certified);
    emit_report(&r, started, json(&reports), flags)?;
    Ok(ExitCode::SUCCESS)
}
