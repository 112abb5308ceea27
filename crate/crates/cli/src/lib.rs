//! Command-line front end: `check`, `fit`, `simulate` and `summarize`.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 invalid input or violated
//! conditions, 3 numerical failure.

pub mod ingest;
pub mod output;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fhshrink::model::check_conditions;
use fhshrink::posterior::dic;
use fhshrink::simulation::run_experiment;
use fhshrink::{BRule, HyperParams, ModelKind, ModelSpec, SamplerConfig, SimConfig};
use serde::Deserialize;
use thiserror::Error;

pub use ingest::{ingest_csv, parse_dataset};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Model(#[from] fhshrink::Error),
    #[error("{0}")]
    Conditions(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { context: path.display().to_string(), source }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io { .. } => 1,
            CliError::Model(e) if e.is_numerical() => 3,
            _ => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "fhshrink", version, about = "Fay-Herriot models with shrinkage of means and variances")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the propriety and finite-variance conditions for a dataset.
    Check(CheckArgs),
    /// Run the sampler and write draws.csv and summary.json.
    Fit(FitArgs),
    /// Run the synthetic-data comparison and write report.csv and report.json.
    Simulate(SimulateArgs),
    /// Recompute summary statistics from a draws CSV.
    Summarize(SummarizeArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct ModelArgs {
    /// stk1, stk2 or yc.
    #[arg(long)]
    pub model: Option<ModelKind>,
    /// Prior shape a_i for every area.
    #[arg(long)]
    pub a_default: Option<f64>,
    /// inverse-n or const:<v>.
    #[arg(long)]
    pub b_rule: Option<BRule>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SamplerArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub draws: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    /// Variance of the random-walk proposal for eta.
    #[arg(long)]
    pub mh_step: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct CheckArgs {
    /// Dataset CSV (may instead be given as "input" in the config file).
    pub input: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    /// JSON run manifest; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    pub input: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub sampler: SamplerArgs,
    /// Credible levels, comma-separated.
    #[arg(long, value_delimiter = ',')]
    pub levels: Option<Vec<f64>>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Skip the DIC computation.
    #[arg(long)]
    pub no_dic: bool,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Case {
    /// sigma2_i ~ IG(10, 5 exp(0.3 z_i)).
    I,
    /// sigma2_i ~ U(0.5, 5).
    Ii,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub case: Option<Case>,
    #[arg(long)]
    pub replications: Option<usize>,
    /// Methods to compare, comma-separated.
    #[arg(long, value_delimiter = ',')]
    pub models: Option<Vec<ModelKind>>,
    #[arg(long)]
    pub a_default: Option<f64>,
    #[arg(long)]
    pub b_rule: Option<BRule>,
    #[command(flatten)]
    pub sampler: SamplerArgs,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SummarizeArgs {
    /// draws.csv written by `fit`.
    pub draws: PathBuf,
    #[arg(long, value_delimiter = ',')]
    pub levels: Option<Vec<f64>>,
    /// Also write summary.json into this directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Run manifest read from `--config`. Every field is optional; flags win.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub input: Option<PathBuf>,
    pub model: Option<ModelKind>,
    pub a_default: Option<f64>,
    pub b_rule: Option<BRule>,
    /// Per-area overrides of `a_i` and `b_i`.
    pub a: Option<Vec<f64>>,
    pub b: Option<Vec<f64>>,
    pub seed: Option<u64>,
    pub burn_in: Option<usize>,
    pub draws: Option<usize>,
    pub thin: Option<usize>,
    pub mh_step: Option<f64>,
    pub levels: Option<Vec<f64>>,
    pub out: Option<PathBuf>,
    pub simulation: Option<SimConfig>,
    pub case: Option<String>,
    pub replications: Option<usize>,
    pub models: Option<Vec<ModelKind>>,
    pub jobs: Option<usize>,
}

pub const DEFAULT_LEVELS: [f64; 2] = [0.95, 0.99];

fn load_manifest(path: Option<&Path>) -> Result<Manifest, CliError> {
    let Some(path) = path else {
        return Ok(Manifest::default());
    };
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Input(format!("config {}: {e}", path.display())))
}

fn input_path(flag: Option<PathBuf>, manifest: &Manifest) -> Result<PathBuf, CliError> {
    flag.or_else(|| manifest.input.clone())
        .ok_or_else(|| CliError::Input("no input dataset given".into()))
}

fn output_dir(flag: Option<PathBuf>, manifest: &Manifest) -> Result<PathBuf, CliError> {
    let dir = flag
        .or_else(|| manifest.out.clone())
        .ok_or_else(|| CliError::Input("no output directory given (--out)".into()))?;
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    Ok(dir)
}

fn levels(flag: Option<Vec<f64>>, manifest: &Manifest) -> Result<Vec<f64>, CliError> {
    let levels = flag.or_else(|| manifest.levels.clone()).unwrap_or_else(|| DEFAULT_LEVELS.to_vec());
    if let Some(bad) = levels.iter().find(|l| !(**l > 0.0 && **l < 1.0)) {
        return Err(CliError::Input(format!("credible levels must lie in (0, 1), got {bad}")));
    }
    Ok(levels)
}

fn hyper_for(
    sizes: &[usize],
    a_default: Option<f64>,
    b_rule: Option<BRule>,
    manifest: &Manifest,
) -> Result<HyperParams, CliError> {
    let a0 = a_default.or(manifest.a_default).unwrap_or(2.0);
    let rule = b_rule.or(manifest.b_rule).unwrap_or(BRule::InverseN);
    let mut hyper = HyperParams::from_rule(a0, rule, sizes)?;
    let m = sizes.len();
    for (name, over, slot) in [("a", &manifest.a, &mut hyper.a), ("b", &manifest.b, &mut hyper.b)] {
        if let Some(v) = over {
            if v.len() != m {
                return Err(CliError::Input(format!("config {name} has {} entries for {m} areas", v.len())));
            }
            slot.clone_from(v);
        }
    }
    Ok(HyperParams::new(hyper.a, hyper.b)?)
}

fn sampler_config(flags: &SamplerArgs, manifest: &Manifest) -> SamplerConfig {
    let d = SamplerConfig::default();
    SamplerConfig {
        burn_in: flags.burn_in.or(manifest.burn_in).unwrap_or(d.burn_in),
        n_draws: flags.draws.or(manifest.draws).unwrap_or(d.n_draws),
        thin: flags.thin.or(manifest.thin).unwrap_or(d.thin),
        mh_step_c: flags.mh_step.or(manifest.mh_step).unwrap_or(d.mh_step_c),
        seed: flags.seed.or(manifest.seed).unwrap_or(d.seed),
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn to_json<S: serde::Serialize>(value: &S) -> Vec<u8> {
    let mut s = serde_json::to_vec_pretty(value).expect("serializable report");
    s.push(b'\n');
    s
}

fn check(args: CheckArgs) -> Result<(), CliError> {
    let manifest = load_manifest(args.config.as_deref())?;
    let data = ingest_csv(&input_path(args.input, &manifest)?)?;
    let kind = args.model.model.or(manifest.model).unwrap_or(ModelKind::Stk1);
    let hyper = hyper_for(&data.sizes(), args.model.a_default, args.model.b_rule, &manifest)?;
    let report = check_conditions(&data, &ModelSpec::new(kind, hyper));
    let mut stdout = std::io::stdout().lock();
    stdout
        .write_all(&to_json(&report))
        .map_err(|e| CliError::Io { context: "stdout".into(), source: e })?;
    eprintln!("{kind}: {}", report.describe());
    eprintln!(
        "posterior proper: {}; finite posterior variances: {}",
        if report.proper { "yes" } else { "not guaranteed" },
        if report.finite_variance { "yes" } else { "not guaranteed" },
    );
    if report.proper {
        Ok(())
    } else {
        Err(CliError::Conditions(report.describe()))
    }
}

fn fit(args: FitArgs) -> Result<(), CliError> {
    let manifest = load_manifest(args.config.as_deref())?;
    let data = ingest_csv(&input_path(args.input, &manifest)?)?;
    let kind = args.model.model.or(manifest.model).unwrap_or(ModelKind::Stk1);
    let hyper = hyper_for(&data.sizes(), args.model.a_default, args.model.b_rule, &manifest)?;
    let spec = ModelSpec::new(kind, hyper);
    let levels = levels(args.levels, &manifest)?;
    let config = sampler_config(&args.sampler, &manifest);
    let out = output_dir(args.out, &manifest)?;

    let report = check_conditions(&data, &spec);
    if !report.proper {
        return Err(CliError::Conditions(report.describe()));
    }
    let (draws, diag) = fhshrink::run_chain(&data, &spec, &config)?;
    let mut draws_csv = Vec::new();
    output::write_draws(&draws, &mut draws_csv)?;
    write_file(&out.join("draws.csv"), &draws_csv)?;

    let mut summary = output::summary_report(&draws.columns(), &levels)?;
    summary.model = Some(kind);
    summary.mh_accept_rate = diag.mh_accept_rate;
    if !args.no_dic {
        summary.dic = Some(dic(&draws, &data, &spec)?);
    }
    write_file(&out.join("summary.json"), &to_json(&summary))?;
    eprintln!("{kind}: {} draws written to {}", draws.len(), out.display());
    Ok(())
}

fn simulate(args: SimulateArgs) -> Result<(), CliError> {
    let manifest = load_manifest(args.config.as_deref())?;
    let case = match (args.case, manifest.case.as_deref()) {
        (Some(c), _) => Some(c),
        (None, Some(s)) => Some(
            Case::from_str(s, true).map_err(|_| CliError::Input(format!("unknown case {s:?}")))?,
        ),
        (None, None) => None,
    };
    let mut sim = match (case, manifest.simulation.clone()) {
        (Some(Case::Ii), _) => SimConfig::case_ii(200, 0),
        (Some(Case::I), _) | (None, None) => SimConfig::case_i(200, 0),
        (None, Some(sim)) => sim,
    };
    if let Some(r) = args.replications.or(manifest.replications) {
        sim.replications = r;
    }
    if let Some(seed) = args.sampler.seed.or(manifest.seed) {
        sim.seed = seed;
    }
    sim.validate()?;
    let sampler = sampler_config(&args.sampler, &manifest);
    let kinds = args.models.or(manifest.models.clone()).unwrap_or_else(|| ModelKind::ALL.to_vec());
    let hyper = hyper_for(&sim.n, args.a_default, args.b_rule, &manifest)?;
    let methods: Vec<ModelSpec> = kinds.iter().map(|&k| ModelSpec::new(k, hyper.clone())).collect();
    let jobs = args.jobs.or(manifest.jobs).unwrap_or(0);
    let out = output_dir(args.out, &manifest)?;

    let report = run_experiment(&sim, &methods, &sampler, jobs)?;
    let mut csv = Vec::new();
    output::write_report_csv(&report, &mut csv)?;
    write_file(&out.join("report.csv"), &csv)?;
    write_file(&out.join("report.json"), &to_json(&report))?;
    eprint!("{}", String::from_utf8_lossy(&csv));
    Ok(())
}

fn summarize(args: SummarizeArgs) -> Result<(), CliError> {
    let levels = levels(args.levels, &Manifest::default())?;
    let file = fs::File::open(&args.draws).map_err(|e| CliError::io(&args.draws, e))?;
    let columns = output::read_draws(std::io::BufReader::new(file))?;
    let summary = output::summary_report(&columns, &levels)?;
    let json = to_json(&summary);
    if let Some(dir) = args.out {
        fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        write_file(&dir.join("summary.json"), &json)?;
    }
    std::io::stdout()
        .lock()
        .write_all(&json)
        .map_err(|e| CliError::Io { context: "stdout".into(), source: e })
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Check(a) => check(a),
        Command::Fit(a) => fit(a),
        Command::Simulate(a) => simulate(a),
        Command::Summarize(a) => summarize(a),
    }
}

/// Parses the process arguments, runs, and maps errors to exit codes.
pub fn main_entry() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Input("x".into()).exit_code(), 2);
        assert_eq!(CliError::Conditions("m>p+2".into()).exit_code(), 2);
        assert_eq!(CliError::Model(fhshrink::Error::Precondition("m>p+2".into())).exit_code(), 2);
        let q = fhshrink::Error::Quadrature { area: 1, reason: "x".into() };
        assert_eq!(CliError::Model(q.clone()).exit_code(), 3);
        let wrapped = fhshrink::Error::Experiment { replication: 0, method: "stk1".into(), source: Box::new(q) };
        assert_eq!(CliError::Model(wrapped).exit_code(), 3);
        let io = CliError::io(Path::new("a"), std::io::Error::other("x"));
        assert_eq!(io.exit_code(), 1);
    }

    #[test]
    fn flags_override_manifest() {
        let manifest: Manifest = serde_json::from_str(r#"{"seed": 5, "draws": 10, "burn_in": 3}"#).unwrap();
        let flags = SamplerArgs { seed: Some(9), ..Default::default() };
        let c = sampler_config(&flags, &manifest);
        assert_eq!((c.seed, c.n_draws, c.burn_in, c.thin), (9, 10, 3, 1));
    }

    #[test]
    fn manifest_rejects_unknown_keys() {
        assert!(serde_json::from_str::<Manifest>(r#"{"sede": 5}"#).is_err());
    }

    #[test]
    fn hyper_overrides() {
        let manifest: Manifest = serde_json::from_str(r#"{"a": [3, 4], "b_rule": {"const": 0.5}}"#).unwrap();
        let h = hyper_for(&[5, 10], None, None, &manifest).unwrap();
        assert_eq!(h.a, vec![3.0, 4.0]);
        assert_eq!(h.b, vec![0.5, 0.5]);
        let h = hyper_for(&[5, 10], Some(1.5), Some(BRule::InverseN), &Manifest::default()).unwrap();
        assert_eq!((h.a, h.b), (vec![1.5, 1.5], vec![0.2, 0.1]));
        let bad: Manifest = serde_json::from_str(r#"{"b": [1]}"#).unwrap();
        assert!(hyper_for(&[5, 10], None, None, &bad).is_err());
    }

    #[test]
    fn level_validation() {
        assert!(levels(Some(vec![0.95, 1.0]), &Manifest::default()).is_err());
        assert_eq!(levels(None, &Manifest::default()).unwrap(), DEFAULT_LEVELS.to_vec());
    }

    #[test]
    fn cli_parses() {
        let cli = Cli::try_parse_from([
            "fhshrink", "fit", "d.csv", "--model", "stk2", "--seed", "7", "--levels", "0.9,0.5",
            "--b-rule", "const:0.25", "--mh-step", "0.01",
        ])
        .unwrap();
        match cli.command {
            Command::Fit(a) => {
                assert_eq!(a.model.model, Some(ModelKind::Stk2));
                assert_eq!(a.levels, Some(vec![0.9, 0.5]));
                assert_eq!(a.model.b_rule, Some(BRule::Const(0.25)));
                assert_eq!(a.sampler.mh_step, Some(0.01));
            }
            _ => panic!("wrong subcommand"),
        }
    }
}
