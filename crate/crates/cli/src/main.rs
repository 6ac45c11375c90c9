//! `softkd`: soften distributions, complete top-k outputs, certify operators
//! and run the distillation experiments.
//!
//! Exit codes: 0 success, 1 IO or runtime failure, 2 usage or validation
//! error, 3 a checked property or experiment assertion failed.

mod output;

use std::fs::File;
use std::io::{self, BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use softkd_core::axioms::{verify_all, AxiomConfig};
use softkd_core::equiv::{kd_equiv_check, StudentClass};
use softkd_core::io::{read_dists, read_truncated_with, write_dists, RecordError};
use softkd_core::rng::rng_from;
use softkd_core::sim::config::{ExperimentConfig, SEED_ENV};
use softkd_core::sim::experiment::run_experiment;
use softkd_core::sim::SimError;
use softkd_core::simplex::sample_interior_with;
use softkd_core::topk::{complete, soften_truncated};
use softkd_core::{Completion, ExecMode, Family, OperatorSpec, ProbDist, Temperature};

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Runtime(String),
    #[error("{0}")]
    Assertion(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Io(_) | CliError::Runtime(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Assertion(_) => 3,
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<RecordError> for CliError {
    fn from(e: RecordError) -> Self {
        if e.is_validation() {
            CliError::Usage(e.to_string())
        } else {
            CliError::Io(e.to_string())
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Parser)]
#[command(name = "softkd", version, about = "Probability-domain softening for knowledge distillation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Soften each distribution of a JSONL file.
    Soften(SoftenArgs),
    /// Complete top-k records into full distributions.
    Complete(CompleteArgs),
    /// Check the five softening axioms for one operator family.
    Verify(VerifyArgs),
    /// Compare the distilled students two operators induce.
    Equiv(EquivArgs),
    /// Run every experiment enabled in the config.
    Simulate(SimArgs),
    /// Run only the bias-variance experiment.
    Biasvar(SimArgs),
    /// Run only the convergence sweep.
    Sweep(SimArgs),
}

#[derive(Args)]
struct OutputArgs {
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Fixed decimals for probabilities instead of shortest round-trip.
    #[arg(long)]
    decimals: Option<usize>,
}

#[derive(Args)]
struct SoftenArgs {
    #[arg(long)]
    op: Family,
    #[arg(long, default_value_t = 1.0)]
    temp: f64,
    /// JSONL input, one `{"p": [..]}` per line; `-` reads stdin.
    #[arg(long = "in")]
    input: PathBuf,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct CompleteArgs {
    #[arg(long)]
    strategy: Completion,
    /// Vocabulary size for records that omit `V`.
    #[arg(long)]
    vocab: Option<usize>,
    /// JSONL input, one `{"V": .., "topk": [[id, p], ..]}` per line.
    #[arg(long = "in")]
    input: PathBuf,
    /// Also soften the completed distribution.
    #[arg(long)]
    op: Option<Family>,
    #[arg(long, default_value_t = 1.0)]
    temp: f64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    op: Family,
    #[arg(long)]
    samples: Option<usize>,
    /// Overrides both the config seed and SOFTKD_SEED.
    #[arg(long)]
    seed: Option<u64>,
    /// JSON axiom-check config; missing fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    exec: Option<Exec>,
    /// Report file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ClassKind {
    Grid,
    Unrestricted,
}

#[derive(Args)]
struct EquivArgs {
    #[arg(long)]
    op_a: Family,
    #[arg(long)]
    op_b: Family,
    #[arg(long, value_enum, default_value_t = ClassKind::Unrestricted)]
    class: ClassKind,
    #[arg(long)]
    v: usize,
    /// Grid resolution, required for `--class grid`.
    #[arg(long)]
    g: Option<usize>,
    #[arg(long, default_value_t = 2.0)]
    temp: f64,
    /// JSONL teacher distributions; random interior teachers when omitted.
    #[arg(long)]
    teachers: Option<PathBuf>,
    /// Number of random teachers.
    #[arg(long, default_value_t = 20)]
    n_teachers: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Exec {
    Sequential,
    Parallel,
}

impl From<Exec> for ExecMode {
    fn from(e: Exec) -> Self {
        match e {
            Exec::Sequential => ExecMode::Sequential,
            Exec::Parallel => ExecMode::Parallel,
        }
    }
}

#[derive(Args)]
struct SimArgs {
    /// Experiment config; the built-in default when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Overrides both the config seed and SOFTKD_SEED.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    exec: Option<Exec>,
}

fn open_input(path: &Path) -> Result<Box<dyn BufRead>> {
    if path == Path::new("-") {
        return Ok(Box::new(BufReader::new(io::stdin())));
    }
    let f = File::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(Box::new(BufReader::new(f)))
}

fn temperature(t: f64) -> Result<Temperature> {
    Temperature::new(t).map_err(|e| CliError::Usage(e.to_string()))
}

fn check_out(path: Option<&Path>) -> Result<()> {
    if let Some(p) = path {
        output::check_writable(p)?;
    }
    Ok(())
}

fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Usage(format!("{SEED_ENV} is not an unsigned integer: {v:?}"))),
        Err(_) => Ok(None),
    }
}

fn write_probs(out: &OutputArgs, dists: &[ProbDist]) -> Result<()> {
    output::emit(out.output_path(), |w| write_dists(w, dists, out.decimals))?;
    Ok(())
}

impl OutputArgs {
    fn output_path(&self) -> Option<&Path> {
        self.out.as_deref()
    }
}

fn cmd_soften(a: SoftenArgs) -> Result<()> {
    let t = temperature(a.temp)?;
    check_out(a.output.output_path())?;
    let dists = read_dists(open_input(&a.input)?)?;
    let spec = OperatorSpec::new(a.op);
    let out = dists
        .iter()
        .enumerate()
        .map(|(i, p)| {
            softkd_core::softening::soften(&spec, p, t).map_err(|e| CliError::Usage(format!("record {}: {e}", i + 1)))
        })
        .collect::<Result<Vec<_>>>()?;
    write_probs(&a.output, &out)
}

fn cmd_complete(a: CompleteArgs) -> Result<()> {
    let t = temperature(a.temp)?;
    check_out(a.output.output_path())?;
    let records = read_truncated_with(open_input(&a.input)?, a.vocab)?;
    let out = records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let done = match a.op {
                Some(f) => soften_truncated(&OperatorSpec::new(f), r, a.strategy, t),
                None => complete(r, a.strategy),
            };
            done.map_err(|e| CliError::Usage(format!("record {}: {e}", i + 1)))
        })
        .collect::<Result<Vec<_>>>()?;
    write_probs(&a.output, &out)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn cmd_verify(a: VerifyArgs) -> Result<()> {
    check_out(a.out.as_deref())?;
    let mut cfg: AxiomConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => AxiomConfig::default(),
    };
    if let Some(s) = a.seed.or(env_seed()?) {
        cfg.seed = s;
    }
    if let Some(n) = a.samples {
        cfg.n_samples = n;
    }
    if let Some(e) = a.exec {
        cfg.exec = e.into();
    }
    let report = verify_all(&OperatorSpec::new(a.op), &cfg).map_err(|e| CliError::Usage(e.to_string()))?;
    output::emit(a.out.as_deref(), |w| {
        serde_json::to_writer_pretty(&mut *w, &report)?;
        writeln!(w)
    })?;
    for r in &report.results {
        eprintln!(
            "axiom {} ({}): {}",
            r.axiom.number(),
            r.axiom.name(),
            if r.pass { "pass" } else { "FAIL" }
        );
    }
    if report.pass {
        Ok(())
    } else {
        let failed: Vec<String> = report.failed().map(|r| format!("axiom {}", r.axiom.number())).collect();
        Err(CliError::Assertion(format!("{} violates {}", a.op, failed.join(", "))))
    }
}

fn cmd_equiv(a: EquivArgs) -> Result<()> {
    let t = temperature(a.temp)?;
    check_out(a.out.as_deref())?;
    let class = match a.class {
        ClassKind::Unrestricted => StudentClass::Unrestricted { v: a.v },
        ClassKind::Grid => {
            let g = a.g.ok_or_else(|| CliError::Usage("--class grid needs --g".into()))?;
            StudentClass::SimplexGrid { v: a.v, g }
        }
    };
    let teachers = match &a.teachers {
        Some(p) => read_dists(open_input(p)?)?,
        None => {
            let seed = a.seed.or(env_seed()?).unwrap_or(0);
            let mut rng = rng_from(seed);
            (0..a.n_teachers)
                .map(|_| sample_interior_with(&mut rng, a.v, 1.0))
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| CliError::Usage(e.to_string()))?
        }
    };
    let (op_a, op_b) = (OperatorSpec::new(a.op_a), OperatorSpec::new(a.op_b));
    let verdict = kd_equiv_check(&op_a, &op_b, class, &teachers, t).map_err(|e| CliError::Usage(e.to_string()))?;
    output::emit(a.out.as_deref(), |w| {
        serde_json::to_writer_pretty(&mut *w, &verdict)?;
        writeln!(w)
    })?;
    eprintln!(
        "{} and {}: {}",
        a.op_a,
        a.op_b,
        if verdict.equivalent { "equivalent" } else { "not equivalent" }
    );
    Ok(())
}

#[derive(Clone, Copy, PartialEq)]
enum Phase {
    All,
    BiasVar,
    Sweep,
}

fn load_experiment(a: &SimArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
            ExperimentConfig::from_json(&text).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?
        }
        None => ExperimentConfig::default(),
    };
    let env = std::env::var(SEED_ENV).ok();
    cfg.override_seed(env.as_deref()).map_err(|e| CliError::Usage(e.to_string()))?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(e) = a.exec {
        cfg.exec = e.into();
    }
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(cfg)
}

fn cmd_simulate(a: SimArgs, phase: Phase) -> Result<()> {
    let mut cfg = load_experiment(&a)?;
    match phase {
        Phase::All => {}
        Phase::BiasVar => {
            cfg.homotopy = None;
            cfg.convergence = None;
            if cfg.biasvar.is_none() {
                return Err(CliError::Usage("config has no biasvar section".into()));
            }
        }
        Phase::Sweep => {
            cfg.homotopy = None;
            cfg.biasvar = None;
            if cfg.convergence.is_none() {
                return Err(CliError::Usage("config has no convergence section".into()));
            }
        }
    }
    std::fs::create_dir_all(&a.out).map_err(|e| CliError::Io(format!("{}: {e}", a.out.display())))?;
    let out = run_experiment(&cfg).map_err(|e| match e {
        SimError::BadParams(_) | SimError::BadRho(_) => CliError::Usage(e.to_string()),
        _ => CliError::Runtime(e.to_string()),
    })?;
    if cfg.homotopy.is_some() {
        output::write_csv(&a.out.join("stages.csv"), &out.stages)?;
    }
    if cfg.biasvar.is_some() {
        output::write_csv(&a.out.join("biasvar.csv"), &out.biasvar)?;
    }
    if cfg.convergence.is_some() {
        output::write_csv(&a.out.join("convergence.csv"), &out.convergence)?;
    }
    output::write_json(&a.out.join("summary.json"), &out.summary)?;
    for x in &out.summary.assertions {
        eprintln!(
            "{:<4} {:<26} {:<19} {}",
            if x.pass { "pass" } else { "FAIL" },
            x.name,
            x.operator,
            x.detail
        );
    }
    if out.summary.pass {
        Ok(())
    } else {
        let n = out.summary.assertions.iter().filter(|x| !x.pass).count();
        Err(CliError::Assertion(format!("{n} experiment assertions failed")))
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Soften(a) => cmd_soften(a),
        Command::Complete(a) => cmd_complete(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Equiv(a) => cmd_equiv(a),
        Command::Simulate(a) => cmd_simulate(a, Phase::All),
        Command::Biasvar(a) => cmd_simulate(a, Phase::BiasVar),
        Command::Sweep(a) => cmd_simulate(a, Phase::Sweep),
    }
}

fn main() -> ExitCode {
    // clap exits with 2 on usage errors and 0 for --help / --version.
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("softkd: {e}");
            ExitCode::from(e.code())
        }
    }
}
