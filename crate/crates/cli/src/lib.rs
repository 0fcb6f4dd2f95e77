//! Argument parsing and command dispatch for the `vawalk` binary.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::Value;
use vawalk_core::engine::{evolve, DEFAULT_BUDGET_MIB, DEFAULT_PRUNE};
use vawalk_core::experiments::{decouple_curve, lclt_curve, noise_curve, to_csv};
use vawalk_core::harmonic::{decomposition_csv, harmonic_decompose};
use vawalk_core::measure::{
    detect_period, generation_diagnostics, DiagnosticStatus, MeasureJson, BUILTIN_MEASURES,
    DEFAULT_GENERATION_DEPTH, DEFAULT_PERIOD_BOUND,
};
use vawalk_core::scalar::parse_q;
use vawalk_core::spectral::covariance;
use vawalk_core::{
    CltReport, EngineConfig, Error, ExperimentConfig, FiniteMeasure, Mode, Prob, Scalar, WeightedDiagram, Q,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;
pub const EXIT_INVARIANT: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "vawalk", version, about = "Random walks on virtually abelian groups")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Worker thread cap (defaults to all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Accepted for compatibility; every computation is deterministic.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Drift, covariance, transfer projector and period of a measure.
    Analyze {
        /// Built-in name (see `examples`) or path to a measure JSON file.
        measure: String,
        #[arg(long, value_enum, default_value_t = ModeArg::Exact)]
        mode: ModeArg,
        /// Write the JSON report here as well as to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the measure, with its group spelled out, as JSON.
        #[arg(long)]
        export: Option<PathBuf>,
    },
    /// Distance from the time-averaged walk to its Gaussian approximation.
    Lclt {
        measure: String,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Distance between the coupled pair walk and the independent pair.
    Noise {
        measure: String,
        /// Correlation parameters in (0, 1]; fractions like 1/4 stay exact.
        #[arg(long, value_delimiter = ',', required = true)]
        rho: Vec<String>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Distance from a walk on a product group to the product of its marginals.
    Decouple {
        measure: String,
        #[command(flatten)]
        run: RunArgs,
    },
    /// List the built-in fixtures with noise-sensitivity verdicts.
    Examples,
    /// Debug output: distribution, diagram or harmonic decomposition as CSV.
    Dump {
        measure: String,
        #[arg(long, value_enum, default_value_t = DumpKind::Distribution)]
        kind: DumpKind,
        /// Step count for `--kind distribution`.
        #[arg(long, default_value_t = 1)]
        n: u64,
        /// Basis vector index for `--kind harmonic`.
        #[arg(long, default_value_t = 0)]
        basis: usize,
        #[arg(long, value_enum, default_value_t = ModeArg::Exact)]
        mode: ModeArg,
        #[arg(long, default_value_t = DEFAULT_PRUNE)]
        prune: f64,
        #[arg(long, default_value_t = DEFAULT_BUDGET_MIB)]
        budget_mib: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Step counts.
    #[arg(long, value_delimiter = ',', required = true)]
    pub n: Vec<u64>,
    #[arg(long, value_enum, default_value_t = ModeArg::Float)]
    pub mode: ModeArg,
    /// Float-mode pruning threshold per coset.
    #[arg(long, default_value_t = DEFAULT_PRUNE)]
    pub prune: f64,
    #[arg(long, default_value_t = DEFAULT_BUDGET_MIB)]
    pub budget_mib: u64,
    /// CSV output path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Exact,
    Float,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Exact => Mode::Exact,
            ModeArg::Float => Mode::Float,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DumpKind {
    Distribution,
    Diagram,
    Harmonic,
}

/// Failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::BudgetExceeded { .. } => EXIT_BUDGET,
            Error::Invariant(_) => EXIT_INVARIANT,
            Error::Schema(_)
            | Error::InvalidGroup(_)
            | Error::InvalidMeasure(_)
            | Error::OutOfRange(_)
            | Error::ModeMismatch(_)
            | Error::DimensionMismatch { .. }
            | Error::Reducible { .. }
            | Error::NonUniformStationary
            | Error::NotProduct => EXIT_CONFIG,
            _ => EXIT_OTHER,
        };
        Failure { code, message: e.to_string() }
    }
}

fn config_error(message: impl Into<String>) -> Failure {
    Failure { code: EXIT_CONFIG, message: message.into() }
}

type Outcome<T = ()> = Result<T, Failure>;

/// Resolve a built-in name or read a JSON measure file.
pub fn load_measure(reference: &str) -> Outcome<FiniteMeasure> {
    if BUILTIN_MEASURES.contains(&reference) {
        return Ok(FiniteMeasure::builtin(reference)?);
    }
    let path = Path::new(reference);
    if !path.exists() {
        return Err(config_error(format!(
            "\"{reference}\" is neither a built-in measure ({}) nor a readable file",
            BUILTIN_MEASURES.join(", ")
        )));
    }
    let text = fs::read_to_string(path).map_err(|e| config_error(format!("cannot read {reference}: {e}")))?;
    let raw: Value =
        serde_json::from_str(&text).map_err(|e| config_error(format!("{reference}: invalid JSON: {e}")))?;
    let j: MeasureJson = serde_json::from_value(raw).map_err(|e| config_error(format!("{reference}: {e}")))?;
    FiniteMeasure::from_json(j).map_err(|e| {
        let mut f = Failure::from(e);
        f.message = format!("{reference}: {}", f.message);
        f
    })
}

fn parse_rho(s: &str) -> Outcome<Prob> {
    let s = s.trim();
    let p = if s.contains('/') {
        Prob::Exact(parse_q(s).ok_or_else(|| config_error(format!("--rho: cannot parse \"{s}\"")))?)
    } else {
        Prob::Float(s.parse().map_err(|_| config_error(format!("--rho: cannot parse \"{s}\"")))?)
    };
    let v = p.to_f64();
    if !(v > 0.0 && v <= 1.0) {
        return Err(config_error(format!("--rho: {s} is outside (0, 1]")));
    }
    Ok(p)
}

fn engine_config(prune: f64, budget_mib: u64) -> Outcome<EngineConfig> {
    if !(0.0..1.0).contains(&prune) {
        return Err(config_error(format!("--prune: {prune} is outside [0, 1)")));
    }
    if budget_mib == 0 {
        return Err(config_error("--budget-mib: must be positive"));
    }
    Ok(EngineConfig::default().with_prune(prune).with_budget_mib(budget_mib))
}

fn experiment_config(run: &RunArgs) -> Outcome<ExperimentConfig> {
    if run.n.is_empty() {
        return Err(config_error("--n: list is empty"));
    }
    Ok(ExperimentConfig { mode: run.mode.into(), engine: engine_config(run.prune, run.budget_mib)? })
}

fn emit(out: Option<&Path>, text: &str) -> Outcome {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Failure { code: EXIT_OTHER, message: format!("{}: {e}", p.display()) }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn show(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn human_report<S: Scalar>(mu: &FiniteMeasure, r: &CltReport<S>) -> String {
    let json = r.to_json();
    let mut s = String::new();
    let spec = mu.spec();
    let _ = writeln!(s, "group: rank {} lattice, {} cosets; measure with {} atoms", spec.rank(), spec.order(), mu.len());
    let zeta: Vec<String> = json["zeta"].as_array().into_iter().flatten().map(show).collect();
    let _ = writeln!(s, "drift zeta: ({})", zeta.join(", "));
    let _ = writeln!(s, "covariance sigma:");
    for row in json["sigma"].as_array().into_iter().flatten() {
        let cells: Vec<String> = row.as_array().into_iter().flatten().map(show).collect();
        let _ = writeln!(s, "  [{}]", cells.join(", "));
    }
    let _ = writeln!(s, "transfer projector:");
    for row in json["projector"].as_array().into_iter().flatten() {
        let cells: Vec<String> = row.as_array().into_iter().flatten().map(show).collect();
        let _ = writeln!(s, "  [{}]", cells.join(", "));
    }
    let _ = writeln!(s, "hom onto Z: {}", r.hom_onto_z);
    match r.period.period {
        Some(q) => {
            let _ = writeln!(s, "period: {q}");
        }
        None => {
            let _ = writeln!(s, "period: undetermined within {} steps", r.period.bound);
        }
    }
    let g = generation_diagnostics(mu, DEFAULT_GENERATION_DEPTH);
    let status = if g.status == DiagnosticStatus::Pass { "ok" } else { "WARNING: support may not generate" };
    let _ = writeln!(s, "generation: {status} ({} of {} cosets reached, lattice spanned: {})", g.cosets_reached, g.order, g.lattice_spans);
    s
}

fn analyze(measure: &str, mode: ModeArg, out: Option<&Path>, export: Option<&Path>) -> Outcome {
    let mu = load_measure(measure)?;
    if let Some(p) = export {
        let text = serde_json::to_string_pretty(&mu.to_json()).expect("serializable");
        emit(Some(p), &format!("{text}\n"))?;
    }
    let (human, json) = match mode {
        ModeArg::Exact => {
            let r = covariance::<Q>(&WeightedDiagram::build(&mu)?)?;
            (human_report(&mu, &r), r.to_json())
        }
        ModeArg::Float => {
            let r = covariance::<f64>(&WeightedDiagram::build(&mu.to_float())?)?;
            (human_report(&mu, &r), r.to_json())
        }
    };
    let json = format!("{}\n", serde_json::to_string_pretty(&json).expect("serializable"));
    print!("{human}\n{json}");
    if let Some(p) = out {
        emit(Some(p), &json)?;
    }
    Ok(())
}

/// One line per built-in fixture: noise sensitive iff the transfer
/// projector vanishes, for aperiodic walks.
pub fn examples_report() -> Outcome<String> {
    let mut s = String::new();
    for name in BUILTIN_MEASURES {
        let mu = FiniteMeasure::builtin(name)?;
        let spec = mu.spec();
        let zero = spec.normalized_transfer().is_zero();
        let period = detect_period(&mu, DEFAULT_PERIOD_BOUND).period;
        let verdict = match (zero, period) {
            (false, _) => "no (nonzero homomorphism onto Z)".to_string(),
            (true, Some(1)) => "yes (transfer projector vanishes, aperiodic)".to_string(),
            (true, Some(q)) => format!("not covered (period {q})"),
            (true, None) => "not covered (period undetermined)".to_string(),
        };
        let _ = writeln!(s, "{name:<16} noise sensitive: {verdict}");
    }
    Ok(s)
}

fn dump(
    measure: &str,
    kind: DumpKind,
    n: u64,
    basis: usize,
    mode: ModeArg,
    engine: EngineConfig,
    out: Option<&Path>,
) -> Outcome {
    let mu = load_measure(measure)?;
    let text = match kind {
        DumpKind::Distribution => evolve(&mu, n, mode.into(), engine)?.to_csv(),
        DumpKind::Diagram => WeightedDiagram::<Q>::build(&mu)?.to_csv(),
        DumpKind::Harmonic => {
            let d = WeightedDiagram::<Q>::build(&mu)?;
            if basis >= d.rank() {
                return Err(config_error(format!("--basis: {basis} is out of range for rank {}", d.rank())));
            }
            let v: Vec<Q> = (0..d.rank()).map(|i| Q::from_integer((i == basis).into())).collect();
            let h = harmonic_decompose(&d, &d.hat_form(&v)?)?;
            decomposition_csv(&d, &h)
        }
    };
    emit(out, &text)
}

/// Execute a parsed command line.
pub fn run(cli: Cli) -> Outcome {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(config_error("--threads: must be positive"));
        }
        // Fails only if the pool was already built, in which case the cap
        // from the first call stays in force.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    match cli.command {
        Command::Analyze { measure, mode, out, export } => analyze(&measure, mode, out.as_deref(), export.as_deref()),
        Command::Lclt { measure, run } => {
            let cfg = experiment_config(&run)?;
            let points = lclt_curve(&load_measure(&measure)?, &run.n, &cfg)?;
            emit(run.out.as_deref(), &to_csv(&points))
        }
        Command::Noise { measure, rho, run } => {
            let cfg = experiment_config(&run)?;
            let rhos = rho.iter().map(|s| parse_rho(s)).collect::<Outcome<Vec<_>>>()?;
            let points = noise_curve(&load_measure(&measure)?, &rhos, &run.n, &cfg)?;
            emit(run.out.as_deref(), &to_csv(&points))
        }
        Command::Decouple { measure, run } => {
            let cfg = experiment_config(&run)?;
            let report = decouple_curve(&load_measure(&measure)?, &run.n, &cfg)?;
            emit(run.out.as_deref(), &to_csv(&report.points))
        }
        Command::Examples => {
            print!("{}", examples_report()?);
            Ok(())
        }
        Command::Dump { measure, kind, n, basis, mode, prune, budget_mib, out } => {
            dump(&measure, kind, n, basis, mode, engine_config(prune, budget_mib)?, out.as_deref())
        }
    }
}
