//! `tradenet`: validate scenarios, run the dynamics, and analyse markets.
//!
//! Exit codes: 0 ok, 1 I/O, 2 validation, 3 round cap or script exhausted,
//! 4 verification failure, 5 documented impossibility.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::Value;

use tradenet::equilibrium::{solve_ce_prices, Arrangement};
use tradenet::game::OfferProfile;
use tradenet::rational::{parse_rational, Rational};
use tradenet::report::{self, exit, ReportError};
use tradenet::runner::{csv_text, execute, plan, Algorithm, RunError, RunOutput, RunRequest};
use tradenet::scenario::{resolve_path, Scenario, FIXTURES_ENV};

#[derive(Parser)]
#[command(
    name = "tradenet",
    version,
    about = "Trading-network markets: equilibria, dynamics and core fairness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a scenario and report structure and substitutability.
    Validate {
        #[arg(long)]
        scenario: String,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Run offer or clock dynamics; writes trace.jsonl, summary.csv and terminal.json.
    Run(RunArgs),
    /// Run many seeds in parallel; writes summary.csv ordered by seed.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Number of seeds.
        #[arg(long, default_value_t = 100)]
        seeds: u64,
        /// First seed; defaults to --seed or 0.
        #[arg(long)]
        seed_start: Option<u64>,
        /// Also write traces/seed-<n>.jsonl.
        #[arg(long)]
        traces: bool,
    },
    /// Analyse a scenario and print verified JSON.
    Analyze {
        what: Analysis,
        #[command(flatten)]
        args: AnalyzeArgs,
    },
    /// Same as `analyze core`.
    Core(AnalyzeArgs),
    /// Same as `analyze fairness`.
    Fairness(AnalyzeArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AlgorithmArg {
    Offers,
    Clock,
}

#[derive(Clone, Copy, ValueEnum)]
enum Analysis {
    Ce,
    NeCheck,
    ExtendCe,
    Core,
    Fairness,
    Essential,
    Reduce,
    Taxed,
}

#[derive(Args, Clone)]
struct RunArgs {
    #[arg(long)]
    scenario: String,
    /// Named run configuration from the scenario; flags override its fields.
    #[arg(long)]
    run: Option<String>,
    #[arg(long, value_enum)]
    algorithm: Option<AlgorithmArg>,
    #[arg(long)]
    seed: Option<u64>,
    /// Rational step such as 1/2, or `auto` for the clock.
    #[arg(long)]
    epsilon: Option<String>,
    /// Round cap (offers) or horizon (clock).
    #[arg(long)]
    rounds: Option<usize>,
    /// Named scripted schedule.
    #[arg(long)]
    schedule: Option<String>,
    /// Named offer profile used as the initial offers.
    #[arg(long)]
    profile: Option<String>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// What to print on stdout: terminal JSON or the summary row.
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Args, Clone)]
struct AnalyzeArgs {
    #[arg(long)]
    scenario: String,
    #[arg(long)]
    epsilon: Option<String>,
    /// Named offer profile (ne-check, extend-ce).
    #[arg(long)]
    profile: Option<String>,
    /// Named outcome (core, taxed).
    #[arg(long)]
    outcome: Option<String>,
    /// Tax rate in [0, 1] (taxed).
    #[arg(long)]
    alpha: Option<String>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

/// A failure with its exit code.
struct Failure {
    code: i32,
    message: String,
    json: Option<Value>,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
            json: None,
        }
    }

    fn invalid(message: impl Into<String>) -> Self {
        Failure::new(exit::VALIDATION, message)
    }
}

impl From<ReportError> for Failure {
    fn from(e: ReportError) -> Self {
        Failure {
            code: e.exit_code(),
            message: e.to_string(),
            json: Some(e.to_json()),
        }
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        Failure {
            code: e.code,
            message: e.message,
            json: e.json,
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::new(exit::IO, format!("{}: {e}", path.display()))
}

fn load(arg: &str) -> Result<Scenario, Failure> {
    let fixtures = std::env::var_os(FIXTURES_ENV).map(PathBuf::from);
    let path = resolve_path(arg, fixtures.as_deref());
    Scenario::load(&path).map_err(|e| {
        let code = match e {
            tradenet::scenario::ScenarioError::Io { .. } => exit::IO,
            _ => exit::VALIDATION,
        };
        Failure::new(code, format!("{}: {e}", path.display()))
    })
}

fn parse_q(text: &str, what: &str) -> Result<Rational, Failure> {
    parse_rational(text).map_err(|e| Failure::invalid(format!("{what}: {}", e.0)))
}

fn print_value(v: &Value, format: Format) {
    let text = match format {
        Format::Json => serde_json::to_string_pretty(v).expect("serialisable"),
        Format::Csv => flat_csv(v),
    };
    emit(&(text + "\n"));
}

/// Writes to stdout. A closed pipe (`| head`) is not an error worth reporting.
fn emit(text: &str) {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => {}
        Err(e) => eprintln!("error: stdout: {e}"),
        Ok(()) => {}
    }
}

/// `path,value` rows for every leaf of a JSON value.
fn flat_csv(v: &Value) -> String {
    fn walk(prefix: &str, v: &Value, out: &mut Vec<(String, String)>) {
        match v {
            Value::Object(m) => {
                for (k, x) in m {
                    walk(&join(prefix, k), x, out);
                }
            }
            Value::Array(a) if a.iter().all(|x| !x.is_object() && !x.is_array()) => {
                let items: Vec<String> = a.iter().map(leaf).collect();
                out.push((prefix.to_string(), items.join(" ")));
            }
            Value::Array(a) => {
                for (k, x) in a.iter().enumerate() {
                    walk(&join(prefix, &k.to_string()), x, out);
                }
            }
            _ => out.push((prefix.to_string(), leaf(v))),
        }
    }
    fn join(prefix: &str, k: &str) -> String {
        if prefix.is_empty() {
            k.to_string()
        } else {
            format!("{prefix}.{k}")
        }
    }
    fn leaf(v: &Value) -> String {
        match v {
            Value::String(s) => s.clone(),
            Value::Null => String::new(),
            other => other.to_string(),
        }
    }
    let mut rows = Vec::new();
    walk("", v, &mut rows);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["path", "value"]).expect("in-memory");
    for (k, x) in rows {
        w.write_record([k, x]).expect("in-memory");
    }
    String::from_utf8(w.into_inner().expect("in-memory"))
        .expect("utf-8")
        .trim_end()
        .to_string()
}

fn validate(scenario: &str, format: Format) -> Result<i32, Failure> {
    let sc = load(scenario)?;
    print_value(&report::validate_report(&sc.market), format);
    Ok(exit::OK)
}

fn request(a: &RunArgs) -> RunRequest {
    RunRequest {
        run: a.run.clone(),
        algorithm: a.algorithm.map(|x| match x {
            AlgorithmArg::Offers => Algorithm::Offers,
            AlgorithmArg::Clock => Algorithm::Clock,
        }),
        seed: a.seed,
        epsilon: a.epsilon.clone(),
        rounds: a.rounds,
        schedule: a.schedule.clone(),
        profile: a.profile.clone(),
    }
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| io_failure(path, e))
}

fn run(a: &RunArgs) -> Result<i32, Failure> {
    let sc = load(&a.scenario)?;
    let plan = plan(&sc, &request(a))?;
    let out = execute(&sc, &plan, plan.seed, true)?;
    std::fs::create_dir_all(&a.out).map_err(|e| io_failure(&a.out, e))?;
    write(&a.out.join("trace.jsonl"), &out.trace)?;
    let summary = csv_text(&out.header, std::slice::from_ref(&out.row));
    write(&a.out.join("summary.csv"), &summary)?;
    let terminal = serde_json::to_string_pretty(&out.terminal).expect("serialisable") + "\n";
    write(&a.out.join("terminal.json"), &terminal)?;
    match a.format {
        Format::Json => emit(&terminal),
        Format::Csv => emit(&summary),
    }
    Ok(out.code)
}

fn sweep(a: &RunArgs, seeds: u64, start: Option<u64>, traces: bool) -> Result<i32, Failure> {
    let sc = load(&a.scenario)?;
    let plan = plan(&sc, &request(a))?;
    if plan.script.is_some() {
        return Err(Failure::invalid(
            "a sweep draws seeded schedules; drop --schedule",
        ));
    }
    let first = start.or(a.seed).unwrap_or(0);
    let results: Vec<Result<RunOutput, RunError>> = (first..first + seeds)
        .into_par_iter()
        .map(|s| execute(&sc, &plan, s, traces))
        .collect();
    std::fs::create_dir_all(&a.out).map_err(|e| io_failure(&a.out, e))?;
    if traces {
        let dir = a.out.join("traces");
        std::fs::create_dir_all(&dir).map_err(|e| io_failure(&dir, e))?;
    }
    let mut rows = Vec::new();
    let mut header = Vec::new();
    let mut code = exit::OK;
    for (k, r) in results.into_iter().enumerate() {
        let seed = first + k as u64;
        let out = r.map_err(|f| Failure::new(f.code, format!("seed {seed}: {}", f.message)))?;
        if traces {
            write(
                &a.out.join("traces").join(format!("seed-{seed}.jsonl")),
                &out.trace,
            )?;
        }
        header = out.header;
        rows.push(out.row);
        code = code.max(out.code);
    }
    let summary = csv_text(&header, &rows);
    write(&a.out.join("summary.csv"), &summary)?;
    if let Format::Csv = a.format {
        emit(&summary);
    } else {
        let capped = rows
            .iter()
            .filter(|r| r.get(4).is_some_and(|t| t != "converged") && r[1] == "offers")
            .count();
        emit(&format!(
            "{}\n",
            serde_json::json!({ "seeds": seeds, "first_seed": first, "cap_hits": capped })
        ));
    }
    Ok(code)
}

fn analyze(what: Analysis, a: &AnalyzeArgs) -> Result<i32, Failure> {
    let sc = load(&a.scenario)?;
    let m = &sc.market;
    let epsilon = || -> Result<Rational, Failure> {
        parse_q(
            a.epsilon
                .as_deref()
                .ok_or_else(|| Failure::invalid("--epsilon is required"))?,
            "epsilon",
        )
    };
    let profile = || -> Result<OfferProfile, Failure> {
        sc.profile(
            a.profile
                .as_deref()
                .ok_or_else(|| Failure::invalid("--profile is required"))?,
        )
        .map_err(Failure::invalid)
    };
    let outcome = a
        .outcome
        .as_deref()
        .map(|o| sc.named_outcome(o))
        .transpose()
        .map_err(Failure::invalid)?;
    let verified = match what {
        Analysis::Ce => report::ce_report(m)?,
        Analysis::NeCheck => report::ne_check_report(m, &profile()?, &epsilon()?)?,
        Analysis::ExtendCe => report::extend_report(m, &profile()?, &epsilon()?)?,
        Analysis::Core => report::core_report(m, outcome.as_ref())?,
        Analysis::Fairness => report::fairness_report(m)?,
        Analysis::Essential => report::essential_report(m)?,
        Analysis::Reduce => report::reduce_report(m)?,
        Analysis::Taxed => {
            let alpha = parse_q(
                a.alpha
                    .as_deref()
                    .ok_or_else(|| Failure::invalid("--alpha is required"))?,
                "alpha",
            )?;
            let arr = match &outcome {
                Some(o) => Arrangement {
                    prices: o.prices.as_full().ok_or_else(|| {
                        Failure::invalid("taxed check needs prices on every trade")
                    })?,
                    allocation: o.allocation,
                },
                None => solve_ce_prices(m).map_err(ReportError::from)?,
            };
            report::taxed_report(m, &arr, &alpha)?
        }
    };
    print_value(verified.json(), a.format);
    Ok(exit::OK)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Validate { scenario, format } => validate(scenario, *format),
        Command::Run(a) => run(a),
        Command::Sweep {
            run,
            seeds,
            seed_start,
            traces,
        } => sweep(run, *seeds, *seed_start, *traces),
        Command::Analyze { what, args } => analyze(*what, args),
        Command::Core(args) => analyze(Analysis::Core, args),
        Command::Fairness(args) => analyze(Analysis::Fairness, args),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(f) => {
            if let Some(j) = f.json {
                emit(&(serde_json::to_string_pretty(&j).expect("serialisable") + "\n"));
            }
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code as u8)
        }
    }
}
