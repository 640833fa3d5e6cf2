//! Scenario runs: resolve a named run plus overrides into a plan, execute it,
//! and render the trace, summary row and terminal state.

use serde_json::Value;

use crate::dynamics::{
    convergence_horizon, run_offer_dynamics, run_price_dynamics, DynamicsError, OfferConfig,
    PriceConfig, Scheduler, StepSize, Termination, DEFAULT_ROUND_CAP,
};
use crate::game::OfferProfile;
use crate::rational::{format_rational, parse_rational, Rational};
use crate::report::{self, exit, ReportError};
use crate::scenario::{Num, Scenario};
use crate::welfare::social_welfare;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Algorithm {
    Offers,
    Clock,
}

/// Overrides on top of a scenario's named run; `None` keeps the run's value.
#[derive(Clone, Debug, Default)]
pub struct RunRequest {
    pub run: Option<String>,
    pub algorithm: Option<Algorithm>,
    pub seed: Option<u64>,
    /// Rational text, or `auto` for the clock.
    pub epsilon: Option<String>,
    pub rounds: Option<usize>,
    pub schedule: Option<String>,
    pub profile: Option<String>,
}

#[derive(Debug, thiserror::Error)]
#[error("{message}")]
pub struct RunError {
    pub code: i32,
    pub message: String,
    /// Structured error body for result-level failures.
    pub json: Option<Value>,
}

impl RunError {
    pub fn invalid(message: impl Into<String>) -> Self {
        RunError {
            code: exit::VALIDATION,
            message: message.into(),
            json: None,
        }
    }
}

impl From<ReportError> for RunError {
    fn from(e: ReportError) -> Self {
        RunError {
            code: e.exit_code(),
            message: e.to_string(),
            json: Some(e.to_json()),
        }
    }
}

impl From<DynamicsError> for RunError {
    fn from(e: DynamicsError) -> Self {
        RunError::invalid(e.to_string())
    }
}

/// Fully resolved settings of a run.
#[derive(Clone, Debug)]
pub struct Plan {
    pub algorithm: Algorithm,
    /// None for the automatic clock step.
    pub epsilon: Option<Rational>,
    pub rounds: Option<usize>,
    pub seed: u64,
    pub script: Option<Vec<usize>>,
    pub offers: OfferProfile,
    pub prices: Vec<Rational>,
    pub bound: Option<Rational>,
}

pub fn plan(sc: &Scenario, req: &RunRequest) -> Result<Plan, RunError> {
    let cfg = match &req.run {
        Some(name) => sc.run(name).map_err(RunError::invalid)?.clone(),
        None => Default::default(),
    };
    let algorithm = match (req.algorithm, cfg.algorithm.as_deref()) {
        (Some(x), _) => x,
        (None, Some("clock")) => Algorithm::Clock,
        _ => Algorithm::Offers,
    };
    let eps_text = match (&req.epsilon, &cfg.epsilon) {
        (Some(t), _) => Some(t.clone()),
        (None, Some(Num::Text(s))) => Some(s.clone()),
        (None, Some(n)) => Some(format_rational(
            &n.to_rational().map_err(RunError::invalid)?,
        )),
        _ => None,
    };
    let epsilon = match eps_text.as_deref().map(str::trim) {
        None | Some("auto") => None,
        Some(t) => {
            Some(parse_rational(t).map_err(|e| RunError::invalid(format!("epsilon: {}", e.0)))?)
        }
    };
    if algorithm == Algorithm::Offers && epsilon.is_none() {
        return Err(RunError::invalid("offer dynamics needs a rational epsilon"));
    }
    let schedule = req.schedule.clone().or(cfg.schedule.clone());
    let script = schedule
        .map(|s| sc.schedule(&s))
        .transpose()
        .map_err(RunError::invalid)?;
    let m = sc.market.m();
    let zeros = || vec![Rational::from_integer(0.into()); m];
    let offers = match (&req.profile, &cfg.initial_offers) {
        (Some(p), _) => sc.profile(p).map_err(RunError::invalid)?,
        (None, Some(spec)) => sc.offers(spec).map_err(RunError::invalid)?,
        (None, None) => OfferProfile::new(zeros(), zeros()),
    };
    let prices = match &cfg.initial_prices {
        Some(map) => sc.prices(map).map_err(RunError::invalid)?,
        None => zeros(),
    };
    let bound = cfg
        .bound
        .as_ref()
        .map(Num::to_rational)
        .transpose()
        .map_err(RunError::invalid)?;
    Ok(Plan {
        algorithm,
        epsilon,
        rounds: req.rounds.or(cfg.rounds),
        seed: req.seed.or(cfg.seed).unwrap_or(0),
        script,
        offers,
        prices,
        bound,
    })
}

/// Result of one run.
#[derive(Clone, Debug)]
pub struct RunOutput {
    /// JSONL, one record per round including round 0; empty without a trace.
    pub trace: String,
    pub header: Vec<&'static str>,
    pub row: Vec<String>,
    /// Verified terminal state.
    pub terminal: Value,
    /// 0, or the cap-hit code when the offer dynamics stopped early.
    pub code: i32,
}

pub fn execute(
    sc: &Scenario,
    plan: &Plan,
    seed: u64,
    keep_trace: bool,
) -> Result<RunOutput, RunError> {
    let m = &sc.market;
    let scheduler = match &plan.script {
        Some(s) => Scheduler::Scripted(s.clone()),
        None => Scheduler::Seeded(seed),
    };
    let seed_col = if plan.script.is_some() {
        String::new()
    } else {
        seed.to_string()
    };
    match plan.algorithm {
        Algorithm::Offers => {
            let eps = plan
                .epsilon
                .clone()
                .ok_or_else(|| RunError::invalid("offer dynamics needs a rational epsilon"))?;
            let mut cfg = OfferConfig::new(eps.clone(), plan.offers.clone());
            cfg.round_cap = plan.rounds.unwrap_or(DEFAULT_ROUND_CAP);
            cfg.keep_trace = keep_trace;
            let run = run_offer_dynamics(m, &cfg, &scheduler)?;
            let terminal = report::offer_terminal(m, &run, &eps)?;
            let active = run.terminal.active();
            Ok(RunOutput {
                trace: report::jsonl(run.trace.iter().map(|r| report::offer_record_json(m, r))),
                header: vec![
                    "seed",
                    "algorithm",
                    "epsilon",
                    "rounds",
                    "termination",
                    "unsatisfied",
                    "active",
                    "welfare",
                ],
                row: vec![
                    seed_col,
                    "offers".into(),
                    format_rational(&eps),
                    run.rounds.to_string(),
                    report::termination_name(run.termination).into(),
                    run.unsatisfied.len().to_string(),
                    m.bundle_ids(active).join(" "),
                    social_welfare(m, active).to_string(),
                ],
                terminal: terminal.json().clone(),
                code: if run.termination == Termination::Converged {
                    exit::OK
                } else {
                    exit::CAP_HIT
                },
            })
        }
        Algorithm::Clock => {
            let bound = plan.bound.clone().unwrap_or_else(|| m.value_bound());
            let rounds = plan
                .rounds
                .unwrap_or_else(|| convergence_horizon(m, &bound));
            let step = match &plan.epsilon {
                Some(e) => StepSize::Fixed(e.clone()),
                None => StepSize::Auto,
            };
            let mut cfg = PriceConfig::new(step, rounds, plan.prices.clone());
            cfg.bound = plan.bound.clone();
            cfg.keep_trace = keep_trace;
            let run = run_price_dynamics(m, &cfg, &scheduler)?;
            let terminal = report::price_terminal(m, &run)?;
            let t = terminal.json();
            let field = |k: &str| t[k].as_str().unwrap_or_default().to_string();
            Ok(RunOutput {
                trace: report::jsonl(run.trace.iter().map(|r| report::price_record_json(m, r))),
                header: vec![
                    "seed",
                    "algorithm",
                    "epsilon",
                    "rounds",
                    "lyapunov_average",
                    "ce_gap_average",
                    "ce_gap_last",
                ],
                row: vec![
                    seed_col,
                    "clock".into(),
                    format_rational(&run.epsilon),
                    run.rounds.to_string(),
                    field("lyapunov_average"),
                    field("ce_gap_average"),
                    field("ce_gap_last"),
                ],
                terminal: t.clone(),
                code: exit::OK,
            })
        }
    }
}

/// CSV text with a header line.
pub fn csv_text(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory");
    for r in rows {
        w.write_record(r).expect("in-memory");
    }
    String::from_utf8(w.into_inner().expect("in-memory")).expect("utf-8")
}
