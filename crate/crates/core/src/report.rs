//! JSON reports for the command-line tool. Analysis results are built as
//! [`Verified`] values, so each one has passed its verifier before emission.

use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::coop::{self, CoopError};
use crate::demand::{is_fully_substitutable, GridError, PriceGrid};
use crate::dynamics::{
    ce_gap, lyapunov, potential_phi, OfferRecord, OfferRun, PriceRecord, PriceRun, Termination,
};
use crate::equilibrium::{
    ce_prices_for, is_competitive_equilibrium, solve_ce_prices, Arrangement, EquilibriumError,
    MarketOutcome,
};
use crate::game::{
    agent_game_utility, best_deviation, extend_ne_to_ce, is_integral, is_nash, ExtendError,
    GameError, NashVerdict, OfferProfile,
};
use crate::market::{Bundle, Market};
use crate::rational::{ExtValue, Rational};
use crate::reduction::{
    default_facet_grid, lip_facets, map_allocation, non_substitutes_facet, tau, to_auction,
    unmap_allocation, verify_ce_mapping, verify_demand_mapping, FacetError, MAX_FACET_DIM,
};
use crate::scenario::{
    agent_ids, agent_map, arrangement_json, ext, ids, offers_json, price_map, q, scoped_price_map,
    VerificationFailed, Verified,
};
use crate::welfare::{efficient_allocations, market_value, social_welfare};

/// Exit codes of the command-line tool.
pub mod exit {
    pub const OK: i32 = 0;
    pub const IO: i32 = 1;
    pub const VALIDATION: i32 = 2;
    pub const CAP_HIT: i32 = 3;
    pub const VERIFICATION: i32 = 4;
    pub const IMPOSSIBLE: i32 = 5;
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Verification(#[from] VerificationFailed),
    /// A documented impossibility, e.g. no extension at the tightness bound.
    #[error("{message}")]
    Impossible { kind: &'static str, message: String },
}

impl ReportError {
    pub fn exit_code(&self) -> i32 {
        match self {
            ReportError::Invalid(_) => exit::VALIDATION,
            ReportError::Verification(_) => exit::VERIFICATION,
            ReportError::Impossible { .. } => exit::IMPOSSIBLE,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ReportError::Invalid(_) => "invalid_input",
            ReportError::Verification(_) => "verification_failed",
            ReportError::Impossible { kind, .. } => kind,
        }
    }

    pub fn to_json(&self) -> Value {
        json!({ "error": { "kind": self.kind(), "message": self.to_string() } })
    }
}

impl From<CoopError> for ReportError {
    fn from(e: CoopError) -> Self {
        match e {
            CoopError::EmptyCore => ReportError::Impossible {
                kind: "empty_core",
                message: e.to_string(),
            },
            CoopError::ComponentMismatch
            | CoopError::EssentialDisagreement
            | CoopError::Solver(_) => ReportError::Verification(VerificationFailed(e.to_string())),
            CoopError::Equilibrium(EquilibriumError::NoCompetitiveEquilibrium { .. }) => {
                ReportError::Impossible {
                    kind: "no_competitive_equilibrium",
                    message: e.to_string(),
                }
            }
            _ => ReportError::Invalid(e.to_string()),
        }
    }
}

impl From<EquilibriumError> for ReportError {
    fn from(e: EquilibriumError) -> Self {
        match e {
            EquilibriumError::NoCompetitiveEquilibrium { .. } => ReportError::Impossible {
                kind: "no_competitive_equilibrium",
                message: e.to_string(),
            },
            EquilibriumError::VerificationFailed | EquilibriumError::DualFailure(_) => {
                ReportError::Verification(VerificationFailed(e.to_string()))
            }
            _ => ReportError::Invalid(e.to_string()),
        }
    }
}

impl From<ExtendError> for ReportError {
    fn from(e: ExtendError) -> Self {
        match e {
            ExtendError::AtTightnessBound { .. } => ReportError::Impossible {
                kind: "no_extension_at_tightness_bound",
                message: e.to_string(),
            },
            ExtendError::EpsilonTooLarge { .. } => ReportError::Impossible {
                kind: "epsilon_above_tightness_bound",
                message: e.to_string(),
            },
            ExtendError::NoExtension => {
                ReportError::Verification(VerificationFailed(e.to_string()))
            }
            _ => ReportError::Invalid(e.to_string()),
        }
    }
}

impl From<GameError> for ReportError {
    fn from(e: GameError) -> Self {
        ReportError::Invalid(e.to_string())
    }
}

fn utilities(market: &Market, arr: &Arrangement) -> Vec<ExtValue> {
    (0..market.n())
        .map(|i| market.utility_at(i, arr.allocation, &arr.prices))
        .collect()
}

fn ext_agent_map(market: &Market, values: &[ExtValue]) -> Value {
    let mut m = Map::new();
    for (i, v) in values.iter().enumerate() {
        m.insert(market.agent_id(i).to_string(), ext(v));
    }
    Value::Object(m)
}

fn grid_verdict(market: &Market, i: usize) -> Result<Option<bool>, GridError> {
    match is_fully_substitutable(market, i, &PriceGrid::default_for(market, i)) {
        Ok(w) => Ok(Some(w.is_none())),
        Err(GridError::TooLarge(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Structural summary and per-agent substitutability.
pub fn validate_report(market: &Market) -> Value {
    let mut agents = Vec::new();
    let mut all = Some(true);
    for i in 0..market.n() {
        let grid = PriceGrid::default_for(market, i);
        let (subs, witness) = match is_fully_substitutable(market, i, &grid) {
            Ok(None) => (Value::Bool(true), Value::Null),
            Ok(Some(w)) => {
                all = Some(false);
                (
                    Value::Bool(false),
                    json!({
                        "condition": format!("{:?}", w.condition).to_lowercase(),
                        "p": price_map(market, &w.p),
                        "p_prime": price_map(market, &w.p_prime),
                        "bundle": ids(market, w.bundle),
                    }),
                )
            }
            Err(_) => {
                // grid too large: verdict unknown unless some agent already failed
                if all == Some(true) {
                    all = None;
                }
                (Value::Null, Value::Null)
            }
        };
        agents.push(json!({
            "id": market.agent_id(i),
            "trades": market.incident(i).len(),
            "finite": market.all_finite(i),
            "substitutes": subs,
            "witness": witness,
        }));
    }
    json!({
        "name": market.name(),
        "agents": market.n(),
        "trades": market.m(),
        "delta": market.delta(),
        "all_finite": (0..market.n()).all(|i| market.all_finite(i)),
        "all_substitutes": all,
        "agent_report": agents,
    })
}

/// A competitive equilibrium, checked directly and against w(I) = L(p).
pub fn ce_report(market: &Market) -> Result<Verified, ReportError> {
    let arr = solve_ce_prices(market)?;
    let w = market_value(market);
    let l = lyapunov(market, &arr.prices);
    let mut body = arrangement_json(market, &arr);
    body.insert(
        "utilities".into(),
        ext_agent_map(market, &utilities(market, &arr)),
    );
    body.insert("welfare".into(), q(&w));
    body.insert("lyapunov".into(), q(&l));
    body.insert("integral".into(), Value::Bool(is_integral(&arr.prices)));
    let ok = is_competitive_equilibrium(market, &arr, &Rational::from_integer(0.into()))
        && l == w
        && social_welfare(market, arr.allocation) == ExtValue::Finite(w);
    Ok(Verified::check(body, ok, "competitive equilibrium")?)
}

fn verdict_json(market: &Market, v: &NashVerdict) -> Value {
    match v {
        NashVerdict::NotNash {
            agent,
            current,
            deviation,
        } => json!({
            "kind": "not_nash",
            "agent": market.agent_id(*agent),
            "current": ext(current),
            "deviation": q(deviation),
        }),
        NashVerdict::Nash => json!({ "kind": "nash" }),
        NashVerdict::EpsTightNash => json!({ "kind": "eps_tight_nash" }),
    }
}

/// Nash check of an offer profile; re-derived from every agent's best response.
pub fn ne_check_report(
    market: &Market,
    offers: &OfferProfile,
    epsilon: &Rational,
) -> Result<Verified, ReportError> {
    let report = is_nash(market, offers, epsilon);
    // independently: each agent already attains its best-deviation value
    let independent = (0..market.n()).all(|i| {
        let (_, best) = best_deviation(market, i, offers, epsilon);
        agent_game_utility(market, i, offers) >= ExtValue::Finite(best)
    });
    let mut body = Map::new();
    body.insert("epsilon".into(), q(epsilon));
    body.insert("offers".into(), offers_json(market, offers));
    body.insert("verdict".into(), verdict_json(market, &report.verdict));
    body.insert(
        "crossed".into(),
        ids(market, Bundle::from_indices(report.crossed.iter().copied())),
    );
    Ok(Verified::check(
        body,
        report.is_nash() == independent,
        "Nash verdict",
    )?)
}

/// Extension of an ε-tight NE to an integral CE on the same active trades.
pub fn extend_report(
    market: &Market,
    offers: &OfferProfile,
    epsilon: &Rational,
) -> Result<Verified, ReportError> {
    let arr = extend_ne_to_ce(market, offers, epsilon)?;
    let mut body = arrangement_json(market, &arr);
    body.insert("epsilon".into(), q(epsilon));
    body.insert("integral".into(), Value::Bool(is_integral(&arr.prices)));
    let ok = is_competitive_equilibrium(market, &arr, &Rational::from_integer(0.into()))
        && is_integral(&arr.prices)
        && arr.allocation == offers.active();
    Ok(Verified::check(
        body,
        ok,
        "extension is an integral CE on the active trades",
    )?)
}

fn coalition_json(market: &Market, c: u32) -> Value {
    agent_ids(market, &coop::members(c))
}

/// Characteristic function, core structure and optional outcome membership.
pub fn core_report(
    market: &Market,
    outcome: Option<&MarketOutcome>,
) -> Result<Verified, ReportError> {
    let cf = coop::characteristic_function(market)?;
    let mut body = Map::new();
    let cf_rows: Vec<Value> = cf
        .coalitions()
        .into_iter()
        .map(|c| json!({ "coalition": coalition_json(market, c), "value": q(cf.value(c)) }))
        .collect();
    body.insert("characteristic_function".into(), Value::Array(cf_rows));
    body.insert(
        "superadditive".into(),
        Value::Bool(cf.superadditivity_violation().is_none()),
    );
    body.insert(
        "supermodularity_violation".into(),
        cf.supermodularity_violation()
            .map(|(s, t)| json!([coalition_json(market, s), coalition_json(market, t)]))
            .unwrap_or(Value::Null),
    );
    let nonempty = coop::core_nonempty(&cf);
    body.insert("core_nonempty".into(), Value::Bool(nonempty));
    let essential = coop::essential_agents(market)?;
    body.insert("essential".into(), agent_ids(market, &essential));
    let mut ok = true;
    if market.n() <= coop::MAX_VERTEX_AGENTS {
        let vs = coop::core_vertices(&cf)?;
        ok &= vs.iter().all(|v| coop::is_core_imputation(&cf, v).is_ok());
        ok &= vs.is_empty() != nonempty;
        body.insert(
            "vertices".into(),
            Value::Array(vs.iter().map(|v| agent_map(market, v)).collect()),
        );
    }
    if let Some(out) = outcome {
        let criterion = coop::is_core_outcome(market, out)?;
        let mut o = Map::new();
        o.insert("prices".into(), scoped_price_map(market, &out.prices));
        o.insert("allocation".into(), ids(market, out.allocation));
        o.insert(
            "utilities".into(),
            ext_agent_map(market, &out.utilities(market)),
        );
        o.insert("in_core".into(), Value::Bool(criterion));
        if market.n() <= coop::MAX_VERTEX_AGENTS {
            let blocking = coop::find_blocking(market, out)?;
            ok &= blocking.is_none() == criterion;
            o.insert(
                "blocking".into(),
                blocking
                    .map(|b| json!({ "coalition": coalition_json(market, b.coalition), "trades": ids(market, b.trades) }))
                    .unwrap_or(Value::Null),
            );
        }
        body.insert("outcome".into(), Value::Object(o));
    }
    Ok(Verified::check(
        body,
        ok,
        "core structure (vertex membership, oracle agreement)",
    )?)
}

/// Leximin, leximax and minvar core imputations with implementing prices.
pub fn fairness_report(market: &Market) -> Result<Verified, ReportError> {
    let cf = coop::characteristic_function(market)?;
    let mut body = Map::new();
    let mut points: Vec<(&str, Vec<Rational>)> = vec![
        ("leximin", coop::leximin_imputation(&cf)?),
        ("leximax", coop::leximax_imputation(&cf)?),
    ];
    if market.n() <= coop::MAX_MINVAR_AGENTS {
        points.push(("minvar", coop::minvar_imputation(&cf)?));
    }
    let phi = efficient_allocations(market)[0];
    let ce_exists = ce_prices_for(market, phi).is_ok();
    let mut ok = true;
    for (name, x) in &points {
        ok &= coop::is_core_imputation(&cf, x).is_ok();
        body.insert((*name).into(), agent_map(market, x));
        let implemented = if ce_exists {
            let out = coop::implement_imputation(market, phi, x)?;
            ok &= coop::outcome_utilities(market, &out).as_ref() == Some(x);
            json!({ "allocation": ids(market, out.allocation), "prices": scoped_price_map(market, &out.prices) })
        } else {
            Value::Null
        };
        body.insert(format!("{name}_outcome"), implemented);
    }
    let essential = coop::essential_agents(market)?;
    let mut lone = Map::new();
    for i in (0..market.n()).filter(|i| !essential.contains(i)) {
        let top = coop::max_core_utility(&cf, i).ok_or(CoopError::EmptyCore)?;
        lone.insert(market.agent_id(i).into(), q(&top));
    }
    body.insert("essential".into(), agent_ids(market, &essential));
    body.insert("inessential_max_core_utility".into(), Value::Object(lone));
    Ok(Verified::check(
        body,
        ok,
        "fair imputations in the core and implemented",
    )?)
}

pub fn essential_report(market: &Market) -> Result<Verified, ReportError> {
    // essential_agents errors when the two definitions disagree
    let essential = coop::essential_agents(market)?;
    let mut body = Map::new();
    body.insert("essential".into(), agent_ids(market, &essential));
    body.insert("market_value".into(), q(&market_value(market)));
    Ok(Verified::check(body, true, "essential agents")?)
}

/// The auction reduction on this market: allocation mapping, welfare,
/// demand and CE correspondence, and facet normals for small agents.
pub fn reduce_report(market: &Market) -> Result<Verified, ReportError> {
    let auction = to_auction(market);
    let mut ok = true;
    for i in 0..market.n() {
        for b in market.omega(i).subsets() {
            ok &= tau(market, i, tau(market, i, b)) == b;
        }
    }
    let mut allocs = Vec::new();
    for phi in efficient_allocations(market) {
        let psi = map_allocation(market, phi);
        ok &= unmap_allocation(market, &psi) == Ok(phi);
        ok &= auction.welfare(&psi) == social_welfare(market, phi);
        let per: Map<String, Value> = psi
            .iter()
            .enumerate()
            .map(|(i, &b)| (market.agent_id(i).to_string(), ids(market, b)))
            .collect();
        allocs.push(json!({ "allocation": ids(market, phi), "auction": per }));
    }
    let mut body = Map::new();
    body.insert("efficient_allocations".into(), Value::Array(allocs));
    let zero = vec![Rational::from_integer(0.into()); market.m()];
    let mut probes = vec![zero.clone()];
    match solve_ce_prices(market) {
        Ok(arr) => {
            ok &= verify_ce_mapping(market, &auction, &arr);
            ok &= auction
                .is_competitive_equilibrium(&arr.prices, &map_allocation(market, arr.allocation));
            probes.push(arr.prices.clone());
            body.insert("ce".into(), Value::Object(arrangement_json(market, &arr)));
        }
        Err(EquilibriumError::NoCompetitiveEquilibrium { .. }) => {
            body.insert("ce".into(), Value::Null);
        }
        Err(e) => return Err(e.into()),
    }
    ok &= verify_ce_mapping(
        market,
        &auction,
        &Arrangement {
            prices: zero,
            allocation: Bundle::EMPTY,
        },
    );
    for p in &probes {
        ok &= (0..market.n()).all(|i| verify_demand_mapping(market, &auction, i, p));
    }
    let mut facets = Map::new();
    for i in 0..market.n() {
        if market.incident(i).len() > MAX_FACET_DIM {
            continue;
        }
        let list = match lip_facets(market, i, &default_facet_grid(market, i)) {
            Ok(l) => l,
            Err(FacetError::NonIntegral) | Err(FacetError::Grid(GridError::TooLarge(_))) => {
                continue
            }
            Err(e) => return Err(ReportError::Invalid(e.to_string())),
        };
        let by_normals = non_substitutes_facet(&list).is_none();
        if let Ok(Some(by_grid)) = grid_verdict(market, i) {
            ok &= by_normals == by_grid;
        }
        let normals: Vec<Value> = list
            .iter()
            .map(|f| {
                let n: Map<String, Value> = (0..market.m())
                    .filter(|&t| f.normal[t] != 0)
                    .map(|t| (market.trade_id(t).to_string(), json!(f.normal[t])))
                    .collect();
                json!({ "from": ids(market, f.from), "to": ids(market, f.to), "normal": n, "weight": f.weight })
            })
            .collect();
        facets.insert(
            market.agent_id(i).into(),
            json!({ "substitutes_by_normals": by_normals, "facets": normals }),
        );
    }
    body.insert("facets".into(), Value::Object(facets));
    Ok(Verified::check(body, ok, "reduction identities")?)
}

/// Taxed-market CE check at rate α.
pub fn taxed_report(
    market: &Market,
    arr: &Arrangement,
    alpha: &Rational,
) -> Result<Verified, ReportError> {
    let r = coop::taxed_ce_check(market, arr, alpha)?;
    let mut body = arrangement_json(market, arr);
    body.insert("alpha".into(), q(alpha));
    body.insert("original_ce".into(), Value::Bool(r.original_ce));
    body.insert("taxed_ce".into(), Value::Bool(r.taxed_ce));
    body.insert("efficient".into(), Value::Bool(r.efficient));
    let ok = r.original_ce_implies_taxed_ce() && r.taxed_allocation_efficient();
    Ok(Verified::check(body, ok, "taxed-market implications")?)
}

pub fn termination_name(t: Termination) -> &'static str {
    match t {
        Termination::Converged => "converged",
        Termination::RoundCap => "round_cap",
        Termination::ScriptExhausted => "script_exhausted",
    }
}

fn opt_agent(market: &Market, a: Option<usize>) -> Value {
    a.map(|i| Value::String(market.agent_id(i).into()))
        .unwrap_or(Value::Null)
}

fn opt_bundle(market: &Market, b: Option<Bundle>) -> Value {
    b.map(|b| ids(market, b)).unwrap_or(Value::Null)
}

pub fn offer_record_json(market: &Market, r: &OfferRecord) -> Value {
    json!({
        "round": r.round,
        "agent": opt_agent(market, r.agent),
        "demanded": opt_bundle(market, r.demanded),
        "offers": offers_json(market, &r.offers),
        "phi": r.phi,
        "unsatisfied": agent_ids(market, &r.unsatisfied),
    })
}

pub fn price_record_json(market: &Market, r: &PriceRecord) -> Value {
    json!({
        "round": r.round,
        "agent": opt_agent(market, r.agent),
        "demanded": opt_bundle(market, r.demanded),
        "prices": price_map(market, &r.prices),
        "lyapunov": q(&r.lyapunov),
    })
}

/// JSONL body for a trace, one record per line.
pub fn jsonl(records: impl IntoIterator<Item = Value>) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(&r).expect("serialisable"));
        out.push('\n');
    }
    out
}

/// Terminal state of an offer run. A converged run must end at an ε-tight
/// NE; otherwise the reported U and φ are re-derived from the terminal offers.
pub fn offer_terminal(
    market: &Market,
    run: &OfferRun,
    epsilon: &Rational,
) -> Result<Verified, ReportError> {
    let report = is_nash(market, &run.terminal, epsilon);
    let phi = potential_phi(market, &run.terminal, epsilon);
    let mut body = Map::new();
    body.insert("algorithm".into(), json!("offers"));
    body.insert("epsilon".into(), q(epsilon));
    body.insert("rounds".into(), json!(run.rounds));
    body.insert(
        "termination".into(),
        json!(termination_name(run.termination)),
    );
    body.insert("offers".into(), offers_json(market, &run.terminal));
    body.insert("active".into(), ids(market, run.terminal.active()));
    body.insert("phi".into(), json!(phi));
    body.insert("unsatisfied".into(), agent_ids(market, &run.unsatisfied));
    body.insert("nash".into(), verdict_json(market, &report.verdict));
    let ok = match run.termination {
        Termination::Converged => report.is_tight() && phi == 0 && run.unsatisfied.is_empty(),
        _ => !run.unsatisfied.is_empty(),
    };
    Ok(Verified::check(body, ok, "terminal offers")?)
}

/// Terminal state of a clock run, with the weak-duality check L(p) ≥ w(I).
pub fn price_terminal(market: &Market, run: &PriceRun) -> Result<Verified, ReportError> {
    let w = market_value(market);
    let l_avg = lyapunov(market, &run.average);
    let l_last = lyapunov(market, &run.last);
    let mut body = Map::new();
    body.insert("algorithm".into(), json!("clock"));
    body.insert("epsilon".into(), q(&run.epsilon));
    body.insert("rounds".into(), json!(run.rounds));
    body.insert("average".into(), price_map(market, &run.average));
    body.insert("last".into(), price_map(market, &run.last));
    body.insert("lyapunov_average".into(), q(&l_avg));
    body.insert("ce_gap_average".into(), q(&ce_gap(market, &run.average)));
    body.insert("ce_gap_last".into(), q(&ce_gap(market, &run.last)));
    body.insert("market_value".into(), q(&w));
    let ok = l_avg >= w && l_last >= w;
    Ok(Verified::check(
        body,
        ok,
        "weak duality at the reported prices",
    )?)
}
