//! Scenario files: a market plus named runs, schedules, offer profiles and
//! outcomes, all in JSON. Numbers may be JSON integers or strings such as
//! "-3", "1/2", "0.25" or "-inf".

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::equilibrium::{Arrangement, MarketOutcome};
use crate::game::OfferProfile;
use crate::market::{Bundle, Market, MarketError, PriceVector, ValuationSpec};
use crate::rational::{format_rational, parse_rational, ExtValue, Rational};

/// Environment variable naming the default fixture directory.
pub const FIXTURES_ENV: &str = "TRADENET_FIXTURES";

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{}{message}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
    Invalid {
        message: String,
        line: Option<usize>,
    },
}

/// A JSON number or numeric string.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Num {
    Int(i64),
    Float(f64),
    Text(String),
}

impl Num {
    pub fn to_ext(&self) -> Result<ExtValue, String> {
        match self {
            Num::Text(s) if s.trim() == "-inf" => Ok(ExtValue::NegInf),
            _ => self.to_rational().map(ExtValue::Finite),
        }
    }

    pub fn to_rational(&self) -> Result<Rational, String> {
        match self {
            Num::Int(k) => Ok(Rational::from_integer((*k).into())),
            // shortest round-trip text is the literal as written
            Num::Float(x) => parse_rational(&format!("{x}")).map_err(|e| e.0),
            Num::Text(s) => parse_rational(s).map_err(|e| e.0),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TradeSpec {
    pub id: String,
    pub seller: String,
    pub buyer: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BundleValue {
    pub trades: Vec<String>,
    pub value: Num,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentValuation {
    /// Value of unlisted bundles; −∞ when absent.
    #[serde(default)]
    pub default: Option<Num>,
    #[serde(default)]
    pub bundles: Vec<BundleValue>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OffersSpec {
    /// Every bid `bid`, every ask `ask`.
    Uniform { bid: Num, ask: Num },
    /// agent → trade → offer
    PerAgent(BTreeMap<String, BTreeMap<String, Num>>),
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// "offers" or "clock".
    pub algorithm: Option<String>,
    /// Rational step, or "auto" for the clock.
    pub epsilon: Option<Num>,
    /// Round cap (offers) or horizon T (clock).
    pub rounds: Option<usize>,
    pub seed: Option<u64>,
    pub schedule: Option<String>,
    pub initial_offers: Option<OffersSpec>,
    /// trade → price; missing trades start at 0.
    pub initial_prices: Option<BTreeMap<String, Num>>,
    /// Valuation bound R for the automatic clock step.
    pub bound: Option<Num>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutcomeSpec {
    /// trade → price, for the listed trades only.
    pub prices: BTreeMap<String, Num>,
    pub allocation: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    #[serde(default)]
    pub description: Option<String>,
    pub agents: Vec<String>,
    pub trades: Vec<TradeSpec>,
    #[serde(default)]
    pub valuations: BTreeMap<String, AgentValuation>,
    #[serde(default)]
    pub schedules: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub runs: BTreeMap<String, RunConfig>,
    #[serde(default)]
    pub profiles: BTreeMap<String, OffersSpec>,
    #[serde(default)]
    pub outcomes: BTreeMap<String, OutcomeSpec>,
}

/// A parsed, validated scenario.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub file: ScenarioFile,
    pub market: Market,
    source: String,
}

/// 1-based line of the first occurrence of `"needle"` in the source.
fn locate(source: &str, needle: &str) -> Option<usize> {
    let quoted = format!("\"{needle}\"");
    source
        .lines()
        .position(|l| l.contains(&quoted))
        .map(|k| k + 1)
}

fn market_error_needle(e: &MarketError) -> Option<String> {
    let text = e.to_string();
    // ids are quoted with backticks in market errors
    let start = text.find('`')?;
    let rest = &text[start + 1..];
    rest.find('`').map(|end| rest[..end].to_string())
}

impl Scenario {
    pub fn parse(source: &str) -> Result<Scenario, ScenarioError> {
        let file: ScenarioFile =
            serde_json::from_str(source).map_err(|e| ScenarioError::Syntax {
                line: e.line(),
                column: e.column(),
                message: e.to_string(),
            })?;
        let invalid = |message: String, needle: Option<&str>| ScenarioError::Invalid {
            line: needle.and_then(|n| locate(source, n)),
            message,
        };
        for agent in file.valuations.keys() {
            if !file.agents.contains(agent) {
                return Err(invalid(
                    format!("valuation for unknown agent `{agent}`"),
                    Some(agent),
                ));
            }
        }
        let mut specs = Vec::with_capacity(file.agents.len());
        for agent in &file.agents {
            let mut spec = ValuationSpec::default();
            if let Some(v) = file.valuations.get(agent) {
                if let Some(d) = &v.default {
                    spec.default = d.to_ext().map_err(|m| {
                        invalid(format!("agent `{agent}` default: {m}"), Some(agent))
                    })?;
                }
                for b in &v.bundles {
                    let value = b
                        .value
                        .to_ext()
                        .map_err(|m| invalid(format!("agent `{agent}`: {m}"), Some(agent)))?;
                    spec.entries.push((b.trades.clone(), value));
                }
            }
            specs.push(spec);
        }
        let trades = file
            .trades
            .iter()
            .map(|t| (t.id.clone(), t.seller.clone(), t.buyer.clone()))
            .collect();
        let market =
            Market::new(file.name.clone(), file.agents.clone(), trades, specs).map_err(|e| {
                let needle = market_error_needle(&e);
                invalid(e.to_string(), needle.as_deref())
            })?;
        let scenario = Scenario {
            file,
            market,
            source: source.to_string(),
        };
        scenario.check_references()?;
        Ok(scenario)
    }

    pub fn load(path: &Path) -> Result<Scenario, ScenarioError> {
        let source = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Scenario::parse(&source)
    }

    fn invalid(&self, message: String, needle: &str) -> ScenarioError {
        ScenarioError::Invalid {
            line: locate(&self.source, needle),
            message,
        }
    }

    fn check_references(&self) -> Result<(), ScenarioError> {
        for (name, seq) in &self.file.schedules {
            for agent in seq {
                if self.market.agent_index(agent).is_err() {
                    return Err(self.invalid(
                        format!("schedule `{name}` names unknown agent `{agent}`"),
                        name,
                    ));
                }
            }
        }
        for (name, run) in &self.file.runs {
            if let Some(s) = &run.schedule {
                if !self.file.schedules.contains_key(s) {
                    return Err(
                        self.invalid(format!("run `{name}` uses unknown schedule `{s}`"), name)
                    );
                }
            }
            if let Some(a) = &run.algorithm {
                if a != "offers" && a != "clock" {
                    return Err(
                        self.invalid(format!("run `{name}`: unknown algorithm `{a}`"), name)
                    );
                }
            }
            if let Some(o) = &run.initial_offers {
                self.offers(o)
                    .map_err(|m| self.invalid(format!("run `{name}`: {m}"), name))?;
            }
            if let Some(p) = &run.initial_prices {
                self.prices(p)
                    .map_err(|m| self.invalid(format!("run `{name}`: {m}"), name))?;
            }
        }
        for (name, p) in &self.file.profiles {
            self.offers(p)
                .map_err(|m| self.invalid(format!("profile `{name}`: {m}"), name))?;
        }
        for (name, o) in &self.file.outcomes {
            self.outcome(o)
                .map_err(|m| self.invalid(format!("outcome `{name}`: {m}"), name))?;
        }
        Ok(())
    }

    pub fn offers(&self, spec: &OffersSpec) -> Result<OfferProfile, String> {
        let m = self.market.m();
        match spec {
            OffersSpec::Uniform { bid, ask } => Ok(OfferProfile::new(
                vec![bid.to_rational()?; m],
                vec![ask.to_rational()?; m],
            )),
            OffersSpec::PerAgent(map) => {
                let mut parsed = BTreeMap::new();
                for (agent, per) in map {
                    let mut row = BTreeMap::new();
                    for (trade, q) in per {
                        row.insert(trade.clone(), q.to_rational()?);
                    }
                    parsed.insert(agent.clone(), row);
                }
                OfferProfile::from_agent_offers(&self.market, &parsed).map_err(|e| e.to_string())
            }
        }
    }

    /// Full price vector; unlisted trades get 0.
    pub fn prices(&self, map: &BTreeMap<String, Num>) -> Result<Vec<Rational>, String> {
        let mut p = vec![Rational::from_integer(0.into()); self.market.m()];
        for (trade, q) in map {
            let t = self.market.trade_index(trade).map_err(|e| e.to_string())?;
            p[t] = q.to_rational()?;
        }
        Ok(p)
    }

    pub fn outcome(&self, spec: &OutcomeSpec) -> Result<MarketOutcome, String> {
        let allocation = self
            .market
            .bundle_from_ids(&spec.allocation)
            .map_err(|e| e.to_string())?;
        let mut entries = Vec::new();
        for (trade, q) in &spec.prices {
            entries.push((
                self.market.trade_index(trade).map_err(|e| e.to_string())?,
                q.to_rational()?,
            ));
        }
        MarketOutcome::new(
            PriceVector::restricted(self.market.m(), entries),
            allocation,
        )
        .map_err(|e| e.to_string())
    }

    /// Agent indices for a named schedule.
    pub fn schedule(&self, name: &str) -> Result<Vec<usize>, String> {
        let seq = self
            .file
            .schedules
            .get(name)
            .ok_or_else(|| format!("unknown schedule `{name}`"))?;
        seq.iter()
            .map(|a| self.market.agent_index(a).map_err(|e| e.to_string()))
            .collect()
    }

    pub fn run(&self, name: &str) -> Result<&RunConfig, String> {
        self.file
            .runs
            .get(name)
            .ok_or_else(|| format!("unknown run `{name}`"))
    }

    pub fn profile(&self, name: &str) -> Result<OfferProfile, String> {
        self.offers(
            self.file
                .profiles
                .get(name)
                .ok_or_else(|| format!("unknown profile `{name}`"))?,
        )
    }

    pub fn named_outcome(&self, name: &str) -> Result<MarketOutcome, String> {
        self.outcome(
            self.file
                .outcomes
                .get(name)
                .ok_or_else(|| format!("unknown outcome `{name}`"))?,
        )
    }
}

/// Resolves a scenario argument: an existing path, else a file (or
/// `<name>.json`) under the fixture directory.
pub fn resolve_path(arg: &str, fixtures: Option<&Path>) -> PathBuf {
    let direct = PathBuf::from(arg);
    if direct.exists() {
        return direct;
    }
    if let Some(dir) = fixtures {
        for cand in [dir.join(arg), dir.join(format!("{arg}.json"))] {
            if cand.exists() {
                return cand;
            }
        }
    }
    direct
}

/// Result JSON that has passed its verifier. The only constructor runs the
/// check, so an unverified result cannot be emitted.
#[derive(Clone, Debug, PartialEq)]
pub struct Verified(Value);

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("verification failed: {0}")]
pub struct VerificationFailed(pub String);

impl Verified {
    pub fn check(
        body: Map<String, Value>,
        ok: bool,
        what: &str,
    ) -> Result<Verified, VerificationFailed> {
        if !ok {
            return Err(VerificationFailed(what.to_string()));
        }
        let mut body = body;
        body.insert("verified".into(), Value::Bool(true));
        Ok(Verified(Value::Object(body)))
    }

    pub fn json(&self) -> &Value {
        &self.0
    }
}

pub fn q(x: &Rational) -> Value {
    Value::String(format_rational(x))
}

pub fn ext(x: &ExtValue) -> Value {
    match x {
        ExtValue::Finite(v) => q(v),
        ExtValue::NegInf => Value::String("-inf".into()),
    }
}

pub fn ids(market: &Market, b: Bundle) -> Value {
    Value::Array(
        market
            .bundle_ids(b)
            .into_iter()
            .map(Value::String)
            .collect(),
    )
}

pub fn agent_ids(market: &Market, agents: &[usize]) -> Value {
    Value::Array(
        agents
            .iter()
            .map(|&i| Value::String(market.agent_id(i).to_string()))
            .collect(),
    )
}

/// trade id → price.
pub fn price_map(market: &Market, prices: &[Rational]) -> Value {
    let mut m = Map::new();
    for (t, p) in prices.iter().enumerate() {
        m.insert(market.trade_id(t).to_string(), q(p));
    }
    Value::Object(m)
}

pub fn scoped_price_map(market: &Market, prices: &PriceVector) -> Value {
    let mut m = Map::new();
    for t in prices.scope().iter() {
        m.insert(
            market.trade_id(t).to_string(),
            q(prices.get(t).expect("in scope")),
        );
    }
    Value::Object(m)
}

/// agent id → value.
pub fn agent_map(market: &Market, values: &[Rational]) -> Value {
    let mut m = Map::new();
    for (i, v) in values.iter().enumerate() {
        m.insert(market.agent_id(i).to_string(), q(v));
    }
    Value::Object(m)
}

pub fn offers_json(market: &Market, offers: &OfferProfile) -> Value {
    let mut buyer = Map::new();
    let mut seller = Map::new();
    for t in 0..market.m() {
        buyer.insert(market.trade_id(t).to_string(), q(&offers.buyer[t]));
        seller.insert(market.trade_id(t).to_string(), q(&offers.seller[t]));
    }
    json!({ "buyer": buyer, "seller": seller })
}

pub fn arrangement_json(market: &Market, arr: &Arrangement) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("prices".into(), price_map(market, &arr.prices));
    m.insert("allocation".into(), ids(market, arr.allocation));
    m
}
