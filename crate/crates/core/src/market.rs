//! Markets over a directed multigraph of bilateral trades.
//!
//! Agents and trades are addressed by dense indices in declaration order;
//! string ids only matter at the boundary. A [`Bundle`] is a bitmask over the
//! global trade order, which is also the tie-breaking order.

use std::collections::HashMap;
use std::fmt;

use num_traits::Zero;
use thiserror::Error;

use crate::rational::{ExtValue, Rational};

/// Hard cap on the number of trades in a market.
pub const MAX_TRADES: usize = 24;
/// Hard cap on the number of trades incident to a single agent.
pub const MAX_AGENT_TRADES: usize = 20;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MarketError {
    #[error("unknown agent `{0}`")]
    UnknownAgent(String),
    #[error("unknown trade `{0}`")]
    UnknownTrade(String),
    #[error("duplicate agent id `{0}`")]
    DuplicateAgent(String),
    #[error("duplicate trade id `{0}`")]
    DuplicateTrade(String),
    #[error("trade `{0}` has the same buyer and seller")]
    SelfTrade(String),
    #[error("market has {0} trades; at most {MAX_TRADES} are supported")]
    TooManyTrades(usize),
    #[error("agent `{0}` has {1} incident trades; at most {MAX_AGENT_TRADES} are supported")]
    AgentDegreeCap(String, usize),
    #[error("bundle for agent `{agent}` contains trade `{trade}` not incident to it")]
    NotIncident { agent: String, trade: String },
    #[error("bundle for agent `{0}` lists a trade twice")]
    RepeatedTrade(String),
    #[error("valuation of agent `{0}` assigns a nonzero value to the empty bundle")]
    EmptyBundleValue(String),
    #[error("valuation of agent `{0}` lists the same bundle twice")]
    DuplicateEntry(String),
    #[error("no price given for trade `{0}`")]
    MissingPrice(String),
    #[error("price vector has {got} entries, market has {want} trades")]
    PriceLength { got: usize, want: usize },
}

/// A set of trades, as a bitmask over declaration order.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Bundle(pub u32);

impl Bundle {
    pub const EMPTY: Bundle = Bundle(0);

    pub fn single(t: usize) -> Bundle {
        Bundle(1 << t)
    }

    pub fn from_indices(ts: impl IntoIterator<Item = usize>) -> Bundle {
        Bundle(ts.into_iter().fold(0, |acc, t| acc | (1 << t)))
    }

    pub fn contains(self, t: usize) -> bool {
        self.0 >> t & 1 == 1
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn union(self, o: Bundle) -> Bundle {
        Bundle(self.0 | o.0)
    }

    pub fn intersect(self, o: Bundle) -> Bundle {
        Bundle(self.0 & o.0)
    }

    pub fn minus(self, o: Bundle) -> Bundle {
        Bundle(self.0 & !o.0)
    }

    pub fn is_subset(self, o: Bundle) -> bool {
        self.0 & !o.0 == 0
    }

    pub fn with(self, t: usize) -> Bundle {
        Bundle(self.0 | (1 << t))
    }

    pub fn without(self, t: usize) -> Bundle {
        Bundle(self.0 & !(1 << t))
    }

    /// Trade indices in increasing order.
    pub fn iter(self) -> impl Iterator<Item = usize> {
        let mut rest = self.0;
        std::iter::from_fn(move || {
            if rest == 0 {
                return None;
            }
            let t = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            Some(t)
        })
    }

    /// Every subset of `self`, in increasing mask order.
    pub fn subsets(self) -> impl Iterator<Item = Bundle> {
        let full = self.0;
        let mut next = Some(0u32);
        std::iter::from_fn(move || {
            let cur = next?;
            next = if cur == full {
                None
            } else {
                Some((cur.wrapping_sub(full)) & full)
            };
            Some(Bundle(cur))
        })
    }

    /// Ordering used by the tie-breaking rule: larger bundles first, then the
    /// lexicographically smallest sorted index sequence.
    pub fn tiebreak_cmp(self, o: Bundle) -> std::cmp::Ordering {
        o.len()
            .cmp(&self.len())
            .then_with(|| self.iter().cmp(o.iter()))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trade {
    pub id: String,
    pub seller: usize,
    pub buyer: usize,
}

/// Prices over all trades (`full`) or over a subset (market outcomes).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PriceVector {
    prices: Vec<Option<Rational>>,
}

impl PriceVector {
    pub fn full(prices: Vec<Rational>) -> Self {
        PriceVector {
            prices: prices.into_iter().map(Some).collect(),
        }
    }

    pub fn restricted(m: usize, entries: impl IntoIterator<Item = (usize, Rational)>) -> Self {
        let mut prices = vec![None; m];
        for (t, q) in entries {
            prices[t] = Some(q);
        }
        PriceVector { prices }
    }

    pub fn len(&self) -> usize {
        self.prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }

    pub fn get(&self, t: usize) -> Option<&Rational> {
        self.prices.get(t).and_then(|q| q.as_ref())
    }

    pub fn scope(&self) -> Bundle {
        Bundle::from_indices(
            self.prices
                .iter()
                .enumerate()
                .filter(|(_, q)| q.is_some())
                .map(|(t, _)| t),
        )
    }

    pub fn is_full(&self) -> bool {
        self.prices.iter().all(Option::is_some)
    }

    pub fn as_full(&self) -> Option<Vec<Rational>> {
        self.prices.iter().cloned().collect()
    }

    pub fn restrict(&self, scope: Bundle) -> PriceVector {
        let prices = self
            .prices
            .iter()
            .enumerate()
            .map(|(t, q)| if scope.contains(t) { q.clone() } else { None })
            .collect();
        PriceVector { prices }
    }

    /// Every specified price lies in `step·ℤ`.
    pub fn on_lattice(&self, step: &Rational) -> bool {
        self.prices
            .iter()
            .flatten()
            .all(|q| crate::rational::on_lattice(q, step))
    }
}

/// A valuation as given in a scenario: explicit entries plus a default for
/// unlisted nonempty bundles.
#[derive(Clone, Debug)]
pub struct ValuationSpec {
    pub default: ExtValue,
    pub entries: Vec<(Vec<String>, ExtValue)>,
}

impl Default for ValuationSpec {
    fn default() -> Self {
        ValuationSpec {
            default: ExtValue::NegInf,
            entries: Vec::new(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Market {
    name: String,
    agents: Vec<String>,
    trades: Vec<Trade>,
    incident: Vec<Vec<usize>>,
    incident_mask: Vec<Bundle>,
    // per agent, indexed by local mask over `incident`
    values: Vec<Vec<ExtValue>>,
    agent_ix: HashMap<String, usize>,
    trade_ix: HashMap<String, usize>,
}

impl Market {
    pub fn new(
        name: impl Into<String>,
        agents: Vec<String>,
        trades: Vec<(String, String, String)>,
        valuations: Vec<ValuationSpec>,
    ) -> Result<Market, MarketError> {
        let mut agent_ix = HashMap::new();
        for (i, a) in agents.iter().enumerate() {
            if agent_ix.insert(a.clone(), i).is_some() {
                return Err(MarketError::DuplicateAgent(a.clone()));
            }
        }
        if trades.len() > MAX_TRADES {
            return Err(MarketError::TooManyTrades(trades.len()));
        }
        let mut trade_ix = HashMap::new();
        let mut ts = Vec::with_capacity(trades.len());
        for (t, (id, seller, buyer)) in trades.into_iter().enumerate() {
            if trade_ix.insert(id.clone(), t).is_some() {
                return Err(MarketError::DuplicateTrade(id));
            }
            let s = *agent_ix
                .get(&seller)
                .ok_or_else(|| MarketError::UnknownAgent(seller.clone()))?;
            let b = *agent_ix
                .get(&buyer)
                .ok_or_else(|| MarketError::UnknownAgent(buyer.clone()))?;
            if s == b {
                return Err(MarketError::SelfTrade(id));
            }
            ts.push(Trade {
                id,
                seller: s,
                buyer: b,
            });
        }
        let n = agents.len();
        let mut incident = vec![Vec::new(); n];
        for (t, tr) in ts.iter().enumerate() {
            incident[tr.seller].push(t);
            incident[tr.buyer].push(t);
        }
        for (i, inc) in incident.iter().enumerate() {
            if inc.len() > MAX_AGENT_TRADES {
                return Err(MarketError::AgentDegreeCap(agents[i].clone(), inc.len()));
            }
        }
        let incident_mask = incident
            .iter()
            .map(|inc| Bundle::from_indices(inc.iter().copied()))
            .collect();
        let mut market = Market {
            name: name.into(),
            agents,
            trades: ts,
            incident,
            incident_mask,
            values: Vec::new(),
            agent_ix,
            trade_ix,
        };
        let mut valuations = valuations;
        valuations.resize_with(n, ValuationSpec::default);
        let mut values = Vec::with_capacity(n);
        for (i, spec) in valuations.iter().enumerate() {
            values.push(market.build_table(i, spec)?);
        }
        market.values = values;
        Ok(market)
    }

    /// A market with the same graph and agents but the given per-agent tables
    /// (indexed by local mask).
    pub fn with_tables(&self, name: impl Into<String>, tables: Vec<Vec<ExtValue>>) -> Market {
        assert_eq!(tables.len(), self.n());
        for (i, t) in tables.iter().enumerate() {
            assert_eq!(t.len(), 1 << self.incident[i].len());
            assert_eq!(t[0], ExtValue::zero());
        }
        Market {
            name: name.into(),
            values: tables,
            ..self.clone()
        }
    }

    fn build_table(&self, i: usize, spec: &ValuationSpec) -> Result<Vec<ExtValue>, MarketError> {
        let k = self.incident[i].len();
        let mut table = vec![spec.default.clone(); 1 << k];
        table[0] = ExtValue::zero();
        let mut seen = vec![false; 1 << k];
        for (ids, value) in &spec.entries {
            let mut b = Bundle::EMPTY;
            for id in ids {
                let t = self.trade_index(id)?;
                if !self.incident_mask[i].contains(t) {
                    return Err(MarketError::NotIncident {
                        agent: self.agents[i].clone(),
                        trade: id.clone(),
                    });
                }
                if b.contains(t) {
                    return Err(MarketError::RepeatedTrade(self.agents[i].clone()));
                }
                b = b.with(t);
            }
            let local = self.local_mask(i, b);
            if seen[local] {
                return Err(MarketError::DuplicateEntry(self.agents[i].clone()));
            }
            seen[local] = true;
            if local == 0 {
                if *value != ExtValue::zero() {
                    return Err(MarketError::EmptyBundleValue(self.agents[i].clone()));
                }
                continue;
            }
            table[local] = value.clone();
        }
        Ok(table)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n(&self) -> usize {
        self.agents.len()
    }

    pub fn m(&self) -> usize {
        self.trades.len()
    }

    pub fn agents(&self) -> &[String] {
        &self.agents
    }

    pub fn trades(&self) -> &[Trade] {
        &self.trades
    }

    pub fn trade(&self, t: usize) -> &Trade {
        &self.trades[t]
    }

    pub fn agent_id(&self, i: usize) -> &str {
        &self.agents[i]
    }

    pub fn trade_id(&self, t: usize) -> &str {
        &self.trades[t].id
    }

    pub fn agent_index(&self, id: &str) -> Result<usize, MarketError> {
        self.agent_ix
            .get(id)
            .copied()
            .ok_or_else(|| MarketError::UnknownAgent(id.to_string()))
    }

    pub fn trade_index(&self, id: &str) -> Result<usize, MarketError> {
        self.trade_ix
            .get(id)
            .copied()
            .ok_or_else(|| MarketError::UnknownTrade(id.to_string()))
    }

    /// Ω_i as a sorted list of trade indices.
    pub fn incident(&self, i: usize) -> &[usize] {
        &self.incident[i]
    }

    /// Ω_i as a bundle.
    pub fn omega(&self, i: usize) -> Bundle {
        self.incident_mask[i]
    }

    /// Ω_C: trades with both endpoints in the coalition (bitmask over agents).
    pub fn omega_of_coalition(&self, coalition: u32) -> Bundle {
        Bundle::from_indices(
            self.trades
                .iter()
                .enumerate()
                .filter(|(_, tr)| coalition >> tr.seller & 1 == 1 && coalition >> tr.buyer & 1 == 1)
                .map(|(t, _)| t),
        )
    }

    /// Trades agent i buys.
    pub fn buying(&self, i: usize) -> Bundle {
        Bundle::from_indices(
            self.incident[i]
                .iter()
                .copied()
                .filter(|&t| self.trades[t].buyer == i),
        )
    }

    /// Trades agent i sells.
    pub fn selling(&self, i: usize) -> Bundle {
        Bundle::from_indices(
            self.incident[i]
                .iter()
                .copied()
                .filter(|&t| self.trades[t].seller == i),
        )
    }

    /// Maximum vertex degree Δ.
    pub fn delta(&self) -> usize {
        self.incident.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// χ^i_ω: +1 if i buys ω, −1 if i sells it, 0 otherwise.
    pub fn chi(&self, i: usize, t: usize) -> i32 {
        let tr = &self.trades[t];
        if tr.buyer == i {
            1
        } else if tr.seller == i {
            -1
        } else {
            0
        }
    }

    /// The counterpart of agent i on trade t.
    pub fn counterpart(&self, i: usize, t: usize) -> usize {
        let tr = &self.trades[t];
        if tr.buyer == i {
            tr.seller
        } else {
            tr.buyer
        }
    }

    /// Agents incident to at least one trade in the bundle.
    pub fn involved(&self, b: Bundle) -> u32 {
        b.iter().fold(0, |acc, t| {
            acc | 1 << self.trades[t].seller | 1 << self.trades[t].buyer
        })
    }

    /// Position-compressed mask of `b ∩ Ω_i` relative to `incident(i)`.
    pub fn local_mask(&self, i: usize, b: Bundle) -> usize {
        self.incident[i]
            .iter()
            .enumerate()
            .filter(|(_, &t)| b.contains(t))
            .fold(0, |acc, (k, _)| acc | 1 << k)
    }

    /// Inverse of [`Market::local_mask`].
    pub fn global_bundle(&self, i: usize, local: usize) -> Bundle {
        Bundle::from_indices(
            self.incident[i]
                .iter()
                .enumerate()
                .filter(|(k, _)| local >> k & 1 == 1)
                .map(|(_, &t)| t),
        )
    }

    /// v^i(b ∩ Ω_i).
    pub fn value(&self, i: usize, b: Bundle) -> &ExtValue {
        &self.values[i][self.local_mask(i, b)]
    }

    /// v^i as a table indexed by local mask.
    pub fn table(&self, i: usize) -> &[ExtValue] {
        &self.values[i]
    }

    /// Checked lookup: errors if `b ⊄ Ω_i`.
    pub fn valuation(&self, i: usize, b: Bundle) -> Result<&ExtValue, MarketError> {
        self.check_bundle(i, b)?;
        Ok(self.value(i, b))
    }

    pub fn check_bundle(&self, i: usize, b: Bundle) -> Result<(), MarketError> {
        if let Some(t) = b.minus(self.omega(i)).iter().next() {
            return Err(MarketError::NotIncident {
                agent: self.agents[i].clone(),
                trade: self.trades[t].id.clone(),
            });
        }
        Ok(())
    }

    /// Every bundle valued finitely.
    pub fn all_finite(&self, i: usize) -> bool {
        self.values[i].iter().all(ExtValue::is_finite)
    }

    pub fn bundle_from_ids<S: AsRef<str>>(&self, ids: &[S]) -> Result<Bundle, MarketError> {
        let mut b = Bundle::EMPTY;
        for id in ids {
            b = b.with(self.trade_index(id.as_ref())?);
        }
        Ok(b)
    }

    pub fn bundle_ids(&self, b: Bundle) -> Vec<String> {
        b.iter().map(|t| self.trades[t].id.clone()).collect()
    }

    /// Σ_{ω∈b} χ^i_ω p_ω.
    pub fn payment(&self, i: usize, b: Bundle, prices: &[Rational]) -> Rational {
        let mut total = Rational::zero();
        for t in b.iter() {
            match self.chi(i, t) {
                1 => total += &prices[t],
                -1 => total -= &prices[t],
                _ => {}
            }
        }
        total
    }

    /// u^i(b, p) = v^i(b) − Σ χ^i_ω p_ω over full-scope prices.
    pub fn utility_at(&self, i: usize, b: Bundle, prices: &[Rational]) -> ExtValue {
        self.value(i, b).sub_rational(&self.payment(i, b, prices))
    }

    /// u^i(b, p) with prices that only need to cover `b`.
    pub fn utility(
        &self,
        i: usize,
        b: Bundle,
        prices: &PriceVector,
    ) -> Result<ExtValue, MarketError> {
        self.check_bundle(i, b)?;
        let mut pay = Rational::zero();
        for t in b.iter() {
            let q = prices
                .get(t)
                .ok_or_else(|| MarketError::MissingPrice(self.trades[t].id.clone()))?;
            match self.chi(i, t) {
                1 => pay += q,
                _ => pay -= q,
            }
        }
        Ok(self.value(i, b).sub_rational(&pay))
    }

    /// Utilities of every bundle of agent i, indexed by local mask.
    pub fn utility_table(&self, i: usize, prices: &[Rational]) -> Vec<ExtValue> {
        let inc = &self.incident[i];
        let k = inc.len();
        let signed: Vec<Rational> = inc
            .iter()
            .map(|&t| {
                if self.chi(i, t) == 1 {
                    prices[t].clone()
                } else {
                    -prices[t].clone()
                }
            })
            .collect();
        let mut pay = vec![Rational::zero(); 1 << k];
        for mask in 1..(1usize << k) {
            let low = mask.trailing_zeros() as usize;
            pay[mask] = &pay[mask & (mask - 1)] + &signed[low];
        }
        self.values[i]
            .iter()
            .zip(&pay)
            .map(|(v, p)| v.sub_rational(p))
            .collect()
    }

    pub fn check_prices(&self, prices: &[Rational]) -> Result<(), MarketError> {
        if prices.len() != self.m() {
            return Err(MarketError::PriceLength {
                got: prices.len(),
                want: self.m(),
            });
        }
        Ok(())
    }

    /// Largest |v| over finite values, the bound R used by the clock dynamics.
    pub fn value_bound(&self) -> Rational {
        let mut r = Rational::zero();
        for table in &self.values {
            for v in table.iter().filter_map(ExtValue::finite) {
                let a = num_traits::Signed::abs(v);
                if a > r {
                    r = a;
                }
            }
        }
        r
    }
}

impl fmt::Display for Market {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} (n={}, m={}, Δ={})",
            self.name,
            self.n(),
            self.m(),
            self.delta()
        )
    }
}

/// Convenience construction for tests and generated markets.
#[derive(Default)]
pub struct MarketBuilder {
    name: String,
    agents: Vec<String>,
    trades: Vec<(String, String, String)>,
    specs: HashMap<String, ValuationSpec>,
}

impl MarketBuilder {
    pub fn new(name: &str) -> Self {
        MarketBuilder {
            name: name.to_string(),
            ..Default::default()
        }
    }

    pub fn agents(mut self, ids: &[&str]) -> Self {
        self.agents.extend(ids.iter().map(|s| s.to_string()));
        self
    }

    pub fn trade(mut self, id: &str, seller: &str, buyer: &str) -> Self {
        self.trades.push((id.into(), seller.into(), buyer.into()));
        self
    }

    pub fn default_value(mut self, agent: &str, v: ExtValue) -> Self {
        self.specs.entry(agent.into()).or_default().default = v;
        self
    }

    pub fn value(mut self, agent: &str, bundle: &[&str], v: impl Into<ExtValue>) -> Self {
        let ids = bundle.iter().map(|s| s.to_string()).collect();
        self.specs
            .entry(agent.into())
            .or_default()
            .entries
            .push((ids, v.into()));
        self
    }

    pub fn value_int(self, agent: &str, bundle: &[&str], v: i64) -> Self {
        self.value(agent, bundle, ExtValue::Finite(crate::rational::int(v)))
    }

    pub fn build(mut self) -> Result<Market, MarketError> {
        for a in self.specs.keys() {
            if !self.agents.contains(a) {
                return Err(MarketError::UnknownAgent(a.clone()));
            }
        }
        let specs = self
            .agents
            .iter()
            .map(|a| self.specs.remove(a).unwrap_or_default())
            .collect();
        Market::new(self.name, self.agents, self.trades, specs)
    }
}
