//! The one-shot trading-network game: every agent posts an offer on each of
//! its trades, and a trade executes when buyer and seller offers coincide.

use std::collections::BTreeMap;

use num_traits::{Signed, Zero};
use thiserror::Error;

use crate::demand::{demand_tiebreak, indirect_utility};
use crate::equilibrium::{is_competitive_equilibrium, Arrangement, MarketOutcome};
use crate::market::{Bundle, Market, MarketError, PriceVector};
use crate::rational::{ceil, floor, format_rational, int, ExtValue, Rational};

/// Largest number of inactive trades the NE→CE candidate search will take on.
pub const MAX_INACTIVE: usize = 20;

/// One buyer offer and one seller offer per trade.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct OfferProfile {
    pub buyer: Vec<Rational>,
    pub seller: Vec<Rational>,
}

impl OfferProfile {
    pub fn new(buyer: Vec<Rational>, seller: Vec<Rational>) -> Self {
        assert_eq!(buyer.len(), seller.len());
        OfferProfile { buyer, seller }
    }

    /// Builds a profile from per-agent maps; every incidence must be covered.
    pub fn from_agent_offers(
        market: &Market,
        offers: &BTreeMap<String, BTreeMap<String, Rational>>,
    ) -> Result<Self, GameError> {
        let mut buyer = vec![None; market.m()];
        let mut seller = vec![None; market.m()];
        for (agent, per_trade) in offers {
            let i = market.agent_index(agent)?;
            for (trade, q) in per_trade {
                let t = market.trade_index(trade)?;
                match market.chi(i, t) {
                    1 => buyer[t] = Some(q.clone()),
                    -1 => seller[t] = Some(q.clone()),
                    _ => {
                        return Err(MarketError::NotIncident {
                            agent: agent.clone(),
                            trade: trade.clone(),
                        }
                        .into())
                    }
                }
            }
        }
        let mut b = Vec::with_capacity(market.m());
        let mut s = Vec::with_capacity(market.m());
        for t in 0..market.m() {
            let tr = market.trade(t);
            b.push(buyer[t].take().ok_or_else(|| GameError::Incomplete {
                agent: market.agent_id(tr.buyer).into(),
                trade: tr.id.clone(),
            })?);
            s.push(seller[t].take().ok_or_else(|| GameError::Incomplete {
                agent: market.agent_id(tr.seller).into(),
                trade: tr.id.clone(),
            })?);
        }
        Ok(OfferProfile {
            buyer: b,
            seller: s,
        })
    }

    pub fn len(&self) -> usize {
        self.buyer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buyer.is_empty()
    }

    /// σ^i_t.
    pub fn offer(&self, market: &Market, i: usize, t: usize) -> &Rational {
        if market.trade(t).buyer == i {
            &self.buyer[t]
        } else {
            debug_assert_eq!(market.trade(t).seller, i);
            &self.seller[t]
        }
    }

    pub fn set_offer(&mut self, market: &Market, i: usize, t: usize, q: Rational) {
        if market.trade(t).buyer == i {
            self.buyer[t] = q;
        } else {
            self.seller[t] = q;
        }
    }

    /// σ^{−i} as a full-length price vector (zero off Ω_i).
    pub fn faced(&self, market: &Market, i: usize) -> Vec<Rational> {
        let mut p = vec![Rational::zero(); market.m()];
        for &t in market.incident(i) {
            p[t] = if market.trade(t).buyer == i {
                self.seller[t].clone()
            } else {
                self.buyer[t].clone()
            };
        }
        p
    }

    /// Active trades.
    pub fn active(&self) -> Bundle {
        Bundle::from_indices((0..self.len()).filter(|&t| self.buyer[t] == self.seller[t]))
    }

    /// Per-agent view for serialisation.
    pub fn by_agent(&self, market: &Market) -> BTreeMap<String, BTreeMap<String, Rational>> {
        let mut out = BTreeMap::new();
        for i in 0..market.n() {
            let mine: BTreeMap<String, Rational> = market
                .incident(i)
                .iter()
                .map(|&t| {
                    (
                        market.trade_id(t).to_string(),
                        self.offer(market, i, t).clone(),
                    )
                })
                .collect();
            out.insert(market.agent_id(i).to_string(), mine);
        }
        out
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GameError {
    #[error(transparent)]
    Market(#[from] MarketError),
    #[error("offer profile has no offer from agent `{agent}` on trade `{trade}`")]
    Incomplete { agent: String, trade: String },
    #[error("arrangement is not a competitive equilibrium")]
    NotCompetitiveEquilibrium,
    #[error("offers are not an ε-tight Nash equilibrium")]
    NotTightNash,
    #[error("epsilon must be positive")]
    NonpositiveEpsilon,
}

/// The outcome (p, Φ) of an offer profile.
pub fn outcome_of_offers(offers: &OfferProfile) -> MarketOutcome {
    let active = offers.active();
    let prices = PriceVector::restricted(
        offers.len(),
        active.iter().map(|t| (t, offers.buyer[t].clone())),
    );
    MarketOutcome {
        prices,
        allocation: active,
    }
}

/// u^i(σ): utility of the agent's active trades at their prices.
pub fn agent_game_utility(market: &Market, i: usize, offers: &OfferProfile) -> ExtValue {
    let out = outcome_of_offers(offers);
    market
        .utility(i, out.allocation.intersect(market.omega(i)), &out.prices)
        .expect("active trades are priced")
}

/// The Alg. 1 response: match the counterpart on d^i(σ^{−i}), step ε away
/// elsewhere. Returns the new offers on Ω_i (in incidence order) and the bundle.
pub fn best_response_offers(
    market: &Market,
    i: usize,
    offers: &OfferProfile,
    epsilon: &Rational,
) -> (Vec<(usize, Rational)>, Bundle) {
    let faced = offers.faced(market, i);
    let bundle = demand_tiebreak(market, i, &faced);
    let new = market
        .incident(i)
        .iter()
        .map(|&t| {
            let q = if bundle.contains(t) {
                faced[t].clone()
            } else {
                &faced[t] - epsilon * int(market.chi(i, t) as i64)
            };
            (t, q)
        })
        .collect();
    (new, bundle)
}

/// A profitable deviation: offers achieving max_Ψ u^i(Ψ, σ^{−i}) and that value.
pub fn best_deviation(
    market: &Market,
    i: usize,
    offers: &OfferProfile,
    epsilon: &Rational,
) -> (Vec<(usize, Rational)>, Rational) {
    let (new, _) = best_response_offers(market, i, offers, epsilon);
    (new, indirect_utility(market, i, &offers.faced(market, i)))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum NashVerdict {
    NotNash {
        agent: usize,
        current: ExtValue,
        deviation: Rational,
    },
    Nash,
    EpsTightNash,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NashReport {
    pub verdict: NashVerdict,
    /// Trades with σ^b > σ^s. Such offers can be Nash, e.g. when the buyer's
    /// marginal value is below the ask and the seller's cost above the bid.
    pub crossed: Vec<usize>,
}

impl NashReport {
    pub fn is_nash(&self) -> bool {
        !matches!(self.verdict, NashVerdict::NotNash { .. })
    }

    pub fn is_tight(&self) -> bool {
        self.verdict == NashVerdict::EpsTightNash
    }
}

/// Checks every agent's best deviation, then ε-tightness (closed inequality).
pub fn is_nash(market: &Market, offers: &OfferProfile, epsilon: &Rational) -> NashReport {
    let crossed = (0..offers.len())
        .filter(|&t| offers.buyer[t] > offers.seller[t])
        .collect();
    for i in 0..market.n() {
        let current = agent_game_utility(market, i, offers);
        let deviation = indirect_utility(market, i, &offers.faced(market, i));
        if current < ExtValue::Finite(deviation.clone()) {
            return NashReport {
                verdict: NashVerdict::NotNash {
                    agent: i,
                    current,
                    deviation,
                },
                crossed,
            };
        }
    }
    let tight = (0..offers.len()).all(|t| (&offers.buyer[t] - &offers.seller[t]).abs() <= *epsilon);
    NashReport {
        verdict: if tight {
            NashVerdict::EpsTightNash
        } else {
            NashVerdict::Nash
        },
        crossed,
    }
}

/// ε-tight NE from a CE: active offers at the price, inactive buyer offers
/// ε/2 below and seller offers ε/2 above.
pub fn ne_from_ce(
    market: &Market,
    arr: &Arrangement,
    epsilon: &Rational,
) -> Result<OfferProfile, GameError> {
    if !epsilon.is_positive() {
        return Err(GameError::NonpositiveEpsilon);
    }
    if !is_competitive_equilibrium(market, arr, &Rational::zero()) {
        return Err(GameError::NotCompetitiveEquilibrium);
    }
    let half = epsilon / int(2);
    let mut buyer = Vec::with_capacity(market.m());
    let mut seller = Vec::with_capacity(market.m());
    for (t, p) in arr.prices.iter().enumerate() {
        if arr.allocation.contains(t) {
            buyer.push(p.clone());
            seller.push(p.clone());
        } else {
            buyer.push(p - &half);
            seller.push(p + &half);
        }
    }
    let offers = OfferProfile { buyer, seller };
    debug_assert!(is_nash(market, &offers, epsilon).is_tight());
    Ok(offers)
}

/// Active prices from the outcome, inactive prices at the offer midpoint; an
/// εΔ-approximate CE.
pub fn approx_ce_from_tight_ne(
    market: &Market,
    offers: &OfferProfile,
    epsilon: &Rational,
) -> Result<Arrangement, GameError> {
    if !is_nash(market, offers, epsilon).is_tight() {
        return Err(GameError::NotTightNash);
    }
    let prices = (0..offers.len())
        .map(|t| (&offers.buyer[t] + &offers.seller[t]) / int(2))
        .collect();
    let arr = Arrangement {
        prices,
        allocation: offers.active(),
    };
    let slack = epsilon * int(market.delta() as i64);
    if !is_competitive_equilibrium(market, &arr, &slack) {
        return Err(GameError::NotTightNash);
    }
    Ok(arr)
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExtendError {
    #[error(transparent)]
    Game(#[from] GameError),
    #[error("epsilon {epsilon} is above the bound 1/(2Δ−2) = {bound}")]
    EpsilonTooLarge { epsilon: String, bound: String },
    #[error("no extension at ε = 1/(2Δ−2) = {epsilon}: no integral prices make every agent demand ∅ on the inactive trades")]
    AtTightnessBound { epsilon: String },
    #[error("no candidate price vector extends the outcome to a competitive equilibrium")]
    NoExtension,
    #[error("{0} inactive trades exceed the candidate-search cap of {MAX_INACTIVE}")]
    TooManyInactive(usize),
}

/// The sub-market on inactive trades with each agent's active trades folded in
/// at their offers: ṽ^i(Ψ) = max_{Ξ⊆Φ_i} [v^i(Ψ∪Ξ) − Σ_{ω∈Ξ} χ^i_ω σ^{−i}_ω],
/// normalised so ṽ^i(∅) = 0. Returns the market and, for each of its trades,
/// the index of the original trade.
pub fn reduced_market(market: &Market, offers: &OfferProfile) -> (Market, Vec<usize>) {
    let active = offers.active();
    let inactive: Vec<usize> = (0..market.m()).filter(|&t| !active.contains(t)).collect();
    let trades = inactive
        .iter()
        .map(|&t| {
            let tr = market.trade(t);
            (
                tr.id.clone(),
                market.agent_id(tr.seller).to_string(),
                market.agent_id(tr.buyer).to_string(),
            )
        })
        .collect();
    let base = Market::new(
        format!("{}-reduced", market.name()),
        market.agents().to_vec(),
        trades,
        Vec::new(),
    )
    .expect("a subgraph of a valid market is valid");
    let mut tables = Vec::with_capacity(market.n());
    for i in 0..market.n() {
        let faced = offers.faced(market, i);
        let phi_i = active.intersect(market.omega(i));
        let best = |psi: Bundle| -> ExtValue {
            phi_i
                .subsets()
                .map(|xi| {
                    market
                        .value(i, psi.union(xi))
                        .sub_rational(&market.payment(i, xi, &faced))
                })
                .max()
                .expect("∅ ⊆ Φ_i")
        };
        let zero = best(Bundle::EMPTY);
        let zero = zero.finite().cloned().expect("ṽ(∅) ≥ v(∅) = 0");
        let k = base.incident(i).len();
        let table = (0..1usize << k)
            .map(|local| {
                let sub = base.global_bundle(i, local);
                let orig = Bundle::from_indices(sub.iter().map(|t| inactive[t]));
                if local == 0 {
                    ExtValue::zero()
                } else {
                    best(orig).sub_rational(&zero)
                }
            })
            .collect();
        tables.push(table);
    }
    (
        base.with_tables(format!("{}-reduced", market.name()), tables),
        inactive,
    )
}

/// Extends an ε-tight NE outcome to a CE with integral prices on inactive
/// trades, each drawn from {⌊σ^s⌋, ⌈σ^b⌉}.
pub fn extend_ne_to_ce(
    market: &Market,
    offers: &OfferProfile,
    epsilon: &Rational,
) -> Result<Arrangement, ExtendError> {
    if !epsilon.is_positive() {
        return Err(GameError::NonpositiveEpsilon.into());
    }
    if !is_nash(market, offers, epsilon).is_tight() {
        return Err(GameError::NotTightNash.into());
    }
    let delta = market.delta() as i64;
    let bound = if delta >= 2 {
        Some(Rational::new(1.into(), (2 * delta - 2).into()))
    } else {
        None
    };
    let at_bound = match &bound {
        Some(b) if epsilon > b => {
            return Err(ExtendError::EpsilonTooLarge {
                epsilon: format_rational(epsilon),
                bound: format_rational(b),
            })
        }
        Some(b) => epsilon == b,
        None => false,
    };
    let (reduced, inactive) = reduced_market(market, offers);
    if inactive.len() > MAX_INACTIVE {
        return Err(ExtendError::TooManyInactive(inactive.len()));
    }
    let candidates: Vec<Vec<Rational>> = inactive
        .iter()
        .map(|&t| {
            let lo = floor(&offers.seller[t]);
            let hi = ceil(&offers.buyer[t]);
            if lo == hi {
                vec![lo]
            } else {
                vec![lo, hi]
            }
        })
        .collect();
    let total: usize = candidates.iter().map(Vec::len).product();
    let active = offers.active();
    for code in 0..total {
        let mut rest = code;
        let mut sub_prices = Vec::with_capacity(inactive.len());
        for options in &candidates {
            sub_prices.push(options[rest % options.len()].clone());
            rest /= options.len();
        }
        let all_idle =
            (0..reduced.n()).all(|i| indirect_utility(&reduced, i, &sub_prices).is_zero());
        if !all_idle {
            continue;
        }
        let mut prices: Vec<Rational> = offers.buyer.clone();
        for (k, &t) in inactive.iter().enumerate() {
            prices[t] = sub_prices[k].clone();
        }
        let arr = Arrangement {
            prices,
            allocation: active,
        };
        if is_competitive_equilibrium(market, &arr, &Rational::zero()) {
            return Ok(arr);
        }
    }
    if at_bound {
        Err(ExtendError::AtTightnessBound {
            epsilon: format_rational(epsilon),
        })
    } else {
        Err(ExtendError::NoExtension)
    }
}

/// Offers posting `low` as every bid and `high` as every ask.
pub fn degenerate_offers(m: usize, low: Rational, high: Rational) -> OfferProfile {
    OfferProfile {
        buyer: vec![low; m],
        seller: vec![high; m],
    }
}

/// Whether every price is an integer.
pub fn is_integral(prices: &[Rational]) -> bool {
    prices.iter().all(|q| q.is_integer())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equilibrium::solve_ce_prices;
    use crate::market::MarketBuilder;
    use crate::rational::ratio;

    fn fig1() -> Market {
        MarketBuilder::new("fig1")
            .agents(&["1", "2"])
            .trade("omega", "1", "2")
            .trade("chi", "2", "1")
            .value_int("1", &["omega"], -1)
            .value_int("1", &["chi"], 1)
            .value_int("1", &["omega", "chi"], 0)
            .value_int("2", &["omega"], 1)
            .value_int("2", &["chi"], -1)
            .value_int("2", &["omega", "chi"], 1)
            .build()
            .unwrap()
    }

    fn fig5() -> Market {
        MarketBuilder::new("fig5")
            .agents(&["s", "b"])
            .trade("omega", "s", "b")
            .trade("chi", "s", "b")
            .value_int("s", &["omega"], 0)
            .value_int("s", &["chi"], 0)
            .value_int("s", &["omega", "chi"], 0)
            .value_int("b", &["omega"], 1)
            .value_int("b", &["chi"], 1)
            .value_int("b", &["omega", "chi"], 0)
            .build()
            .unwrap()
    }

    fn fig7() -> Market {
        MarketBuilder::new("fig7")
            .agents(&["s1", "s2", "b"])
            .trade("omega1", "s1", "b")
            .trade("omega2", "s2", "b")
            .value_int("s1", &["omega1"], -2)
            .value_int("s2", &["omega2"], -2)
            .value_int("b", &["omega1"], 3)
            .value_int("b", &["omega2"], 3)
            .value_int("b", &["omega1", "omega2"], 3)
            .build()
            .unwrap()
    }

    fn core_not_ne() -> Market {
        MarketBuilder::new("b1")
            .agents(&["i", "j"])
            .trade("chi", "i", "j")
            .trade("phi", "i", "j")
            .value_int("i", &["chi"], 0)
            .value_int("i", &["phi"], 0)
            .value_int("i", &["chi", "phi"], -3)
            .value_int("j", &["chi"], 5)
            .value_int("j", &["phi"], 5)
            .value_int("j", &["chi", "phi"], 9)
            .build()
            .unwrap()
    }

    fn example2_offers() -> OfferProfile {
        // Agent 1 asks 1.5 on ω and bids 0.5 on χ; agent 2 bids 1 and asks 1.
        OfferProfile::new(vec![int(1), ratio(1, 2)], vec![ratio(3, 2), int(1)])
    }

    #[test]
    fn table2_terminal_offers_execute_omega1() {
        let offers = OfferProfile::new(vec![int(2), ratio(3, 2)], vec![int(2), int(2)]);
        let out = outcome_of_offers(&offers);
        assert_eq!(out.allocation, Bundle::single(0));
        assert_eq!(out.prices.get(0), Some(&int(2)));
        assert_eq!(out.prices.get(1), None);
    }

    #[test]
    fn mismatched_offers_execute_nothing() {
        let offers = degenerate_offers(2, int(-100), int(100));
        assert_eq!(outcome_of_offers(&offers).allocation, Bundle::EMPTY);
        assert_eq!(
            outcome_of_offers(&example2_offers()).allocation,
            Bundle::EMPTY
        );
    }

    #[test]
    fn profile_from_agent_maps_requires_completeness() {
        let m = fig1();
        let mut map = BTreeMap::new();
        map.insert(
            "1".to_string(),
            BTreeMap::from([("omega".to_string(), ratio(3, 2))]),
        );
        map.insert(
            "2".to_string(),
            BTreeMap::from([("omega".to_string(), int(1)), ("chi".to_string(), int(1))]),
        );
        assert!(matches!(
            OfferProfile::from_agent_offers(&m, &map),
            Err(GameError::Incomplete { .. })
        ));
        map.get_mut("1").unwrap().insert("chi".into(), ratio(1, 2));
        assert_eq!(
            OfferProfile::from_agent_offers(&m, &map).unwrap(),
            example2_offers()
        );
    }

    #[test]
    fn buyer_facing_high_asks_keeps_nothing() {
        let m = fig7();
        let offers = OfferProfile::new(vec![int(2), int(2)], vec![int(3), int(3)]);
        let (_, value) = best_deviation(&m, 2, &offers, &ratio(1, 2));
        assert_eq!(value, int(0));
        assert_eq!(agent_game_utility(&m, 2, &offers), ExtValue::zero());
    }

    #[test]
    fn best_deviation_offers_realise_the_value() {
        let m = fig7();
        let eps = ratio(1, 2);
        let mut offers = OfferProfile::new(vec![int(0), int(0)], vec![int(2), int(2)]);
        let (new, value) = best_deviation(&m, 2, &offers, &eps);
        for (t, q) in new {
            offers.set_offer(&m, 2, t, q);
        }
        assert_eq!(agent_game_utility(&m, 2, &offers), ExtValue::Finite(value));
    }

    #[test]
    fn example2_is_tight_nash() {
        let report = is_nash(&fig1(), &example2_offers(), &ratio(1, 2));
        assert_eq!(report.verdict, NashVerdict::EpsTightNash);
        assert!(report.crossed.is_empty());
    }

    #[test]
    fn far_apart_offers_are_nash_but_loose() {
        let report = is_nash(
            &fig1(),
            &degenerate_offers(2, int(-100), int(100)),
            &ratio(1, 2),
        );
        assert_eq!(report.verdict, NashVerdict::Nash);
    }

    #[test]
    fn core_outcome_not_supported_by_offers() {
        // p = (2,2), Φ = {χ, φ}: i earns −3 + 4 = 1 but can sell one trade for 2.
        let m = core_not_ne();
        let offers = OfferProfile::new(vec![int(2), int(2)], vec![int(2), int(2)]);
        match is_nash(&m, &offers, &ratio(1, 2)).verdict {
            NashVerdict::NotNash {
                agent,
                current,
                deviation,
            } => {
                assert_eq!(agent, 0);
                assert_eq!(current, ExtValue::Finite(int(1)));
                assert_eq!(deviation, int(2));
            }
            v => panic!("expected a deviation, got {v:?}"),
        }
        assert_eq!(agent_game_utility(&m, 1, &offers), ExtValue::Finite(int(5)));
    }

    #[test]
    fn crossed_offers_can_be_nash() {
        // Buyer values the trade at 1, seller's cost is 5; bid 3 > ask 2.
        let m = MarketBuilder::new("x")
            .agents(&["s", "b"])
            .trade("t", "s", "b")
            .value_int("s", &["t"], -5)
            .value_int("b", &["t"], 1)
            .build()
            .unwrap();
        let offers = OfferProfile::new(vec![int(3)], vec![int(2)]);
        let report = is_nash(&m, &offers, &int(1));
        assert_eq!(report.verdict, NashVerdict::EpsTightNash);
        assert_eq!(report.crossed, vec![0]);
    }

    #[test]
    fn ne_from_fig5_ce() {
        let m = fig5();
        let arr = Arrangement {
            prices: vec![int(0), int(0)],
            allocation: Bundle::single(0),
        };
        let offers = ne_from_ce(&m, &arr, &ratio(1, 2)).unwrap();
        assert_eq!(offers.seller, vec![int(0), ratio(1, 4)]);
        assert_eq!(offers.buyer, vec![int(0), ratio(-1, 4)]);
        assert!(is_nash(&m, &offers, &ratio(1, 2)).is_tight());
    }

    #[test]
    fn ne_from_fig7_solved_ce() {
        let m = fig7();
        let arr = solve_ce_prices(&m).unwrap();
        let offers = ne_from_ce(&m, &arr, &ratio(1, 2)).unwrap();
        assert!(is_nash(&m, &offers, &ratio(1, 2)).is_tight());
        let not_ce = Arrangement {
            prices: vec![int(2), ratio(3, 2)],
            allocation: Bundle::single(0),
        };
        assert_eq!(
            ne_from_ce(&m, &not_ce, &ratio(1, 2)),
            Err(GameError::NotCompetitiveEquilibrium)
        );
    }

    #[test]
    fn example2_midpoints_are_one_approximate() {
        let m = fig1();
        let arr = approx_ce_from_tight_ne(&m, &example2_offers(), &ratio(1, 2)).unwrap();
        assert_eq!(arr.allocation, Bundle::EMPTY);
        assert_eq!(arr.prices, vec![ratio(5, 4), ratio(3, 4)]);
        assert!(is_competitive_equilibrium(&m, &arr, &int(1)));
        assert!(!is_competitive_equilibrium(&m, &arr, &Rational::zero()));
    }

    #[test]
    fn table2_terminal_is_approximate_ce() {
        let m = fig7();
        let offers = OfferProfile::new(vec![int(2), ratio(3, 2)], vec![int(2), int(2)]);
        let arr = approx_ce_from_tight_ne(&m, &offers, &ratio(1, 2)).unwrap();
        assert_eq!(arr.allocation, Bundle::single(0));
        assert_eq!(arr.prices[0], int(2));
        assert!(is_competitive_equilibrium(&m, &arr, &int(1)));
    }

    #[test]
    fn example2_extension_fails_at_bound() {
        let err = extend_ne_to_ce(&fig1(), &example2_offers(), &ratio(1, 2)).unwrap_err();
        assert_eq!(
            err,
            ExtendError::AtTightnessBound {
                epsilon: "0.5".into()
            }
        );
    }

    #[test]
    fn extension_rejects_large_epsilon() {
        let m = fig1();
        let arr = Arrangement {
            prices: vec![int(1), int(1)],
            allocation: Bundle(0b11),
        };
        let offers = ne_from_ce(&m, &arr, &ratio(3, 4)).unwrap();
        assert!(matches!(
            extend_ne_to_ce(&m, &offers, &ratio(3, 4)),
            Err(ExtendError::EpsilonTooLarge { .. })
        ));
    }

    #[test]
    fn fig1_round_trip_below_bound() {
        let m = fig1();
        let arr = Arrangement {
            prices: vec![int(1), int(1)],
            allocation: Bundle(0b11),
        };
        let offers = ne_from_ce(&m, &arr, &ratio(1, 4)).unwrap();
        assert_eq!(extend_ne_to_ce(&m, &offers, &ratio(1, 4)).unwrap(), arr);
    }

    #[test]
    fn fig1_has_no_tight_nash_with_nothing_active() {
        // Φ = ∅ is not efficient, so no ε-tight NE below the bound leaves both
        // trades inactive. Scan a lattice of candidate profiles.
        let m = fig1();
        let eps = ratio(1, 4);
        let vals: Vec<Rational> = (0..=12).map(|k| ratio(k, 4)).collect();
        for b0 in &vals {
            for s0 in &vals {
                for b1 in &vals {
                    for s1 in &vals {
                        let offers = OfferProfile::new(
                            vec![b0.clone(), b1.clone()],
                            vec![s0.clone(), s1.clone()],
                        );
                        if offers.active().is_empty() {
                            assert!(!is_nash(&m, &offers, &eps).is_tight());
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn table2_terminal_extends_at_bound() {
        let m = fig7();
        let offers = OfferProfile::new(vec![int(2), ratio(3, 2)], vec![int(2), int(2)]);
        let arr = extend_ne_to_ce(&m, &offers, &ratio(1, 2)).unwrap();
        assert_eq!(
            arr,
            Arrangement {
                prices: vec![int(2), int(2)],
                allocation: Bundle::single(0)
            }
        );
    }

    #[test]
    fn reduced_market_folds_in_active_trades() {
        let m = fig7();
        let offers = OfferProfile::new(vec![int(2), ratio(3, 2)], vec![int(2), int(2)]);
        let (red, map) = reduced_market(&m, &offers);
        assert_eq!(map, vec![1]);
        assert_eq!(red.m(), 1);
        // Buyer: ṽ(∅) = 3 − 2 = 1; ṽ({ω2}) = max(3, 3 − 2) − 1 = 2.
        assert_eq!(red.value(2, Bundle::single(0)), &ExtValue::Finite(int(2)));
        assert_eq!(red.value(1, Bundle::single(0)), &ExtValue::Finite(int(-2)));
    }
}
