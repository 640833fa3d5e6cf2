//! The market-to-auction reduction and grid extraction of demand facets.
//!
//! Every agent becomes a buyer of single-unit goods (the trades). Agent i holds
//! τ^i(Φ) = Φ_{i←} ∪ (Ω_{i→} ∖ Φ_{i→}): what it buys, plus what it could sell
//! but does not.

use num_integer::Integer;
use num_traits::Zero;
use thiserror::Error;

use crate::demand::{demand_set, GridError, PriceGrid};
use crate::equilibrium::{is_competitive_equilibrium, Arrangement};
use crate::market::{Bundle, Market};
use crate::rational::{int, ExtValue, Rational};

/// τ^i restricted to Ω_i. An involution on the agent's bundles.
pub fn tau(market: &Market, i: usize, b: Bundle) -> Bundle {
    let b = b.intersect(market.omega(i));
    b.intersect(market.buying(i))
        .union(market.selling(i).minus(b))
}

/// Per-agent auction bundles for a market allocation.
pub fn map_allocation(market: &Market, phi: Bundle) -> Vec<Bundle> {
    (0..market.n()).map(|i| tau(market, i, phi)).collect()
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ReductionError {
    #[error("expected {want} agent bundles, got {got}")]
    Length { got: usize, want: usize },
    #[error("good {good} is held by both or neither of its two parties")]
    Inconsistent { good: usize },
    #[error("agent {agent} holds good {good} it is not party to")]
    Foreign { agent: usize, good: usize },
}

/// Inverse of [`map_allocation`] on feasible, fully allocated auction outcomes.
pub fn unmap_allocation(market: &Market, psi: &[Bundle]) -> Result<Bundle, ReductionError> {
    if psi.len() != market.n() {
        return Err(ReductionError::Length {
            got: psi.len(),
            want: market.n(),
        });
    }
    for (agent, b) in psi.iter().enumerate() {
        if let Some(good) = b.minus(market.omega(agent)).iter().next() {
            return Err(ReductionError::Foreign { agent, good });
        }
    }
    let mut phi = Bundle::EMPTY;
    for (t, trade) in market.trades().iter().enumerate() {
        let at_buyer = psi[trade.buyer].contains(t);
        if at_buyer == psi[trade.seller].contains(t) {
            return Err(ReductionError::Inconsistent { good: t });
        }
        if at_buyer {
            phi = phi.with(t);
        }
    }
    Ok(phi)
}

/// Unit-supply auction derived from a market; v̂^i = v^i ∘ τ^i.
#[derive(Clone, Debug)]
pub struct Auction {
    pub buyers: Vec<String>,
    pub goods: Vec<String>,
    domains: Vec<Bundle>,
    tables: Vec<Vec<ExtValue>>,
}

pub fn to_auction(market: &Market) -> Auction {
    let tables = (0..market.n())
        .map(|i| {
            let k = market.incident(i).len();
            (0..1usize << k)
                .map(|local| {
                    market
                        .value(i, tau(market, i, market.global_bundle(i, local)))
                        .clone()
                })
                .collect()
        })
        .collect();
    Auction {
        buyers: market.agents().to_vec(),
        goods: (0..market.m())
            .map(|t| market.trade_id(t).to_string())
            .collect(),
        domains: (0..market.n()).map(|i| market.omega(i)).collect(),
        tables,
    }
}

impl Auction {
    pub fn n(&self) -> usize {
        self.buyers.len()
    }

    fn local(&self, i: usize, b: Bundle) -> usize {
        let mut out = 0;
        for (k, t) in self.domains[i].iter().enumerate() {
            if b.contains(t) {
                out |= 1 << k;
            }
        }
        out
    }

    fn global(&self, i: usize, local: usize) -> Bundle {
        Bundle::from_indices(
            self.domains[i]
                .iter()
                .enumerate()
                .filter(|(k, _)| local >> k & 1 == 1)
                .map(|(_, t)| t),
        )
    }

    /// v̂^i(Ψ); −∞ for bundles with goods outside the buyer's domain.
    pub fn value(&self, i: usize, b: Bundle) -> ExtValue {
        if !b.is_subset(self.domains[i]) {
            return ExtValue::NegInf;
        }
        self.tables[i][self.local(i, b)].clone()
    }

    pub fn utility(&self, i: usize, b: Bundle, prices: &[Rational]) -> ExtValue {
        let pay: Rational = b.iter().map(|t| &prices[t]).sum();
        self.value(i, b).sub_rational(&pay)
    }

    /// D̂^i(p) in increasing local-mask order.
    pub fn demand_set(&self, i: usize, prices: &[Rational]) -> Vec<Bundle> {
        let us: Vec<ExtValue> = (0..self.tables[i].len())
            .map(|l| self.utility(i, self.global(i, l), prices))
            .collect();
        let best = us.iter().max().cloned().unwrap_or_else(ExtValue::zero);
        us.iter()
            .enumerate()
            .filter(|(_, u)| **u == best)
            .map(|(l, _)| self.global(i, l))
            .collect()
    }

    pub fn welfare(&self, alloc: &[Bundle]) -> ExtValue {
        alloc
            .iter()
            .enumerate()
            .fold(ExtValue::zero(), |acc, (i, &b)| &acc + &self.value(i, b))
    }

    /// Supply is allocated exactly once and every buyer demands its bundle.
    pub fn is_competitive_equilibrium(&self, prices: &[Rational], alloc: &[Bundle]) -> bool {
        if alloc.len() != self.n() {
            return false;
        }
        let mut held = Bundle::EMPTY;
        for &b in alloc {
            if !held.intersect(b).is_empty() {
                return false;
            }
            held = held.union(b);
        }
        if held != Bundle::from_indices(0..self.goods.len()) {
            return false;
        }
        alloc
            .iter()
            .enumerate()
            .all(|(i, &b)| self.demand_set(i, prices).contains(&b))
    }
}

/// τ maps D^i(p) onto D̂^i(p).
pub fn verify_demand_mapping(
    market: &Market,
    auction: &Auction,
    i: usize,
    prices: &[Rational],
) -> bool {
    let mut mapped: Vec<Bundle> = demand_set(market, i, prices)
        .into_iter()
        .map(|b| tau(market, i, b))
        .collect();
    let mut direct = auction.demand_set(i, prices);
    mapped.sort();
    direct.sort();
    mapped == direct
}

/// The market arrangement is a CE iff its auction image is.
pub fn verify_ce_mapping(market: &Market, auction: &Auction, arr: &Arrangement) -> bool {
    let market_ce = is_competitive_equilibrium(market, arr, &Rational::zero());
    let auction_ce =
        auction.is_competitive_equilibrium(&arr.prices, &map_allocation(market, arr.allocation));
    market_ce == auction_ce
}

/// Largest agent dimension for facet extraction.
pub const MAX_FACET_DIM: usize = 3;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FacetError {
    #[error("agent has {0} trades; facet extraction handles at most {MAX_FACET_DIM}")]
    Dimension(usize),
    #[error("grid step must be 1/k with k ≥ 4")]
    TooCoarse,
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("facet extraction needs integral valuations")]
    NonIntegral,
    #[error("demand not unique at an off-lattice grid point (internal error)")]
    Ambiguous,
}

/// One facet of an agent's indifference locus: crossing it from `from` to `to`
/// changes the demand vector by weight·normal.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FacetRecord {
    pub anchor: Vec<Rational>,
    pub normal: Vec<i64>,
    pub weight: u64,
    pub from: Bundle,
    pub to: Bundle,
}

/// Demand vector: +1 on bought trades, −1 on sold ones.
fn demand_vector(market: &Market, i: usize, b: Bundle) -> Vec<i64> {
    (0..market.m())
        .map(|t| {
            if b.contains(t) {
                market.chi(i, t) as i64
            } else {
                0
            }
        })
        .collect()
}

/// Facets found by crossing grid cells along each axis.
///
/// Grid point j on axis k sits at lo + j·step + step/5^(k+1). Valuations are
/// integral and demand vectors have entries in {−1, 0, 1}, so indifference
/// hyperplanes satisfy n·p ∈ ℤ and no such point lies on one, nor on the
/// intersection of two. Own-price monotonicity then means each axis step
/// crosses at most one facet.
pub fn lip_facets(
    market: &Market,
    i: usize,
    grid: &PriceGrid,
) -> Result<Vec<FacetRecord>, FacetError> {
    let inc = market.incident(i).to_vec();
    let k = inc.len();
    if k > MAX_FACET_DIM {
        return Err(FacetError::Dimension(k));
    }
    if market
        .table(i)
        .iter()
        .filter_map(ExtValue::finite)
        .any(|v| !v.is_integer())
    {
        return Err(FacetError::NonIntegral);
    }
    let inv = grid.step.recip();
    if !inv.is_integer() || inv < int(4) {
        return Err(FacetError::TooCoarse);
    }
    let per_axis = grid.points_per_axis()?;
    if k == 0 {
        return Ok(Vec::new());
    }
    let total = per_axis.pow(k as u32);
    let offsets: Vec<Rational> = (0..k)
        .map(|a| &grid.step / int(5i64.pow(a as u32 + 1)))
        .collect();
    let point = |mut idx: usize| -> Vec<Rational> {
        let mut p = vec![Rational::zero(); market.m()];
        for (a, &t) in inc.iter().enumerate() {
            p[t] = &grid.lo + &grid.step * int((idx % per_axis) as i64) + &offsets[a];
            idx /= per_axis;
        }
        p
    };
    let mut demand = Vec::with_capacity(total);
    for idx in 0..total {
        let d = demand_set(market, i, &point(idx));
        if d.len() != 1 {
            return Err(FacetError::Ambiguous);
        }
        demand.push(d[0]);
    }
    let mut out: Vec<FacetRecord> = Vec::new();
    let mut stride = 1;
    for _axis in 0..k {
        for idx in 0..total {
            if (idx / stride) % per_axis + 1 == per_axis {
                continue;
            }
            let (from, to) = (demand[idx], demand[idx + stride]);
            if from == to
                || out
                    .iter()
                    .any(|f| (f.from, f.to) == (from, to) || (f.from, f.to) == (to, from))
            {
                continue;
            }
            let x = demand_vector(market, i, from);
            let y = demand_vector(market, i, to);
            let diff: Vec<i64> = y.iter().zip(&x).map(|(a, b)| a - b).collect();
            let weight = diff.iter().fold(0i64, |g, d| g.gcd(d));
            let normal = diff.iter().map(|d| d / weight).collect();
            out.push(FacetRecord {
                anchor: point(idx),
                normal,
                weight: weight as u64,
                from,
                to,
            });
        }
        stride *= per_axis;
    }
    Ok(out)
}

/// Normal of the form ±e^ω or ±(e^ω − e^χ).
pub fn is_substitutes_normal(normal: &[i64]) -> bool {
    let nz: Vec<i64> = normal.iter().copied().filter(|v| *v != 0).collect();
    match nz.as_slice() {
        [a] => a.abs() == 1,
        [a, b] => a.abs() == 1 && *a == -*b,
        _ => false,
    }
}

/// First facet whose normal is not a substitutes direction.
pub fn non_substitutes_facet(facets: &[FacetRecord]) -> Option<&FacetRecord> {
    facets.iter().find(|f| !is_substitutes_normal(&f.normal))
}

/// Facet grid with step 1/4 over the agent's default substitutability box.
pub fn default_facet_grid(market: &Market, i: usize) -> PriceGrid {
    let mut g = PriceGrid::default_for(market, i);
    g.step = crate::rational::ratio(1, 4);
    g
}

/// Substitutes verdict from facet normals.
pub fn is_substitutes_by_normals(
    market: &Market,
    i: usize,
    grid: &PriceGrid,
) -> Result<bool, FacetError> {
    Ok(non_substitutes_facet(&lip_facets(market, i, grid)?).is_none())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demand::is_fully_substitutable;
    use crate::equilibrium::solve_ce_prices;
    use crate::market::MarketBuilder;
    use crate::rational::ratio;
    use crate::welfare::social_welfare;

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

    fn opposite_trades() -> Market {
        MarketBuilder::new("b2")
            .agents(&["1", "2"])
            .trade("chi", "1", "2")
            .trade("phi", "2", "1")
            .value_int("1", &["chi"], -4)
            .value_int("1", &["phi"], -4)
            .value_int("1", &["chi", "phi"], -4)
            .value_int("2", &["chi"], 3)
            .value_int("2", &["phi"], 3)
            .value_int("2", &["chi", "phi"], 3)
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

    #[test]
    fn fig1_allocation_mapping() {
        let m = fig1();
        let omega = Bundle::single(0);
        assert_eq!(map_allocation(&m, omega), vec![Bundle::EMPTY, Bundle(0b11)]);
        assert_eq!(
            map_allocation(&m, Bundle::EMPTY),
            vec![Bundle::single(0), Bundle::single(1)]
        );
        assert_eq!(
            map_allocation(&m, Bundle(0b11)),
            vec![Bundle::single(1), Bundle::single(0)]
        );
    }

    #[test]
    fn tau_is_an_involution_and_round_trips() {
        for m in [fig1(), opposite_trades(), fig5()] {
            for i in 0..m.n() {
                for b in m.omega(i).subsets() {
                    assert_eq!(tau(&m, i, tau(&m, i, b)), b);
                }
            }
            let auction = to_auction(&m);
            for phi in Bundle::from_indices(0..m.m()).subsets() {
                let psi = map_allocation(&m, phi);
                assert_eq!(unmap_allocation(&m, &psi), Ok(phi));
                assert_eq!(auction.welfare(&psi), social_welfare(&m, phi));
            }
        }
    }

    #[test]
    fn unmap_rejects_double_holding() {
        let m = fig1();
        assert_eq!(
            unmap_allocation(&m, &[Bundle::single(0), Bundle(0b11)]),
            Err(ReductionError::Inconsistent { good: 0 })
        );
    }

    #[test]
    fn demand_mapping_on_integral_prices() {
        let m = fig1();
        let auction = to_auction(&m);
        for a in -3..=3 {
            for b in -3..=3 {
                let p = vec![int(a), int(b)];
                for i in 0..2 {
                    assert!(verify_demand_mapping(&m, &auction, i, &p));
                }
            }
        }
    }

    #[test]
    fn ce_mapping_examples() {
        let m = fig5();
        let auction = to_auction(&m);
        let ce = Arrangement {
            prices: vec![int(0), int(0)],
            allocation: Bundle::single(0),
        };
        assert!(is_competitive_equilibrium(&m, &ce, &Rational::zero()));
        assert!(auction.is_competitive_equilibrium(&ce.prices, &map_allocation(&m, ce.allocation)));
        assert!(verify_ce_mapping(&m, &auction, &ce));
        let not = Arrangement {
            prices: vec![int(0), int(0)],
            allocation: Bundle::EMPTY,
        };
        assert!(
            !auction.is_competitive_equilibrium(&not.prices, &map_allocation(&m, not.allocation))
        );
        assert!(verify_ce_mapping(&m, &auction, &not));
        let solved = solve_ce_prices(&fig1()).unwrap();
        assert!(to_auction(&fig1()).is_competitive_equilibrium(
            &solved.prices,
            &map_allocation(&fig1(), solved.allocation)
        ));
    }

    #[test]
    fn fig1_facet_orientations() {
        let m = fig1();
        let one = lip_facets(&m, 0, &default_facet_grid(&m, 0)).unwrap();
        assert!(!one.is_empty());
        for f in &one {
            assert_eq!(f.normal.iter().filter(|v| **v != 0).count(), 1, "{f:?}");
            assert_eq!(f.weight, 1);
        }
        let two = lip_facets(&m, 1, &default_facet_grid(&m, 1)).unwrap();
        assert!(two
            .iter()
            .any(|f| f.normal.iter().filter(|v| **v != 0).count() == 2));
        assert!(non_substitutes_facet(&two).is_none());
    }

    #[test]
    fn complements_agent_has_non_conforming_facet() {
        let m = opposite_trades();
        let grid = default_facet_grid(&m, 1);
        let facets = lip_facets(&m, 1, &grid).unwrap();
        let bad = non_substitutes_facet(&facets).unwrap();
        assert_eq!(
            bad.normal.iter().map(|v| v.abs()).collect::<Vec<_>>(),
            vec![1, 1]
        );
        assert_eq!(bad.normal[0], bad.normal[1]);
        assert!(!is_substitutes_by_normals(&m, 1, &grid).unwrap());
        assert!(is_substitutes_by_normals(&m, 0, &default_facet_grid(&m, 0)).unwrap());
    }

    #[test]
    fn normals_agree_with_grid_substitutability() {
        for m in [fig1(), opposite_trades(), fig5()] {
            for i in 0..m.n() {
                let by_grid = is_fully_substitutable(&m, i, &PriceGrid::default_for(&m, i))
                    .unwrap()
                    .is_none();
                assert_eq!(
                    is_substitutes_by_normals(&m, i, &default_facet_grid(&m, i)).unwrap(),
                    by_grid,
                    "agent {i}"
                );
            }
        }
    }

    #[test]
    fn facet_preconditions() {
        let m = fig1();
        let mut g = default_facet_grid(&m, 0);
        g.step = ratio(1, 2);
        assert_eq!(lip_facets(&m, 0, &g), Err(FacetError::TooCoarse));
        g.step = ratio(2, 9);
        assert_eq!(lip_facets(&m, 0, &g), Err(FacetError::TooCoarse));
    }
}
