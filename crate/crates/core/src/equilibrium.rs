//! Arrangements, competitive-equilibrium verification, and exact CE prices from
//! the dual of the welfare LP.

use num_traits::{One, Zero};
use thiserror::Error;

use crate::demand::indirect_utility;
use crate::lp::{LinearProgram, LpResult, Relation, Sense};
use crate::market::{Bundle, Market, PriceVector};
use crate::rational::{int, ExtValue, Rational};
use crate::welfare::{efficient_allocations, is_efficient, market_value};

/// Prices on every trade plus a trade set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Arrangement {
    pub prices: Vec<Rational>,
    pub allocation: Bundle,
}

/// Prices only on the executed trades.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MarketOutcome {
    pub prices: PriceVector,
    pub allocation: Bundle,
}

impl MarketOutcome {
    /// Errors unless the price scope is exactly the allocation.
    pub fn new(prices: PriceVector, allocation: Bundle) -> Result<Self, EquilibriumError> {
        if prices.scope() != allocation {
            return Err(EquilibriumError::OutcomeScope);
        }
        Ok(MarketOutcome { prices, allocation })
    }

    pub fn from_arrangement(arr: &Arrangement) -> Self {
        let m = arr.prices.len();
        MarketOutcome {
            prices: PriceVector::full(arr.prices.clone()).restrict(arr.allocation),
            allocation: arr.allocation,
        }
        .debug_checked(m)
    }

    fn debug_checked(self, m: usize) -> Self {
        debug_assert_eq!(self.prices.len(), m);
        self
    }

    /// u^i(Φ_i, p) for every agent.
    pub fn utilities(&self, market: &Market) -> Vec<ExtValue> {
        (0..market.n())
            .map(|i| {
                market
                    .utility(i, self.allocation.intersect(market.omega(i)), &self.prices)
                    .expect("outcome prices cover the allocation")
            })
            .collect()
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EquilibriumError {
    #[error("outcome prices must be specified exactly on the allocated trades")]
    OutcomeScope,
    #[error(
        "the market has no competitive equilibrium (LP value {lp} exceeds market value {value})"
    )]
    NoCompetitiveEquilibrium { lp: String, value: String },
    #[error("welfare dual is {0}; this indicates a modelling bug")]
    DualFailure(&'static str),
    #[error("allocation is not efficient")]
    NotEfficient,
    #[error("solved prices failed CE verification")]
    VerificationFailed,
    #[error("row {0} has more than one +1, more than one −1, or another entry")]
    RowShape(usize),
}

/// max_Ψ u^i(Ψ,p) − u^i(Φ_i,p) per agent; `None` when u^i(Φ_i,p) = −∞.
pub fn ce_slack(market: &Market, arr: &Arrangement) -> Vec<Option<Rational>> {
    (0..market.n())
        .map(|i| {
            let best = indirect_utility(market, i, &arr.prices);
            match market.utility_at(i, arr.allocation, &arr.prices) {
                ExtValue::Finite(u) => Some(best - u),
                ExtValue::NegInf => None,
            }
        })
        .collect()
}

/// First agent whose bundle is more than ε short of its best bundle.
pub fn first_ce_violation(market: &Market, arr: &Arrangement, epsilon: &Rational) -> Option<usize> {
    ce_slack(market, arr).iter().position(|s| match s {
        Some(gap) => gap > epsilon,
        None => true,
    })
}

/// Exact (ε = 0) or ε-approximate competitive equilibrium.
pub fn is_competitive_equilibrium(market: &Market, arr: &Arrangement, epsilon: &Rational) -> bool {
    arr.prices.len() == market.m() && first_ce_violation(market, arr, epsilon).is_none()
}

/// Variable layout of the welfare dual: u^i first, then p_ω.
pub struct WelfareDual {
    pub program: LinearProgram,
    pub n: usize,
    pub m: usize,
}

impl WelfareDual {
    pub fn u(&self, i: usize) -> usize {
        i
    }

    pub fn p(&self, t: usize) -> usize {
        self.n + t
    }
}

/// min Σ u^i s.t. u^i + Σ_ω χ^i_ω p_ω ≥ v^i(Φ) for every finite (i, Φ), u ≥ 0,
/// p free.
pub fn welfare_dual(market: &Market) -> WelfareDual {
    let (n, m) = (market.n(), market.m());
    let mut lp = LinearProgram::new(n + m, Sense::Minimize);
    for i in 0..n {
        lp.set_objective(i, Rational::one());
    }
    for t in 0..m {
        lp.set_free(n + t);
    }
    for i in 0..n {
        for (local, v) in market.table(i).iter().enumerate().skip(1) {
            let ExtValue::Finite(v) = v else { continue };
            let b = market.global_bundle(i, local);
            let mut coeffs = vec![(i, Rational::one())];
            coeffs.extend(b.iter().map(|t| (n + t, int(market.chi(i, t) as i64))));
            lp.add(coeffs, Relation::Ge, v.clone());
        }
    }
    WelfareDual { program: lp, n, m }
}

/// Exact CE prices from the welfare dual.
pub fn ce_price_vector(market: &Market) -> Result<Vec<Rational>, EquilibriumError> {
    let dual = welfare_dual(market);
    match dual.program.solve() {
        LpResult::Optimal { value, x } => {
            let w = market_value(market);
            if value != w {
                return Err(EquilibriumError::NoCompetitiveEquilibrium {
                    lp: crate::rational::format_rational(&value),
                    value: crate::rational::format_rational(&w),
                });
            }
            Ok((0..dual.m).map(|t| x[dual.p(t)].clone()).collect())
        }
        LpResult::Infeasible => Err(EquilibriumError::DualFailure("infeasible")),
        LpResult::Unbounded => Err(EquilibriumError::DualFailure("unbounded")),
    }
}

/// Solves the welfare dual and pairs its prices with the first efficient
/// allocation; the result is verified.
pub fn solve_ce_prices(market: &Market) -> Result<Arrangement, EquilibriumError> {
    let prices = ce_price_vector(market)?;
    for allocation in efficient_allocations(market) {
        let arr = Arrangement {
            prices: prices.clone(),
            allocation,
        };
        if is_competitive_equilibrium(market, &arr, &Rational::zero()) {
            return Ok(arr);
        }
    }
    Err(EquilibriumError::VerificationFailed)
}

/// CE prices extending a given efficient allocation.
pub fn ce_prices_for(market: &Market, allocation: Bundle) -> Result<Arrangement, EquilibriumError> {
    if !is_efficient(market, allocation) {
        return Err(EquilibriumError::NotEfficient);
    }
    let arr = Arrangement {
        prices: ce_price_vector(market)?,
        allocation,
    };
    if is_competitive_equilibrium(market, &arr, &Rational::zero()) {
        Ok(arr)
    } else {
        Err(EquilibriumError::VerificationFailed)
    }
}

/// Whether every square submatrix of at most `cap` rows has determinant in
/// {0, ±1}. Rows may contain at most one +1 and one −1.
pub fn unimodularity_check(rows: &[Vec<i64>], cap: usize) -> Result<bool, EquilibriumError> {
    for (r, row) in rows.iter().enumerate() {
        let plus = row.iter().filter(|&&x| x == 1).count();
        let minus = row.iter().filter(|&&x| x == -1).count();
        if plus > 1 || minus > 1 || row.iter().any(|&x| x != 0 && x != 1 && x != -1) {
            return Err(EquilibriumError::RowShape(r));
        }
    }
    let nrows = rows.len();
    let ncols = rows.iter().map(Vec::len).max().unwrap_or(0);
    for k in 1..=cap.min(nrows).min(ncols) {
        for rs in combinations(nrows, k) {
            for cs in combinations(ncols, k) {
                let sub: Vec<Vec<Rational>> = rs
                    .iter()
                    .map(|&r| {
                        cs.iter()
                            .map(|&c| int(*rows[r].get(c).unwrap_or(&0)))
                            .collect()
                    })
                    .collect();
                let d = determinant(sub);
                if !(d.is_zero() || d == Rational::one() || d == -Rational::one()) {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

pub(crate) fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for x in start..n {
            if n - x < k - cur.len() {
                break;
            }
            cur.push(x);
            rec(x + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

/// Exact determinant by Gaussian elimination.
#[allow(clippy::needless_range_loop)]
pub(crate) fn determinant(mut a: Vec<Vec<Rational>>) -> Rational {
    let n = a.len();
    let mut det = Rational::one();
    for col in 0..n {
        let Some(piv) = (col..n).find(|&r| !a[r][col].is_zero()) else {
            return Rational::zero();
        };
        if piv != col {
            a.swap(piv, col);
            det = -det;
        }
        let p = a[col][col].clone();
        det *= &p;
        for r in col + 1..n {
            if a[r][col].is_zero() {
                continue;
            }
            let f = &a[r][col] / &p;
            for c in col..n {
                let x = &f * &a[col][c];
                a[r][c] -= x;
            }
        }
    }
    det
}

#[cfg(test)]
mod tests {
    use super::*;
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

    #[test]
    fn fig1_unit_prices_clear() {
        let m = fig1();
        let arr = Arrangement {
            prices: vec![int(1), int(1)],
            allocation: Bundle(0b11),
        };
        assert!(is_competitive_equilibrium(&m, &arr, &Rational::zero()));
    }

    #[test]
    fn fig5_zero_prices_clear() {
        let m = fig5();
        let arr = Arrangement {
            prices: vec![int(0), int(0)],
            allocation: Bundle::single(0),
        };
        assert!(is_competitive_equilibrium(&m, &arr, &Rational::zero()));
        let bad = Arrangement {
            prices: vec![int(5), int(5)],
            allocation: Bundle::single(0),
        };
        assert!(!is_competitive_equilibrium(&m, &bad, &Rational::zero()));
    }

    #[test]
    fn approximate_ce_slack() {
        let m = fig7();
        // At (2, 3/2) the buyer prefers ω2 by 1/2.
        let arr = Arrangement {
            prices: vec![int(2), ratio(3, 2)],
            allocation: Bundle::single(0),
        };
        assert!(!is_competitive_equilibrium(&m, &arr, &Rational::zero()));
        assert!(is_competitive_equilibrium(&m, &arr, &ratio(1, 2)));
        assert_eq!(first_ce_violation(&m, &arr, &ratio(1, 4)), Some(2));
    }

    #[test]
    fn fig5_solved_prices_are_zero() {
        let m = fig5();
        let arr = solve_ce_prices(&m).unwrap();
        assert_eq!(arr.prices, vec![int(0), int(0)]);
        assert!(arr.allocation == Bundle::single(0) || arr.allocation == Bundle::single(1));
        let out = MarketOutcome::from_arrangement(&arr);
        assert_eq!(
            out.utilities(&m),
            vec![ExtValue::zero(), ExtValue::Finite(int(1))]
        );
    }

    #[test]
    fn fig7_solved_prices_support_a_single_sale() {
        let m = fig7();
        let arr = solve_ce_prices(&m).unwrap();
        assert!(is_competitive_equilibrium(&m, &arr, &Rational::zero()));
        assert!(arr.allocation == Bundle::single(0) || arr.allocation == Bundle::single(1));
        let p1 = &arr.prices[0];
        assert!(*p1 >= int(2) && *p1 <= int(3));
    }

    #[test]
    fn no_trades_gives_empty_prices() {
        let m = MarketBuilder::new("solo").agents(&["a"]).build().unwrap();
        assert_eq!(
            solve_ce_prices(&m).unwrap(),
            Arrangement {
                prices: vec![],
                allocation: Bundle::EMPTY
            }
        );
    }

    #[test]
    fn complements_market_has_no_ce() {
        // Buyer wants both goods from two sellers, each seller is unit-supply.
        let m = MarketBuilder::new("compl")
            .agents(&["s1", "s2", "b1", "b2"])
            .trade("x", "s1", "b1")
            .trade("y", "s2", "b1")
            .trade("x2", "s1", "b2")
            .trade("y2", "s2", "b2")
            .value_int("s1", &["x"], 0)
            .value_int("s1", &["x2"], 0)
            .value_int("s2", &["y"], 0)
            .value_int("s2", &["y2"], 0)
            .value_int("b1", &["x"], 0)
            .value_int("b1", &["y"], 0)
            .value_int("b1", &["x", "y"], 3)
            .value_int("b2", &["x2"], 2)
            .value_int("b2", &["y2"], 2)
            .value_int("b2", &["x2", "y2"], 2)
            .build()
            .unwrap();
        assert!(matches!(
            solve_ce_prices(&m),
            Err(EquilibriumError::NoCompetitiveEquilibrium { .. })
        ));
    }

    #[test]
    fn ce_prices_for_inefficient_allocation_rejected() {
        let m = fig7();
        assert_eq!(
            ce_prices_for(&m, Bundle(0b11)),
            Err(EquilibriumError::NotEfficient)
        );
        let arr = ce_prices_for(&m, Bundle::single(1)).unwrap();
        assert!(is_competitive_equilibrium(&m, &arr, &Rational::zero()));
    }

    #[test]
    fn unimodularity_examples() {
        // e^ω, −e^χ, e^ω − e^χ
        let rows = vec![vec![1, 0], vec![0, -1], vec![1, -1]];
        assert_eq!(unimodularity_check(&rows, 3), Ok(true));
        let id = vec![vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 1]];
        assert_eq!(unimodularity_check(&id, 3), Ok(true));
        assert_eq!(
            unimodularity_check(&[vec![1, 1, 0]], 3),
            Err(EquilibriumError::RowShape(0))
        );
    }

    #[test]
    fn determinant_oracle() {
        let a = vec![vec![int(2), int(1)], vec![int(1), int(3)]];
        assert_eq!(determinant(a), int(5));
        assert_eq!(combinations(4, 2).len(), 6);
    }

    #[test]
    fn outcome_scope_enforced() {
        let pv = PriceVector::restricted(2, [(0, int(1))]);
        assert!(MarketOutcome::new(pv.clone(), Bundle::single(0)).is_ok());
        assert_eq!(
            MarketOutcome::new(pv, Bundle(0b11)),
            Err(EquilibriumError::OutcomeScope)
        );
    }
}
