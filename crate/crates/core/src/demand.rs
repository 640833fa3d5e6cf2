//! Demand oracles, the tie-breaking rule, and the grid check for full
//! substitutability.

use num_traits::{One, Zero};
use thiserror::Error;

use crate::market::{Bundle, Market};
use crate::rational::{int, ExtValue, Rational};

/// Largest number of grid points the substitutability check will visit.
pub const MAX_GRID_POINTS: usize = 2_000_000;

/// D^i(p): every utility-maximising bundle, in increasing local-mask order.
pub fn demand_set(market: &Market, i: usize, prices: &[Rational]) -> Vec<Bundle> {
    let table = market.utility_table(i, prices);
    let best = table.iter().max().cloned().unwrap_or_else(ExtValue::zero);
    table
        .iter()
        .enumerate()
        .filter(|(_, u)| **u == best)
        .map(|(local, _)| market.global_bundle(i, local))
        .collect()
}

/// max_Ψ u^i(Ψ, p); always finite since v(∅) = 0.
pub fn indirect_utility(market: &Market, i: usize, prices: &[Rational]) -> Rational {
    let table = market.utility_table(i, prices);
    match table.into_iter().max() {
        Some(ExtValue::Finite(q)) => q,
        _ => Rational::zero(),
    }
}

/// d^i(p): the lexicographically smallest maximum-cardinality bundle in D^i(p).
pub fn demand_tiebreak(market: &Market, i: usize, prices: &[Rational]) -> Bundle {
    pick_tiebreak(demand_set(market, i, prices))
}

pub(crate) fn pick_tiebreak(set: Vec<Bundle>) -> Bundle {
    set.into_iter()
        .min_by(|a, b| a.tiebreak_cmp(*b))
        .unwrap_or(Bundle::EMPTY)
}

/// v̂_ε(Φ) = v(Φ) + Σ_{ω_j∈Φ} ε/4^j with j the 1-based global trade position.
pub fn perturbed_value(market: &Market, i: usize, b: Bundle, epsilon: &Rational) -> ExtValue {
    let mut bonus = Rational::zero();
    for t in b.iter() {
        let four_j = num_traits::pow(num_bigint::BigInt::from(4), t + 1);
        bonus += epsilon / Rational::from_integer(four_j);
    }
    market.value(i, b).add_rational(&bonus)
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("perturbed demand of agent {agent} is not unique ({count} maximisers)")]
pub struct NotUnique {
    pub agent: usize,
    pub count: usize,
}

/// The argmax of the perturbed valuation, required to be unique.
pub fn demand_perturbed(
    market: &Market,
    i: usize,
    prices: &[Rational],
    epsilon: &Rational,
) -> Result<Bundle, NotUnique> {
    let mut best: Option<(ExtValue, Vec<Bundle>)> = None;
    for b in market.omega(i).subsets() {
        let u = perturbed_value(market, i, b, epsilon).sub_rational(&market.payment(i, b, prices));
        match &mut best {
            Some((bu, all)) if u == *bu => all.push(b),
            Some((bu, _)) if u < *bu => {}
            _ => best = Some((u, vec![b])),
        }
    }
    let (_, all) = best.expect("∅ is always a candidate");
    if all.len() == 1 {
        Ok(all[0])
    } else {
        Err(NotUnique {
            agent: i,
            count: all.len(),
        })
    }
}

/// A finite price grid `lo, lo+step, …, hi` on every coordinate of Ω_i.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PriceGrid {
    pub lo: Rational,
    pub hi: Rational,
    pub step: Rational,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GridError {
    #[error("empty price box")]
    EmptyBox,
    #[error("grid step must be positive")]
    NonpositiveStep,
    #[error("grid step does not divide the box")]
    StepDoesNotDivide,
    #[error("grid has {0} points, above the cap of {MAX_GRID_POINTS}")]
    TooLarge(usize),
}

impl PriceGrid {
    /// Box [−(s+1), s+1] with step 1/2, where s is the spread of the agent's
    /// finite values (including v(∅) = 0).
    pub fn default_for(market: &Market, i: usize) -> PriceGrid {
        let finite: Vec<&Rational> = market
            .table(i)
            .iter()
            .filter_map(ExtValue::finite)
            .collect();
        let max = finite
            .iter()
            .copied()
            .max()
            .cloned()
            .unwrap_or_else(Rational::zero);
        let min = finite
            .iter()
            .copied()
            .min()
            .cloned()
            .unwrap_or_else(Rational::zero);
        let reach = (max - min + Rational::one()).ceil();
        PriceGrid {
            lo: -reach.clone(),
            hi: reach,
            step: crate::rational::ratio(1, 2),
        }
    }

    pub fn points_per_axis(&self) -> Result<usize, GridError> {
        if self.step <= Rational::zero() {
            return Err(GridError::NonpositiveStep);
        }
        if self.hi < self.lo {
            return Err(GridError::EmptyBox);
        }
        let span = (&self.hi - &self.lo) / &self.step;
        if !span.is_integer() {
            return Err(GridError::StepDoesNotDivide);
        }
        let count = span.to_integer() + num_bigint::BigInt::one();
        usize::try_from(count).map_err(|_| GridError::TooLarge(usize::MAX))
    }

    fn coordinate(&self, k: usize) -> Rational {
        &self.lo + &self.step * int(k as i64)
    }
}

/// Which half of the definition failed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SubstitutesCondition {
    /// Lowering buying prices.
    Buying,
    /// Raising selling prices.
    Selling,
}

/// A witness (p, p′, Ψ): Ψ ∈ D(p) has no admissible partner in D(p′).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubstitutesWitness {
    pub condition: SubstitutesCondition,
    pub p: Vec<Rational>,
    pub p_prime: Vec<Rational>,
    pub bundle: Bundle,
}

/// Grid check of full substitutability for agent i.
///
/// Single-coordinate one-step moves suffice: the conditions compose along
/// chains, and every ordered grid pair is joined by such a chain.
pub fn is_fully_substitutable(
    market: &Market,
    i: usize,
    grid: &PriceGrid,
) -> Result<Option<SubstitutesWitness>, GridError> {
    let per_axis = grid.points_per_axis()?;
    let inc = market.incident(i).to_vec();
    let k = inc.len();
    if k <= 1 {
        return Ok(None);
    }
    let total = per_axis
        .checked_pow(k as u32)
        .filter(|&t| t <= MAX_GRID_POINTS)
        .ok_or(GridError::TooLarge(per_axis.saturating_pow(k as u32)))?;
    let coords: Vec<Rational> = (0..per_axis).map(|j| grid.coordinate(j)).collect();
    let buying = market.buying(i);
    let selling = market.selling(i);

    let mut prices = vec![Rational::zero(); market.m()];
    let to_digits = |mut idx: usize| -> Vec<usize> {
        let mut d = vec![0; k];
        for slot in d.iter_mut() {
            *slot = idx % per_axis;
            idx /= per_axis;
        }
        d
    };
    let mut demands: Vec<Vec<Bundle>> = Vec::with_capacity(total);
    for idx in 0..total {
        for (slot, &t) in to_digits(idx).iter().zip(&inc) {
            prices[t] = coords[*slot].clone();
        }
        demands.push(demand_set(market, i, &prices));
    }
    let set_prices = |digits: &[usize]| -> Vec<Rational> {
        let mut p = vec![Rational::zero(); market.m()];
        for (slot, &t) in digits.iter().zip(&inc) {
            p[t] = coords[*slot].clone();
        }
        p
    };

    let mut stride = 1;
    for &t in &inc {
        let is_buy = buying.contains(t);
        for idx in 0..total {
            let digit = (idx / stride) % per_axis;
            // (i): p′ = p − step·e_t for buying t; (ii): p′ = p + step·e_t for selling t.
            let other = if is_buy {
                if digit == 0 {
                    continue;
                }
                idx - stride
            } else {
                if digit + 1 == per_axis {
                    continue;
                }
                idx + stride
            };
            let admissible = |psi: Bundle, psi2: Bundle| {
                if is_buy {
                    psi2.intersect(buying)
                        .without(t)
                        .is_subset(psi.intersect(buying))
                        && psi.intersect(selling).is_subset(psi2.intersect(selling))
                } else {
                    psi2.intersect(selling)
                        .without(t)
                        .is_subset(psi.intersect(selling))
                        && psi.intersect(buying).is_subset(psi2.intersect(buying))
                }
            };
            let failing = demands[idx]
                .iter()
                .find(|&&psi| !demands[other].iter().any(|&psi2| admissible(psi, psi2)));
            if let Some(&psi) = failing {
                return Ok(Some(SubstitutesWitness {
                    condition: if is_buy {
                        SubstitutesCondition::Buying
                    } else {
                        SubstitutesCondition::Selling
                    },
                    p: set_prices(&to_digits(idx)),
                    p_prime: set_prices(&to_digits(other)),
                    bundle: psi,
                }));
            }
        }
        stride *= per_axis;
    }
    Ok(None)
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

    // Independent oracle: brute-force utilities written out by hand.
    fn brute_demand(values: &[(u32, i64)], signs: &[i64], p: &[Rational]) -> Vec<u32> {
        let utils: Vec<(u32, Rational)> = values
            .iter()
            .map(|&(mask, v)| {
                let mut u = int(v);
                for (t, s) in signs.iter().enumerate() {
                    if mask >> t & 1 == 1 {
                        u -= int(*s) * &p[t];
                    }
                }
                (mask, u)
            })
            .collect();
        let best = utils.iter().map(|(_, u)| u.clone()).max().unwrap();
        utils
            .into_iter()
            .filter(|(_, u)| *u == best)
            .map(|(m, _)| m)
            .collect()
    }

    #[test]
    fn agent_one_at_zero_two_demands_nothing() {
        // Agent 1 sells ω and buys χ: ∅ 0, {ω} −1, {χ} −1, {ω,χ} −2.
        let m = fig1();
        let p = vec![int(0), int(2)];
        let oracle = brute_demand(&[(0, 0), (1, -1), (2, 1), (3, 0)], &[-1, 1], &p);
        assert_eq!(oracle, vec![0]);
        assert_eq!(demand_set(&m, 0, &p), vec![Bundle::EMPTY]);
    }

    #[test]
    fn buyer_ties_between_singletons() {
        let m = fig7();
        let p = vec![int(2), int(2)];
        assert_eq!(
            demand_set(&m, 2, &p),
            vec![Bundle::single(0), Bundle::single(1)]
        );
        assert_eq!(demand_tiebreak(&m, 2, &p), Bundle::single(0));
        assert_eq!(indirect_utility(&m, 2, &p), int(1));
    }

    #[test]
    fn tiebreak_takes_both_trades_for_agent_two() {
        let m = fig1();
        let p = vec![int(1), int(1)];
        let oracle = brute_demand(&[(0, 0), (1, 1), (2, -1), (3, 1)], &[1, -1], &p);
        assert_eq!(oracle, vec![3]);
        assert_eq!(demand_tiebreak(&m, 1, &p), Bundle(0b11));
    }

    #[test]
    fn neg_inf_bundles_never_demanded() {
        let m = MarketBuilder::new("x")
            .agents(&["a", "b"])
            .trade("t", "a", "b")
            .build()
            .unwrap();
        assert_eq!(demand_set(&m, 0, &[int(-50)]), vec![Bundle::EMPTY]);
        assert_eq!(demand_set(&m, 1, &[int(-50)]), vec![Bundle::EMPTY]);
    }

    #[test]
    fn perturbed_agrees_with_tiebreak_on_lattice() {
        let eps = ratio(1, 2);
        for m in [fig1(), fig7()] {
            for a in -8..=8 {
                for b in -8..=8 {
                    let mut p = vec![ratio(a, 2), ratio(b, 2)];
                    p.truncate(m.m());
                    for i in 0..m.n() {
                        assert_eq!(
                            demand_perturbed(&m, i, &p, &eps).unwrap(),
                            demand_tiebreak(&m, i, &p)
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn constant_shift_leaves_argmax_unchanged() {
        // Adding 7 to every nonempty bundle keeps the ranking among them.
        let m = fig1();
        let shifted: Vec<Vec<ExtValue>> = (0..2)
            .map(|i| {
                let t = m.table(i);
                std::iter::once(t[0].clone())
                    .chain(t[1..].iter().map(|v| v.add_rational(&int(7))))
                    .collect()
            })
            .collect();
        let m2 = m.with_tables("shift", shifted);
        let nonempty_argmax = |mk: &Market, i: usize, p: &[Rational]| {
            let bs: Vec<Bundle> = mk.omega(i).subsets().filter(|b| !b.is_empty()).collect();
            let best = bs.iter().map(|&b| mk.utility_at(i, b, p)).max().unwrap();
            bs.into_iter()
                .filter(|&b| mk.utility_at(i, b, p) == best)
                .collect::<Vec<_>>()
        };
        for a in -6..=6 {
            for b in -6..=6 {
                let p = vec![int(a), int(b)];
                for i in 0..2 {
                    assert_eq!(nonempty_argmax(&m, i, &p), nonempty_argmax(&m2, i, &p));
                }
            }
        }
    }

    #[test]
    fn fig1_agents_are_substitutes() {
        let m = fig1();
        for i in 0..2 {
            let grid = PriceGrid::default_for(&m, i);
            assert_eq!(is_fully_substitutable(&m, i, &grid).unwrap(), None);
        }
    }

    #[test]
    fn single_trade_agents_are_trivially_substitutes() {
        let m = fig7();
        for i in 0..2 {
            assert_eq!(
                is_fully_substitutable(&m, i, &PriceGrid::default_for(&m, i)).unwrap(),
                None
            );
        }
    }

    #[test]
    fn complementary_buyer_fails() {
        // A buyer who only values both goods together.
        let m = MarketBuilder::new("compl")
            .agents(&["s", "b"])
            .trade("x", "s", "b")
            .trade("y", "s", "b")
            .value_int("b", &["x"], 0)
            .value_int("b", &["y"], 0)
            .value_int("b", &["x", "y"], 2)
            .build()
            .unwrap();
        let witness = is_fully_substitutable(&m, 1, &PriceGrid::default_for(&m, 1))
            .unwrap()
            .unwrap();
        assert_eq!(witness.condition, SubstitutesCondition::Buying);
    }

    #[test]
    fn grid_errors() {
        let m = fig1();
        let bad = PriceGrid {
            lo: int(1),
            hi: int(0),
            step: ratio(1, 2),
        };
        assert_eq!(
            is_fully_substitutable(&m, 0, &bad),
            Err(GridError::EmptyBox)
        );
        let bad = PriceGrid {
            lo: int(0),
            hi: int(1),
            step: int(0),
        };
        assert_eq!(
            is_fully_substitutable(&m, 0, &bad),
            Err(GridError::NonpositiveStep)
        );
    }
}
