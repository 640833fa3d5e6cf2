//! Social welfare, market value and efficient allocations by enumeration.

use num_traits::Zero;

use crate::market::{Bundle, Market};
use crate::rational::{ExtValue, Rational};

/// Σ_i v^i(Φ ∩ Ω_i).
pub fn social_welfare(market: &Market, allocation: Bundle) -> ExtValue {
    social_welfare_of(market, allocation, u32::MAX)
}

/// Welfare of the agents in `coalition` only.
pub fn social_welfare_of(market: &Market, allocation: Bundle, coalition: u32) -> ExtValue {
    let mut total = ExtValue::zero();
    for i in 0..market.n() {
        if coalition >> i & 1 == 1 {
            total = &total + market.value(i, allocation);
            if !total.is_finite() {
                break;
            }
        }
    }
    total
}

/// Best welfare of `coalition` using trades inside `universe`, with all
/// maximisers in increasing mask order.
pub fn best_allocations(
    market: &Market,
    universe: Bundle,
    coalition: u32,
) -> (Rational, Vec<Bundle>) {
    let mut best = Rational::zero();
    let mut argmax = Vec::new();
    for phi in universe.subsets() {
        if let ExtValue::Finite(w) = social_welfare_of(market, phi, coalition) {
            if argmax.is_empty() || w > best {
                best = w;
                argmax = vec![phi];
            } else if w == best {
                argmax.push(phi);
            }
        }
    }
    (best, argmax)
}

/// w(I) = max_Φ Σ_i v^i(Φ_i).
pub fn market_value(market: &Market) -> Rational {
    best_allocations(market, Bundle(full_mask(market.m())), u32::MAX).0
}

/// Every Φ attaining the market value.
pub fn efficient_allocations(market: &Market) -> Vec<Bundle> {
    best_allocations(market, Bundle(full_mask(market.m())), u32::MAX).1
}

pub fn is_efficient(market: &Market, allocation: Bundle) -> bool {
    social_welfare(market, allocation) == ExtValue::Finite(market_value(market))
}

pub(crate) fn full_mask(m: usize) -> u32 {
    if m >= 32 {
        u32::MAX
    } else {
        (1u32 << m) - 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::MarketBuilder;
    use crate::rational::int;

    fn fig3() -> Market {
        MarketBuilder::new("fig3")
            .agents(&["s1", "s2", "b"])
            .trade("omega1", "s1", "b")
            .trade("omega2", "s2", "b")
            .value_int("s1", &["omega1"], 0)
            .value_int("s2", &["omega2"], 0)
            .value_int("b", &["omega1"], 1)
            .value_int("b", &["omega2"], 1)
            .value_int("b", &["omega1", "omega2"], 0)
            .build()
            .unwrap()
    }

    #[test]
    fn exactly_one_seller_sells() {
        let m = fig3();
        assert_eq!(market_value(&m), int(1));
        assert_eq!(
            efficient_allocations(&m),
            vec![Bundle::single(0), Bundle::single(1)]
        );
        assert!(!is_efficient(&m, Bundle(0b11)));
    }

    #[test]
    fn empty_allocation_has_zero_welfare() {
        let m = fig3();
        assert_eq!(social_welfare(&m, Bundle::EMPTY), ExtValue::zero());
    }

    #[test]
    fn infeasible_everywhere_gives_empty_efficient_set() {
        let m = MarketBuilder::new("x")
            .agents(&["a", "b"])
            .trade("t", "a", "b")
            .build()
            .unwrap();
        assert_eq!(market_value(&m), int(0));
        assert_eq!(efficient_allocations(&m), vec![Bundle::EMPTY]);
    }

    #[test]
    fn welfare_never_exceeds_market_value() {
        let m = fig3();
        let w = ExtValue::Finite(market_value(&m));
        for phi in Bundle(0b11).subsets() {
            let sw = social_welfare(&m, phi);
            assert!(sw <= w);
            assert_eq!(sw == w, efficient_allocations(&m).contains(&phi));
        }
    }
}
