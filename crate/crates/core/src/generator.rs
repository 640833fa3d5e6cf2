//! Random market generators for property suites and sweeps.
//!
//! Substitutes markets are built on the auction side: every agent gets a gross
//! substitutes valuation v̂ over its incident trades (additive, unit-demand or
//! OXS) and then v(Φ) = v̂(τ(Φ)) − v̂(Ω_{i→}), so v(∅) = 0.

use rand::RngCore;

use crate::dynamics::uniform_index;
use crate::market::{Bundle, Market, ValuationSpec, MAX_AGENT_TRADES};
use crate::rational::{int, ExtValue};
use crate::reduction::tau;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GeneratorConfig {
    pub agents: usize,
    pub trades: usize,
    /// Auction weights are drawn from 0..=max_weight.
    pub max_weight: i64,
    /// Slot cap for OXS valuations.
    pub max_slots: usize,
}

impl GeneratorConfig {
    pub fn new(agents: usize, trades: usize) -> Self {
        GeneratorConfig {
            agents,
            trades,
            max_weight: 6,
            max_slots: 3,
        }
    }
}

/// Auction-side substitutes valuation families.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GoodsValuation {
    Additive(Vec<i64>),
    UnitDemand(Vec<i64>),
    /// Slot weights; a bundle is worth its best assignment to slots.
    Oxs(Vec<Vec<i64>>),
}

impl GoodsValuation {
    /// Value of the goods selected by `local` (bit k = k-th good).
    pub fn value(&self, local: usize) -> i64 {
        fn picked(w: &[i64], local: usize) -> impl Iterator<Item = i64> + '_ {
            w.iter()
                .enumerate()
                .filter(move |(k, _)| local >> k & 1 == 1)
                .map(|(_, v)| *v)
        }
        match self {
            GoodsValuation::Additive(w) => picked(w, local).sum(),
            GoodsValuation::UnitDemand(w) => picked(w, local).max().unwrap_or(0).max(0),
            GoodsValuation::Oxs(slots) => {
                let goods: Vec<usize> = (0..usize::BITS as usize)
                    .filter(|k| local >> k & 1 == 1)
                    .collect();
                best_assignment(slots, &goods, 0)
            }
        }
    }
}

fn best_assignment(slots: &[Vec<i64>], goods: &[usize], used: u32) -> i64 {
    let Some((&g, rest)) = goods.split_first() else {
        return 0;
    };
    let mut best = best_assignment(slots, rest, used);
    for (s, w) in slots.iter().enumerate() {
        if used >> s & 1 == 0 {
            best = best.max(w[g] + best_assignment(slots, rest, used | 1 << s));
        }
    }
    best
}

fn draw<R: RngCore + ?Sized>(rng: &mut R, lo: i64, hi: i64) -> i64 {
    lo + uniform_index(rng, (hi - lo + 1) as usize) as i64
}

pub fn random_goods_valuation(
    rng: &mut impl RngCore,
    goods: usize,
    cfg: &GeneratorConfig,
) -> GoodsValuation {
    let weights = |rng: &mut dyn RngCore| {
        (0..goods)
            .map(|_| draw(rng, 0, cfg.max_weight))
            .collect::<Vec<_>>()
    };
    match uniform_index(rng, 3) {
        0 => GoodsValuation::Additive(weights(rng)),
        1 => GoodsValuation::UnitDemand(weights(rng)),
        _ => {
            let slots = 1 + uniform_index(rng, cfg.max_slots.max(1));
            GoodsValuation::Oxs((0..slots).map(|_| weights(rng)).collect())
        }
    }
}

/// Random trade graph: seller and buyer drawn uniformly among distinct agents,
/// redrawn while either endpoint is at the degree cap.
pub fn random_graph(rng: &mut impl RngCore, agents: usize, trades: usize) -> Market {
    assert!(agents >= 2, "a trade needs two agents");
    assert!(trades * 2 <= agents * MAX_AGENT_TRADES, "degree cap");
    let names: Vec<String> = (0..agents).map(|i| format!("a{i}")).collect();
    let mut degree = vec![0usize; agents];
    let mut list = Vec::with_capacity(trades);
    while list.len() < trades {
        let s = uniform_index(rng, agents);
        let mut b = uniform_index(rng, agents - 1);
        if b >= s {
            b += 1;
        }
        if degree[s] == MAX_AGENT_TRADES || degree[b] == MAX_AGENT_TRADES {
            continue;
        }
        degree[s] += 1;
        degree[b] += 1;
        list.push((
            format!("t{}", list.len()),
            names[s].clone(),
            names[b].clone(),
        ));
    }
    let specs = vec![
        ValuationSpec {
            default: ExtValue::zero(),
            entries: Vec::new()
        };
        agents
    ];
    Market::new("random", names, list, specs).expect("generated graph is valid")
}

/// A fully substitutable market with integral values.
pub fn random_substitutes_market(rng: &mut impl RngCore, cfg: &GeneratorConfig) -> Market {
    let graph = random_graph(rng, cfg.agents, cfg.trades);
    let tables = (0..graph.n())
        .map(|i| {
            let k = graph.incident(i).len();
            let goods = random_goods_valuation(rng, k, cfg);
            let base = goods.value(graph.local_mask(i, graph.selling(i)));
            (0..1usize << k)
                .map(|local| {
                    let image = tau(&graph, i, graph.global_bundle(i, local));
                    ExtValue::Finite(int(goods.value(graph.local_mask(i, image)) - base))
                })
                .collect()
        })
        .collect();
    graph.with_tables("random-substitutes", tables)
}

/// A market with arbitrary integral values in [−bound, bound]; substitutability
/// is not guaranteed.
pub fn random_market(rng: &mut impl RngCore, cfg: &GeneratorConfig, bound: i64) -> Market {
    let graph = random_graph(rng, cfg.agents, cfg.trades);
    let tables = (0..graph.n())
        .map(|i| {
            let k = graph.incident(i).len();
            (0..1usize << k)
                .map(|local| {
                    if local == 0 {
                        ExtValue::zero()
                    } else {
                        ExtValue::Finite(int(draw(rng, -bound, bound)))
                    }
                })
                .collect()
        })
        .collect();
    graph.with_tables("random", tables)
}

/// Allocations as bundles over the whole market; handy for sweeps.
pub fn all_allocations(market: &Market) -> impl Iterator<Item = Bundle> {
    Bundle::from_indices(0..market.m()).subsets()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demand::{is_fully_substitutable, PriceGrid};
    use crate::equilibrium::solve_ce_prices;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn oxs_matches_known_values() {
        let v = GoodsValuation::Oxs(vec![vec![3, 1, 0], vec![2, 2, 5]]);
        assert_eq!(v.value(0b000), 0);
        assert_eq!(v.value(0b001), 3);
        assert_eq!(v.value(0b011), 5);
        assert_eq!(v.value(0b111), 8);
        assert_eq!(GoodsValuation::UnitDemand(vec![1, 4]).value(0b11), 4);
        assert_eq!(GoodsValuation::Additive(vec![1, 4]).value(0b11), 5);
    }

    #[test]
    fn generated_markets_are_substitutes() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cfg = GeneratorConfig {
            max_weight: 3,
            ..GeneratorConfig::new(3, 4)
        };
        for _ in 0..12 {
            let m = random_substitutes_market(&mut rng, &cfg);
            for i in 0..m.n() {
                if m.incident(i).len() > 3 {
                    continue;
                }
                let w = is_fully_substitutable(&m, i, &PriceGrid::default_for(&m, i)).unwrap();
                assert!(w.is_none(), "agent {i} of {m:?}: {w:?}");
            }
            assert!(solve_ce_prices(&m).is_ok());
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = GeneratorConfig::new(4, 5);
        let a = random_substitutes_market(&mut ChaCha8Rng::seed_from_u64(3), &cfg);
        let b = random_substitutes_market(&mut ChaCha8Rng::seed_from_u64(3), &cfg);
        assert_eq!(format!("{:?}", a.trades()), format!("{:?}", b.trades()));
        for i in 0..a.n() {
            assert_eq!(a.table(i), b.table(i));
        }
    }

    #[test]
    fn arbitrary_markets_keep_empty_bundle_at_zero() {
        let m = random_market(
            &mut ChaCha8Rng::seed_from_u64(1),
            &GeneratorConfig::new(3, 3),
            5,
        );
        for i in 0..m.n() {
            assert_eq!(m.value(i, Bundle::EMPTY), &ExtValue::zero());
        }
    }
}
