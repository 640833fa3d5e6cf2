use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tradenet::coop::*;
use tradenet::equilibrium::{ce_prices_for, solve_ce_prices, MarketOutcome};
use tradenet::generator::{random_market, random_substitutes_market, GeneratorConfig};
use tradenet::rational::{ratio, Rational};
use tradenet::welfare::efficient_allocations;
use tradenet::Market;

fn substitutes(seed: u64, agents: usize, trades: usize) -> Market {
    random_substitutes_market(
        &mut ChaCha8Rng::seed_from_u64(seed),
        &GeneratorConfig::new(agents, trades),
    )
}

#[test]
fn ce_utilities_are_core_imputations() {
    for seed in 0..60 {
        let m = substitutes(seed, 4, 5);
        let cf = characteristic_function(&m).unwrap();
        let ce = solve_ce_prices(&m).unwrap();
        let u: Vec<Rational> = (0..m.n())
            .map(|i| {
                m.utility_at(i, ce.allocation, &ce.prices)
                    .finite()
                    .cloned()
                    .unwrap()
            })
            .collect();
        assert_eq!(is_core_imputation(&cf, &u), Ok(()), "seed {seed}");
        assert_eq!(cf.superadditivity_violation(), None);
    }
}

#[test]
fn essential_definitions_agree_and_lone_wolves_get_nothing() {
    for seed in 0..80 {
        let m = substitutes(seed, 4, 5);
        let cf = characteristic_function(&m).unwrap();
        let essential = essential_agents(&m).unwrap();
        assert_eq!(essential, essential_from_cf(&cf));
        for i in 0..m.n() {
            if !essential.contains(&i) {
                assert_eq!(
                    max_core_utility(&cf, i),
                    Some(Rational::from_integer(0.into())),
                    "seed {seed} agent {i}"
                );
            }
        }
    }
}

#[test]
fn fair_imputations_are_in_the_core_and_dominate_vertices() {
    for seed in 0..40 {
        let m = substitutes(seed, 4, 4);
        let cf = characteristic_function(&m).unwrap();
        let lmin = leximin_imputation(&cf).unwrap();
        let lmax = leximax_imputation(&cf).unwrap();
        let mv = minvar_imputation(&cf).unwrap();
        for x in [&lmin, &lmax, &mv] {
            assert_eq!(is_core_imputation(&cf, x), Ok(()));
        }
        let vertices = core_vertices(&cf).unwrap();
        assert!(!vertices.is_empty());
        for v in &vertices {
            assert!(ascending(&lmin) >= ascending(v), "seed {seed}");
            assert!(descending(&lmax) <= descending(v), "seed {seed}");
            assert!(sum_of_squares(&mv) <= sum_of_squares(v), "seed {seed}");
        }
        // against midpoints of vertex pairs too
        for a in &vertices {
            for b in &vertices {
                let mid: Vec<Rational> = a
                    .iter()
                    .zip(b)
                    .map(|(x, y)| (x + y) * ratio(1, 2))
                    .collect();
                assert!(ascending(&lmin) >= ascending(&mid));
                assert!(sum_of_squares(&mv) <= sum_of_squares(&mid));
            }
        }
    }
}

#[test]
fn imputations_are_implementable_on_every_efficient_allocation() {
    for seed in 0..40 {
        let m = substitutes(seed, 4, 5);
        let cf = characteristic_function(&m).unwrap();
        let x = leximin_imputation(&cf).unwrap();
        for phi in efficient_allocations(&m) {
            let out = implement_imputation(&m, phi, &x).unwrap();
            assert_eq!(outcome_utilities(&m, &out).unwrap(), x);
            assert!(is_core_outcome(&m, &out).unwrap());
            assert_eq!(find_blocking(&m, &out).unwrap(), None);
        }
    }
}

#[test]
fn blocking_oracle_matches_imputation_criterion() {
    // arbitrary (not necessarily substitutes) markets, CE-like and perturbed outcomes
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let cfg = GeneratorConfig::new(3, 3);
    for _ in 0..150 {
        let m = random_market(&mut rng, &cfg, 4);
        for phi in tradenet::generator::all_allocations(&m) {
            for shift in [-1i64, 0, 2] {
                let prices = tradenet::PriceVector::restricted(
                    m.m(),
                    phi.iter()
                        .map(|t| (t, Rational::from_integer(((t as i64 % 3) + shift).into()))),
                );
                let out = MarketOutcome {
                    prices,
                    allocation: phi,
                };
                let criterion = is_core_outcome(&m, &out).unwrap();
                let oracle = find_blocking(&m, &out).unwrap().is_none();
                assert_eq!(criterion, oracle, "{m:?} {out:?}");
            }
        }
    }
}

#[test]
fn three_or_fewer_essential_agents_give_one_fair_point() {
    let mut seen = 0;
    for seed in 0..200 {
        let m = substitutes(seed, 4, 4);
        let essential = essential_agents(&m).unwrap();
        if essential.len() > 3 {
            continue;
        }
        seen += 1;
        let cf = characteristic_function(&m).unwrap();
        let lmin = leximin_imputation(&cf).unwrap();
        assert_eq!(lmin, leximax_imputation(&cf).unwrap(), "seed {seed}");
        assert_eq!(lmin, minvar_imputation(&cf).unwrap(), "seed {seed}");
        for &i in &essential {
            assert!(
                lmin[i] > Rational::from_integer(0.into()),
                "seed {seed} agent {i}"
            );
        }
    }
    assert!(seen >= 50, "only {seen} markets with ≤3 essential agents");
}

#[test]
fn ce_prices_exist_for_each_efficient_allocation() {
    for seed in 0..30 {
        let m = substitutes(seed, 3, 4);
        for phi in efficient_allocations(&m) {
            assert!(ce_prices_for(&m, phi).is_ok());
        }
    }
}
