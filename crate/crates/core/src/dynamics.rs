//! Decentralised dynamics: offer-based best responses with a set of
//! unsatisfied agents, and the stochastic clock market on shared prices.
//!
//! Seeded runs use ChaCha8 (`rand_chacha` 0.3, `seed_from_u64`). An index
//! below `k` is drawn as `(next_u64 · k) >> 64`, so traces depend only on the
//! ChaCha8 stream and not on `rand`'s range sampling.

use std::collections::BTreeSet;

use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::demand::{demand_tiebreak, indirect_utility};
use crate::game::{best_response_offers, OfferProfile};
use crate::lp::{LinearProgram, LpResult, Relation, Sense};
use crate::market::{Bundle, Market};
use crate::rational::{ceil, int, sqrt_floor, ExtValue, Rational};
use crate::welfare::market_value;

/// Default round cap for the offer dynamics.
pub const DEFAULT_ROUND_CAP: usize = 1_000_000;

/// Bits of precision in the automatic clock step.
pub const AUTO_STEP_BITS: u32 = 16;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Scheduler {
    Seeded(u64),
    /// Agent indices in activation order.
    Scripted(Vec<usize>),
}

struct Picker {
    rng: Option<ChaCha8Rng>,
    script: std::vec::IntoIter<usize>,
}

impl Picker {
    fn new(s: &Scheduler) -> Picker {
        match s {
            Scheduler::Seeded(seed) => Picker {
                rng: Some(ChaCha8Rng::seed_from_u64(*seed)),
                script: Vec::new().into_iter(),
            },
            Scheduler::Scripted(v) => Picker {
                rng: None,
                script: v.clone().into_iter(),
            },
        }
    }

    /// Next agent drawn from `pool` (sorted); None when a script runs out.
    fn next(&mut self, pool: &[usize]) -> Option<usize> {
        match &mut self.rng {
            Some(rng) => Some(pool[uniform_index(rng, pool.len())]),
            None => self.script.next(),
        }
    }
}

/// `(x · k) >> 64` for a fresh 64-bit draw x.
pub fn uniform_index<R: RngCore + ?Sized>(rng: &mut R, k: usize) -> usize {
    ((rng.next_u64() as u128 * k as u128) >> 64) as usize
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DynamicsError {
    #[error("epsilon must be positive")]
    NonpositiveEpsilon,
    #[error("agent `{0}` has a −∞ valuation; offer dynamics needs bounded offers")]
    UnboundedOffers(String),
    #[error("round {round}: scheduled agent `{agent}` is not unsatisfied")]
    Ineligible { round: usize, agent: String },
    #[error("scheduled agent index {0} is out of range")]
    UnknownAgent(usize),
    #[error("initial price {price} on `{trade}` lies outside [−R, R] with R = {bound}")]
    OutOfBox {
        trade: String,
        price: String,
        bound: String,
    },
    #[error("expected {want} initial prices, got {got}")]
    PriceLength { got: usize, want: usize },
    #[error("expected {want} offers per side, got {got}")]
    OfferLength { got: usize, want: usize },
    #[error("round count must be positive")]
    NoRounds,
    #[error("automatic step size rounds to zero")]
    StepUnderflow,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    /// U became empty.
    Converged,
    RoundCap,
    /// A scripted schedule ended before U emptied.
    ScriptExhausted,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OfferRecord {
    pub round: usize,
    pub agent: Option<usize>,
    pub demanded: Option<Bundle>,
    /// Offers after the round's update.
    pub offers: OfferProfile,
    pub phi: usize,
    /// U after the update, ascending.
    pub unsatisfied: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct OfferRun {
    /// Empty unless the trace was requested.
    pub trace: Vec<OfferRecord>,
    pub terminal: OfferProfile,
    pub rounds: usize,
    pub termination: Termination,
    pub unsatisfied: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct OfferConfig {
    pub epsilon: Rational,
    pub initial: OfferProfile,
    pub round_cap: usize,
    pub keep_trace: bool,
}

impl OfferConfig {
    pub fn new(epsilon: Rational, initial: OfferProfile) -> Self {
        OfferConfig {
            epsilon,
            initial,
            round_cap: DEFAULT_ROUND_CAP,
            keep_trace: true,
        }
    }
}

fn best_response_changes(
    market: &Market,
    i: usize,
    offers: &OfferProfile,
    epsilon: &Rational,
) -> usize {
    let (new, _) = best_response_offers(market, i, offers, epsilon);
    new.iter()
        .filter(|(t, q)| offers.offer(market, i, *t) != q)
        .count()
}

/// Number of offer coordinates that some agent's best response would change.
pub fn potential_phi(market: &Market, offers: &OfferProfile, epsilon: &Rational) -> usize {
    (0..market.n())
        .map(|i| best_response_changes(market, i, offers, epsilon))
        .sum()
}

/// φ restricted to one agent.
pub fn potential_phi_of(
    market: &Market,
    i: usize,
    offers: &OfferProfile,
    epsilon: &Rational,
) -> usize {
    best_response_changes(market, i, offers, epsilon)
}

pub fn run_offer_dynamics(
    market: &Market,
    config: &OfferConfig,
    scheduler: &Scheduler,
) -> Result<OfferRun, DynamicsError> {
    let eps = &config.epsilon;
    if !eps.is_positive() {
        return Err(DynamicsError::NonpositiveEpsilon);
    }
    if config.initial.len() != market.m() {
        return Err(DynamicsError::OfferLength {
            got: config.initial.len(),
            want: market.m(),
        });
    }
    for i in 0..market.n() {
        if !market.all_finite(i) {
            return Err(DynamicsError::UnboundedOffers(
                market.agent_id(i).to_string(),
            ));
        }
    }
    let mut offers = config.initial.clone();
    let mut unsatisfied: BTreeSet<usize> = (0..market.n()).collect();
    let mut trace = Vec::new();
    if config.keep_trace {
        trace.push(OfferRecord {
            round: 0,
            agent: None,
            demanded: None,
            offers: offers.clone(),
            phi: potential_phi(market, &offers, eps),
            unsatisfied: unsatisfied.iter().copied().collect(),
        });
    }
    let mut picker = Picker::new(scheduler);
    let mut round = 0;
    let termination = loop {
        if unsatisfied.is_empty() {
            break Termination::Converged;
        }
        if round >= config.round_cap {
            break Termination::RoundCap;
        }
        let pool: Vec<usize> = unsatisfied.iter().copied().collect();
        let Some(i) = picker.next(&pool) else {
            break Termination::ScriptExhausted;
        };
        if i >= market.n() {
            return Err(DynamicsError::UnknownAgent(i));
        }
        if !unsatisfied.contains(&i) {
            return Err(DynamicsError::Ineligible {
                round: round + 1,
                agent: market.agent_id(i).to_string(),
            });
        }
        round += 1;
        let (new, bundle) = best_response_offers(market, i, &offers, eps);
        unsatisfied.remove(&i);
        for (t, q) in new {
            if *offers.offer(market, i, t) != q {
                unsatisfied.insert(market.counterpart(i, t));
                offers.set_offer(market, i, t, q);
            }
        }
        if config.keep_trace {
            trace.push(OfferRecord {
                round,
                agent: Some(i),
                demanded: Some(bundle),
                offers: offers.clone(),
                phi: potential_phi(market, &offers, eps),
                unsatisfied: unsatisfied.iter().copied().collect(),
            });
        }
    };
    Ok(OfferRun {
        trace,
        terminal: offers,
        rounds: round,
        termination,
        unsatisfied: unsatisfied.into_iter().collect(),
    })
}

/// Sum of indirect utilities.
pub fn lyapunov(market: &Market, prices: &[Rational]) -> Rational {
    (0..market.n())
        .map(|i| indirect_utility(market, i, prices))
        .sum()
}

/// L(p) − w(I); zero exactly at CE prices when a CE exists.
pub fn ce_gap(market: &Market, prices: &[Rational]) -> Rational {
    lyapunov(market, prices) - market_value(market)
}

/// Shifted per-agent term L^i(p) = max_Ψ u^i(Ψ, p) + ⟨χ^i, p⟩; the terms sum to L.
pub fn agent_lyapunov(market: &Market, i: usize, prices: &[Rational]) -> Rational {
    let shift: Rational = market
        .incident(i)
        .iter()
        .map(|&t| &prices[t] * int(market.chi(i, t) as i64))
        .sum();
    indirect_utility(market, i, prices) + shift
}

/// The clock update direction Δ^i(p): −χ^i_ω on rejected incident trades,
/// zero elsewhere. −Δ^i is a subgradient of L^i at p.
pub fn update_direction(market: &Market, i: usize, prices: &[Rational]) -> Vec<Rational> {
    let bundle = demand_tiebreak(market, i, prices);
    let mut d = vec![Rational::zero(); market.m()];
    for &t in market.incident(i) {
        if !bundle.contains(t) {
            d[t] = int(-(market.chi(i, t) as i64));
        }
    }
    d
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StepSize {
    Fixed(Rational),
    /// R·√(2m/(TΔ)), rounded down to 2^−16 inside the root.
    Auto,
}

#[derive(Clone, Debug)]
pub struct PriceConfig {
    pub step: StepSize,
    pub rounds: usize,
    /// Valuation bound; defaults to the market's max |v|.
    pub bound: Option<Rational>,
    pub initial: Vec<Rational>,
    pub keep_trace: bool,
}

impl PriceConfig {
    pub fn new(step: StepSize, rounds: usize, initial: Vec<Rational>) -> Self {
        PriceConfig {
            step,
            rounds,
            bound: None,
            initial,
            keep_trace: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PriceRecord {
    pub round: usize,
    pub agent: Option<usize>,
    pub demanded: Option<Bundle>,
    /// Prices after the round's update.
    pub prices: Vec<Rational>,
    pub lyapunov: Rational,
}

#[derive(Clone, Debug)]
pub struct PriceRun {
    pub trace: Vec<PriceRecord>,
    pub epsilon: Rational,
    /// (1/T) Σ_{t<T} p^t.
    pub average: Vec<Rational>,
    pub last: Vec<Rational>,
    pub rounds: usize,
}

/// The automatic clock step for T rounds.
pub fn auto_epsilon(
    market: &Market,
    bound: &Rational,
    rounds: usize,
) -> Result<Rational, DynamicsError> {
    if rounds == 0 {
        return Err(DynamicsError::NoRounds);
    }
    let delta = market.delta().max(1);
    let inside = Rational::new((2 * market.m()).into(), (rounds * delta).into());
    let eps = bound * sqrt_floor(&inside, AUTO_STEP_BITS);
    if eps.is_positive() {
        Ok(eps)
    } else {
        Err(DynamicsError::StepUnderflow)
    }
}

/// T₀ = 2n²R²mΔ with n = |I|, rounded up.
pub fn convergence_horizon(market: &Market, bound: &Rational) -> usize {
    let n = market.n() as i64;
    let t0 = int(2 * n * n * market.m() as i64 * market.delta() as i64) * bound * bound;
    ceil(&t0).to_usize().unwrap_or(usize::MAX)
}

pub fn run_price_dynamics(
    market: &Market,
    config: &PriceConfig,
    scheduler: &Scheduler,
) -> Result<PriceRun, DynamicsError> {
    let m = market.m();
    if config.initial.len() != m {
        return Err(DynamicsError::PriceLength {
            got: config.initial.len(),
            want: m,
        });
    }
    let bound = config.bound.clone().unwrap_or_else(|| market.value_bound());
    for (t, p) in config.initial.iter().enumerate() {
        if p.abs() > bound {
            return Err(DynamicsError::OutOfBox {
                trade: market.trade_id(t).to_string(),
                price: crate::rational::format_rational(p),
                bound: crate::rational::format_rational(&bound),
            });
        }
    }
    let rounds = match scheduler {
        Scheduler::Scripted(s) => s.len(),
        Scheduler::Seeded(_) => config.rounds,
    };
    let eps = match &config.step {
        StepSize::Fixed(e) => e.clone(),
        StepSize::Auto => auto_epsilon(market, &bound, rounds)?,
    };
    if !eps.is_positive() {
        return Err(DynamicsError::NonpositiveEpsilon);
    }
    let everyone: Vec<usize> = (0..market.n()).collect();
    let mut picker = Picker::new(scheduler);
    let mut prices = config.initial.clone();
    let mut sum = vec![Rational::zero(); m];
    let mut trace = Vec::new();
    if config.keep_trace {
        trace.push(PriceRecord {
            round: 0,
            agent: None,
            demanded: None,
            prices: prices.clone(),
            lyapunov: lyapunov(market, &prices),
        });
    }
    for round in 1..=rounds {
        let i = picker
            .next(&everyone)
            .expect("script length bounds the rounds");
        if i >= market.n() {
            return Err(DynamicsError::UnknownAgent(i));
        }
        for (s, p) in sum.iter_mut().zip(&prices) {
            *s += p;
        }
        let bundle = demand_tiebreak(market, i, &prices);
        for &t in market.incident(i) {
            if !bundle.contains(t) {
                prices[t] -= &eps * int(market.chi(i, t) as i64);
            }
        }
        if config.keep_trace {
            trace.push(PriceRecord {
                round,
                agent: Some(i),
                demanded: Some(bundle),
                prices: prices.clone(),
                lyapunov: lyapunov(market, &prices),
            });
        }
    }
    let average = if rounds == 0 {
        prices.clone()
    } else {
        let t = int(rounds as i64);
        sum.into_iter().map(|s| s / &t).collect()
    };
    Ok(PriceRun {
        trace,
        epsilon: eps,
        average,
        last: prices,
        rounds,
    })
}

/// min_{q ∈ P*} ‖p − q‖_∞ by LP over the optimal face of the welfare dual.
/// None when the market has no CE. Slow; meant for verification.
pub fn distance_to_ce_prices(market: &Market, prices: &[Rational]) -> Option<Rational> {
    let (n, m) = (market.n(), market.m());
    // u (n), q (m, free), d
    let d = n + m;
    let mut lp = LinearProgram::new(n + m + 1, Sense::Minimize);
    lp.set_objective(d, Rational::one());
    for t in 0..m {
        lp.set_free(n + t);
    }
    for i in 0..n {
        for (local, v) in market.table(i).iter().enumerate().skip(1) {
            let ExtValue::Finite(v) = v else { continue };
            let mut coeffs = vec![(i, Rational::one())];
            coeffs.extend(
                market
                    .global_bundle(i, local)
                    .iter()
                    .map(|t| (n + t, int(market.chi(i, t) as i64))),
            );
            lp.add(coeffs, Relation::Ge, v.clone());
        }
    }
    lp.add(
        (0..n).map(|i| (i, Rational::one())).collect(),
        Relation::Le,
        market_value(market),
    );
    for (t, p) in prices.iter().enumerate() {
        lp.add(
            vec![(n + t, Rational::one()), (d, -Rational::one())],
            Relation::Le,
            p.clone(),
        );
        lp.add(
            vec![(n + t, Rational::one()), (d, Rational::one())],
            Relation::Ge,
            p.clone(),
        );
    }
    match lp.solve() {
        LpResult::Optimal { value, .. } => Some(value),
        _ => None,
    }
}
