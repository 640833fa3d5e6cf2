//! The cooperative market game: characteristic function, core imputations,
//! essential agents, fair core imputations and their implementation by prices.
//!
//! Coalitions are agent bitmasks. Whenever an order matters, coalitions are
//! visited by increasing size, then lexicographically by sorted member list.

use std::collections::VecDeque;

use num_traits::{One, Signed, Zero};
use thiserror::Error;

use crate::equilibrium::{
    ce_prices_for, is_competitive_equilibrium, Arrangement, EquilibriumError, MarketOutcome,
};
use crate::lp::{LinearProgram, LpResult, Relation, Sense};
use crate::market::{Bundle, Market, PriceVector};
use crate::rational::{format_rational, int, ExtValue, Rational};
use crate::welfare::{best_allocations, efficient_allocations, is_efficient, social_welfare};

/// Largest |I| for the coalition sweep.
pub const MAX_COALITION_AGENTS: usize = 10;
/// Largest |I| for vertex enumeration and the blocking oracle.
pub const MAX_VERTEX_AGENTS: usize = 5;
/// Largest |I| for the minvar solver.
pub const MAX_MINVAR_AGENTS: usize = 6;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CoopError {
    #[error("{got} agents exceed the cap of {cap} for this operation")]
    TooManyAgents { got: usize, cap: usize },
    #[error("the core is empty")]
    EmptyCore,
    #[error("imputation has {got} entries, expected {want}")]
    Length { got: usize, want: usize },
    #[error("allocation is not efficient")]
    NotEfficient,
    #[error("imputation is not in the core: {0}")]
    NotCore(Box<CoreViolation>),
    #[error(transparent)]
    Equilibrium(#[from] EquilibriumError),
    #[error("component utilities do not match the imputation (internal error)")]
    ComponentMismatch,
    #[error("essential agents disagree between the two definitions (internal error)")]
    EssentialDisagreement,
    #[error("alpha must lie in [0, 1]")]
    AlphaOutOfRange,
    #[error("solver failed: {0}")]
    Solver(&'static str),
}

/// w(C) for every coalition C, indexed by bitmask.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CharacteristicFunction {
    n: usize,
    values: Vec<Rational>,
}

impl CharacteristicFunction {
    /// From explicit values (index = coalition mask); w(∅) must be 0.
    pub fn from_values(n: usize, values: Vec<Rational>) -> Self {
        assert_eq!(values.len(), 1 << n);
        assert!(values[0].is_zero());
        CharacteristicFunction { n, values }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn value(&self, coalition: u32) -> &Rational {
        &self.values[coalition as usize]
    }

    pub fn grand(&self) -> u32 {
        ((1u64 << self.n) - 1) as u32
    }

    pub fn grand_value(&self) -> &Rational {
        self.value(self.grand())
    }

    pub fn values(&self) -> &[Rational] {
        &self.values
    }

    /// Nonempty coalitions by size, then lexicographically.
    pub fn coalitions(&self) -> Vec<u32> {
        coalition_order(self.n)
    }

    /// First (S, T) disjoint with w(S∪T) < w(S) + w(T).
    pub fn superadditivity_violation(&self) -> Option<(u32, u32)> {
        let all = self.coalitions();
        for &s in &all {
            for &t in &all {
                if s & t == 0 && s < t && self.value(s | t) < &(self.value(s) + self.value(t)) {
                    return Some((s, t));
                }
            }
        }
        None
    }

    /// First (S, T) with w(S∪T) + w(S∩T) < w(S) + w(T).
    pub fn supermodularity_violation(&self) -> Option<(u32, u32)> {
        let all = self.coalitions();
        for &s in &all {
            for &t in &all {
                if s < t && self.value(s | t) + self.value(s & t) < self.value(s) + self.value(t) {
                    return Some((s, t));
                }
            }
        }
        None
    }
}

pub(crate) fn coalition_order(n: usize) -> Vec<u32> {
    let mut out = Vec::with_capacity((1 << n) - 1);
    for k in 1..=n {
        for combo in crate::equilibrium::combinations(n, k) {
            out.push(combo.iter().fold(0u32, |acc, &i| acc | 1 << i));
        }
    }
    out
}

/// Member indices of a coalition mask, ascending.
pub fn members(coalition: u32) -> Vec<usize> {
    (0..32).filter(|&i| coalition >> i & 1 == 1).collect()
}

pub fn characteristic_function(market: &Market) -> Result<CharacteristicFunction, CoopError> {
    let n = market.n();
    if n > MAX_COALITION_AGENTS {
        return Err(CoopError::TooManyAgents {
            got: n,
            cap: MAX_COALITION_AGENTS,
        });
    }
    let values = (0..1u32 << n)
        .map(|c| {
            if c == 0 {
                Rational::zero()
            } else {
                best_allocations(market, market.omega_of_coalition(c), c).0
            }
        })
        .collect();
    Ok(CharacteristicFunction { n, values })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CoreViolation {
    Negative {
        agent: usize,
        value: Rational,
    },
    Grand {
        sum: Rational,
        value: Rational,
    },
    Coalition {
        coalition: u32,
        sum: Rational,
        value: Rational,
    },
}

impl std::fmt::Display for CoreViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CoreViolation::Negative { agent, value } => {
                write!(f, "agent {agent} gets {} < 0", format_rational(value))
            }
            CoreViolation::Grand { sum, value } => {
                write!(
                    f,
                    "utilities sum to {} but w(I) = {}",
                    format_rational(sum),
                    format_rational(value)
                )
            }
            CoreViolation::Coalition {
                coalition,
                sum,
                value,
            } => write!(
                f,
                "coalition {:?} gets {} < w = {}",
                members(*coalition),
                format_rational(sum),
                format_rational(value)
            ),
        }
    }
}

fn coalition_sum(x: &[Rational], coalition: u32) -> Rational {
    x.iter()
        .enumerate()
        .filter(|(i, _)| coalition >> i & 1 == 1)
        .map(|(_, v)| v)
        .sum()
}

/// Every violated core constraint, in check order.
pub fn core_violations(cf: &CharacteristicFunction, x: &[Rational]) -> Vec<CoreViolation> {
    let mut out = Vec::new();
    for (agent, v) in x.iter().enumerate() {
        if v.is_negative() {
            out.push(CoreViolation::Negative {
                agent,
                value: v.clone(),
            });
        }
    }
    let sum = coalition_sum(x, cf.grand());
    if &sum != cf.grand_value() {
        out.push(CoreViolation::Grand {
            sum,
            value: cf.grand_value().clone(),
        });
    }
    for c in cf.coalitions() {
        let s = coalition_sum(x, c);
        if &s < cf.value(c) {
            out.push(CoreViolation::Coalition {
                coalition: c,
                sum: s,
                value: cf.value(c).clone(),
            });
        }
    }
    out
}

/// Ok, or the first violated constraint.
#[allow(clippy::result_large_err)]
pub fn is_core_imputation(
    cf: &CharacteristicFunction,
    x: &[Rational],
) -> Result<(), CoreViolation> {
    assert_eq!(x.len(), cf.n(), "imputation length");
    match core_violations(cf, x).into_iter().next() {
        None => Ok(()),
        Some(v) => Err(v),
    }
}

fn check_len(cf: &CharacteristicFunction, x: &[Rational]) -> Result<(), CoopError> {
    if x.len() != cf.n() {
        return Err(CoopError::Length {
            got: x.len(),
            want: cf.n(),
        });
    }
    Ok(())
}

/// Coalition constraints that are not implied by x ≥ 0.
fn binding_coalitions(cf: &CharacteristicFunction) -> Vec<u32> {
    cf.coalitions()
        .into_iter()
        .filter(|&c| c != cf.grand() && cf.value(c).is_positive())
        .collect()
}

/// LP with x in variables 0..n (nonnegative) constrained to the core.
fn core_program(cf: &CharacteristicFunction, extra: usize, sense: Sense) -> LinearProgram {
    let n = cf.n();
    let mut lp = LinearProgram::new(n + extra, sense);
    for c in binding_coalitions(cf) {
        lp.add(
            members(c)
                .into_iter()
                .map(|i| (i, Rational::one()))
                .collect(),
            Relation::Ge,
            cf.value(c).clone(),
        );
    }
    lp.add(
        (0..n).map(|i| (i, Rational::one())).collect(),
        Relation::Eq,
        cf.grand_value().clone(),
    );
    lp
}

pub fn core_nonempty(cf: &CharacteristicFunction) -> bool {
    core_point(cf).is_some()
}

/// Some core imputation, if any.
pub fn core_point(cf: &CharacteristicFunction) -> Option<Vec<Rational>> {
    match core_program(cf, 0, Sense::Minimize).solve() {
        LpResult::Optimal { x, .. } => Some(x),
        _ => None,
    }
}

/// max x_i over the core; None if the core is empty.
pub fn max_core_utility(cf: &CharacteristicFunction, i: usize) -> Option<Rational> {
    let mut lp = core_program(cf, 0, Sense::Maximize);
    lp.set_objective(i, Rational::one());
    match lp.solve() {
        LpResult::Optimal { value, .. } => Some(value),
        _ => None,
    }
}

/// min x_i over the core; None if the core is empty.
pub fn min_core_utility(cf: &CharacteristicFunction, i: usize) -> Option<Rational> {
    let mut lp = core_program(cf, 0, Sense::Minimize);
    lp.set_objective(i, Rational::one());
    match lp.solve() {
        LpResult::Optimal { value, .. } => Some(value),
        _ => None,
    }
}

/// Exact vertices of the core, sorted and deduplicated.
pub fn core_vertices(cf: &CharacteristicFunction) -> Result<Vec<Vec<Rational>>, CoopError> {
    let n = cf.n();
    if n > MAX_VERTEX_AGENTS {
        return Err(CoopError::TooManyAgents {
            got: n,
            cap: MAX_VERTEX_AGENTS,
        });
    }
    if n == 0 {
        return Ok(vec![vec![]]);
    }
    let mut rows: Vec<u32> = (0..n).map(|i| 1u32 << i).collect();
    rows.extend(
        binding_coalitions(cf)
            .into_iter()
            .filter(|c| c.count_ones() > 1),
    );
    let mut out: Vec<Vec<Rational>> = Vec::new();
    for combo in crate::equilibrium::combinations(rows.len(), n - 1) {
        let mut a: Vec<Vec<Rational>> = combo.iter().map(|&k| indicator(n, rows[k])).collect();
        let mut b: Vec<Rational> = combo.iter().map(|&k| cf.value(rows[k]).clone()).collect();
        a.push(vec![Rational::one(); n]);
        b.push(cf.grand_value().clone());
        let Some(x) = solve_square(a, b) else {
            continue;
        };
        if is_core_imputation(cf, &x).is_ok() && !out.contains(&x) {
            out.push(x);
        }
    }
    out.sort();
    Ok(out)
}

fn indicator(n: usize, coalition: u32) -> Vec<Rational> {
    (0..n)
        .map(|i| {
            if coalition >> i & 1 == 1 {
                Rational::one()
            } else {
                Rational::zero()
            }
        })
        .collect()
}

/// Solves A x = b for square nonsingular A; None if singular.
#[allow(clippy::needless_range_loop)]
pub(crate) fn solve_square(
    mut a: Vec<Vec<Rational>>,
    mut b: Vec<Rational>,
) -> Option<Vec<Rational>> {
    let n = a.len();
    for col in 0..n {
        let piv = (col..n).find(|&r| !a[r][col].is_zero())?;
        a.swap(piv, col);
        b.swap(piv, col);
        let inv = a[col][col].recip();
        for c in col..n {
            a[col][c] *= &inv;
        }
        b[col] *= &inv;
        for r in 0..n {
            if r == col || a[r][col].is_zero() {
                continue;
            }
            let f = a[r][col].clone();
            for c in col..n {
                let x = &f * &a[col][c];
                a[r][c] -= x;
            }
            let x = &f * &b[col];
            b[r] -= x;
        }
    }
    Some(b)
}

/// Essential agents, computed from efficient allocations and checked against
/// the removal test w(I∖{i}) < w(I).
pub fn essential_agents(market: &Market) -> Result<Vec<usize>, CoopError> {
    let n = market.n();
    let mut involved_everywhere = if n >= 32 { u32::MAX } else { (1u32 << n) - 1 };
    for phi in efficient_allocations(market) {
        involved_everywhere &= market.involved(phi);
    }
    let by_allocation: Vec<usize> = (0..n)
        .filter(|&i| involved_everywhere >> i & 1 == 1)
        .collect();
    let grand = if n >= 32 { u32::MAX } else { (1u32 << n) - 1 };
    let w = best_allocations(market, market.omega_of_coalition(grand), grand).0;
    let by_removal: Vec<usize> = (0..n)
        .filter(|&i| {
            let rest = grand & !(1 << i);
            best_allocations(market, market.omega_of_coalition(rest), rest).0 < w
        })
        .collect();
    if by_allocation != by_removal {
        return Err(CoopError::EssentialDisagreement);
    }
    Ok(by_allocation)
}

/// Essential agents from a characteristic function (removal test only).
pub fn essential_from_cf(cf: &CharacteristicFunction) -> Vec<usize> {
    let g = cf.grand();
    (0..cf.n())
        .filter(|&i| cf.value(g & !(1 << i)) < cf.grand_value())
        .collect()
}

#[derive(Clone, Copy)]
enum Lex {
    Min,
    Max,
}

fn lex_imputation(cf: &CharacteristicFunction, dir: Lex) -> Result<Vec<Rational>, CoopError> {
    let n = cf.n();
    if !core_nonempty(cf) {
        return Err(CoopError::EmptyCore);
    }
    let mut fixed: Vec<Option<Rational>> = vec![None; n];
    let t_var = n;
    let add_fixed = |lp: &mut LinearProgram, fixed: &[Option<Rational>]| {
        for (i, f) in fixed.iter().enumerate() {
            if let Some(v) = f {
                lp.add(vec![(i, Rational::one())], Relation::Eq, v.clone());
            }
        }
    };
    let bound_rel = match dir {
        Lex::Min => Relation::Ge,
        Lex::Max => Relation::Le,
    };
    while fixed.iter().any(Option::is_none) {
        let free: Vec<usize> = (0..n).filter(|&i| fixed[i].is_none()).collect();
        let sense = match dir {
            Lex::Min => Sense::Maximize,
            Lex::Max => Sense::Minimize,
        };
        let mut lp = core_program(cf, 1, sense);
        lp.set_free(t_var);
        lp.set_objective(t_var, Rational::one());
        add_fixed(&mut lp, &fixed);
        for &i in &free {
            // x_i − t ≥ 0 (leximin) or ≤ 0 (leximax)
            lp.add(
                vec![(i, Rational::one()), (t_var, -Rational::one())],
                bound_rel,
                Rational::zero(),
            );
        }
        let t = match lp.solve() {
            LpResult::Optimal { value, .. } => value,
            LpResult::Infeasible => return Err(CoopError::EmptyCore),
            LpResult::Unbounded => return Err(CoopError::Solver("unbounded level program")),
        };
        let mut frozen = Vec::new();
        for &i in &free {
            let sense = match dir {
                Lex::Min => Sense::Maximize,
                Lex::Max => Sense::Minimize,
            };
            let mut aux = core_program(cf, 0, sense);
            aux.set_objective(i, Rational::one());
            add_fixed(&mut aux, &fixed);
            for &j in &free {
                aux.add(vec![(j, Rational::one())], bound_rel, t.clone());
            }
            match aux.solve() {
                LpResult::Optimal { value, .. } if value == t => frozen.push(i),
                LpResult::Optimal { .. } => {}
                _ => return Err(CoopError::Solver("auxiliary program")),
            }
        }
        if frozen.is_empty() {
            return Err(CoopError::Solver("no agent fixed in a round"));
        }
        for i in frozen {
            fixed[i] = Some(t.clone());
        }
    }
    Ok(fixed.into_iter().map(Option::unwrap).collect())
}

/// The leximin core imputation.
pub fn leximin_imputation(cf: &CharacteristicFunction) -> Result<Vec<Rational>, CoopError> {
    lex_imputation(cf, Lex::Min)
}

/// The leximax core imputation.
pub fn leximax_imputation(cf: &CharacteristicFunction) -> Result<Vec<Rational>, CoopError> {
    lex_imputation(cf, Lex::Max)
}

fn dot(a: &[Rational], b: &[Rational]) -> Rational {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// (A Aᵀ)⁻¹ A v for independent rows A.
fn row_space_coords(rows: &[Vec<Rational>], v: &[Rational]) -> Option<Vec<Rational>> {
    let gram: Vec<Vec<Rational>> = rows
        .iter()
        .map(|r| rows.iter().map(|s| dot(r, s)).collect())
        .collect();
    let rhs: Vec<Rational> = rows.iter().map(|r| dot(r, v)).collect();
    solve_square(gram, rhs)
}

fn independent_of(rows: &[Vec<Rational>], cand: &[Rational]) -> bool {
    let mut all = rows.to_vec();
    all.push(cand.to_vec());
    let gram: Vec<Vec<Rational>> = all
        .iter()
        .map(|r| all.iter().map(|s| dot(r, s)).collect())
        .collect();
    !crate::equilibrium::determinant(gram).is_zero()
}

/// The minimum-variance core imputation, i.e. the minimiser of Σ x_i² over
/// the core. Exact primal active-set method; the returned point carries a
/// KKT certificate (nonnegative multipliers on the active constraints).
pub fn minvar_imputation(cf: &CharacteristicFunction) -> Result<Vec<Rational>, CoopError> {
    let n = cf.n();
    if n > MAX_MINVAR_AGENTS {
        return Err(CoopError::TooManyAgents {
            got: n,
            cap: MAX_MINVAR_AGENTS,
        });
    }
    let mut x = core_point(cf).ok_or(CoopError::EmptyCore)?;
    if n == 0 {
        return Ok(x);
    }
    // inequality rows: singletons (x ≥ 0) then binding coalitions
    let mut ineq: Vec<u32> = (0..n).map(|i| 1u32 << i).collect();
    ineq.extend(
        binding_coalitions(cf)
            .into_iter()
            .filter(|c| c.count_ones() > 1),
    );
    let a: Vec<Vec<Rational>> = ineq.iter().map(|&c| indicator(n, c)).collect();
    let b: Vec<Rational> = ineq.iter().map(|&c| cf.value(c).clone()).collect();
    let eq_row = vec![Rational::one(); n];
    let mut work: Vec<usize> = Vec::new();
    let rows_of = |work: &[usize]| -> Vec<Vec<Rational>> {
        let mut r = vec![eq_row.clone()];
        r.extend(work.iter().map(|&k| a[k].clone()));
        r
    };
    for k in 0..a.len() {
        if dot(&a[k], &x) == b[k] && independent_of(&rows_of(&work), &a[k]) {
            work.push(k);
        }
    }
    for _ in 0..10_000 {
        let rows = rows_of(&work);
        let y = row_space_coords(&rows, &x).ok_or(CoopError::Solver("dependent working set"))?;
        // d = −(x − Aᵀy): step to the minimiser on the working face
        let mut d: Vec<Rational> = x.iter().map(|v| -v.clone()).collect();
        for (r, yr) in rows.iter().zip(&y) {
            for (dj, aj) in d.iter_mut().zip(r) {
                *dj += yr * aj;
            }
        }
        if d.iter().all(Zero::is_zero) {
            // multipliers of 2x = Aᵀλ
            let twice: Vec<Rational> = x.iter().map(|v| v * int(2)).collect();
            let lambda = row_space_coords(&rows, &twice).ok_or(CoopError::Solver("multipliers"))?;
            let worst = lambda
                .iter()
                .enumerate()
                .skip(1)
                .filter(|(_, l)| l.is_negative())
                .min_by(|p, q| p.1.cmp(q.1).then(p.0.cmp(&q.0)))
                .map(|(k, _)| k - 1);
            match worst {
                None => return Ok(x),
                Some(pos) => {
                    work.remove(pos);
                    continue;
                }
            }
        }
        let mut alpha = Rational::one();
        let mut blocking = None;
        for k in 0..a.len() {
            if work.contains(&k) {
                continue;
            }
            let ad = dot(&a[k], &d);
            if ad.is_negative() {
                let ratio = (&b[k] - dot(&a[k], &x)) / &ad;
                if ratio < alpha {
                    alpha = ratio;
                    blocking = Some(k);
                }
            }
        }
        for (xj, dj) in x.iter_mut().zip(&d) {
            *xj += &alpha * dj;
        }
        if let Some(k) = blocking {
            work.push(k);
        }
    }
    Err(CoopError::Solver("active-set iteration cap"))
}

/// Connected components of the agents under the trades of `phi`; returns a
/// component label per agent.
fn components(market: &Market, phi: Bundle) -> Vec<usize> {
    let n = market.n();
    let mut label = vec![usize::MAX; n];
    let mut next = 0;
    for s in 0..n {
        if label[s] != usize::MAX {
            continue;
        }
        label[s] = next;
        let mut stack = vec![s];
        while let Some(i) = stack.pop() {
            for &t in market.incident(i) {
                if phi.contains(t) {
                    let j = market.counterpart(i, t);
                    if label[j] == usize::MAX {
                        label[j] = next;
                        stack.push(j);
                    }
                }
            }
        }
        next += 1;
    }
    label
}

/// BFS path of trades in `phi` from `from` to `to`, lowest trade id first.
fn trade_path(market: &Market, phi: Bundle, from: usize, to: usize) -> Option<Vec<(usize, usize)>> {
    let n = market.n();
    let mut prev: Vec<Option<(usize, usize)>> = vec![None; n];
    let mut seen = vec![false; n];
    seen[from] = true;
    let mut queue = VecDeque::from([from]);
    while let Some(i) = queue.pop_front() {
        if i == to {
            break;
        }
        let mut ts: Vec<usize> = market
            .incident(i)
            .iter()
            .copied()
            .filter(|&t| phi.contains(t))
            .collect();
        ts.sort_unstable();
        for t in ts {
            let j = market.counterpart(i, t);
            if !seen[j] {
                seen[j] = true;
                prev[j] = Some((i, t));
                queue.push_back(j);
            }
        }
    }
    if !seen[to] {
        return None;
    }
    // (agent, trade into agent) from `from` to `to`
    let mut path = Vec::new();
    let mut cur = to;
    while cur != from {
        let (p, t) = prev[cur].expect("reached");
        path.push((p, t));
        cur = p;
    }
    path.reverse();
    Some(path)
}

/// Prices on Φ that give every agent exactly x_i, starting from CE prices
/// supporting Φ and shifting prices along paths of active trades.
pub fn implement_imputation(
    market: &Market,
    phi: Bundle,
    x: &[Rational],
) -> Result<MarketOutcome, CoopError> {
    let cf = characteristic_function(market)?;
    check_len(&cf, x)?;
    if !is_efficient(market, phi) {
        return Err(CoopError::NotEfficient);
    }
    is_core_imputation(&cf, x).map_err(|v| CoopError::NotCore(Box::new(v)))?;
    let arr = ce_prices_for(market, phi)?;
    let mut prices = arr.prices;
    let n = market.n();
    let utility = |i: usize, prices: &[Rational]| -> Rational {
        market
            .utility_at(i, phi, prices)
            .finite()
            .cloned()
            .expect("efficient allocation has finite value")
    };
    let comp = components(market, phi);
    let ncomp = comp.iter().max().map_or(0, |c| c + 1);
    let mut gap_sum = vec![Rational::zero(); ncomp];
    for i in 0..n {
        gap_sum[comp[i]] += &x[i] - utility(i, &prices);
    }
    if gap_sum.iter().any(|g| !g.is_zero()) {
        return Err(CoopError::ComponentMismatch);
    }
    loop {
        let gap: Vec<Rational> = (0..n).map(|i| &x[i] - utility(i, &prices)).collect();
        let pair = (0..n).filter(|&i| gap[i].is_positive()).find_map(|i| {
            (0..n)
                .find(|&l| comp[l] == comp[i] && gap[l].is_negative())
                .map(|l| (i, l))
        });
        let Some((i, l)) = pair else { break };
        let delta = gap[i].clone().min(-gap[l].clone());
        let path = trade_path(market, phi, i, l).ok_or(CoopError::ComponentMismatch)?;
        for (from, t) in path {
            // forward trades (pointing towards l) go up, backward ones down
            if market.trade(t).seller == from {
                prices[t] += &delta;
            } else {
                prices[t] -= &delta;
            }
        }
    }
    if (0..n).any(|i| utility(i, &prices) != x[i]) {
        return Err(CoopError::ComponentMismatch);
    }
    let restricted =
        PriceVector::restricted(market.m(), phi.iter().map(|t| (t, prices[t].clone())));
    Ok(MarketOutcome {
        prices: restricted,
        allocation: phi,
    })
}

/// Utility profile of an outcome; None if some agent is at −∞.
pub fn outcome_utilities(market: &Market, outcome: &MarketOutcome) -> Option<Vec<Rational>> {
    outcome
        .utilities(market)
        .into_iter()
        .map(|u| u.finite().cloned())
        .collect()
}

/// Core membership via the imputation criterion.
pub fn is_core_outcome(market: &Market, outcome: &MarketOutcome) -> Result<bool, CoopError> {
    let cf = characteristic_function(market)?;
    Ok(match outcome_utilities(market, outcome) {
        Some(u) => is_core_imputation(&cf, &u).is_ok(),
        None => false,
    })
}

/// A blocking outcome found by the brute-force search.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Blocking {
    pub coalition: u32,
    pub trades: Bundle,
}

/// Brute-force blocking search. A coalition C with trades Ψ ⊆ Ω_C blocks when
/// prices on Ψ can make every member weakly and some member strictly better
/// off. Members not involved in Ψ get 0. Prices move utility freely inside a
/// connected component of Ψ and not across components, so the test is per
/// component: each component must cover its members' current utility, with
/// one component (or one idle member) strictly better.
pub fn find_blocking(
    market: &Market,
    outcome: &MarketOutcome,
) -> Result<Option<Blocking>, CoopError> {
    let n = market.n();
    if n > MAX_VERTEX_AGENTS {
        return Err(CoopError::TooManyAgents {
            got: n,
            cap: MAX_VERTEX_AGENTS,
        });
    }
    let current: Vec<ExtValue> = outcome.utilities(market);
    for c in coalition_order(n) {
        let universe = market.omega_of_coalition(c);
        for psi in universe.subsets() {
            let comp = components(market, psi);
            let mut groups: Vec<(ExtValue, ExtValue)> = Vec::new();
            let mut seen: Vec<Option<usize>> = vec![None; n];
            for i in members(c) {
                let g = *seen[comp[i]].get_or_insert_with(|| {
                    groups.push((ExtValue::zero(), ExtValue::zero()));
                    groups.len() - 1
                });
                groups[g].0 = &groups[g].0 + market.value(i, psi);
                groups[g].1 = &groups[g].1 + &current[i];
            }
            let weak = groups
                .iter()
                .all(|(new, old)| new >= old && new.is_finite());
            let strict = groups.iter().any(|(new, old)| new > old);
            if weak && strict {
                return Ok(Some(Blocking {
                    coalition: c,
                    trades: psi,
                }));
            }
        }
    }
    Ok(None)
}

/// Result of the taxed-market check at rate α.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TaxedReport {
    pub original_ce: bool,
    pub taxed_ce: bool,
    pub efficient: bool,
}

impl TaxedReport {
    pub fn original_ce_implies_taxed_ce(&self) -> bool {
        !self.original_ce || self.taxed_ce
    }

    pub fn taxed_allocation_efficient(&self) -> bool {
        !self.taxed_ce || self.efficient
    }
}

/// û^i = (α/|I|)·W + (1−α)·u^i, where a deviation Ψ ⊆ Ω_i by agent i is
/// evaluated at W((Φ ∖ Ω_i) ∪ Ψ).
pub fn taxed_ce_check(
    market: &Market,
    arr: &Arrangement,
    alpha: &Rational,
) -> Result<TaxedReport, CoopError> {
    if alpha.is_negative() || alpha > &Rational::one() {
        return Err(CoopError::AlphaOutOfRange);
    }
    let share = alpha / int(market.n().max(1) as i64);
    let keep = Rational::one() - alpha;
    let taxed = |i: usize, full: Bundle| -> ExtValue {
        let w = social_welfare(market, full);
        let u = market.utility_at(i, full, &arr.prices);
        match (w, u) {
            (ExtValue::Finite(w), ExtValue::Finite(u)) => ExtValue::Finite(&share * w + &keep * u),
            // α = 1 ignores u, α = 0 ignores W
            (ExtValue::Finite(w), ExtValue::NegInf) if keep.is_zero() => {
                ExtValue::Finite(&share * w)
            }
            (ExtValue::NegInf, ExtValue::Finite(u)) if share.is_zero() => {
                ExtValue::Finite(&keep * u)
            }
            _ => ExtValue::NegInf,
        }
    };
    let phi = arr.allocation;
    let mut taxed_ce = true;
    'agents: for i in 0..market.n() {
        let here = taxed(i, phi);
        let rest = phi.minus(market.omega(i));
        for psi in market.omega(i).subsets() {
            if taxed(i, rest.union(psi)) > here {
                taxed_ce = false;
                break 'agents;
            }
        }
    }
    Ok(TaxedReport {
        original_ce: is_competitive_equilibrium(market, arr, &Rational::zero()),
        taxed_ce,
        efficient: is_efficient(market, phi),
    })
}

/// Sorted ascending copy.
pub fn ascending(x: &[Rational]) -> Vec<Rational> {
    let mut v = x.to_vec();
    v.sort();
    v
}

/// Sorted descending copy.
pub fn descending(x: &[Rational]) -> Vec<Rational> {
    let mut v = x.to_vec();
    v.sort_by(|a, b| b.cmp(a));
    v
}

pub fn sum_of_squares(x: &[Rational]) -> Rational {
    x.iter().map(|v| v * v).sum()
}
