//! Exact rational linear programming: two-phase tableau simplex with Bland's
//! rule. Problems here have at most a few hundred rows, so a dense tableau
//! that skips zero entries is plenty.

#![allow(clippy::needless_range_loop)]

use num_traits::{One, Signed, Zero};

use crate::rational::Rational;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sense {
    Maximize,
    Minimize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Clone, Debug)]
pub struct Constraint {
    pub coeffs: Vec<(usize, Rational)>,
    pub relation: Relation,
    pub rhs: Rational,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LpResult {
    Optimal { value: Rational, x: Vec<Rational> },
    Infeasible,
    Unbounded,
}

impl LpResult {
    pub fn optimal(&self) -> Option<(&Rational, &[Rational])> {
        match self {
            LpResult::Optimal { value, x } => Some((value, x)),
            _ => None,
        }
    }
}

/// Variables are nonnegative unless marked free.
#[derive(Clone, Debug)]
pub struct LinearProgram {
    num_vars: usize,
    free: Vec<bool>,
    objective: Vec<Rational>,
    sense: Sense,
    constraints: Vec<Constraint>,
}

impl LinearProgram {
    pub fn new(num_vars: usize, sense: Sense) -> Self {
        LinearProgram {
            num_vars,
            free: vec![false; num_vars],
            objective: vec![Rational::zero(); num_vars],
            sense,
            constraints: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn set_free(&mut self, j: usize) {
        self.free[j] = true;
    }

    pub fn set_objective(&mut self, j: usize, c: Rational) {
        self.objective[j] = c;
    }

    /// Adds Σ coeffs·x (relation) rhs; repeated indices are summed.
    pub fn add(&mut self, coeffs: Vec<(usize, Rational)>, relation: Relation, rhs: Rational) {
        for (j, _) in &coeffs {
            assert!(*j < self.num_vars, "variable index out of range");
        }
        self.constraints.push(Constraint {
            coeffs,
            relation,
            rhs,
        });
    }

    pub fn solve(&self) -> LpResult {
        Tableau::build(self).run(self)
    }
}

struct Tableau {
    rows: Vec<Vec<Rational>>,
    rhs: Vec<Rational>,
    basis: Vec<usize>,
    ncols: usize,
    // column → (original var, sign)
    col_var: Vec<Option<(usize, bool)>>,
    artificial_from: usize,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Tableau {
        let mut col_var = Vec::new();
        let mut var_cols = Vec::with_capacity(lp.num_vars);
        for j in 0..lp.num_vars {
            let pos = col_var.len();
            col_var.push(Some((j, true)));
            let neg = if lp.free[j] {
                col_var.push(Some((j, false)));
                Some(pos + 1)
            } else {
                None
            };
            var_cols.push((pos, neg));
        }
        let slack_from = col_var.len();
        let slack_count = lp
            .constraints
            .iter()
            .filter(|c| c.relation != Relation::Eq)
            .count();
        for _ in 0..slack_count {
            col_var.push(None);
        }
        let m = lp.constraints.len();
        let structural = col_var.len();
        let mut rows = Vec::with_capacity(m);
        let mut rhs = Vec::with_capacity(m);
        let mut slack_of_row = Vec::with_capacity(m);
        let mut next_slack = slack_from;
        for c in &lp.constraints {
            let mut row = vec![Rational::zero(); structural];
            for (j, a) in &c.coeffs {
                let (pos, neg) = var_cols[*j];
                row[pos] += a;
                if let Some(neg) = neg {
                    row[neg] -= a;
                }
            }
            let mut slack = None;
            match c.relation {
                Relation::Le => {
                    row[next_slack] = Rational::one();
                    slack = Some(next_slack);
                    next_slack += 1;
                }
                Relation::Ge => {
                    row[next_slack] = -Rational::one();
                    slack = Some(next_slack);
                    next_slack += 1;
                }
                Relation::Eq => {}
            }
            let mut b = c.rhs.clone();
            if b.is_negative() {
                for x in row.iter_mut() {
                    *x = -x.clone();
                }
                b = -b;
            }
            rows.push(row);
            rhs.push(b);
            slack_of_row.push(slack);
        }
        // Use a +1 slack as the starting basic variable where possible.
        let artificial_from = structural;
        let mut basis = vec![0; m];
        let mut needs_art = Vec::new();
        for r in 0..m {
            match slack_of_row[r] {
                Some(s) if rows[r][s].is_one() => basis[r] = s,
                _ => needs_art.push(r),
            }
        }
        let ncols = structural + needs_art.len();
        for row in rows.iter_mut() {
            row.resize(ncols, Rational::zero());
        }
        for (k, &r) in needs_art.iter().enumerate() {
            rows[r][structural + k] = Rational::one();
            basis[r] = structural + k;
            col_var.push(None);
        }
        Tableau {
            rows,
            rhs,
            basis,
            ncols,
            col_var,
            artificial_from,
        }
    }

    fn pivot(&mut self, pr: usize, pc: usize, obj: &mut [Rational], obj_val: &mut Rational) {
        let inv = self.rows[pr][pc].recip();
        if !inv.is_one() {
            for x in self.rows[pr].iter_mut() {
                if !x.is_zero() {
                    *x *= &inv;
                }
            }
            self.rhs[pr] *= &inv;
        }
        let nz: Vec<usize> = (0..self.ncols)
            .filter(|&c| !self.rows[pr][c].is_zero())
            .collect();
        let prow: Vec<(usize, Rational)> =
            nz.iter().map(|&c| (c, self.rows[pr][c].clone())).collect();
        let prhs = self.rhs[pr].clone();
        for r in 0..self.rows.len() {
            if r == pr || self.rows[r][pc].is_zero() {
                continue;
            }
            let f = self.rows[r][pc].clone();
            for (c, a) in &prow {
                self.rows[r][*c] -= &f * a;
            }
            self.rhs[r] -= &f * &prhs;
        }
        if !obj[pc].is_zero() {
            let f = obj[pc].clone();
            for (c, a) in &prow {
                obj[*c] -= &f * a;
            }
            *obj_val -= &f * &prhs;
        }
        self.basis[pr] = pc;
    }

    /// Minimises with reduced-cost row `obj` (objective value tracked as
    /// −z in `obj_val`). Returns false on unboundedness.
    fn optimize(&mut self, obj: &mut [Rational], obj_val: &mut Rational, allowed: usize) -> bool {
        loop {
            let entering = (0..allowed).find(|&c| obj[c].is_negative());
            let Some(pc) = entering else { return true };
            let mut best: Option<(Rational, usize, usize)> = None;
            for r in 0..self.rows.len() {
                let a = &self.rows[r][pc];
                if a.is_positive() {
                    let ratio = &self.rhs[r] / a;
                    let better = match &best {
                        None => true,
                        Some((q, _, bv)) => ratio < *q || (ratio == *q && self.basis[r] < *bv),
                    };
                    if better {
                        best = Some((ratio, r, self.basis[r]));
                    }
                }
            }
            let Some((_, pr, _)) = best else { return false };
            self.pivot(pr, pc, obj, obj_val);
        }
    }

    fn run(mut self, lp: &LinearProgram) -> LpResult {
        let m = self.rows.len();
        // Phase 1: minimise the sum of artificials.
        if self.artificial_from < self.ncols {
            let mut obj = vec![Rational::zero(); self.ncols];
            for c in obj.iter_mut().skip(self.artificial_from) {
                *c = Rational::one();
            }
            let mut val = Rational::zero();
            for r in 0..m {
                if self.basis[r] >= self.artificial_from {
                    for c in 0..self.ncols {
                        if !self.rows[r][c].is_zero() {
                            obj[c] -= &self.rows[r][c];
                        }
                    }
                    val -= &self.rhs[r];
                }
            }
            let ncols = self.ncols;
            self.optimize(&mut obj, &mut val, ncols);
            if !val.is_zero() {
                return LpResult::Infeasible;
            }
            // Drive remaining zero-level artificials out of the basis.
            let mut r = 0;
            while r < self.rows.len() {
                if self.basis[r] >= self.artificial_from {
                    match (0..self.artificial_from).find(|&c| !self.rows[r][c].is_zero()) {
                        Some(c) => {
                            let mut scratch = vec![Rational::zero(); self.ncols];
                            let mut v = Rational::zero();
                            self.pivot(r, c, &mut scratch, &mut v);
                            r += 1;
                        }
                        None => {
                            self.rows.remove(r);
                            self.rhs.remove(r);
                            self.basis.remove(r);
                        }
                    }
                } else {
                    r += 1;
                }
            }
        }
        // Phase 2.
        let mut cost = vec![Rational::zero(); self.ncols];
        for c in 0..self.artificial_from {
            if let Some((j, pos)) = self.col_var[c] {
                let cj = if lp.sense == Sense::Maximize {
                    -lp.objective[j].clone()
                } else {
                    lp.objective[j].clone()
                };
                cost[c] = if pos { cj } else { -cj };
            }
        }
        let mut obj = cost.clone();
        let mut val = Rational::zero();
        for r in 0..self.rows.len() {
            let cb = cost[self.basis[r]].clone();
            if cb.is_zero() {
                continue;
            }
            for c in 0..self.ncols {
                if !self.rows[r][c].is_zero() {
                    obj[c] -= &cb * &self.rows[r][c];
                }
            }
            val -= &cb * &self.rhs[r];
        }
        let allowed = self.artificial_from;
        if !self.optimize(&mut obj, &mut val, allowed) {
            return LpResult::Unbounded;
        }
        let mut x = vec![Rational::zero(); lp.num_vars];
        for r in 0..self.rows.len() {
            if let Some((j, pos)) = self.col_var[self.basis[r]] {
                if pos {
                    x[j] += &self.rhs[r];
                } else {
                    x[j] -= &self.rhs[r];
                }
            }
        }
        let value = x
            .iter()
            .zip(&lp.objective)
            .fold(Rational::zero(), |acc, (a, c)| acc + a * c);
        LpResult::Optimal { value, x }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, ratio};

    fn c(pairs: &[(usize, i64)]) -> Vec<(usize, Rational)> {
        pairs.iter().map(|&(j, a)| (j, int(a))).collect()
    }

    #[test]
    fn textbook_maximisation() {
        // max 3x + 5y, x ≤ 4, 2y ≤ 12, 3x + 2y ≤ 18 → (2, 6), 36.
        let mut lp = LinearProgram::new(2, Sense::Maximize);
        lp.set_objective(0, int(3));
        lp.set_objective(1, int(5));
        lp.add(c(&[(0, 1)]), Relation::Le, int(4));
        lp.add(c(&[(1, 2)]), Relation::Le, int(12));
        lp.add(c(&[(0, 3), (1, 2)]), Relation::Le, int(18));
        assert_eq!(
            lp.solve(),
            LpResult::Optimal {
                value: int(36),
                x: vec![int(2), int(6)]
            }
        );
    }

    #[test]
    fn fractional_optimum_is_exact() {
        // max x + y, 3x + y ≤ 2, x + 3y ≤ 2 → x = y = 1/2.
        let mut lp = LinearProgram::new(2, Sense::Maximize);
        lp.set_objective(0, int(1));
        lp.set_objective(1, int(1));
        lp.add(c(&[(0, 3), (1, 1)]), Relation::Le, int(2));
        lp.add(c(&[(0, 1), (1, 3)]), Relation::Le, int(2));
        assert_eq!(
            lp.solve(),
            LpResult::Optimal {
                value: int(1),
                x: vec![ratio(1, 2), ratio(1, 2)]
            }
        );
    }

    #[test]
    fn free_variables_and_equalities() {
        // min x, x free, x ≥ −3, x + y = 1, y ≥ 0 → x = −3, y = 4.
        let mut lp = LinearProgram::new(2, Sense::Minimize);
        lp.set_free(0);
        lp.set_objective(0, int(1));
        lp.add(c(&[(0, 1)]), Relation::Ge, int(-3));
        lp.add(c(&[(0, 1), (1, 1)]), Relation::Eq, int(1));
        assert_eq!(
            lp.solve(),
            LpResult::Optimal {
                value: int(-3),
                x: vec![int(-3), int(4)]
            }
        );
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut lp = LinearProgram::new(1, Sense::Maximize);
        lp.add(c(&[(0, 1)]), Relation::Ge, int(2));
        lp.add(c(&[(0, 1)]), Relation::Le, int(1));
        assert_eq!(lp.solve(), LpResult::Infeasible);
        let mut lp = LinearProgram::new(1, Sense::Maximize);
        lp.set_objective(0, int(1));
        lp.add(c(&[(0, 1)]), Relation::Ge, int(2));
        assert_eq!(lp.solve(), LpResult::Unbounded);
    }

    #[test]
    fn redundant_equalities_are_dropped() {
        let mut lp = LinearProgram::new(2, Sense::Minimize);
        lp.set_objective(0, int(1));
        lp.set_objective(1, int(2));
        lp.add(c(&[(0, 1), (1, 1)]), Relation::Eq, int(3));
        lp.add(c(&[(0, 2), (1, 2)]), Relation::Eq, int(6));
        assert_eq!(
            lp.solve(),
            LpResult::Optimal {
                value: int(3),
                x: vec![int(3), int(0)]
            }
        );
    }

    #[test]
    fn degenerate_cycling_example_terminates() {
        // Beale's example cycles without an anti-cycling rule.
        let mut lp = LinearProgram::new(4, Sense::Minimize);
        for (j, v) in [
            (0, ratio(-3, 4)),
            (1, int(150)),
            (2, ratio(-1, 50)),
            (3, int(6)),
        ] {
            lp.set_objective(j, v);
        }
        lp.add(
            vec![
                (0, ratio(1, 4)),
                (1, int(-60)),
                (2, ratio(-1, 25)),
                (3, int(9)),
            ],
            Relation::Le,
            int(0),
        );
        lp.add(
            vec![
                (0, ratio(1, 2)),
                (1, int(-90)),
                (2, ratio(-1, 50)),
                (3, int(3)),
            ],
            Relation::Le,
            int(0),
        );
        lp.add(c(&[(2, 1)]), Relation::Le, int(1));
        let (value, _) = lp
            .solve()
            .optimal()
            .map(|(v, x)| (v.clone(), x.to_vec()))
            .unwrap();
        assert_eq!(value, ratio(-1, 20));
    }

    #[test]
    fn empty_program() {
        let lp = LinearProgram::new(0, Sense::Minimize);
        assert_eq!(
            lp.solve(),
            LpResult::Optimal {
                value: int(0),
                x: vec![]
            }
        );
    }
}
