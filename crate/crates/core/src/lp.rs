//! Bounded-variable revised simplex.
//!
//! Small, self-contained LP core for the restricted master problem and the
//! branch-and-bound relaxations. Rows are converted to equalities with one
//! slack per inequality and a two-phase method with artificials finds a first
//! basis. Columns are stored sparse; the basis inverse is dense, kept
//! explicitly and refactorized periodically.
//!
//! [`Simplex`] keeps its basis between solves: after bounds change, the next
//! [`Simplex::solve`] restarts from the previous optimal basis with the dual
//! simplex method.

#![allow(clippy::needless_range_loop)]

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

/// One row, stored as sparse `(variable, coefficient)` terms.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub terms: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

impl Constraint {
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(j, a)| a * x[j]).sum()
    }

    pub fn coeff(&self, var: usize) -> f64 {
        self.terms.iter().filter(|&&(j, _)| j == var).map(|&(_, a)| a).sum()
    }
}

/// `min cᵀx` subject to linear rows and per-variable bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LinearProgram {
    /// New program over `objective.len()` variables bounded to `[0, ∞)`.
    pub fn new(objective: Vec<f64>) -> Self {
        let n = objective.len();
        Self { objective, constraints: Vec::new(), lower: vec![0.0; n], upper: vec![f64::INFINITY; n] }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    /// Adds a dense row. A row of the wrong length is reported by the solver.
    pub fn add_constraint(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) {
        let n = self.num_vars();
        let mut terms: Vec<(usize, f64)> =
            coeffs.iter().enumerate().filter(|(_, &a)| a != 0.0).map(|(j, &a)| (j, a)).collect();
        if coeffs.len() != n {
            // Keep the mismatch visible to `check`.
            terms.push((coeffs.len().max(n), 0.0));
        }
        self.constraints.push(Constraint { terms, relation, rhs });
    }

    pub fn add_sparse_constraint(&mut self, terms: Vec<(usize, f64)>, relation: Relation, rhs: f64) {
        self.constraints.push(Constraint { terms, relation, rhs });
    }

    pub fn set_bounds(&mut self, var: usize, lower: f64, upper: f64) {
        self.lower[var] = lower;
        self.upper[var] = upper;
    }

    fn check(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(LpError::Malformed("bound vectors do not match the objective length".into()));
        }
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(LpError::Malformed("objective has a non-finite coefficient".into()));
        }
        for (i, row) in self.constraints.iter().enumerate() {
            if let Some(&(j, _)) = row.terms.iter().find(|&&(j, _)| j >= n) {
                return Err(LpError::Malformed(format!("row {i} refers to variable {j}, but there are {n}")));
            }
            if row.terms.iter().any(|(_, a)| !a.is_finite()) || !row.rhs.is_finite() {
                return Err(LpError::Malformed(format!("row {i} has a non-finite entry")));
            }
        }
        if self.lower.iter().any(|l| !l.is_finite()) {
            return Err(LpError::Malformed("lower bounds must be finite".into()));
        }
        if self.upper.iter().any(|u| u.is_nan()) {
            return Err(LpError::Malformed("upper bound is NaN".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub primal: Vec<f64>,
    /// One multiplier per constraint row; `≥` rows of a minimization get
    /// non-negative duals.
    pub dual: Vec<f64>,
    pub objective_value: f64,
    pub iterations: usize,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("simplex iteration limit {limit} reached")]
    IterationLimit { limit: usize },
    #[error("malformed linear program: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy)]
pub struct SimplexOptions {
    /// Per call to [`Simplex::solve`].
    pub max_iterations: usize,
    /// Consecutive degenerate pivots before switching to Bland's rule.
    pub bland_after: usize,
    pub refactor_every: usize,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self { max_iterations: 50_000, bland_after: 50, refactor_every: 100 }
    }
}

const COST_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-9;

pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    solve_lp_with(lp, SimplexOptions::default())
}

pub fn solve_lp_with(lp: &LinearProgram, opts: SimplexOptions) -> Result<LpSolution, LpError> {
    Simplex::new(lp, opts)?.solve()
}

/// A linear program together with its current basis.
pub struct Simplex {
    objective: Vec<f64>,
    n: usize,
    tab: Tableau,
    opts: SimplexOptions,
    /// The basis is optimal for some bounds, hence dual feasible.
    warm: bool,
}

impl Simplex {
    pub fn new(lp: &LinearProgram, opts: SimplexOptions) -> Result<Self, LpError> {
        lp.check()?;
        Ok(Self { objective: lp.objective.clone(), n: lp.num_vars(), tab: Tableau::build(lp), opts, warm: false })
    }

    pub fn num_vars(&self) -> usize {
        self.n
    }

    pub fn bounds(&self, var: usize) -> (f64, f64) {
        (self.tab.lower[var], self.tab.upper[var])
    }

    pub fn set_bounds(&mut self, var: usize, lower: f64, upper: f64) {
        assert!(var < self.n, "variable {var} out of range");
        self.tab.lower[var] = lower;
        self.tab.upper[var] = upper;
    }

    pub fn solve(&mut self) -> Result<LpSolution, LpError> {
        let m = self.tab.rows;
        let n = self.n;
        let mut iterations = 0;
        let infeasible = |iterations| LpSolution {
            status: LpStatus::Infeasible,
            primal: vec![0.0; n],
            dual: vec![0.0; m],
            objective_value: f64::INFINITY,
            iterations,
        };
        if (0..n).any(|j| self.tab.lower[j] > self.tab.upper[j] || !self.tab.lower[j].is_finite()) {
            return Ok(infeasible(0));
        }

        let mut cost = vec![0.0; self.tab.cols];
        cost[..n].copy_from_slice(&self.objective);

        if self.warm && self.tab.place_nonbasics(&cost) {
            self.tab.refactor();
            match self.tab.dual_run(&cost, self.opts, &mut iterations) {
                Ok(DualOutcome::Feasible) => {}
                Ok(DualOutcome::Infeasible) => return Ok(infeasible(iterations)),
                Err(e) => {
                    self.warm = false;
                    return Err(e);
                }
            }
        } else {
            self.tab.reset();
            self.warm = false;
            // Phase 1: minimize the artificials placed in the starting basis.
            if self.tab.basis.iter().any(|&b| b >= self.tab.first_artificial) {
                let mut phase1 = vec![0.0; self.tab.cols];
                for c in phase1.iter_mut().skip(self.tab.first_artificial) {
                    *c = 1.0;
                }
                let status = self.tab.run(&phase1, self.opts, &mut iterations)?;
                debug_assert_ne!(status, LpStatus::Unbounded);
                let infeas: f64 = (self.tab.first_artificial..self.tab.cols).map(|j| self.tab.value(j)).sum();
                let scale = 1.0 + self.tab.rhs.iter().fold(0.0f64, |a, b| a.max(b.abs()));
                if infeas > 1e-7 * scale {
                    return Ok(infeasible(iterations));
                }
            }
            for j in self.tab.first_artificial..self.tab.cols {
                self.tab.upper[j] = 0.0;
            }
        }

        // Phase 2, or clean-up after the dual simplex.
        let status = match self.tab.run(&cost, self.opts, &mut iterations) {
            Ok(s) => s,
            Err(e) => {
                self.warm = false;
                return Err(e);
            }
        };
        self.warm = status == LpStatus::Optimal;

        let primal: Vec<f64> = (0..n).map(|j| self.tab.value(j)).collect();
        let objective_value = if status == LpStatus::Unbounded {
            f64::NEG_INFINITY
        } else {
            primal.iter().zip(&self.objective).map(|(x, c)| x * c).sum()
        };
        let dual = self.tab.duals(&cost);
        Ok(LpSolution { status, primal, dual, objective_value, iterations })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Position {
    Basic(usize),
    Lower,
    Upper,
}

enum DualOutcome {
    Feasible,
    Infeasible,
}

/// Equality-form working copy: `A x = rhs`, `lower ≤ x ≤ upper`.
struct Tableau {
    rows: usize,
    cols: usize,
    first_artificial: usize,
    /// Sparse columns of the constraint matrix.
    columns: Vec<Vec<(usize, f64)>>,
    slack_of_row: Vec<Option<usize>>,
    rhs: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    basis: Vec<usize>,
    position: Vec<Position>,
    /// Values of the basic variables, indexed by basis row.
    basic_values: Vec<f64>,
    /// Dense row-major basis inverse.
    binv: Vec<f64>,
    pivots_since_refactor: usize,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Self {
        let n = lp.num_vars();
        let m = lp.constraints.len();
        let slack_count = lp.constraints.iter().filter(|c| c.relation != Relation::Eq).count();
        let first_slack = n;
        let first_artificial = n + slack_count;
        let cols = first_artificial + m;

        let mut columns: Vec<Vec<(usize, f64)>> = vec![Vec::new(); cols];
        let mut lower = vec![0.0; cols];
        let mut upper = vec![0.0; cols];
        lower[..n].copy_from_slice(&lp.lower);
        upper[..n].copy_from_slice(&lp.upper);
        let mut slack_of_row = vec![None; m];
        let mut next_slack = first_slack;
        for (i, row) in lp.constraints.iter().enumerate() {
            for &(j, a) in &row.terms {
                if a != 0.0 {
                    match columns[j].last_mut() {
                        Some((r, v)) if *r == i => *v += a,
                        _ => columns[j].push((i, a)),
                    }
                }
            }
            let sign = match row.relation {
                Relation::Le => 1.0,
                Relation::Ge => -1.0,
                Relation::Eq => continue,
            };
            columns[next_slack].push((i, sign));
            upper[next_slack] = f64::INFINITY;
            slack_of_row[i] = Some(next_slack);
            next_slack += 1;
        }
        let rhs = lp.constraints.iter().map(|c| c.rhs).collect();

        let mut tab = Self {
            rows: m,
            cols,
            first_artificial,
            columns,
            slack_of_row,
            rhs,
            lower,
            upper,
            basis: Vec::new(),
            position: Vec::new(),
            basic_values: Vec::new(),
            binv: Vec::new(),
            pivots_since_refactor: 0,
        };
        tab.reset();
        tab
    }

    /// Slack/artificial starting basis with every structural at its lower bound.
    fn reset(&mut self) {
        let m = self.rows;
        self.position = vec![Position::Lower; self.cols];
        let mut resid = self.rhs.clone();
        for j in 0..self.first_artificial {
            let l = self.lower[j];
            if l != 0.0 {
                for &(i, a) in &self.columns[j] {
                    resid[i] -= a * l;
                }
            }
        }
        self.basis = Vec::with_capacity(m);
        self.basic_values = Vec::with_capacity(m);
        for i in 0..m {
            let a = self.first_artificial + i;
            self.columns[a].clear();
            self.upper[a] = 0.0;
            let slack_ok = self.slack_of_row[i].filter(|&s| self.columns[s][0].1 * resid[i] >= 0.0);
            let b = match slack_ok {
                Some(s) => s,
                None => {
                    self.columns[a].push((i, if resid[i] >= 0.0 { 1.0 } else { -1.0 }));
                    self.upper[a] = f64::INFINITY;
                    a
                }
            };
            self.position[b] = Position::Basic(i);
            self.basis.push(b);
            self.basic_values.push(resid[i].abs());
        }
        self.binv = vec![0.0; m * m];
        for i in 0..m {
            self.binv[i * m + i] = self.columns[self.basis[i]][0].1;
        }
        self.pivots_since_refactor = 0;
    }

    fn value(&self, j: usize) -> f64 {
        match self.position[j] {
            Position::Basic(r) => self.basic_values[r],
            Position::Lower => self.lower[j],
            Position::Upper => self.upper[j],
        }
    }

    fn duals(&self, cost: &[f64]) -> Vec<f64> {
        let m = self.rows;
        let mut y = vec![0.0; m];
        for (r, &b) in self.basis.iter().enumerate() {
            let c = cost[b];
            if c != 0.0 {
                let row = &self.binv[r * m..(r + 1) * m];
                for (yi, &v) in y.iter_mut().zip(row) {
                    *yi += c * v;
                }
            }
        }
        y
    }

    fn dot(&self, j: usize, y: &[f64]) -> f64 {
        self.columns[j].iter().map(|&(i, a)| a * y[i]).sum()
    }

    fn ftran(&self, j: usize) -> Vec<f64> {
        let m = self.rows;
        let col = &self.columns[j];
        (0..m).map(|r| col.iter().map(|&(i, a)| self.binv[r * m + i] * a).sum()).collect()
    }

    /// After bounds changed, puts each nonbasic at the bound its reduced cost
    /// prefers. False if that needs an infinite bound.
    fn place_nonbasics(&mut self, cost: &[f64]) -> bool {
        let y = self.duals(cost);
        for j in 0..self.cols {
            if matches!(self.position[j], Position::Basic(_)) {
                continue;
            }
            let d = cost[j] - self.dot(j, &y);
            let pos = if d > COST_TOL {
                Position::Lower
            } else if d < -COST_TOL {
                Position::Upper
            } else {
                self.position[j]
            };
            let pos = if pos == Position::Upper && !self.upper[j].is_finite() {
                if d < -COST_TOL {
                    return false;
                }
                Position::Lower
            } else {
                pos
            };
            self.position[j] = pos;
        }
        true
    }

    /// Recomputes the basis inverse and basic values from scratch.
    fn refactor(&mut self) {
        let m = self.rows;
        // Gauss-Jordan on [B | I].
        let mut a = vec![0.0; m * m];
        for (r, &b) in self.basis.iter().enumerate() {
            for &(i, v) in &self.columns[b] {
                a[i * m + r] = v;
            }
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        let mut singular = false;
        for c in 0..m {
            let p = (c..m).max_by(|&x, &y| a[x * m + c].abs().total_cmp(&a[y * m + c].abs())).expect("nonempty range");
            if a[p * m + c].abs() < 1e-14 {
                singular = true;
                break;
            }
            if p != c {
                for k in 0..m {
                    a.swap(p * m + k, c * m + k);
                    inv.swap(p * m + k, c * m + k);
                }
            }
            let d = a[c * m + c];
            for k in 0..m {
                a[c * m + k] /= d;
                inv[c * m + k] /= d;
            }
            for r in 0..m {
                if r != c {
                    let f = a[r * m + c];
                    if f != 0.0 {
                        for k in 0..m {
                            a[r * m + k] -= f * a[c * m + k];
                            inv[r * m + k] -= f * inv[c * m + k];
                        }
                    }
                }
            }
        }
        // A singular basis keeps its product-form inverse.
        if !singular {
            self.binv = inv;
        }
        let mut resid = self.rhs.clone();
        for j in 0..self.cols {
            let v = match self.position[j] {
                Position::Basic(_) => continue,
                Position::Lower => self.lower[j],
                Position::Upper => self.upper[j],
            };
            if v != 0.0 {
                for &(i, a) in &self.columns[j] {
                    resid[i] -= a * v;
                }
            }
        }
        self.basic_values =
            (0..m).map(|r| self.binv[r * m..(r + 1) * m].iter().zip(&resid).map(|(a, b)| a * b).sum()).collect();
        self.pivots_since_refactor = 0;
    }

    /// Basis change: `q` enters at row `r` with value `entering_value`.
    fn pivot(
        &mut self,
        r: usize,
        q: usize,
        alpha: &[f64],
        entering_value: f64,
        leaves_to: Position,
        opts: SimplexOptions,
    ) {
        let m = self.rows;
        let out = self.basis[r];
        self.position[out] = leaves_to;
        self.basis[r] = q;
        self.position[q] = Position::Basic(r);
        self.basic_values[r] = entering_value;

        let piv = alpha[r];
        for k in 0..m {
            self.binv[r * m + k] /= piv;
        }
        for i in 0..m {
            if i != r && alpha[i] != 0.0 {
                let f = alpha[i];
                for k in 0..m {
                    self.binv[i * m + k] -= f * self.binv[r * m + k];
                }
            }
        }
        self.pivots_since_refactor += 1;
        if self.pivots_since_refactor >= opts.refactor_every {
            self.refactor();
        }
    }

    /// Primal simplex from a primal feasible basis.
    fn run(&mut self, cost: &[f64], opts: SimplexOptions, iterations: &mut usize) -> Result<LpStatus, LpError> {
        let m = self.rows;
        let mut degenerate_run = 0usize;
        loop {
            if *iterations >= opts.max_iterations {
                return Err(LpError::IterationLimit { limit: opts.max_iterations });
            }
            let bland = degenerate_run >= opts.bland_after;
            let y = self.duals(cost);

            // Pricing: (column, |reduced cost|).
            let mut entering: Option<(usize, f64)> = None;
            for j in 0..self.cols {
                let dir = match self.position[j] {
                    Position::Basic(_) => continue,
                    Position::Lower if self.upper[j] > self.lower[j] => 1.0,
                    Position::Upper if self.upper[j] > self.lower[j] => -1.0,
                    _ => continue,
                };
                let d = cost[j] - self.dot(j, &y);
                if dir * d < -COST_TOL {
                    if bland {
                        entering = Some((j, d.abs()));
                        break;
                    }
                    if entering.is_none_or(|(_, best)| d.abs() > best) {
                        entering = Some((j, d.abs()));
                    }
                }
            }
            let Some((q, _)) = entering else {
                return Ok(LpStatus::Optimal);
            };
            let dir = if self.position[q] == Position::Upper { -1.0 } else { 1.0 };
            let alpha = self.ftran(q);

            // Ratio test over the basics and the entering variable's own range.
            let mut step = self.upper[q] - self.lower[q];
            let mut leaving: Option<(usize, bool)> = None;
            let mut best_pivot = 0.0;
            for r in 0..m {
                let delta = -dir * alpha[r];
                let b = self.basis[r];
                let (limit, to_upper) = if delta < -PIVOT_TOL {
                    ((self.basic_values[r] - self.lower[b]).max(0.0) / -delta, false)
                } else if delta > PIVOT_TOL && self.upper[b].is_finite() {
                    ((self.upper[b] - self.basic_values[r]).max(0.0) / delta, true)
                } else {
                    continue;
                };
                let better = if limit < step - 1e-12 {
                    true
                } else if limit <= step + 1e-12 {
                    match leaving {
                        Some((cur, _)) if bland => b < self.basis[cur],
                        Some(_) => alpha[r].abs() > best_pivot,
                        // Tie with the entering variable's own bound: flip.
                        None => false,
                    }
                } else {
                    false
                };
                if better {
                    step = limit.min(step);
                    leaving = Some((r, to_upper));
                    best_pivot = alpha[r].abs();
                }
            }
            if !step.is_finite() {
                return Ok(LpStatus::Unbounded);
            }
            *iterations += 1;
            degenerate_run = if step <= 1e-12 { degenerate_run + 1 } else { 0 };

            for r in 0..m {
                self.basic_values[r] -= dir * step * alpha[r];
            }
            match leaving {
                None => {
                    // Bound flip.
                    self.position[q] = if dir > 0.0 { Position::Upper } else { Position::Lower };
                }
                Some((r, to_upper)) => {
                    let entering_value = if dir > 0.0 { self.lower[q] + step } else { self.upper[q] - step };
                    let leaves_to = if to_upper { Position::Upper } else { Position::Lower };
                    self.pivot(r, q, &alpha, entering_value, leaves_to, opts);
                }
            }
            self.snap_basics();
        }
    }

    /// Dual simplex from a dual feasible basis until primal feasible.
    fn dual_run(&mut self, cost: &[f64], opts: SimplexOptions, iterations: &mut usize) -> Result<DualOutcome, LpError> {
        let m = self.rows;
        loop {
            if *iterations >= opts.max_iterations {
                return Err(LpError::IterationLimit { limit: opts.max_iterations });
            }
            // Leaving row: largest bound violation.
            let mut leaving: Option<(usize, f64)> = None;
            for r in 0..m {
                let b = self.basis[r];
                let x = self.basic_values[r];
                let viol = if x < self.lower[b] - FEAS_TOL {
                    self.lower[b] - x
                } else if x > self.upper[b] + FEAS_TOL {
                    x - self.upper[b]
                } else {
                    continue;
                };
                if leaving.is_none_or(|(_, v)| viol > v) {
                    leaving = Some((r, viol));
                }
            }
            let Some((r, _)) = leaving else {
                return Ok(DualOutcome::Feasible);
            };
            let b = self.basis[r];
            let below = self.basic_values[r] < self.lower[b];
            let target = if below { self.lower[b] } else { self.upper[b] };

            let y = self.duals(cost);
            let row = &self.binv[r * m..(r + 1) * m];
            // Entering column: smallest dual ratio |d_j / α_rj|.
            let mut entering: Option<(usize, f64, f64)> = None;
            for j in 0..self.cols {
                let pos = self.position[j];
                if matches!(pos, Position::Basic(_)) || self.upper[j] <= self.lower[j] {
                    continue;
                }
                let a: f64 = self.columns[j].iter().map(|&(i, v)| row[i] * v).sum();
                if a.abs() <= PIVOT_TOL {
                    continue;
                }
                let eligible = match (below, pos) {
                    (true, Position::Lower) => a < 0.0,
                    (true, Position::Upper) => a > 0.0,
                    (false, Position::Lower) => a > 0.0,
                    (false, Position::Upper) => a < 0.0,
                    _ => false,
                };
                if !eligible {
                    continue;
                }
                let d = cost[j] - self.dot(j, &y);
                let ratio = d.abs() / a.abs();
                let better = match entering {
                    None => true,
                    Some((_, best, piv)) => ratio < best - 1e-12 || (ratio <= best + 1e-12 && a.abs() > piv),
                };
                if better {
                    entering = Some((j, ratio, a.abs()));
                }
            }
            let Some((q, _, _)) = entering else {
                return Ok(DualOutcome::Infeasible);
            };
            *iterations += 1;

            let alpha = self.ftran(q);
            let theta = (self.basic_values[r] - target) / alpha[r];
            let entering_value = self.value(q) + theta;
            for i in 0..m {
                self.basic_values[i] -= theta * alpha[i];
            }
            let leaves_to = if below { Position::Lower } else { Position::Upper };
            self.pivot(r, q, &alpha, entering_value, leaves_to, opts);
            self.snap_basics();
        }
    }

    fn snap_basics(&mut self) {
        for (r, v) in self.basic_values.iter_mut().enumerate() {
            let l = self.lower[self.basis[r]];
            if *v < l && *v > l - FEAS_TOL {
                *v = l;
            }
        }
    }
}
