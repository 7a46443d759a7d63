//! Dense two-phase primal simplex for small linear programs.
//!
//! Programs are minimization over `x >= 0` with rows `a.x >= b`. Rows with
//! nonpositive right-hand side are negated so their slack starts basic;
//! the rest get artificial variables and a phase-1 feasibility solve. The
//! pivot rule is steepest reduced cost until the objective stalls on
//! degenerate pivots, then Bland's rule, which cannot cycle.
//!
//! The solver is deterministic: identical input produces bit-identical
//! output.

use crate::error::{Error, Result};

/// `minimize c.x  subject to  rows[i] . x >= rhs[i],  x >= 0`.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    num_vars: usize,
    objective: Vec<f64>,
    rows: Vec<Vec<(usize, f64)>>,
    rhs: Vec<f64>,
}

impl LinearProgram {
    pub fn new(num_vars: usize) -> Self {
        LinearProgram { num_vars, objective: vec![0.0; num_vars], rows: Vec::new(), rhs: Vec::new() }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn set_objective(&mut self, var: usize, coeff: f64) {
        self.objective[var] = coeff;
    }

    pub fn add_objective(&mut self, var: usize, coeff: f64) {
        self.objective[var] += coeff;
    }

    pub fn objective_coeff(&self, var: usize) -> f64 {
        self.objective[var]
    }

    /// Adds `sum coeffs >= rhs`; returns the row index. Duplicate variable
    /// entries are allowed and accumulate.
    pub fn add_ge_row(&mut self, coeffs: &[(usize, f64)], rhs: f64) -> usize {
        debug_assert!(coeffs.iter().all(|&(j, _)| j < self.num_vars));
        self.rows.push(coeffs.to_vec());
        self.rhs.push(rhs);
        self.rows.len() - 1
    }

    pub fn row(&self, r: usize) -> (&[(usize, f64)], f64) {
        (&self.rows[r], self.rhs[r])
    }
}

/// Primal solution with row duals and structural reduced costs, both taken
/// from the final tableau.
#[derive(Debug, Clone)]
pub struct LpOutcome {
    pub x: Vec<f64>,
    pub objective: f64,
    /// One multiplier per input row, nonnegative at optimality.
    pub duals: Vec<f64>,
    /// Reduced cost per structural variable, nonnegative at optimality.
    pub reduced_costs: Vec<f64>,
}

pub trait LpBackend {
    fn solve(&self, lp: &LinearProgram) -> Result<LpOutcome>;
}

#[derive(Debug, Clone, Copy)]
pub struct DenseSimplex {
    /// Pivot budget; `None` sizes it from the instance.
    pub max_iters: Option<usize>,
}

impl Default for DenseSimplex {
    fn default() -> Self {
        DenseSimplex { max_iters: None }
    }
}

const PIVOT_EPS: f64 = 1e-9;
const FEAS_EPS: f64 = 1e-7;

struct Tableau {
    /// m rows by (width + 1) columns, last column the rhs.
    rows: Vec<Vec<f64>>,
    /// Basic column of each row.
    basis: Vec<usize>,
    /// Reduced-cost row for the active phase, last entry the negated
    /// objective value.
    rc: Vec<f64>,
    width: usize,
    /// First artificial column, if any; artificials never re-enter.
    first_artificial: usize,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Self {
        let n = lp.num_vars;
        let m = lp.rows.len();
        let artificial_rows: Vec<usize> =
            (0..m).filter(|&r| lp.rhs[r] > 0.0).collect();
        let width = n + m + artificial_rows.len();
        let mut rows = vec![vec![0.0; width + 1]; m];
        let mut basis = vec![0usize; m];
        let mut next_art = n + m;
        for r in 0..m {
            let negate = lp.rhs[r] <= 0.0;
            let sign = if negate { -1.0 } else { 1.0 };
            for &(j, a) in &lp.rows[r] {
                rows[r][j] += sign * a;
            }
            // slack (+1, basic) on negated rows, surplus (-1) otherwise
            rows[r][n + r] = if negate { 1.0 } else { -1.0 };
            rows[r][width] = sign * lp.rhs[r];
            if negate {
                basis[r] = n + r;
            } else {
                rows[r][next_art] = 1.0;
                basis[r] = next_art;
                next_art += 1;
            }
        }
        Tableau {
            rows,
            basis,
            rc: vec![0.0; width + 1],
            width,
            first_artificial: n + m,
        }
    }

    /// Recomputes the reduced-cost row for the given column costs.
    fn reset_costs(&mut self, cost: &[f64]) {
        for j in 0..=self.width {
            let c = if j < self.width { cost[j] } else { 0.0 };
            let basic_part: f64 =
                (0..self.rows.len()).map(|r| cost[self.basis[r]] * self.rows[r][j]).sum();
            self.rc[j] = c - basic_part;
        }
    }

    fn pivot(&mut self, r: usize, e: usize) {
        let piv = self.rows[r][e];
        for v in self.rows[r].iter_mut() {
            *v /= piv;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i != r && row[e].abs() > 0.0 {
                let f = row[e];
                for (v, p) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * p;
                }
                row[e] = 0.0; // eliminate residual roundoff exactly
            }
        }
        let f = self.rc[e];
        if f.abs() > 0.0 {
            for (v, p) in self.rc.iter_mut().zip(&pivot_row) {
                *v -= f * p;
            }
            self.rc[e] = 0.0;
        }
        self.basis[r] = e;
    }

    /// Runs simplex iterations until optimal for the current cost row.
    /// `allow` filters which columns may enter.
    fn optimize(&mut self, budget: &mut usize, allow: impl Fn(usize) -> bool) -> Result<()> {
        let mut bland = false;
        let mut stalled = 0usize;
        let stall_limit = 2 * (self.rows.len() + self.width) + 16;
        loop {
            let mut entering = None;
            if bland {
                for j in 0..self.width {
                    if allow(j) && self.rc[j] < -PIVOT_EPS {
                        entering = Some(j);
                        break;
                    }
                }
            } else {
                let mut best = -PIVOT_EPS;
                for j in 0..self.width {
                    if allow(j) && self.rc[j] < best {
                        best = self.rc[j];
                        entering = Some(j);
                    }
                }
            }
            let Some(e) = entering else { return Ok(()) };

            let mut leave: Option<(f64, usize, usize)> = None; // (ratio, basis col, row)
            for r in 0..self.rows.len() {
                let a = self.rows[r][e];
                if a > PIVOT_EPS {
                    let ratio = self.rows[r][self.width] / a;
                    let key = (ratio, self.basis[r]);
                    if leave.map_or(true, |(br, bc, _)| key < (br, bc)) {
                        leave = Some((ratio, self.basis[r], r));
                    }
                }
            }
            let Some((ratio, _, r)) = leave else {
                return Err(Error::LpUnbounded);
            };

            if *budget == 0 {
                return Err(Error::LpStalled(stalled));
            }
            *budget -= 1;
            if ratio.abs() <= PIVOT_EPS {
                stalled += 1;
                if stalled > stall_limit {
                    bland = true;
                }
            } else {
                stalled = 0;
            }
            self.pivot(r, e);
        }
    }
}

impl LpBackend for DenseSimplex {
    fn solve(&self, lp: &LinearProgram) -> Result<LpOutcome> {
        let n = lp.num_vars;
        let m = lp.rows.len();
        let mut t = Tableau::build(lp);
        let mut budget =
            self.max_iters.unwrap_or(1000 + 50 * (m + t.width));

        if t.first_artificial < t.width {
            // phase 1: minimize the artificial sum
            let mut cost = vec![0.0; t.width];
            for c in cost.iter_mut().skip(t.first_artificial) {
                *c = 1.0;
            }
            t.reset_costs(&cost);
            let first_art = t.first_artificial;
            t.optimize(&mut budget, |_| true)?;
            let phase1 = -t.rc[t.width];
            if phase1 > FEAS_EPS {
                return Err(Error::LpInfeasible);
            }
            // force leftover artificials out of the basis where possible
            for r in 0..m {
                if t.basis[r] >= first_art {
                    if let Some(e) =
                        (0..first_art).find(|&j| t.rows[r][j].abs() > PIVOT_EPS)
                    {
                        t.pivot(r, e);
                    }
                    // an all-zero row is redundant; its artificial stays
                    // basic at zero and never pivots again
                }
            }
        }

        // phase 2 over the real objective, artificials barred
        let mut cost = vec![0.0; t.width];
        cost[..n].copy_from_slice(&lp.objective);
        t.reset_costs(&cost);
        let first_art = t.first_artificial;
        t.optimize(&mut budget, |j| j < first_art)?;

        let mut x = vec![0.0; n];
        for r in 0..m {
            if t.basis[r] < n {
                x[t.basis[r]] = t.rows[r][t.width].max(0.0);
            }
        }
        let objective = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
        // the dual of row r is the reduced cost of its slack or surplus
        // column, for either row orientation
        let duals: Vec<f64> = (0..m).map(|r| t.rc[n + r]).collect();
        let reduced_costs: Vec<f64> = (0..n).map(|j| t.rc[j]).collect();
        Ok(LpOutcome { x, objective, duals, reduced_costs })
    }
}
