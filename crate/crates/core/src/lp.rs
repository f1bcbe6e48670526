//! Packing LP relaxations and a small dense simplex solver.
//!
//! Every model here has the form `max c.x  s.t.  rows <= bounds, 0 <= x <= 1`
//! with nonnegative bounds, so the all-slack basis is feasible and a single
//! phase suffices. Upper bounds `x <= 1` are explicit rows.

use crate::error::{Error, Result};
use crate::instance::{FractionalSolution, ItemSet, PackingInstance, CAPACITY_TOL};

const PIVOT_TOL: f64 = 1e-11;
const COST_TOL: f64 = 1e-10;

/// A sparse row `sum coeffs <= bound`.
#[derive(Debug, Clone, PartialEq)]
pub struct LpRow {
    pub coeffs: Vec<(usize, f64)>,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpModel {
    objective: Vec<f64>,
    rows: Vec<LpRow>,
}

impl LpModel {
    pub fn new(objective: Vec<f64>) -> Self {
        LpModel {
            objective,
            rows: Vec::new(),
        }
    }

    /// Packing model from columns: one row per capacity, rows with no entries dropped.
    pub fn from_columns(objective: Vec<f64>, capacities: &[f64], columns: &[Vec<(usize, f64)>]) -> Self {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); capacities.len()];
        for (j, col) in columns.iter().enumerate() {
            for &(i, a) in col {
                rows[i].push((j, a));
            }
        }
        let mut model = LpModel::new(objective);
        for (coeffs, &bound) in rows.into_iter().zip(capacities) {
            model.add_row(coeffs, bound);
        }
        model
    }

    pub fn add_row(&mut self, coeffs: Vec<(usize, f64)>, bound: f64) {
        self.rows.push(LpRow { coeffs, bound });
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn rows(&self) -> &[LpRow] {
        &self.rows
    }

    pub fn objective_at(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    /// Checks every row and the box `[0,1]` within `tol`.
    pub fn is_feasible(&self, x: &[f64], tol: f64) -> bool {
        x.iter().all(|v| *v >= -tol && *v <= 1.0 + tol)
            && self
                .rows
                .iter()
                .all(|r| r.coeffs.iter().map(|&(j, a)| a * x[j]).sum::<f64>() <= r.bound + tol)
    }

    /// Maximizes the objective with Bland's rule; returns an optimal vertex.
    pub fn solve(&self) -> Result<Vec<f64>> {
        let n = self.num_vars();
        for (i, r) in self.rows.iter().enumerate() {
            if !(r.bound.is_finite() && r.bound >= 0.0) {
                return Err(Error::Param(format!(
                    "row {i} has bound {}; packing models need finite nonnegative bounds",
                    r.bound
                )));
            }
            if let Some(&(j, _)) = r.coeffs.iter().find(|(j, a)| *j >= n || !a.is_finite()) {
                return Err(Error::Param(format!("row {i} references bad variable {j}")));
            }
        }
        if self.objective.iter().any(|c| !c.is_finite()) {
            return Err(Error::Param("objective has a non-finite coefficient".into()));
        }

        // Rows: model rows, then x_j <= 1. Columns: structural, slack, rhs.
        let nrows = self.rows.len() + n;
        let ncols = n + nrows + 1;
        let rhs = ncols - 1;
        let mut t = vec![vec![0.0; ncols]; nrows];
        for (i, r) in self.rows.iter().enumerate() {
            for &(j, a) in &r.coeffs {
                t[i][j] += a;
            }
            t[i][n + i] = 1.0;
            t[i][rhs] = r.bound;
        }
        for j in 0..n {
            let i = self.rows.len() + j;
            t[i][j] = 1.0;
            t[i][n + i] = 1.0;
            t[i][rhs] = 1.0;
        }
        let mut basis: Vec<usize> = (n..n + nrows).collect();
        // Reduced costs c_j - z_j; slack costs are zero.
        let mut cost = vec![0.0; ncols];
        cost[..n].copy_from_slice(&self.objective);

        loop {
            let Some(enter) = (0..ncols - 1).find(|&j| cost[j] > COST_TOL) else {
                break;
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..nrows {
                let a = t[i][enter];
                if a > PIVOT_TOL {
                    let ratio = t[i][rhs] / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((best, r)) => {
                            if ratio < r - 1e-12 || (ratio <= r + 1e-12 && basis[i] < basis[best]) {
                                Some((i, ratio))
                            } else {
                                Some((best, r))
                            }
                        }
                    };
                }
            }
            // The box rows bound every structural variable, so some row always limits.
            let (row, _) = leave.expect("packing LP cannot be unbounded");
            pivot(&mut t, &mut cost, row, enter);
            basis[row] = enter;
        }

        let mut x = vec![0.0; n];
        for (i, &b) in basis.iter().enumerate() {
            if b < n {
                x[b] = t[i][rhs].clamp(0.0, 1.0);
            }
        }
        Ok(x)
    }
}

fn pivot(t: &mut [Vec<f64>], cost: &mut [f64], row: usize, col: usize) {
    let p = t[row][col];
    for v in t[row].iter_mut() {
        *v /= p;
    }
    let pivot_row = t[row].clone();
    for (i, r) in t.iter_mut().enumerate() {
        if i == row {
            continue;
        }
        let f = r[col];
        if f != 0.0 {
            for (v, pv) in r.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
            r[col] = 0.0;
        }
    }
    let f = cost[col];
    if f != 0.0 {
        for (v, pv) in cost.iter_mut().zip(&pivot_row) {
            *v -= f * pv;
        }
        cost[col] = 0.0;
    }
}

/// `big(i) = { j : a_ij > 1/2 }` for every row.
pub fn big_sets(inst: &PackingInstance) -> Vec<ItemSet> {
    inst.rows()
        .into_iter()
        .map(|row| {
            ItemSet::from_sorted(row.into_iter().filter(|&(_, a)| a > 0.5).map(|(j, _)| j).collect())
        })
        .collect()
}

/// The LP model of an instance, optionally strengthened with `sum_{big(i)} x <= 1`
/// for every row whose big set is nonempty.
pub fn packing_model(inst: &PackingInstance, strengthen: bool) -> LpModel {
    let mut model = LpModel::from_columns(inst.weights().to_vec(), inst.capacities(), inst.columns());
    if strengthen {
        for big in big_sets(inst) {
            if !big.is_empty() {
                model.add_row(big.iter().map(|j| (j, 1.0)).collect(), 1.0);
            }
        }
    }
    model
}

pub fn solve_packing_lp(inst: &PackingInstance, strengthen: bool) -> Result<FractionalSolution> {
    inst.ensure_valid()?;
    let model = packing_model(inst, strengthen);
    let x = model.solve()?;
    debug_assert!(model.is_feasible(&x, CAPACITY_TOL));
    Ok(FractionalSolution::new(x, inst.weights()))
}
