//! Contention resolution for unit-demand unsplittable flow on trees.
//!
//! Demands are pre-sampled independently with probability `alpha x_i` and
//! visited by increasing depth of the LCA of their endpoints. A sampled
//! demand whose path still has a free unit on every edge is routed with
//! probability `beta / eta_i`, where `eta_i` is the probability that demand
//! `i` finds its path free. `eta_i` is estimated by a pool of simulated runs
//! advanced in lockstep, demand by demand, with the already-fixed keep
//! probabilities of earlier demands.
//!
//! Edges are named by their lower endpoint: edge `v` joins `v` and its parent.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{FractionalSolution, ItemSet, ValidationReport, Violation, CAPACITY_TOL};
use crate::lp::LpModel;
use crate::rng::calibration_block;

/// Default number of simulated runs used to estimate `eta`.
pub const DEFAULT_SIM_BUDGET: u64 = 20_000;
/// Grid resolution used when the default `alpha` is derived.
pub const DEFAULT_GRID: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Demand {
    pub s: usize,
    pub t: usize,
    pub w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNetwork {
    /// Parent of each vertex, `null` for the root.
    pub parent: Vec<Option<usize>>,
    pub root: usize,
    /// Capacity of the edge above each vertex; the root's entry is ignored.
    #[serde(rename = "edgeCapacity")]
    pub edge_capacity: Vec<f64>,
    pub demands: Vec<Demand>,
}

impl TreeNetwork {
    pub fn num_vertices(&self) -> usize {
        self.parent.len()
    }

    pub fn num_demands(&self) -> usize {
        self.demands.len()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.demands.iter().map(|d| d.w).collect()
    }

    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        let nv = self.num_vertices();
        if self.edge_capacity.len() != nv {
            report.push(Violation::LengthMismatch {
                field: "edgeCapacity",
                expected: nv,
                found: self.edge_capacity.len(),
            });
        }
        if self.root >= nv {
            report.push(Violation::Malformed(format!("root {} out of range", self.root)));
            return report;
        }
        for (v, p) in self.parent.iter().enumerate() {
            match (*p, v == self.root) {
                (Some(_), true) => report.push(Violation::Malformed("root has a parent".into())),
                (None, false) => report.push(Violation::Malformed(format!("vertex {v} has no parent"))),
                (Some(p), false) if p >= nv => {
                    report.push(Violation::Malformed(format!("vertex {v}: parent {p} out of range")))
                }
                _ => {}
            }
        }
        if !report.is_empty() {
            return report;
        }
        for v in 0..nv {
            let mut u = v;
            let mut steps = 0;
            while let Some(p) = self.parent[u] {
                u = p;
                steps += 1;
                if steps > nv {
                    report.push(Violation::Malformed(format!("vertex {v} lies on a cycle")));
                    return report;
                }
            }
        }
        for (v, &value) in self.edge_capacity.iter().enumerate() {
            if v == self.root {
                continue;
            }
            if !value.is_finite() || value < 1.0 {
                report.push(Violation::BadCapacity { row: v, value });
            } else if value.fract() != 0.0 {
                report.push(Violation::NonIntegralCapacity { row: v, value });
            }
        }
        for (item, d) in self.demands.iter().enumerate() {
            if d.s >= nv || d.t >= nv {
                report.push(Violation::Malformed(format!("demand {item}: endpoint out of range")));
            } else if d.s == d.t {
                report.push(Violation::Malformed(format!("demand {item}: s = t")));
            }
            if !(d.w.is_finite() && d.w >= 0.0) {
                report.push(Violation::BadWeight { item, value: d.w });
            }
        }
        report
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let report = self.validate();
        if report.is_empty() {
            Ok(())
        } else {
            Err(Error::Invalid(report))
        }
    }

    /// Edge count from the root, per vertex.
    pub fn depths(&self) -> Vec<usize> {
        let mut depth = vec![usize::MAX; self.num_vertices()];
        for v in 0..self.num_vertices() {
            let mut chain = Vec::new();
            let mut u = v;
            while depth[u] == usize::MAX {
                chain.push(u);
                match self.parent[u] {
                    Some(p) => u = p,
                    None => {
                        depth[u] = 0;
                        chain.pop();
                        break;
                    }
                }
            }
            let mut d = depth[u];
            for &w in chain.iter().rev() {
                d += 1;
                depth[w] = d;
            }
        }
        depth
    }

    /// Lowest common ancestor by walking the deeper endpoint up.
    pub fn lca(&self, depth: &[usize], mut a: usize, mut b: usize) -> usize {
        while depth[a] > depth[b] {
            a = self.parent[a].expect("non-root vertex");
        }
        while depth[b] > depth[a] {
            b = self.parent[b].expect("non-root vertex");
        }
        while a != b {
            a = self.parent[a].expect("non-root vertex");
            b = self.parent[b].expect("non-root vertex");
        }
        a
    }

    /// Edges on the `s`-`t` path.
    pub fn path(&self, depth: &[usize], s: usize, t: usize) -> Vec<usize> {
        let top = self.lca(depth, s, t);
        let mut edges = Vec::new();
        for mut u in [s, t] {
            while u != top {
                edges.push(u);
                u = self.parent[u].expect("non-root vertex");
            }
        }
        edges
    }

    pub fn paths(&self) -> Vec<Vec<usize>> {
        let depth = self.depths();
        self.demands.iter().map(|d| self.path(&depth, d.s, d.t)).collect()
    }

    fn lp_capacities(&self) -> Vec<f64> {
        let mut caps = self.edge_capacity.clone();
        caps[self.root] = 1.0;
        caps
    }

    /// `max w.x  s.t.  sum_{i : e on P_i} x_i <= u_e, 0 <= x <= 1`.
    pub fn lp_model(&self) -> LpModel {
        let columns: Vec<Vec<(usize, f64)>> =
            self.paths().into_iter().map(|p| p.into_iter().map(|e| (e, 1.0)).collect()).collect();
        LpModel::from_columns(self.weights(), &self.lp_capacities(), &columns)
    }

    pub fn solve_lp(&self) -> Result<FractionalSolution> {
        self.ensure_valid()?;
        let model = self.lp_model();
        let x = model.solve()?;
        debug_assert!(model.is_feasible(&x, CAPACITY_TOL));
        Ok(FractionalSolution::new(x, &self.weights()))
    }

    /// True iff routing `routed` uses every edge at most its capacity.
    pub fn respects_capacity(&self, routed: &ItemSet) -> bool {
        let paths = self.paths();
        let mut load = vec![0.0; self.num_vertices()];
        for i in routed.iter() {
            for &e in &paths[i] {
                load[e] += 1.0;
            }
        }
        load.iter().zip(&self.edge_capacity).all(|(l, u)| l <= u)
    }
}

/// Demands by depth of their LCA, ties by index.
pub fn lca_order(net: &TreeNetwork) -> Vec<usize> {
    let depth = net.depths();
    let key: Vec<usize> = net.demands.iter().map(|d| depth[net.lca(&depth, d.s, d.t)]).collect();
    let mut order: Vec<usize> = (0..net.num_demands()).collect();
    order.sort_by_key(|&i| (key[i], i));
    order
}

/// Largest admissible `alpha` (exclusive): `alpha e < 1/3`.
pub fn alpha_limit() -> f64 {
    1.0 / (3.0 * std::f64::consts::E)
}

/// `beta = 1 - 2 alpha e / (1 - alpha e)`.
pub fn beta_of(alpha: f64) -> f64 {
    let ae = alpha * std::f64::consts::E;
    1.0 - 2.0 * ae / (1.0 - ae)
}

/// `alpha (1 - 2 gamma e / (1 - gamma e))` with `gamma = alpha beta`.
pub fn balance_objective(alpha: f64) -> f64 {
    let ge = alpha * beta_of(alpha) * std::f64::consts::E;
    alpha * (1.0 - 2.0 * ge / (1.0 - ge))
}

/// Grid maximum of [`balance_objective`] over `alpha = i * grid < 1/(3e)`.
pub fn optimize_alpha(grid: f64) -> Result<(f64, f64)> {
    if !(grid > 0.0 && grid <= 1e-5) {
        return Err(Error::Param(format!("grid resolution must lie in (0, 1e-5], got {grid}")));
    }
    let limit = alpha_limit();
    let mut best = (0.0, 0.0);
    let mut i = 1u64;
    loop {
        let alpha = i as f64 * grid;
        if alpha >= limit {
            break;
        }
        let v = balance_objective(alpha);
        if v > best.1 {
            best = (alpha, v);
        }
        i += 1;
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UfpParams {
    pub alpha: f64,
    pub beta: f64,
    pub sim_budget: u64,
}

impl UfpParams {
    pub fn from_alpha(alpha: f64, sim_budget: u64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < alpha_limit()) {
            return Err(Error::Param(format!("alpha must lie in (0, 1/(3e)), got {alpha}")));
        }
        if sim_budget == 0 {
            return Err(Error::Param("simulation budget must be positive".into()));
        }
        Ok(UfpParams { alpha, beta: beta_of(alpha), sim_budget })
    }

    /// `alpha` from [`optimize_alpha`] at [`DEFAULT_GRID`].
    pub fn optimal(sim_budget: u64) -> Result<Self> {
        let (alpha, _) = optimize_alpha(DEFAULT_GRID)?;
        Self::from_alpha(alpha, sim_budget)
    }
}

/// Estimated `eta` and keep probability per demand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UfpCalibration {
    pub eta: Vec<f64>,
    pub keep: Vec<f64>,
    /// Demands whose estimate fell below `beta` (kept with probability 1).
    pub flagged: Vec<usize>,
}

/// Calibrated scheme for one network and LP point.
#[derive(Debug, Clone)]
pub struct UfpRounder<'a> {
    net: &'a TreeNetwork,
    params: UfpParams,
    order: Vec<usize>,
    paths: Vec<Vec<usize>>,
    caps: Vec<u32>,
    probs: Vec<f64>,
    calibration: UfpCalibration,
}

impl<'a> UfpRounder<'a> {
    pub fn new(net: &'a TreeNetwork, x: &FractionalSolution, params: UfpParams, seed: u64) -> Result<Self> {
        net.ensure_valid()?;
        x.ensure_len(net.num_demands())?;
        UfpParams::from_alpha(params.alpha, params.sim_budget)?;
        let caps: Vec<u32> = net
            .edge_capacity
            .iter()
            .enumerate()
            .map(|(v, &u)| if v == net.root { 0 } else { u as u32 })
            .collect();
        let mut rounder = UfpRounder {
            net,
            params,
            order: lca_order(net),
            paths: net.paths(),
            caps,
            probs: x.x.iter().map(|&v| (params.alpha * v).clamp(0.0, 1.0)).collect(),
            calibration: UfpCalibration { eta: Vec::new(), keep: Vec::new(), flagged: Vec::new() },
        };
        rounder.calibrate(seed)?;
        Ok(rounder)
    }

    fn safe(&self, residual: &[u32], i: usize) -> bool {
        self.paths[i].iter().all(|&e| residual[e] >= 1)
    }

    fn calibrate(&mut self, seed: u64) -> Result<()> {
        let k = self.net.num_demands();
        let runs = self.params.sim_budget as usize;
        let ne = self.caps.len();
        let mut residual: Vec<u32> = self.caps.repeat(runs);
        let mut rng = calibration_block(seed, 0, 0);
        let mut eta = vec![0.0; k];
        let mut keep = vec![1.0; k];
        let mut flagged = Vec::new();
        for &i in &self.order {
            let mut safe_runs = 0usize;
            let mut safe_now = vec![false; runs];
            for (r, flag) in safe_now.iter_mut().enumerate() {
                *flag = self.safe(&residual[r * ne..(r + 1) * ne], i);
                safe_runs += usize::from(*flag);
            }
            let est = safe_runs as f64 / runs as f64;
            eta[i] = est;
            if self.probs[i] > 0.0 {
                if est == 0.0 {
                    return Err(Error::Estimate { demand: i, runs });
                }
                if est < self.params.beta {
                    flagged.push(i);
                } else {
                    keep[i] = self.params.beta / est;
                }
            }
            for (r, &is_safe) in safe_now.iter().enumerate() {
                let sampled = rng.gen::<f64>() < self.probs[i];
                if sampled && is_safe && (keep[i] >= 1.0 || rng.gen::<f64>() < keep[i]) {
                    for &e in &self.paths[i] {
                        residual[r * ne + e] -= 1;
                    }
                }
            }
        }
        self.calibration = UfpCalibration { eta, keep, flagged };
        Ok(())
    }

    pub fn calibration(&self) -> &UfpCalibration {
        &self.calibration
    }

    pub fn params(&self) -> &UfpParams {
        &self.params
    }

    /// `alpha beta x_i`, the designed routing probability.
    pub fn target(&self, i: usize) -> f64 {
        self.probs[i] * self.params.beta
    }

    pub fn round<R: Rng + ?Sized>(&self, rng: &mut R) -> ItemSet {
        let mut residual = self.caps.clone();
        let mut routed = Vec::new();
        for &i in &self.order {
            let sampled = rng.gen::<f64>() < self.probs[i];
            if !sampled || !self.safe(&residual, i) {
                continue;
            }
            let kp = self.calibration.keep[i];
            if kp < 1.0 && rng.gen::<f64>() >= kp {
                continue;
            }
            for &e in &self.paths[i] {
                residual[e] -= 1;
            }
            routed.push(i);
        }
        routed.into_iter().collect()
    }
}

/// Calibrates with a seed drawn from `rng`, then performs one run.
pub fn cr_round<R: Rng + ?Sized>(
    net: &TreeNetwork,
    x: &FractionalSolution,
    params: UfpParams,
    rng: &mut R,
) -> Result<ItemSet> {
    let seed = rng.gen();
    Ok(UfpRounder::new(net, x, params, seed)?.round(rng))
}
