//! Stochastic `k`-set packing with single, two and `T`-chance probing.
//!
//! Items carry a distribution over (weight, 0/1 size vector) scenarios on
//! their support rows. A run walks the items in a random order and probes
//! the marked ones that are still safe (every support row has a free unit);
//! a probed item reveals one scenario and keeps its realized size forever.
//!
//! In the multi-chance rounder an item is marked in chance `t` with
//! probability `alpha_t x_j / k` and only if it was not marked in an earlier
//! chance, so an item is considered in at most one chance. Before chance `t`
//! starts, a pool of fresh simulations of chances `1..t` estimates each
//! item's natural add rate, and safe marked items are then kept with
//! probability `beta_t x_j / k` over that estimate.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{FractionalSolution, ItemSet, ValidationReport, Violation, CAPACITY_TOL};
use crate::lp::LpModel;
use crate::montecarlo::{required_samples, EstimationSpec};
use crate::rng::calibration_block;

/// Relative error used for the default simulation budget.
pub const SIM_EPSILON: f64 = 0.01;
/// Failure probability used for the default simulation budget.
pub const SIM_DELTA: f64 = 1e-4;
/// Ceiling on the default simulation budget of a single chance.
pub const MAX_DEFAULT_SIM_BUDGET: u64 = 20_000_000;
/// Estimates this many standard errors below the target are treated as noise.
pub const ATTENUATION_SLACK_SIGMAS: f64 = 4.0;

const CALIBRATION_BLOCK: u64 = 1 << 16;
const PILOT_BUDGET: u64 = 1 << 18;
const FIXED_POINT_ROUNDS: u64 = 8;
const FIXED_POINT_TOLERANCE: f64 = 0.01;

fn stage(t: usize, round: u64) -> u64 {
    (t as u64) << 8 | round
}

/// One outcome of a stochastic item: probability, weight and sizes on the support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "(f64, f64, Vec<u8>)", into = "(f64, f64, Vec<u8>)")]
pub struct Scenario {
    pub prob: f64,
    pub weight: f64,
    pub sizes: Vec<u8>,
}

impl From<(f64, f64, Vec<u8>)> for Scenario {
    fn from((prob, weight, sizes): (f64, f64, Vec<u8>)) -> Self {
        Scenario { prob, weight, sizes }
    }
}

impl From<Scenario> for (f64, f64, Vec<u8>) {
    fn from(s: Scenario) -> Self {
        (s.prob, s.weight, s.sizes)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StochasticItem {
    pub support: Vec<usize>,
    pub scenarios: Vec<Scenario>,
}

impl StochasticItem {
    /// An item that always has the given weight and uses one unit of every support row.
    pub fn deterministic(support: Vec<usize>, weight: f64) -> Self {
        let sizes = vec![1; support.len()];
        StochasticItem {
            support,
            scenarios: vec![Scenario { prob: 1.0, weight, sizes }],
        }
    }

    pub fn expected_weight(&self) -> f64 {
        self.scenarios.iter().map(|s| s.prob * s.weight).sum()
    }

    /// `u_ij` for every support row, in support order.
    pub fn expected_sizes(&self) -> Vec<f64> {
        (0..self.support.len())
            .map(|p| self.scenarios.iter().map(|s| s.prob * f64::from(s.sizes[p])).sum())
            .collect()
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> &Scenario {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for s in &self.scenarios {
            acc += s.prob;
            if u < acc {
                return s;
            }
        }
        self.scenarios
            .iter()
            .rev()
            .find(|s| s.prob > 0.0)
            .unwrap_or(&self.scenarios[0])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkspInstance {
    pub capacities: Vec<f64>,
    pub items: Vec<StochasticItem>,
    /// Declared bound on support sizes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
}

impl SkspInstance {
    pub fn new(capacities: Vec<f64>, items: Vec<StochasticItem>) -> Self {
        SkspInstance { capacities, items, k: None }
    }

    pub fn n(&self) -> usize {
        self.items.len()
    }

    pub fn m(&self) -> usize {
        self.capacities.len()
    }

    /// Declared `k`, or the largest support size, and at least 1.
    pub fn sparsity(&self) -> usize {
        self.k
            .unwrap_or_else(|| self.items.iter().map(|it| it.support.len()).max().unwrap_or(0))
            .max(1)
    }

    pub fn weights(&self) -> Vec<f64> {
        self.items.iter().map(StochasticItem::expected_weight).collect()
    }

    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        let m = self.m();
        for (row, &value) in self.capacities.iter().enumerate() {
            if !value.is_finite() || value < 1.0 {
                report.push(Violation::BadCapacity { row, value });
            } else if value.fract() != 0.0 {
                report.push(Violation::NonIntegralCapacity { row, value });
            }
        }
        for (item, it) in self.items.iter().enumerate() {
            let mut seen = Vec::with_capacity(it.support.len());
            for &row in &it.support {
                if row >= m {
                    report.push(Violation::RowOutOfRange { item, row });
                } else if seen.contains(&row) {
                    report.push(Violation::DuplicateRow { item, row });
                }
                seen.push(row);
            }
            if let Some(k) = self.k {
                if it.support.len() > k {
                    report.push(Violation::SparsityExceeded { item, size: it.support.len(), k });
                }
            }
            if it.scenarios.is_empty() {
                report.push(Violation::Malformed(format!("item {item}: no scenarios")));
            }
            let mut total = 0.0;
            for (pos, s) in it.scenarios.iter().enumerate() {
                if !(s.prob >= 0.0 && s.prob <= 1.0) {
                    report.push(Violation::Malformed(format!(
                        "item {item}, scenario {pos}: probability {} outside [0,1]",
                        s.prob
                    )));
                }
                if !(s.weight.is_finite() && s.weight >= 0.0) {
                    report.push(Violation::BadWeight { item, value: s.weight });
                }
                if s.sizes.len() != it.support.len() {
                    report.push(Violation::Malformed(format!(
                        "item {item}, scenario {pos}: {} sizes for a support of {}",
                        s.sizes.len(),
                        it.support.len()
                    )));
                }
                if s.sizes.iter().any(|&b| b > 1) {
                    report.push(Violation::Malformed(format!(
                        "item {item}, scenario {pos}: sizes must be 0 or 1"
                    )));
                }
                total += s.prob;
            }
            if !it.scenarios.is_empty() && (total - 1.0).abs() > 1e-9 {
                report.push(Violation::ScenarioMass { item, total });
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

    /// `max sum w_j x_j  s.t.  sum_j u_ij x_j <= b_i, 0 <= x <= 1`.
    pub fn lp_model(&self) -> LpModel {
        let columns: Vec<Vec<(usize, f64)>> = self
            .items
            .iter()
            .map(|it| {
                it.support
                    .iter()
                    .copied()
                    .zip(it.expected_sizes())
                    .filter(|&(_, u)| u > 0.0)
                    .collect()
            })
            .collect();
        LpModel::from_columns(self.weights(), &self.capacities, &columns)
    }

    pub fn solve_lp(&self) -> Result<FractionalSolution> {
        self.ensure_valid()?;
        let model = self.lp_model();
        let x = model.solve()?;
        debug_assert!(model.is_feasible(&x, CAPACITY_TOL));
        Ok(FractionalSolution::new(x, &self.weights()))
    }
}

/// Per-chance marking scales `alpha_t` and add-rate targets `beta_t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChanceSchedule {
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
}

impl ChanceSchedule {
    pub fn new(alphas: Vec<f64>, betas: Vec<f64>) -> Result<Self> {
        let s = ChanceSchedule { alphas, betas };
        s.validate()?;
        Ok(s)
    }

    #[allow(non_snake_case)]
    pub fn T(&self) -> usize {
        self.alphas.len()
    }

    pub fn total_beta(&self) -> f64 {
        self.betas.iter().sum()
    }

    /// Shape and sign checks, plus `beta_t <= alpha_t (1 - sum_{t'<t} beta_t' - alpha_t / 2)`.
    pub fn validate(&self) -> Result<()> {
        if self.alphas.is_empty() || self.alphas.len() != self.betas.len() {
            return Err(Error::Param(format!(
                "schedule needs T >= 1 matching alphas and betas, got {} and {}",
                self.alphas.len(),
                self.betas.len()
            )));
        }
        let mut prefix = 0.0;
        for (t, (&a, &b)) in self.alphas.iter().zip(&self.betas).enumerate() {
            if !(a.is_finite() && a >= 0.0 && b.is_finite() && b >= 0.0) {
                return Err(Error::Param(format!("chance {t}: alpha {a}, beta {b} must be nonnegative")));
            }
            if b > a * (1.0 - prefix - a / 2.0) + 1e-12 {
                return Err(Error::Param(format!(
                    "chance {t}: beta {b} exceeds alpha (1 - earlier betas - alpha/2)"
                )));
            }
            prefix += b;
        }
        Ok(())
    }
}

/// The optimal schedule for `t` chances, corrected for finite `k`
/// (`k = f64::INFINITY` gives the limit schedule).
pub fn compute_schedule(t: usize, k: f64) -> Result<ChanceSchedule> {
    if t == 0 {
        return Err(Error::Param("need at least one chance".into()));
    }
    if !(k >= 1.0) {
        return Err(Error::Param(format!("k must be at least 1, got {k}")));
    }
    let mut alphas = Vec::with_capacity(t);
    let mut betas = Vec::with_capacity(t);
    let mut beta_star_sum = 0.0;
    let mut alpha_sum = 0.0;
    for _ in 0..t {
        let alpha = 1.0 - beta_star_sum;
        let beta_star = 0.5 * alpha * alpha;
        let correction = if k.is_infinite() { 0.0 } else { alpha * alpha_sum / k };
        alphas.push(alpha);
        betas.push((beta_star - correction).max(0.0));
        beta_star_sum += beta_star;
        alpha_sum += alpha;
    }
    Ok(ChanceSchedule { alphas, betas })
}

/// `gamma_1 .. gamma_t` with `gamma_1 = 1/2`, `gamma_s = (1 + gamma_{s-1}^2) / 2`.
pub fn gamma_sequence(t: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(t);
    let mut g = 0.0f64;
    for _ in 0..t {
        g = (1.0 + g * g) / 2.0;
        out.push(g);
    }
    out
}

/// `max(1, ceil(ln k))`.
pub fn default_chances(k: usize) -> usize {
    ((k.max(1) as f64).ln().ceil() as usize).max(1)
}

/// An item added during a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Addition {
    pub item: usize,
    pub chance: usize,
    pub weight: f64,
}

/// Result of one probing run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeOutcome {
    /// Additions in probing order.
    pub added: Vec<Addition>,
    /// Realized usage per row.
    pub usage: Vec<u32>,
}

impl ProbeOutcome {
    pub fn items(&self) -> ItemSet {
        self.added.iter().map(|a| a.item).collect()
    }

    pub fn weight(&self) -> f64 {
        self.added.iter().map(|a| a.weight).sum()
    }

    /// True iff no row's usage exceeds its capacity.
    pub fn within_capacity(&self, capacities: &[f64]) -> bool {
        self.usage.iter().zip(capacities).all(|(&u, &b)| f64::from(u) <= b)
    }
}

/// Validated instance plus marking probabilities per chance.
#[derive(Debug, Clone)]
struct Prober<'a> {
    inst: &'a SkspInstance,
    caps: Vec<u32>,
    /// `marks[t][j] = min(1, alpha_t x_j / k)`.
    marks: Vec<Vec<f64>>,
    /// Rows where some scenario of item `j` has size 1.
    reach: Vec<Vec<usize>>,
}

impl<'a> Prober<'a> {
    fn new(inst: &'a SkspInstance, x: &FractionalSolution, alphas: &[f64]) -> Result<Self> {
        inst.ensure_valid()?;
        x.ensure_len(inst.n())?;
        let k = inst.sparsity() as f64;
        let marks = alphas
            .iter()
            .map(|&a| x.x.iter().map(|&v| (a * v / k).clamp(0.0, 1.0)).collect())
            .collect();
        Ok(Prober {
            inst,
            caps: inst.capacities.iter().map(|&b| b as u32).collect(),
            marks,
            reach: inst
                .items
                .iter()
                .map(|it| {
                    let pos = 0..it.support.len();
                    pos.filter(|&p| it.scenarios.iter().any(|s| s.sizes[p] == 1)).map(|p| it.support[p]).collect()
                })
                .collect(),
        })
    }

    /// Runs chances `0..keep.len()`; chance `t` keeps a safe marked item `j`
    /// with probability `keep[t][j]`.
    fn run<R: Rng + ?Sized>(&self, keep: &[&[f64]], rng: &mut R) -> ProbeOutcome {
        self.run_observed(keep, rng, None)
    }

    /// As [`Prober::run`]; with `observe = Some((t, counts))`, also counts
    /// each item found marked and safe in chance `t`, before its keep draw.
    fn run_observed<R: Rng + ?Sized>(
        &self,
        keep: &[&[f64]],
        rng: &mut R,
        mut observe: Option<(usize, &mut [u64])>,
    ) -> ProbeOutcome {
        let n = self.inst.n();
        let mut residual = self.caps.clone();
        let mut marked = vec![false; n];
        let mut added = Vec::new();
        let mut order: Vec<usize> = (0..n).collect();
        let mut fresh = vec![false; n];
        for (t, keep_t) in keep.iter().enumerate() {
            for j in 0..n {
                fresh[j] = rng.gen::<f64>() < self.marks[t][j] && !marked[j];
            }
            order.shuffle(rng);
            for &j in &order {
                if !fresh[j] {
                    continue;
                }
                marked[j] = true;
                let item = &self.inst.items[j];
                if self.reach[j].iter().any(|&i| residual[i] == 0) {
                    continue;
                }
                if let Some((at, counts)) = observe.as_mut() {
                    if *at == t {
                        counts[j] += 1;
                    }
                }
                let kp = keep_t[j];
                if kp < 1.0 && rng.gen::<f64>() >= kp {
                    continue;
                }
                let s = item.draw(rng);
                for (&i, &b) in item.support.iter().zip(&s.sizes) {
                    residual[i] -= u32::from(b);
                }
                added.push(Addition { item: j, chance: t, weight: s.weight });
            }
        }
        let usage = self.caps.iter().zip(&residual).map(|(c, r)| c - r).collect();
        ProbeOutcome { added, usage }
    }
}

/// One run of single-chance probing with marking scale `alpha`.
pub fn probe_run_single<R: Rng + ?Sized>(
    inst: &SkspInstance,
    x: &FractionalSolution,
    alpha: f64,
    rng: &mut R,
) -> Result<ProbeOutcome> {
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::Param(format!("alpha must be nonnegative, got {alpha}")));
    }
    let prober = Prober::new(inst, x, &[alpha])?;
    let ones = vec![1.0; inst.n()];
    Ok(prober.run(&[&ones], rng))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MultichanceConfig {
    /// Simulations per chance; `None` picks the sample-size rule per chance.
    pub sim_budget: Option<u64>,
    /// Attenuate the last chance too (exact per-chance rates).
    pub attenuate_last: bool,
    /// Seed for the calibration pools.
    pub seed: u64,
}

impl Default for MultichanceConfig {
    fn default() -> Self {
        MultichanceConfig { sim_budget: None, attenuate_last: true, seed: 0 }
    }
}

/// Per-chance estimates and keep probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    /// Estimated probability that each item is marked and safe in each chance,
    /// with the other items already attenuated.
    pub estimates: Vec<Vec<f64>>,
    /// Keep probability of each item per chance.
    pub keep: Vec<Vec<f64>>,
    /// Simulations used per chance (0 when a chance was not attenuated).
    pub budgets: Vec<u64>,
    /// `(chance, item)` pairs whose estimate fell slightly below the target.
    pub flagged: Vec<(usize, usize)>,
}

/// Default budget for a chance: the sample-size rule at the smallest positive target.
pub fn default_sim_budget(targets: &[f64]) -> u64 {
    let c = targets.iter().copied().filter(|&c| c > 0.0).fold(f64::INFINITY, f64::min);
    if !c.is_finite() {
        return 1;
    }
    let spec = EstimationSpec { c: c.min(1.0), epsilon: SIM_EPSILON, delta: SIM_DELTA };
    required_samples(&spec).min(MAX_DEFAULT_SIM_BUDGET)
}

/// Multi-chance rounder with its calibration done up front.
#[derive(Debug, Clone)]
pub struct MultichanceRounder<'a> {
    prober: Prober<'a>,
    schedule: ChanceSchedule,
    calibration: Calibration,
}

impl<'a> MultichanceRounder<'a> {
    pub fn new(
        inst: &'a SkspInstance,
        x: &FractionalSolution,
        schedule: &ChanceSchedule,
        config: MultichanceConfig,
    ) -> Result<Self> {
        schedule.validate()?;
        let prober = Prober::new(inst, x, &schedule.alphas)?;
        let n = inst.n();
        let k = inst.sparsity() as f64;
        let big_t = schedule.T();
        let mut cal = Calibration {
            estimates: Vec::with_capacity(big_t),
            keep: Vec::with_capacity(big_t),
            budgets: Vec::with_capacity(big_t),
            flagged: Vec::new(),
        };
        for t in 0..big_t {
            if t + 1 == big_t && !config.attenuate_last {
                cal.estimates.push(vec![f64::NAN; n]);
                cal.keep.push(vec![1.0; n]);
                cal.budgets.push(0);
                continue;
            }
            let targets: Vec<f64> = x.x.iter().map(|&v| schedule.betas[t] * v / k).collect();
            if targets.iter().all(|&c| c <= 0.0) {
                cal.estimates.push(vec![0.0; n]);
                cal.keep.push(vec![0.0; n]);
                cal.budgets.push(0);
                continue;
            }
            let budget = config.sim_budget.unwrap_or_else(|| default_sim_budget(&targets)).max(1);
            // Attenuating one item frees capacity for items behind it in the
            // same pass, so the keep table is a fixed point: pilot rounds until
            // it settles, then one round on the full budget.
            let mut keep: Vec<f64> = targets.iter().map(|&c| if c > 0.0 { 1.0 } else { 0.0 }).collect();
            let pilot = budget.min(PILOT_BUDGET);
            let mut round = 0u64;
            while round < FIXED_POINT_ROUNDS {
                let counts = calibrate_chance(&prober, &cal.keep, &keep, t, pilot, stage(t, round), config.seed);
                round += 1;
                let mut change = 0.0f64;
                for j in 0..n {
                    let c = targets[j];
                    if c > 0.0 {
                        let p = counts[j] as f64 / pilot as f64;
                        let next = if p > c { c / p } else { 1.0 };
                        change = change.max((next - keep[j]).abs() / keep[j]);
                        keep[j] = next;
                    }
                }
                if change < FIXED_POINT_TOLERANCE {
                    break;
                }
            }
            let counts = calibrate_chance(&prober, &cal.keep, &keep, t, budget, stage(t, round), config.seed);
            let mut est = vec![0.0; n];
            for j in 0..n {
                let p = counts[j] as f64 / budget as f64;
                est[j] = p;
                let c = targets[j];
                if c <= 0.0 {
                    continue;
                }
                if p > c {
                    keep[j] = c / p;
                } else {
                    let slack = ATTENUATION_SLACK_SIGMAS * (c * (1.0 - c) / budget as f64).sqrt();
                    if c - p > slack {
                        return Err(Error::Attenuation { chance: t, item: j, estimate: p, target: c });
                    }
                    cal.flagged.push((t, j));
                    keep[j] = 1.0;
                }
            }
            cal.estimates.push(est);
            cal.keep.push(keep);
            cal.budgets.push(budget);
        }
        Ok(MultichanceRounder { prober, schedule: schedule.clone(), calibration: cal })
    }

    pub fn calibration(&self) -> &Calibration {
        &self.calibration
    }

    pub fn schedule(&self) -> &ChanceSchedule {
        &self.schedule
    }

    pub fn round<R: Rng + ?Sized>(&self, rng: &mut R) -> ProbeOutcome {
        let keep: Vec<&[f64]> = self.calibration.keep.iter().map(Vec::as_slice).collect();
        self.prober.run(&keep, rng)
    }
}

/// Counts, per item, the runs of chances `0..=t` in which the item is marked
/// and safe in chance `t`, when earlier chances use `keep` and chance `t` uses `current`.
fn calibrate_chance(
    prober: &Prober<'_>,
    keep: &[Vec<f64>],
    current: &[f64],
    t: usize,
    budget: u64,
    stage: u64,
    seed: u64,
) -> Vec<u64> {
    let n = prober.inst.n();
    let mut tables: Vec<&[f64]> = keep[..t].iter().map(Vec::as_slice).collect();
    tables.push(current);
    let blocks = budget.div_ceil(CALIBRATION_BLOCK);
    (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = calibration_block(seed, stage, b);
            let runs = CALIBRATION_BLOCK.min(budget - b * CALIBRATION_BLOCK);
            let mut counts = vec![0u64; n];
            for _ in 0..runs {
                prober.run_observed(&tables, &mut rng, Some((t, &mut counts)));
            }
            counts
        })
        .reduce(
            || vec![0u64; n],
            |mut acc, c| {
                for (a, v) in acc.iter_mut().zip(c) {
                    *a += v;
                }
                acc
            },
        )
}

/// Calibrates with a seed drawn from `rng`, then performs one run.
pub fn run_multichance<R: Rng + ?Sized>(
    inst: &SkspInstance,
    x: &FractionalSolution,
    schedule: &ChanceSchedule,
    rng: &mut R,
    sim_budget: Option<u64>,
) -> Result<ProbeOutcome> {
    let config = MultichanceConfig { sim_budget, attenuate_last: true, seed: rng.gen() };
    Ok(MultichanceRounder::new(inst, x, schedule, config)?.round(rng))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightSummary {
    pub mean: f64,
    pub std_err: f64,
    pub trials: usize,
}

/// Mean and standard error of per-trial realized weights.
pub fn expected_weight(weights: &[f64]) -> WeightSummary {
    let n = weights.len();
    assert!(n >= 1, "expected_weight needs at least one trial");
    let mean = weights.iter().sum::<f64>() / n as f64;
    let std_err = if n > 1 {
        let var = weights.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    } else {
        0.0
    };
    WeightSummary { mean, std_err, trials: n }
}
