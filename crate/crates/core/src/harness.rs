//! Instance generators, exact optima and trial experiments.

use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypermatch::{linear_bound, theoretical_bound, Edge, Hypergraph, Linear, MatchingRounder, Quadratic};
use crate::instance::{check_feasible, FractionalSolution, ItemSet, PackingInstance, CAPACITY_TOL};
use crate::kcspip::{default_ell, BknsRounder, KcsParams, KcsRounder};
use crate::lp::solve_packing_lp;
use crate::report::{ItemRow, RoundingReport};
use crate::rng::stream;
use crate::sksp::{compute_schedule, default_chances, ChanceSchedule, MultichanceConfig, MultichanceRounder, Scenario, SkspInstance, StochasticItem};
use crate::ufptree::{Demand, TreeNetwork, UfpParams, UfpRounder};

/// Largest instance [`brute_force_opt`] accepts.
pub const BRUTE_FORCE_MAX: usize = 24;

const TRIAL_BLOCK: u64 = 512;

/// The integrality-gap family: `n = m = 2k - 1`, `a_ii = 1`, and
/// `a_ij = eps` for `j` in `i+1 .. i+k-1 (mod n)`; unit weights and capacities.
pub fn gen_gap_instance(k: usize, eps: f64) -> Result<PackingInstance> {
    if k < 2 {
        return Err(Error::Param(format!("gap instances need k >= 2, got {k}")));
    }
    let n = 2 * k - 1;
    let limit = 1.0 / (10.0 * n as f64 * k as f64);
    if !(eps > 0.0 && eps < limit) {
        return Err(Error::Param(format!("eps must lie in (0, 1/(10 n k)) = (0, {limit:e}), got {eps}")));
    }
    let columns = (0..n)
        .map(|j| {
            // item j is big in row j and tiny in rows j-1, ..., j-k+1
            let mut col: Vec<(usize, f64)> = (0..k).map(|s| ((j + n - s) % n, if s == 0 { 1.0 } else { eps })).collect();
            col.sort_by_key(|&(i, _)| i);
            col
        })
        .collect();
    Ok(PackingInstance::unit(n, vec![1.0; n], columns).with_declared_sparsity(k))
}

/// Exact maximum-weight feasible subset, by depth-first enumeration that
/// abandons any prefix which already violates a capacity.
pub fn brute_force_opt(inst: &PackingInstance) -> Result<(f64, ItemSet)> {
    brute_force_opt_with_limit(inst, BRUTE_FORCE_MAX)
}

/// [`brute_force_opt`] with a caller-chosen size cap, for instances where
/// pruning keeps the search small (every pair of items conflicting, say).
pub fn brute_force_opt_with_limit(inst: &PackingInstance, max: usize) -> Result<(f64, ItemSet)> {
    inst.ensure_valid()?;
    let n = inst.n();
    if n > max {
        return Err(Error::Size { n, max });
    }
    struct Search<'a> {
        inst: &'a PackingInstance,
        load: Vec<f64>,
        chosen: Vec<usize>,
        weight: f64,
        best: (f64, Vec<usize>),
    }
    impl Search<'_> {
        fn go(&mut self, j: usize) {
            if j == self.inst.n() {
                if self.weight > self.best.0 {
                    self.best = (self.weight, self.chosen.clone());
                }
                return;
            }
            let col = self.inst.column(j);
            let caps = self.inst.capacities();
            if col.iter().all(|&(i, a)| self.load[i] + a <= caps[i] + CAPACITY_TOL) {
                for &(i, a) in col {
                    self.load[i] += a;
                }
                self.chosen.push(j);
                self.weight += self.inst.weights()[j];
                self.go(j + 1);
                self.weight -= self.inst.weights()[j];
                self.chosen.pop();
                for &(i, a) in col {
                    self.load[i] -= a;
                }
            }
            self.go(j + 1);
        }
    }
    let mut s = Search { inst, load: vec![0.0; inst.m()], chosen: Vec::new(), weight: 0.0, best: (0.0, Vec::new()) };
    s.go(0);
    Ok((s.best.0, s.best.1.into_iter().collect()))
}

/// `n` items over `m` unit-capacity rows; each column has exactly `k`
/// distinct uniform rows with coefficients in `(0,1]`; weights in `(0,1]`.
pub fn gen_random_kcs(n: usize, m: usize, k: usize, seed: u64) -> Result<PackingInstance> {
    if k > m {
        return Err(Error::Param(format!("k = {k} exceeds m = {m}")));
    }
    let mut rng = stream(seed, 0);
    let mut columns = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for _ in 0..n {
        let mut rows = sample(&mut rng, m, k).into_vec();
        rows.sort_unstable();
        columns.push(rows.into_iter().map(|i| (i, 1.0 - rng.gen::<f64>())).collect());
        weights.push(1.0 - rng.gen::<f64>());
    }
    Ok(PackingInstance::unit(m, weights, columns).with_declared_sparsity(k))
}

/// `n` edges on `m` vertices, each of uniform size in `1..=k_max` with
/// weight in `(0,1]`.
pub fn gen_random_hypergraph(m: usize, n: usize, k_max: usize, seed: u64) -> Result<Hypergraph> {
    if k_max == 0 || k_max > m {
        return Err(Error::Param(format!("need 1 <= k_max <= m, got k_max = {k_max}, m = {m}")));
    }
    let mut rng = stream(seed, 0);
    let edges = (0..n)
        .map(|_| {
            let size = rng.gen_range(1..=k_max);
            let mut vertices = sample(&mut rng, m, size).into_vec();
            vertices.sort_unstable();
            Edge { vertices, weight: 1.0 - rng.gen::<f64>() }
        })
        .collect();
    Ok(Hypergraph::new(m, edges))
}

/// `n` items, each supported on `k` distinct rows of `m`, with `scenarios`
/// outcomes of random probability, weight in `[0,1)` and 0/1 sizes; capacities in `{1,2}`.
pub fn gen_sksp_instance(n: usize, m: usize, k: usize, scenarios: usize, seed: u64) -> Result<SkspInstance> {
    if k > m || scenarios == 0 {
        return Err(Error::Param(format!("need k <= m and at least one scenario, got k = {k}, m = {m}, scenarios = {scenarios}")));
    }
    let mut rng = stream(seed, 0);
    let capacities = (0..m).map(|_| f64::from(rng.gen_range(1u8..=2))).collect();
    let items = (0..n)
        .map(|_| {
            let mut support = sample(&mut rng, m, k).into_vec();
            support.sort_unstable();
            let raw: Vec<f64> = (0..scenarios).map(|_| 1.0 - rng.gen::<f64>()).collect();
            let total: f64 = raw.iter().sum();
            let mut scen: Vec<Scenario> = raw
                .iter()
                .map(|p| Scenario {
                    prob: p / total,
                    weight: rng.gen(),
                    sizes: (0..k).map(|_| u8::from(rng.gen::<bool>())).collect(),
                })
                .collect();
            // put any rounding residue on the last scenario so the mass is 1
            let head: f64 = scen[..scenarios - 1].iter().map(|s| s.prob).sum();
            scen[scenarios - 1].prob = 1.0 - head;
            StochasticItem { support, scenarios: scen }
        })
        .collect();
    let mut inst = SkspInstance::new(capacities, items);
    inst.k = Some(k);
    Ok(inst)
}

/// Random recursive tree on `vertices` vertices rooted at 0, integer edge
/// capacities in `1..=max_cap`, and `demands` demands with distinct endpoints.
pub fn gen_random_tree(vertices: usize, demands: usize, max_cap: u32, seed: u64) -> Result<TreeNetwork> {
    if vertices < 2 || max_cap == 0 {
        return Err(Error::Param(format!("need at least 2 vertices and max_cap >= 1, got {vertices}, {max_cap}")));
    }
    let mut rng = stream(seed, 0);
    let mut parent = vec![None];
    let mut edge_capacity = vec![0.0];
    for v in 1..vertices {
        parent.push(Some(rng.gen_range(0..v)));
        edge_capacity.push(f64::from(rng.gen_range(1..=max_cap)));
    }
    let demands = (0..demands)
        .map(|_| {
            let ends = sample(&mut rng, vertices, 2);
            Demand { s: ends.index(0), t: ends.index(1), w: 1.0 - rng.gen::<f64>() }
        })
        .collect();
    Ok(TreeNetwork { parent, root: 0, edge_capacity, demands })
}

/// Which rounding algorithm an experiment runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Algorithm {
    Kcspip(KcsParams),
    Bkns { alpha: f64, ell: usize },
    Sksp { schedule: ChanceSchedule, sim_budget: Option<u64>, attenuate_last: bool },
    Hm { linear_alpha: Option<f64> },
    Ufp(UfpParams),
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Kcspip(_) => "kcspip",
            Algorithm::Bkns { .. } => "bkns",
            Algorithm::Sksp { .. } => "sksp",
            Algorithm::Hm { .. } => "hm",
            Algorithm::Ufp(_) => "ufp",
        }
    }
}

/// Instance of any of the four families.
#[derive(Debug, Clone, PartialEq)]
pub enum InstanceSource {
    Packing(PackingInstance),
    Stochastic(SkspInstance),
    Hyper(Hypergraph),
    Tree(TreeNetwork),
}

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub algorithm: Algorithm,
    pub instance: InstanceSource,
    /// LP point to round; solved (strengthened where applicable) when absent.
    pub x: Option<FractionalSolution>,
    pub trials: u64,
    pub seed: u64,
    /// Worker threads; results do not depend on it.
    pub jobs: usize,
}

impl ExperimentSpec {
    pub fn new(algorithm: Algorithm, instance: InstanceSource, trials: u64, seed: u64) -> Self {
        ExperimentSpec { algorithm, instance, x: None, trials, seed, jobs: 1 }
    }
}

/// What one trial produced.
struct Trial {
    chosen: ItemSet,
    chances: Vec<usize>,
    weight: f64,
    feasible: bool,
}

#[derive(Clone)]
struct Tally {
    counts: Vec<u64>,
    chance_counts: Vec<Vec<u64>>,
    weight_sum: f64,
    weight_sq: f64,
    violations: Vec<u64>,
}

impl Tally {
    fn new(n: usize, chances: usize) -> Self {
        Tally { counts: vec![0; n], chance_counts: vec![vec![0; n]; chances], weight_sum: 0.0, weight_sq: 0.0, violations: Vec::new() }
    }

    fn add(&mut self, t: u64, trial: Trial) {
        for (pos, j) in trial.chosen.iter().enumerate() {
            self.counts[j] += 1;
            if let Some(&c) = trial.chances.get(pos) {
                self.chance_counts[c][j] += 1;
            }
        }
        self.weight_sum += trial.weight;
        self.weight_sq += trial.weight * trial.weight;
        if !trial.feasible {
            self.violations.push(t);
        }
    }

    fn merge(mut self, other: Tally) -> Tally {
        for (a, b) in self.counts.iter_mut().zip(other.counts) {
            *a += b;
        }
        for (ra, rb) in self.chance_counts.iter_mut().zip(other.chance_counts) {
            for (a, b) in ra.iter_mut().zip(rb) {
                *a += b;
            }
        }
        self.weight_sum += other.weight_sum;
        self.weight_sq += other.weight_sq;
        self.violations.extend(other.violations);
        self
    }
}

/// Runs `trials` trials (trial `t` on stream `t` of `seed`) in fixed blocks
/// and merges the blocks in order, so the tally is independent of `jobs`.
fn run_trials<F>(n: usize, chances: usize, trials: u64, jobs: usize, one: F) -> Result<Tally>
where
    F: Fn(u64) -> Trial + Sync,
{
    let blocks = trials.div_ceil(TRIAL_BLOCK);
    let work = || {
        let parts: Vec<Tally> = (0..blocks)
            .into_par_iter()
            .map(|b| {
                let mut tally = Tally::new(n, chances);
                for t in b * TRIAL_BLOCK..((b + 1) * TRIAL_BLOCK).min(trials) {
                    tally.add(t, one(t));
                }
                tally
            })
            .collect();
        parts.into_iter().fold(Tally::new(n, chances), Tally::merge)
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Param(format!("cannot start {jobs} workers: {e}")))?;
    Ok(pool.install(work))
}

fn mismatch(alg: &Algorithm) -> Error {
    Error::Param(format!("algorithm {} does not match the instance family", alg.name()))
}

/// Runs the experiment and compares per-item inclusion frequencies with the
/// algorithm's analytic floor.
pub fn empirical_ratio(spec: &ExperimentSpec) -> Result<RoundingReport> {
    if spec.trials == 0 {
        return Err(Error::Param("need at least one trial".into()));
    }
    let seed = spec.seed;
    let mut flagged = Vec::new();
    let (x, k, floors, tally, chances) = match (&spec.algorithm, &spec.instance) {
        (Algorithm::Kcspip(params), InstanceSource::Packing(inst)) => {
            let x = match &spec.x {
                Some(x) => x.clone(),
                None => solve_packing_lp(inst, true)?,
            };
            let r = KcsRounder::new(inst, &x, *params)?;
            let k = r.k();
            let floors = x.x.iter().map(|v| v / (2.0 * k as f64)).collect();
            let tally = run_trials(inst.n(), 0, spec.trials, spec.jobs, |t| {
                let chosen = r.round(&mut stream(seed, t));
                let feasible = check_feasible(inst, &chosen);
                Trial { weight: inst.weight_of(&chosen), chosen, chances: vec![], feasible }
            })?;
            (x, k, floors, tally, 0)
        }
        (Algorithm::Bkns { alpha, ell }, InstanceSource::Packing(inst)) => {
            let x = match &spec.x {
                Some(x) => x.clone(),
                None => solve_packing_lp(inst, true)?,
            };
            let r = BknsRounder::new(inst, &x, *alpha, *ell)?;
            let k = r.k();
            let floors = x.x.iter().map(|v| v / (std::f64::consts::E * k as f64)).collect();
            let tally = run_trials(inst.n(), 0, spec.trials, spec.jobs, |t| {
                let chosen = r.round(&mut stream(seed, t));
                let feasible = check_feasible(inst, &chosen);
                Trial { weight: inst.weight_of(&chosen), chosen, chances: vec![], feasible }
            })?;
            (x, k, floors, tally, 0)
        }
        (Algorithm::Sksp { schedule, sim_budget, attenuate_last }, InstanceSource::Stochastic(inst)) => {
            let x = match &spec.x {
                Some(x) => x.clone(),
                None => inst.solve_lp()?,
            };
            let config = MultichanceConfig { sim_budget: *sim_budget, attenuate_last: *attenuate_last, seed };
            let r = MultichanceRounder::new(inst, &x, schedule, config)?;
            for &(t, j) in &r.calibration().flagged {
                flagged.push(format!("chance {t}, item {j}: estimate below target, keep clamped to 1"));
            }
            let k = inst.sparsity();
            let total = schedule.total_beta();
            let floors = x.x.iter().map(|v| total * v / k as f64).collect();
            let big_t = schedule.T();
            let tally = run_trials(inst.n(), big_t, spec.trials, spec.jobs, |t| {
                let out = r.round(&mut stream(seed, t));
                let mut pairs: Vec<(usize, usize)> = out.added.iter().map(|a| (a.item, a.chance)).collect();
                pairs.sort_unstable();
                let feasible = out.within_capacity(&inst.capacities) && pairs.windows(2).all(|w| w[0].0 != w[1].0);
                Trial {
                    weight: out.weight(),
                    chosen: ItemSet::from_sorted(pairs.iter().map(|p| p.0).collect()),
                    chances: pairs.iter().map(|p| p.1).collect(),
                    feasible,
                }
            })?;
            (x, k, floors, tally, big_t)
        }
        (Algorithm::Hm { linear_alpha }, InstanceSource::Hyper(h)) => {
            let x = match &spec.x {
                Some(x) => x.clone(),
                None => h.solve_lp()?,
            };
            let r = match linear_alpha {
                Some(a) => MatchingRounder::new(h, &x, &Linear(*a))?,
                None => MatchingRounder::new(h, &x, &Quadratic)?,
            };
            let k = h.edges.iter().map(|e| e.vertices.len()).max().unwrap_or(1);
            let floors = h
                .edges
                .iter()
                .zip(&x.x)
                .map(|(e, v)| {
                    let ke = e.vertices.len();
                    v * match linear_alpha {
                        Some(a) => linear_bound(ke, *a),
                        None => theoretical_bound(ke),
                    }
                })
                .collect();
            let weights = h.weights();
            let tally = run_trials(h.n(), 0, spec.trials, spec.jobs, |t| {
                let m = r.round(&mut stream(seed, t));
                let feasible = m.is_valid(h);
                let weight = m.edges().iter().map(|e| weights[e]).sum();
                Trial { chosen: m.0, chances: vec![], weight, feasible }
            })?;
            (x, k, floors, tally, 0)
        }
        (Algorithm::Ufp(params), InstanceSource::Tree(net)) => {
            let x = match &spec.x {
                Some(x) => x.clone(),
                None => net.solve_lp()?,
            };
            let r = UfpRounder::new(net, &x, *params, seed)?;
            for &i in &r.calibration().flagged {
                flagged.push(format!("demand {i}: estimated eta below beta, keep clamped to 1"));
            }
            let k = net.paths().iter().map(Vec::len).max().unwrap_or(1);
            let floors = (0..net.num_demands()).map(|i| r.target(i)).collect();
            let weights = net.weights();
            let tally = run_trials(net.num_demands(), 0, spec.trials, spec.jobs, |t| {
                let routed = r.round(&mut stream(seed, t));
                let feasible = net.respects_capacity(&routed);
                let weight = routed.iter().map(|i| weights[i]).sum();
                Trial { chosen: routed, chances: vec![], weight, feasible }
            })?;
            (x, k, floors, tally, 0)
        }
        (alg, _) => return Err(mismatch(alg)),
    };
    Ok(build_report(spec, x, k, floors, tally, chances, flagged))
}

fn build_report(
    spec: &ExperimentSpec,
    x: FractionalSolution,
    k: usize,
    floors: Vec<f64>,
    tally: Tally,
    chances: usize,
    flagged: Vec<String>,
) -> RoundingReport {
    let n = spec.trials as f64;
    let items = tally
        .counts
        .iter()
        .enumerate()
        .map(|(j, &c)| {
            let freq = c as f64 / n;
            let floor: f64 = floors[j];
            ItemRow {
                index: j,
                x: x.x[j],
                freq,
                std_err: (freq * (1.0 - freq) / n).sqrt(),
                floor,
                ratio: (floor > 0.0).then(|| freq / floor),
            }
        })
        .collect();
    let mean = tally.weight_sum / n;
    let var = if spec.trials > 1 { ((tally.weight_sq - n * mean * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
    RoundingReport {
        algorithm: spec.algorithm.name().to_string(),
        seed: spec.seed,
        trials: spec.trials,
        k,
        lp_objective: x.objective,
        mean_objective: mean,
        objective_std_err: (var / n).sqrt(),
        violations: tally.violations.len() as u64,
        violation_trials: tally.violations,
        items,
        chance_freqs: (chances > 0).then(|| {
            tally.chance_counts.iter().map(|row| row.iter().map(|&c| c as f64 / n).collect()).collect()
        }),
        flagged,
    }
}

/// One point of a ratio trend: the worst normalized inclusion rate and the
/// LP-to-mean ratio at column sparsity `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendPoint {
    pub algorithm: String,
    pub k: usize,
    /// `min_j freq_j / floor_j`; the asymptotic guarantee says this tends to 1 or more.
    pub min_ratio: Option<f64>,
    /// `LP / mean objective`, compared against the leading term of the guarantee.
    pub lp_ratio: Option<f64>,
    /// Leading term of the guarantee: `2k`, `k` or `k_e`.
    pub leading_term: f64,
    pub violations: u64,
}

/// Ratio trend of the three asymptotic guarantees across column sparsities.
pub fn ratio_trend(ks: &[usize], trials: u64, seed: u64, jobs: usize) -> Result<Vec<TrendPoint>> {
    let mut out = Vec::new();
    for &k in ks {
        let inst = gen_random_kcs(3 * k, 2 * k, k, seed ^ k as u64)?;
        let spec = ExperimentSpec { jobs, ..ExperimentSpec::new(Algorithm::Kcspip(KcsParams::for_sparsity(k)), InstanceSource::Packing(inst), trials, seed) };
        let r = empirical_ratio(&spec)?;
        out.push(TrendPoint { algorithm: r.algorithm.clone(), k, min_ratio: r.min_ratio(), lp_ratio: r.lp_ratio(), leading_term: 2.0 * k as f64, violations: r.violations });

        let inst = gen_sksp_instance(3 * k, 2 * k, k, 2, seed ^ k as u64)?;
        let schedule = compute_schedule(default_chances(k), k as f64)?;
        let alg = Algorithm::Sksp { schedule, sim_budget: Some(50_000), attenuate_last: true };
        let spec = ExperimentSpec { jobs, ..ExperimentSpec::new(alg, InstanceSource::Stochastic(inst), trials, seed) };
        let r = empirical_ratio(&spec)?;
        out.push(TrendPoint { algorithm: r.algorithm.clone(), k, min_ratio: r.min_ratio(), lp_ratio: r.lp_ratio(), leading_term: k as f64, violations: r.violations });

        let h = uniform_hypergraph(2 * k, 3 * k, k, seed ^ k as u64)?;
        let spec = ExperimentSpec { jobs, ..ExperimentSpec::new(Algorithm::Hm { linear_alpha: None }, InstanceSource::Hyper(h), trials, seed) };
        let r = empirical_ratio(&spec)?;
        out.push(TrendPoint { algorithm: r.algorithm.clone(), k, min_ratio: r.min_ratio(), lp_ratio: r.lp_ratio(), leading_term: k as f64, violations: r.violations });
    }
    Ok(out)
}

/// `n` edges of exactly `k` vertices each on `m` vertices.
pub fn uniform_hypergraph(m: usize, n: usize, k: usize, seed: u64) -> Result<Hypergraph> {
    if k == 0 || k > m {
        return Err(Error::Param(format!("need 1 <= k <= m, got k = {k}, m = {m}")));
    }
    let mut rng = stream(seed, 0);
    let edges = (0..n)
        .map(|_| {
            let vertices: BTreeSet<usize> = sample(&mut rng, m, k).into_iter().collect();
            Edge { vertices: vertices.into_iter().collect(), weight: 1.0 - rng.gen::<f64>() }
        })
        .collect();
    Ok(Hypergraph::new(m, edges))
}

/// The BKNS parameters used by default: `alpha = 1` and the matching `ell`.
pub fn default_bkns(k: usize) -> Algorithm {
    Algorithm::Bkns { alpha: 1.0, ell: default_ell(k, 1.0) }
}
