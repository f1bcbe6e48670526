//! Python bindings for `packround`.

use packround::harness::{
    brute_force_opt, empirical_ratio, gen_gap_instance, gen_random_hypergraph, gen_random_kcs, gen_random_tree,
    gen_sksp_instance, Algorithm, ExperimentSpec, InstanceSource,
};
use packround::hypermatch::{attenuation_g, theoretical_bound, Hypergraph};
use packround::kcspip::{BknsRounder, KcsParams, KcsRounder};
use packround::lp::solve_packing_lp;
use packround::report::RoundingReport;
use packround::rng::stream;
use packround::sksp::{compute_schedule, default_chances, gamma_sequence, SkspInstance};
use packround::ufptree::{optimize_alpha, TreeNetwork, UfpParams, DEFAULT_SIM_BUDGET};
use packround::{Error, FractionalSolution};
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyOSError::new_err(e.to_string()),
        Error::Attenuation { .. } | Error::Estimate { .. } | Error::Degree { .. } => PyRuntimeError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn json_err(e: serde_json::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// A packing program with columns `[(row, coefficient), ...]`.
#[pyclass(name = "PackingInstance", frozen)]
struct PyPackingInstance {
    inner: packround::PackingInstance,
}

#[pymethods]
impl PyPackingInstance {
    #[new]
    #[pyo3(signature = (m, weights, columns, capacities=None))]
    fn new(m: usize, weights: Vec<f64>, columns: Vec<Vec<(usize, f64)>>, capacities: Option<Vec<f64>>) -> PyResult<Self> {
        let inner = packround::PackingInstance::new(m, capacities.unwrap_or_else(|| vec![1.0; m]), weights, columns);
        inner.ensure_valid().map_err(to_py)?;
        Ok(PyPackingInstance { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner: packround::PackingInstance = serde_json::from_str(text).map_err(json_err)?;
        inner.ensure_valid().map_err(to_py)?;
        Ok(PyPackingInstance { inner })
    }

    /// The integrality-gap family with `n = m = 2k - 1`.
    #[staticmethod]
    fn gap(k: usize, eps: f64) -> PyResult<Self> {
        Ok(PyPackingInstance { inner: gen_gap_instance(k, eps).map_err(to_py)? })
    }

    #[staticmethod]
    #[pyo3(signature = (n, m, k, seed=0))]
    fn random(n: usize, m: usize, k: usize, seed: u64) -> PyResult<Self> {
        Ok(PyPackingInstance { inner: gen_random_kcs(n, m, k, seed).map_err(to_py)? })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(json_err)
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m()
    }

    /// Column sparsity (the declared one if present).
    #[getter]
    fn k(&self) -> usize {
        self.inner.sparsity()
    }

    fn is_feasible(&self, items: Vec<usize>) -> bool {
        packround::check_feasible(&self.inner, &items.into_iter().collect())
    }

    /// Returns `(x, objective)`.
    #[pyo3(signature = (strengthen=true))]
    fn solve_lp(&self, py: Python<'_>, strengthen: bool) -> PyResult<(Vec<f64>, f64)> {
        let sol = py.detach(|| solve_packing_lp(&self.inner, strengthen)).map_err(to_py)?;
        Ok((sol.x, sol.objective))
    }

    /// Exact optimum by enumeration: `(value, items)`.
    fn brute_force_opt(&self, py: Python<'_>) -> PyResult<(f64, Vec<usize>)> {
        let (v, set) = py.detach(|| brute_force_opt(&self.inner)).map_err(to_py)?;
        Ok((v, set.as_slice().to_vec()))
    }

    /// Exact `Pr[j in R_F]` of the alteration rounding at `x` (strengthened LP optimum if omitted).
    #[pyo3(signature = (x=None, alpha=None, epsilon=None))]
    fn exact_inclusion(&self, py: Python<'_>, x: Option<Vec<f64>>, alpha: Option<f64>, epsilon: Option<f64>) -> PyResult<Vec<f64>> {
        let x = self.point(x)?;
        let params = kcs_params(self.inner.sparsity(), alpha, epsilon)?;
        py.detach(|| KcsRounder::new(&self.inner, &x, params)?.exact_inclusion()).map_err(to_py)
    }

    /// One run of the alteration rounding (trial `trial` of `seed`).
    #[pyo3(signature = (x=None, seed=0, trial=0, alpha=None, epsilon=None))]
    fn round_kcspip(&self, x: Option<Vec<f64>>, seed: u64, trial: u64, alpha: Option<f64>, epsilon: Option<f64>) -> PyResult<Vec<usize>> {
        let x = self.point(x)?;
        let params = kcs_params(self.inner.sparsity(), alpha, epsilon)?;
        let r = KcsRounder::new(&self.inner, &x, params).map_err(to_py)?;
        Ok(r.round(&mut stream(seed, trial)).as_slice().to_vec())
    }

    /// One run of the deterministic-alteration baseline.
    #[pyo3(signature = (x=None, seed=0, trial=0, alpha=1.0, ell=None))]
    fn round_bkns(&self, x: Option<Vec<f64>>, seed: u64, trial: u64, alpha: f64, ell: Option<usize>) -> PyResult<Vec<usize>> {
        let x = self.point(x)?;
        let ell = ell.unwrap_or_else(|| packround::kcspip::default_ell(self.inner.sparsity(), alpha));
        let r = BknsRounder::new(&self.inner, &x, alpha, ell).map_err(to_py)?;
        Ok(r.round(&mut stream(seed, trial)).as_slice().to_vec())
    }

    fn __repr__(&self) -> String {
        format!("PackingInstance(n={}, m={}, k={})", self.inner.n(), self.inner.m(), self.inner.sparsity())
    }
}

impl PyPackingInstance {
    fn point(&self, x: Option<Vec<f64>>) -> PyResult<FractionalSolution> {
        match x {
            Some(x) => Ok(FractionalSolution::new(x, self.inner.weights())),
            None => solve_packing_lp(&self.inner, true).map_err(to_py),
        }
    }
}

fn kcs_params(k: usize, alpha: Option<f64>, epsilon: Option<f64>) -> PyResult<KcsParams> {
    let mut p = KcsParams::for_sparsity(k);
    if let Some(a) = alpha {
        p.alpha = a;
        p.ell = packround::kcspip::default_ell(k, a);
        p.d = packround::kcspip::default_d(a);
    }
    p.epsilon = epsilon;
    p.validate().map_err(to_py)?;
    Ok(p)
}

/// Result of a trial experiment.
#[pyclass(name = "Report", frozen)]
struct PyReport {
    inner: RoundingReport,
}

#[pymethods]
impl PyReport {
    #[getter]
    fn algorithm(&self) -> &str {
        &self.inner.algorithm
    }

    #[getter]
    fn trials(&self) -> u64 {
        self.inner.trials
    }

    #[getter]
    fn k(&self) -> usize {
        self.inner.k
    }

    #[getter]
    fn violations(&self) -> u64 {
        self.inner.violations
    }

    #[getter]
    fn lp_objective(&self) -> f64 {
        self.inner.lp_objective
    }

    #[getter]
    fn mean_objective(&self) -> f64 {
        self.inner.mean_objective
    }

    #[getter]
    fn frequencies(&self) -> Vec<f64> {
        self.inner.items.iter().map(|r| r.freq).collect()
    }

    #[getter]
    fn floors(&self) -> Vec<f64> {
        self.inner.items.iter().map(|r| r.floor).collect()
    }

    #[getter]
    fn chance_frequencies(&self) -> Option<Vec<Vec<f64>>> {
        self.inner.chance_freqs.clone()
    }

    #[getter]
    fn flagged(&self) -> Vec<String> {
        self.inner.flagged.clone()
    }

    fn lp_ratio(&self) -> Option<f64> {
        self.inner.lp_ratio()
    }

    fn min_ratio(&self) -> Option<f64> {
        self.inner.min_ratio()
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!(
            "Report(algorithm={:?}, trials={}, violations={}, mean_objective={:.4})",
            self.inner.algorithm, self.inner.trials, self.inner.violations, self.inner.mean_objective
        )
    }
}

/// Runs `trials` trials of `algorithm` (`kcspip`, `bkns`, `sksp`, `hm`, `ufp`)
/// on an instance given as JSON.
#[pyfunction]
#[pyo3(signature = (algorithm, instance_json, trials=10_000, seed=0, jobs=1, x=None, alpha=None, chances=None, sim_budget=None))]
#[allow(clippy::too_many_arguments)]
fn run_experiment(
    py: Python<'_>,
    algorithm: &str,
    instance_json: &str,
    trials: u64,
    seed: u64,
    jobs: usize,
    x: Option<Vec<f64>>,
    alpha: Option<f64>,
    chances: Option<usize>,
    sim_budget: Option<u64>,
) -> PyResult<PyReport> {
    let (alg, instance, weights) = match algorithm {
        "kcspip" | "bkns" => {
            let inst: packround::PackingInstance = serde_json::from_str(instance_json).map_err(json_err)?;
            inst.ensure_valid().map_err(to_py)?;
            let k = inst.sparsity();
            let alg = if algorithm == "kcspip" {
                Algorithm::Kcspip(kcs_params(k, alpha, None)?)
            } else {
                let a = alpha.unwrap_or(1.0);
                Algorithm::Bkns { alpha: a, ell: packround::kcspip::default_ell(k, a) }
            };
            let w = inst.weights().to_vec();
            (alg, InstanceSource::Packing(inst), w)
        }
        "sksp" => {
            let inst: SkspInstance = serde_json::from_str(instance_json).map_err(json_err)?;
            inst.ensure_valid().map_err(to_py)?;
            let k = inst.sparsity();
            let schedule = compute_schedule(chances.unwrap_or_else(|| default_chances(k)), k as f64).map_err(to_py)?;
            let w = inst.weights();
            (Algorithm::Sksp { schedule, sim_budget, attenuate_last: true }, InstanceSource::Stochastic(inst), w)
        }
        "hm" => {
            let h: Hypergraph = serde_json::from_str(instance_json).map_err(json_err)?;
            let w = h.weights();
            (Algorithm::Hm { linear_alpha: alpha }, InstanceSource::Hyper(h), w)
        }
        "ufp" => {
            let net: TreeNetwork = serde_json::from_str(instance_json).map_err(json_err)?;
            let budget = sim_budget.unwrap_or(DEFAULT_SIM_BUDGET);
            let params = match alpha {
                Some(a) => UfpParams::from_alpha(a, budget),
                None => UfpParams::optimal(budget),
            }
            .map_err(to_py)?;
            let w = net.weights();
            (Algorithm::Ufp(params), InstanceSource::Tree(net), w)
        }
        other => return Err(PyValueError::new_err(format!("unknown algorithm {other:?}"))),
    };
    let spec = ExperimentSpec { algorithm: alg, instance, x: x.map(|x| FractionalSolution::new(x, &weights)), trials, seed, jobs };
    let inner = py.detach(|| empirical_ratio(&spec)).map_err(to_py)?;
    Ok(PyReport { inner })
}

/// Instance JSON for one of the families `kcs`, `hyper`, `sksp`, `tree`.
#[pyfunction]
#[pyo3(signature = (family, n, m, k, seed=0))]
fn generate(family: &str, n: usize, m: usize, k: usize, seed: u64) -> PyResult<String> {
    let text = match family {
        "kcs" => serde_json::to_string(&gen_random_kcs(n, m, k, seed).map_err(to_py)?),
        "hyper" => serde_json::to_string(&gen_random_hypergraph(m, n, k, seed).map_err(to_py)?),
        "sksp" => serde_json::to_string(&gen_sksp_instance(n, m, k, 2, seed).map_err(to_py)?),
        // for trees: n demands, m vertices, k the largest edge capacity
        "tree" => serde_json::to_string(&gen_random_tree(m, n, k as u32, seed).map_err(to_py)?),
        other => return Err(PyValueError::new_err(format!("unknown family {other:?}"))),
    };
    text.map_err(json_err)
}

/// `(alphas, betas)` of the `T`-chance schedule; `k=float("inf")` gives the limit.
#[pyfunction]
#[pyo3(name = "compute_schedule")]
fn py_compute_schedule(t: usize, k: f64) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let s = compute_schedule(t, k).map_err(to_py)?;
    Ok((s.alphas, s.betas))
}

#[pyfunction]
#[pyo3(name = "gamma_sequence")]
fn py_gamma_sequence(t: usize) -> Vec<f64> {
    gamma_sequence(t)
}

#[pyfunction]
#[pyo3(name = "attenuation_g")]
fn py_attenuation_g(x: f64) -> PyResult<f64> {
    attenuation_g(x).map_err(to_py)
}

#[pyfunction]
#[pyo3(name = "theoretical_bound")]
fn py_theoretical_bound(k_e: usize) -> f64 {
    theoretical_bound(k_e)
}

/// `(alpha, balance)` maximizing the tree-flow balance on a grid.
#[pyfunction]
#[pyo3(name = "optimize_alpha", signature = (grid=1e-6))]
fn py_optimize_alpha(grid: f64) -> PyResult<(f64, f64)> {
    optimize_alpha(grid).map_err(to_py)
}

#[pymodule]
fn packround_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPackingInstance>()?;
    m.add_class::<PyReport>()?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(py_compute_schedule, m)?)?;
    m.add_function(wrap_pyfunction!(py_gamma_sequence, m)?)?;
    m.add_function(wrap_pyfunction!(py_attenuation_g, m)?)?;
    m.add_function(wrap_pyfunction!(py_theoretical_bound, m)?)?;
    m.add_function(wrap_pyfunction!(py_optimize_alpha, m)?)?;
    Ok(())
}
