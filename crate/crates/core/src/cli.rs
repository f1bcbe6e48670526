//! Command-line driver.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::json;

use crate::error::Result;
use crate::harness::{
    brute_force_opt, empirical_ratio, gen_gap_instance, gen_random_hypergraph, gen_random_kcs, gen_random_tree,
    gen_sksp_instance, Algorithm, ExperimentSpec, InstanceSource,
};
use crate::hypermatch::Hypergraph;
use crate::instance::{FractionalSolution, PackingInstance};
use crate::kcspip::{default_d, default_ell, KcsParams, KcsRounder};
use crate::lp::solve_packing_lp;
use crate::report::RoundingReport;
use crate::sksp::{compute_schedule, default_chances, SkspInstance};
use crate::ufptree::{optimize_alpha, TreeNetwork, UfpParams, DEFAULT_SIM_BUDGET};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_INTERNAL: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "packround", version, about = "Randomized rounding for packing programs")]
pub struct CliConfig {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the LP relaxation and print the fractional solution.
    SolveLp(SolveLpArgs),
    /// Run rounding trials and write a report.
    #[command(subcommand)]
    Round(RoundCommand),
    /// Generate an instance.
    #[command(subcommand)]
    Gen(GenCommand),
    /// Exact optimum or exact inclusion probabilities.
    #[command(subcommand)]
    Oracle(OracleCommand),
    /// Print the multi-chance schedule.
    Schedule(ScheduleArgs),
    /// Optimize the tree-flow balance over alpha.
    OptimizeUfp(OptimizeUfpArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Family {
    Packing,
    Sksp,
    Hyper,
    Tree,
}

#[derive(Debug, Args)]
pub struct Output {
    /// Write here instead of stdout.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SolveLpArgs {
    #[arg(long)]
    pub instance: PathBuf,
    #[arg(long, value_enum, default_value_t = Family::Packing)]
    pub family: Family,
    /// Skip the big-set strengthening rows (packing only).
    #[arg(long)]
    pub no_strengthen: bool,
    #[command(flatten)]
    pub out: Output,
}

#[derive(Debug, Args)]
pub struct TrialArgs {
    #[arg(long)]
    pub instance: PathBuf,
    /// Fractional solution JSON; the LP is solved when absent.
    #[arg(long)]
    pub x: Option<PathBuf>,
    #[arg(long, default_value_t = 10_000)]
    pub trials: u64,
    #[arg(long, env = "PACKROUND_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Also write the per-item table as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[command(flatten)]
    pub out: Output,
}

#[derive(Debug, Args)]
pub struct KcsArgs {
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub ell: Option<usize>,
    #[arg(long)]
    pub d: Option<usize>,
    /// Use the near-negative-correlation coloring with this epsilon.
    #[arg(long)]
    pub epsilon: Option<f64>,
}

impl KcsArgs {
    fn params(&self, k: usize) -> Result<KcsParams> {
        let base = KcsParams::for_sparsity(k);
        let alpha = self.alpha.unwrap_or(base.alpha);
        let p = KcsParams {
            alpha,
            ell: self.ell.unwrap_or_else(|| default_ell(k, alpha)),
            d: self.d.unwrap_or_else(|| default_d(alpha)),
            epsilon: self.epsilon,
        };
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Subcommand)]
pub enum RoundCommand {
    Kcspip {
        #[command(flatten)]
        trial: TrialArgs,
        #[command(flatten)]
        params: KcsArgs,
    },
    Bkns {
        #[command(flatten)]
        trial: TrialArgs,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long)]
        ell: Option<usize>,
    },
    Sksp {
        #[command(flatten)]
        trial: TrialArgs,
        /// Number of chances; defaults to max(1, ceil(ln k)).
        #[arg(long = "T")]
        chances: Option<usize>,
        /// Sparsity used by the schedule correction ("inf" for the limit schedule).
        #[arg(long)]
        k: Option<f64>,
        #[arg(long)]
        sim_budget: Option<u64>,
        /// Leave the last chance unattenuated.
        #[arg(long)]
        no_attenuate_last: bool,
    },
    Hm {
        #[command(flatten)]
        trial: TrialArgs,
        /// Use linear attenuation with this alpha instead of g.
        #[arg(long)]
        linear_alpha: Option<f64>,
    },
    Ufp {
        #[command(flatten)]
        trial: TrialArgs,
        /// Defaults to the balance-optimal alpha.
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long, default_value_t = DEFAULT_SIM_BUDGET)]
        sim_budget: u64,
    },
}

#[derive(Debug, Subcommand)]
pub enum GenCommand {
    Gap {
        #[arg(long)]
        k: usize,
        #[arg(long)]
        eps: f64,
        #[command(flatten)]
        out: Output,
    },
    Kcs {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        k: usize,
        #[arg(long, env = "PACKROUND_SEED", default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: Output,
    },
    Hyper {
        #[arg(long)]
        m: usize,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        k_max: usize,
        #[arg(long, env = "PACKROUND_SEED", default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: Output,
    },
    Sksp {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = 2)]
        scenarios: usize,
        #[arg(long, env = "PACKROUND_SEED", default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: Output,
    },
    Tree {
        #[arg(long)]
        vertices: usize,
        #[arg(long)]
        demands: usize,
        #[arg(long, default_value_t = 1)]
        max_cap: u32,
        #[arg(long, env = "PACKROUND_SEED", default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: Output,
    },
}

#[derive(Debug, Subcommand)]
pub enum OracleCommand {
    /// Exact optimum of a packing instance by enumeration.
    Opt {
        #[arg(long)]
        instance: PathBuf,
        #[command(flatten)]
        out: Output,
    },
    /// Exact inclusion probabilities of the alteration rounding.
    Inclusion {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        x: Option<PathBuf>,
        #[command(flatten)]
        params: KcsArgs,
        /// Also print pairwise joint inclusion probabilities.
        #[arg(long)]
        pairs: bool,
        #[command(flatten)]
        out: Output,
    },
}

#[derive(Debug, Args)]
pub struct ScheduleArgs {
    #[arg(long = "T")]
    pub chances: usize,
    /// Column sparsity ("inf" for the limit schedule).
    #[arg(long, default_value_t = f64::INFINITY)]
    pub k: f64,
    #[command(flatten)]
    pub out: Output,
}

#[derive(Debug, Args)]
pub struct OptimizeUfpArgs {
    #[arg(long, default_value_t = crate::ufptree::DEFAULT_GRID)]
    pub grid: f64,
    #[command(flatten)]
    pub out: Output,
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

fn emit<T: Serialize>(value: &T, out: &Output, stdout: &mut dyn Write) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match &out.output {
        Some(p) => fs::write(p, text)?,
        None => stdout.write_all(text.as_bytes())?,
    }
    Ok(())
}

fn load_x(path: &Option<PathBuf>) -> Result<Option<FractionalSolution>> {
    path.as_deref().map(read_json).transpose()
}

fn run_trials(
    algorithm: Algorithm,
    instance: InstanceSource,
    trial: &TrialArgs,
    stdout: &mut dyn Write,
) -> Result<RoundingReport> {
    let spec = ExperimentSpec {
        algorithm,
        instance,
        x: load_x(&trial.x)?,
        trials: trial.trials,
        seed: trial.seed,
        jobs: trial.jobs,
    };
    let report = empirical_ratio(&spec)?;
    emit(&report, &trial.out, stdout)?;
    if let Some(p) = &trial.csv {
        report.write_csv(fs::File::create(p)?)?;
    }
    Ok(report)
}

fn round(cmd: &RoundCommand, stdout: &mut dyn Write) -> Result<RoundingReport> {
    match cmd {
        RoundCommand::Kcspip { trial, params } => {
            let inst: PackingInstance = read_json(&trial.instance)?;
            inst.ensure_valid()?;
            let p = params.params(inst.sparsity())?;
            run_trials(Algorithm::Kcspip(p), InstanceSource::Packing(inst), trial, stdout)
        }
        RoundCommand::Bkns { trial, alpha, ell } => {
            let inst: PackingInstance = read_json(&trial.instance)?;
            inst.ensure_valid()?;
            let ell = ell.unwrap_or_else(|| default_ell(inst.sparsity(), *alpha));
            run_trials(Algorithm::Bkns { alpha: *alpha, ell }, InstanceSource::Packing(inst), trial, stdout)
        }
        RoundCommand::Sksp { trial, chances, k, sim_budget, no_attenuate_last } => {
            let inst: SkspInstance = read_json(&trial.instance)?;
            inst.ensure_valid()?;
            let sparsity = inst.sparsity();
            let t = chances.unwrap_or_else(|| default_chances(sparsity));
            let schedule = compute_schedule(t, k.unwrap_or(sparsity as f64))?;
            let alg = Algorithm::Sksp { schedule, sim_budget: *sim_budget, attenuate_last: !no_attenuate_last };
            run_trials(alg, InstanceSource::Stochastic(inst), trial, stdout)
        }
        RoundCommand::Hm { trial, linear_alpha } => {
            let h: Hypergraph = read_json(&trial.instance)?;
            run_trials(Algorithm::Hm { linear_alpha: *linear_alpha }, InstanceSource::Hyper(h), trial, stdout)
        }
        RoundCommand::Ufp { trial, alpha, sim_budget } => {
            let net: TreeNetwork = read_json(&trial.instance)?;
            let params = match alpha {
                Some(a) => UfpParams::from_alpha(*a, *sim_budget)?,
                None => UfpParams::optimal(*sim_budget)?,
            };
            run_trials(Algorithm::Ufp(params), InstanceSource::Tree(net), trial, stdout)
        }
    }
}

fn execute(config: &CliConfig, stdout: &mut dyn Write) -> Result<i32> {
    match &config.command {
        Command::SolveLp(a) => {
            let x = match a.family {
                Family::Packing => solve_packing_lp(&read_json(&a.instance)?, !a.no_strengthen)?,
                Family::Sksp => read_json::<SkspInstance>(&a.instance)?.solve_lp()?,
                Family::Hyper => read_json::<Hypergraph>(&a.instance)?.solve_lp()?,
                Family::Tree => read_json::<TreeNetwork>(&a.instance)?.solve_lp()?,
            };
            emit(&x, &a.out, stdout)?;
        }
        Command::Round(cmd) => {
            let report = round(cmd, stdout)?;
            if report.violations > 0 {
                return Ok(EXIT_INTERNAL);
            }
        }
        Command::Gen(cmd) => match cmd {
            GenCommand::Gap { k, eps, out } => emit(&gen_gap_instance(*k, *eps)?, out, stdout)?,
            GenCommand::Kcs { n, m, k, seed, out } => emit(&gen_random_kcs(*n, *m, *k, *seed)?, out, stdout)?,
            GenCommand::Hyper { m, n, k_max, seed, out } => {
                emit(&gen_random_hypergraph(*m, *n, *k_max, *seed)?, out, stdout)?
            }
            GenCommand::Sksp { n, m, k, scenarios, seed, out } => {
                emit(&gen_sksp_instance(*n, *m, *k, *scenarios, *seed)?, out, stdout)?
            }
            GenCommand::Tree { vertices, demands, max_cap, seed, out } => {
                emit(&gen_random_tree(*vertices, *demands, *max_cap, *seed)?, out, stdout)?
            }
        },
        Command::Oracle(OracleCommand::Opt { instance, out }) => {
            let inst: PackingInstance = read_json(instance)?;
            let (value, items) = brute_force_opt(&inst)?;
            emit(&json!({ "value": value, "items": items }), out, stdout)?;
        }
        Command::Oracle(OracleCommand::Inclusion { instance, x, params, pairs, out }) => {
            let inst: PackingInstance = read_json(instance)?;
            inst.ensure_valid()?;
            let x = match load_x(x)? {
                Some(x) => x,
                None => solve_packing_lp(&inst, true)?,
            };
            let r = KcsRounder::new(&inst, &x, params.params(inst.sparsity())?)?;
            let probs = r.exact_inclusion()?;
            let floor: Vec<f64> = x.x.iter().map(|v| v / (2.0 * r.k() as f64)).collect();
            let mut value = json!({ "x": x.x, "probabilities": probs, "floor": floor });
            if *pairs {
                value["pairs"] = json!(r.exact_pairs()?);
            }
            emit(&value, out, stdout)?;
        }
        Command::Schedule(a) => {
            let s = compute_schedule(a.chances, a.k)?;
            let total = s.total_beta();
            emit(&json!({ "alphas": s.alphas, "betas": s.betas, "total_beta": total }), &a.out, stdout)?;
        }
        Command::OptimizeUfp(a) => {
            let (alpha, balance) = optimize_alpha(a.grid)?;
            let beta = crate::ufptree::beta_of(alpha);
            emit(&json!({ "alpha": alpha, "beta": beta, "balance": balance, "inverse": 1.0 / balance }), &a.out, stdout)?;
        }
    }
    Ok(EXIT_OK)
}

/// Parses `args` (program name first), runs the command and returns the exit code:
/// 0 on success, 1 on usage or validation errors, 2 if a rounded output
/// violated a capacity.
pub fn run_cli<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let config = match CliConfig::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let informational = matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion);
            let text = e.render().to_string();
            let _ = if informational { stdout.write_all(text.as_bytes()) } else { stderr.write_all(text.as_bytes()) };
            return if informational { EXIT_OK } else { EXIT_INVALID };
        }
    };
    match execute(&config, stdout) {
        Ok(code) => {
            if code == EXIT_INTERNAL {
                let _ = writeln!(stderr, "error: a rounded output violated a capacity");
            }
            code
        }
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            EXIT_INVALID
        }
    }
}
