//! Acceptance suite: one line per criterion, nonzero exit if any fails.
//!
//! Run with `cargo test -p packround --test acceptance`.

use std::time::{Duration, Instant};

use packround::graphcolor::{color_directed_graph, verify_coloring, DiGraph};
use packround::harness::{
    brute_force_opt, brute_force_opt_with_limit, gen_gap_instance, gen_random_kcs, gen_random_tree, ratio_trend,
};
use packround::hypermatch::{adversarial_star, theoretical_bound, MatchingRounder, Quadratic};
use packround::kcspip::{KcsParams, KcsRounder};
use packround::lp::solve_packing_lp;
use packround::rng::stream;
use packround::sksp::{compute_schedule, gamma_sequence, MultichanceConfig, MultichanceRounder, SkspInstance, StochasticItem};
use packround::ufptree::{optimize_alpha, Demand, TreeNetwork, UfpParams, UfpRounder};
use packround::{check_feasible, FractionalSolution, ItemSet, PackingInstance};
use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Sums per-trial count vectors over `trials` trials in fixed blocks.
fn tally<F>(trials: u64, width: usize, f: F) -> Vec<u64>
where
    F: Fn(u64, &mut [u64]) + Sync,
{
    const BLOCK: u64 = 4096;
    (0..trials.div_ceil(BLOCK))
        .into_par_iter()
        .map(|b| {
            let mut acc = vec![0u64; width];
            for t in b * BLOCK..((b + 1) * BLOCK).min(trials) {
                f(t, &mut acc);
            }
            acc
        })
        .reduce(|| vec![0u64; width], |mut a, b| {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
            a
        })
}

fn binomial_sigma(p: f64, n: u64) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

fn random_digraph(seed: u64) -> (DiGraph, usize) {
    let mut rng = stream(seed, 0);
    let n = rng.gen_range(1..=200);
    let d = rng.gen_range(1..=8);
    let out = (0..n)
        .map(|v| {
            let deg = rng.gen_range(0..=d.min(n - 1));
            sample(&mut rng, n - 1, deg).into_iter().map(|u| if u >= v { u + 1 } else { u }).collect()
        })
        .collect();
    (DiGraph::new(out).unwrap(), d)
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let graphs = 10_000u64;
    let failures: u64 = (0..graphs)
        .into_par_iter()
        .map(|s| {
            let (g, d) = random_digraph(1_000 + s);
            match color_directed_graph(&g, d) {
                Ok(chi) if verify_coloring(&g, &chi) && chi.palette <= 2 * d + 1 && chi.colors.iter().all(|&c| c < 2 * d + 1) => 0,
                _ => 1,
            }
        })
        .sum();
    let took = start.elapsed();
    outcome(failures == 0 && took < Duration::from_secs(10), format!("{graphs} digraphs, {failures} failures, {took:.2?} (limit 10s)"))
}

fn kcs_violations(inst: &PackingInstance, trials: u64, seed: u64) -> u64 {
    let x = solve_packing_lp(inst, true).unwrap();
    let r = KcsRounder::new(inst, &x, KcsParams::for_sparsity(inst.sparsity())).unwrap();
    tally(trials, 1, |t, acc| {
        if !check_feasible(inst, &r.round(&mut stream(seed, t))) {
            acc[0] += 1;
        }
    })[0]
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut violations = 0;
    for s in 0..50u64 {
        let k = 2 + (s as usize % 5);
        let inst = gen_random_kcs(30, 12, k, 2_000 + s).unwrap();
        violations += kcs_violations(&inst, 10_000, s);
    }
    for k in [2, 5, 10, 20] {
        violations += kcs_violations(&gen_gap_instance(k, 1e-7).unwrap(), 10_000, k as u64);
    }
    let took = start.elapsed();
    outcome(violations == 0 && took < Duration::from_secs(60), format!("54 instances x 10^4 trials, {violations} violations, {took:.2?} (limit 60s)"))
}

fn small_instance(s: u64) -> PackingInstance {
    let mut rng = stream(3_000 + s, 1);
    let n = rng.gen_range(3..=6);
    let k = rng.gen_range(2..=3);
    gen_random_kcs(n, k + rng.gen_range(0..=2), k, 3_000 + s).unwrap()
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let trials = 1_000_000u64;
    let mut worst = 0.0f64;
    let mut bad = 0;
    for s in 0..20u64 {
        let inst = small_instance(s);
        let x = solve_packing_lp(&inst, true).unwrap();
        let r = KcsRounder::new(&inst, &x, KcsParams::for_sparsity(inst.sparsity())).unwrap();
        let exact = r.exact_inclusion().unwrap();
        let counts = tally(trials, inst.n(), |t, acc| {
            for j in r.round(&mut stream(s, t)).iter() {
                acc[j] += 1;
            }
        });
        for (p, &c) in exact.iter().zip(&counts) {
            let freq = c as f64 / trials as f64;
            let sigma = binomial_sigma(*p, trials);
            let z = if sigma > 0.0 { (freq - p).abs() / sigma } else if freq == *p { 0.0 } else { f64::INFINITY };
            worst = worst.max(z);
            if z > 4.0 {
                bad += 1;
            }
        }
    }
    let took = start.elapsed();
    outcome(bad == 0 && took < Duration::from_secs(300), format!("20 instances, worst deviation {worst:.2} sigma (limit 4), {took:.2?} (limit 5 min)"))
}

fn criterion_4() -> Outcome {
    let k = 20;
    let inst = gen_gap_instance(k, 1e-7).unwrap();
    let x = FractionalSolution::new(vec![1.0 - k as f64 * 1e-7; inst.n()], inst.weights());
    let r = KcsRounder::new(&inst, &x, KcsParams::for_sparsity(k)).unwrap();
    let trials = 10_000u64;
    let small = tally(trials, 1, |t, acc| {
        if r.round(&mut stream(4, t)).len() <= 1 {
            acc[0] += 1;
        }
    })[0];
    let frac = small as f64 / trials as f64;
    let (opt, _) = brute_force_opt_with_limit(&inst, inst.n()).unwrap();
    let small_opts = [2, 5, 10].iter().all(|&k| brute_force_opt(&gen_gap_instance(k, 1e-7).unwrap()).unwrap().0 == 1.0);
    outcome(
        frac > 0.95 && opt == 1.0 && small_opts,
        format!("k = 20: Pr[|R_F| <= 1] = {frac:.4} (need > 0.95), optimum {opt} (n = 39 with the size cap lifted), optimum 1 for k = 2, 5, 10: {small_opts}"),
    )
}

fn criterion_5() -> Outcome {
    let mut pairs = 0u64;
    let mut failures = Vec::new();
    for s in 0..20u64 {
        let inst = small_instance(s);
        let x = solve_packing_lp(&inst, true).unwrap();
        let r = KcsRounder::new(&inst, &x, KcsParams::for_sparsity(inst.sparsity())).unwrap();
        let n = inst.n();
        let cond: Vec<Vec<f64>> = (0u64..1 << n).map(|m| r.conditional_inclusion(&ItemSet::from_mask(m))).collect();
        for a2 in 0u64..1 << n {
            // every subset a1 of a2
            let mut a1 = a2;
            loop {
                for j in (0..n).filter(|&j| a1 >> j & 1 == 1) {
                    pairs += 1;
                    if cond[a1 as usize][j] < cond[a2 as usize][j] - 1e-12 {
                        failures.push((s, a1, a2, j));
                    }
                }
                if a1 == 0 {
                    break;
                }
                a1 = (a1 - 1) & a2;
            }
        }
    }
    let first = failures.first().map(|f| format!(", first: instance {}, A1 = {:#b}, A2 = {:#b}, item {}", f.0, f.1, f.2, f.3)).unwrap_or_default();
    outcome(failures.is_empty(), format!("{pairs} nested pairs on 20 instances, {} failures{first}", failures.len()))
}

fn criterion_6() -> Outcome {
    let mut checked = 0u64;
    let mut worst_excess = f64::NEG_INFINITY;
    for s in 0..12u64 {
        for eps in [0.3, 0.5] {
            let mut rng = stream(6_000 + s, 1);
            let n = rng.gen_range(4..=8);
            let k = rng.gen_range(2..=4);
            let inst = gen_random_kcs(n, k + rng.gen_range(0..=2), k, 6_000 + s).unwrap();
            let x = solve_packing_lp(&inst, true).unwrap();
            let params = KcsParams::for_sparsity(k).with_epsilon(eps);
            let r = KcsRounder::new(&inst, &x, params).unwrap();
            let joint = r.exact_pairs().unwrap();
            let scale = 2.0 * (params.d as f64).powf(eps);
            let kk = 2.0 * k as f64;
            for u in 0..n {
                for v in 0..n {
                    if u != v {
                        let bound = scale * (x.x[u] / kk) * (x.x[v] / kk);
                        worst_excess = worst_excess.max(joint[u][v] - bound);
                        checked += 1;
                    }
                }
            }
        }
    }
    outcome(worst_excess <= 1e-9, format!("{checked} ordered pairs, largest joint minus bound {worst_excess:.3e} (tolerance 1e-9)"))
}

fn criterion_7() -> Outcome {
    let s = compute_schedule(2, f64::INFINITY).unwrap();
    let exact = s.alphas == [1.0, 0.5] && s.betas == [0.5, 0.125];
    let g = gamma_sequence(20);
    let early = [(0, 0.5), (1, 0.625), (2, 89.0 / 128.0)].iter().all(|&(i, v)| (g[i] - v).abs() < 1e-12);
    let monotone = g.windows(2).all(|w| w[0] < w[1]) && g.iter().all(|&v| v <= 1.0);
    let reach = g[19] > 0.95;
    let first = gamma_sequence(200).iter().position(|&v| v > 0.95).map(|i| i + 1);
    outcome(
        exact && early && monotone && reach,
        format!(
            "schedule exact: {exact}, gamma_1..3 exact: {early}, monotone and <= 1: {monotone}, gamma_20 = {:.5} (need > 0.95; first exceeds 0.95 at T = {})",
            g[19],
            first.map_or("never".into(), |t| t.to_string())
        ),
    )
}

fn criterion_8() -> Outcome {
    // six items on a cycle of six unit rows, item j using rows j and j+1
    let inst = SkspInstance::new(
        vec![1.0; 6],
        (0..6).map(|j| StochasticItem::deterministic(vec![j, (j + 1) % 6], 1.0)).collect(),
    );
    let x = FractionalSolution::new(vec![0.5; 6], &inst.weights());
    let schedule = compute_schedule(2, f64::INFINITY).unwrap();
    let config = MultichanceConfig { sim_budget: Some(10_000_000), attenuate_last: true, seed: 8 };
    let r = MultichanceRounder::new(&inst, &x, &schedule, config).unwrap();
    let trials = 1_000_000u64;
    // slots 0..12: per-chance counts; 12: trials with a repeated item; 13: capacity violations
    let counts = tally(trials, 14, |t, acc| {
        let out = r.round(&mut stream(8, t));
        let mut seen = [false; 6];
        let mut repeat = false;
        for a in &out.added {
            acc[a.chance * 6 + a.item] += 1;
            repeat |= std::mem::replace(&mut seen[a.item], true);
        }
        acc[12] += u64::from(repeat);
        acc[13] += u64::from(!out.within_capacity(&inst.capacities));
    });
    let k = inst.sparsity() as f64;
    let mut worst = 0.0f64;
    for t in 0..2 {
        for j in 0..6 {
            let target = schedule.betas[t] * x.x[j] / k;
            let freq = counts[t * 6 + j] as f64 / trials as f64;
            worst = worst.max((freq - target).abs() / binomial_sigma(target, trials));
        }
    }
    outcome(
        worst <= 3.0 && counts[12] == 0 && counts[13] == 0,
        format!("worst per-chance deviation {worst:.2} sigma (limit 3), {} trials adding an item twice, {} capacity violations", counts[12], counts[13]),
    )
}

fn criterion_9() -> Outcome {
    let trials = 1_000_000u64;
    let mut lines = Vec::new();
    let mut pass = true;
    for k_e in [2, 3, 5] {
        let (h, x) = adversarial_star(k_e, 0.01, 0.01).unwrap();
        let r = MatchingRounder::new(&h, &x, &Quadratic).unwrap();
        let counts = tally(trials, 2, |t, acc| {
            let m = r.round(&mut stream(9 + k_e as u64, t));
            acc[0] += u64::from(m.contains(0));
            acc[1] += u64::from(!m.is_valid(&h));
        });
        let freq = counts[0] as f64 / trials as f64;
        let ratio = freq / x.x[0];
        let sigma = binomial_sigma(freq, trials) / x.x[0];
        let bound = theoretical_bound(k_e);
        pass &= ratio >= bound - 3.0 * sigma && counts[1] == 0;
        lines.push(format!("k_e = {k_e}: {ratio:.4} vs {bound:.4} (3 sigma = {:.4}), {} invalid", 3.0 * sigma, counts[1]));
    }
    outcome(pass, lines.join("; "))
}

fn criterion_10() -> Outcome {
    let (alpha_star, balance) = optimize_alpha(1e-6).unwrap();
    let balance_ok = (balance - 0.12270).abs() <= 1e-3;

    let params = UfpParams::from_alpha(0.1, 20_000).unwrap();
    let mut violations = 0;
    for s in 0..20u64 {
        let net = gen_random_tree(30, 20, 2, 10_000 + s).unwrap();
        let x = net.solve_lp().unwrap();
        let r = UfpRounder::new(&net, &x, params, s).unwrap();
        violations += tally(100_000, 1, |t, acc| {
            acc[0] += u64::from(!net.respects_capacity(&r.round(&mut stream(s, t))));
        })[0];
    }

    let single = TreeNetwork {
        parent: vec![None, Some(0), Some(1), Some(0)],
        root: 0,
        edge_capacity: vec![0.0, 1.0, 1.0, 1.0],
        demands: vec![Demand { s: 2, t: 3, w: 1.0 }],
    };
    let x = FractionalSolution::new(vec![0.8], &[1.0]);
    let r = UfpRounder::new(&single, &x, params, 10).unwrap();
    let trials = 1_000_000u64;
    let hits = tally(trials, 1, |t, acc| acc[0] += r.round(&mut stream(10, t)).len() as u64)[0];
    let target = params.alpha * params.beta * 0.8;
    let z = (hits as f64 / trials as f64 - target).abs() / binomial_sigma(target, trials);
    outcome(
        balance_ok && violations == 0 && z <= 3.0,
        format!(
            "alpha* = {alpha_star:.6}, balance {balance:.5} (need within 1e-3 of 0.12270), {violations} capacity violations in 20 x 10^5 trials, single demand {z:.2} sigma from alpha beta x (limit 3)"
        ),
    )
}

fn criterion_11() -> Outcome {
    let start = Instant::now();
    match ratio_trend(&[5, 10, 20, 40], 2_000, 11, 4) {
        Ok(points) => {
            let violations: u64 = points.iter().map(|p| p.violations).sum();
            let trend = points
                .iter()
                .map(|p| {
                    format!(
                        "{} k={} lp/mean={} min freq/floor={} (leading {})",
                        p.algorithm,
                        p.k,
                        p.lp_ratio.map_or("-".into(), |v| format!("{v:.2}")),
                        p.min_ratio.map_or("-".into(), |v| format!("{v:.2}")),
                        p.leading_term
                    )
                })
                .collect::<Vec<_>>()
                .join(", ");
            outcome(violations == 0, format!("trend reported, {violations} violations, {:.2?}: {trend}", start.elapsed()))
        }
        Err(e) => outcome(false, format!("trend failed: {e}")),
    }
}

fn main() {
    // `cargo test` passes harness flags such as `--nocapture`; listing must not run the suite.
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let criteria: [(usize, fn() -> Outcome); 11] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
        (10, criterion_10),
        (11, criterion_11),
    ];
    // ACCEPTANCE_ONLY=3,8 runs a subset
    let only: Option<Vec<usize>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|p| p.trim().parse().ok()).collect());
    let mut failed = Vec::new();
    for (n, run) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&n)) {
            continue;
        }
        let o = run();
        println!("criterion {n:>2}: {} | {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed.push(n);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all selected criteria pass");
    } else {
        println!("acceptance: failing criteria {failed:?}");
        std::process::exit(1);
    }
}
