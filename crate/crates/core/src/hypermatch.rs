//! Hypergraph matching by marking and random-order greedy.
//!
//! Each edge is marked independently with probability `g(x_e)`; the marked
//! edges are visited in the order of i.i.d. uniform keys (ties by edge index)
//! and an edge joins the matching when all of its vertices are still free.
//! `g(x) = alpha x` is the linear baseline, `g(x) = x (1 - x/2)` the
//! non-uniform choice.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{FractionalSolution, ItemSet, ValidationReport, Violation, CAPACITY_TOL};
use crate::lp::LpModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub vertices: Vec<usize>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hypergraph {
    pub m: usize,
    pub edges: Vec<Edge>,
}

impl Hypergraph {
    pub fn new(m: usize, edges: Vec<Edge>) -> Self {
        Hypergraph { m, edges }
    }

    pub fn n(&self) -> usize {
        self.edges.len()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.edges.iter().map(|e| e.weight).collect()
    }

    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        for (item, e) in self.edges.iter().enumerate() {
            if e.vertices.is_empty() {
                report.push(Violation::Malformed(format!("edge {item} has no vertices")));
            }
            for (pos, &v) in e.vertices.iter().enumerate() {
                if v >= self.m {
                    report.push(Violation::RowOutOfRange { item, row: v });
                } else if e.vertices[..pos].contains(&v) {
                    report.push(Violation::DuplicateRow { item, row: v });
                }
            }
            if !(e.weight.is_finite() && e.weight >= 0.0) {
                report.push(Violation::BadWeight { item, value: e.weight });
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

    /// `max w.x  s.t.  sum_{e containing v} x_e <= 1, 0 <= x <= 1`.
    pub fn lp_model(&self) -> LpModel {
        let columns: Vec<Vec<(usize, f64)>> = self
            .edges
            .iter()
            .map(|e| e.vertices.iter().map(|&v| (v, 1.0)).collect())
            .collect();
        LpModel::from_columns(self.weights(), &vec![1.0; self.m], &columns)
    }

    pub fn solve_lp(&self) -> Result<FractionalSolution> {
        self.ensure_valid()?;
        let model = self.lp_model();
        let x = model.solve()?;
        debug_assert!(model.is_feasible(&x, CAPACITY_TOL));
        Ok(FractionalSolution::new(x, &self.weights()))
    }
}

/// A set of pairwise vertex-disjoint edges.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Matching(pub ItemSet);

impl Matching {
    pub fn edges(&self) -> &ItemSet {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, e: usize) -> bool {
        self.0.contains(e)
    }

    /// True iff no two chosen edges share a vertex.
    pub fn is_valid(&self, h: &Hypergraph) -> bool {
        let mut used = vec![false; h.m];
        for e in self.0.iter() {
            for &v in &h.edges[e].vertices {
                if std::mem::replace(&mut used[v], true) {
                    return false;
                }
            }
        }
        true
    }
}

/// Marking probability as a function of the LP value.
pub trait Attenuation: Sync {
    fn mark_prob(&self, x: f64) -> f64;
}

/// `g(x) = x (1 - x/2)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Quadratic;

impl Attenuation for Quadratic {
    fn mark_prob(&self, x: f64) -> f64 {
        x * (1.0 - x / 2.0)
    }
}

/// `g(x) = alpha x`.
#[derive(Debug, Clone, Copy)]
pub struct Linear(pub f64);

impl Attenuation for Linear {
    fn mark_prob(&self, x: f64) -> f64 {
        self.0 * x
    }
}

impl<F: Fn(f64) -> f64 + Sync> Attenuation for F {
    fn mark_prob(&self, x: f64) -> f64 {
        self(x)
    }
}

/// `x (1 - x/2)` on `[0,1]`.
pub fn attenuation_g(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::Domain(format!("attenuation_g needs x in [0,1], got {x}")));
    }
    Ok(Quadratic.mark_prob(x))
}

/// `(1 - e^{-k}) / k`.
pub fn theoretical_bound(k_e: usize) -> f64 {
    assert!(k_e >= 1, "edges have at least one vertex");
    let k = k_e as f64;
    -(-k).exp_m1() / k
}

/// `(1 - (1 - alpha)^{k+1}) / (k + 1)`, the per-`x_e` floor of the linear scheme.
pub fn linear_bound(k_e: usize, alpha: f64) -> f64 {
    let k1 = k_e as f64 + 1.0;
    (1.0 - (1.0 - alpha).powf(k1)) / k1
}

/// Marking probabilities fixed for one hypergraph and LP point.
#[derive(Debug, Clone)]
pub struct MatchingRounder<'a> {
    h: &'a Hypergraph,
    probs: Vec<f64>,
}

impl<'a> MatchingRounder<'a> {
    pub fn new(h: &'a Hypergraph, x: &FractionalSolution, g: &dyn Attenuation) -> Result<Self> {
        h.ensure_valid()?;
        x.ensure_len(h.n())?;
        let probs = x.x.iter().map(|&v| g.mark_prob(v.clamp(0.0, 1.0)).clamp(0.0, 1.0)).collect();
        Ok(MatchingRounder { h, probs })
    }

    pub fn mark_probabilities(&self) -> &[f64] {
        &self.probs
    }

    pub fn round<R: Rng + ?Sized>(&self, rng: &mut R) -> Matching {
        let mut marked: Vec<(f64, usize)> = Vec::new();
        for (e, &p) in self.probs.iter().enumerate() {
            if p > 0.0 && rng.gen::<f64>() < p {
                marked.push((0.0, e));
            }
        }
        for slot in &mut marked {
            slot.0 = rng.gen();
        }
        marked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut used = vec![false; self.h.m];
        let mut chosen = Vec::new();
        for (_, e) in marked {
            let vs = &self.h.edges[e].vertices;
            if vs.iter().all(|&v| !used[v]) {
                for &v in vs {
                    used[v] = true;
                }
                chosen.push(e);
            }
        }
        chosen.sort_unstable();
        Matching(ItemSet::from_sorted(chosen))
    }
}

pub fn round_matching<R: Rng + ?Sized>(
    h: &Hypergraph,
    x: &FractionalSolution,
    g: &dyn Attenuation,
    rng: &mut R,
) -> Result<Matching> {
    Ok(MatchingRounder::new(h, x, g)?.round(rng))
}

pub fn round_matching_linear<R: Rng + ?Sized>(
    h: &Hypergraph,
    x: &FractionalSolution,
    alpha: f64,
    rng: &mut R,
) -> Result<Matching> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Param(format!("alpha must lie in [0,1], got {alpha}")));
    }
    round_matching(h, x, &Linear(alpha), rng)
}

/// A center edge on vertices `0..k_e` with value `x_center`, and every one of
/// its vertices filled up to 1 by edges `{v, private vertex}` of value at most
/// `eps`. Edge 0 is the center.
pub fn adversarial_star(k_e: usize, x_center: f64, eps: f64) -> Result<(Hypergraph, FractionalSolution)> {
    if k_e == 0 || !(0.0..=1.0).contains(&x_center) || !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::Param(format!(
            "star needs k_e >= 1, x_center in [0,1], eps in (0,1]; got {k_e}, {x_center}, {eps}"
        )));
    }
    let mut edges = vec![Edge { vertices: (0..k_e).collect(), weight: 1.0 }];
    let mut x = vec![x_center];
    let mut next = k_e;
    for v in 0..k_e {
        let mut rest = 1.0 - x_center;
        while rest > 1e-12 {
            let piece = eps.min(rest);
            edges.push(Edge { vertices: vec![v, next], weight: 1.0 });
            x.push(piece);
            next += 1;
            rest -= piece;
        }
    }
    let weights = vec![1.0; edges.len()];
    Ok((Hypergraph::new(next, edges), FractionalSolution::new(x, &weights)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;

    fn sigma(p: f64, n: u64) -> f64 {
        (p * (1.0 - p) / n as f64).sqrt()
    }

    fn rate<F: FnMut(u64) -> bool>(n: u64, mut hit: F) -> f64 {
        (0..n).filter(|&t| hit(t)).count() as f64 / n as f64
    }

    #[test]
    fn g_examples() {
        assert_eq!(attenuation_g(0.0).unwrap(), 0.0);
        assert_eq!(attenuation_g(1.0).unwrap(), 0.5);
        assert_eq!(attenuation_g(0.5).unwrap(), 0.375);
        assert!(matches!(attenuation_g(1.5), Err(Error::Domain(_))));
        assert!(attenuation_g(-0.1).is_err());
        for i in 0..=100 {
            let x = i as f64 / 100.0;
            assert!(attenuation_g(x).unwrap() <= x);
        }
        // slope at 0 is 1
        assert!((attenuation_g(1e-8).unwrap() / 1e-8 - 1.0).abs() < 1e-7);
    }

    #[test]
    fn bound_examples() {
        assert!((theoretical_bound(1) - (1.0 - (-1.0f64).exp())).abs() < 1e-15);
        assert!((theoretical_bound(1) - 0.63212).abs() < 1e-5);
        let b10 = theoretical_bound(10) * 10.0;
        assert!(b10 > 0.99 && b10 <= 1.0);
        for k in 1..30 {
            assert!(theoretical_bound(k + 1) * (k + 1) as f64 > theoretical_bound(k) * k as f64);
        }
        assert!((linear_bound(2, 1.0) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(linear_bound(4, 0.0), 0.0);
    }

    #[test]
    fn validation() {
        let h = Hypergraph::new(
            3,
            vec![
                Edge { vertices: vec![], weight: 1.0 },
                Edge { vertices: vec![0, 0], weight: 1.0 },
                Edge { vertices: vec![5], weight: -1.0 },
            ],
        );
        let text = h.validate().to_string();
        assert!(text.contains("no vertices"));
        assert!(text.contains("duplicate"));
        assert!(text.contains("out of range"));
        assert!(text.contains("weight"));
    }

    #[test]
    fn json_shape() {
        let h: Hypergraph = serde_json::from_str(r#"{"m":3,"edges":[{"vertices":[0,1],"weight":2.5}]}"#).unwrap();
        assert_eq!(h.edges[0].vertices, vec![0, 1]);
        assert_eq!(h.edges[0].weight, 2.5);
    }

    #[test]
    fn single_edge_rates() {
        let h = Hypergraph::new(2, vec![Edge { vertices: vec![0, 1], weight: 1.0 }]);
        let x = FractionalSolution::new(vec![1.0], &[1.0]);
        let r = MatchingRounder::new(&h, &x, &Quadratic).unwrap();
        let n = 1_000_000;
        let mut rng = stream(1, 0);
        let f = rate(n, |_| !r.round(&mut rng).is_empty());
        assert!((f - 0.5).abs() < 3.0 * sigma(0.5, n));
        let lin = MatchingRounder::new(&h, &x, &Linear(1.0)).unwrap();
        assert!((0..1000).all(|_| lin.round(&mut rng).len() == 1));
        let zero = MatchingRounder::new(&h, &x, &Linear(0.0)).unwrap();
        assert!((0..1000).all(|_| zero.round(&mut rng).is_empty()));
    }

    #[test]
    fn conflict_goes_to_the_earlier_key() {
        let h = Hypergraph::new(
            3,
            vec![Edge { vertices: vec![0, 1], weight: 1.0 }, Edge { vertices: vec![1, 2], weight: 1.0 }],
        );
        let x = FractionalSolution::new(vec![1.0, 1.0], &[1.0, 1.0]);
        let r = MatchingRounder::new(&h, &x, &Linear(1.0)).unwrap();
        let n = 100_000;
        let mut rng = stream(2, 0);
        let mut first = 0;
        for _ in 0..n {
            let m = r.round(&mut rng);
            assert_eq!(m.len(), 1);
            first += usize::from(m.contains(0));
        }
        assert!((first as f64 / n as f64 - 0.5).abs() < 3.0 * sigma(0.5, n));
    }

    #[test]
    fn disjoint_edges_match_at_mark_rate() {
        let h = Hypergraph::new(
            4,
            vec![Edge { vertices: vec![0, 1], weight: 1.0 }, Edge { vertices: vec![2, 3], weight: 1.0 }],
        );
        let x = FractionalSolution::new(vec![0.3, 0.9], &[1.0, 1.0]);
        let r = MatchingRounder::new(&h, &x, &Quadratic).unwrap();
        let n = 400_000;
        let mut rng = stream(3, 0);
        let mut counts = [0u64; 2];
        for _ in 0..n {
            for e in r.round(&mut rng).edges().iter() {
                counts[e] += 1;
            }
        }
        for (e, &v) in [0.3f64, 0.9].iter().enumerate() {
            let g = v * (1.0 - v / 2.0);
            assert!((counts[e] as f64 / n as f64 - g).abs() < 3.0 * sigma(g, n));
        }
    }

    #[test]
    fn star_shape() {
        let (h, x) = adversarial_star(3, 0.1, 0.01).unwrap();
        h.ensure_valid().unwrap();
        assert_eq!(h.edges[0].vertices, vec![0, 1, 2]);
        for v in 0..3 {
            let load: f64 = h
                .edges
                .iter()
                .zip(&x.x)
                .filter(|(e, _)| e.vertices.contains(&v))
                .map(|(_, xe)| xe)
                .sum();
            assert!((load - 1.0).abs() < 1e-9);
        }
        assert!(h.lp_model().is_feasible(&x.x, 1e-9));
    }

    #[test]
    fn star_respects_both_bounds() {
        for (k, seed) in [(2usize, 4u64), (3, 5)] {
            let (h, x) = adversarial_star(k, 0.1, 0.01).unwrap();
            let n = 200_000;
            let quad = MatchingRounder::new(&h, &x, &Quadratic).unwrap();
            let lin = MatchingRounder::new(&h, &x, &Linear(1.0)).unwrap();
            let mut rng = stream(seed, 0);
            let fq = rate(n, |_| quad.round(&mut rng).contains(0)) / 0.1;
            let fl = rate(n, |_| lin.round(&mut rng).contains(0)) / 0.1;
            let s = sigma(0.1 * theoretical_bound(k), n) / 0.1;
            assert!(fq >= theoretical_bound(k) - 3.0 * s, "k={k}: {fq}");
            assert!(fl >= linear_bound(k, 1.0) - 3.0 * s, "k={k}: {fl}");
        }
    }

    #[test]
    fn lp_on_triangle() {
        let h = Hypergraph::new(
            3,
            vec![
                Edge { vertices: vec![0, 1], weight: 1.0 },
                Edge { vertices: vec![1, 2], weight: 1.0 },
                Edge { vertices: vec![0, 2], weight: 1.0 },
            ],
        );
        let sol = h.solve_lp().unwrap();
        assert!((sol.objective - 1.5).abs() < 1e-9);
    }

    #[test]
    fn closures_work_as_attenuation() {
        let h = Hypergraph::new(1, vec![Edge { vertices: vec![0], weight: 1.0 }]);
        let x = FractionalSolution::new(vec![0.5], &[1.0]);
        let never = |_x: f64| 0.0;
        assert!(round_matching(&h, &x, &never, &mut stream(1, 1)).unwrap().is_empty());
        assert!(round_matching_linear(&h, &x, 1.5, &mut stream(1, 1)).is_err());
    }

    proptest! {
        #[test]
        fn output_is_a_matching(seed in 0u64..500, m in 2usize..12, n in 1usize..20) {
            let h = crate::harness::gen_random_hypergraph(m, n, m.min(4), seed).unwrap();
            let x = h.solve_lp().unwrap();
            let r = MatchingRounder::new(&h, &x, &Quadratic).unwrap();
            for t in 0..20 {
                let mm = r.round(&mut stream(seed, t));
                prop_assert!(mm.is_valid(&h));
            }
        }
    }
}
