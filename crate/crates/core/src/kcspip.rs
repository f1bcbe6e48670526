//! Alteration rounding for `k`-column-sparse packing programs.
//!
//! One trial of [`KcsRounder::round`] runs:
//!
//! 1. sample `R0`, each item independently with probability `min(1, alpha x_j / k)`;
//! 2. drop items hit by a medium or tiny blocking event with respect to `R0`,
//!    giving `R1` (all predicates evaluated against `R0` at once);
//! 3. build the conflict digraph on `R1` (arc `j -> j'` when some row has
//!    `a_ij > 0` and `a_ij' > 1/2`), drop vertices of out-degree above `d`,
//!    giving `R2`;
//! 4. color the remaining graph and keep one uniformly random color class.
//!
//! Capacities must be normalized to 1. [`BknsRounder`] is the deterministic
//! alteration baseline that replaces steps 3-4 with "drop every item with an
//! out-arc".

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphcolor::{
    candidate_colors, check_neg_corr_args, color_directed_graph, color_neg_corr, coloring_order,
    neg_corr_choices, Coloring, DiGraph,
};
use crate::instance::{FractionalSolution, ItemSet, PackingInstance};

/// Largest instance [`exact_inclusion_probabilities`] will enumerate.
pub const EXACT_MAX_ITEMS: usize = 16;
/// Largest instance [`exact_pair_probabilities`] will enumerate (it also
/// enumerates color draws).
pub const EXACT_PAIR_MAX_ITEMS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoefficientClass {
    Big,
    Medium,
    Tiny,
}

/// Big iff `a > 1/2`; medium iff `1/ell <= a <= 1/2`; tiny iff `0 < a < 1/ell`.
pub fn classify_coefficient(a: f64, ell: usize) -> CoefficientClass {
    if a > 0.5 {
        CoefficientClass::Big
    } else if a < 1.0 / ell as f64 {
        CoefficientClass::Tiny
    } else {
        CoefficientClass::Medium
    }
}

/// The class of every nonzero entry, laid out like the instance's columns.
pub fn classify(inst: &PackingInstance, ell: usize) -> Vec<Vec<(usize, CoefficientClass)>> {
    inst.columns()
        .iter()
        .map(|col| col.iter().map(|&(i, a)| (i, classify_coefficient(a, ell))).collect())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KcsParams {
    /// Sampling scale: items are sampled with probability `alpha x_j / k`.
    pub alpha: f64,
    /// Medium/tiny threshold `1/ell`.
    pub ell: usize,
    /// Out-degree above which a conflict vertex is anomalous.
    pub d: usize,
    /// When set, color with the near-negative-correlation scheme.
    pub epsilon: Option<f64>,
}

/// `max(3, ceil(80 ln(k / alpha)))`.
pub fn default_ell(k: usize, alpha: f64) -> usize {
    let v = 80.0 * (k as f64 / alpha).ln();
    if v.is_finite() && v > 3.0 {
        v.ceil() as usize
    } else {
        3
    }
}

/// `ceil(alpha + sqrt(alpha ln alpha))`, the square root dropped when `alpha < e`.
pub fn default_d(alpha: f64) -> usize {
    let spread = if alpha >= std::f64::consts::E {
        (alpha * alpha.ln()).sqrt()
    } else {
        0.0
    };
    ((alpha + spread - 1e-12).ceil() as usize).max(1)
}

impl KcsParams {
    /// Defaults for sparsity `k`: `alpha = max(1, k^0.4)` and the derived `ell`, `d`.
    pub fn for_sparsity(k: usize) -> Self {
        let alpha = (k.max(1) as f64).powf(0.4).max(1.0);
        KcsParams {
            alpha,
            ell: default_ell(k, alpha),
            d: default_d(alpha),
            epsilon: None,
        }
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = Some(epsilon);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::Param(format!("alpha must be positive, got {}", self.alpha)));
        }
        if self.ell < 3 {
            return Err(Error::Param(format!("ell must be at least 3, got {}", self.ell)));
        }
        if self.d < 1 {
            return Err(Error::Param("d must be at least 1".into()));
        }
        if let Some(eps) = self.epsilon {
            check_neg_corr_args(self.d, eps)?;
        }
        Ok(())
    }

    /// Number of color classes the final class is drawn from.
    pub fn palette(&self) -> usize {
        match self.epsilon {
            None => 2 * self.d + 1,
            Some(eps) => 2 * self.d + neg_corr_choices(self.d, eps),
        }
    }
}

/// The conflict digraph on a set of items; vertex `p` is item `items[p]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConflictDigraph {
    pub items: ItemSet,
    pub graph: DiGraph,
}

/// Items surviving anomaly removal and the conflict graph induced on them.
#[derive(Debug, Clone)]
pub struct Altered {
    pub r2: ItemSet,
    pub graph: DiGraph,
}

/// Per-row structure shared by all trials on one instance.
#[derive(Debug, Clone)]
struct Classified {
    m: usize,
    cols: Vec<Vec<(usize, f64, CoefficientClass)>>,
    big: Vec<Vec<usize>>,
}

impl Classified {
    fn new(inst: &PackingInstance, ell: usize) -> Self {
        let cols: Vec<Vec<_>> = inst
            .columns()
            .iter()
            .map(|col| col.iter().map(|&(i, a)| (i, a, classify_coefficient(a, ell))).collect())
            .collect();
        let mut big = vec![Vec::new(); inst.m()];
        for (j, col) in cols.iter().enumerate() {
            for &(i, _, class) in col {
                if class == CoefficientClass::Big {
                    big[i].push(j);
                }
            }
        }
        Classified {
            m: inst.m(),
            cols,
            big,
        }
    }

    fn discard_blocked(&self, r0: &ItemSet) -> ItemSet {
        let mut med = vec![0usize; self.m];
        let mut load = vec![0.0f64; self.m];
        for j in r0.iter() {
            for &(i, a, class) in &self.cols[j] {
                match class {
                    CoefficientClass::Medium => {
                        med[i] += 1;
                        load[i] += a;
                    }
                    CoefficientClass::Tiny => load[i] += a,
                    CoefficientClass::Big => {}
                }
            }
        }
        let survivors = r0
            .iter()
            .filter(|&j| {
                !self.cols[j].iter().any(|&(i, a, class)| match class {
                    CoefficientClass::Medium => med[i] >= 3,
                    CoefficientClass::Tiny => load[i] - a > 1.0 - a || med[i] >= 2,
                    CoefficientClass::Big => false,
                })
            })
            .collect();
        ItemSet::from_sorted(survivors)
    }

    fn conflict_digraph(&self, n: usize, r1: &ItemSet) -> ConflictDigraph {
        let mut pos = vec![usize::MAX; n];
        for (p, j) in r1.iter().enumerate() {
            pos[j] = p;
        }
        let out = r1
            .iter()
            .map(|j| {
                let mut list = Vec::new();
                for &(i, _, _) in &self.cols[j] {
                    for &b in &self.big[i] {
                        if b != j && pos[b] != usize::MAX {
                            list.push(pos[b]);
                        }
                    }
                }
                list
            })
            .collect();
        ConflictDigraph {
            items: r1.clone(),
            graph: DiGraph::new(out).expect("conflict arcs stay inside R1"),
        }
    }
}

fn sampling_probabilities(x: &FractionalSolution, alpha: f64, k: usize) -> Vec<f64> {
    x.x.iter().map(|&v| (alpha * v / k as f64).clamp(0.0, 1.0)).collect()
}

fn sample<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> ItemSet {
    let members = probs
        .iter()
        .enumerate()
        .filter(|&(_, &p)| rng.gen::<f64>() < p)
        .map(|(j, _)| j)
        .collect();
    ItemSet::from_sorted(members)
}

/// Vertices of `g` whose out-degree is at most `d`, measured once in `g`.
pub fn remove_anomalous(g: &DiGraph, d: usize) -> ItemSet {
    ItemSet::from_sorted((0..g.len()).filter(|&v| g.out_degree(v) <= d).collect())
}

/// Prepared rounding scheme for one instance and fractional point.
#[derive(Debug, Clone)]
pub struct KcsRounder<'a> {
    inst: &'a PackingInstance,
    params: KcsParams,
    k: usize,
    probs: Vec<f64>,
    classified: Classified,
}

impl<'a> KcsRounder<'a> {
    pub fn new(inst: &'a PackingInstance, x: &FractionalSolution, params: KcsParams) -> Result<Self> {
        inst.ensure_unit_capacities()?;
        x.ensure_len(inst.n())?;
        params.validate()?;
        let k = inst.sparsity();
        Ok(KcsRounder {
            inst,
            params,
            k,
            probs: sampling_probabilities(x, params.alpha, k),
            classified: Classified::new(inst, params.ell),
        })
    }

    pub fn params(&self) -> &KcsParams {
        &self.params
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// `min(1, alpha x_j / k)` per item.
    pub fn sampling_probabilities(&self) -> &[f64] {
        &self.probs
    }

    pub fn sample_r0<R: Rng + ?Sized>(&self, rng: &mut R) -> ItemSet {
        sample(&self.probs, rng)
    }

    pub fn discard_blocked(&self, r0: &ItemSet) -> ItemSet {
        self.classified.discard_blocked(r0)
    }

    pub fn conflict_digraph(&self, r1: &ItemSet) -> ConflictDigraph {
        self.classified.conflict_digraph(self.inst.n(), r1)
    }

    /// Steps 2-3: discard, build the digraph, remove anomalous vertices.
    pub fn alter(&self, r0: &ItemSet) -> Altered {
        let r1 = self.discard_blocked(r0);
        let cg = self.conflict_digraph(&r1);
        let keep = remove_anomalous(&cg.graph, self.params.d);
        let r2 = ItemSet::from_sorted(keep.iter().map(|p| cg.items.as_slice()[p]).collect());
        Altered {
            r2,
            graph: cg.graph.induced(keep.as_slice()),
        }
    }

    pub fn color<R: Rng + ?Sized>(&self, g: &DiGraph, rng: &mut R) -> Coloring {
        let chi = match self.params.epsilon {
            None => color_directed_graph(g, self.params.d),
            Some(eps) => color_neg_corr(g, self.params.d, eps, rng),
        };
        chi.expect("anomaly removal bounds every out-degree by d")
    }

    /// Given `R0`, finish the pipeline and return `R_F`.
    pub fn finish<R: Rng + ?Sized>(&self, r0: &ItemSet, rng: &mut R) -> ItemSet {
        let altered = self.alter(r0);
        let chi = self.color(&altered.graph, rng);
        let c = rng.gen_range(0..chi.palette);
        ItemSet::from_sorted(chi.class(c).map(|p| altered.r2.as_slice()[p]).collect())
    }

    pub fn round<R: Rng + ?Sized>(&self, rng: &mut R) -> ItemSet {
        let r0 = self.sample_r0(rng);
        self.finish(&r0, rng)
    }

    /// `Pr[j in R_F | R0 = r0]` for every item: `1/palette` on `R2`, else 0.
    pub fn conditional_inclusion(&self, r0: &ItemSet) -> Vec<f64> {
        let mut out = vec![0.0; self.inst.n()];
        let share = 1.0 / self.params.palette() as f64;
        for j in self.alter(r0).r2.iter() {
            out[j] = share;
        }
        out
    }

    fn outcomes(&self, max: usize) -> Result<impl Iterator<Item = (f64, ItemSet)> + '_> {
        let n = self.inst.n();
        if n > max {
            return Err(Error::Size { n, max });
        }
        Ok((0u64..1 << n).filter_map(move |mask| {
            let p: f64 = (0..n)
                .map(|j| {
                    if mask >> j & 1 == 1 {
                        self.probs[j]
                    } else {
                        1.0 - self.probs[j]
                    }
                })
                .product();
            (p > 0.0).then(|| (p, ItemSet::from_mask(mask)))
        }))
    }

    pub fn exact_inclusion(&self) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.inst.n()];
        for (p, r0) in self.outcomes(EXACT_MAX_ITEMS)? {
            for (o, c) in out.iter_mut().zip(self.conditional_inclusion(&r0)) {
                *o += p * c;
            }
        }
        Ok(out)
    }

    pub fn exact_pairs(&self) -> Result<Vec<Vec<f64>>> {
        let n = self.inst.n();
        let palette = self.params.palette();
        let mut joint = vec![vec![0.0; n]; n];
        for (p, r0) in self.outcomes(EXACT_PAIR_MAX_ITEMS)? {
            let altered = self.alter(&r0);
            let items = altered.r2.as_slice();
            let mut visit = |q: f64, colors: &[usize]| {
                for (a, &u) in items.iter().enumerate() {
                    for (b, &v) in items.iter().enumerate() {
                        if colors[a] == colors[b] {
                            joint[u][v] += p * q / palette as f64;
                        }
                    }
                }
            };
            match self.params.epsilon {
                None => {
                    let chi = color_directed_graph(&altered.graph, self.params.d)
                        .expect("anomaly removal bounds every out-degree by d");
                    visit(1.0, &chi.colors);
                }
                Some(eps) => {
                    let order = coloring_order(&altered.graph);
                    let choices = neg_corr_choices(self.params.d, eps);
                    let mut colors = vec![usize::MAX; items.len()];
                    enumerate_draws(&altered.graph, &order, 0, palette, choices, 1.0, &mut colors, &mut visit);
                }
            }
        }
        Ok(joint)
    }
}

#[allow(clippy::too_many_arguments)]
fn enumerate_draws(
    g: &DiGraph,
    order: &[usize],
    at: usize,
    palette: usize,
    choices: usize,
    q: f64,
    colors: &mut Vec<usize>,
    visit: &mut impl FnMut(f64, &[usize]),
) {
    if at == order.len() {
        visit(q, colors);
        return;
    }
    let v = order[at];
    for c in candidate_colors(g, v, colors, palette, choices) {
        colors[v] = c;
        enumerate_draws(g, order, at + 1, palette, choices, q / choices as f64, colors, visit);
    }
    colors[v] = usize::MAX;
}

pub fn sample_r0<R: Rng + ?Sized>(
    inst: &PackingInstance,
    x: &FractionalSolution,
    params: &KcsParams,
    rng: &mut R,
) -> Result<ItemSet> {
    Ok(KcsRounder::new(inst, x, *params)?.sample_r0(rng))
}

pub fn discard_blocked(inst: &PackingInstance, r0: &ItemSet, ell: usize) -> ItemSet {
    Classified::new(inst, ell).discard_blocked(r0)
}

pub fn build_conflict_digraph(inst: &PackingInstance, r1: &ItemSet) -> ConflictDigraph {
    // ell does not affect which entries are big
    Classified::new(inst, 3).conflict_digraph(inst.n(), r1)
}

pub fn round_kcspip<R: Rng + ?Sized>(
    inst: &PackingInstance,
    x: &FractionalSolution,
    params: &KcsParams,
    rng: &mut R,
) -> Result<ItemSet> {
    Ok(KcsRounder::new(inst, x, *params)?.round(rng))
}

/// Exact `Pr[j in R_F]` by summing over all `2^n` outcomes of `R0`.
pub fn exact_inclusion_probabilities(
    inst: &PackingInstance,
    x: &FractionalSolution,
    params: &KcsParams,
) -> Result<Vec<f64>> {
    KcsRounder::new(inst, x, *params)?.exact_inclusion()
}

/// Exact `Pr[u in R_F and v in R_F]` for all pairs (diagonal holds the
/// marginals), enumerating `R0` and, with `epsilon` set, every color draw.
pub fn exact_pair_probabilities(
    inst: &PackingInstance,
    x: &FractionalSolution,
    params: &KcsParams,
) -> Result<Vec<Vec<f64>>> {
    KcsRounder::new(inst, x, *params)?.exact_pairs()
}

/// The deterministic-alteration baseline: sample, discard, then drop every
/// item with a big blocking event with respect to `R1`.
#[derive(Debug, Clone)]
pub struct BknsRounder<'a> {
    inst: &'a PackingInstance,
    probs: Vec<f64>,
    classified: Classified,
    k: usize,
}

impl<'a> BknsRounder<'a> {
    pub fn new(inst: &'a PackingInstance, x: &FractionalSolution, alpha: f64, ell: usize) -> Result<Self> {
        inst.ensure_unit_capacities()?;
        x.ensure_len(inst.n())?;
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::Param(format!("alpha must be positive, got {alpha}")));
        }
        if ell < 3 {
            return Err(Error::Param(format!("ell must be at least 3, got {ell}")));
        }
        let k = inst.sparsity();
        Ok(BknsRounder {
            inst,
            probs: sampling_probabilities(x, alpha, k),
            classified: Classified::new(inst, ell),
            k,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn round<R: Rng + ?Sized>(&self, rng: &mut R) -> ItemSet {
        let r0 = sample(&self.probs, rng);
        let r1 = self.classified.discard_blocked(&r0);
        let cg = self.classified.conflict_digraph(self.inst.n(), &r1);
        ItemSet::from_sorted(
            (0..cg.graph.len())
                .filter(|&p| cg.graph.out_degree(p) == 0)
                .map(|p| cg.items.as_slice()[p])
                .collect(),
        )
    }
}

pub fn round_bkns<R: Rng + ?Sized>(
    inst: &PackingInstance,
    x: &FractionalSolution,
    alpha: f64,
    rng: &mut R,
) -> Result<ItemSet> {
    let ell = default_ell(inst.sparsity(), alpha);
    Ok(BknsRounder::new(inst, x, alpha, ell)?.round(rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{gen_gap_instance, gen_random_kcs};
    use crate::instance::check_feasible;
    use crate::lp::solve_packing_lp;
    use crate::rng::stream;
    use proptest::prelude::*;

    /// Blocking predicates written out term by term, for cross-checking.
    fn oracle_discard(inst: &PackingInstance, r0: &ItemSet, ell: usize) -> ItemSet {
        let rows = inst.rows();
        let coeff = |i: usize, j: usize| {
            rows[i].iter().find(|&&(jj, _)| jj == j).map(|&(_, a)| a).unwrap_or(0.0)
        };
        let is_med = |a: f64| a >= 1.0 / ell as f64 && a <= 0.5;
        let is_tiny = |a: f64| a > 0.0 && a < 1.0 / ell as f64;
        r0.iter()
            .filter(|&j| {
                let mb = (0..inst.m()).any(|i| {
                    is_med(coeff(i, j)) && r0.iter().filter(|&h| is_med(coeff(i, h))).count() >= 3
                });
                let tb = (0..inst.m()).any(|i| {
                    let a = coeff(i, j);
                    if !is_tiny(a) {
                        return false;
                    }
                    let others: f64 = r0
                        .iter()
                        .filter(|&h| h != j)
                        .map(|h| coeff(i, h))
                        .filter(|&b| is_med(b) || is_tiny(b))
                        .sum();
                    let meds = r0.iter().filter(|&h| is_med(coeff(i, h))).count();
                    others > 1.0 - a || meds >= 2
                });
                !(mb || tb)
            })
            .collect()
    }

    fn ones(n: usize) -> FractionalSolution {
        FractionalSolution::new(vec![1.0; n], &vec![1.0; n])
    }

    #[test]
    fn classification_thresholds() {
        assert_eq!(classify_coefficient(0.6, 4), CoefficientClass::Big);
        assert_eq!(classify_coefficient(0.3, 4), CoefficientClass::Medium);
        assert_eq!(classify_coefficient(0.1, 4), CoefficientClass::Tiny);
        for ell in 3..10 {
            assert_eq!(classify_coefficient(0.5, ell), CoefficientClass::Medium);
            assert_eq!(classify_coefficient(1.0 / ell as f64, ell), CoefficientClass::Medium);
        }
    }

    #[test]
    fn default_parameters() {
        let p = KcsParams::for_sparsity(1);
        assert_eq!((p.alpha, p.ell, p.d), (1.0, 3, 1));
        let p = KcsParams::for_sparsity(10);
        assert!((p.alpha - 10f64.powf(0.4)).abs() < 1e-12);
        // alpha ~ 2.512 < e, so d = ceil(alpha)
        assert_eq!(p.d, 3);
        assert_eq!(p.ell, (80.0 * (10.0 / p.alpha).ln()).ceil() as usize);
        let p = KcsParams::for_sparsity(100);
        let a = 100f64.powf(0.4);
        assert_eq!(p.d, (a + (a * a.ln()).sqrt()).ceil() as usize);
    }

    #[test]
    fn singleton_is_never_blocked() {
        let inst = PackingInstance::unit(1, vec![1.0], vec![vec![(0, 0.1)]]);
        let r0 = ItemSet::from(vec![0]);
        assert_eq!(discard_blocked(&inst, &r0, 4), r0);
    }

    #[test]
    fn four_medium_items_in_one_row_are_all_dropped() {
        let inst = PackingInstance::unit(1, vec![1.0; 4], (0..4).map(|_| vec![(0, 0.3)]).collect());
        let r0 = ItemSet::from(vec![0, 1, 2, 3]);
        assert!(discard_blocked(&inst, &r0, 4).is_empty());
        // two medium items survive, but a tiny one beside them does not
        let inst = PackingInstance::unit(
            1,
            vec![1.0; 3],
            vec![vec![(0, 0.3)], vec![(0, 0.3)], vec![(0, 0.01)]],
        );
        let r0 = ItemSet::from(vec![0, 1, 2]);
        assert_eq!(discard_blocked(&inst, &r0, 4).as_slice(), &[0, 1]);
    }

    #[test]
    fn conflict_digraph_examples() {
        let inst = PackingInstance::unit(1, vec![1.0; 2], vec![vec![(0, 0.3)], vec![(0, 0.3)]]);
        let cg = build_conflict_digraph(&inst, &ItemSet::from(vec![0, 1]));
        assert_eq!(cg.graph.arcs().count(), 0);
        assert!(build_conflict_digraph(&inst, &ItemSet::new()).graph.is_empty());

        // gap instance k = 3: item j has entries in rows j-2, j-1, j (mod 5)
        // and row i's only big item is i, so arcs go j -> j-1, j -> j-2.
        let gap = gen_gap_instance(3, 1e-4).unwrap();
        let cg = build_conflict_digraph(&gap, &ItemSet::from(vec![0, 1]));
        assert_eq!(cg.graph.arcs().collect::<Vec<_>>(), vec![(1, 0)]);
        let all: ItemSet = (0..5).collect();
        let cg = build_conflict_digraph(&gap, &all);
        let mut arcs: Vec<_> = cg.graph.arcs().collect();
        arcs.sort();
        let mut want: Vec<_> = (0..5usize)
            .flat_map(|j| [(j, (j + 4) % 5), (j, (j + 3) % 5)])
            .collect();
        want.sort();
        assert_eq!(arcs, want);
    }

    #[test]
    fn anomaly_removal_uses_initial_degrees() {
        let star = DiGraph::from_arcs(4, &[(0, 1), (0, 2), (0, 3)]).unwrap();
        assert_eq!(remove_anomalous(&star, 2).as_slice(), &[1, 2, 3]);
        assert_eq!(remove_anomalous(&star, 3).as_slice(), &[0, 1, 2, 3]);
        // no cascade: 1 keeps its arc count even though 0 is removed
        let g = DiGraph::from_arcs(3, &[(0, 1), (0, 2), (1, 0)]).unwrap();
        assert_eq!(remove_anomalous(&g, 1).as_slice(), &[1, 2]);
    }

    #[test]
    fn zero_solution_rounds_to_nothing() {
        let inst = gen_random_kcs(6, 4, 2, 3).unwrap();
        let x = FractionalSolution::zeros(6);
        let params = KcsParams::for_sparsity(2);
        let mut rng = stream(1, 0);
        for _ in 0..100 {
            assert!(round_kcspip(&inst, &x, &params, &mut rng).unwrap().is_empty());
            assert!(round_bkns(&inst, &x, 1.0, &mut rng).unwrap().is_empty());
        }
        assert!(exact_inclusion_probabilities(&inst, &x, &params)
            .unwrap()
            .iter()
            .all(|&p| p == 0.0));
    }

    #[test]
    fn clamped_sampling_includes_everything() {
        let inst = PackingInstance::unit(2, vec![1.0; 2], vec![vec![(0, 0.2)], vec![(1, 0.2)]]);
        let params = KcsParams { alpha: 1.0, ell: 3, d: 1, epsilon: None };
        let rounder = KcsRounder::new(&inst, &ones(2), params).unwrap();
        assert_eq!(rounder.k(), 1);
        let mut rng = stream(2, 0);
        for _ in 0..50 {
            assert_eq!(rounder.sample_r0(&mut rng).len(), 2);
        }
    }

    #[test]
    fn sampling_frequencies_match_alpha_x_over_k() {
        let inst = gen_random_kcs(8, 5, 3, 17).unwrap();
        let x = solve_packing_lp(&inst, true).unwrap();
        let params = KcsParams::for_sparsity(3);
        let rounder = KcsRounder::new(&inst, &x, params).unwrap();
        let trials = 1_000_000u64;
        let mut counts = vec![0u64; 8];
        let mut rng = stream(5, 0);
        for _ in 0..trials {
            for j in rounder.sample_r0(&mut rng).iter() {
                counts[j] += 1;
            }
        }
        for j in 0..8 {
            let p = (params.alpha * x.x[j] / 3.0).min(1.0);
            let f = counts[j] as f64 / trials as f64;
            let sigma = (p * (1.0 - p) / trials as f64).sqrt();
            assert!((f - p).abs() <= 3.0 * sigma + 1e-12, "item {j}: {f} vs {p}");
        }
    }

    #[test]
    fn singleton_exact_probability() {
        let inst = PackingInstance::unit(1, vec![1.0], vec![vec![(0, 0.7)]]);
        let x = FractionalSolution::new(vec![0.6], &[1.0]);
        let params = KcsParams { alpha: 0.5, ell: 3, d: 2, epsilon: None };
        let exact = exact_inclusion_probabilities(&inst, &x, &params).unwrap();
        assert!((exact[0] - 0.5 * 0.6 / 5.0).abs() < 1e-15);
    }

    #[test]
    fn exact_enumeration_refuses_large_instances() {
        let inst = gen_random_kcs(17, 6, 2, 1).unwrap();
        let x = FractionalSolution::zeros(17);
        let err = exact_inclusion_probabilities(&inst, &x, &KcsParams::for_sparsity(2)).unwrap_err();
        assert!(matches!(err, Error::Size { n: 17, max: 16 }));
    }

    #[test]
    fn rejects_non_unit_capacities() {
        let inst = PackingInstance::new(1, vec![2.0], vec![1.0], vec![vec![(0, 0.5)]]);
        let x = FractionalSolution::zeros(1);
        assert!(KcsRounder::new(&inst, &x, KcsParams::for_sparsity(1)).is_err());
    }

    #[test]
    fn bkns_singleton_rate() {
        let inst = PackingInstance::unit(1, vec![1.0], vec![vec![(0, 0.9)]]);
        let x = FractionalSolution::new(vec![0.8], &[1.0]);
        let rounder = BknsRounder::new(&inst, &x, 1.0, 3).unwrap();
        let trials = 200_000u64;
        let mut rng = stream(8, 0);
        let hits = (0..trials).filter(|_| !rounder.round(&mut rng).is_empty()).count();
        let f = hits as f64 / trials as f64;
        let sigma = (0.8f64 * 0.2 / trials as f64).sqrt();
        assert!((f - 0.8).abs() < 3.0 * sigma);
    }

    #[test]
    fn bkns_is_feasible_on_gap_instances() {
        let inst = gen_gap_instance(5, 1e-5).unwrap();
        let x = solve_packing_lp(&inst, true).unwrap();
        let rounder = BknsRounder::new(&inst, &x, 1.0, default_ell(5, 1.0)).unwrap();
        for t in 0..10_000 {
            let mut rng = stream(21, t);
            assert!(check_feasible(&inst, &rounder.round(&mut rng)));
        }
    }

    #[test]
    fn discard_matches_predicate_oracle_exhaustively() {
        // tiny-heavy instance: six items, three rows, ell = 5 (tiny below 0.2)
        let inst = PackingInstance::unit(
            3,
            vec![1.0; 6],
            vec![
                vec![(0, 0.15), (1, 0.3)],
                vec![(0, 0.19), (2, 0.05)],
                vec![(0, 0.45), (1, 0.1)],
                vec![(0, 0.2), (2, 0.6)],
                vec![(1, 0.35), (2, 0.12)],
                vec![(0, 0.18), (1, 0.25), (2, 0.3)],
            ],
        );
        for ell in [3, 5, 8] {
            for mask in 0u64..64 {
                let r0 = ItemSet::from_mask(mask);
                assert_eq!(discard_blocked(&inst, &r0, ell), oracle_discard(&inst, &r0, ell));
            }
        }
    }

    proptest! {
        #[test]
        fn discard_matches_oracle_on_random_instances(seed in 0u64..300, mask in 0u64..(1 << 6), ell in 3usize..7) {
            let inst = gen_random_kcs(6, 3, 2, seed).unwrap();
            let r0 = ItemSet::from_mask(mask);
            prop_assert_eq!(discard_blocked(&inst, &r0, ell), oracle_discard(&inst, &r0, ell));
        }

        #[test]
        fn output_is_feasible_and_independent(seed in 0u64..300, eps in proptest::option::of(0.2f64..0.8)) {
            let inst = gen_random_kcs(14, 6, 3, seed).unwrap();
            let x = solve_packing_lp(&inst, true).unwrap();
            let mut params = KcsParams { alpha: 2.0, ell: 4, d: 2, epsilon: None };
            params.epsilon = eps;
            let rounder = KcsRounder::new(&inst, &x, params).unwrap();
            for t in 0..50 {
                let mut rng = stream(seed, t);
                let r0 = rounder.sample_r0(&mut rng);
                let altered = rounder.alter(&r0);
                let rf = rounder.finish(&r0, &mut rng);
                prop_assert!(check_feasible(&inst, &rf));
                prop_assert!(rf.is_subset(&altered.r2));
                for (u, v) in altered.graph.arcs() {
                    let (a, b) = (altered.r2.as_slice()[u], altered.r2.as_slice()[v]);
                    prop_assert!(!(rf.contains(a) && rf.contains(b)));
                }
            }
        }

        #[test]
        fn pair_marginals_match_single_item_enumeration(seed in 0u64..40, eps in proptest::option::of(0.3f64..0.7)) {
            let inst = gen_random_kcs(6, 3, 2, seed).unwrap();
            let x = solve_packing_lp(&inst, true).unwrap();
            let params = KcsParams { alpha: 1.5, ell: 3, d: 1, epsilon: eps };
            let single = exact_inclusion_probabilities(&inst, &x, &params).unwrap();
            let pairs = exact_pair_probabilities(&inst, &x, &params).unwrap();
            for j in 0..6 {
                prop_assert!((single[j] - pairs[j][j]).abs() < 1e-12);
            }
        }
    }
}
