//! Coloring directed graphs of bounded out-degree.
//!
//! Both colorings peel vertices by minimum total degree (in + out, within the
//! remaining graph; ties to the lowest index) and then color in the reverse
//! of the peeling order, so every vertex sees at most `2d` colored neighbors.

use std::collections::BTreeSet;

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiGraph {
    out: Vec<Vec<usize>>,
    inc: Vec<Vec<usize>>,
}

impl DiGraph {
    /// Builds a graph from out-neighbor lists. Duplicate arcs are merged.
    pub fn new(mut out: Vec<Vec<usize>>) -> Result<Self> {
        let n = out.len();
        let mut inc = vec![Vec::new(); n];
        for (u, list) in out.iter_mut().enumerate() {
            list.sort_unstable();
            list.dedup();
            for &v in list.iter() {
                if v >= n {
                    return Err(Error::Param(format!("arc ({u},{v}) leaves the vertex range")));
                }
                if v == u {
                    return Err(Error::Param(format!("self-loop at vertex {u}")));
                }
                inc[v].push(u);
            }
        }
        Ok(DiGraph { out, inc })
    }

    pub fn from_arcs(n: usize, arcs: &[(usize, usize)]) -> Result<Self> {
        let mut out = vec![Vec::new(); n];
        for &(u, v) in arcs {
            if u >= n {
                return Err(Error::Param(format!("arc ({u},{v}) leaves the vertex range")));
            }
            out[u].push(v);
        }
        Self::new(out)
    }

    pub fn len(&self) -> usize {
        self.out.len()
    }

    pub fn is_empty(&self) -> bool {
        self.out.is_empty()
    }

    pub fn out_neighbors(&self, v: usize) -> &[usize] {
        &self.out[v]
    }

    pub fn in_neighbors(&self, v: usize) -> &[usize] {
        &self.inc[v]
    }

    pub fn out_degree(&self, v: usize) -> usize {
        self.out[v].len()
    }

    pub fn max_out_degree(&self) -> usize {
        self.out.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn arcs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.out
            .iter()
            .enumerate()
            .flat_map(|(u, list)| list.iter().map(move |&v| (u, v)))
    }

    /// Neighbors in the undirected version, sorted and without repeats.
    pub fn undirected_neighbors(&self, v: usize) -> Vec<usize> {
        let mut nb: Vec<usize> = self.out[v].iter().chain(&self.inc[v]).copied().collect();
        nb.sort_unstable();
        nb.dedup();
        nb
    }

    /// Subgraph induced by `keep` (sorted); vertex `p` of the result is `keep[p]`.
    pub fn induced(&self, keep: &[usize]) -> DiGraph {
        let mut pos = vec![usize::MAX; self.len()];
        for (p, &v) in keep.iter().enumerate() {
            pos[v] = p;
        }
        let out = keep
            .iter()
            .map(|&v| {
                self.out[v]
                    .iter()
                    .filter(|&&w| pos[w] != usize::MAX)
                    .map(|&w| pos[w])
                    .collect()
            })
            .collect();
        DiGraph::new(out).expect("induced subgraph of a valid graph is valid")
    }

    pub(crate) fn check_out_degree(&self, d: usize) -> Result<()> {
        match (0..self.len()).find(|&v| self.out_degree(v) > d) {
            None => Ok(()),
            Some(v) => Err(Error::Degree {
                vertex: v,
                out_degree: self.out_degree(v),
                bound: d,
            }),
        }
    }
}

/// A color per vertex together with the palette the colors were drawn from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Coloring {
    pub colors: Vec<usize>,
    pub palette: usize,
}

impl Coloring {
    pub fn num_colors_used(&self) -> usize {
        self.colors.iter().collect::<BTreeSet<_>>().len()
    }

    pub fn class(&self, c: usize) -> impl Iterator<Item = usize> + '_ {
        self.colors
            .iter()
            .enumerate()
            .filter(move |&(_, &col)| col == c)
            .map(|(v, _)| v)
    }
}

/// Vertices in the order they are colored: the reverse of repeatedly removing
/// a vertex of minimum total degree.
pub fn coloring_order(g: &DiGraph) -> Vec<usize> {
    let n = g.len();
    let mut deg: Vec<usize> = (0..n).map(|v| g.out[v].len() + g.inc[v].len()).collect();
    let mut queue: BTreeSet<(usize, usize)> = (0..n).map(|v| (deg[v], v)).collect();
    let mut removed = vec![false; n];
    let mut order = Vec::with_capacity(n);
    while let Some((_, v)) = queue.pop_first() {
        removed[v] = true;
        order.push(v);
        for &u in g.out[v].iter().chain(&g.inc[v]) {
            if !removed[u] {
                queue.remove(&(deg[u], u));
                deg[u] -= 1;
                queue.insert((deg[u], u));
            }
        }
    }
    order.reverse();
    order
}

fn used_colors(g: &DiGraph, v: usize, colors: &[usize], palette: usize) -> Vec<bool> {
    let mut used = vec![false; palette];
    for &u in g.out[v].iter().chain(&g.inc[v]) {
        if colors[u] < palette {
            used[colors[u]] = true;
        }
    }
    used
}

/// Greedy coloring of the undirected version with at most `2d + 1` colors.
pub fn color_directed_graph(g: &DiGraph, d: usize) -> Result<Coloring> {
    g.check_out_degree(d)?;
    let palette = 2 * d + 1;
    let mut colors = vec![usize::MAX; g.len()];
    for v in coloring_order(g) {
        let used = used_colors(g, v, &colors, palette);
        let c = used
            .iter()
            .position(|u| !u)
            .expect("a minimum-total-degree vertex has at most 2d colored neighbors");
        colors[v] = c;
    }
    Ok(Coloring { colors, palette })
}

/// `ceil(d^(1-eps))`, the number of candidate colors per vertex.
pub fn neg_corr_choices(d: usize, epsilon: f64) -> usize {
    let v = (d as f64).powf(1.0 - epsilon);
    // powf can overshoot an exact integer by an ulp or two
    ((v - 1e-9).ceil() as usize).max(1)
}

/// `ceil(2d + d^(1-eps))`.
pub fn neg_corr_palette(d: usize, epsilon: f64) -> usize {
    2 * d + neg_corr_choices(d, epsilon)
}

pub(crate) fn check_neg_corr_args(d: usize, epsilon: f64) -> Result<()> {
    if d == 0 {
        return Err(Error::Param("near-negative-correlation coloring needs d >= 1".into()));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Param(format!("epsilon must lie in (0,1), got {epsilon}")));
    }
    Ok(())
}

/// The smallest `choices` colors of `[0, palette)` not used by colored
/// neighbors of `v`.
pub(crate) fn candidate_colors(
    g: &DiGraph,
    v: usize,
    colors: &[usize],
    palette: usize,
    choices: usize,
) -> Vec<usize> {
    let used = used_colors(g, v, colors, palette);
    let cand: Vec<usize> = (0..palette).filter(|&c| !used[c]).take(choices).collect();
    assert_eq!(
        cand.len(),
        choices,
        "vertex {v}: fewer than {choices} free colors in a palette of {palette}"
    );
    cand
}

/// Randomized coloring from a palette of `ceil(2d + d^(1-eps))` colors: each
/// vertex draws uniformly among the `ceil(d^(1-eps))` smallest free colors.
pub fn color_neg_corr<R: Rng + ?Sized>(
    g: &DiGraph,
    d: usize,
    epsilon: f64,
    rng: &mut R,
) -> Result<Coloring> {
    check_neg_corr_args(d, epsilon)?;
    g.check_out_degree(d)?;
    let choices = neg_corr_choices(d, epsilon);
    let palette = 2 * d + choices;
    let mut colors = vec![usize::MAX; g.len()];
    for v in coloring_order(g) {
        let cand = candidate_colors(g, v, &colors, palette, choices);
        colors[v] = cand[rng.gen_range(0..choices)];
    }
    Ok(Coloring { colors, palette })
}

/// True iff `chi` colors every vertex and the endpoints of every arc differ.
pub fn verify_coloring(g: &DiGraph, chi: &Coloring) -> bool {
    chi.colors.len() == g.len() && g.arcs().all(|(u, v)| chi.colors[u] != chi.colors[v])
}
