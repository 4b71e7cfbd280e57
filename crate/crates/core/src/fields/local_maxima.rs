//! Number of local maxima of i.i.d. continuous values on a regular graph.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neighborhoods::NeighborhoodSystem;

/// An undirected simple graph with labelled vertices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    labels: Vec<String>,
    adjacency: Vec<Vec<usize>>,
}

impl Graph {
    pub fn new(labels: Vec<String>, edges: &[(usize, usize)]) -> Result<Self> {
        let n = labels.len();
        let mut adjacency = vec![Vec::new(); n];
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::Structural(format!("edge ({u}, {v}) outside 0..{n}")));
            }
            if u != v {
                adjacency[u].push(v);
                adjacency[v].push(u);
            }
        }
        for adj in &mut adjacency {
            adj.sort_unstable();
            adj.dedup();
        }
        Ok(Graph { labels, adjacency })
    }

    pub fn cycle(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidArgument("a cycle needs at least 3 vertices".into()));
        }
        let edges: Vec<_> = (0..n).map(|i| (i, (i + 1) % n)).collect();
        Self::new((0..n).map(|i| i.to_string()).collect(), &edges)
    }

    pub fn complete(n: usize) -> Result<Self> {
        let edges: Vec<_> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        Self::new((0..n).map(|i| i.to_string()).collect(), &edges)
    }

    /// `d × d` torus grid (4-regular for `side ≥ 3`).
    pub fn torus(side: usize) -> Result<Self> {
        if side < 3 {
            return Err(Error::InvalidArgument("a torus needs side ≥ 3".into()));
        }
        let idx = |r: usize, c: usize| (r % side) * side + (c % side);
        let mut edges = Vec::new();
        for r in 0..side {
            for c in 0..side {
                edges.push((idx(r, c), idx(r, c + 1)));
                edges.push((idx(r, c), idx(r + 1, c)));
            }
        }
        Self::new((0..side * side).map(|i| i.to_string()).collect(), &edges)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }

    pub fn max_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Common degree, or `None` when the graph is not regular.
    pub fn regular_degree(&self) -> Option<usize> {
        let d = self.adjacency.first()?.len();
        self.adjacency.iter().all(|a| a.len() == d).then_some(d)
    }

    /// `|N_i ∩ N_j|`.
    pub fn common_neighbors(&self, i: usize, j: usize) -> usize {
        let (a, b) = (&self.adjacency[i], &self.adjacency[j]);
        a.iter().filter(|x| b.binary_search(x).is_ok()).count()
    }

    /// Vertices at shortest-path distance exactly 2 from `i`.
    pub fn distance_two(&self, i: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self.adjacency[i]
            .iter()
            .flat_map(|&k| self.adjacency[k].iter().copied())
            .filter(|&j| j != i && self.adjacency[i].binary_search(&j).is_err())
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }
}

/// Exact moments of the local-maxima count on a `d`-regular graph:
/// `EW = |V|/(d+1)` and
/// `σ² = Σ_{d(i,j)=2} s(i,j) (2d+2−s(i,j))⁻¹ (d+1)⁻²` with `s(i,j) = |N_i ∩ N_j|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalMaximaMoments {
    pub degree: usize,
    pub vertices: usize,
    pub mean: f64,
    pub variance: f64,
}

pub fn local_maxima_moments(graph: &Graph) -> Result<LocalMaximaMoments> {
    let d = graph
        .regular_degree()
        .ok_or_else(|| Error::InvalidArgument("local maxima field needs a regular graph".into()))?;
    if d == 0 {
        return Err(Error::InvalidArgument("local maxima field needs degree ≥ 1".into()));
    }
    let df = d as f64;
    let mut variance = 0.0;
    for i in 0..graph.len() {
        for j in graph.distance_two(i) {
            let s = graph.common_neighbors(i, j) as f64;
            variance += s / ((2.0 * df + 2.0 - s) * (df + 1.0) * (df + 1.0));
        }
    }
    Ok(LocalMaximaMoments {
        degree: d,
        vertices: graph.len(),
        mean: graph.len() as f64 / (df + 1.0),
        variance,
    })
}

#[derive(Debug, Clone)]
pub struct LocalMaximaField {
    pub(crate) graph: Graph,
    pub(crate) moments: LocalMaximaMoments,
    sigma: f64,
    /// `1/(d+1)`, the mean of each indicator.
    p: f64,
}

impl LocalMaximaField {
    pub(crate) fn new(graph: Graph) -> Result<Self> {
        let moments = local_maxima_moments(&graph)?;
        if moments.variance <= 0.0 {
            return Err(Error::Degenerate(format!(
                "local maxima count has zero variance on this graph (EW = {})",
                moments.mean
            )));
        }
        Ok(LocalMaximaField {
            p: 1.0 / (moments.degree as f64 + 1.0),
            sigma: moments.variance.sqrt(),
            graph,
            moments,
        })
    }

    pub fn moments(&self) -> LocalMaximaMoments {
        self.moments
    }

    /// Map a standardized `W` back to the raw count of local maxima.
    pub fn raw_count(&self, w: f64) -> f64 {
        w * self.sigma + self.moments.mean
    }

    fn indicators(&self, ranks: &[usize], out: &mut [f64]) {
        for (i, x) in out.iter_mut().enumerate() {
            let is_max = self.graph.neighbors(i).iter().all(|&j| ranks[i] > ranks[j]);
            *x = ((is_max as u8 as f64) - self.p) / self.sigma;
        }
    }

    /// Ranks come from a uniform random permutation, so ties cannot occur.
    pub(crate) fn fill(&self, rng: &mut impl Rng, ranks: &mut Vec<usize>, out: &mut [f64]) {
        let n = self.graph.len();
        ranks.clear();
        ranks.extend(0..n);
        for k in (1..n).rev() {
            let j = rng.random_range(0..=k);
            ranks.swap(k, j);
        }
        self.indicators(ranks, out);
    }

    pub(crate) fn outcome_count(&self) -> Option<u64> {
        (1..=self.graph.len() as u64).try_fold(1u64, |acc, k| acc.checked_mul(k))
    }

    /// Visit all `n!` rank orderings (Heap's algorithm), each with mass `1/n!`.
    pub(crate) fn for_each_outcome(&self, mut f: impl FnMut(f64, &[f64])) {
        let n = self.graph.len();
        let total = self.outcome_count().unwrap_or(u64::MAX);
        let p = 1.0 / total as f64;
        let mut ranks: Vec<usize> = (0..n).collect();
        let mut out = vec![0.0; n];
        let mut c = vec![0usize; n];
        self.indicators(&ranks, &mut out);
        f(p, &out);
        let mut i = 0;
        while i < n {
            if c[i] < i {
                if i % 2 == 0 {
                    ranks.swap(0, i);
                } else {
                    ranks.swap(c[i], i);
                }
                self.indicators(&ranks, &mut out);
                f(p, &out);
                c[i] += 1;
                i = 0;
            } else {
                c[i] = 0;
                i += 1;
            }
        }
    }

    pub(crate) fn covariance(&self, i: usize, j: usize) -> f64 {
        let df = self.moments.degree as f64;
        let q = (df + 1.0) * (df + 1.0);
        let raw = if i == j {
            df / q
        } else if self.graph.neighbors(i).binary_search(&j).is_ok() {
            -1.0 / q
        } else {
            let s = self.graph.common_neighbors(i, j) as f64;
            if s > 0.0 {
                s / ((2.0 * df + 2.0 - s) * q)
            } else {
                0.0
            }
        };
        raw / self.moments.variance
    }

    /// Closed neighborhood: the ranks `X_i` is a function of.
    pub(crate) fn support(&self, i: usize) -> Vec<usize> {
        let mut s = self.graph.neighbors(i).to_vec();
        s.push(i);
        s.sort_unstable();
        s
    }

    /// `A_i = {j : d(i,j) ≤ 2}` closed to LD4*.
    pub(crate) fn system(&self) -> Result<NeighborhoodSystem> {
        let mut edges = Vec::new();
        for i in 0..self.graph.len() {
            for &j in self.graph.neighbors(i) {
                edges.push((i, j));
            }
            for j in self.graph.distance_two(i) {
                edges.push((i, j));
            }
        }
        NeighborhoodSystem::from_adjacency(self.graph.labels.clone(), &edges)?.closure_extend()
    }
}
