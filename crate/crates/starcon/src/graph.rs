//! Directed interaction graphs and nonnegative weight matrices.
//!
//! A weight matrix A ties to a directed graph through its sign pattern:
//! a_ij > 0 exactly when (i,j) is an edge. The well-posedness inequality
//! a_ii·min γ_i > Σ_{j≠i} a_ij·max γ_j per row keeps every mixed state
//! away from the origin, so the radial projection in the update is always
//! defined.

use std::collections::BTreeSet;
use std::io::Write;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BoundaryFamily;

/// Directed graph on nodes {1,…,n}. Edges are stored 0-based; the JSON
/// form uses 1-based pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirectedGraph {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl DirectedGraph {
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("graph needs at least one node".into()));
        }
        let mut set = BTreeSet::new();
        for (i, j) in edges {
            if i >= n || j >= n {
                return Err(Error::InvalidParameter(format!(
                    "edge ({i},{j}) out of range for n={n}"
                )));
            }
            set.insert((i, j));
        }
        Ok(Self { n, edges: set })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.edges.contains(&(i, j))
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn has_all_self_loops(&self) -> bool {
        (0..self.n).all(|i| self.edges.contains(&(i, i)))
    }

    /// True when every node reaches every node: forward and reverse
    /// reachability from node 0 both cover the graph. Self-loops are
    /// irrelevant.
    pub fn is_strongly_connected(&self) -> bool {
        self.reaches_all(false) && self.reaches_all(true)
    }

    fn reaches_all(&self, reversed: bool) -> bool {
        let mut seen = vec![false; self.n];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for &(i, j) in &self.edges {
                let (from, to) = if reversed { (j, i) } else { (i, j) };
                if from == v && !seen[to] {
                    seen[to] = true;
                    count += 1;
                    stack.push(to);
                }
            }
        }
        count == self.n
    }

    /// Random strongly connected graph: a random Hamiltonian directed
    /// cycle (guaranteeing strong connectivity), all self-loops, and each
    /// remaining ordered pair independently with `extra_edge_prob`.
    pub fn random_scc(n: usize, extra_edge_prob: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::random_scc_from(n, extra_edge_prob, &mut rng)
    }

    pub fn random_scc_from<R: Rng + ?Sized>(
        n: usize,
        extra_edge_prob: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParameter(format!("random graph needs n >= 2, got {n}")));
        }
        if !(0.0..=1.0).contains(&extra_edge_prob) {
            return Err(Error::InvalidParameter(format!(
                "extra_edge_prob must be in [0,1], got {extra_edge_prob}"
            )));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        let mut edges = BTreeSet::new();
        for i in 0..n {
            edges.insert((i, i));
            edges.insert((order[i], order[(i + 1) % n]));
        }
        for i in 0..n {
            for j in 0..n {
                if i != j && !edges.contains(&(i, j)) && rng.random_bool(extra_edge_prob) {
                    edges.insert((i, j));
                }
            }
        }
        Ok(Self { n, edges })
    }
}

#[derive(Serialize, Deserialize)]
struct GraphJson {
    n: usize,
    edges: Vec<(usize, usize)>,
}

impl Serialize for DirectedGraph {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        GraphJson {
            n: self.n,
            edges: self.edges.iter().map(|&(i, j)| (i + 1, j + 1)).collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for DirectedGraph {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = GraphJson::deserialize(d)?;
        let edges: Result<Vec<_>> = raw
            .edges
            .iter()
            .map(|&(i, j)| {
                if i == 0 || j == 0 {
                    Err(Error::InvalidParameter("graph JSON uses 1-based node indices".into()))
                } else {
                    Ok((i - 1, j - 1))
                }
            })
            .collect();
        DirectedGraph::new(raw.n, edges.map_err(serde::de::Error::custom)?)
            .map_err(serde::de::Error::custom)
    }
}

/// Outcome of the per-row well-posedness inequality.
#[derive(Debug, Clone)]
pub struct Lemma1Report {
    pub holds: bool,
    /// lhs − rhs of a_ii·min γ_i > Σ_{j≠i} a_ij·max γ_j per row.
    pub margins: Vec<f64>,
}

/// Nonnegative n×n matrix whose positive entries coincide with the edges
/// of a directed graph.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    entries: DMatrix<f64>,
    graph: DirectedGraph,
    sigma_l: f64,
    sigma_u: f64,
}

impl WeightMatrix {
    /// Validates entries against the graph pattern: a_ij > 0 ⟺ (i,j) ∈ E.
    pub fn new(entries: DMatrix<f64>, graph: DirectedGraph) -> Result<Self> {
        let n = graph.n();
        if entries.nrows() != n || entries.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: format!("{n}x{n} matrix"),
                got: format!("{}x{}", entries.nrows(), entries.ncols()),
            });
        }
        for i in 0..n {
            for j in 0..n {
                let v = entries[(i, j)];
                if v < 0.0 || !v.is_finite() {
                    return Err(Error::InvalidParameter(format!(
                        "entry ({i},{j}) = {v} must be finite and nonnegative"
                    )));
                }
                if (v > 0.0) != graph.has_edge(i, j) {
                    return Err(Error::InvalidParameter(format!(
                        "entry ({i},{j}) = {v} does not match the edge pattern"
                    )));
                }
            }
        }
        let (sigma_l, sigma_u) = sigma_bounds(&entries);
        Ok(Self { entries, graph, sigma_l, sigma_u })
    }

    /// Builds the graph from the positive pattern of `entries`.
    pub fn from_entries(entries: DMatrix<f64>) -> Result<Self> {
        let n = entries.nrows();
        if entries.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: format!("square matrix ({n} rows)"),
                got: format!("{}x{}", n, entries.ncols()),
            });
        }
        let mut edges = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if entries[(i, j)] > 0.0 {
                    edges.push((i, j));
                }
            }
        }
        Self::new(entries, DirectedGraph::new(n, edges)?)
    }

    /// Random weights on a strongly connected graph with all self-loops:
    /// off-diagonal edges get weights from [0.1, 1] and each diagonal
    /// entry is set to (Σ_{j≠i} a_ij·max γ_j)/min γ_i scaled by 1+μ with
    /// μ ∈ [0.05, 1], so the well-posedness inequality holds with an
    /// explicit positive margin.
    pub fn random(graph: &DirectedGraph, family: &BoundaryFamily, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::random_from(graph, family, &mut rng)
    }

    pub fn random_from<R: Rng + ?Sized>(
        graph: &DirectedGraph,
        family: &BoundaryFamily,
        rng: &mut R,
    ) -> Result<Self> {
        let n = graph.n();
        if family.n() != n {
            return Err(Error::DimensionMismatch {
                expected: format!("family with {n} boundaries"),
                got: format!("{}", family.n()),
            });
        }
        if !graph.has_all_self_loops() {
            return Err(Error::Precondition("graph must contain every self-loop".into()));
        }
        let mut entries = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                if i != j && graph.has_edge(i, j) {
                    entries[(i, j)] = rng.random_range(0.1..=1.0);
                }
            }
        }
        for i in 0..n {
            let off_sum: f64 = (0..n)
                .filter(|&j| j != i)
                .map(|j| entries[(i, j)] * family.gamma(j).gamma_max())
                .sum();
            let margin = rng.random_range(0.05..=1.0);
            entries[(i, i)] = off_sum / family.gamma(i).gamma_min() * (1.0 + margin);
        }
        Self::new(entries, graph.clone())
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn graph(&self) -> &DirectedGraph {
        &self.graph
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    /// Smallest positive entry.
    pub fn sigma_l(&self) -> f64 {
        self.sigma_l
    }

    /// Largest entry.
    pub fn sigma_u(&self) -> f64 {
        self.sigma_u
    }

    /// Same pattern scaled by α > 0.
    pub fn scale(&self, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(Error::InvalidParameter(format!("scale factor must be positive, got {alpha}")));
        }
        Self::new(&self.entries * alpha, self.graph.clone())
    }

    /// Per-row margins of a_ii·min γ_i > Σ_{j≠i} a_ij·max γ_j.
    pub fn check_lemma1(&self, family: &BoundaryFamily) -> Result<Lemma1Report> {
        let n = self.n();
        if family.n() != n {
            return Err(Error::DimensionMismatch {
                expected: format!("family with {n} boundaries"),
                got: format!("{}", family.n()),
            });
        }
        let mut margins = Vec::with_capacity(n);
        for i in 0..n {
            let lhs = self.entries[(i, i)] * family.gamma(i).gamma_min();
            let rhs: f64 = (0..n)
                .filter(|&j| j != i)
                .map(|j| self.entries[(i, j)] * family.gamma(j).gamma_max())
                .sum();
            margins.push(lhs - rhs);
        }
        Ok(Lemma1Report { holds: margins.iter().all(|m| *m > 0.0), margins })
    }

    /// Strongly connected graph, all self-loops present, pattern matched,
    /// and the well-posedness inequality satisfied in every row.
    pub fn check_assumption2(&self, family: &BoundaryFamily) -> Result<bool> {
        Ok(self.graph.is_strongly_connected()
            && self.graph.has_all_self_loops()
            && self.check_lemma1(family)?.holds)
    }

    /// CSV export: n rows of comma-separated entries, shortest
    /// round-trip decimals.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let n = self.n();
        for i in 0..n {
            let line: Vec<String> = (0..n).map(|j| format!("{}", self.entries[(i, j)])).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }
}

fn sigma_bounds(entries: &DMatrix<f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = 0.0_f64;
    for v in entries.iter() {
        if *v > 0.0 {
            lo = lo.min(*v);
        }
        hi = hi.max(*v);
    }
    (lo, hi)
}

#[derive(Serialize, Deserialize)]
struct WeightsJson {
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    graph: DirectedGraph,
}

impl Serialize for WeightMatrix {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let n = self.n();
        WeightsJson {
            a: (0..n).map(|i| (0..n).map(|j| self.entries[(i, j)]).collect()).collect(),
            graph: self.graph.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for WeightMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = WeightsJson::deserialize(d)?;
        let n = raw.graph.n();
        if raw.a.len() != n || raw.a.iter().any(|r| r.len() != n) {
            return Err(serde::de::Error::custom("weight matrix shape does not match graph"));
        }
        let entries = DMatrix::from_fn(n, n, |i, j| raw.a[i][j]);
        WeightMatrix::new(entries, raw.graph).map_err(serde::de::Error::custom)
    }
}
