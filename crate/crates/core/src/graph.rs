//! Simple undirected graphs on agents `0..n` that evolve over time.
//!
//! Adjacency is stored as one bit row per vertex, giving O(1) edge queries
//! and neighbor iteration in ascending vertex order. All randomized
//! mutations iterate in ascending order so that a given stream always
//! produces the same graph.

use std::collections::VecDeque;
use std::fmt::Write as _;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::index;
use rand_distr::{Binomial, Distribution};
use thiserror::Error;

use crate::rng::RngStream;

/// Largest vertex count accepted by [`DynamicGraph::cheeger_constant`].
pub const CHEEGER_MAX_N: usize = 16;

/// Default cap on rejection-sampling attempts in [`er_connected`].
pub const DEFAULT_ER_ATTEMPTS: usize = 10_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("graph must have at least one vertex")]
    Empty,
    #[error("agent {agent} out of range for n = {n}")]
    AgentOutOfRange { agent: usize, n: usize },
    #[error("self-loop at vertex {0}")]
    SelfLoop(usize),
    #[error("duplicate edge {{{0}, {1}}}")]
    DuplicateEdge(usize, usize),
    #[error("probability {0} outside [0, 1]")]
    InvalidProbability(f64),
    #[error(
        "no connected G({n}, {p}) sample in {attempts} attempts \
         (connectivity threshold ln(n)/n = {threshold:.4})"
    )]
    NotConnected {
        n: usize,
        p: f64,
        attempts: usize,
        threshold: f64,
    },
    #[error("operation needs at least 2 vertices, graph has {0}")]
    TooFewVertices(usize),
    #[error("exhaustive Cheeger constant supports 2..={CHEEGER_MAX_N} vertices, got {0}")]
    CheegerRange(usize),
    #[error("malformed edge list line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// How [`DynamicGraph::flip_nonincident_pairs`] draws its toggles.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum FlipMethod {
    /// Draw the toggle count from a binomial, then that many distinct pairs.
    #[default]
    Binomial,
    /// One Bernoulli trial per eligible pair.
    PerPair,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DynamicGraph {
    n: usize,
    words: usize,
    bits: Vec<u64>,
    degree: Vec<usize>,
    edge_count: usize,
}

/// Connected components. Ids are assigned in order of each component's
/// smallest vertex.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ComponentPartition {
    pub assignments: Vec<usize>,
    pub count: usize,
}

impl ComponentPartition {
    /// Vertices of each component, ascending.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.count];
        for (v, &c) in self.assignments.iter().enumerate() {
            out[c].push(v);
        }
        out
    }
}

fn check_probability(p: f64) -> Result<(), GraphError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(GraphError::InvalidProbability(p))
    }
}

impl DynamicGraph {
    /// Edgeless graph on `n` vertices.
    pub fn empty(n: usize) -> Result<Self, GraphError> {
        if n == 0 {
            return Err(GraphError::Empty);
        }
        let words = n.div_ceil(64);
        Ok(Self {
            n,
            words,
            bits: vec![0; n * words],
            degree: vec![0; n],
            edge_count: 0,
        })
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        let mut g = Self::empty(n)?;
        for &(u, v) in edges {
            g.check_agent(u)?;
            g.check_agent(v)?;
            if u == v {
                return Err(GraphError::SelfLoop(u));
            }
            if !g.insert_edge(u, v) {
                return Err(GraphError::DuplicateEdge(u.min(v), u.max(v)));
            }
        }
        Ok(g)
    }

    pub fn complete(n: usize) -> Result<Self, GraphError> {
        let mut g = Self::empty(n)?;
        for u in 0..n {
            for v in u + 1..n {
                g.insert_edge(u, v);
            }
        }
        Ok(g)
    }

    /// Path `0 - 1 - ... - (n-1)`.
    pub fn path(n: usize) -> Result<Self, GraphError> {
        let edges: Vec<_> = (1..n).map(|v| (v - 1, v)).collect();
        Self::from_edges(n, &edges)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn check_agent(&self, agent: usize) -> Result<(), GraphError> {
        if agent < self.n {
            Ok(())
        } else {
            Err(GraphError::AgentOutOfRange { agent, n: self.n })
        }
    }

    #[inline]
    fn row(&self, u: usize) -> &[u64] {
        &self.bits[u * self.words..(u + 1) * self.words]
    }

    #[inline]
    fn bit(&self, u: usize, v: usize) -> bool {
        self.bits[u * self.words + v / 64] >> (v % 64) & 1 == 1
    }

    #[inline]
    fn flip_bit(&mut self, u: usize, v: usize) {
        self.bits[u * self.words + v / 64] ^= 1 << (v % 64);
    }

    /// Panics if either endpoint is out of range.
    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        assert!(u < self.n && v < self.n, "vertex out of range");
        u != v && self.bit(u, v)
    }

    pub fn degree(&self, u: usize) -> usize {
        self.degree[u]
    }

    pub fn max_degree(&self) -> usize {
        self.degree.iter().copied().max().unwrap_or(0)
    }

    /// Neighbors of `u` in ascending order.
    pub fn neighbors(&self, u: usize) -> impl Iterator<Item = usize> + '_ {
        self.row(u).iter().enumerate().flat_map(|(w, &word)| {
            let mut rest = word;
            std::iter::from_fn(move || {
                if rest == 0 {
                    None
                } else {
                    let b = rest.trailing_zeros() as usize;
                    rest &= rest - 1;
                    Some(w * 64 + b)
                }
            })
        })
    }

    /// Edges as `(u, v)` with `u < v`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n).flat_map(move |u| self.neighbors(u).filter(move |&v| v > u).map(move |v| (u, v)))
    }

    /// Returns false if the edge was already present.
    pub fn insert_edge(&mut self, u: usize, v: usize) -> bool {
        assert!(u != v, "self-loop");
        if self.bit(u, v) {
            return false;
        }
        self.toggle_edge(u, v);
        true
    }

    /// Returns false if the edge was absent.
    pub fn remove_edge(&mut self, u: usize, v: usize) -> bool {
        if u == v || !self.bit(u, v) {
            return false;
        }
        self.toggle_edge(u, v);
        true
    }

    /// Flips presence of `{u, v}`; returns whether the edge exists afterwards.
    pub fn toggle_edge(&mut self, u: usize, v: usize) -> bool {
        assert!(u != v, "self-loop");
        let present = self.bit(u, v);
        self.flip_bit(u, v);
        self.flip_bit(v, u);
        if present {
            self.degree[u] -= 1;
            self.degree[v] -= 1;
            self.edge_count -= 1;
        } else {
            self.degree[u] += 1;
            self.degree[v] += 1;
            self.edge_count += 1;
        }
        !present
    }

    /// `{i}` together with the neighbors of `i`, ascending.
    pub fn closed_neighborhood(&self, i: usize) -> Result<Vec<usize>, GraphError> {
        self.check_agent(i)?;
        let mut out: Vec<usize> = self.neighbors(i).collect();
        let pos = out.partition_point(|&v| v < i);
        out.insert(pos, i);
        Ok(out)
    }

    pub fn components(&self) -> ComponentPartition {
        const UNSEEN: usize = usize::MAX;
        let mut assignments = vec![UNSEEN; self.n];
        let mut count = 0;
        let mut queue = VecDeque::new();
        for start in 0..self.n {
            if assignments[start] != UNSEEN {
                continue;
            }
            assignments[start] = count;
            queue.push_back(start);
            while let Some(u) = queue.pop_front() {
                for v in self.neighbors(u) {
                    if assignments[v] == UNSEEN {
                        assignments[v] = count;
                        queue.push_back(v);
                    }
                }
            }
            count += 1;
        }
        ComponentPartition { assignments, count }
    }

    pub fn is_connected(&self) -> bool {
        self.components().count == 1
    }

    /// `D - A`.
    pub fn laplacian(&self) -> DMatrix<f64> {
        let mut l = DMatrix::zeros(self.n, self.n);
        for u in 0..self.n {
            l[(u, u)] = self.degree[u] as f64;
            for v in self.neighbors(u) {
                l[(u, v)] = -1.0;
            }
        }
        l
    }

    /// Laplacian eigenvalues in ascending order.
    pub fn laplacian_spectrum(&self) -> Vec<f64> {
        let mut eig: Vec<f64> = SymmetricEigen::new(self.laplacian())
            .eigenvalues
            .iter()
            .copied()
            .collect();
        eig.sort_by(f64::total_cmp);
        eig
    }

    /// Algebraic connectivity: the second-smallest Laplacian eigenvalue.
    /// Exactly zero for disconnected graphs.
    pub fn lambda2(&self) -> Result<f64, GraphError> {
        if self.n < 2 {
            return Err(GraphError::TooFewVertices(self.n));
        }
        if !self.is_connected() {
            return Ok(0.0);
        }
        Ok(self.laplacian_spectrum()[1].max(0.0))
    }

    /// Exact isoperimetric number `min |∂S| / |S|` over nonempty `S` with
    /// `|S| <= n/2`, by enumerating every subset.
    pub fn cheeger_constant(&self) -> Result<f64, GraphError> {
        if !(2..=CHEEGER_MAX_N).contains(&self.n) {
            return Err(GraphError::CheegerRange(self.n));
        }
        let rows: Vec<u64> = (0..self.n).map(|u| self.row(u)[0]).collect();
        let half = self.n / 2;
        let mut best = f64::INFINITY;
        for mask in 1u64..(1 << self.n) {
            let size = mask.count_ones() as usize;
            if size > half {
                continue;
            }
            let mut boundary = 0u32;
            let mut rest = mask;
            while rest != 0 {
                let u = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                boundary += (rows[u] & !mask).count_ones();
            }
            best = best.min(f64::from(boundary) / size as f64);
        }
        Ok(best)
    }

    /// Removes each edge incident to `i` independently with probability
    /// `q_shrink`, one draw per incident edge in ascending neighbor order.
    /// Returns the number of removed edges.
    pub fn shrink_neighborhood(
        &mut self,
        i: usize,
        q_shrink: f64,
        rng: &mut RngStream,
    ) -> Result<usize, GraphError> {
        self.check_agent(i)?;
        check_probability(q_shrink)?;
        let incident: Vec<usize> = self.neighbors(i).collect();
        let mut removed = 0;
        for j in incident {
            if rng.bernoulli(q_shrink) {
                self.remove_edge(i, j);
                removed += 1;
            }
        }
        Ok(removed)
    }

    /// Toggles each unordered pair avoiding `i` independently with
    /// probability `q_flip`. Returns the number of toggled pairs.
    pub fn flip_nonincident_pairs(
        &mut self,
        i: usize,
        q_flip: f64,
        rng: &mut RngStream,
        method: FlipMethod,
    ) -> Result<usize, GraphError> {
        self.check_agent(i)?;
        check_probability(q_flip)?;
        let m = self.n - 1;
        // Position among the vertices other than `i`.
        let vertex = |a: usize| if a < i { a } else { a + 1 };
        match method {
            FlipMethod::PerPair => {
                let mut toggles = 0;
                for a in 0..m {
                    for b in a + 1..m {
                        if rng.bernoulli(q_flip) {
                            self.toggle_edge(vertex(a), vertex(b));
                            toggles += 1;
                        }
                    }
                }
                Ok(toggles)
            }
            FlipMethod::Binomial => {
                let pairs = m * m.saturating_sub(1) / 2;
                if pairs == 0 {
                    return Ok(0);
                }
                let k = Binomial::new(pairs as u64, q_flip)
                    .expect("probability already validated")
                    .sample(rng) as usize;
                for rank in index::sample(rng, pairs, k).into_iter() {
                    let (a, b) = unrank_pair(rank, m);
                    self.toggle_edge(vertex(a), vertex(b));
                }
                Ok(k)
            }
        }
    }

    /// One `u v` line per edge, 1-indexed, lexicographically sorted.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for (u, v) in self.edges() {
            writeln!(out, "{} {}", u + 1, v + 1).expect("write to String");
        }
        out
    }

    /// Inverse of [`to_edge_list`](Self::to_edge_list). Blank lines are ignored.
    pub fn from_edge_list(n: usize, text: &str) -> Result<Self, GraphError> {
        let mut edges = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |reason: &str| GraphError::Parse {
                line: lineno + 1,
                reason: reason.to_owned(),
            };
            let mut fields = line.split_whitespace();
            let mut next = || -> Result<usize, GraphError> {
                let tok = fields.next().ok_or_else(|| parse_err("expected two vertices"))?;
                let v: usize = tok.parse().map_err(|_| parse_err("vertex is not an integer"))?;
                v.checked_sub(1).ok_or_else(|| parse_err("vertices are 1-indexed"))
            };
            let (u, v) = (next()?, next()?);
            if fields.next().is_some() {
                return Err(parse_err("trailing fields"));
            }
            edges.push((u, v));
        }
        Self::from_edges(n, &edges)
    }
}

/// Maps `rank` in `0..m(m-1)/2` to the pair `(a, b)`, `a < b < m`, in
/// lexicographic order.
fn unrank_pair(rank: usize, m: usize) -> (usize, usize) {
    // Pairs starting at row `a` begin at offset a*m - a(a+1)/2.
    let offset = |a: usize| a * m - a * (a + 1) / 2;
    let mf = m as f64;
    let guess = (mf - 0.5 - ((mf - 0.5).powi(2) - 2.0 * rank as f64).max(0.0).sqrt()).floor();
    let mut a = (guess.max(0.0) as usize).min(m.saturating_sub(2));
    while a > 0 && offset(a) > rank {
        a -= 1;
    }
    while offset(a + 1) <= rank {
        a += 1;
    }
    (a, a + 1 + rank - offset(a))
}

/// `G(n, p)` sample: each pair included independently, lexicographic order.
pub fn er_sample(n: usize, p: f64, rng: &mut RngStream) -> Result<DynamicGraph, GraphError> {
    check_probability(p)?;
    let mut g = DynamicGraph::empty(n)?;
    for u in 0..n {
        for v in u + 1..n {
            if rng.bernoulli(p) {
                g.insert_edge(u, v);
            }
        }
    }
    Ok(g)
}

/// First connected `G(n, p)` sample within `max_attempts` tries.
pub fn er_connected(
    n: usize,
    p: f64,
    rng: &mut RngStream,
    max_attempts: usize,
) -> Result<DynamicGraph, GraphError> {
    check_probability(p)?;
    for _ in 0..max_attempts {
        let g = er_sample(n, p, rng)?;
        if g.is_connected() {
            return Ok(g);
        }
    }
    Err(GraphError::NotConnected {
        n,
        p,
        attempts: max_attempts,
        threshold: (n as f64).ln() / n as f64,
    })
}
