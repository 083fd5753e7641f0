//! Unnormalised Laplacians over private-type nodes.
//!
//! Private types (terms, fields) have no edges among themselves, so adjacency
//! is shared-neighbour co-occurrence: `w_ij` is the number of distinct nodes
//! adjacent to both `i` and `j` through any relation incident to the type.

use std::collections::{BTreeMap, BTreeSet};

use log::warn;
use ndarray::{ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::hin::graph::{Domain, DomainPair, HeteroGraph};
use crate::linalg::Matrix;

/// `L = D − A` with `A` stored as symmetric CSR (no diagonal).
#[derive(Debug, Clone, PartialEq)]
pub struct Laplacian {
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    weights: Vec<f64>,
    degree: Vec<f64>,
}

impl Laplacian {
    /// From undirected weighted edges `(i, j, w)` with `i != j`; duplicates add.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize, f64)>) -> Self {
        let mut adj: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n];
        for (i, j, w) in edges {
            assert!(
                i != j && i < n && j < n,
                "invalid Laplacian edge ({i}, {j})"
            );
            *adj[i].entry(j).or_default() += w;
            *adj[j].entry(i).or_default() += w;
        }
        let mut offsets = Vec::with_capacity(n + 1);
        let mut neighbors = Vec::new();
        let mut weights = Vec::new();
        let mut degree = Vec::with_capacity(n);
        offsets.push(0);
        for row in adj {
            degree.push(row.values().sum());
            for (j, w) in row {
                neighbors.push(j);
                weights.push(w);
            }
            offsets.push(neighbors.len());
        }
        Self {
            offsets,
            neighbors,
            weights,
            degree,
        }
    }

    pub fn zeros(n: usize) -> Self {
        Self::from_edges(n, std::iter::empty())
    }

    pub fn len(&self) -> usize {
        self.degree.len()
    }

    pub fn is_empty(&self) -> bool {
        self.degree.is_empty()
    }

    pub fn num_edges(&self) -> usize {
        self.neighbors.len() / 2
    }

    /// Undirected edges `(i, j, w)` with `i < j`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.len()).flat_map(move |i| {
            (self.offsets[i]..self.offsets[i + 1])
                .filter(move |&k| self.neighbors[k] > i)
                .map(move |k| (i, self.neighbors[k], self.weights[k]))
        })
    }

    /// `L · H`.
    pub fn apply(&self, h: ArrayView2<'_, f64>) -> Matrix {
        assert_eq!(h.nrows(), self.len(), "row count must match Laplacian size");
        let mut out = Matrix::zeros(h.dim());
        for (i, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
            row.scaled_add(self.degree[i], &h.row(i));
            for k in self.offsets[i]..self.offsets[i + 1] {
                row.scaled_add(-self.weights[k], &h.row(self.neighbors[k]));
            }
        }
        out
    }

    pub fn to_dense(&self) -> Matrix {
        let n = self.len();
        let mut m = Matrix::zeros((n, n));
        for i in 0..n {
            m[[i, i]] = self.degree[i];
            for k in self.offsets[i]..self.offsets[i + 1] {
                m[[i, self.neighbors[k]]] = -self.weights[k];
            }
        }
        m
    }
}

/// Source and target Laplacians; the composite is `blockdiag(L_S, L_T)` with
/// source rows first.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianBlock {
    pub source: Laplacian,
    pub target: Laplacian,
    /// Set when a domain's private type has no incident relation.
    pub isolated: Vec<Domain>,
}

impl LaplacianBlock {
    pub fn new(source: Laplacian, target: Laplacian) -> Self {
        Self {
            source,
            target,
            isolated: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.source.len() + self.target.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `L^g · H` for `H` in block order.
    pub fn apply(&self, h: ArrayView2<'_, f64>) -> Matrix {
        let ns = self.source.len();
        let (top, bottom) = h.split_at(Axis(0), ns);
        let mut out = Matrix::zeros(h.dim());
        out.slice_mut(ndarray::s![..ns, ..])
            .assign(&self.source.apply(top));
        out.slice_mut(ndarray::s![ns.., ..])
            .assign(&self.target.apply(bottom));
        out
    }

    /// `tr(Hᵀ L^g H)`.
    pub fn quadratic(&self, h: ArrayView2<'_, f64>) -> Result<f64> {
        if h.nrows() != self.len() {
            return Err(Error::Contract(format!(
                "H has {} rows, Laplacian block covers {} private nodes",
                h.nrows(),
                self.len()
            )));
        }
        Ok((&self.apply(h) * &h).sum())
    }

    pub fn to_dense(&self) -> Matrix {
        let (ns, nt) = (self.source.len(), self.target.len());
        let mut m = Matrix::zeros((ns + nt, ns + nt));
        m.slice_mut(ndarray::s![..ns, ..ns])
            .assign(&self.source.to_dense());
        m.slice_mut(ndarray::s![ns.., ns..])
            .assign(&self.target.to_dense());
        m
    }
}

fn cooccurrence(g: &HeteroGraph, ty: &str) -> (Laplacian, bool) {
    let n = g.count(ty);
    // neighbour global id (type, index) -> private nodes adjacent to it
    let mut by_neighbor: BTreeMap<(&str, usize), BTreeSet<usize>> = BTreeMap::new();
    let mut incident = false;
    for rel in g.edges.values() {
        if rel.src_type == ty {
            incident = true;
            for &(s, d) in &rel.pairs {
                by_neighbor
                    .entry((rel.dst_type.as_str(), d))
                    .or_default()
                    .insert(s);
            }
        }
        if rel.dst_type == ty {
            incident = true;
            for &(s, d) in &rel.pairs {
                by_neighbor
                    .entry((rel.src_type.as_str(), s))
                    .or_default()
                    .insert(d);
            }
        }
    }
    let mut weights: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (&(nty, nidx), members) in &by_neighbor {
        let members: Vec<usize> = members.iter().copied().collect();
        for (a, &i) in members.iter().enumerate() {
            for &j in &members[a + 1..] {
                // a private node adjacent to itself through a self-relation is not an edge
                if nty == ty && (nidx == i || nidx == j) {
                    continue;
                }
                *weights.entry((i, j)).or_default() += 1.0;
            }
        }
    }
    (
        Laplacian::from_edges(n, weights.into_iter().map(|((i, j), w)| (i, j, w))),
        incident,
    )
}

/// Co-occurrence Laplacians for private pair `k2` in both domains.
pub fn build_private_laplacian(pair: &DomainPair, k2: usize) -> Result<LaplacianBlock> {
    let p = pair.schema.private_pairs.get(k2).ok_or_else(|| {
        Error::Contract(format!(
            "private pair index {k2} but only {} pairs",
            pair.schema.private_pairs.len()
        ))
    })?;
    let (ls, inc_s) = cooccurrence(&pair.source, &p.source);
    let (lt, inc_t) = cooccurrence(&pair.target, &p.target);
    let mut block = LaplacianBlock::new(ls, lt);
    for (d, inc, name) in [
        (Domain::Source, inc_s, &p.source),
        (Domain::Target, inc_t, &p.target),
    ] {
        if !inc {
            warn!("{d} private type {name} has no incident relation; its Laplacian is zero");
            block.isolated.push(d);
        }
    }
    Ok(block)
}
