//! Communication graphs, their Laplacians and spectral decompositions.
//!
//! Agents are indexed `0..n` throughout the library. Text formats (edge-list
//! files, scenario configs, CSV/JSON output) use 1-based agent labels; the
//! mapping is `label = index + 1`.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Undirected edge with a positive feedback gain, stored with `i < j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub w: f64,
}

/// Connected, undirected, simple weighted graph over `n` agents.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    n: usize,
    edges: Vec<Edge>,
}

/// Named topology generators plus user-supplied edge lists.
#[derive(Debug, Clone, PartialEq)]
pub enum GraphKind {
    Path,
    /// Circulant graph: agent `i` is joined to `i ± 1, …, i ± p (mod n)`.
    PCycle { p: usize },
    Complete,
    /// Weighted edges with 0-based endpoints.
    Custom(Vec<(usize, usize, f64)>),
}

impl WeightedGraph {
    /// Validates a weighted edge list (0-based endpoints).
    ///
    /// Rejects self-loops, non-positive or non-finite weights, out-of-range
    /// endpoints, repeated edges and disconnected graphs.
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        if n < 2 {
            return Err(Error::Parameter(format!("need at least 2 agents, got {n}")));
        }
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for (i, j, w) in edges {
            let bad = |reason| Error::InvalidEdge { i, j, w, reason };
            if i >= n || j >= n {
                return Err(bad("endpoint out of range"));
            }
            if i == j {
                return Err(bad("self-loop"));
            }
            if !(w.is_finite() && w > 0.0) {
                return Err(bad("weight must be positive and finite"));
            }
            let (a, b) = if i < j { (i, j) } else { (j, i) };
            if !seen.insert((a, b)) {
                return Err(bad("duplicate edge"));
            }
            out.push(Edge { i: a, j: b, w });
        }
        out.sort_by_key(|e| (e.i, e.j));
        let g = WeightedGraph { n, edges: out };
        if let Some(unreachable) = g.first_unreachable() {
            return Err(Error::Connectivity { unreachable });
        }
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        self.edges
            .binary_search_by_key(&(a, b), |e| (e.i, e.j))
            .map(|k| self.edges[k].w)
            .unwrap_or(0.0)
    }

    pub fn neighbors(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); self.n];
        for e in &self.edges {
            adj[e.i].push((e.j, e.w));
            adj[e.j].push((e.i, e.w));
        }
        adj
    }

    fn first_unreachable(&self) -> Option<usize> {
        let adj = self.neighbors();
        let mut seen = vec![false; self.n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for &(v, _) in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen.iter().position(|s| !s)
    }

    /// Parses the edge-list text format: a `n <count>` header followed by
    /// `i j w` lines with 1-based labels. `#` starts a comment.
    pub fn from_edge_list(text: &str) -> Result<Self> {
        let mut n = None;
        let mut edges = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let perr = |message: String| Error::Parse {
                line: lineno + 1,
                message,
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            match (n, fields.as_slice()) {
                (None, ["n", count]) => {
                    n = Some(
                        count
                            .parse::<usize>()
                            .map_err(|e| perr(format!("bad agent count {count:?}: {e}")))?,
                    );
                }
                (None, _) => return Err(perr("expected `n <count>` header".into())),
                (Some(_), [i, j, w]) => {
                    let label = |s: &str| -> Result<usize> {
                        match s.parse::<usize>() {
                            Ok(v) if v >= 1 => Ok(v - 1),
                            _ => Err(perr(format!("bad agent label {s:?}"))),
                        }
                    };
                    let w = w
                        .parse::<f64>()
                        .map_err(|e| perr(format!("bad weight {w:?}: {e}")))?;
                    edges.push((label(i)?, label(j)?, w));
                }
                (Some(_), _) => return Err(perr(format!("expected `i j w`, got {line:?}"))),
            }
        }
        let n = n.ok_or(Error::Parse {
            line: 0,
            message: "missing `n <count>` header".into(),
        })?;
        WeightedGraph::new(n, edges)
    }

    /// Renders the graph in the edge-list text format.
    pub fn to_edge_list(&self) -> String {
        let mut s = format!("n {}\n", self.n);
        for e in &self.edges {
            s.push_str(&format!("{} {} {:?}\n", e.i + 1, e.j + 1, e.w));
        }
        s
    }
}

impl FromStr for WeightedGraph {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        WeightedGraph::from_edge_list(s)
    }
}

impl fmt::Display for GraphKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphKind::Path => write!(f, "path"),
            GraphKind::PCycle { p } => write!(f, "{p}-cycle"),
            GraphKind::Complete => write!(f, "complete"),
            GraphKind::Custom(e) => write!(f, "custom ({} edges)", e.len()),
        }
    }
}

/// Builds a graph of the given kind. Named kinds use unit weights.
pub fn build_graph(kind: &GraphKind, n: usize) -> Result<WeightedGraph> {
    if n < 2 {
        return Err(Error::Parameter(format!("need at least 2 agents, got {n}")));
    }
    let edges: Vec<(usize, usize, f64)> = match kind {
        GraphKind::Path => (0..n - 1).map(|i| (i, i + 1, 1.0)).collect(),
        GraphKind::Complete => (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j, 1.0)))
            .collect(),
        GraphKind::PCycle { p } => {
            let p = *p;
            let max_p = (n - 1) / 2;
            if p < 1 || p > max_p {
                return Err(Error::Parameter(format!(
                    "p-cycle needs 1 <= p <= {max_p} for n = {n}, got p = {p}"
                )));
            }
            let mut set = BTreeSet::new();
            for i in 0..n {
                for s in 1..=p {
                    let j = (i + s) % n;
                    set.insert((i.min(j), i.max(j)));
                }
            }
            set.into_iter().map(|(i, j)| (i, j, 1.0)).collect()
        }
        GraphKind::Custom(edges) => edges.clone(),
    };
    WeightedGraph::new(n, edges)
}

/// Graph Laplacian `L = D - K`.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianMatrix(DMatrix<f64>);

impl LaplacianMatrix {
    /// Wraps an arbitrary matrix after checking the Laplacian structure.
    pub fn try_from_matrix(m: DMatrix<f64>) -> Result<Self> {
        let n = m.nrows();
        if n != m.ncols() || n < 2 {
            return Err(Error::Parameter(format!(
                "Laplacian must be square with n >= 2, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let scale = m.amax().max(1.0);
        for i in 0..n {
            let mut row = 0.0;
            for j in 0..n {
                if m[(i, j)] != m[(j, i)] {
                    return Err(Error::Parameter("Laplacian must be symmetric".into()));
                }
                if i != j && m[(i, j)] > 0.0 {
                    return Err(Error::Parameter(
                        "Laplacian off-diagonals must be non-positive".into(),
                    ));
                }
                row += m[(i, j)];
            }
            if row.abs() > 1e-12 * scale {
                return Err(Error::Parameter(format!("row {i} sums to {row:e}, not zero")));
            }
        }
        Ok(LaplacianMatrix(m))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }
}

pub fn laplacian(g: &WeightedGraph) -> LaplacianMatrix {
    let n = g.n();
    let mut l = DMatrix::zeros(n, n);
    for e in g.edges() {
        l[(e.i, e.j)] -= e.w;
        l[(e.j, e.i)] -= e.w;
    }
    for i in 0..n {
        // degree as the exact negated sum of the row, so rows sum to zero
        let off: f64 = (0..n).filter(|&j| j != i).map(|j| l[(i, j)]).sum();
        l[(i, i)] = -off;
    }
    LaplacianMatrix(l)
}

/// Ascending Laplacian eigenvalues with an orthonormal eigenbasis.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralData {
    lambdas: DVector<f64>,
    q: DMatrix<f64>,
}

impl SpectralData {
    pub fn n(&self) -> usize {
        self.lambdas.len()
    }

    pub fn lambdas(&self) -> &DVector<f64> {
        &self.lambdas
    }

    /// Eigenvectors as columns; column `k` pairs with `lambdas()[k]`.
    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambdas[self.n() - 1]
    }

    /// Algebraic connectivity.
    pub fn lambda_2(&self) -> f64 {
        self.lambdas[1]
    }
}

/// Symmetric eigendecomposition `L = Q Λ Qᵀ`.
///
/// The zero eigenvalue is clamped to exactly 0 once verified to be within
/// `1e-9 · λ_n`. The consensus eigenvector is signed positive; every other
/// eigenvector has its largest-magnitude entry positive.
pub fn spectral(l: &LaplacianMatrix) -> Result<SpectralData> {
    let n = l.n();
    let eig = SymmetricEigen::try_new(l.matrix().clone(), f64::EPSILON, 0)
        .ok_or_else(|| Error::Numerical("symmetric eigensolver did not converge".into()))?;
    if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite eigenvalue".into()));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let mut lambdas = DVector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut q = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).clone_owned();
        let pivot = if dst == 0 {
            col.sum()
        } else {
            let k = col.iamax();
            col[k]
        };
        if pivot < 0.0 {
            col.neg_mut();
        }
        q.set_column(dst, &col);
    }

    let lmax = lambdas[n - 1];
    if lmax <= 0.0 {
        return Err(Error::DegenerateGraph);
    }
    if lambdas[0].abs() >= 1e-9 * lmax {
        return Err(Error::Numerical(format!(
            "smallest eigenvalue {:e} is not zero; input is not a Laplacian",
            lambdas[0]
        )));
    }
    lambdas[0] = 0.0;
    if lambdas[1] <= 1e-9 * lmax {
        return Err(Error::Numerical(format!(
            "zero eigenvalue is repeated (lambda_2 = {:e}); graph is disconnected",
            lambdas[1]
        )));
    }
    Ok(SpectralData { lambdas, q })
}

/// Largest admissible delay `π / (2 λ_n)`; configured delays must lie
/// strictly below it.
pub fn max_stable_delay(s: &SpectralData) -> Result<f64> {
    let lmax = s.lambda_max();
    if lmax <= 0.0 {
        return Err(Error::DegenerateGraph);
    }
    Ok(PI / (2.0 * lmax))
}
