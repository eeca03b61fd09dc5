//! Undirected weighted graphs and their incidence/Laplacian algebra.
//!
//! Edges are oriented deterministically (tail = smaller vertex index) and
//! ordered so that a BFS spanning tree from vertex 1 comes first; the
//! decomposition `H = [H_T; H_C] = R·H_T` with `T = H_C H_Tᵀ (H_T H_Tᵀ)⁻¹`
//! relies on that ordering.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("vertex count must be at least 1")]
    EmptyGraph,
    #[error("edge ({0}, {1}) is a self-loop")]
    SelfLoop(usize, usize),
    #[error("edge ({0}, {1}) appears more than once")]
    DuplicateEdge(usize, usize),
    #[error("edge ({0}, {1}) has non-positive weight {2}")]
    NonPositiveWeight(usize, usize, f64),
    #[error("edge ({0}, {1}) is out of range for {2} vertices")]
    IndexOutOfRange(usize, usize, usize),
    #[error("graph is not connected")]
    Disconnected,
    #[error("edge ordering does not match the graph")]
    OrderingMismatch,
}

/// One undirected edge with 0-based endpoints `tail < head`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub tail: usize,
    pub head: usize,
    pub weight: f64,
}

/// A validated undirected weighted graph on vertices `1..=n` (stored 0-based).
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n: usize,
    edges: Vec<Edge>,
}

impl Graph {
    /// Builds a graph from 1-based `(i, j, w)` edge triples.
    ///
    /// Rejects self-loops, duplicate pairs, non-positive weights and
    /// out-of-range indices, each with a distinct error.
    pub fn new(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self, GraphError> {
        if n == 0 {
            return Err(GraphError::EmptyGraph);
        }
        let mut seen = std::collections::HashSet::new();
        let mut list = Vec::with_capacity(edges.len());
        for &(i, j, w) in edges {
            if i == 0 || j == 0 || i > n || j > n {
                return Err(GraphError::IndexOutOfRange(i, j, n));
            }
            if i == j {
                return Err(GraphError::SelfLoop(i, j));
            }
            if w <= 0.0 {
                return Err(GraphError::NonPositiveWeight(i, j, w));
            }
            let (a, b) = if i < j { (i - 1, j - 1) } else { (j - 1, i - 1) };
            if !seen.insert((a, b)) {
                return Err(GraphError::DuplicateEdge(i, j));
            }
            list.push(Edge { tail: a, head: b, weight: w });
        }
        // Canonical storage order: sorted by (tail, head).
        list.sort_by(|x, y| (x.tail, x.head).cmp(&(y.tail, y.head)));
        Ok(Self { n, edges: list })
    }

    pub fn vertex_count(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Neighbors of 0-based vertex `v` with edge weights.
    pub fn neighbors(&self, v: usize) -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        for e in &self.edges {
            if e.tail == v {
                out.push((e.head, e.weight));
            } else if e.head == v {
                out.push((e.tail, e.weight));
            }
        }
        out
    }

    /// Maximum vertex degree (by edge count).
    pub fn max_degree(&self) -> usize {
        let mut deg = vec![0usize; self.n];
        for e in &self.edges {
            deg[e.tail] += 1;
            deg[e.head] += 1;
        }
        deg.into_iter().max().unwrap_or(0)
    }

    /// True iff every pair of vertices is joined by a path (single vertex
    /// counts as connected).
    pub fn is_connected(&self) -> bool {
        let order = self.bfs_order();
        order.iter().filter(|v| v.is_some()).count() == self.n
    }

    /// BFS from vertex 0 exploring neighbors in increasing index order;
    /// returns per-vertex discovery rank (`None` if unreachable).
    fn bfs_order(&self) -> Vec<Option<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for e in &self.edges {
            adj[e.tail].push(e.head);
            adj[e.head].push(e.tail);
        }
        for l in &mut adj {
            l.sort_unstable();
        }
        let mut rank = vec![None; self.n];
        let mut queue = std::collections::VecDeque::new();
        rank[0] = Some(0);
        queue.push_back(0usize);
        let mut next = 1usize;
        while let Some(v) = queue.pop_front() {
            for &u in &adj[v] {
                if rank[u].is_none() {
                    rank[u] = Some(next);
                    next += 1;
                    queue.push_back(u);
                }
            }
        }
        rank
    }

    /// Weighted Laplacian `L = Hᵀ W H`, assembled directly as
    /// degree-minus-adjacency so no edge ordering is needed.
    pub fn laplacian(&self) -> DMatrix<f64> {
        let mut l = DMatrix::zeros(self.n, self.n);
        for e in &self.edges {
            l[(e.tail, e.tail)] += e.weight;
            l[(e.head, e.head)] += e.weight;
            l[(e.tail, e.head)] -= e.weight;
            l[(e.head, e.tail)] -= e.weight;
        }
        l
    }

    /// Default edge ordering: BFS spanning-tree edges first (discovery
    /// order from vertex 1), remaining edges in canonical order.
    pub fn edge_ordering(&self) -> Result<EdgeOrdering, GraphError> {
        if !self.is_connected() {
            return Err(GraphError::Disconnected);
        }
        // BFS tree edges in discovery order.
        let mut adj = vec![Vec::new(); self.n];
        for (k, e) in self.edges.iter().enumerate() {
            adj[e.tail].push((e.head, k));
            adj[e.head].push((e.tail, k));
        }
        for l in &mut adj {
            l.sort_unstable();
        }
        let mut visited = vec![false; self.n];
        let mut queue = std::collections::VecDeque::new();
        let mut tree = Vec::new();
        let mut in_tree = vec![false; self.edges.len()];
        visited[0] = true;
        queue.push_back(0usize);
        while let Some(v) = queue.pop_front() {
            for &(u, k) in &adj[v] {
                if !visited[u] {
                    visited[u] = true;
                    tree.push(self.edges[k]);
                    in_tree[k] = true;
                    queue.push_back(u);
                }
            }
        }
        let mut ordered = tree;
        for (k, e) in self.edges.iter().enumerate() {
            if !in_tree[k] {
                ordered.push(*e);
            }
        }
        Ok(EdgeOrdering { edges: ordered, tree_count: self.n - 1 })
    }
}

/// An explicit edge ordering with orientation; the first `tree_count`
/// edges form a spanning tree when the graph is connected.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeOrdering {
    edges: Vec<Edge>,
    tree_count: usize,
}

impl EdgeOrdering {
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn tree_count(&self) -> usize {
        self.tree_count
    }

    fn matches(&self, g: &Graph) -> bool {
        if self.edges.len() != g.edges.len() {
            return false;
        }
        let mut a: Vec<_> = self.edges.iter().map(|e| (e.tail, e.head)).collect();
        a.sort_unstable();
        a.iter().zip(g.edges.iter()).all(|(&(t, h), e)| t == e.tail && h == e.head)
    }
}

/// Oriented incidence matrix (m×n): row k has −1 at the tail and +1 at the
/// head of edge k.
pub fn incidence_matrix(g: &Graph, ord: &EdgeOrdering) -> Result<DMatrix<f64>, GraphError> {
    if !ord.matches(g) {
        return Err(GraphError::OrderingMismatch);
    }
    let mut h = DMatrix::zeros(ord.edges.len(), g.n);
    for (k, e) in ord.edges.iter().enumerate() {
        h[(k, e.tail)] = -1.0;
        h[(k, e.head)] = 1.0;
    }
    Ok(h)
}

/// Diagonal edge-weight matrix in the ordering's edge order.
pub fn weight_matrix(ord: &EdgeOrdering) -> DMatrix<f64> {
    DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        ord.edges.len(),
        ord.edges.iter().map(|e| e.weight),
    ))
}

/// Spanning-tree decomposition of the incidence matrix.
#[derive(Debug, Clone)]
pub struct SpanningTreeSplit {
    pub ordering: EdgeOrdering,
    /// Incidence rows of the spanning tree, (n−1)×n.
    pub h_tree: DMatrix<f64>,
    /// Incidence rows of the remaining cycle edges, (m−n+1)×n.
    pub h_cycle: DMatrix<f64>,
    /// `T = H_C H_Tᵀ (H_T H_Tᵀ)⁻¹`, so that `H = [I; T]·H_T`.
    pub t: DMatrix<f64>,
}

/// Splits the incidence matrix as `[H_T; H_C] = R·H_T` with `R = [I; T]`.
pub fn spanning_tree_split(g: &Graph) -> Result<SpanningTreeSplit, GraphError> {
    let ordering = g.edge_ordering()?;
    let h = incidence_matrix(g, &ordering)?;
    let nt = ordering.tree_count;
    let h_tree = h.rows(0, nt).into_owned();
    let h_cycle = h.rows(nt, h.nrows() - nt).into_owned();
    // H_T H_Tᵀ is invertible for a spanning tree.
    let gram = &h_tree * h_tree.transpose();
    let gram_inv = gram
        .lu()
        .try_inverse()
        .expect("spanning-tree incidence Gram matrix is invertible");
    let t = &h_cycle * h_tree.transpose() * gram_inv;
    Ok(SpanningTreeSplit { ordering, h_tree, h_cycle, t })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub fn cycle(n: usize) -> Graph {
        let mut edges: Vec<_> = (1..n).map(|i| (i, i + 1, 1.0)).collect();
        edges.push((n, 1, 1.0));
        Graph::new(n, &edges).unwrap()
    }

    /// Rank via plain Gaussian elimination with partial pivoting,
    /// independent of any nalgebra decomposition.
    fn elimination_rank(m: &DMatrix<f64>, tol: f64) -> usize {
        let mut a = m.clone();
        let (rows, cols) = a.shape();
        let mut rank = 0;
        let mut row = 0;
        for col in 0..cols {
            let mut pivot = row;
            for r in row..rows {
                if a[(r, col)].abs() > a[(pivot, col)].abs() {
                    pivot = r;
                }
            }
            if a[(pivot, col)].abs() <= tol {
                continue;
            }
            a.swap_rows(row, pivot);
            for r in 0..rows {
                if r != row {
                    let f = a[(r, col)] / a[(row, col)];
                    for c in col..cols {
                        a[(r, c)] -= f * a[(row, c)];
                    }
                }
            }
            rank += 1;
            row += 1;
            if row == rows {
                break;
            }
        }
        rank
    }

    fn random_connected(seed: u64) -> Graph {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(2..=8);
        let mut edges = Vec::new();
        for v in 2..=n {
            let p = rng.gen_range(1..v);
            edges.push((p, v, rng.gen_range(0.1..5.0)));
        }
        for _ in 0..rng.gen_range(0..=n) {
            let i = rng.gen_range(1..=n);
            let j = rng.gen_range(1..=n);
            if i != j && !edges.iter().any(|&(a, b, _)| (a, b) == (i.min(j), i.max(j))) {
                edges.push((i.min(j), i.max(j), rng.gen_range(0.1..5.0)));
            }
        }
        Graph::new(n, &edges).unwrap()
    }

    #[test]
    fn smallest_valid_graph() {
        let g = Graph::new(2, &[(1, 2, 1.0)]).unwrap();
        assert_eq!(g.edge_count(), 1);
        assert_eq!(g.vertex_count(), 2);
    }

    #[test]
    fn six_cycle_builds() {
        let g = cycle(6);
        assert_eq!(g.edge_count(), 6);
        assert!(g.is_connected());
    }

    #[test]
    fn validation_errors_are_distinct() {
        assert_eq!(
            Graph::new(3, &[(1, 1, 1.0)]).unwrap_err(),
            GraphError::SelfLoop(1, 1)
        );
        assert_eq!(
            Graph::new(3, &[(1, 2, 1.0), (2, 1, 2.0)]).unwrap_err(),
            GraphError::DuplicateEdge(2, 1)
        );
        assert_eq!(
            Graph::new(3, &[(1, 2, 0.0)]).unwrap_err(),
            GraphError::NonPositiveWeight(1, 2, 0.0)
        );
        assert_eq!(
            Graph::new(3, &[(1, 4, 1.0)]).unwrap_err(),
            GraphError::IndexOutOfRange(1, 4, 3)
        );
    }

    #[test]
    fn connectivity() {
        assert!(cycle(6).is_connected());
        let split = Graph::new(4, &[(1, 2, 1.0), (3, 4, 1.0)]).unwrap();
        assert!(!split.is_connected());
        let single = Graph::new(1, &[]).unwrap();
        assert!(single.is_connected());
    }

    #[test]
    fn incidence_p2() {
        let g = Graph::new(2, &[(1, 2, 1.0)]).unwrap();
        let h = incidence_matrix(&g, &g.edge_ordering().unwrap()).unwrap();
        assert_eq!(h, DMatrix::from_row_slice(1, 2, &[-1.0, 1.0]));
    }

    #[test]
    fn incidence_six_cycle_rank_and_row_sums() {
        let g = cycle(6);
        let h = incidence_matrix(&g, &g.edge_ordering().unwrap()).unwrap();
        for k in 0..6 {
            assert_eq!(h.row(k).sum(), 0.0);
        }
        assert_eq!(elimination_rank(&h, 1e-12), 5);
    }

    #[test]
    fn incidence_disconnected_rank() {
        let g = Graph::new(4, &[(1, 2, 1.0), (3, 4, 1.0)]).unwrap();
        // No spanning-tree ordering exists for a disconnected graph; build the
        // incidence matrix from the raw edge list instead.
        let mut h = DMatrix::zeros(2, 4);
        for (k, e) in g.edges().iter().enumerate() {
            h[(k, e.tail)] = -1.0;
            h[(k, e.head)] = 1.0;
        }
        assert_eq!(elimination_rank(&h, 1e-12), 2);
    }

    #[test]
    fn split_tree_graph_is_trivial() {
        let g = Graph::new(4, &[(1, 2, 1.0), (2, 3, 1.0), (2, 4, 1.0)]).unwrap();
        let s = spanning_tree_split(&g).unwrap();
        assert_eq!(s.h_cycle.nrows(), 0);
        assert_eq!(s.t.nrows(), 0);
    }

    #[test]
    fn split_six_cycle_reconstructs() {
        let s = spanning_tree_split(&cycle(6)).unwrap();
        assert_eq!(s.t.shape(), (1, 5));
        let residual = (&s.h_cycle - &s.t * &s.h_tree).abs().max();
        assert!(residual <= 1e-10, "residual {residual}");
    }

    #[test]
    fn split_triangle_least_squares() {
        let g = cycle(3);
        let s = spanning_tree_split(&g).unwrap();
        assert_eq!(s.t.shape(), (1, 2));
        // Direct 1×2 solve: T·(H_T H_Tᵀ) = H_C H_Tᵀ.
        let gram = &s.h_tree * s.h_tree.transpose();
        let rhs = &s.h_cycle * s.h_tree.transpose();
        let expect = rhs * gram.lu().try_inverse().unwrap();
        assert!((&s.t - expect).abs().max() <= 1e-12);
        assert!((&s.h_cycle - &s.t * &s.h_tree).abs().max() <= 1e-10);
    }

    #[test]
    fn split_rejects_disconnected() {
        let g = Graph::new(4, &[(1, 2, 1.0), (3, 4, 1.0)]).unwrap();
        assert_eq!(spanning_tree_split(&g).unwrap_err(), GraphError::Disconnected);
    }

    #[test]
    fn laplacian_p2() {
        let g = Graph::new(2, &[(1, 2, 1.0)]).unwrap();
        assert_eq!(g.laplacian(), DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]));
    }

    #[test]
    fn laplacian_six_cycle_spectrum() {
        // Cycle eigenvalues 2−2cos(2πk/6) = {0, 1, 1, 3, 3, 4}.
        let l = cycle(6).laplacian();
        let mut eig: Vec<f64> = l.symmetric_eigen().eigenvalues.iter().copied().collect();
        eig.sort_by(f64::total_cmp);
        let expect = [0.0, 1.0, 1.0, 3.0, 3.0, 4.0];
        for (a, b) in eig.iter().zip(expect) {
            assert!((a - b).abs() <= 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn graph_identities_on_random_instances() {
        for seed in 0..200 {
            let g = random_connected(seed);
            let ord = g.edge_ordering().unwrap();
            let h = incidence_matrix(&g, &ord).unwrap();
            let w = weight_matrix(&ord);
            // HᵀWH = L entrywise.
            let l = g.laplacian();
            assert!((h.transpose() * &w * &h - &l).abs().max() <= 1e-12);
            // H·1 = 0 exactly (integer entries).
            let ones = DVector::from_element(g.vertex_count(), 1.0);
            assert!((&h * &ones).abs().max() == 0.0);
            // L·1 = 0.
            assert!((&l * &ones).abs().max() <= 1e-12);
            // rank(H) = n−1 via singular values.
            let sv = h.clone().singular_values();
            let smax = sv.max();
            let rank = sv.iter().filter(|&&s| s > 1e-9 * smax).count();
            assert_eq!(rank, g.vertex_count() - 1);
            // λ₂ > 0.
            let mut eig: Vec<f64> = l.symmetric_eigen().eigenvalues.iter().copied().collect();
            eig.sort_by(f64::total_cmp);
            assert!(eig[1] > 1e-9);
            // Split reconstruction.
            let s = spanning_tree_split(&g).unwrap();
            let m = s.h_tree.nrows() + s.h_cycle.nrows();
            let mut stacked = DMatrix::zeros(m, g.vertex_count());
            stacked.rows_mut(0, s.h_tree.nrows()).copy_from(&s.h_tree);
            stacked.rows_mut(s.h_tree.nrows(), s.h_cycle.nrows()).copy_from(&s.h_cycle);
            let mut r = DMatrix::zeros(m, s.h_tree.nrows());
            r.rows_mut(0, s.h_tree.nrows())
                .copy_from(&DMatrix::identity(s.h_tree.nrows(), s.h_tree.nrows()));
            r.rows_mut(s.h_tree.nrows(), s.t.nrows()).copy_from(&s.t);
            assert!((stacked - r * &s.h_tree).abs().max() <= 1e-10);
        }
    }
}
