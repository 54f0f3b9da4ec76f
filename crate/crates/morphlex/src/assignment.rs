//! Rectangular linear assignment on sparse candidate graphs.
//!
//! The solver maximizes the number of matched nodes first and total edge
//! weight second. Maximization is reduced to a minimization problem by
//! shifting weights; absent edges are represented by one virtual column
//! per left node carrying a sentinel cost that strictly dominates any
//! real edge sum, so rectangular instances need no materialized padding.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::collections::HashSet;

use rayon::prelude::*;

use crate::embeddings::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::mapping::CandidateFilter;
use crate::scalar::{dot64, from_f64, to_f64, Scalar};

/// Weighted bipartite graph over `n_left × n_right` nodes with at most
/// one edge per node pair.
#[derive(Debug, Clone)]
pub struct SparseBipartiteGraph<F: Scalar> {
    n_left: usize,
    n_right: usize,
    edges: Vec<(usize, usize, F)>,
}

impl<F: Scalar> SparseBipartiteGraph<F> {
    pub fn new(n_left: usize, n_right: usize, edges: Vec<(usize, usize, F)>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(edges.len());
        for &(l, r, w) in &edges {
            if l >= n_left {
                return Err(Error::IndexOutOfRange {
                    context: "left node",
                    index: l,
                    len: n_left,
                });
            }
            if r >= n_right {
                return Err(Error::IndexOutOfRange {
                    context: "right node",
                    index: r,
                    len: n_right,
                });
            }
            if !w.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "non-finite weight on edge ({l}, {r})"
                )));
            }
            if !seen.insert((l, r)) {
                return Err(Error::InvalidArgument(format!("duplicate edge ({l}, {r})")));
            }
        }
        Ok(Self {
            n_left,
            n_right,
            edges,
        })
    }

    pub fn n_left(&self) -> usize {
        self.n_left
    }

    pub fn n_right(&self) -> usize {
        self.n_right
    }

    pub fn edges(&self) -> &[(usize, usize, F)] {
        &self.edges
    }
}

#[derive(PartialEq)]
struct HeapEntry {
    dist: f64,
    col: usize,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // BinaryHeap is a max-heap; invert for smallest (dist, col) first.
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.col.cmp(&self.col))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Finds a matching of maximum cardinality and, among those, maximum
/// total weight. Left nodes with no incident edges stay unmatched. Ties
/// between equal-weight optima resolve to the lexicographically smallest
/// matching by `(left, right)`. The result is sorted by left index.
pub fn solve_assignment<F: Scalar>(g: &SparseBipartiteGraph<F>) -> Vec<(usize, usize)> {
    let nl = g.n_left;
    let nr = g.n_right;
    if nl == 0 || g.edges.is_empty() {
        return Vec::new();
    }

    let mut w_max = f64::NEG_INFINITY;
    let mut w_min = f64::INFINITY;
    for &(_, _, w) in &g.edges {
        let w = to_f64(w);
        w_max = w_max.max(w);
        w_min = w_min.min(w);
    }
    let range = w_max - w_min;
    let sentinel = range * nl.min(nr) as f64 + 1.0;

    // adjacency per left node, sorted by column; the virtual column for
    // row l is nr + l and always sorts last
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nl];
    for &(l, r, w) in &g.edges {
        adj[l].push((r, w_max - to_f64(w)));
    }
    for (l, a) in adj.iter_mut().enumerate() {
        a.sort_by_key(|&(c, _)| c);
        a.push((nr + l, sentinel));
    }

    let cols = nr + nl;
    let mut u = vec![0.0f64; nl];
    let mut v = vec![0.0f64; cols];
    let mut match_row_of_col: Vec<Option<usize>> = vec![None; cols];
    let mut match_col_of_row: Vec<Option<usize>> = vec![None; nl];

    let mut dist = vec![f64::INFINITY; cols];
    let mut prev_row = vec![usize::MAX; cols];
    let mut done = vec![false; cols];
    let mut touched: Vec<usize> = Vec::new();
    let mut heap: BinaryHeap<HeapEntry> = BinaryHeap::new();

    for cur_row in 0..nl {
        heap.clear();
        for &(col, cost) in &adj[cur_row] {
            let nd = cost - u[cur_row] - v[col];
            if nd < dist[col] {
                if dist[col].is_infinite() {
                    touched.push(col);
                }
                dist[col] = nd;
                prev_row[col] = cur_row;
                heap.push(HeapEntry { dist: nd, col });
            }
        }

        let sink = loop {
            let entry = heap.pop().expect("virtual column guarantees a sink");
            let col = entry.col;
            if done[col] || entry.dist > dist[col] {
                continue;
            }
            done[col] = true;
            let Some(next_row) = match_row_of_col[col] else {
                break col;
            };
            let base = dist[col];
            for &(col2, cost2) in &adj[next_row] {
                if done[col2] {
                    continue;
                }
                let nd = base + (cost2 - u[next_row] - v[col2]);
                if nd < dist[col2] {
                    if dist[col2].is_infinite() {
                        touched.push(col2);
                    }
                    dist[col2] = nd;
                    prev_row[col2] = next_row;
                    heap.push(HeapEntry {
                        dist: nd,
                        col: col2,
                    });
                }
            }
        };

        let delta = dist[sink];
        for &c in &touched {
            if done[c] {
                if let Some(r) = match_row_of_col[c] {
                    u[r] += delta - dist[c];
                }
                v[c] += dist[c] - delta;
            }
        }
        u[cur_row] += delta;

        // augment along the shortest path
        let mut col = sink;
        loop {
            let r = prev_row[col];
            let former = match_col_of_row[r];
            match_row_of_col[col] = Some(r);
            match_col_of_row[r] = Some(col);
            match former {
                Some(pc) => col = pc,
                None => break,
            }
        }

        for &c in &touched {
            dist[c] = f64::INFINITY;
            done[c] = false;
            prev_row[c] = usize::MAX;
        }
        touched.clear();
    }

    canonicalize_ties(&adj, &u, &v, &mut match_row_of_col, &mut match_col_of_row);

    let mut out = Vec::new();
    for (l, col) in match_col_of_row.iter().enumerate() {
        if let Some(c) = col {
            if *c < nr {
                out.push((l, *c));
            }
        }
    }
    out
}

/// Rewrites the optimal matching into the lexicographically smallest one
/// among exact-weight ties. Only edges whose reduced cost is exactly
/// zero participate, so any rewrite preserves optimality; instances
/// without exact ties pass through untouched.
#[allow(clippy::too_many_arguments, clippy::needless_range_loop)]
fn canonicalize_ties(
    adj: &[Vec<(usize, f64)>],
    u: &[f64],
    v: &[f64],
    match_row_of_col: &mut [Option<usize>],
    match_col_of_row: &mut [Option<usize>],
) {
    let nl = adj.len();
    let cols = match_row_of_col.len();
    let mut fixed = vec![false; nl];
    let mut visited = vec![false; cols];

    fn reseat(
        row: usize,
        adj: &[Vec<(usize, f64)>],
        u: &[f64],
        v: &[f64],
        fixed: &[bool],
        visited: &mut [bool],
        match_row_of_col: &mut [Option<usize>],
        match_col_of_row: &mut [Option<usize>],
    ) -> bool {
        for &(col, cost) in &adj[row] {
            if visited[col] || cost - u[row] - v[col] != 0.0 {
                continue;
            }
            visited[col] = true;
            let free = match match_row_of_col[col] {
                None => true,
                Some(o) => {
                    !fixed[o]
                        && reseat(
                            o,
                            adj,
                            u,
                            v,
                            fixed,
                            visited,
                            match_row_of_col,
                            match_col_of_row,
                        )
                }
            };
            if free {
                match_row_of_col[col] = Some(row);
                match_col_of_row[row] = Some(col);
                return true;
            }
        }
        false
    }

    for l in 0..nl {
        let cur = match_col_of_row[l].expect("every row is matched, possibly virtually");
        for &(col, cost) in &adj[l] {
            if col >= cur {
                break;
            }
            if cost - u[l] - v[col] != 0.0 {
                continue;
            }
            match match_row_of_col[col] {
                None => {
                    match_row_of_col[cur] = None;
                    match_row_of_col[col] = Some(l);
                    match_col_of_row[l] = Some(col);
                    break;
                }
                Some(occupant) if !fixed[occupant] => {
                    match_row_of_col[cur] = None;
                    for f in visited.iter_mut() {
                        *f = false;
                    }
                    visited[col] = true;
                    if reseat(
                        occupant,
                        adj,
                        u,
                        v,
                        &fixed,
                        &mut visited,
                        match_row_of_col,
                        match_col_of_row,
                    ) {
                        match_row_of_col[col] = Some(l);
                        match_col_of_row[l] = Some(col);
                        break;
                    }
                    match_row_of_col[cur] = Some(l);
                }
                _ => {}
            }
        }
        fixed[l] = true;
    }
}

/// Builds the E-step candidate graph: left and right nodes are the rows
/// ranked below `rank_limit`; each left node gets edges to its top-`k`
/// cosine candidates (ties to the lower target rank), with the cosine as
/// edge weight. An optional admissibility filter restricts candidates
/// during selection.
pub fn sparsify_similarities<F: Scalar>(
    x_mapped: &EmbeddingMatrix<F>,
    z: &EmbeddingMatrix<F>,
    k: usize,
    rank_limit: usize,
    filter: Option<CandidateFilter<'_>>,
) -> Result<SparseBipartiteGraph<F>> {
    if k < 1 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if rank_limit < 1 {
        return Err(Error::InvalidArgument(
            "rank_limit must be at least 1".into(),
        ));
    }
    if x_mapped.dim() != z.dim() {
        return Err(Error::DimensionMismatch {
            context: "mapped source vs target embeddings",
            expected: x_mapped.dim(),
            found: z.dim(),
        });
    }
    let nl = rank_limit.min(x_mapped.len());
    let nr = rank_limit.min(z.len());

    let per_left: Vec<Vec<(usize, usize, F)>> = (0..nl)
        .into_par_iter()
        .map(|l| {
            let q = x_mapped.row(l);
            let qn = x_mapped.row_norm(l);
            let mut scored: Vec<(usize, f64)> = Vec::new();
            for r in 0..nr {
                if let Some(f) = filter {
                    if !f(l, r) {
                        continue;
                    }
                }
                let rn = z.row_norm(r);
                let s = if qn == 0.0 || rn == 0.0 {
                    0.0
                } else {
                    dot64(q, z.row(r)) / (qn * rn)
                };
                scored.push((r, s));
            }
            scored.sort_by(|a, b| {
                b.1.partial_cmp(&a.1)
                    .unwrap_or(Ordering::Equal)
                    .then(a.0.cmp(&b.0))
            });
            scored
                .into_iter()
                .take(k)
                .map(|(r, s)| (l, r, from_f64::<F>(s)))
                .collect()
        })
        .collect();

    let edges = per_left.into_iter().flatten().collect();
    SparseBipartiteGraph::new(nl, nr, edges)
}
