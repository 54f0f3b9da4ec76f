//! Orthogonal mapping between embedding spaces and cosine retrieval.
//!
//! The mapping direction is fixed: `W` takes source rows into the target
//! space (`x · W`), and retrieval always searches the target vocabulary.

use std::io::{BufRead, Write};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embeddings::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::scalar::{dot64, from_f64, to_f64, Scalar};

/// Default iteration cap for the SVD inside [`procrustes`].
pub const DEFAULT_SVD_MAX_ITERS: usize = 10_000;

/// Square orthogonal transformation from source to target space.
///
/// Orthogonality is part of the contract: `‖WᵀW − I‖_F ≤ 1e-8` for every
/// mapping produced by [`procrustes`] (at f64 precision).
#[derive(Debug, Clone, PartialEq)]
pub struct MappingMatrix<F: Scalar> {
    data: Vec<F>,
    dim: usize,
}

impl<F: Scalar> MappingMatrix<F> {
    pub fn identity(dim: usize) -> Self {
        let mut data = vec![F::zero(); dim * dim];
        for i in 0..dim {
            data[i * dim + i] = F::one();
        }
        Self { data, dim }
    }

    /// Builds a mapping from row-major rows; shape is validated,
    /// orthogonality is the caller's responsibility.
    pub fn from_rows(rows: Vec<Vec<F>>) -> Result<Self> {
        let dim = rows.len();
        let mut data = Vec::with_capacity(dim * dim);
        for row in &rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    context: "mapping matrix row",
                    expected: dim,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self { data, dim })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[F] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// `x · W` for a single row vector.
    pub fn apply_to(&self, x: &[F]) -> Vec<F> {
        debug_assert_eq!(x.len(), self.dim);
        let mut out = vec![0.0f64; self.dim];
        for (i, xi) in x.iter().enumerate() {
            let xi = to_f64(*xi);
            if xi == 0.0 {
                continue;
            }
            let row = self.row(i);
            for (o, w) in out.iter_mut().zip(row.iter()) {
                *o += xi * to_f64(*w);
            }
        }
        out.into_iter().map(from_f64).collect()
    }

    /// Maps every row of an embedding matrix, preserving words, ranks and
    /// OOV flags.
    pub fn apply(&self, m: &EmbeddingMatrix<F>) -> Result<EmbeddingMatrix<F>> {
        if m.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                context: "mapping vs embedding matrix",
                expected: self.dim,
                found: m.dim(),
            });
        }
        m.map_rows(|row| self.apply_to(row))
    }

    /// `‖WᵀW − I‖_F`, computed in f64.
    pub fn orthogonality_error(&self) -> f64 {
        let d = self.dim;
        let mut acc = 0.0f64;
        for i in 0..d {
            for j in 0..d {
                // (WᵀW)[i][j] = Σ_k W[k][i]·W[k][j]
                let mut s = 0.0f64;
                for k in 0..d {
                    s += to_f64(self.data[k * d + i]) * to_f64(self.data[k * d + j]);
                }
                let target = if i == j { 1.0 } else { 0.0 };
                acc += (s - target) * (s - target);
            }
        }
        acc.sqrt()
    }

    /// Serializes as a word2vec-style matrix with row labels `w_0 ..
    /// w_{d-1}` and full round-trip precision.
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{} {}", self.dim, self.dim)?;
        for i in 0..self.dim {
            write!(w, "w_{}", i)?;
            for v in self.row(i) {
                write!(w, " {}", to_f64(*v))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Reads a matrix written by [`MappingMatrix::write`] and enforces the
    /// orthogonality bound `tol`.
    pub fn load<R: BufRead>(reader: R, tol: f64) -> Result<Self> {
        let (m, _) = EmbeddingMatrix::<F>::load(reader)?;
        if m.len() != m.dim() {
            return Err(Error::DimensionMismatch {
                context: "mapping matrix",
                expected: m.dim(),
                found: m.len(),
            });
        }
        let w = Self::from_rows((0..m.len()).map(|i| m.row(i).to_vec()).collect())?;
        let err = w.orthogonality_error();
        if err > tol {
            return Err(Error::InvalidArgument(format!(
                "matrix is not orthogonal: ‖WᵀW − I‖_F = {err:.3e} > {tol:.1e}"
            )));
        }
        Ok(w)
    }
}

/// Seed lexicon: (source row, target row) pairs. Repeated pairs are kept
/// verbatim; their weight in the cross-covariance is intentional.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedLexicon {
    pairs: Vec<(usize, usize)>,
}

/// Counts from [`SeedLexicon::read_text`].
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SeedReadStats {
    pub resolved: usize,
    /// Lines whose source or target form had no embedding row.
    pub unresolved: usize,
}

impl SeedLexicon {
    pub fn new(pairs: Vec<(usize, usize)>) -> Self {
        Self { pairs }
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn push(&mut self, src: usize, tgt: usize) {
        self.pairs.push((src, tgt));
    }

    /// Parses `source<TAB>target` lines, resolving forms to row indices.
    /// Unresolvable lines are skipped and counted.
    pub fn read_text<R: BufRead, F: Scalar>(
        reader: R,
        x: &EmbeddingMatrix<F>,
        z: &EmbeddingMatrix<F>,
    ) -> Result<(Self, SeedReadStats)> {
        let mut pairs = Vec::new();
        let mut stats = SeedReadStats::default();
        for (idx, line) in reader.lines().enumerate() {
            let line = line.map_err(Error::Io)?;
            if line.is_empty() {
                continue;
            }
            let mut cols = line.split('\t');
            let (src, tgt) = match (cols.next(), cols.next()) {
                (Some(s), Some(t)) if !s.is_empty() && !t.is_empty() => (s, t),
                _ => {
                    return Err(Error::Parse {
                        line: idx + 1,
                        msg: format!("expected two tab-separated forms, got {line:?}"),
                    })
                }
            };
            match (x.rank(src), z.rank(tgt)) {
                (Some(i), Some(j)) => {
                    pairs.push((i, j));
                    stats.resolved += 1;
                }
                _ => stats.unresolved += 1,
            }
        }
        Ok((Self { pairs }, stats))
    }
}

fn check_seed<F: Scalar>(
    x: &EmbeddingMatrix<F>,
    z: &EmbeddingMatrix<F>,
    seed: &SeedLexicon,
) -> Result<()> {
    if seed.is_empty() {
        return Err(Error::EmptySeed);
    }
    if x.dim() != z.dim() {
        return Err(Error::DimensionMismatch {
            context: "source vs target embeddings",
            expected: x.dim(),
            found: z.dim(),
        });
    }
    for &(i, j) in seed.pairs() {
        if i >= x.len() {
            return Err(Error::IndexOutOfRange {
                context: "seed source row",
                index: i,
                len: x.len(),
            });
        }
        if j >= z.len() {
            return Err(Error::IndexOutOfRange {
                context: "seed target row",
                index: j,
                len: z.len(),
            });
        }
    }
    Ok(())
}

/// Solves the orthogonal Procrustes problem over the seed lexicon:
/// `W = U·Vᵀ` where `U·S·Vᵀ` is the SVD of the seed cross-covariance
/// `X_Dᵀ·Z_D`. The result maximizes the summed cosine between mapped
/// source rows and their target rows over all orthogonal matrices.
pub fn procrustes<F: Scalar>(
    x: &EmbeddingMatrix<F>,
    z: &EmbeddingMatrix<F>,
    seed: &SeedLexicon,
) -> Result<MappingMatrix<F>> {
    procrustes_capped(x, z, seed, DEFAULT_SVD_MAX_ITERS)
}

/// [`procrustes`] with an explicit SVD iteration cap.
pub fn procrustes_capped<F: Scalar>(
    x: &EmbeddingMatrix<F>,
    z: &EmbeddingMatrix<F>,
    seed: &SeedLexicon,
    svd_max_iters: usize,
) -> Result<MappingMatrix<F>> {
    check_seed(x, z, seed)?;
    let d = x.dim();
    let mut m = DMatrix::<f64>::zeros(d, d);
    for &(i, j) in seed.pairs() {
        let xr = x.row(i);
        let zr = z.row(j);
        for a in 0..d {
            let xa = to_f64(xr[a]);
            if xa == 0.0 {
                continue;
            }
            for b in 0..d {
                m[(a, b)] += xa * to_f64(zr[b]);
            }
        }
    }
    let svd =
        m.try_svd(true, true, f64::EPSILON, svd_max_iters)
            .ok_or(Error::SvdNonConvergence {
                max_iters: svd_max_iters,
            })?;
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let w = u * v_t;
    let mut data = Vec::with_capacity(d * d);
    for i in 0..d {
        for j in 0..d {
            data.push(from_f64::<F>(w[(i, j)]));
        }
    }
    Ok(MappingMatrix { data, dim: d })
}

#[inline]
fn cosine_to_row<F: Scalar>(
    query: &[F],
    query_norm: f64,
    targets: &EmbeddingMatrix<F>,
    row: usize,
) -> f64 {
    let rn = targets.row_norm(row);
    if query_norm == 0.0 || rn == 0.0 {
        return 0.0;
    }
    dot64(query, targets.row(row)) / (query_norm * rn)
}

/// The `k` highest-cosine target rows for a query vector, descending
/// score, ties broken by lower row index (the more frequent word wins).
pub fn nearest_neighbors<F: Scalar>(
    query: &[F],
    targets: &EmbeddingMatrix<F>,
    k: usize,
) -> Result<Vec<(usize, F)>> {
    if k < 1 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if query.len() != targets.dim() {
        return Err(Error::DimensionMismatch {
            context: "query vs target embeddings",
            expected: targets.dim(),
            found: query.len(),
        });
    }
    let qn = crate::scalar::norm64(query);
    let mut scored: Vec<(usize, f64)> = (0..targets.len())
        .map(|j| (j, cosine_to_row(query, qn, targets, j)))
        .collect();
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.0.cmp(&b.0))
    });
    Ok(scored
        .into_iter()
        .take(k)
        .map(|(j, s)| (j, from_f64(s)))
        .collect())
}

/// Counts from [`induce_dictionary`].
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct InduceStats {
    /// Source rows left without any admissible target.
    pub omitted: usize,
}

/// Per-pair admissibility predicate `(source row, target row) -> bool`.
pub type CandidateFilter<'a> = &'a (dyn Fn(usize, usize) -> bool + Sync);

/// Maps each source row with `w` and pairs it with its highest-cosine
/// admissible target row. Sources with an empty admissible set are
/// omitted and counted.
pub fn induce_dictionary<F: Scalar>(
    x: &EmbeddingMatrix<F>,
    z: &EmbeddingMatrix<F>,
    w: &MappingMatrix<F>,
    candidate_filter: Option<CandidateFilter<'_>>,
) -> Result<(SeedLexicon, InduceStats)> {
    if x.dim() != z.dim() || w.dim() != x.dim() {
        return Err(Error::DimensionMismatch {
            context: "induce_dictionary inputs",
            expected: x.dim(),
            found: if w.dim() != x.dim() { w.dim() } else { z.dim() },
        });
    }
    let best: Vec<Option<usize>> = (0..x.len())
        .into_par_iter()
        .map(|i| {
            let mapped = w.apply_to(x.row(i));
            let qn = crate::scalar::norm64(&mapped);
            let mut best: Option<(usize, f64)> = None;
            for j in 0..z.len() {
                if let Some(filter) = candidate_filter {
                    if !filter(i, j) {
                        continue;
                    }
                }
                let s = cosine_to_row(&mapped, qn, z, j);
                match best {
                    Some((_, bs)) if s <= bs => {}
                    _ => best = Some((j, s)),
                }
            }
            best.map(|(j, _)| j)
        })
        .collect();
    let mut pairs = Vec::new();
    let mut omitted = 0usize;
    for (i, b) in best.iter().enumerate() {
        match b {
            Some(j) => pairs.push((i, *j)),
            None => omitted += 1,
        }
    }
    Ok((SeedLexicon::new(pairs), InduceStats { omitted }))
}

/// Mean cosine between mapped source rows and their paired target rows.
pub fn mean_pair_cosine<F: Scalar>(
    x: &EmbeddingMatrix<F>,
    z: &EmbeddingMatrix<F>,
    w: &MappingMatrix<F>,
    pairs: &SeedLexicon,
) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    let cosines: Vec<f64> = pairs
        .pairs()
        .par_iter()
        .map(|&(i, j)| {
            let mapped = w.apply_to(x.row(i));
            let qn = crate::scalar::norm64(&mapped);
            cosine_to_row(&mapped, qn, z, j)
        })
        .collect();
    cosines.iter().sum::<f64>() / cosines.len() as f64
}
