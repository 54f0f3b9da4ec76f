//! Seeded synthetic fixtures: random unit vectors, random orthogonal
//! matrices, and rotated-copy embedding pairs with a known gold pairing.
//!
//! Shared by the test suites; handy for generating toy data.

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::embeddings::EmbeddingMatrix;
use crate::mapping::MappingMatrix;

/// One standard-normal draw (Box–Muller).
fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// `n` random unit-norm rows of dimension `d`, isotropic on the sphere.
pub fn random_unit_rows(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| loop {
            let row: Vec<f64> = (0..d).map(|_| gaussian(&mut rng)).collect();
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 1e-6 {
                return row.iter().map(|v| v / norm).collect();
            }
        })
        .collect()
}

/// Random orthogonal `d×d` matrix (Q factor of a random matrix).
pub fn random_orthogonal(d: usize, seed: u64) -> MappingMatrix<f64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let m = DMatrix::<f64>::from_fn(d, d, |_, _| rng.gen_range(-1.0..1.0));
    let q = m.qr().q();
    let rows = (0..d)
        .map(|i| (0..d).map(|j| q[(i, j)]).collect())
        .collect();
    MappingMatrix::from_rows(rows).expect("square rows")
}

/// Embedding matrix with words `w0..w{n-1}` and random unit rows.
pub fn random_unit_matrix(n: usize, d: usize, seed: u64) -> EmbeddingMatrix<f64> {
    let words = (0..n).map(|i| format!("w{i}")).collect();
    EmbeddingMatrix::new(words, random_unit_rows(n, d, seed)).expect("valid fixture")
}

/// A rotated-copy pair: `z` holds the rows of `x` right-multiplied by a
/// random orthogonal `q`, under target words `t0..t{n-1}`. The gold
/// pairing is `i -> i`. Returns `(x, z, q)`.
pub fn rotated_copy(
    n: usize,
    d: usize,
    seed: u64,
) -> (
    EmbeddingMatrix<f64>,
    EmbeddingMatrix<f64>,
    MappingMatrix<f64>,
) {
    let x = random_unit_matrix(n, d, seed);
    let q = random_orthogonal(d, seed.wrapping_add(0x9e3779b9));
    let z_rows: Vec<Vec<f64>> = (0..n).map(|i| q.apply_to(x.row(i))).collect();
    let words = (0..n).map(|i| format!("t{i}")).collect();
    let z = EmbeddingMatrix::new(words, z_rows).expect("valid fixture");
    (x, z, q)
}

/// A rotated-copy pair built so that a tiny seed dictionary on the first
/// `anchors` rows reliably bootstraps the full gold pairing.
///
/// The first `anchors` rows span an anchor subspace (orthonormal before
/// the final rotation) and every other word's vector is dominated by
/// that subspace, with the remaining coordinates scaled down to `decay`.
/// A mapping fit on the anchor rows is therefore already accurate on the
/// dominant part of every vector, which keeps iterative re-induction on
/// the right basin. Gold pairing is `i -> i`; returns `(x, z, q)`.
pub fn anchored_rotated_copy(
    n: usize,
    d: usize,
    anchors: usize,
    decay: f64,
    seed: u64,
) -> (
    EmbeddingMatrix<f64>,
    EmbeddingMatrix<f64>,
    MappingMatrix<f64>,
) {
    assert!(anchors <= d && anchors <= n, "anchors must fit the fixture");
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let basis = random_orthogonal(d, seed ^ 0x1234_5678);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let raw: Vec<f64> = (0..d)
                .map(|k| {
                    if i < anchors {
                        if k == i {
                            1.0
                        } else if k < anchors {
                            0.0
                        } else {
                            decay * gaussian(&mut rng)
                        }
                    } else if k < anchors {
                        gaussian(&mut rng)
                    } else {
                        decay * gaussian(&mut rng)
                    }
                })
                .collect();
            let v = basis.apply_to(&raw);
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter().map(|x| x / norm).collect()
        })
        .collect();
    let x = EmbeddingMatrix::new((0..n).map(|i| format!("w{i}")).collect(), rows)
        .expect("valid fixture");
    let q = random_orthogonal(d, seed ^ 0x9e37_79b9);
    let z_rows: Vec<Vec<f64>> = (0..n).map(|i| q.apply_to(x.row(i))).collect();
    let words = (0..n).map(|i| format!("t{i}")).collect();
    let z = EmbeddingMatrix::new(words, z_rows).expect("valid fixture");
    (x, z, q)
}

/// A rotated pair whose words come in tag clusters: word `i` belongs to
/// cluster `i % n_tags` on both sides, cluster centers are random unit
/// vectors, and `spread` controls how far words scatter around their
/// center (larger spread makes neighborhoods overlap across clusters).
/// Gold pairing is `i -> i`; `z = x·q`. Returns `(x, z, q)`.
pub fn tag_clustered_pair(
    n: usize,
    d: usize,
    n_tags: usize,
    spread: f64,
    seed: u64,
) -> (
    EmbeddingMatrix<f64>,
    EmbeddingMatrix<f64>,
    MappingMatrix<f64>,
) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let centers: Vec<Vec<f64>> = (0..n_tags)
        .map(|_| {
            let v: Vec<f64> = (0..d).map(|_| gaussian(&mut rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter().map(|x| x / norm).collect()
        })
        .collect();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let c = &centers[i % n_tags];
            let v: Vec<f64> = (0..d).map(|k| c[k] + spread * gaussian(&mut rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter().map(|x| x / norm).collect()
        })
        .collect();
    let x = EmbeddingMatrix::new((0..n).map(|i| format!("w{i}")).collect(), rows)
        .expect("valid fixture");
    let q = random_orthogonal(d, seed ^ 0x9e37_79b9);
    let z_rows: Vec<Vec<f64>> = (0..n).map(|i| q.apply_to(x.row(i))).collect();
    let z = EmbeddingMatrix::new((0..n).map(|i| format!("t{i}")).collect(), z_rows)
        .expect("valid fixture");
    (x, z, q)
}
