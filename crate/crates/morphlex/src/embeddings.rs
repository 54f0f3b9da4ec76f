//! Word-embedding matrices: loading, normalization, truncation, and
//! subword-sum synthesis of vectors for out-of-vocabulary forms.
//!
//! Row order equals frequency rank: embedding dumps list words from most
//! to least frequent, so the row index doubles as the word's rank.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{from_f64, norm64, to_f64, Scalar};

/// Ordered vocabulary plus a dense row-major matrix, one row per word.
///
/// Immutable after construction; transformation ops consume `self` and
/// return a new matrix, so shared references stay safe across threads.
#[derive(Debug, Clone)]
pub struct EmbeddingMatrix<F: Scalar> {
    words: Vec<String>,
    data: Vec<F>,
    dim: usize,
    rank_of: HashMap<String, usize>,
    oov: Vec<bool>,
    norms: Vec<f64>,
}

/// Side counts from [`EmbeddingMatrix::load`].
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct LoadStats {
    /// Duplicate forms skipped (first occurrence kept).
    pub duplicates: usize,
    /// Row count declared by the header.
    pub declared_rows: usize,
    /// Rows actually loaded.
    pub loaded_rows: usize,
}

/// Side counts from [`EmbeddingMatrix::extend_with_oov`].
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ExtendStats {
    pub appended: usize,
    /// Forms skipped because they were already present.
    pub skipped_existing: usize,
    /// Appended forms for which no n-gram was in the table (zero vector).
    pub no_coverage: usize,
}

/// Outcome of [`synthesize_oov`].
#[derive(Debug, Clone, Default)]
pub struct SynthStats {
    pub grams_total: usize,
    pub grams_missing: usize,
    /// True when not a single n-gram of the form was in the table.
    pub no_coverage: bool,
}

impl<F: Scalar> EmbeddingMatrix<F> {
    /// Builds a matrix from parallel word and row lists.
    pub fn new(words: Vec<String>, rows: Vec<Vec<F>>) -> Result<Self> {
        if words.len() != rows.len() {
            return Err(Error::InvalidArgument(format!(
                "{} words but {} rows",
                words.len(),
                rows.len()
            )));
        }
        let dim = rows.first().map(|r| r.len()).unwrap_or(0);
        if !rows.is_empty() && dim == 0 {
            return Err(Error::InvalidArgument("zero-dimensional rows".into()));
        }
        let mut data = Vec::with_capacity(words.len() * dim);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    context: "embedding row",
                    expected: dim,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
            let _ = i;
        }
        let oov = vec![false; words.len()];
        Self::from_parts(words, data, dim, oov)
    }

    fn from_parts(words: Vec<String>, data: Vec<F>, dim: usize, oov: Vec<bool>) -> Result<Self> {
        debug_assert_eq!(oov.len(), words.len());
        let mut rank_of = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if rank_of.insert(w.clone(), i).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate word {w:?}")));
            }
        }
        let norms = (0..words.len())
            .map(|i| norm64(&data[i * dim..(i + 1) * dim]))
            .collect();
        Ok(Self {
            words,
            data,
            dim,
            rank_of,
            oov,
            norms,
        })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn word(&self, row: usize) -> &str {
        &self.words[row]
    }

    pub fn row(&self, row: usize) -> &[F] {
        &self.data[row * self.dim..(row + 1) * self.dim]
    }

    /// Cached Euclidean norm of a row.
    pub fn row_norm(&self, row: usize) -> f64 {
        self.norms[row]
    }

    /// Row index of a form; the index is also its frequency rank (0-based).
    pub fn rank(&self, form: &str) -> Option<usize> {
        self.rank_of.get(form).copied()
    }

    /// Whether a row was synthesized from subword n-grams.
    pub fn is_oov_row(&self, row: usize) -> bool {
        self.oov[row]
    }

    /// Number of OOV-synthesized rows.
    pub fn oov_rows(&self) -> usize {
        self.oov.iter().filter(|b| **b).count()
    }

    /// Reads word2vec text format: header `<count> <dim>`, then one
    /// `form v1 .. vd` line per word. Duplicate forms keep the first
    /// occurrence; the skip count is reported in the stats.
    pub fn load<R: BufRead>(reader: R) -> Result<(Self, LoadStats)> {
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or(Error::Parse {
                line: 1,
                msg: "missing header".into(),
            })?
            .map_err(Error::Io)?;
        let mut parts = header.split_whitespace();
        let declared_rows: usize =
            parts
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| Error::Parse {
                    line: 1,
                    msg: format!("malformed header {header:?}: expected \"<count> <dim>\""),
                })?;
        let dim: usize = parts
            .next()
            .and_then(|t| t.parse().ok())
            .filter(|d| *d >= 1)
            .ok_or_else(|| Error::Parse {
                line: 1,
                msg: format!("malformed header {header:?}: expected \"<count> <dim>\""),
            })?;
        if parts.next().is_some() {
            return Err(Error::Parse {
                line: 1,
                msg: format!("malformed header {header:?}: trailing tokens"),
            });
        }

        let mut words = Vec::with_capacity(declared_rows);
        let mut data: Vec<F> = Vec::with_capacity(declared_rows.saturating_mul(dim));
        let mut rank_of: HashMap<String, usize> = HashMap::with_capacity(declared_rows);
        let mut duplicates = 0usize;

        for (idx, line) in lines.enumerate() {
            let line_no = idx + 2;
            let line = line.map_err(Error::Io)?;
            if line.is_empty() {
                continue;
            }
            let mut toks = line.split_whitespace();
            let form = toks.next().ok_or_else(|| Error::Parse {
                line: line_no,
                msg: "blank line".into(),
            })?;
            let mut row: Vec<F> = Vec::with_capacity(dim);
            for tok in toks {
                let v = f64::from_str(tok).map_err(|_| Error::Parse {
                    line: line_no,
                    msg: format!("non-numeric value {tok:?}"),
                })?;
                row.push(from_f64(v));
            }
            if row.len() != dim {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!(
                        "dimensionality mismatch: expected {dim} values, found {}",
                        row.len()
                    ),
                });
            }
            if rank_of.contains_key(form) {
                duplicates += 1;
                continue;
            }
            rank_of.insert(form.to_string(), words.len());
            words.push(form.to_string());
            data.extend_from_slice(&row);
        }

        let loaded_rows = words.len();
        let norms = (0..loaded_rows)
            .map(|i| norm64(&data[i * dim..(i + 1) * dim]))
            .collect();
        let oov = vec![false; loaded_rows];
        Ok((
            Self {
                words,
                data,
                dim,
                rank_of,
                oov,
                norms,
            },
            LoadStats {
                duplicates,
                declared_rows,
                loaded_rows,
            },
        ))
    }

    /// Writes word2vec text format with 6 significant decimal digits,
    /// single-space separated, LF line endings.
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{} {}", self.len(), self.dim)?;
        for i in 0..self.len() {
            write!(w, "{}", self.words[i])?;
            for v in self.row(i) {
                write!(w, " {}", fmt_sig6(to_f64(*v)))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// Divides every nonzero row by its Euclidean norm. Returns the new
    /// matrix and the number of rows left untouched because they were
    /// exactly zero.
    pub fn length_normalized(mut self) -> (Self, usize) {
        let mut zero_rows = 0usize;
        for i in 0..self.words.len() {
            let n = self.norms[i];
            if n == 0.0 {
                zero_rows += 1;
                continue;
            }
            for v in &mut self.data[i * self.dim..(i + 1) * self.dim] {
                *v = from_f64(to_f64(*v) / n);
            }
        }
        self.recompute_norms();
        (self, zero_rows)
    }

    /// Subtracts the column mean from every row.
    pub fn mean_centered(mut self) -> Result<Self> {
        if self.is_empty() {
            return Err(Error::EmptyInput("cannot mean-center an empty matrix"));
        }
        let n = self.words.len() as f64;
        let mut mean = vec![0.0f64; self.dim];
        for i in 0..self.words.len() {
            for (j, v) in self.row(i).iter().enumerate() {
                mean[j] += to_f64(*v);
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        for i in 0..self.words.len() {
            for (j, m) in mean.iter().enumerate() {
                let v = to_f64(self.data[i * self.dim + j]) - m;
                self.data[i * self.dim + j] = from_f64(v);
            }
        }
        self.recompute_norms();
        Ok(self)
    }

    /// Keeps the first `min(k, len)` rows, preserving ranks.
    pub fn truncated(mut self, k: usize) -> Self {
        let keep = k.min(self.words.len());
        for w in &self.words[keep..] {
            self.rank_of.remove(w);
        }
        self.words.truncate(keep);
        self.data.truncate(keep * self.dim);
        self.oov.truncate(keep);
        self.norms.truncate(keep);
        self
    }

    /// Appends subword-synthesized rows for `forms`. Forms already in the
    /// vocabulary are skipped and counted; appended rows are flagged as
    /// OOV-synthesized so frequency binning can place them in the OOV bin.
    pub fn extend_with_oov(
        mut self,
        forms: &[String],
        table: &NgramTable<F>,
    ) -> Result<(Self, ExtendStats)> {
        if table.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                context: "n-gram table vs embedding matrix",
                expected: self.dim,
                found: table.dim(),
            });
        }
        let mut stats = ExtendStats::default();
        for form in forms {
            if self.rank_of.contains_key(form) {
                stats.skipped_existing += 1;
                continue;
            }
            let (vec, synth) = synthesize_oov(form, table)?;
            if synth.no_coverage {
                stats.no_coverage += 1;
            }
            let row = self.words.len();
            self.rank_of.insert(form.clone(), row);
            self.words.push(form.clone());
            self.norms.push(norm64(&vec));
            self.data.extend_from_slice(&vec);
            self.oov.push(true);
            stats.appended += 1;
        }
        Ok((self, stats))
    }

    /// Applies `f` to every row, preserving words, ranks and OOV flags.
    /// Rows are processed in parallel and reassembled in index order.
    pub fn map_rows(&self, f: impl Fn(&[F]) -> Vec<F> + Sync) -> Result<Self> {
        let rows: Vec<Vec<F>> = (0..self.len())
            .into_par_iter()
            .map(|i| f(self.row(i)))
            .collect();
        let mut data = Vec::with_capacity(self.len() * self.dim);
        for row in &rows {
            if row.len() != self.dim {
                return Err(Error::DimensionMismatch {
                    context: "mapped embedding row",
                    expected: self.dim,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        let norms = (0..self.len())
            .map(|i| norm64(&data[i * self.dim..(i + 1) * self.dim]))
            .collect();
        Ok(Self {
            words: self.words.clone(),
            data,
            dim: self.dim,
            rank_of: self.rank_of.clone(),
            oov: self.oov.clone(),
            norms,
        })
    }

    fn recompute_norms(&mut self) {
        for i in 0..self.words.len() {
            self.norms[i] = norm64(&self.data[i * self.dim..(i + 1) * self.dim]);
        }
    }
}

/// Character n-gram inventory backing OOV vector synthesis.
#[derive(Debug, Clone)]
pub struct NgramTable<F: Scalar> {
    grams: HashMap<String, Vec<F>>,
    n_min: usize,
    n_max: usize,
    dim: usize,
}

impl<F: Scalar> NgramTable<F> {
    pub fn new(entries: Vec<(String, Vec<F>)>, n_min: usize, n_max: usize) -> Result<Self> {
        if n_min < 1 || n_min > n_max {
            return Err(Error::InvalidArgument(format!(
                "invalid n-gram bounds: n_min {n_min}, n_max {n_max}"
            )));
        }
        let dim = entries.first().map(|(_, v)| v.len()).unwrap_or(0);
        let mut grams = HashMap::with_capacity(entries.len());
        for (g, v) in entries {
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    context: "n-gram vector",
                    expected: dim,
                    found: v.len(),
                });
            }
            grams.insert(g, v);
        }
        Ok(Self {
            grams,
            n_min,
            n_max,
            dim,
        })
    }

    /// Reads a table stored as word2vec text (n-grams in place of forms)
    /// plus a companion metadata line `nmin nmax`.
    pub fn load<R: BufRead, M: BufRead>(reader: R, mut meta: M) -> Result<Self> {
        let mut meta_line = String::new();
        meta.read_line(&mut meta_line)?;
        let mut toks = meta_line.split_whitespace();
        let parse = |t: Option<&str>| -> Result<usize> {
            t.and_then(|t| t.parse().ok()).ok_or_else(|| Error::Parse {
                line: 1,
                msg: format!("malformed n-gram metadata {meta_line:?}: expected \"nmin nmax\""),
            })
        };
        let n_min = parse(toks.next())?;
        let n_max = parse(toks.next())?;
        let (m, _) = EmbeddingMatrix::<F>::load(reader)?;
        let entries = (0..m.len())
            .map(|i| (m.word(i).to_string(), m.row(i).to_vec()))
            .collect();
        Self::new(entries, n_min, n_max)
    }

    /// Writes the table (grams sorted for reproducible output) and the
    /// metadata sidecar.
    pub fn write<W: Write, M: Write>(&self, mut w: W, mut meta: M) -> Result<()> {
        writeln!(meta, "{} {}", self.n_min, self.n_max)?;
        let mut keys: Vec<&String> = self.grams.keys().collect();
        keys.sort();
        writeln!(w, "{} {}", keys.len(), self.dim)?;
        for k in keys {
            write!(w, "{}", k)?;
            for v in &self.grams[k] {
                write!(w, " {}", fmt_sig6(to_f64(*v)))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn get(&self, gram: &str) -> Option<&[F]> {
        self.grams.get(gram).map(|v| v.as_slice())
    }

    pub fn len(&self) -> usize {
        self.grams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grams.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_min(&self) -> usize {
        self.n_min
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }
}

/// Enumerates character n-grams of the boundary-marked string `<form>`
/// for every length in `[n_min, n_max]`, left to right, shortest first.
/// Duplicates are kept. When the marked string is shorter than `n_min`
/// the whole marked string is emitted as a single gram.
pub fn ngram_decompose(form: &str, n_min: usize, n_max: usize) -> Result<Vec<String>> {
    if form.is_empty() {
        return Err(Error::EmptyInput("cannot decompose an empty form"));
    }
    if n_min < 1 || n_min > n_max {
        return Err(Error::InvalidArgument(format!(
            "invalid n-gram bounds: n_min {n_min}, n_max {n_max}"
        )));
    }
    let marked: Vec<char> = std::iter::once('<')
        .chain(form.chars())
        .chain(std::iter::once('>'))
        .collect();
    if marked.len() < n_min {
        return Ok(vec![marked.iter().collect()]);
    }
    let mut grams = Vec::new();
    for n in n_min..=n_max {
        if n > marked.len() {
            break;
        }
        for window in marked.windows(n) {
            grams.push(window.iter().collect());
        }
    }
    Ok(grams)
}

/// Sums the table vectors of every decomposed n-gram present in the
/// table. Missing n-grams are skipped and counted; when none is present
/// the zero vector is returned with the no-coverage flag set.
pub fn synthesize_oov<F: Scalar>(
    form: &str,
    table: &NgramTable<F>,
) -> Result<(Vec<F>, SynthStats)> {
    let grams = ngram_decompose(form, table.n_min, table.n_max)?;
    let mut acc = vec![0.0f64; table.dim()];
    let mut stats = SynthStats {
        grams_total: grams.len(),
        ..Default::default()
    };
    let mut covered = 0usize;
    for g in &grams {
        match table.get(g) {
            Some(v) => {
                covered += 1;
                for (a, x) in acc.iter_mut().zip(v.iter()) {
                    *a += to_f64(*x);
                }
            }
            None => stats.grams_missing += 1,
        }
    }
    stats.no_coverage = covered == 0;
    Ok((acc.into_iter().map(from_f64).collect(), stats))
}

/// Preprocessing applied to embedding matrices before mapping.
///
/// `UnitCenterUnit` is the default: length-normalize, mean-center, then
/// re-normalize to restore unit norms broken by centering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PreprocessPipeline {
    None,
    Unit,
    UnitCenter,
    #[default]
    UnitCenterUnit,
}

/// Zero-row counts per length-normalization pass.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PreprocessStats {
    pub zero_rows_per_pass: Vec<usize>,
}

impl PreprocessPipeline {
    pub fn apply<F: Scalar>(
        self,
        m: EmbeddingMatrix<F>,
    ) -> Result<(EmbeddingMatrix<F>, PreprocessStats)> {
        let mut stats = PreprocessStats::default();
        let m = match self {
            PreprocessPipeline::None => m,
            PreprocessPipeline::Unit => {
                let (m, z) = m.length_normalized();
                stats.zero_rows_per_pass.push(z);
                m
            }
            PreprocessPipeline::UnitCenter => {
                let (m, z) = m.length_normalized();
                stats.zero_rows_per_pass.push(z);
                m.mean_centered()?
            }
            PreprocessPipeline::UnitCenterUnit => {
                let (m, z) = m.length_normalized();
                stats.zero_rows_per_pass.push(z);
                let (m, z2) = m.mean_centered()?.length_normalized();
                stats.zero_rows_per_pass.push(z2);
                m
            }
        };
        Ok((m, stats))
    }
}

impl FromStr for PreprocessPipeline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Self::None),
            "unit" => Ok(Self::Unit),
            "unit-center" => Ok(Self::UnitCenter),
            "unit-center-unit" => Ok(Self::UnitCenterUnit),
            other => Err(Error::InvalidArgument(format!(
                "unknown preprocessing pipeline {other:?}"
            ))),
        }
    }
}

impl std::fmt::Display for PreprocessPipeline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Self::None => "none",
            Self::Unit => "unit",
            Self::UnitCenter => "unit-center",
            Self::UnitCenterUnit => "unit-center-unit",
        };
        f.write_str(s)
    }
}

/// Formats with 6 significant decimal digits, printf `%g` style.
pub fn fmt_sig6(v: f64) -> String {
    if !v.is_finite() {
        return format!("{v}");
    }
    if v == 0.0 {
        return "0".to_string();
    }
    let exp = v.abs().log10().floor() as i32;
    if !(-4..6).contains(&exp) {
        let s = format!("{:.5e}", v);
        // trim trailing zeros in the mantissa: "1.50000e2" -> "1.5e2"
        if let Some(epos) = s.find('e') {
            let (mant, rest) = s.split_at(epos);
            let mant = mant.trim_end_matches('0').trim_end_matches('.');
            return format!("{mant}{rest}");
        }
        s
    } else {
        let decimals = (5 - exp).max(0) as usize;
        let s = format!("{:.*}", decimals, v);
        let s = if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        };
        if s == "-0" {
            "0".to_string()
        } else {
            s
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::io::Cursor;

    fn matrix(rows: &[(&str, &[f64])]) -> EmbeddingMatrix<f64> {
        EmbeddingMatrix::new(
            rows.iter().map(|(w, _)| w.to_string()).collect(),
            rows.iter().map(|(_, r)| r.to_vec()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn load_basic() {
        let src = "2 3\ncat 1 0 0\ndog 0 1 0\n";
        let (m, stats) = EmbeddingMatrix::<f64>::load(Cursor::new(src)).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.dim(), 3);
        assert_eq!(m.rank("cat"), Some(0));
        assert_eq!(m.rank("dog"), Some(1));
        assert_eq!(m.row(0), &[1.0, 0.0, 0.0]);
        assert_eq!(stats.duplicates, 0);
    }

    #[test]
    fn load_rejects_dim_mismatch_with_line_number() {
        let src = "1 2\na 1 2 3\n";
        let err = EmbeddingMatrix::<f64>::load(Cursor::new(src)).unwrap_err();
        match err {
            Error::Parse { line, msg } => {
                assert_eq!(line, 2);
                assert!(msg.contains("dimensionality mismatch"), "{msg}");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn load_rejects_malformed_header() {
        let err = EmbeddingMatrix::<f64>::load(Cursor::new("two 3\n")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn load_rejects_non_numeric_token() {
        let src = "1 2\na 1 x\n";
        let err = EmbeddingMatrix::<f64>::load(Cursor::new(src)).unwrap_err();
        match err {
            Error::Parse { line, msg } => {
                assert_eq!(line, 2);
                assert!(msg.contains("non-numeric"), "{msg}");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn load_keeps_first_duplicate() {
        let src = "3 2\ncat 1 0\ncat 2 0\ndog 0 1\n";
        let (m, stats) = EmbeddingMatrix::<f64>::load(Cursor::new(src)).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(stats.duplicates, 1);
        assert_eq!(m.row(0), &[1.0, 0.0]);
        assert_eq!(m.rank("dog"), Some(1));
    }

    #[test]
    fn length_normalize_three_four_five() {
        let (m, zeros) = matrix(&[("a", &[3.0, 4.0])]).length_normalized();
        assert_eq!(zeros, 0);
        assert!((m.row(0)[0] - 0.6).abs() < 1e-12);
        assert!((m.row(0)[1] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn length_normalize_keeps_zero_rows_and_counts_them() {
        let (m, zeros) = matrix(&[("z", &[0.0, 0.0]), ("u", &[1.0, 0.0])]).length_normalized();
        assert_eq!(zeros, 1);
        assert_eq!(m.row(0), &[0.0, 0.0]);
        assert_eq!(m.row(1), &[1.0, 0.0]);
    }

    #[test]
    fn mean_center_examples() {
        let m = matrix(&[("a", &[1.0, 0.0]), ("b", &[3.0, 0.0])])
            .mean_centered()
            .unwrap();
        assert_eq!(m.row(0), &[-1.0, 0.0]);
        assert_eq!(m.row(1), &[1.0, 0.0]);

        let single = matrix(&[("a", &[5.0, 5.0])]).mean_centered().unwrap();
        assert_eq!(single.row(0), &[0.0, 0.0]);
    }

    #[test]
    fn mean_center_empty_errors() {
        let m = EmbeddingMatrix::<f64>::new(vec![], vec![]).unwrap();
        assert!(matches!(m.mean_centered(), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn mean_center_is_idempotent_on_centered_input() {
        let m = matrix(&[("a", &[1.0, 2.0]), ("b", &[-3.0, 0.5]), ("c", &[2.0, -2.5])])
            .mean_centered()
            .unwrap();
        let before: Vec<f64> = (0..m.len()).flat_map(|i| m.row(i).to_vec()).collect();
        let again = m.mean_centered().unwrap();
        let after: Vec<f64> = (0..again.len())
            .flat_map(|i| again.row(i).to_vec())
            .collect();
        for (x, y) in before.iter().zip(after.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn truncate_keeps_prefix_and_clamps() {
        let m = matrix(&[
            ("a", &[1.0]),
            ("b", &[2.0]),
            ("c", &[3.0]),
            ("d", &[4.0]),
            ("e", &[5.0]),
        ]);
        let t = m.clone().truncated(2);
        assert_eq!(t.words(), &["a".to_string(), "b".to_string()]);
        assert_eq!(t.rank("a"), Some(0));
        assert_eq!(t.rank("c"), None);
        let u = m.truncated(10);
        assert_eq!(u.len(), 5);
    }

    #[test]
    fn ngram_decompose_examples() {
        assert_eq!(ngram_decompose("ab", 3, 3).unwrap(), vec!["<ab", "ab>"]);
        assert_eq!(ngram_decompose("a", 3, 3).unwrap(), vec!["<a>"]);
        // marked string shorter than n_min collapses to the whole string
        assert_eq!(ngram_decompose("a", 4, 5).unwrap(), vec!["<a>"]);
        let grams = ngram_decompose("aa a", 2, 2).unwrap();
        assert_eq!(grams, vec!["<a", "aa", "a ", " a", "a>"]);
    }

    #[test]
    fn ngram_decompose_rejects_empty_form() {
        assert!(matches!(
            ngram_decompose("", 3, 3),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn synthesize_examples() {
        let table = NgramTable::new(vec![("<a>".to_string(), vec![1.0, 0.0])], 3, 3).unwrap();
        let (v, stats) = synthesize_oov("a", &table).unwrap();
        assert_eq!(v, vec![1.0, 0.0]);
        assert!(!stats.no_coverage);

        let table = NgramTable::new(
            vec![
                ("<ab".to_string(), vec![1.0, 0.0]),
                ("ab>".to_string(), vec![0.0, 1.0]),
            ],
            3,
            3,
        )
        .unwrap();
        let (v, _) = synthesize_oov("ab", &table).unwrap();
        assert_eq!(v, vec![1.0, 1.0]);

        let (v, stats) = synthesize_oov("zzzz", &table).unwrap();
        assert_eq!(v, vec![0.0, 0.0]);
        assert!(stats.no_coverage);
        assert_eq!(stats.grams_missing, stats.grams_total);
    }

    #[test]
    fn extend_appends_flagged_rows_and_skips_existing() {
        let m = matrix(&[("cat", &[1.0, 0.0]), ("dog", &[0.0, 1.0])]);
        let table = NgramTable::new(
            vec![
                ("<ca".to_string(), vec![0.5, 0.5]),
                ("at>".to_string(), vec![0.5, -0.5]),
            ],
            3,
            3,
        )
        .unwrap();
        let forms = vec!["cats".to_string(), "dog".to_string()];
        let (ext, stats) = m.extend_with_oov(&forms, &table).unwrap();
        assert_eq!(ext.len(), 3);
        assert_eq!(stats.appended, 1);
        assert_eq!(stats.skipped_existing, 1);
        assert!(ext.is_oov_row(2));
        assert!(!ext.is_oov_row(0));
        // appended row equals synthesize_oov output exactly
        let (expected, _) = synthesize_oov("cats", &table).unwrap();
        assert_eq!(ext.row(2), expected.as_slice());
    }

    #[test]
    fn extend_rejects_dim_mismatch() {
        let m = matrix(&[("cat", &[1.0, 0.0])]);
        let table = NgramTable::new(vec![("<a>".to_string(), vec![1.0, 0.0, 0.0])], 3, 3).unwrap();
        assert!(matches!(
            m.extend_with_oov(&["x".to_string()], &table),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn writer_emits_six_significant_digits() {
        let m = matrix(&[("a", &[1.0 / 3.0, 0.0]), ("b", &[-1234.5678, 0.25])]);
        let mut buf = Vec::new();
        m.write(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "2 2\na 0.333333 0\nb -1234.57 0.25\n");
    }

    #[test]
    fn fmt_sig6_covers_magnitudes() {
        assert_eq!(fmt_sig6(0.0), "0");
        assert_eq!(fmt_sig6(-0.0), "0");
        assert_eq!(fmt_sig6(1.0), "1");
        assert_eq!(fmt_sig6(0.5), "0.5");
        assert_eq!(fmt_sig6(123456.0), "123456");
        assert_eq!(fmt_sig6(0.000012345678), "1.23457e-5");
        assert_eq!(fmt_sig6(1234567.0), "1.23457e6");
    }

    #[test]
    fn ngram_table_roundtrip() {
        let table = NgramTable::new(
            vec![
                ("<ab".to_string(), vec![1.0, 2.0]),
                ("ab>".to_string(), vec![-0.5, 0.125]),
            ],
            3,
            4,
        )
        .unwrap();
        let mut data = Vec::new();
        let mut meta = Vec::new();
        table.write(&mut data, &mut meta).unwrap();
        let back = NgramTable::<f64>::load(Cursor::new(data), Cursor::new(meta)).unwrap();
        assert_eq!(back.n_min(), 3);
        assert_eq!(back.n_max(), 4);
        assert_eq!(back.get("<ab"), Some(&[1.0, 2.0][..]));
    }

    #[test]
    fn pipeline_unit_center_unit_restores_unit_norms() {
        let m = matrix(&[("a", &[3.0, 4.0]), ("b", &[1.0, 1.0]), ("c", &[-2.0, 7.0])]);
        let (p, _) = PreprocessPipeline::UnitCenterUnit.apply(m).unwrap();
        for i in 0..p.len() {
            assert!((p.row_norm(i) - 1.0).abs() < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn length_normalize_is_idempotent(rows in proptest::collection::vec(
            proptest::collection::vec(-100.0f64..100.0, 4), 1..20)) {
            let words = (0..rows.len()).map(|i| format!("w{i}")).collect();
            let m = EmbeddingMatrix::new(words, rows).unwrap();
            let (once, _) = m.length_normalized();
            let first: Vec<f64> = (0..once.len()).flat_map(|i| once.row(i).to_vec()).collect();
            let (twice, _) = once.length_normalized();
            let second: Vec<f64> = (0..twice.len()).flat_map(|i| twice.row(i).to_vec()).collect();
            for (x, y) in first.iter().zip(second.iter()) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }

        #[test]
        fn mean_center_zeroes_column_means(rows in proptest::collection::vec(
            proptest::collection::vec(-100.0f64..100.0, 3), 1..20)) {
            let n = rows.len();
            let words = (0..n).map(|i| format!("w{i}")).collect();
            let m = EmbeddingMatrix::new(words, rows).unwrap().mean_centered().unwrap();
            for j in 0..m.dim() {
                let mean: f64 = (0..n).map(|i| m.row(i)[j]).sum::<f64>() / n as f64;
                prop_assert!(mean.abs() < 1e-9);
            }
        }

        #[test]
        fn ngram_lengths_bounded(form in "[a-z ]{1,12}", n_min in 1usize..5, extra in 0usize..3) {
            let n_max = n_min + extra;
            let grams = ngram_decompose(&form, n_min, n_max).unwrap();
            let marked_len = form.chars().count() + 2;
            for g in &grams {
                let len = g.chars().count();
                prop_assert!(
                    (len >= n_min && len <= n_max) || (len == marked_len && marked_len < n_min)
                );
            }
        }

        #[test]
        fn synthesize_matches_bruteforce_sum(form in "[ab]{1,6}") {
            // small table over 2- and 3-grams of 'a'/'b' strings
            let mut entries = Vec::new();
            let alphabet = ["a", "b", "<", ">"];
            let mut idx = 0.0f64;
            for x in alphabet.iter() {
                for y in alphabet.iter() {
                    entries.push((format!("{x}{y}"), vec![idx, 1.0]));
                    idx += 1.0;
                }
            }
            let table = NgramTable::new(entries, 2, 3).unwrap();
            let (got, _) = synthesize_oov(&form, &table).unwrap();
            let mut expected = vec![0.0f64; 2];
            for g in ngram_decompose(&form, 2, 3).unwrap() {
                if let Some(v) = table.get(&g) {
                    for (e, x) in expected.iter_mut().zip(v.iter()) {
                        *e += x;
                    }
                }
            }
            prop_assert_eq!(got, expected);
        }

        #[test]
        fn truncate_preserves_rank_order(k in 1usize..30) {
            let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, 1.0]).collect();
            let words: Vec<String> = (0..20).map(|i| format!("w{i}")).collect();
            let m = EmbeddingMatrix::new(words.clone(), rows).unwrap();
            let t = m.truncated(k);
            for (i, w) in t.words().iter().enumerate() {
                prop_assert_eq!(w, &words[i]);
                prop_assert_eq!(t.rank(w), Some(i));
            }
        }

        #[test]
        fn write_load_roundtrip(rows in proptest::collection::vec(
            proptest::collection::vec(-10.0f64..10.0, 3), 1..10)) {
            let words: Vec<String> = (0..rows.len()).map(|i| format!("w{i}")).collect();
            let m = EmbeddingMatrix::new(words.clone(), rows).unwrap();
            let mut buf = Vec::new();
            m.write(&mut buf).unwrap();
            let (back, stats) = EmbeddingMatrix::<f64>::load(Cursor::new(buf)).unwrap();
            prop_assert_eq!(back.words(), m.words());
            prop_assert_eq!(stats.duplicates, 0);
            for i in 0..m.len() {
                for (x, y) in m.row(i).iter().zip(back.row(i).iter()) {
                    // 6 significant digits
                    prop_assert!((x - y).abs() <= 1e-5 * x.abs().max(1.0));
                }
            }
        }
    }
}
