//! Translation evaluation: precision at 1 with frequency-bin, per-tag,
//! and lexeme-frequency breakdowns, in two modes — standard retrieval
//! over the whole target vocabulary, and lexeme-controlled retrieval
//! restricted to the gold target lemma's paradigm.
//!
//! Frequency bins are half-open intervals `(prev_edge, edge]` over the
//! 1-based source rank, labeled by their upper edge, with `Tail` past
//! the last edge and `OOVs` for subword-synthesized rows.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dictionary::DictEntry;
use crate::embeddings::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::mapping::MappingMatrix;
use crate::morph::ParadigmCollection;
use crate::scalar::{dot64, norm64, Scalar};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Ascending rank thresholds; each edge names the bin it closes.
    pub bin_edges: Vec<usize>,
    /// Lexemes whose best-ranked inflection sits below this are frequent.
    pub lexeme_frequent_cutoff: usize,
    /// Lexemes whose best-ranked inflection sits at or past this are
    /// infrequent; the gap between cutoff and floor is excluded.
    pub lexeme_infrequent_floor: usize,
    pub k: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            bin_edges: vec![
                10_000, 50_000, 100_000, 200_000, 300_000, 400_000, 500_000, 600_000,
            ],
            lexeme_frequent_cutoff: 20_000,
            lexeme_infrequent_floor: 60_000,
            k: 1,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bin_edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig(
                "bin edges must be strictly ascending".into(),
            ));
        }
        if self.lexeme_frequent_cutoff >= self.lexeme_infrequent_floor {
            return Err(Error::InvalidConfig(
                "lexeme_frequent_cutoff must be below lexeme_infrequent_floor".into(),
            ));
        }
        if self.k != 1 {
            return Err(Error::InvalidConfig(
                "only k = 1 evaluation is supported".into(),
            ));
        }
        Ok(())
    }

    /// Bin labels in bin order: one per edge, then `Tail`, then `OOVs`.
    pub fn bin_labels(&self) -> Vec<String> {
        let mut labels: Vec<String> = self
            .bin_edges
            .iter()
            .map(|e| {
                if e % 1000 == 0 {
                    format!("{}k", e / 1000)
                } else {
                    e.to_string()
                }
            })
            .collect();
        labels.push("Tail".to_string());
        labels.push("OOVs".to_string());
        labels
    }

    pub fn bin_count(&self) -> usize {
        self.bin_edges.len() + 2
    }

    fn tail_bin(&self) -> usize {
        self.bin_edges.len()
    }

    fn oov_bin(&self) -> usize {
        self.bin_edges.len() + 1
    }

    /// Bin of a word at 0-based row `row`; OOV-synthesized rows go to the
    /// dedicated OOV bin regardless of position.
    pub fn bin_index(&self, row: usize, oov: bool) -> usize {
        if oov {
            return self.oov_bin();
        }
        let rank = row + 1;
        let idx = self.bin_edges.partition_point(|e| *e < rank);
        if idx < self.bin_edges.len() {
            idx
        } else {
            self.tail_bin()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    Standard,
    LexemeControlled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinFigure {
    pub label: String,
    pub accuracy: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagFigure {
    pub accuracy: f64,
    pub count: usize,
    /// Integer percentages per bin, in bin-label order; rows sum to 100
    /// for any nonempty tag.
    pub bin_distribution: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyCount {
    pub accuracy: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LexemeBinsFigure {
    pub frequent: AccuracyCount,
    pub infrequent: AccuracyCount,
    /// Entries whose lexeme fell in the cutoff–floor gap, had no
    /// in-vocabulary inflection, or no paradigm.
    pub excluded: usize,
}

/// One variant of the figures: either restricted to in-vocabulary
/// entries or covering everything incl. OOV-synthesized rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalFigures {
    /// Standard mode: fraction of distinct evaluated source forms whose
    /// prediction hits any gold target. Lexeme mode: entry accuracy.
    pub overall_p_at_1: f64,
    /// Fraction of evaluated entries judged correct.
    pub entry_accuracy: f64,
    pub evaluated_sources: usize,
    pub evaluated_entries: usize,
    pub per_bin: Vec<BinFigure>,
    pub per_tag: BTreeMap<String, TagFigure>,
    pub lexeme_bins: Option<LexemeBinsFigure>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SkipCounts {
    /// Distinct gold source forms with no embedding row.
    pub unresolved_sources: usize,
    /// Lexeme mode: entries whose gold target lemma has no paradigm.
    pub entries_without_paradigm: usize,
    /// Lexeme mode: entries none of whose candidates had a vector.
    pub entries_without_candidates: usize,
}

/// Per-unit prediction log; standard mode logs one record per distinct
/// source form, lexeme mode one per entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub src_form: String,
    pub src_row: usize,
    pub src_oov: bool,
    /// Lexeme mode only: the entry's tag.
    pub tag: Option<String>,
    pub gold_targets: Vec<String>,
    pub predicted_in_vocab: Option<String>,
    pub predicted_with_oov: Option<String>,
    pub correct_in_vocab: Option<bool>,
    pub correct_with_oov: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: EvalMode,
    pub in_vocab: EvalFigures,
    pub with_oov: EvalFigures,
    pub skipped: SkipCounts,
    pub predictions: Vec<PredictionRecord>,
}

/// Lexeme frequency bucket of a source lemma.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LexemeBin {
    Frequent,
    Infrequent,
    Excluded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LexemeBinOutcome {
    pub bin: LexemeBin,
    /// No inflection of the lemma had an in-vocabulary vector.
    pub no_vocab_inflection: bool,
}

/// Buckets a lemma by the best (minimum) rank over its in-vocabulary
/// inflections: frequent below the cutoff, infrequent at or past the
/// floor, excluded in between or when nothing is in vocabulary.
pub fn lexeme_frequency_bin<F: Scalar>(
    src_lemma: &str,
    src_paradigms: &ParadigmCollection,
    x: &EmbeddingMatrix<F>,
    cfg: &EvalConfig,
) -> Result<LexemeBinOutcome> {
    cfg.validate()?;
    let paradigm = src_paradigms
        .get(src_lemma)
        .ok_or_else(|| Error::InvalidArgument(format!("lemma {src_lemma:?} has no paradigm")))?;
    let best = paradigm
        .forms()
        .iter()
        .filter_map(|f| x.rank(f).filter(|r| !x.is_oov_row(*r)))
        .min();
    Ok(match best {
        None => LexemeBinOutcome {
            bin: LexemeBin::Excluded,
            no_vocab_inflection: true,
        },
        Some(r) if r < cfg.lexeme_frequent_cutoff => LexemeBinOutcome {
            bin: LexemeBin::Frequent,
            no_vocab_inflection: false,
        },
        Some(r) if r >= cfg.lexeme_infrequent_floor => LexemeBinOutcome {
            bin: LexemeBin::Infrequent,
            no_vocab_inflection: false,
        },
        Some(_) => LexemeBinOutcome {
            bin: LexemeBin::Excluded,
            no_vocab_inflection: false,
        },
    })
}

/// Fraction of distinct gold source forms whose prediction matches any
/// of their gold targets; sources without a prediction count as wrong.
pub fn precision_at_1(predictions: &HashMap<String, String>, gold: &[DictEntry]) -> Result<f64> {
    if gold.is_empty() {
        return Err(Error::EmptyInput("gold dictionary"));
    }
    let mut targets: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for e in gold {
        targets
            .entry(e.src_form.as_str())
            .or_default()
            .insert(e.tgt_form.as_str());
    }
    let correct = targets
        .iter()
        .filter(|(src, tgts)| {
            predictions
                .get(**src)
                .is_some_and(|p| tgts.contains(p.as_str()))
        })
        .count();
    Ok(correct as f64 / targets.len() as f64)
}

/// Integer percentages that sum to exactly 100 (largest-remainder
/// apportionment); all zeros when the counts are empty.
fn percentages(counts: &[usize]) -> Vec<u32> {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return vec![0; counts.len()];
    }
    let mut floors: Vec<u32> = Vec::with_capacity(counts.len());
    let mut remainders: Vec<(usize, f64)> = Vec::with_capacity(counts.len());
    for (i, &c) in counts.iter().enumerate() {
        let exact = c as f64 * 100.0 / total as f64;
        let floor = exact.floor();
        floors.push(floor as u32);
        remainders.push((i, exact - floor));
    }
    let assigned: u32 = floors.iter().sum();
    let mut left = 100u32.saturating_sub(assigned);
    remainders.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    for (i, _) in remainders {
        if left == 0 {
            break;
        }
        floors[i] += 1;
        left -= 1;
    }
    floors
}

/// Distribution of each tag's entries across the frequency bins; source
/// forms without any embedding row count in the OOV bin.
pub fn tag_bin_distribution<F: Scalar>(
    gold: &[DictEntry],
    x: &EmbeddingMatrix<F>,
    cfg: &EvalConfig,
) -> Result<BTreeMap<String, Vec<u32>>> {
    cfg.validate()?;
    let bins = cfg.bin_count();
    let mut counts: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for e in gold {
        let idx = match x.rank(&e.src_form) {
            Some(row) => cfg.bin_index(row, x.is_oov_row(row)),
            None => cfg.oov_bin(),
        };
        counts
            .entry(e.tag.to_string())
            .or_insert_with(|| vec![0; bins])[idx] += 1;
    }
    Ok(counts
        .into_iter()
        .map(|(tag, c)| (tag, percentages(&c)))
        .collect())
}

fn argmax_over_rows<F: Scalar>(
    mapped: &[F],
    z: &EmbeddingMatrix<F>,
    rows: impl Iterator<Item = usize>,
) -> Option<usize> {
    let qn = norm64(mapped);
    let mut best: Option<(usize, f64)> = None;
    for j in rows {
        let rn = z.row_norm(j);
        let s = if qn == 0.0 || rn == 0.0 {
            0.0
        } else {
            dot64(mapped, z.row(j)) / (qn * rn)
        };
        match best {
            Some((_, bs)) if s <= bs => {}
            _ => best = Some((j, s)),
        }
    }
    best.map(|(j, _)| j)
}

struct TagAccum {
    correct: usize,
    count: usize,
    bins: Vec<usize>,
}

struct LexAccum {
    frequent: (usize, usize),
    infrequent: (usize, usize),
    excluded: usize,
}

struct FigureBuilder {
    labels: Vec<String>,
    bin_correct: Vec<usize>,
    bin_count: Vec<usize>,
    tags: BTreeMap<String, TagAccum>,
    sources: usize,
    sources_correct: usize,
    entries: usize,
    entries_correct: usize,
    lex: Option<LexAccum>,
}

impl FigureBuilder {
    fn new(labels: Vec<String>, with_lexeme: bool) -> Self {
        let bins = labels.len();
        Self {
            labels,
            bin_correct: vec![0; bins],
            bin_count: vec![0; bins],
            tags: BTreeMap::new(),
            sources: 0,
            sources_correct: 0,
            entries: 0,
            entries_correct: 0,
            lex: with_lexeme.then_some(LexAccum {
                frequent: (0, 0),
                infrequent: (0, 0),
                excluded: 0,
            }),
        }
    }

    fn add_source(&mut self, correct: bool) {
        self.sources += 1;
        if correct {
            self.sources_correct += 1;
        }
    }

    fn add_entry(&mut self, bin_idx: usize, tag: &str, correct: bool, lexeme: Option<LexemeBin>) {
        self.entries += 1;
        self.bin_count[bin_idx] += 1;
        if correct {
            self.entries_correct += 1;
            self.bin_correct[bin_idx] += 1;
        }
        let bins = self.labels.len();
        let acc = self
            .tags
            .entry(tag.to_string())
            .or_insert_with(|| TagAccum {
                correct: 0,
                count: 0,
                bins: vec![0; bins],
            });
        acc.count += 1;
        acc.bins[bin_idx] += 1;
        if correct {
            acc.correct += 1;
        }
        if let (Some(lex), Some(bin)) = (self.lex.as_mut(), lexeme) {
            match bin {
                LexemeBin::Frequent => {
                    lex.frequent.1 += 1;
                    if correct {
                        lex.frequent.0 += 1;
                    }
                }
                LexemeBin::Infrequent => {
                    lex.infrequent.1 += 1;
                    if correct {
                        lex.infrequent.0 += 1;
                    }
                }
                LexemeBin::Excluded => lex.excluded += 1,
            }
        }
    }

    fn build(self, source_level_overall: bool) -> EvalFigures {
        let ratio = |c: usize, n: usize| if n == 0 { 0.0 } else { c as f64 / n as f64 };
        let entry_accuracy = ratio(self.entries_correct, self.entries);
        let overall = if source_level_overall {
            ratio(self.sources_correct, self.sources)
        } else {
            entry_accuracy
        };
        let per_bin = self
            .labels
            .iter()
            .enumerate()
            .map(|(i, label)| BinFigure {
                label: label.clone(),
                accuracy: ratio(self.bin_correct[i], self.bin_count[i]),
                count: self.bin_count[i],
            })
            .collect();
        let per_tag = self
            .tags
            .into_iter()
            .map(|(tag, acc)| {
                (
                    tag,
                    TagFigure {
                        accuracy: ratio(acc.correct, acc.count),
                        count: acc.count,
                        bin_distribution: percentages(&acc.bins),
                    },
                )
            })
            .collect();
        let lexeme_bins = self.lex.map(|l| LexemeBinsFigure {
            frequent: AccuracyCount {
                accuracy: ratio(l.frequent.0, l.frequent.1),
                count: l.frequent.1,
            },
            infrequent: AccuracyCount {
                accuracy: ratio(l.infrequent.0, l.infrequent.1),
                count: l.infrequent.1,
            },
            excluded: l.excluded,
        });
        EvalFigures {
            overall_p_at_1: overall,
            entry_accuracy,
            evaluated_sources: self.sources,
            evaluated_entries: self.entries,
            per_bin,
            per_tag,
            lexeme_bins,
        }
    }
}

fn check_dims<F: Scalar>(
    x: &EmbeddingMatrix<F>,
    z: &EmbeddingMatrix<F>,
    w: &MappingMatrix<F>,
) -> Result<()> {
    if x.dim() != z.dim() || w.dim() != x.dim() {
        return Err(Error::DimensionMismatch {
            context: "evaluation inputs",
            expected: x.dim(),
            found: if w.dim() != x.dim() { w.dim() } else { z.dim() },
        });
    }
    Ok(())
}

fn lexeme_bin_cache<'a, F: Scalar>(
    entries: impl Iterator<Item = &'a DictEntry>,
    src_paradigms: Option<&ParadigmCollection>,
    x: &EmbeddingMatrix<F>,
    cfg: &EvalConfig,
) -> Option<BTreeMap<String, LexemeBin>> {
    let paradigms = src_paradigms?;
    let mut cache = BTreeMap::new();
    for e in entries {
        cache.entry(e.src_lemma.clone()).or_insert_with(|| {
            lexeme_frequency_bin(&e.src_lemma, paradigms, x, cfg)
                .map(|o| o.bin)
                .unwrap_or(LexemeBin::Excluded)
        });
    }
    Some(cache)
}

/// Standard evaluation: each resolvable gold source form is mapped and
/// paired with its nearest target over the full target matrix; a
/// prediction is correct when it equals any gold target of that source.
/// The in-vocab figures cover entries whose source and target rows both
/// predate OOV extension; the with-OOV figures cover every entry whose
/// source has a row.
pub fn evaluate_standard<F: Scalar>(
    x: &EmbeddingMatrix<F>,
    z: &EmbeddingMatrix<F>,
    w: &MappingMatrix<F>,
    gold: &[DictEntry],
    cfg: &EvalConfig,
    src_paradigms: Option<&ParadigmCollection>,
) -> Result<EvalReport> {
    cfg.validate()?;
    check_dims(x, z, w)?;
    if gold.is_empty() {
        return Err(Error::EmptyInput("gold dictionary"));
    }
    if z.is_empty() {
        return Err(Error::EmptyInput("target embeddings"));
    }

    let mut entries_by_src: BTreeMap<&str, Vec<&DictEntry>> = BTreeMap::new();
    let mut targets_by_src: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for e in gold {
        entries_by_src.entry(&e.src_form).or_default().push(e);
        targets_by_src
            .entry(&e.src_form)
            .or_default()
            .insert(&e.tgt_form);
    }

    let resolved: Vec<(&str, usize)> = entries_by_src
        .keys()
        .filter_map(|f| x.rank(f).map(|r| (*f, r)))
        .collect();
    let unresolved_sources = entries_by_src.len() - resolved.len();

    let predicted_rows: Vec<usize> = resolved
        .par_iter()
        .map(|&(_, row)| {
            let mapped = w.apply_to(x.row(row));
            argmax_over_rows(&mapped, z, 0..z.len()).expect("nonempty targets")
        })
        .collect();

    let labels = cfg.bin_labels();
    let lex_cache = lexeme_bin_cache(gold.iter(), src_paradigms, x, cfg);
    let mut in_vocab = FigureBuilder::new(labels.clone(), lex_cache.is_some());
    let mut with_oov = FigureBuilder::new(labels, lex_cache.is_some());
    let mut predictions = Vec::with_capacity(resolved.len());

    for (&(form, row), &pred_row) in resolved.iter().zip(predicted_rows.iter()) {
        let src_oov = x.is_oov_row(row);
        let predicted = z.word(pred_row);
        let correct = targets_by_src[form].contains(predicted);
        let bin = cfg.bin_index(row, src_oov);

        let mut any_in_vocab_entry = false;
        for e in &entries_by_src[form] {
            let lex = lex_cache
                .as_ref()
                .map(|c| *c.get(&e.src_lemma).unwrap_or(&LexemeBin::Excluded));
            with_oov.add_entry(bin, &e.tag.to_string(), correct, lex);
            let tgt_in_vocab = z.rank(&e.tgt_form).is_some_and(|r| !z.is_oov_row(r));
            if !src_oov && tgt_in_vocab {
                any_in_vocab_entry = true;
                in_vocab.add_entry(bin, &e.tag.to_string(), correct, lex);
            }
        }
        with_oov.add_source(correct);
        if any_in_vocab_entry {
            in_vocab.add_source(correct);
        }

        predictions.push(PredictionRecord {
            src_form: form.to_string(),
            src_row: row,
            src_oov,
            tag: None,
            gold_targets: targets_by_src[form].iter().map(|t| t.to_string()).collect(),
            predicted_in_vocab: Some(predicted.to_string()),
            predicted_with_oov: Some(predicted.to_string()),
            correct_in_vocab: any_in_vocab_entry.then_some(correct),
            correct_with_oov: Some(correct),
        });
    }

    Ok(EvalReport {
        mode: EvalMode::Standard,
        in_vocab: in_vocab.build(true),
        with_oov: with_oov.build(true),
        skipped: SkipCounts {
            unresolved_sources,
            ..Default::default()
        },
        predictions,
    })
}

/// Lexeme-controlled evaluation: for each entry the candidate set is the
/// gold target lemma's paradigm restricted to forms with vectors, and
/// the prediction is the cosine argmax within it. OOV-synthesized
/// candidate rows are admissible only in the with-OOV figures.
pub fn evaluate_lexeme_controlled<F: Scalar>(
    x: &EmbeddingMatrix<F>,
    z: &EmbeddingMatrix<F>,
    w: &MappingMatrix<F>,
    gold: &[DictEntry],
    tgt_paradigms: &ParadigmCollection,
    cfg: &EvalConfig,
    src_paradigms: Option<&ParadigmCollection>,
) -> Result<EvalReport> {
    cfg.validate()?;
    check_dims(x, z, w)?;
    if gold.is_empty() {
        return Err(Error::EmptyInput("gold dictionary"));
    }

    let mut targets_by_src: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for e in gold {
        targets_by_src
            .entry(&e.src_form)
            .or_default()
            .insert(&e.tgt_form);
    }

    let labels = cfg.bin_labels();
    let lex_cache = lexeme_bin_cache(gold.iter(), src_paradigms, x, cfg);
    let mut in_vocab = FigureBuilder::new(labels.clone(), lex_cache.is_some());
    let mut with_oov = FigureBuilder::new(labels, lex_cache.is_some());
    let mut skipped = SkipCounts::default();
    let mut predictions = Vec::new();
    let mut unresolved: BTreeSet<&str> = BTreeSet::new();
    let mut mapped_cache: HashMap<usize, Vec<F>> = HashMap::new();
    let mut sources_in_vocab: BTreeMap<&str, bool> = BTreeMap::new();
    let mut sources_with_oov: BTreeMap<&str, bool> = BTreeMap::new();

    for e in gold {
        let Some(row) = x.rank(&e.src_form) else {
            unresolved.insert(&e.src_form);
            continue;
        };
        let Some(paradigm) = tgt_paradigms.get(&e.tgt_lemma) else {
            skipped.entries_without_paradigm += 1;
            continue;
        };
        let mut candidate_rows: Vec<usize> =
            paradigm.forms().iter().filter_map(|f| z.rank(f)).collect();
        candidate_rows.sort_unstable();
        let in_vocab_rows: Vec<usize> = candidate_rows
            .iter()
            .copied()
            .filter(|r| !z.is_oov_row(*r))
            .collect();
        if candidate_rows.is_empty() {
            skipped.entries_without_candidates += 1;
            continue;
        }

        let mapped = mapped_cache
            .entry(row)
            .or_insert_with(|| w.apply_to(x.row(row)));
        let src_oov = x.is_oov_row(row);
        let gold_targets = &targets_by_src[e.src_form.as_str()];

        let pred_oov_row =
            argmax_over_rows(mapped, z, candidate_rows.iter().copied()).expect("nonempty");
        let pred_oov = z.word(pred_oov_row);
        let correct_oov = gold_targets.contains(pred_oov);

        let bin = cfg.bin_index(row, src_oov);
        let lex = lex_cache
            .as_ref()
            .map(|c| *c.get(&e.src_lemma).unwrap_or(&LexemeBin::Excluded));
        with_oov.add_entry(bin, &e.tag.to_string(), correct_oov, lex);
        sources_with_oov
            .entry(&e.src_form)
            .and_modify(|c| *c = *c || correct_oov)
            .or_insert(correct_oov);

        let tgt_in_vocab = z.rank(&e.tgt_form).is_some_and(|r| !z.is_oov_row(r));
        let mut pred_iv: Option<&str> = None;
        let mut correct_iv: Option<bool> = None;
        if !src_oov && tgt_in_vocab && !in_vocab_rows.is_empty() {
            let pred_row =
                argmax_over_rows(mapped, z, in_vocab_rows.iter().copied()).expect("nonempty");
            let p = z.word(pred_row);
            let c = gold_targets.contains(p);
            in_vocab.add_entry(bin, &e.tag.to_string(), c, lex);
            sources_in_vocab
                .entry(&e.src_form)
                .and_modify(|v| *v = *v || c)
                .or_insert(c);
            pred_iv = Some(p);
            correct_iv = Some(c);
        }

        predictions.push(PredictionRecord {
            src_form: e.src_form.clone(),
            src_row: row,
            src_oov,
            tag: Some(e.tag.to_string()),
            gold_targets: gold_targets.iter().map(|t| t.to_string()).collect(),
            predicted_in_vocab: pred_iv.map(|s| s.to_string()),
            predicted_with_oov: Some(pred_oov.to_string()),
            correct_in_vocab: correct_iv,
            correct_with_oov: Some(correct_oov),
        });
    }
    skipped.unresolved_sources = unresolved.len();

    for correct in sources_in_vocab.values() {
        in_vocab.add_source(*correct);
    }
    for correct in sources_with_oov.values() {
        with_oov.add_source(*correct);
    }

    Ok(EvalReport {
        mode: EvalMode::LexemeControlled,
        in_vocab: in_vocab.build(false),
        with_oov: with_oov.build(false),
        skipped,
        predictions,
    })
}

/// Writes the per-tag table as TSV: tag, in-vocab accuracy, overall
/// accuracy (percent, one decimal), then the tag's integer percentage
/// per frequency bin.
pub fn write_tag_table<W: Write>(report: &EvalReport, mut w: W) -> Result<()> {
    write!(w, "Tag\tIn vocab\tAll")?;
    for bin in &report.with_oov.per_bin {
        write!(w, "\t{}", bin.label)?;
    }
    writeln!(w)?;
    for (tag, figure) in &report.with_oov.per_tag {
        match report.in_vocab.per_tag.get(tag) {
            Some(iv) => write!(w, "{}\t{:.1}", tag, iv.accuracy * 100.0)?,
            None => write!(w, "{}\t-", tag)?,
        }
        write!(w, "\t{:.1}", figure.accuracy * 100.0)?;
        for pct in &figure.bin_distribution {
            write!(w, "\t{}%", pct)?;
        }
        writeln!(w)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::morph::{MorphTag, TagNormalizationRules};
    use crate::synth;
    use proptest::prelude::*;

    fn tag(raw: &str) -> MorphTag {
        MorphTag::parse(raw, &TagNormalizationRules::default()).unwrap()
    }

    fn entry(src: &str, tgt: &str, src_lemma: &str, tgt_lemma: &str, t: &str) -> DictEntry {
        DictEntry::new(src, tgt, src_lemma, tgt_lemma, tag(t)).unwrap()
    }

    /// Identity fixture: source words s0..s{n-1}, target words t0..t{n-1}
    /// with identical vectors, gold pairing i -> i.
    fn identity_fixture(
        n: usize,
        d: usize,
        seed: u64,
    ) -> (EmbeddingMatrix<f64>, EmbeddingMatrix<f64>, Vec<DictEntry>) {
        let rows = synth::random_unit_rows(n, d, seed);
        let x =
            EmbeddingMatrix::new((0..n).map(|i| format!("s{i}")).collect(), rows.clone()).unwrap();
        let z = EmbeddingMatrix::new((0..n).map(|i| format!("t{i}")).collect(), rows).unwrap();
        let gold = (0..n)
            .map(|i| {
                entry(
                    &format!("s{i}"),
                    &format!("t{i}"),
                    &format!("sl{i}"),
                    &format!("tl{i}"),
                    "N;SG",
                )
            })
            .collect();
        (x, z, gold)
    }

    #[test]
    fn precision_examples() {
        let gold = vec![
            entry("a", "x", "a", "x", "N;SG"),
            entry("b", "y", "b", "y", "N;SG"),
        ];
        let mut preds = HashMap::new();
        preds.insert("a".to_string(), "x".to_string());
        preds.insert("b".to_string(), "y".to_string());
        assert_eq!(precision_at_1(&preds, &gold).unwrap(), 1.0);

        // many-to-many: either gold target counts
        let gold = vec![
            entry("a", "x", "a", "x", "N;SG"),
            entry("a", "y", "a", "y", "N;SG"),
        ];
        let mut preds = HashMap::new();
        preds.insert("a".to_string(), "y".to_string());
        assert_eq!(precision_at_1(&preds, &gold).unwrap(), 1.0);

        let gold: Vec<DictEntry> = (0..4)
            .map(|i| entry(&format!("s{i}"), &format!("t{i}"), "l", "m", "N;SG"))
            .collect();
        let mut preds = HashMap::new();
        preds.insert("s0".to_string(), "t0".to_string());
        preds.insert("s1".to_string(), "wrong".to_string());
        assert_eq!(precision_at_1(&preds, &gold).unwrap(), 0.25);

        assert!(precision_at_1(&HashMap::new(), &[]).is_err());
    }

    #[test]
    fn bin_assignment_follows_half_open_intervals() {
        let cfg = EvalConfig::default();
        // ranks are 1-based, rows 0-based
        assert_eq!(cfg.bin_labels()[cfg.bin_index(4_999, false)], "10k");
        assert_eq!(cfg.bin_labels()[cfg.bin_index(9_999, false)], "10k");
        assert_eq!(cfg.bin_labels()[cfg.bin_index(10_000, false)], "50k");
        assert_eq!(cfg.bin_labels()[cfg.bin_index(249_999, false)], "300k");
        assert_eq!(cfg.bin_labels()[cfg.bin_index(699_999, false)], "Tail");
        assert_eq!(cfg.bin_labels()[cfg.bin_index(5, true)], "OOVs");
    }

    #[test]
    fn identity_fixture_scores_one_everywhere() {
        let (x, z, gold) = identity_fixture(20, 4, 3);
        let w = MappingMatrix::identity(4);
        let report = evaluate_standard(&x, &z, &w, &gold, &EvalConfig::default(), None).unwrap();
        assert_eq!(report.with_oov.overall_p_at_1, 1.0);
        assert_eq!(report.in_vocab.overall_p_at_1, 1.0);
        for bin in &report.with_oov.per_bin {
            if bin.count > 0 {
                assert_eq!(bin.accuracy, 1.0);
            }
        }
        assert_eq!(report.with_oov.evaluated_entries, 20);
        assert_eq!(report.skipped.unresolved_sources, 0);
    }

    #[test]
    fn standard_report_matches_bruteforce_recomputation() {
        let n = 100;
        let x = EmbeddingMatrix::new(
            (0..n).map(|i| format!("s{i}")).collect(),
            synth::random_unit_rows(n, 5, 11),
        )
        .unwrap();
        let z = EmbeddingMatrix::new(
            (0..n).map(|i| format!("t{i}")).collect(),
            synth::random_unit_rows(n, 5, 13),
        )
        .unwrap();
        let w = synth::random_orthogonal(5, 17);
        let gold: Vec<DictEntry> = (0..n)
            .map(|i| {
                entry(
                    &format!("s{i}"),
                    &format!("t{i}"),
                    &format!("l{i}"),
                    &format!("m{i}"),
                    "N;SG",
                )
            })
            .collect();
        let report = evaluate_standard(&x, &z, &w, &gold, &EvalConfig::default(), None).unwrap();

        // oracle: recompute every prediction exhaustively
        let mut correct = 0;
        for i in 0..n {
            let mapped = w.apply_to(x.row(i));
            let mut best = (0usize, f64::NEG_INFINITY);
            for j in 0..n {
                let s = crate::scalar::cosine64(&mapped, z.row(j));
                if s > best.1 {
                    best = (j, s);
                }
            }
            if best.0 == i {
                correct += 1;
            }
        }
        let expected = correct as f64 / n as f64;
        assert_eq!(report.with_oov.overall_p_at_1, expected);

        // report recomputation from the prediction log
        let mut preds = HashMap::new();
        for r in &report.predictions {
            preds.insert(r.src_form.clone(), r.predicted_with_oov.clone().unwrap());
        }
        assert_eq!(precision_at_1(&preds, &gold).unwrap(), expected);
    }

    #[test]
    fn unresolved_sources_are_counted_and_excluded() {
        let (x, z, mut gold) = identity_fixture(5, 3, 7);
        gold.push(entry("missing", "t0", "ml", "tl0", "N;SG"));
        let w = MappingMatrix::identity(3);
        let report = evaluate_standard(&x, &z, &w, &gold, &EvalConfig::default(), None).unwrap();
        assert_eq!(report.skipped.unresolved_sources, 1);
        assert_eq!(report.with_oov.evaluated_entries, 5);
    }

    fn paradigm_fixture() -> (
        EmbeddingMatrix<f64>,
        EmbeddingMatrix<f64>,
        Vec<DictEntry>,
        ParadigmCollection,
    ) {
        // target paradigms: lemma tl{i} with forms t{i}a, t{i}b
        let n = 10usize;
        let d = 4usize;
        let src_rows = synth::random_unit_rows(n, d, 31);
        let x = EmbeddingMatrix::new((0..n).map(|i| format!("s{i}")).collect(), src_rows.clone())
            .unwrap();
        let mut tgt_words = Vec::new();
        let mut tgt_rows = Vec::new();
        let noise = synth::random_unit_rows(n, d, 37);
        for i in 0..n {
            tgt_words.push(format!("t{i}a"));
            tgt_rows.push(src_rows[i].clone());
            tgt_words.push(format!("t{i}b"));
            tgt_rows.push(noise[i].clone());
        }
        let z = EmbeddingMatrix::new(tgt_words, tgt_rows).unwrap();
        let mut paradigms = ParadigmCollection::default();
        for i in 0..n {
            paradigms.insert(&format!("tl{i}"), &format!("t{i}a"), tag("N;SG"));
            paradigms.insert(&format!("tl{i}"), &format!("t{i}b"), tag("N;PL"));
        }
        let gold = (0..n)
            .map(|i| {
                entry(
                    &format!("s{i}"),
                    &format!("t{i}a"),
                    &format!("sl{i}"),
                    &format!("tl{i}"),
                    "N;SG",
                )
            })
            .collect();
        (x, z, gold, paradigms)
    }

    #[test]
    fn lexeme_mode_restricts_candidates() {
        let (x, z, gold, paradigms) = paradigm_fixture();
        let w = MappingMatrix::identity(4);
        let report =
            evaluate_lexeme_controlled(&x, &z, &w, &gold, &paradigms, &EvalConfig::default(), None)
                .unwrap();
        assert_eq!(report.with_oov.overall_p_at_1, 1.0);
        assert_eq!(report.with_oov.evaluated_entries, 10);
        for r in &report.predictions {
            assert!(r.correct_with_oov.unwrap());
        }
    }

    #[test]
    fn lexeme_mode_single_form_paradigm_is_always_correct() {
        let x = EmbeddingMatrix::new(vec!["s".into()], vec![vec![1.0, 0.0]]).unwrap();
        let z = EmbeddingMatrix::new(
            vec!["far".into(), "near".into()],
            vec![vec![-1.0, 0.0], vec![1.0, 0.0]],
        )
        .unwrap();
        let mut paradigms = ParadigmCollection::default();
        paradigms.insert("fl", "far", tag("N;SG"));
        let gold = vec![entry("s", "far", "sl", "fl", "N;SG")];
        let w = MappingMatrix::identity(2);
        let report =
            evaluate_lexeme_controlled(&x, &z, &w, &gold, &paradigms, &EvalConfig::default(), None)
                .unwrap();
        // the forced candidate wins although "near" is cosine-closer
        assert_eq!(report.with_oov.overall_p_at_1, 1.0);
    }

    #[test]
    fn lexeme_mode_counts_missing_paradigms() {
        let (x, z, mut gold, paradigms) = paradigm_fixture();
        gold.push(entry("s0", "orphan", "sl0", "no-such-lemma", "N;SG"));
        let w = MappingMatrix::identity(4);
        let report =
            evaluate_lexeme_controlled(&x, &z, &w, &gold, &paradigms, &EvalConfig::default(), None)
                .unwrap();
        assert_eq!(report.skipped.entries_without_paradigm, 1);
    }

    #[test]
    fn lexeme_controlled_dominates_standard() {
        // every gold target is inside its candidate set, so subset argmax
        // can only improve on the global argmax
        for seed in 0..10u64 {
            let n = 12usize;
            let x = EmbeddingMatrix::new(
                (0..n).map(|i| format!("s{i}")).collect(),
                synth::random_unit_rows(n, 4, seed),
            )
            .unwrap();
            let z = EmbeddingMatrix::new(
                (0..n).map(|i| format!("t{i}")).collect(),
                synth::random_unit_rows(n, 4, seed + 1000),
            )
            .unwrap();
            let mut paradigms = ParadigmCollection::default();
            for i in 0..n {
                // paradigm of lemma tl{i} holds its own form plus a decoy
                paradigms.insert(&format!("tl{i}"), &format!("t{i}"), tag("N;SG"));
                paradigms.insert(&format!("tl{i}"), &format!("t{}", (i + 1) % n), tag("N;PL"));
            }
            let gold: Vec<DictEntry> = (0..n)
                .map(|i| {
                    entry(
                        &format!("s{i}"),
                        &format!("t{i}"),
                        &format!("l{i}"),
                        &format!("tl{i}"),
                        "N;SG",
                    )
                })
                .collect();
            let w = synth::random_orthogonal(4, seed + 2000);
            let standard =
                evaluate_standard(&x, &z, &w, &gold, &EvalConfig::default(), None).unwrap();
            let lexeme = evaluate_lexeme_controlled(
                &x,
                &z,
                &w,
                &gold,
                &paradigms,
                &EvalConfig::default(),
                None,
            )
            .unwrap();
            assert!(
                lexeme.with_oov.entry_accuracy >= standard.with_oov.entry_accuracy,
                "dominance violated at seed {seed}"
            );
        }
    }

    #[test]
    fn lexeme_frequency_bin_cases() {
        let n = 80_000usize;
        // cheap 1-d matrix: rank i holds value tied to i
        let words: Vec<String> = (0..n).map(|i| format!("w{i}")).collect();
        let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![1.0]).collect();
        let x = EmbeddingMatrix::new(words, rows).unwrap();
        let cfg = EvalConfig::default();
        let mut paradigms = ParadigmCollection::default();
        paradigms.insert("freq", "w1000", tag("N;SG"));
        paradigms.insert("freq", "w75000", tag("N;PL"));
        paradigms.insert("rare", "w70000", tag("N;SG"));
        paradigms.insert("mid", "w40000", tag("N;SG"));
        paradigms.insert("ghost", "unseen", tag("N;SG"));

        let out = lexeme_frequency_bin("freq", &paradigms, &x, &cfg).unwrap();
        assert_eq!(out.bin, LexemeBin::Frequent);
        let out = lexeme_frequency_bin("rare", &paradigms, &x, &cfg).unwrap();
        assert_eq!(out.bin, LexemeBin::Infrequent);
        let out = lexeme_frequency_bin("mid", &paradigms, &x, &cfg).unwrap();
        assert_eq!(out.bin, LexemeBin::Excluded);
        assert!(!out.no_vocab_inflection);
        let out = lexeme_frequency_bin("ghost", &paradigms, &x, &cfg).unwrap();
        assert_eq!(out.bin, LexemeBin::Excluded);
        assert!(out.no_vocab_inflection);
        assert!(lexeme_frequency_bin("no-paradigm", &paradigms, &x, &cfg).is_err());
    }

    #[test]
    fn tag_distribution_examples() {
        let (x, _, _) = identity_fixture(5, 3, 41);
        let cfg = EvalConfig {
            bin_edges: vec![2, 4],
            ..EvalConfig::default()
        };
        // all entries of N;SG at rows 0..1 -> bin "2"; rows 2..3 -> bin "4"
        let gold = vec![
            entry("s0", "t", "l", "m", "N;SG"),
            entry("s1", "t", "l", "m", "N;SG"),
            entry("s2", "t", "l", "m", "N;PL"),
        ];
        let dist = tag_bin_distribution(&gold, &x, &cfg).unwrap();
        assert_eq!(dist["N;SG"], vec![100, 0, 0, 0]);
        assert_eq!(dist["N;PL"], vec![0, 100, 0, 0]);

        let gold = vec![
            entry("s0", "t", "l", "m", "N;SG"),
            entry("s2", "t", "l", "m", "N;SG"),
        ];
        let dist = tag_bin_distribution(&gold, &x, &cfg).unwrap();
        assert_eq!(dist["N;SG"], vec![50, 50, 0, 0]);
    }

    #[test]
    fn unresolvable_sources_land_in_oov_bin_of_distribution() {
        let (x, _, _) = identity_fixture(3, 3, 43);
        let gold = vec![entry("nowhere", "t", "l", "m", "N;SG")];
        let dist = tag_bin_distribution(&gold, &x, &EvalConfig::default()).unwrap();
        let oov_idx = EvalConfig::default().bin_count() - 1;
        assert_eq!(dist["N;SG"][oov_idx], 100);
    }

    #[test]
    fn tsv_table_has_expected_shape() {
        let (x, z, gold) = identity_fixture(6, 3, 47);
        let w = MappingMatrix::identity(3);
        let report = evaluate_standard(&x, &z, &w, &gold, &EvalConfig::default(), None).unwrap();
        let mut buf = Vec::new();
        write_tag_table(&report, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        let header = lines.next().unwrap();
        let cols: Vec<&str> = header.split('\t').collect();
        assert_eq!(cols.len(), 3 + 10);
        assert_eq!(cols[0], "Tag");
        assert_eq!(cols[3], "10k");
        assert_eq!(cols[12], "OOVs");
        let row = lines.next().unwrap();
        assert!(row.starts_with("N;SG\t100.0\t100.0\t100%"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn percentages_sum_to_exactly_100(counts in proptest::collection::vec(0usize..50, 1..12)) {
            let p = percentages(&counts);
            let total: usize = counts.iter().sum();
            if total > 0 {
                prop_assert_eq!(p.iter().sum::<u32>(), 100);
            } else {
                prop_assert!(p.iter().all(|v| *v == 0));
            }
        }

        #[test]
        fn bin_counts_partition_entries(seed in 0u64..200, n in 4usize..30) {
            let x = EmbeddingMatrix::new(
                (0..n).map(|i| format!("s{i}")).collect(),
                synth::random_unit_rows(n, 3, seed),
            ).unwrap();
            let z = EmbeddingMatrix::new(
                (0..n).map(|i| format!("t{i}")).collect(),
                synth::random_unit_rows(n, 3, seed + 999),
            ).unwrap();
            let gold: Vec<DictEntry> = (0..n).map(|i| {
                entry(&format!("s{i}"), &format!("t{i}"), &format!("l{i}"), &format!("m{i}"), "N;SG")
            }).collect();
            let w = synth::random_orthogonal(3, seed + 5);
            let cfg = EvalConfig { bin_edges: vec![2, 5, 9], ..EvalConfig::default() };
            let report = evaluate_standard(&x, &z, &w, &gold, &cfg, None).unwrap();
            for figures in [&report.in_vocab, &report.with_oov] {
                let total: usize = figures.per_bin.iter().map(|b| b.count).sum();
                prop_assert_eq!(total, figures.evaluated_entries);
            }
        }

        #[test]
        fn rescaled_targets_leave_accuracy_unchanged(seed in 0u64..100, scale in 0.05f64..20.0) {
            let n = 10usize;
            let x = EmbeddingMatrix::new(
                (0..n).map(|i| format!("s{i}")).collect(),
                synth::random_unit_rows(n, 3, seed),
            ).unwrap();
            let z = EmbeddingMatrix::new(
                (0..n).map(|i| format!("t{i}")).collect(),
                synth::random_unit_rows(n, 3, seed + 50),
            ).unwrap();
            let z_scaled = z.map_rows(|r| r.iter().map(|v| v * scale).collect()).unwrap();
            let gold: Vec<DictEntry> = (0..n).map(|i| {
                entry(&format!("s{i}"), &format!("t{i}"), &format!("l{i}"), &format!("m{i}"), "N;SG")
            }).collect();
            let w = synth::random_orthogonal(3, seed + 77);
            let cfg = EvalConfig::default();
            let a = evaluate_standard(&x, &z, &w, &gold, &cfg, None).unwrap();
            let b = evaluate_standard(&x, &z_scaled, &w, &gold, &cfg, None).unwrap();
            prop_assert_eq!(a.with_oov.overall_p_at_1, b.with_oov.overall_p_at_1);
            prop_assert_eq!(a.in_vocab.overall_p_at_1, b.in_vocab.overall_p_at_1);
        }
    }
}
