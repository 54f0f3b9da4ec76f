//! Mapping trainers: single-shot Procrustes, self-learning (map,
//! re-induce, repeat), and latent-variable EM matching, each optionally
//! restricted so that only tag-compatible word pairs can be aligned.

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::assignment::{solve_assignment, sparsify_similarities};
use crate::embeddings::{EmbeddingMatrix, PreprocessPipeline};
use crate::error::{Error, Result};
use crate::mapping::{
    induce_dictionary, mean_pair_cosine, procrustes_capped, MappingMatrix, SeedLexicon,
};
use crate::morph::{CompatContext, MorphTag, ParadigmCollection};
use crate::scalar::{to_f64, Scalar};

/// Which trainer-side restriction applies when inducing pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintMode {
    #[default]
    Off,
    ExactTag,
    FeatureSubset,
}

/// Trainer hyperparameters. Defaults mirror the standard setting:
/// candidate count 15, matching rank constraint 40,000, training
/// vocabulary cutoff 200,000.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_iterations: usize,
    /// Stop once the gain in mean dictionary cosine drops below this.
    pub convergence_tolerance: f64,
    /// Candidate target words per source word in the matching step.
    pub candidate_k: usize,
    /// Only this many most frequent words participate in the matching.
    pub rank_limit: usize,
    /// Only this many most frequent words are used for training.
    pub vocab_cutoff: usize,
    pub constraint_mode: ConstraintMode,
    pub preprocessing: PreprocessPipeline,
    /// Reserved for stochastic extensions; both trainers are
    /// deterministic and ignore it.
    pub random_seed: u64,
    pub svd_max_iters: usize,
    /// Record per-iteration dictionaries and mappings in the report.
    pub log_trace: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            convergence_tolerance: 1e-6,
            candidate_k: 15,
            rank_limit: 40_000,
            vocab_cutoff: 200_000,
            constraint_mode: ConstraintMode::Off,
            preprocessing: PreprocessPipeline::UnitCenterUnit,
            random_seed: 0,
            svd_max_iters: 10_000,
            log_trace: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations < 1 {
            return Err(Error::InvalidConfig(
                "max_iterations must be at least 1".into(),
            ));
        }
        if self.convergence_tolerance <= 0.0 || self.convergence_tolerance.is_nan() {
            return Err(Error::InvalidConfig(
                "convergence_tolerance must be positive".into(),
            ));
        }
        if self.candidate_k < 1 {
            return Err(Error::InvalidConfig(
                "candidate_k must be at least 1".into(),
            ));
        }
        if self.rank_limit < 1 || self.vocab_cutoff < 1 {
            return Err(Error::InvalidConfig(
                "rank_limit and vocab_cutoff must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Snapshot of one training iteration (recorded under `log_trace`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    /// Pairs induced this iteration (matching or nearest-neighbor).
    pub induced: Vec<(usize, usize)>,
    /// The working dictionary after this iteration.
    pub dictionary: Vec<(usize, usize)>,
    /// The mapping learned this iteration, row-major.
    pub mapping_rows: Vec<Vec<f64>>,
}

/// Training outcome instrumentation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub iterations_run: usize,
    /// Mean cosine between mapped sources and their targets over the
    /// working dictionary, one value per iteration.
    pub mean_seed_cosine: Vec<f64>,
    pub final_dictionary_size: usize,
    /// Source words left without an admissible candidate by the
    /// constraint, accumulated over iterations.
    pub constraint_rejections: usize,
    /// Seed pairs dropped because they point past the vocabulary cutoff.
    pub seed_pairs_dropped: usize,
    pub trace: Vec<IterationTrace>,
}

/// Per-row tag sets for both vocabularies plus the compatibility
/// relation, precomputed over distinct tag sets so the admissibility
/// test is a table lookup. Rows whose word carries no tag are never
/// admissible (the constraint limits training to tagged forms).
#[derive(Debug, Clone)]
pub struct TrainTags {
    src_set_id: Vec<usize>,
    tgt_set_id: Vec<usize>,
    n_tgt_sets: usize,
    compat: Vec<bool>,
}

impl TrainTags {
    /// Looks every word of both vocabularies up in its language's
    /// paradigm collection.
    pub fn from_paradigms<F: Scalar>(
        x: &EmbeddingMatrix<F>,
        z: &EmbeddingMatrix<F>,
        src_par: &ParadigmCollection,
        tgt_par: &ParadigmCollection,
        ctx: &CompatContext,
    ) -> Self {
        let src: Vec<BTreeSet<MorphTag>> = x.words().iter().map(|w| src_par.tags_of(w)).collect();
        let tgt: Vec<BTreeSet<MorphTag>> = z.words().iter().map(|w| tgt_par.tags_of(w)).collect();
        Self::from_row_tags(src, tgt, ctx)
    }

    /// Builds the lookup from explicit per-row tag sets.
    pub fn from_row_tags(
        src: Vec<BTreeSet<MorphTag>>,
        tgt: Vec<BTreeSet<MorphTag>>,
        ctx: &CompatContext,
    ) -> Self {
        let mut src_sets: BTreeMap<BTreeSet<MorphTag>, usize> = BTreeMap::new();
        let src_set_id: Vec<usize> = src
            .iter()
            .map(|s| {
                let next = src_sets.len();
                *src_sets.entry(s.clone()).or_insert(next)
            })
            .collect();
        let mut tgt_sets: BTreeMap<BTreeSet<MorphTag>, usize> = BTreeMap::new();
        let tgt_set_id: Vec<usize> = tgt
            .iter()
            .map(|s| {
                let next = tgt_sets.len();
                *tgt_sets.entry(s.clone()).or_insert(next)
            })
            .collect();
        let n_tgt_sets = tgt_sets.len();
        let mut compat = vec![false; src_sets.len() * n_tgt_sets];
        for (ss, si) in &src_sets {
            for (ts, ti) in &tgt_sets {
                compat[si * n_tgt_sets + ti] =
                    ss.iter().any(|a| ts.iter().any(|b| ctx.compatible(a, b)));
            }
        }
        Self {
            src_set_id,
            tgt_set_id,
            n_tgt_sets,
            compat,
        }
    }

    /// Whether some tag of source row `i` is compatible with some tag of
    /// target row `j`.
    pub fn admissible(&self, i: usize, j: usize) -> bool {
        self.compat[self.src_set_id[i] * self.n_tgt_sets + self.tgt_set_id[j]]
    }
}

struct Prepared<F: Scalar> {
    x: EmbeddingMatrix<F>,
    z: EmbeddingMatrix<F>,
    seed: SeedLexicon,
    dropped: usize,
}

fn prepare<F: Scalar>(
    x: &EmbeddingMatrix<F>,
    z: &EmbeddingMatrix<F>,
    seed: &SeedLexicon,
    cfg: &TrainConfig,
    tags: Option<&TrainTags>,
) -> Result<Prepared<F>> {
    cfg.validate()?;
    if seed.is_empty() {
        return Err(Error::EmptySeed);
    }
    if cfg.constraint_mode != ConstraintMode::Off && tags.is_none() {
        return Err(Error::InvalidConfig(
            "constraint mode requires a tag lookup".into(),
        ));
    }
    let (x, _) = cfg.preprocessing.apply(x.clone())?;
    let (z, _) = cfg.preprocessing.apply(z.clone())?;
    let x = x.truncated(cfg.vocab_cutoff);
    let z = z.truncated(cfg.vocab_cutoff);
    let mut kept = Vec::new();
    let mut dropped = 0usize;
    for &(i, j) in seed.pairs() {
        if i < x.len() && j < z.len() {
            kept.push((i, j));
        } else {
            dropped += 1;
        }
    }
    if kept.is_empty() {
        return Err(Error::EmptySeed);
    }
    Ok(Prepared {
        x,
        z,
        seed: SeedLexicon::new(kept),
        dropped,
    })
}

fn trace_entry<F: Scalar>(
    induced: &SeedLexicon,
    dictionary: &SeedLexicon,
    w: &MappingMatrix<F>,
) -> IterationTrace {
    IterationTrace {
        induced: induced.pairs().to_vec(),
        dictionary: dictionary.pairs().to_vec(),
        mapping_rows: (0..w.dim())
            .map(|i| w.row(i).iter().map(|v| to_f64(*v)).collect())
            .collect(),
    }
}

/// Single Procrustes solve on the seed lexicon.
pub fn train_procrustes<F: Scalar>(
    x: &EmbeddingMatrix<F>,
    z: &EmbeddingMatrix<F>,
    seed: &SeedLexicon,
    cfg: &TrainConfig,
) -> Result<(MappingMatrix<F>, TrainReport)> {
    let prepared = prepare(x, z, seed, cfg, None)?;
    let w = procrustes_capped(&prepared.x, &prepared.z, &prepared.seed, cfg.svd_max_iters)?;
    let mean = mean_pair_cosine(&prepared.x, &prepared.z, &w, &prepared.seed);
    let mut report = TrainReport {
        iterations_run: 1,
        mean_seed_cosine: vec![mean],
        final_dictionary_size: prepared.seed.len(),
        constraint_rejections: 0,
        seed_pairs_dropped: prepared.dropped,
        trace: Vec::new(),
    };
    if cfg.log_trace {
        report
            .trace
            .push(trace_entry(&SeedLexicon::default(), &prepared.seed, &w));
    }
    Ok((w, report))
}

/// Self-learning: alternately fit the mapping on the current dictionary
/// and re-induce the dictionary by nearest-neighbor retrieval over the
/// truncated vocabularies; the induced dictionary replaces the previous
/// one each iteration.
pub fn train_self_learning<F: Scalar>(
    x: &EmbeddingMatrix<F>,
    z: &EmbeddingMatrix<F>,
    seed: &SeedLexicon,
    cfg: &TrainConfig,
    tags: Option<&TrainTags>,
) -> Result<(MappingMatrix<F>, TrainReport)> {
    let prepared = prepare(x, z, seed, cfg, tags)?;
    let constrained = cfg.constraint_mode != ConstraintMode::Off;
    let mut report = TrainReport {
        seed_pairs_dropped: prepared.dropped,
        ..Default::default()
    };
    let mut dict = prepared.seed.clone();
    let mut last: Option<MappingMatrix<F>> = None;
    let mut prev_mean = f64::NEG_INFINITY;

    for iter in 1..=cfg.max_iterations {
        let w = procrustes_capped(&prepared.x, &prepared.z, &dict, cfg.svd_max_iters)?;
        let filter = |i: usize, j: usize| tags.map(|t| t.admissible(i, j)).unwrap_or(true);
        let (induced, stats) = induce_dictionary(
            &prepared.x,
            &prepared.z,
            &w,
            constrained.then_some(&filter as _),
        )?;
        if constrained {
            report.constraint_rejections += stats.omitted;
        }
        if induced.is_empty() {
            return Err(Error::EmptyDictionary {
                constraint_rejections: report.constraint_rejections,
            });
        }
        let mean = mean_pair_cosine(&prepared.x, &prepared.z, &w, &induced);
        report.iterations_run = iter;
        report.mean_seed_cosine.push(mean);
        dict = induced;
        if cfg.log_trace {
            report.trace.push(trace_entry(&dict, &dict, &w));
        }
        last = Some(w);
        if mean - prev_mean < cfg.convergence_tolerance {
            break;
        }
        prev_mean = mean;
    }
    report.final_dictionary_size = dict.len();
    Ok((last.expect("at least one iteration"), report))
}

/// Latent-variable training: the E-step builds the sparsified candidate
/// graph over the rank-limited vocabularies and solves a maximal
/// bipartite matching; the matched pairs augment the immutable seed, and
/// the M-step refits the mapping on the augmented dictionary.
pub fn train_latent_variable<F: Scalar>(
    x: &EmbeddingMatrix<F>,
    z: &EmbeddingMatrix<F>,
    seed: &SeedLexicon,
    cfg: &TrainConfig,
    tags: Option<&TrainTags>,
) -> Result<(MappingMatrix<F>, TrainReport)> {
    let prepared = prepare(x, z, seed, cfg, tags)?;
    let constrained = cfg.constraint_mode != ConstraintMode::Off;
    let mut report = TrainReport {
        seed_pairs_dropped: prepared.dropped,
        ..Default::default()
    };
    let mut dict = prepared.seed.clone();
    let mut last: Option<MappingMatrix<F>> = None;
    let mut prev_mean = f64::NEG_INFINITY;

    for iter in 1..=cfg.max_iterations {
        let w = procrustes_capped(&prepared.x, &prepared.z, &dict, cfg.svd_max_iters)?;
        let mapped = w.apply(&prepared.x)?;
        let filter = |i: usize, j: usize| tags.map(|t| t.admissible(i, j)).unwrap_or(true);
        let graph = sparsify_similarities(
            &mapped,
            &prepared.z,
            cfg.candidate_k,
            cfg.rank_limit,
            constrained.then_some(&filter as _),
        )?;
        if constrained {
            let mut has_edge = vec![false; graph.n_left()];
            for &(l, _, _) in graph.edges() {
                has_edge[l] = true;
            }
            report.constraint_rejections += has_edge.iter().filter(|b| !**b).count();
        }
        if graph.edges().is_empty() {
            return Err(Error::EmptyDictionary {
                constraint_rejections: report.constraint_rejections,
            });
        }
        let matching = solve_assignment(&graph);
        let induced = SeedLexicon::new(matching);
        let mut pairs = prepared.seed.pairs().to_vec();
        pairs.extend_from_slice(induced.pairs());
        dict = SeedLexicon::new(pairs);

        let mean = mean_pair_cosine(&prepared.x, &prepared.z, &w, &dict);
        report.iterations_run = iter;
        report.mean_seed_cosine.push(mean);
        if cfg.log_trace {
            report.trace.push(trace_entry(&induced, &dict, &w));
        }
        last = Some(w);
        if mean - prev_mean < cfg.convergence_tolerance {
            break;
        }
        prev_mean = mean;
    }
    report.final_dictionary_size = dict.len();
    Ok((last.expect("at least one iteration"), report))
}
