//! Generates morphologically complete bilingual dictionaries from synset
//! alignments plus paradigm tables, splits them lemma-disjointly, and
//! computes the paradigm-coverage and train–test leakage diagnostics.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::morph::{
    CompatContext, CompatMode, MorphTag, ParadigmCollection, TagNormalizationRules,
};

/// Synset identifier to lemma set, for one language.
#[derive(Debug, Clone, Default)]
pub struct SynsetTable {
    entries: BTreeMap<String, BTreeSet<String>>,
}

impl SynsetTable {
    /// Reads `synset_id<TAB>lemma` lines.
    pub fn load<R: BufRead>(reader: R) -> Result<Self> {
        let mut table = Self::default();
        for (idx, line) in reader.lines().enumerate() {
            let line = line.map_err(Error::Io)?;
            if line.trim().is_empty() {
                continue;
            }
            let mut cols = line.split('\t');
            let (id, lemma) = match (cols.next(), cols.next()) {
                (Some(id), Some(lemma)) if !id.is_empty() && !lemma.is_empty() => (id, lemma),
                _ => {
                    return Err(Error::Parse {
                        line: idx + 1,
                        msg: format!("expected \"synset_id<TAB>lemma\", got {line:?}"),
                    })
                }
            };
            table.insert(id, lemma);
        }
        Ok(table)
    }

    pub fn insert(&mut self, synset_id: &str, lemma: &str) {
        self.entries
            .entry(synset_id.to_string())
            .or_default()
            .insert(lemma.to_string());
    }

    pub fn entries(&self) -> &BTreeMap<String, BTreeSet<String>> {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// One dictionary row: source and target forms, their lemmata, and the
/// shared morphosyntactic tag.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DictEntry {
    pub src_form: String,
    pub tgt_form: String,
    pub src_lemma: String,
    pub tgt_lemma: String,
    pub tag: MorphTag,
}

impl DictEntry {
    pub fn new(
        src_form: impl Into<String>,
        tgt_form: impl Into<String>,
        src_lemma: impl Into<String>,
        tgt_lemma: impl Into<String>,
        tag: MorphTag,
    ) -> Result<Self> {
        let entry = Self {
            src_form: src_form.into(),
            tgt_form: tgt_form.into(),
            src_lemma: src_lemma.into(),
            tgt_lemma: tgt_lemma.into(),
            tag,
        };
        if entry.src_form.is_empty()
            || entry.tgt_form.is_empty()
            || entry.src_lemma.is_empty()
            || entry.tgt_lemma.is_empty()
        {
            return Err(Error::InvalidArgument(
                "dictionary entry with empty field".into(),
            ));
        }
        Ok(entry)
    }

    /// Checks the paradigm-membership invariant: the stored forms fill a
    /// slot of their lemma's paradigm consistent with the stored tag.
    pub fn is_consistent(
        &self,
        src_par: &ParadigmCollection,
        tgt_par: &ParadigmCollection,
        ctx: &CompatContext,
    ) -> bool {
        let (Some(sp), Some(tp)) = (src_par.get(&self.src_lemma), tgt_par.get(&self.tgt_lemma))
        else {
            return false;
        };
        match ctx.mode {
            CompatMode::ExactTag => {
                sp.form_for(&self.tag) == Some(self.src_form.as_str())
                    && tp.form_for(&self.tag) == Some(self.tgt_form.as_str())
            }
            CompatMode::FeatureSubset => sp.slots().iter().any(|(ts, fs)| {
                fs == &self.src_form
                    && tp.slots().iter().any(|(tt, ft)| {
                        ft == &self.tgt_form
                            && ctx.compatible(ts, tt)
                            && shared_tag(ts, tt).as_ref() == Some(&self.tag)
                    })
            }),
        }
    }
}

fn shared_tag(a: &MorphTag, b: &MorphTag) -> Option<MorphTag> {
    a.restricted_to(b.features())
}

/// Lemma-disjoint train/dev/test partition of a dictionary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DictionarySplit {
    pub train: Vec<DictEntry>,
    pub dev: Vec<DictEntry>,
    pub test: Vec<DictEntry>,
    pub ratios: (f64, f64, f64),
    pub split_seed: u64,
}

/// Counts from [`inflect_pairs`].
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct InflectStats {
    /// Lemma pairs filtered out because either side had no paradigm.
    pub missing_lemma_pairs: usize,
    /// Compatible slot pairs dropped because the shared tag was empty
    /// (feature-subset mode only).
    pub empty_shared_tags: usize,
    /// Identical (source form, target form, tag) triples deduplicated.
    pub deduplicated: usize,
}

/// Cartesian product of lemma sets per shared synset id, deduplicated
/// across synsets, in deterministic (synset id, lemma) order.
pub fn build_lemma_pairs(src: &SynsetTable, tgt: &SynsetTable) -> Vec<(String, String)> {
    let mut pairs = Vec::new();
    let mut seen: HashSet<(&str, &str)> = HashSet::new();
    for (id, src_lemmas) in src.entries() {
        let Some(tgt_lemmas) = tgt.entries().get(id) else {
            continue;
        };
        for s in src_lemmas {
            for t in tgt_lemmas {
                if seen.insert((s, t)) {
                    pairs.push((s.clone(), t.clone()));
                }
            }
        }
    }
    pairs
}

/// Expands lemma pairs into inflected dictionary entries: one entry per
/// tag shared by both paradigms (exact mode), or per compatible slot
/// pair with the shared-feature intersection as the stored tag
/// (feature-subset mode). Pairs with a lemma missing from either
/// paradigm collection are filtered out and counted.
pub fn inflect_pairs(
    pairs: &[(String, String)],
    src_par: &ParadigmCollection,
    tgt_par: &ParadigmCollection,
    ctx: &CompatContext,
) -> (Vec<DictEntry>, InflectStats) {
    let mut entries = Vec::new();
    let mut stats = InflectStats::default();
    let mut seen: HashSet<(String, String, MorphTag)> = HashSet::new();

    let push = |entries: &mut Vec<DictEntry>,
                stats: &mut InflectStats,
                seen: &mut HashSet<(String, String, MorphTag)>,
                entry: DictEntry| {
        let key = (
            entry.src_form.clone(),
            entry.tgt_form.clone(),
            entry.tag.clone(),
        );
        if seen.insert(key) {
            entries.push(entry);
        } else {
            stats.deduplicated += 1;
        }
    };

    for (sl, tl) in pairs {
        let (Some(sp), Some(tp)) = (src_par.get(sl), tgt_par.get(tl)) else {
            stats.missing_lemma_pairs += 1;
            continue;
        };
        match ctx.mode {
            CompatMode::ExactTag => {
                for (tag, src_form) in sp.slots() {
                    if let Some(tgt_form) = tp.form_for(tag) {
                        let entry = DictEntry {
                            src_form: src_form.clone(),
                            tgt_form: tgt_form.to_string(),
                            src_lemma: sl.clone(),
                            tgt_lemma: tl.clone(),
                            tag: tag.clone(),
                        };
                        push(&mut entries, &mut stats, &mut seen, entry);
                    }
                }
            }
            CompatMode::FeatureSubset => {
                for (ts, src_form) in sp.slots() {
                    for (tt, tgt_form) in tp.slots() {
                        if !ctx.compatible(ts, tt) {
                            continue;
                        }
                        let Some(tag) = shared_tag(ts, tt) else {
                            stats.empty_shared_tags += 1;
                            continue;
                        };
                        let entry = DictEntry {
                            src_form: src_form.clone(),
                            tgt_form: tgt_form.clone(),
                            src_lemma: sl.clone(),
                            tgt_lemma: tl.clone(),
                            tag,
                        };
                        push(&mut entries, &mut stats, &mut seen, entry);
                    }
                }
            }
        }
    }
    (entries, stats)
}

/// Splits entries 60/20/20 over a seeded shuffle of the distinct source
/// lemmata; every entry follows its source lemma, so the three lemma
/// sets are pairwise disjoint by construction.
pub fn split_dictionary(entries: &[DictEntry], split_seed: u64) -> Result<DictionarySplit> {
    if entries.is_empty() {
        return Err(Error::EmptyInput("cannot split an empty dictionary"));
    }
    let mut lemmata: Vec<&str> = entries
        .iter()
        .map(|e| e.src_lemma.as_str())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if lemmata.len() < 3 {
        return Err(Error::TooFewLemmata {
            found: lemmata.len(),
        });
    }
    let mut rng = ChaCha20Rng::seed_from_u64(split_seed);
    lemmata.shuffle(&mut rng);

    let n = lemmata.len();
    let train_n = n * 6 / 10;
    let rem = n - train_n;
    let dev_n = rem / 2;

    let mut split_of: HashMap<&str, u8> = HashMap::with_capacity(n);
    for (i, lemma) in lemmata.iter().enumerate() {
        let s = if i < train_n {
            0
        } else if i < train_n + dev_n {
            1
        } else {
            2
        };
        split_of.insert(lemma, s);
    }

    let mut split = DictionarySplit {
        train: Vec::new(),
        dev: Vec::new(),
        test: Vec::new(),
        ratios: (0.6, 0.2, 0.2),
        split_seed,
    };
    for e in entries {
        match split_of[e.src_lemma.as_str()] {
            0 => split.train.push(e.clone()),
            1 => split.dev.push(e.clone()),
            _ => split.test.push(e.clone()),
        }
    }
    Ok(split)
}

/// Train–test paradigm leakage: distinct test source forms whose source
/// lemma also occurs as a source lemma in the train split.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LeakageReport {
    pub leaked_source_words: usize,
    pub total_source_words: usize,
    pub leaked_fraction: f64,
}

pub fn leakage_report(train: &[DictEntry], test: &[DictEntry]) -> LeakageReport {
    let train_lemmata: HashSet<&str> = train.iter().map(|e| e.src_lemma.as_str()).collect();
    let mut leaked: BTreeSet<&str> = BTreeSet::new();
    let mut total: BTreeSet<&str> = BTreeSet::new();
    for e in test {
        total.insert(e.src_form.as_str());
        if train_lemmata.contains(e.src_lemma.as_str()) {
            leaked.insert(e.src_form.as_str());
        }
    }
    let fraction = if total.is_empty() {
        0.0
    } else {
        leaked.len() as f64 / total.len() as f64
    };
    LeakageReport {
        leaked_source_words: leaked.len(),
        total_source_words: total.len(),
        leaked_fraction: fraction,
    }
}

/// Average fraction of paradigm slots covered by the entries, per
/// part-of-speech of the source lemma. Lemmata without a paradigm are
/// skipped.
pub fn paradigm_coverage(
    entries: &[DictEntry],
    src_par: &ParadigmCollection,
    pos_of: impl Fn(&MorphTag) -> String,
) -> BTreeMap<String, f64> {
    let mut tags_by_lemma: BTreeMap<&str, BTreeSet<&MorphTag>> = BTreeMap::new();
    for e in entries {
        tags_by_lemma
            .entry(e.src_lemma.as_str())
            .or_default()
            .insert(&e.tag);
    }
    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for (lemma, tags) in tags_by_lemma {
        let Some(paradigm) = src_par.get(lemma) else {
            continue;
        };
        if paradigm.is_empty() {
            continue;
        }
        let covered = paradigm
            .slots()
            .keys()
            .filter(|slot| tags.contains(slot))
            .count();
        let coverage = covered as f64 / paradigm.len() as f64;
        let pos = paradigm
            .slots()
            .keys()
            .next()
            .map(&pos_of)
            .unwrap_or_else(|| "OTHER".to_string());
        let slot = sums.entry(pos).or_insert((0.0, 0));
        slot.0 += coverage;
        slot.1 += 1;
    }
    sums.into_iter()
        .map(|(pos, (sum, n))| (pos, sum / n as f64))
        .collect()
}

/// Writes entries as five tab-separated columns (source form, target
/// form, source lemma, target lemma, tag in sorted-feature form).
pub fn write_dictionary<W: Write>(entries: &[DictEntry], mut w: W) -> Result<()> {
    for e in entries {
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}",
            e.src_form, e.tgt_form, e.src_lemma, e.tgt_lemma, e.tag
        )?;
    }
    Ok(())
}

/// Reads the five-column dictionary format written by
/// [`write_dictionary`].
pub fn read_dictionary<R: BufRead>(reader: R) -> Result<Vec<DictEntry>> {
    let rules = TagNormalizationRules::default();
    let mut entries = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(Error::Io)?;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 5 {
            return Err(Error::Parse {
                line: idx + 1,
                msg: format!("expected 5 tab-separated columns, found {}", cols.len()),
            });
        }
        let tag = MorphTag::parse(cols[4], &rules).map_err(|e| Error::Parse {
            line: idx + 1,
            msg: e.to_string(),
        })?;
        let entry =
            DictEntry::new(cols[0], cols[1], cols[2], cols[3], tag).map_err(|e| Error::Parse {
                line: idx + 1,
                msg: e.to_string(),
            })?;
        entries.push(entry);
    }
    Ok(entries)
}
