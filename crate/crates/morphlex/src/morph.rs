//! Morphosyntactic tags, inflectional paradigms, and the compatibility
//! relations used by the training constraint and by cross-family
//! dictionary construction.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Canonical unordered set of morphosyntactic feature strings.
///
/// Features are stored uppercased; serialization joins them with `;` in
/// sorted order, so `"N;NOM;PL"` and `"NOM;PL;N"` denote the same tag.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct MorphTag {
    features: BTreeSet<String>,
}

impl MorphTag {
    /// Splits on `;`, trims, uppercases, applies renames, deletes dropped
    /// features, and deduplicates. Errors when nothing is left.
    pub fn parse(raw: &str, rules: &TagNormalizationRules) -> Result<Self> {
        if raw.trim().is_empty() {
            return Err(Error::EmptyTag { raw: raw.into() });
        }
        let mut features = BTreeSet::new();
        for part in raw.split(';') {
            let f = part.trim().to_uppercase();
            if f.is_empty() {
                continue;
            }
            let f = rules.rename.get(&f).cloned().unwrap_or(f);
            if rules.drop_features.contains(&f) {
                continue;
            }
            features.insert(f);
        }
        if features.is_empty() {
            return Err(Error::EmptyTag { raw: raw.into() });
        }
        Ok(Self { features })
    }

    /// Builds a tag from pre-normalized features.
    pub fn from_features<I, S>(features: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let features: BTreeSet<String> = features
            .into_iter()
            .map(|f| f.as_ref().trim().to_uppercase())
            .filter(|f| !f.is_empty())
            .collect();
        if features.is_empty() {
            return Err(Error::EmptyTag { raw: String::new() });
        }
        Ok(Self { features })
    }

    pub fn features(&self) -> &BTreeSet<String> {
        &self.features
    }

    pub fn contains(&self, feature: &str) -> bool {
        self.features.contains(feature)
    }

    /// Features shared with `universe`; `None` when the intersection is
    /// empty (an empty tag is not representable).
    pub fn restricted_to(&self, universe: &BTreeSet<String>) -> Option<Self> {
        let features: BTreeSet<String> = self.features.intersection(universe).cloned().collect();
        if features.is_empty() {
            None
        } else {
            Some(Self { features })
        }
    }
}

impl fmt::Display for MorphTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for feat in &self.features {
            if !first {
                f.write_str(";")?;
            }
            f.write_str(feat)?;
            first = false;
        }
        Ok(())
    }
}

impl From<MorphTag> for String {
    fn from(tag: MorphTag) -> Self {
        tag.to_string()
    }
}

impl TryFrom<String> for MorphTag {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        MorphTag::parse(&s, &TagNormalizationRules::default())
    }
}

/// Tag processing applied while parsing resources, making annotation
/// schemes of different languages comparable.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TagNormalizationRules {
    /// Features deleted after renaming.
    #[serde(default)]
    pub drop_features: BTreeSet<String>,
    /// Feature renames, applied once (before drops). A rename target may
    /// not itself be renamed further.
    #[serde(default)]
    pub rename: BTreeMap<String, String>,
    /// Features treated as hard constraints in feature-subset mode: two
    /// tags are only compatible when these features agree on both sides.
    #[serde(default)]
    pub aspect_features: BTreeSet<String>,
}

impl TagNormalizationRules {
    /// Uppercases all rule strings and checks that one rename application
    /// reaches a fixpoint.
    pub fn validated(self) -> Result<Self> {
        let drop_features = self
            .drop_features
            .iter()
            .map(|f| f.to_uppercase())
            .collect();
        let aspect_features = self
            .aspect_features
            .iter()
            .map(|f| f.to_uppercase())
            .collect();
        let rename: BTreeMap<String, String> = self
            .rename
            .iter()
            .map(|(k, v)| (k.to_uppercase(), v.to_uppercase()))
            .collect();
        for (k, v) in &rename {
            if let Some(w) = rename.get(v) {
                if w != v {
                    return Err(Error::InvalidRules(format!(
                        "rename chain {k} -> {v} -> {w} needs more than one application"
                    )));
                }
            }
        }
        Ok(Self {
            drop_features,
            rename,
            aspect_features,
        })
    }

    pub fn from_json_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        let rules: Self =
            serde_json::from_reader(reader).map_err(|e| Error::InvalidRules(e.to_string()))?;
        rules.validated()
    }
}

/// How two tags are compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CompatMode {
    /// Set equality of the full feature sets.
    #[default]
    ExactTag,
    /// Equality restricted to the features both languages' resources
    /// exhibit, with aspect features required to agree outright.
    FeatureSubset,
}

/// Everything [`tags_compatible`] needs besides the two tags.
#[derive(Debug, Clone, Default)]
pub struct CompatContext {
    pub mode: CompatMode,
    /// Feature universe shared by the language pair (feature-subset mode).
    pub shared_features: BTreeSet<String>,
    /// Hard-agreement features (feature-subset mode).
    pub aspect_features: BTreeSet<String>,
}

impl CompatContext {
    pub fn exact() -> Self {
        Self {
            mode: CompatMode::ExactTag,
            ..Default::default()
        }
    }

    pub fn feature_subset(
        shared_features: BTreeSet<String>,
        aspect_features: BTreeSet<String>,
    ) -> Self {
        Self {
            mode: CompatMode::FeatureSubset,
            shared_features,
            aspect_features,
        }
    }

    pub fn compatible(&self, a: &MorphTag, b: &MorphTag) -> bool {
        tags_compatible(a, b, self)
    }
}

/// Exact mode: set equality. Feature-subset mode: the two tags agree on
/// the shared feature universe and on every aspect feature.
pub fn tags_compatible(a: &MorphTag, b: &MorphTag, ctx: &CompatContext) -> bool {
    match ctx.mode {
        CompatMode::ExactTag => a == b,
        CompatMode::FeatureSubset => {
            let restrict = |t: &MorphTag, u: &BTreeSet<String>| -> BTreeSet<String> {
                t.features().intersection(u).cloned().collect()
            };
            restrict(a, &ctx.shared_features) == restrict(b, &ctx.shared_features)
                && restrict(a, &ctx.aspect_features) == restrict(b, &ctx.aspect_features)
        }
    }
}

/// A lemma with its inflection table. One form per slot; a form may fill
/// several slots (syncretism).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Paradigm {
    lemma: String,
    slots: BTreeMap<MorphTag, String>,
}

impl Paradigm {
    pub fn new(lemma: String) -> Self {
        Self {
            lemma,
            slots: BTreeMap::new(),
        }
    }

    pub fn lemma(&self) -> &str {
        &self.lemma
    }

    pub fn slots(&self) -> &BTreeMap<MorphTag, String> {
        &self.slots
    }

    pub fn form_for(&self, tag: &MorphTag) -> Option<&str> {
        self.slots.get(tag).map(|s| s.as_str())
    }

    /// Distinct surface forms of the paradigm, in sorted order.
    pub fn forms(&self) -> BTreeSet<&str> {
        self.slots.values().map(|s| s.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }
}

/// Counts from [`ParadigmCollection::load`].
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ParadigmLoadStats {
    pub entries: usize,
    /// A (lemma, tag) slot seen again with a different form; first kept.
    pub conflicting_slots: usize,
}

/// All paradigms of one language, indexed by lemma and by surface form.
#[derive(Debug, Clone, Default)]
pub struct ParadigmCollection {
    by_lemma: BTreeMap<String, Paradigm>,
    by_form: HashMap<String, BTreeSet<MorphTag>>,
}

impl ParadigmCollection {
    /// Reads `lemma<TAB>form<TAB>tag` lines (UniMorph layout), applying
    /// the normalization rules to every tag.
    pub fn load<R: BufRead>(
        reader: R,
        rules: &TagNormalizationRules,
    ) -> Result<(Self, ParadigmLoadStats)> {
        let mut collection = Self::default();
        let mut stats = ParadigmLoadStats::default();
        for (idx, line) in reader.lines().enumerate() {
            let line = line.map_err(Error::Io)?;
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 {
                return Err(Error::Parse {
                    line: idx + 1,
                    msg: format!(
                        "expected 3 tab-separated columns (lemma, form, tag), found {}",
                        cols.len()
                    ),
                });
            }
            let (lemma, form, raw_tag) = (cols[0].trim(), cols[1].trim(), cols[2].trim());
            if lemma.is_empty() || form.is_empty() {
                return Err(Error::Parse {
                    line: idx + 1,
                    msg: "empty lemma or form".into(),
                });
            }
            let tag = MorphTag::parse(raw_tag, rules).map_err(|e| Error::Parse {
                line: idx + 1,
                msg: e.to_string(),
            })?;
            if !collection.insert(lemma, form, tag) {
                stats.conflicting_slots += 1;
            }
            stats.entries += 1;
        }
        Ok((collection, stats))
    }

    /// Inserts a slot; returns false when the (lemma, tag) slot already
    /// held a different form (the first form wins).
    pub fn insert(&mut self, lemma: &str, form: &str, tag: MorphTag) -> bool {
        let paradigm = self
            .by_lemma
            .entry(lemma.to_string())
            .or_insert_with(|| Paradigm::new(lemma.to_string()));
        match paradigm.slots.get(&tag) {
            Some(existing) if existing != form => return false,
            Some(_) => return true,
            None => {}
        }
        paradigm.slots.insert(tag.clone(), form.to_string());
        self.by_form
            .entry(form.to_string())
            .or_default()
            .insert(tag);
        true
    }

    pub fn get(&self, lemma: &str) -> Option<&Paradigm> {
        self.by_lemma.get(lemma)
    }

    pub fn contains_lemma(&self, lemma: &str) -> bool {
        self.by_lemma.contains_key(lemma)
    }

    /// All tags any paradigm assigns to this form; empty means untagged.
    pub fn tags_of(&self, form: &str) -> BTreeSet<MorphTag> {
        self.by_form.get(form).cloned().unwrap_or_default()
    }

    pub fn lemmata(&self) -> impl Iterator<Item = &str> {
        self.by_lemma.keys().map(|s| s.as_str())
    }

    pub fn len(&self) -> usize {
        self.by_lemma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_lemma.is_empty()
    }
}

/// Part-of-speech of a tag by its POS-bearing feature; used to group
/// paradigm-coverage figures.
pub fn pos_of_default(tag: &MorphTag) -> String {
    for pos in ["N", "V", "ADJ", "ADV", "PRO", "DET"] {
        if tag.contains(pos) {
            return pos.to_string();
        }
    }
    "OTHER".to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tag(raw: &str) -> MorphTag {
        MorphTag::parse(raw, &TagNormalizationRules::default()).unwrap()
    }

    #[test]
    fn parse_canonicalizes() {
        let t = tag("N;NOM;PL");
        assert_eq!(
            t.features().iter().cloned().collect::<Vec<_>>(),
            vec!["N", "NOM", "PL"]
        );
        assert_eq!(tag("n;nom;pl"), t);
        assert_eq!(tag("PL;N;NOM"), t);
        assert_eq!(t.to_string(), "N;NOM;PL");
    }

    #[test]
    fn parse_applies_drop_rules() {
        let rules = TagNormalizationRules {
            drop_features: ["ANIM".to_string()].into(),
            ..Default::default()
        }
        .validated()
        .unwrap();
        let t = MorphTag::parse("N;ANIM;SG", &rules).unwrap();
        assert_eq!(t, tag("N;SG"));
    }

    #[test]
    fn renames_apply_before_drops() {
        let rules = TagNormalizationRules {
            rename: [("V.PTCP".to_string(), "PTCP".to_string())].into(),
            drop_features: ["PTCP".to_string()].into(),
            ..Default::default()
        }
        .validated()
        .unwrap();
        let t = MorphTag::parse("V.PTCP;MASC", &rules).unwrap();
        assert_eq!(t, tag("MASC"));
    }

    #[test]
    fn empty_tags_are_rejected() {
        let rules = TagNormalizationRules::default();
        assert!(matches!(
            MorphTag::parse("", &rules),
            Err(Error::EmptyTag { .. })
        ));
        let dropping = TagNormalizationRules {
            drop_features: ["N".to_string()].into(),
            ..Default::default()
        }
        .validated()
        .unwrap();
        assert!(matches!(
            MorphTag::parse("N", &dropping),
            Err(Error::EmptyTag { .. })
        ));
    }

    #[test]
    fn rename_chains_are_rejected() {
        let rules = TagNormalizationRules {
            rename: [
                ("A".to_string(), "B".to_string()),
                ("B".to_string(), "C".to_string()),
            ]
            .into(),
            ..Default::default()
        };
        assert!(matches!(rules.validated(), Err(Error::InvalidRules(_))));
    }

    #[test]
    fn exact_mode_is_set_equality() {
        let ctx = CompatContext::exact();
        assert!(ctx.compatible(&tag("N;NOM;PL"), &tag("PL;NOM;N")));
        assert!(!ctx.compatible(&tag("N;NOM;PL"), &tag("N;NOM;SG")));
    }

    #[test]
    fn subset_mode_ignores_unshared_case_features() {
        // a case-marking language vs one whose nouns are not declined for
        // case: the shared universe carries no case features
        let shared: BTreeSet<String> = ["N", "SG", "PL", "MASC", "FEM", "V"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let ctx = CompatContext::feature_subset(shared, BTreeSet::new());
        assert!(ctx.compatible(&tag("DAT;N;SG"), &tag("N;SG")));
        assert!(!ctx.compatible(&tag("DAT;N;SG"), &tag("N;PL")));
    }

    #[test]
    fn subset_mode_enforces_aspect_agreement() {
        let shared: BTreeSet<String> = ["V", "SG"].iter().map(|s| s.to_string()).collect();
        let aspect: BTreeSet<String> = ["IPFV", "PFV"].iter().map(|s| s.to_string()).collect();
        let ctx = CompatContext::feature_subset(shared, aspect);
        assert!(!ctx.compatible(&tag("V;SG;PFV"), &tag("V;SG;IPFV")));
        assert!(ctx.compatible(&tag("V;SG;PFV"), &tag("V;SG;PFV")));
        // aspect features must agree even when outside the shared universe
        assert!(!ctx.compatible(&tag("V;SG;PFV"), &tag("V;SG")));
    }

    #[test]
    fn subset_mode_is_symmetric() {
        let shared: BTreeSet<String> = ["N", "SG"].iter().map(|s| s.to_string()).collect();
        let ctx = CompatContext::feature_subset(shared, BTreeSet::new());
        let a = tag("DAT;N;SG");
        let b = tag("N;SG");
        assert_eq!(ctx.compatible(&a, &b), ctx.compatible(&b, &a));
    }

    #[test]
    fn restricted_to_drops_to_none_when_empty() {
        let universe: BTreeSet<String> = ["X"].iter().map(|s| s.to_string()).collect();
        assert!(tag("N;SG").restricted_to(&universe).is_none());
        let universe: BTreeSet<String> = ["N"].iter().map(|s| s.to_string()).collect();
        assert_eq!(tag("N;SG").restricted_to(&universe).unwrap(), tag("N"));
    }

    #[test]
    fn collection_indexes_forms_and_lemmata() {
        let mut c = ParadigmCollection::default();
        c.insert("morze", "morza", tag("N;NOM;PL"));
        c.insert("morze", "morze", tag("N;NOM;SG"));
        // syncretism: one form, two slots
        c.insert("morze", "morzu", tag("N;DAT;SG"));
        c.insert("morze", "morzu", tag("N;ESS;SG"));

        assert_eq!(c.tags_of("morza"), [tag("N;NOM;PL")].into());
        assert_eq!(
            c.tags_of("morzu"),
            [tag("N;DAT;SG"), tag("N;ESS;SG")].into()
        );
        assert!(c.tags_of("nieznane").is_empty());
        assert_eq!(c.get("morze").unwrap().len(), 4);
    }

    #[test]
    fn collection_load_parses_unimorph_layout() {
        let text = "morze\tmorza\tN;NOM;PL\nmorze\tmorze\tN;NOM;SG\n";
        let (c, stats) =
            ParadigmCollection::load(text.as_bytes(), &TagNormalizationRules::default()).unwrap();
        assert_eq!(stats.entries, 2);
        assert_eq!(stats.conflicting_slots, 0);
        assert_eq!(
            c.get("morze").unwrap().form_for(&tag("N;NOM;PL")),
            Some("morza")
        );
    }

    #[test]
    fn collection_load_counts_conflicting_slots() {
        let text = "go\twent\tV;PST\ngo\tgoed\tV;PST\n";
        let (c, stats) =
            ParadigmCollection::load(text.as_bytes(), &TagNormalizationRules::default()).unwrap();
        assert_eq!(stats.conflicting_slots, 1);
        assert_eq!(c.get("go").unwrap().form_for(&tag("V;PST")), Some("went"));
    }

    #[test]
    fn collection_load_reports_line_numbers() {
        let text = "a\tb\tN\nbroken line without tabs\n";
        let err = ParadigmCollection::load(text.as_bytes(), &TagNormalizationRules::default())
            .unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn pos_classifier_picks_pos_feature() {
        assert_eq!(pos_of_default(&tag("N;NOM;PL")), "N");
        assert_eq!(pos_of_default(&tag("NFIN;V")), "V");
        assert_eq!(pos_of_default(&tag("ADJ;MASC;SG")), "ADJ");
        assert_eq!(pos_of_default(&tag("FOO;BAR")), "OTHER");
    }

    #[test]
    fn rules_from_json() {
        let json = r#"{
            "drop_features": ["anim"],
            "rename": {"v.ptcp": "PTCP"},
            "aspect_features": ["ipfv", "pfv"]
        }"#;
        let rules = TagNormalizationRules::from_json_reader(json.as_bytes()).unwrap();
        assert!(rules.drop_features.contains("ANIM"));
        assert_eq!(rules.rename.get("V.PTCP"), Some(&"PTCP".to_string()));
        assert!(rules.aspect_features.contains("PFV"));
    }

    proptest! {
        #[test]
        fn serialize_parse_roundtrip(feats in proptest::collection::btree_set("[a-z]{1,6}", 1..6)) {
            let t = MorphTag::from_features(feats.iter()).unwrap();
            let back = MorphTag::parse(&t.to_string(), &TagNormalizationRules::default()).unwrap();
            prop_assert_eq!(t, back);
        }

        #[test]
        fn exact_compat_is_an_equivalence(
            a in proptest::collection::btree_set("[A-Z]{1,3}", 1..4),
            b in proptest::collection::btree_set("[A-Z]{1,3}", 1..4),
            c in proptest::collection::btree_set("[A-Z]{1,3}", 1..4),
        ) {
            let ctx = CompatContext::exact();
            let (ta, tb, tc) = (
                MorphTag::from_features(a.iter()).unwrap(),
                MorphTag::from_features(b.iter()).unwrap(),
                MorphTag::from_features(c.iter()).unwrap(),
            );
            prop_assert!(ctx.compatible(&ta, &ta));
            prop_assert_eq!(ctx.compatible(&ta, &tb), ctx.compatible(&tb, &ta));
            if ctx.compatible(&ta, &tb) && ctx.compatible(&tb, &tc) {
                prop_assert!(ctx.compatible(&ta, &tc));
            }
        }

        #[test]
        fn subset_compat_is_symmetric(
            a in proptest::collection::btree_set("[A-Z]{1,3}", 1..4),
            b in proptest::collection::btree_set("[A-Z]{1,3}", 1..4),
            shared in proptest::collection::btree_set("[A-Z]{1,3}", 0..4),
            aspect in proptest::collection::btree_set("[A-Z]{1,3}", 0..2),
        ) {
            let ctx = CompatContext::feature_subset(shared, aspect);
            let ta = MorphTag::from_features(a.iter()).unwrap();
            let tb = MorphTag::from_features(b.iter()).unwrap();
            prop_assert_eq!(ctx.compatible(&ta, &tb), ctx.compatible(&tb, &ta));
        }
    }
}
