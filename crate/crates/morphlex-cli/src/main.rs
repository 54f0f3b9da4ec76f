//! Batch command-line front end: dictionary construction, mapping
//! training, and translation evaluation.

mod manifest;

use std::collections::BTreeSet;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use morphlex::dictionary::{
    build_lemma_pairs, inflect_pairs, leakage_report, paradigm_coverage, read_dictionary,
    split_dictionary, write_dictionary, LeakageReport, SynsetTable,
};
use morphlex::embeddings::{NgramTable, PreprocessPipeline};
use morphlex::error::Error as LibError;
use morphlex::eval::{
    evaluate_lexeme_controlled, evaluate_standard, write_tag_table, EvalConfig, EvalReport,
};
use morphlex::mapping::SeedLexicon;
use morphlex::morph::{pos_of_default, CompatContext, ParadigmCollection, TagNormalizationRules};
use morphlex::training::{
    train_latent_variable, train_procrustes, train_self_learning, ConstraintMode, TrainConfig,
    TrainTags,
};

use manifest::RunManifest;

type Emb = morphlex::Embedding64;
type Mapping = morphlex::Mapping64;

const EXIT_INPUT: u8 = 1;
const EXIT_EMPTY: u8 = 2;
const EXIT_NUMERIC: u8 = 3;
const EXIT_USAGE: u8 = 64;

#[derive(Debug)]
struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    fn input(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }

    fn empty(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_EMPTY,
            message: message.into(),
        }
    }
}

impl From<LibError> for CliError {
    fn from(err: LibError) -> Self {
        let code = match &err {
            LibError::EmptyDictionary { .. } => EXIT_EMPTY,
            LibError::SvdNonConvergence { .. } => EXIT_NUMERIC,
            LibError::InvalidConfig(_) => EXIT_USAGE,
            _ => EXIT_INPUT,
        };
        Self {
            code,
            message: err.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        Self::input(err.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Parser)]
#[command(
    name = "morphlex",
    version,
    about = "Morphologically complete bilingual dictionaries and cross-lingual mapping experiments",
    after_help = "Exit codes: 0 success, 1 input error, 2 empty result, 3 numeric failure, 64 usage error.\n\
                  MORPHLEX_THREADS serves as fallback for --threads."
)]
struct Cli {
    /// Cap internal parallelism (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a morphologically complete dictionary from synset and paradigm files
    BuildDict(BuildDictArgs),
    /// Learn an orthogonal source-to-target mapping from a seed dictionary
    Train(TrainArgs),
    /// Score a mapping against a gold dictionary
    Evaluate(EvaluateArgs),
    /// Append subword-synthesized vectors for out-of-vocabulary forms
    OovExtend(OovExtendArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DictModeArg {
    /// One entry per tag shared by both paradigms
    Exact,
    /// Match tags on the features both languages exhibit
    Subset,
}

#[derive(Args)]
struct BuildDictArgs {
    #[arg(long)]
    src_synsets: PathBuf,
    #[arg(long)]
    tgt_synsets: PathBuf,
    #[arg(long)]
    src_paradigms: PathBuf,
    #[arg(long)]
    tgt_paradigms: PathBuf,
    /// Tag normalization rules (JSON with drop_features/rename/aspect_features)
    #[arg(long)]
    rules: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = DictModeArg::Exact)]
    mode: DictModeArg,
    /// Feature universe shared by the language pair, one feature per line
    /// (required in subset mode)
    #[arg(long)]
    shared_features: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    split_seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModelArg {
    Procrustes,
    SelfLearning,
    Latent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ConstraintArg {
    Off,
    Exact,
    Subset,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PreprocessArg {
    None,
    Unit,
    UnitCenter,
    UnitCenterUnit,
}

impl From<PreprocessArg> for PreprocessPipeline {
    fn from(arg: PreprocessArg) -> Self {
        match arg {
            PreprocessArg::None => PreprocessPipeline::None,
            PreprocessArg::Unit => PreprocessPipeline::Unit,
            PreprocessArg::UnitCenter => PreprocessPipeline::UnitCenter,
            PreprocessArg::UnitCenterUnit => PreprocessPipeline::UnitCenterUnit,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, value_enum)]
    model: ModelArg,
    #[arg(long)]
    src_emb: PathBuf,
    #[arg(long)]
    tgt_emb: PathBuf,
    /// Seed dictionary: source<TAB>target forms, one pair per line
    #[arg(long)]
    seed_dict: PathBuf,
    #[arg(long, value_enum, default_value_t = ConstraintArg::Off)]
    constraint: ConstraintArg,
    /// Source-language paradigm file (lemma<TAB>form<TAB>tag)
    #[arg(long)]
    src_tags: Option<PathBuf>,
    /// Target-language paradigm file
    #[arg(long)]
    tgt_tags: Option<PathBuf>,
    #[arg(long)]
    rules: Option<PathBuf>,
    /// Shared feature universe (required for --constraint subset)
    #[arg(long)]
    shared_features: Option<PathBuf>,
    /// Candidate targets per source in the matching step
    #[arg(long)]
    k: Option<usize>,
    /// Most frequent words considered during matching
    #[arg(long)]
    rank_limit: Option<usize>,
    /// Most frequent words used for training
    #[arg(long)]
    vocab_cutoff: Option<usize>,
    #[arg(long)]
    max_iterations: Option<usize>,
    /// Stop when the mean dictionary cosine improves by less than this
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long, value_enum, default_value_t = PreprocessArg::UnitCenterUnit)]
    preprocessing: PreprocessArg,
    /// Seed for any future stochastic extension; recorded in the report
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Record per-iteration dictionaries and mappings in the report
    #[arg(long, default_value_t = false)]
    log_trace: bool,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EvalModeArg {
    Standard,
    Lexeme,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OovArg {
    Off,
    Extend,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ReportArg {
    Json,
    Tsv,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long, value_enum, default_value_t = EvalModeArg::Standard)]
    mode: EvalModeArg,
    #[arg(long)]
    src_emb: PathBuf,
    #[arg(long)]
    tgt_emb: PathBuf,
    /// Mapping matrix produced by `train`
    #[arg(long)]
    mapping: PathBuf,
    /// Gold dictionary (five tab-separated columns)
    #[arg(long)]
    gold: PathBuf,
    /// Target paradigms (required for --mode lexeme)
    #[arg(long)]
    tgt_paradigms: Option<PathBuf>,
    /// Source paradigms (enables lexeme-frequency figures)
    #[arg(long)]
    src_paradigms: Option<PathBuf>,
    #[arg(long)]
    rules: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = OovArg::Off)]
    oov: OovArg,
    /// N-gram table (word2vec text layout; required for --oov extend)
    #[arg(long)]
    ngrams: Option<PathBuf>,
    /// N-gram metadata sidecar (default: <ngrams>.meta)
    #[arg(long)]
    ngrams_meta: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = PreprocessArg::UnitCenterUnit)]
    preprocessing: PreprocessArg,
    #[arg(long, value_enum, default_value_t = ReportArg::Json)]
    report: ReportArg,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct OovExtendArgs {
    #[arg(long)]
    emb: PathBuf,
    #[arg(long)]
    ngrams: PathBuf,
    #[arg(long)]
    ngrams_meta: Option<PathBuf>,
    /// Forms to synthesize, one per line
    #[arg(long)]
    forms: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
            let _ = err.print();
            std::process::exit(code as i32);
        }
    };

    let threads = cli.threads.or_else(|| {
        std::env::var("MORPHLEX_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(n) = threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("warning: could not configure thread pool: {e}");
        }
    }

    let start = Instant::now();
    let outcome = match cli.command {
        Command::BuildDict(args) => cmd_build_dict(args, start),
        Command::Train(args) => cmd_train(args, start),
        Command::Evaluate(args) => cmd_evaluate(args, start),
        Command::OovExtend(args) => cmd_oov_extend(args, start),
    };
    if let Err(err) = outcome {
        eprintln!("error: {}", err.message);
        std::process::exit(err.code as i32);
    }
}

fn open_reader(path: &Path) -> CliResult<BufReader<fs::File>> {
    fs::File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

fn named<T>(path: &Path, result: Result<T, LibError>) -> CliResult<T> {
    result.map_err(|e| {
        let cli: CliError = e.into();
        CliError {
            code: cli.code,
            message: format!("{}: {}", path.display(), cli.message),
        }
    })
}

fn load_embeddings(path: &Path) -> CliResult<Emb> {
    let (m, stats) = named(path, Emb::load(open_reader(path)?))?;
    if stats.duplicates > 0 {
        eprintln!(
            "warning: {}: {} duplicate forms skipped (first kept)",
            path.display(),
            stats.duplicates
        );
    }
    if stats.declared_rows != stats.loaded_rows + stats.duplicates {
        eprintln!(
            "warning: {}: header declares {} rows, {} data lines found",
            path.display(),
            stats.declared_rows,
            stats.loaded_rows + stats.duplicates
        );
    }
    Ok(m)
}

fn load_rules(path: Option<&PathBuf>) -> CliResult<TagNormalizationRules> {
    match path {
        None => Ok(TagNormalizationRules::default()),
        Some(p) => named(p, TagNormalizationRules::from_json_reader(open_reader(p)?)),
    }
}

fn load_paradigms(path: &Path, rules: &TagNormalizationRules) -> CliResult<ParadigmCollection> {
    let (collection, stats) = named(path, ParadigmCollection::load(open_reader(path)?, rules))?;
    if stats.conflicting_slots > 0 {
        eprintln!(
            "warning: {}: {} conflicting paradigm slots (first form kept)",
            path.display(),
            stats.conflicting_slots
        );
    }
    Ok(collection)
}

fn load_shared_features(path: &Path) -> CliResult<BTreeSet<String>> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    Ok(text
        .lines()
        .map(|l| l.trim().to_uppercase())
        .filter(|l| !l.is_empty())
        .collect())
}

fn load_ngrams(table: &Path, meta: Option<&PathBuf>) -> CliResult<NgramTable<f64>> {
    let meta_path = meta
        .cloned()
        .unwrap_or_else(|| PathBuf::from(format!("{}.meta", table.display())));
    named(
        table,
        NgramTable::load(open_reader(table)?, open_reader(&meta_path)?),
    )
}

fn write_output(dir: &Path, name: &str, bytes: &[u8], manifest: &mut RunManifest) -> CliResult<()> {
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    manifest.record_output(name, bytes);
    Ok(())
}

fn finish_manifest(dir: &Path, mut manifest: RunManifest, start: Instant) -> CliResult<()> {
    manifest.duration_ms = start.elapsed().as_millis() as u64;
    let bytes = serde_json::to_vec_pretty(&manifest)
        .map_err(|e| CliError::input(format!("manifest serialization: {e}")))?;
    let path = dir.join("manifest.json");
    fs::write(&path, bytes).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    Ok(())
}

fn ensure_out_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::input(format!("{}: {e}", dir.display())))
}

#[derive(Serialize)]
struct BuildReport {
    lemma_pairs: usize,
    entries: usize,
    distinct_source_lemmata: usize,
    train_entries: usize,
    dev_entries: usize,
    test_entries: usize,
    inflect: morphlex::dictionary::InflectStats,
    coverage_by_pos: std::collections::BTreeMap<String, f64>,
    leakage_train_test: LeakageReport,
    leakage_train_dev: LeakageReport,
    split_seed: u64,
    ratios: (f64, f64, f64),
}

fn cmd_build_dict(args: BuildDictArgs, start: Instant) -> CliResult<()> {
    if args.mode == DictModeArg::Subset && args.shared_features.is_none() {
        return Err(CliError::usage("--mode subset requires --shared-features"));
    }
    ensure_out_dir(&args.out_dir)?;

    let rules = load_rules(args.rules.as_ref())?;
    let ctx = match args.mode {
        DictModeArg::Exact => CompatContext::exact(),
        DictModeArg::Subset => CompatContext::feature_subset(
            load_shared_features(args.shared_features.as_ref().unwrap())?,
            rules.aspect_features.clone(),
        ),
    };

    let src_synsets = named(
        &args.src_synsets,
        SynsetTable::load(open_reader(&args.src_synsets)?),
    )?;
    let tgt_synsets = named(
        &args.tgt_synsets,
        SynsetTable::load(open_reader(&args.tgt_synsets)?),
    )?;
    let src_par = load_paradigms(&args.src_paradigms, &rules)?;
    let tgt_par = load_paradigms(&args.tgt_paradigms, &rules)?;

    let config = serde_json::json!({
        "mode": format!("{:?}", args.mode).to_lowercase(),
        "split_seed": args.split_seed,
        "rules": args.rules.as_ref().map(|p| p.display().to_string()),
    });
    let mut manifest = RunManifest::new("build-dict", config);
    for path in [
        &args.src_synsets,
        &args.tgt_synsets,
        &args.src_paradigms,
        &args.tgt_paradigms,
    ] {
        manifest
            .record_input(path)
            .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    }

    let pairs = build_lemma_pairs(&src_synsets, &tgt_synsets);
    if pairs.is_empty() {
        eprintln!("note: no shared synsets between the two tables");
    }
    let (entries, inflect_stats) = inflect_pairs(&pairs, &src_par, &tgt_par, &ctx);
    if entries.is_empty() {
        return Err(CliError::empty("dictionary is empty after inflection"));
    }
    let split = split_dictionary(&entries, args.split_seed)?;

    let mut dict_bytes = Vec::new();
    write_dictionary(&entries, &mut dict_bytes)?;
    write_output(&args.out_dir, "dictionary.tsv", &dict_bytes, &mut manifest)?;
    for (name, part) in [
        ("train.tsv", &split.train),
        ("dev.tsv", &split.dev),
        ("test.tsv", &split.test),
    ] {
        let mut bytes = Vec::new();
        write_dictionary(part, &mut bytes)?;
        write_output(&args.out_dir, name, &bytes, &mut manifest)?;
    }

    let report = BuildReport {
        lemma_pairs: pairs.len(),
        entries: entries.len(),
        distinct_source_lemmata: entries
            .iter()
            .map(|e| e.src_lemma.as_str())
            .collect::<BTreeSet<_>>()
            .len(),
        train_entries: split.train.len(),
        dev_entries: split.dev.len(),
        test_entries: split.test.len(),
        inflect: inflect_stats,
        coverage_by_pos: paradigm_coverage(&entries, &src_par, pos_of_default),
        leakage_train_test: leakage_report(&split.train, &split.test),
        leakage_train_dev: leakage_report(&split.train, &split.dev),
        split_seed: args.split_seed,
        ratios: split.ratios,
    };
    let report_bytes = serde_json::to_vec_pretty(&report)
        .map_err(|e| CliError::input(format!("report serialization: {e}")))?;
    write_output(&args.out_dir, "report.json", &report_bytes, &mut manifest)?;
    finish_manifest(&args.out_dir, manifest, start)?;
    eprintln!(
        "built {} entries over {} lemma pairs (train/dev/test = {}/{}/{})",
        entries.len(),
        pairs.len(),
        split.train.len(),
        split.dev.len(),
        split.test.len()
    );
    Ok(())
}

fn constraint_context(
    constraint: ConstraintArg,
    rules: &TagNormalizationRules,
    shared_features: Option<&PathBuf>,
) -> CliResult<Option<CompatContext>> {
    match constraint {
        ConstraintArg::Off => Ok(None),
        ConstraintArg::Exact => Ok(Some(CompatContext::exact())),
        ConstraintArg::Subset => {
            let path = shared_features
                .ok_or_else(|| CliError::usage("--constraint subset requires --shared-features"))?;
            Ok(Some(CompatContext::feature_subset(
                load_shared_features(path)?,
                rules.aspect_features.clone(),
            )))
        }
    }
}

fn cmd_train(args: TrainArgs, start: Instant) -> CliResult<()> {
    if args.constraint != ConstraintArg::Off && (args.src_tags.is_none() || args.tgt_tags.is_none())
    {
        return Err(CliError::usage(
            "--constraint exact/subset requires --src-tags and --tgt-tags",
        ));
    }
    if args.model == ModelArg::Procrustes {
        let mut ignored = Vec::new();
        if args.max_iterations.is_some() {
            ignored.push("--max-iterations");
        }
        if args.tolerance.is_some() {
            ignored.push("--tolerance");
        }
        if args.k.is_some() {
            ignored.push("--k");
        }
        if args.rank_limit.is_some() {
            ignored.push("--rank-limit");
        }
        if !ignored.is_empty() {
            eprintln!(
                "warning: --model procrustes ignores iteration flags: {}",
                ignored.join(", ")
            );
        }
    }
    ensure_out_dir(&args.out_dir)?;

    let defaults = TrainConfig::default();
    let cfg = TrainConfig {
        max_iterations: args.max_iterations.unwrap_or(defaults.max_iterations),
        convergence_tolerance: args.tolerance.unwrap_or(defaults.convergence_tolerance),
        candidate_k: args.k.unwrap_or(defaults.candidate_k),
        rank_limit: args.rank_limit.unwrap_or(defaults.rank_limit),
        vocab_cutoff: args.vocab_cutoff.unwrap_or(defaults.vocab_cutoff),
        constraint_mode: match args.constraint {
            ConstraintArg::Off => ConstraintMode::Off,
            ConstraintArg::Exact => ConstraintMode::ExactTag,
            ConstraintArg::Subset => ConstraintMode::FeatureSubset,
        },
        preprocessing: args.preprocessing.into(),
        random_seed: args.seed,
        svd_max_iters: defaults.svd_max_iters,
        log_trace: args.log_trace,
    };

    let x = load_embeddings(&args.src_emb)?;
    let z = load_embeddings(&args.tgt_emb)?;
    let (seed, seed_stats) = named(
        &args.seed_dict,
        SeedLexicon::read_text(open_reader(&args.seed_dict)?, &x, &z),
    )?;
    if seed_stats.unresolved > 0 {
        eprintln!(
            "warning: {}: {} seed pairs had no embedding row and were skipped",
            args.seed_dict.display(),
            seed_stats.unresolved
        );
    }

    let rules = load_rules(args.rules.as_ref())?;
    let ctx = constraint_context(args.constraint, &rules, args.shared_features.as_ref())?;
    let tags = match (&ctx, &args.src_tags, &args.tgt_tags) {
        (Some(ctx), Some(src_path), Some(tgt_path)) => {
            let src_par = load_paradigms(src_path, &rules)?;
            let tgt_par = load_paradigms(tgt_path, &rules)?;
            Some(TrainTags::from_paradigms(&x, &z, &src_par, &tgt_par, ctx))
        }
        _ => None,
    };

    let config = serde_json::to_value(&cfg)
        .map_err(|e| CliError::input(format!("config serialization: {e}")))?;
    let mut manifest = RunManifest::new(
        "train",
        serde_json::json!({
            "model": format!("{:?}", args.model).to_lowercase(),
            "train": config,
        }),
    );
    let mut inputs = vec![&args.src_emb, &args.tgt_emb, &args.seed_dict];
    inputs.extend(args.src_tags.iter());
    inputs.extend(args.tgt_tags.iter());
    inputs.extend(args.rules.iter());
    inputs.extend(args.shared_features.iter());
    for path in inputs {
        manifest
            .record_input(path)
            .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    }

    let (w, report) = match args.model {
        ModelArg::Procrustes => train_procrustes(&x, &z, &seed, &cfg)?,
        ModelArg::SelfLearning => train_self_learning(&x, &z, &seed, &cfg, tags.as_ref())?,
        ModelArg::Latent => train_latent_variable(&x, &z, &seed, &cfg, tags.as_ref())?,
    };

    let mut mapping_bytes = Vec::new();
    w.write(&mut mapping_bytes)?;
    write_output(&args.out_dir, "mapping.txt", &mapping_bytes, &mut manifest)?;
    let report_bytes = serde_json::to_vec_pretty(&report)
        .map_err(|e| CliError::input(format!("report serialization: {e}")))?;
    write_output(
        &args.out_dir,
        "train_report.json",
        &report_bytes,
        &mut manifest,
    )?;
    finish_manifest(&args.out_dir, manifest, start)?;
    eprintln!(
        "trained {} iterations, final dictionary size {}, mean cosine {:.4}",
        report.iterations_run,
        report.final_dictionary_size,
        report.mean_seed_cosine.last().copied().unwrap_or(0.0)
    );
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs, start: Instant) -> CliResult<()> {
    if args.mode == EvalModeArg::Lexeme && args.tgt_paradigms.is_none() {
        return Err(CliError::usage("--mode lexeme requires --tgt-paradigms"));
    }
    if args.oov == OovArg::Extend && args.ngrams.is_none() {
        return Err(CliError::usage("--oov extend requires --ngrams"));
    }
    ensure_out_dir(&args.out_dir)?;

    let rules = load_rules(args.rules.as_ref())?;
    let mut x = load_embeddings(&args.src_emb)?;
    let mut z = load_embeddings(&args.tgt_emb)?;
    let w = named(
        &args.mapping,
        Mapping::load(open_reader(&args.mapping)?, 1e-8),
    )?;
    let gold = named(&args.gold, read_dictionary(open_reader(&args.gold)?))?;
    let tgt_paradigms = match &args.tgt_paradigms {
        Some(p) => Some(load_paradigms(p, &rules)?),
        None => None,
    };
    let src_paradigms = match &args.src_paradigms {
        Some(p) => Some(load_paradigms(p, &rules)?),
        None => None,
    };

    let cfg = EvalConfig::default();
    let mut manifest = RunManifest::new(
        "evaluate",
        serde_json::json!({
            "mode": format!("{:?}", args.mode).to_lowercase(),
            "oov": format!("{:?}", args.oov).to_lowercase(),
            "report": format!("{:?}", args.report).to_lowercase(),
            "preprocessing": PreprocessPipeline::from(args.preprocessing).to_string(),
            "eval": serde_json::to_value(&cfg)
                .map_err(|e| CliError::input(format!("config serialization: {e}")))?,
        }),
    );
    let mut inputs = vec![&args.src_emb, &args.tgt_emb, &args.mapping, &args.gold];
    inputs.extend(args.tgt_paradigms.iter());
    inputs.extend(args.src_paradigms.iter());
    inputs.extend(args.ngrams.iter());
    inputs.extend(args.rules.iter());
    for path in inputs {
        manifest
            .record_input(path)
            .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    }

    if args.oov == OovArg::Extend {
        let table = load_ngrams(args.ngrams.as_ref().unwrap(), args.ngrams_meta.as_ref())?;
        let mut src_missing: BTreeSet<String> = BTreeSet::new();
        let mut tgt_missing: BTreeSet<String> = BTreeSet::new();
        for e in &gold {
            if x.rank(&e.src_form).is_none() {
                src_missing.insert(e.src_form.clone());
            }
            if z.rank(&e.tgt_form).is_none() {
                tgt_missing.insert(e.tgt_form.clone());
            }
            if args.mode == EvalModeArg::Lexeme {
                if let Some(paradigm) = tgt_paradigms.as_ref().unwrap().get(&e.tgt_lemma) {
                    for form in paradigm.forms() {
                        if z.rank(form).is_none() {
                            tgt_missing.insert(form.to_string());
                        }
                    }
                }
            }
        }
        let src_forms: Vec<String> = src_missing.into_iter().collect();
        let tgt_forms: Vec<String> = tgt_missing.into_iter().collect();
        let (nx, sx) = x.extend_with_oov(&src_forms, &table)?;
        let (nz, sz) = z.extend_with_oov(&tgt_forms, &table)?;
        eprintln!(
            "synthesized {} source and {} target vectors ({} without subword coverage)",
            sx.appended,
            sz.appended,
            sx.no_coverage + sz.no_coverage
        );
        x = nx;
        z = nz;
    }

    let pipeline: PreprocessPipeline = args.preprocessing.into();
    let (x, _) = pipeline.apply(x)?;
    let (z, _) = pipeline.apply(z)?;

    let report: EvalReport = match args.mode {
        EvalModeArg::Standard => {
            evaluate_standard(&x, &z, &w, &gold, &cfg, src_paradigms.as_ref())?
        }
        EvalModeArg::Lexeme => evaluate_lexeme_controlled(
            &x,
            &z,
            &w,
            &gold,
            tgt_paradigms.as_ref().unwrap(),
            &cfg,
            src_paradigms.as_ref(),
        )?,
    };

    let (name, bytes) = match args.report {
        ReportArg::Json => {
            let mut bytes = serde_json::to_vec_pretty(&report)
                .map_err(|e| CliError::input(format!("report serialization: {e}")))?;
            bytes.push(b'\n');
            ("report.json", bytes)
        }
        ReportArg::Tsv => {
            let mut bytes = Vec::new();
            write_tag_table(&report, &mut bytes)?;
            ("report.tsv", bytes)
        }
    };
    print!("{}", String::from_utf8_lossy(&bytes));
    write_output(&args.out_dir, name, &bytes, &mut manifest)?;
    finish_manifest(&args.out_dir, manifest, start)?;
    eprintln!(
        "evaluated {} entries: P@1 in-vocab {:.3}, with OOVs {:.3}",
        report.with_oov.evaluated_entries,
        report.in_vocab.overall_p_at_1,
        report.with_oov.overall_p_at_1
    );
    Ok(())
}

fn cmd_oov_extend(args: OovExtendArgs, start: Instant) -> CliResult<()> {
    ensure_out_dir(&args.out_dir)?;
    let emb = load_embeddings(&args.emb)?;
    let table = load_ngrams(&args.ngrams, args.ngrams_meta.as_ref())?;
    let forms_text = fs::read_to_string(&args.forms)
        .map_err(|e| CliError::input(format!("{}: {e}", args.forms.display())))?;
    let forms: Vec<String> = forms_text
        .lines()
        .map(|l| l.trim().to_string())
        .filter(|l| !l.is_empty())
        .collect();
    if forms.is_empty() {
        return Err(CliError::empty("no forms to synthesize"));
    }

    let mut manifest = RunManifest::new("oov-extend", serde_json::json!({}));
    for path in [&args.emb, &args.ngrams, &args.forms] {
        manifest
            .record_input(path)
            .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    }

    let (extended, stats) = emb.extend_with_oov(&forms, &table)?;
    let mut bytes = Vec::new();
    extended.write(&mut bytes)?;
    write_output(&args.out_dir, "extended.txt", &bytes, &mut manifest)?;
    let report_bytes = serde_json::to_vec_pretty(&stats)
        .map_err(|e| CliError::input(format!("report serialization: {e}")))?;
    write_output(
        &args.out_dir,
        "extend_report.json",
        &report_bytes,
        &mut manifest,
    )?;
    finish_manifest(&args.out_dir, manifest, start)?;
    eprintln!(
        "appended {} vectors ({} skipped as present, {} without coverage)",
        stats.appended, stats.skipped_existing, stats.no_coverage
    );
    Ok(())
}
