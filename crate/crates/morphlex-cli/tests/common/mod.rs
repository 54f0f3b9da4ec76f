//! Shared fixture generation and process helpers for the CLI tests.
// Each test binary uses its own subset of these helpers.
#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use morphlex::embeddings::EmbeddingMatrix;
use morphlex::synth;

pub fn morphlex_bin() -> &'static str {
    env!("CARGO_BIN_EXE_morphlex")
}

/// Runs the CLI and captures (exit code, stdout, stderr).
pub fn run(args: &[&str]) -> (i32, String, String) {
    let output = Command::new(morphlex_bin())
        .args(args)
        .output()
        .expect("binary runs");
    (
        output.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&output.stdout).into_owned(),
        String::from_utf8_lossy(&output.stderr).into_owned(),
    )
}

pub struct ResourcePaths {
    pub src_synsets: PathBuf,
    pub tgt_synsets: PathBuf,
    pub src_paradigms: PathBuf,
    pub tgt_paradigms: PathBuf,
}

/// Dictionary-building resources: `n_lemmata` shared synsets, one lemma
/// each side, two shared paradigm slots per lemma pair.
pub fn write_language_resources(dir: &Path, n_lemmata: usize) -> ResourcePaths {
    let mut src_syn = String::new();
    let mut tgt_syn = String::new();
    let mut src_par = String::new();
    let mut tgt_par = String::new();
    for i in 0..n_lemmata {
        src_syn.push_str(&format!("s{i}\tl{i}\n"));
        tgt_syn.push_str(&format!("s{i}\tm{i}\n"));
        src_par.push_str(&format!("l{i}\tl{i}a\tN;SG\n"));
        src_par.push_str(&format!("l{i}\tl{i}b\tN;PL\n"));
        tgt_par.push_str(&format!("m{i}\tm{i}a\tN;SG\n"));
        tgt_par.push_str(&format!("m{i}\tm{i}b\tN;PL\n"));
    }
    let paths = ResourcePaths {
        src_synsets: dir.join("src_synsets.tsv"),
        tgt_synsets: dir.join("tgt_synsets.tsv"),
        src_paradigms: dir.join("src_paradigms.tsv"),
        tgt_paradigms: dir.join("tgt_paradigms.tsv"),
    };
    fs::write(&paths.src_synsets, src_syn).unwrap();
    fs::write(&paths.tgt_synsets, tgt_syn).unwrap();
    fs::write(&paths.src_paradigms, src_par).unwrap();
    fs::write(&paths.tgt_paradigms, tgt_par).unwrap();
    paths
}

pub struct EmbeddingPaths {
    pub src_emb: PathBuf,
    pub tgt_emb: PathBuf,
    pub seed_dict: PathBuf,
    pub gold: PathBuf,
    pub tgt_paradigms: PathBuf,
}

/// Embedding fixture aligned with the `write_language_resources` forms:
/// source vocabulary `l{i}a, l{i}b`, target `m{i}a, m{i}b`, target rows
/// a rotated copy of the source rows, gold pairing form-for-form.
pub fn write_aligned_embeddings(dir: &Path, n_lemmata: usize, seed: u64) -> EmbeddingPaths {
    let n_forms = 2 * n_lemmata;
    let (bx, bz, _) = synth::anchored_rotated_copy(n_forms, 8, 5.min(n_forms), 0.1, seed);
    let src_words: Vec<String> = (0..n_lemmata)
        .flat_map(|i| [format!("l{i}a"), format!("l{i}b")])
        .collect();
    let tgt_words: Vec<String> = (0..n_lemmata)
        .flat_map(|i| [format!("m{i}a"), format!("m{i}b")])
        .collect();
    let x = EmbeddingMatrix::new(
        src_words.clone(),
        (0..n_forms).map(|i| bx.row(i).to_vec()).collect(),
    )
    .unwrap();
    let z = EmbeddingMatrix::new(
        tgt_words.clone(),
        (0..n_forms).map(|i| bz.row(i).to_vec()).collect(),
    )
    .unwrap();

    let paths = EmbeddingPaths {
        src_emb: dir.join("src_emb.txt"),
        tgt_emb: dir.join("tgt_emb.txt"),
        seed_dict: dir.join("seed.tsv"),
        gold: dir.join("gold.tsv"),
        tgt_paradigms: dir.join("gold_tgt_paradigms.tsv"),
    };
    let mut buf = Vec::new();
    x.write(&mut buf).unwrap();
    fs::write(&paths.src_emb, buf).unwrap();
    let mut buf = Vec::new();
    z.write(&mut buf).unwrap();
    fs::write(&paths.tgt_emb, buf).unwrap();

    let mut seed_text = String::new();
    for (s, t) in src_words.iter().zip(tgt_words.iter()).take(5) {
        seed_text.push_str(&format!("{s}\t{t}\n"));
    }
    fs::write(&paths.seed_dict, seed_text).unwrap();

    let mut gold = String::new();
    let mut paradigms = String::new();
    for i in 0..n_lemmata {
        gold.push_str(&format!("l{i}a\tm{i}a\tl{i}\tm{i}\tN;SG\n"));
        gold.push_str(&format!("l{i}b\tm{i}b\tl{i}\tm{i}\tN;PL\n"));
        paradigms.push_str(&format!("m{i}\tm{i}a\tN;SG\n"));
        paradigms.push_str(&format!("m{i}\tm{i}b\tN;PL\n"));
    }
    fs::write(&paths.gold, gold).unwrap();
    fs::write(&paths.tgt_paradigms, paradigms).unwrap();
    paths
}

/// All files of a directory except `manifest.json`, as (name, bytes).
pub fn output_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .filter(|e| e.file_type().unwrap().is_file())
        .map(|e| {
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .filter(|(name, _)| name != "manifest.json")
        .collect();
    files.sort_by(|a, b| a.0.cmp(&b.0));
    files
}

/// The `outputs` digest map recorded in a run's manifest.
pub fn manifest_outputs(dir: &Path) -> serde_json::Value {
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.join("manifest.json")).unwrap()).unwrap();
    manifest["outputs"].clone()
}
