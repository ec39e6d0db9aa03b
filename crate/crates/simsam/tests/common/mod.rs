#![allow(dead_code)]

use std::path::{Path, PathBuf};

use simsam::core::ImageShape;
use simsam::dataset::CorpusSpec;

pub fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn demo(name: &str) -> PathBuf {
    repo_root().join("demo").join(name)
}

pub fn golden_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

/// Compares `actual` with a checked-in golden file. A missing file is written
/// on the first run; `SIMSAM_BLESS=1` rewrites it.
pub fn check_golden(name: &str, actual: &[u8]) {
    let path = golden_path(name);
    if std::env::var_os("SIMSAM_BLESS").is_some() || !path.exists() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read(&path).unwrap();
    assert!(
        expected == actual,
        "{} differs from the current output; rerun with SIMSAM_BLESS=1 if the change is intended",
        path.display()
    );
}

pub fn corpus(count: usize, size: usize, seed: u64) -> CorpusSpec {
    CorpusSpec { count, shape: ImageShape::new(size, size).unwrap(), noise_amplitude: 0.8, seed }
}

/// Writes an evaluation config next to `manifest` and returns its path.
pub fn write_config(dir: &Path, manifest: &Path, methods: &[&str], split: &str, out: &str) -> PathBuf {
    let list: Vec<String> = methods.iter().map(|m| format!("\"{m}\"")).collect();
    let text = format!(
        "methods = [{}]\nout_dir = \"{out}\"\n\n[dataset]\nmanifest = \"{}\"\nsplit = \"{split}\"\n",
        list.join(", "),
        manifest.display()
    );
    let path = dir.join(format!("{out}.toml"));
    std::fs::write(&path, text).unwrap();
    path
}
