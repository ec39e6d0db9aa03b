//! Dataset manifests, seeded splits and the synthetic corpus generator.
//!
//! A manifest is a JSON-lines file, one entry per line:
//!
//! ```text
//! {"image": "images/a.png", "mask": "masks/a.png", "split": "test"}
//! ```
//!
//! `split`, `id` and `scene` are optional. Paths are relative to the
//! manifest's directory.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use simsam_core::{BinaryMask, ImageShape, SceneParams};

use crate::error::{Error, Result};
use crate::io;
use crate::scene::{Primitive, SceneDescriptor};

pub const MANIFEST_FILE: &str = "manifest.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    #[serde(alias = "validation")]
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ManifestLine {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    id: Option<String>,
    image: String,
    mask: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    split: Option<Split>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scene: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub id: String,
    pub image: PathBuf,
    pub mask: PathBuf,
    pub split: Option<Split>,
    /// Synthetic scene descriptor that produced this entry, if any.
    pub scene: Option<PathBuf>,
}

impl Entry {
    pub fn load_mask(&self) -> Result<BinaryMask> {
        io::load_mask(&self.mask)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rejection {
    pub line: usize,
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub name: String,
    pub entries: Vec<Entry>,
    pub split_seed: Option<u64>,
    /// Entries dropped at load time.
    pub rejected: Vec<Rejection>,
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn subset(&self, entries: Vec<Entry>) -> Self {
        Self { name: self.name.clone(), entries, split_seed: self.split_seed, rejected: Vec::new() }
    }
}

/// Reads and validates a manifest. Entries whose mask has no foreground are
/// dropped with a warning; missing or unreadable files are errors.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut lines = Vec::new();
    for (no, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed: ManifestLine =
            serde_json::from_str(line).map_err(|e| Error::json(format!("{}:{}", path.display(), no + 1), e))?;
        lines.push((no + 1, parsed));
    }

    let checked: Vec<Result<std::result::Result<Entry, Rejection>>> =
        lines.into_par_iter().map(|(no, l)| check_line(base, no, l)).collect();

    let mut entries = Vec::new();
    let mut rejected = Vec::new();
    let mut seen = HashSet::new();
    for r in checked {
        match r? {
            Ok(e) => {
                if !seen.insert(e.id.clone()) {
                    return Err(Error::Dataset(format!("duplicate entry id `{}`", e.id)));
                }
                entries.push(e);
            }
            Err(rej) => {
                log::warn!("{}: line {} ({}) rejected: {}", path.display(), rej.line, rej.id, rej.reason);
                rejected.push(rej);
            }
        }
    }
    let name = path
        .parent()
        .and_then(|p| p.file_name())
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into());
    Ok(DatasetManifest { name, entries, split_seed: None, rejected })
}

fn check_line(base: &Path, no: usize, l: ManifestLine) -> Result<std::result::Result<Entry, Rejection>> {
    let image = base.join(&l.image);
    let mask = base.join(&l.mask);
    let id = l.id.clone().unwrap_or_else(|| {
        Path::new(&l.image).file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
    });
    for p in [&image, &mask] {
        if !p.is_file() {
            return Err(Error::Dataset(format!("line {no}: missing file {}", p.display())));
        }
    }
    let (w, h) = image::image_dimensions(&image).map_err(|e| Error::image(&image, e))?;
    let m = io::load_mask(&mask)?;
    if (m.shape().height(), m.shape().width()) != (h as usize, w as usize) {
        return Err(Error::Dataset(format!("line {no}: mask is {} but the image is {h}x{w}", m.shape())));
    }
    if m.is_empty() {
        return Ok(Err(Rejection { line: no, id, reason: "mask has no foreground".into() }));
    }
    let scene = l.scene.map(|s| base.join(s));
    if let Some(s) = &scene {
        if !s.is_file() {
            return Err(Error::Dataset(format!("line {no}: missing file {}", s.display())));
        }
    }
    Ok(Ok(Entry { id, image, mask, split: l.split, scene }))
}

/// Train/validation fractions; test takes the remainder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train: f64,
    pub validation: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub const MIN_ENTRIES: usize = 10;

    pub fn new(seed: u64) -> Self {
        Self { train: 0.8, validation: 0.1, seed }
    }

    pub fn test(&self) -> f64 {
        1.0 - self.train - self.validation
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: DatasetManifest,
    pub validation: DatasetManifest,
    pub test: DatasetManifest,
}

impl Splits {
    pub fn get(&self, which: Split) -> &DatasetManifest {
        match which {
            Split::Train => &self.train,
            Split::Val => &self.validation,
            Split::Test => &self.test,
        }
    }
}

/// Seeded shuffle, then contiguous partition of sizes `floor(train * n)`,
/// `floor(validation * n)` and the remainder.
pub fn split(manifest: &DatasetManifest, spec: &SplitSpec) -> Result<Splits> {
    let n = manifest.len();
    if n < SplitSpec::MIN_ENTRIES {
        return Err(Error::Dataset(format!("cannot split {n} entries, need at least {}", SplitSpec::MIN_ENTRIES)));
    }
    let ok = |f: f64| f.is_finite() && (0.0..=1.0).contains(&f);
    if !ok(spec.train) || !ok(spec.validation) || spec.test() < -1e-12 {
        return Err(Error::Config(format!(
            "split fractions {} / {} do not leave a valid test share",
            spec.train, spec.validation
        )));
    }
    // The epsilon keeps 0.8 * 100 at 80 despite binary rounding.
    let size = |f: f64| ((f * n as f64) + 1e-9).floor() as usize;
    let n_train = size(spec.train);
    let n_val = size(spec.validation).min(n - n_train);

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(spec.seed));
    let pick = |idx: &[usize]| {
        let mut m = manifest.subset(idx.iter().map(|&i| manifest.entries[i].clone()).collect());
        m.split_seed = Some(spec.seed);
        m
    };
    Ok(Splits {
        train: pick(&order[..n_train]),
        validation: pick(&order[n_train..n_train + n_val]),
        test: pick(&order[n_train + n_val..]),
    })
}

/// Partition by the entries' own split tags. Fails if any entry lacks one.
pub fn split_by_tags(manifest: &DatasetManifest) -> Result<Splits> {
    let mut parts = [Vec::new(), Vec::new(), Vec::new()];
    for e in &manifest.entries {
        let slot = match e.split {
            Some(Split::Train) => 0,
            Some(Split::Val) => 1,
            Some(Split::Test) => 2,
            None => return Err(Error::Dataset(format!("entry `{}` has no split tag", e.id))),
        };
        parts[slot].push(e.clone());
    }
    let [train, validation, test] = parts;
    Ok(Splits { train: manifest.subset(train), validation: manifest.subset(validation), test: manifest.subset(test) })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorpusSpec {
    pub count: usize,
    pub shape: ImageShape,
    pub noise_amplitude: f64,
    pub seed: u64,
}

/// Random union of one to three ellipses near the image centre.
fn random_shapes(rng: &mut ChaCha8Rng, shape: ImageShape) -> Vec<Primitive> {
    let (h, w) = (shape.height() as f64, shape.width() as f64);
    let side = h.min(w);
    let n = rng.random_range(1..=3);
    (0..n)
        .map(|j| {
            let jitter = 0.125 * side;
            let (mut cy, mut cx) = (rng.random_range(0.35..0.65) * h, rng.random_range(0.35..0.65) * w);
            if j > 0 {
                cy += rng.random_range(-jitter..jitter);
                cx += rng.random_range(-jitter..jitter);
            }
            // Radii of at least one pixel guarantee the nearest pixel to the
            // centre is inside.
            let a = (rng.random_range(0.12..0.25) * side).max(1.0);
            let b = (rng.random_range(0.12..0.25) * side).max(1.0);
            let angle = rng.random_range(0.0..std::f64::consts::PI);
            Primitive::Ellipse { center: [cy, cx], radii: [a, b], angle }
        })
        .collect()
}

/// The scene descriptors a corpus spec expands to, without touching disk.
pub fn corpus_scenes(spec: &CorpusSpec) -> Vec<SceneDescriptor> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    (0..spec.count)
        .map(|_| {
            let shapes = random_shapes(&mut rng, spec.shape);
            let params = SceneParams {
                noise_amplitude: spec.noise_amplitude,
                noise_seed: rng.random(),
                ..SceneParams::default()
            };
            SceneDescriptor { height: spec.shape.height(), width: spec.shape.width(), shapes, oracle: params.into() }
        })
        .collect()
}

/// Writes `count` scenes under `out` (`images/`, `masks/`, `scenes/` and
/// `manifest.jsonl`) and returns the loaded manifest. Output bytes depend only
/// on the spec.
pub fn synth_corpus(spec: &CorpusSpec, out: &Path) -> Result<DatasetManifest> {
    if spec.count == 0 {
        return Err(Error::Config("corpus count must be at least 1".into()));
    }
    if !(spec.noise_amplitude.is_finite() && spec.noise_amplitude >= 0.0) {
        return Err(Error::Config(format!("noise amplitude {} must be >= 0", spec.noise_amplitude)));
    }
    for d in ["images", "masks", "scenes"] {
        let p = out.join(d);
        std::fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
    }
    let width = (spec.count - 1).to_string().len().max(4);
    let scenes = corpus_scenes(spec);
    let lines: Vec<Result<String>> = scenes
        .par_iter()
        .enumerate()
        .map(|(i, desc)| {
            let stem = format!("scene_{i:0width$}");
            let scene = desc.build()?;
            let image = format!("images/{stem}.png");
            let mask = format!("masks/{stem}.png");
            let scene_file = format!("scenes/{stem}.json");
            io::save_image(&out.join(&image), &scene.render())?;
            io::save_mask(&out.join(&mask), &scene.true_mask)?;
            let p = out.join(&scene_file);
            std::fs::write(&p, desc.to_json() + "\n").map_err(|e| Error::io(&p, e))?;
            let line = ManifestLine { id: Some(stem), image, mask, split: None, scene: Some(scene_file) };
            Ok(serde_json::to_string(&line).expect("manifest lines always serialize"))
        })
        .collect();
    let mut text = String::new();
    for l in lines {
        writeln!(text, "{}", l?).unwrap();
    }
    let path = out.join(MANIFEST_FILE);
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    load_manifest(&path)
}
