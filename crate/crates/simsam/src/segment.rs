//! Single-image segmentation with all intermediate masks written to disk.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;
use simsam_core::pipeline::{self, Aggregation, ClickSource, PipelineConfig, Timing};
use simsam_core::{bbox_from_mask, BoundingBox, ClickLabel, SegmenterPrompt};

use crate::backend::{Backend, BackendConfig};
use crate::clock::SystemClock;
use crate::container;
use crate::error::{Error, Result};
use crate::io;

/// `r0,c0,r1,c1`, inclusive.
pub fn parse_box(s: &str) -> Result<BoundingBox> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| usize::from_str(p.trim()))
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Config(format!("box `{s}`: {e}")))?;
    match parts[..] {
        [r0, c0, r1, c1] => Ok(BoundingBox::new(r0, c0, r1, c1)?),
        _ => Err(Error::Config(format!("box `{s}` needs four comma-separated values"))),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BoxSource {
    Explicit(BoundingBox),
    /// Tight box around a mask file's foreground.
    FromMask(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentArgs {
    pub image: PathBuf,
    pub bbox: BoxSource,
    /// Scene descriptor for the synthetic backend.
    pub scene: Option<PathBuf>,
    pub backend: BackendConfig,
    pub pipeline: PipelineConfig,
    pub out: PathBuf,
    pub write_candidates: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClickRecord {
    pub row: usize,
    pub col: usize,
    pub label: &'static str,
    /// Mean IoU to the candidate pool, when the medoid ran.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SegmentSummary {
    pub bbox: [usize; 4],
    pub foreground: usize,
    pub medoid_index: Option<usize>,
    pub candidates: Vec<ClickRecord>,
    pub encodes: u64,
    pub decodes: u64,
    pub timing_ms: TimingRecord,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TimingRecord {
    pub encode: f64,
    pub baseline_decode: f64,
    pub candidate_decode: f64,
    pub aggregation: f64,
    pub total: f64,
}

impl From<Timing> for TimingRecord {
    fn from(t: Timing) -> Self {
        Self {
            encode: t.encode_ms,
            baseline_decode: t.baseline_decode_ms,
            candidate_decode: t.candidate_decode_ms,
            aggregation: t.aggregation_ms,
            total: t.total_ms(),
        }
    }
}

pub fn label_name(l: ClickLabel) -> &'static str {
    match l {
        ClickLabel::Positive => "positive",
        ClickLabel::Negative => "negative",
    }
}

pub fn parse_aggregation(s: &str) -> Result<Aggregation> {
    match s {
        "medoid" => Ok(Aggregation::Medoid),
        "mean" | "pixel_mean" => Ok(Aggregation::PixelMean),
        "none" => Ok(Aggregation::None),
        _ => Err(Error::Config(format!("unknown aggregation `{s}` (medoid, mean, none)"))),
    }
}

pub fn parse_click_source(s: &str, seed: u64) -> Result<ClickSource> {
    match s {
        "topk" | "top_k" => Ok(ClickSource::TopK),
        "random" => Ok(ClickSource::Random { seed }),
        _ => Err(Error::Config(format!("unknown click source `{s}` (topk, random)"))),
    }
}

/// Writes `final.png`, `union.png`, `overlay.png`, `baseline.png` (baseline
/// probabilities), `final.simm`, `result.json` and, if asked,
/// `candidates/candidate_NNN.png`.
pub fn cmd_segment(args: &SegmentArgs) -> Result<SegmentSummary> {
    let image = io::load_image(&args.image)?;
    let bbox = match &args.bbox {
        BoxSource::Explicit(b) => *b,
        BoxSource::FromMask(p) => bbox_from_mask(&io::load_mask(p)?)?,
    };
    let backend = Backend::load(&args.backend)?;
    let segmenter = backend.for_scene(args.scene.as_deref())?;
    let prompt = SegmenterPrompt::from_box(bbox);
    let out = pipeline::run(segmenter.as_ref(), &image, &prompt, &args.pipeline, &SystemClock::new())?;

    let dir = &args.out;
    mkdir(dir)?;
    io::save_mask(&dir.join("final.png"), &out.final_mask)?;
    io::save_mask(&dir.join("union.png"), &out.union)?;
    io::save_probability(&dir.join("baseline.png"), &out.baseline)?;
    io::overlay(&image, &out.final_mask, &out.union)?
        .save(dir.join("overlay.png"))
        .map_err(|e| Error::image(dir.join("overlay.png"), e))?;
    container::write_mask(&dir.join("final.simm"), &out.final_mask)?;
    if args.write_candidates && !out.candidates.is_empty() {
        let cdir = dir.join("candidates");
        mkdir(&cdir)?;
        for (i, m) in out.candidates.bin_masks().iter().enumerate() {
            io::save_mask(&cdir.join(format!("candidate_{i:03}.png")), m)?;
        }
    }

    let scores = out.medoid.as_ref().map(|m| m.scores.as_slice());
    let summary = SegmentSummary {
        bbox: [bbox.row_min, bbox.col_min, bbox.row_max, bbox.col_max],
        foreground: out.final_mask.count(),
        medoid_index: out.medoid.as_ref().map(|m| m.index),
        candidates: out
            .candidates
            .clicks()
            .iter()
            .enumerate()
            .map(|(i, c)| ClickRecord {
                row: c.row,
                col: c.col,
                label: label_name(c.label),
                score: scores.map(|s| s[i]),
            })
            .collect(),
        encodes: out.call_counts.0,
        decodes: out.call_counts.1,
        timing_ms: out.timing.into(),
    };
    let p = dir.join("result.json");
    let text = serde_json::to_string_pretty(&summary).map_err(|e| Error::json("result", e))?;
    std::fs::write(&p, text + "\n").map_err(|e| Error::io(&p, e))?;
    Ok(summary)
}

fn mkdir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}
