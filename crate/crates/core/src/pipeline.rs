//! Baseline decode, click simulation, candidate generation and aggregation.
//!
//! For an image and a box prompt:
//!
//! 1. decode the box alone to get the baseline probability map `p0`;
//! 2. turn `p0` into per-pixel error probabilities and pick `K` clicks
//!    (the most likely errors, or uniformly random pixels for the ablation);
//! 3. decode `box + click_k` for every click, giving `K` candidate masks;
//! 4. return the candidate with the highest mean IoU to the whole pool
//!    (or, for the ablation, the thresholded pixel-wise mean).

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::mask::{
    error_transform, mask_union, random_clicks, threshold, top_k_clicks, BinaryMask, ClickPrompt, ProbabilityMask,
};
use crate::metrics::iou;
use crate::segmenter::{ImageEmbedding, PixelGrid, Segmenter, SegmenterPrompt};

pub const DEFAULT_K: usize = 50;
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ClickSource {
    TopK,
    Random { seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Aggregation {
    Medoid,
    PixelMean,
    /// Box-only baseline: no clicks are simulated.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    pub k: usize,
    pub click_source: ClickSource,
    pub aggregation: Aggregation,
    pub threshold: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            click_source: ClickSource::TopK,
            aggregation: Aggregation::Medoid,
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

impl PipelineConfig {
    pub fn baseline() -> Self {
        Self { aggregation: Aggregation::None, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::InvalidArgument(format!("threshold {} must lie in (0, 1)", self.threshold)));
        }
        Ok(())
    }
}

/// The `K` click-conditioned predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    clicks: Vec<ClickPrompt>,
    prob_masks: Vec<ProbabilityMask>,
    bin_masks: Vec<BinaryMask>,
}

impl CandidateSet {
    pub fn new(clicks: Vec<ClickPrompt>, prob_masks: Vec<ProbabilityMask>, threshold_at: f64) -> Result<Self> {
        if clicks.len() != prob_masks.len() {
            return Err(Error::LengthMismatch { expected: clicks.len(), actual: prob_masks.len() });
        }
        if let Some(first) = prob_masks.first() {
            for p in &prob_masks[1..] {
                first.shape().expect_same(&p.shape())?;
            }
        }
        let bin_masks = prob_masks.iter().map(|p| threshold(p, threshold_at)).collect::<Result<_>>()?;
        Ok(Self { clicks, prob_masks, bin_masks })
    }

    pub fn empty() -> Self {
        Self { clicks: Vec::new(), prob_masks: Vec::new(), bin_masks: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.clicks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clicks.is_empty()
    }

    pub fn clicks(&self) -> &[ClickPrompt] {
        &self.clicks
    }

    pub fn prob_masks(&self) -> &[ProbabilityMask] {
        &self.prob_masks
    }

    pub fn bin_masks(&self) -> &[BinaryMask] {
        &self.bin_masks
    }
}

/// Simulated clicks for a baseline prediction.
pub fn simulate_clicks(baseline: &ProbabilityMask, cfg: &PipelineConfig) -> Result<Vec<ClickPrompt>> {
    match cfg.click_source {
        ClickSource::TopK => top_k_clicks(&error_transform(baseline), baseline, cfg.k),
        ClickSource::Random { seed } => random_clicks(baseline.shape(), baseline, cfg.k, seed),
    }
}

/// Decodes `prompt + click` for every click, in click order.
pub fn decode_candidates(
    segmenter: &dyn Segmenter,
    emb: &ImageEmbedding,
    prompt: &SegmenterPrompt,
    clicks: Vec<ClickPrompt>,
    threshold_at: f64,
) -> Result<CandidateSet> {
    let probs =
        clicks.iter().map(|&click| segmenter.decode(emb, &prompt.with_click(click))).collect::<Result<Vec<_>>>()?;
    CandidateSet::new(clicks, probs, threshold_at)
}

/// Baseline decode plus the candidate set it induces.
#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub baseline: ProbabilityMask,
    pub candidates: CandidateSet,
}

/// Decodes the base prompt, simulates `cfg.k` clicks from its uncertainty and
/// decodes one candidate per click. Every candidate prompt keeps the base
/// prompt's box and clicks.
pub fn generate_candidates(
    segmenter: &dyn Segmenter,
    emb: &ImageEmbedding,
    prompt: &SegmenterPrompt,
    cfg: &PipelineConfig,
) -> Result<Generated> {
    cfg.validate()?;
    let baseline = segmenter.decode(emb, prompt)?;
    let clicks = simulate_clicks(&baseline, cfg)?;
    let candidates = decode_candidates(segmenter, emb, prompt, clicks, cfg.threshold)?;
    Ok(Generated { baseline, candidates })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MedoidSelection {
    pub index: usize,
    /// Mean IoU of each candidate to every candidate, itself included.
    pub scores: Vec<f64>,
}

/// Scores every candidate by its mean IoU to the pool and picks the best,
/// preferring the lowest index on exact ties.
pub fn select_medoid(cands: &CandidateSet) -> Result<MedoidSelection> {
    let masks = cands.bin_masks();
    let k = masks.len();
    if k == 0 {
        return Err(Error::EmptyInput);
    }
    let mut pair = vec![0.0f64; k * k];
    for i in 0..k {
        pair[i * k + i] = 1.0;
        for j in i + 1..k {
            let v = iou(&masks[i], &masks[j])?;
            pair[i * k + j] = v;
            pair[j * k + i] = v;
        }
    }
    let scores: Vec<f64> = (0..k).map(|i| pair[i * k..(i + 1) * k].iter().sum::<f64>() / k as f64).collect();
    let mut index = 0;
    for (i, s) in scores.iter().enumerate().skip(1) {
        if *s > scores[index] {
            index = i;
        }
    }
    Ok(MedoidSelection { index, scores })
}

/// The candidate most similar, on average, to the whole pool.
pub fn aggregate_medoid(cands: &CandidateSet) -> Result<BinaryMask> {
    let sel = select_medoid(cands)?;
    Ok(cands.bin_masks()[sel.index].clone())
}

/// Pixel-wise mean of the candidate probability maps, thresholded.
pub fn aggregate_pixel_mean(cands: &CandidateSet, threshold_at: f64) -> Result<BinaryMask> {
    let (first, rest) = cands.prob_masks().split_first().ok_or(Error::EmptyInput)?;
    let mut sum = first.values().to_vec();
    for p in rest {
        for (acc, v) in sum.iter_mut().zip(p.values()) {
            *acc += v;
        }
    }
    let k = cands.len() as f64;
    let mean = sum.into_iter().map(|s| (s / k).clamp(0.0, 1.0)).collect();
    threshold(&ProbabilityMask::new(first.shape(), mean)?, threshold_at)
}

/// Millisecond wall clock supplied by the caller.
pub trait Clock {
    fn now_ms(&self) -> f64;
}

/// A clock that always reads zero, for callers that do not need timings.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn now_ms(&self) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Timing {
    pub encode_ms: f64,
    pub baseline_decode_ms: f64,
    pub candidate_decode_ms: f64,
    pub aggregation_ms: f64,
}

impl Timing {
    pub fn total_ms(&self) -> f64 {
        self.encode_ms + self.baseline_decode_ms + self.candidate_decode_ms + self.aggregation_ms
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub final_mask: BinaryMask,
    pub baseline: ProbabilityMask,
    /// Empty for the box-only baseline.
    pub candidates: CandidateSet,
    /// Union of all candidates (the baseline mask when there are none).
    pub union: BinaryMask,
    /// Present when the medoid aggregation ran.
    pub medoid: Option<MedoidSelection>,
    pub timing: Timing,
    /// `(encode calls, decode calls)` on the embedding used.
    pub call_counts: (u64, u64),
}

/// Encodes `image` once and runs the configured method.
pub fn run(
    segmenter: &dyn Segmenter,
    image: &PixelGrid,
    prompt: &SegmenterPrompt,
    cfg: &PipelineConfig,
    clock: &dyn Clock,
) -> Result<RunOutput> {
    cfg.validate()?;
    prompt.validate(image.shape())?;
    let t0 = clock.now_ms();
    let emb = segmenter.encode(image)?;
    let t1 = clock.now_ms();
    let mut out = run_with_embedding(segmenter, &emb, prompt, cfg, clock)?;
    out.timing.encode_ms = t1 - t0;
    Ok(out)
}

/// Runs the configured method on an existing embedding (encode time is 0).
pub fn run_with_embedding(
    segmenter: &dyn Segmenter,
    emb: &ImageEmbedding,
    prompt: &SegmenterPrompt,
    cfg: &PipelineConfig,
    clock: &dyn Clock,
) -> Result<RunOutput> {
    cfg.validate()?;
    let mut timing = Timing::default();
    let t0 = clock.now_ms();
    let baseline = segmenter.decode(emb, prompt)?;
    let t1 = clock.now_ms();
    timing.baseline_decode_ms = t1 - t0;

    if cfg.aggregation == Aggregation::None {
        let t2 = clock.now_ms();
        let final_mask = threshold(&baseline, cfg.threshold)?;
        timing.aggregation_ms = clock.now_ms() - t2;
        return Ok(RunOutput {
            union: final_mask.clone(),
            final_mask,
            baseline,
            candidates: CandidateSet::empty(),
            medoid: None,
            timing,
            call_counts: emb.call_counts(),
        });
    }

    let clicks = simulate_clicks(&baseline, cfg)?;
    let candidates = decode_candidates(segmenter, emb, prompt, clicks, cfg.threshold)?;
    let t2 = clock.now_ms();
    timing.candidate_decode_ms = t2 - t1;

    let (final_mask, medoid) = match cfg.aggregation {
        Aggregation::Medoid => {
            let sel = select_medoid(&candidates)?;
            (candidates.bin_masks()[sel.index].clone(), Some(sel))
        }
        Aggregation::PixelMean => (aggregate_pixel_mean(&candidates, cfg.threshold)?, None),
        Aggregation::None => unreachable!("handled above"),
    };
    let union = mask_union(candidates.bin_masks())?;
    timing.aggregation_ms = clock.now_ms() - t2;
    Ok(RunOutput { final_mask, baseline, candidates, union, medoid, timing, call_counts: emb.call_counts() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::{BoundingBox, ClickLabel, ImageShape};

    fn shape() -> ImageShape {
        ImageShape::new(4, 4).unwrap()
    }

    fn set_of(masks: &[BinaryMask]) -> CandidateSet {
        let probs = masks
            .iter()
            .map(|m| {
                ProbabilityMask::new(m.shape(), m.to_bools().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect())
                    .unwrap()
            })
            .collect::<Vec<_>>();
        let clicks = vec![ClickPrompt::new(0, 0, ClickLabel::Positive); masks.len()];
        CandidateSet::new(clicks, probs, 0.5).unwrap()
    }

    #[test]
    fn medoid_single() {
        let a = BinaryMask::from_fn(shape(), |r, _| r < 2);
        assert_eq!(aggregate_medoid(&set_of(core::slice::from_ref(&a))).unwrap(), a);
    }

    #[test]
    fn medoid_majority() {
        let a = BinaryMask::from_fn(shape(), |r, _| r < 2);
        let b = BinaryMask::from_fn(shape(), |r, c| r < 2 && c < 2);
        let sel = select_medoid(&set_of(&[b.clone(), a.clone(), a.clone()])).unwrap();
        assert_eq!(sel.index, 1);
        assert_eq!(aggregate_medoid(&set_of(&[a.clone(), a.clone(), b])).unwrap(), a);
    }

    #[test]
    fn medoid_tie_prefers_first() {
        let a = BinaryMask::from_fn(shape(), |r, _| r == 0);
        let b = BinaryMask::from_fn(shape(), |r, _| r == 3);
        assert_eq!(select_medoid(&set_of(&[a, b])).unwrap().index, 0);
    }

    #[test]
    fn medoid_empty_is_error() {
        assert_eq!(select_medoid(&CandidateSet::empty()), Err(Error::EmptyInput));
        assert_eq!(aggregate_pixel_mean(&CandidateSet::empty(), 0.5), Err(Error::EmptyInput));
    }

    #[test]
    fn pixel_mean_arithmetic() {
        let s = ImageShape::new(1, 1).unwrap();
        let probs = vec![ProbabilityMask::new(s, vec![0.9]).unwrap(), ProbabilityMask::new(s, vec![0.3]).unwrap()];
        let clicks = vec![ClickPrompt::new(0, 0, ClickLabel::Positive); 2];
        let set = CandidateSet::new(clicks, probs, 0.5).unwrap();
        assert!(aggregate_pixel_mean(&set, 0.5).unwrap().get(0, 0));
        assert!(!aggregate_pixel_mean(&set, 0.65).unwrap().get(0, 0));
    }

    #[test]
    fn pixel_mean_of_identical() {
        let a = BinaryMask::from_fn(shape(), |r, c| r == c);
        assert_eq!(aggregate_pixel_mean(&set_of(&[a.clone(), a.clone(), a.clone()]), 0.5).unwrap(), a);
    }

    #[test]
    fn candidate_set_checks_lengths() {
        let p = ProbabilityMask::filled(shape(), 0.2).unwrap();
        assert!(CandidateSet::new(vec![], vec![p], 0.5).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(PipelineConfig { k: 0, ..PipelineConfig::default() }.validate().is_err());
        assert!(PipelineConfig { threshold: 1.0, ..PipelineConfig::default() }.validate().is_err());
        assert!(PipelineConfig::default().validate().is_ok());
        assert_eq!(PipelineConfig::default().k, 50);
    }

    #[test]
    fn box_prompt_round_trip() {
        let b = BoundingBox::full(shape());
        assert_eq!(SegmenterPrompt::from_box(b).bbox, Some(b));
    }
}
