//! Click-simulation refinement for promptable segmenters.
//!
//! A promptable segmenter is run once with a bounding box. Its own per-pixel
//! uncertainty is turned into a distribution over likely correction clicks,
//! the most likely `K` clicks are each fed back as an extra prompt, and the
//! candidate mask with the highest mean IoU to the rest of the pool is
//! returned.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, dataset handling,
//! the evaluation harness and the HTTP service live in the `simsam` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(any(feature = "std", test))]
extern crate std;

mod error;

pub mod mask;
pub mod metrics;
pub mod pipeline;
pub mod rle;
pub mod segmenter;
pub mod stats;
pub mod synthetic;

pub use error::{Error, Result};
pub use mask::{
    bbox_from_mask, error_transform, mask_union, random_clicks, threshold, top_k_clicks, BinaryMask, BoundingBox,
    ClickLabel, ClickPrompt, ErrorProbabilityMap, ImageShape, ProbabilityMask,
};
pub use metrics::{dsc, error_mask, extract_surface, iou, nsd, NsdConfig, SurfaceSet};
pub use pipeline::{
    aggregate_medoid, aggregate_pixel_mean, generate_candidates, run, select_medoid, Aggregation, CandidateSet,
    ClickSource, Clock, MedoidSelection, NoClock, PipelineConfig, RunOutput, Timing,
};
pub use segmenter::{ImageEmbedding, PixelGrid, Segmenter, SegmenterPrompt};
pub use stats::{mean_std, wilcoxon_signed_rank, MeanStd, PairedSample, WilcoxonMode, WilcoxonResult};
pub use synthetic::{SceneParams, SyntheticScene, SyntheticSegmenter};
