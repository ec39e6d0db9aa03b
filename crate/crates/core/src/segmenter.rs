//! Promptable segmenter abstraction with an encode-once / decode-per-prompt
//! split.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::any::Any;
use core::fmt;
use core::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::mask::{BoundingBox, ClickPrompt, ImageShape, ProbabilityMask};

/// 8-bit image with 1 (grey) or 3 (RGB) interleaved channels, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelGrid {
    shape: ImageShape,
    channels: usize,
    data: Vec<u8>,
}

impl PixelGrid {
    pub fn new(shape: ImageShape, channels: usize, data: Vec<u8>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidArgument(format!("unsupported channel count {channels}")));
        }
        if data.len() != shape.len() * channels {
            return Err(Error::LengthMismatch { expected: shape.len() * channels, actual: data.len() });
        }
        Ok(Self { shape, channels, data })
    }

    pub fn gray(shape: ImageShape, data: Vec<u8>) -> Result<Self> {
        Self::new(shape, 1, data)
    }

    pub fn shape(&self) -> ImageShape {
        self.shape
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    /// Rec. 601 luma of one pixel.
    pub fn luminance(&self, index: usize) -> u8 {
        match self.channels {
            1 => self.data[index],
            _ => {
                let px = &self.data[index * 3..index * 3 + 3];
                let y = 299 * px[0] as u32 + 587 * px[1] as u32 + 114 * px[2] as u32;
                ((y + 500) / 1000) as u8
            }
        }
    }

    /// Channel `c` of pixel `index`, replicating grey images across channels.
    pub fn channel(&self, index: usize, c: usize) -> u8 {
        if self.channels == 1 {
            self.data[index]
        } else {
            self.data[index * 3 + c]
        }
    }
}

/// Box and/or clicks conditioning one decode.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SegmenterPrompt {
    pub bbox: Option<BoundingBox>,
    pub clicks: Vec<ClickPrompt>,
}

impl SegmenterPrompt {
    pub fn from_box(bbox: BoundingBox) -> Self {
        Self { bbox: Some(bbox), clicks: Vec::new() }
    }

    /// This prompt plus one more click.
    pub fn with_click(&self, click: ClickPrompt) -> Self {
        let mut out = self.clone();
        out.clicks.push(click);
        out
    }

    pub fn validate(&self, shape: ImageShape) -> Result<()> {
        if self.bbox.is_none() && self.clicks.is_empty() {
            return Err(Error::InvalidArgument("prompt needs a box or at least one click".into()));
        }
        if let Some(b) = &self.bbox {
            b.validate(shape)?;
        }
        for c in &self.clicks {
            shape.check(c.row, c.col)?;
        }
        Ok(())
    }
}

/// Encoded image, reusable for any number of decodes. Counts the encode and
/// decode calls made against it.
pub struct ImageEmbedding {
    shape: ImageShape,
    backend: String,
    payload: Box<dyn Any + Send + Sync>,
    encodes: AtomicU64,
    decodes: AtomicU64,
}

impl fmt::Debug for ImageEmbedding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ImageEmbedding")
            .field("shape", &self.shape)
            .field("backend", &self.backend)
            .field("calls", &self.call_counts())
            .finish_non_exhaustive()
    }
}

impl ImageEmbedding {
    /// Wraps a backend payload. The encode counter starts at one.
    pub fn new(shape: ImageShape, backend: impl Into<String>, payload: Box<dyn Any + Send + Sync>) -> Self {
        Self { shape, backend: backend.into(), payload, encodes: AtomicU64::new(1), decodes: AtomicU64::new(0) }
    }

    pub fn shape(&self) -> ImageShape {
        self.shape
    }

    pub fn backend(&self) -> &str {
        &self.backend
    }

    pub fn payload<T: 'static>(&self) -> Result<&T> {
        self.payload
            .downcast_ref::<T>()
            .ok_or_else(|| Error::Backend(format!("embedding was produced by backend `{}`", self.backend)))
    }

    /// `(encode calls, decode calls)` since the embedding was created.
    pub fn call_counts(&self) -> (u64, u64) {
        (self.encodes.load(Ordering::Relaxed), self.decodes.load(Ordering::Relaxed))
    }
}

/// A model that maps an image plus interaction prompts to a probability mask.
///
/// Backends implement [`encode_image`](Segmenter::encode_image) and
/// [`decode_prompt`](Segmenter::decode_prompt); callers use
/// [`encode`](Segmenter::encode) and [`decode`](Segmenter::decode), which
/// validate prompts and maintain the embedding's call counters.
pub trait Segmenter: Send + Sync {
    fn id(&self) -> &str;

    fn encode_image(&self, image: &PixelGrid) -> Result<ImageEmbedding>;

    /// Prompt coordinates are already validated against the embedding shape.
    fn decode_prompt(&self, emb: &ImageEmbedding, prompt: &SegmenterPrompt) -> Result<ProbabilityMask>;

    fn encode(&self, image: &PixelGrid) -> Result<ImageEmbedding> {
        let emb = self.encode_image(image)?;
        if emb.shape != image.shape() {
            return Err(Error::Backend(format!(
                "backend `{}` returned a {} embedding for a {} image",
                self.id(),
                emb.shape,
                image.shape()
            )));
        }
        Ok(emb)
    }

    fn decode(&self, emb: &ImageEmbedding, prompt: &SegmenterPrompt) -> Result<ProbabilityMask> {
        prompt.validate(emb.shape)?;
        emb.decodes.fetch_add(1, Ordering::Relaxed);
        let out = self.decode_prompt(emb, prompt)?;
        emb.shape.expect_same(&out.shape())?;
        Ok(out)
    }
}
