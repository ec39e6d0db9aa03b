//! Deterministic stand-in for a promptable segmenter.
//!
//! The box-only prediction is a logistic map of a blurred signed distance
//! field of the true shape, perturbed by smooth value noise, so uncertainty
//! sits on the contour. A click adds a signed Gaussian bump to the logits.
//! With `region_gated` set, the bump only reaches pixels on the same side of
//! the true contour as the click, the way a real model's response to a
//! click stops at image edges it can see.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mask::{BinaryMask, BoundingBox, ImageShape, ProbabilityMask};
use crate::metrics::{squared_edt, NO_FEATURE};
use crate::segmenter::{ImageEmbedding, PixelGrid, Segmenter, SegmenterPrompt};

pub const BACKEND_ID: &str = "synthetic";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneParams {
    /// Logit per pixel of signed distance.
    pub sdf_gain: f64,
    /// Standard deviation of the Gaussian applied to the distance field, pixels.
    pub blur_radius: f64,
    /// Peak logit perturbation of the value-noise field.
    pub noise_amplitude: f64,
    pub noise_seed: u64,
    /// Lattice spacing of the value noise, pixels.
    pub noise_scale: f64,
    /// Standard deviation of a click's Gaussian bump, pixels.
    pub influence_radius: f64,
    /// Peak logit change of a click.
    pub click_strength: f64,
    pub region_gated: bool,
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            sdf_gain: 0.12,
            blur_radius: 1.5,
            noise_amplitude: 0.8,
            noise_seed: 0,
            noise_scale: 8.0,
            influence_radius: 6.0,
            click_strength: 2.0,
            region_gated: true,
        }
    }
}

impl SceneParams {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            (self.sdf_gain > 0.0, "sdf_gain must be > 0"),
            (self.blur_radius >= 0.0, "blur_radius must be >= 0"),
            (self.noise_amplitude >= 0.0, "noise_amplitude must be >= 0"),
            (self.noise_scale >= 1.0, "noise_scale must be >= 1"),
            (self.influence_radius >= 1.0, "influence_radius must be >= 1"),
            (self.click_strength > 0.0, "click_strength must be > 0"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(Error::InvalidArgument(msg.into()));
            }
        }
        let all = [
            self.sdf_gain,
            self.blur_radius,
            self.noise_amplitude,
            self.noise_scale,
            self.influence_radius,
            self.click_strength,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("scene parameters must be finite".into()));
        }
        Ok(())
    }
}

/// A true shape plus the parameters that corrupt the oracle's view of it.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub true_mask: BinaryMask,
    pub params: SceneParams,
}

impl SyntheticScene {
    pub fn new(true_mask: BinaryMask, params: SceneParams) -> Result<Self> {
        params.validate()?;
        Ok(Self { true_mask, params })
    }

    pub fn shape(&self) -> ImageShape {
        self.true_mask.shape()
    }

    /// Box-only logits before click bumps and box restriction.
    pub fn base_logits(&self) -> Vec<f64> {
        let p = &self.params;
        let sdf = blurred_signed_distance(&self.true_mask, p.blur_radius);
        let noise = value_noise(self.shape(), p.noise_scale, p.noise_seed);
        sdf.iter().zip(&noise).map(|(d, n)| p.sdf_gain * d + p.noise_amplitude * n).collect()
    }

    /// Greyscale picture of the scene: a soft-edged rendering of the true
    /// shape. Thresholding it at 128 recovers the shape.
    pub fn render(&self) -> PixelGrid {
        let data = signed_distance(&self.true_mask)
            .iter()
            .map(|d| {
                let v = 1.0 / (1.0 + libm::exp(-1.5 * d));
                (v * 255.0 + 0.5) as u8
            })
            .collect();
        PixelGrid::gray(self.shape(), data).expect("shape matches by construction")
    }
}

/// Signed Euclidean distance between pixel centres and the shape boundary:
/// positive inside, negative outside, `±0.5` on either side of the edge.
pub fn signed_distance(mask: &BinaryMask) -> Vec<f64> {
    let shape = mask.shape();
    let far = (shape.height() + shape.width()) as f64;
    let to_fg = squared_edt(mask);
    let to_bg = squared_edt(&mask.complement());
    let dist = |d2: u64| if d2 == NO_FEATURE { far } else { libm::sqrt(d2 as f64) };
    (0..shape.len()).map(|i| if mask.get_index(i) { dist(to_bg[i]) - 0.5 } else { 0.5 - dist(to_fg[i]) }).collect()
}

/// Signed distance whose magnitude is Gaussian-blurred and whose sign is
/// kept from the mask, so the zero level set never moves off the true edge.
pub fn blurred_signed_distance(mask: &BinaryMask, sigma: f64) -> Vec<f64> {
    let sdf = signed_distance(mask);
    let magnitude: Vec<f64> = sdf.iter().map(|d| libm::fabs(*d)).collect();
    gaussian_blur(mask.shape(), &magnitude, sigma)
        .into_iter()
        .zip(&sdf)
        .map(|(m, d)| if *d > 0.0 { m } else { -m })
        .collect()
}

/// Separable Gaussian blur with clamped edges. `sigma == 0` is the identity.
pub fn gaussian_blur(shape: ImageShape, values: &[f64], sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return values.to_vec();
    }
    let radius = libm::ceil(3.0 * sigma) as isize;
    let kernel: Vec<f64> = (-radius..=radius).map(|i| libm::exp(-((i * i) as f64) / (2.0 * sigma * sigma))).collect();
    let norm: f64 = kernel.iter().sum();
    let (h, w) = (shape.height() as isize, shape.width() as isize);
    let pass = |src: &[f64], horizontal: bool| -> Vec<f64> {
        let mut out = vec![0.0; src.len()];
        for r in 0..h {
            for c in 0..w {
                let mut acc = 0.0;
                for (k, weight) in kernel.iter().enumerate() {
                    let off = k as isize - radius;
                    let (rr, cc) =
                        if horizontal { (r, (c + off).clamp(0, w - 1)) } else { ((r + off).clamp(0, h - 1), c) };
                    acc += weight * src[(rr * w + cc) as usize];
                }
                out[(r * w + c) as usize] = acc / norm;
            }
        }
        out
    };
    pass(&pass(values, true), false)
}

/// Two-octave value noise in roughly `[-1, 1]`, smoothstep-interpolated.
pub fn value_noise(shape: ImageShape, scale: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut octave = |spacing: f64| -> Vec<f64> {
        let gh = libm::ceil(shape.height() as f64 / spacing) as usize + 2;
        let gw = libm::ceil(shape.width() as f64 / spacing) as usize + 2;
        let lattice: Vec<f64> = (0..gh * gw).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let mut out = Vec::with_capacity(shape.len());
        for r in 0..shape.height() {
            let y = r as f64 / spacing;
            let (y0, ty) = (libm::floor(y) as usize, smoothstep(y - libm::floor(y)));
            for c in 0..shape.width() {
                let x = c as f64 / spacing;
                let (x0, tx) = (libm::floor(x) as usize, smoothstep(x - libm::floor(x)));
                let at = |yy: usize, xx: usize| lattice[yy * gw + xx];
                let top = at(y0, x0) * (1.0 - tx) + at(y0, x0 + 1) * tx;
                let bottom = at(y0 + 1, x0) * (1.0 - tx) + at(y0 + 1, x0 + 1) * tx;
                out.push(top * (1.0 - ty) + bottom * ty);
            }
        }
        out
    };
    let coarse = octave(scale);
    let fine = octave((scale / 2.0).max(1.0));
    coarse.iter().zip(&fine).map(|(a, b)| (2.0 * a + b) / 3.0).collect()
}

fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-x))
}

/// Everything a decode needs that does not depend on the prompt.
struct SyntheticEmbedding {
    truth: BinaryMask,
    base_logits: Vec<f64>,
    /// `sigmoid(base_logits)`, used wherever no click reaches.
    base_probs: Vec<f64>,
    /// Click bump of unit height on a `(2 * reach + 1)^2` window.
    kernel: Vec<f64>,
    reach: usize,
    params: SceneParams,
}

impl SyntheticEmbedding {
    fn new(scene: SyntheticScene) -> Self {
        let base_logits = scene.base_logits();
        let base_probs = base_logits.iter().map(|&l| sigmoid(l)).collect();
        let sigma = scene.params.influence_radius;
        let reach = libm::ceil(3.0 * sigma) as usize;
        let side = 2 * reach + 1;
        let kernel = (0..side * side)
            .map(|i| {
                let dr = (i / side) as f64 - reach as f64;
                let dc = (i % side) as f64 - reach as f64;
                libm::exp(-(dr * dr + dc * dc) / (2.0 * sigma * sigma))
            })
            .collect();
        Self { truth: scene.true_mask, base_logits, base_probs, kernel, reach, params: scene.params }
    }
}

#[derive(Debug, Clone)]
enum TruthSource {
    Scene(SyntheticScene),
    /// Foreground is wherever image luminance is at least 128.
    Luminance(SceneParams),
}

/// Synthetic oracle backend.
#[derive(Debug, Clone)]
pub struct SyntheticSegmenter {
    source: TruthSource,
}

impl SyntheticSegmenter {
    /// Segments exactly this scene; the image passed to `encode` only has to
    /// match its shape.
    pub fn for_scene(scene: SyntheticScene) -> Self {
        Self { source: TruthSource::Scene(scene) }
    }

    /// Takes the true shape from the image itself (luminance >= 128).
    pub fn from_luminance(params: SceneParams) -> Result<Self> {
        params.validate()?;
        Ok(Self { source: TruthSource::Luminance(params) })
    }
}

impl Segmenter for SyntheticSegmenter {
    fn id(&self) -> &str {
        BACKEND_ID
    }

    fn encode_image(&self, image: &PixelGrid) -> Result<ImageEmbedding> {
        let scene = match &self.source {
            TruthSource::Scene(scene) => {
                if scene.shape() != image.shape() {
                    return Err(Error::Backend(format!(
                        "scene is {} but the image is {}",
                        scene.shape(),
                        image.shape()
                    )));
                }
                scene.clone()
            }
            TruthSource::Luminance(params) => {
                let shape = image.shape();
                let truth = BinaryMask::from_fn(shape, |r, c| image.luminance(shape.index(r, c)) >= 128);
                SyntheticScene { true_mask: truth, params: *params }
            }
        };
        let payload = SyntheticEmbedding::new(scene);
        Ok(ImageEmbedding::new(image.shape(), BACKEND_ID, alloc::boxed::Box::new(payload)))
    }

    fn decode_prompt(&self, emb: &ImageEmbedding, prompt: &SegmenterPrompt) -> Result<ProbabilityMask> {
        let payload = emb.payload::<SyntheticEmbedding>()?;
        let shape = emb.shape();
        let params = &payload.params;
        let bbox = prompt.bbox.unwrap_or_else(|| BoundingBox::full(shape));
        let mut values = vec![0.0; shape.len()];
        for r in bbox.row_min..=bbox.row_max {
            let row = shape.index(r, bbox.col_min)..=shape.index(r, bbox.col_max);
            values[row.clone()].copy_from_slice(&payload.base_probs[row]);
        }
        if prompt.clicks.is_empty() {
            return ProbabilityMask::new(shape, values);
        }

        // Logit offsets from all clicks, then one sigmoid per touched pixel.
        let reach = payload.reach;
        let side = 2 * reach + 1;
        let mut delta = vec![0.0; shape.len()];
        let mut touched = BinaryMask::new(shape);
        for click in &prompt.clicks {
            let side_of_click = payload.truth.get(click.row, click.col);
            let amp = params.click_strength * click.label.sign();
            let r0 = click.row.saturating_sub(reach).max(bbox.row_min);
            let r1 = (click.row + reach).min(bbox.row_max);
            let c0 = click.col.saturating_sub(reach).max(bbox.col_min);
            let c1 = (click.col + reach).min(bbox.col_max);
            for r in r0..=r1 {
                let kr = (r + reach - click.row) * side;
                for c in c0..=c1 {
                    let i = shape.index(r, c);
                    if params.region_gated && payload.truth.get_index(i) != side_of_click {
                        continue;
                    }
                    delta[i] += amp * payload.kernel[kr + c + reach - click.col];
                    touched.set_index(i, true);
                }
            }
        }
        for i in touched.iter_ones() {
            values[i] = sigmoid(payload.base_logits[i] + delta[i]);
        }
        ProbabilityMask::new(shape, values)
    }
}
