//! ONNX encoder/decoder backend following the exported-SAM calling
//! convention.
//!
//! `model_dir` holds `encoder.onnx`, `decoder.onnx` and optionally
//! `neural.toml` (see [`NeuralSettings`]). The encoder maps a normalized
//! `[1, 3, S, S]` image to an embedding. The decoder takes
//!
//! - `image_embeddings`: encoder output
//! - `point_coords`: `[1, N, 2]`, `(x, y)` in resized-image pixels
//! - `point_labels`: `[1, N]`; 1 positive, 0 negative, 2/3 box corners, -1 padding
//! - `mask_input`: `[1, 1, 4S/16, 4S/16]` zeros
//! - `has_mask_input`: `[1]` zero
//! - `orig_im_size`: `[2]`, `(height, width)`
//!
//! and returns mask logits `[1, M, H, W]` at the original size plus
//! `[1, M]` quality scores; the highest-scoring mask is used.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use image::imageops::FilterType;
use serde::Deserialize;
use simsam_core::{ClickLabel, ImageEmbedding, ImageShape, PixelGrid, ProbabilityMask, Segmenter, SegmenterPrompt};
use tract_onnx::prelude::*;

use crate::error::{Error, Result};
use crate::io;

pub const BACKEND_ID: &str = "neural";

type Plan = TypedSimplePlan<TypedModel>;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NeuralSettings {
    /// Side of the square encoder input.
    pub input_size: usize,
    pub pixel_mean: [f32; 3],
    pub pixel_std: [f32; 3],
}

impl Default for NeuralSettings {
    fn default() -> Self {
        Self { input_size: 1024, pixel_mean: [123.675, 116.28, 103.53], pixel_std: [58.395, 57.12, 57.375] }
    }
}

pub struct NeuralSegmenter {
    settings: NeuralSettings,
    encoder: Plan,
    decoder_path: PathBuf,
    /// Decoder plans by point count.
    decoders: Mutex<HashMap<usize, Arc<Plan>>>,
}

struct NeuralEmbedding {
    embedding: Tensor,
    /// Resized over original length.
    scale: f32,
}

fn backend(context: &str, e: impl std::fmt::Display) -> simsam_core::Error {
    simsam_core::Error::Backend(format!("{context}: {e:#}"))
}

impl NeuralSegmenter {
    pub fn load(model_dir: &Path) -> Result<Self> {
        let settings_path = model_dir.join("neural.toml");
        let settings = if settings_path.is_file() {
            let text = std::fs::read_to_string(&settings_path).map_err(|e| Error::io(&settings_path, e))?;
            toml::from_str(&text).map_err(|e| Error::Toml { path: settings_path.clone(), source: e })?
        } else {
            NeuralSettings::default()
        };
        let s = settings.input_size;
        let encoder_path = model_dir.join("encoder.onnx");
        let encoder = tract_onnx::onnx()
            .model_for_path(&encoder_path)
            .and_then(|m| m.with_input_fact(0, f32::fact([1, 3, s, s]).into()))
            .and_then(|m| m.into_optimized())
            .and_then(|m| m.into_runnable())
            .map_err(|e| backend(&encoder_path.display().to_string(), e))?;
        let decoder_path = model_dir.join("decoder.onnx");
        if !decoder_path.is_file() {
            return Err(Error::Config(format!("missing {}", decoder_path.display())));
        }
        Ok(Self { settings, encoder, decoder_path, decoders: Mutex::new(HashMap::new()) })
    }

    fn decoder(&self, points: usize, embedding: &Tensor) -> simsam_core::Result<Arc<Plan>> {
        let mut cache = self.decoders.lock().expect("decoder cache poisoned");
        if let Some(p) = cache.get(&points) {
            return Ok(p.clone());
        }
        let low_res = 4 * self.settings.input_size / 16;
        let ctx = self.decoder_path.display().to_string();
        let mut model = tract_onnx::onnx().model_for_path(&self.decoder_path).map_err(|e| backend(&ctx, e))?;
        for i in 0..model.inputs.len() {
            let name = model.node(model.inputs[i].node).name.clone();
            let fact: InferenceFact = match name.as_str() {
                "image_embeddings" => f32::fact(embedding.shape()).into(),
                "point_coords" => f32::fact([1, points, 2]).into(),
                "point_labels" => f32::fact([1, points]).into(),
                "mask_input" => f32::fact([1, 1, low_res, low_res]).into(),
                "has_mask_input" => f32::fact([1]).into(),
                "orig_im_size" => f32::fact([2]).into(),
                other => return Err(backend(&ctx, format!("unexpected decoder input `{other}`"))),
            };
            model.set_input_fact(i, fact).map_err(|e| backend(&ctx, e))?;
        }
        let typed = model.into_typed().map_err(|e| backend(&ctx, e))?;
        // Some exported graphs trip tract's optimizer; the plain typed model
        // still runs, only slower.
        let plan = match typed.clone().into_optimized() {
            Ok(m) => m.into_runnable(),
            Err(e) => {
                log::warn!("{ctx}: running unoptimized decoder for {points} points: {e:#}");
                typed.into_runnable()
            }
        }
        .map_err(|e| backend(&ctx, e))?;
        let plan = Arc::new(plan);
        cache.insert(points, plan.clone());
        Ok(plan)
    }

    fn decoder_inputs(
        &self,
        names: &[String],
        emb: &NeuralEmbedding,
        prompt: &SegmenterPrompt,
        shape: ImageShape,
    ) -> simsam_core::Result<TVec<TValue>> {
        let mut coords = Vec::new();
        let mut labels = Vec::new();
        for c in &prompt.clicks {
            coords.extend([c.col as f32 * emb.scale, c.row as f32 * emb.scale]);
            labels.push(match c.label {
                ClickLabel::Positive => 1.0,
                ClickLabel::Negative => 0.0,
            });
        }
        match prompt.bbox {
            Some(b) => {
                coords.extend([b.col_min as f32 * emb.scale, b.row_min as f32 * emb.scale]);
                coords.extend([b.col_max as f32 * emb.scale, b.row_max as f32 * emb.scale]);
                labels.extend([2.0, 3.0]);
            }
            None => {
                coords.extend([0.0, 0.0]);
                labels.push(-1.0);
            }
        }
        let n = labels.len();
        let low_res = 4 * self.settings.input_size / 16;
        let t =
            |shape: &[usize], data: Vec<f32>| Tensor::from_shape(shape, &data).map_err(|e| backend("decoder input", e));
        names
            .iter()
            .map(|name| {
                let tensor = match name.as_str() {
                    "image_embeddings" => emb.embedding.clone(),
                    "point_coords" => t(&[1, n, 2], coords.clone())?,
                    "point_labels" => t(&[1, n], labels.clone())?,
                    "mask_input" => t(&[1, 1, low_res, low_res], vec![0.0; low_res * low_res])?,
                    "has_mask_input" => t(&[1], vec![0.0])?,
                    "orig_im_size" => t(&[2], vec![shape.height() as f32, shape.width() as f32])?,
                    other => return Err(backend("decoder", format!("unexpected input `{other}`"))),
                };
                Ok(tensor.into())
            })
            .collect()
    }
}

impl Segmenter for NeuralSegmenter {
    fn id(&self) -> &str {
        BACKEND_ID
    }

    fn encode_image(&self, image: &PixelGrid) -> simsam_core::Result<ImageEmbedding> {
        let shape = image.shape();
        let s = self.settings.input_size;
        let scale = s as f32 / shape.height().max(shape.width()) as f32;
        let (h, w) = (
            ((shape.height() as f32 * scale).round() as u32).max(1),
            ((shape.width() as f32 * scale).round() as u32).max(1),
        );
        let rgb = io::grid_to_dynamic(image).into_rgb8();
        let resized = image::imageops::resize(&rgb, w, h, FilterType::Triangle);
        let (m, sd) = (self.settings.pixel_mean, self.settings.pixel_std);
        // Normalized CHW, zero padding bottom and right.
        let input = tract_ndarray::Array4::from_shape_fn((1, 3, s, s), |(_, c, y, x)| {
            if (y as u32) < h && (x as u32) < w {
                (resized.get_pixel(x as u32, y as u32)[c] as f32 - m[c]) / sd[c]
            } else {
                0.0
            }
        });
        let out = self.encoder.run(tvec!(Tensor::from(input).into())).map_err(|e| backend("encoder", e))?;
        let embedding = out[0].clone().into_tensor();
        Ok(ImageEmbedding::new(shape, BACKEND_ID, Box::new(NeuralEmbedding { embedding, scale })))
    }

    fn decode_prompt(&self, emb: &ImageEmbedding, prompt: &SegmenterPrompt) -> simsam_core::Result<ProbabilityMask> {
        let payload = emb.payload::<NeuralEmbedding>()?;
        let shape = emb.shape();
        let points = prompt.clicks.len() + if prompt.bbox.is_some() { 2 } else { 1 };
        let plan = self.decoder(points, &payload.embedding)?;
        let model = plan.model();
        let names: Vec<String> = model.inputs.iter().map(|o| model.node(o.node).name.clone()).collect();
        let outputs =
            plan.run(self.decoder_inputs(&names, payload, prompt, shape)?).map_err(|e| backend("decoder", e))?;
        let out_names: Vec<String> = model.outputs.iter().map(|o| model.node(o.node).name.clone()).collect();
        let find = |want: &str, fallback: usize| out_names.iter().position(|n| n == want).unwrap_or(fallback);
        let masks = outputs[find("masks", 0)].to_array_view::<f32>().map_err(|e| backend("decoder output", e))?;
        let dims = masks.shape().to_vec();
        if dims.len() != 4 || dims[2] != shape.height() || dims[3] != shape.width() {
            return Err(backend("decoder", format!("mask output {dims:?} does not match {shape}")));
        }
        let best = match outputs.get(find("iou_predictions", 1)) {
            Some(scores) if dims[1] > 1 => {
                let scores = scores.to_array_view::<f32>().map_err(|e| backend("decoder output", e))?;
                let scores: Vec<f32> = scores.iter().copied().collect();
                (0..scores.len()).fold(0, |best, i| if scores[i] > scores[best] { i } else { best })
            }
            _ => 0,
        };
        let values = masks
            .index_axis(tract_ndarray::Axis(0), 0)
            .index_axis(tract_ndarray::Axis(0), best)
            .iter()
            .map(|&l| 1.0 / (1.0 + (-(l as f64)).exp()))
            .collect();
        ProbabilityMask::new(shape, values)
    }
}
