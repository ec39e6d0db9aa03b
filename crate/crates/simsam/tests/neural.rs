#![cfg(feature = "neural")]

use std::path::PathBuf;

use simsam::neural::NeuralSegmenter;
use simsam_core::pipeline::{self, NoClock, PipelineConfig};
use simsam_core::{threshold, BinaryMask, BoundingBox, ImageShape, PixelGrid, Segmenter, SegmenterPrompt};

fn fixture() -> NeuralSegmenter {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/tiny_onnx");
    NeuralSegmenter::load(&dir).unwrap()
}

fn image() -> PixelGrid {
    let s = ImageShape::new(32, 32).unwrap();
    PixelGrid::gray(s, (0..s.len()).map(|i| (i % 251) as u8).collect()).unwrap()
}

#[test]
fn box_only_decode_has_image_shape() {
    let seg = fixture();
    let img = image();
    let emb = seg.encode(&img).unwrap();
    assert_eq!(emb.call_counts(), (1, 0));
    let b = BoundingBox::new(4, 6, 20, 25).unwrap();
    let p = seg.decode(&emb, &SegmenterPrompt::from_box(b)).unwrap();
    assert_eq!(p.shape(), img.shape());
    let expect = BinaryMask::from_fn(img.shape(), |r, c| b.contains(r, c));
    assert_eq!(threshold(&p, 0.5).unwrap(), expect);
    // Deterministic for a fixed prompt.
    assert_eq!(seg.decode(&emb, &SegmenterPrompt::from_box(b)).unwrap(), p);
}

#[test]
fn full_pipeline_encodes_once() {
    let seg = fixture();
    let b = BoundingBox::new(2, 2, 12, 30).unwrap();
    let cfg = PipelineConfig { k: 4, ..PipelineConfig::default() };
    let out = pipeline::run(&seg, &image(), &SegmenterPrompt::from_box(b), &cfg, &NoClock).unwrap();
    assert_eq!(out.call_counts, (1, 5));
    assert_eq!(out.candidates.len(), 4);
}
