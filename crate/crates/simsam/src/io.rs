//! PNG/JPEG reading and writing for images, masks and probability maps.

use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, GrayImage, ImageFormat, ImageReader, RgbImage};
use simsam_core::{BinaryMask, ImageShape, PixelGrid, ProbabilityMask};

use crate::error::{Error, Result};

/// Mask pixels at or above this grey level are foreground.
pub const MASK_LEVEL: u8 = 128;

pub fn grid_from_dynamic(img: DynamicImage) -> Result<PixelGrid> {
    let shape = ImageShape::new(img.height() as usize, img.width() as usize)?;
    if img.color().has_color() {
        Ok(PixelGrid::new(shape, 3, img.into_rgb8().into_raw())?)
    } else {
        Ok(PixelGrid::gray(shape, img.into_luma8().into_raw())?)
    }
}

/// Width and height from the header alone.
pub fn probe_dimensions(bytes: &[u8]) -> image::ImageResult<(u32, u32)> {
    ImageReader::new(Cursor::new(bytes)).with_guessed_format()?.into_dimensions()
}

pub fn decode_image(bytes: &[u8]) -> image::ImageResult<DynamicImage> {
    ImageReader::new(Cursor::new(bytes)).with_guessed_format()?.decode()
}

pub fn load_image(path: &Path) -> Result<PixelGrid> {
    let img = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|e| Error::image(path, e))?;
    grid_from_dynamic(img)
}

/// Loads a mask and binarizes its luminance at [`MASK_LEVEL`].
pub fn load_mask(path: &Path) -> Result<BinaryMask> {
    let grid = load_image(path)?;
    Ok(mask_from_grid(&grid))
}

pub fn mask_from_grid(grid: &PixelGrid) -> BinaryMask {
    let shape = grid.shape();
    BinaryMask::from_fn(shape, |r, c| grid.luminance(shape.index(r, c)) >= MASK_LEVEL)
}

pub fn mask_to_gray(mask: &BinaryMask) -> GrayImage {
    let s = mask.shape();
    let data = mask.to_bools().into_iter().map(|b| if b { 255 } else { 0 }).collect();
    GrayImage::from_raw(s.width() as u32, s.height() as u32, data).expect("buffer matches shape")
}

pub fn probability_to_gray(p: &ProbabilityMask) -> GrayImage {
    let s = p.shape();
    let data = p.values().iter().map(|v| (v * 255.0).round() as u8).collect();
    GrayImage::from_raw(s.width() as u32, s.height() as u32, data).expect("buffer matches shape")
}

pub fn grid_to_dynamic(grid: &PixelGrid) -> DynamicImage {
    let (w, h) = (grid.shape().width() as u32, grid.shape().height() as u32);
    let data = grid.data().to_vec();
    match grid.channels() {
        1 => DynamicImage::ImageLuma8(GrayImage::from_raw(w, h, data).expect("buffer matches shape")),
        _ => DynamicImage::ImageRgb8(RgbImage::from_raw(w, h, data).expect("buffer matches shape")),
    }
}

fn save(path: &Path, img: &DynamicImage) -> Result<()> {
    img.save_with_format(path, ImageFormat::Png).map_err(|e| Error::image(path, e))
}

/// Writes a mask as an 8-bit PNG with values 0 and 255.
pub fn save_mask(path: &Path, mask: &BinaryMask) -> Result<()> {
    save(path, &DynamicImage::ImageLuma8(mask_to_gray(mask)))
}

/// Writes `round(255 * p)` per pixel.
pub fn save_probability(path: &Path, p: &ProbabilityMask) -> Result<()> {
    save(path, &DynamicImage::ImageLuma8(probability_to_gray(p)))
}

pub fn save_image(path: &Path, grid: &PixelGrid) -> Result<()> {
    save(path, &grid_to_dynamic(grid))
}

pub fn encode_png(img: &DynamicImage) -> Vec<u8> {
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png).expect("PNG encoding into memory");
    out.into_inner()
}

/// Greyscale copy of `image` with the union tinted blue and the final mask
/// tinted green, where they overlap green wins.
pub fn overlay(image: &PixelGrid, final_mask: &BinaryMask, union: &BinaryMask) -> Result<RgbImage> {
    let shape = image.shape();
    shape_check(shape, final_mask.shape())?;
    shape_check(shape, union.shape())?;
    let mut out = RgbImage::new(shape.width() as u32, shape.height() as u32);
    for (i, px) in out.pixels_mut().enumerate() {
        let y = image.luminance(i) as u16;
        let tint = |base: u16, add: u16| ((base * 6 + add * 4) / 10) as u8;
        px.0 = if final_mask.get_index(i) {
            [tint(y, 0), tint(y, 255), tint(y, 0)]
        } else if union.get_index(i) {
            [tint(y, 0), tint(y, 0), tint(y, 255)]
        } else {
            [y as u8; 3]
        };
    }
    Ok(out)
}

fn shape_check(a: ImageShape, b: ImageShape) -> Result<()> {
    if a != b {
        return Err(simsam_core::Error::ShapeMismatch { left: a, right: b }.into());
    }
    Ok(())
}
