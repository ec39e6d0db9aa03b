//! Region and contour accuracy metrics.
//!
//! Conventions chosen so every metric is total: two empty masks compare as
//! identical (1.0) and exactly one empty mask scores 0.0 on every metric.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::mask::{BinaryMask, ImageShape};

/// Marker for "no feature pixel anywhere" in a squared distance map.
pub const NO_FEATURE: u64 = u64::MAX;

/// Intersection over union. `1.0` when both masks are empty.
pub fn iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    let inter = a.intersection_count(b)?;
    let union = a.zip_count(b, |x, y| x | y);
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

/// Dice similarity coefficient `2|a∧b| / (|a| + |b|)`. `1.0` when both are empty.
pub fn dsc(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    let inter = a.intersection_count(b)?;
    let total = a.count() + b.count();
    Ok(if total == 0 { 1.0 } else { (2 * inter) as f64 / total as f64 })
}

/// Pixels where `pred` and `gt` disagree (false positives ∪ false negatives).
pub fn error_mask(pred: &BinaryMask, gt: &BinaryMask) -> Result<BinaryMask> {
    pred.xor(gt)
}

/// `pred ∧ ¬gt`.
pub fn false_positives(pred: &BinaryMask, gt: &BinaryMask) -> Result<BinaryMask> {
    pred.and_not(gt)
}

/// `gt ∧ ¬pred`.
pub fn false_negatives(pred: &BinaryMask, gt: &BinaryMask) -> Result<BinaryMask> {
    gt.and_not(pred)
}

/// Boundary pixels of a mask: foreground pixels with a 4-neighbour that is
/// background or lies outside the image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SurfaceSet {
    pixels: BinaryMask,
}

impl SurfaceSet {
    pub fn shape(&self) -> ImageShape {
        self.pixels.shape()
    }

    pub fn len(&self) -> usize {
        self.pixels.count()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn as_mask(&self) -> &BinaryMask {
        &self.pixels
    }

    /// Boundary pixels as `(row, col)`, row-major.
    pub fn points(&self) -> Vec<(usize, usize)> {
        let shape = self.shape();
        self.pixels.iter_ones().map(|i| shape.coords(i)).collect()
    }
}

pub fn extract_surface(m: &BinaryMask) -> SurfaceSet {
    let shape = m.shape();
    let (h, w) = (shape.height(), shape.width());
    let mut pixels = BinaryMask::new(shape);
    for i in m.iter_ones() {
        let (r, c) = shape.coords(i);
        let edge = r == 0
            || c == 0
            || r == h - 1
            || c == w - 1
            || !m.get(r - 1, c)
            || !m.get(r + 1, c)
            || !m.get(r, c - 1)
            || !m.get(r, c + 1);
        if edge {
            pixels.set_index(i, true);
        }
    }
    SurfaceSet { pixels }
}

/// Exact squared Euclidean distance from every pixel centre to the nearest
/// foreground pixel of `features`, in integer arithmetic. Pixels get
/// [`NO_FEATURE`] when `features` is empty.
///
/// Separable lower-envelope algorithm (Felzenszwalb & Huttenlocher); the
/// parabola intersections are compared by cross-multiplication so no
/// floating point is involved.
pub fn squared_edt(features: &BinaryMask) -> Vec<u64> {
    let shape = features.shape();
    let (h, w) = (shape.height(), shape.width());
    if features.is_empty() {
        return vec![NO_FEATURE; shape.len()];
    }
    // Large enough to exceed any real squared distance, small enough that
    // the envelope arithmetic below cannot overflow i128.
    let inf = ((h * h + w * w) as i64 + 1) * 4;

    // Column pass: squared vertical distance to the nearest feature.
    let mut g = vec![inf; shape.len()];
    for c in 0..w {
        let mut last: Option<usize> = None;
        for r in 0..h {
            if features.get(r, c) {
                last = Some(r);
            }
            if let Some(l) = last {
                let d = (r - l) as i64;
                g[r * w + c] = d * d;
            }
        }
        last = None;
        for r in (0..h).rev() {
            if features.get(r, c) {
                last = Some(r);
            }
            if let Some(l) = last {
                let d = (l - r) as i64;
                g[r * w + c] = g[r * w + c].min(d * d);
            }
        }
    }

    // Row pass: lower envelope of parabolas g(q) + (x - q)^2.
    let mut out = vec![0u64; shape.len()];
    let mut f = vec![0i64; w];
    let mut d = vec![0i64; w];
    let mut v = vec![0usize; w];
    for r in 0..h {
        f.copy_from_slice(&g[r * w..(r + 1) * w]);
        lower_envelope(&f, &mut d, &mut v);
        for (c, &dist) in d.iter().enumerate() {
            out[r * w + c] = if dist >= inf { NO_FEATURE } else { dist as u64 };
        }
    }
    out
}

fn lower_envelope(f: &[i64], d: &mut [i64], v: &mut [usize]) {
    let n = f.len();
    // Intersection abscissa of the parabolas rooted at p < q, as (num, den), den > 0.
    let cross = |p: usize, q: usize| -> (i128, i128) {
        let (pi, qi) = (p as i128, q as i128);
        let num = (f[q] as i128 + qi * qi) - (f[p] as i128 + pi * pi);
        (num, 2 * (qi - pi))
    };
    // z[k] is the left boundary of parabola v[k]; z[0] is -infinity.
    let mut z: Vec<(i128, i128)> = vec![(0, 1); n];
    let mut k = 0usize;
    v[0] = 0;
    for q in 1..n {
        loop {
            let s = cross(v[k], q);
            if k > 0 && s.0 * z[k].1 <= z[k].0 * s.1 {
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                break;
            }
        }
    }
    let last = k;
    let mut k = 0usize;
    for (x, slot) in d.iter_mut().enumerate() {
        while k < last && z[k + 1].0 < (x as i128) * z[k + 1].1 {
            k += 1;
        }
        let dx = x as i64 - v[k] as i64;
        *slot = f[v[k]] + dx * dx;
    }
}

/// Tolerance for normalised surface distance, in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NsdConfig {
    tolerance: f64,
}

impl NsdConfig {
    pub fn new(tolerance: f64) -> Result<Self> {
        if !tolerance.is_finite() || tolerance < 0.0 {
            return Err(Error::InvalidArgument(format!("NSD tolerance must be a finite value >= 0, got {tolerance}")));
        }
        Ok(Self { tolerance })
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }
}

impl Default for NsdConfig {
    fn default() -> Self {
        Self { tolerance: 2.0 }
    }
}

/// Normalised surface distance (surface Dice at tolerance τ): the fraction
/// of boundary pixels of either mask lying within τ of the other mask's
/// boundary.
pub fn nsd(pred: &BinaryMask, gt: &BinaryMask, cfg: NsdConfig) -> Result<f64> {
    pred.shape().expect_same(&gt.shape())?;
    match (pred.is_empty(), gt.is_empty()) {
        (true, true) => return Ok(1.0),
        (true, false) | (false, true) => return Ok(0.0),
        _ => {}
    }
    let sp = extract_surface(pred);
    let sg = extract_surface(gt);
    let tau2 = cfg.tolerance * cfg.tolerance;
    let within = |from: &SurfaceSet, to: &SurfaceSet| -> usize {
        let dist = squared_edt(to.as_mask());
        from.as_mask().iter_ones().filter(|&i| dist[i] != NO_FEATURE && dist[i] as f64 <= tau2).count()
    };
    let hits = within(&sp, &sg) + within(&sg, &sp);
    Ok(hits as f64 / (sp.len() + sg.len()) as f64)
}
