//! Dense-grid mask types and the probability-to-click transforms.
//!
//! Every grid is stored row-major. Binary masks are bit-packed into `u64`
//! words; probabilities are `f64`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Height and width of a pixel grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ImageShape {
    height: usize,
    width: usize,
}

impl ImageShape {
    pub fn new(height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidShape { height, width });
        }
        Ok(Self { height, width })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Pixel count.
    pub fn len(&self) -> usize {
        self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        row < self.height && col < self.width
    }

    /// Row-major index of `(row, col)`. The caller guarantees bounds.
    #[inline]
    pub fn index(&self, row: usize, col: usize) -> usize {
        debug_assert!(self.contains(row, col));
        row * self.width + col
    }

    #[inline]
    pub fn coords(&self, index: usize) -> (usize, usize) {
        (index / self.width, index % self.width)
    }

    pub(crate) fn check(&self, row: usize, col: usize) -> Result<()> {
        if self.contains(row, col) {
            Ok(())
        } else {
            Err(Error::OutOfBounds { row, col, shape: *self })
        }
    }

    pub(crate) fn expect_same(&self, other: &ImageShape) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::ShapeMismatch { left: *self, right: *other })
        }
    }
}

impl fmt::Display for ImageShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.height, self.width)
    }
}

/// Per-pixel foreground probability produced by a segmenter.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMask {
    shape: ImageShape,
    values: Vec<f64>,
}

impl ProbabilityMask {
    pub fn new(shape: ImageShape, values: Vec<f64>) -> Result<Self> {
        check_range(shape, &values, 1.0)?;
        Ok(Self { shape, values })
    }

    pub fn filled(shape: ImageShape, value: f64) -> Result<Self> {
        Self::new(shape, vec![value; shape.len()])
    }

    pub fn shape(&self) -> ImageShape {
        self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[self.shape.index(row, col)]
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

fn check_range(shape: ImageShape, values: &[f64], hi: f64) -> Result<()> {
    if values.len() != shape.len() {
        return Err(Error::LengthMismatch { expected: shape.len(), actual: values.len() });
    }
    for (index, &value) in values.iter().enumerate() {
        // NaN fails both comparisons.
        if !(0.0..=hi).contains(&value) {
            return Err(Error::ValueOutOfRange { index, value, lo: 0.0, hi });
        }
    }
    Ok(())
}

/// Simulated click distribution: the probability that each pixel is
/// mislabelled by the current prediction. Values lie in `[0, 0.5]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorProbabilityMap {
    shape: ImageShape,
    values: Vec<f64>,
}

impl ErrorProbabilityMap {
    pub fn new(shape: ImageShape, values: Vec<f64>) -> Result<Self> {
        check_range(shape, &values, 0.5)?;
        Ok(Self { shape, values })
    }

    pub fn shape(&self) -> ImageShape {
        self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Bit-packed boolean grid.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    shape: ImageShape,
    words: Vec<u64>,
}

impl fmt::Debug for BinaryMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BinaryMask").field("shape", &self.shape).field("foreground", &self.count()).finish()
    }
}

impl BinaryMask {
    pub fn new(shape: ImageShape) -> Self {
        Self { shape, words: vec![0; shape.len().div_ceil(64)] }
    }

    pub fn full(shape: ImageShape) -> Self {
        let mut mask = Self::new(shape);
        mask.words.iter_mut().for_each(|w| *w = !0);
        mask.clear_tail();
        mask
    }

    pub fn from_bools(shape: ImageShape, values: &[bool]) -> Result<Self> {
        if values.len() != shape.len() {
            return Err(Error::LengthMismatch { expected: shape.len(), actual: values.len() });
        }
        let mut mask = Self::new(shape);
        for (i, _) in values.iter().enumerate().filter(|(_, v)| **v) {
            mask.words[i / 64] |= 1 << (i % 64);
        }
        Ok(mask)
    }

    pub fn from_fn(shape: ImageShape, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut mask = Self::new(shape);
        for row in 0..shape.height() {
            for col in 0..shape.width() {
                if f(row, col) {
                    mask.set_index(shape.index(row, col), true);
                }
            }
        }
        mask
    }

    pub fn shape(&self) -> ImageShape {
        self.shape
    }

    #[inline]
    pub fn get_index(&self, index: usize) -> bool {
        self.words[index / 64] >> (index % 64) & 1 == 1
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.get_index(self.shape.index(row, col))
    }

    #[inline]
    pub fn set_index(&mut self, index: usize, value: bool) {
        assert!(index < self.shape.len(), "pixel index {index} out of range");
        let bit = 1u64 << (index % 64);
        if value {
            self.words[index / 64] |= bit;
        } else {
            self.words[index / 64] &= !bit;
        }
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.set_index(self.shape.index(row, col), value);
    }

    /// Number of foreground pixels.
    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    /// Row-major indices of foreground pixels.
    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &word)| {
            let mut rest = word;
            core::iter::from_fn(move || {
                if rest == 0 {
                    return None;
                }
                let bit = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                Some(wi * 64 + bit)
            })
        })
    }

    pub fn to_bools(&self) -> Vec<bool> {
        (0..self.shape.len()).map(|i| self.get_index(i)).collect()
    }

    pub fn intersection_count(&self, other: &BinaryMask) -> Result<usize> {
        self.shape.expect_same(&other.shape)?;
        Ok(self.zip_count(other, |a, b| a & b))
    }

    pub fn union_count(&self, other: &BinaryMask) -> Result<usize> {
        self.shape.expect_same(&other.shape)?;
        Ok(self.zip_count(other, |a, b| a | b))
    }

    pub(crate) fn zip_count(&self, other: &BinaryMask, op: impl Fn(u64, u64) -> u64) -> usize {
        self.words.iter().zip(&other.words).map(|(&a, &b)| op(a, b).count_ones() as usize).sum()
    }

    pub fn or(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.zip_with(other, |a, b| a | b)
    }

    pub fn and(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.zip_with(other, |a, b| a & b)
    }

    pub fn xor(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.zip_with(other, |a, b| a ^ b)
    }

    /// `self ∧ ¬other`.
    pub fn and_not(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.zip_with(other, |a, b| a & !b)
    }

    pub fn complement(&self) -> BinaryMask {
        let mut out = Self { shape: self.shape, words: self.words.iter().map(|w| !w).collect() };
        out.clear_tail();
        out
    }

    fn zip_with(&self, other: &BinaryMask, op: impl Fn(u64, u64) -> u64) -> Result<BinaryMask> {
        self.shape.expect_same(&other.shape)?;
        let words = self.words.iter().zip(&other.words).map(|(&a, &b)| op(a, b)).collect();
        let mut out = Self { shape: self.shape, words };
        out.clear_tail();
        Ok(out)
    }

    fn clear_tail(&mut self) {
        let rem = self.shape.len() % 64;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ClickLabel {
    /// "This pixel is foreground."
    Positive,
    /// "This pixel is background."
    Negative,
}

impl ClickLabel {
    /// `+1` for positive clicks, `-1` for negative ones.
    pub fn sign(self) -> f64 {
        match self {
            ClickLabel::Positive => 1.0,
            ClickLabel::Negative => -1.0,
        }
    }

    /// The label that corrects a pixel whose current foreground probability
    /// is `p`: a pixel predicted foreground (`p >= 0.5`) gets a negative click.
    pub fn correcting(p: f64) -> Self {
        if p >= 0.5 {
            ClickLabel::Negative
        } else {
            ClickLabel::Positive
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ClickPrompt {
    pub row: usize,
    pub col: usize,
    pub label: ClickLabel,
}

impl ClickPrompt {
    pub fn new(row: usize, col: usize, label: ClickLabel) -> Self {
        Self { row, col, label }
    }
}

/// Axis-aligned box with inclusive bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BoundingBox {
    pub row_min: usize,
    pub col_min: usize,
    pub row_max: usize,
    pub col_max: usize,
}

impl BoundingBox {
    pub fn new(row_min: usize, col_min: usize, row_max: usize, col_max: usize) -> Result<Self> {
        if row_min > row_max || col_min > col_max {
            return Err(Error::InvalidBox(format!(
                "rows [{row_min}, {row_max}] cols [{col_min}, {col_max}] are inverted"
            )));
        }
        Ok(Self { row_min, col_min, row_max, col_max })
    }

    /// Box covering every pixel of `shape`.
    pub fn full(shape: ImageShape) -> Self {
        Self { row_min: 0, col_min: 0, row_max: shape.height() - 1, col_max: shape.width() - 1 }
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        (self.row_min..=self.row_max).contains(&row) && (self.col_min..=self.col_max).contains(&col)
    }

    pub fn fits(&self, shape: ImageShape) -> bool {
        self.row_min <= self.row_max && self.col_min <= self.col_max && shape.contains(self.row_max, self.col_max)
    }

    pub fn validate(&self, shape: ImageShape) -> Result<()> {
        if self.row_min > self.row_max || self.col_min > self.col_max {
            return Err(Error::InvalidBox(format!("{self:?} is inverted")));
        }
        if !shape.contains(self.row_max, self.col_max) {
            return Err(Error::InvalidBox(format!("{self:?} exceeds a {shape} image")));
        }
        Ok(())
    }

    pub fn height(&self) -> usize {
        self.row_max - self.row_min + 1
    }

    pub fn width(&self) -> usize {
        self.col_max - self.col_min + 1
    }
}

/// Foreground iff `p >= t`.
pub fn threshold(p: &ProbabilityMask, t: f64) -> Result<BinaryMask> {
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::InvalidArgument(format!("threshold {t} must lie in (0, 1)")));
    }
    let mut out = BinaryMask::new(p.shape);
    for (i, &v) in p.values.iter().enumerate() {
        if v >= t {
            out.set_index(i, true);
        }
    }
    Ok(out)
}

/// Per-pixel probability that the current prediction is wrong:
/// `0.5 - |p - 0.5|`.
pub fn error_transform(p: &ProbabilityMask) -> ErrorProbabilityMap {
    let values = p.values.iter().map(|&v| 0.5 - libm::fabs(v - 0.5)).collect();
    ErrorProbabilityMap { shape: p.shape, values }
}

fn correcting_click(shape: ImageShape, p: &ProbabilityMask, index: usize) -> ClickPrompt {
    let (row, col) = shape.coords(index);
    ClickPrompt::new(row, col, ClickLabel::correcting(p.values[index]))
}

fn check_k(k: usize, shape: ImageShape) -> Result<()> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if k > shape.len() {
        return Err(Error::InvalidArgument(format!("k = {k} exceeds the {} pixels of a {shape} image", shape.len())));
    }
    Ok(())
}

/// The `k` pixels with the largest error probability, most likely first.
/// Ties go to the lower row-major index. Each click carries the label that
/// would correct the prediction at that pixel.
pub fn top_k_clicks(e: &ErrorProbabilityMap, p: &ProbabilityMask, k: usize) -> Result<Vec<ClickPrompt>> {
    e.shape.expect_same(&p.shape)?;
    check_k(k, e.shape)?;
    let values = &e.values;
    let order = |a: &usize, b: &usize| values[*b].total_cmp(&values[*a]).then(a.cmp(b));
    let mut indices: Vec<usize> = (0..values.len()).collect();
    if k < indices.len() {
        indices.select_nth_unstable_by(k - 1, order);
        indices.truncate(k);
    }
    indices.sort_unstable_by(order);
    Ok(indices.into_iter().map(|i| correcting_click(e.shape, p, i)).collect())
}

/// `k` distinct pixels drawn uniformly at random. Labels follow the same
/// correcting rule as [`top_k_clicks`].
pub fn random_clicks(shape: ImageShape, p: &ProbabilityMask, k: usize, seed: u64) -> Result<Vec<ClickPrompt>> {
    shape.expect_same(&p.shape)?;
    check_k(k, shape)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked = rand::seq::index::sample(&mut rng, shape.len(), k);
    Ok(picked.into_iter().map(|i| correcting_click(shape, p, i)).collect())
}

/// Tightest box around the foreground.
pub fn bbox_from_mask(m: &BinaryMask) -> Result<BoundingBox> {
    let shape = m.shape;
    let mut ones = m.iter_ones();
    let first = ones.next().ok_or(Error::EmptyMask)?;
    let (r0, c0) = shape.coords(first);
    let mut bbox = BoundingBox { row_min: r0, col_min: c0, row_max: r0, col_max: c0 };
    for i in ones {
        let (r, c) = shape.coords(i);
        bbox.row_max = bbox.row_max.max(r);
        bbox.col_min = bbox.col_min.min(c);
        bbox.col_max = bbox.col_max.max(c);
    }
    Ok(bbox)
}

/// Pixel-wise OR.
pub fn mask_union(masks: &[BinaryMask]) -> Result<BinaryMask> {
    let (first, rest) = masks.split_first().ok_or(Error::EmptyInput)?;
    rest.iter().try_fold(first.clone(), |acc, m| acc.or(m))
}
