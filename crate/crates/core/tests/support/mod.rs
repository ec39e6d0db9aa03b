//! Brute-force reference implementations. Each one is written from the
//! definition, independent of the library code it checks.

#![allow(dead_code)]

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use rand::Rng;
use simsam_core::{BinaryMask, ImageShape};

pub fn shape(h: usize, w: usize) -> ImageShape {
    ImageShape::new(h, w).unwrap()
}

/// Independent pixels with probability `density`.
pub fn noise_mask<R: Rng>(rng: &mut R, s: ImageShape, density: f64) -> BinaryMask {
    let bools: Vec<bool> = (0..s.len()).map(|_| rng.random_bool(density)).collect();
    BinaryMask::from_bools(s, &bools).unwrap()
}

/// Union of a few random discs and rectangles, sometimes empty.
pub fn blob_mask<R: Rng>(rng: &mut R, s: ImageShape) -> BinaryMask {
    let (h, w) = (s.height() as f64, s.width() as f64);
    let n = rng.random_range(0..=3);
    let mut shapes = Vec::new();
    for _ in 0..n {
        let cy = rng.random_range(0.0..h);
        let cx = rng.random_range(0.0..w);
        let r = rng.random_range(1.0..(h.min(w) / 2.5).max(1.5));
        shapes.push((rng.random_bool(0.5), cy, cx, r));
    }
    BinaryMask::from_fn(s, |y, x| {
        shapes.iter().any(|&(disc, cy, cx, r)| {
            let (dy, dx) = (y as f64 - cy, x as f64 - cx);
            if disc {
                dy * dy + dx * dx <= r * r
            } else {
                dy.abs() <= r && dx.abs() <= r * 0.6
            }
        })
    })
}

/// `(|a and b|, |a or b|, |a|, |b|)` by scanning pixels.
pub fn counts(a: &BinaryMask, b: &BinaryMask) -> (usize, usize, usize, usize) {
    let (a, b) = (a.to_bools(), b.to_bools());
    let mut out = (0, 0, 0, 0);
    for (x, y) in a.iter().zip(&b) {
        out.0 += (*x && *y) as usize;
        out.1 += (*x || *y) as usize;
        out.2 += *x as usize;
        out.3 += *y as usize;
    }
    out
}

pub fn iou_oracle(a: &BinaryMask, b: &BinaryMask) -> f64 {
    let (i, u, _, _) = counts(a, b);
    if u == 0 {
        1.0
    } else {
        i as f64 / u as f64
    }
}

pub fn dsc_oracle(a: &BinaryMask, b: &BinaryMask) -> f64 {
    let (i, _, na, nb) = counts(a, b);
    if na + nb == 0 {
        1.0
    } else {
        2.0 * i as f64 / (na + nb) as f64
    }
}

/// Foreground pixels with a background 4-neighbour, outside counting as
/// background.
pub fn surface_oracle(m: &BinaryMask) -> Vec<(usize, usize)> {
    let s = m.shape();
    let (h, w) = (s.height() as isize, s.width() as isize);
    let at = |r: isize, c: isize| r >= 0 && c >= 0 && r < h && c < w && m.get(r as usize, c as usize);
    let mut out = Vec::new();
    for r in 0..h {
        for c in 0..w {
            if at(r, c) && [(-1, 0), (1, 0), (0, -1), (0, 1)].iter().any(|(dr, dc)| !at(r + dr, c + dc)) {
                out.push((r as usize, c as usize));
            }
        }
    }
    out
}

fn d2(a: (usize, usize), b: (usize, usize)) -> u64 {
    let dr = a.0 as i64 - b.0 as i64;
    let dc = a.1 as i64 - b.1 as i64;
    (dr * dr + dc * dc) as u64
}

/// Surface Dice at `tau` over all pairs of boundary points.
pub fn nsd_oracle(a: &BinaryMask, b: &BinaryMask, tau: f64) -> f64 {
    let (sa, sb) = (surface_oracle(a), surface_oracle(b));
    if sa.is_empty() && sb.is_empty() {
        return 1.0;
    }
    if sa.is_empty() || sb.is_empty() {
        return 0.0;
    }
    let near = |p: (usize, usize), set: &[(usize, usize)]| set.iter().any(|&q| (d2(p, q) as f64).sqrt() <= tau);
    let hits = sa.iter().filter(|&&p| near(p, &sb)).count() + sb.iter().filter(|&&p| near(p, &sa)).count();
    hits as f64 / (sa.len() + sb.len()) as f64
}

/// Squared distance to the nearest foreground pixel; `u64::MAX` if none.
pub fn edt_oracle(m: &BinaryMask) -> Vec<u64> {
    let s = m.shape();
    let ones: Vec<(usize, usize)> = m.iter_ones().map(|i| s.coords(i)).collect();
    (0..s.len()).map(|i| ones.iter().map(|&q| d2(s.coords(i), q)).min().unwrap_or(u64::MAX)).collect()
}

/// Mean IoU of each mask to all masks (self included), summed in index
/// order, and the first index with the largest score.
pub fn medoid_oracle(masks: &[BinaryMask]) -> (usize, Vec<f64>) {
    let k = masks.len();
    let scores: Vec<f64> = (0..k)
        .map(|i| {
            let mut sum = 0.0;
            for j in 0..k {
                sum += if i == j { 1.0 } else { iou_oracle(&masks[i], &masks[j]) };
            }
            sum / k as f64
        })
        .collect();
    let mut best = 0;
    for i in 0..k {
        if scores[i] > scores[best] {
            best = i;
        }
    }
    (best, scores)
}

/// Exact rational medoid scores.
pub fn medoid_scores_exact(masks: &[BinaryMask]) -> Vec<BigRational> {
    let k = masks.len();
    (0..k)
        .map(|i| {
            let mut sum = BigRational::zero();
            for j in 0..k {
                let (inter, union, _, _) = counts(&masks[i], &masks[j]);
                sum += if union == 0 {
                    BigRational::from_integer(1.into())
                } else {
                    BigRational::new(BigInt::from(inter), BigInt::from(union))
                };
            }
            sum / BigInt::from(k)
        })
        .collect()
}

/// `(index, error probability, click is negative)` for the `k` most likely
/// errors by a full sort.
pub fn topk_oracle(p: &[f64], k: usize) -> Vec<(usize, f64, bool)> {
    let mut all: Vec<(usize, f64)> = p.iter().enumerate().map(|(i, &v)| (i, v.min(1.0 - v))).collect();
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    all.into_iter().take(k).map(|(i, e)| (i, e, p[i] >= 0.5)).collect()
}

/// Two-sided signed-rank p-value by enumerating all `2^n` sign patterns of
/// the non-zero differences.
pub fn wilcoxon_enum(diffs: &[f64]) -> f64 {
    let d: Vec<f64> = diffs.iter().copied().filter(|x| *x != 0.0).collect();
    let n = d.len();
    if n == 0 {
        return 1.0;
    }
    // Doubled mid-ranks: 2 * (#smaller) + #equal + 1.
    let rank2: Vec<u64> = d
        .iter()
        .map(|x| {
            let smaller = d.iter().filter(|y| y.abs() < x.abs()).count() as u64;
            let equal = d.iter().filter(|y| y.abs() == x.abs()).count() as u64;
            2 * smaller + equal + 1
        })
        .collect();
    let total: u64 = rank2.iter().sum();
    let plus: u64 = rank2.iter().zip(&d).filter(|(_, x)| **x > 0.0).map(|(r, _)| r).sum();
    let stat = plus.min(total - plus);
    let mut hits = 0u64;
    for pattern in 0u64..1 << n {
        let w: u64 = (0..n).filter(|b| pattern >> b & 1 == 1).map(|b| rank2[b]).sum();
        if w <= stat {
            hits += 1;
        }
    }
    (2.0 * hits as f64 / (1u64 << n) as f64).min(1.0)
}

/// Mean and sample standard deviation computed in exact rational arithmetic.
pub fn mean_std_exact(values: &[f64]) -> (f64, f64) {
    let xs: Vec<BigRational> = values.iter().map(|&v| BigRational::from_float(v).unwrap()).collect();
    let n = BigInt::from(xs.len());
    let mean = xs.iter().fold(BigRational::zero(), |a, x| a + x) / n.clone();
    if xs.len() < 2 {
        return (mean.to_f64().unwrap(), 0.0);
    }
    let ss = xs.iter().fold(BigRational::zero(), |a, x| {
        let d = x - &mean;
        a + &d * &d
    });
    let var: BigRational = ss / (n - BigInt::from(1));
    (mean.to_f64().unwrap(), var.to_f64().unwrap().sqrt())
}

/// Compares `actual` with a checked-in golden file. A missing file is written
/// on the first run; `SIMSAM_BLESS=1` rewrites it.
pub fn check_golden(path: &std::path::Path, actual: &str) {
    if std::env::var_os("SIMSAM_BLESS").is_some() || !path.exists() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(path, actual).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(path).unwrap();
    assert!(
        expected == actual,
        "{} differs from the current output; rerun with SIMSAM_BLESS=1 if the change is intended\n--- expected\n{expected}\n--- actual\n{actual}",
        path.display()
    );
}
