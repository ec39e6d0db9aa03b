//! Row-major binary run-length encoding.
//!
//! A mask is a list of alternating run lengths, starting with a background
//! run (which may be zero). The runs sum to the pixel count.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::mask::{BinaryMask, ImageShape};

pub fn encode(mask: &BinaryMask) -> Vec<u32> {
    let mut runs = Vec::new();
    let mut current = false;
    let mut len = 0u32;
    for i in 0..mask.shape().len() {
        let v = mask.get_index(i);
        if v != current {
            runs.push(len);
            current = v;
            len = 0;
        }
        len += 1;
    }
    runs.push(len);
    runs
}

pub fn decode(shape: ImageShape, runs: &[u32]) -> Result<BinaryMask> {
    let total: u64 = runs.iter().map(|&r| r as u64).sum();
    if total != shape.len() as u64 {
        return Err(Error::LengthMismatch { expected: shape.len(), actual: total as usize });
    }
    let mut mask = BinaryMask::new(shape);
    let mut pos = 0usize;
    for (k, &run) in runs.iter().enumerate() {
        if k % 2 == 1 {
            for i in pos..pos + run as usize {
                mask.set_index(i, true);
            }
        }
        pos += run as usize;
    }
    Ok(mask)
}
