//! Lossless binary container for masks and probability maps.
//!
//! Layout (all integers little-endian):
//!
//! | bytes    | content                                   |
//! |----------|-------------------------------------------|
//! | 0..4     | magic `SIMM`                              |
//! | 4..8     | height, `u32`                             |
//! | 8..12    | width, `u32`                              |
//! | 12..     | payload, row-major                        |
//!
//! A probability payload is `height * width` `f64` values. A mask payload
//! is `ceil(height * width / 8)` bytes, pixel `i` in bit `i % 8` (LSB
//! first) of byte `i / 8`. The two payload sizes never coincide, so the
//! kind is recovered from the length.

use std::path::Path;

use simsam_core::{BinaryMask, ImageShape, ProbabilityMask};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SIMM";
const HEADER: usize = 12;

#[derive(Debug, Clone, PartialEq)]
pub enum Contents {
    Mask(BinaryMask),
    Probability(ProbabilityMask),
}

fn header(shape: ImageShape, payload: usize) -> Result<Vec<u8>> {
    let dim = |v: usize| u32::try_from(v).map_err(|_| Error::Container(format!("dimension {v} exceeds u32")));
    let mut out = Vec::with_capacity(HEADER + payload);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&dim(shape.height())?.to_le_bytes());
    out.extend_from_slice(&dim(shape.width())?.to_le_bytes());
    Ok(out)
}

pub fn encode_mask(mask: &BinaryMask) -> Result<Vec<u8>> {
    let n = mask.shape().len();
    let mut out = header(mask.shape(), n.div_ceil(8))?;
    let mut bytes = vec![0u8; n.div_ceil(8)];
    for i in mask.iter_ones() {
        bytes[i / 8] |= 1 << (i % 8);
    }
    out.extend_from_slice(&bytes);
    Ok(out)
}

pub fn encode_probability(p: &ProbabilityMask) -> Result<Vec<u8>> {
    let mut out = header(p.shape(), p.values().len() * 8)?;
    for v in p.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<Contents> {
    if bytes.len() < HEADER || &bytes[..4] != MAGIC {
        return Err(Error::Container("missing SIMM header".into()));
    }
    let height = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let width = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let shape = ImageShape::new(height, width)?;
    let payload = &bytes[HEADER..];
    let n = shape.len();
    if payload.len() == n.div_ceil(8) {
        let mut mask = BinaryMask::new(shape);
        for i in 0..n {
            if payload[i / 8] >> (i % 8) & 1 == 1 {
                mask.set_index(i, true);
            }
        }
        // Padding bits past the last pixel must be zero.
        if n % 8 != 0 && payload[n / 8] >> (n % 8) != 0 {
            return Err(Error::Container("non-zero padding bits".into()));
        }
        Ok(Contents::Mask(mask))
    } else if payload.len() == n * 8 {
        let values = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        Ok(Contents::Probability(ProbabilityMask::new(shape, values)?))
    } else {
        Err(Error::Container(format!(
            "payload of {} bytes fits neither a mask nor a probability map of {shape}",
            payload.len()
        )))
    }
}

pub fn write_mask(path: &Path, mask: &BinaryMask) -> Result<()> {
    std::fs::write(path, encode_mask(mask)?).map_err(|e| Error::io(path, e))
}

pub fn write_probability(path: &Path, p: &ProbabilityMask) -> Result<()> {
    std::fs::write(path, encode_probability(p)?).map_err(|e| Error::io(path, e))
}

pub fn read(path: &Path) -> Result<Contents> {
    decode(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_layout_is_lsb_first() {
        let s = ImageShape::new(1, 10).unwrap();
        let mut m = BinaryMask::new(s);
        m.set(0, 0, true);
        m.set(0, 9, true);
        let bytes = encode_mask(&m).unwrap();
        assert_eq!(&bytes[..4], b"SIMM");
        assert_eq!(&bytes[4..12], &[1, 0, 0, 0, 10, 0, 0, 0]);
        assert_eq!(&bytes[12..], &[0b0000_0001, 0b0000_0010]);
        assert_eq!(decode(&bytes).unwrap(), Contents::Mask(m));
    }

    #[test]
    fn probability_is_exact() {
        let s = ImageShape::new(1, 3).unwrap();
        let p = ProbabilityMask::new(s, vec![0.1, 1.0 / 3.0, 0.0]).unwrap();
        let bytes = encode_probability(&p).unwrap();
        assert_eq!(bytes.len(), 12 + 24);
        assert_eq!(decode(&bytes).unwrap(), Contents::Probability(p));
    }

    #[test]
    fn rejects_garbage() {
        assert!(decode(b"SIM").is_err());
        assert!(decode(b"XXXX\x01\0\0\0\x01\0\0\0\x01").is_err());
        assert!(decode(b"SIMM\x01\0\0\0\x01\0\0\0\x01\x02").is_err());
        assert!(decode(b"SIMM\0\0\0\0\x01\0\0\0").is_err());
        // bit 1 is padding for a 1x1 mask
        assert!(decode(b"SIMM\x01\0\0\0\x01\0\0\0\x03").is_err());
    }
}
