//! Binary per-video feature files.
//!
//! Layout (little-endian): magic `MTLF`, version `u16` (= 1), `D: u32`,
//! `T: u32`, then `T·D` single-precision floats, frame-major.

use std::fs;
use std::path::Path;

use super::DataError;

pub const MAGIC: [u8; 4] = *b"MTLF";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 4 + 4;

/// Per-frame feature vectors of one video, all of the same dimension.
pub type Frames = Vec<Vec<f64>>;

pub fn encode_features(frames: &[Vec<f64>]) -> Result<Vec<u8>, DataError> {
    let t = frames.len();
    if t == 0 {
        return Err(DataError::ZeroFrames);
    }
    let d = frames[0].len();
    if d == 0 {
        return Err(DataError::ZeroDimension);
    }
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * t * d);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(d as u32).to_le_bytes());
    out.extend_from_slice(&(t as u32).to_le_bytes());
    for (i, frame) in frames.iter().enumerate() {
        if frame.len() != d {
            return Err(DataError::RaggedFrames {
                frame: i,
                expected: d,
                actual: frame.len(),
            });
        }
        for &v in frame {
            let v = v as f32;
            if !v.is_finite() {
                return Err(DataError::NonFiniteFeature { frame: i });
            }
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode_features(bytes: &[u8]) -> Result<Frames, DataError> {
    if bytes.len() < 4 || bytes[..4] != MAGIC {
        return Err(DataError::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(DataError::Truncated {
            expected: HEADER_LEN,
            actual: bytes.len(),
        });
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(DataError::UnsupportedVersion(version));
    }
    let d = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let t = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
    if t == 0 {
        return Err(DataError::ZeroFrames);
    }
    if d == 0 {
        return Err(DataError::ZeroDimension);
    }
    let expected = HEADER_LEN + 4 * t * d;
    if bytes.len() < expected {
        return Err(DataError::Truncated {
            expected,
            actual: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(DataError::TrailingBytes(bytes.len() - expected));
    }
    let payload = &bytes[HEADER_LEN..];
    let mut frames = Vec::with_capacity(t);
    for i in 0..t {
        let mut frame = Vec::with_capacity(d);
        for j in 0..d {
            let off = 4 * (i * d + j);
            let v = f32::from_le_bytes(payload[off..off + 4].try_into().unwrap());
            if !v.is_finite() {
                return Err(DataError::NonFiniteFeature { frame: i });
            }
            frame.push(f64::from(v));
        }
        frames.push(frame);
    }
    Ok(frames)
}

pub fn write_features(path: &Path, frames: &[Vec<f64>]) -> Result<(), DataError> {
    let bytes = encode_features(frames)?;
    fs::write(path, bytes).map_err(|e| DataError::io(path, e))
}

pub fn load_features(path: &Path) -> Result<Frames, DataError> {
    let bytes = fs::read(path).map_err(|e| DataError::io(path, e))?;
    decode_features(&bytes).map_err(|e| e.in_file(path))
}
