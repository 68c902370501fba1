//! `TLVV` synthetic video container.
//!
//! Little-endian layout: magic `TLVV`, `u32` version, `u32` total_frames,
//! `f64` frame_rate, `u32` tokens per frame, `u32` feature width, then
//! `total_frames · tokens · width` `f64` values in frame order.

use std::fs;
use std::path::Path;

use super::sampling::VideoMeta;
use crate::error::{Error, Result};
use crate::numeric::Tensor;

pub const VIDEO_MAGIC: &[u8; 4] = b"TLVV";
pub const VIDEO_VERSION: u32 = 1;
pub const VIDEO_HEADER_LEN: usize = 28;

pub fn encode_video(meta: &VideoMeta, frames: &Tensor) -> Result<Vec<u8>> {
    let shape = frames.shape();
    if shape.len() != 3 || shape[0] != meta.total_frames {
        return Err(Error::Dimension(format!(
            "frames {shape:?} do not match {} total frames",
            meta.total_frames
        )));
    }
    let mut out = Vec::with_capacity(VIDEO_HEADER_LEN + frames.len() * 8);
    out.extend_from_slice(VIDEO_MAGIC);
    out.extend_from_slice(&VIDEO_VERSION.to_le_bytes());
    out.extend_from_slice(&(meta.total_frames as u32).to_le_bytes());
    out.extend_from_slice(&meta.frame_rate.to_le_bytes());
    out.extend_from_slice(&(shape[1] as u32).to_le_bytes());
    out.extend_from_slice(&(shape[2] as u32).to_le_bytes());
    for v in frames.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

fn format_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Format {
        offset: offset as u64,
        message: message.into(),
    }
}

pub fn decode_video(bytes: &[u8]) -> Result<(VideoMeta, Tensor)> {
    if bytes.len() < 4 || &bytes[..4] != VIDEO_MAGIC {
        return Err(format_err(0, "bad video magic"));
    }
    if bytes.len() < VIDEO_HEADER_LEN {
        return Err(format_err(bytes.len(), "truncated header"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let version = u32_at(4);
    if version != VIDEO_VERSION {
        return Err(format_err(4, format!("unsupported version {version}")));
    }
    let total = u32_at(8) as usize;
    let frame_rate = f64::from_le_bytes(bytes[12..20].try_into().unwrap());
    let tokens = u32_at(20) as usize;
    let dim = u32_at(24) as usize;
    let meta = VideoMeta::new(total, frame_rate).map_err(|e| format_err(8, e.to_string()))?;
    let count = total * tokens * dim;
    let payload = &bytes[VIDEO_HEADER_LEN..];
    if payload.len() != count * 8 {
        let offset = VIDEO_HEADER_LEN + (payload.len().min(count * 8) / 8) * 8;
        return Err(format_err(
            offset,
            format!("payload holds {} bytes, header promises {}", payload.len(), count * 8),
        ));
    }
    let data = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((meta, Tensor::new(vec![total, tokens, dim], data)?))
}

pub fn write_video(path: &Path, meta: &VideoMeta, frames: &Tensor) -> Result<()> {
    fs::write(path, encode_video(meta, frames)?).map_err(|e| Error::io(path, e))
}

/// Reads a container; frames come back as `[total_frames, tokens, dim]`.
pub fn read_video(path: &Path) -> Result<(VideoMeta, Tensor)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_video(&bytes)
}
