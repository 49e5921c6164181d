//! `.vseq`: a video as raw `f32` frames.
//!
//! ```text
//! "VSEQ" | version u32 = 1 | T u32 | H u32 | W u32 | C u32
//! T*H*W*C f32 values in [0, 1], frame-major, row-major, channel-last
//! ```
//! All integers and reals are little-endian. Nothing follows the payload.

use std::fs;
use std::path::Path;

use super::{DataError, Reader};
use crate::frame::{Frame, RangeCheck, VideoSequence};

pub const VIDEO_MAGIC: [u8; 4] = *b"VSEQ";
pub const VIDEO_VERSION: u32 = 1;

pub fn encode_video(video: &VideoSequence) -> Vec<u8> {
    let (h, w, c) = video.frame_shape();
    let payload = video.len() * h * w * c * 4;
    let mut out = Vec::with_capacity(24 + payload);
    out.extend_from_slice(&VIDEO_MAGIC);
    for v in [
        VIDEO_VERSION,
        video.len() as u32,
        h as u32,
        w as u32,
        c as u32,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for frame in video.frames() {
        for v in frame.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_video(bytes: &[u8], id: &str) -> Result<VideoSequence, DataError> {
    let mut r = Reader::new(bytes);
    r.magic(VIDEO_MAGIC)?;
    let version = r.u32()?;
    if version != VIDEO_VERSION {
        return Err(DataError::UnsupportedVersion(version));
    }
    let t = r.u32()? as usize;
    let h = r.u32()? as usize;
    let w = r.u32()? as usize;
    let c = r.u32()? as usize;
    if t < 2 || h == 0 || w == 0 || c == 0 {
        return Err(DataError::InvalidHeader(format!(
            "dimensions {t}x{h}x{w}x{c} (need at least 2 frames and non-zero sizes)"
        )));
    }
    let frame_len = h
        .checked_mul(w)
        .and_then(|v| v.checked_mul(c))
        .ok_or_else(|| DataError::InvalidHeader("frame size overflows".into()))?;
    let total = frame_len
        .checked_mul(t)
        .and_then(|v| v.checked_mul(4))
        .ok_or_else(|| DataError::InvalidHeader("payload size overflows".into()))?;
    if r.remaining() < total {
        return Err(DataError::Truncated {
            needed: 24usize.saturating_add(total),
            available: bytes.len(),
        });
    }
    let mut frames = Vec::with_capacity(t);
    for f in 0..t {
        let data = r.f32s(frame_len)?;
        if let Some((i, &value)) = data
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(DataError::OutOfRange {
                index: f * frame_len + i,
                value,
            });
        }
        frames.push(Frame::new(h, w, c, data, RangeCheck::UnitInterval)?);
    }
    r.finish()?;
    Ok(VideoSequence::new(frames, id)?)
}

pub fn write_video(path: impl AsRef<Path>, video: &VideoSequence) -> Result<(), DataError> {
    let path = path.as_ref();
    fs::write(path, encode_video(video)).map_err(|e| DataError::io(path, e))
}

/// Read a `.vseq` file; the video id is the file stem.
pub fn read_video(path: impl AsRef<Path>) -> Result<VideoSequence, DataError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| DataError::io(path, e))?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    decode_video(&bytes, &id)
}
