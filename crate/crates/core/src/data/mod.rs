//! Binary file formats, image-directory ingestion and the synthetic video
//! generator.

mod images;
mod patm;
mod synth;
mod vseq;

pub use images::load_image_dir;
pub use patm::{decode_model, encode_model, load_model, save_model, MODEL_MAGIC, MODEL_VERSION};
pub use synth::{
    synth_videos, synth_videos_with_coverage, BackgroundMode, SynthConfig, SyntheticVideo,
};
pub use vseq::{decode_video, encode_video, read_video, write_video, VIDEO_MAGIC, VIDEO_VERSION};

use std::path::PathBuf;
use thiserror::Error;

use crate::detector::DetectorError;
use crate::frame::FrameError;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic {found:?}, expected {expected:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated input: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("{0} unexpected trailing bytes")]
    TrailingBytes(usize),
    #[error("invalid header: {0}")]
    InvalidHeader(String),
    #[error("pixel value {value} at index {index} is outside [0, 1]")]
    OutOfRange { index: usize, value: f32 },
    #[error("{path}: {message}")]
    Image { path: PathBuf, message: String },
    #[error("invalid synthetic-data configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Model(#[from] DetectorError),
}

impl DataError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DataError::Io {
            path: path.into(),
            source,
        }
    }
}

/// Little-endian cursor over a byte slice that reports truncation as a typed
/// error instead of panicking.
pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub(crate) fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8], DataError> {
        if self.remaining() < n {
            return Err(DataError::Truncated {
                needed: self.pos.saturating_add(n),
                available: self.bytes.len(),
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub(crate) fn magic(&mut self, expected: [u8; 4]) -> Result<(), DataError> {
        let found: [u8; 4] = self.take(4)?.try_into().expect("4 bytes");
        if found != expected {
            return Err(DataError::BadMagic { expected, found });
        }
        Ok(())
    }

    pub(crate) fn u32(&mut self) -> Result<u32, DataError> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    /// `count` little-endian `f32`s; the length is checked before allocating.
    pub(crate) fn f32s(&mut self, count: usize) -> Result<Vec<f32>, DataError> {
        let bytes = count
            .checked_mul(4)
            .ok_or_else(|| DataError::InvalidHeader("payload size overflows".into()))?;
        let raw = self.take(bytes)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect())
    }

    pub(crate) fn finish(&self) -> Result<(), DataError> {
        match self.remaining() {
            0 => Ok(()),
            n => Err(DataError::TrailingBytes(n)),
        }
    }
}
