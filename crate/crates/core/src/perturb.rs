//! Pseudo perturbations for training and surrogate attacks for evaluation.
//!
//! All randomness comes from [`ChaCha8Rng`] streams derived from an
//! [`RngSeed`]. Gaussian samples are drawn in 64-bit with the ziggurat sampler
//! of `rand_distr::StandardNormal`, scaled by sigma and rounded to `f32`, so a
//! given seed reproduces the same mask bit for bit on every build of this
//! crate.

use crate::frame::{Frame, FrameError, FrameLabel, VideoSequence};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

pub type DetRng = ChaCha8Rng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PerturbError {
    #[error("sigma must be finite and in (0, 1], got {0}")]
    InvalidSigma(f64),
    #[error("sigma range must satisfy 0 < lo < hi <= 1, got [{0}, {1}]")]
    InvalidSigmaRange(f64, f64),
    #[error("rho must be in (0, 1], got {0}")]
    InvalidRho(f64),
    #[error("epsilon must be finite and positive, got {0}")]
    InvalidEpsilon(f64),
    #[error("cannot parse sigma mode {0:?}; expected varying:LO:HI or fixed:V")]
    BadSigmaMode(String),
    #[error(transparent)]
    Frame(#[from] FrameError),
}

/// Seed for a deterministic random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngSeed(pub u64);

impl RngSeed {
    pub fn rng(self) -> DetRng {
        DetRng::seed_from_u64(self.0)
    }

    /// Independent stream `stream` of this seed. Used to hand each parallel
    /// worker (video, example, ...) its own generator.
    pub fn stream(self, stream: u64) -> DetRng {
        let mut rng = self.rng();
        rng.set_stream(stream);
        rng
    }

    /// A new seed derived from this one and a tag, for nesting streams.
    pub fn derive(self, tag: u64) -> RngSeed {
        // splitmix64 finalizer
        let mut z = self.0 ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        RngSeed(z ^ (z >> 31))
    }
}

/// How the noise standard deviation is chosen for each pseudo-adversarial
/// frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SigmaMode {
    /// Redrawn uniformly from `[lo, hi]` for every frame.
    Varying {
        lo: f64,
        hi: f64,
    },
    Fixed {
        value: f64,
    },
}

/// Default sigma range for pseudo perturbations on unit-scale pixels.
pub const DEFAULT_SIGMA_RANGE: (f64, f64) = (0.0001, 0.05);

impl Default for SigmaMode {
    fn default() -> Self {
        SigmaMode::Varying {
            lo: DEFAULT_SIGMA_RANGE.0,
            hi: DEFAULT_SIGMA_RANGE.1,
        }
    }
}

impl SigmaMode {
    pub fn varying(lo: f64, hi: f64) -> Result<Self, PerturbError> {
        let mode = SigmaMode::Varying { lo, hi };
        mode.validate()?;
        Ok(mode)
    }

    pub fn fixed(value: f64) -> Result<Self, PerturbError> {
        let mode = SigmaMode::Fixed { value };
        mode.validate()?;
        Ok(mode)
    }

    pub fn validate(&self) -> Result<(), PerturbError> {
        match *self {
            SigmaMode::Varying { lo, hi } => {
                if lo.is_finite() && hi.is_finite() && 0.0 < lo && lo < hi && hi <= 1.0 {
                    Ok(())
                } else {
                    Err(PerturbError::InvalidSigmaRange(lo, hi))
                }
            }
            SigmaMode::Fixed { value } => {
                if value.is_finite() && 0.0 < value && value <= 1.0 {
                    Ok(())
                } else {
                    Err(PerturbError::InvalidSigma(value))
                }
            }
        }
    }
}

impl fmt::Display for SigmaMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SigmaMode::Varying { lo, hi } => write!(f, "varying:{lo}:{hi}"),
            SigmaMode::Fixed { value } => write!(f, "fixed:{value}"),
        }
    }
}

impl FromStr for SigmaMode {
    type Err = PerturbError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || PerturbError::BadSigmaMode(s.to_string());
        let parts: Vec<&str> = s.split(':').collect();
        let num = |p: &str| p.trim().parse::<f64>().map_err(|_| bad());
        match parts.as_slice() {
            ["varying", lo, hi] => SigmaMode::varying(num(lo)?, num(hi)?),
            ["fixed", v] => SigmaMode::fixed(num(v)?),
            _ => Err(bad()),
        }
    }
}

pub fn sample_sigma<R: Rng + ?Sized>(rng: &mut R, mode: SigmaMode) -> f64 {
    match mode {
        SigmaMode::Varying { lo, hi } => rng.random_range(lo..=hi),
        SigmaMode::Fixed { value } => value,
    }
}

/// IID `N(0, sigma^2)` noise shaped like a `(height, width, channels)` frame.
pub fn gaussian_mask<R: Rng + ?Sized>(
    rng: &mut R,
    shape: (usize, usize, usize),
    sigma: f64,
) -> Result<Frame, PerturbError> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(PerturbError::InvalidSigma(sigma));
    }
    let (h, w, c) = shape;
    let len = h * w * c;
    let data = (0..len)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            (z * sigma) as f32
        })
        .collect();
    Ok(Frame::new(h, w, c, data, crate::frame::RangeCheck::Finite)?)
}

/// Transition frame plus Gaussian noise with a freshly drawn sigma. Not
/// clamped: the noise lives in signed transition space.
pub fn pseudo_adversarial<R: Rng + ?Sized>(
    tr: &Frame,
    rng: &mut R,
    mode: SigmaMode,
) -> Result<Frame, PerturbError> {
    mode.validate()?;
    let sigma = sample_sigma(rng, mode);
    let mask = gaussian_mask(rng, tr.shape(), sigma)?;
    Ok(tr.add(&mask)?)
}

/// Number of frames a sparse attack with ratio `rho` perturbs in a video of
/// `frames` frames: `ceil(rho * frames)`, immune to representation error in
/// `rho` (0.225 * 40 is 9, not 10).
pub fn sparse_frame_count(rho: f64, frames: usize) -> usize {
    let exact = rho * frames as f64;
    let count = (exact - 1e-9 * exact.max(1.0)).ceil().max(1.0) as usize;
    count.min(frames)
}

/// Gaussian pixel noise on a random `ceil(rho * T)` subset of frames, clamped
/// to `[0, 1]`. Returns the attacked video and per-frame ground truth.
pub fn surrogate_sparse_attack<R: Rng + ?Sized>(
    video: &VideoSequence,
    rho: f64,
    sigma_atk: f64,
    rng: &mut R,
) -> Result<(VideoSequence, Vec<FrameLabel>), PerturbError> {
    if !(rho.is_finite() && rho > 0.0 && rho <= 1.0) {
        return Err(PerturbError::InvalidRho(rho));
    }
    if !(sigma_atk.is_finite() && sigma_atk > 0.0) {
        return Err(PerturbError::InvalidSigma(sigma_atk));
    }
    let t = video.len();
    let k = sparse_frame_count(rho, t);
    let mut labels = vec![FrameLabel::Clean; t];
    for i in index::sample(rng, t, k) {
        labels[i] = FrameLabel::Adversarial;
    }
    let shape = video.frame_shape();
    let mut frames = Vec::with_capacity(t);
    for (frame, label) in video.frames().iter().zip(&labels) {
        if label.is_adversarial() {
            let noise = gaussian_mask(rng, shape, sigma_atk)?;
            let data = frame
                .data()
                .iter()
                .zip(noise.data())
                .map(|(x, n)| (x + n).clamp(0.0, 1.0))
                .collect();
            frames.push(Frame::from_parts(shape, data));
        } else {
            frames.push(frame.clone());
        }
    }
    Ok((VideoSequence::new(frames, video.id())?, labels))
}

/// One universal pattern drawn uniformly from `[-eps, eps]` and added to every
/// frame, clamped to `[0, 1]`. With `circular_shift`, frame `t` receives the
/// pattern rolled down by `t` rows. Every frame is labeled adversarial.
pub fn surrogate_dense_attack<R: Rng + ?Sized>(
    video: &VideoSequence,
    eps: f64,
    rng: &mut R,
    circular_shift: bool,
) -> Result<(VideoSequence, Vec<FrameLabel>), PerturbError> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(PerturbError::InvalidEpsilon(eps));
    }
    let shape = video.frame_shape();
    let (h, w, c) = shape;
    let row_len = w * c;
    let pattern: Vec<f32> = (0..h * row_len)
        .map(|_| rng.random_range(-eps..=eps) as f32)
        .collect();
    let frames = video
        .frames()
        .iter()
        .enumerate()
        .map(|(t, frame)| {
            let shift = if circular_shift { t % h } else { 0 };
            let mut data = Vec::with_capacity(frame.len());
            for row in 0..h {
                let src = (row + h - shift) % h;
                let p = &pattern[src * row_len..(src + 1) * row_len];
                let x = &frame.data()[row * row_len..(row + 1) * row_len];
                data.extend(x.iter().zip(p).map(|(a, b)| (a + b).clamp(0.0, 1.0)));
            }
            Frame::from_parts(shape, data)
        })
        .collect();
    let labels = vec![FrameLabel::Adversarial; video.len()];
    Ok((VideoSequence::new(frames, video.id())?, labels))
}
