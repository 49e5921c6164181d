//! Synthetic videos: a static background with bright objects moving at a
//! constant velocity. Objects are drawn with hard edges so every pixel is
//! either exactly background or exactly object colour, which makes the
//! transition-frame structure easy to reason about.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::DataError;
use crate::exec::Execution;
use crate::frame::{Frame, VideoSequence};
use crate::perturb::RngSeed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackgroundMode {
    /// Independent uniform value per pixel and channel.
    #[default]
    UniformRandom,
    /// Smooth linear ramp per channel.
    Gradient,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub video_count: usize,
    pub frames_per_video: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub object_count: usize,
    /// Range of object speeds in pixels per frame; directions are uniform.
    pub velocity_range: (f64, f64),
    pub background_mode: BackgroundMode,
    pub seed: RngSeed,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            video_count: 1,
            frames_per_video: 16,
            height: 64,
            width: 64,
            channels: 3,
            object_count: 1,
            velocity_range: (1.0, 3.0),
            background_mode: BackgroundMode::UniformRandom,
            seed: RngSeed(0),
        }
    }
}

pub const MIN_SYNTH_DIM: usize = 8;

/// Background intensities stay in this band and objects in the one above it,
/// leaving headroom for perturbations before clamping.
const BACKGROUND_RANGE: (f32, f32) = (0.05, 0.65);
const OBJECT_RANGE: (f32, f32) = (0.7, 0.95);

impl SynthConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: String| Err(DataError::InvalidConfig(m));
        if self.video_count == 0 {
            return bad("video count must be positive".into());
        }
        if self.frames_per_video < 2 {
            return bad("videos need at least 2 frames".into());
        }
        if self.height < MIN_SYNTH_DIM || self.width < MIN_SYNTH_DIM {
            return bad(format!(
                "frame size {}x{} is below the minimum {MIN_SYNTH_DIM}",
                self.height, self.width
            ));
        }
        if self.channels == 0 {
            return bad("channels must be positive".into());
        }
        if self.object_count == 0 {
            return bad("object count must be positive".into());
        }
        let (lo, hi) = self.velocity_range;
        let limit = self.height.min(self.width) as f64 / 4.0;
        if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi && hi <= limit) {
            return bad(format!(
                "velocity range [{lo}, {hi}] must satisfy 0 <= lo <= hi <= {limit}"
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Shape {
    Rect,
    Disc,
}

#[derive(Debug, Clone)]
struct Object {
    shape: Shape,
    size_y: usize,
    size_x: usize,
    color: Vec<f32>,
    y0: f64,
    x0: f64,
    vy: f64,
    vx: f64,
}

impl Object {
    /// Top-left corner at frame `t`, rounded to whole pixels.
    fn origin(&self, t: usize) -> (i64, i64) {
        (
            (self.y0 + self.vy * t as f64).round() as i64,
            (self.x0 + self.vx * t as f64).round() as i64,
        )
    }

    fn covers(&self, dy: usize, dx: usize) -> bool {
        match self.shape {
            Shape::Rect => true,
            Shape::Disc => {
                let ry = self.size_y as f64 / 2.0;
                let rx = self.size_x as f64 / 2.0;
                let py = (dy as f64 + 0.5 - ry) / ry;
                let px = (dx as f64 + 0.5 - rx) / rx;
                py * py + px * px <= 1.0
            }
        }
    }
}

/// A generated video together with, per frame, which pixels are covered by
/// an object.
#[derive(Debug, Clone)]
pub struct SyntheticVideo {
    pub video: VideoSequence,
    /// `coverage[t][row * width + col]`.
    pub coverage: Vec<Vec<bool>>,
}

impl SyntheticVideo {
    /// True when no object touches pixel `(row, col)` in frames `t-1..=t+1`.
    pub fn is_static_background(&self, t: usize, row: usize, col: usize) -> bool {
        let w = self.video.frame_shape().1;
        let lo = t.saturating_sub(1);
        let hi = (t + 1).min(self.coverage.len() - 1);
        (lo..=hi).all(|s| !self.coverage[s][row * w + col])
    }
}

pub fn synth_videos(cfg: &SynthConfig) -> Result<Vec<VideoSequence>, DataError> {
    Ok(synth_videos_with_coverage(cfg)?
        .into_iter()
        .map(|s| s.video)
        .collect())
}

/// Video `i` uses its own random stream, so the output does not depend on
/// whether videos are generated in parallel.
pub fn synth_videos_with_coverage(cfg: &SynthConfig) -> Result<Vec<SyntheticVideo>, DataError> {
    cfg.validate()?;
    Execution::default()
        .map_range(cfg.video_count, |i| synth_one(cfg, i))
        .into_iter()
        .collect()
}

fn synth_one(cfg: &SynthConfig, index: usize) -> Result<SyntheticVideo, DataError> {
    let mut rng = cfg.seed.stream(index as u64);
    let (h, w, c) = (cfg.height, cfg.width, cfg.channels);
    let background = make_background(&mut rng, cfg);

    let min_dim = h.min(w);
    let objects: Vec<Object> = (0..cfg.object_count)
        .map(|_| {
            let lo = (min_dim / 8).max(2);
            let hi = (min_dim / 4).max(lo);
            let size_y = rng.random_range(lo..=hi);
            let size_x = rng.random_range(lo..=hi);
            let speed = if cfg.velocity_range.1 > cfg.velocity_range.0 {
                rng.random_range(cfg.velocity_range.0..=cfg.velocity_range.1)
            } else {
                cfg.velocity_range.0
            };
            let angle = rng.random_range(0.0..std::f64::consts::TAU);
            Object {
                shape: if rng.random_bool(0.5) {
                    Shape::Rect
                } else {
                    Shape::Disc
                },
                size_y,
                size_x,
                color: (0..c)
                    .map(|_| rng.random_range(OBJECT_RANGE.0..=OBJECT_RANGE.1))
                    .collect(),
                y0: rng.random_range(0.0..=(h - size_y) as f64),
                x0: rng.random_range(0.0..=(w - size_x) as f64),
                vy: speed * angle.sin(),
                vx: speed * angle.cos(),
            }
        })
        .collect();

    let mut frames = Vec::with_capacity(cfg.frames_per_video);
    let mut coverage = Vec::with_capacity(cfg.frames_per_video);
    for t in 0..cfg.frames_per_video {
        let mut data = background.clone();
        let mut covered = vec![false; h * w];
        for obj in &objects {
            let (oy, ox) = obj.origin(t);
            for dy in 0..obj.size_y {
                let y = oy + dy as i64;
                if y < 0 || y >= h as i64 {
                    continue;
                }
                for dx in 0..obj.size_x {
                    let x = ox + dx as i64;
                    if x < 0 || x >= w as i64 || !obj.covers(dy, dx) {
                        continue;
                    }
                    let p = y as usize * w + x as usize;
                    covered[p] = true;
                    data[p * c..(p + 1) * c].copy_from_slice(&obj.color);
                }
            }
        }
        frames.push(Frame::new(
            h,
            w,
            c,
            data,
            crate::frame::RangeCheck::UnitInterval,
        )?);
        coverage.push(covered);
    }
    let video = VideoSequence::new(frames, format!("synth_{index:05}"))?;
    Ok(SyntheticVideo { video, coverage })
}

fn make_background<R: Rng + ?Sized>(rng: &mut R, cfg: &SynthConfig) -> Vec<f32> {
    let (h, w, c) = (cfg.height, cfg.width, cfg.channels);
    let (lo, hi) = BACKGROUND_RANGE;
    match cfg.background_mode {
        BackgroundMode::UniformRandom => {
            (0..h * w * c).map(|_| rng.random_range(lo..=hi)).collect()
        }
        BackgroundMode::Gradient => {
            let ramps: Vec<(f32, f32, f32)> = (0..c)
                .map(|_| {
                    let a = rng.random_range(lo..=hi);
                    let b = rng.random_range(lo..=hi);
                    (a, b, rng.random_range(0.0f32..=1.0))
                })
                .collect();
            let mut out = Vec::with_capacity(h * w * c);
            for y in 0..h {
                for x in 0..w {
                    for &(a, b, mix) in &ramps {
                        let fy = y as f32 / (h - 1) as f32;
                        let fx = x as f32 / (w - 1) as f32;
                        let s = mix * fy + (1.0 - mix) * fx;
                        out.push((a + (b - a) * s).clamp(lo, hi));
                    }
                }
            }
            out
        }
    }
}
