//! Transition frames: the mean of a frame's two temporal neighbours minus the
//! frame itself. Static content cancels; motion and per-frame perturbations
//! remain.

use crate::exec::Execution;
use crate::frame::{Frame, FrameError, VideoSequence};

/// Transition frames aligned one-to-one with a source video.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionSequence {
    frames: Vec<Frame>,
    source_id: String,
}

impl TransitionSequence {
    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<Frame> {
        self.frames
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// `(prev + next) / 2 - cur`, elementwise.
pub fn transition_frame(prev: &Frame, cur: &Frame, next: &Frame) -> Result<Frame, FrameError> {
    cur.check_same_shape(prev)?;
    cur.check_same_shape(next)?;
    let data = prev
        .data()
        .iter()
        .zip(cur.data())
        .zip(next.data())
        .map(|((&p, &c), &n)| (p + n) * 0.5 - c)
        .collect();
    Ok(Frame::from_parts(cur.shape(), data))
}

/// Transition frame for index `t` of `frames`.
///
/// The first frame has no predecessor, so its neighbour average is replaced by
/// the second frame (`X2 - X1`); symmetrically the last uses the second-last
/// (`X[T-1] - X[T]`). With two frames both rules apply.
pub fn transition_at(frames: &[Frame], t: usize) -> Result<Frame, FrameError> {
    let n = frames.len();
    if n < 2 {
        return Err(FrameError::TooShort(n));
    }
    if t == 0 {
        frames[1].sub(&frames[0])
    } else if t == n - 1 {
        frames[n - 2].sub(&frames[n - 1])
    } else {
        transition_frame(&frames[t - 1], &frames[t], &frames[t + 1])
    }
}

pub fn transition_sequence(video: &VideoSequence) -> TransitionSequence {
    transition_sequence_with(video, Execution::default())
}

/// As [`transition_sequence`], choosing how frames are scheduled. Output is
/// identical for both modes.
pub fn transition_sequence_with(video: &VideoSequence, exec: Execution) -> TransitionSequence {
    let frames = video.frames();
    let out = exec.map_range(frames.len(), |t| {
        transition_at(frames, t).expect("validated video has uniform shape and length >= 2")
    });
    TransitionSequence {
        frames: out,
        source_id: video.id().to_string(),
    }
}
