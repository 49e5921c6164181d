//! Detection of adversarially perturbed video frames.
//!
//! The pipeline turns each frame into a *transition frame* (the mean of its
//! temporal neighbours minus the frame), which cancels static content and
//! exposes per-frame perturbations. A small convolutional classifier is
//! trained to separate clean transition frames from copies carrying random
//! Gaussian *pseudo perturbations*, so no knowledge of the real attack is
//! needed. Frame scores are aggregated into a video verdict and evaluated with
//! frame/video detection rates and ROC analysis.
//!
//! Data-parallel loops run on rayon when the `parallel` feature (default) is
//! enabled; see [`exec::Execution`].

pub mod data;
pub mod detector;
pub mod exec;
pub mod frame;
pub mod metrics;
pub mod perturb;
pub mod transition;

pub use detector::{DetectorArchitecture, DetectorModel, InputMode, TrainConfig, TrainHistory};
pub use exec::Execution;
pub use frame::{DetectionReport, Frame, FrameLabel, LabeledFrameSet, RangeCheck, VideoSequence};
pub use perturb::{RngSeed, SigmaMode};
pub use transition::{transition_frame, transition_sequence, TransitionSequence};
