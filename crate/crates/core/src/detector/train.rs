//! Pseudo-adversarial training: every clean frame contributes its transition
//! frame labeled clean and a noisy copy labeled adversarial, with the noise
//! level redrawn for each frame in each epoch.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::arch::{DetectorArchitecture, InputMode, DEFAULT_CONV_CHANNELS, DEFAULT_DENSE_WIDTHS};
use super::network::Network;
use super::optim::sgd_step;
use super::{DetectorError, DetectorModel};
use crate::exec::Execution;
use crate::frame::{Frame, FrameLabel, VideoSequence};
use crate::perturb::{gaussian_mask, sample_sigma, RngSeed, SigmaMode};
use crate::transition::transition_sequence_with;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub sigma_mode: SigmaMode,
    pub input_mode: InputMode,
    pub seed: RngSeed,
    /// Run every data-parallel loop sequentially. Results are bitwise
    /// identical either way; this only removes the thread pool.
    pub deterministic: bool,
    pub conv_channels: Vec<usize>,
    pub dense_widths: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 32,
            learning_rate: 1e-3,
            momentum: 0.9,
            sigma_mode: SigmaMode::default(),
            input_mode: InputMode::Transition,
            seed: RngSeed(0),
            deterministic: false,
            conv_channels: DEFAULT_CONV_CHANNELS.to_vec(),
            dense_widths: DEFAULT_DENSE_WIDTHS.to_vec(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), DetectorError> {
        let bad = |m: &str| Err(DetectorError::InvalidConfig(m.to_string()));
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning rate must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must be in [0, 1)");
        }
        self.sigma_mode
            .validate()
            .map_err(|e| DetectorError::InvalidConfig(e.to_string()))
    }

    pub fn execution(&self) -> Execution {
        if self.deterministic {
            Execution::Sequential
        } else {
            Execution::Parallel
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
}

impl TrainHistory {
    pub fn final_accuracy(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.accuracy)
    }
}

/// Number of training examples per epoch: one clean and one pseudo-adversarial
/// example per frame.
pub fn examples_per_epoch(videos: &[VideoSequence]) -> usize {
    2 * videos.iter().map(VideoSequence::len).sum::<usize>()
}

pub fn train(
    videos: &[VideoSequence],
    config: &TrainConfig,
) -> Result<(DetectorModel, TrainHistory), DetectorError> {
    train_with_progress(videos, config, |_| {})
}

/// [`train`], reporting each finished epoch to `on_epoch`.
pub fn train_with_progress(
    videos: &[VideoSequence],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<(DetectorModel, TrainHistory), DetectorError> {
    config.validate()?;
    let first = videos.first().ok_or(DetectorError::EmptyCorpus)?;
    let shape = first.frame_shape();
    if let Some(v) = videos.iter().find(|v| v.frame_shape() != shape) {
        return Err(DetectorError::FrameShape {
            expected: shape,
            actual: v.frame_shape(),
        });
    }
    let arch = DetectorArchitecture::new(shape, &config.conv_channels, &config.dense_widths)?;
    let exec = config.execution();

    let bases = training_inputs(videos, config.input_mode, exec);
    let per = arch.input_len();
    let n_base = bases.len();

    let mut network = Network::<f32>::init(arch, &mut config.seed.derive(0).rng());
    let mut velocity = network.params().zeros_like();
    let mut order: Vec<usize> = (0..2 * n_base).collect();
    let mut history = TrainHistory::default();

    for epoch in 0..config.epochs {
        let epoch_seed = config.seed.derive(1 + epoch as u64);
        order.sort_unstable();
        order.shuffle(&mut epoch_seed.rng());
        let noise_seed = epoch_seed.derive(u64::MAX);

        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for batch in order.chunks(config.batch_size) {
            let mut input = vec![0.0f32; batch.len() * per];
            let labels: Vec<FrameLabel> = batch
                .iter()
                .map(|&i| {
                    if i < n_base {
                        FrameLabel::Clean
                    } else {
                        FrameLabel::Adversarial
                    }
                })
                .collect();
            exec.for_each_chunk_mut(&mut input, per, |slot, out| {
                let example = batch[slot];
                let base = bases[example % n_base].data();
                if example < n_base {
                    out.copy_from_slice(base);
                } else {
                    // One stream per example: the noise does not depend on
                    // batch composition or scheduling.
                    let mut rng = noise_seed.stream(example as u64);
                    let sigma = sample_sigma(&mut rng, config.sigma_mode);
                    let mask =
                        gaussian_mask(&mut rng, shape, sigma).expect("sigma validated positive");
                    for ((o, b), m) in out.iter_mut().zip(base).zip(mask.data()) {
                        *o = b + m;
                    }
                }
            });
            let step = network.loss_and_grads(&input, &labels, exec)?;
            loss_sum += step.loss * batch.len() as f64;
            correct += step.correct;
            let lr = config.learning_rate;
            sgd_step(
                network.params_mut(),
                &step.grads,
                &mut velocity,
                lr,
                config.momentum,
            )?;
        }
        if !network.params().is_finite() {
            return Err(DetectorError::NonFiniteWeights);
        }
        let total = order.len() as f64;
        let stats = EpochStats {
            epoch,
            mean_loss: loss_sum / total,
            accuracy: correct as f64 / total,
        };
        on_epoch(&stats);
        history.epochs.push(stats);
    }

    let model = DetectorModel::new(network, config.input_mode, true)?;
    Ok((model, history))
}

/// Clean detector inputs for every frame of every video, in corpus order.
fn training_inputs(videos: &[VideoSequence], mode: InputMode, exec: Execution) -> Vec<Frame> {
    match mode {
        InputMode::Transition => exec
            .map(videos, |v| {
                transition_sequence_with(v, Execution::Sequential).into_frames()
            })
            .into_iter()
            .flatten()
            .collect(),
        InputMode::Original => videos
            .iter()
            .flat_map(|v| v.frames().iter().cloned())
            .collect(),
    }
}
