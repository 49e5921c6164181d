use serde::{Deserialize, Serialize};
use std::fmt;

use super::DetectorError;

/// One trainable stage of the detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerSpec {
    /// 3x3 convolution (stride 1, zero padding 1), rectifier, 2x2 max-pool.
    Conv {
        in_channels: usize,
        out_channels: usize,
    },
    /// Fully connected layer, optionally followed by a rectifier.
    Dense {
        inputs: usize,
        outputs: usize,
        relu: bool,
    },
}

impl LayerSpec {
    /// `(weight count, bias count)`.
    pub fn param_counts(&self) -> (usize, usize) {
        match *self {
            LayerSpec::Conv {
                in_channels,
                out_channels,
            } => (9 * in_channels * out_channels, out_channels),
            LayerSpec::Dense {
                inputs, outputs, ..
            } => (inputs * outputs, outputs),
        }
    }

    pub fn fan_in(&self) -> usize {
        match *self {
            LayerSpec::Conv { in_channels, .. } => 9 * in_channels,
            LayerSpec::Dense { inputs, .. } => inputs,
        }
    }
}

/// What the detector consumes: transition frames, or raw frames for the
/// ablation that skips the transition step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputMode {
    #[default]
    Transition,
    Original,
}

impl fmt::Display for InputMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InputMode::Transition => "transition",
            InputMode::Original => "original",
        })
    }
}

impl std::str::FromStr for InputMode {
    type Err = DetectorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "transition" => Ok(InputMode::Transition),
            "original" => Ok(InputMode::Original),
            other => Err(DetectorError::InvalidConfig(format!(
                "unknown input mode {other:?}"
            ))),
        }
    }
}

pub const DEFAULT_CONV_CHANNELS: [usize; 3] = [16, 32, 64];
pub const DEFAULT_DENSE_WIDTHS: [usize; 1] = [128];
pub const NUM_CLASSES: usize = 2;

/// Layer stack of the binary detector: conv blocks, hidden dense layers with
/// rectifiers, and a linear 2-way output followed by softmax.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectorArchitecture {
    input_shape: (usize, usize, usize),
    layers: Vec<LayerSpec>,
}

impl DetectorArchitecture {
    pub fn new(
        input_shape: (usize, usize, usize),
        conv_channels: &[usize],
        dense_widths: &[usize],
    ) -> Result<Self, DetectorError> {
        let (h, w, c) = input_shape;
        let mut layers = Vec::new();
        let mut channels = c;
        for &out in conv_channels {
            layers.push(LayerSpec::Conv {
                in_channels: channels,
                out_channels: out,
            });
            channels = out;
        }
        let scale = 1usize
            .checked_shl(conv_channels.len() as u32)
            .unwrap_or(usize::MAX);
        let mut features = (h / scale.max(1)) * (w / scale.max(1)) * channels;
        for &width in dense_widths {
            layers.push(LayerSpec::Dense {
                inputs: features,
                outputs: width,
                relu: true,
            });
            features = width;
        }
        layers.push(LayerSpec::Dense {
            inputs: features,
            outputs: NUM_CLASSES,
            relu: false,
        });
        Self::from_layers(input_shape, layers)
    }

    /// 16/32/64-channel conv blocks, one 128-wide hidden layer.
    pub fn default_for(input_shape: (usize, usize, usize)) -> Result<Self, DetectorError> {
        Self::new(input_shape, &DEFAULT_CONV_CHANNELS, &DEFAULT_DENSE_WIDTHS)
    }

    /// Validate an explicit layer list (as read from a model file).
    pub fn from_layers(
        input_shape: (usize, usize, usize),
        layers: Vec<LayerSpec>,
    ) -> Result<Self, DetectorError> {
        let invalid = |msg: String| Err(DetectorError::InvalidArchitecture(msg));
        let (mut h, mut w, mut c) = input_shape;
        if h == 0 || w == 0 || c == 0 {
            return invalid(format!("input shape {input_shape:?} has a zero dimension"));
        }
        let mut flat: Option<usize> = None;
        for (i, layer) in layers.iter().enumerate() {
            match *layer {
                LayerSpec::Conv {
                    in_channels,
                    out_channels,
                } => {
                    if flat.is_some() {
                        return invalid(format!("layer {i}: convolution after a dense layer"));
                    }
                    if in_channels != c || out_channels == 0 {
                        return invalid(format!(
                            "layer {i}: conv expects {c} input channels, got {in_channels}->{out_channels}"
                        ));
                    }
                    if h % 2 != 0 || w % 2 != 0 {
                        return invalid(format!(
                            "layer {i}: spatial size {h}x{w} is not divisible by 2 for pooling"
                        ));
                    }
                    h /= 2;
                    w /= 2;
                    c = out_channels;
                }
                LayerSpec::Dense {
                    inputs, outputs, ..
                } => {
                    let expected = match flat {
                        Some(f) => f,
                        None => h
                            .checked_mul(w)
                            .and_then(|v| v.checked_mul(c))
                            .unwrap_or(usize::MAX),
                    };
                    if inputs != expected || outputs == 0 {
                        return invalid(format!(
                            "layer {i}: dense expects {expected} inputs, got {inputs}->{outputs}"
                        ));
                    }
                    flat = Some(outputs);
                }
            }
        }
        match layers.last() {
            Some(LayerSpec::Dense {
                outputs: NUM_CLASSES,
                relu: false,
                ..
            }) => {}
            _ => return invalid("final layer must be a linear dense layer of width 2".into()),
        }
        // Guard against absurd parameter counts from corrupted descriptors.
        let total = layers.iter().try_fold(0usize, |acc, l| {
            let (wc, bc) = l.param_counts();
            acc.checked_add(wc)?.checked_add(bc)
        });
        match total {
            Some(t) if t <= MAX_PARAMS => {}
            _ => return invalid("parameter count exceeds limit".into()),
        }
        Ok(Self {
            input_shape,
            layers,
        })
    }

    pub fn input_shape(&self) -> (usize, usize, usize) {
        self.input_shape
    }

    pub fn input_len(&self) -> usize {
        let (h, w, c) = self.input_shape;
        h * w * c
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| {
                let (w, b) = l.param_counts();
                w + b
            })
            .sum()
    }

    /// Spatial size `(h, w)` of the input to each conv layer.
    pub(crate) fn conv_input_sizes(&self) -> Vec<(usize, usize)> {
        let (mut h, mut w, _) = self.input_shape;
        let mut sizes = Vec::new();
        for layer in &self.layers {
            if let LayerSpec::Conv { .. } = layer {
                sizes.push((h, w));
                h /= 2;
                w /= 2;
            }
        }
        sizes
    }
}

/// Upper bound on parameters accepted from a descriptor (256M).
pub const MAX_PARAMS: usize = 1 << 28;
