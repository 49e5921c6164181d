#![allow(dead_code)]

//! Central finite-difference oracle for the detector's analytic gradients,
//! in 64-bit on a tiny 8x8 model.

use pat_core::detector::{DetectorArchitecture, Network};
use pat_core::{Execution, FrameLabel, RngSeed};
use rand::Rng;

pub const H: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
/// Gradients smaller than this are compared absolutely: finite differences of
/// an O(1) loss cannot resolve them to 1e-4 relative precision.
pub const FLOOR: f64 = 1e-6;

/// Mean cross-entropy computed from forward probabilities only.
pub fn loss(net: &Network<f64>, input: &[f64], labels: &[FrameLabel]) -> f64 {
    let probs = net
        .forward(input, labels.len(), Execution::Sequential)
        .unwrap();
    probs
        .iter()
        .zip(labels)
        .map(|(p, l)| -p[l.as_index()].ln())
        .sum::<f64>()
        / labels.len() as f64
}

pub fn random_instance(seed: u64) -> (Network<f64>, Vec<f64>, Vec<FrameLabel>) {
    let arch = DetectorArchitecture::new((8, 8, 3), &[3, 4], &[5]).unwrap();
    let mut rng = RngSeed(seed).rng();
    let mut net = Network::<f64>::init(arch, &mut rng);
    // Non-zero biases so their gradients are exercised away from init.
    for (i, t) in net.params_mut().tensors_mut().iter_mut().enumerate() {
        if i % 2 == 1 {
            t.iter_mut().for_each(|b| *b = rng.random_range(-0.1..0.1));
        }
    }
    let n = 3;
    let input = (0..n * 192).map(|_| rng.random_range(-1.0..1.0)).collect();
    let labels = (0..n)
        .map(|_| {
            if rng.random_bool(0.5) {
                FrameLabel::Adversarial
            } else {
                FrameLabel::Clean
            }
        })
        .collect();
    (net, input, labels)
}

/// One-sided slopes further apart than this mean a rectifier or max-pool
/// switched inside [w - h, w + h]; the loss is not differentiable there and
/// central differences say nothing about the analytic gradient.
pub const KINK_SLOPE_GAP: f64 = 1e-3;

pub enum Outcome {
    Smooth { worst: f64 },
    Kink,
}

pub fn check(seed: u64) -> Outcome {
    let (mut net, input, labels) = random_instance(seed);
    let analytic = net
        .loss_and_grads(&input, &labels, Execution::Sequential)
        .unwrap()
        .grads;
    let base = loss(&net, &input, &labels);
    let mut worst: f64 = 0.0;
    for i in 0..net.params().len() {
        let w = net.params().get_flat(i);
        net.params_mut().set_flat(i, w + H);
        let up = loss(&net, &input, &labels);
        net.params_mut().set_flat(i, w - H);
        let down = loss(&net, &input, &labels);
        net.params_mut().set_flat(i, w);
        if ((up - base) / H - (base - down) / H).abs() > KINK_SLOPE_GAP {
            return Outcome::Kink;
        }
        let numeric = (up - down) / (2.0 * H);
        let a = analytic.get_flat(i);
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(FLOOR);
        worst = worst.max(rel);
    }
    Outcome::Smooth { worst }
}

pub struct Summary {
    pub accepted: usize,
    pub kinks: usize,
    /// Largest relative error over every parameter of every smooth trial.
    pub worst: f64,
}

/// Runs trials from `first_seed` until `required` smooth ones have been
/// checked, giving up after `required / 2` kinked draws.
pub fn run_trials(required: usize, first_seed: u64) -> Result<Summary, String> {
    let mut s = Summary {
        accepted: 0,
        kinks: 0,
        worst: 0.0,
    };
    let mut seed = first_seed;
    while s.accepted < required {
        match check(seed) {
            Outcome::Smooth { worst } => {
                s.worst = s.worst.max(worst);
                s.accepted += 1;
            }
            Outcome::Kink => s.kinks += 1,
        }
        seed += 1;
        if s.kinks > required / 2 {
            return Err(format!("too many non-differentiable draws ({})", s.kinks));
        }
    }
    Ok(s)
}
