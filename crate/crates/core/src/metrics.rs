//! Frame and video detection rates, ROC curves, AUC and confusion counts.
//! `Adversarial` is the positive class throughout.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::FrameLabel;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("no items to evaluate")]
    Empty,
    #[error("length mismatch: {0} predictions vs {1} labels")]
    LengthMismatch(usize, usize),
    #[error("ROC analysis needs at least one positive and one negative example")]
    SingleClass,
    #[error("score at index {0} is not finite")]
    NonFiniteScore(usize),
    #[error("threshold must be at least 1")]
    ZeroThreshold,
    #[error("malformed ROC curve: {0}")]
    MalformedCurve(&'static str),
}

fn check_lengths(a: usize, b: usize) -> Result<(), MetricsError> {
    if a != b {
        return Err(MetricsError::LengthMismatch(a, b));
    }
    if a == 0 {
        return Err(MetricsError::Empty);
    }
    Ok(())
}

/// Frame detection rate: the fraction of frames whose prediction agrees with
/// the ground truth, over all frames (clean ones included).
pub fn fdr(predicted: &[FrameLabel], truth: &[FrameLabel]) -> Result<f64, MetricsError> {
    check_lengths(predicted.len(), truth.len())?;
    let agree = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(agree as f64 / truth.len() as f64)
}

/// A video is adversarial when at least `threshold` of its frames are flagged.
pub fn video_verdict(flags: &[FrameLabel], threshold: usize) -> FrameLabel {
    let flagged = flags.iter().filter(|f| f.is_adversarial()).count();
    if threshold > 0 && flagged >= threshold {
        FrameLabel::Adversarial
    } else {
        FrameLabel::Clean
    }
}

/// Video detection rate: fraction of videos whose thresholded verdict matches
/// the video-level ground truth.
pub fn vdr(
    per_video_flags: &[Vec<FrameLabel>],
    truth: &[FrameLabel],
    threshold: usize,
) -> Result<f64, MetricsError> {
    if threshold == 0 {
        return Err(MetricsError::ZeroThreshold);
    }
    check_lengths(per_video_flags.len(), truth.len())?;
    let verdicts: Vec<FrameLabel> = per_video_flags
        .iter()
        .map(|f| video_verdict(f, threshold))
        .collect();
    fdr(&verdicts, truth)
}

/// Points of a ROC curve, from `(0, 0)` to `(1, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// `(false positive rate, true positive rate)`, thresholds descending.
    pub points: Vec<(f64, f64)>,
    /// Score threshold of each point; the first is `+inf`.
    #[serde(skip)]
    pub thresholds: Vec<f64>,
}

/// Sweep every distinct score as a threshold (flag when `score >= t`). Equal
/// scores move together, producing one diagonal step per tie group.
pub fn roc_curve(scores: &[f64], truth: &[FrameLabel]) -> Result<RocCurve, MetricsError> {
    check_lengths(scores.len(), truth.len())?;
    if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
        return Err(MetricsError::NonFiniteScore(i));
    }
    let positives = truth.iter().filter(|t| t.is_adversarial()).count();
    let negatives = truth.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(MetricsError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![(0.0, 0.0)];
    let mut thresholds = vec![f64::INFINITY];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let t = scores[order[i]];
        while i < order.len() && scores[order[i]] == t {
            if truth[order[i]].is_adversarial() {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / negatives as f64, tp as f64 / positives as f64));
        thresholds.push(t);
    }
    Ok(RocCurve { points, thresholds })
}

/// Trapezoidal area under a ROC curve.
pub fn auc(curve: &RocCurve) -> Result<f64, MetricsError> {
    let pts = &curve.points;
    if pts.len() < 2 {
        return Err(MetricsError::MalformedCurve("fewer than two points"));
    }
    if pts[0] != (0.0, 0.0) || pts[pts.len() - 1] != (1.0, 1.0) {
        return Err(MetricsError::MalformedCurve("must run from (0,0) to (1,1)"));
    }
    let mut area = 0.0;
    for w in pts.windows(2) {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        if !(0.0..=1.0).contains(&x1) || !(0.0..=1.0).contains(&y1) {
            return Err(MetricsError::MalformedCurve("coordinate outside [0,1]"));
        }
        if x1 < x0 || y1 < y0 {
            return Err(MetricsError::MalformedCurve(
                "coordinates must be non-decreasing",
            ));
        }
        area += (x1 - x0) * (y0 + y1) * 0.5;
    }
    Ok(area)
}

/// ROC AUC of `scores` directly.
pub fn roc_auc(scores: &[f64], truth: &[FrameLabel]) -> Result<f64, MetricsError> {
    auc(&roc_curve(scores, truth)?)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub true_positive: usize,
    pub false_positive: usize,
    pub true_negative: usize,
    pub false_negative: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.true_positive + self.false_positive + self.true_negative + self.false_negative
    }
}

pub fn confusion(
    verdicts: &[FrameLabel],
    truth: &[FrameLabel],
) -> Result<ConfusionMatrix, MetricsError> {
    check_lengths(verdicts.len(), truth.len())?;
    let mut m = ConfusionMatrix::default();
    for (v, t) in verdicts.iter().zip(truth) {
        match (v, t) {
            (FrameLabel::Adversarial, FrameLabel::Adversarial) => m.true_positive += 1,
            (FrameLabel::Adversarial, FrameLabel::Clean) => m.false_positive += 1,
            (FrameLabel::Clean, FrameLabel::Clean) => m.true_negative += 1,
            (FrameLabel::Clean, FrameLabel::Adversarial) => m.false_negative += 1,
        }
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use FrameLabel::{Adversarial as A, Clean as C};

    /// Probability that a random positive outscores a random negative, ties
    /// counted as one half. Brute force over all pairs.
    fn pairwise_auc(scores: &[f64], truth: &[FrameLabel]) -> f64 {
        let mut num = 0.0;
        let mut pairs = 0.0;
        for (sp, tp) in scores.iter().zip(truth) {
            if !tp.is_adversarial() {
                continue;
            }
            for (sn, tn) in scores.iter().zip(truth) {
                if tn.is_adversarial() {
                    continue;
                }
                pairs += 1.0;
                if sp > sn {
                    num += 1.0;
                } else if sp == sn {
                    num += 0.5;
                }
            }
        }
        num / pairs
    }

    #[test]
    fn fdr_hand_count() {
        assert_eq!(fdr(&[A, C, A, A], &[A, C, C, A]).unwrap(), 0.75);
        assert_eq!(fdr(&[A, C], &[A, C]).unwrap(), 1.0);
        assert_eq!(fdr(&[], &[]), Err(MetricsError::Empty));
        assert!(fdr(&[A], &[A, C]).is_err());
    }

    #[test]
    fn vdr_threshold_rule() {
        let three = vec![A, A, C, A, C];
        let two = vec![A, C, C, A, C];
        assert_eq!(video_verdict(&three, 3), A);
        assert_eq!(video_verdict(&two, 3), C);
        assert_eq!(vdr(&[three, two], &[A, A], 3).unwrap(), 0.5);
        assert!(vdr(&[], &[], 3).is_err());
        assert!(vdr(&[vec![A]], &[A], 0).is_err());
    }

    #[test]
    fn roc_perfect_and_chance() {
        let truth = [A, A, C, C];
        let curve = roc_curve(&[0.9, 0.8, 0.2, 0.1], &truth).unwrap();
        assert!(curve.points.contains(&(0.0, 1.0)));
        assert_eq!(auc(&curve).unwrap(), 1.0);
        let flat = roc_curve(&[0.5; 4], &truth).unwrap();
        assert_eq!(flat.points, vec![(0.0, 0.0), (1.0, 1.0)]);
        assert_eq!(auc(&flat).unwrap(), 0.5);
    }

    #[test]
    fn roc_small_example() {
        let scores = [0.9, 0.4, 0.1, 0.7];
        let truth = [A, A, C, C];
        assert_eq!(pairwise_auc(&scores, &truth), 0.75);
        assert!((roc_auc(&scores, &truth).unwrap() - 0.75).abs() < 1e-12);
    }

    #[test]
    fn roc_errors() {
        assert_eq!(
            roc_curve(&[0.1, 0.2], &[A, A]),
            Err(MetricsError::SingleClass)
        );
        assert!(roc_curve(&[f64::NAN, 0.2], &[A, C]).is_err());
        let bad = RocCurve {
            points: vec![(0.0, 0.0), (0.5, 0.8), (0.4, 0.9), (1.0, 1.0)],
            thresholds: vec![],
        };
        assert!(auc(&bad).is_err());
        let short = RocCurve {
            points: vec![(0.0, 0.0)],
            thresholds: vec![],
        };
        assert!(auc(&short).is_err());
    }

    #[test]
    fn confusion_counts() {
        let m = confusion(&[A, A, C], &[A, A, C]).unwrap();
        assert_eq!(
            m,
            ConfusionMatrix {
                true_positive: 2,
                true_negative: 1,
                ..Default::default()
            }
        );
        assert_eq!(confusion(&[A], &[C]).unwrap().false_positive, 1);
        assert_eq!(m.total(), 3);
    }

    fn scored_items() -> impl Strategy<Value = (Vec<f64>, Vec<FrameLabel>)> {
        proptest::collection::vec((0u8..12, any::<bool>()), 2..200).prop_map(|items| {
            // Coarse score grid to force ties.
            let scores = items.iter().map(|(s, _)| *s as f64 / 11.0).collect();
            let truth = items.iter().map(|(_, a)| if *a { A } else { C }).collect();
            (scores, truth)
        })
    }

    proptest! {
        #[test]
        fn trapezoid_matches_pairwise((scores, truth) in scored_items()) {
            let has_both = truth.contains(&A) && truth.contains(&C);
            prop_assume!(has_both);
            let a = roc_auc(&scores, &truth).unwrap();
            prop_assert!((a - pairwise_auc(&scores, &truth)).abs() < 1e-9);
        }

        #[test]
        fn roc_is_monotone((scores, truth) in scored_items()) {
            prop_assume!(truth.contains(&A) && truth.contains(&C));
            let c = roc_curve(&scores, &truth).unwrap();
            for w in c.points.windows(2) {
                prop_assert!(w[1].0 >= w[0].0 && w[1].1 >= w[0].1);
            }
            prop_assert_eq!(*c.points.last().unwrap(), (1.0, 1.0));
        }

        #[test]
        fn rates_permutation_invariant(items in proptest::collection::vec((any::<bool>(), any::<bool>()), 1..60),
                                       rot in 0usize..60) {
            let pred: Vec<_> = items.iter().map(|p| if p.0 { A } else { C }).collect();
            let truth: Vec<_> = items.iter().map(|p| if p.1 { A } else { C }).collect();
            let k = rot % items.len();
            let mut p2 = pred.clone();
            let mut t2 = truth.clone();
            p2.rotate_left(k);
            t2.rotate_left(k);
            prop_assert_eq!(fdr(&pred, &truth).unwrap(), fdr(&p2, &t2).unwrap());
        }

        #[test]
        fn verdict_monotone_in_threshold(flags in proptest::collection::vec(any::<bool>(), 0..30),
                                          k in 1usize..10) {
            let flags: Vec<_> = flags.into_iter().map(|f| if f { A } else { C }).collect();
            if video_verdict(&flags, k + 1) == A {
                prop_assert_eq!(video_verdict(&flags, k), A);
            }
        }
    }
}
