//! Point-adjusted (PA) and revised point-adjusted (RPA) detection scores,
//! segment-weighted aggregation across sub-datasets, and improvement
//! statistics against a baseline objective.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timeseries::{segments_from_labels, Segment};

/// Which detection metric to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Rpa,
    Pa,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Rpa => "rpa",
            Metric::Pa => "pa",
        }
    }
}

/// How RPA counts false positives.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RpaFalsePositives {
    /// One per maximal predicted run that touches no anomaly segment.
    #[default]
    PerRun,
    /// One per predicted point outside every anomaly segment.
    PerPoint,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl ConfusionCounts {
    pub fn new(tp: usize, fp: usize, fn_: usize) -> Self {
        Self { tp, fp, fn_ }
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

fn check_segments(len: usize, segments: &[Segment]) -> Result<()> {
    for s in segments {
        if s.start > s.end || s.end >= len {
            return Err(Error::SegmentOutOfRange {
                start: s.start,
                end: s.end,
                len,
            });
        }
    }
    Ok(())
}

/// Marks every point of a truth segment as predicted when any of its points is.
pub fn point_adjust(preds: &[u8], truth: &[Segment]) -> Result<Vec<u8>> {
    check_segments(preds.len(), truth)?;
    let mut out = preds.to_vec();
    for s in truth {
        if preds[s.start..=s.end].iter().any(|&p| p != 0) {
            out[s.start..=s.end].iter_mut().for_each(|p| *p = 1);
        }
    }
    Ok(out)
}

/// Point-wise counts after point adjustment.
pub fn pa_counts(preds: &[u8], labels: &[u8]) -> Result<ConfusionCounts> {
    if preds.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: preds.len(),
            right: labels.len(),
        });
    }
    let adjusted = point_adjust(preds, &segments_from_labels(labels))?;
    let mut c = ConfusionCounts::default();
    for (&p, &l) in adjusted.iter().zip(labels) {
        match (p != 0, l != 0) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => {}
        }
    }
    Ok(c)
}

/// Segment-level counts: each truth segment is one sample.
///
/// A segment with at least one predicted point is a true positive, otherwise
/// a false negative. A predicted run overlapping any truth segment is absorbed
/// by it; runs overlapping none are false positives.
pub fn rpa_counts(preds: &[u8], truth: &[Segment]) -> Result<ConfusionCounts> {
    rpa_counts_with(preds, truth, RpaFalsePositives::PerRun)
}

pub fn rpa_counts_with(
    preds: &[u8],
    truth: &[Segment],
    fp_mode: RpaFalsePositives,
) -> Result<ConfusionCounts> {
    check_segments(preds.len(), truth)?;
    let tp = truth
        .iter()
        .filter(|s| preds[s.start..=s.end].iter().any(|&p| p != 0))
        .count();
    let runs = segments_from_labels(preds);
    let fp = match fp_mode {
        RpaFalsePositives::PerRun => runs
            .iter()
            .filter(|r| !truth.iter().any(|s| s.overlaps(r)))
            .count(),
        RpaFalsePositives::PerPoint => preds
            .iter()
            .enumerate()
            .filter(|&(i, &p)| p != 0 && !truth.iter().any(|s| s.contains(i)))
            .count(),
    };
    Ok(ConfusionCounts::new(tp, fp, truth.len() - tp))
}

/// Counts for `metric`, with truth given as a binary label mask.
pub fn counts(preds: &[u8], labels: &[u8], metric: Metric) -> Result<ConfusionCounts> {
    if preds.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: preds.len(),
            right: labels.len(),
        });
    }
    match metric {
        Metric::Pa => pa_counts(preds, labels),
        Metric::Rpa => rpa_counts(preds, &segments_from_labels(labels)),
    }
}

/// Segment-count-weighted average of per-sub-dataset F1 scores.
pub fn entire_f1(per_subdataset: &[(usize, f64)]) -> Result<f64> {
    let total: usize = per_subdataset.iter().map(|(e, _)| e).sum();
    if total == 0 {
        return Err(Error::Empty(
            "no anomaly segments across sub-datasets".into(),
        ));
    }
    Ok(per_subdataset
        .iter()
        .map(|&(e, f1)| e as f64 / total as f64 * f1)
        .sum())
}

fn check_pairs(star: &[f64], base: &[f64]) -> Result<()> {
    if star.len() != base.len() {
        return Err(Error::LengthMismatch {
            left: star.len(),
            right: base.len(),
        });
    }
    if star.is_empty() {
        return Err(Error::Empty("no datasets to compare".into()));
    }
    Ok(())
}

/// Mean F1 difference against the baseline.
pub fn avg_improved(f1_star: &[f64], f1_mse: &[f64]) -> Result<f64> {
    check_pairs(f1_star, f1_mse)?;
    let q = f1_star.len() as f64;
    Ok(f1_star.iter().zip(f1_mse).map(|(s, m)| s - m).sum::<f64>() / q)
}

/// Mean relative F1 improvement against the baseline. Datasets with a zero
/// baseline are dropped (with a warning) rather than divided by.
pub fn air(f1_star: &[f64], f1_mse: &[f64]) -> Result<f64> {
    check_pairs(f1_star, f1_mse)?;
    let kept: Vec<(f64, f64)> = f1_star
        .iter()
        .zip(f1_mse)
        .filter(|(_, &m)| m > 0.0)
        .map(|(&s, &m)| (s, m))
        .collect();
    if kept.len() < f1_star.len() {
        log::warn!(
            "dropping {} dataset(s) with zero baseline F1 from the improvement rate",
            f1_star.len() - kept.len()
        );
    }
    if kept.is_empty() {
        return Err(Error::Empty("every baseline F1 is zero".into()));
    }
    Ok(kept.iter().map(|(s, m)| (s - m) / m).sum::<f64>() / kept.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seg(a: usize, b: usize) -> Segment {
        Segment::new(a, b)
    }

    #[test]
    fn point_adjust_examples() {
        assert_eq!(
            point_adjust(&[0, 0, 1, 0, 0], &[seg(1, 3)]).unwrap(),
            vec![0, 1, 1, 1, 0]
        );
        assert_eq!(
            point_adjust(&[1, 0, 0, 0, 0], &[seg(1, 3)]).unwrap(),
            vec![1, 0, 0, 0, 0]
        );
        assert_eq!(
            point_adjust(&[0, 1, 0, 0, 0, 1, 0], &[seg(0, 2), seg(4, 6)]).unwrap(),
            vec![1, 1, 1, 0, 1, 1, 1]
        );
        assert!(matches!(
            point_adjust(&[0, 0], &[seg(1, 2)]),
            Err(Error::SegmentOutOfRange { .. })
        ));
    }

    #[test]
    fn pa_examples() {
        let c = pa_counts(&[0, 1, 1, 1, 0], &[0, 1, 1, 1, 0]).unwrap();
        assert_eq!(c, ConfusionCounts::new(3, 0, 0));
        assert_eq!(c.f1(), 1.0);
        let c = pa_counts(&[0; 4], &[0, 1, 0, 1]).unwrap();
        assert_eq!((c.tp, c.fn_, c.f1()), (0, 2, 0.0));
        let c = pa_counts(&[1; 5], &[0, 1, 1, 1, 0]).unwrap();
        assert_eq!(c, ConfusionCounts::new(3, 2, 0));
        assert_eq!((c.precision(), c.recall()), (0.6, 1.0));
        assert!(pa_counts(&[0; 3], &[0; 4]).is_err());
    }

    #[test]
    fn rpa_examples() {
        let c = rpa_counts(&[0, 1, 0, 0, 1, 1, 0], &[seg(1, 2)]).unwrap();
        assert_eq!(c, ConfusionCounts::new(1, 1, 0));
        assert_eq!((c.precision(), c.recall()), (0.5, 1.0));
        assert_eq!(c.f1(), 2.0 / 3.0);

        let c = rpa_counts(&[0; 5], &[seg(1, 2)]).unwrap();
        assert_eq!((c, c.f1()), (ConfusionCounts::new(0, 0, 1), 0.0));

        let truth = [seg(1, 2), seg(5, 7)];
        let c = rpa_counts(&[0, 1, 1, 0, 0, 1, 1, 1, 0], &truth).unwrap();
        assert_eq!((c, c.f1()), (ConfusionCounts::new(2, 0, 0), 1.0));

        let c = rpa_counts_with(
            &[0, 1, 0, 0, 1, 1, 0],
            &[seg(1, 2)],
            RpaFalsePositives::PerPoint,
        )
        .unwrap();
        assert_eq!(c, ConfusionCounts::new(1, 2, 0));
    }

    #[test]
    fn zero_conventions() {
        let c = ConfusionCounts::default();
        assert_eq!((c.precision(), c.recall(), c.f1()), (0.0, 0.0, 0.0));
    }

    #[test]
    fn widening_a_hitting_run() {
        let labels = [0, 0, 1, 1, 1, 0, 0, 0];
        let truth = segments_from_labels(&labels);
        let narrow = [0, 0, 0, 1, 0, 0, 0, 0];
        let inside = [0, 0, 1, 1, 1, 0, 0, 0];
        let past_edge = [0, 0, 0, 1, 1, 1, 1, 0];
        let base = rpa_counts(&narrow, &truth).unwrap().f1();
        assert_eq!(rpa_counts(&inside, &truth).unwrap().f1(), base);
        assert_eq!(rpa_counts(&past_edge, &truth).unwrap().f1(), base);
        let pa = pa_counts(&narrow, &labels).unwrap().f1();
        assert_ne!(pa_counts(&past_edge, &labels).unwrap().f1(), pa);
    }

    #[test]
    fn entire_f1_examples() {
        assert!((entire_f1(&[(2, 0.5), (3, 1.0)]).unwrap() - 0.8).abs() < 1e-15);
        assert_eq!(entire_f1(&[(4, 0.37)]).unwrap(), 0.37);
        let v = entire_f1(&[(1, 0.25), (7, 0.25), (2, 0.25)]).unwrap();
        assert!((v - 0.25).abs() < 1e-15);
        assert!(entire_f1(&[(0, 0.5)]).is_err());
    }

    #[test]
    fn improvement_examples() {
        assert_eq!(avg_improved(&[0.4, 0.2], &[0.4, 0.2]).unwrap(), 0.0);
        assert!((avg_improved(&[0.3, 0.5], &[0.1, 0.1]).unwrap() - 0.3).abs() < 1e-15);
        assert!((avg_improved(&[0.7], &[0.2]).unwrap() - 0.5).abs() < 1e-15);
        assert!(avg_improved(&[0.1], &[]).is_err());
        assert!(avg_improved(&[], &[]).is_err());

        assert!((air(&[0.2], &[0.1]).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(air(&[0.3, 0.6], &[0.3, 0.6]).unwrap(), 0.0);
        assert!((air(&[0.2, 0.3], &[0.1, 0.3]).unwrap() - 0.5).abs() < 1e-12);
        assert!((air(&[0.2, 0.9], &[0.1, 0.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!(air(&[0.2], &[0.0]).is_err());
    }

    proptest! {
        #[test]
        fn entire_f1_is_bounded(items in proptest::collection::vec((0usize..20, 0.0f64..=1.0), 1..8)) {
            prop_assume!(items.iter().any(|(e, _)| *e > 0));
            let v = entire_f1(&items).unwrap();
            let used = items.iter().filter(|(e, _)| *e > 0).map(|(_, f)| *f);
            let lo = used.clone().fold(f64::INFINITY, f64::min);
            let hi = used.fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
        }
    }
}
