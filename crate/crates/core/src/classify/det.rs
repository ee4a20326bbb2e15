use std::fmt::Write as _;

use super::linear::LinearOvrModel;
use super::LabeledFeatureSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetPoint {
    pub false_alarm: f64,
    pub miss: f64,
}

/// Detection-error trade-off points for one class of a model.
pub fn det_curve(model: &LinearOvrModel, set: &LabeledFeatureSet, class: u32) -> Result<Vec<DetPoint>> {
    let k = model
        .class_position(class)
        .ok_or_else(|| Error::Classify(format!("class {class} is not in the model")))?;
    let mut scores = Vec::with_capacity(set.len());
    let mut positive = Vec::with_capacity(set.len());
    for e in &set.examples {
        scores.push(model.decision_values(&e.features)?[k]);
        positive.push(e.label == class);
    }
    det_points(&scores, &positive)
}

/// Sweeps a threshold down through the distinct scores. Each point is the
/// (false-alarm, miss) rate when everything scoring at least the threshold
/// is called positive. Starts at (0, 1) and ends at (1, 0).
pub fn det_points(scores: &[f64], positive: &[bool]) -> Result<Vec<DetPoint>> {
    if scores.len() != positive.len() {
        return Err(Error::Classify("scores and labels differ in length".into()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Classify("non-finite decision value".into()));
    }
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Classify(format!(
            "DET curve needs positives and negatives (got {n_pos} and {n_neg})"
        )));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let point = |tp: usize, fp: usize| DetPoint {
        false_alarm: fp as f64 / n_neg as f64,
        miss: (n_pos - tp) as f64 / n_pos as f64,
    };
    let mut points = vec![point(0, 0)];
    let (mut tp, mut fp) = (0, 0);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if positive[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(point(tp, fp));
    }
    Ok(points)
}

/// Where the curve crosses false_alarm == miss, by linear interpolation
/// between the bracketing points.
pub fn equal_error_point(points: &[DetPoint]) -> Option<DetPoint> {
    let gap = |p: &DetPoint| p.false_alarm - p.miss;
    let first = points.first()?;
    if gap(first) >= 0.0 {
        return Some(*first);
    }
    points.windows(2).find(|w| gap(&w[1]) >= 0.0).map(|w| {
        let (a, b) = (w[0], w[1]);
        let t = -gap(&a) / (gap(&b) - gap(&a));
        DetPoint {
            false_alarm: a.false_alarm + t * (b.false_alarm - a.false_alarm),
            miss: a.miss + t * (b.miss - a.miss),
        }
    })
}

/// Two whitespace-separated columns, false-alarm rate then miss rate.
pub fn write_det_points(points: &[DetPoint]) -> String {
    let mut out = String::from("# false_alarm miss\n");
    for p in points {
        let _ = writeln!(out, "{} {}", p.false_alarm, p.miss);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(p: &[DetPoint]) -> Vec<(f64, f64)> {
        p.iter().map(|p| (p.false_alarm, p.miss)).collect()
    }

    #[test]
    fn perfect_ranking_reaches_origin() {
        let p = det_points(&[0.9, 0.8, 0.1, 0.0], &[true, true, false, false]).unwrap();
        assert!(pts(&p).contains(&(0.0, 0.0)));
        assert_eq!(pts(&p)[0], (0.0, 1.0));
        assert_eq!(*pts(&p).last().unwrap(), (1.0, 0.0));
    }

    #[test]
    fn inverted_ranking_hugs_the_far_corner() {
        let p = det_points(&[0.9, 0.8, 0.1, 0.0], &[false, false, true, true]).unwrap();
        assert_eq!(
            pts(&p),
            vec![(0.0, 1.0), (0.5, 1.0), (1.0, 1.0), (1.0, 0.5), (1.0, 0.0)]
        );
    }

    #[test]
    fn equal_scores_degenerate() {
        let p = det_points(&[0.3; 4], &[true, false, true, false]).unwrap();
        assert_eq!(pts(&p), vec![(0.0, 1.0), (1.0, 0.0)]);
    }

    #[test]
    fn needs_both_classes() {
        assert!(det_points(&[0.1, 0.2], &[true, true]).is_err());
        assert!(det_points(&[0.1, 0.2], &[false, false]).is_err());
        assert!(det_points(&[0.1], &[false, true]).is_err());
    }

    #[test]
    fn equal_error_interpolation() {
        let p = det_points(&[0.9, 0.8, 0.1, 0.0], &[true, false, true, false]).unwrap();
        let e = equal_error_point(&p).unwrap();
        assert!((e.false_alarm - e.miss).abs() < 1e-12);
        assert!((e.false_alarm - 0.5).abs() < 1e-12);
    }

    #[test]
    fn output_format() {
        let text = write_det_points(&[
            DetPoint {
                false_alarm: 0.0,
                miss: 1.0,
            },
            DetPoint {
                false_alarm: 0.25,
                miss: 0.5,
            },
        ]);
        assert_eq!(text, "# false_alarm miss\n0 1\n0.25 0.5\n");
    }
}
