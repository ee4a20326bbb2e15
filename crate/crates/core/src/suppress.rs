//! Detection images: score thresholding, cross-scale pooling and per-category
//! greedy non-maximum suppression.

use crate::config::BankConfig;
use crate::detections::{BoundingBox, DetectionRecord, FrameDetections};

#[derive(Debug, Clone, PartialEq)]
pub struct SuppressedFrame {
    pub frame_index: u64,
    /// Surviving detections, grouped by category in category-list order and
    /// by descending score within a category. Scales are erased.
    pub detections: Vec<DetectionRecord>,
}

/// Intersection over union. Zero for disjoint or edge-touching boxes.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let iw = a.x2.min(b.x2) - a.x1.max(b.x1);
    let ih = a.y2.min(b.y2) - a.y1.max(b.y1);
    if iw <= 0.0 || ih <= 0.0 {
        return 0.0;
    }
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// Greedy NMS over detections of a single category.
///
/// Candidates are visited by descending score, ties by ascending input
/// position. Each kept box removes every later candidate whose IoU with it
/// exceeds `iou_thresh`.
pub fn greedy_nms(dets: &[DetectionRecord], iou_thresh: f64) -> Vec<DetectionRecord> {
    greedy_nms_indices(dets, iou_thresh)
        .into_iter()
        .map(|i| dets[i].clone())
        .collect()
}

/// Like [`greedy_nms`] but returns positions into `dets`.
pub fn greedy_nms_indices(dets: &[DetectionRecord], iou_thresh: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score().total_cmp(&dets[a].score()).then(a.cmp(&b)));

    let mut keep = Vec::new();
    let mut removed = vec![false; order.len()];
    for i in 0..order.len() {
        if removed[i] {
            continue;
        }
        let kept = &dets[order[i]].bbox;
        keep.push(order[i]);
        // IoU never exceeds 1, so nothing can be suppressed at 1.0.
        if iou_thresh >= 1.0 {
            continue;
        }
        for j in i + 1..order.len() {
            if !removed[j] && iou(kept, &dets[order[j]].bbox) > iou_thresh {
                removed[j] = true;
            }
        }
    }
    keep
}

/// Builds the detection image of a normalized keyframe: drops candidates
/// below the lowest threshold, pools all scales of a category into one
/// candidate set and suppresses it with [`greedy_nms`].
///
/// Suppression runs once at the lowest threshold, so the detection sets seen
/// by higher thresholds are nested subsets of one another.
pub fn build_detection_image(frame: &FrameDetections, config: &BankConfig) -> SuppressedFrame {
    let floor = config.min_threshold();
    let mut per_category: Vec<Vec<DetectionRecord>> = vec![Vec::new(); config.categories.len()];
    for det in &frame.detections {
        if det.score() < floor {
            continue;
        }
        // Out-of-range categories are kept aside so frame_statistics can
        // report them instead of silently losing them.
        if det.category >= per_category.len() {
            per_category.resize(det.category + 1, Vec::new());
        }
        per_category[det.category].push(DetectionRecord {
            scale: None,
            ..det.clone()
        });
    }

    let detections = per_category
        .iter()
        .flat_map(|dets| greedy_nms(dets, config.nms_iou))
        .collect();
    SuppressedFrame {
        frame_index: frame.frame_index,
        detections,
    }
}
