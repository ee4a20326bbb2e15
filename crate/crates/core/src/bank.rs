//! Keyframe statistics and video-level pooling.
//!
//! For every (category, region, threshold) cell a keyframe contributes
//! three statistics over the surviving detections whose center falls in
//! the region and whose score is at least the threshold: the sum of their
//! scores, their number, and whether there is any. Pooling takes the
//! elementwise mean or max over keyframes.

pub use crate::config::Statistic;
use crate::config::{BankConfig, Pooling};
use crate::detections::{normalize_coordinates, VideoDetections};
use crate::error::{Error, Result};
use crate::features::{BankLayout, FeatureVector, SparseVector};
use crate::pyramid::Pyramid;
use crate::suppress::{build_detection_image, SuppressedFrame};

/// Dense per-keyframe statistics indexed by `(c, r, t, s)`, statistic
/// innermost.
#[derive(Debug, Clone, PartialEq)]
pub struct StatTensor {
    pub frame_index: u64,
    pub categories: usize,
    pub regions: usize,
    pub thresholds: usize,
    pub statistics: Vec<Statistic>,
    pub values: Vec<f64>,
}

impl StatTensor {
    pub fn zeros(
        frame_index: u64,
        categories: usize,
        regions: usize,
        thresholds: usize,
        statistics: &[Statistic],
    ) -> Self {
        StatTensor {
            frame_index,
            categories,
            regions,
            thresholds,
            statistics: statistics.to_vec(),
            values: vec![0.0; categories * regions * thresholds * statistics.len()],
        }
    }

    pub fn index(&self, c: usize, r: usize, t: usize, s: usize) -> usize {
        ((c * self.regions + r) * self.thresholds + t) * self.statistics.len() + s
    }

    pub fn get(&self, c: usize, r: usize, t: usize, stat: Statistic) -> Option<f64> {
        let s = self.statistics.iter().position(|&x| x == stat)?;
        Some(self.values[self.index(c, r, t, s)])
    }

    fn same_layout(&self, other: &StatTensor) -> bool {
        self.categories == other.categories
            && self.regions == other.regions
            && self.thresholds == other.thresholds
            && self.statistics == other.statistics
    }

    fn layout(&self, pooling: Pooling) -> BankLayout {
        BankLayout {
            categories: self.categories,
            regions: self.regions,
            thresholds: self.thresholds,
            statistics: self.statistics.len(),
            pooling,
        }
    }
}

/// Computes the statistics of one suppressed keyframe.
///
/// Thresholds are ascending, so a detection with score `s` counts towards
/// exactly the leading thresholds `t <= s`.
pub fn frame_statistics(frame: &SuppressedFrame, pyramid: &Pyramid, config: &BankConfig) -> Result<StatTensor> {
    let n_cat = config.categories.len();
    let n_reg = pyramid.region_count();
    let n_thr = config.thresholds.len();
    let cells = n_cat * n_reg * n_thr;
    let mut sums = vec![0.0f64; cells];
    let mut counts = vec![0u32; cells];
    let mut hit = vec![0usize; pyramid.levels().len()];

    for det in &frame.detections {
        if det.category >= n_cat {
            return Err(Error::CategoryOutOfRange(det.category));
        }
        let score = det.score();
        let passed = config.thresholds.partition_point(|&t| t <= score);
        if passed == 0 {
            continue;
        }
        let (x, y) = det.bbox.center();
        pyramid.locate(x, y, &mut hit);
        for &r in &hit {
            let base = (det.category * n_reg + r) * n_thr;
            for cell in base..base + passed {
                sums[cell] += score;
                counts[cell] += 1;
            }
        }
    }

    let n_stat = config.statistics.len();
    let mut values = vec![0.0; cells * n_stat];
    for (cell, out) in values.chunks_exact_mut(n_stat).enumerate() {
        for (slot, stat) in out.iter_mut().zip(&config.statistics) {
            *slot = match stat {
                Statistic::Sum => sums[cell],
                Statistic::Count => f64::from(counts[cell]),
                Statistic::Binary => f64::from(u8::from(counts[cell] > 0)),
            };
        }
    }
    Ok(StatTensor {
        frame_index: frame.frame_index,
        categories: n_cat,
        regions: n_reg,
        thresholds: n_thr,
        statistics: config.statistics.clone(),
        values,
    })
}

/// Pools keyframe tensors into a video vector. Keyframes are visited in
/// frame-index order, and the mean runs over all of them, empty ones
/// included. `Both` yields the mean block followed by the max block.
pub fn pool_video(tensors: &[StatTensor], pooling: Pooling) -> Result<FeatureVector> {
    let first = tensors.first().ok_or(Error::EmptyVideo)?;
    if let Some(bad) = tensors.iter().find(|t| !t.same_layout(first)) {
        return Err(Error::LayoutMismatch(format!(
            "keyframe {} does not share the layout of keyframe {}",
            bad.frame_index, first.frame_index
        )));
    }
    let mut ordered: Vec<&StatTensor> = tensors.iter().collect();
    ordered.sort_by_key(|t| t.frame_index);

    let values = match pooling {
        Pooling::Mean => mean_block(&ordered),
        Pooling::Max => max_block(&ordered),
        Pooling::Both => mean_block(&ordered).concat(&max_block(&ordered)),
    };
    Ok(FeatureVector {
        layout: first.layout(pooling),
        values,
    })
}

fn mean_block(tensors: &[&StatTensor]) -> SparseVector {
    let stats = &tensors[0].statistics;
    let k = tensors.len() as f64;
    let mut acc = tensors[0].values.clone();
    for (i, t) in tensors.iter().enumerate().skip(1) {
        let n = (i + 1) as f64;
        for (j, (a, &v)) in acc.iter_mut().zip(&t.values).enumerate() {
            match stats[j % stats.len()] {
                // Counts and presence bits sum exactly; divide once at the end.
                Statistic::Count | Statistic::Binary => *a += v,
                // Running mean: constant input stays constant and the result
                // never leaves [min, max].
                Statistic::Sum => *a += (v - *a) / n,
            }
        }
    }
    for (j, a) in acc.iter_mut().enumerate() {
        if stats[j % stats.len()] != Statistic::Sum {
            *a /= k;
        }
    }
    SparseVector::from_dense(&acc)
}

fn max_block(tensors: &[&StatTensor]) -> SparseVector {
    let mut acc = tensors[0].values.clone();
    for t in &tensors[1..] {
        for (a, &v) in acc.iter_mut().zip(&t.values) {
            if v > *a {
                *a = v;
            }
        }
    }
    SparseVector::from_dense(&acc)
}

/// Feature extractor bound to one configuration.
#[derive(Debug, Clone)]
pub struct Bank {
    config: BankConfig,
    pyramid: Pyramid,
}

impl Bank {
    pub fn new(config: BankConfig) -> Result<Self> {
        config.validate()?;
        let pyramid = Pyramid::new(&config.pyramid_levels)?;
        Ok(Bank { config, pyramid })
    }

    pub fn config(&self) -> &BankConfig {
        &self.config
    }

    pub fn pyramid(&self) -> &Pyramid {
        &self.pyramid
    }

    pub fn layout(&self) -> BankLayout {
        BankLayout::from_config(&self.config)
    }

    /// Suppresses and summarizes every keyframe of a video, then pools.
    /// Frames are normalized first; normalization is idempotent, so
    /// already-normalized input passes through unchanged.
    pub fn assemble(&self, video: &VideoDetections) -> Result<FeatureVector> {
        let tensors = video
            .frames
            .iter()
            .map(|frame| {
                let normalized = normalize_coordinates(frame).frame;
                let suppressed = build_detection_image(&normalized, &self.config);
                frame_statistics(&suppressed, &self.pyramid, &self.config)
            })
            .collect::<Result<Vec<_>>>()?;
        pool_video(&tensors, self.config.pooling)
    }
}

pub fn assemble_feature(video: &VideoDetections, config: &BankConfig) -> Result<FeatureVector> {
    Bank::new(config.clone())?.assemble(video)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detections::{BoundingBox, DetectionRecord, FrameDetections};

    fn config(n: usize) -> BankConfig {
        BankConfig::new((0..n).map(|i| format!("c{i}")))
    }

    fn centered(c: usize, cx: f64, cy: f64, score: f64) -> DetectionRecord {
        DetectionRecord::new(c, BoundingBox::new(cx - 0.01, cy - 0.01, cx + 0.01, cy + 0.01, score))
    }

    fn suppressed(k: u64, detections: Vec<DetectionRecord>) -> SuppressedFrame {
        SuppressedFrame {
            frame_index: k,
            detections,
        }
    }

    #[test]
    fn empty_frame_is_all_zero() {
        let cfg = config(2);
        let p = Pyramid::new(&cfg.pyramid_levels).unwrap();
        let t = frame_statistics(&suppressed(0, vec![]), &p, &cfg).unwrap();
        assert_eq!(t.values.len(), 2 * 21 * 4 * 3);
        assert!(t.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_detection_hits_one_cell_per_level() {
        let cfg = config(3);
        let p = Pyramid::new(&cfg.pyramid_levels).unwrap();
        let t = frame_statistics(&suppressed(0, vec![centered(1, 0.3, 0.6, 0.2)]), &p, &cfg).unwrap();
        // whole image, 2x2 (row 1, col 0), 4x4 (row 2, col 1)
        let hit = [0usize, 1 + 2, 5 + 2 * 4 + 1];
        for c in 0..3 {
            for r in 0..21 {
                for th in 0..4 {
                    let expect = if c == 1 && hit.contains(&r) {
                        [0.2, 1.0, 1.0]
                    } else {
                        [0.0; 3]
                    };
                    for (s, stat) in Statistic::ALL.iter().enumerate() {
                        assert_eq!(t.get(c, r, th, *stat), Some(expect[s]), "c={c} r={r} t={th}");
                    }
                }
            }
        }
    }

    #[test]
    fn per_threshold_statistics() {
        let cfg = config(1);
        let p = Pyramid::new(&cfg.pyramid_levels).unwrap();
        let frame = suppressed(0, vec![centered(0, 0.1, 0.1, -0.8), centered(0, 0.12, 0.1, -0.6)]);
        let t = frame_statistics(&frame, &p, &cfg).unwrap();
        let at = |th| [Statistic::Sum, Statistic::Count, Statistic::Binary].map(|s| t.get(0, 5, th, s).unwrap());
        assert_eq!(at(0), [-0.8 + -0.6, 2.0, 1.0]);
        assert_eq!(at(2), [-0.6, 1.0, 1.0]);
        assert_eq!(at(3), [0.0, 0.0, 0.0]);
    }

    #[test]
    fn unknown_category_is_an_error() {
        let cfg = config(1);
        let p = Pyramid::new(&cfg.pyramid_levels).unwrap();
        let err = frame_statistics(&suppressed(0, vec![centered(4, 0.5, 0.5, 0.0)]), &p, &cfg);
        assert!(matches!(err, Err(Error::CategoryOutOfRange(4))));
    }

    fn tensor(k: u64, values: Vec<f64>) -> StatTensor {
        StatTensor {
            frame_index: k,
            categories: 1,
            regions: 1,
            thresholds: 1,
            statistics: vec![Statistic::Count],
            values,
        }
    }

    #[test]
    fn pooling_single_frame_is_identity() {
        let t = tensor(0, vec![3.0]);
        for mode in [Pooling::Mean, Pooling::Max] {
            assert_eq!(
                pool_video(std::slice::from_ref(&t), mode).unwrap().values.to_dense(),
                vec![3.0]
            );
        }
    }

    #[test]
    fn pooling_arithmetic() {
        let ts = [tensor(0, vec![2.0]), tensor(1, vec![0.0]), tensor(2, vec![4.0])];
        assert_eq!(pool_video(&ts, Pooling::Mean).unwrap().values.to_dense(), vec![2.0]);
        assert_eq!(pool_video(&ts, Pooling::Max).unwrap().values.to_dense(), vec![4.0]);
        let both = pool_video(&ts, Pooling::Both).unwrap();
        assert_eq!(both.values.to_dense(), vec![2.0, 4.0]);
        assert_eq!(both.layout.dim(), 2);

        let presence = [1.0, 0.0, 0.0, 1.0].map(|v| tensor(0, vec![v]));
        assert_eq!(
            pool_video(&presence, Pooling::Mean).unwrap().values.to_dense(),
            vec![0.5]
        );
        assert_eq!(
            pool_video(&presence, Pooling::Max).unwrap().values.to_dense(),
            vec![1.0]
        );
    }

    #[test]
    fn pooling_errors() {
        assert!(matches!(pool_video(&[], Pooling::Mean), Err(Error::EmptyVideo)));
        let mut other = tensor(1, vec![1.0, 2.0]);
        other.regions = 2;
        assert!(matches!(
            pool_video(&[tensor(0, vec![1.0]), other], Pooling::Mean),
            Err(Error::LayoutMismatch(_))
        ));
    }

    #[test]
    fn assembled_dimensions() {
        let mut cfg = config(208);
        cfg.thresholds = vec![-1.1];
        cfg.statistics = vec![Statistic::Sum];
        assert_eq!(Bank::new(cfg).unwrap().layout().dim(), 4368);
        assert_eq!(Bank::new(config(237)).unwrap().layout().dim(), 59724);
    }

    #[test]
    fn identical_frames_give_equal_mean_and_max() {
        let frame = |k| FrameDetections {
            frame_index: k,
            width: 100,
            height: 100,
            detections: vec![
                DetectionRecord::new(0, BoundingBox::new(10.0, 10.0, 30.0, 40.0, -0.75)),
                DetectionRecord::new(1, BoundingBox::new(60.0, 50.0, 90.0, 95.0, 0.3)),
            ],
        };
        let video = VideoDetections {
            video_id: "v".into(),
            label: None,
            frames: (0..4).map(frame).collect(),
        };
        let mut cfg = config(2);
        cfg.pooling = Pooling::Both;
        let f = assemble_feature(&video, &cfg).unwrap();
        let half = cfg.block_dim();
        let dense = f.values.to_dense();
        assert_eq!(dense[..half], dense[half..]);
        assert!(f.values.nnz() > 0);
    }
}
