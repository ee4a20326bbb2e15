//! Test-only oracles and random instance generators.
//!
//! The brute-force statistics here follow the per-cell definitions
//! literally: for every (category, region, threshold) it scans all
//! detections, with its own cell geometry and no shared accumulation.
//! It must not call into the library's pyramid or bank code.

#![allow(dead_code)]

use detbank::config::{BankConfig, Statistic};
use detbank::detections::{BoundingBox, DetectionRecord};
use detbank::suppress::SuppressedFrame;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Whether `(x, y)` lies in cell `(row, col)` of an `n x n` grid: half-open
/// cells, with the far edge of the image closed.
pub fn in_cell(x: f64, y: f64, n: u32, row: u32, col: u32) -> bool {
    let lo = |i: u32| f64::from(i) / f64::from(n);
    let inside = |v: f64, i: u32| v >= lo(i) && (v < lo(i + 1) || (i == n - 1 && v <= lo(i + 1)));
    inside(x, col) && inside(y, row)
}

/// Cells in canonical order: levels as given, row-major within a level.
pub fn oracle_cells(levels: &[u32]) -> Vec<(u32, u32, u32)> {
    levels
        .iter()
        .flat_map(|&n| (0..n).flat_map(move |row| (0..n).map(move |col| (n, row, col))))
        .collect()
}

/// Direct evaluation of the sum/count/presence statistics of one keyframe.
pub fn brute_force_statistics(frame: &SuppressedFrame, config: &BankConfig) -> Vec<f64> {
    let cells = oracle_cells(&config.pyramid_levels);
    let mut out = Vec::new();
    for c in 0..config.categories.len() {
        for &(n, row, col) in &cells {
            for &t in &config.thresholds {
                let mut sum = 0.0;
                let mut count = 0u32;
                for det in &frame.detections {
                    let b = &det.bbox;
                    let (cx, cy) = ((b.x1 + b.x2) / 2.0, (b.y1 + b.y2) / 2.0);
                    if det.category == c && in_cell(cx, cy, n, row, col) && b.score >= t {
                        sum += b.score;
                        count += 1;
                    }
                }
                for stat in &config.statistics {
                    out.push(match stat {
                        Statistic::Sum => sum,
                        Statistic::Count => f64::from(count),
                        Statistic::Binary => {
                            if count > 0 {
                                1.0
                            } else {
                                0.0
                            }
                        }
                    });
                }
            }
        }
    }
    out
}

const LEVEL_SETS: [&[u32]; 6] = [&[1, 2, 4], &[1], &[1, 3], &[2, 5], &[1, 2, 3, 4], &[4, 1, 2]];

/// A random bank configuration with up to `max_categories` categories and
/// one to six thresholds.
pub fn random_config(rng: &mut ChaCha8Rng, max_categories: usize) -> BankConfig {
    let n_cat = rng.random_range(1..=max_categories);
    let mut config = BankConfig::new((0..n_cat).map(|i| format!("c{i}")));
    let n_thr = rng.random_range(1..=6);
    let mut thresholds: Vec<f64> = (0..n_thr)
        .map(|_| {
            // Mostly round values so that scores can land exactly on them.
            if rng.random_bool(0.5) {
                f64::from(rng.random_range(-15..=10)) / 10.0
            } else {
                rng.random_range(-1.5..1.0)
            }
        })
        .collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    config.thresholds = thresholds;
    config.pyramid_levels = LEVEL_SETS[rng.random_range(0..LEVEL_SETS.len())].to_vec();
    config
}

/// A random normalized detection. Centers land on grid edges, image borders
/// and threshold values often enough to exercise every tie rule.
pub fn random_detection(rng: &mut ChaCha8Rng, config: &BankConfig) -> DetectionRecord {
    let coord = |rng: &mut ChaCha8Rng| -> f64 {
        match rng.random_range(0..4) {
            0 => f64::from(rng.random_range(0..=60)) / 60.0,
            1 => [0.0, 1.0, 0.5, 0.25, 0.75][rng.random_range(0..5)],
            _ => rng.random::<f64>(),
        }
    };
    let (cx, cy) = (coord(rng), coord(rng));
    // Dyadic half-sizes keep the midpoint of the corners exactly at (cx, cy)
    // for the dyadic centers above.
    let hw = 1.0 / f64::from(1u32 << rng.random_range(4..8));
    let hh = 1.0 / f64::from(1u32 << rng.random_range(4..8));
    let score = if rng.random_bool(0.3) {
        config.thresholds[rng.random_range(0..config.thresholds.len())]
    } else {
        rng.random_range(-2.0..1.5)
    };
    DetectionRecord::new(
        rng.random_range(0..config.categories.len()),
        BoundingBox::new(cx - hw, cy - hh, cx + hw, cy + hh, score),
    )
}

pub fn random_frame(
    rng: &mut ChaCha8Rng,
    config: &BankConfig,
    frame_index: u64,
    max_detections: usize,
) -> SuppressedFrame {
    let n = rng.random_range(0..=max_detections);
    SuppressedFrame {
        frame_index,
        detections: (0..n).map(|_| random_detection(rng, config)).collect(),
    }
}
