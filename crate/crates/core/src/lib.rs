//! Detection-statistics video representation.
//!
//! Per-keyframe object detections are thresholded, suppressed per category
//! with greedy NMS, and summarized on a spatial pyramid as three statistics
//! per (category, cell, threshold): the sum of scores, the detection count,
//! and a presence bit. Keyframe statistics are mean- or max-pooled into one
//! sparse vector per video. The [`classify`] module provides the
//! forced-choice one-vs-rest evaluation harness and [`synth`] a seeded
//! corpus generator with planted structure.

pub mod bank;
pub mod classify;
pub mod config;
pub mod detections;
pub mod error;
pub mod features;
pub mod manifest;
pub mod pipeline;
pub mod pyramid;
pub mod suppress;
pub mod synth;

pub use bank::{assemble_feature, frame_statistics, pool_video, StatTensor, Statistic};
pub use config::{BankConfig, Pooling};
pub use detections::{
    normalize_coordinates, parse_detection_stream, BoundingBox, DetectionRecord, FrameDetections, VideoDetections,
};
pub use error::{Error, Result};
pub use features::{FeatureFile, FeatureHeader, FeatureRow, FeatureVector, SparseVector};
pub use pyramid::{enumerate_regions, region_membership, Pyramid, Region};
pub use suppress::{build_detection_image, greedy_nms, iou, SuppressedFrame};
