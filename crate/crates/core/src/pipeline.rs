//! End-to-end extraction: detection stream in, feature file out.

use std::time::Instant;

use rayon::prelude::*;

use crate::bank::{frame_statistics, pool_video, Bank};
use crate::config::BankConfig;
use crate::detections::{normalize_coordinates, parse_detection_stream, VideoDetections};
use crate::error::{Error, Result};
use crate::features::{FeatureFile, FeatureHeader, FeatureRow};
use crate::suppress::build_detection_image;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExtractStats {
    pub videos: usize,
    pub frames: usize,
    pub detections: usize,
    /// Boxes dropped at normalization for lying outside the frame.
    pub dropped: usize,
    /// Detections surviving thresholding and suppression.
    pub surviving: usize,
    pub parse_seconds: f64,
    pub extract_seconds: f64,
}

impl ExtractStats {
    pub fn detections_per_second(&self) -> f64 {
        let secs = self.parse_seconds + self.extract_seconds;
        if secs > 0.0 {
            self.detections as f64 / secs
        } else {
            f64::INFINITY
        }
    }
}

struct VideoResult {
    row: FeatureRow,
    dropped: usize,
    surviving: usize,
}

fn extract_video(bank: &Bank, video: &VideoDetections) -> Result<VideoResult> {
    let config = bank.config();
    let mut dropped = 0;
    let mut surviving = 0;
    let mut tensors = Vec::with_capacity(video.frames.len());
    for frame in &video.frames {
        let normalized = normalize_coordinates(frame);
        dropped += normalized.dropped;
        let suppressed = build_detection_image(&normalized.frame, config);
        surviving += suppressed.detections.len();
        let tensor = frame_statistics(&suppressed, bank.pyramid(), config)
            .map_err(|e| e.in_video(&video.video_id, Some(frame.frame_index)))?;
        tensors.push(tensor);
    }
    let pooled = pool_video(&tensors, config.pooling).map_err(|e| e.in_video(&video.video_id, None))?;
    Ok(VideoResult {
        row: FeatureRow {
            video_id: video.video_id.clone(),
            label: video.label,
            values: pooled.values,
        },
        dropped,
        surviving,
    })
}

/// Extracts one feature row per video, in video-id order. With `jobs > 1`
/// videos are processed on a dedicated thread pool; output is identical
/// for every job count.
pub fn extract_videos(
    videos: &[VideoDetections],
    config: &BankConfig,
    jobs: usize,
) -> Result<(FeatureFile, ExtractStats)> {
    let bank = Bank::new(config.clone())?;
    let start = Instant::now();
    let results: Vec<VideoResult> = if jobs <= 1 {
        videos.iter().map(|v| extract_video(&bank, v)).collect::<Result<_>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| {
            videos
                .par_iter()
                .map(|v| extract_video(&bank, v))
                .collect::<Result<_>>()
        })?
    };
    let mut stats = ExtractStats {
        videos: videos.len(),
        frames: videos.iter().map(|v| v.frames.len()).sum(),
        detections: videos.iter().map(VideoDetections::detection_count).sum(),
        extract_seconds: start.elapsed().as_secs_f64(),
        ..ExtractStats::default()
    };

    let mut file = FeatureFile::new(FeatureHeader::bank(bank.layout()));
    let mut results = results;
    results.sort_by(|a, b| a.row.video_id.cmp(&b.row.video_id));
    for r in results {
        stats.dropped += r.dropped;
        stats.surviving += r.surviving;
        file.push(r.row)?;
    }
    if stats.dropped > 0 {
        log::warn!("{} box(es) outside their frame were dropped", stats.dropped);
    }
    Ok((file, stats))
}

/// Parses a detection stream and extracts its feature file.
pub fn extract_stream(text: &str, config: &BankConfig, jobs: usize) -> Result<(FeatureFile, ExtractStats)> {
    let start = Instant::now();
    let videos = parse_detection_stream(text, &config.categories)?;
    let parse_seconds = start.elapsed().as_secs_f64();
    let (file, mut stats) = extract_videos(&videos, config, jobs)?;
    stats.parse_seconds = parse_seconds;
    Ok((file, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::SynthConfig;

    #[test]
    fn empty_stream_gives_header_only() {
        let config = BankConfig::new(["a", "b"]);
        let (file, stats) = extract_stream("", &config, 1).unwrap();
        assert_eq!(file.to_string(), "#DB v1 dim=504 C=2 R=21 T=4 S=3 pooling=mean\n");
        assert_eq!(stats.videos, 0);
    }

    #[test]
    fn job_count_does_not_change_output() {
        let mut synth = SynthConfig::planted_spatial(5);
        synth.videos_per_class = 2;
        let spec = synth.resolve().unwrap();
        let config = BankConfig::new(spec.categories().to_vec());
        let stream = spec.generate();
        let (one, s1) = extract_stream(&stream, &config, 1).unwrap();
        let (four, s4) = extract_stream(&stream, &config, 4).unwrap();
        assert_eq!(one.to_string(), four.to_string());
        assert_eq!(one.rows.len(), 30);
        assert_eq!(s1.surviving, s4.surviving);
        assert!(s1.detections > 0);
    }

    #[test]
    fn frame_errors_name_video_and_frame() {
        let config = BankConfig::new(["a"]);
        let video = VideoDetections {
            video_id: "clip".into(),
            label: None,
            frames: vec![crate::detections::FrameDetections {
                frame_index: 9,
                width: 10,
                height: 10,
                detections: vec![crate::detections::DetectionRecord::new(
                    3,
                    crate::detections::BoundingBox::new(1.0, 1.0, 2.0, 2.0, 0.0),
                )],
            }],
        };
        let err = extract_videos(&[video], &config, 1).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("clip") && msg.contains("frame 9"), "{msg}");
    }
}
