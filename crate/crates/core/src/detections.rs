//! Detection records and the line-delimited detection stream.
//!
//! One detection per line, tab-separated:
//!
//! ```text
//! video_id  frame_index  frame_width  frame_height  category  x1  y1  x2  y2  score  [scale]
//! ```
//!
//! Coordinates are pixels. Lines starting with `#` are comments, with one
//! recognised directive: `#label<TAB>video_id<TAB>label` attaches an event
//! label to a video. A line carrying only the first four fields declares a
//! keyframe without detections, so empty keyframes still count towards the
//! keyframe total.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
    pub score: f64,
}

impl BoundingBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64, score: f64) -> Self {
        BoundingBox { x1, y1, x2, y2, score }
    }

    pub fn is_valid(&self) -> bool {
        [self.x1, self.y1, self.x2, self.y2, self.score]
            .iter()
            .all(|v| v.is_finite())
            && self.x1 < self.x2
            && self.y1 < self.y2
    }

    pub fn center(&self) -> (f64, f64) {
        (0.5 * (self.x1 + self.x2), 0.5 * (self.y1 + self.y2))
    }

    pub fn area(&self) -> f64 {
        (self.x2 - self.x1) * (self.y2 - self.y1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionRecord {
    /// Index into the configured category list.
    pub category: usize,
    pub bbox: BoundingBox,
    /// Detector pyramid scale, when the source reports one.
    pub scale: Option<u32>,
}

impl DetectionRecord {
    pub fn new(category: usize, bbox: BoundingBox) -> Self {
        DetectionRecord {
            category,
            bbox,
            scale: None,
        }
    }

    pub fn score(&self) -> f64 {
        self.bbox.score
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameDetections {
    pub frame_index: u64,
    pub width: u32,
    pub height: u32,
    pub detections: Vec<DetectionRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoDetections {
    pub video_id: String,
    pub label: Option<u32>,
    /// Strictly ascending by `frame_index`, never empty.
    pub frames: Vec<FrameDetections>,
}

impl VideoDetections {
    pub fn detection_count(&self) -> usize {
        self.frames.iter().map(|f| f.detections.len()).sum()
    }
}

const LABEL_DIRECTIVE: &str = "#label";

#[derive(Default)]
struct VideoBuilder {
    label: Option<(u32, usize)>,
    frames: BTreeMap<u64, FrameDetections>,
}

/// Parses a detection stream. Videos are returned sorted by id; the result
/// does not depend on how lines of different videos are interleaved.
/// Detections keep their file order within a frame.
pub fn parse_detection_stream(text: &str, categories: &[String]) -> Result<Vec<VideoDetections>> {
    let lookup: std::collections::HashMap<&str, usize> =
        categories.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
    let mut videos: BTreeMap<String, VideoBuilder> = BTreeMap::new();

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            continue;
        }
        if line.starts_with('#') {
            parse_directive(line, line_no, &mut videos)?;
            continue;
        }

        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 && fields.len() != 10 && fields.len() != 11 {
            return Err(Error::parse(
                line_no,
                format!("expected 4, 10 or 11 tab-separated fields, found {}", fields.len()),
            ));
        }
        let video_id = fields[0];
        if video_id.is_empty() || video_id.chars().any(char::is_whitespace) {
            return Err(Error::parse(line_no, format!("invalid video id {video_id:?}")));
        }
        let frame_index: u64 = parse_field(fields[1], "frame_index", line_no)?;
        let width: i64 = parse_field(fields[2], "frame_width", line_no)?;
        let height: i64 = parse_field(fields[3], "frame_height", line_no)?;
        if width <= 0 || height <= 0 || width > u32::MAX as i64 || height > u32::MAX as i64 {
            return Err(Error::FrameDimensions {
                line: line_no,
                width: width.clamp(0, u32::MAX as i64) as u32,
                height: height.clamp(0, u32::MAX as i64) as u32,
            });
        }
        let (width, height) = (width as u32, height as u32);

        let builder = videos.entry(video_id.to_owned()).or_default();
        let frame = builder.frames.entry(frame_index).or_insert_with(|| FrameDetections {
            frame_index,
            width,
            height,
            detections: Vec::new(),
        });
        if frame.width != width || frame.height != height {
            return Err(Error::parse(
                line_no,
                format!(
                    "frame {frame_index} of video {video_id:?} declared as {}x{} earlier, now {width}x{height}",
                    frame.width, frame.height
                ),
            ));
        }
        if fields.len() == 4 {
            continue;
        }

        let category = *lookup.get(fields[4]).ok_or_else(|| Error::UnknownCategory {
            line: line_no,
            category: fields[4].to_owned(),
        })?;
        let bbox = BoundingBox {
            x1: parse_float(fields[5], "x1", line_no)?,
            y1: parse_float(fields[6], "y1", line_no)?,
            x2: parse_float(fields[7], "x2", line_no)?,
            y2: parse_float(fields[8], "y2", line_no)?,
            score: parse_float(fields[9], "score", line_no)?,
        };
        if !(bbox.x1 < bbox.x2 && bbox.y1 < bbox.y2) {
            return Err(Error::parse(line_no, "box corners must satisfy x1 < x2 and y1 < y2"));
        }
        let scale = match fields.get(10) {
            Some(s) if !s.is_empty() => Some(parse_field(s, "scale", line_no)?),
            _ => None,
        };
        frame.detections.push(DetectionRecord { category, bbox, scale });
    }

    let mut out = Vec::with_capacity(videos.len());
    for (video_id, builder) in videos {
        if builder.frames.is_empty() {
            let line = builder.label.map(|(_, l)| l).unwrap_or(0);
            return Err(Error::parse(
                line,
                format!("video {video_id:?} has a label but no keyframes"),
            ));
        }
        out.push(VideoDetections {
            video_id,
            label: builder.label.map(|(l, _)| l),
            frames: builder.frames.into_values().collect(),
        });
    }
    Ok(out)
}

fn parse_directive(line: &str, line_no: usize, videos: &mut BTreeMap<String, VideoBuilder>) -> Result<()> {
    let mut fields = line.split('\t');
    if fields.next() != Some(LABEL_DIRECTIVE) {
        return Ok(());
    }
    let (Some(video_id), Some(label), None) = (fields.next(), fields.next(), fields.next()) else {
        return Err(Error::parse(line_no, "label directive needs a video id and a label"));
    };
    let label: u32 = parse_field(label, "label", line_no)?;
    let builder = videos.entry(video_id.to_owned()).or_default();
    match builder.label {
        Some((prev, _)) if prev != label => Err(Error::parse(
            line_no,
            format!("video {video_id:?} relabelled from {prev} to {label}"),
        )),
        _ => {
            builder.label = Some((label, line_no));
            Ok(())
        }
    }
}

fn parse_field<T: std::str::FromStr>(s: &str, name: &str, line: usize) -> Result<T> {
    s.parse()
        .map_err(|_| Error::parse(line, format!("invalid {name} {s:?}")))
}

fn parse_float(s: &str, name: &str, line: usize) -> Result<f64> {
    let v: f64 = parse_field(s, name, line)?;
    if !v.is_finite() {
        return Err(Error::parse(line, format!("{name} must be finite, got {s:?}")));
    }
    Ok(v)
}

/// Writes videos in the stream format. Every keyframe gets a declaration
/// line, so parsing the output reproduces the input exactly.
pub fn write_detection_stream(videos: &[VideoDetections], categories: &[String]) -> String {
    let mut out = String::new();
    for video in videos {
        if let Some(label) = video.label {
            let _ = writeln!(out, "{LABEL_DIRECTIVE}\t{}\t{label}", video.video_id);
        }
        for frame in &video.frames {
            let prefix = format!(
                "{}\t{}\t{}\t{}",
                video.video_id, frame.frame_index, frame.width, frame.height
            );
            out.push_str(&prefix);
            out.push('\n');
            for det in &frame.detections {
                let b = &det.bbox;
                let _ = write!(
                    out,
                    "{prefix}\t{}\t{}\t{}\t{}\t{}\t{}",
                    categories[det.category], b.x1, b.y1, b.x2, b.y2, b.score
                );
                if let Some(scale) = det.scale {
                    let _ = write!(out, "\t{scale}");
                }
                out.push('\n');
            }
        }
    }
    out
}

/// A normalized frame and the number of boxes dropped for lying outside
/// the image or collapsing to zero area after clipping.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub frame: FrameDetections,
    pub dropped: usize,
}

/// Maps pixel boxes into the unit square. The returned frame has
/// `width == height == 1`, which makes the operation idempotent.
pub fn normalize_coordinates(frame: &FrameDetections) -> Normalized {
    let w = f64::from(frame.width);
    let h = f64::from(frame.height);
    let mut dropped = 0;
    let detections = frame
        .detections
        .iter()
        .filter_map(|det| {
            let b = &det.bbox;
            let clipped = BoundingBox {
                x1: (b.x1 / w).clamp(0.0, 1.0),
                y1: (b.y1 / h).clamp(0.0, 1.0),
                x2: (b.x2 / w).clamp(0.0, 1.0),
                y2: (b.y2 / h).clamp(0.0, 1.0),
                score: b.score,
            };
            if clipped.x1 < clipped.x2 && clipped.y1 < clipped.y2 {
                Some(DetectionRecord {
                    bbox: clipped,
                    ..det.clone()
                })
            } else {
                dropped += 1;
                None
            }
        })
        .collect();
    Normalized {
        frame: FrameDetections {
            frame_index: frame.frame_index,
            width: 1,
            height: 1,
            detections,
        },
        dropped,
    }
}

/// Normalizes every keyframe of a video; returns the total dropped count.
pub fn normalize_video(video: &VideoDetections) -> (VideoDetections, usize) {
    let mut dropped = 0;
    let frames = video
        .frames
        .iter()
        .map(|f| {
            let n = normalize_coordinates(f);
            dropped += n.dropped;
            n.frame
        })
        .collect();
    (
        VideoDetections {
            video_id: video.video_id.clone(),
            label: video.label,
            frames,
        },
        dropped,
    )
}
