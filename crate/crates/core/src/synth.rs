//! Seeded synthetic detection corpora with planted class structure.
//!
//! A spec gives, per (class, category), an expected number of detections
//! per keyframe, a score distribution and a placement distribution over the
//! cells of a square placement grid. Spec files are TOML:
//!
//! ```toml
//! seed = 7
//! classes = 2
//! videos_per_class = 40
//! frames_per_video = 10
//! categories = ["flag", "car"]
//! # optional: frame_width = 640, frame_height = 480,
//! #           placement_grid = 4, box_extent = 0.1
//!
//! [default]
//! rate = 1.0                   # Poisson mean per keyframe
//! score = "normal:-0.6:0.3"    # or "uniform:<lo>:<hi>"
//! placement = "all"            # or "5,6" (uniform) or "5:0.25,6:0.75"
//!
//! [[override]]                 # applied in order on top of [default]
//! class = 1                    # optional, 1-based; absent = every class
//! category = "flag"            # optional; absent = every category
//! placement = "0"
//! ```
//!
//! Box centers are drawn uniformly from the inner 80% of the chosen cell
//! and boxes extend `box_extent` cell sides around the center, so a box
//! never leaves its cell. Video `n` (counting from 0 across classes in
//! order) draws from a ChaCha8 stream seeded with `seed` on stream `n`, so
//! videos can be generated in any order or in parallel.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScoreDist {
    Normal { mean: f64, std: f64 },
    Uniform { lo: f64, hi: f64 },
}

impl ScoreDist {
    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            ScoreDist::Normal { mean, std } => {
                if std == 0.0 {
                    mean
                } else {
                    Normal::new(mean, std).expect("validated").sample(rng)
                }
            }
            ScoreDist::Uniform { lo, hi } => {
                if lo == hi {
                    lo
                } else {
                    rng.random_range(lo..hi)
                }
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            ScoreDist::Normal { mean, .. } => mean,
            ScoreDist::Uniform { lo, hi } => 0.5 * (lo + hi),
        }
    }
}

impl FromStr for ScoreDist {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("invalid score distribution {s:?}"));
        let mut parts = s.split(':');
        let kind = parts.next().ok_or_else(bad)?;
        let a: f64 = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let b: f64 = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        if parts.next().is_some() || !a.is_finite() || !b.is_finite() {
            return Err(bad());
        }
        match kind {
            "normal" if b >= 0.0 => Ok(ScoreDist::Normal { mean: a, std: b }),
            "uniform" if a <= b => Ok(ScoreDist::Uniform { lo: a, hi: b }),
            _ => Err(bad()),
        }
    }
}

impl fmt::Display for ScoreDist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScoreDist::Normal { mean, std } => write!(f, "normal:{mean}:{std}"),
            ScoreDist::Uniform { lo, hi } => write!(f, "uniform:{lo}:{hi}"),
        }
    }
}

/// Generative model of one category within one class.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoryModel {
    pub rate: f64,
    pub score: ScoreDist,
    /// `(cell, probability)` over the placement grid, summing to one.
    pub placement: Vec<(u32, f64)>,
}

fn parse_placement(s: &str, cells: u32) -> Result<Vec<(u32, f64)>> {
    let bad = |msg: String| Error::Config(format!("placement {s:?}: {msg}"));
    if s.trim() == "all" {
        let p = 1.0 / f64::from(cells);
        return Ok((0..cells).map(|c| (c, p)).collect());
    }
    let items: Vec<&str> = s.split(',').map(str::trim).collect();
    let weighted = items.iter().any(|i| i.contains(':'));
    let mut out = Vec::with_capacity(items.len());
    for item in &items {
        let (cell, weight) = match item.split_once(':') {
            Some((c, w)) => (
                c,
                w.parse::<f64>()
                    .map_err(|_| bad(format!("invalid weight in {item:?}")))?,
            ),
            None if !weighted => (*item, 1.0 / items.len() as f64),
            None => return Err(bad("mix of weighted and unweighted cells".into())),
        };
        let cell: u32 = cell.parse().map_err(|_| bad(format!("invalid cell {cell:?}")))?;
        if cell >= cells {
            return Err(bad(format!("cell {cell} outside a grid of {cells} cells")));
        }
        if !(weight.is_finite() && weight >= 0.0) {
            return Err(bad(format!("invalid weight {weight}")));
        }
        out.push((cell, weight));
    }
    let total: f64 = out.iter().map(|(_, w)| w).sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(bad(format!("weights sum to {total}, not 1")));
    }
    Ok(out)
}

fn format_placement(p: &[(u32, f64)]) -> String {
    p.iter().map(|(c, w)| format!("{c}:{w}")).collect::<Vec<_>>().join(",")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelEntry {
    pub rate: f64,
    pub score: String,
    pub placement: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverrideEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub placement: Option<String>,
}

/// Declarative spec as written in a spec file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub classes: u32,
    pub videos_per_class: u32,
    pub frames_per_video: u32,
    #[serde(default = "default_width")]
    pub frame_width: u32,
    #[serde(default = "default_height")]
    pub frame_height: u32,
    #[serde(default = "default_grid")]
    pub placement_grid: u32,
    #[serde(default = "default_extent")]
    pub box_extent: f64,
    pub categories: Vec<String>,
    pub default: ModelEntry,
    #[serde(default, rename = "override", skip_serializing_if = "Vec::is_empty")]
    pub overrides: Vec<OverrideEntry>,
}

fn default_width() -> u32 {
    640
}
fn default_height() -> u32 {
    480
}
fn default_grid() -> u32 {
    4
}
fn default_extent() -> f64 {
    0.1
}

impl SynthConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("synth config is always representable as TOML")
    }

    /// Resolves defaults and overrides into a per-(class, category) table.
    pub fn resolve(&self) -> Result<SynthSpec> {
        if self.classes == 0 || self.videos_per_class == 0 || self.frames_per_video == 0 {
            return Err(Error::Config("class, video and frame counts must be positive".into()));
        }
        if self.frame_width == 0 || self.frame_height == 0 || self.placement_grid == 0 {
            return Err(Error::Config("frame size and placement grid must be positive".into()));
        }
        if !(self.box_extent > 0.0 && self.box_extent <= 0.4) {
            return Err(Error::Config("box_extent must lie in (0, 0.4]".into()));
        }
        if self.categories.is_empty() {
            return Err(Error::Config("category list is empty".into()));
        }
        let cells = self.placement_grid * self.placement_grid;
        let base = CategoryModel {
            rate: check_rate(self.default.rate)?,
            score: self.default.score.parse()?,
            placement: parse_placement(&self.default.placement, cells)?,
        };
        let mut table = vec![vec![base; self.categories.len()]; self.classes as usize];
        for o in &self.overrides {
            let class_range = match o.class {
                Some(c) if c >= 1 && c <= self.classes => (c - 1) as usize..c as usize,
                Some(c) => {
                    return Err(Error::Config(format!(
                        "override names class {c} outside 1..={}",
                        self.classes
                    )))
                }
                None => 0..self.classes as usize,
            };
            let cat_range = match &o.category {
                Some(name) => {
                    let k = self
                        .categories
                        .iter()
                        .position(|c| c == name)
                        .ok_or_else(|| Error::Config(format!("override names unknown category {name:?}")))?;
                    k..k + 1
                }
                None => 0..self.categories.len(),
            };
            let rate = o.rate.map(check_rate).transpose()?;
            let score = o.score.as_deref().map(str::parse).transpose()?;
            let placement = o.placement.as_deref().map(|p| parse_placement(p, cells)).transpose()?;
            for row in &mut table[class_range] {
                for m in &mut row[cat_range.clone()] {
                    if let Some(r) = rate {
                        m.rate = r;
                    }
                    if let Some(s) = score {
                        m.score = s;
                    }
                    if let Some(p) = &placement {
                        m.placement = p.clone();
                    }
                }
            }
        }
        Ok(SynthSpec {
            config: self.clone(),
            table,
        })
    }

    /// Spatially planted corpus: every class shares one detection rate and
    /// score distribution per category, but puts each category in its own
    /// 4x4 cell. Whole-image statistics carry no class information.
    pub fn planted_spatial(seed: u64) -> Self {
        let categories = ["person", "car", "flag", "balloon", "tire", "animal"];
        let classes = 15u32;
        let mut overrides = Vec::new();
        for class in 0..classes {
            for (k, cat) in categories.iter().enumerate() {
                overrides.push(OverrideEntry {
                    class: Some(class + 1),
                    category: Some(cat.to_string()),
                    rate: None,
                    score: None,
                    placement: Some(((class * 5 + k as u32 * 3) % 16).to_string()),
                });
            }
        }
        SynthConfig {
            seed,
            classes,
            videos_per_class: 40,
            frames_per_video: 10,
            frame_width: default_width(),
            frame_height: default_height(),
            placement_grid: 4,
            box_extent: default_extent(),
            categories: categories.iter().map(|c| c.to_string()).collect(),
            default: ModelEntry {
                rate: 1.0,
                score: "normal:-0.6:0.3".into(),
                placement: "all".into(),
            },
            overrides,
        }
    }

    /// Score-planted corpus: placement is uniform and the expected score
    /// sum above the lowest default threshold (-1.1) is the same for every
    /// class and category. Classes differ only in where their scores fall
    /// between the thresholds, compensated by their detection rate.
    pub fn planted_thresholds(seed: u64) -> Self {
        const TARGET_SUM: f64 = -2.0;
        const WIDTH: f64 = 0.2;
        let categories = ["person", "car", "flag", "balloon"];
        let classes = 15u32;
        let mut overrides = Vec::new();
        for class in 0..classes {
            for (k, cat) in categories.iter().enumerate() {
                let slot = (class + 4 * k as u32) % classes;
                let lo = -1.1 + 0.04 * f64::from(slot);
                let lo = (lo * 100.0).round() / 100.0;
                let hi = ((lo + WIDTH) * 100.0).round() / 100.0;
                let mean = 0.5 * (lo + hi);
                overrides.push(OverrideEntry {
                    class: Some(class + 1),
                    category: Some(cat.to_string()),
                    rate: Some(TARGET_SUM / mean),
                    score: Some(format!("uniform:{lo}:{hi}")),
                    placement: None,
                });
            }
        }
        SynthConfig {
            seed,
            classes,
            videos_per_class: 40,
            frames_per_video: 10,
            frame_width: default_width(),
            frame_height: default_height(),
            placement_grid: 4,
            box_extent: default_extent(),
            categories: categories.iter().map(|c| c.to_string()).collect(),
            default: ModelEntry {
                rate: 2.0,
                score: "uniform:-1.1:-0.5".into(),
                placement: "all".into(),
            },
            overrides,
        }
    }
}

fn check_rate(rate: f64) -> Result<f64> {
    if rate.is_finite() && rate >= 0.0 {
        Ok(rate)
    } else {
        Err(Error::Config(format!("rate must be finite and >= 0, got {rate}")))
    }
}

/// Resolved spec ready for generation.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub config: SynthConfig,
    /// `table[class - 1][category]`.
    pub table: Vec<Vec<CategoryModel>>,
}

impl SynthSpec {
    pub fn categories(&self) -> &[String] {
        &self.config.categories
    }

    pub fn video_id(class: u32, video: u32) -> String {
        format!("c{class:02}_v{video:03}")
    }

    /// The full detection stream, videos in id order.
    pub fn generate(&self) -> String {
        let c = &self.config;
        let counters: Vec<(u32, u32)> = (1..=c.classes)
            .flat_map(|class| (0..c.videos_per_class).map(move |v| (class, v)))
            .collect();
        let chunks: Vec<String> = counters
            .par_iter()
            .map(|&(class, v)| self.generate_video(class, v))
            .collect();
        chunks.concat()
    }

    pub fn generate_video(&self, class: u32, video: u32) -> String {
        let c = &self.config;
        let counter = u64::from(class - 1) * u64::from(c.videos_per_class) + u64::from(video);
        let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
        rng.set_stream(counter);

        let id = Self::video_id(class, video);
        let (w, h) = (f64::from(c.frame_width), f64::from(c.frame_height));
        let grid = c.placement_grid;
        let side = 1.0 / f64::from(grid);
        let half = c.box_extent * side;
        let models = &self.table[(class - 1) as usize];

        let mut out = String::new();
        let _ = writeln!(out, "#label\t{id}\t{class}");
        for frame in 0..c.frames_per_video {
            let prefix = format!("{id}\t{frame}\t{}\t{}", c.frame_width, c.frame_height);
            out.push_str(&prefix);
            out.push('\n');
            for (k, m) in models.iter().enumerate() {
                let count = if m.rate > 0.0 {
                    Poisson::new(m.rate).expect("validated rate").sample(&mut rng) as u64
                } else {
                    0
                };
                for _ in 0..count {
                    let cell = pick_cell(&m.placement, &mut rng);
                    let (row, col) = (cell / grid, cell % grid);
                    let cx = (f64::from(col) + 0.1 + 0.8 * rng.random::<f64>()) * side;
                    let cy = (f64::from(row) + 0.1 + 0.8 * rng.random::<f64>()) * side;
                    let score = m.score.sample(&mut rng);
                    let _ = writeln!(
                        out,
                        "{prefix}\t{}\t{:.2}\t{:.2}\t{:.2}\t{:.2}\t{:.4}",
                        c.categories[k],
                        (cx - half) * w,
                        (cy - half) * h,
                        (cx + half) * w,
                        (cy + half) * h,
                        score
                    );
                }
            }
        }
        out
    }
}

fn pick_cell(placement: &[(u32, f64)], rng: &mut ChaCha8Rng) -> u32 {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for &(cell, p) in placement {
        acc += p;
        if u < acc {
            return cell;
        }
    }
    placement
        .iter()
        .rev()
        .find(|(_, p)| *p > 0.0)
        .map(|&(c, _)| c)
        .unwrap_or(placement[0].0)
}

impl fmt::Display for CategoryModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "rate={} score={} placement={}",
            self.rate,
            self.score,
            format_placement(&self.placement)
        )
    }
}
