//! Bank configuration: category universe, threshold set, pyramid levels,
//! suppression overlap and pooling. The configuration fixes the feature
//! layout, so two corpora extracted under one config are index-compatible.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default detection thresholds (four levels, most permissive first).
pub const DEFAULT_THRESHOLDS: [f64; 4] = [-1.1, -0.9, -0.7, -0.5];

/// Whole image, 2x2 and 4x4 grids.
pub const DEFAULT_LEVELS: [u32; 3] = [1, 2, 4];

pub const DEFAULT_NMS_IOU: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    Mean,
    Max,
    Both,
}

impl Pooling {
    /// Number of pooled blocks in the assembled vector.
    pub fn blocks(self) -> usize {
        match self {
            Pooling::Both => 2,
            _ => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Pooling::Mean => "mean",
            Pooling::Max => "max",
            Pooling::Both => "both",
        }
    }
}

impl fmt::Display for Pooling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Pooling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Pooling::Mean),
            "max" => Ok(Pooling::Max),
            "both" => Ok(Pooling::Both),
            other => Err(Error::Config(format!("unknown pooling mode {other:?}"))),
        }
    }
}

/// Per-cell statistic. Declaration order is the canonical order within a
/// coordinate: score sum, count, presence bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Statistic {
    Sum,
    Count,
    Binary,
}

impl Statistic {
    pub const ALL: [Statistic; 3] = [Statistic::Sum, Statistic::Count, Statistic::Binary];

    pub fn as_str(self) -> &'static str {
        match self {
            Statistic::Sum => "sum",
            Statistic::Count => "count",
            Statistic::Binary => "binary",
        }
    }
}

impl FromStr for Statistic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sum" => Ok(Statistic::Sum),
            "count" => Ok(Statistic::Count),
            "binary" => Ok(Statistic::Binary),
            other => Err(Error::Config(format!("unknown statistic {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BankConfig {
    pub categories: Vec<String>,
    #[serde(default = "default_thresholds")]
    pub thresholds: Vec<f64>,
    #[serde(default = "default_levels")]
    pub pyramid_levels: Vec<u32>,
    #[serde(default = "default_nms_iou")]
    pub nms_iou: f64,
    #[serde(default = "default_pooling")]
    pub pooling: Pooling,
    #[serde(default = "default_statistics")]
    pub statistics: Vec<Statistic>,
}

fn default_thresholds() -> Vec<f64> {
    DEFAULT_THRESHOLDS.to_vec()
}

fn default_levels() -> Vec<u32> {
    DEFAULT_LEVELS.to_vec()
}

fn default_nms_iou() -> f64 {
    DEFAULT_NMS_IOU
}

fn default_pooling() -> Pooling {
    Pooling::Mean
}

fn default_statistics() -> Vec<Statistic> {
    Statistic::ALL.to_vec()
}

impl BankConfig {
    /// The richest configuration: four thresholds, all three statistics,
    /// levels 1/2/4, mean pooling.
    pub fn new<S: Into<String>>(categories: impl IntoIterator<Item = S>) -> Self {
        BankConfig {
            categories: categories.into_iter().map(Into::into).collect(),
            thresholds: default_thresholds(),
            pyramid_levels: default_levels(),
            nms_iou: default_nms_iou(),
            pooling: default_pooling(),
            statistics: default_statistics(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let mut config: BankConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.normalize_statistics();
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("bank config is always representable as TOML")
    }

    /// Sorts statistics into canonical order and removes duplicates.
    pub fn normalize_statistics(&mut self) {
        self.statistics.sort();
        self.statistics.dedup();
    }

    pub fn validate(&self) -> Result<()> {
        if self.categories.is_empty() {
            return Err(Error::Config("category list is empty".into()));
        }
        let mut seen = HashMap::with_capacity(self.categories.len());
        for (i, name) in self.categories.iter().enumerate() {
            if name.is_empty() || name.chars().any(char::is_whitespace) {
                return Err(Error::Config(format!(
                    "category name {name:?} must be nonempty without whitespace"
                )));
            }
            if let Some(prev) = seen.insert(name.as_str(), i) {
                return Err(Error::Config(format!(
                    "duplicate category {name:?} at positions {prev} and {i}"
                )));
            }
        }
        if self.thresholds.is_empty() {
            return Err(Error::Config("threshold list is empty".into()));
        }
        if self.thresholds.iter().any(|t| !t.is_finite()) {
            return Err(Error::Config("thresholds must be finite".into()));
        }
        if self.thresholds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("thresholds must be strictly ascending".into()));
        }
        if self.pyramid_levels.is_empty() {
            return Err(Error::Config("pyramid level list is empty".into()));
        }
        if self.pyramid_levels.contains(&0) {
            return Err(Error::Config("pyramid subdivisions must be >= 1".into()));
        }
        if !(self.nms_iou > 0.0 && self.nms_iou <= 1.0) {
            return Err(Error::Config(format!(
                "nms_iou must lie in (0, 1], got {}",
                self.nms_iou
            )));
        }
        if self.statistics.is_empty() {
            return Err(Error::Config("statistic set is empty".into()));
        }
        if self.statistics.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(
                "statistics must be distinct and in canonical order (sum, count, binary)".into(),
            ));
        }
        Ok(())
    }

    pub fn min_threshold(&self) -> f64 {
        self.thresholds[0]
    }

    pub fn region_count(&self) -> usize {
        self.pyramid_levels.iter().map(|&n| (n as usize) * (n as usize)).sum()
    }

    /// C·R·T·S, the size of one pooled block.
    pub fn block_dim(&self) -> usize {
        self.categories.len() * self.region_count() * self.thresholds.len() * self.statistics.len()
    }

    pub fn dimension(&self) -> usize {
        self.block_dim() * self.pooling.blocks()
    }

    pub fn category_index(&self) -> HashMap<&str, usize> {
        self.categories
            .iter()
            .enumerate()
            .map(|(i, c)| (c.as_str(), i))
            .collect()
    }
}
