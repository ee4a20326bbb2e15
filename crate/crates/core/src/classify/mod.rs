//! Forced-choice event classification: corpus splits, one-vs-rest linear
//! max-margin training, accuracy, DET curves and feature fusion.

mod det;
mod fuse;
mod linear;
mod protocol;
mod split;

pub use det::{det_curve, det_points, equal_error_point, write_det_points, DetPoint};
pub use fuse::{fuse_feature_files, fuse_features};
pub use linear::{accuracy, predict_forced_choice, train_ovr_linear, LinearOvrModel, TrainParams};
pub use protocol::{evaluate_protocol, select_regularization, ProtocolReport, DEFAULT_REG_GRID};
pub use split::{split_corpus, split_indices, Split, SplitIndices, SplitRatios};

use crate::error::{Error, Result};
use crate::features::{FeatureFile, FeatureHeader, FeatureRow, SparseVector};

#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub video_id: String,
    pub label: u32,
    pub features: SparseVector,
}

/// Labelled feature vectors sharing one header.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledFeatureSet {
    pub header: FeatureHeader,
    pub examples: Vec<Example>,
}

impl LabeledFeatureSet {
    pub fn new(header: FeatureHeader, examples: Vec<Example>) -> Result<Self> {
        if let Some(bad) = examples.iter().find(|e| e.features.dim() != header.dim) {
            return Err(Error::DimensionMismatch {
                expected: header.dim,
                actual: bad.features.dim(),
            });
        }
        Ok(LabeledFeatureSet { header, examples })
    }

    /// Requires every row to carry a label.
    pub fn from_file(file: FeatureFile) -> Result<Self> {
        let examples = file
            .rows
            .into_iter()
            .map(|row| {
                let label = row
                    .label
                    .ok_or_else(|| Error::Classify(format!("video {:?} has no label", row.video_id)))?;
                Ok(Example {
                    video_id: row.video_id,
                    label,
                    features: row.values,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(file.header, examples)
    }

    pub fn to_file(&self) -> FeatureFile {
        FeatureFile {
            header: self.header.clone(),
            rows: self
                .examples
                .iter()
                .map(|e| FeatureRow {
                    video_id: e.video_id.clone(),
                    label: Some(e.label),
                    values: e.features.clone(),
                })
                .collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.header.dim
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Distinct labels in ascending order.
    pub fn classes(&self) -> Vec<u32> {
        let mut classes: Vec<u32> = self.examples.iter().map(|e| e.label).collect();
        classes.sort_unstable();
        classes.dedup();
        classes
    }

    pub(crate) fn subset(&self, indices: &[usize]) -> LabeledFeatureSet {
        LabeledFeatureSet {
            header: self.header.clone(),
            examples: indices.iter().map(|&i| self.examples[i].clone()).collect(),
        }
    }
}
