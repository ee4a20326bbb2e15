use super::linear::{accuracy, train_ovr_linear, LinearOvrModel, TrainParams};
use super::split::{split_corpus, SplitRatios};
use super::LabeledFeatureSet;
use crate::error::{Error, Result};

/// Regularization strengths tried on the validation split.
pub const DEFAULT_REG_GRID: [f64; 5] = [1e-4, 1e-3, 1e-2, 1e-1, 1.0];

/// Trains one model per grid value and keeps the one with the best
/// validation accuracy (first in grid order on ties).
pub fn select_regularization(
    train: &LabeledFeatureSet,
    val: &LabeledFeatureSet,
    grid: &[f64],
    params: TrainParams,
) -> Result<(LinearOvrModel, f64)> {
    let mut best: Option<(LinearOvrModel, f64)> = None;
    for &reg in grid {
        let model = train_ovr_linear(train, TrainParams { reg, ..params })?;
        let acc = accuracy(&model, val)?;
        log::debug!("reg={reg} validation accuracy={acc:.4}");
        if best.as_ref().is_none_or(|(_, b)| acc > *b) {
            best = Some((model, acc));
        }
    }
    best.ok_or_else(|| Error::Config("regularization grid is empty".into()))
}

#[derive(Debug, Clone)]
pub struct ProtocolReport {
    pub model: LinearOvrModel,
    pub val_accuracy: f64,
    pub test_accuracy: f64,
    pub sizes: (usize, usize, usize),
}

/// Split, select regularization on validation, report test accuracy.
pub fn evaluate_protocol(
    set: &LabeledFeatureSet,
    ratios: SplitRatios,
    seed: u64,
    grid: &[f64],
    params: TrainParams,
) -> Result<ProtocolReport> {
    let split = split_corpus(set, ratios, seed)?;
    let (model, val_accuracy) = select_regularization(&split.train, &split.val, grid, TrainParams { seed, ..params })?;
    let test_accuracy = accuracy(&model, &split.test)?;
    Ok(ProtocolReport {
        model,
        val_accuracy,
        test_accuracy,
        sizes: (split.train.len(), split.val.len(), split.test.len()),
    })
}
