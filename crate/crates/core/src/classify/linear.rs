//! One-vs-rest linear SVM.
//!
//! Each class solves the L2-regularized hinge-loss problem
//!
//! ```text
//! min_w  reg/2 * |w|^2 + 1/n * sum_i max(0, 1 - y_i (w . x_i + b))
//! ```
//!
//! by dual coordinate descent, with the bias learned as the weight of a
//! constant unit feature. Epoch count and the per-epoch visiting order are
//! fixed by the parameters, so training is bit-reproducible; classes are
//! independent and train in parallel.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::LabeledFeatureSet;
use crate::error::{Error, Result};
use crate::features::SparseVector;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainParams {
    pub reg: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Divide every dimension by its largest absolute training value.
    pub max_abs_scaling: bool,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            reg: 1e-2,
            epochs: 40,
            seed: 0,
            max_abs_scaling: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearOvrModel {
    /// Ascending; `weights[k]` and `biases[k]` belong to `classes[k]`.
    pub classes: Vec<u32>,
    pub dim: usize,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
    pub params: TrainParams,
}

impl LinearOvrModel {
    pub fn new(classes: Vec<u32>, weights: Vec<Vec<f64>>, biases: Vec<f64>, params: TrainParams) -> Result<Self> {
        if classes.is_empty() || weights.len() != classes.len() || biases.len() != classes.len() {
            return Err(Error::Classify("one weight vector and bias per class required".into()));
        }
        let dim = weights[0].len();
        if weights.iter().any(|w| w.len() != dim) {
            return Err(Error::Classify("weight vectors differ in length".into()));
        }
        if weights.iter().flatten().chain(&biases).any(|v| !v.is_finite()) {
            return Err(Error::Classify("non-finite weight".into()));
        }
        Ok(LinearOvrModel {
            classes,
            dim,
            weights,
            biases,
            params,
        })
    }

    pub fn decision_values(&self, x: &SparseVector) -> Result<Vec<f64>> {
        if x.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: x.dim(),
            });
        }
        Ok(self
            .weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| x.dot(w) + b)
            .collect())
    }

    pub fn class_position(&self, class: u32) -> Option<usize> {
        self.classes.binary_search(&class).ok()
    }

    /// Text form: a header line followed by one `class bias idx:val ...`
    /// line per class.
    pub fn to_text(&self) -> String {
        let classes: Vec<String> = self.classes.iter().map(u32::to_string).collect();
        let mut out = format!(
            "#DBMODEL v1 dim={} classes={} reg={} epochs={} seed={} scaling={}\n",
            self.dim,
            classes.join(","),
            self.params.reg,
            self.params.epochs,
            self.params.seed,
            if self.params.max_abs_scaling { "maxabs" } else { "none" },
        );
        for ((class, w), b) in self.classes.iter().zip(&self.weights).zip(&self.biases) {
            let _ = write!(out, "{class} {b}");
            for (i, v) in w.iter().enumerate().filter(|(_, v)| **v != 0.0) {
                let _ = write!(out, " {i}:{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or_else(|| Error::parse(1, "empty model file"))?;
        let mut tokens = header.split_whitespace();
        if tokens.next() != Some("#DBMODEL") || tokens.next() != Some("v1") {
            return Err(Error::parse(1, "model file must start with `#DBMODEL v1`"));
        }
        let (mut dim, mut classes, mut params) = (None, None, TrainParams::default());
        for tok in tokens {
            let (key, value) = tok
                .split_once('=')
                .ok_or_else(|| Error::parse(1, format!("expected key=value, got {tok:?}")))?;
            let bad = || Error::parse(1, format!("invalid {key} {value:?}"));
            match key {
                "dim" => dim = Some(value.parse::<usize>().map_err(|_| bad())?),
                "classes" => {
                    classes = Some(
                        value
                            .split(',')
                            .map(|c| c.parse::<u32>())
                            .collect::<std::result::Result<Vec<_>, _>>()
                            .map_err(|_| bad())?,
                    )
                }
                "reg" => params.reg = value.parse().map_err(|_| bad())?,
                "epochs" => params.epochs = value.parse().map_err(|_| bad())?,
                "seed" => params.seed = value.parse().map_err(|_| bad())?,
                "scaling" => {
                    params.max_abs_scaling = match value {
                        "maxabs" => true,
                        "none" => false,
                        _ => return Err(bad()),
                    }
                }
                _ => return Err(Error::parse(1, format!("unknown header key {key:?}"))),
            }
        }
        let dim = dim.ok_or_else(|| Error::parse(1, "missing dim="))?;
        let classes = classes.ok_or_else(|| Error::parse(1, "missing classes="))?;
        if classes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::parse(1, "classes must be strictly ascending"));
        }

        let mut weights = Vec::with_capacity(classes.len());
        let mut biases = Vec::with_capacity(classes.len());
        for &class in &classes {
            let (i, line) = lines
                .next()
                .ok_or_else(|| Error::parse(0, format!("missing weight line for class {class}")))?;
            let line_no = i + 1;
            let mut tokens = line.split_whitespace();
            let got: u32 = tokens
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| Error::parse(line_no, "field 1: invalid class"))?;
            if got != class {
                return Err(Error::parse(line_no, format!("expected class {class}, found {got}")));
            }
            let bias: f64 = tokens
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| Error::parse(line_no, "field 2: invalid bias"))?;
            let mut w = vec![0.0; dim];
            for (pos, tok) in tokens.enumerate() {
                let parsed = tok
                    .split_once(':')
                    .and_then(|(a, b)| Some((a.parse::<usize>().ok()?, b.parse::<f64>().ok()?)));
                match parsed {
                    Some((idx, v)) if idx < dim => w[idx] = v,
                    _ => {
                        return Err(Error::parse(
                            line_no,
                            format!("field {}: invalid weight {tok:?}", pos + 3),
                        ))
                    }
                }
            }
            weights.push(w);
            biases.push(bias);
        }
        if weights.is_empty() {
            return Err(Error::parse(1, "model has no classes"));
        }
        let mut model = LinearOvrModel::new(classes, weights, biases, params)?;
        model.dim = dim;
        Ok(model)
    }
}

pub fn train_ovr_linear(train: &LabeledFeatureSet, params: TrainParams) -> Result<LinearOvrModel> {
    if !(params.reg.is_finite() && params.reg > 0.0) {
        return Err(Error::Config(format!(
            "regularization must be positive, got {}",
            params.reg
        )));
    }
    let classes = train.classes();
    if classes.len() < 2 {
        return Err(Error::Classify(format!(
            "training needs at least two classes, found {}",
            classes.len()
        )));
    }
    let dim = train.dim();
    let n = train.len();

    let scale = params.max_abs_scaling.then(|| max_abs(train));
    let xs: Vec<SparseVector> = match &scale {
        Some(s) => train
            .examples
            .iter()
            .map(|e| e.features.map_values(|i, v| v / s[i]))
            .collect(),
        None => train.examples.iter().map(|e| e.features.clone()).collect(),
    };
    // Squared norms, plus one for the constant bias feature.
    let diag: Vec<f64> = xs.iter().map(|x| x.squared_norm() + 1.0).collect();
    let upper = 1.0 / (params.reg * n as f64);

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let orders: Vec<Vec<usize>> = (0..params.epochs)
        .map(|_| {
            order.shuffle(&mut rng);
            order.clone()
        })
        .collect();

    let labels: Vec<u32> = train.examples.iter().map(|e| e.label).collect();
    let solved: Vec<(Vec<f64>, f64)> = classes
        .par_iter()
        .map(|&class| {
            let y: Vec<f64> = labels.iter().map(|&l| if l == class { 1.0 } else { -1.0 }).collect();
            dual_coordinate_descent(&xs, &y, &diag, upper, dim, &orders)
        })
        .collect();

    let mut weights = Vec::with_capacity(classes.len());
    let mut biases = Vec::with_capacity(classes.len());
    for (mut w, b) in solved {
        if let Some(s) = &scale {
            for (wi, si) in w.iter_mut().zip(s) {
                *wi /= si;
            }
        }
        weights.push(w);
        biases.push(b);
    }
    let mut model = LinearOvrModel::new(classes, weights, biases, params)?;
    model.dim = dim;
    Ok(model)
}

fn max_abs(set: &LabeledFeatureSet) -> Vec<f64> {
    let mut scale = vec![0.0f64; set.dim()];
    for e in &set.examples {
        for &(i, v) in e.features.entries() {
            scale[i] = scale[i].max(v.abs());
        }
    }
    for s in &mut scale {
        if *s == 0.0 {
            *s = 1.0;
        }
    }
    scale
}

fn dual_coordinate_descent(
    xs: &[SparseVector],
    y: &[f64],
    diag: &[f64],
    upper: f64,
    dim: usize,
    orders: &[Vec<usize>],
) -> (Vec<f64>, f64) {
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let mut alpha = vec![0.0; xs.len()];
    for order in orders {
        for &i in order {
            let x = &xs[i];
            let g = y[i] * (x.dot(&w) + b) - 1.0;
            let a = alpha[i];
            let projected = if a == 0.0 {
                g.min(0.0)
            } else if a == upper {
                g.max(0.0)
            } else {
                g
            };
            if projected == 0.0 {
                continue;
            }
            let updated = (a - g / diag[i]).clamp(0.0, upper);
            let step = (updated - a) * y[i];
            alpha[i] = updated;
            for &(j, v) in x.entries() {
                w[j] += step * v;
            }
            b += step;
        }
    }
    (w, b)
}

/// Argmax over class decision values; ties go to the lowest class.
pub fn predict_forced_choice(model: &LinearOvrModel, x: &SparseVector) -> Result<u32> {
    let scores = model.decision_values(x)?;
    let mut best = 0;
    for (k, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = k;
        }
    }
    Ok(model.classes[best])
}

pub fn accuracy(model: &LinearOvrModel, set: &LabeledFeatureSet) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::Classify("accuracy of an empty set".into()));
    }
    let correct = set
        .examples
        .par_iter()
        .map(|e| predict_forced_choice(model, &e.features).map(|p| usize::from(p == e.label)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum::<usize>();
    Ok(correct as f64 / set.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::Example;
    use crate::features::FeatureHeader;
    use rand::Rng;

    fn set(points: &[([f64; 2], u32)]) -> LabeledFeatureSet {
        LabeledFeatureSet::new(
            FeatureHeader::opaque(2, "toy"),
            points
                .iter()
                .enumerate()
                .map(|(i, (x, l))| Example {
                    video_id: format!("v{i}"),
                    label: *l,
                    features: SparseVector::from_dense(x),
                })
                .collect(),
        )
        .unwrap()
    }

    fn separable() -> LabeledFeatureSet {
        set(&[
            ([2.0, 2.1], 1),
            ([1.5, 2.5], 1),
            ([2.5, 1.2], 1),
            ([3.0, 3.0], 1),
            ([-1.0, -2.0], 2),
            ([-2.0, -0.5], 2),
            ([-1.5, -1.5], 2),
            ([-0.2, -3.0], 2),
        ])
    }

    #[test]
    fn separable_two_classes() {
        let data = separable();
        let model = train_ovr_linear(&data, TrainParams::default()).unwrap();
        assert_eq!(accuracy(&model, &data).unwrap(), 1.0);
        let deep = SparseVector::from_dense(&[4.0, 4.0]);
        assert_eq!(predict_forced_choice(&model, &deep).unwrap(), 1);
        let deep = SparseVector::from_dense(&[-4.0, -4.0]);
        assert_eq!(predict_forced_choice(&model, &deep).unwrap(), 2);
    }

    #[test]
    fn training_is_deterministic() {
        let params = TrainParams {
            seed: 17,
            ..TrainParams::default()
        };
        let a = train_ovr_linear(&separable(), params).unwrap();
        let b = train_ovr_linear(&separable(), params).unwrap();
        assert_eq!(a.to_text(), b.to_text());
    }

    #[test]
    fn max_abs_scaling_still_separates() {
        let params = TrainParams {
            max_abs_scaling: true,
            ..TrainParams::default()
        };
        let data = separable();
        let model = train_ovr_linear(&data, params).unwrap();
        assert_eq!(accuracy(&model, &data).unwrap(), 1.0);
    }

    #[test]
    fn rejects_single_class_and_bad_reg() {
        let one = set(&[([1.0, 0.0], 3), ([0.0, 1.0], 3)]);
        assert!(matches!(
            train_ovr_linear(&one, TrainParams::default()),
            Err(Error::Classify(_))
        ));
        let params = TrainParams {
            reg: 0.0,
            ..TrainParams::default()
        };
        assert!(train_ovr_linear(&separable(), params).is_err());
    }

    #[test]
    fn zero_vector_ties_go_to_lowest_class() {
        let model = LinearOvrModel::new(
            vec![2, 5, 9],
            vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, 0.0]],
            vec![0.0; 3],
            TrainParams::default(),
        )
        .unwrap();
        assert_eq!(predict_forced_choice(&model, &SparseVector::zeros(2)).unwrap(), 2);
        assert!(predict_forced_choice(&model, &SparseVector::zeros(3)).is_err());
    }

    #[test]
    fn model_text_round_trip() {
        let model = train_ovr_linear(&separable(), TrainParams::default()).unwrap();
        let back = LinearOvrModel::from_text(&model.to_text()).unwrap();
        assert_eq!(back, model);
        assert!(LinearOvrModel::from_text("#DBMODEL v1 dim=2 classes=1,2\n1 0\n").is_err());
        assert!(LinearOvrModel::from_text("#DBMODEL v1 dim=2 classes=1\n1 0 5:1\n").is_err());
    }

    #[test]
    fn random_model_is_near_chance() {
        let classes: Vec<u32> = (1..=15).collect();
        let n = 3000;
        let mut accs = Vec::new();
        for seed in 0..5u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let dim = 20;
            let examples = (0..n)
                .map(|i| Example {
                    video_id: format!("v{i}"),
                    label: classes[i % 15],
                    features: SparseVector::from_dense(&(0..dim).map(|_| rng.random::<f64>()).collect::<Vec<_>>()),
                })
                .collect();
            let data = LabeledFeatureSet::new(FeatureHeader::opaque(dim, "rand"), examples).unwrap();
            let weights = (0..15)
                .map(|_| (0..dim).map(|_| rng.random::<f64>() - 0.5).collect())
                .collect();
            let model = LinearOvrModel::new(classes.clone(), weights, vec![0.0; 15], TrainParams::default()).unwrap();
            accs.push(accuracy(&model, &data).unwrap());
        }
        let mean = accs.iter().sum::<f64>() / accs.len() as f64;
        // Binomial standard error of the 5-seed mean is about 0.002.
        assert!((mean - 1.0 / 15.0).abs() < 0.02, "mean accuracy {mean}");
    }
}
