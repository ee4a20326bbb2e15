use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::LabeledFeatureSet;
use crate::error::{Error, Result};

const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.4,
            val: 0.2,
            test: 0.4,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err(Error::Config(format!("split ratios must be positive, got {parts:?}")));
        }
        if (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split ratios must sum to 1, got {parts:?}")));
        }
        Ok(())
    }
}

impl std::str::FromStr for SplitRatios {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Config(format!("invalid split ratios {s:?}")))?;
        let [train, val, test] = parts[..] else {
            return Err(Error::Config(format!("expected three split ratios, got {s:?}")));
        };
        let ratios = SplitRatios { train, val, test };
        ratios.validate()?;
        Ok(ratios)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: LabeledFeatureSet,
    pub val: LabeledFeatureSet,
    pub test: LabeledFeatureSet,
    /// Classes with fewer than three members, placed wholly in training.
    pub train_only_classes: Vec<u32>,
}

/// Corpus positions assigned to each part.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    pub train_only_classes: Vec<u32>,
}

/// Stratified seeded split.
///
/// Part sizes follow `floor(N * ratio)` for train and validation with the
/// remainder in test. Every class with at least three members appears in
/// all three parts; smaller classes go wholly to training.
pub fn split_corpus(set: &LabeledFeatureSet, ratios: SplitRatios, seed: u64) -> Result<Split> {
    let idx = split_indices(&set.examples.iter().map(|e| e.label).collect::<Vec<_>>(), ratios, seed)?;
    Ok(Split {
        train: set.subset(&idx.train),
        val: set.subset(&idx.val),
        test: set.subset(&idx.test),
        train_only_classes: idx.train_only_classes,
    })
}

struct ClassAlloc {
    members: Vec<usize>,
    train: usize,
    val: usize,
}

impl ClassAlloc {
    fn test(&self) -> usize {
        self.members.len() - self.train - self.val
    }
}

pub fn split_indices(labels: &[u32], ratios: SplitRatios, seed: u64) -> Result<SplitIndices> {
    ratios.validate()?;
    let mut by_class: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train_only_classes = Vec::new();
    let mut allocs: Vec<ClassAlloc> = Vec::with_capacity(by_class.len());
    for (&class, members) in &mut by_class {
        members.shuffle(&mut rng);
        let n = members.len();
        if n < 3 {
            log::warn!("class {class} has {n} member(s); placing it wholly in training");
            train_only_classes.push(class);
            allocs.push(ClassAlloc {
                members: std::mem::take(members),
                train: n,
                val: 0,
            });
            continue;
        }
        let nf = n as f64;
        let mut train = ((nf * ratios.train + EPS).floor() as usize).max(1);
        let mut val = ((nf * ratios.val + EPS).floor() as usize).max(1);
        while train + val > n - 1 {
            if train >= val && train > 1 {
                train -= 1;
            } else {
                val -= 1;
            }
        }
        allocs.push(ClassAlloc {
            members: std::mem::take(members),
            train,
            val,
        });
    }

    // Per-class floors can undershoot the corpus-level floors; top up from
    // test portions, largest fractional remainder first.
    let total = labels.len() as f64;
    let target_train = (total * ratios.train + EPS).floor() as usize;
    let target_val = (total * ratios.val + EPS).floor() as usize;
    top_up(&mut allocs, target_train, ratios.train, |a| &mut a.train);
    top_up(&mut allocs, target_val, ratios.val, |a| &mut a.val);

    let mut out = SplitIndices {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
        train_only_classes,
    };
    for a in &allocs {
        let (tr, rest) = a.members.split_at(a.train);
        let (va, te) = rest.split_at(a.val);
        out.train.extend_from_slice(tr);
        out.val.extend_from_slice(va);
        out.test.extend_from_slice(te);
    }
    out.train.sort_unstable();
    out.val.sort_unstable();
    out.test.sort_unstable();
    Ok(out)
}

fn top_up(allocs: &mut [ClassAlloc], target: usize, ratio: f64, part: impl Fn(&mut ClassAlloc) -> &mut usize) {
    let mut current: usize = allocs.iter_mut().map(|a| *part(a)).sum();
    if current >= target {
        return;
    }
    let mut order: Vec<usize> = (0..allocs.len()).filter(|&i| allocs[i].members.len() >= 3).collect();
    let remainder = |a: &ClassAlloc| {
        let exact = a.members.len() as f64 * ratio;
        exact - exact.floor()
    };
    order.sort_by(|&a, &b| remainder(&allocs[b]).total_cmp(&remainder(&allocs[a])).then(a.cmp(&b)));
    while current < target {
        let mut moved = false;
        for &i in &order {
            if current == target {
                break;
            }
            if allocs[i].test() > 1 {
                *part(&mut allocs[i]) += 1;
                current += 1;
                moved = true;
            }
        }
        if !moved {
            break;
        }
    }
}
