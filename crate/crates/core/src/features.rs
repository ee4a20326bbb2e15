//! Sparse feature vectors and the feature file.
//!
//! ```text
//! #DB v1 dim=<D> C=<C> R=<R> T=<T> S=<S> pooling=<mean|max|both>
//! <video_id> <label> idx:val idx:val ...
//! ```
//!
//! Indices are zero-based and strictly ascending; the payload after the
//! first two tokens is libsvm-compatible. Unlabelled rows carry `-`.
//! Vectors that do not come from a single bank (fused or externally
//! supplied blocks) omit `C`, `R`, `T` and `S` and use a free-form pooling
//! tag, e.g. `#DB v1 dim=30 pooling=fused`.

use std::fmt::{self, Write as _};

use crate::config::{BankConfig, Pooling};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseVector {
    dim: usize,
    entries: Vec<(usize, f64)>,
}

impl SparseVector {
    pub fn zeros(dim: usize) -> Self {
        SparseVector {
            dim,
            entries: Vec::new(),
        }
    }

    /// Builds a vector from `(index, value)` pairs. Indices must be strictly
    /// ascending and below `dim`; exact zeros are dropped.
    pub fn from_entries(dim: usize, entries: Vec<(usize, f64)>) -> Result<Self> {
        let mut prev: Option<usize> = None;
        for &(i, v) in &entries {
            if i >= dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: i + 1,
                });
            }
            if prev.is_some_and(|p| p >= i) {
                return Err(Error::LayoutMismatch(format!(
                    "sparse indices must be strictly ascending (index {i})"
                )));
            }
            if !v.is_finite() {
                return Err(Error::LayoutMismatch(format!("non-finite value at index {i}")));
            }
            prev = Some(i);
        }
        let entries = entries.into_iter().filter(|&(_, v)| v != 0.0).collect();
        Ok(SparseVector { dim, entries })
    }

    pub fn from_dense(values: &[f64]) -> Self {
        SparseVector {
            dim: values.len(),
            entries: values
                .iter()
                .enumerate()
                .filter(|(_, &v)| v != 0.0)
                .map(|(i, &v)| (i, v))
                .collect(),
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for &(i, v) in &self.entries {
            out[i] = v;
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn get(&self, index: usize) -> f64 {
        self.entries
            .binary_search_by_key(&index, |&(i, _)| i)
            .map(|pos| self.entries[pos].1)
            .unwrap_or(0.0)
    }

    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.entries.iter().map(|&(i, v)| v * dense[i]).sum()
    }

    pub fn squared_norm(&self) -> f64 {
        self.entries.iter().map(|&(_, v)| v * v).sum()
    }

    /// Fraction of nonzero coordinates; zero for a zero-dimensional vector.
    pub fn density(&self) -> f64 {
        if self.dim == 0 {
            0.0
        } else {
            self.entries.len() as f64 / self.dim as f64
        }
    }

    /// Appends `other` after this vector's coordinates.
    pub fn concat(&self, other: &SparseVector) -> SparseVector {
        let mut entries = Vec::with_capacity(self.entries.len() + other.entries.len());
        entries.extend_from_slice(&self.entries);
        entries.extend(other.entries.iter().map(|&(i, v)| (i + self.dim, v)));
        SparseVector {
            dim: self.dim + other.dim,
            entries,
        }
    }

    pub fn map_values(&self, mut f: impl FnMut(usize, f64) -> f64) -> SparseVector {
        SparseVector {
            dim: self.dim,
            entries: self
                .entries
                .iter()
                .map(|&(i, v)| (i, f(i, v)))
                .filter(|&(_, v)| v != 0.0)
                .collect(),
        }
    }
}

/// Layout of one bank feature vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BankLayout {
    pub categories: usize,
    pub regions: usize,
    pub thresholds: usize,
    pub statistics: usize,
    pub pooling: Pooling,
}

impl BankLayout {
    pub fn from_config(config: &BankConfig) -> Self {
        BankLayout {
            categories: config.categories.len(),
            regions: config.region_count(),
            thresholds: config.thresholds.len(),
            statistics: config.statistics.len(),
            pooling: config.pooling,
        }
    }

    pub fn block_dim(&self) -> usize {
        self.categories * self.regions * self.thresholds * self.statistics
    }

    pub fn dim(&self) -> usize {
        self.block_dim() * self.pooling.blocks()
    }

    /// Position of `(c, r, t, s)` inside one pooled block.
    pub fn index(&self, c: usize, r: usize, t: usize, s: usize) -> usize {
        ((c * self.regions + r) * self.thresholds + t) * self.statistics + s
    }
}

/// A pooled video-level vector together with its layout.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub layout: BankLayout,
    pub values: SparseVector,
}

impl FeatureVector {
    pub fn dim(&self) -> usize {
        self.values.dim()
    }

    /// Fraction of nonzero entries.
    pub fn sparsity(&self) -> f64 {
        self.values.density()
    }
}

/// Fraction of nonzero entries of a feature vector.
pub fn sparsity(f: &FeatureVector) -> f64 {
    f.sparsity()
}

#[derive(Debug, Clone, PartialEq)]
pub enum HeaderLayout {
    Bank(BankLayout),
    /// Fused or externally supplied vectors, tagged with a free-form name.
    Opaque(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureHeader {
    pub dim: usize,
    pub layout: HeaderLayout,
}

impl FeatureHeader {
    pub fn bank(layout: BankLayout) -> Self {
        FeatureHeader {
            dim: layout.dim(),
            layout: HeaderLayout::Bank(layout),
        }
    }

    pub fn opaque(dim: usize, tag: impl Into<String>) -> Self {
        FeatureHeader {
            dim,
            layout: HeaderLayout::Opaque(tag.into()),
        }
    }

    pub fn bank_layout(&self) -> Option<&BankLayout> {
        match &self.layout {
            HeaderLayout::Bank(l) => Some(l),
            HeaderLayout::Opaque(_) => None,
        }
    }

    fn parse(line: &str) -> Result<Self> {
        let mut tokens = line.split_whitespace();
        if tokens.next() != Some("#DB") || tokens.next() != Some("v1") {
            return Err(Error::parse(1, "feature file must start with `#DB v1`"));
        }
        let (mut dim, mut c, mut r, mut t, mut s, mut pooling) = (None, None, None, None, None, None);
        for (pos, tok) in tokens.enumerate() {
            let field = pos + 3;
            let (key, value) = tok
                .split_once('=')
                .ok_or_else(|| Error::parse(1, format!("field {field}: expected key=value, got {tok:?}")))?;
            let num = || {
                value
                    .parse::<usize>()
                    .map_err(|_| Error::parse(1, format!("field {field}: invalid {key} {value:?}")))
            };
            match key {
                "dim" => dim = Some(num()?),
                "C" => c = Some(num()?),
                "R" => r = Some(num()?),
                "T" => t = Some(num()?),
                "S" => s = Some(num()?),
                "pooling" => pooling = Some(value.to_owned()),
                _ => return Err(Error::parse(1, format!("field {field}: unknown header key {key:?}"))),
            }
        }
        let dim = dim.ok_or_else(|| Error::parse(1, "header is missing dim="))?;
        let layout = match (c, r, t, s) {
            (Some(categories), Some(regions), Some(thresholds), Some(statistics)) => {
                let pooling: Pooling = pooling
                    .as_deref()
                    .ok_or_else(|| Error::parse(1, "header is missing pooling="))?
                    .parse()
                    .map_err(|e: Error| Error::parse(1, e.to_string()))?;
                let layout = BankLayout {
                    categories,
                    regions,
                    thresholds,
                    statistics,
                    pooling,
                };
                if layout.dim() != dim {
                    return Err(Error::parse(
                        1,
                        format!("dim={dim} disagrees with C·R·T·S·blocks = {}", layout.dim()),
                    ));
                }
                HeaderLayout::Bank(layout)
            }
            (None, None, None, None) => HeaderLayout::Opaque(pooling.unwrap_or_else(|| "external".to_owned())),
            _ => return Err(Error::parse(1, "header must give all of C, R, T, S or none")),
        };
        Ok(FeatureHeader { dim, layout })
    }
}

impl fmt::Display for FeatureHeader {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.layout {
            HeaderLayout::Bank(l) => write!(
                f,
                "#DB v1 dim={} C={} R={} T={} S={} pooling={}",
                self.dim, l.categories, l.regions, l.thresholds, l.statistics, l.pooling
            ),
            HeaderLayout::Opaque(tag) => write!(f, "#DB v1 dim={} pooling={tag}", self.dim),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub video_id: String,
    pub label: Option<u32>,
    pub values: SparseVector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFile {
    pub header: FeatureHeader,
    pub rows: Vec<FeatureRow>,
}

impl FeatureFile {
    pub fn new(header: FeatureHeader) -> Self {
        FeatureFile {
            header,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: FeatureRow) -> Result<()> {
        if row.values.dim() != self.header.dim {
            return Err(Error::DimensionMismatch {
                expected: self.header.dim,
                actual: row.values.dim(),
            });
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let header = match lines.next() {
            Some((_, line)) => FeatureHeader::parse(line)?,
            None => return Err(Error::parse(1, "missing header line")),
        };
        let mut file = FeatureFile::new(header);
        for (i, line) in lines {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            file.rows.push(parse_row(line, line_no, file.header.dim)?);
        }
        Ok(file)
    }
}

pub fn write_row(out: &mut String, row: &FeatureRow) {
    out.push_str(&row.video_id);
    match row.label {
        Some(l) => {
            let _ = write!(out, " {l}");
        }
        None => out.push_str(" -"),
    }
    for &(i, v) in row.values.entries() {
        // `{}` prints the shortest decimal that reads back to the same f64.
        let _ = write!(out, " {i}:{v}");
    }
    out.push('\n');
}

impl fmt::Display for FeatureFile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.header)?;
        let mut buf = String::new();
        for row in &self.rows {
            buf.clear();
            write_row(&mut buf, row);
            f.write_str(&buf)?;
        }
        Ok(())
    }
}

fn parse_row(line: &str, line_no: usize, dim: usize) -> Result<FeatureRow> {
    let mut tokens = line.split_whitespace();
    let video_id = tokens
        .next()
        .ok_or_else(|| Error::parse(line_no, "field 1: missing video id"))?
        .to_owned();
    let label = match tokens.next() {
        None => return Err(Error::parse(line_no, "field 2: missing label")),
        Some("-") => None,
        Some(tok) => Some(
            tok.parse::<u32>()
                .map_err(|_| Error::parse(line_no, format!("field 2: invalid label {tok:?}")))?,
        ),
    };
    let mut entries = Vec::new();
    let mut prev: Option<usize> = None;
    for (pos, tok) in tokens.enumerate() {
        let field = pos + 3;
        let bad = |msg: String| Error::parse(line_no, format!("field {field}: {msg}"));
        let (idx, val) = tok
            .split_once(':')
            .ok_or_else(|| bad(format!("expected idx:val, got {tok:?}")))?;
        let idx: usize = idx.parse().map_err(|_| bad(format!("invalid index {idx:?}")))?;
        let val: f64 = val.parse().map_err(|_| bad(format!("invalid value {val:?}")))?;
        if idx >= dim {
            return Err(bad(format!("index {idx} is not below dim={dim}")));
        }
        if prev.is_some_and(|p| p >= idx) {
            return Err(bad(format!("index {idx} is not strictly ascending")));
        }
        if !val.is_finite() {
            return Err(bad(format!("value {val} is not finite")));
        }
        prev = Some(idx);
        if val != 0.0 {
            entries.push((idx, val));
        }
    }
    Ok(FeatureRow {
        video_id,
        label,
        values: SparseVector { dim, entries },
    })
}

/// Serializes a single vector as a feature file with one row.
pub fn serialize_feature(video_id: &str, label: Option<u32>, f: &FeatureVector) -> String {
    let mut file = FeatureFile::new(FeatureHeader::bank(f.layout));
    file.rows.push(FeatureRow {
        video_id: video_id.to_owned(),
        label,
        values: f.values.clone(),
    });
    file.to_string()
}

/// Reads back every row of a bank feature file as a [`FeatureVector`].
pub fn deserialize_features(text: &str) -> Result<Vec<(FeatureRow, FeatureVector)>> {
    let file = FeatureFile::parse(text)?;
    let layout = *file
        .header
        .bank_layout()
        .ok_or_else(|| Error::parse(1, "not a bank feature file (missing C/R/T/S)"))?;
    Ok(file
        .rows
        .into_iter()
        .map(|row| {
            let f = FeatureVector {
                layout,
                values: row.values.clone(),
            };
            (row, f)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn layout() -> BankLayout {
        BankLayout {
            categories: 2,
            regions: 5,
            thresholds: 2,
            statistics: 3,
            pooling: Pooling::Mean,
        }
    }

    #[test]
    fn all_zero_vector_has_empty_payload() {
        let f = FeatureVector {
            layout: layout(),
            values: SparseVector::zeros(60),
        };
        let text = serialize_feature("v1", Some(3), &f);
        assert_eq!(text, "#DB v1 dim=60 C=2 R=5 T=2 S=3 pooling=mean\nv1 3\n");
        let back = deserialize_features(&text).unwrap();
        assert_eq!(back[0].1, f);
        assert_eq!(f.sparsity(), 0.0);
    }

    #[test]
    fn dense_vector_sparsity_is_one() {
        let v = SparseVector::from_dense(&[1.0, -2.0, 0.5]);
        assert_eq!(v.density(), 1.0);
    }

    #[test]
    fn index_out_of_bounds_rejected() {
        let text = "#DB v1 dim=60 C=2 R=5 T=2 S=3 pooling=mean\nv1 1 3:1 60:2\n";
        match FeatureFile::parse(text).unwrap_err() {
            Error::Parse { line, msg } => {
                assert_eq!(line, 2);
                assert!(msg.contains("field 4"), "{msg}");
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn malformed_rows_rejected() {
        let h = "#DB v1 dim=10 pooling=external\n";
        for row in [
            "v x 1:1",
            "v 1 1:1 1:2",
            "v 1 3:1 2:1",
            "v 1 a:1",
            "v 1 1:z",
            "v 1 1:inf",
            "v",
        ] {
            assert!(FeatureFile::parse(&format!("{h}{row}\n")).is_err(), "{row}");
        }
        assert!(FeatureFile::parse("#DB v1 dim=61 C=2 R=5 T=2 S=3 pooling=mean\n").is_err());
        assert!(FeatureFile::parse("#DB v1 dim=60 C=2 R=5 pooling=mean\n").is_err());
        assert!(FeatureFile::parse("").is_err());
        assert!(FeatureFile::parse("v 1 1:1\n").is_err());
    }

    #[test]
    fn opaque_header_round_trip() {
        let text = "#DB v1 dim=30 pooling=fused\na - 0:1 29:-0.25\n";
        let file = FeatureFile::parse(text).unwrap();
        assert_eq!(file.header, FeatureHeader::opaque(30, "fused"));
        assert_eq!(file.rows[0].label, None);
        assert_eq!(file.to_string(), text);
    }

    #[test]
    fn flat_index_nesting() {
        let l = layout();
        assert_eq!(l.index(0, 0, 0, 0), 0);
        assert_eq!(l.index(0, 0, 0, 2), 2);
        assert_eq!(l.index(0, 0, 1, 0), 3);
        assert_eq!(l.index(0, 1, 0, 0), 6);
        assert_eq!(l.index(1, 0, 0, 0), 30);
        assert_eq!(l.index(1, 4, 1, 2), 59);
    }

    #[test]
    fn concat_offsets_indices() {
        let a = SparseVector::from_entries(3, vec![(1, 2.0)]).unwrap();
        let b = SparseVector::from_entries(4, vec![(0, 1.0), (3, 5.0)]).unwrap();
        let c = a.concat(&b);
        assert_eq!(c.dim(), 7);
        assert_eq!(c.entries(), &[(1, 2.0), (3, 1.0), (6, 5.0)]);
        assert_eq!(a.concat(&SparseVector::zeros(0)), a);
    }

    proptest! {
        #[test]
        fn feature_file_round_trip(
            rows in proptest::collection::vec(
                (
                    "[a-z0-9]{1,6}",
                    proptest::option::of(0u32..20),
                    proptest::collection::btree_map(0usize..60, -1e6..1e6f64, 0..20),
                ),
                0..6,
            )
        ) {
            let mut file = FeatureFile::new(FeatureHeader::bank(layout()));
            for (id, label, map) in rows {
                let values = SparseVector::from_entries(60, map.into_iter().collect()).unwrap();
                file.push(FeatureRow { video_id: id, label, values }).unwrap();
            }
            let text = file.to_string();
            let back = FeatureFile::parse(&text).unwrap();
            prop_assert_eq!(&back, &file);
            prop_assert_eq!(back.to_string(), text);
        }
    }
}
