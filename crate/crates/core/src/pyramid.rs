//! Spatial pyramid geometry.
//!
//! A level with subdivision `n` splits the unit square into `n x n` cells,
//! numbered row-major. Levels are concatenated in configuration order, so
//! with the default levels `[1, 2, 4]` region 0 is the whole image, regions
//! 1..=4 the 2x2 grid and 5..=20 the 4x4 grid.
//!
//! Cells are half-open `[lo, hi)` except on the far edge of the image, which
//! belongs to the last row/column. Every point of the unit square therefore
//! lies in exactly one cell per level.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellBounds {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub level_index: usize,
    pub subdivision: u32,
    pub row: u32,
    pub col: u32,
    pub bounds: CellBounds,
    pub flat_index: usize,
}

impl Region {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let last = self.subdivision - 1;
        let b = &self.bounds;
        let in_x = x >= b.x0 && (x < b.x1 || (self.col == last && x <= b.x1));
        let in_y = y >= b.y0 && (y < b.y1 || (self.row == last && y <= b.y1));
        in_x && in_y
    }
}

fn edge(i: u32, n: u32) -> f64 {
    f64::from(i) / f64::from(n)
}

pub fn enumerate_regions(levels: &[u32]) -> Result<Vec<Region>> {
    if levels.is_empty() {
        return Err(Error::Config("pyramid level list is empty".into()));
    }
    if let Some(bad) = levels.iter().find(|&&n| n == 0) {
        return Err(Error::Config(format!("invalid pyramid subdivision {bad}")));
    }
    let mut regions = Vec::new();
    for (level_index, &n) in levels.iter().enumerate() {
        for row in 0..n {
            for col in 0..n {
                regions.push(Region {
                    level_index,
                    subdivision: n,
                    row,
                    col,
                    bounds: CellBounds {
                        x0: edge(col, n),
                        y0: edge(row, n),
                        x1: edge(col + 1, n),
                        y1: edge(row + 1, n),
                    },
                    flat_index: regions.len(),
                });
            }
        }
    }
    Ok(regions)
}

/// Flat indices of every region containing `center`, in region order.
/// For a pyramid built by [`enumerate_regions`] this is one index per level.
pub fn region_membership(center: (f64, f64), regions: &[Region]) -> Vec<usize> {
    regions
        .iter()
        .filter(|r| r.contains(center.0, center.1))
        .map(|r| r.flat_index)
        .collect()
}

/// Pyramid with constant-time cell lookup, used on the hot path.
#[derive(Debug, Clone, PartialEq)]
pub struct Pyramid {
    levels: Vec<u32>,
    offsets: Vec<usize>,
    region_count: usize,
}

impl Pyramid {
    pub fn new(levels: &[u32]) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::Config("pyramid level list is empty".into()));
        }
        let mut offsets = Vec::with_capacity(levels.len());
        let mut total = 0usize;
        for &n in levels {
            if n == 0 {
                return Err(Error::Config("pyramid subdivisions must be >= 1".into()));
            }
            offsets.push(total);
            total += (n as usize) * (n as usize);
        }
        Ok(Pyramid {
            levels: levels.to_vec(),
            offsets,
            region_count: total,
        })
    }

    pub fn levels(&self) -> &[u32] {
        &self.levels
    }

    pub fn region_count(&self) -> usize {
        self.region_count
    }

    pub fn regions(&self) -> Vec<Region> {
        enumerate_regions(&self.levels).expect("levels validated at construction")
    }

    /// Writes the containing cell of each level into `out` (one per level).
    pub fn locate(&self, x: f64, y: f64, out: &mut [usize]) {
        for ((slot, &n), &offset) in out.iter_mut().zip(&self.levels).zip(&self.offsets) {
            let row = cell_of(y, n);
            let col = cell_of(x, n);
            *slot = offset + (row * n + col) as usize;
        }
    }

    pub fn membership(&self, x: f64, y: f64) -> Vec<usize> {
        let mut out = vec![0; self.levels.len()];
        self.locate(x, y, &mut out);
        out
    }
}

/// Index of the cell containing `v` along one axis, consistent with the
/// cell edges produced by [`enumerate_regions`] even where `v * n` rounds.
fn cell_of(v: f64, n: u32) -> u32 {
    let last = n - 1;
    let mut c = ((v * f64::from(n)).max(0.0) as u32).min(last);
    while c > 0 && v < edge(c, n) {
        c -= 1;
    }
    while c < last && v >= edge(c + 1, n) {
        c += 1;
    }
    c
}
