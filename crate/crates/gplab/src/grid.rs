//! Lattice geometry shared by the field and percolation layers.
//!
//! A grid is a set of points `spacing · j` for integer multi-indices `j` in
//! a product of inclusive per-axis ranges. All grids used by the lab are
//! anchored at the origin, so grids of commensurate spacings nest exactly.

use serde::{Deserialize, Serialize};

/// Inclusive index range along one axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AxisRange {
    pub lo: i64,
    pub hi: i64,
}

impl AxisRange {
    pub fn len(&self) -> usize {
        (self.hi - self.lo + 1).max(0) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.hi < self.lo
    }

    pub fn contains(&self, i: i64) -> bool {
        self.lo <= i && i <= self.hi
    }
}

/// Points `spacing · j` for `j` in the product of `ranges`.
/// Row-major flat storage order: the last axis varies fastest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridGeom {
    pub spacing: f64,
    pub ranges: Vec<AxisRange>,
}

impl GridGeom {
    pub fn dim(&self) -> usize {
        self.ranges.len()
    }

    pub fn extents(&self) -> Vec<usize> {
        self.ranges.iter().map(|r| r.len()).collect()
    }

    pub fn len(&self) -> usize {
        self.ranges.iter().map(|r| r.len()).product()
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.iter().any(|r| r.is_empty())
    }

    pub fn contains(&self, idx: &[i64]) -> bool {
        idx.len() == self.dim() && idx.iter().zip(&self.ranges).all(|(i, r)| r.contains(*i))
    }

    /// Flat offset of a multi-index (must be inside the grid).
    pub fn flat(&self, idx: &[i64]) -> usize {
        debug_assert!(self.contains(idx));
        let mut off = 0usize;
        for (i, r) in idx.iter().zip(&self.ranges) {
            off = off * r.len() + (i - r.lo) as usize;
        }
        off
    }

    /// Multi-index of a flat offset.
    pub fn unflat(&self, mut off: usize) -> Vec<i64> {
        let mut idx = vec![0i64; self.dim()];
        for ax in (0..self.dim()).rev() {
            let n = self.ranges[ax].len();
            idx[ax] = self.ranges[ax].lo + (off % n) as i64;
            off /= n;
        }
        idx
    }

    /// Real coordinates of a multi-index.
    pub fn point(&self, idx: &[i64]) -> Vec<f64> {
        idx.iter().map(|i| *i as f64 * self.spacing).collect()
    }

    /// Iterates multi-indices in flat-storage order.
    pub fn iter(&self) -> GridIter<'_> {
        GridIter::new(self)
    }

    /// Calls `f(multi_index, flat_offset)` over the grid in flat order
    /// without per-point allocation.
    pub fn visit(&self, mut f: impl FnMut(&[i64], usize)) {
        if self.is_empty() {
            return;
        }
        let d = self.dim();
        let mut idx: Vec<i64> = self.ranges.iter().map(|r| r.lo).collect();
        let mut flat = 0usize;
        loop {
            f(&idx, flat);
            flat += 1;
            let mut ax = d;
            loop {
                if ax == 0 {
                    return;
                }
                ax -= 1;
                if idx[ax] < self.ranges[ax].hi {
                    idx[ax] += 1;
                    break;
                }
                idx[ax] = self.ranges[ax].lo;
            }
        }
    }
}

pub struct GridIter<'a> {
    geom: &'a GridGeom,
    next: Option<Vec<i64>>,
}

impl<'a> GridIter<'a> {
    fn new(geom: &'a GridGeom) -> Self {
        let next = if geom.is_empty() || geom.dim() == 0 {
            None
        } else {
            Some(geom.ranges.iter().map(|r| r.lo).collect())
        };
        GridIter { geom, next }
    }
}

impl Iterator for GridIter<'_> {
    type Item = Vec<i64>;

    fn next(&mut self) -> Option<Vec<i64>> {
        let current = self.next.clone()?;
        let mut idx = current.clone();
        let mut ax = self.geom.dim();
        loop {
            if ax == 0 {
                self.next = None;
                break;
            }
            ax -= 1;
            if idx[ax] < self.geom.ranges[ax].hi {
                idx[ax] += 1;
                self.next = Some(idx);
                break;
            }
            idx[ax] = self.geom.ranges[ax].lo;
        }
        Some(current)
    }
}

/// Axis-aligned box in real coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Window {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        assert_eq!(lo.len(), hi.len());
        Window { lo, hi }
    }

    /// The centered cube `[−half, half]^d`.
    pub fn cube(d: usize, half: f64) -> Self {
        Window { lo: vec![-half; d], hi: vec![half; d] }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    /// The box grown by `pad` on every side.
    pub fn padded(&self, pad: f64) -> Self {
        Window {
            lo: self.lo.iter().map(|x| x - pad).collect(),
            hi: self.hi.iter().map(|x| x + pad).collect(),
        }
    }

    /// Lattice points of spacing `s` inside the box. Snapping carries a
    /// relative slack so that boundaries expressible in `s` units land on
    /// the lattice despite rounding.
    pub fn cells(&self, s: f64) -> GridGeom {
        let slack = 1e-9;
        let ranges = self
            .lo
            .iter()
            .zip(&self.hi)
            .map(|(lo, hi)| AxisRange {
                lo: (lo / s - slack).ceil() as i64,
                hi: (hi / s + slack).floor() as i64,
            })
            .collect();
        GridGeom { spacing: s, ranges }
    }
}
