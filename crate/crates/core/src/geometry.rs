//! Cells, splits, and the grid construction with boundary snapping.
//!
//! A cell is an axis-aligned box inside `[0,1]^p`. Each coordinate interval
//! follows the half-open convention `[lo, hi)`, except that the right end is
//! closed when the interval has never been cut from the right, so the root
//! interval is `[0, 1]` and leaf cells at any level partition `[0,1]^p`
//! exactly. Splitting at a threshold `c` produces `t_j ∩ [0, c)` on the left
//! and `t_j ∩ [c, 1]` on the right; a split exactly at `c = 1` therefore
//! yields the half-open `[lo, 1)` on the left and the singleton `{1}` on the
//! right, which is what the binary-feature splitting rule produces. The
//! closed-right flag records that distinction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One coordinate interval of a cell.
///
/// The set is `[lo, hi)` when `hi_closed` is false and `[lo, hi]` when true.
/// `hi_closed` can only be true when the right end is the original right end
/// of the root interval, i.e. `hi == 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub hi_closed: bool,
}

impl Interval {
    /// `[lo, hi)`, closed on the right when `hi == 1` (root convention).
    pub fn new(lo: f64, hi: f64) -> Self {
        Interval {
            lo,
            hi,
            hi_closed: hi == 1.0,
        }
    }

    pub fn unit() -> Self {
        Interval {
            lo: 0.0,
            hi: 1.0,
            hi_closed: true,
        }
    }

    pub fn length(&self) -> f64 {
        self.hi - self.lo
    }

    /// True when the interval contains no point at all.
    pub fn is_empty_set(&self) -> bool {
        self.lo > self.hi || (self.lo == self.hi && !self.hi_closed)
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && (x < self.hi || (self.hi_closed && x == self.hi))
    }

    /// Intersection with `[0, c)`: the left daughter interval.
    pub fn intersect_below(&self, c: f64) -> Interval {
        if c > self.hi {
            // The cap does not bite; keep the parent closure.
            *self
        } else {
            Interval {
                lo: self.lo,
                hi: c,
                hi_closed: false,
            }
        }
    }

    /// Intersection with `[c, 1]`: the right daughter interval.
    pub fn intersect_above(&self, c: f64) -> Interval {
        Interval {
            lo: self.lo.max(c),
            hi: self.hi,
            hi_closed: self.hi_closed,
        }
    }
}

/// Axis-aligned box in `[0,1]^p`; the universe of all tree nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    intervals: Vec<Interval>,
}

impl Cell {
    /// The root cell `[0,1]^p`.
    pub fn root(p: usize) -> Self {
        Cell {
            intervals: vec![Interval::unit(); p],
        }
    }

    pub fn from_intervals(intervals: Vec<Interval>) -> Self {
        Cell { intervals }
    }

    /// Builds a cell from `[lo, hi)` bounds under the root convention.
    pub fn from_bounds(bounds: &[(f64, f64)]) -> Self {
        Cell {
            intervals: bounds.iter().map(|&(lo, hi)| Interval::new(lo, hi)).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.intervals.len()
    }

    pub fn interval(&self, j: usize) -> &Interval {
        &self.intervals[j]
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    /// Lebesgue volume; zero for degenerate cells.
    pub fn volume(&self) -> f64 {
        self.intervals.iter().map(Interval::length).product()
    }

    /// True when some coordinate interval is the empty set.
    pub fn is_empty_set(&self) -> bool {
        self.intervals.iter().any(Interval::is_empty_set)
    }

    /// Membership under the half-open convention. Panics on dimension
    /// mismatch in debug builds; use [`cell_contains`] for the checked form.
    pub fn contains(&self, point: &[f64]) -> bool {
        debug_assert_eq!(point.len(), self.dim());
        self.intervals
            .iter()
            .zip(point)
            .all(|(iv, &x)| iv.contains(x))
    }

    fn with_interval(&self, j: usize, iv: Interval) -> Cell {
        let mut intervals = self.intervals.clone();
        intervals[j] = iv;
        Cell { intervals }
    }
}

/// A split `(j, c)`: direction `j` (0-based feature index) and threshold `c`.
///
/// The left daughter is the parent with `t_j ∩ [0, c)`, the right daughter
/// the parent with `t_j ∩ [c, 1]`. Feature indices are 0-based in code and
/// 1-based in serialized form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
}

impl Split {
    pub fn new(feature: usize, threshold: f64) -> Self {
        Split { feature, threshold }
    }
}

/// Splits `parent` into its two daughter cells.
///
/// The threshold must lie in the closed hull `[lo, hi]` of the parent's
/// `j`-th interval; boundary thresholds produce an empty daughter.
pub fn split_cell(parent: &Cell, split: &Split) -> Result<(Cell, Cell)> {
    let j = split.feature;
    if j >= parent.dim() {
        return Err(Error::FeatureOutOfRange {
            feature: j,
            dim: parent.dim(),
        });
    }
    let iv = parent.interval(j);
    let c = split.threshold;
    if !(c >= iv.lo && c <= iv.hi) {
        return Err(Error::InvalidSplit {
            feature: j,
            threshold: c,
            lo: iv.lo,
            hi: iv.hi,
        });
    }
    let left = parent.with_interval(j, iv.intersect_below(c));
    let right = parent.with_interval(j, iv.intersect_above(c));
    Ok((left, right))
}

/// Checked membership test; errors on dimension mismatch.
pub fn cell_contains(cell: &Cell, point: &[f64]) -> Result<bool> {
    if point.len() != cell.dim() {
        return Err(Error::DimensionMismatch {
            expected: cell.dim(),
            got: point.len(),
        });
    }
    Ok(cell.contains(point))
}

/// Grid of `resolution` equal intervals per axis; grid points are `i/G`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub resolution: u32,
}

impl GridConfig {
    pub fn new(resolution: u32) -> Result<Self> {
        if resolution == 0 {
            return Err(Error::InvalidParameter {
                field: "grid.resolution".into(),
                message: "must be a positive integer".into(),
            });
        }
        Ok(GridConfig { resolution })
    }

    /// Nearest multiple of `1/G`; ties round up.
    pub fn snap_point(&self, x: f64) -> f64 {
        let g = f64::from(self.resolution);
        let i = (x * g + 0.5).floor();
        let i = i.clamp(0.0, g);
        i / g
    }
}

/// Moves every boundary of `cell` to the nearest grid line (ties round up).
pub fn snap_to_grid(cell: &Cell, grid: &GridConfig) -> Cell {
    let intervals = cell
        .intervals
        .iter()
        .map(|iv| Interval {
            lo: grid.snap_point(iv.lo),
            hi: grid.snap_point(iv.hi),
            hi_closed: iv.hi_closed,
        })
        .collect();
    Cell { intervals }
}

/// Lebesgue measure of the symmetric difference of two cells.
pub fn symmetric_difference_volume(a: &Cell, b: &Cell) -> f64 {
    debug_assert_eq!(a.dim(), b.dim());
    let inter: f64 = a
        .intervals
        .iter()
        .zip(&b.intervals)
        .map(|(ia, ib)| (ia.hi.min(ib.hi) - ia.lo.max(ib.lo)).max(0.0))
        .product();
    (a.volume() - inter) + (b.volume() - inter)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_unit_square_at_half() {
        let parent = Cell::root(2);
        let (l, r) = split_cell(&parent, &Split::new(0, 0.5)).unwrap();
        assert_eq!(l.interval(0), &Interval { lo: 0.0, hi: 0.5, hi_closed: false });
        assert_eq!(r.interval(0), &Interval { lo: 0.5, hi: 1.0, hi_closed: true });
        assert_eq!(l.interval(1), &Interval::unit());
        // Union is the parent, intersection empty: spot-check membership.
        for x in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let pt = [x, 0.3];
            assert!(l.contains(&pt) ^ r.contains(&pt));
        }
    }

    #[test]
    fn boundary_threshold_gives_empty_left_daughter() {
        let parent = Cell::root(1);
        let (l, r) = split_cell(&parent, &Split::new(0, 0.0)).unwrap();
        assert!(l.is_empty_set());
        assert_eq!(l.volume(), 0.0);
        assert_eq!(r, parent);
    }

    #[test]
    fn split_inner_cell_on_second_feature() {
        let parent = Cell::from_bounds(&[(0.2, 0.8), (0.0, 1.0)]);
        let (l, r) = split_cell(&parent, &Split::new(1, 0.3)).unwrap();
        assert_eq!(l.interval(1), &Interval { lo: 0.0, hi: 0.3, hi_closed: false });
        assert_eq!(r.interval(1), &Interval { lo: 0.3, hi: 1.0, hi_closed: true });
        assert_eq!(l.interval(0), parent.interval(0));
    }

    #[test]
    fn split_at_one_gives_half_open_left_and_singleton_right() {
        let parent = Cell::root(1);
        let (l, r) = split_cell(&parent, &Split::new(0, 1.0)).unwrap();
        assert!(!l.contains(&[1.0]));
        assert!(l.contains(&[0.0]));
        assert!(r.contains(&[1.0]));
        assert!(!r.is_empty_set());
        assert_eq!(r.volume(), 0.0);
    }

    #[test]
    fn threshold_outside_interval_errors() {
        let parent = Cell::from_bounds(&[(0.2, 0.8)]);
        assert!(split_cell(&parent, &Split::new(0, 0.9)).is_err());
        assert!(split_cell(&parent, &Split::new(0, 0.1)).is_err());
    }

    #[test]
    fn containment_respects_half_open_convention() {
        let cell = Cell::from_bounds(&[(0.0, 0.5), (0.0, 1.0)]);
        assert!(!cell.contains(&[0.5, 0.3]));
        let cell = Cell::from_bounds(&[(0.5, 1.0), (0.0, 1.0)]);
        assert!(cell.contains(&[1.0, 1.0]));
        assert!(Cell::root(3).contains(&[0.0, 0.5, 1.0]));
    }

    #[test]
    fn contains_checks_dimension() {
        let cell = Cell::root(2);
        assert!(cell_contains(&cell, &[0.1]).is_err());
        assert!(cell_contains(&cell, &[0.1, 0.2]).unwrap());
    }

    #[test]
    fn snap_examples() {
        let g = GridConfig::new(10).unwrap();
        let snapped = snap_to_grid(&Cell::from_bounds(&[(0.12, 0.57)]), &g);
        assert_eq!(snapped.interval(0).lo, 0.1);
        assert_eq!(snapped.interval(0).hi, 0.6);
        // Already on the grid: unchanged.
        let on_grid = Cell::from_bounds(&[(0.1, 0.6)]);
        assert_eq!(snap_to_grid(&on_grid, &g), on_grid);
        // Half-distance ties round up.
        let tied = snap_to_grid(&Cell::from_bounds(&[(0.15, 0.85)]), &g);
        assert_eq!(tied.interval(0).lo, 0.2);
        assert_eq!(tied.interval(0).hi, 0.9);
    }

    #[test]
    fn snap_is_idempotent_on_awkward_resolutions() {
        let g = GridConfig::new(7).unwrap();
        let cell = Cell::from_bounds(&[(0.123456, 0.77777)]);
        let once = snap_to_grid(&cell, &g);
        let twice = snap_to_grid(&once, &g);
        assert_eq!(once, twice);
    }
}
