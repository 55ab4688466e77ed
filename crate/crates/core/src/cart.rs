//! Sample CART splitting, its binary-feature restriction, the sample
//! impurity decrease, and a brute-force oracle for tests.
//!
//! The split criterion minimizes the sum of within-daughter squared
//! deviations over candidate thresholds `c ∈ {x_ij : x_i ∈ cell, i ∈
//! subsample}`. Candidates that would produce a zero-volume daughter are
//! excluded before minimization; ties are broken by a seeded uniform draw
//! among exact minimizers; a cell holding at most one in-cell sample (or
//! whose candidates are all excluded) is split at a seeded uniform random
//! point.
//!
//! Both the scan and the oracle accumulate daughter sums in `(x, row)`
//! ascending order and derive the right-hand sums as `total − left`, so the
//! two paths agree bit for bit on every candidate objective.

use rand::Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::geometry::{Cell, Split};
use crate::rng::rng_from_seed;

/// Outcome of one split search.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitDecision {
    pub split: Split,
    /// Sum of within-daughter squared deviations at the chosen split.
    pub objective: f64,
    /// A random split was used (at most one in-cell sample, or every
    /// candidate excluded by the non-empty-daughter rule).
    pub degenerate: bool,
    /// A trivial split: one daughter is the parent, the other empty
    /// (binary splitting once every available coordinate is used up).
    pub trivial: bool,
    /// Number of candidate thresholds evaluated.
    pub candidates_scanned: usize,
}

/// Sample impurity decrease of a `(cell, split)` pair under a dataset view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleImpurity {
    pub value: f64,
}

/// Within-daughter sum of squared deviations from running sums.
/// `0/0 = 0`: an empty part contributes zero.
#[inline]
fn sse(sum: f64, sum_sq: f64, count: usize) -> f64 {
    if count == 0 {
        0.0
    } else {
        (sum_sq - sum * sum / count as f64).max(0.0)
    }
}

#[inline]
fn objective(total: f64, total_sq: f64, n: usize, left: f64, left_sq: f64, n_left: usize) -> f64 {
    sse(left, left_sq, n_left) + sse(total - left, total_sq - left_sq, n - n_left)
}

fn validate_features(features: &[usize], p: usize) -> Result<()> {
    if features.is_empty() {
        return Err(Error::EmptyFeatureSet);
    }
    if let Some(&j) = features.iter().find(|&&j| j >= p) {
        return Err(Error::FeatureOutOfRange { feature: j, dim: p });
    }
    Ok(())
}

/// Rows of `subsample` whose feature vectors lie in `cell`.
fn in_cell_rows(data: &Dataset, subsample: &[usize], cell: &Cell) -> Vec<usize> {
    subsample
        .iter()
        .copied()
        .filter(|&i| cell.contains(data.row(i)))
        .collect()
}

/// A candidate threshold is a sample value that keeps both daughters of
/// positive volume: values at the interval's left end (empty left daughter)
/// or at a closed right end (zero-volume right daughter) are excluded.
#[inline]
fn candidate_admissible(v: f64, lo: f64, hi: f64) -> bool {
    v > lo && v < hi
}

/// Uniform random split of the cell restricted to `features`: direction
/// drawn uniformly from the restriction, threshold uniform on the open
/// coordinate interval.
fn random_split(
    cell: &Cell,
    features: &[usize],
    rng: &mut impl Rng,
    candidates_scanned: usize,
) -> SplitDecision {
    let feature = features[rng.random_range(0..features.len())];
    let iv = cell.interval(feature);
    let threshold = if iv.length() > 0.0 {
        loop {
            let c = rng.random_range(iv.lo..iv.hi);
            if c > iv.lo {
                break c;
            }
        }
    } else {
        iv.lo
    };
    SplitDecision {
        split: Split::new(feature, threshold),
        objective: 0.0,
        degenerate: true,
        trivial: false,
        candidates_scanned,
    }
}

/// The sample CART split: minimizes the within-daughter squared-deviation
/// objective over features in `features` and thresholds at in-cell sample
/// points.
pub fn sample_cart_split(
    data: &Dataset,
    subsample: &[usize],
    cell: &Cell,
    features: &[usize],
    seed: u64,
) -> Result<SplitDecision> {
    validate_features(features, data.p())?;
    if subsample.is_empty() {
        return Err(Error::EmptySubsample);
    }
    let mut rng = rng_from_seed(seed);
    let rows = in_cell_rows(data, subsample, cell);
    if rows.len() <= 1 {
        return Ok(random_split(cell, features, &mut rng, 0));
    }

    let mut in_cell = vec![false; data.n()];
    for &i in &rows {
        in_cell[i] = true;
    }

    let mut best = f64::INFINITY;
    let mut minimizers: Vec<Split> = Vec::new();
    let mut scanned = 0usize;

    for &j in features {
        let iv = cell.interval(j);
        // In-cell rows in (x_ij, i) ascending order via the global index.
        let ordered: Vec<usize> = data
            .sorted_by_feature(j)
            .iter()
            .map(|&i| i as usize)
            .filter(|&i| in_cell[i])
            .collect();
        let mut total = 0.0;
        let mut total_sq = 0.0;
        for &i in &ordered {
            let y = data.y(i);
            total += y;
            total_sq += y * y;
        }
        let n = ordered.len();
        let mut left = 0.0;
        let mut left_sq = 0.0;
        let mut taken = 0usize;
        let mut pos = 0usize;
        while pos < n {
            let v = data.x(ordered[pos], j);
            // Evaluate candidate v before absorbing its value group: the
            // left part holds exactly the rows with x < v.
            if candidate_admissible(v, iv.lo, iv.hi) {
                scanned += 1;
                let obj = objective(total, total_sq, n, left, left_sq, taken);
                if obj < best {
                    best = obj;
                    minimizers.clear();
                    minimizers.push(Split::new(j, v));
                } else if obj == best {
                    minimizers.push(Split::new(j, v));
                }
            }
            while pos < n && data.x(ordered[pos], j) == v {
                let y = data.y(ordered[pos]);
                left += y;
                left_sq += y * y;
                taken += 1;
                pos += 1;
            }
        }
    }

    if minimizers.is_empty() {
        return Ok(random_split(cell, features, &mut rng, scanned));
    }
    let split = minimizers[rng.random_range(0..minimizers.len())];
    Ok(SplitDecision {
        split,
        objective: best,
        degenerate: false,
        trivial: false,
        candidates_scanned: scanned,
    })
}

/// The binary-feature CART: splits are `(j, 1)` over coordinates in
/// `features` that are still unsplit in the current cell; once every
/// available coordinate has been used, a trivial split is returned whose
/// daughters are the parent and an empty cell.
pub fn binary_cart_split(
    data: &Dataset,
    subsample: &[usize],
    cell: &Cell,
    features: &[usize],
    seed: u64,
) -> Result<SplitDecision> {
    validate_features(features, data.p())?;
    if subsample.is_empty() {
        return Err(Error::EmptySubsample);
    }
    let rows = in_cell_rows(data, subsample, cell);
    for &i in &rows {
        for &j in features {
            let v = data.x(i, j);
            if v != 0.0 && v != 1.0 {
                return Err(Error::NonBinaryFeature {
                    row: i,
                    feature: j,
                    value: v,
                });
            }
        }
    }
    let mut rng = rng_from_seed(seed);
    // Coordinates still unsplit in this cell: the interval contains both
    // binary points, so the split (j, 1) separates them.
    let open: Vec<usize> = features
        .iter()
        .copied()
        .filter(|&j| {
            let iv = cell.interval(j);
            iv.contains(0.0) && iv.contains(1.0)
        })
        .collect();
    if open.is_empty() {
        return Ok(SplitDecision {
            split: Split::new(features[0], cell.interval(features[0]).hi),
            objective: 0.0,
            degenerate: false,
            trivial: true,
            candidates_scanned: 0,
        });
    }

    let n = rows.len();
    let mut total = 0.0;
    let mut total_sq = 0.0;
    for &i in &rows {
        let y = data.y(i);
        total += y;
        total_sq += y * y;
    }
    let mut best = f64::INFINITY;
    let mut minimizers: Vec<Split> = Vec::new();
    for &j in &open {
        let mut left = 0.0;
        let mut left_sq = 0.0;
        let mut taken = 0usize;
        for &i in &rows {
            if data.x(i, j) < 1.0 {
                let y = data.y(i);
                left += y;
                left_sq += y * y;
                taken += 1;
            }
        }
        let obj = objective(total, total_sq, n, left, left_sq, taken);
        if obj < best {
            best = obj;
            minimizers.clear();
            minimizers.push(Split::new(j, 1.0));
        } else if obj == best {
            minimizers.push(Split::new(j, 1.0));
        }
    }
    let split = minimizers[rng.random_range(0..minimizers.len())];
    Ok(SplitDecision {
        split,
        objective: best,
        degenerate: false,
        trivial: false,
        candidates_scanned: open.len(),
    })
}

/// Sample impurity decrease of splitting `cell` at `split` under the
/// subsample view; zero when the cell holds at most one sample.
pub fn sample_impurity_decrease(
    data: &Dataset,
    subsample: &[usize],
    cell: &Cell,
    split: &Split,
) -> Result<SampleImpurity> {
    if split.feature >= data.p() {
        return Err(Error::FeatureOutOfRange {
            feature: split.feature,
            dim: data.p(),
        });
    }
    let rows = in_cell_rows(data, subsample, cell);
    let n = rows.len();
    if n <= 1 {
        return Ok(SampleImpurity { value: 0.0 });
    }
    let mut sums = [0.0f64; 2];
    let mut counts = [0usize; 2];
    for &i in &rows {
        let side = usize::from(data.x(i, split.feature) >= split.threshold);
        sums[side] += data.y(i);
        counts[side] += 1;
    }
    let parent_mean = (sums[0] + sums[1]) / n as f64;
    let mut value = 0.0;
    for side in 0..2 {
        if counts[side] > 0 {
            let mean = sums[side] / counts[side] as f64;
            value += (counts[side] as f64 / n as f64) * (mean - parent_mean).powi(2);
        }
    }
    Ok(SampleImpurity { value })
}

/// Brute-force split search exposing the full minimizer set.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleSplit {
    pub objective: f64,
    pub minimizers: Vec<Split>,
    /// The cell held at most one in-cell sample or no admissible candidate
    /// existed; no minimization took place.
    pub degenerate: bool,
}

/// Exhaustive counterpart of [`sample_cart_split`]: a naive double loop
/// that re-accumulates the daughter sums from scratch for every candidate.
/// Used only in tests; guarded against large candidate counts.
pub fn brute_force_split_oracle(
    data: &Dataset,
    subsample: &[usize],
    cell: &Cell,
    features: &[usize],
) -> Result<OracleSplit> {
    const GUARD: usize = 100_000;
    validate_features(features, data.p())?;
    if subsample.is_empty() {
        return Err(Error::EmptySubsample);
    }
    let rows = in_cell_rows(data, subsample, cell);
    let candidates = rows.len() * features.len();
    if candidates > GUARD {
        return Err(Error::OracleGuard {
            candidates,
            guard: GUARD,
        });
    }
    if rows.len() <= 1 {
        return Ok(OracleSplit {
            objective: 0.0,
            minimizers: Vec::new(),
            degenerate: true,
        });
    }
    let mut best = f64::INFINITY;
    let mut minimizers: Vec<Split> = Vec::new();
    for &j in features {
        let iv = cell.interval(j);
        // Local sort by (value, row): same visiting order as the scan.
        let mut ordered = rows.clone();
        ordered.sort_by(|&a, &b| {
            data.x(a, j)
                .partial_cmp(&data.x(b, j))
                .unwrap()
                .then(a.cmp(&b))
        });
        let n = ordered.len();
        let mut total = 0.0;
        let mut total_sq = 0.0;
        for &i in &ordered {
            let y = data.y(i);
            total += y;
            total_sq += y * y;
        }
        let mut values: Vec<f64> = ordered.iter().map(|&i| data.x(i, j)).collect();
        values.dedup();
        for &v in &values {
            if !candidate_admissible(v, iv.lo, iv.hi) {
                continue;
            }
            // From-scratch accumulation over the sorted prefix x < v.
            let mut left = 0.0;
            let mut left_sq = 0.0;
            let mut taken = 0usize;
            for &i in &ordered {
                if data.x(i, j) < v {
                    let y = data.y(i);
                    left += y;
                    left_sq += y * y;
                    taken += 1;
                } else {
                    break;
                }
            }
            let obj = objective(total, total_sq, n, left, left_sq, taken);
            if obj < best {
                best = obj;
                minimizers.clear();
                minimizers.push(Split::new(j, v));
            } else if obj == best {
                minimizers.push(Split::new(j, v));
            }
        }
    }
    if minimizers.is_empty() {
        return Ok(OracleSplit {
            objective: 0.0,
            minimizers,
            degenerate: true,
        });
    }
    Ok(OracleSplit {
        objective: best,
        minimizers,
        degenerate: false,
    })
}

/// Parent sum of squared deviations over the in-cell subsample; test helper
/// for the objective identity `parent SSE = left SSE + right SSE + n·ÎÎ`.
pub fn parent_sse(data: &Dataset, subsample: &[usize], cell: &Cell) -> f64 {
    let rows = in_cell_rows(data, subsample, cell);
    let mut total = 0.0;
    let mut total_sq = 0.0;
    for &i in &rows {
        let y = data.y(i);
        total += y;
        total_sq += y * y;
    }
    sse(total, total_sq, rows.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Dataset;

    fn tiny(xs: Vec<f64>, ys: Vec<f64>, p: usize) -> Dataset {
        Dataset::from_parts(xs, ys, p).unwrap()
    }

    #[test]
    fn two_point_example_splits_at_upper_point() {
        let data = tiny(vec![0.2, 0.8], vec![0.0, 1.0], 1);
        let d = sample_cart_split(&data, &[0, 1], &Cell::root(1), &[0], 7).unwrap();
        assert_eq!(d.split, Split::new(0, 0.8));
        assert_eq!(d.objective, 0.0);
        assert!(!d.degenerate);
        // Candidate 0.2 leaves the left sample empty: objective is the
        // right-side SSE 0.5.
        let oracle = brute_force_split_oracle(&data, &[0, 1], &Cell::root(1), &[0]).unwrap();
        assert_eq!(oracle.minimizers, vec![Split::new(0, 0.8)]);
    }

    #[test]
    fn constant_responses_tie_break_deterministically() {
        let data = tiny(vec![0.1, 0.4, 0.6, 0.9], vec![3.0; 4], 1);
        let a = sample_cart_split(&data, &[0, 1, 2, 3], &Cell::root(1), &[0], 42).unwrap();
        let b = sample_cart_split(&data, &[0, 1, 2, 3], &Cell::root(1), &[0], 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.objective, 0.0);
        let oracle =
            brute_force_split_oracle(&data, &[0, 1, 2, 3], &Cell::root(1), &[0]).unwrap();
        assert!(oracle.minimizers.contains(&a.split));
        assert_eq!(oracle.minimizers.len(), 4);
    }

    #[test]
    fn single_sample_cell_degenerates_reproducibly() {
        let data = tiny(vec![0.5, 0.9], vec![1.0, 2.0], 1);
        let cell = Cell::from_bounds(&[(0.4, 0.6)]);
        let a = sample_cart_split(&data, &[0, 1], &cell, &[0], 5).unwrap();
        let b = sample_cart_split(&data, &[0, 1], &cell, &[0], 5).unwrap();
        assert!(a.degenerate);
        assert_eq!(a, b);
        assert!(a.split.threshold > 0.4 && a.split.threshold < 0.6);
    }

    #[test]
    fn empty_inputs_error() {
        let data = tiny(vec![0.5], vec![1.0], 1);
        assert!(matches!(
            sample_cart_split(&data, &[], &Cell::root(1), &[0], 1),
            Err(Error::EmptySubsample)
        ));
        assert!(matches!(
            sample_cart_split(&data, &[0], &Cell::root(1), &[], 1),
            Err(Error::EmptyFeatureSet)
        ));
    }

    #[test]
    fn impurity_examples() {
        // Perfect split of two samples: each daughter mean is 0.5 away from
        // the parent mean, weights 1/2 each.
        let data = tiny(vec![0.2, 0.8], vec![0.0, 1.0], 1);
        let ii = sample_impurity_decrease(&data, &[0, 1], &Cell::root(1), &Split::new(0, 0.5))
            .unwrap();
        assert!((ii.value - 0.25).abs() < 1e-15);
        // Empty cell: zero.
        let cell = Cell::from_bounds(&[(0.3, 0.4)]);
        let ii = sample_impurity_decrease(&data, &[0, 1], &cell, &Split::new(0, 0.35)).unwrap();
        assert_eq!(ii.value, 0.0);
        // All samples on one side: the other side contributes nothing and
        // the occupied side equals the parent, so the decrease is zero.
        let ii = sample_impurity_decrease(&data, &[0, 1], &Cell::root(1), &Split::new(0, 0.1))
            .unwrap();
        assert_eq!(ii.value, 0.0);
    }

    #[test]
    fn binary_split_prefers_active_coordinate() {
        // y = 2 * x_1 (first coordinate active), second coordinate noise.
        let xs = vec![
            0.0, 0.0, //
            0.0, 1.0, //
            1.0, 0.0, //
            1.0, 1.0, //
        ];
        let ys = vec![0.0, 0.0, 2.0, 2.0];
        let data = tiny(xs, ys, 2);
        let d = binary_cart_split(&data, &[0, 1, 2, 3], &Cell::root(2), &[0, 1], 3).unwrap();
        assert_eq!(d.split, Split::new(0, 1.0));
        assert_eq!(d.objective, 0.0);
    }

    #[test]
    fn binary_split_exhaustion_gives_trivial_marker() {
        let data = tiny(vec![0.0, 1.0], vec![0.0, 1.0], 1);
        let root = Cell::root(1);
        let d = binary_cart_split(&data, &[0, 1], &root, &[0], 1).unwrap();
        let (left, _right) = crate::geometry::split_cell(&root, &d.split).unwrap();
        let d2 = binary_cart_split(&data, &[0, 1], &left, &[0], 2).unwrap();
        assert!(d2.trivial);
        assert_eq!(d2.objective, 0.0);
        let (l2, r2) = crate::geometry::split_cell(&left, &d2.split).unwrap();
        assert!(r2.is_empty_set());
        assert_eq!(l2, left);
    }

    #[test]
    fn binary_split_rejects_continuous_values() {
        let data = tiny(vec![0.3, 1.0], vec![0.0, 1.0], 1);
        assert!(matches!(
            binary_cart_split(&data, &[0, 1], &Cell::root(1), &[0], 1),
            Err(Error::NonBinaryFeature { .. })
        ));
    }

    #[test]
    fn objective_identity_parent_sse() {
        let data = tiny(
            vec![0.1, 0.3, 0.5, 0.7, 0.9],
            vec![1.0, -0.5, 2.0, 0.25, 1.5],
            1,
        );
        let sub: Vec<usize> = (0..5).collect();
        let cell = Cell::root(1);
        let parent = parent_sse(&data, &sub, &cell);
        for c in [0.3, 0.5, 0.7, 0.9] {
            let split = Split::new(0, c);
            let (l, r) = crate::geometry::split_cell(&cell, &split).unwrap();
            let left = parent_sse(&data, &sub, &l);
            let right = parent_sse(&data, &sub, &r);
            let ii = sample_impurity_decrease(&data, &sub, &cell, &split).unwrap();
            let recon = left + right + 5.0 * ii.value;
            assert!((parent - recon).abs() <= 1e-12 * parent.max(1.0));
        }
    }
}
