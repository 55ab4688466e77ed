//! Population-level oracle: conditional moments, the impurity quantities
//! `(I)` and `(II)`, theoretical CART splits, SID constant estimation, and
//! the growing-rule certificate check.
//!
//! For a cell `t` split into daughters `t'`, `t''`:
//!
//! * `(II)` is the conditional bias decrease
//!   `P(t'|t)(E(m|t') − E(m|t))² + P(t''|t)(E(m|t'') − E(m|t))²`,
//! * `(I)` is the remaining bias `P(t'|t)Var(m|t') + P(t''|t)Var(m|t'')`,
//!
//! and `(I) + (II) = Var(m|t)`. All zero-probability quantities follow the
//! `0/0 = 0` convention.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::Tree;
use crate::geometry::{split_cell, Cell, Split};
use crate::model::{
    bernoulli_interval_mass, CellMoments, Component, FeatureDistribution, ModelKind,
    RegressionModel,
};
use crate::rng::stream;

// ---------------------------------------------------------------------------
// Gauss-Legendre quadrature
// ---------------------------------------------------------------------------

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`,
/// computed by Newton iteration on the Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let k = k as f64;
                let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// Default per-coordinate quadrature order for numeric moments.
pub const QUADRATURE_NODES: usize = 32;

fn gl32() -> &'static (Vec<f64>, Vec<f64>) {
    use std::sync::OnceLock;
    static GL: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    GL.get_or_init(|| gauss_legendre(QUADRATURE_NODES))
}

/// Per-coordinate integration nodes for `∫ f(x) w(x) dx` over one interval,
/// together with the interval mass `∫ w`.
fn coordinate_rule(
    iv: &crate::geometry::Interval,
    density: Option<&crate::model::PiecewiseDensity>,
) -> (Vec<(f64, f64)>, f64) {
    let (gn, gw) = gl32();
    let mut pts = Vec::new();
    let mut mass = 0.0;
    let pieces: Vec<(f64, f64, f64)> = match density {
        None => vec![(iv.lo, iv.hi, 1.0)],
        Some(d) => d
            .weights
            .iter()
            .zip(d.breaks.windows(2))
            .filter_map(|(w, seg)| {
                let lo = seg[0].max(iv.lo);
                let hi = seg[1].min(iv.hi);
                (hi > lo).then_some((lo, hi, *w))
            })
            .collect(),
    };
    for (lo, hi, w) in pieces {
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        for (x, gwt) in gn.iter().zip(gw) {
            pts.push((mid + half * x, w * gwt * half));
        }
        mass += w * (hi - lo);
    }
    (pts, mass)
}

/// Conditional mean and variance by tensorized quadrature over the active
/// coordinates; inactive coordinates only contribute probability mass.
fn quadrature_moments(model: &RegressionModel, cell: &Cell) -> CellMoments {
    let dist = model.distribution();
    let prob = dist.cell_prob(cell);
    if prob <= 0.0 {
        return CellMoments::zero_mass();
    }
    let active = model.active_coords();
    let densities: Option<&Vec<crate::model::PiecewiseDensity>> = match &dist {
        FeatureDistribution::Product(d) => Some(d),
        _ => None,
    };
    let mut rules = Vec::with_capacity(active.len());
    let mut active_mass = 1.0;
    for &j in &active {
        let (pts, mass) = coordinate_rule(cell.interval(j), densities.map(|d| &d[j]));
        if mass <= 0.0 {
            return CellMoments::zero_mass();
        }
        active_mass *= mass;
        rules.push(pts);
    }
    // Fixed representative point for inactive coordinates.
    let mut point = vec![0.0; model.p()];
    for (j, iv) in cell.intervals().iter().enumerate() {
        point[j] = 0.5 * (iv.lo + iv.hi);
    }
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut index = vec![0usize; rules.len()];
    loop {
        let mut w = 1.0;
        for (d, &ix) in index.iter().enumerate() {
            let (x, wt) = rules[d][ix];
            point[active[d]] = x;
            w *= wt;
        }
        let v = model.eval_unchecked(&point);
        sum += w * v;
        sum_sq += w * v * v;
        // Mixed-radix increment.
        let mut d = rules.len();
        loop {
            if d == 0 {
                break;
            }
            d -= 1;
            index[d] += 1;
            if index[d] < rules[d].len() {
                break;
            }
            index[d] = 0;
            if d == 0 {
                let mean = sum / active_mass;
                let var = (sum_sq / active_mass - mean * mean).max(0.0);
                return CellMoments { prob, mean, var };
            }
        }
        if rules.is_empty() {
            // No active coordinates: constant function on the cell.
            let v = model.eval_unchecked(&point);
            return CellMoments {
                prob,
                mean: v,
                var: 0.0,
            };
        }
    }
}

// ---------------------------------------------------------------------------
// Conditional moments
// ---------------------------------------------------------------------------

/// Conditional moments of `m(X)` on a cell: closed form where the model
/// kind supports it, tensorized Gauss-Legendre quadrature otherwise.
pub fn moments(model: &RegressionModel, cell: &Cell) -> CellMoments {
    let dist = model.distribution();
    match &model.kind {
        ModelKind::Indicator { b, .. } => {
            let prob = dist.cell_prob(cell);
            if prob <= 0.0 {
                return CellMoments::zero_mass();
            }
            let iv = cell.interval(0);
            let overlap = (iv.hi - iv.lo.max(*b)).max(0.0);
            let mean = overlap / iv.length();
            CellMoments {
                prob,
                mean,
                var: (mean * (1.0 - mean)).max(0.0),
            }
        }
        ModelKind::SparseQuadratic { poly, .. } | ModelKind::PolyInteraction { poly, .. } => {
            let prob = dist.cell_prob(cell);
            if prob <= 0.0 {
                return CellMoments::zero_mass();
            }
            let mean = poly.poly.conditional_mean(cell, &dist);
            let e2 = poly.poly_sq.conditional_mean(cell, &dist);
            CellMoments {
                prob,
                mean,
                var: (e2 - mean * mean).max(0.0),
            }
        }
        ModelKind::ProductCentered { .. } => {
            let prob = dist.cell_prob(cell);
            if prob <= 0.0 {
                return CellMoments::zero_mass();
            }
            // Independent coordinates: moments of (X1-1/2)(X2-1/2) factorize.
            let (a, b) = (cell.interval(0), cell.interval(1));
            let m1 = crate::model::uniform_raw_moment(a.lo, a.hi, 1) - 0.5;
            let m2 = crate::model::uniform_raw_moment(b.lo, b.hi, 1) - 0.5;
            let v1 = centered_second_moment(a.lo, a.hi);
            let v2 = centered_second_moment(b.lo, b.hi);
            let mean = m1 * m2;
            let e2 = (v1 + m1 * m1) * (v2 + m2 * m2);
            CellMoments {
                prob,
                mean,
                var: (e2 - mean * mean).max(0.0),
            }
        }
        ModelKind::SmoothAdditive { components, .. }
        | ModelKind::AdditiveOracle { components, .. }
        | ModelKind::PiecewiseLinearAdditive { components, .. } => {
            let prob = dist.cell_prob(cell);
            if prob <= 0.0 {
                return CellMoments::zero_mass();
            }
            additive_moments(components, cell, prob)
        }
        ModelKind::BinaryLinear { s_star, beta, .. } => {
            let prob = dist.cell_prob(cell);
            if prob <= 0.0 {
                return CellMoments::zero_mass();
            }
            let mut mean = 0.0;
            let mut var = 0.0;
            for j in 0..*s_star {
                let iv = cell.interval(j);
                let q = bernoulli_interval_mass(iv);
                debug_assert!(q > 0.0);
                let p1 = if iv.contains(1.0) { 0.5 / q } else { 0.0 };
                mean += beta * p1;
                var += beta * beta * p1 * (1.0 - p1);
            }
            CellMoments { prob, mean, var }
        }
        ModelKind::IndicatorGrid { axes, coeffs, .. } => {
            let prob = dist.cell_prob(cell);
            if prob <= 0.0 {
                return CellMoments::zero_mass();
            }
            grid_moments(axes, coeffs, cell, prob)
        }
        ModelKind::Logistic { .. } => quadrature_moments(model, cell),
        ModelKind::User(u) => {
            if let Some(m) = &u.moments {
                m(cell)
            } else {
                quadrature_moments(model, cell)
            }
        }
    }
}

/// `Var(X | X ∈ [a,b])` under Uniform: `(b-a)²/12`.
fn centered_second_moment(a: f64, b: f64) -> f64 {
    (b - a) * (b - a) / 12.0
}

fn additive_moments(components: &[Component], cell: &Cell, prob: f64) -> CellMoments {
    let mut mean = 0.0;
    let mut var = 0.0;
    for (j, comp) in components.iter().enumerate() {
        let iv = cell.interval(j);
        let len = iv.length();
        debug_assert!(len > 0.0);
        let m = comp.integral(iv.lo, iv.hi) / len;
        let e2 = comp.integral_sq(iv.lo, iv.hi) / len;
        mean += m;
        var += (e2 - m * m).max(0.0);
    }
    CellMoments { prob, mean, var }
}

fn grid_moments(axes: &[Vec<f64>], coeffs: &[f64], cell: &Cell, prob: f64) -> CellMoments {
    // Per-coordinate overlap fractions of the cell with each model segment.
    let mut weights: Vec<Vec<f64>> = Vec::with_capacity(axes.len());
    for (j, cuts) in axes.iter().enumerate() {
        let iv = cell.interval(j);
        let len = iv.length();
        debug_assert!(len > 0.0);
        let w: Vec<f64> = cuts
            .windows(2)
            .map(|seg| ((seg[1].min(iv.hi) - seg[0].max(iv.lo)).max(0.0)) / len)
            .collect();
        weights.push(w);
    }
    let mut mean = 0.0;
    let mut e2 = 0.0;
    let mut index = vec![0usize; axes.len()];
    'outer: loop {
        let mut w = 1.0;
        let mut flat = 0usize;
        for (d, &ix) in index.iter().enumerate() {
            w *= weights[d][ix];
            flat = flat * weights[d].len() + ix;
        }
        if w > 0.0 {
            let c = coeffs[flat];
            mean += w * c;
            e2 += w * c * c;
        }
        let mut d = axes.len();
        loop {
            if d == 0 {
                break 'outer;
            }
            d -= 1;
            index[d] += 1;
            if index[d] < weights[d].len() {
                break;
            }
            index[d] = 0;
            if d == 0 {
                break 'outer;
            }
        }
    }
    CellMoments {
        prob,
        mean,
        var: (e2 - mean * mean).max(0.0),
    }
}

/// `E(m(X) | X ∈ cell)`; 0 when the cell has zero probability.
pub fn conditional_mean(model: &RegressionModel, cell: &Cell) -> f64 {
    moments(model, cell).mean
}

/// `Var(m(X) | X ∈ cell)`; 0 when the cell has zero probability.
pub fn conditional_variance(model: &RegressionModel, cell: &Cell) -> f64 {
    moments(model, cell).var
}

// ---------------------------------------------------------------------------
// Impurity decrease
// ---------------------------------------------------------------------------

/// Population impurity report of one `(cell, split)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ImpurityReport {
    /// `Var(m(X) | X ∈ t)`.
    pub var: f64,
    /// Remaining bias `(I)` after the split.
    pub remaining_i: f64,
    /// Conditional bias decrease `(II)` of the split.
    pub decrease_ii: f64,
    /// `P(X ∈ t' | X ∈ t)`.
    pub prob_left: f64,
    /// `P(X ∈ t'' | X ∈ t)`.
    pub prob_right: f64,
}

/// Computes `(I)`, `(II)`, the conditional variance, and the daughter
/// probabilities of a split. Zero-probability daughters contribute zero
/// terms (the 0/0 convention).
pub fn impurity_decrease_ii(
    model: &RegressionModel,
    cell: &Cell,
    split: &Split,
) -> Result<ImpurityReport> {
    let (left, right) = split_cell(cell, split)?;
    let parent = moments(model, cell);
    if parent.prob <= 0.0 {
        return Ok(ImpurityReport {
            var: 0.0,
            remaining_i: 0.0,
            decrease_ii: 0.0,
            prob_left: 0.0,
            prob_right: 0.0,
        });
    }
    let lm = moments(model, &left);
    let rm = moments(model, &right);
    let pl = lm.prob / parent.prob;
    let pr = rm.prob / parent.prob;
    let mut ii = 0.0;
    let mut i = 0.0;
    if lm.prob > 0.0 {
        ii += pl * (lm.mean - parent.mean).powi(2);
        i += pl * lm.var;
    }
    if rm.prob > 0.0 {
        ii += pr * (rm.mean - parent.mean).powi(2);
        i += pr * rm.var;
    }
    Ok(ImpurityReport {
        var: parent.var,
        remaining_i: i,
        decrease_ii: ii,
        prob_left: pl,
        prob_right: pr,
    })
}

// ---------------------------------------------------------------------------
// Theoretical CART
// ---------------------------------------------------------------------------

/// Search configuration for the continuous supremum over thresholds.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Dense candidate grid size per coordinate.
    pub grid_points: usize,
    /// Golden-section refinement iterations around the best grid candidate.
    pub golden_iters: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            grid_points: 512,
            golden_iters: 48,
        }
    }
}

/// An approximate argsup of `(II)` over a feature restriction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoreticalSplit {
    pub split: Split,
    /// The attained `(II)`.
    pub ii: f64,
    /// `m` is constant on the cell (all `(II)` vanish); the split is a
    /// placeholder.
    pub degenerate: bool,
}

fn ii_of(model: &RegressionModel, cell: &Cell, parent: &CellMoments, split: &Split) -> f64 {
    let Ok((left, right)) = split_cell(cell, split) else {
        return 0.0;
    };
    let lm = moments(model, &left);
    let rm = moments(model, &right);
    let mut ii = 0.0;
    if lm.prob > 0.0 {
        ii += lm.prob / parent.prob * (lm.mean - parent.mean).powi(2);
    }
    if rm.prob > 0.0 {
        ii += rm.prob / parent.prob * (rm.mean - parent.mean).powi(2);
    }
    ii
}

/// Fallback split when every `(II)` vanishes: the first feature whose
/// interval can still be cut, at its midpoint (continuous) or at 1 (binary).
fn degenerate_split(model: &RegressionModel, cell: &Cell, features: &[usize]) -> Split {
    let binary = matches!(model.distribution(), FeatureDistribution::BernoulliHalf);
    if binary {
        for &j in features {
            let iv = cell.interval(j);
            if iv.contains(0.0) && iv.contains(1.0) {
                return Split::new(j, 1.0);
            }
        }
        return Split::new(features[0], cell.interval(features[0]).hi);
    }
    for &j in features {
        let iv = cell.interval(j);
        if iv.length() > 0.0 {
            return Split::new(j, 0.5 * (iv.lo + iv.hi));
        }
    }
    Split::new(features[0], cell.interval(features[0]).lo)
}

/// The theoretical CART split: an approximate argsup of `(II)` over
/// `j ∈ features` and thresholds in the cell's `j`-th interval.
///
/// Thresholds are searched on a dense grid refined by golden section around
/// the best grid candidate; the model's privileged candidates (midpoint,
/// third quartile, and kind-specific discontinuities) are probed exactly.
/// Ties between coordinates resolve to the lowest index.
pub fn theoretical_cart_split(
    model: &RegressionModel,
    cell: &Cell,
    features: &[usize],
    search: &SearchConfig,
) -> Result<TheoreticalSplit> {
    if features.is_empty() {
        return Err(Error::EmptyFeatureSet);
    }
    if let Some(&j) = features.iter().find(|&&j| j >= model.p()) {
        return Err(Error::FeatureOutOfRange {
            feature: j,
            dim: model.p(),
        });
    }
    let parent = moments(model, cell);
    if parent.prob <= 0.0 || parent.var <= 0.0 {
        return Ok(TheoreticalSplit {
            split: degenerate_split(model, cell, features),
            ii: 0.0,
            degenerate: true,
        });
    }
    let binary = matches!(model.distribution(), FeatureDistribution::BernoulliHalf);
    let mut best_ii = 0.0;
    let mut best_split: Option<Split> = None;

    for &j in features {
        let iv = cell.interval(j);
        if binary {
            if iv.contains(0.0) && iv.contains(1.0) {
                let s = Split::new(j, 1.0);
                let ii = ii_of(model, cell, &parent, &s);
                if ii > best_ii {
                    best_ii = ii;
                    best_split = Some(s);
                }
            }
            continue;
        }
        let (lo, hi) = (iv.lo, iv.hi);
        if !(hi > lo) {
            continue;
        }
        let g = search.grid_points;
        let step = (hi - lo) / (g as f64 + 1.0);
        let mut best_j_ii = 0.0;
        let mut best_j_c = f64::NAN;
        let mut best_j_grid_index: Option<usize> = None;
        for i in 1..=g {
            let c = lo + step * i as f64;
            let ii = ii_of(model, cell, &parent, &Split::new(j, c));
            if ii > best_j_ii {
                best_j_ii = ii;
                best_j_c = c;
                best_j_grid_index = Some(i);
            }
        }
        for c in model.privileged_candidates(cell, j) {
            let ii = ii_of(model, cell, &parent, &Split::new(j, c));
            if ii > best_j_ii {
                best_j_ii = ii;
                best_j_c = c;
                best_j_grid_index = None;
            }
        }
        // Golden-section refinement on the bracket around the best grid
        // candidate; exact privileged candidates need no refinement.
        if let Some(i) = best_j_grid_index {
            let mut a = lo + step * (i as f64 - 1.0);
            let mut b = lo + step * (i as f64 + 1.0);
            let phi = (5.0_f64.sqrt() - 1.0) / 2.0;
            let mut c1 = b - phi * (b - a);
            let mut c2 = a + phi * (b - a);
            let mut f1 = ii_of(model, cell, &parent, &Split::new(j, c1));
            let mut f2 = ii_of(model, cell, &parent, &Split::new(j, c2));
            for _ in 0..search.golden_iters {
                if f1 >= f2 {
                    b = c2;
                    c2 = c1;
                    f2 = f1;
                    c1 = b - phi * (b - a);
                    f1 = ii_of(model, cell, &parent, &Split::new(j, c1));
                } else {
                    a = c1;
                    c1 = c2;
                    f1 = f2;
                    c2 = a + phi * (b - a);
                    f2 = ii_of(model, cell, &parent, &Split::new(j, c2));
                }
                let (fc, cc) = if f1 >= f2 { (f1, c1) } else { (f2, c2) };
                if fc > best_j_ii {
                    best_j_ii = fc;
                    best_j_c = cc;
                }
            }
        }
        if best_j_ii > best_ii {
            best_ii = best_j_ii;
            best_split = Some(Split::new(j, best_j_c));
        }
    }

    match best_split {
        Some(split) if best_ii > 0.0 => Ok(TheoreticalSplit {
            split,
            ii: best_ii,
            degenerate: false,
        }),
        _ => Ok(TheoreticalSplit {
            split: degenerate_split(model, cell, features),
            ii: 0.0,
            degenerate: true,
        }),
    }
}

// ---------------------------------------------------------------------------
// SID constant estimation
// ---------------------------------------------------------------------------

/// Budgeted random-cell probe of the SID constant.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SidCertificate {
    pub model_id: String,
    /// The paper's constant for this instance, where known.
    pub claimed_alpha1: Option<f64>,
    /// Max over probed cells of `Var(m|t) / sup (II)`: a LOWER bound of the
    /// true constant.
    pub alpha_hat: f64,
    /// Some probed cell had positive variance but vanishing `sup (II)`:
    /// SID is violated outright.
    pub unbounded: bool,
    pub budget: usize,
    pub cells_probed: usize,
    pub cells_skipped: usize,
    pub worst_cell: SerializedCell,
}

/// JSON-friendly cell bounds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SerializedCell {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl SerializedCell {
    pub fn from_cell(cell: &Cell) -> Self {
        SerializedCell {
            lo: cell.intervals().iter().map(|iv| iv.lo).collect(),
            hi: cell.intervals().iter().map(|iv| iv.hi).collect(),
        }
    }
}

/// Draws a random cell by a random split sequence of depth `<= max_depth`.
fn random_cell(model: &RegressionModel, max_depth: usize, rng: &mut impl Rng) -> Cell {
    let p = model.p();
    let binary = matches!(model.distribution(), FeatureDistribution::BernoulliHalf);
    let mut cell = Cell::root(p);
    let depth = rng.random_range(0..=max_depth);
    for _ in 0..depth {
        let j = rng.random_range(0..p);
        let iv = cell.interval(j);
        let split = if binary {
            if !(iv.contains(0.0) && iv.contains(1.0)) {
                continue;
            }
            Split::new(j, 1.0)
        } else {
            if iv.length() <= 0.0 {
                continue;
            }
            Split::new(j, rng.random_range(iv.lo..iv.hi))
        };
        let Ok((left, right)) = split_cell(&cell, &split) else {
            continue;
        };
        let next = if rng.random::<bool>() { left } else { right };
        if model.distribution().cell_prob(&next) > 0.0 {
            cell = next;
        }
    }
    cell
}

/// Estimates the SID constant from below by probing random cells: the
/// reported `alpha_hat` is `max_t Var(m|t)/sup_{j,c}(II)` over the probed
/// cells (always including the root), skipping cells where `m` is constant.
pub fn estimate_sid_alpha(
    model: &RegressionModel,
    budget: usize,
    max_depth: usize,
    seed: u64,
    search: &SearchConfig,
) -> Result<SidCertificate> {
    if budget == 0 {
        return Err(Error::InvalidParameter {
            field: "budget".into(),
            message: "budget must be >= 1".into(),
        });
    }
    let p = model.p();
    let features: Vec<usize> = (0..p).collect();
    let var_floor = 1e-14 * model.m0().powi(2).max(1e-100);
    let mut rng = stream(seed, "sid-cells", &[]);
    let mut alpha_hat = 0.0f64;
    let mut unbounded = false;
    let mut worst: Option<Cell> = None;
    let mut probed = 0usize;
    let mut skipped = 0usize;
    for k in 0..budget {
        let cell = if k == 0 {
            Cell::root(p)
        } else {
            random_cell(model, max_depth, &mut rng)
        };
        let m = moments(model, &cell);
        if m.prob <= 0.0 || m.var <= var_floor {
            skipped += 1;
            continue;
        }
        probed += 1;
        let sup = theoretical_cart_split(model, &cell, &features, search)?;
        if sup.ii <= 0.0 {
            unbounded = true;
            worst = Some(cell);
            continue;
        }
        let ratio = m.var / sup.ii;
        if ratio > alpha_hat {
            alpha_hat = ratio;
            if !unbounded {
                worst = Some(cell);
            }
        }
    }
    if probed == 0 && !unbounded {
        return Err(Error::ConstantModel);
    }
    let worst_cell = SerializedCell::from_cell(&worst.unwrap_or_else(|| Cell::root(p)));
    Ok(SidCertificate {
        model_id: model.id().to_string(),
        claimed_alpha1: model.claimed_alpha1(),
        alpha_hat,
        unbounded,
        budget,
        cells_probed: probed,
        cells_skipped: skipped,
        worst_cell,
    })
}

impl SidCertificate {
    /// Effective estimate treating a refuted cell as infinity.
    pub fn effective_alpha(&self) -> f64 {
        if self.unbounded {
            f64::INFINITY
        } else {
            self.alpha_hat
        }
    }
}

// ---------------------------------------------------------------------------
// Growing-rule certificate (impurity-comparability check)
// ---------------------------------------------------------------------------

/// Parameters of the growing-rule certificate: slack `ε >= 0` and factor
/// `α₂ >= 1`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Condition5Params {
    pub epsilon: f64,
    pub alpha2: f64,
}

impl Condition5Params {
    pub fn new(epsilon: f64, alpha2: f64) -> Result<Self> {
        if !(epsilon >= 0.0) {
            return Err(Error::InvalidParameter {
                field: "epsilon".into(),
                message: "must be >= 0".into(),
            });
        }
        if !(alpha2 >= 1.0) {
            return Err(Error::InvalidParameter {
                field: "alpha2".into(),
                message: "must be >= 1".into(),
            });
        }
        Ok(Condition5Params { epsilon, alpha2 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ViolationKind {
    /// `(II) <= ε` but `sup (II) > α₂ ε`.
    Item1,
    /// `(II) > ε` but `sup (II) > α₂ (II)`.
    Item2,
}

#[derive(Debug, Clone, Serialize)]
pub struct Condition5Violation {
    /// Level of the parent cell (0 = root).
    pub level: usize,
    /// Node index within the level.
    pub node: usize,
    pub kind: ViolationKind,
    pub ii_chosen: f64,
    pub sup_ii: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Condition5Report {
    pub pass: bool,
    pub violations: Vec<Condition5Violation>,
}

/// Walks every branch of the tree and checks both items of the certificate
/// at each level against the theoretical CART supremum restricted to that
/// node's feature subset.
pub fn verify_condition5(
    model: &RegressionModel,
    tree: &Tree,
    params: &Condition5Params,
    search: &SearchConfig,
) -> Result<Condition5Report> {
    let mut violations = Vec::new();
    for level in 0..tree.height() {
        for node in 0..(1usize << level) {
            let Some(split) = tree.split_at(level, node) else {
                continue;
            };
            let cell = tree.cell_at(level, node);
            let features = tree.schedule().subset(level, node);
            let report = impurity_decrease_ii(model, cell, &split)?;
            let sup = theoretical_cart_split(model, cell, features, search)?;
            let ii = report.decrease_ii;
            if ii <= params.epsilon {
                if sup.ii > params.alpha2 * params.epsilon {
                    violations.push(Condition5Violation {
                        level,
                        node,
                        kind: ViolationKind::Item1,
                        ii_chosen: ii,
                        sup_ii: sup.ii,
                    });
                }
            } else if sup.ii > params.alpha2 * ii {
                violations.push(Condition5Violation {
                    level,
                    node,
                    kind: ViolationKind::Item2,
                    ii_chosen: ii,
                    sup_ii: sup.ii,
                });
            }
        }
    }
    Ok(Condition5Report {
        pass: violations.is_empty(),
        violations,
    })
}

// ---------------------------------------------------------------------------
// Feature relevance
// ---------------------------------------------------------------------------

/// Estimate of `E[Var(m(X) | X_s, s ≠ j)]`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct IotaEstimate {
    pub value: f64,
    pub se: f64,
    pub analytic: bool,
}

/// Relevance of feature `j` (0-based): analytic for additive, indicator,
/// and binary kinds; Monte Carlo over the remaining coordinates with an
/// exact/quadrature inner conditional variance otherwise.
pub fn relevance_iota(
    model: &RegressionModel,
    j: usize,
    mc_budget: usize,
    seed: u64,
) -> Result<IotaEstimate> {
    let p = model.p();
    if j >= p {
        return Err(Error::FeatureOutOfRange { feature: j, dim: p });
    }
    if !model.active_coords().contains(&j) {
        return Ok(IotaEstimate {
            value: 0.0,
            se: 0.0,
            analytic: true,
        });
    }
    let analytic = match &model.kind {
        ModelKind::Indicator { b, .. } => Some(b * (1.0 - b)),
        ModelKind::BinaryLinear { beta, .. } => Some(beta * beta / 4.0),
        ModelKind::SmoothAdditive { components, .. }
        | ModelKind::AdditiveOracle { components, .. }
        | ModelKind::PiecewiseLinearAdditive { components, .. } => {
            let comp = &components[j];
            let m = comp.integral(0.0, 1.0);
            let e2 = comp.integral_sq(0.0, 1.0);
            Some((e2 - m * m).max(0.0))
        }
        _ => None,
    };
    if let Some(value) = analytic {
        return Ok(IotaEstimate {
            value,
            se: 0.0,
            analytic: true,
        });
    }
    // Monte Carlo over X_{-j}; inner conditional variance over X_j.
    let binary = matches!(model.distribution(), FeatureDistribution::BernoulliHalf);
    let mut rng = stream(seed, "relevance", &[j as u64]);
    let mut acc = 0.0;
    let mut acc_sq = 0.0;
    let mut point = vec![0.0; p];
    let (gn, gw) = gl32();
    for _ in 0..mc_budget.max(1) {
        for (idx, x) in point.iter_mut().enumerate() {
            if idx == j {
                continue;
            }
            *x = if binary {
                if rng.random::<bool>() {
                    1.0
                } else {
                    0.0
                }
            } else {
                rng.random::<f64>()
            };
        }
        let v = if binary {
            point[j] = 0.0;
            let a = model.eval_unchecked(&point);
            point[j] = 1.0;
            let b = model.eval_unchecked(&point);
            let mean = 0.5 * (a + b);
            0.5 * ((a - mean).powi(2) + (b - mean).powi(2))
        } else {
            let mut s = 0.0;
            let mut s2 = 0.0;
            for (x, w) in gn.iter().zip(gw) {
                point[j] = 0.5 + 0.5 * x;
                let f = model.eval_unchecked(&point);
                let w = 0.5 * w;
                s += w * f;
                s2 += w * f * f;
            }
            (s2 - s * s).max(0.0)
        };
        acc += v;
        acc_sq += v * v;
    }
    let n = mc_budget.max(1) as f64;
    let value = acc / n;
    let var = (acc_sq / n - value * value).max(0.0);
    Ok(IotaEstimate {
        value,
        se: (var / n).sqrt(),
        analytic: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        binary_linear, indicator, product_centered, sparse_quadratic, Component,
    };

    fn linear_model(p: usize) -> RegressionModel {
        // m(x) = x_1 via the quadratic kind with a single linear term.
        sparse_quadratic(p, 0.0, vec![1.0], vec![], 0.0).unwrap()
    }

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let (n, w) = gauss_legendre(8);
        let integral: f64 = n.iter().zip(&w).map(|(x, w)| w * x.powi(10)).sum();
        assert!((integral - 2.0 / 11.0).abs() < 1e-12);
        let total: f64 = w.iter().sum();
        assert!((total - 2.0).abs() < 1e-13);
    }

    #[test]
    fn conditional_mean_examples() {
        let m = linear_model(2);
        assert!((conditional_mean(&m, &Cell::root(2)) - 0.5).abs() < 1e-15);

        // m = x1 * x2 on [0, 0.5]^2: product of conditional means.
        let prod = sparse_quadratic(2, 0.0, vec![0.0, 0.0], vec![(1, 0, 1.0)], 0.0).unwrap();
        let cell = Cell::from_bounds(&[(0.0, 0.5), (0.0, 0.5)]);
        assert!((conditional_mean(&prod, &cell) - 0.0625).abs() < 1e-15);

        let bin = binary_linear(4, 3, 1.0, 0.0).unwrap();
        assert!((conditional_mean(&bin, &Cell::root(4)) - 1.5).abs() < 1e-15);
    }

    #[test]
    fn conditional_variance_examples() {
        // Constant m: zero variance.
        let c = indicator(2, 0.0, 0.0).unwrap(); // 1{x1 >= 0} == 1
        assert_eq!(conditional_variance(&c, &Cell::root(2)), 0.0);

        let m = linear_model(1);
        assert!((conditional_variance(&m, &Cell::root(1)) - 1.0 / 12.0).abs() < 1e-15);

        let bin = binary_linear(5, 4, 2.0, 0.0).unwrap();
        assert!((conditional_variance(&bin, &Cell::root(5)) - 4.0) .abs() < 1e-12);
    }

    #[test]
    fn impurity_examples() {
        // Indicator at its breakpoint: all variance removed.
        let ind = indicator(2, 0.5, 0.0).unwrap();
        let rep = impurity_decrease_ii(&ind, &Cell::root(2), &Split::new(0, 0.5)).unwrap();
        assert!((rep.decrease_ii - 0.25).abs() < 1e-15);
        assert!(rep.remaining_i.abs() < 1e-15);
        assert!((rep.var - 0.25).abs() < 1e-15);
        assert!((rep.prob_left + rep.prob_right - 1.0).abs() < 1e-15);

        // Split on a coordinate absent from m.
        let rep = impurity_decrease_ii(&ind, &Cell::root(2), &Split::new(1, 0.7)).unwrap();
        assert!(rep.decrease_ii.abs() < 1e-15);

        // m = x1 at the midpoint: (II) = 1/16.
        let lin = linear_model(1);
        let rep = impurity_decrease_ii(&lin, &Cell::root(1), &Split::new(0, 0.5)).unwrap();
        assert!((rep.decrease_ii - 0.0625).abs() < 1e-15);
        // Additivity (I) + (II) = Var.
        assert!((rep.remaining_i + rep.decrease_ii - rep.var).abs() < 1e-14);
    }

    #[test]
    fn theoretical_split_finds_indicator_breakpoint() {
        let ind = indicator(2, 0.3, 0.0).unwrap();
        let t = theoretical_cart_split(
            &ind,
            &Cell::root(2),
            &[0],
            &SearchConfig::default(),
        )
        .unwrap();
        assert_eq!(t.split.feature, 0);
        assert!((t.split.threshold - 0.3).abs() < 1e-12);
        assert!(!t.degenerate);
    }

    #[test]
    fn theoretical_split_constant_model_degenerates() {
        let c = indicator(2, 0.0, 0.0).unwrap();
        let t = theoretical_cart_split(&c, &Cell::root(2), &[0, 1], &SearchConfig::default())
            .unwrap();
        assert!(t.degenerate);
        assert_eq!(t.ii, 0.0);
    }

    #[test]
    fn theoretical_split_additive_ties_to_lowest_index() {
        // m = x1 + x2: both coordinates attain (II*) = 1/16 at midpoints.
        let m = sparse_quadratic(2, 0.0, vec![1.0, 1.0], vec![], 0.0).unwrap();
        let t = theoretical_cart_split(&m, &Cell::root(2), &[0, 1], &SearchConfig::default())
            .unwrap();
        assert_eq!(t.split.feature, 0);
        assert!((t.ii - 0.0625).abs() < 1e-9);
        assert!((t.split.threshold - 0.5).abs() < 1e-6);
    }

    #[test]
    fn sid_alpha_indicator_is_one() {
        let ind = indicator(2, 0.5, 0.0).unwrap();
        let cert =
            estimate_sid_alpha(&ind, 200, 8, 17, &SearchConfig::default()).unwrap();
        assert!(!cert.unbounded);
        assert!((cert.alpha_hat - 1.0).abs() <= 1e-9, "{}", cert.alpha_hat);
    }

    #[test]
    fn sid_alpha_binary_root_ratio_is_s_star() {
        let bin = binary_linear(6, 3, 1.0, 0.0).unwrap();
        let cert = estimate_sid_alpha(&bin, 100, 8, 3, &SearchConfig::default()).unwrap();
        assert_eq!(cert.alpha_hat, 3.0);
    }

    #[test]
    fn sid_alpha_counterexample_refuted() {
        let m = product_centered(2, 0.0).unwrap();
        let cert = estimate_sid_alpha(&m, 50, 8, 5, &SearchConfig::default()).unwrap();
        assert!(cert.effective_alpha() > 50.0);
    }

    #[test]
    fn sid_alpha_constant_model_errors() {
        let c = indicator(2, 0.0, 0.0).unwrap();
        assert!(matches!(
            estimate_sid_alpha(&c, 10, 8, 1, &SearchConfig::default()),
            Err(Error::ConstantModel)
        ));
    }

    #[test]
    fn relevance_examples() {
        let bin = binary_linear(5, 3, 1.0, 0.0).unwrap();
        let i = relevance_iota(&bin, 1, 100, 1).unwrap();
        assert_eq!(i.value, 0.25);
        let i = relevance_iota(&bin, 4, 100, 1).unwrap();
        assert_eq!(i.value, 0.0);
        let lin = linear_model(3);
        let i = relevance_iota(&lin, 0, 2000, 1).unwrap();
        assert!((i.value - 1.0 / 12.0).abs() <= 3.0 * i.se.max(1e-12) + 1e-9);
    }

    #[test]
    fn additive_moments_match_quadrature_for_exp_component() {
        let m = crate::model::smooth_additive(
            2,
            vec![
                Component::Exp { rate: 1.0, scale: 0.5 },
                Component::Linear { slope: 2.0 },
            ],
            0.0,
        )
        .unwrap();
        let cell = Cell::from_bounds(&[(0.1, 0.7), (0.2, 0.9)]);
        let mm = moments(&m, &cell);
        // Cross-check against a brute-force Riemann sum.
        let steps = 20_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for i in 0..steps {
            let x0 = 0.1 + 0.6 * (i as f64 + 0.5) / steps as f64;
            for k in 0..100 {
                let x1 = 0.2 + 0.7 * (k as f64 + 0.5) / 100.0;
                let v = m.eval_unchecked(&[x0, x1]);
                s += v;
                s2 += v * v;
            }
        }
        let count = (steps * 100) as f64;
        let mean = s / count;
        let var = s2 / count - mean * mean;
        assert!((mm.mean - mean).abs() < 1e-4);
        assert!((mm.var - var).abs() < 1e-4);
    }
}
