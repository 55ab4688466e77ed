//! Registry of regression functions with their feature distributions, noise
//! laws, bounds, and known sufficient-impurity-decrease constants.
//!
//! Each registered kind carries enough structure for the population oracle
//! to compute conditional moments over cells in closed form where the model
//! class permits it (polynomials and additive models under a product
//! measure, counting measure for binary features, interval overlap for step
//! functions); the remaining kinds fall back to tensorized Gauss-Legendre
//! quadrature over the coordinates the function actually depends on.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Cell, Interval};

/// Conditional moments of `m(X)` over a cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellMoments {
    /// `P(X ∈ t)` under the model's feature distribution.
    pub prob: f64,
    /// `E(m(X) | X ∈ t)`; 0 when `prob == 0` (the 0/0 convention).
    pub mean: f64,
    /// `Var(m(X) | X ∈ t)`; 0 when `prob == 0`.
    pub var: f64,
}

impl CellMoments {
    pub fn zero_mass() -> Self {
        CellMoments {
            prob: 0.0,
            mean: 0.0,
            var: 0.0,
        }
    }

    /// True when the cell has zero probability and moments fell back to 0.
    pub fn is_zero_mass(&self) -> bool {
        self.prob == 0.0
    }
}

// ---------------------------------------------------------------------------
// Feature distributions
// ---------------------------------------------------------------------------

/// Per-coordinate density for user models: piecewise constant on `[0,1]`,
/// bounded away from 0 and ∞.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseDensity {
    /// Breakpoints `0 = b_0 < ... < b_K = 1`.
    pub breaks: Vec<f64>,
    /// Density value on each piece, normalized to unit mass.
    pub weights: Vec<f64>,
}

impl PiecewiseDensity {
    pub fn new(breaks: Vec<f64>, mut weights: Vec<f64>) -> Result<Self> {
        let bad = |message: &str| Error::InvalidParameter {
            field: "density".into(),
            message: message.into(),
        };
        if breaks.len() < 2 || weights.len() + 1 != breaks.len() {
            return Err(bad("breaks/weights length mismatch"));
        }
        if breaks[0] != 0.0 || *breaks.last().unwrap() != 1.0 {
            return Err(bad("breaks must start at 0 and end at 1"));
        }
        if breaks.windows(2).any(|w| w[1] <= w[0]) {
            return Err(bad("breaks must be strictly increasing"));
        }
        if weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(bad("density must be bounded away from 0 and ∞"));
        }
        let mass: f64 = weights
            .iter()
            .zip(breaks.windows(2))
            .map(|(w, b)| w * (b[1] - b[0]))
            .sum();
        for w in &mut weights {
            *w /= mass;
        }
        Ok(PiecewiseDensity { breaks, weights })
    }

    pub fn uniform() -> Self {
        PiecewiseDensity {
            breaks: vec![0.0, 1.0],
            weights: vec![1.0],
        }
    }

    /// Mass of `[a, b]` under the density (closure is measure-null here).
    pub fn mass(&self, a: f64, b: f64) -> f64 {
        let mut m = 0.0;
        for (w, seg) in self.weights.iter().zip(self.breaks.windows(2)) {
            let lo = seg[0].max(a);
            let hi = seg[1].min(b);
            if hi > lo {
                m += w * (hi - lo);
            }
        }
        m
    }

    /// Inverse CDF for sampling.
    pub fn quantile(&self, u: f64) -> f64 {
        let mut acc = 0.0;
        for (w, seg) in self.weights.iter().zip(self.breaks.windows(2)) {
            let piece = w * (seg[1] - seg[0]);
            if acc + piece >= u {
                return seg[0] + (u - acc) / w;
            }
            acc += piece;
        }
        1.0
    }
}

/// Feature distribution of a model: i.i.d. per coordinate.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureDistribution {
    /// Independent Uniform[0,1] coordinates.
    Uniform,
    /// Independent Bernoulli(1/2) coordinates with values in {0,1}.
    BernoulliHalf,
    /// Independent coordinates with user-declared piecewise densities.
    Product(Vec<PiecewiseDensity>),
}

impl FeatureDistribution {
    /// `P(X ∈ t)` for a cell under this distribution.
    pub fn cell_prob(&self, cell: &Cell) -> f64 {
        match self {
            FeatureDistribution::Uniform => cell.volume(),
            FeatureDistribution::BernoulliHalf => cell
                .intervals()
                .iter()
                .map(|iv| bernoulli_interval_mass(iv))
                .product(),
            FeatureDistribution::Product(ds) => cell
                .intervals()
                .iter()
                .zip(ds)
                .map(|(iv, d)| d.mass(iv.lo, iv.hi))
                .product(),
        }
    }
}

pub(crate) fn bernoulli_interval_mass(iv: &Interval) -> f64 {
    let mut m = 0.0;
    if iv.contains(0.0) {
        m += 0.5;
    }
    if iv.contains(1.0) {
        m += 0.5;
    }
    m
}

// ---------------------------------------------------------------------------
// Sparse polynomials (quadratic and interaction kinds)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Monomial {
    pub coeff: f64,
    /// Sorted `(coordinate, exponent)` pairs with exponents >= 1.
    pub powers: Vec<(usize, u32)>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub(crate) struct SparsePoly {
    pub terms: Vec<Monomial>,
}

impl SparsePoly {
    pub fn new(mut terms: Vec<Monomial>) -> Self {
        for t in &mut terms {
            t.powers.sort_unstable();
        }
        terms.retain(|t| t.coeff != 0.0);
        SparsePoly { terms }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                t.coeff
                    * t.powers
                        .iter()
                        .map(|&(v, e)| x[v].powi(e as i32))
                        .product::<f64>()
            })
            .sum()
    }

    /// Product of two polynomials with like-term collection.
    pub fn mul(&self, other: &SparsePoly) -> SparsePoly {
        use std::collections::BTreeMap;
        let mut acc: BTreeMap<Vec<(usize, u32)>, f64> = BTreeMap::new();
        for a in &self.terms {
            for b in &other.terms {
                let mut powers: BTreeMap<usize, u32> = BTreeMap::new();
                for &(v, e) in a.powers.iter().chain(b.powers.iter()) {
                    *powers.entry(v).or_insert(0) += e;
                }
                let key: Vec<(usize, u32)> = powers.into_iter().collect();
                *acc.entry(key).or_insert(0.0) += a.coeff * b.coeff;
            }
        }
        SparsePoly {
            terms: acc
                .into_iter()
                .filter(|&(_, c)| c != 0.0)
                .map(|(powers, coeff)| Monomial { coeff, powers })
                .collect(),
        }
    }

    pub fn square(&self) -> SparsePoly {
        self.mul(self)
    }

    /// Conditional expectation over a cell: the product measure factorizes
    /// every monomial into per-coordinate raw moments.
    pub fn conditional_mean(&self, cell: &Cell, dist: &FeatureDistribution) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                t.coeff
                    * t.powers
                        .iter()
                        .map(|&(v, e)| coordinate_moment(cell.interval(v), e, dist, v))
                        .product::<f64>()
            })
            .sum()
    }

    pub fn abs_coeff_sum(&self) -> f64 {
        self.terms.iter().map(|t| t.coeff.abs()).sum()
    }

    pub fn active_coords(&self) -> Vec<usize> {
        let mut vs: Vec<usize> = self
            .terms
            .iter()
            .flat_map(|t| t.powers.iter().map(|&(v, _)| v))
            .collect();
        vs.sort_unstable();
        vs.dedup();
        vs
    }
}

/// `E(X^e | X ∈ iv)` for one coordinate under the given distribution.
/// The caller guarantees the interval has positive mass.
fn coordinate_moment(iv: &Interval, e: u32, dist: &FeatureDistribution, coord: usize) -> f64 {
    if e == 0 {
        return 1.0;
    }
    match dist {
        FeatureDistribution::Uniform => uniform_raw_moment(iv.lo, iv.hi, e),
        FeatureDistribution::BernoulliHalf => {
            // X^e == X on {0,1}.
            let q = bernoulli_interval_mass(iv);
            if q == 0.0 {
                0.0
            } else {
                let one = if iv.contains(1.0) { 0.5 } else { 0.0 };
                one / q
            }
        }
        FeatureDistribution::Product(ds) => {
            let d = &ds[coord];
            let mass = d.mass(iv.lo, iv.hi);
            if mass == 0.0 {
                return 0.0;
            }
            let mut acc = 0.0;
            for (w, seg) in d.weights.iter().zip(d.breaks.windows(2)) {
                let lo = seg[0].max(iv.lo);
                let hi = seg[1].min(iv.hi);
                if hi > lo {
                    // ∫ x^e w dx over [lo, hi]
                    acc += w * (hi.powi(e as i32 + 1) - lo.powi(e as i32 + 1))
                        / f64::from(e + 1);
                }
            }
            acc / mass
        }
    }
}

/// `E(X^e | X ∈ [a,b])` under Uniform: `(b^{e+1} - a^{e+1}) / ((e+1)(b-a))`.
pub(crate) fn uniform_raw_moment(a: f64, b: f64, e: u32) -> f64 {
    let k = e as i32 + 1;
    (b.powi(k) - a.powi(k)) / (f64::from(e + 1) * (b - a))
}

// ---------------------------------------------------------------------------
// Additive components
// ---------------------------------------------------------------------------

/// One coordinate function of an additive model with analytic `∫f` and `∫f²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Component {
    /// `f(x) = slope · x`
    Linear { slope: f64 },
    /// `f(x) = scale · exp(rate · x)`
    Exp { rate: f64, scale: f64 },
    /// Continuous piecewise-linear through `(breaks[i], values[i])`.
    PiecewiseLinear { breaks: Vec<f64>, values: Vec<f64> },
}

impl Component {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Component::Linear { slope } => slope * x,
            Component::Exp { rate, scale } => scale * (rate * x).exp(),
            Component::PiecewiseLinear { breaks, values } => {
                let k = piece_index(breaks, x);
                let (a, b) = (breaks[k], breaks[k + 1]);
                let s = (values[k + 1] - values[k]) / (b - a);
                values[k] + s * (x - a)
            }
        }
    }

    /// `∫_a^b f(x) dx`.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        match self {
            Component::Linear { slope } => slope * (b * b - a * a) / 2.0,
            Component::Exp { rate, scale } => scale * ((rate * b).exp() - (rate * a).exp()) / rate,
            Component::PiecewiseLinear { .. } => self.piecewise_integral(a, b, false),
        }
    }

    /// `∫_a^b f(x)² dx`.
    pub fn integral_sq(&self, a: f64, b: f64) -> f64 {
        match self {
            Component::Linear { slope } => slope * slope * (b * b * b - a * a * a) / 3.0,
            Component::Exp { rate, scale } => {
                scale * scale * ((2.0 * rate * b).exp() - (2.0 * rate * a).exp()) / (2.0 * rate)
            }
            Component::PiecewiseLinear { .. } => self.piecewise_integral(a, b, true),
        }
    }

    fn piecewise_integral(&self, a: f64, b: f64, squared: bool) -> f64 {
        let Component::PiecewiseLinear { breaks, values } = self else {
            unreachable!()
        };
        let mut acc = 0.0;
        for k in 0..breaks.len() - 1 {
            let lo = breaks[k].max(a);
            let hi = breaks[k + 1].min(b);
            if hi <= lo {
                continue;
            }
            let s = (values[k + 1] - values[k]) / (breaks[k + 1] - breaks[k]);
            // f(x) = alpha + s x on this piece
            let alpha = values[k] - s * breaks[k];
            if squared {
                acc += alpha * alpha * (hi - lo)
                    + alpha * s * (hi * hi - lo * lo)
                    + s * s * (hi * hi * hi - lo * lo * lo) / 3.0;
            } else {
                acc += alpha * (hi - lo) + s * (hi * hi - lo * lo) / 2.0;
            }
        }
        acc
    }

    pub fn sup_abs(&self) -> f64 {
        match self {
            Component::Linear { slope } => slope.abs(),
            Component::Exp { rate, scale } => {
                (scale.abs() * rate.exp().max(1.0)).max(scale.abs() * (-rate).exp().min(1.0))
            }
            Component::PiecewiseLinear { values, .. } => {
                values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
            }
        }
    }

    fn slopes(&self) -> Vec<f64> {
        match self {
            Component::Linear { slope } => vec![*slope],
            Component::Exp { rate, scale } => {
                vec![scale * rate, scale * rate * rate.exp()]
            }
            Component::PiecewiseLinear { breaks, values } => breaks
                .windows(2)
                .zip(values.windows(2))
                .map(|(b, v)| (v[1] - v[0]) / (b[1] - b[0]))
                .collect(),
        }
    }

    fn validate(&self, field: &str) -> Result<()> {
        let bad = |message: String| Error::InvalidParameter {
            field: field.to_string(),
            message,
        };
        match self {
            Component::Linear { slope } => {
                if !slope.is_finite() {
                    return Err(bad("slope must be finite".into()));
                }
            }
            Component::Exp { rate, scale } => {
                if *rate == 0.0 || !rate.is_finite() || !scale.is_finite() {
                    return Err(bad("rate must be finite and nonzero".into()));
                }
            }
            Component::PiecewiseLinear { breaks, values } => {
                if breaks.len() < 2 || breaks.len() != values.len() {
                    return Err(bad("breaks/values length mismatch".into()));
                }
                if breaks[0] != 0.0 || *breaks.last().unwrap() != 1.0 {
                    return Err(bad("breaks must span [0, 1]".into()));
                }
                if breaks.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(bad("breaks must be strictly increasing".into()));
                }
            }
        }
        Ok(())
    }
}

fn piece_index(breaks: &[f64], x: f64) -> usize {
    let k = breaks.partition_point(|&b| b <= x);
    k.saturating_sub(1).min(breaks.len() - 2)
}

// ---------------------------------------------------------------------------
// Model kinds
// ---------------------------------------------------------------------------

/// A user-supplied regression function with declared metadata.
#[derive(Clone)]
pub struct UserModel {
    pub p: usize,
    pub f: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    /// Declared upper bound of |m|; spot-checked at registration.
    pub m0: f64,
    /// Coordinates the function depends on (0-based).
    pub active: Vec<usize>,
    pub density: Option<Vec<PiecewiseDensity>>,
    /// Optional user-supplied conditional moments taking precedence over
    /// quadrature.
    pub moments: Option<Arc<dyn Fn(&Cell) -> CellMoments + Send + Sync>>,
}

impl fmt::Debug for UserModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("UserModel")
            .field("p", &self.p)
            .field("m0", &self.m0)
            .field("active", &self.active)
            .finish()
    }
}

#[derive(Debug, Clone)]
pub enum ModelKind {
    /// `m(x) = 1{x_1 >= b}`
    Indicator { p: usize, b: f64 },
    /// Sparse quadratic with the same-sign interaction restriction.
    SparseQuadratic {
        p: usize,
        poly: SparsePolyModel,
    },
    /// Additive with smooth monotone coordinate functions.
    SmoothAdditive { p: usize, components: Vec<Component> },
    /// Additive with linear coordinate functions (self-certifying oracle case).
    AdditiveOracle { p: usize, components: Vec<Component> },
    /// `m(x) = β · #{j <= s* : x_j = 1}` over Bernoulli(1/2) features.
    BinaryLinear { p: usize, s_star: usize, beta: f64 },
    /// `m(x) = exp(Σ β_j x_j) / (1 + exp(Σ β_j x_j))`
    Logistic { p: usize, betas: Vec<f64> },
    /// Polynomial with same-sign interaction terms plus a linear part.
    PolyInteraction {
        p: usize,
        poly: SparsePolyModel,
    },
    /// Additive continuous piecewise-linear coordinate functions.
    PiecewiseLinearAdditive { p: usize, components: Vec<Component> },
    /// Linear combination of indicators of axis-aligned grid cells.
    IndicatorGrid {
        p: usize,
        axes: Vec<Vec<f64>>,
        coeffs: Vec<f64>,
        iota: f64,
    },
    /// `m(x) = (x_1 - 1/2)(x_2 - 1/2)`: violates SID.
    ProductCentered { p: usize },
    /// User-callable regression function.
    User(UserModel),
}

/// A polynomial model together with its cached square and metadata.
#[derive(Debug, Clone)]
pub struct SparsePolyModel {
    pub(crate) poly: SparsePoly,
    pub(crate) poly_sq: SparsePoly,
    pub(crate) active: Vec<usize>,
    pub(crate) m0: f64,
    pub(crate) claimed_alpha1: Option<f64>,
}

impl SparsePolyModel {
    pub(crate) fn new(poly: SparsePoly, claimed_alpha1: Option<f64>) -> Self {
        let poly_sq = poly.square();
        let active = poly.active_coords();
        let m0 = poly.abs_coeff_sum();
        SparsePolyModel {
            poly,
            poly_sq,
            active,
            m0,
            claimed_alpha1,
        }
    }
}

/// A registered regression model: kind, noise half-width, and metadata.
///
/// Noise is uniform on `[-m_eps, m_eps]` (symmetric and bounded); zero noise
/// is `m_eps = 0`.
#[derive(Debug, Clone)]
pub struct RegressionModel {
    pub kind: ModelKind,
    pub m_eps: f64,
}

impl RegressionModel {
    pub fn new(kind: ModelKind, m_eps: f64) -> Result<Self> {
        if !(m_eps >= 0.0) || !m_eps.is_finite() {
            return Err(Error::InvalidParameter {
                field: "m_eps".into(),
                message: "noise half-width must be finite and >= 0".into(),
            });
        }
        let model = RegressionModel { kind, m_eps };
        model.validate()?;
        Ok(model)
    }

    pub fn id(&self) -> &'static str {
        match &self.kind {
            ModelKind::Indicator { .. } => "indicator",
            ModelKind::SparseQuadratic { .. } => "sparse-quadratic",
            ModelKind::SmoothAdditive { .. } => "smooth-additive",
            ModelKind::AdditiveOracle { .. } => "additive-oracle",
            ModelKind::BinaryLinear { .. } => "binary-linear",
            ModelKind::Logistic { .. } => "logistic",
            ModelKind::PolyInteraction { .. } => "poly-interaction",
            ModelKind::PiecewiseLinearAdditive { .. } => "piecewise-linear",
            ModelKind::IndicatorGrid { .. } => "indicator-grid",
            ModelKind::ProductCentered { .. } => "product-centered",
            ModelKind::User(_) => "user",
        }
    }

    pub fn p(&self) -> usize {
        match &self.kind {
            ModelKind::Indicator { p, .. }
            | ModelKind::SparseQuadratic { p, .. }
            | ModelKind::SmoothAdditive { p, .. }
            | ModelKind::AdditiveOracle { p, .. }
            | ModelKind::BinaryLinear { p, .. }
            | ModelKind::Logistic { p, .. }
            | ModelKind::PolyInteraction { p, .. }
            | ModelKind::PiecewiseLinearAdditive { p, .. }
            | ModelKind::IndicatorGrid { p, .. }
            | ModelKind::ProductCentered { p } => *p,
            ModelKind::User(u) => u.p,
        }
    }

    pub fn distribution(&self) -> FeatureDistribution {
        match &self.kind {
            ModelKind::BinaryLinear { .. } => FeatureDistribution::BernoulliHalf,
            ModelKind::User(u) => match &u.density {
                Some(d) => FeatureDistribution::Product(d.clone()),
                None => FeatureDistribution::Uniform,
            },
            _ => FeatureDistribution::Uniform,
        }
    }

    /// Exact `m(point)`; errors when the point leaves the unit cube.
    pub fn eval(&self, point: &[f64]) -> Result<f64> {
        if point.len() != self.p() {
            return Err(Error::DimensionMismatch {
                expected: self.p(),
                got: point.len(),
            });
        }
        if point.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
            return Err(Error::InvalidParameter {
                field: "point".into(),
                message: "coordinates must lie in [0, 1]".into(),
            });
        }
        Ok(self.eval_unchecked(point))
    }

    pub fn eval_unchecked(&self, x: &[f64]) -> f64 {
        match &self.kind {
            ModelKind::Indicator { b, .. } => {
                if x[0] >= *b {
                    1.0
                } else {
                    0.0
                }
            }
            ModelKind::SparseQuadratic { poly, .. } | ModelKind::PolyInteraction { poly, .. } => {
                poly.poly.eval(x)
            }
            ModelKind::SmoothAdditive { components, .. }
            | ModelKind::AdditiveOracle { components, .. }
            | ModelKind::PiecewiseLinearAdditive { components, .. } => components
                .iter()
                .enumerate()
                .map(|(j, c)| c.eval(x[j]))
                .sum(),
            ModelKind::BinaryLinear { s_star, beta, .. } => {
                beta * x[..*s_star].iter().filter(|&&v| v == 1.0).count() as f64
            }
            ModelKind::Logistic { betas, .. } => {
                let z: f64 = betas.iter().zip(x).map(|(b, v)| b * v).sum();
                sigmoid(z)
            }
            ModelKind::IndicatorGrid { axes, coeffs, .. } => {
                let mut flat = 0;
                for (j, cuts) in axes.iter().enumerate() {
                    flat = flat * (cuts.len() - 1) + piece_index(cuts, x[j]);
                }
                coeffs[flat]
            }
            ModelKind::ProductCentered { .. } => (x[0] - 0.5) * (x[1] - 0.5),
            ModelKind::User(u) => (u.f)(x),
        }
    }

    /// Certified upper bound of `|m|` over the unit cube.
    pub fn m0(&self) -> f64 {
        match &self.kind {
            ModelKind::Indicator { .. } => 1.0,
            ModelKind::SparseQuadratic { poly, .. } | ModelKind::PolyInteraction { poly, .. } => {
                poly.m0
            }
            ModelKind::SmoothAdditive { components, .. }
            | ModelKind::AdditiveOracle { components, .. }
            | ModelKind::PiecewiseLinearAdditive { components, .. } => {
                components.iter().map(Component::sup_abs).sum()
            }
            ModelKind::BinaryLinear { s_star, beta, .. } => *s_star as f64 * beta.abs(),
            ModelKind::Logistic { .. } => 1.0,
            ModelKind::IndicatorGrid { coeffs, .. } => {
                coeffs.iter().fold(0.0_f64, |m, c| m.max(c.abs()))
            }
            ModelKind::ProductCentered { .. } => 0.25,
            ModelKind::User(u) => u.m0,
        }
    }

    /// Coordinates `m` depends on (0-based, sorted).
    pub fn active_coords(&self) -> Vec<usize> {
        match &self.kind {
            ModelKind::Indicator { .. } => vec![0],
            ModelKind::SparseQuadratic { poly, .. } | ModelKind::PolyInteraction { poly, .. } => {
                poly.active.clone()
            }
            ModelKind::SmoothAdditive { components, .. }
            | ModelKind::AdditiveOracle { components, .. }
            | ModelKind::PiecewiseLinearAdditive { components, .. } => {
                (0..components.len()).collect()
            }
            ModelKind::BinaryLinear { s_star, .. } => (0..*s_star).collect(),
            ModelKind::Logistic { betas, .. } => (0..betas.len()).collect(),
            ModelKind::IndicatorGrid { axes, .. } => (0..axes.len()).collect(),
            ModelKind::ProductCentered { .. } => vec![0, 1],
            ModelKind::User(u) => u.active.clone(),
        }
    }

    /// The paper's SID constant for this instance, where one is available.
    pub fn claimed_alpha1(&self) -> Option<f64> {
        match &self.kind {
            ModelKind::Indicator { .. } => Some(1.0),
            ModelKind::SparseQuadratic { poly, .. } | ModelKind::PolyInteraction { poly, .. } => {
                poly.claimed_alpha1
            }
            ModelKind::SmoothAdditive { .. } | ModelKind::AdditiveOracle { .. } => None,
            ModelKind::BinaryLinear { s_star, .. } => Some(*s_star as f64),
            ModelKind::Logistic { betas, .. } => {
                let s = betas.len() as f64;
                let max_b = betas.iter().fold(0.0_f64, |m, b| m.max(b.abs()));
                let min_b = betas.iter().fold(f64::INFINITY, |m, b| m.min(b.abs()));
                let sum_b: f64 = betas.iter().map(|b| b.abs()).sum();
                Some(4.0 * (s * max_b / min_b).powi(2) * (2.0 * sum_b).exp())
            }
            ModelKind::PiecewiseLinearAdditive { components, .. } => {
                let slopes: Vec<f64> = components.iter().flat_map(|c| c.slopes()).collect();
                let r = slopes.iter().fold(f64::INFINITY, |m, s| m.min(s.abs()));
                let cap_r = slopes.iter().fold(0.0_f64, |m, s| m.max(s.abs()));
                let b_star = components
                    .iter()
                    .filter_map(|c| match c {
                        Component::PiecewiseLinear { breaks, .. } => breaks
                            .windows(2)
                            .map(|w| w[1] - w[0])
                            .fold(None, |m: Option<f64>, g| {
                                Some(m.map_or(g, |v| v.min(g)))
                            }),
                        _ => None,
                    })
                    .fold(f64::INFINITY, f64::min);
                let s = components.len() as f64;
                Some(s * 1024.0 * cap_r.powi(5) / (b_star.powi(3) * r.powi(5)))
            }
            ModelKind::IndicatorGrid {
                axes, iota, ..
            } => {
                let s = axes.len() as f64;
                let min_gap = axes
                    .iter()
                    .flat_map(|cuts| cuts.windows(2).map(|w| w[1] - w[0]))
                    .fold(f64::INFINITY, f64::min);
                let c_dag = 0.25_f64.min(min_gap);
                let m0 = self.m0();
                Some(s / (c_dag * (1.0 - c_dag)) * (2.0 * m0 / iota).powi(2))
            }
            ModelKind::ProductCentered { .. } => None,
            ModelKind::User(_) => None,
        }
    }

    /// Split thresholds worth probing exactly during the theoretical CART
    /// search for this kind (besides the dense grid): the midpoint and third
    /// quartile for polynomial/additive kinds, the discontinuity locations
    /// for step-like kinds.
    pub fn privileged_candidates(&self, cell: &Cell, feature: usize) -> Vec<f64> {
        let iv = cell.interval(feature);
        let (lo, hi) = (iv.lo, iv.hi);
        if hi <= lo {
            return Vec::new();
        }
        let mid = 0.5 * lo + 0.5 * hi;
        let q3 = 0.25 * lo + 0.75 * hi;
        let mut out = match &self.kind {
            ModelKind::Indicator { b, .. } if feature == 0 => vec![*b, mid],
            ModelKind::Indicator { .. } => vec![mid],
            ModelKind::PiecewiseLinearAdditive { components, .. } => {
                let mut v = vec![mid, q3];
                if let Some(Component::PiecewiseLinear { breaks, .. }) =
                    components.get(feature)
                {
                    v.extend(breaks.iter().copied());
                }
                v
            }
            ModelKind::IndicatorGrid { axes, .. } => {
                let mut v = vec![mid];
                if let Some(cuts) = axes.get(feature) {
                    v.extend(cuts.iter().copied());
                }
                v
            }
            _ => vec![mid, q3],
        };
        out.retain(|c| *c > lo && *c < hi);
        out
    }

    fn validate(&self) -> Result<()> {
        let p = self.p();
        let bad = |field: &str, message: &str| Error::InvalidParameter {
            field: field.into(),
            message: message.into(),
        };
        if p == 0 {
            return Err(bad("p", "dimension must be >= 1"));
        }
        match &self.kind {
            ModelKind::Indicator { b, .. } => {
                if !(0.0..=1.0).contains(b) {
                    return Err(bad("b", "breakpoint must lie in [0, 1]"));
                }
            }
            ModelKind::SparseQuadratic { poly, .. } | ModelKind::PolyInteraction { poly, .. } => {
                if poly.active.iter().any(|&v| v >= p) {
                    return Err(bad("terms", "coordinate index out of range"));
                }
            }
            ModelKind::SmoothAdditive { components, .. }
            | ModelKind::AdditiveOracle { components, .. }
            | ModelKind::PiecewiseLinearAdditive { components, .. } => {
                if components.is_empty() || components.len() > p {
                    return Err(bad("components", "need 1..=p coordinate functions"));
                }
                for (j, c) in components.iter().enumerate() {
                    c.validate(&format!("components[{j}]"))?;
                }
            }
            ModelKind::BinaryLinear { s_star, beta, .. } => {
                if *s_star == 0 || *s_star > p {
                    return Err(bad("s_star", "need 1 <= s* <= p"));
                }
                if *beta == 0.0 || !beta.is_finite() {
                    return Err(bad("beta", "need |beta| > 0"));
                }
            }
            ModelKind::Logistic { betas, .. } => {
                if betas.is_empty() || betas.len() > p {
                    return Err(bad("betas", "need 1..=p coefficients"));
                }
                if betas.iter().any(|b| *b == 0.0 || !b.is_finite()) {
                    return Err(bad("betas", "coefficients must be nonzero"));
                }
            }
            ModelKind::IndicatorGrid { axes, coeffs, iota, .. } => {
                if axes.is_empty() || axes.len() > p {
                    return Err(bad("axes", "need 1..=p cut sequences"));
                }
                let mut cells = 1usize;
                for (j, cuts) in axes.iter().enumerate() {
                    if cuts.len() < 2
                        || cuts[0] != 0.0
                        || *cuts.last().unwrap() != 1.0
                        || cuts.windows(2).any(|w| w[1] <= w[0])
                    {
                        return Err(bad(
                            &format!("axes[{j}]"),
                            "cuts must be strictly increasing from 0 to 1",
                        ));
                    }
                    cells *= cuts.len() - 1;
                }
                if coeffs.len() != cells {
                    return Err(bad("coeffs", "length must equal the product of cell counts"));
                }
                if !(*iota > 0.0) {
                    return Err(bad("iota", "monotone-step margin must be positive"));
                }
                validate_grid_monotonicity(axes, coeffs, *iota)?;
            }
            ModelKind::ProductCentered { .. } => {
                if p < 2 {
                    return Err(bad("p", "needs at least two coordinates"));
                }
            }
            ModelKind::User(u) => {
                if u.active.iter().any(|&v| v >= p) {
                    return Err(bad("active", "coordinate index out of range"));
                }
                if !(u.m0 > 0.0) || !u.m0.is_finite() {
                    return Err(bad("m0", "bound must be finite and positive"));
                }
                if let Some(d) = &u.density {
                    if d.len() != p {
                        return Err(bad("density", "need one density per coordinate"));
                    }
                }
                // Trust but spot-check the declared bound by sampling.
                let mut point = vec![0.0; p];
                for i in 0..4096_u64 {
                    for (j, x) in point.iter_mut().enumerate() {
                        *x = halton(i + 1, HALTON_BASES[j % HALTON_BASES.len()]);
                    }
                    let v = (u.f)(&point);
                    if v.abs() > u.m0 * (1.0 + 1e-12) {
                        return Err(bad("m0", "declared bound violated by sampled point"));
                    }
                }
            }
        }
        Ok(())
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// The Example-A.3 coefficient restriction: along each axis the coefficient
/// increments must share a sign and exceed `iota` in magnitude.
fn validate_grid_monotonicity(axes: &[Vec<f64>], coeffs: &[f64], iota: f64) -> Result<()> {
    let dims: Vec<usize> = axes.iter().map(|c| c.len() - 1).collect();
    let strides: Vec<usize> = {
        let mut s = vec![1usize; dims.len()];
        for j in (0..dims.len().saturating_sub(1)).rev() {
            s[j] = s[j + 1] * dims[j + 1];
        }
        s
    };
    for (j, &dim_j) in dims.iter().enumerate() {
        if dim_j < 2 {
            continue;
        }
        let mut sign = 0.0_f64;
        for (flat, _) in coeffs.iter().enumerate() {
            let idx_j = (flat / strides[j]) % dim_j;
            if idx_j == 0 {
                continue;
            }
            let delta = coeffs[flat] - coeffs[flat - strides[j]];
            if delta.abs() < iota {
                return Err(Error::InvalidParameter {
                    field: format!("coeffs (axis {j})"),
                    message: format!("increment {delta} smaller than iota {iota}"),
                });
            }
            if sign == 0.0 {
                sign = delta.signum();
            } else if delta.signum() != sign {
                return Err(Error::InvalidParameter {
                    field: format!("coeffs (axis {j})"),
                    message: "increments must share a sign along each axis".into(),
                });
            }
        }
    }
    Ok(())
}

pub(crate) const HALTON_BASES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

/// Van der Corput radical inverse in the given base (Halton coordinate).
pub fn halton(mut index: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    let b = base as f64;
    while index > 0 {
        f /= b;
        r += f * (index % base) as f64;
        index /= base;
    }
    r
}

// ---------------------------------------------------------------------------
// Constructors for the registered paper examples
// ---------------------------------------------------------------------------

pub fn indicator(p: usize, b: f64, m_eps: f64) -> Result<RegressionModel> {
    RegressionModel::new(ModelKind::Indicator { p, b }, m_eps)
}

/// Sparse quadratic `β0 + Σ_j (β_j x_j + Σ_{l>=j} β_{lj} x_l x_j)` with the
/// same-sign interaction restriction. `quad` holds `(l, j, coeff)` with
/// 0-based `l >= j`.
pub fn sparse_quadratic(
    p: usize,
    beta0: f64,
    linear: Vec<f64>,
    quad: Vec<(usize, usize, f64)>,
    m_eps: f64,
) -> Result<RegressionModel> {
    let s_star = linear.len();
    if s_star == 0 || s_star > p {
        return Err(Error::InvalidParameter {
            field: "linear".into(),
            message: "need 1..=p linear coefficients".into(),
        });
    }
    for &(l, j, _) in &quad {
        if j > l || l >= s_star {
            return Err(Error::InvalidParameter {
                field: "quad".into(),
                message: "terms must satisfy j <= l < s*".into(),
            });
        }
    }
    // Same-sign restriction: whenever an off-diagonal interaction touches j,
    // every coefficient in {β_j, β_{1j}, ..., β_{s*j}} must share a sign.
    for j in 0..s_star {
        let touches_offdiag = quad.iter().any(|&(l, jj, c)| c != 0.0 && l != jj && (jj == j || l == j));
        if !touches_offdiag {
            continue;
        }
        let mut group = vec![linear[j]];
        for &(l, jj, c) in &quad {
            if jj == j || l == j {
                group.push(c);
            }
        }
        let has_pos = group.iter().any(|&g| g > 0.0);
        let has_neg = group.iter().any(|&g| g < 0.0);
        if has_pos && has_neg {
            return Err(Error::InvalidParameter {
                field: "quad".into(),
                message: format!("sign restriction violated around coordinate {}", j + 1),
            });
        }
    }
    let mut terms = vec![Monomial {
        coeff: beta0,
        powers: vec![],
    }];
    for (j, &b) in linear.iter().enumerate() {
        terms.push(Monomial {
            coeff: b,
            powers: vec![(j, 1)],
        });
    }
    for &(l, j, c) in &quad {
        let powers = if l == j { vec![(j, 2)] } else { vec![(j, 1), (l, 1)] };
        terms.push(Monomial { coeff: c, powers });
    }
    let poly = SparsePolyModel::new(SparsePoly::new(terms), Some(86.4 * s_star as f64));
    RegressionModel::new(ModelKind::SparseQuadratic { p, poly }, m_eps)
}

pub fn smooth_additive(p: usize, components: Vec<Component>, m_eps: f64) -> Result<RegressionModel> {
    RegressionModel::new(ModelKind::SmoothAdditive { p, components }, m_eps)
}

pub fn additive_oracle(p: usize, slopes: Vec<f64>, m_eps: f64) -> Result<RegressionModel> {
    let components = slopes
        .into_iter()
        .map(|slope| Component::Linear { slope })
        .collect();
    RegressionModel::new(ModelKind::AdditiveOracle { p, components }, m_eps)
}

pub fn binary_linear(p: usize, s_star: usize, beta: f64, m_eps: f64) -> Result<RegressionModel> {
    RegressionModel::new(ModelKind::BinaryLinear { p, s_star, beta }, m_eps)
}

pub fn logistic(p: usize, betas: Vec<f64>, m_eps: f64) -> Result<RegressionModel> {
    RegressionModel::new(ModelKind::Logistic { p, betas }, m_eps)
}

/// Polynomial interaction `Σ_k β_k Π_{j∈T_k} x_j^{r_jk} + Σ_j β_j x_j` with
/// all coefficients sharing one sign.
pub fn poly_interaction(
    p: usize,
    linear: Vec<f64>,
    terms: Vec<(f64, Vec<(usize, u32)>)>,
    m_eps: f64,
) -> Result<RegressionModel> {
    let s_star = linear.len();
    if s_star == 0 || s_star > p {
        return Err(Error::InvalidParameter {
            field: "linear".into(),
            message: "need 1..=p linear coefficients".into(),
        });
    }
    let all: Vec<f64> = linear
        .iter()
        .copied()
        .chain(terms.iter().map(|t| t.0))
        .collect();
    let has_pos = all.iter().any(|&c| c > 0.0);
    let has_neg = all.iter().any(|&c| c < 0.0);
    if has_pos && has_neg {
        return Err(Error::InvalidParameter {
            field: "terms".into(),
            message: "all coefficients must share one sign".into(),
        });
    }
    if linear.iter().any(|&c| c == 0.0) {
        return Err(Error::InvalidParameter {
            field: "linear".into(),
            message: "linear coefficients must be nonzero".into(),
        });
    }
    let mut max_r = 1u32;
    let mut monomials = Vec::new();
    for (j, &b) in linear.iter().enumerate() {
        monomials.push(Monomial {
            coeff: b,
            powers: vec![(j, 1)],
        });
    }
    for (coeff, powers) in &terms {
        for &(v, e) in powers {
            if v >= s_star {
                return Err(Error::InvalidParameter {
                    field: "terms".into(),
                    message: "interaction coordinates must lie inside the active set".into(),
                });
            }
            if e == 0 {
                return Err(Error::InvalidParameter {
                    field: "terms".into(),
                    message: "exponents must be positive".into(),
                });
            }
            max_r = max_r.max(e);
        }
        monomials.push(Monomial {
            coeff: *coeff,
            powers: powers.clone(),
        });
    }
    let sum_kk: f64 = terms.iter().map(|t| t.0.abs()).sum();
    let max_lin = linear.iter().fold(0.0_f64, |m, b| m.max(b.abs()));
    let min_lin = linear.iter().fold(f64::INFINITY, |m, b| m.min(b.abs()));
    let claimed = 4.0
        * (s_star as f64).powi(2)
        * ((f64::from(max_r) * sum_kk + max_lin) / min_lin).powi(2);
    let poly = SparsePolyModel::new(SparsePoly::new(monomials), Some(claimed));
    RegressionModel::new(ModelKind::PolyInteraction { p, poly }, m_eps)
}

pub fn piecewise_linear_additive(
    p: usize,
    components: Vec<Component>,
    m_eps: f64,
) -> Result<RegressionModel> {
    for c in &components {
        if !matches!(c, Component::PiecewiseLinear { .. }) {
            return Err(Error::InvalidParameter {
                field: "components".into(),
                message: "all components must be piecewise linear".into(),
            });
        }
        if c.slopes().iter().any(|&s| s == 0.0) {
            return Err(Error::InvalidParameter {
                field: "components".into(),
                message: "piece slopes must be nonzero".into(),
            });
        }
    }
    RegressionModel::new(ModelKind::PiecewiseLinearAdditive { p, components }, m_eps)
}

pub fn indicator_grid(
    p: usize,
    axes: Vec<Vec<f64>>,
    coeffs: Vec<f64>,
    iota: f64,
    m_eps: f64,
) -> Result<RegressionModel> {
    RegressionModel::new(
        ModelKind::IndicatorGrid {
            p,
            axes,
            coeffs,
            iota,
        },
        m_eps,
    )
}

pub fn product_centered(p: usize, m_eps: f64) -> Result<RegressionModel> {
    RegressionModel::new(ModelKind::ProductCentered { p }, m_eps)
}

pub fn user_model(user: UserModel, m_eps: f64) -> Result<RegressionModel> {
    RegressionModel::new(ModelKind::User(user), m_eps)
}

// ---------------------------------------------------------------------------
// String-addressed registry
// ---------------------------------------------------------------------------

/// Registered model identifiers, in listing order.
pub const MODEL_IDS: [&str; 10] = [
    "indicator",
    "sparse-quadratic",
    "smooth-additive",
    "additive-oracle",
    "binary-linear",
    "logistic",
    "poly-interaction",
    "piecewise-linear",
    "indicator-grid",
    "product-centered",
];

/// Registry listing entry.
#[derive(Debug, Clone, Serialize)]
pub struct ModelDescription {
    pub id: &'static str,
    pub summary: &'static str,
    pub params: &'static str,
    /// The paper's SID constant formula, where one is known.
    pub sid_constant: &'static str,
    /// The constant evaluated at the default parameterization.
    pub default_alpha1: Option<f64>,
}

/// Lists every registered kind with its parameter schema and SID constant.
pub fn describe_models() -> Vec<ModelDescription> {
    MODEL_IDS
        .iter()
        .map(|id| {
            let (summary, params, sid_constant) = match *id {
                "indicator" => (
                    "m(x) = 1{x1 >= b}; arbitrary feature distribution",
                    "{p, b, m_eps}",
                    "1",
                ),
                "sparse-quadratic" => (
                    "sparse quadratic with same-sign interactions, uniform features",
                    "{p, beta0, linear: [f64], quad: [[l, j, coeff]], m_eps} (1-based l >= j)",
                    "86.4 s*",
                ),
                "smooth-additive" => (
                    "additive with smooth monotone coordinate functions",
                    "{p, components: [{kind: linear|exp, ...}], m_eps}",
                    "c s* (constant not stated)",
                ),
                "additive-oracle" => (
                    "additive with linear coordinate functions",
                    "{p, slopes: [f64], m_eps}",
                    "c s* (constant not stated)",
                ),
                "binary-linear" => (
                    "m(x) = beta * #{j <= s*: x_j = 1}; Bernoulli(1/2) features",
                    "{p, s_star, beta, m_eps}",
                    "s*",
                ),
                "logistic" => (
                    "logistic link of a sparse linear index",
                    "{p, betas: [f64], m_eps}",
                    "4 (s* max|b|/min|b|)^2 exp(2 sum|b|)",
                ),
                "poly-interaction" => (
                    "same-sign polynomial interactions plus a linear part",
                    "{p, linear: [f64], terms: [{coeff, powers: [[var, exp]]}], m_eps} (1-based var)",
                    "4 s*^2 ((max r sum|b_kk| + max|b_j|)/min|b_j|)^2",
                ),
                "piecewise-linear" => (
                    "additive continuous piecewise-linear coordinate functions",
                    "{p, components: [{kind: piecewise-linear, breaks, values}], m_eps}",
                    "s* 1024 R^5 / ((b*)^3 r^5)",
                ),
                "indicator-grid" => (
                    "linear combination of indicators of grid cells",
                    "{p, axes: [[cuts]], coeffs: [f64], iota, m_eps}",
                    "s*/(c'(1-c')) (2 M0/iota)^2",
                ),
                "product-centered" => (
                    "(x1 - 1/2)(x2 - 1/2): violates SID",
                    "{p, m_eps}",
                    "none (SID violated)",
                ),
                _ => unreachable!(),
            };
            let default_alpha1 = default_model(id)
                .ok()
                .and_then(|m| m.claimed_alpha1());
            ModelDescription {
                id,
                summary,
                params,
                sid_constant,
                default_alpha1,
            }
        })
        .collect()
}

fn unknown_model(id: &str) -> Error {
    Error::UnknownModel {
        id: id.to_string(),
        known: MODEL_IDS.join(", "),
    }
}

/// A canonical desk-scale instance of each registry kind.
pub fn default_model(id: &str) -> Result<RegressionModel> {
    from_spec(id, &serde_json::Value::Object(Default::default()))
}

mod params {
    use serde::Deserialize;

    fn default_p2() -> usize {
        2
    }
    fn default_p3() -> usize {
        3
    }
    fn default_p10() -> usize {
        10
    }
    fn default_half() -> f64 {
        0.5
    }
    fn default_one() -> f64 {
        1.0
    }
    fn default_s3() -> usize {
        3
    }

    #[derive(Deserialize)]
    #[serde(deny_unknown_fields, default)]
    pub struct Indicator {
        pub p: usize,
        pub b: f64,
        pub m_eps: f64,
    }
    impl Default for Indicator {
        fn default() -> Self {
            Indicator {
                p: default_p2(),
                b: default_half(),
                m_eps: 0.0,
            }
        }
    }

    #[derive(Deserialize)]
    #[serde(deny_unknown_fields, default)]
    pub struct SparseQuadratic {
        pub p: usize,
        pub beta0: f64,
        pub linear: Vec<f64>,
        /// 1-based `[l, j, coeff]` with `l >= j`.
        pub quad: Vec<(usize, usize, f64)>,
        pub m_eps: f64,
    }
    impl Default for SparseQuadratic {
        fn default() -> Self {
            SparseQuadratic {
                p: 4,
                beta0: 0.0,
                linear: vec![1.0, 1.0],
                quad: vec![(1, 1, 1.0), (2, 1, 1.0)],
                m_eps: 0.0,
            }
        }
    }

    #[derive(Deserialize)]
    #[serde(deny_unknown_fields, default)]
    pub struct SmoothAdditive {
        pub p: usize,
        pub components: Vec<super::Component>,
        pub m_eps: f64,
    }
    impl Default for SmoothAdditive {
        fn default() -> Self {
            SmoothAdditive {
                p: default_p3(),
                components: vec![
                    super::Component::Exp {
                        rate: 1.0,
                        scale: 1.0,
                    },
                    super::Component::Linear { slope: 1.0 },
                ],
                m_eps: 0.0,
            }
        }
    }

    #[derive(Deserialize)]
    #[serde(deny_unknown_fields, default)]
    pub struct AdditiveOracle {
        pub p: usize,
        pub slopes: Vec<f64>,
        pub m_eps: f64,
    }
    impl Default for AdditiveOracle {
        fn default() -> Self {
            AdditiveOracle {
                p: default_p3(),
                slopes: vec![1.0, 1.0],
                m_eps: 0.0,
            }
        }
    }

    #[derive(Deserialize)]
    #[serde(deny_unknown_fields, default)]
    pub struct BinaryLinear {
        pub p: usize,
        pub s_star: usize,
        pub beta: f64,
        pub m_eps: f64,
    }
    impl Default for BinaryLinear {
        fn default() -> Self {
            BinaryLinear {
                p: default_p10(),
                s_star: default_s3(),
                beta: default_one(),
                m_eps: 0.0,
            }
        }
    }

    #[derive(Deserialize)]
    #[serde(deny_unknown_fields, default)]
    pub struct Logistic {
        pub p: usize,
        pub betas: Vec<f64>,
        pub m_eps: f64,
    }
    impl Default for Logistic {
        fn default() -> Self {
            Logistic {
                p: default_p3(),
                betas: vec![1.0],
                m_eps: 0.0,
            }
        }
    }

    #[derive(Deserialize)]
    #[serde(deny_unknown_fields)]
    pub struct PolyTerm {
        pub coeff: f64,
        /// 1-based `[var, exp]` pairs.
        pub powers: Vec<(usize, u32)>,
    }

    #[derive(Deserialize)]
    #[serde(deny_unknown_fields, default)]
    pub struct PolyInteraction {
        pub p: usize,
        pub linear: Vec<f64>,
        pub terms: Vec<PolyTerm>,
        pub m_eps: f64,
    }
    impl Default for PolyInteraction {
        fn default() -> Self {
            PolyInteraction {
                p: default_p3(),
                linear: vec![1.0, 1.0],
                terms: vec![PolyTerm {
                    coeff: 1.0,
                    powers: vec![(1, 2), (2, 1)],
                }],
                m_eps: 0.0,
            }
        }
    }

    #[derive(Deserialize)]
    #[serde(deny_unknown_fields, default)]
    pub struct PiecewiseLinear {
        pub p: usize,
        pub components: Vec<super::Component>,
        pub m_eps: f64,
    }
    impl Default for PiecewiseLinear {
        fn default() -> Self {
            PiecewiseLinear {
                p: default_p3(),
                components: vec![
                    super::Component::PiecewiseLinear {
                        breaks: vec![0.0, 0.5, 1.0],
                        values: vec![0.0, 1.0, 0.5],
                    },
                    super::Component::PiecewiseLinear {
                        breaks: vec![0.0, 0.25, 1.0],
                        values: vec![0.5, 0.0, 0.75],
                    },
                ],
                m_eps: 0.0,
            }
        }
    }

    #[derive(Deserialize)]
    #[serde(deny_unknown_fields, default)]
    pub struct IndicatorGrid {
        pub p: usize,
        pub axes: Vec<Vec<f64>>,
        pub coeffs: Vec<f64>,
        pub iota: f64,
        pub m_eps: f64,
    }
    impl Default for IndicatorGrid {
        fn default() -> Self {
            IndicatorGrid {
                p: default_p2(),
                axes: vec![vec![0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0]],
                coeffs: vec![0.0, 1.0, 2.0],
                iota: 1.0,
                m_eps: 0.0,
            }
        }
    }

    #[derive(Deserialize)]
    #[serde(deny_unknown_fields, default)]
    pub struct ProductCentered {
        pub p: usize,
        pub m_eps: f64,
    }
    impl Default for ProductCentered {
        fn default() -> Self {
            ProductCentered {
                p: default_p2(),
                m_eps: 0.0,
            }
        }
    }
}

/// Builds a registered model from its string id and JSON parameters;
/// missing parameters take the documented defaults, unknown fields are
/// rejected.
pub fn from_spec(id: &str, raw: &serde_json::Value) -> Result<RegressionModel> {
    let parse_err = |e: serde_json::Error| Error::InvalidParameter {
        field: format!("model.params ({id})"),
        message: e.to_string(),
    };
    match id {
        "indicator" => {
            let p: params::Indicator = serde_json::from_value(raw.clone()).map_err(parse_err)?;
            indicator(p.p, p.b, p.m_eps)
        }
        "sparse-quadratic" => {
            let p: params::SparseQuadratic =
                serde_json::from_value(raw.clone()).map_err(parse_err)?;
            let quad = p
                .quad
                .iter()
                .map(|&(l, j, c)| {
                    if l == 0 || j == 0 {
                        Err(Error::InvalidParameter {
                            field: "quad".into(),
                            message: "indices are 1-based".into(),
                        })
                    } else {
                        Ok((l - 1, j - 1, c))
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            sparse_quadratic(p.p, p.beta0, p.linear, quad, p.m_eps)
        }
        "smooth-additive" => {
            let p: params::SmoothAdditive =
                serde_json::from_value(raw.clone()).map_err(parse_err)?;
            smooth_additive(p.p, p.components, p.m_eps)
        }
        "additive-oracle" => {
            let p: params::AdditiveOracle =
                serde_json::from_value(raw.clone()).map_err(parse_err)?;
            additive_oracle(p.p, p.slopes, p.m_eps)
        }
        "binary-linear" => {
            let p: params::BinaryLinear =
                serde_json::from_value(raw.clone()).map_err(parse_err)?;
            binary_linear(p.p, p.s_star, p.beta, p.m_eps)
        }
        "logistic" => {
            let p: params::Logistic = serde_json::from_value(raw.clone()).map_err(parse_err)?;
            logistic(p.p, p.betas, p.m_eps)
        }
        "poly-interaction" => {
            let p: params::PolyInteraction =
                serde_json::from_value(raw.clone()).map_err(parse_err)?;
            let terms = p
                .terms
                .iter()
                .map(|t| {
                    let powers = t
                        .powers
                        .iter()
                        .map(|&(v, e)| {
                            if v == 0 {
                                Err(Error::InvalidParameter {
                                    field: "terms.powers".into(),
                                    message: "coordinates are 1-based".into(),
                                })
                            } else {
                                Ok((v - 1, e))
                            }
                        })
                        .collect::<Result<Vec<_>>>()?;
                    Ok((t.coeff, powers))
                })
                .collect::<Result<Vec<_>>>()?;
            poly_interaction(p.p, p.linear, terms, p.m_eps)
        }
        "piecewise-linear" => {
            let p: params::PiecewiseLinear =
                serde_json::from_value(raw.clone()).map_err(parse_err)?;
            piecewise_linear_additive(p.p, p.components, p.m_eps)
        }
        "indicator-grid" => {
            let p: params::IndicatorGrid =
                serde_json::from_value(raw.clone()).map_err(parse_err)?;
            indicator_grid(p.p, p.axes, p.coeffs, p.iota, p.m_eps)
        }
        "product-centered" => {
            let p: params::ProductCentered =
                serde_json::from_value(raw.clone()).map_err(parse_err)?;
            product_centered(p.p, p.m_eps)
        }
        other => Err(unknown_model(other)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indicator_eval_matches_definition() {
        let m = indicator(2, 0.5, 0.0).unwrap();
        assert_eq!(m.eval(&[0.7, 0.1]).unwrap(), 1.0);
        assert_eq!(m.eval(&[0.49, 0.1]).unwrap(), 0.0);
        assert!(m.eval(&[1.5, 0.1]).is_err());
    }

    #[test]
    fn binary_linear_counts_active_ones() {
        let m = binary_linear(5, 3, 2.0, 0.0).unwrap();
        assert_eq!(m.eval(&[1.0, 1.0, 0.0, 1.0, 1.0]).unwrap(), 4.0);
        assert_eq!(m.m0(), 6.0);
        assert_eq!(m.claimed_alpha1(), Some(3.0));
    }

    #[test]
    fn logistic_at_origin_is_half() {
        let m = logistic(2, vec![1.0], 0.0).unwrap();
        assert_eq!(m.eval(&[0.0, 0.3]).unwrap(), 0.5);
    }

    #[test]
    fn quadratic_sign_restriction_enforced() {
        // Interaction present with conflicting signs around coordinate 1.
        let err = sparse_quadratic(3, 0.0, vec![1.0, -1.0], vec![(1, 0, 1.0)], 0.0);
        assert!(err.is_err());
        // No interactions: arbitrary signs allowed.
        assert!(sparse_quadratic(3, 0.0, vec![1.0, -1.0], vec![], 0.0).is_ok());
    }

    #[test]
    fn poly_eval_and_square() {
        let poly = SparsePoly::new(vec![
            Monomial { coeff: 1.0, powers: vec![(0, 1)] },
            Monomial { coeff: 2.0, powers: vec![(1, 1), (0, 1)] },
        ]);
        let x = [0.5, 0.25];
        assert!((poly.eval(&x) - (0.5 + 2.0 * 0.125)).abs() < 1e-15);
        let sq = poly.square();
        assert!((sq.eval(&x) - poly.eval(&x).powi(2)).abs() < 1e-15);
    }

    #[test]
    fn product_centered_is_the_counterexample() {
        let m = product_centered(2, 0.0).unwrap();
        assert_eq!(m.eval(&[0.5, 0.9]).unwrap(), 0.0);
        assert!((m.eval(&[1.0, 1.0]).unwrap() - 0.25).abs() < 1e-15);
        assert_eq!(m.claimed_alpha1(), None);
    }

    #[test]
    fn grid_model_validates_monotone_steps() {
        // 1-active-coordinate staircase on thirds: coefficients must move by
        // at least iota in one direction.
        let ok = indicator_grid(
            2,
            vec![vec![0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0]],
            vec![0.0, 1.0, 2.0],
            0.5,
            0.0,
        );
        assert!(ok.is_ok());
        let bad = indicator_grid(
            2,
            vec![vec![0.0, 0.5, 1.0]],
            vec![0.0, 0.2],
            0.5,
            0.0,
        );
        assert!(bad.is_err());
    }

    #[test]
    fn user_model_bound_spot_checked() {
        let u = UserModel {
            p: 2,
            f: Arc::new(|x: &[f64]| x[0] + x[1]),
            m0: 0.5, // deliberately too small
            active: vec![0, 1],
            density: None,
            moments: None,
        };
        assert!(user_model(u, 0.0).is_err());
    }

    #[test]
    fn registry_census_and_round_trip() {
        let listing = describe_models();
        assert!(listing.len() >= 9);
        for entry in &listing {
            let model = default_model(entry.id).unwrap();
            assert_eq!(model.id(), entry.id);
        }
        assert!(matches!(
            from_spec("no-such-model", &serde_json::json!({})),
            Err(Error::UnknownModel { .. })
        ));
        // Unknown fields rejected; explicit params honored.
        assert!(from_spec("indicator", &serde_json::json!({"nope": 1})).is_err());
        let m = from_spec("indicator", &serde_json::json!({"p": 5, "b": 0.3})).unwrap();
        assert_eq!(m.p(), 5);
    }

    #[test]
    fn registered_models_respect_their_bound_on_quasi_random_points() {
        for entry in describe_models() {
            let model = default_model(entry.id).unwrap();
            let p = model.p();
            let m0 = model.m0();
            let binary = matches!(
                model.distribution(),
                crate::model::FeatureDistribution::BernoulliHalf
            );
            let mut point = vec![0.0; p];
            for i in 0..20_000u64 {
                for (j, x) in point.iter_mut().enumerate() {
                    let u = halton(i + 1, HALTON_BASES[j % HALTON_BASES.len()]);
                    *x = if binary { (u * 2.0).floor().min(1.0) } else { u };
                }
                let v = model.eval_unchecked(&point).abs();
                assert!(v <= m0 * (1.0 + 1e-12), "{}: |m|={v} > M0={m0}", entry.id);
            }
        }
    }
}
