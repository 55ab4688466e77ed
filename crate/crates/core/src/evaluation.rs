//! Monte-Carlo bias/variance decomposition, bound checks for the binary
//! model and theoretical trees, the relevance experiment, and convergence
//! sweeps.
//!
//! Every bound assertion uses "bound + 3 Monte-Carlo standard errors" as
//! its tolerance: the bounds are population statements and the Monte-Carlo
//! noise must not flip a test. Standard errors combine the test-point and
//! tree-draw clusterings in quadrature.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{generate_sample, Dataset};
use crate::error::{Error, Result};
use crate::forest::{
    draw_theta_schedule, draw_theta_schedule_excluding, grow_theoretical_tree, ForestConfig,
    PopulationLeafStats, SplitterKind, TrainedForest,
};
use crate::geometry::{Cell, Split};
use crate::model::{binary_linear, FeatureDistribution, ModelKind, RegressionModel};
use crate::population::{
    conditional_variance, impurity_decrease_ii, relevance_iota, SearchConfig,
};
use crate::rng::{derive_seed, stream};

/// Exponent slack in the binary variance envelope `(log n)^{2+ε'}`.
pub const PROP2_EPSILON_PRIME: f64 = 0.01;

// ---------------------------------------------------------------------------
// Small statistics helpers
// ---------------------------------------------------------------------------

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Mean and its standard error over independent draws.
fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let m = mean(values);
    if values.len() < 2 {
        return (m, 0.0);
    }
    let var = values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

/// Draws fresh test points from the model's feature distribution.
pub fn sample_test_points(model: &RegressionModel, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let p = model.p();
    let dist = model.distribution();
    let mut rng = stream(seed, "test-points", &[n as u64]);
    (0..n)
        .map(|_| {
            (0..p)
                .map(|j| match &dist {
                    FeatureDistribution::Uniform => rng.random::<f64>(),
                    FeatureDistribution::BernoulliHalf => {
                        if rng.random::<bool>() {
                            1.0
                        } else {
                            0.0
                        }
                    }
                    FeatureDistribution::Product(ds) => ds[j].quantile(rng.random::<f64>()),
                })
                .collect()
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Bias/variance decomposition
// ---------------------------------------------------------------------------

/// Monte-Carlo estimates of squared bias, estimation variance, and total
/// L² loss, with standard errors and bound comparisons where the model
/// admits closed-form bounds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BiasVarianceReport {
    pub model_id: String,
    pub n: usize,
    pub p: usize,
    pub config: ForestConfig,
    pub n_test: usize,
    /// `Ê (m − m*_T̂)²`: population means on the sample-grown structure.
    pub sq_bias: f64,
    pub sq_bias_se: f64,
    /// `Ê (m*_T̂ − m̂_T̂)²`.
    pub est_var: f64,
    pub est_var_se: f64,
    /// `Ê (m − forest)²` with the forest aggregated over all trees.
    pub total_loss: f64,
    pub total_loss_se: f64,
    pub bound_bias: Option<f64>,
    pub bound_var: Option<f64>,
    pub pass_bias: Option<bool>,
    pub pass_var: Option<bool>,
}

impl BiasVarianceReport {
    /// Both bound comparisons hold (vacuously true without bounds).
    pub fn passes(&self) -> bool {
        self.pass_bias.unwrap_or(true) && self.pass_var.unwrap_or(true)
    }
}

/// The binary-model squared-bias bound for the report column: the general
/// `2(1−γ₀/s*)^k Var(m)` envelope, sharpened to `max{(s*−k)β²/2, 0}` when
/// `γ₀ = 1`.
pub fn binary_bias_bound(s_star: usize, beta: f64, gamma0: f64, k: usize) -> f64 {
    let var = s_star as f64 * beta * beta / 4.0;
    let general = 2.0 * (1.0 - gamma0 / s_star as f64).powi(k as i32) * var;
    if gamma0 == 1.0 {
        let sharp = ((s_star as f64 - k as f64) * beta * beta / 2.0).max(0.0);
        general.min(sharp)
    } else {
        general
    }
}

/// The binary-model estimation-variance envelope
/// `2(3M₀+2M_ε)²·2^k (log max(n,p))^{2+ε'} / n` with natural log.
pub fn binary_variance_bound(m0: f64, m_eps: f64, n: usize, p: usize, k: usize) -> f64 {
    let log_term = (n.max(p) as f64).ln().powf(2.0 + PROP2_EPSILON_PRIME);
    2.0 * (3.0 * m0 + 2.0 * m_eps).powi(2) * (1u64 << k) as f64 * log_term / n as f64
}

/// Decomposes the forest loss at `n_test` fresh test points drawn from the
/// model's feature distribution.
///
/// For each of the forest's trees (every subsample × schedule pair) the
/// squared bias compares `m` against the population means on the
/// sample-grown structure, and the estimation variance compares those
/// population means against the subsample leaf means. The total loss uses
/// the aggregated forest prediction.
pub fn bias_variance_decompose(
    model: &RegressionModel,
    data: &Dataset,
    config: &ForestConfig,
    n_test: usize,
) -> Result<BiasVarianceReport> {
    if n_test == 0 {
        return Err(Error::InvalidParameter {
            field: "n_test".into(),
            message: "need at least one test point".into(),
        });
    }
    if data.p() != model.p() {
        return Err(Error::DimensionMismatch {
            expected: model.p(),
            got: data.p(),
        });
    }
    let forest = TrainedForest::train(config, data)?;
    let points = sample_test_points(model, n_test, derive_seed(config.seed, "decompose", &[]));
    decompose_with(model, &forest, &points)
}

fn decompose_with(
    model: &RegressionModel,
    forest: &TrainedForest,
    points: &[Vec<f64>],
) -> Result<BiasVarianceReport> {
    let n_test = points.len();
    let t_count = forest.tree_count();
    let b = forest.config.n_subsamples;
    let m_draws = forest.config.theta_draws;

    let pop_stats: Vec<PopulationLeafStats> = forest
        .trees
        .par_iter()
        .map(|tree| PopulationLeafStats::build(tree, model))
        .collect();

    // pm[t][i], sm[t][i]: population and sample tree estimates.
    let estimates: Vec<(Vec<f64>, Vec<f64>)> = (0..t_count)
        .into_par_iter()
        .map(|t| {
            let tree = &forest.trees[t];
            let (a, m) = (t / m_draws, t % m_draws);
            let mut pm = Vec::with_capacity(n_test);
            let mut sm = Vec::with_capacity(n_test);
            for x in points {
                let leaf = tree.leaf_index(x);
                pm.push(pop_stats[t].mean(leaf));
                sm.push(forest.tree_prediction(a, m, x));
            }
            (pm, sm)
        })
        .collect();

    let truth: Vec<f64> = points.iter().map(|x| model.eval_unchecked(x)).collect();

    let mut bias_pp = vec![0.0; n_test];
    let mut var_pp = vec![0.0; n_test];
    let mut total_pp = vec![0.0; n_test];
    let mut bias_pt = vec![0.0; t_count];
    let mut var_pt = vec![0.0; t_count];
    for i in 0..n_test {
        let mut forest_pred = 0.0;
        for a in 0..b {
            let mut inner = 0.0;
            for m in 0..m_draws {
                let t = a * m_draws + m;
                let (pm, sm) = (estimates[t].0[i], estimates[t].1[i]);
                let bias_term = (truth[i] - pm).powi(2);
                let var_term = (pm - sm).powi(2);
                bias_pp[i] += bias_term;
                var_pp[i] += var_term;
                bias_pt[t] += bias_term;
                var_pt[t] += var_term;
                inner += sm;
            }
            forest_pred += inner / m_draws as f64;
        }
        forest_pred /= b as f64;
        bias_pp[i] /= t_count as f64;
        var_pp[i] /= t_count as f64;
        total_pp[i] = (truth[i] - forest_pred).powi(2);
    }
    for t in 0..t_count {
        bias_pt[t] /= n_test as f64;
        var_pt[t] /= n_test as f64;
    }

    let (sq_bias, se_bias_pts) = mean_se(&bias_pp);
    let (_, se_bias_trees) = mean_se(&bias_pt);
    let (est_var, se_var_pts) = mean_se(&var_pp);
    let (_, se_var_trees) = mean_se(&var_pt);
    let (total_loss, total_loss_se) = mean_se(&total_pp);
    let sq_bias_se = (se_bias_pts.powi(2) + se_bias_trees.powi(2)).sqrt();
    let est_var_se = (se_var_pts.powi(2) + se_var_trees.powi(2)).sqrt();

    let (bound_bias, bound_var) = match &model.kind {
        ModelKind::BinaryLinear { s_star, beta, .. } => {
            let n = forest.subsamples[0].len().max(1);
            (
                Some(binary_bias_bound(
                    *s_star,
                    *beta,
                    forest.config.gamma0,
                    forest.config.k,
                )),
                Some(binary_variance_bound(
                    model.m0(),
                    model.m_eps,
                    n,
                    model.p(),
                    forest.config.k,
                )),
            )
        }
        _ => (None, None),
    };
    let pass_bias = bound_bias.map(|bnd| sq_bias <= bnd + 3.0 * sq_bias_se);
    let pass_var = bound_var.map(|bnd| est_var <= bnd + 3.0 * est_var_se);

    Ok(BiasVarianceReport {
        model_id: model.id().to_string(),
        n: forest.subsamples.first().map_or(0, |s| s.len()),
        p: model.p(),
        config: forest.config,
        n_test,
        sq_bias,
        sq_bias_se,
        est_var,
        est_var_se,
        total_loss,
        total_loss_se,
        bound_bias,
        bound_var,
        pass_bias,
        pass_var,
    })
}

// ---------------------------------------------------------------------------
// Theoretical-tree bias envelope
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct Theorem3Row {
    pub k: usize,
    pub bias: f64,
    pub se: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Theorem3Table {
    pub gamma0: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub rows: Vec<Theorem3Row>,
    pub all_pass: bool,
}

/// Expectation of `(m − m*_T(Θ))²` over the given test points.
fn tree_population_bias(
    model: &RegressionModel,
    tree: &crate::forest::Tree,
    points: &[Vec<f64>],
) -> f64 {
    let stats = PopulationLeafStats::build(tree, model);
    let mut acc = 0.0;
    for x in points {
        let leaf = tree.leaf_index(x);
        acc += (model.eval_unchecked(x) - stats.mean(leaf)).powi(2);
    }
    acc / points.len() as f64
}

/// All points of `{0,1}^p` for the exact Bernoulli expectation.
fn binary_cube(p: usize) -> Vec<Vec<f64>> {
    (0..(1usize << p))
        .map(|mask| (0..p).map(|j| f64::from((mask >> j) & 1 == 1)).collect())
        .collect()
}

/// Checks the theoretical-tree bias envelope
/// `E(m − m*_T(Θ))² ≤ (1 − γ₀(α₁α₂)⁻¹)^k Var(m) + 3 SE`
/// for `k = 1..=k_max`, averaging over `m_draws` schedule draws. Trees are
/// grown by the theoretical CART rule (the `ε = 0`, `α₂ = 1` regime); over
/// Bernoulli features with small `p` the `X`-expectation is exact.
#[allow(clippy::too_many_arguments)]
pub fn check_theorem3_bound(
    model: &RegressionModel,
    alpha1: f64,
    alpha2: f64,
    gamma0: f64,
    k_max: usize,
    m_draws: usize,
    n_test: usize,
    seed: u64,
    search: &SearchConfig,
) -> Result<Theorem3Table> {
    let p = model.p();
    let var = conditional_variance(model, &Cell::root(p));
    let exact = matches!(model.distribution(), FeatureDistribution::BernoulliHalf) && p <= 12;
    let mut rows = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let biases: Vec<f64> = (0..m_draws)
            .into_par_iter()
            .map(|m| -> Result<f64> {
                let schedule_seed = derive_seed(seed, "thm3-schedule", &[k as u64, m as u64]);
                let schedule = draw_theta_schedule(p, gamma0, k, schedule_seed)?;
                let tree = grow_theoretical_tree(model, &schedule, search, schedule_seed)?;
                let points = if exact {
                    binary_cube(p)
                } else {
                    sample_test_points(
                        model,
                        n_test,
                        derive_seed(seed, "thm3-points", &[k as u64, m as u64]),
                    )
                };
                Ok(tree_population_bias(model, &tree, &points))
            })
            .collect::<Result<Vec<f64>>>()?;
        let (bias, se) = mean_se(&biases);
        let bound = (1.0 - gamma0 / (alpha1 * alpha2)).powi(k as i32) * var;
        rows.push(Theorem3Row {
            k,
            bias,
            se,
            bound,
            pass: bias <= bound + 3.0 * se,
        });
    }
    let all_pass = rows.iter().all(|r| r.pass);
    Ok(Theorem3Table {
        gamma0,
        alpha1,
        alpha2,
        rows,
        all_pass,
    })
}

// ---------------------------------------------------------------------------
// Binary-model bound table
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Prop2Config {
    pub s_star: usize,
    pub beta: f64,
    pub p: usize,
    pub gamma0: f64,
    pub n: usize,
    pub k_grid: Vec<usize>,
    pub m_eps: f64,
    pub theta_draws: usize,
    pub n_test: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Prop2Table {
    pub config: Prop2Config,
    /// Root identities `Var(m) = s*β²/4` and `sup_j (II) = β²/4` verified
    /// to machine precision before any Monte-Carlo assertion runs.
    pub identities_ok: bool,
    pub reports: Vec<BiasVarianceReport>,
    pub all_pass: bool,
}

/// Verifies the binary-model exact root identities to relative error 1e-12.
pub fn binary_root_identities(s_star: usize, beta: f64, p: usize) -> Result<bool> {
    let model = binary_linear(p, s_star, beta, 0.0)?;
    let root = Cell::root(p);
    let var = conditional_variance(&model, &root);
    let expect_var = s_star as f64 * beta * beta / 4.0;
    let mut sup_ii: f64 = 0.0;
    for j in 0..p {
        let rep = impurity_decrease_ii(&model, &root, &Split::new(j, 1.0))?;
        sup_ii = sup_ii.max(rep.decrease_ii);
    }
    let expect_ii = beta * beta / 4.0;
    let rel = |a: f64, b: f64| (a - b).abs() <= 1e-12 * b.abs().max(1e-300);
    Ok(rel(var, expect_var) && rel(sup_ii, expect_ii))
}

/// Runs the bias/variance decomposition for the binary model over a tree
/// height grid and checks both closed-form envelopes per height.
pub fn check_prop2_bounds(cfg: &Prop2Config) -> Result<Prop2Table> {
    let model = binary_linear(cfg.p, cfg.s_star, cfg.beta, cfg.m_eps)?;
    let identities_ok = binary_root_identities(cfg.s_star, cfg.beta, cfg.p)?;
    let data = generate_sample(&model, cfg.n, derive_seed(cfg.seed, "prop2-data", &[]))?;
    let mut reports = Vec::with_capacity(cfg.k_grid.len());
    for &k in &cfg.k_grid {
        let fc = ForestConfig {
            k,
            gamma0: cfg.gamma0,
            b: 1.0,
            n_subsamples: 1,
            theta_draws: cfg.theta_draws,
            seed: derive_seed(cfg.seed, "prop2-k", &[k as u64]),
            splitter: SplitterKind::BinaryCart,
        };
        reports.push(bias_variance_decompose(&model, &data, &fc, cfg.n_test)?);
    }
    let all_pass = identities_ok && reports.iter().all(BiasVarianceReport::passes);
    Ok(Prop2Table {
        config: cfg.clone(),
        identities_ok,
        reports,
        all_pass,
    })
}

// ---------------------------------------------------------------------------
// Relevance experiment
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct RelevanceReport {
    /// Dropped feature, 0-based.
    pub feature: usize,
    pub iota: f64,
    pub iota_se: f64,
    pub loss_without: f64,
    pub loss_se: f64,
    /// `loss >= ι − 3·SE` (vacuous when the feature is irrelevant).
    pub pass: bool,
}

/// Trains the forest with feature `j` removed from every schedule draw and
/// checks the lower bound `E(m − forest)² >= ι`.
pub fn check_theorem2_relevance(
    model: &RegressionModel,
    j: usize,
    data: &Dataset,
    config: &ForestConfig,
    n_test: usize,
    iota_budget: usize,
) -> Result<RelevanceReport> {
    let p = model.p();
    let iota = relevance_iota(model, j, iota_budget, derive_seed(config.seed, "iota", &[]))?;
    let forest = TrainedForest::train_with_schedules(config, data, |seed| {
        draw_theta_schedule_excluding(p, config.gamma0, config.k, j, seed)
    })?;
    let points = sample_test_points(model, n_test, derive_seed(config.seed, "relevance-pts", &[]));
    let losses: Vec<f64> = points
        .par_iter()
        .map(|x| (model.eval_unchecked(x) - forest.predict(x)).powi(2))
        .collect();
    let (loss_without, loss_se) = mean_se(&losses);
    let combined_se = (loss_se.powi(2) + iota.se.powi(2)).sqrt();
    let pass = if iota.value > 0.0 {
        loss_without >= iota.value - 3.0 * combined_se
    } else {
        true
    };
    Ok(RelevanceReport {
        feature: j,
        iota: iota.value,
        iota_se: iota.se,
        loss_without,
        loss_se,
        pass,
    })
}

// ---------------------------------------------------------------------------
// Convergence sweep
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepConfig {
    pub ns: Vec<usize>,
    pub gamma0s: Vec<f64>,
    /// Tree height `k = ⌊c_height · log₂ n⌋` per grid point.
    pub c_height: f64,
    pub b: f64,
    pub n_subsamples: usize,
    pub theta_draws: usize,
    pub n_test: usize,
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            ns: vec![256, 512, 1024],
            gamma0s: vec![1.0],
            c_height: 1.0 / 8.0,
            b: 1.0,
            n_subsamples: 1,
            theta_draws: 20,
            n_test: 400,
            seed: 1,
        }
    }
}

/// One sweep grid point; `status` records per-row failures without
/// aborting the sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub model_id: String,
    pub n: usize,
    pub p: usize,
    pub k: usize,
    pub gamma0: f64,
    pub b: f64,
    pub n_subsamples: usize,
    pub theta_draws: usize,
    pub report: Option<BiasVarianceReport>,
    pub status: String,
}

/// Descriptive log-log slope of total loss against sample size.
#[derive(Debug, Clone, Serialize)]
pub struct SlopeFit {
    pub model_id: String,
    pub gamma0: f64,
    pub slope: f64,
    pub intercept: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub slopes: Vec<SlopeFit>,
}

/// Tree height at sample size `n`: `⌊c_height · log₂ n⌋`, at least 1.
pub fn sweep_height(c_height: f64, n: usize) -> usize {
    ((c_height * (n as f64).log2()).floor() as usize).max(1)
}

/// Runs the decomposition over the `(model, n, γ₀)` grid; failures are
/// recorded per row and the sweep continues. Slopes of `log₂ loss` against
/// `log₂ n` are reported per `(model, γ₀)` series, descriptively.
pub fn run_convergence_sweep(
    models: &[RegressionModel],
    cfg: &SweepConfig,
) -> Result<SweepResult> {
    if models.is_empty() || cfg.ns.is_empty() || cfg.gamma0s.is_empty() {
        return Err(Error::EmptySweep);
    }
    let mut rows = Vec::new();
    for model in models {
        let splitter = match model.distribution() {
            FeatureDistribution::BernoulliHalf => SplitterKind::BinaryCart,
            _ => SplitterKind::Cart,
        };
        for &gamma0 in &cfg.gamma0s {
            for &n in &cfg.ns {
                let k = sweep_height(cfg.c_height, n);
                let fc = ForestConfig {
                    k,
                    gamma0,
                    b: cfg.b,
                    n_subsamples: cfg.n_subsamples,
                    theta_draws: cfg.theta_draws,
                    seed: derive_seed(cfg.seed, "sweep", &[n as u64, k as u64]),
                    splitter,
                };
                let outcome =
                    generate_sample(model, n, derive_seed(cfg.seed, "sweep-data", &[n as u64]))
                        .and_then(|data| bias_variance_decompose(model, &data, &fc, cfg.n_test));
                let (report, status) = match outcome {
                    Ok(r) => (Some(r), "ok".to_string()),
                    Err(e) => (None, format!("error: {e}")),
                };
                rows.push(SweepRow {
                    model_id: model.id().to_string(),
                    n,
                    p: model.p(),
                    k,
                    gamma0,
                    b: cfg.b,
                    n_subsamples: cfg.n_subsamples,
                    theta_draws: cfg.theta_draws,
                    report,
                    status,
                });
            }
        }
    }
    // Descriptive least-squares slope per (model, gamma0) series.
    let mut slopes = Vec::new();
    for model in models {
        for &gamma0 in &cfg.gamma0s {
            let pts: Vec<(f64, f64)> = rows
                .iter()
                .filter(|r| r.model_id == model.id() && r.gamma0 == gamma0)
                .filter_map(|r| {
                    r.report
                        .as_ref()
                        .filter(|rep| rep.total_loss > 0.0)
                        .map(|rep| ((r.n as f64).log2(), rep.total_loss.log2()))
                })
                .collect();
            if pts.len() >= 2 {
                let (slope, intercept) = least_squares(&pts);
                slopes.push(SlopeFit {
                    model_id: model.id().to_string(),
                    gamma0,
                    slope,
                    intercept,
                });
            }
        }
    }
    Ok(SweepResult { rows, slopes })
}

fn least_squares(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    (slope, (sy - slope * sx) / n)
}

// ---------------------------------------------------------------------------
// Report files
// ---------------------------------------------------------------------------

/// Fixed CSV column set shared by all decomposition reports.
pub const REPORT_COLUMNS: [&str; 19] = [
    "model_id",
    "n",
    "p",
    "k",
    "gamma0",
    "b",
    "B",
    "M",
    "sq_bias",
    "sq_bias_se",
    "est_var",
    "est_var_se",
    "total_loss",
    "total_loss_se",
    "bound_bias",
    "bound_var",
    "pass_bias",
    "pass_var",
    "status",
];

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

fn fmt_opt_bool(v: Option<bool>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Renders decomposition rows into the fixed CSV column set.
pub fn reports_to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::new();
    out.push_str(&REPORT_COLUMNS.join(","));
    out.push('\n');
    for row in rows {
        let fields: [String; 10] = match &row.report {
            Some(r) => [
                format!("{}", r.sq_bias),
                format!("{}", r.sq_bias_se),
                format!("{}", r.est_var),
                format!("{}", r.est_var_se),
                format!("{}", r.total_loss),
                format!("{}", r.total_loss_se),
                fmt_opt(r.bound_bias),
                fmt_opt(r.bound_var),
                fmt_opt_bool(r.pass_bias),
                fmt_opt_bool(r.pass_var),
            ],
            None => Default::default(),
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            row.model_id,
            row.n,
            row.p,
            row.k,
            row.gamma0,
            row.b,
            format!("{},{}", row.n_subsamples, row.theta_draws),
            fields[..6].join(","),
            fields[6..].join(","),
            row.status
        ));
    }
    out
}

/// Wraps a single decomposition report as a one-row sweep for CSV output.
pub fn report_as_row(report: &BiasVarianceReport) -> SweepRow {
    SweepRow {
        model_id: report.model_id.clone(),
        n: report.n,
        p: report.p,
        k: report.config.k,
        gamma0: report.config.gamma0,
        b: report.config.b,
        n_subsamples: report.config.n_subsamples,
        theta_draws: report.config.theta_draws,
        report: Some(report.clone()),
        status: "ok".into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::indicator;

    #[test]
    fn constant_model_has_zero_bias_and_variance() {
        // 1{x1 >= 0} is identically 1; at this sample size every leaf is
        // populated, so both error components vanish exactly.
        let constant = indicator(2, 0.0, 0.0).unwrap();
        let data = generate_sample(&constant, 200, 3).unwrap();
        let fc = ForestConfig {
            k: 2,
            gamma0: 1.0,
            b: 1.0,
            n_subsamples: 1,
            theta_draws: 3,
            seed: 5,
            splitter: SplitterKind::Cart,
        };
        let rep = bias_variance_decompose(&constant, &data, &fc, 500).unwrap();
        assert_eq!(rep.sq_bias, 0.0);
        assert_eq!(rep.est_var, 0.0);
        assert_eq!(rep.total_loss, 0.0);
    }

    #[test]
    fn k_zero_bias_equals_model_variance() {
        // Height 0: m* is the root mean, so the squared bias equals Var(m).
        let model = binary_linear(4, 2, 1.0, 0.0).unwrap();
        let data = generate_sample(&model, 500, 7).unwrap();
        let fc = ForestConfig {
            k: 0,
            gamma0: 1.0,
            b: 1.0,
            n_subsamples: 1,
            theta_draws: 1,
            seed: 9,
            splitter: SplitterKind::BinaryCart,
        };
        let rep = bias_variance_decompose(&model, &data, &fc, 4000).unwrap();
        // Var(m) = s* β² / 4 = 0.5.
        assert!(
            (rep.sq_bias - 0.5).abs() <= 3.0 * rep.sq_bias_se,
            "bias {} se {}",
            rep.sq_bias,
            rep.sq_bias_se
        );
    }

    #[test]
    fn decomposition_coherence_inequality() {
        let model = binary_linear(6, 3, 1.0, 0.5).unwrap();
        let data = generate_sample(&model, 400, 11).unwrap();
        let fc = ForestConfig {
            k: 3,
            gamma0: 0.5,
            b: 0.632,
            n_subsamples: 4,
            theta_draws: 5,
            seed: 13,
            splitter: SplitterKind::BinaryCart,
        };
        let rep = bias_variance_decompose(&model, &data, &fc, 600).unwrap();
        let se = rep.sq_bias_se + rep.est_var_se + rep.total_loss_se;
        assert!(rep.total_loss <= 2.0 * (rep.sq_bias + rep.est_var) + 3.0 * se);
    }

    #[test]
    fn binary_identities_hold() {
        assert!(binary_root_identities(1, 1.0, 4).unwrap());
        assert!(binary_root_identities(3, 2.0, 6).unwrap());
    }

    #[test]
    fn sweep_single_point_matches_direct_call() {
        let model = binary_linear(3, 2, 1.0, 0.25).unwrap();
        let cfg = SweepConfig {
            ns: vec![200],
            gamma0s: vec![1.0],
            theta_draws: 4,
            n_test: 200,
            ..SweepConfig::default()
        };
        let sweep = run_convergence_sweep(std::slice::from_ref(&model), &cfg).unwrap();
        assert_eq!(sweep.rows.len(), 1);
        let row = &sweep.rows[0];
        assert_eq!(row.status, "ok");
        let k = sweep_height(cfg.c_height, 200);
        assert_eq!(row.k, k);
        // Re-run the same grid point directly.
        let data =
            generate_sample(&model, 200, derive_seed(cfg.seed, "sweep-data", &[200])).unwrap();
        let fc = ForestConfig {
            k,
            gamma0: 1.0,
            b: cfg.b,
            n_subsamples: cfg.n_subsamples,
            theta_draws: cfg.theta_draws,
            seed: derive_seed(cfg.seed, "sweep", &[200, k as u64]),
            splitter: SplitterKind::BinaryCart,
        };
        let direct = bias_variance_decompose(&model, &data, &fc, cfg.n_test).unwrap();
        let got = row.report.as_ref().unwrap();
        assert_eq!(got.sq_bias.to_bits(), direct.sq_bias.to_bits());
        assert_eq!(got.total_loss.to_bits(), direct.total_loss.to_bits());
    }

    #[test]
    fn empty_sweep_errors() {
        let cfg = SweepConfig {
            ns: vec![],
            ..SweepConfig::default()
        };
        assert!(matches!(
            run_convergence_sweep(&[], &cfg),
            Err(Error::EmptySweep)
        ));
    }
}
