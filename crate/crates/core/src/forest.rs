//! Feature-subset schedules, height-`k` tree growing under a pluggable
//! splitter, tree and forest prediction, the population tree estimate, and
//! the semi-sample trimming rule.
//!
//! A tree is a complete binary structure of height `k`. The node at level
//! `l` and index `s` (0-based) is split using the feature subset
//! `Θ_{l+1, s+1}` of its schedule; splits at every node keep the height
//! exactly `k` even when a cell runs out of samples (degenerate splits) or,
//! for binary features, out of coordinates (trivial splits with an empty
//! daughter).

use serde::{Deserialize, Serialize};

use crate::cart::{binary_cart_split, sample_cart_split, SplitDecision};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::geometry::{split_cell, Cell, Split};
use crate::model::RegressionModel;
use crate::population::{moments, theoretical_cart_split, SearchConfig};
use crate::rng::{derive_seed, stream};

pub const TREE_FORMAT_VERSION: u32 = 1;

// ---------------------------------------------------------------------------
// Θ-schedules
// ---------------------------------------------------------------------------

/// Per-level, per-node feature subsets of size `⌈γ₀ p⌉`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThetaSchedule {
    pub p: usize,
    pub k: usize,
    pub subset_size: usize,
    /// `levels[l][s]` is the sorted feature subset (0-based) for node
    /// `(l, s)`, `l ∈ 0..k`, `s ∈ 0..2^l`.
    pub levels: Vec<Vec<Vec<usize>>>,
}

impl ThetaSchedule {
    pub fn subset(&self, level: usize, node: usize) -> &[usize] {
        &self.levels[level][node]
    }

    /// Total number of subsets: `2^k - 1`.
    pub fn subset_count(&self) -> usize {
        (1usize << self.k) - 1
    }
}

pub fn subset_size(p: usize, gamma0: f64) -> Result<usize> {
    if !(gamma0 > 0.0 && gamma0 <= 1.0) {
        return Err(Error::InvalidParameter {
            field: "gamma0".into(),
            message: "need 0 < gamma0 <= 1".into(),
        });
    }
    let q = (gamma0 * p as f64).ceil() as usize;
    Ok(q.clamp(1, p))
}

/// Draws each `Θ_{l,s}` independently and uniformly over all
/// `⌈γ₀p⌉`-subsets of the feature set, excluding `excluded` if given.
fn draw_schedule_impl(
    p: usize,
    gamma0: f64,
    k: usize,
    seed: u64,
    excluded: Option<usize>,
) -> Result<ThetaSchedule> {
    let q = subset_size(p, gamma0)?;
    let pool: Vec<usize> = (0..p).filter(|&j| Some(j) != excluded).collect();
    if q > pool.len() {
        return Err(Error::InvalidParameter {
            field: "gamma0".into(),
            message: format!("subset size {q} exceeds available features {}", pool.len()),
        });
    }
    let mut rng = stream(seed, "theta", &[k as u64]);
    let mut levels = Vec::with_capacity(k);
    for l in 0..k {
        let mut row = Vec::with_capacity(1 << l);
        for _ in 0..(1usize << l) {
            let picked = rand::seq::index::sample(&mut rng, pool.len(), q);
            let mut subset: Vec<usize> = picked.iter().map(|i| pool[i]).collect();
            subset.sort_unstable();
            row.push(subset);
        }
        levels.push(row);
    }
    Ok(ThetaSchedule {
        p,
        k,
        subset_size: q,
        levels,
    })
}

/// Independent uniform `⌈γ₀p⌉`-subsets for every node; deterministic under
/// the seed.
pub fn draw_theta_schedule(p: usize, gamma0: f64, k: usize, seed: u64) -> Result<ThetaSchedule> {
    draw_schedule_impl(p, gamma0, k, seed, None)
}

/// Schedule draw with one feature removed from every subset (the relevance
/// experiment).
pub fn draw_theta_schedule_excluding(
    p: usize,
    gamma0: f64,
    k: usize,
    excluded: usize,
    seed: u64,
) -> Result<ThetaSchedule> {
    if excluded >= p {
        return Err(Error::FeatureOutOfRange {
            feature: excluded,
            dim: p,
        });
    }
    draw_schedule_impl(p, gamma0, k, seed, Some(excluded))
}

/// Exhaustive enumeration of all distinct schedules for tiny `(p, k)`:
/// every assignment of a `⌈γ₀p⌉`-subset to each of the `2^k - 1` nodes.
pub fn enumerate_theta_schedules(
    p: usize,
    gamma0: f64,
    k: usize,
    guard: usize,
) -> Result<Vec<ThetaSchedule>> {
    let q = subset_size(p, gamma0)?;
    let subsets = combinations(p, q);
    let nodes = (1usize << k) - 1;
    let total = (subsets.len() as u128).pow(nodes as u32);
    if total > guard as u128 {
        return Err(Error::EnumerationGuard {
            count: total,
            guard: guard as u128,
        });
    }
    let mut out = Vec::with_capacity(total as usize);
    let mut assignment = vec![0usize; nodes];
    loop {
        let mut levels = Vec::with_capacity(k);
        let mut flat = 0usize;
        for l in 0..k {
            let mut row = Vec::with_capacity(1 << l);
            for _ in 0..(1usize << l) {
                row.push(subsets[assignment[flat]].clone());
                flat += 1;
            }
            levels.push(row);
        }
        out.push(ThetaSchedule {
            p,
            k,
            subset_size: q,
            levels,
        });
        // Mixed-radix increment over assignments.
        let mut d = nodes;
        loop {
            if d == 0 {
                return Ok(out);
            }
            d -= 1;
            assignment[d] += 1;
            if assignment[d] < subsets.len() {
                break;
            }
            assignment[d] = 0;
            if d == 0 {
                return Ok(out);
            }
        }
    }
}

fn combinations(p: usize, q: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(q);
    fn rec(start: usize, p: usize, q: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == q {
            out.push(cur.clone());
            return;
        }
        for j in start..p {
            cur.push(j);
            rec(j + 1, p, q, cur, out);
            cur.pop();
        }
    }
    rec(0, p, q, &mut cur, &mut out);
    out
}

// ---------------------------------------------------------------------------
// Trees
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub cell: Cell,
    /// `Some` on internal nodes (levels `0..k`), `None` on leaves.
    pub split: Option<Split>,
}

/// Where a tree came from, for provenance and reproducibility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub splitter: String,
    pub subsample_id: u64,
    pub seed: u64,
}

/// A complete binary tree of height `k` storing structure only; leaf means
/// are recomputed from `(data, subsample)` at prediction time.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    k: usize,
    p: usize,
    schedule: ThetaSchedule,
    /// Heap order: node `(level l, index s)` lives at `2^l - 1 + s`.
    nodes: Vec<TreeNode>,
    pub provenance: Provenance,
}

impl Tree {
    pub fn height(&self) -> usize {
        self.k
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn schedule(&self) -> &ThetaSchedule {
        &self.schedule
    }

    #[inline]
    fn flat(level: usize, node: usize) -> usize {
        (1usize << level) - 1 + node
    }

    pub fn cell_at(&self, level: usize, node: usize) -> &Cell {
        &self.nodes[Self::flat(level, node)].cell
    }

    pub fn split_at(&self, level: usize, node: usize) -> Option<Split> {
        self.nodes[Self::flat(level, node)].split
    }

    pub fn leaf_count(&self) -> usize {
        1usize << self.k
    }

    pub fn leaf_cell(&self, leaf: usize) -> &Cell {
        self.cell_at(self.k, leaf)
    }

    /// Index of the unique leaf containing the point.
    pub fn leaf_index(&self, point: &[f64]) -> usize {
        let mut level = 0usize;
        let mut node = 0usize;
        while level < self.k {
            let split = self.nodes[Self::flat(level, node)]
                .split
                .expect("internal node has a split");
            node = 2 * node + usize::from(point[split.feature] >= split.threshold);
            level += 1;
        }
        node
    }
}

// ---------------------------------------------------------------------------
// Splitters
// ---------------------------------------------------------------------------

/// A node-splitting rule usable by the tree grower.
pub trait Splitter: Sync {
    fn name(&self) -> &'static str;
    fn choose(
        &self,
        data: &Dataset,
        subsample: &[usize],
        cell: &Cell,
        features: &[usize],
        seed: u64,
    ) -> Result<SplitDecision>;
}

/// The sample CART criterion.
pub struct CartSplitter;

impl Splitter for CartSplitter {
    fn name(&self) -> &'static str {
        "cart"
    }
    fn choose(
        &self,
        data: &Dataset,
        subsample: &[usize],
        cell: &Cell,
        features: &[usize],
        seed: u64,
    ) -> Result<SplitDecision> {
        sample_cart_split(data, subsample, cell, features, seed)
    }
}

/// The binary-feature CART restriction.
pub struct BinaryCartSplitter;

impl Splitter for BinaryCartSplitter {
    fn name(&self) -> &'static str {
        "binary-cart"
    }
    fn choose(
        &self,
        data: &Dataset,
        subsample: &[usize],
        cell: &Cell,
        features: &[usize],
        seed: u64,
    ) -> Result<SplitDecision> {
        binary_cart_split(data, subsample, cell, features, seed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitterKind {
    Cart,
    BinaryCart,
}

impl SplitterKind {
    pub fn instance(&self) -> &'static dyn Splitter {
        match self {
            SplitterKind::Cart => &CartSplitter,
            SplitterKind::BinaryCart => &BinaryCartSplitter,
        }
    }

    pub fn name(&self) -> &'static str {
        self.instance().name()
    }
}

// ---------------------------------------------------------------------------
// Growing
// ---------------------------------------------------------------------------

fn grow_with(
    p: usize,
    schedule: &ThetaSchedule,
    provenance: Provenance,
    mut choose: impl FnMut(usize, usize, &Cell, &[usize], u64) -> Result<Split>,
) -> Result<Tree> {
    let k = schedule.k;
    if schedule.p != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            got: schedule.p,
        });
    }
    let node_count = (1usize << (k + 1)) - 1;
    let mut nodes = vec![
        TreeNode {
            cell: Cell::root(p),
            split: None,
        };
        node_count
    ];
    let seed = provenance.seed;
    for level in 0..k {
        for s in 0..(1usize << level) {
            let flat = Tree::flat(level, s);
            let node_seed = derive_seed(seed, "node", &[level as u64, s as u64]);
            let features = schedule.subset(level, s);
            let split = choose(level, s, &nodes[flat].cell, features, node_seed)?;
            let (left, right) = split_cell(&nodes[flat].cell, &split)?;
            nodes[flat].split = Some(split);
            nodes[Tree::flat(level + 1, 2 * s)].cell = left;
            nodes[Tree::flat(level + 1, 2 * s + 1)].cell = right;
        }
    }
    Ok(Tree {
        k,
        p,
        schedule: schedule.clone(),
        nodes,
        provenance,
    })
}

/// Grows a height-`k` tree on the subsample: node `(l, s)` is split by the
/// splitter restricted to `Θ_{l+1,s+1}` using only subsample points inside
/// the node's cell. Deterministic under the seed.
pub fn grow_tree(
    data: &Dataset,
    subsample: &[usize],
    schedule: &ThetaSchedule,
    splitter: &dyn Splitter,
    seed: u64,
) -> Result<Tree> {
    if subsample.is_empty() {
        return Err(Error::EmptySubsample);
    }
    // Route subsample rows level by level so each node only scans its own.
    let k = schedule.k;
    let mut assignment: Vec<Vec<usize>> = vec![subsample.to_vec()];
    let provenance = Provenance {
        splitter: splitter.name().to_string(),
        subsample_id: 0,
        seed,
    };
    let mut next_assignment: Vec<Vec<usize>> = Vec::new();
    let tree = grow_with(data.p(), schedule, provenance, |level, s, cell, features, node_seed| {
        if s == 0 {
            next_assignment = vec![Vec::new(); 1 << (level + 1)];
        }
        let rows = &assignment[s];
        // An empty node still receives a (degenerate) split; the splitter
        // sees the full subsample and filters to the empty cell itself.
        let view: &[usize] = if rows.is_empty() { subsample } else { rows };
        let decision = splitter.choose(data, view, cell, features, node_seed)?;
        let split = decision.split;
        for &i in rows {
            let side = usize::from(data.x(i, split.feature) >= split.threshold);
            next_assignment[2 * s + side].push(i);
        }
        if s + 1 == 1 << level {
            assignment = std::mem::take(&mut next_assignment);
        }
        Ok(split)
    })?;
    let _ = k;
    Ok(tree)
}

/// Grows a tree with the theoretical CART splitting rule (no data).
pub fn grow_theoretical_tree(
    model: &RegressionModel,
    schedule: &ThetaSchedule,
    search: &SearchConfig,
    seed: u64,
) -> Result<Tree> {
    let provenance = Provenance {
        splitter: "theoretical-cart".to_string(),
        subsample_id: 0,
        seed,
    };
    grow_with(model.p(), schedule, provenance, |_, _, cell, features, _| {
        Ok(theoretical_cart_split(model, cell, features, search)?.split)
    })
}

// ---------------------------------------------------------------------------
// Prediction
// ---------------------------------------------------------------------------

/// Subsample sums and counts per leaf; rebuilt from `(data, subsample)`.
#[derive(Debug, Clone)]
pub struct LeafStats {
    sums: Vec<f64>,
    counts: Vec<u32>,
}

impl LeafStats {
    pub fn build(tree: &Tree, data: &Dataset, subsample: &[usize]) -> Self {
        let mut sums = vec![0.0; tree.leaf_count()];
        let mut counts = vec![0u32; tree.leaf_count()];
        for &i in subsample {
            let leaf = tree.leaf_index(data.row(i));
            sums[leaf] += data.y(i);
            counts[leaf] += 1;
        }
        LeafStats { sums, counts }
    }

    /// Leaf sample mean, or 0 when the leaf holds no subsample point.
    pub fn mean(&self, leaf: usize) -> f64 {
        if self.counts[leaf] == 0 {
            0.0
        } else {
            self.sums[leaf] / f64::from(self.counts[leaf])
        }
    }

    pub fn count(&self, leaf: usize) -> u32 {
        self.counts[leaf]
    }
}

/// Tree estimate at a point: the subsample mean of the leaf containing it,
/// or 0 when that leaf holds no subsample point.
pub fn tree_predict(tree: &Tree, data: &Dataset, subsample: &[usize], point: &[f64]) -> f64 {
    LeafStats::build(tree, data, subsample).mean(tree.leaf_index(point))
}

/// Population leaf means of a tree under a model.
#[derive(Debug, Clone)]
pub struct PopulationLeafStats {
    means: Vec<f64>,
    zero_mass: Vec<bool>,
}

impl PopulationLeafStats {
    pub fn build(tree: &Tree, model: &RegressionModel) -> Self {
        let mut means = Vec::with_capacity(tree.leaf_count());
        let mut zero_mass = Vec::with_capacity(tree.leaf_count());
        for leaf in 0..tree.leaf_count() {
            let m = moments(model, tree.leaf_cell(leaf));
            means.push(m.mean);
            zero_mass.push(m.is_zero_mass());
        }
        PopulationLeafStats { means, zero_mass }
    }

    pub fn mean(&self, leaf: usize) -> f64 {
        self.means[leaf]
    }

    pub fn is_zero_mass(&self, leaf: usize) -> bool {
        self.zero_mass[leaf]
    }
}

/// Population tree estimate `m*` at a point: the conditional mean of `m`
/// on the leaf containing the point. Returns `(value, zero_mass_flag)`;
/// zero-probability leaves yield 0, flagged.
pub fn population_tree_estimate(
    model: &RegressionModel,
    tree: &Tree,
    point: &[f64],
) -> (f64, bool) {
    let m = moments(model, tree.leaf_cell(tree.leaf_index(point)));
    (m.mean, m.is_zero_mass())
}

// ---------------------------------------------------------------------------
// Forest
// ---------------------------------------------------------------------------

/// Forest training configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    /// Tree height (0 grows the root-only tree: the grand-mean estimator).
    pub k: usize,
    /// Column-subsampling rate: subsets of size `⌈γ₀ p⌉`.
    pub gamma0: f64,
    /// Row-subsample fraction; sets of size `⌈b n⌉` drawn without
    /// replacement.
    pub b: f64,
    /// Number of row subsamples.
    pub n_subsamples: usize,
    /// Monte-Carlo width of the column-subsampling expectation.
    pub theta_draws: usize,
    pub seed: u64,
    pub splitter: SplitterKind,
}

impl ForestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k > 24 {
            return Err(Error::InvalidParameter {
                field: "k".into(),
                message: "tree height capped at 24".into(),
            });
        }
        if !(self.gamma0 > 0.0 && self.gamma0 <= 1.0) {
            return Err(Error::InvalidParameter {
                field: "gamma0".into(),
                message: "need 0 < gamma0 <= 1".into(),
            });
        }
        if !(self.b > 0.0 && self.b <= 1.0) {
            return Err(Error::InvalidParameter {
                field: "b".into(),
                message: "need 0 < b <= 1".into(),
            });
        }
        if self.n_subsamples == 0 {
            return Err(Error::InvalidParameter {
                field: "n_subsamples".into(),
                message: "need B >= 1".into(),
            });
        }
        if self.theta_draws == 0 {
            return Err(Error::InvalidParameter {
                field: "theta_draws".into(),
                message: "need M >= 1".into(),
            });
        }
        Ok(())
    }
}

/// Draws the frozen row-subsample index sets from the master seed.
pub fn draw_subsamples(config: &ForestConfig, n: usize) -> Vec<Vec<usize>> {
    let size = ((config.b * n as f64).ceil() as usize).clamp(1, n);
    (0..config.n_subsamples)
        .map(|a| {
            let mut rng = stream(config.seed, "subsample", &[a as u64]);
            let mut idx: Vec<usize> =
                rand::seq::index::sample(&mut rng, n, size).iter().collect();
            idx.sort_unstable();
            idx
        })
        .collect()
}

/// A trained forest: `B` frozen subsamples, `M` schedule draws per
/// subsample, one tree per pair, with per-tree leaf statistics.
pub struct TrainedForest {
    pub config: ForestConfig,
    pub subsamples: Vec<Vec<usize>>,
    /// Trees in `(a, m)` order, `a`-major.
    pub trees: Vec<Tree>,
    leaf_stats: Vec<LeafStats>,
}

impl TrainedForest {
    pub fn train(config: &ForestConfig, data: &Dataset) -> Result<TrainedForest> {
        Self::train_with_schedules(config, data, |seed| {
            draw_theta_schedule(data.p(), config.gamma0, config.k, seed)
        })
    }

    /// Training entry point with a custom schedule source (used by the
    /// relevance experiment to exclude a feature from every draw).
    pub fn train_with_schedules(
        config: &ForestConfig,
        data: &Dataset,
        schedule_for_seed: impl Fn(u64) -> Result<ThetaSchedule> + Sync,
    ) -> Result<TrainedForest> {
        config.validate()?;
        let subsamples = draw_subsamples(config, data.n());
        let splitter = config.splitter.instance();
        let pairs: Vec<(usize, usize)> = (0..config.n_subsamples)
            .flat_map(|a| (0..config.theta_draws).map(move |m| (a, m)))
            .collect();
        use rayon::prelude::*;
        let trees: Vec<Tree> = pairs
            .par_iter()
            .map(|&(a, m)| {
                let schedule_seed =
                    derive_seed(config.seed, "schedule", &[a as u64, m as u64]);
                let tree_seed = derive_seed(config.seed, "tree", &[a as u64, m as u64]);
                let schedule = schedule_for_seed(schedule_seed)?;
                let mut tree =
                    grow_tree(data, &subsamples[a], &schedule, splitter, tree_seed)?;
                tree.provenance.subsample_id = a as u64;
                Ok(tree)
            })
            .collect::<Result<Vec<Tree>>>()?;
        let leaf_stats: Vec<LeafStats> = trees
            .par_iter()
            .zip(&pairs)
            .map(|(tree, &(a, _))| LeafStats::build(tree, data, &subsamples[a]))
            .collect();
        Ok(TrainedForest {
            config: *config,
            subsamples,
            trees,
            leaf_stats,
        })
    }

    pub fn tree_count(&self) -> usize {
        self.trees.len()
    }

    /// Prediction of tree `(a, m)` at the point.
    pub fn tree_prediction(&self, a: usize, m: usize, point: &[f64]) -> f64 {
        let idx = a * self.config.theta_draws + m;
        self.leaf_stats[idx].mean(self.trees[idx].leaf_index(point))
    }

    /// Forest prediction: `(1/B) Σ_a (1/M) Σ_m` tree predictions, reduced
    /// in a fixed `(a, m)` order so results are worker-count independent.
    pub fn predict(&self, point: &[f64]) -> f64 {
        let b = self.config.n_subsamples;
        let m = self.config.theta_draws;
        let mut outer = 0.0;
        for a in 0..b {
            let mut inner = 0.0;
            for t in 0..m {
                inner += self.tree_prediction(a, t, point);
            }
            outer += inner / m as f64;
        }
        outer / b as f64
    }
}

/// One-shot forest estimate at a point: trains under the config and
/// predicts. Use [`TrainedForest`] to amortize training across points.
pub fn forest_predict(config: &ForestConfig, data: &Dataset, point: &[f64]) -> Result<f64> {
    Ok(TrainedForest::train(config, data)?.predict(point))
}

// ---------------------------------------------------------------------------
// Semi-sample trimming
// ---------------------------------------------------------------------------

/// Replaces the subtree below every shallowest cell of probability `< ζ`
/// with one regrown by the theoretical CART rule under the same feature
/// subsets; all other nodes are copied bit-identically.
pub fn trim_to_semi_sample(
    tree: &Tree,
    model: &RegressionModel,
    zeta: f64,
    search: &SearchConfig,
) -> Result<Tree> {
    if !(0.0..=1.0).contains(&zeta) {
        return Err(Error::InvalidParameter {
            field: "zeta".into(),
            message: "need 0 <= zeta <= 1".into(),
        });
    }
    let dist = model.distribution();
    let mut out = tree.clone();
    out.provenance.splitter = format!("{}+trim", tree.provenance.splitter);
    // Shallowest qualifying nodes: probability < ζ while every ancestor is
    // >= ζ. Found level by level; descendants of a qualifying node are
    // regrown wholesale, so deeper qualifying nodes inside are irrelevant.
    let mut frontier: Vec<(usize, usize)> = Vec::new();
    let mut blocked = vec![false; 1usize << tree.height().min(63)];
    for level in 0..=tree.height() {
        let width = 1usize << level;
        let mut next_blocked = vec![false; width * 2];
        for s in 0..width {
            if blocked[s] {
                next_blocked[2 * s] = true;
                next_blocked[2 * s + 1] = true;
                continue;
            }
            let prob = dist.cell_prob(tree.cell_at(level, s));
            if prob < zeta {
                frontier.push((level, s));
                next_blocked[2 * s] = true;
                next_blocked[2 * s + 1] = true;
            }
        }
        blocked = next_blocked;
    }
    for (l0, s0) in frontier {
        regrow_theoretical(&mut out, model, l0, s0, search)?;
    }
    Ok(out)
}

fn regrow_theoretical(
    tree: &mut Tree,
    model: &RegressionModel,
    l0: usize,
    s0: usize,
    search: &SearchConfig,
) -> Result<()> {
    let k = tree.height();
    for level in l0..k {
        let depth = level - l0;
        for t in 0..(1usize << depth) {
            let s = (s0 << depth) + t;
            let flat = Tree::flat(level, s);
            let cell = tree.nodes[flat].cell.clone();
            let features = tree.schedule.subset(level, s);
            let split = theoretical_cart_split(model, &cell, features, search)?.split;
            let (left, right) = split_cell(&cell, &split)?;
            tree.nodes[flat].split = Some(split);
            tree.nodes[Tree::flat(level + 1, 2 * s)].cell = left;
            tree.nodes[Tree::flat(level + 1, 2 * s + 1)].cell = right;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct SplitRecord {
    /// 1-based feature index in serialized form.
    j: usize,
    c: f64,
}

#[derive(Serialize, Deserialize)]
struct NodeRecord {
    level: usize,
    index: usize,
    lo: Vec<f64>,
    hi: Vec<f64>,
    split: Option<SplitRecord>,
}

#[derive(Serialize, Deserialize)]
struct ScheduleRecord {
    p: usize,
    k: usize,
    subset_size: usize,
    /// 1-based feature indices in serialized form.
    levels: Vec<Vec<Vec<usize>>>,
}

#[derive(Serialize, Deserialize)]
struct TreeFile {
    version: u32,
    k: usize,
    p: usize,
    schedule: ScheduleRecord,
    /// Preorder list of nodes.
    nodes: Vec<NodeRecord>,
    provenance: Provenance,
}

fn preorder(tree: &Tree, level: usize, s: usize, out: &mut Vec<NodeRecord>) {
    let cell = tree.cell_at(level, s);
    out.push(NodeRecord {
        level,
        index: s,
        lo: cell.intervals().iter().map(|iv| iv.lo).collect(),
        hi: cell.intervals().iter().map(|iv| iv.hi).collect(),
        split: tree.split_at(level, s).map(|sp| SplitRecord {
            j: sp.feature + 1,
            c: sp.threshold,
        }),
    });
    if level < tree.height() {
        preorder(tree, level + 1, 2 * s, out);
        preorder(tree, level + 1, 2 * s + 1, out);
    }
}

/// Versioned JSON tree format with the schedule and provenance embedded;
/// numbers serialize as shortest round-trip decimals.
pub fn serialize_tree(tree: &Tree) -> String {
    let mut nodes = Vec::with_capacity((1 << (tree.height() + 1)) - 1);
    preorder(tree, 0, 0, &mut nodes);
    let file = TreeFile {
        version: TREE_FORMAT_VERSION,
        k: tree.height(),
        p: tree.p(),
        schedule: ScheduleRecord {
            p: tree.schedule.p,
            k: tree.schedule.k,
            subset_size: tree.schedule.subset_size,
            levels: tree
                .schedule
                .levels
                .iter()
                .map(|row| {
                    row.iter()
                        .map(|set| set.iter().map(|j| j + 1).collect())
                        .collect()
                })
                .collect(),
        },
        nodes,
        provenance: tree.provenance.clone(),
    };
    serde_json::to_string_pretty(&file).expect("tree serialization cannot fail")
}

/// Parses a serialized tree, rebuilding every cell from the root through
/// the stored splits and verifying the stored bounds along the way.
pub fn deserialize_tree(payload: &str) -> Result<Tree> {
    let file: TreeFile =
        serde_json::from_str(payload).map_err(|e| Error::TreeFormat(e.to_string()))?;
    if file.version != TREE_FORMAT_VERSION {
        return Err(Error::TreeVersion {
            got: file.version,
            expected: TREE_FORMAT_VERSION,
        });
    }
    let k = file.k;
    let p = file.p;
    let expected_nodes = (1usize << (k + 1)) - 1;
    if file.nodes.len() != expected_nodes {
        return Err(Error::TreeFormat(format!(
            "expected {expected_nodes} nodes, found {}",
            file.nodes.len()
        )));
    }
    if file.schedule.k != k || file.schedule.p != p {
        return Err(Error::TreeFormat("schedule shape mismatch".into()));
    }
    let schedule = ThetaSchedule {
        p,
        k,
        subset_size: file.schedule.subset_size,
        levels: file
            .schedule
            .levels
            .iter()
            .map(|row| {
                row.iter()
                    .map(|set| set.iter().map(|j| j.wrapping_sub(1)).collect())
                    .collect()
            })
            .collect(),
    };
    if schedule.levels.len() != k
        || schedule
            .levels
            .iter()
            .enumerate()
            .any(|(l, row)| row.len() != (1 << l))
        || schedule
            .levels
            .iter()
            .flatten()
            .flatten()
            .any(|&j| j >= p)
    {
        return Err(Error::TreeFormat("schedule indices out of range".into()));
    }
    // Collect splits by (level, index) from the preorder list.
    let mut splits: Vec<Option<Split>> = vec![None; expected_nodes];
    let mut seen = vec![false; expected_nodes];
    for rec in &file.nodes {
        if rec.level > k || rec.index >= (1usize << rec.level) {
            return Err(Error::TreeFormat(format!(
                "node ({}, {}) out of range",
                rec.level, rec.index
            )));
        }
        let flat = Tree::flat(rec.level, rec.index);
        if seen[flat] {
            return Err(Error::TreeFormat("duplicate node".into()));
        }
        seen[flat] = true;
        if rec.lo.len() != p || rec.hi.len() != p {
            return Err(Error::TreeFormat("cell bounds have wrong dimension".into()));
        }
        match (&rec.split, rec.level == k) {
            (Some(s), false) => {
                if s.j == 0 || s.j > p {
                    return Err(Error::TreeFormat("split feature out of range".into()));
                }
                splits[flat] = Some(Split::new(s.j - 1, s.c));
            }
            (None, true) => {}
            (None, false) => {
                return Err(Error::TreeFormat("internal node missing split".into()));
            }
            (Some(_), true) => {
                return Err(Error::TreeFormat("leaf node carries a split".into()));
            }
        }
    }
    // Rebuild cells from the root; stored bounds must match exactly.
    let mut nodes = vec![
        TreeNode {
            cell: Cell::root(p),
            split: None,
        };
        expected_nodes
    ];
    for level in 0..k {
        for s in 0..(1usize << level) {
            let flat = Tree::flat(level, s);
            let split = splits[flat].expect("validated above");
            let (left, right) =
                split_cell(&nodes[flat].cell, &split).map_err(|e| Error::TreeFormat(e.to_string()))?;
            nodes[flat].split = Some(split);
            nodes[Tree::flat(level + 1, 2 * s)].cell = left;
            nodes[Tree::flat(level + 1, 2 * s + 1)].cell = right;
        }
    }
    for rec in &file.nodes {
        let flat = Tree::flat(rec.level, rec.index);
        let cell = &nodes[flat].cell;
        for (j, iv) in cell.intervals().iter().enumerate() {
            if rec.lo[j] != iv.lo || rec.hi[j] != iv.hi {
                return Err(Error::TreeFormat(format!(
                    "stored bounds disagree with splits at node ({}, {})",
                    rec.level, rec.index
                )));
            }
        }
    }
    Ok(Tree {
        k,
        p,
        schedule,
        nodes,
        provenance: file.provenance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_sample;
    use crate::model::{binary_linear, indicator};

    #[test]
    fn schedule_counts_and_full_gamma() {
        let s = draw_theta_schedule(5, 1.0, 2, 1).unwrap();
        assert_eq!(s.subset_count(), 3);
        for l in 0..2 {
            for n in 0..(1 << l) {
                assert_eq!(s.subset(l, n), &[0, 1, 2, 3, 4]);
            }
        }
    }

    #[test]
    fn singleton_schedule_frequencies_uniform() {
        let mut counts = [0usize; 3];
        let draws = 10_000;
        for seed in 0..draws {
            let s = draw_theta_schedule(3, 1.0 / 3.0, 1, seed).unwrap();
            assert_eq!(s.subset(0, 0).len(), 1);
            counts[s.subset(0, 0)[0]] += 1;
        }
        let expect = draws as f64 / 3.0;
        let sd = (draws as f64 * (1.0 / 3.0) * (2.0 / 3.0)).sqrt();
        for c in counts {
            assert!((c as f64 - expect).abs() < 3.0 * sd, "{counts:?}");
        }
    }

    #[test]
    fn enumeration_matches_closed_form_count() {
        let all = enumerate_theta_schedules(3, 1.0 / 3.0, 2, 100_000).unwrap();
        assert_eq!(all.len(), 27);
        let all = enumerate_theta_schedules(3, 2.0 / 3.0, 1, 100_000).unwrap();
        assert_eq!(all.len(), 3);
    }

    #[test]
    fn grow_two_point_tree() {
        let data = crate::data::Dataset::from_parts(vec![0.2, 0.8], vec![0.0, 1.0], 1).unwrap();
        let schedule = draw_theta_schedule(1, 1.0, 1, 1).unwrap();
        let tree = grow_tree(&data, &[0, 1], &schedule, &CartSplitter, 9).unwrap();
        assert_eq!(tree.split_at(0, 0), Some(Split::new(0, 0.8)));
        assert_eq!(tree.leaf_count(), 2);
        assert_eq!(tree_predict(&tree, &data, &[0, 1], &[0.1]), 0.0);
        assert_eq!(tree_predict(&tree, &data, &[0, 1], &[0.9]), 1.0);
    }

    #[test]
    fn single_point_dataset_predicts_itself() {
        let data = crate::data::Dataset::from_parts(vec![0.5], vec![7.0], 1).unwrap();
        let schedule = draw_theta_schedule(1, 1.0, 2, 3).unwrap();
        let tree = grow_tree(&data, &[0], &schedule, &CartSplitter, 4).unwrap();
        assert_eq!(tree_predict(&tree, &data, &[0], &[0.5]), 7.0);
    }

    #[test]
    fn leaf_partition_over_random_points() {
        let model = indicator(3, 0.4, 0.5).unwrap();
        let data = generate_sample(&model, 200, 8).unwrap();
        let schedule = draw_theta_schedule(3, 0.5, 4, 2).unwrap();
        let sub: Vec<usize> = (0..200).collect();
        let tree = grow_tree(&data, &sub, &schedule, &CartSplitter, 5).unwrap();
        let probe = generate_sample(&model, 2000, 9).unwrap();
        for i in 0..probe.n() {
            let x = probe.row(i);
            let hits = (0..tree.leaf_count())
                .filter(|&l| tree.leaf_cell(l).contains(x))
                .count();
            assert_eq!(hits, 1, "point {x:?}");
            assert!(tree.leaf_cell(tree.leaf_index(x)).contains(x));
        }
    }

    #[test]
    fn forest_reduces_to_single_tree_for_degenerate_config() {
        let model = indicator(2, 0.5, 0.2).unwrap();
        let data = generate_sample(&model, 100, 21).unwrap();
        let config = ForestConfig {
            k: 2,
            gamma0: 1.0,
            b: 1.0,
            n_subsamples: 1,
            theta_draws: 1,
            seed: 33,
            splitter: SplitterKind::Cart,
        };
        let forest = TrainedForest::train(&config, &data).unwrap();
        let point = [0.3, 0.6];
        let all: Vec<usize> = (0..100).collect();
        let direct = tree_predict(&forest.trees[0], &data, &all, &point);
        assert_eq!(forest.predict(&point), direct);
    }

    #[test]
    fn k_zero_forest_is_grand_mean() {
        let model = indicator(2, 0.5, 0.0).unwrap();
        let data = generate_sample(&model, 50, 4).unwrap();
        let config = ForestConfig {
            k: 0,
            gamma0: 0.5,
            b: 1.0,
            n_subsamples: 1,
            theta_draws: 3,
            seed: 1,
            splitter: SplitterKind::Cart,
        };
        let forest = TrainedForest::train(&config, &data).unwrap();
        let mean: f64 = (0..50).map(|i| data.y(i)).sum::<f64>() / 50.0;
        assert!((forest.predict(&[0.2, 0.2]) - mean).abs() < 1e-12);
    }

    #[test]
    fn population_estimate_examples() {
        let model = indicator(1, 0.5, 0.0).unwrap();
        let data = generate_sample(&model, 10, 2).unwrap();
        let schedule = draw_theta_schedule(1, 1.0, 0, 1).unwrap();
        let tree = grow_tree(&data, &[0, 1, 2], &schedule, &CartSplitter, 1).unwrap();
        // Height 0: the root mean E m(X) = 0.5.
        let (v, flag) = population_tree_estimate(&model, &tree, &[0.3]);
        assert!((v - 0.5).abs() < 1e-15);
        assert!(!flag);
    }

    /// Splitter returning predetermined splits per (level, node); used to
    /// build fixtures with known cell probabilities.
    struct FixedSplitter {
        splits: Vec<(usize, usize, Split)>,
    }

    impl Splitter for FixedSplitter {
        fn name(&self) -> &'static str {
            "fixed"
        }
        fn choose(
            &self,
            _data: &Dataset,
            _subsample: &[usize],
            cell: &Cell,
            _features: &[usize],
            _seed: u64,
        ) -> crate::error::Result<SplitDecision> {
            let split = self
                .splits
                .iter()
                .find(|(_, _, s)| {
                    let iv = cell.interval(s.feature);
                    s.threshold >= iv.lo && s.threshold <= iv.hi
                })
                .map(|(_, _, s)| *s)
                .unwrap_or_else(|| {
                    let iv = cell.interval(0);
                    Split::new(0, 0.5 * (iv.lo + iv.hi))
                });
            Ok(SplitDecision {
                split,
                objective: 0.0,
                degenerate: false,
                trivial: false,
                candidates_scanned: 0,
            })
        }
    }

    #[test]
    fn trim_zeta_zero_leaves_tree_unchanged() {
        let model = crate::model::additive_oracle(2, vec![1.0, 1.0], 0.0).unwrap();
        let data = generate_sample(&model, 100, 1).unwrap();
        let schedule = draw_theta_schedule(2, 1.0, 2, 3).unwrap();
        let sub: Vec<usize> = (0..100).collect();
        let tree = grow_tree(&data, &sub, &schedule, &CartSplitter, 5).unwrap();
        let trimmed =
            trim_to_semi_sample(&tree, &model, 0.0, &SearchConfig::default()).unwrap();
        assert_eq!(tree.nodes, trimmed.nodes);
    }

    #[test]
    fn trim_zeta_one_regrows_everything_below_root() {
        let model = crate::model::additive_oracle(2, vec![1.0, 1.0], 0.0).unwrap();
        let data = generate_sample(&model, 100, 2).unwrap();
        let schedule = draw_theta_schedule(2, 1.0, 2, 4).unwrap();
        let sub: Vec<usize> = (0..100).collect();
        let tree = grow_tree(&data, &sub, &schedule, &CartSplitter, 6).unwrap();
        let trimmed =
            trim_to_semi_sample(&tree, &model, 1.0, &SearchConfig::default()).unwrap();
        // Root split untouched; every level-1 node regrown theoretically.
        assert_eq!(tree.split_at(0, 0), trimmed.split_at(0, 0));
        for s in 0..2 {
            let cell = tree.cell_at(1, s);
            let expect = theoretical_cart_split(
                &model,
                cell,
                trimmed.schedule().subset(1, s),
                &SearchConfig::default(),
            )
            .unwrap()
            .split;
            assert_eq!(trimmed.split_at(1, s), Some(expect));
        }
    }

    #[test]
    fn trim_regrows_exactly_the_skewed_branch() {
        // Root splits x1 at 1e-4: the left branch has probability 1e-4
        // under the uniform model, everything else stays above zeta.
        let model = crate::model::additive_oracle(2, vec![1.0, 1.0], 0.0).unwrap();
        let data = generate_sample(&model, 50, 7).unwrap();
        let schedule = draw_theta_schedule(2, 1.0, 2, 8).unwrap();
        let sub: Vec<usize> = (0..50).collect();
        let fixed = FixedSplitter {
            splits: vec![
                (0, 0, Split::new(0, 1e-4)),
                (1, 0, Split::new(1, 0.25)),
                (1, 1, Split::new(1, 0.75)),
            ],
        };
        let tree = grow_tree(&data, &sub, &schedule, &fixed, 9).unwrap();
        let zeta = 1e-3;
        let trimmed = trim_to_semi_sample(&tree, &model, zeta, &SearchConfig::default()).unwrap();
        // The skewed node (1, 0) is regrown; its sibling and the root are
        // bit-identical.
        assert_eq!(tree.split_at(0, 0), trimmed.split_at(0, 0));
        assert_eq!(tree.split_at(1, 1), trimmed.split_at(1, 1));
        assert_eq!(tree.cell_at(2, 2), trimmed.cell_at(2, 2));
        assert_eq!(tree.cell_at(2, 3), trimmed.cell_at(2, 3));
        let skew_cell = tree.cell_at(1, 0);
        let expect = theoretical_cart_split(
            &model,
            skew_cell,
            trimmed.schedule().subset(1, 0),
            &SearchConfig::default(),
        )
        .unwrap()
        .split;
        assert_eq!(trimmed.split_at(1, 0), Some(expect));
        assert_ne!(trimmed.split_at(1, 0), tree.split_at(1, 0));
    }

    #[test]
    fn serialization_round_trips() {
        let model = binary_linear(4, 2, 1.0, 0.0).unwrap();
        let data = generate_sample(&model, 64, 6).unwrap();
        let schedule = draw_theta_schedule(4, 0.5, 3, 7).unwrap();
        let sub: Vec<usize> = (0..64).collect();
        let tree = grow_tree(&data, &sub, &schedule, &BinaryCartSplitter, 8).unwrap();
        let payload = serialize_tree(&tree);
        let back = deserialize_tree(&payload).unwrap();
        assert_eq!(tree, back);

        // Truncated payload.
        assert!(deserialize_tree(&payload[..payload.len() / 2]).is_err());

        // Version mismatch.
        let bumped = payload.replacen("\"version\": 1", "\"version\": 99", 1);
        assert!(matches!(
            deserialize_tree(&bumped),
            Err(Error::TreeVersion { got: 99, .. })
        ));
    }
}
