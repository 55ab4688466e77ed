//! Experiment configuration: a JSON config file merged with command-line
//! overrides, validated before any computation, and echoed fully resolved
//! next to every report.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use sidforest::error::{Error, Result};
use sidforest::forest::{ForestConfig, SplitterKind};
use sidforest::model::{from_spec, FeatureDistribution, RegressionModel};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSpec {
    /// Registry id; absent means data must come from a CSV file.
    pub id: Option<String>,
    pub params: Value,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec {
            id: None,
            params: Value::Object(Default::default()),
        }
    }
}

impl ModelSpec {
    pub fn build(&self) -> Result<Option<RegressionModel>> {
        match &self.id {
            None => Ok(None),
            Some(id) => Ok(Some(from_spec(id, &self.params)?)),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSpec {
    /// Synthetic sample size (ignored when `csv` is set).
    pub n: usize,
    pub seed: u64,
    pub csv: Option<String>,
}

impl Default for DataSpec {
    fn default() -> Self {
        DataSpec {
            n: 1000,
            seed: 1,
            csv: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForestSpec {
    pub k: usize,
    pub gamma0: f64,
    pub b: f64,
    pub subsamples: usize,
    pub theta_draws: usize,
    /// Defaults to binary-cart for Bernoulli models, cart otherwise.
    pub splitter: Option<SplitterKind>,
}

impl Default for ForestSpec {
    fn default() -> Self {
        ForestSpec {
            k: 3,
            gamma0: 1.0 / 3.0,
            b: 1.0,
            subsamples: 1,
            theta_draws: 25,
            splitter: None,
        }
    }
}

impl ForestSpec {
    pub fn to_config(&self, model: Option<&RegressionModel>, seed: u64) -> ForestConfig {
        let splitter = self.splitter.unwrap_or_else(|| match model {
            Some(m) if matches!(m.distribution(), FeatureDistribution::BernoulliHalf) => {
                SplitterKind::BinaryCart
            }
            _ => SplitterKind::Cart,
        });
        ForestConfig {
            k: self.k,
            gamma0: self.gamma0,
            b: self.b,
            n_subsamples: self.subsamples,
            theta_draws: self.theta_draws,
            seed,
            splitter,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McSpec {
    pub n_test: usize,
    pub iota_budget: usize,
    pub sid_budget: usize,
    pub sid_max_depth: usize,
}

impl Default for McSpec {
    fn default() -> Self {
        McSpec {
            n_test: 1000,
            iota_budget: 20_000,
            sid_budget: 2000,
            sid_max_depth: 8,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSpec {
    pub ns: Vec<usize>,
    pub gamma0s: Vec<f64>,
    pub c_height: f64,
    /// Extra models for the sweep grid; the top-level model is always
    /// included when present.
    pub models: Vec<ModelSpec>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            ns: vec![256, 512, 1024, 2048],
            gamma0s: vec![1.0],
            c_height: 1.0 / 8.0,
            models: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Prop2Spec {
    pub s_star: usize,
    pub beta: f64,
    pub p: usize,
    pub gamma0: f64,
    pub n: usize,
    pub k_grid: Vec<usize>,
    pub m_eps: f64,
}

impl Default for Prop2Spec {
    fn default() -> Self {
        Prop2Spec {
            s_star: 4,
            beta: 1.0,
            p: 10,
            gamma0: 1.0,
            n: 5000,
            k_grid: vec![0, 1, 2, 3, 4],
            m_eps: 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RelevanceSpec {
    /// Dropped feature, 1-based.
    pub feature: usize,
}

impl Default for RelevanceSpec {
    fn default() -> Self {
        RelevanceSpec { feature: 1 }
    }
}

/// The complete experiment configuration with every default explicit.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub data: DataSpec,
    pub forest: ForestSpec,
    pub mc: McSpec,
    pub sweep: SweepSpec,
    pub prop2: Prop2Spec,
    pub relevance: RelevanceSpec,
    pub out_dir: String,
    pub seed: u64,
    pub workers: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_value(value: Value) -> Result<Self> {
        let mut cfg: ExperimentConfig =
            serde_json::from_value(value).map_err(|e| Error::InvalidParameter {
                field: "config".into(),
                message: e.to_string(),
            })?;
        if cfg.out_dir.is_empty() {
            cfg.out_dir = "out".into();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        let bad = |field: &str, message: String| Error::InvalidParameter {
            field: field.into(),
            message,
        };
        if !(self.forest.gamma0 > 0.0 && self.forest.gamma0 <= 1.0) {
            return Err(bad(
                "forest.gamma0",
                format!("need 0 < gamma0 <= 1, got {}", self.forest.gamma0),
            ));
        }
        if !(self.forest.b > 0.0 && self.forest.b <= 1.0) {
            return Err(bad("forest.b", format!("need 0 < b <= 1, got {}", self.forest.b)));
        }
        if self.forest.subsamples == 0 {
            return Err(bad("forest.subsamples", "need B >= 1".into()));
        }
        if self.forest.theta_draws == 0 {
            return Err(bad("forest.theta_draws", "need M >= 1".into()));
        }
        if self.forest.k > 24 {
            return Err(bad("forest.k", "tree height capped at 24".into()));
        }
        if !(self.prop2.gamma0 > 0.0 && self.prop2.gamma0 <= 1.0) {
            return Err(bad(
                "prop2.gamma0",
                format!("need 0 < gamma0 <= 1, got {}", self.prop2.gamma0),
            ));
        }
        if self.mc.n_test == 0 {
            return Err(bad("mc.n_test", "need at least one test point".into()));
        }
        if self.relevance.feature == 0 {
            return Err(bad("relevance.feature", "features are 1-based".into()));
        }
        if !(self.sweep.c_height > 0.0) {
            return Err(bad("sweep.c_height", "must be positive".into()));
        }
        Ok(())
    }
}

/// Applies a `key=value` override onto the raw JSON tree using a dotted
/// path; values parse as JSON with a string fallback.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<()> {
    let Some((path, raw)) = assignment.split_once('=') else {
        return Err(Error::InvalidParameter {
            field: "--set".into(),
            message: format!("expected key=value, got `{assignment}`"),
        });
    };
    let parsed: Value = serde_json::from_str(raw).unwrap_or(Value::String(raw.to_string()));
    let mut node = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if !node.is_object() {
            *node = Value::Object(Default::default());
        }
        let map = node.as_object_mut().unwrap();
        if i + 1 == parts.len() {
            map.insert((*part).to_string(), parsed);
            return Ok(());
        }
        node = map
            .entry((*part).to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    Ok(())
}
