//! Experiment configuration with paper defaults and desk-scale sizing.

use std::path::{Path, PathBuf};

use graph_approx::gcn::Variant;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Verify,
    Decay,
    Surgery,
    Skip,
    Histogram,
}

/// Sizing preset used when `num_nodes` or `trials` are not given explicitly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    /// Sizes from the paper's experiments.
    Paper,
    /// Smaller sizes that keep a full run within minutes on one core.
    Desk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterChoice {
    Gcn,
    Sym,
    Rw,
}

impl FilterChoice {
    pub fn name(self) -> &'static str {
        match self {
            FilterChoice::Gcn => "gcn",
            FilterChoice::Sym => "sym",
            FilterChoice::Rw => "rw",
        }
    }
}

/// How the class-mean vector of the feature mixture is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeanMode {
    /// I.i.d. standard-normal entries.
    Random,
    /// All ones.
    Ones,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphSettings {
    /// Node count; `None` picks the preset for the experiment and scale.
    pub num_nodes: Option<usize>,
    pub p: f64,
    pub q: f64,
    /// Optional graph file (edge list, or dense `.csv`) replacing the SBM draw.
    pub file: Option<PathBuf>,
}

impl Default for GraphSettings {
    fn default() -> Self {
        Self {
            num_nodes: None,
            p: 0.8,
            q: 0.3,
            file: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureSettings {
    pub sigma: f64,
    pub mean_mode: MeanMode,
}

impl Default for FeatureSettings {
    fn default() -> Self {
        Self {
            sigma: 10.0,
            mean_mode: MeanMode::Random,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GcnSettings {
    pub filters: Vec<FilterChoice>,
    /// `alpha` of the symmetric and random-walk filters.
    pub alpha: f64,
    pub variants: Vec<Variant>,
    pub depth: usize,
    pub weight_frobenius: f64,
    pub trials: Option<usize>,
    /// Hidden width; `None` means `m_k = N`.
    pub width: Option<usize>,
    pub alpha_k: f64,
    pub beta_k: f64,
    /// Surgery eigenvalues `a_j`.
    pub surgery: Vec<f64>,
    /// Depths reported by the skip-connection table.
    pub table_depths: Vec<usize>,
}

impl Default for GcnSettings {
    fn default() -> Self {
        Self {
            filters: vec![FilterChoice::Gcn, FilterChoice::Sym, FilterChoice::Rw],
            alpha: 0.75,
            variants: vec![Variant::ResGcn, Variant::Appnp, Variant::Gcnii],
            depth: 50,
            weight_frobenius: 10.0,
            trials: None,
            width: None,
            alpha_k: 0.5,
            beta_k: 0.5,
            surgery: vec![1.0, 0.75, 0.5, 0.25],
            table_depths: vec![1, 5, 10, 20, 30, 40, 50],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySettings {
    pub instances: usize,
    pub min_nodes: usize,
    pub max_nodes: usize,
    pub max_r: u32,
    /// Multiplier applied to the single-frequency constant (test hook).
    pub cr_scale: f64,
    /// Multiplier applied to the Jackson constant (test hook).
    pub cr_prime_scale: f64,
}

impl Default for VerifySettings {
    fn default() -> Self {
        Self {
            instances: 50,
            min_nodes: 4,
            max_nodes: 64,
            max_r: 3,
            cr_scale: 1.0,
            cr_prime_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub scale: Scale,
    pub seed: u64,
    pub graph: GraphSettings,
    pub features: FeatureSettings,
    pub gcn: GcnSettings,
    pub verify: VerifySettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            experiment: Experiment::Verify,
            scale: Scale::Desk,
            seed: 0,
            graph: GraphSettings::default(),
            features: FeatureSettings::default(),
            gcn: GcnSettings::default(),
            verify: VerifySettings::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn for_experiment(experiment: Experiment) -> Self {
        Self {
            experiment,
            ..Self::default()
        }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Node count after applying the scale preset.
    pub fn num_nodes(&self) -> usize {
        self.graph
            .num_nodes
            .unwrap_or(match (self.experiment, self.scale) {
                (Experiment::Decay | Experiment::Surgery, Scale::Paper) => 1000,
                (Experiment::Decay | Experiment::Surgery, Scale::Desk) => 200,
                (Experiment::Skip | Experiment::Histogram, _) => 100,
                (Experiment::Verify, _) => self.verify.max_nodes,
            })
    }

    /// Trial count after applying the scale preset.
    pub fn trials(&self) -> usize {
        self.gcn
            .trials
            .unwrap_or(match (self.experiment, self.scale) {
                (Experiment::Decay | Experiment::Surgery, Scale::Paper) => 1000,
                (Experiment::Decay, Scale::Desk) => 50,
                (Experiment::Surgery, Scale::Desk) => 100,
                (Experiment::Skip | Experiment::Histogram, _) => 20,
                (Experiment::Verify, _) => 1,
            })
    }

    pub fn width(&self) -> usize {
        self.gcn.width.unwrap_or_else(|| self.num_nodes())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: &str| Err(CliError::Config(msg.to_string()));
        let g = &self.graph;
        if g.file.is_none() && !(0.0 <= g.q && g.q < g.p && g.p <= 1.0) {
            return bad("graph probabilities need 0 <= q < p <= 1");
        }
        if self.experiment != Experiment::Verify && self.num_nodes() < 2 {
            return bad("num_nodes must be at least 2");
        }
        if !(self.features.sigma > 0.0 && self.features.sigma.is_finite()) {
            return bad("sigma must be positive");
        }
        let gcn = &self.gcn;
        if !(gcn.alpha > 0.0 && gcn.alpha <= 1.0) {
            return bad("alpha must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&gcn.alpha_k) || !(0.0..=1.0).contains(&gcn.beta_k) {
            return bad("alpha_k and beta_k must lie in [0, 1]");
        }
        if gcn.depth == 0 {
            return bad("depth must be positive");
        }
        if !(gcn.weight_frobenius > 0.0 && gcn.weight_frobenius.is_finite()) {
            return bad("weight_frobenius must be positive");
        }
        if self.trials() == 0 {
            return bad("trials must be positive");
        }
        if gcn.width == Some(0) {
            return bad("width must be positive");
        }
        if gcn.filters.is_empty() || gcn.variants.is_empty() {
            return bad("filter and variant lists must be nonempty");
        }
        if gcn.surgery.is_empty() || gcn.surgery.iter().any(|a| !(a.abs() <= 1.0)) {
            return bad("surgery eigenvalues must satisfy |a| <= 1");
        }
        if gcn.table_depths.iter().any(|&k| k == 0 || k > gcn.depth) {
            return bad("table depths must lie in 1..=depth");
        }
        let v = &self.verify;
        if v.instances == 0 {
            return bad("instances must be positive");
        }
        if v.min_nodes < 2 || v.min_nodes > v.max_nodes {
            return bad("verify node range must satisfy 2 <= min_nodes <= max_nodes");
        }
        if !(v.cr_scale > 0.0 && v.cr_prime_scale > 0.0) {
            return bad("constant scales must be positive");
        }
        Ok(())
    }
}
