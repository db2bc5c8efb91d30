//! Declarative run configuration: one JSON document fully determines a run.
//! Unknown keys are rejected, every optional field has a default, and the
//! effective (defaulted) document is logged and hashed into every artifact.

use netdiff_core::bsar::{ErrorDistribution, GibbsConfig, GibbsWeights};
use netdiff_core::error::{Error, Result};
use netdiff_core::mc::{Estimator, ExperimentGrid};
use netdiff_core::saom_fit::FitConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; the --seed flag overrides it.
    #[serde(default)]
    pub seed: Option<u64>,
    /// Worker threads; --workers and NETDIFF_WORKERS override it.
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub generate: Option<GenerateBlock>,
    #[serde(default)]
    pub simulate: Option<SimulateBlock>,
    #[serde(default)]
    pub fit_gibbs: Option<FitGibbsBlock>,
    #[serde(default)]
    pub fit_saom: Option<FitSaomBlock>,
    #[serde(default)]
    pub montecarlo: Option<MonteCarloBlock>,
    #[serde(default)]
    pub report: Option<ReportBlock>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateBlock {
    pub n: usize,
    #[serde(default = "default_avg_degree")]
    pub target_avg_degree: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateBlock {
    /// Edge-list file produced by `generate` (or hand-authored).
    pub network: String,
    #[serde(default)]
    pub rho: f64,
    #[serde(default = "default_beta")]
    pub beta: Vec<f64>,
    #[serde(default = "default_x_mean")]
    pub x_mean: f64,
    #[serde(default = "default_x_sd")]
    pub x_sd: f64,
    #[serde(default = "default_normal")]
    pub error_dist: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitGibbsBlock {
    pub network: String,
    pub dataset: String,
    #[serde(default = "default_n_iter")]
    pub n_iter: usize,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default = "default_grid_size")]
    pub rho_grid_size: usize,
    #[serde(default = "default_prior_variance")]
    pub prior_beta_variance: f64,
    #[serde(default = "default_row_normalized")]
    pub weights: String,
    #[serde(default = "default_level")]
    pub significance_level: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSaomBlock {
    /// "avsim" or "avalt".
    #[serde(default = "default_avsim")]
    pub effect: String,
    /// Cross-sectional inputs (network + dataset written by `simulate`).
    #[serde(default)]
    pub network: Option<String>,
    #[serde(default)]
    pub dataset: Option<String>,
    /// Multi-wave panel inputs; when present, the panel mode is used.
    #[serde(default)]
    pub panel: Option<PanelBlock>,
    #[serde(default)]
    pub phase1_reps: Option<usize>,
    #[serde(default = "default_subphases")]
    pub phase2_subphases: usize,
    #[serde(default = "default_gain")]
    pub phase2_initial_gain: f64,
    #[serde(default = "default_base_iterations")]
    pub phase2_base_iterations: usize,
    #[serde(default = "default_phase3")]
    pub phase3_reps: usize,
    #[serde(default = "default_step")]
    pub derivative_step: f64,
    #[serde(default = "default_wall")]
    pub max_wall_seconds: f64,
    #[serde(default = "default_level")]
    pub significance_level: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PanelBlock {
    pub outcomes: String,
    pub covariates: String,
    pub proximity: String,
    /// "edge_list" or "distance_matrix".
    #[serde(default = "default_edge_list")]
    pub proximity_kind: String,
    /// Required for distance matrices; there is no sensible universal
    /// default for binarizing distances.
    #[serde(default)]
    pub distance_threshold: Option<f64>,
    /// Include the linear shape effect (panel mode permits it).
    #[serde(default = "default_true")]
    pub linear_shape: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloBlock {
    #[serde(default = "default_rho_values")]
    pub rho_values: Vec<f64>,
    #[serde(default = "default_n_values")]
    pub n_values: Vec<usize>,
    #[serde(default = "default_reps")]
    pub reps: usize,
    #[serde(default = "default_beta")]
    pub dgp_beta: Vec<f64>,
    #[serde(default = "default_x_mean")]
    pub x_mean: f64,
    #[serde(default = "default_x_sd")]
    pub x_sd: f64,
    #[serde(default = "default_avg_degree")]
    pub avg_degree: f64,
    #[serde(default = "default_logistic")]
    pub error_dist: String,
    #[serde(default = "default_raw_adjacency")]
    pub gibbs_weights: String,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<String>,
    #[serde(default = "default_n_iter")]
    pub gibbs_n_iter: usize,
    #[serde(default = "default_burn_in")]
    pub gibbs_burn_in: usize,
    #[serde(default = "default_grid_size")]
    pub gibbs_rho_grid_size: usize,
    #[serde(default = "default_prior_variance")]
    pub gibbs_prior_beta_variance: f64,
    #[serde(default)]
    pub saom_phase1_reps: Option<usize>,
    #[serde(default = "default_subphases")]
    pub saom_phase2_subphases: usize,
    #[serde(default = "default_gain")]
    pub saom_phase2_initial_gain: f64,
    #[serde(default = "default_base_iterations")]
    pub saom_phase2_base_iterations: usize,
    #[serde(default = "default_phase3")]
    pub saom_phase3_reps: usize,
    #[serde(default = "default_step")]
    pub saom_derivative_step: f64,
    #[serde(default = "default_wall")]
    pub saom_max_wall_seconds: f64,
    #[serde(default = "default_level")]
    pub significance_level: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportBlock {
    /// Directory holding spatial.csv and significance.csv from `montecarlo`.
    pub summaries: String,
}

fn default_avg_degree() -> f64 {
    5.0
}
fn default_beta() -> Vec<f64> {
    vec![4.0, -2.0]
}
fn default_x_mean() -> f64 {
    2.0
}
fn default_x_sd() -> f64 {
    2.0
}
fn default_normal() -> String {
    "normal".to_string()
}
fn default_logistic() -> String {
    "logistic".to_string()
}
fn default_n_iter() -> usize {
    4000
}
fn default_burn_in() -> usize {
    400
}
fn default_grid_size() -> usize {
    200
}
fn default_prior_variance() -> f64 {
    1e6
}
fn default_row_normalized() -> String {
    "row_normalized".to_string()
}
fn default_raw_adjacency() -> String {
    "raw_adjacency".to_string()
}
fn default_level() -> f64 {
    0.05
}
fn default_avsim() -> String {
    "avsim".to_string()
}
fn default_subphases() -> usize {
    4
}
fn default_gain() -> f64 {
    0.2
}
fn default_base_iterations() -> usize {
    50
}
fn default_phase3() -> usize {
    1000
}
fn default_step() -> f64 {
    0.1
}
fn default_wall() -> f64 {
    3600.0
}
fn default_edge_list() -> String {
    "edge_list".to_string()
}
fn default_true() -> bool {
    true
}
fn default_rho_values() -> Vec<f64> {
    vec![-0.8, -0.6, -0.4, -0.3, -0.2, -0.1, 0.0, 0.1, 0.2, 0.3, 0.4, 0.6, 0.8]
}
fn default_n_values() -> Vec<usize> {
    vec![50, 250, 500]
}
fn default_reps() -> usize {
    500
}
fn default_estimators() -> Vec<String> {
    vec!["gibbs".to_string(), "saom_avsim".to_string()]
}

pub fn parse_error_dist(s: &str) -> Result<ErrorDistribution> {
    match s {
        "normal" => Ok(ErrorDistribution::Normal),
        "logistic" => Ok(ErrorDistribution::Logistic),
        other => Err(Error::invalid(format!(
            "error_dist must be `normal` or `logistic`, got `{other}`"
        ))),
    }
}

pub fn parse_weights(s: &str) -> Result<GibbsWeights> {
    match s {
        "row_normalized" => Ok(GibbsWeights::RowNormalized),
        "raw_adjacency" => Ok(GibbsWeights::RawAdjacency),
        other => Err(Error::invalid(format!(
            "weights must be `row_normalized` or `raw_adjacency`, got `{other}`"
        ))),
    }
}

impl MonteCarloBlock {
    pub fn to_grid(&self, master_seed: u64) -> Result<ExperimentGrid> {
        if self.dgp_beta.len() != 2 {
            return Err(Error::invalid("dgp_beta must be [intercept, slope]"));
        }
        let estimators = self
            .estimators
            .iter()
            .map(|s| Estimator::parse(s))
            .collect::<Result<Vec<_>>>()?;
        Ok(ExperimentGrid {
            rho_values: self.rho_values.clone(),
            n_values: self.n_values.clone(),
            reps: self.reps,
            dgp_beta: (self.dgp_beta[0], self.dgp_beta[1]),
            x_mean: self.x_mean,
            x_sd: self.x_sd,
            avg_degree: self.avg_degree,
            error_dist: parse_error_dist(&self.error_dist)?,
            gibbs_weights: parse_weights(&self.gibbs_weights)?,
            estimators,
            master_seed,
            gibbs: GibbsConfig {
                n_iter: self.gibbs_n_iter,
                burn_in: self.gibbs_burn_in,
                rho_grid_size: self.gibbs_rho_grid_size,
                prior_beta_variance: self.gibbs_prior_beta_variance,
                weights: parse_weights(&self.gibbs_weights)?,
                seed: 0,
            },
            fit: FitConfig {
                phase1_reps: self.saom_phase1_reps,
                phase2_subphases: self.saom_phase2_subphases,
                phase2_initial_gain: self.saom_phase2_initial_gain,
                phase2_base_iterations: self.saom_phase2_base_iterations,
                phase3_reps: self.saom_phase3_reps,
                derivative_step: self.saom_derivative_step,
                max_wall_seconds: self.saom_max_wall_seconds,
                seed: 0,
            },
            significance_level: self.significance_level,
        })
    }
}

impl FitSaomBlock {
    pub fn to_fit_config(&self, seed: u64) -> FitConfig {
        FitConfig {
            phase1_reps: self.phase1_reps,
            phase2_subphases: self.phase2_subphases,
            phase2_initial_gain: self.phase2_initial_gain,
            phase2_base_iterations: self.phase2_base_iterations,
            phase3_reps: self.phase3_reps,
            derivative_step: self.derivative_step,
            max_wall_seconds: self.max_wall_seconds,
            seed,
        }
    }
}

/// Load a config file, rejecting unknown keys.
pub fn load_config(path: &std::path::Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::invalid(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::invalid(format!("config: {e}")))
}

/// FNV-1a 64-bit over the canonical serialization; hex-encoded.
pub fn config_hash(cfg: &RunConfig) -> String {
    let canonical = serde_json::to_string(cfg).expect("config serializes");
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in canonical.as_bytes() {
        hash ^= *b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{hash:016x}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_unknown_keys() {
        let err = serde_json::from_str::<RunConfig>("{\"sede\": 3}").unwrap_err();
        assert!(err.to_string().contains("unknown field"));
    }

    #[test]
    fn defaults_fill_in() {
        let cfg: RunConfig =
            serde_json::from_str("{\"montecarlo\": {\"reps\": 2, \"n_values\": [30]}}").unwrap();
        let mc = cfg.montecarlo.unwrap();
        assert_eq!(mc.reps, 2);
        assert_eq!(mc.rho_values.len(), 13);
        assert_eq!(mc.error_dist, "logistic");
        assert_eq!(mc.gibbs_n_iter, 4000);
        let grid = mc.to_grid(7).unwrap();
        assert_eq!(grid.n_values, vec![30]);
        assert_eq!(grid.master_seed, 7);
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a: RunConfig = serde_json::from_str("{\"seed\": 1}").unwrap();
        let b: RunConfig = serde_json::from_str("{\"seed\": 1}").unwrap();
        let c: RunConfig = serde_json::from_str("{\"seed\": 2}").unwrap();
        assert_eq!(config_hash(&a), config_hash(&b));
        assert_ne!(config_hash(&a), config_hash(&c));
    }
}
