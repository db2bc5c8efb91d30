//! Monte Carlo harness: sweep autocorrelation and sample size, run the
//! requested estimators on identical per-replication datasets, and aggregate
//! rows into the summary tables.
//!
//! Child seeds derive from (master seed, rho, n, replication, purpose)
//! through the counter-based scheme in [`crate::rng`], so cells parallelize
//! without sequence coupling and the full grid output is a pure function of
//! the [`ExperimentGrid`]. Wall-clock timings are kept in memory for
//! logging but written as zeros in the canonical CSV: runtime benchmarking
//! is out of scope and the results files must reproduce byte-for-byte.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::bsar::{gibbs_fit, simulate_bsar, BsarParams, ErrorDistribution, GibbsConfig, GibbsWeights};
use crate::error::{Error, Result};
use crate::net::generate_random_geometric;
use crate::rng::{child_seed, f64_tag, rng_from_seed};
use crate::saom_core::EffectSpec;
use crate::saom_fit::{
    build_cross_sectional_problem, convergence_filter, mom_estimate, wald_significance, FitConfig,
};
use crate::stats::RunningMoments;

/// Estimators the harness can run on a replication.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Estimator {
    Gibbs,
    SaomAvSim,
    SaomAvAlt,
}

impl Estimator {
    pub fn id(&self) -> &'static str {
        match self {
            Estimator::Gibbs => "gibbs",
            Estimator::SaomAvSim => "saom_avsim",
            Estimator::SaomAvAlt => "saom_avalt",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "gibbs" => Ok(Estimator::Gibbs),
            "saom_avsim" => Ok(Estimator::SaomAvSim),
            "saom_avalt" => Ok(Estimator::SaomAvAlt),
            other => Err(Error::invalid(format!("unknown estimator `{other}`"))),
        }
    }
}

/// Full experimental design.
#[derive(Debug, Clone)]
pub struct ExperimentGrid {
    pub rho_values: Vec<f64>,
    pub n_values: Vec<usize>,
    pub reps: usize,
    /// Intercept and slope of the data-generating process.
    pub dgp_beta: (f64, f64),
    pub x_mean: f64,
    pub x_sd: f64,
    pub avg_degree: f64,
    /// Latent error law of the data-generating process. The published
    /// comparison numbers are only reproducible with logistic errors (the
    /// slope recoveries sit at the logit scale), so that is the default.
    pub error_dist: ErrorDistribution,
    /// Connectivity handed to the Gibbs sampler; raw adjacency emulates the
    /// reference pipeline (rho reads on the unnormalized scale).
    pub gibbs_weights: GibbsWeights,
    pub estimators: Vec<Estimator>,
    pub master_seed: u64,
    /// Sampler settings applied to every Gibbs run (seed overridden per
    /// replication).
    pub gibbs: GibbsConfig,
    /// Fit settings applied to every SAOM run (seed overridden per
    /// replication).
    pub fit: FitConfig,
    /// Significance level for both estimators' tests.
    pub significance_level: f64,
}

impl Default for ExperimentGrid {
    fn default() -> Self {
        ExperimentGrid {
            rho_values: vec![
                -0.8, -0.6, -0.4, -0.3, -0.2, -0.1, 0.0, 0.1, 0.2, 0.3, 0.4, 0.6, 0.8,
            ],
            n_values: vec![50, 250, 500],
            reps: 500,
            dgp_beta: (4.0, -2.0),
            x_mean: 2.0,
            x_sd: 2.0,
            avg_degree: 5.0,
            error_dist: ErrorDistribution::Logistic,
            gibbs_weights: GibbsWeights::RawAdjacency,
            estimators: vec![Estimator::Gibbs, Estimator::SaomAvSim],
            master_seed: 0,
            gibbs: GibbsConfig::default(),
            fit: FitConfig::default(),
            significance_level: 0.05,
        }
    }
}

impl ExperimentGrid {
    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::invalid("reps must be at least 1"));
        }
        if self.x_sd <= 0.0 {
            return Err(Error::invalid("x_sd must be positive"));
        }
        if self.estimators.is_empty() {
            return Err(Error::invalid("at least one estimator required"));
        }
        if self.rho_values.is_empty() || self.n_values.is_empty() {
            return Err(Error::invalid("rho and n grids must be nonempty"));
        }
        Ok(())
    }
}

/// Design matrix with an intercept column and iid normal covariate columns.
pub fn random_design(n: usize, k: usize, x_mean: f64, x_sd: f64, seed: u64) -> DMatrix<f64> {
    let mut rng = rng_from_seed(seed);
    DMatrix::from_fn(n, k, |_, j| {
        if j == 0 {
            1.0
        } else {
            let z: f64 = rng.sample(StandardNormal);
            x_mean + x_sd * z
        }
    })
}

/// One estimator outcome on one replication.
#[derive(Debug, Clone)]
pub struct ReplicationRow {
    pub rho: f64,
    pub n: usize,
    pub rep: usize,
    pub estimator: Estimator,
    pub spatial_est: f64,
    pub spatial_se: f64,
    pub spatial_sig: bool,
    pub slope_est: f64,
    pub slope_se: f64,
    pub slope_sig: bool,
    pub converged: bool,
    pub accepted: bool,
    /// Measured wall seconds; diagnostic only, never serialized as-is.
    pub seconds: f64,
    pub seed: u64,
    /// Failure description when the estimator erred.
    pub failure: Option<String>,
}

impl ReplicationRow {
    pub fn cell_id(&self) -> String {
        format!("rho{}_n{}", self.rho, self.n)
    }
}

fn failed_row(
    rho: f64,
    n: usize,
    rep: usize,
    estimator: Estimator,
    seed: u64,
    seconds: f64,
    msg: String,
) -> ReplicationRow {
    ReplicationRow {
        rho,
        n,
        rep,
        estimator,
        spatial_est: f64::NAN,
        spatial_se: f64::NAN,
        spatial_sig: false,
        slope_est: f64::NAN,
        slope_se: f64::NAN,
        slope_sig: false,
        converged: false,
        accepted: false,
        seconds,
        seed,
        failure: Some(msg),
    }
}

fn run_replication(
    rho: f64,
    n: usize,
    rep: usize,
    grid: &ExperimentGrid,
) -> Result<Vec<ReplicationRow>> {
    let tags = |purpose: u64| [purpose, f64_tag(rho), n as u64, rep as u64];
    let net_seed = child_seed(grid.master_seed, &tags(1));
    let x_seed = child_seed(grid.master_seed, &tags(2));
    let eps_seed = child_seed(grid.master_seed, &tags(3));

    let net = generate_random_geometric(n, grid.avg_degree, net_seed)?;
    let x = random_design(n, 2, grid.x_mean, grid.x_sd, x_seed);
    let mut params = BsarParams::new(rho, vec![grid.dgp_beta.0, grid.dgp_beta.1]);
    params.error_dist = grid.error_dist;
    let draw = simulate_bsar(&net, &x, &params, eps_seed)?;

    let mut rows = Vec::with_capacity(grid.estimators.len());
    for &estimator in &grid.estimators {
        let est_seed = child_seed(grid.master_seed, &tags(10 + estimator as u64));
        let start = std::time::Instant::now();
        let row = match estimator {
            Estimator::Gibbs => {
                let cfg = GibbsConfig {
                    seed: est_seed,
                    weights: grid.gibbs_weights,
                    ..grid.gibbs.clone()
                };
                match gibbs_fit(&net, &x, &draw.y, &cfg) {
                    Ok(summary) => {
                        let r = summary.rho_index();
                        // Parameter order: rho, beta0 (intercept), beta1 (slope).
                        let slope = 2;
                        ReplicationRow {
                            rho,
                            n,
                            rep,
                            estimator,
                            spatial_est: summary.means[r],
                            spatial_se: summary.sds[r],
                            spatial_sig: summary.significant(r, grid.significance_level),
                            slope_est: summary.means[slope],
                            slope_se: summary.sds[slope],
                            slope_sig: summary.significant(slope, grid.significance_level),
                            converged: true,
                            accepted: true,
                            seconds: start.elapsed().as_secs_f64(),
                            seed: est_seed,
                            failure: None,
                        }
                    }
                    Err(e) => failed_row(
                        rho,
                        n,
                        rep,
                        estimator,
                        est_seed,
                        start.elapsed().as_secs_f64(),
                        e.to_string(),
                    ),
                }
            }
            Estimator::SaomAvSim | Estimator::SaomAvAlt => {
                let spatial = if estimator == Estimator::SaomAvSim {
                    EffectSpec::av_sim()
                } else {
                    EffectSpec::av_alt()
                };
                let effects = [spatial, EffectSpec::eff_from(1)];
                let outcome = build_cross_sectional_problem(&net, &draw.y, &x, &effects)
                    .and_then(|problem| {
                        let cfg = FitConfig {
                            seed: est_seed,
                            ..grid.fit.clone()
                        };
                        mom_estimate(&problem, &cfg)
                    });
                match outcome {
                    Ok(fit) => {
                        let sig = wald_significance(&fit, grid.significance_level);
                        ReplicationRow {
                            rho,
                            n,
                            rep,
                            estimator,
                            spatial_est: fit.theta_hat[0],
                            spatial_se: fit.std_errors[0],
                            spatial_sig: sig[0],
                            slope_est: fit.theta_hat[1],
                            slope_se: fit.std_errors[1],
                            slope_sig: sig[1],
                            converged: fit.converged,
                            accepted: convergence_filter(&fit, 0),
                            seconds: start.elapsed().as_secs_f64(),
                            seed: est_seed,
                            failure: fit.failure,
                        }
                    }
                    Err(e) => failed_row(
                        rho,
                        n,
                        rep,
                        estimator,
                        est_seed,
                        start.elapsed().as_secs_f64(),
                        e.to_string(),
                    ),
                }
            }
        };
        rows.push(row);
    }
    Ok(rows)
}

/// Run every replication of one (rho, n) cell. Replications are independent
/// work items; estimator failures are recorded as flagged rows and never
/// abort the cell.
pub fn run_cell(rho: f64, n: usize, reps: usize, grid: &ExperimentGrid) -> Result<Vec<ReplicationRow>> {
    grid.validate()?;
    let nested: Vec<Vec<ReplicationRow>> = (0..reps)
        .into_par_iter()
        .map(|rep| run_replication(rho, n, rep, grid))
        .collect::<Result<_>>()?;
    Ok(nested.into_iter().flatten().collect())
}

/// Run the whole grid, cells in (n, rho) order, optionally on a bounded
/// worker pool.
pub fn run_grid(
    grid: &ExperimentGrid,
    workers: Option<usize>,
) -> Result<(Vec<ReplicationRow>, Vec<CellSummary>)> {
    grid.validate()?;
    let run = || -> Result<Vec<ReplicationRow>> {
        let mut rows = Vec::new();
        for &n in &grid.n_values {
            for &rho in &grid.rho_values {
                rows.extend(run_cell(rho, n, grid.reps, grid)?);
            }
        }
        Ok(rows)
    };
    let rows = match workers {
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w.max(1))
                .build()
                .map_err(|e| Error::numeric(format!("worker pool: {e}")))?;
            pool.install(run)?
        }
        None => run()?,
    };
    let summaries = aggregate(&rows);
    Ok((rows, summaries))
}

/// Aggregated cell-by-estimator summary. Moments cover accepted rows only
/// (the convergence discard rule); cells with no accepted rows report their
/// counts and absent moments.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub rho: f64,
    pub n: usize,
    pub estimator: Estimator,
    pub total: usize,
    pub converged: usize,
    pub accepted: usize,
    pub convergence_rate: f64,
    pub spatial_mean: Option<f64>,
    pub spatial_sd: Option<f64>,
    pub slope_mean: Option<f64>,
    pub slope_sd: Option<f64>,
    pub prop_sig_spatial: Option<f64>,
    pub prop_sig_slope: Option<f64>,
}

/// Aggregate rows into per-cell summaries, sorted by (estimator, n, rho).
/// Row order never matters.
pub fn aggregate(rows: &[ReplicationRow]) -> Vec<CellSummary> {
    let mut keys: Vec<(Estimator, usize, u64, f64)> = rows
        .iter()
        .map(|r| (r.estimator, r.n, f64_tag(r.rho), r.rho))
        .collect();
    keys.sort_by(|a, b| {
        (a.0, a.1)
            .cmp(&(b.0, b.1))
            .then(a.3.partial_cmp(&b.3).expect("finite rho"))
    });
    keys.dedup_by(|a, b| a.0 == b.0 && a.1 == b.1 && a.2 == b.2);

    keys.into_iter()
        .map(|(estimator, n, _, rho)| {
            let cell: Vec<&ReplicationRow> = rows
                .iter()
                .filter(|r| r.estimator == estimator && r.n == n && f64_tag(r.rho) == f64_tag(rho))
                .collect();
            let total = cell.len();
            let converged = cell.iter().filter(|r| r.converged).count();
            let accepted: Vec<&&ReplicationRow> =
                cell.iter().filter(|r| r.accepted).collect();

            let mut spatial = RunningMoments::new();
            let mut slope = RunningMoments::new();
            let mut sig_spatial = 0usize;
            let mut sig_slope = 0usize;
            for r in &accepted {
                spatial.push(r.spatial_est);
                slope.push(r.slope_est);
                if r.spatial_sig {
                    sig_spatial += 1;
                }
                if r.slope_sig {
                    sig_slope += 1;
                }
            }
            let count = accepted.len();
            let some_if = |v: f64| if count > 0 { Some(v) } else { None };
            CellSummary {
                rho,
                n,
                estimator,
                total,
                converged,
                accepted: count,
                convergence_rate: if total > 0 {
                    count as f64 / total as f64
                } else {
                    0.0
                },
                spatial_mean: some_if(spatial.mean()),
                spatial_sd: some_if(spatial.sd()),
                slope_mean: some_if(slope.mean()),
                slope_sd: some_if(slope.sd()),
                prop_sig_spatial: some_if(sig_spatial as f64 / count.max(1) as f64),
                prop_sig_slope: some_if(sig_slope as f64 / count.max(1) as f64),
            }
        })
        .collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x:.6}"),
        _ => "NA".to_string(),
    }
}

fn fmt_est(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.6}")
    } else {
        "NA".to_string()
    }
}

/// Canonical per-replication CSV. The seconds column is zeroed unless
/// `include_timings` is set: the results file must be a pure function of the
/// grid, and runtime benchmarking is a non-goal.
pub fn rows_to_csv(rows: &[ReplicationRow], include_timings: bool) -> String {
    let mut out = String::from(
        "cell,rho,n,rep,estimator,spatial_est,spatial_se,spatial_sig,slope_est,slope_se,slope_sig,converged,accepted,seconds,seed\n",
    );
    for r in rows {
        let secs = if include_timings { r.seconds } else { 0.0 };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{:.3},{}\n",
            r.cell_id(),
            r.rho,
            r.n,
            r.rep,
            r.estimator.id(),
            fmt_est(r.spatial_est),
            fmt_est(r.spatial_se),
            u8::from(r.spatial_sig),
            fmt_est(r.slope_est),
            fmt_est(r.slope_se),
            u8::from(r.slope_sig),
            u8::from(r.converged),
            u8::from(r.accepted),
            secs,
            r.seed
        ));
    }
    out
}

fn table_columns(summaries: &[CellSummary]) -> (Vec<f64>, Vec<(Estimator, usize)>) {
    let mut rhos: Vec<f64> = Vec::new();
    let mut cols: Vec<(Estimator, usize)> = Vec::new();
    for s in summaries {
        if !rhos.iter().any(|&r| f64_tag(r) == f64_tag(s.rho)) {
            rhos.push(s.rho);
        }
        if !cols.contains(&(s.estimator, s.n)) {
            cols.push((s.estimator, s.n));
        }
    }
    rhos.sort_by(|a, b| a.partial_cmp(b).expect("finite rho"));
    cols.sort();
    (rhos, cols)
}

fn find<'a>(
    summaries: &'a [CellSummary],
    rho: f64,
    col: (Estimator, usize),
) -> Option<&'a CellSummary> {
    summaries
        .iter()
        .find(|s| f64_tag(s.rho) == f64_tag(rho) && s.estimator == col.0 && s.n == col.1)
}

/// Accepted-count table: one row per rho, one column per estimator-by-n.
pub fn counts_table_csv(summaries: &[CellSummary]) -> String {
    let (rhos, cols) = table_columns(summaries);
    let mut out = String::from("rho");
    for (e, n) in &cols {
        out.push_str(&format!(",{}_{}", e.id(), n));
    }
    out.push('\n');
    for &rho in &rhos {
        out.push_str(&format!("{rho}"));
        for &col in &cols {
            match find(summaries, rho, col) {
                Some(s) => out.push_str(&format!(",{}", s.accepted)),
                None => out.push_str(",NA"),
            }
        }
        out.push('\n');
    }
    out
}

fn moment_table_csv(
    summaries: &[CellSummary],
    pick: impl Fn(&CellSummary) -> (Option<f64>, Option<f64>),
) -> String {
    let (rhos, cols) = table_columns(summaries);
    let mut out = String::from("rho");
    for (e, n) in &cols {
        out.push_str(&format!(",mean_{}_{},sd_{}_{}", e.id(), n, e.id(), n));
    }
    out.push('\n');
    for &rho in &rhos {
        out.push_str(&format!("{rho}"));
        for &col in &cols {
            match find(summaries, rho, col) {
                Some(s) => {
                    let (m, sd) = pick(s);
                    out.push_str(&format!(",{},{}", fmt_opt(m), fmt_opt(sd)));
                }
                None => out.push_str(",NA,NA"),
            }
        }
        out.push('\n');
    }
    out
}

/// Spatial-estimate distribution table (means and standard deviations).
pub fn spatial_table_csv(summaries: &[CellSummary]) -> String {
    moment_table_csv(summaries, |s| (s.spatial_mean, s.spatial_sd))
}

/// Slope-estimate distribution table.
pub fn slope_table_csv(summaries: &[CellSummary]) -> String {
    moment_table_csv(summaries, |s| (s.slope_mean, s.slope_sd))
}

/// Long-format significance proportions and acceptance rates per cell and
/// estimator.
pub fn significance_csv(summaries: &[CellSummary]) -> String {
    let mut out = String::from(
        "rho,n,estimator,prop_sig_spatial,prop_sig_slope,accepted,total,convergence_rate\n",
    );
    let mut sorted: Vec<&CellSummary> = summaries.iter().collect();
    sorted.sort_by(|a, b| {
        (a.estimator, a.n)
            .cmp(&(b.estimator, b.n))
            .then(a.rho.partial_cmp(&b.rho).expect("finite rho"))
    });
    for s in sorted {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{:.6}\n",
            s.rho,
            s.n,
            s.estimator.id(),
            fmt_opt(s.prop_sig_spatial),
            fmt_opt(s.prop_sig_slope),
            s.accepted,
            s.total,
            s.convergence_rate
        ));
    }
    out
}
