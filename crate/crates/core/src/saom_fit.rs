//! Method-of-moments estimation of SAOM behaviour parameters.
//!
//! The estimator chooses theta so that the expected end-of-period target
//! statistics of the simulated process match their observed values. It runs
//! the standard three phases of stochastic approximation: a derivative
//! estimate at the starting point (forward finite differences with common
//! random numbers), Robbins-Monro updates with geometrically shrinking
//! gains, and a long evaluation phase at the estimate that yields
//! convergence t-ratios and standard errors.
//!
//! Two problem builders are provided. The cross-sectional construction fakes
//! two identical waves, mirrors one anchored pair of observations so the
//! waves differ, removes the linear shape effect, and freezes every tie as
//! structural. The panel builder ingests two or more observed waves and sums
//! moment contributions across periods with the per-period behaviour rate
//! fixed at one.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::net::Network;
use crate::rng::child_seed;
use crate::saom_core::{
    simulate_period, target_statistics, validate_effects, EffectKind, EffectSpec,
};
use crate::stats::norm_quantile;

/// A fully specified estimation problem over frozen ties.
#[derive(Debug, Clone)]
pub struct SaomProblem {
    pub net: Network,
    /// Ordered behaviour waves y(0), ..., y(T-1); adjacent waves delimit the
    /// T-1 simulated periods.
    pub waves: Vec<Vec<u8>>,
    /// Covariate matrix per wave; period m simulates and scores with the
    /// start-of-period matrix `covariates[m]`.
    pub covariates: Vec<DMatrix<f64>>,
    pub effects: Vec<EffectSpec>,
    /// Opportunities per actor per period; fixed, never estimated.
    pub behaviour_rate: f64,
    /// Mirrored observation pair of the cross-sectional construction.
    pub anchor_pair: Option<(usize, usize)>,
    /// Mean-similarity centering constant, computed once from observed data.
    pub mean_sim: f64,
}

impl SaomProblem {
    pub fn periods(&self) -> usize {
        self.waves.len() - 1
    }

    fn validate(&self) -> Result<()> {
        let n = self.net.n();
        if self.waves.len() < 2 {
            return Err(Error::invalid("a problem needs at least two waves"));
        }
        for (t, w) in self.waves.iter().enumerate() {
            if w.len() != n {
                return Err(Error::invalid(format!(
                    "wave {t} has {} entries for {n} nodes",
                    w.len()
                )));
            }
            if w.iter().any(|&v| v > 1) {
                return Err(Error::invalid(format!("wave {t} is not binary")));
            }
        }
        if self.covariates.len() != self.waves.len() {
            return Err(Error::invalid("one covariate matrix per wave required"));
        }
        for (t, x) in self.covariates.iter().enumerate() {
            if x.nrows() != n {
                return Err(Error::invalid(format!(
                    "covariate matrix {t} has {} rows for {n} nodes",
                    x.nrows()
                )));
            }
        }
        if self.behaviour_rate <= 0.0 {
            return Err(Error::invalid("behaviour rate must be positive"));
        }
        if self.effects.is_empty() {
            return Err(Error::invalid("at least one effect required"));
        }
        validate_effects(&self.effects)?;
        if let Some((a, b)) = self.anchor_pair {
            if self
                .effects
                .iter()
                .any(|e| e.kind == EffectKind::LinearShape)
            {
                return Err(Error::invalid(
                    "linear shape is not identified in the cross-sectional construction",
                ));
            }
            let (w0, w1) = (&self.waves[0], &self.waves[1]);
            if !(w0[a] == 0 && w1[a] == 1 && w0[b] == 1 && w1[b] == 0) {
                return Err(Error::invalid(
                    "anchor pair must be mirrored across the two waves",
                ));
            }
        }
        Ok(())
    }
}

/// Center each covariate column at its pooled mean across the given
/// matrices. Matches the reference estimator's internal treatment of node
/// covariates; without it, no intercept-like effect remains to absorb a
/// covariate location shift once the linear shape effect is gone.
fn center_covariates(mats: &[DMatrix<f64>]) -> Vec<DMatrix<f64>> {
    if mats.is_empty() {
        return Vec::new();
    }
    let k = mats[0].ncols();
    let mut out: Vec<DMatrix<f64>> = mats.to_vec();
    for c in 0..k {
        let mut total = 0.0;
        let mut count = 0usize;
        for m in mats {
            for i in 0..m.nrows() {
                total += m[(i, c)];
                count += 1;
            }
        }
        let mean = total / count as f64;
        for m in &mut out {
            for i in 0..m.nrows() {
                m[(i, c)] -= mean;
            }
        }
    }
    out
}

/// Build the cross-sectional two-wave problem from one observed state.
///
/// Both waves copy `y` except the anchor pair (nodes 0 and 1 by convention),
/// which is mirrored: node 0 goes 0 -> 1 and node 1 goes 1 -> 0. The linear
/// shape effect is removed, the behaviour rate is fixed at one opportunity
/// per actor, and the mean-similarity constant comes from the observed `y`.
pub fn build_cross_sectional_problem(
    net: &Network,
    y: &[u8],
    x: &DMatrix<f64>,
    effects: &[EffectSpec],
) -> Result<SaomProblem> {
    let n = net.n();
    if n < 3 {
        return Err(Error::invalid(
            "cross-sectional construction needs at least 3 nodes (two anchors plus one free node)",
        ));
    }
    if y.len() != n || x.nrows() != n {
        return Err(Error::invalid("dimension mismatch between net, y and x"));
    }
    let kept: Vec<EffectSpec> = effects
        .iter()
        .filter(|e| e.kind != EffectKind::LinearShape)
        .cloned()
        .collect();

    let mut wave0 = y.to_vec();
    let mut wave1 = y.to_vec();
    wave0[0] = 0;
    wave1[0] = 1;
    wave0[1] = 1;
    wave1[1] = 0;

    let covariates = center_covariates(&[x.clone()]);
    let problem = SaomProblem {
        net: net.clone(),
        waves: vec![wave0, wave1],
        covariates: vec![covariates[0].clone(), covariates[0].clone()],
        effects: kept,
        behaviour_rate: 1.0,
        anchor_pair: Some((0, 1)),
        mean_sim: crate::saom_core::mean_similarity(net, y),
    };
    problem.validate()?;
    Ok(problem)
}

/// Build a multi-wave panel problem: T >= 2 observed waves, per-period rate
/// fixed at one, moment contributions summed across the T-1 periods. The
/// linear shape effect is permitted here.
pub fn build_panel_problem(
    net: &Network,
    waves: &[Vec<u8>],
    covariates: &[DMatrix<f64>],
    effects: &[EffectSpec],
) -> Result<SaomProblem> {
    if waves.len() < 2 {
        return Err(Error::invalid("panel problems need at least two waves"));
    }
    if covariates.len() != waves.len() {
        return Err(Error::invalid("one covariate matrix per wave required"));
    }
    let mean_sim = {
        let mut total = 0.0;
        for w in waves {
            if w.len() != net.n() {
                return Err(Error::invalid("wave length mismatch"));
            }
            total += crate::saom_core::mean_similarity(net, w);
        }
        total / waves.len() as f64
    };
    let problem = SaomProblem {
        net: net.clone(),
        waves: waves.to_vec(),
        covariates: center_covariates(covariates),
        effects: effects.to_vec(),
        behaviour_rate: 1.0,
        anchor_pair: None,
        mean_sim,
    };
    problem.validate()?;
    Ok(problem)
}

/// Stochastic-approximation schedule. Phase sizes follow standard SAOM
/// practice; every constant is carried in the result's provenance (the
/// config travels with the fit through the harness CSV seed column).
#[derive(Debug, Clone)]
pub struct FitConfig {
    /// Simulations for the initial derivative estimate; `None` resolves to
    /// 7 + 3p for p parameters.
    pub phase1_reps: Option<usize>,
    pub phase2_subphases: usize,
    /// Gain of the first subphase, halved in each later subphase.
    pub phase2_initial_gain: f64,
    /// Iterations in subphase s (1-based) are base * (1 + s).
    pub phase2_base_iterations: usize,
    pub phase3_reps: usize,
    /// Forward finite-difference perturbation per coordinate.
    pub derivative_step: f64,
    /// Wall-clock cap; exceeding it aborts with `converged = false`.
    pub max_wall_seconds: f64,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            phase1_reps: None,
            phase2_subphases: 4,
            phase2_initial_gain: 0.2,
            phase2_base_iterations: 50,
            phase3_reps: 1000,
            derivative_step: 0.1,
            max_wall_seconds: 3600.0,
            seed: 0,
        }
    }
}

impl FitConfig {
    fn validate(&self) -> Result<()> {
        if self.phase2_subphases == 0
            || self.phase2_base_iterations == 0
            || self.phase3_reps < 2
            || self.derivative_step <= 0.0
            || self.max_wall_seconds <= 0.0
        {
            return Err(Error::invalid("fit configuration values must be positive"));
        }
        if !(0.0..=1.0).contains(&self.phase2_initial_gain) || self.phase2_initial_gain == 0.0 {
            return Err(Error::invalid("gain must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// Fitted coefficients with their convergence diagnostics.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub effect_labels: Vec<String>,
    pub theta_hat: Vec<f64>,
    pub std_errors: Vec<f64>,
    /// Phase-3 convergence t-ratio per parameter: mean simulated-minus-
    /// observed deviation over its standard deviation.
    pub t_conv: Vec<f64>,
    pub t_conv_max: f64,
    pub converged: bool,
    pub wall_seconds: f64,
    pub seed: u64,
    /// Present when the fit aborted (wall cap, singular derivative, numeric
    /// breakdown).
    pub failure: Option<String>,
}

impl FitResult {
    pub fn csv_header() -> &'static str {
        "effects,theta,se,t_conv,t_conv_max,converged,accepted,wall_seconds,seed"
    }

    /// One CSV row; multi-valued fields are ';'-joined in effect order.
    pub fn to_csv_row(&self, spatial_index: Option<usize>) -> String {
        let join = |v: &[f64]| {
            v.iter()
                .map(|x| format!("{x:.6}"))
                .collect::<Vec<_>>()
                .join(";")
        };
        let accepted = spatial_index
            .map(|s| convergence_filter(self, s))
            .unwrap_or(self.converged);
        format!(
            "{},{},{},{},{:.6},{},{},{:.3},{}",
            self.effect_labels.join(";"),
            join(&self.theta_hat),
            join(&self.std_errors),
            join(&self.t_conv),
            self.t_conv_max,
            u8::from(self.converged),
            u8::from(accepted),
            self.wall_seconds,
            self.seed
        )
    }
}

/// Accept a fit only when every convergence t-ratio is small and the spatial
/// parameter's ratio is even smaller: max <= 0.2 and |t_spatial| <= 0.1.
pub fn convergence_filter(result: &FitResult, spatial_index: usize) -> bool {
    result.converged
        && result.t_conv_max <= 0.2
        && result.t_conv[spatial_index].abs() <= 0.1
}

/// Two-sided Wald significance per parameter. A zero standard error leaves
/// the test undefined and is reported as not significant.
pub fn wald_significance(result: &FitResult, level: f64) -> Vec<bool> {
    let crit = norm_quantile(1.0 - level / 2.0);
    result
        .theta_hat
        .iter()
        .zip(&result.std_errors)
        .map(|(&t, &se)| se > 0.0 && (t / se).abs() > crit)
        .collect()
}

struct MomentMachine<'a> {
    problem: &'a SaomProblem,
}

impl<'a> MomentMachine<'a> {
    fn observed(&self) -> Result<Vec<f64>> {
        let p = self.problem.effects.len();
        let mut s = vec![0.0; p];
        for m in 0..self.problem.periods() {
            let t = target_statistics(
                &self.problem.net,
                &self.problem.waves[m + 1],
                &self.problem.effects,
                &self.problem.covariates[m],
                Some(self.problem.mean_sim),
            )?;
            for j in 0..p {
                s[j] += t[j];
            }
        }
        Ok(s)
    }

    /// Simulate every period once at theta and sum end-state statistics.
    fn simulated(&self, theta: &[f64], seed: u64) -> Result<Vec<f64>> {
        let p = self.problem.effects.len();
        let mut s = vec![0.0; p];
        for m in 0..self.problem.periods() {
            let end = simulate_period(
                &self.problem.net,
                &self.problem.waves[m],
                &self.problem.effects,
                theta,
                self.problem.behaviour_rate,
                &self.problem.covariates[m],
                Some(self.problem.mean_sim),
                child_seed(seed, &[m as u64]),
            )?;
            let t = target_statistics(
                &self.problem.net,
                &end.y,
                &self.problem.effects,
                &self.problem.covariates[m],
                Some(self.problem.mean_sim),
            )?;
            for j in 0..p {
                s[j] += t[j];
            }
        }
        Ok(s)
    }

    /// Forward finite-difference derivative of E[S] at theta, with common
    /// random numbers across the base and perturbed arms.
    fn derivative(
        &self,
        theta: &[f64],
        h: f64,
        reps: usize,
        seed_tag: u64,
        base_seed: u64,
    ) -> Result<DMatrix<f64>> {
        let p = theta.len();
        let mut d = DMatrix::zeros(p, p);
        for r in 0..reps {
            let s = child_seed(base_seed, &[seed_tag, r as u64]);
            let base = self.simulated(theta, s)?;
            for j in 0..p {
                let mut shifted = theta.to_vec();
                shifted[j] += h;
                let arm = self.simulated(&shifted, s)?;
                for k in 0..p {
                    d[(k, j)] += (arm[k] - base[k]) / h;
                }
            }
        }
        d /= reps as f64;
        Ok(d)
    }
}

fn clamp_vec(v: &mut DVector<f64>, cap: f64) {
    for x in v.iter_mut() {
        *x = x.clamp(-cap, cap);
    }
}

/// Hard box for the iterate: statistics saturate far below this scale, so
/// anything beyond it is a runaway trajectory, not signal.
const THETA_CAP: f64 = 20.0;

fn aborted(
    problem: &SaomProblem,
    theta: &[f64],
    seed: u64,
    start: Instant,
    reason: String,
) -> FitResult {
    let p = problem.effects.len();
    FitResult {
        effect_labels: problem.effects.iter().map(|e| e.label.clone()).collect(),
        theta_hat: theta.to_vec(),
        std_errors: vec![f64::NAN; p],
        t_conv: vec![f64::NAN; p],
        t_conv_max: f64::INFINITY,
        converged: false,
        wall_seconds: start.elapsed().as_secs_f64(),
        seed,
        failure: Some(reason),
    }
}

/// Estimate theta by the method of moments.
///
/// Phase 1 estimates the derivative matrix at theta = 0 and takes one Newton
/// step; a singular derivative is retried once with a doubled perturbation.
/// Phase 2 runs Robbins-Monro updates `theta <- theta - a D^{-1}(S_sim -
/// S_obs)` with the gain halved per subphase, the derivative re-measured at
/// the running estimate between subphases, and theta averaged within each
/// subphase; the final subphase average is the estimate. Phase 3 simulates
/// `phase3_reps` times at the estimate, re-measures the derivative there,
/// and reports convergence t-ratios plus standard errors from
/// `D^{-1} Sigma D^{-T}`. The wall cap aborts with `converged = false`
/// rather than an error.
pub fn mom_estimate(problem: &SaomProblem, cfg: &FitConfig) -> Result<FitResult> {
    problem.validate()?;
    cfg.validate()?;
    let start = Instant::now();
    let p = problem.effects.len();
    let machine = MomentMachine { problem };
    let s_obs = machine.observed()?;

    let phase1_reps = cfg.phase1_reps.unwrap_or(7 + 3 * p);
    let theta0 = vec![0.0; p];

    // Phase 1: derivative at the origin, retry once with doubled step.
    let mut h = cfg.derivative_step;
    let mut d = machine.derivative(&theta0, h, phase1_reps, 1, cfg.seed)?;
    let mut d_lu = d.clone().lu();
    if !lu_usable(&d_lu, p) {
        h *= 2.0;
        d = machine.derivative(&theta0, h, phase1_reps, 11, cfg.seed)?;
        d_lu = d.clone().lu();
        if !lu_usable(&d_lu, p) {
            return Err(Error::numeric(format!(
                "derivative matrix singular at theta = 0 even with doubled step h = {h}; \
                 observed targets {s_obs:?}"
            )));
        }
    }

    let mut mean_dev = DVector::zeros(p);
    for r in 0..phase1_reps {
        let s = machine.simulated(&theta0, child_seed(cfg.seed, &[1, r as u64]))?;
        for j in 0..p {
            mean_dev[j] += (s[j] - s_obs[j]) / phase1_reps as f64;
        }
    }
    let mut newton = d_lu.solve(&mean_dev).unwrap_or_else(|| DVector::zeros(p));
    clamp_vec(&mut newton, 3.0);
    let mut theta = DVector::from_vec(theta0) - newton;

    // Phase 2: Robbins-Monro subphases. The derivative is re-measured at the
    // current iterate before each subphase after the first; the curvature at
    // theta = 0 badly misstates the step scale once the iterate moves into
    // saturated regions, and a stale preconditioner leaves the subphase
    // averages short of the root.
    for s in 1..=cfg.phase2_subphases {
        if s > 1 {
            let d_new = machine.derivative(
                theta.as_slice(),
                cfg.derivative_step,
                phase1_reps,
                20 + s as u64,
                cfg.seed,
            )?;
            let d_new_lu = d_new.clone().lu();
            // Each target statistic is increasing in its own coefficient; a
            // nonpositive diagonal marks a noise-dominated estimate, which
            // would turn the update into positive feedback.
            let diag_ok = (0..p).all(|j| d_new[(j, j)] > 0.0);
            if diag_ok && lu_usable(&d_new_lu, p) {
                d = d_new;
                d_lu = d_new_lu;
            }
        }
        let gain = cfg.phase2_initial_gain / 2f64.powi(s as i32 - 1);
        let iters = cfg.phase2_base_iterations * (1 + s);
        let mut subphase_sum = DVector::zeros(p);
        for it in 0..iters {
            if start.elapsed().as_secs_f64() > cfg.max_wall_seconds {
                return Ok(aborted(
                    problem,
                    theta.as_slice(),
                    cfg.seed,
                    start,
                    format!("wall cap {}s exceeded in phase 2", cfg.max_wall_seconds),
                ));
            }
            let sim = machine.simulated(
                theta.as_slice(),
                child_seed(cfg.seed, &[2, s as u64, it as u64]),
            )?;
            let dev = DVector::from_fn(p, |j, _| sim[j] - s_obs[j]);
            let mut step = match d_lu.solve(&dev) {
                Some(sol) => sol,
                None => {
                    return Ok(aborted(
                        problem,
                        theta.as_slice(),
                        cfg.seed,
                        start,
                        "derivative factorization unusable in phase 2".to_string(),
                    ))
                }
            };
            clamp_vec(&mut step, 4.0);
            theta -= gain * step;
            clamp_vec(&mut theta, THETA_CAP);
            if !theta.iter().all(|v| v.is_finite()) {
                return Ok(aborted(
                    problem,
                    &vec![f64::NAN; p],
                    cfg.seed,
                    start,
                    "theta diverged in phase 2".to_string(),
                ));
            }
            subphase_sum += &theta;
        }
        theta = subphase_sum / iters as f64;
    }
    let theta_hat: Vec<f64> = theta.iter().copied().collect();

    // Phase 3: long evaluation at the estimate. The same common-random-
    // number replicates also measure the derivative there, which the
    // covariance needs; thirteen-odd difference reps would leave the
    // standard errors at the mercy of a noisy D.
    let mut sum_dev: DVector<f64> = DVector::zeros(p);
    let mut sims: Vec<Vec<f64>> = Vec::with_capacity(cfg.phase3_reps);
    let mut d3 = DMatrix::zeros(p, p);
    for r in 0..cfg.phase3_reps {
        if start.elapsed().as_secs_f64() > cfg.max_wall_seconds {
            return Ok(aborted(
                problem,
                &theta_hat,
                cfg.seed,
                start,
                format!("wall cap {}s exceeded in phase 3", cfg.max_wall_seconds),
            ));
        }
        let rep_seed = child_seed(cfg.seed, &[3, r as u64]);
        let s = machine.simulated(&theta_hat, rep_seed)?;
        for j in 0..p {
            sum_dev[j] += s[j] - s_obs[j];
        }
        for j in 0..p {
            let mut shifted = theta_hat.clone();
            shifted[j] += cfg.derivative_step;
            let arm = machine.simulated(&shifted, rep_seed)?;
            for k in 0..p {
                d3[(k, j)] += (arm[k] - s[k]) / cfg.derivative_step;
            }
        }
        sims.push(s);
    }
    d3 /= cfg.phase3_reps as f64;
    let r3 = cfg.phase3_reps as f64;
    let mean_sim_stats: Vec<f64> = (0..p)
        .map(|j| sims.iter().map(|s| s[j]).sum::<f64>() / r3)
        .collect();
    let mut sigma = DMatrix::zeros(p, p);
    for s in &sims {
        for a in 0..p {
            for b in 0..p {
                sigma[(a, b)] += (s[a] - mean_sim_stats[a]) * (s[b] - mean_sim_stats[b]);
            }
        }
    }
    sigma /= r3 - 1.0;

    let t_conv: Vec<f64> = (0..p)
        .map(|j| {
            let mean: f64 = sum_dev[j] / r3;
            let sd = sigma[(j, j)].sqrt();
            if sd > 0.0 {
                mean / sd
            } else if mean.abs() < 1e-12 {
                0.0
            } else {
                f64::INFINITY * mean.signum()
            }
        })
        .collect();
    let t_conv_max = t_conv.iter().fold(0.0f64, |m, t| m.max(t.abs()));

    // Covariance through the derivative at the estimate; fall back to the
    // phase-2 derivative if it degenerates.
    let d3_lu = d3.clone().lu();
    let d_inv = if lu_usable(&d3_lu, p) {
        d3_lu.solve(&DMatrix::identity(p, p))
    } else {
        d.clone().lu().solve(&DMatrix::identity(p, p))
    };
    let std_errors = match d_inv {
        Some(dinv) => {
            let cov = &dinv * &sigma * dinv.transpose();
            (0..p).map(|j| cov[(j, j)].max(0.0).sqrt()).collect()
        }
        None => {
            return Ok(aborted(
                problem,
                &theta_hat,
                cfg.seed,
                start,
                "derivative singular at the estimate".to_string(),
            ))
        }
    };

    Ok(FitResult {
        effect_labels: problem.effects.iter().map(|e| e.label.clone()).collect(),
        theta_hat,
        std_errors,
        t_conv,
        t_conv_max,
        converged: true,
        wall_seconds: start.elapsed().as_secs_f64(),
        seed: cfg.seed,
        failure: None,
    })
}

fn lu_usable(lu: &nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>, p: usize) -> bool {
    let det = lu.determinant();
    det.is_finite() && det.abs() > 1e-10 && p > 0
}
