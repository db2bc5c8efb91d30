//! Acceptance suite: the desk-scale Monte Carlo protocol plus the fast
//! oracle checks. One test per criterion; each prints a PASS/FAIL line with
//! the measured values.
//!
//! Desk protocol: reps = 50, n in {50, 250}, rho in {-0.8, -0.3, 0, 0.3,
//! 0.8}, fixed master seed, Gibbs + SAOM(avSim) on identical data per
//! replication, plus one (rho = 0.4, n = 250) cell fitting avSim and avAlt
//! paired. The grid runs twice to check byte determinism of the results CSV.

use std::collections::HashMap;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use netdiff_core::bsar::{
    gibbs_fit, probit_fit, simulate_bsar, BsarParams, GibbsConfig, PosteriorSummary,
};
use netdiff_core::mc::{
    aggregate, rows_to_csv, run_cell, run_grid, CellSummary, Estimator, ExperimentGrid,
};
use netdiff_core::net::{generate_random_geometric, Network};
use netdiff_core::rng::{child_seed, rng_from_seed};
use netdiff_core::saom_core::{
    effect_statistic, mean_similarity, ministep_probabilities, simulate_period_traced,
    target_statistics, EffectSpec,
};
use netdiff_core::saom_fit::build_cross_sectional_problem;
use rand::Rng;
use rand_distr::StandardNormal;

const DESK_SEED: u64 = 20260808;
const DESK_RHOS: [f64; 5] = [-0.8, -0.3, 0.0, 0.3, 0.8];

struct Desk {
    summaries: Vec<CellSummary>,
    ratio_summaries: Vec<CellSummary>,
    rows_csv_first: String,
    rows_csv_second: String,
}

fn desk_grid() -> ExperimentGrid {
    ExperimentGrid {
        rho_values: DESK_RHOS.to_vec(),
        n_values: vec![50, 250],
        reps: 50,
        estimators: vec![Estimator::Gibbs, Estimator::SaomAvSim],
        master_seed: DESK_SEED,
        ..ExperimentGrid::default()
    }
}

fn desk() -> &'static Desk {
    static DESK: OnceLock<Desk> = OnceLock::new();
    DESK.get_or_init(|| {
        let grid = desk_grid();
        eprintln!("[acceptance] running desk grid (first pass)...");
        let (rows_a, summaries) = run_grid(&grid, None).expect("desk grid");
        eprintln!("[acceptance] running desk grid (determinism re-run)...");
        let (rows_b, _) = run_grid(&grid, None).expect("desk grid rerun");
        eprintln!("[acceptance] running the avSim/avAlt ratio cell...");
        let ratio_grid = ExperimentGrid {
            estimators: vec![Estimator::SaomAvSim, Estimator::SaomAvAlt],
            ..desk_grid()
        };
        let ratio_rows = run_cell(0.4, 250, 50, &ratio_grid).expect("ratio cell");
        Desk {
            summaries,
            ratio_summaries: aggregate(&ratio_rows),
            rows_csv_first: rows_to_csv(&rows_a, false),
            rows_csv_second: rows_to_csv(&rows_b, false),
        }
    })
}

fn cell<'a>(
    summaries: &'a [CellSummary],
    estimator: Estimator,
    rho: f64,
    n: usize,
) -> &'a CellSummary {
    summaries
        .iter()
        .find(|s| s.estimator == estimator && s.n == n && (s.rho - rho).abs() < 1e-12)
        .unwrap_or_else(|| panic!("missing cell ({rho}, {n}, {estimator:?})"))
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

#[test]
fn criterion_1_saom_scale_recovery() {
    let d = desk();
    let hi = cell(&d.summaries, Estimator::SaomAvSim, 0.8, 250)
        .spatial_mean
        .unwrap_or(f64::NAN);
    let lo = cell(&d.summaries, Estimator::SaomAvSim, -0.8, 250)
        .spatial_mean
        .unwrap_or(f64::NAN);
    let means: Vec<f64> = DESK_RHOS
        .iter()
        .map(|&r| {
            cell(&d.summaries, Estimator::SaomAvSim, r, 250)
                .spatial_mean
                .unwrap_or(f64::NAN)
        })
        .collect();
    let in_hi = (hi - 3.99).abs() <= 0.6;
    let in_lo = (lo + 3.10).abs() <= 0.6;
    let monotone = means.windows(2).all(|w| w[0] < w[1]);
    let ok = in_hi && in_lo && monotone;
    println!(
        "ACCEPTANCE 1 (SAOM scale recovery): {} — mean avSim(0.8)={hi:.3} (target 3.99±0.6), \
         mean avSim(-0.8)={lo:.3} (target -3.10±0.6), means over rho {:?} strictly monotone: {monotone}",
        verdict(ok),
        means.iter().map(|m| (m * 1000.0).round() / 1000.0).collect::<Vec<_>>()
    );
    assert!(ok);
}

#[test]
fn criterion_2_null_behavior() {
    let d = desk();
    let m = cell(&d.summaries, Estimator::SaomAvSim, 0.0, 250)
        .spatial_mean
        .unwrap_or(f64::NAN);
    let ok = m.abs() <= 0.35;
    println!(
        "ACCEPTANCE 2 (null behavior): {} — |mean avSim(0, 250)| = {:.3} <= 0.35",
        verdict(ok),
        m.abs()
    );
    assert!(ok);
}

#[test]
fn criterion_3_slope_recovery() {
    let d = desk();
    let saom = cell(&d.summaries, Estimator::SaomAvSim, 0.0, 250)
        .slope_mean
        .unwrap_or(f64::NAN);
    let gibbs = cell(&d.summaries, Estimator::Gibbs, 0.0, 250)
        .slope_mean
        .unwrap_or(f64::NAN);
    let saom_ok = (-2.35..=-1.65).contains(&saom);
    let gibbs_ok = (-1.35..=-0.95).contains(&gibbs);
    let ok = saom_ok && gibbs_ok;
    println!(
        "ACCEPTANCE 3 (slope recovery): {} — SAOM slope(0,250)={saom:.3} in [-2.35,-1.65]: {saom_ok}; \
         Gibbs slope(0,250)={gibbs:.3} in [-1.35,-0.95]: {gibbs_ok}",
        verdict(ok)
    );
    assert!(ok);
}

#[test]
fn criterion_4_avsim_avalt_ratio() {
    let d = desk();
    let avsim = cell(&d.ratio_summaries, Estimator::SaomAvSim, 0.4, 250)
        .spatial_mean
        .unwrap_or(f64::NAN);
    let avalt = cell(&d.ratio_summaries, Estimator::SaomAvAlt, 0.4, 250)
        .spatial_mean
        .unwrap_or(f64::NAN);
    let ratio = avsim / avalt;
    let ok = (1.6..=2.4).contains(&ratio);
    println!(
        "ACCEPTANCE 4 (avSim/avAlt ratio): {} — mean avSim(0.4,250)={avsim:.3}, mean avAlt={avalt:.3}, \
         ratio={ratio:.2} (window [1.6, 2.4])",
        verdict(ok)
    );
    assert!(ok);
}

#[test]
fn criterion_5_gibbs_direction_attenuation() {
    let d = desk();
    let means: Vec<f64> = DESK_RHOS
        .iter()
        .map(|&r| {
            cell(&d.summaries, Estimator::Gibbs, r, 250)
                .spatial_mean
                .unwrap_or(f64::NAN)
        })
        .collect();
    let monotone = means.windows(2).all(|w| w[0] < w[1]);
    let signs_ok = means[0] < 0.0 && means[1] < 0.0 && means[3] > 0.0 && means[4] > 0.0;
    let zero_ok = (means[2] - (-0.01)).abs() <= 0.03;
    let hi_ok = (means[4] - 0.10).abs() <= 0.05;
    let lo_ok = (means[0] - (-0.15)).abs() <= 0.05;
    let ok = monotone && signs_ok && zero_ok && hi_ok && lo_ok;
    println!(
        "ACCEPTANCE 5 (Gibbs direction + attenuation): {} — means over rho {:?}; monotone {monotone}, \
         signs at |rho|>=0.3 {signs_ok}, rho=0 mean {:.4} in -0.01±0.03: {zero_ok}, \
         rho=0.8 mean {:.3} in 0.10±0.05: {hi_ok}, rho=-0.8 mean {:.3} in -0.15±0.05: {lo_ok}",
        verdict(ok),
        means.iter().map(|m| (m * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
        means[2],
        means[4],
        means[0]
    );
    assert!(ok);
}

#[test]
fn criterion_6_significance_behavior() {
    let d = desk();
    let gibbs_fp = cell(&d.summaries, Estimator::Gibbs, 0.0, 250)
        .prop_sig_spatial
        .unwrap_or(f64::NAN);
    let saom_fp = cell(&d.summaries, Estimator::SaomAvSim, 0.0, 250)
        .prop_sig_spatial
        .unwrap_or(f64::NAN);
    let gibbs_det = cell(&d.summaries, Estimator::Gibbs, 0.3, 250)
        .prop_sig_spatial
        .unwrap_or(f64::NAN);
    let saom_det = cell(&d.summaries, Estimator::SaomAvSim, 0.3, 250)
        .prop_sig_spatial
        .unwrap_or(f64::NAN);
    let fp_gibbs_ok = (0.01..=0.12).contains(&gibbs_fp);
    let fp_saom_ok = saom_fp <= 0.05;
    let detection_ok = saom_det > gibbs_det;
    let ok = fp_gibbs_ok && fp_saom_ok && detection_ok;
    println!(
        "ACCEPTANCE 6 (significance behavior): {} — Gibbs FP(0,250)={gibbs_fp:.3} in [0.01,0.12]: {fp_gibbs_ok}; \
         SAOM FP(0,250)={saom_fp:.3} <= 0.05: {fp_saom_ok}; detection at rho=0.3: SAOM {saom_det:.3} > Gibbs {gibbs_det:.3}: {detection_ok}",
        verdict(ok)
    );
    assert!(ok);
}

#[test]
fn criterion_7_convergence_attrition() {
    let d = desk();
    let rate = |n: usize| {
        let mut accepted = 0usize;
        let mut total = 0usize;
        for &r in &DESK_RHOS {
            let c = cell(&d.summaries, Estimator::SaomAvSim, r, n);
            accepted += c.accepted;
            total += c.total;
        }
        accepted as f64 / total as f64
    };
    let small = rate(50);
    let large = rate(250);
    let ok = small <= large - 0.1;
    println!(
        "ACCEPTANCE 7 (convergence attrition): {} — SAOM acceptance rate n=50: {small:.3}, n=250: {large:.3}, \
         require small <= large - 0.1",
        verdict(ok)
    );
    assert!(ok);
}

#[test]
fn criterion_9_determinism() {
    let d = desk();
    let ok = d.rows_csv_first == d.rows_csv_second;
    println!(
        "ACCEPTANCE 9 (determinism): {} — rerun of the desk grid reproduces the results CSV byte for byte \
         ({} bytes)",
        verdict(ok),
        d.rows_csv_first.len()
    );
    assert!(ok);
}

// ----- Criterion 8: oracle suites (fast, no desk grid involved) -----

fn oracle_design(n: usize, seed: u64, mean: f64, sd: f64) -> DMatrix<f64> {
    let mut rng = rng_from_seed(seed);
    DMatrix::from_fn(n, 2, |_, j| {
        if j == 0 {
            1.0
        } else {
            let z: f64 = rng.sample(StandardNormal);
            mean + sd * z
        }
    })
}

#[test]
fn criterion_8a_bsar_solver_oracles() {
    // Hand 2x2 solve: (I - 0.5 W) y* = (1, -1) on the mutual dyad.
    let dyad = Network::from_adjacency(2, vec![0, 1, 1, 0], None, None).unwrap();
    let x = DMatrix::from_row_slice(2, 1, &[1.0, -1.0]);
    let mut params = BsarParams::new(0.5, vec![1.0]);
    params.error_sd = 1e-300;
    let draw = simulate_bsar(&dyad, &x, &params, 1).unwrap();
    let hand_ok =
        (draw.y_star[0] - 2.0 / 3.0).abs() < 1e-6 && (draw.y_star[1] + 2.0 / 3.0).abs() < 1e-6;

    // 200-term Neumann series against the dense solve at rho = 0.8.
    let net = generate_random_geometric(40, 5.0, 77).unwrap();
    let w = net.weights_matrix();
    let x = DMatrix::from_fn(40, 1, |i, _| (i as f64 * 0.31).cos());
    let params = BsarParams::new(0.8, vec![1.0]);
    let draw = simulate_bsar(&net, &x, &params, 78).unwrap();
    let v = &x * DVector::from_element(1, 1.0) + &draw.epsilon;
    let mut series = v.clone();
    let mut term = v;
    for _ in 0..200 {
        term = params.rho * (&w * term);
        series += &term;
    }
    let rel = (&series - &draw.y_star).norm() / draw.y_star.norm();
    let series_ok = rel < 1e-6;

    let ok = hand_ok && series_ok;
    println!(
        "ACCEPTANCE 8a (BSAR solver oracles): {} — hand 2x2 solve ({:.6}, {:.6}) vs (2/3, -2/3): {hand_ok}; \
         series expansion relative error {rel:.2e} < 1e-6: {series_ok}",
        verdict(ok),
        draw.y_star[0],
        draw.y_star[1]
    );
    assert!(ok);
}

/// Independent enumeration of two ministeps on the complete 3-node graph,
/// sharing no code with the simulator.
fn enumerate_two_steps(y0: [u8; 3], theta: f64) -> HashMap<[u8; 3], f64> {
    fn av_alt_direct(y: &[u8; 3], i: usize) -> f64 {
        if y[i] == 0 {
            return 0.0;
        }
        (0..3).filter(|&j| j != i).map(|j| y[j] as f64).sum::<f64>() / 2.0
    }
    fn toggle_prob(y: &[u8; 3], i: usize, theta: f64) -> f64 {
        let mut yt = *y;
        yt[i] = 1 - yt[i];
        let f_keep = theta * av_alt_direct(y, i);
        let f_tog = theta * av_alt_direct(&yt, i);
        f_tog.exp() / (f_keep.exp() + f_tog.exp())
    }
    let mut dist = HashMap::new();
    for a1 in 0..3usize {
        for o1 in 0..2 {
            let p1 = toggle_prob(&y0, a1, theta);
            let (y1, w1) = if o1 == 1 {
                let mut y = y0;
                y[a1] = 1 - y[a1];
                (y, p1)
            } else {
                (y0, 1.0 - p1)
            };
            for a2 in 0..3usize {
                for o2 in 0..2 {
                    let p2 = toggle_prob(&y1, a2, theta);
                    let (y2, w2) = if o2 == 1 {
                        let mut y = y1;
                        y[a2] = 1 - y[a2];
                        (y, p2)
                    } else {
                        (y1, 1.0 - p2)
                    };
                    *dist.entry(y2).or_insert(0.0) += (1.0 / 9.0) * w1 * w2;
                }
            }
        }
    }
    dist
}

#[test]
fn criterion_8b_ministep_chain_matches_enumeration() {
    let net = Network::from_adjacency(3, vec![0, 1, 1, 1, 0, 1, 1, 1, 0], None, None).unwrap();
    let y0 = [1u8, 0, 0];
    let theta = 2.0;
    let exact = enumerate_two_steps(y0, theta);
    let x = DMatrix::zeros(3, 0);

    let draws = 100_000;
    let mut counts: HashMap<[u8; 3], usize> = HashMap::new();
    let mut accepted = 0usize;
    let mut attempt = 0u64;
    while accepted < draws {
        let (end, trace) = simulate_period_traced(
            &net,
            &y0,
            &[EffectSpec::av_alt()],
            &[theta],
            2.0 / 3.0,
            &x,
            None,
            child_seed(0x8b, &[attempt]),
            true,
        )
        .unwrap();
        attempt += 1;
        if trace.len() != 2 {
            continue;
        }
        accepted += 1;
        *counts.entry([end.y[0], end.y[1], end.y[2]]).or_insert(0) += 1;
    }
    let mut tv = 0.0;
    for (state, p) in &exact {
        tv += (*counts.get(state).unwrap_or(&0) as f64 / draws as f64 - p).abs();
    }
    for (state, c) in &counts {
        if !exact.contains_key(state) {
            tv += *c as f64 / draws as f64;
        }
    }
    tv *= 0.5;
    let ok = tv <= 0.02;
    println!(
        "ACCEPTANCE 8b (ministep enumeration oracle): {} — total variation {tv:.4} <= 0.02 at {draws} draws",
        verdict(ok)
    );
    assert!(ok);
}

#[test]
fn criterion_8c_gibbs_matches_probit_without_spatial_structure() {
    let n = 500;
    let net = Network::from_adjacency(n, vec![0u8; n * n], None, None).unwrap();
    let x = oracle_design(n, 0x8c1, 0.0, 1.0);
    let draw = simulate_bsar(&net, &x, &BsarParams::new(0.0, vec![0.5, -0.5]), 0x8c2).unwrap();
    let mle = probit_fit(&x, &draw.y).unwrap();
    let summary: PosteriorSummary = gibbs_fit(
        &net,
        &x,
        &draw.y,
        &GibbsConfig {
            seed: 0x8c3,
            ..GibbsConfig::default()
        },
    )
    .unwrap();
    let dev0 = (summary.means[1] - mle.coefficients[0]).abs();
    let dev1 = (summary.means[2] - mle.coefficients[1]).abs();
    let ok = dev0 < 0.1 && dev1 < 0.1;
    println!(
        "ACCEPTANCE 8c (Gibbs vs probit MLE at W=0): {} — |dev| per coefficient ({dev0:.4}, {dev1:.4}) < 0.1",
        verdict(ok)
    );
    assert!(ok);
}

#[test]
fn criterion_8d_effect_statistic_examples() {
    let complete3 =
        Network::from_adjacency(3, vec![0, 1, 1, 1, 0, 1, 1, 1, 0], None, None).unwrap();
    let mut star_adj = vec![0u8; 25];
    for j in 1..5 {
        star_adj[j] = 1;
        star_adj[j * 5] = 1;
    }
    let star5 = Network::from_adjacency(5, star_adj, None, None).unwrap();
    let no_x3 = DMatrix::zeros(3, 0);
    let no_x5 = DMatrix::zeros(5, 0);

    let mut checks: Vec<(String, bool)> = Vec::new();

    // avAlt examples.
    let a0 = effect_statistic(&EffectSpec::av_alt(), 0, &star5, &[0, 1, 1, 1, 1], &no_x5, None)
        .unwrap();
    checks.push(("avAlt y_i=0 -> 0".to_string(), a0 == 0.0));
    let a1 = effect_statistic(&EffectSpec::av_alt(), 0, &star5, &[1, 1, 0, 1, 0], &no_x5, None)
        .unwrap();
    checks.push(("avAlt neighbours (1,0,1,0) -> 0.5".to_string(), a1 == 0.5));

    // avSim examples on the complete triangle.
    let y = [1u8, 1, 0];
    let m = mean_similarity(&complete3, &y);
    checks.push(("mean similarity = 1/3".to_string(), (m - 1.0 / 3.0).abs() < 1e-15));
    let s0 = effect_statistic(&EffectSpec::av_sim(), 0, &complete3, &y, &no_x3, Some(m)).unwrap();
    let s2 = effect_statistic(&EffectSpec::av_sim(), 2, &complete3, &y, &no_x3, Some(m)).unwrap();
    checks.push(("avSim s_1 = 1/6".to_string(), (s0 - 1.0 / 6.0).abs() < 1e-15));
    checks.push(("avSim s_3 = -1/3".to_string(), (s2 + 1.0 / 3.0).abs() < 1e-15));

    // effFrom example.
    let xe = DMatrix::from_column_slice(3, 1, &[-2.0, 0.0, 0.0]);
    let e = effect_statistic(&EffectSpec::eff_from(0), 0, &complete3, &[1, 0, 0], &xe, None)
        .unwrap();
    checks.push(("effFrom y=1, x=-2 -> -2".to_string(), e == -2.0));

    // Target statistics examples.
    let t0 = target_statistics(&complete3, &[0, 0, 0], &[EffectSpec::av_alt()], &no_x3, None)
        .unwrap();
    checks.push(("avAlt target all-zero -> 0".to_string(), t0[0] == 0.0));
    let t1 = target_statistics(&complete3, &y, &[EffectSpec::av_alt()], &no_x3, None).unwrap();
    checks.push(("avAlt target (1,1,0) -> 1.0".to_string(), (t1[0] - 1.0).abs() < 1e-15));
    let t2 = target_statistics(&complete3, &y, &[EffectSpec::av_sim()], &no_x3, Some(m)).unwrap();
    checks.push(("avSim target (1,1,0) -> 0".to_string(), t2[0].abs() < 1e-15));

    // Ministep probability examples.
    let even = ministep_probabilities(1, &complete3, &[1, 0, 1], &[], &[], &no_x3, None).unwrap();
    checks.push((
        "theta=0 -> (0.5, 0.5)".to_string(),
        even.p_keep == 0.5 && even.p_toggle == 0.5,
    ));
    let xf = DMatrix::from_element(3, 1, 1.0);
    let logit = ministep_probabilities(
        0,
        &complete3,
        &[0, 0, 0],
        &[EffectSpec::eff_from(0)],
        &[1.0],
        &xf,
        None,
    )
    .unwrap();
    let e1 = std::f64::consts::E;
    checks.push((
        "effFrom logit e/(1+e)".to_string(),
        (logit.p_toggle - e1 / (1.0 + e1)).abs() < 1e-12,
    ));

    let ok = checks.iter().all(|(_, pass)| *pass);
    let detail: Vec<String> = checks
        .iter()
        .map(|(name, pass)| format!("{name}: {}", if *pass { "ok" } else { "FAILED" }))
        .collect();
    println!(
        "ACCEPTANCE 8d (effect-statistic examples): {} — {}",
        verdict(ok),
        detail.join("; ")
    );
    assert!(ok);
}

#[test]
fn criterion_8e_cross_sectional_anchor_pattern() {
    let net = generate_random_geometric(4, 2.0, 5).unwrap();
    let x = DMatrix::zeros(4, 1);
    let problem = build_cross_sectional_problem(
        &net,
        &[1, 0, 1, 1],
        &x,
        &[EffectSpec::av_sim(), EffectSpec::linear_shape()],
    )
    .unwrap();
    let wave0_ok = problem.waves[0] == vec![0, 1, 1, 1];
    let wave1_ok = problem.waves[1] == vec![1, 0, 1, 1];
    let shape_gone = problem.effects.len() == 1;
    let ok = wave0_ok && wave1_ok && shape_gone;
    println!(
        "ACCEPTANCE 8e (anchor pattern): {} — wave0 {:?} == [0,1,1,1]: {wave0_ok}; wave1 {:?} == [1,0,1,1]: {wave1_ok}; \
         linear shape removed: {shape_gone}",
        verdict(ok),
        problem.waves[0],
        problem.waves[1]
    );
    assert!(ok);
}
