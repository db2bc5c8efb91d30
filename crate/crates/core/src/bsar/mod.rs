//! Binary spatial autoregressive model: simulation and estimation.
//!
//! The latent process is `Y* = X beta + rho W Y* + eps` with i.i.d. normal
//! errors, observed as `Y_i = 1` exactly when `Y*_i > 0`. Simultaneity makes
//! the reduced form `Y* = (I - rho W)^{-1}(X beta + eps)`, so the errors of
//! the reduced form are heteroskedastic and estimation has to work through
//! the latent variable. Estimators provided: a Bayesian Gibbs sampler
//! ([`gibbs_fit`]) and a plain probit maximum-likelihood baseline
//! ([`probit_fit`]).

mod gibbs;
mod probit;

pub use gibbs::{gibbs_fit, GibbsConfig, GibbsWeights, PosteriorSummary};
pub use probit::{probit_fit, ProbitFit};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::net::Network;
use crate::rng::rng_from_seed;

/// Error distribution of the latent process. Standard normal gives a spatial
/// probit, standard logistic (scale 1) a spatial logit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorDistribution {
    Normal,
    Logistic,
}

/// Parameters of the latent autoregressive process.
#[derive(Debug, Clone)]
pub struct BsarParams {
    /// Autoregressive intensity; (I - rho W) must be invertible.
    pub rho: f64,
    /// Coefficients on the design matrix, intercept included.
    pub beta: Vec<f64>,
    /// Error scale; fixed at 1 for threshold-model identification.
    pub error_sd: f64,
    pub error_dist: ErrorDistribution,
}

impl BsarParams {
    pub fn new(rho: f64, beta: Vec<f64>) -> Self {
        BsarParams {
            rho,
            beta,
            error_sd: 1.0,
            error_dist: ErrorDistribution::Normal,
        }
    }

    pub fn with_logistic_errors(mut self) -> Self {
        self.error_dist = ErrorDistribution::Logistic;
        self
    }
}

/// One draw from the latent process together with its observables.
#[derive(Debug, Clone)]
pub struct LatentDraw {
    /// Latent utilities.
    pub y_star: DVector<f64>,
    /// Observed binary outcomes; `y[i] == 1` exactly when `y_star[i] > 0`.
    pub y: Vec<u8>,
    /// The error draw that produced this realization.
    pub epsilon: DVector<f64>,
}

/// Simulate one realization of the binary spatial autoregressive process.
///
/// Solves `(I - rho W) y* = X beta + eps` by dense LU (no explicit inverse)
/// and thresholds at zero. Identical `(net, x, params, seed)` reproduce the
/// identical draw.
pub fn simulate_bsar(
    net: &Network,
    x: &DMatrix<f64>,
    params: &BsarParams,
    seed: u64,
) -> Result<LatentDraw> {
    let n = net.n();
    if x.nrows() != n {
        return Err(Error::invalid(format!(
            "design matrix has {} rows for {} nodes",
            x.nrows(),
            n
        )));
    }
    if x.ncols() != params.beta.len() {
        return Err(Error::invalid(format!(
            "{} coefficients for {} design columns",
            params.beta.len(),
            x.ncols()
        )));
    }
    if params.error_sd <= 0.0 {
        return Err(Error::invalid("error_sd must be positive"));
    }

    let mut rng = rng_from_seed(seed);
    let epsilon = DVector::from_fn(n, |_, _| {
        let z: f64 = match params.error_dist {
            ErrorDistribution::Normal => rng.sample(StandardNormal),
            ErrorDistribution::Logistic => {
                // Inverse-CDF of the standard logistic (scale 1).
                let u: f64 = rng.gen_range(f64::EPSILON..1.0);
                (u / (1.0 - u)).ln()
            }
        };
        z * params.error_sd
    });

    let beta = DVector::from_column_slice(&params.beta);
    let rhs = x * &beta + &epsilon;

    let w = net.weights_matrix();
    let b = DMatrix::identity(n, n) - params.rho * &w;
    let y_star = match b.clone().lu().solve(&rhs) {
        Some(sol) => sol,
        None => return Err(singularity_error(net, params.rho)),
    };
    // LU "succeeds" on nearly singular systems; reject garbage solutions.
    let residual = (&b * &y_star - &rhs).amax();
    if !residual.is_finite() || residual > 1e-6 * (rhs.amax() + 1.0) {
        return Err(singularity_error(net, params.rho));
    }

    let y = y_star.iter().map(|&v| u8::from(v > 0.0)).collect();
    Ok(LatentDraw {
        y_star,
        y,
        epsilon,
    })
}

fn singularity_error(net: &Network, rho: f64) -> Error {
    let detail = match net.weight_eigenvalues() {
        Ok(vals) => {
            let offending = vals
                .iter()
                .copied()
                .min_by(|a, b| {
                    let da = (1.0 - rho * a).abs();
                    let db = (1.0 - rho * b).abs();
                    da.partial_cmp(&db).expect("finite")
                })
                .unwrap_or(f64::NAN);
            format!("(I - rho W) is singular at rho = {rho}: eigenvalue {offending} of W gives 1 - rho*lambda ~ 0")
        }
        Err(_) => format!("(I - rho W) is singular at rho = {rho}"),
    };
    Error::numeric(detail)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::generate_random_geometric;

    fn dyad() -> Network {
        Network::from_adjacency(2, vec![0, 1, 1, 0], None, None).unwrap()
    }

    #[test]
    fn rho_zero_reduces_to_linear_model() {
        let net = generate_random_geometric(50, 5.0, 4).unwrap();
        let x = DMatrix::from_fn(50, 2, |i, j| if j == 0 { 1.0 } else { i as f64 / 10.0 });
        let params = BsarParams::new(0.0, vec![0.5, -0.25]);
        let draw = simulate_bsar(&net, &x, &params, 77).unwrap();
        let beta = DVector::from_column_slice(&params.beta);
        let expect = &x * beta + &draw.epsilon;
        for i in 0..50 {
            assert!((draw.y_star[i] - expect[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn dyad_hand_solve() {
        // (I - 0.5 W) y* = (1, -1) with W the mutual dyad has the exact
        // solution y* = (2/3, -2/3): 2x2 elimination by hand.
        let net = dyad();
        let x = DMatrix::from_row_slice(2, 1, &[1.0, -1.0]);
        let params = BsarParams::new(0.5, vec![1.0]);
        // Zero out the error by using sd -> tiny and seed-independent check:
        // instead solve directly through the public API with epsilon = 0 via
        // error_sd extremely small, then compare against the hand values.
        let mut p = params.clone();
        p.error_sd = 1e-300;
        let draw = simulate_bsar(&net, &x, &p, 123).unwrap();
        assert!((draw.y_star[0] - 2.0 / 3.0).abs() < 1e-9, "{}", draw.y_star[0]);
        assert!((draw.y_star[1] + 2.0 / 3.0).abs() < 1e-9);
        assert_eq!(draw.y, vec![1, 0]);
    }

    #[test]
    fn observation_mechanism_thresholds_at_zero() {
        let net = generate_random_geometric(80, 5.0, 9).unwrap();
        let x = DMatrix::from_element(80, 1, 1.0);
        let draw = simulate_bsar(&net, &x, &BsarParams::new(0.4, vec![0.1]), 5).unwrap();
        for i in 0..80 {
            assert_eq!(draw.y[i] == 1, draw.y_star[i] > 0.0);
        }
    }

    #[test]
    fn series_expansion_agrees_with_solve() {
        // (I - rho W)^{-1} v = sum_k rho^k W^k v, convergent for |rho| <= 0.8
        // on a row-normalized W.
        let net = generate_random_geometric(40, 5.0, 21).unwrap();
        let w = net.weights_matrix();
        let x = DMatrix::from_fn(40, 1, |i, _| (i as f64 * 0.37).sin());
        let params = BsarParams::new(0.8, vec![1.0]);
        let draw = simulate_bsar(&net, &x, &params, 55).unwrap();

        let v = &x * DVector::from_element(1, 1.0) + &draw.epsilon;
        let mut series = v.clone();
        let mut term = v;
        for _ in 0..200 {
            term = params.rho * (&w * term);
            series += &term;
        }
        let rel = (&series - &draw.y_star).norm() / draw.y_star.norm();
        assert!(rel < 1e-6, "relative error {rel}");
    }

    #[test]
    fn singular_system_reports_rho_and_eigenvalue() {
        // rho = 1 on a connected row-normalized W hits the Perron eigenvalue.
        let net = dyad();
        let x = DMatrix::from_element(2, 1, 1.0);
        let err = simulate_bsar(&net, &x, &BsarParams::new(1.0, vec![1.0]), 3).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("rho = 1"), "{msg}");
        assert!(msg.contains("eigenvalue"), "{msg}");
    }

    #[test]
    fn identical_seeds_identical_draws() {
        let net = generate_random_geometric(30, 4.0, 6).unwrap();
        let x = DMatrix::from_element(30, 1, 1.0);
        let p = BsarParams::new(0.3, vec![0.2]);
        let a = simulate_bsar(&net, &x, &p, 42).unwrap();
        let b = simulate_bsar(&net, &x, &p, 42).unwrap();
        assert_eq!(a.y, b.y);
        assert_eq!(a.y_star, b.y_star);
    }
}
