//! Plain probit maximum likelihood by Fisher scoring.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::stats::{inverse_mills, norm_cdf};

const GRADIENT_TOL: f64 = 1e-8;
const MAX_ITER: usize = 100;
const COEF_CAP: f64 = 1e4;

/// Maximum-likelihood probit fit.
#[derive(Debug, Clone)]
pub struct ProbitFit {
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub iterations: usize,
    pub log_likelihood: f64,
}

impl ProbitFit {
    /// Wald z statistic per coefficient.
    pub fn z(&self, j: usize) -> f64 {
        self.coefficients[j] / self.std_errors[j]
    }
}

/// Fit a probit model by Newton (Fisher scoring) iterations, converged when
/// the gradient max-norm drops below 1e-8.
pub fn probit_fit(x: &DMatrix<f64>, y: &[u8]) -> Result<ProbitFit> {
    let n = x.nrows();
    let k = x.ncols();
    if y.len() != n {
        return Err(Error::invalid("outcome length must match design rows"));
    }
    if k == 0 {
        return Err(Error::invalid("design matrix needs at least one column"));
    }
    let ones = y.iter().filter(|&&v| v == 1).count();
    if ones == 0 || ones == n {
        return Err(Error::DegenerateData(
            "outcome has a single class; probit likelihood is unbounded".to_string(),
        ));
    }

    let mut beta = DVector::zeros(k);
    for iter in 1..=MAX_ITER {
        let eta = x * &beta;
        let mut gradient = DVector::zeros(k);
        let mut info = DMatrix::zeros(k, k);
        for i in 0..n {
            let q = if y[i] == 1 { 1.0 } else { -1.0 };
            let score = q * inverse_mills(q * eta[i]);
            // Expected information weight phi^2 / (Phi (1 - Phi)).
            let w = inverse_mills(eta[i]) * inverse_mills(-eta[i]);
            for a in 0..k {
                gradient[a] += x[(i, a)] * score;
                for b in 0..k {
                    info[(a, b)] += x[(i, a)] * x[(i, b)] * w;
                }
            }
        }
        let step = info
            .clone()
            .lu()
            .solve(&gradient)
            .ok_or_else(|| Error::numeric("singular information matrix (collinear design?)"))?;
        beta += &step;

        if !beta.iter().all(|v| v.is_finite()) || beta.amax() > COEF_CAP {
            return Err(Error::DivergingCoefficients(format!(
                "probit coefficients diverged by iteration {iter} (perfect separation?)"
            )));
        }
        if gradient.amax() < GRADIENT_TOL {
            // Every observation on the correct side of its threshold means
            // the likelihood increases along the ray c*beta: no finite MLE.
            let eta = x * &beta;
            let mut any_pos = false;
            let mut separated = true;
            for i in 0..n {
                let q = if y[i] == 1 { 1.0 } else { -1.0 };
                let m = q * eta[i];
                if m > 0.0 {
                    any_pos = true;
                } else if m < 0.0 {
                    separated = false;
                    break;
                }
            }
            if separated && any_pos {
                return Err(Error::DivergingCoefficients(
                    "perfect separation: every observation is correctly classified".to_string(),
                ));
            }
            let cov = info
                .lu()
                .solve(&DMatrix::identity(k, k))
                .ok_or_else(|| Error::numeric("singular information matrix at optimum"))?;
            let std_errors = (0..k).map(|j| cov[(j, j)].sqrt()).collect();
            let ll = log_likelihood(x, y, &beta);
            return Ok(ProbitFit {
                coefficients: beta.iter().copied().collect(),
                std_errors,
                iterations: iter,
                log_likelihood: ll,
            });
        }
    }
    Err(Error::DivergingCoefficients(format!(
        "probit did not converge in {MAX_ITER} iterations"
    )))
}

fn log_likelihood(x: &DMatrix<f64>, y: &[u8], beta: &DVector<f64>) -> f64 {
    let eta = x * beta;
    let mut ll = 0.0;
    for i in 0..y.len() {
        let p = norm_cdf(eta[i]).clamp(1e-300, 1.0 - 1e-16);
        ll += if y[i] == 1 { p.ln() } else { (1.0 - p).ln() };
    }
    ll
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bsar::{simulate_bsar, BsarParams};
    use crate::net::generate_random_geometric;
    use crate::rng::{child_seed, rng_from_seed};
    use nalgebra::DMatrix;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn design(n: usize, seed: u64, mean: f64, sd: f64) -> DMatrix<f64> {
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
    fn recovers_dgp_coefficients_within_three_ses() {
        let n = 500;
        let net = generate_random_geometric(n, 5.0, 1001).unwrap();
        let x = design(n, 1002, 2.0, 2.0);
        let draw = simulate_bsar(&net, &x, &BsarParams::new(0.0, vec![4.0, -2.0]), 1003).unwrap();
        let fit = probit_fit(&x, &draw.y).unwrap();
        for (j, truth) in [4.0, -2.0].iter().enumerate() {
            let dev = (fit.coefficients[j] - truth).abs();
            assert!(
                dev < 3.0 * fit.std_errors[j],
                "coef {j}: {} vs {truth} (se {})",
                fit.coefficients[j],
                fit.std_errors[j]
            );
        }
    }

    #[test]
    fn null_slope_rejected_at_most_ten_percent() {
        // Size of the Wald test under beta = 0: |z| < 1.96 in at least 90%
        // of replications.
        let n = 400;
        let mut inside = 0;
        let reps = 60;
        for r in 0..reps {
            let x = design(n, child_seed(7000, &[r]), 0.0, 1.0);
            let mut rng = rng_from_seed(child_seed(7001, &[r]));
            let y: Vec<u8> = (0..n).map(|_| u8::from(rng.gen::<f64>() < 0.5)).collect();
            let fit = probit_fit(&x, &y).unwrap();
            if fit.z(1).abs() < 1.959963985 {
                inside += 1;
            }
        }
        assert!(
            inside as f64 >= 0.9 * reps as f64,
            "only {inside}/{reps} inside"
        );
    }

    #[test]
    fn single_class_outcome_is_degenerate() {
        let x = DMatrix::from_element(20, 1, 1.0);
        let y = vec![1u8; 20];
        assert!(matches!(
            probit_fit(&x, &y),
            Err(Error::DegenerateData(_))
        ));
    }

    #[test]
    fn perfect_separation_diverges() {
        // y = 1 exactly when x > 0: the MLE walks off to infinity.
        let n = 60;
        let x = DMatrix::from_fn(n, 2, |i, j| {
            if j == 0 {
                1.0
            } else {
                i as f64 - (n as f64) / 2.0 + 0.25
            }
        });
        let y: Vec<u8> = (0..n).map(|i| u8::from(x[(i, 1)] > 0.0)).collect();
        assert!(matches!(
            probit_fit(&x, &y),
            Err(Error::DivergingCoefficients(_))
        ));
    }
}
