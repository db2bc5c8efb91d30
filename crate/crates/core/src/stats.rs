//! Small statistical helpers shared across estimators: standard-normal
//! functions, truncated-normal draws, and running moments.

use rand::Rng;
use statrs::distribution::{ContinuousCDF, Normal};

/// Truncated-normal draws are produced by inverse-CDF; the standard-normal
/// deviate is clamped to this magnitude so extreme tail draws stay finite.
pub const TRUNC_NORMAL_Z_CLAMP: f64 = 8.0;

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// Standard normal density.
pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    std_normal().cdf(x)
}

/// Standard normal quantile.
pub fn norm_quantile(p: f64) -> f64 {
    std_normal().inverse_cdf(p)
}

/// Inverse Mills ratio `pdf(t) / cdf(t)`, safe far into the lower tail where
/// both factors underflow. For `t -> -inf` the ratio approaches `-t`.
pub fn inverse_mills(t: f64) -> f64 {
    if t < -30.0 {
        // Asymptotic expansion: phi/Phi = -t / (1 - 1/t^2 + 3/t^4 - ...)
        -t / (1.0 - 1.0 / (t * t) + 3.0 / (t * t * t * t))
    } else {
        norm_pdf(t) / norm_cdf(t)
    }
}

/// Draw from a normal(mean, sd) truncated to be strictly positive or
/// strictly negative, by inverse-CDF with tail clamping.
pub fn draw_truncated_normal<R: Rng>(rng: &mut R, mean: f64, sd: f64, positive: bool) -> f64 {
    debug_assert!(sd > 0.0);
    // Boundary 0 expressed in standard units.
    let alpha = -mean / sd;
    let u: f64 = rng.gen::<f64>();
    let z = if positive {
        // u ~ U(Phi(alpha), 1)
        let lo = norm_cdf(alpha);
        norm_quantile(lo + u * (1.0 - lo))
    } else {
        // u ~ U(0, Phi(alpha))
        let hi = norm_cdf(alpha);
        norm_quantile(u * hi)
    };
    let z = z.clamp(-TRUNC_NORMAL_Z_CLAMP, TRUNC_NORMAL_Z_CLAMP);
    mean + sd * z
}

/// Online mean/variance accumulator (Welford).
#[derive(Debug, Clone, Default)]
pub struct RunningMoments {
    n: u64,
    mean: f64,
    m2: f64,
}

impl RunningMoments {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Sample variance (divisor n - 1); 0 for fewer than two observations.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn sd(&self) -> f64 {
        self.variance().sqrt()
    }
}

/// Sample mean of a slice; 0 for an empty slice.
pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (divisor n - 1); 0 for fewer than two values.
pub fn sample_sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn normal_functions_match_known_values() {
        assert!((norm_cdf(0.0) - 0.5).abs() < 1e-12);
        assert!((norm_cdf(1.959963985) - 0.975).abs() < 1e-8);
        assert!((norm_quantile(0.975) - 1.959963985).abs() < 1e-6);
        assert!((norm_pdf(0.0) - 0.3989422804014327).abs() < 1e-12);
    }

    #[test]
    fn inverse_mills_tail_is_finite_and_close_to_minus_t() {
        let t = -50.0;
        let r = inverse_mills(t);
        assert!(r.is_finite());
        assert!((r - 50.0).abs() < 0.1);
        // Moderate region agrees with the direct ratio.
        let direct = norm_pdf(-3.0) / norm_cdf(-3.0);
        assert!((inverse_mills(-3.0) - direct).abs() < 1e-12);
    }

    #[test]
    fn truncated_draws_respect_sign_and_stay_finite() {
        let mut rng = rng_from_seed(9);
        for _ in 0..2000 {
            let pos = draw_truncated_normal(&mut rng, -6.0, 1.0, true);
            assert!(pos > 0.0 && pos.is_finite());
            let neg = draw_truncated_normal(&mut rng, 6.0, 1.0, false);
            assert!(neg <= 0.0 && neg.is_finite());
        }
    }

    #[test]
    fn truncated_mean_matches_theory() {
        // E[X | X > 0] for X ~ N(0,1) is sqrt(2/pi).
        let mut rng = rng_from_seed(11);
        let mut acc = RunningMoments::new();
        for _ in 0..200_000 {
            acc.push(draw_truncated_normal(&mut rng, 0.0, 1.0, true));
        }
        let expect = (2.0 / std::f64::consts::PI).sqrt();
        assert!((acc.mean() - expect).abs() < 0.01, "got {}", acc.mean());
    }

    #[test]
    fn running_moments_match_direct_formulas() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let mut acc = RunningMoments::new();
        for &x in &xs {
            acc.push(x);
        }
        assert!((acc.mean() - 2.5).abs() < 1e-12);
        assert!((acc.sd() - sample_sd(&xs)).abs() < 1e-12);
        assert!((acc.sd() - 1.2909944487358056).abs() < 1e-12);
    }
}
