use nalgebra::DMatrix;
use rand::RngCore;
use rand_distr::Distribution;

use super::{ln_factorial, ParametricFamily, Support};
use crate::special::gamma_q;

/// Poisson model on ℕ₀ with mean `θ > 0`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Poisson;

impl ParametricFamily for Poisson {
    fn name(&self) -> &str {
        "poisson"
    }

    fn dim(&self) -> usize {
        1
    }

    fn param_names(&self) -> Vec<String> {
        vec!["lambda".into()]
    }

    fn support(&self) -> Support {
        Support::Lattice { lower: 0 }
    }

    fn is_valid(&self, theta: &[f64]) -> bool {
        theta[0] > 0.0
    }

    fn density(&self, theta: &[f64], x: f64) -> f64 {
        if !self.support().contains(x) {
            return 0.0;
        }
        self.log_density(theta, x).exp()
    }

    fn log_density(&self, theta: &[f64], x: f64) -> f64 {
        if !self.support().contains(x) {
            return f64::NEG_INFINITY;
        }
        x * theta[0].ln() - theta[0] - ln_factorial(x)
    }

    fn scores_into(&self, theta: &[f64], x: f64, out: &mut [f64]) {
        out[0] = x / theta[0] - 1.0;
    }

    fn fisher(&self, theta: &[f64]) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, 1.0 / theta[0])
    }

    fn cdf(&self, theta: &[f64], x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        // P(X ≤ k) = Q(k + 1, θ)
        gamma_q(x.floor() + 1.0, theta[0])
    }

    fn sample(&self, theta: &[f64], rng: &mut dyn RngCore) -> f64 {
        rand_distr::Poisson::new(theta[0])
            .expect("valid poisson mean")
            .sample(rng)
    }

    fn to_unconstrained(&self, theta: &[f64]) -> Vec<f64> {
        vec![theta[0].ln()]
    }

    fn from_unconstrained(&self, u: &[f64]) -> Vec<f64> {
        vec![u[0].exp()]
    }

    fn moment_estimate(&self, mean: f64, _var: f64) -> Option<Vec<f64>> {
        (mean > 0.0).then(|| vec![mean])
    }

    fn closed_form_mle(&self, mean: f64, _var: f64) -> Option<Vec<f64>> {
        Some(vec![mean])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scores_examples() {
        assert_eq!(Poisson.scores(&[1.0], 1.0).unwrap()[0], 0.0);
        assert_eq!(Poisson.scores(&[3.9], 0.0).unwrap()[0], -1.0);
        assert!(Poisson.scores(&[0.0], 1.0).is_err());
        assert!(Poisson.scores(&[-2.0], 1.0).is_err());
        // continuous extension between lattice points
        assert!((Poisson.scores(&[2.0], 2.5).unwrap()[0] - 0.25).abs() < 1e-15);
        assert!(Poisson.scores(&[2.0], -0.5).is_err());
    }

    #[test]
    fn cdf_matches_direct_summation() {
        let theta = [3.9];
        let mut acc = 0.0;
        for k in 0..25 {
            acc += Poisson.density(&theta, k as f64);
            assert!((Poisson.cdf(&theta, k as f64) - acc).abs() < 1e-14);
            assert_eq!(Poisson.cdf(&theta, k as f64 + 0.5), Poisson.cdf(&theta, k as f64));
        }
    }

    #[test]
    fn lattice_quantile() {
        let theta = [3.9];
        for k in 0..15 {
            let p = Poisson.cdf(&theta, k as f64);
            assert_eq!(Poisson.quantile(&theta, p), k as f64);
            assert_eq!(Poisson.quantile(&theta, p + 1e-9), (k + 1) as f64);
        }
    }
}
