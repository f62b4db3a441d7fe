use nalgebra::DMatrix;
use rand::RngCore;
use rand_distr::Distribution;

use super::{invert_cdf, ParametricFamily, Support};
use crate::special::{digamma, gamma_p, ln_gamma, norm_quantile, trigamma};

/// Gamma model with `θ = (σ, α)` (scale, shape) and density
/// `Γ(α)⁻¹ σ^{−α} x^{α−1} e^{−x/σ}` on `(0, ∞)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Gamma;

impl ParametricFamily for Gamma {
    fn name(&self) -> &str {
        "gamma"
    }

    fn dim(&self) -> usize {
        2
    }

    fn param_names(&self) -> Vec<String> {
        vec!["scale".into(), "shape".into()]
    }

    fn support(&self) -> Support {
        Support::Continuous {
            lower: 0.0,
            upper: f64::INFINITY,
        }
    }

    fn is_valid(&self, theta: &[f64]) -> bool {
        theta[0] > 0.0 && theta[1] > 0.0
    }

    fn density(&self, theta: &[f64], x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        self.log_density(theta, x).exp()
    }

    fn log_density(&self, theta: &[f64], x: f64) -> f64 {
        if x <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let (s, a) = (theta[0], theta[1]);
        (a - 1.0) * x.ln() - x / s - ln_gamma(a) - a * s.ln()
    }

    fn scores_into(&self, theta: &[f64], x: f64, out: &mut [f64]) {
        let (s, a) = (theta[0], theta[1]);
        out[0] = x / (s * s) - a / s;
        out[1] = (x / s).ln() - digamma(a);
    }

    fn fisher(&self, theta: &[f64]) -> DMatrix<f64> {
        let (s, a) = (theta[0], theta[1]);
        DMatrix::from_row_slice(2, 2, &[a / (s * s), 1.0 / s, 1.0 / s, trigamma(a)])
    }

    fn cdf(&self, theta: &[f64], x: f64) -> f64 {
        gamma_p(theta[1], x / theta[0])
    }

    fn quantile(&self, theta: &[f64], p: f64) -> f64 {
        let (s, a) = (theta[0], theta[1]);
        // Wilson–Hilferty start
        let z = norm_quantile(p.clamp(1e-300, 1.0 - 1e-16));
        let c = 1.0 / (9.0 * a);
        let wh = a * (1.0 - c + z * c.sqrt()).powi(3);
        let guess = if wh > 0.0 && wh.is_finite() {
            wh * s
        } else {
            // small-p tail: F(x) ≈ (x/s)^a / Γ(a+1)
            s * (p * ln_gamma(a + 1.0).exp()).powf(1.0 / a)
        };
        invert_cdf(
            |x| self.cdf(theta, x),
            |x| self.density(theta, x),
            p,
            0.0,
            f64::INFINITY,
            guess,
        )
    }

    fn sample(&self, theta: &[f64], rng: &mut dyn RngCore) -> f64 {
        rand_distr::Gamma::new(theta[1], theta[0])
            .expect("valid gamma parameters")
            .sample(rng)
    }

    fn to_unconstrained(&self, theta: &[f64]) -> Vec<f64> {
        theta.iter().map(|t| t.ln()).collect()
    }

    fn from_unconstrained(&self, u: &[f64]) -> Vec<f64> {
        u.iter().map(|t| t.exp()).collect()
    }

    fn moment_estimate(&self, mean: f64, var: f64) -> Option<Vec<f64>> {
        (mean > 0.0 && var > 0.0).then(|| vec![var / mean, mean * mean / var])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::EULER_GAMMA;

    #[test]
    fn scores_at_unit_parameters() {
        let s = Gamma.scores(&[1.0, 1.0], 1.0).unwrap();
        assert!(s[0].abs() < 1e-15);
        assert!((s[1] - EULER_GAMMA).abs() < 1e-12);
        assert!((s[1] - 0.57722).abs() < 1e-5);
    }

    #[test]
    fn scores_at_two_three() {
        // digamma(3) = 3/2 - gamma by recurrence
        let digamma3 = 1.5 - EULER_GAMMA;
        let s = Gamma.scores(&[2.0, 3.0], 6.0).unwrap();
        assert!(s[0].abs() < 1e-15);
        assert!((s[1] - (3f64.ln() - digamma3)).abs() < 1e-12);
        assert!((s[1] - 0.17583).abs() < 1e-5);
    }

    #[test]
    fn invalid_parameters() {
        assert!(Gamma.scores(&[0.0, 1.0], 1.0).is_err());
        assert!(Gamma.scores(&[1.0, -1.0], 1.0).is_err());
        assert_eq!(Gamma.density(&[1.0, 2.0], -1.0), 0.0);
    }

    #[test]
    fn quantile_inverts_cdf_in_both_tails() {
        let theta = [5.0, 1.9];
        for &p in &[1e-12, 1e-6, 0.001, 0.3, 0.5, 0.8, 0.999, 1.0 - 1e-9] {
            let x = Gamma.quantile(&theta, p);
            let back = Gamma.cdf(&theta, x);
            assert!((back - p).abs() <= 1e-11 * p.min(1.0 - p).max(1e-5), "p = {p}, x = {x}");
        }
    }
}
