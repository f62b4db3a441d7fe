use nalgebra::DMatrix;
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use super::{LocationScale, ParametricFamily, Support};
use crate::special::{norm_cdf, norm_pdf, norm_quantile};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Normal location and scale, `θ = (μ, σ)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct NormalLocationScale;

impl ParametricFamily for NormalLocationScale {
    fn name(&self) -> &str {
        "normal-loc-scale"
    }

    fn dim(&self) -> usize {
        2
    }

    fn param_names(&self) -> Vec<String> {
        vec!["mean".into(), "sd".into()]
    }

    fn support(&self) -> Support {
        Support::Continuous {
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
        }
    }

    fn is_valid(&self, theta: &[f64]) -> bool {
        theta[1] > 0.0
    }

    fn density(&self, theta: &[f64], x: f64) -> f64 {
        norm_pdf((x - theta[0]) / theta[1]) / theta[1]
    }

    fn log_density(&self, theta: &[f64], x: f64) -> f64 {
        let u = (x - theta[0]) / theta[1];
        -0.5 * u * u - theta[1].ln() - LN_SQRT_2PI
    }

    fn scores_into(&self, theta: &[f64], x: f64, out: &mut [f64]) {
        let s = theta[1];
        let u = (x - theta[0]) / s;
        out[0] = u / s;
        out[1] = (u * u - 1.0) / s;
    }

    fn fisher(&self, theta: &[f64]) -> DMatrix<f64> {
        let v = 1.0 / (theta[1] * theta[1]);
        DMatrix::from_row_slice(2, 2, &[v, 0.0, 0.0, 2.0 * v])
    }

    fn cdf(&self, theta: &[f64], x: f64) -> f64 {
        norm_cdf((x - theta[0]) / theta[1])
    }

    fn quantile(&self, theta: &[f64], p: f64) -> f64 {
        theta[0] + theta[1] * norm_quantile(p)
    }

    fn location_scale(&self, theta: &[f64]) -> Option<LocationScale> {
        Some(LocationScale {
            location: theta[0],
            scale: theta[1],
            standard: vec![0.0, 1.0],
        })
    }

    fn sample(&self, theta: &[f64], rng: &mut dyn RngCore) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        theta[0] + theta[1] * z
    }

    fn to_unconstrained(&self, theta: &[f64]) -> Vec<f64> {
        vec![theta[0], theta[1].ln()]
    }

    fn from_unconstrained(&self, u: &[f64]) -> Vec<f64> {
        vec![u[0], u[1].exp()]
    }

    fn moment_estimate(&self, mean: f64, var: f64) -> Option<Vec<f64>> {
        (var > 0.0).then(|| vec![mean, var.sqrt()])
    }

    // sd with divisor n − 1
    fn closed_form_mle(&self, mean: f64, var: f64) -> Option<Vec<f64>> {
        Some(vec![mean, var.max(0.0).sqrt()])
    }
}

/// Normal location with known scale, `θ = μ` (k = 1).
#[derive(Debug, Clone, Copy)]
pub struct NormalLocation {
    pub sd: f64,
}

impl Default for NormalLocation {
    fn default() -> Self {
        NormalLocation { sd: 1.0 }
    }
}

impl ParametricFamily for NormalLocation {
    fn name(&self) -> &str {
        "normal-loc"
    }

    fn dim(&self) -> usize {
        1
    }

    fn param_names(&self) -> Vec<String> {
        vec!["mean".into()]
    }

    fn support(&self) -> Support {
        Support::Continuous {
            lower: f64::NEG_INFINITY,
            upper: f64::INFINITY,
        }
    }

    fn is_valid(&self, _theta: &[f64]) -> bool {
        self.sd > 0.0
    }

    fn density(&self, theta: &[f64], x: f64) -> f64 {
        norm_pdf((x - theta[0]) / self.sd) / self.sd
    }

    fn log_density(&self, theta: &[f64], x: f64) -> f64 {
        let u = (x - theta[0]) / self.sd;
        -0.5 * u * u - self.sd.ln() - LN_SQRT_2PI
    }

    fn scores_into(&self, theta: &[f64], x: f64, out: &mut [f64]) {
        out[0] = (x - theta[0]) / (self.sd * self.sd);
    }

    fn fisher(&self, _theta: &[f64]) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, 1.0 / (self.sd * self.sd))
    }

    fn cdf(&self, theta: &[f64], x: f64) -> f64 {
        norm_cdf((x - theta[0]) / self.sd)
    }

    fn quantile(&self, theta: &[f64], p: f64) -> f64 {
        theta[0] + self.sd * norm_quantile(p)
    }

    fn location_scale(&self, theta: &[f64]) -> Option<LocationScale> {
        // pure translation: the scale factor of the equivariance is 1
        (self.sd == 1.0).then(|| LocationScale {
            location: theta[0],
            scale: 1.0,
            standard: vec![0.0],
        })
    }

    fn sample(&self, theta: &[f64], rng: &mut dyn RngCore) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        theta[0] + self.sd * z
    }

    fn moment_estimate(&self, mean: f64, _var: f64) -> Option<Vec<f64>> {
        Some(vec![mean])
    }

    fn closed_form_mle(&self, mean: f64, _var: f64) -> Option<Vec<f64>> {
        Some(vec![mean])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loc_scale_scores_examples() {
        let f = NormalLocationScale;
        let s = f.scores(&[0.0, 1.0], 0.0).unwrap();
        assert_eq!(s.as_slice(), &[0.0, -1.0]);
        let s = f.scores(&[0.0, 1.0], 1.0).unwrap();
        assert_eq!(s.as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn invalid_scale_is_rejected() {
        let f = NormalLocationScale;
        assert!(f.scores(&[0.0, 0.0], 1.0).is_err());
        assert!(f.scores(&[0.0, -1.0], 1.0).is_err());
        assert!(f.fisher_checked(&[1.0, -2.0]).is_err());
    }

    #[test]
    fn location_scale_structure_of_scores() {
        let f = NormalLocationScale;
        let theta = [3.2, 0.7];
        for i in 0..=40 {
            let x = -2.0 + 0.2 * i as f64;
            let direct = f.scores(&theta, x).unwrap();
            let std = f.scores(&[0.0, 1.0], (x - 3.2) / 0.7).unwrap() / 0.7;
            assert!((direct - std).amax() < 1e-10);
        }
        let i_theta = f.fisher(&theta);
        let i_std = f.fisher(&[0.0, 1.0]) / (0.7 * 0.7);
        assert!((i_theta - i_std).amax() < 1e-10);
    }

    #[test]
    fn quantile_round_trip() {
        let f = NormalLocationScale;
        let q = f.quantile(&[3.2, 0.7], 0.9);
        let err = (f.cdf(&[3.2, 0.7], q) - 0.9).abs();
        assert!(err < 1e-12, "{err} {q} {}", norm_quantile(0.9));
    }
}
