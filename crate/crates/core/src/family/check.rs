use nalgebra::{DMatrix, DVector};

use super::ParametricFamily;
use crate::error::Result;
use crate::expectation::{Expectation, ExpectationConfig};

/// Numeric residuals of the score identities at one parameter value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelfCheck {
    /// `‖E Λ‖`
    pub mean_score: f64,
    /// `max |Cov Λ − I| / max |I|`
    pub covariance: f64,
    /// `|∫ p − 1|`
    pub mass: f64,
}

impl SelfCheck {
    pub fn max(&self) -> f64 {
        self.mean_score.max(self.covariance).max(self.mass)
    }
}

/// Checks that scores are centred with covariance equal to the Fisher information.
pub fn self_check(family: &dyn ParametricFamily, theta: &[f64]) -> Result<SelfCheck> {
    let k = family.dim();
    let config = ExpectationConfig {
        abs_tol: 1e-13,
        rel_tol: 1e-12,
        ..ExpectationConfig::default()
    };
    let e = Expectation::new(family, theta, config)?;
    let mut s = vec![0.0; k];
    let raw = e.expect(1 + k + k * k, |x, out| {
        family.scores_into(theta, x, &mut s);
        out[0] = 1.0;
        out[1..=k].copy_from_slice(&s);
        for i in 0..k {
            for j in 0..k {
                out[1 + k + i * k + j] = s[i] * s[j];
            }
        }
    })?;
    let mean = DVector::from_column_slice(&raw[1..=k]);
    let cov = DMatrix::from_row_slice(k, k, &raw[1 + k..]) - &mean * mean.transpose();
    let fisher = family.fisher(theta);
    Ok(SelfCheck {
        mean_score: mean.norm(),
        covariance: (cov - &fisher).amax() / fisher.amax(),
        mass: (raw[0] - 1.0).abs(),
    })
}
