use std::fmt;
use std::sync::Mutex;

use nalgebra::{DMatrix, DVector};

use super::{ParametricFamily, Support};
use crate::error::{Error, Result};
use crate::expectation::{Expectation, ExpectationConfig};

/// A k-dimensional exponential family `p_θ(x) = exp{ζ(θ)'T(x) − β(θ)} h(x)`.
pub trait ExponentialFamilySpec: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn param_names(&self) -> Vec<String>;
    fn support(&self) -> Support;
    fn is_valid(&self, theta: &[f64]) -> bool;
    /// Natural parameter `ζ(θ)`.
    fn zeta(&self, theta: &[f64]) -> DVector<f64>;
    /// Jacobian `J_ζ = ∂ζ/∂θ` (rows: components of ζ).
    fn jacobian_zeta(&self, theta: &[f64]) -> DMatrix<f64>;
    fn statistic(&self, x: f64, out: &mut [f64]);
    /// `log h(x)`; `-∞` where the carrier vanishes.
    fn log_carrier(&self, x: f64) -> f64;
    fn log_normalizer(&self, theta: &[f64]) -> f64;
    fn cdf(&self, theta: &[f64], x: f64) -> f64;
}

#[derive(Debug, Clone)]
struct Moments {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

const MOMENT_CACHE: usize = 16;

/// Parametric family built from an [`ExponentialFamilySpec`]: scores
/// `J_ζ'(T − E_θ T)` and Fisher information `J_ζ' Cov_θ(T) J_ζ`, with the moments
/// of `T` computed numerically.
#[derive(Debug)]
pub struct ExpFamily<S> {
    spec: S,
    config: ExpectationConfig,
    cache: Mutex<Vec<(Vec<u64>, Moments)>>,
}

/// Builds a family from an exponential-family description, checking the
/// Jacobian at `theta_check` for regularity.
pub fn family_from_exponential<S: ExponentialFamilySpec>(spec: S, theta_check: &[f64]) -> Result<ExpFamily<S>> {
    let fam = ExpFamily {
        spec,
        config: ExpectationConfig {
            abs_tol: 1e-13,
            rel_tol: 1e-12,
            ..ExpectationConfig::default()
        },
        cache: Mutex::new(Vec::new()),
    };
    fam.check_jacobian(theta_check)?;
    Ok(fam)
}

impl<S: ExponentialFamilySpec> ExpFamily<S> {
    pub fn spec(&self) -> &S {
        &self.spec
    }

    pub fn check_jacobian(&self, theta: &[f64]) -> Result<()> {
        self.validate(theta)?;
        let j = self.spec.jacobian_zeta(theta);
        let svd = j.clone().svd(false, false);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        if !(smin > 1e-12 * smax) {
            return Err(Error::DegenerateParametrization(format!(
                "singular Jacobian of the natural parameter at {theta:?}"
            )));
        }
        Ok(())
    }

    fn moments(&self, theta: &[f64]) -> Moments {
        let key: Vec<u64> = theta.iter().map(|t| t.to_bits()).collect();
        if let Some((_, m)) = self.cache.lock().unwrap().iter().find(|(k, _)| *k == key) {
            return m.clone();
        }
        let k = self.spec.dim();
        let e = Expectation::new(self, theta, self.config).expect("valid parameter");
        let mut t = vec![0.0; k];
        let raw = e
            .expect(k + k * k, |x, out| {
                self.spec.statistic(x, &mut t);
                out[..k].copy_from_slice(&t);
                for i in 0..k {
                    for j in 0..k {
                        out[k + i * k + j] = t[i] * t[j];
                    }
                }
            })
            .expect("moments of the sufficient statistic");
        let mean = DVector::from_column_slice(&raw[..k]);
        let second = DMatrix::from_row_slice(k, k, &raw[k..]);
        let cov = second - &mean * mean.transpose();
        let m = Moments { mean, cov };
        let mut cache = self.cache.lock().unwrap();
        if cache.len() >= MOMENT_CACHE {
            cache.remove(0);
        }
        cache.push((key, m.clone()));
        m
    }
}

impl<S: ExponentialFamilySpec> ParametricFamily for ExpFamily<S> {
    fn name(&self) -> &str {
        self.spec.name()
    }

    fn dim(&self) -> usize {
        self.spec.dim()
    }

    fn param_names(&self) -> Vec<String> {
        self.spec.param_names()
    }

    fn support(&self) -> Support {
        self.spec.support()
    }

    fn is_valid(&self, theta: &[f64]) -> bool {
        self.spec.is_valid(theta)
    }

    fn density(&self, theta: &[f64], x: f64) -> f64 {
        let ld = self.log_density(theta, x);
        if ld == f64::NEG_INFINITY {
            0.0
        } else {
            ld.exp()
        }
    }

    fn log_density(&self, theta: &[f64], x: f64) -> f64 {
        if !self.spec.support().contains(x) {
            return f64::NEG_INFINITY;
        }
        let lh = self.spec.log_carrier(x);
        if lh == f64::NEG_INFINITY {
            return lh;
        }
        let mut t = vec![0.0; self.spec.dim()];
        self.spec.statistic(x, &mut t);
        let zeta = self.spec.zeta(theta);
        zeta.iter().zip(&t).map(|(z, t)| z * t).sum::<f64>() - self.spec.log_normalizer(theta) + lh
    }

    fn scores_into(&self, theta: &[f64], x: f64, out: &mut [f64]) {
        let k = self.spec.dim();
        let m = self.moments(theta);
        let mut t = vec![0.0; k];
        self.spec.statistic(x, &mut t);
        let centered = DVector::from_column_slice(&t) - m.mean;
        let s = self.spec.jacobian_zeta(theta).transpose() * centered;
        out.copy_from_slice(s.as_slice());
    }

    fn fisher(&self, theta: &[f64]) -> DMatrix<f64> {
        let j = self.spec.jacobian_zeta(theta);
        let m = self.moments(theta);
        j.transpose() * m.cov * j
    }

    fn cdf(&self, theta: &[f64], x: f64) -> f64 {
        self.spec.cdf(theta, x)
    }
}
