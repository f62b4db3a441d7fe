//! Relative MSE, least favorable radius and the radius-minmax curve for a
//! radius known only up to an interval.

use crate::error::{Error, Result};
use crate::family::Model;
use crate::ic::{IcCache, InfluenceCurve, Neighborhood, RiskReport, SolverConfig};

/// Radius interval `[r_lo, r_up]` with `0 ≤ r_lo < r_up < ∞`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadiusInterval {
    r_lo: f64,
    r_up: f64,
}

impl RadiusInterval {
    pub fn new(r_lo: f64, r_up: f64) -> Result<Self> {
        if !(r_lo >= 0.0 && r_lo < r_up && r_up.is_finite()) {
            return Err(Error::InvalidInterval(r_lo, r_up));
        }
        Ok(RadiusInterval { r_lo, r_up })
    }

    /// Radii `√n·eps` for contamination fractions `eps_lo < eps_up`.
    pub fn from_fractions(eps_lo: f64, eps_up: f64, n: u64) -> Result<Self> {
        let root = (n as f64).sqrt();
        Self::new(root * eps_lo, root * eps_up)
    }

    pub fn lower(&self) -> f64 {
        self.r_lo
    }

    pub fn upper(&self) -> f64 {
        self.r_up
    }
}

/// Radius-minmax solution.
#[derive(Debug, Clone)]
pub struct RmxSolution {
    pub ic: InfluenceCurve,
    pub report: RiskReport,
    /// Least favorable radius.
    pub r0: f64,
    pub interval: RadiusInterval,
}

/// `E|ψ|²` from the identity `MSE = tr A` at the curve's own radius.
fn variance_of(report: &RiskReport) -> f64 {
    let tr_a = report.tr_a.expect("solver report");
    if report.radius == 0.0 {
        tr_a
    } else {
        tr_a - report.radius * report.radius * report.bias_bound * report.bias_bound
    }
}

/// Maximal MSE of the optimal curve for radius `s`, evaluated at radius `r`.
fn cross_mse(report_s: &RiskReport, r: f64) -> f64 {
    crate::ic::mse_value(variance_of(report_s), r, report_s.bias_bound)
}

/// Searches share solved curves through an [`IcCache`].
#[derive(Debug)]
pub struct RmxSearch<'c> {
    family: Model,
    neighborhood: Neighborhood,
    config: SolverConfig,
    cache: &'c IcCache,
}

impl<'c> RmxSearch<'c> {
    pub fn new(family: Model, neighborhood: Neighborhood, config: SolverConfig, cache: &'c IcCache) -> Self {
        RmxSearch {
            family,
            neighborhood,
            config,
            cache,
        }
    }

    fn solve(&self, theta: &[f64], r: f64) -> Result<(InfluenceCurve, RiskReport)> {
        self.cache.solve(&self.family, theta, r, self.neighborhood, &self.config)
    }

    /// `MSE(ψ*_s, r) / tr A_r`, with `tr I⁻¹` as denominator at `r = 0`.
    pub fn rel_mse(&self, theta: &[f64], s: f64, r: f64) -> Result<f64> {
        let (_, rep_s) = self.solve(theta, s)?;
        let (_, rep_r) = self.solve(theta, r)?;
        Ok(cross_mse(&rep_s, r) / rep_r.tr_a.expect("solver report"))
    }

    /// Least favorable radius: the root of
    /// `g(s) = relMSE(s, r_lo) − relMSE(s, r_up)` by bisection, stopped once
    /// `|g| < tol`.
    pub fn least_favorable_radius(&self, theta: &[f64], interval: RadiusInterval, tol: f64) -> Result<f64> {
        let (r_lo, r_up) = (interval.r_lo, interval.r_up);
        if r_up - r_lo < tol {
            return Ok(0.5 * (r_lo + r_up));
        }
        let g = |s: f64| -> Result<f64> { Ok(self.rel_mse(theta, s, r_lo)? - self.rel_mse(theta, s, r_up)?) };
        let (g_lo, g_up) = (g(r_lo)?, g(r_up)?);
        if !(g_lo < 0.0 && g_up > 0.0) {
            return Err(Error::NoCrossing { r_lo, r_up, g_lo, g_up });
        }
        let (mut lo, mut hi) = (r_lo, r_up);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let gm = g(mid)?;
            if gm.abs() < tol || hi - lo < 1e-12 * r_up {
                return Ok(mid);
            }
            if gm < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    pub fn rmx_ic(&self, theta: &[f64], interval: RadiusInterval, tol: f64) -> Result<RmxSolution> {
        self.family.validate(theta)?;
        // relMSE is invariant under the location–scale map, so r₀ is found at
        // the standard member and the curve is mapped back
        if let Some(ls) = self.family.location_scale(theta) {
            if ls.standard.as_slice() != theta {
                let std = self.rmx_ic(&ls.standard, interval, tol)?;
                return Ok(RmxSolution {
                    ic: std.ic.rescaled(&ls, theta),
                    report: std.report.rescaled(ls.scale),
                    ..std
                });
            }
        }
        let r0 = self.least_favorable_radius(theta, interval, tol)?;
        let (ic, report) = self.solve(theta, r0)?;
        Ok(RmxSolution {
            ic,
            report,
            r0,
            interval,
        })
    }
}

pub const DEFAULT_RMX_TOL: f64 = 1e-4;

pub fn rel_mse(
    family: &Model,
    theta: &[f64],
    s: f64,
    r: f64,
    neighborhood: Neighborhood,
    config: &SolverConfig,
) -> Result<f64> {
    let cache = IcCache::new();
    RmxSearch::new(family.clone(), neighborhood, *config, &cache).rel_mse(theta, s, r)
}

pub fn least_favorable_radius(
    family: &Model,
    theta: &[f64],
    interval: RadiusInterval,
    neighborhood: Neighborhood,
    tol: f64,
    config: &SolverConfig,
) -> Result<f64> {
    let cache = IcCache::new();
    RmxSearch::new(family.clone(), neighborhood, *config, &cache).least_favorable_radius(theta, interval, tol)
}

pub fn rmx_ic(
    family: &Model,
    theta: &[f64],
    interval: RadiusInterval,
    neighborhood: Neighborhood,
    config: &SolverConfig,
) -> Result<RmxSolution> {
    let cache = IcCache::new();
    RmxSearch::new(family.clone(), neighborhood, *config, &cache).rmx_ic(theta, interval, DEFAULT_RMX_TOL)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::family::{NormalLocationScale, Poisson};

    #[test]
    fn interval_validation() {
        assert!(RadiusInterval::new(0.5, 0.5).is_err());
        assert!(RadiusInterval::new(-0.1, 0.5).is_err());
        assert!(RadiusInterval::new(0.1, f64::INFINITY).is_err());
        let iv = RadiusInterval::from_fractions(0.05, 0.2, 24).unwrap();
        assert!((iv.lower() - 24f64.sqrt() * 0.05).abs() < 1e-15);
    }

    #[test]
    fn self_relative_is_one() {
        let model: Model = Arc::new(NormalLocationScale);
        let cfg = SolverConfig::default();
        for &r in &[0.1, 0.5] {
            let v = rel_mse(&model, &[0.0, 1.0], r, r, Neighborhood::Contamination, &cfg).unwrap();
            assert!((v - 1.0).abs() < 1e-9, "{v}");
        }
        let v = rel_mse(&model, &[0.0, 1.0], 0.5, 0.25, Neighborhood::Contamination, &cfg).unwrap();
        assert!(v.is_finite() && v > 1.0);
    }

    #[test]
    fn endpoints_balance_at_least_favorable_radius() {
        let model: Model = Arc::new(Poisson);
        let cfg = SolverConfig::default();
        let cache = IcCache::new();
        let search = RmxSearch::new(model, Neighborhood::Contamination, cfg, &cache);
        let iv = RadiusInterval::new(0.2, 1.0).unwrap();
        let r0 = search.least_favorable_radius(&[3.9], iv, 1e-4).unwrap();
        let lo = search.rel_mse(&[3.9], r0, 0.2).unwrap();
        let up = search.rel_mse(&[3.9], r0, 1.0).unwrap();
        assert!((lo - up).abs() < 2e-4);
    }

    #[test]
    fn collapsed_interval_returns_midpoint() {
        let model: Model = Arc::new(Poisson);
        let iv = RadiusInterval::new(0.3, 0.3 + 1e-5).unwrap();
        let r0 = least_favorable_radius(&model, &[2.0], iv, Neighborhood::Contamination, 1e-4, &SolverConfig::default())
            .unwrap();
        assert_eq!(r0, 0.5 * (0.3 + 0.3 + 1e-5));
    }
}
