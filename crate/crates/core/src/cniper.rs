//! Cniper points: observation values beyond which a Dirac contamination
//! makes the classical estimator's maximal MSE exceed that of the minmax
//! curve on the contamination neighborhood.

use nalgebra::DVector;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::family::{Model, Support};
use crate::ic::{invert, solve_contamination_ic, SolverConfig};
use crate::optim::brent_root;

/// Why no finite boundary points exist.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CniperDegeneracy {
    /// The criterion holds at every point of the support.
    WholeSupport,
    /// The criterion holds nowhere.
    Empty,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CniperReport {
    pub theta: Vec<f64>,
    pub radius: f64,
    pub lower_point: Option<f64>,
    pub upper_point: Option<f64>,
    /// Open intervals making up the region, clipped to the support.
    pub region: Vec<(f64, f64)>,
    /// Ideal-model probability of the region.
    pub prob_ideal: f64,
    pub tr_a: f64,
    pub tr_i_inv: f64,
    pub degenerate: Option<CniperDegeneracy>,
    /// Points rounded to two decimals, widening `[lower, upper]`, with the
    /// mass of the correspondingly smaller region.
    pub rounded: RoundedRegion,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RoundedRegion {
    pub lower_point: Option<f64>,
    pub upper_point: Option<f64>,
    pub prob_ideal: f64,
}

/// Boundary of `{a : r²|I⁻¹Λ(a)|² > tr A − tr I⁻¹}`.
///
/// The criterion is evaluated on the continuous extension of the scores, so
/// for lattice models the points are generally not lattice points.
pub fn cniper_points(family: &Model, theta: &[f64], r: f64, config: &SolverConfig) -> Result<CniperReport> {
    family.validate(theta)?;
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::InvalidConfig(format!("cniper radius {r} must be positive and finite")));
    }
    let (_, report) = solve_contamination_ic(family, theta, r, config)?;
    let tr_a = report.tr_a.expect("solver report");
    let i_inv = invert(&family.fisher(theta), "Fisher information")?;
    let tr_i_inv = i_inv.trace();
    let gap = tr_a - tr_i_inv;
    let k = family.dim();
    let r2 = r * r;
    let g = |a: f64| -> f64 {
        let mut s = DVector::zeros(k);
        family.scores_into(theta, a, s.as_mut_slice());
        r2 * (&i_inv * s).norm_squared() - gap
    };

    let (dom_lo, dom_hi) = family.extension_domain();
    let q_lo = family.quantile(theta, 1e-8).max(dom_lo);
    let q_hi = family.quantile(theta, 1.0 - 1e-8).min(dom_hi);
    let m = 4000;
    let grid: Vec<f64> = (0..=m).map(|i| q_lo + (q_hi - q_lo) * i as f64 / m as f64).collect();
    let values: Vec<f64> = grid.iter().map(|&a| g(a)).collect();
    let i_min = (0..=m).min_by(|&i, &j| values[i].total_cmp(&values[j])).unwrap();
    let a_min = grid[i_min];

    let mut degenerate = None;
    let (mut lower_point, mut upper_point) = (None, None);
    if values[i_min] > 0.0 {
        degenerate = Some(CniperDegeneracy::WholeSupport);
    } else {
        let left = (0..i_min).rev().find(|&i| values[i] > 0.0).map(|i| grid[i]);
        let left = left.or_else(|| outward(&g, q_lo, a_min, dom_lo, -1.0));
        let right = (i_min + 1..=m).find(|&i| values[i] > 0.0).map(|i| grid[i]);
        let right = right.or_else(|| outward(&g, q_hi, a_min, dom_hi, 1.0));
        let root = |x0: f64, x1: f64| -> Result<f64> {
            let mut f = |a: f64| g(a);
            let (f0, f1) = (f(x0), f(x1));
            brent_root(&mut f, x0, x1, f0, f1, 1e-12 * x0.abs().max(1.0), 300)
        };
        if let Some(x) = left {
            lower_point = Some(root(x, a_min)?);
        }
        if let Some(x) = right {
            upper_point = Some(root(a_min, x)?);
        }
        if left.is_none() && right.is_none() {
            degenerate = Some(CniperDegeneracy::Empty);
        }
    }

    let region = match degenerate {
        Some(CniperDegeneracy::WholeSupport) => vec![(dom_lo, dom_hi)],
        _ => lower_point
            .map(|a| (dom_lo, a))
            .into_iter()
            .chain(upper_point.map(|a| (a, dom_hi)))
            .collect(),
    };
    let mass = |region: &[(f64, f64)]| {
        region
            .iter()
            .map(|&(a, b)| region_mass(family, theta, a, b))
            .sum::<f64>()
            .clamp(0.0, 1.0)
    };
    let prob_ideal = mass(&region);
    let rounded = if degenerate.is_some() {
        RoundedRegion {
            lower_point: None,
            upper_point: None,
            prob_ideal,
        }
    } else {
        let lo = lower_point.map(|a| (a * 100.0).floor() / 100.0);
        let up = upper_point.map(|a| (a * 100.0).ceil() / 100.0);
        let region: Vec<(f64, f64)> = lo
            .map(|a| (dom_lo, a))
            .into_iter()
            .chain(up.map(|a| (a, dom_hi)))
            .collect();
        RoundedRegion {
            lower_point: lo,
            upper_point: up,
            prob_ideal: mass(&region),
        }
    };
    Ok(CniperReport {
        theta: theta.to_vec(),
        radius: r,
        lower_point,
        upper_point,
        region,
        prob_ideal,
        tr_a,
        tr_i_inv,
        degenerate,
        rounded,
    })
}

/// Walks from the grid end towards the domain boundary looking for `g > 0`.
fn outward(g: &dyn Fn(f64) -> f64, from: f64, centre: f64, bound: f64, dir: f64) -> Option<f64> {
    let width = (from - centre).abs().max(1.0);
    for j in 0..60 {
        let x = if bound.is_finite() {
            bound + (from - bound) * 0.5f64.powi(j + 1)
        } else {
            from + dir * width * 2f64.powi(j)
        };
        let v = g(x);
        if v > 0.0 {
            return Some(x);
        }
        if !v.is_finite() {
            return None;
        }
    }
    None
}

/// `P_θ(a < X < b)`, closed at an end lying on the support boundary.
fn region_mass(family: &Model, theta: &[f64], a: f64, b: f64) -> f64 {
    let cdf = |x: f64| {
        if x == f64::INFINITY {
            1.0
        } else if x == f64::NEG_INFINITY {
            0.0
        } else {
            family.cdf(theta, x)
        }
    };
    match family.support() {
        Support::Continuous { .. } => cdf(b) - cdf(a),
        Support::Lattice { lower } => {
            // lattice points k with a < k < b
            let k_lo = if a <= lower as f64 { lower as f64 } else { a.floor() + 1.0 };
            let k_hi = if b.is_finite() { b.ceil() - 1.0 } else { f64::INFINITY };
            if k_hi < k_lo {
                0.0
            } else {
                cdf(k_hi) - cdf(k_lo - 1.0)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::family::{NormalLocationScale, ParametricFamily, Poisson};
    use crate::special::norm_cdf;

    #[test]
    fn normal_points_are_symmetric() {
        let model: Model = Arc::new(NormalLocationScale);
        let rep = cniper_points(&model, &[3.2, 0.7], 0.49, &SolverConfig::default()).unwrap();
        let (lo, up) = (rep.lower_point.unwrap(), rep.upper_point.unwrap());
        assert!((lo + up - 6.4).abs() < 1e-6);
        let closed = 2.0 * norm_cdf((lo - 3.2) / 0.7);
        assert!((rep.prob_ideal - closed).abs() < 1e-9);
        assert!(rep.degenerate.is_none());
    }

    #[test]
    fn poisson_mass_counts_lattice_points() {
        let model: Model = Arc::new(Poisson);
        let rep = cniper_points(&model, &[3.9], 1.532, &SolverConfig::default()).unwrap();
        let (lo, up) = (rep.lower_point.unwrap(), rep.upper_point.unwrap());
        let direct: f64 = (0..200)
            .map(|k| k as f64)
            .filter(|&k| k < lo || k > up)
            .map(|k| Poisson.density(&[3.9], k))
            .sum();
        assert!((rep.prob_ideal - direct).abs() < 1e-12);
        assert!(rep.region[0].0 == 0.0);
    }

    #[test]
    fn rounding_widens_the_interval() {
        let model: Model = Arc::new(NormalLocationScale);
        let rep = cniper_points(&model, &[3.2, 0.7], 0.49, &SolverConfig::default()).unwrap();
        let r = rep.rounded;
        assert!(r.lower_point.unwrap() <= rep.lower_point.unwrap());
        assert!(r.upper_point.unwrap() >= rep.upper_point.unwrap());
        assert!(r.prob_ideal <= rep.prob_ideal);
        let closed = norm_cdf((r.lower_point.unwrap() - 3.2) / 0.7) + norm_cdf((3.2 - r.upper_point.unwrap()) / 0.7);
        assert!((r.prob_ideal - closed).abs() < 1e-12);
    }

    #[test]
    fn residual_at_points() {
        let model: Model = Arc::new(Poisson);
        let rep = cniper_points(&model, &[2.0], 0.8, &SolverConfig::default()).unwrap();
        let gap = rep.tr_a - rep.tr_i_inv;
        for a in [rep.lower_point, rep.upper_point].into_iter().flatten() {
            // ψ_h(a) = a − λ for the Poisson model
            let lhs = 0.8f64.powi(2) * (a - 2.0).powi(2);
            assert!(((lhs - gap) / gap).abs() < 1e-6);
        }
    }

    #[test]
    fn rejects_zero_radius() {
        let model: Model = Arc::new(Poisson);
        assert!(cniper_points(&model, &[2.0], 0.0, &SolverConfig::default()).is_err());
    }
}
