//! One-step estimators: a start estimate plus the sample mean of the optimal
//! influence curve at the start.

use nalgebra::DVector;
use serde::Serialize;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::family::Model;
use crate::ic::{Diagnostics, IcCache, InfluenceCurve, Neighborhood, RiskReport, SolverConfig};
use crate::rmx::{RadiusInterval, RmxSearch, DEFAULT_RMX_TOL};
use crate::start::{start_estimate, StartMethod};

/// Radius used to solve the influence curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IcSpec {
    Radius(f64),
    /// Radius-minmax over the interval.
    Interval(RadiusInterval),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OneStepConfig {
    pub neighborhood: Neighborhood,
    pub solver: SolverConfig,
    pub rmx_tol: f64,
    /// Number of steps; each further step re-solves the curve at the previous result.
    pub steps: usize,
    /// Keep `ψ(xᵢ)` for every distinct observation in the report.
    pub keep_ic_values: bool,
}

impl Default for OneStepConfig {
    fn default() -> Self {
        OneStepConfig {
            neighborhood: Neighborhood::Contamination,
            solver: SolverConfig::default(),
            rmx_tol: DEFAULT_RMX_TOL,
            steps: 1,
            keep_ic_values: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StartInfo {
    pub method: String,
    pub theta: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Multipliers {
    #[serde(rename = "A")]
    pub a_mat: Vec<Vec<f64>>,
    pub a: Vec<f64>,
    pub b: f64,
    pub c: Option<f64>,
}

impl Multipliers {
    pub fn of(ic: &InfluenceCurve) -> Self {
        let k = ic.dim();
        Multipliers {
            a_mat: (0..k).map(|i| (0..k).map(|j| ic.a_mat[(i, j)]).collect()).collect(),
            a: ic.a().iter().copied().collect(),
            b: ic.b,
            c: ic.c,
        }
    }
}

/// `ψ(x)` at one distinct observation value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IcValue {
    pub x: f64,
    pub count: u64,
    pub psi: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimationReport {
    pub start: StartInfo,
    pub r_lo: f64,
    pub r_up: f64,
    /// Radius the curve was solved at (least favorable radius for an interval).
    pub r0: f64,
    pub neighborhood: Neighborhood,
    pub estimate: Vec<f64>,
    pub multipliers: Multipliers,
    /// `S_n − θ̂`
    pub shift: Vec<f64>,
    pub risk: RiskReport,
    pub diagnostics: Diagnostics,
    pub steps: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ic_values: Option<Vec<IcValue>>,
    #[serde(skip)]
    pub ic: InfluenceCurve,
}

impl EstimationReport {
    pub fn shift_norm(&self) -> f64 {
        self.shift.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// `ψ(x)` for real `x` in the extension domain of the scores, e.g. between
/// lattice points of a discrete model.
pub fn ic_extension_eval(ic: &InfluenceCurve, x: f64) -> Result<DVector<f64>> {
    ic.eval(x)
}

/// Mean of `ψ` over the sample, summed in increasing order of the values.
fn ic_mean(ic: &InfluenceCurve, data: &Dataset, keep: bool) -> Result<(Vec<f64>, Option<Vec<IcValue>>)> {
    let k = ic.dim();
    let mut sum = vec![0.0; k];
    let mut kept = keep.then(Vec::new);
    for (x, count) in data.sorted_counts() {
        let psi = ic.eval(x)?;
        for (s, p) in sum.iter_mut().zip(psi.iter()) {
            *s += count as f64 * p;
        }
        if let Some(v) = kept.as_mut() {
            v.push(IcValue {
                x,
                count,
                psi: psi.iter().copied().collect(),
            });
        }
    }
    let n = data.n() as f64;
    Ok((sum.into_iter().map(|s| s / n).collect(), kept))
}

fn solve_at(
    family: &Model,
    theta: &[f64],
    spec: IcSpec,
    config: &OneStepConfig,
    cache: &IcCache,
) -> Result<(InfluenceCurve, RiskReport, f64)> {
    match spec {
        IcSpec::Radius(r) => {
            let (ic, rep) = cache.solve(family, theta, r, config.neighborhood, &config.solver)?;
            Ok((ic, rep, r))
        }
        IcSpec::Interval(iv) => {
            let search = RmxSearch::new(family.clone(), config.neighborhood, config.solver, cache);
            let sol = search.rmx_ic(theta, iv, config.rmx_tol)?;
            Ok((sol.ic, sol.report, sol.r0))
        }
    }
}

/// One-step estimate `S_n = θ̂ + (1/n) Σ ψ*_θ̂(xᵢ)`.
pub fn one_step(
    family: &Model,
    start: &[f64],
    start_method: &str,
    data: &Dataset,
    spec: IcSpec,
    config: &OneStepConfig,
) -> Result<EstimationReport> {
    one_step_cached(family, start, start_method, data, spec, config, &IcCache::new())
}

pub fn one_step_cached(
    family: &Model,
    start: &[f64],
    start_method: &str,
    data: &Dataset,
    spec: IcSpec,
    config: &OneStepConfig,
    cache: &IcCache,
) -> Result<EstimationReport> {
    if family.validate(start).is_err() {
        return Err(Error::InvalidStart(start.to_vec()));
    }
    if config.steps == 0 {
        return Err(Error::InvalidConfig("at least one step is needed".into()));
    }
    let (r_lo, r_up) = match spec {
        IcSpec::Radius(r) => (r, r),
        IcSpec::Interval(iv) => (iv.lower(), iv.upper()),
    };
    let mut theta = start.to_vec();
    let mut last = None;
    for _ in 0..config.steps {
        let (ic, risk, r0) = solve_at(family, &theta, spec, config, cache)?;
        let (mean, kept) = ic_mean(&ic, data, config.keep_ic_values)?;
        let next: Vec<f64> = theta.iter().zip(&mean).map(|(t, m)| t + m).collect();
        if family.validate(&next).is_err() && config.steps > 1 {
            return Err(Error::InvalidStart(next));
        }
        theta = next;
        last = Some((ic, risk, r0, mean, kept));
    }
    let (ic, risk, r0, shift, ic_values) = last.expect("at least one step");
    Ok(EstimationReport {
        start: StartInfo {
            method: start_method.to_string(),
            theta: start.to_vec(),
        },
        r_lo,
        r_up,
        r0,
        neighborhood: config.neighborhood,
        // with several steps the shift is that of the last step
        estimate: theta,
        multipliers: Multipliers::of(&ic),
        shift,
        risk,
        diagnostics: ic.diagnostics.clone(),
        steps: config.steps,
        ic_values,
        ic,
    })
}

/// Start estimate, radius-minmax curve at the start for radii `√n·eps`, and
/// the one-step estimate.
pub fn roptest_pipeline(
    family: &Model,
    data: &Dataset,
    eps_lo: f64,
    eps_up: f64,
    start_method: StartMethod,
    config: &OneStepConfig,
) -> Result<EstimationReport> {
    if !(0.0..0.5).contains(&eps_lo) || !(eps_up > eps_lo && eps_up <= 0.5) {
        return Err(Error::InvalidBounds(format!(
            "need 0 <= eps_lower < eps_upper <= 0.5, got [{eps_lo}, {eps_up}]"
        )));
    }
    let interval = RadiusInterval::from_fractions(eps_lo, eps_up, data.n())?;
    let start = start_estimate(start_method, &**family, data)?;
    one_step(family, &start, start_method.label(), data, IcSpec::Interval(interval), config)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::family::{NormalLocationScale, Poisson};

    #[test]
    fn zero_correction_keeps_start() {
        // symmetric sample around the location: ψ values cancel in pairs
        let model: Model = Arc::new(NormalLocationScale);
        let mut obs = Vec::new();
        for d in [0.3, 0.8, 1.9] {
            obs.push(2.0 - d);
            obs.push(2.0 + d);
        }
        let data = Dataset::from_observations(obs, "sym").unwrap();
        let rep = one_step(&model, &[2.0, 1.0], "given", &data, IcSpec::Radius(0.5), &OneStepConfig::default())
            .unwrap();
        // the data are symmetric only up to rounding of 2 ± d
        assert!(rep.shift[0].abs() < 1e-14, "{}", rep.shift[0]);
        assert_eq!(rep.estimate[0], 2.0 + rep.shift[0]);
    }

    #[test]
    fn invalid_start_rejected() {
        let model: Model = Arc::new(NormalLocationScale);
        let data = Dataset::from_observations(vec![1.0, 2.0], "x").unwrap();
        let out = one_step(&model, &[0.0, -1.0], "given", &data, IcSpec::Radius(0.5), &OneStepConfig::default());
        assert!(matches!(out, Err(Error::InvalidStart(_))));
    }

    #[test]
    fn extension_eval_between_lattice_points() {
        let model: Model = Arc::new(Poisson);
        let cache = IcCache::new();
        let (ic, _) = cache
            .solve(&model, &[3.9], 1.0, Neighborhood::Contamination, &SolverConfig::default())
            .unwrap();
        assert_eq!(ic_extension_eval(&ic, 3.0).unwrap(), ic.eval(3.0).unwrap());
        assert!(ic_extension_eval(&ic, 2.5).unwrap()[0].abs() <= ic.b);
        let far = ic_extension_eval(&ic, 1e6).unwrap()[0];
        assert!((far.abs() - ic.b).abs() < 1e-9);
        assert!(ic_extension_eval(&ic, -0.5).is_err());
    }

    #[test]
    fn bounds_validated() {
        let model: Model = Arc::new(Poisson);
        let data = Dataset::from_observations(vec![1.0, 2.0, 4.0], "x").unwrap();
        let cfg = OneStepConfig::default();
        for (lo, up) in [(0.2, 0.1), (0.1, 0.1), (-0.1, 0.2), (0.1, 0.6)] {
            assert!(matches!(
                roptest_pipeline(&model, &data, lo, up, StartMethod::Mle, &cfg),
                Err(Error::InvalidBounds(_))
            ));
        }
    }
}
