//! Starting estimators: Cramér–von Mises minimum distance, median/MAD and
//! maximum likelihood.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::family::{ParametricFamily, Support};
use crate::optim::nelder_mead;
use crate::special::norm_quantile;

/// Integrating measure of the Cramér–von Mises distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CvmWeighting {
    /// `∫ (F_n − F_θ)² dF_θ`.
    #[default]
    Model,
    /// `∫ (F_n − F_θ)² dF_n`.
    Empirical,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizerConfig {
    pub ftol: f64,
    pub xtol: f64,
    pub max_iter: usize,
    /// Initial simplex step, relative to `max(|u|, 1)` per unconstrained coordinate.
    pub step: f64,
    pub restart_grid: bool,
    pub weighting: CvmWeighting,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            ftol: 1e-13,
            xtol: 1e-10,
            max_iter: 10_000,
            step: 0.1,
            restart_grid: true,
            weighting: CvmWeighting::Model,
        }
    }
}

/// Which start estimator to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StartMethod {
    #[default]
    Cvm,
    MedianMad,
    Mle,
}

impl StartMethod {
    pub fn label(&self) -> &'static str {
        match self {
            StartMethod::Cvm => "cvm",
            StartMethod::MedianMad => "median-mad",
            StartMethod::Mle => "mle",
        }
    }
}

impl fmt::Display for StartMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for StartMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cvm" => Ok(StartMethod::Cvm),
            "median-mad" => Ok(StartMethod::MedianMad),
            "mle" => Ok(StartMethod::Mle),
            _ => Err(Error::InvalidConfig(format!(
                "unknown start method '{s}' (expected cvm, median-mad or mle)"
            ))),
        }
    }
}

/// Start estimate by the chosen method. `median-mad` needs a location–scale
/// family with parameters `(location, scale)`.
pub fn start_estimate(method: StartMethod, family: &dyn ParametricFamily, data: &Dataset) -> Result<Vec<f64>> {
    match method {
        StartMethod::Cvm => cvm_estimate(family, data, &OptimizerConfig::default()),
        StartMethod::Mle => mle(family, data),
        StartMethod::MedianMad => {
            if family.dim() != 2 || family.location_scale(&[0.0, 1.0]).is_none() {
                return Err(Error::InvalidConfig(format!(
                    "median-mad start needs a location-scale model, not {}",
                    family.name()
                )));
            }
            let (m, s) = median_mad(data)?;
            Ok(vec![m, s])
        }
    }
}

/// Squared Cramér–von Mises distance between the sample and `P_θ`.
///
/// Continuous model weighting uses the order-statistics form
/// `1/(12n²) + (1/n) Σ (F_θ(x₍ᵢ₎) − (2i − 1)/(2n))²`, exact also under ties.
/// Lattice model weighting sums `p_θ(k) (F_n(k) − F_θ(k))²` over the support.
pub fn cvm_distance(family: &dyn ParametricFamily, theta: &[f64], data: &Dataset, weighting: CvmWeighting) -> f64 {
    let counts = data.sorted_counts();
    let n = data.n() as f64;
    match (weighting, family.support()) {
        (CvmWeighting::Empirical, _) => {
            let mut cum = 0u64;
            let mut sum = 0.0;
            for &(v, c) in &counts {
                cum += c;
                let d = cum as f64 / n - family.cdf(theta, v);
                sum += c as f64 * d * d;
            }
            sum / n
        }
        (CvmWeighting::Model, Support::Continuous { .. }) => {
            let mut i = 0u64;
            let mut sum = 0.0;
            for &(v, c) in &counts {
                let u = family.cdf(theta, v);
                for _ in 0..c {
                    i += 1;
                    let d = u - (2 * i - 1) as f64 / (2.0 * n);
                    sum += d * d;
                }
            }
            1.0 / (12.0 * n * n) + sum / n
        }
        (CvmWeighting::Model, Support::Lattice { lower }) => {
            let max = counts.last().map_or(lower as f64, |&(v, _)| v);
            let mut next = counts.iter().peekable();
            let mut cum = 0u64;
            let mut sum = 0.0;
            let mut k = lower as f64;
            // the loop stops once past the data and the model tail is negligible
            loop {
                while let Some(&&(v, c)) = next.peek() {
                    if v > k {
                        break;
                    }
                    cum += c;
                    next.next();
                }
                let f = family.cdf(theta, k);
                let d = cum as f64 / n - f;
                sum += family.density(theta, k) * d * d;
                if (k >= max && 1.0 - f < 1e-16) || k - lower as f64 > 1e7 {
                    break;
                }
                k += 1.0;
            }
            sum
        }
    }
}

/// Result of a minimum distance fit.
#[derive(Debug, Clone, PartialEq)]
pub struct CvmFit {
    pub theta: Vec<f64>,
    pub objective: f64,
    /// Where the first run started.
    pub start: Vec<f64>,
    /// Objective at the start.
    pub start_objective: f64,
    /// Lowest objective over the restart grid, when the grid was evaluated.
    pub grid_minimum: Option<f64>,
    pub restarted: bool,
}

/// Minimum Cramér–von Mises distance estimate.
pub fn cvm_estimate(family: &dyn ParametricFamily, data: &Dataset, config: &OptimizerConfig) -> Result<Vec<f64>> {
    cvm_fit(family, data, config).map(|f| f.theta)
}

/// Nelder–Mead in unconstrained coordinates from the MLE (or a moment
/// estimate), restarted from the best point of a 5-per-coordinate grid
/// `u + ln 2·{−2, −1, 0, 1, 2}` when that beats the first run.
pub fn cvm_fit(family: &dyn ParametricFamily, data: &Dataset, config: &OptimizerConfig) -> Result<CvmFit> {
    let start = mle(family, data).or_else(|_| fallback_start(family, data))?;
    let u0 = family.to_unconstrained(&start);
    let objective = |u: &[f64]| -> f64 {
        let theta = family.from_unconstrained(u);
        if theta.iter().any(|t| !t.is_finite()) || !family.is_valid(&theta) {
            return f64::INFINITY;
        }
        cvm_distance(family, &theta, data, config.weighting)
    };
    let start_objective = objective(&u0);
    let mut best = minimize(&objective, &u0, config);
    let mut grid_minimum = None;
    let mut restarted = false;
    if config.restart_grid {
        let (g_u, g_val) = grid_search(&objective, &u0);
        grid_minimum = Some(g_val);
        if g_val < best.1 {
            let second = minimize(&objective, &g_u, config);
            restarted = true;
            if second.1 < best.1 || !best.2 {
                best = second;
            }
        }
    }
    let (u, value, converged) = best;
    let theta = family.from_unconstrained(&u);
    if !converged {
        return Err(Error::OptimizerFailure {
            reason: format!("Nelder-Mead stopped after {} iterations", config.max_iter),
            best: theta,
        });
    }
    Ok(CvmFit {
        theta,
        objective: value,
        start,
        start_objective,
        grid_minimum,
        restarted,
    })
}

fn minimize(f: &dyn Fn(&[f64]) -> f64, u0: &[f64], config: &OptimizerConfig) -> (Vec<f64>, f64, bool) {
    // per-coordinate scaling so that the step is relative
    let scale: Vec<f64> = u0.iter().map(|u| u.abs().max(1.0)).collect();
    let to_u = |z: &[f64]| -> Vec<f64> { z.iter().zip(u0).zip(&scale).map(|((z, u), s)| u + z * s).collect() };
    let zero = vec![0.0; u0.len()];
    let m = nelder_mead(|z| f(&to_u(z)), &zero, config.step, config.ftol, config.xtol, config.max_iter);
    (to_u(&m.x), m.value, m.converged)
}

fn grid_search(f: &dyn Fn(&[f64]) -> f64, u0: &[f64]) -> (Vec<f64>, f64) {
    let k = u0.len();
    let offsets = [-2.0, -1.0, 0.0, 1.0, 2.0].map(|m: f64| m * std::f64::consts::LN_2);
    let mut best = (u0.to_vec(), f(u0));
    let mut idx = vec![0usize; k];
    loop {
        let u: Vec<f64> = (0..k).map(|j| u0[j] + offsets[idx[j]]).collect();
        let v = f(&u);
        if v < best.1 {
            best = (u, v);
        }
        let mut j = 0;
        while j < k {
            idx[j] += 1;
            if idx[j] < offsets.len() {
                break;
            }
            idx[j] = 0;
            j += 1;
        }
        if j == k {
            return best;
        }
    }
}

fn fallback_start(family: &dyn ParametricFamily, data: &Dataset) -> Result<Vec<f64>> {
    let mean = data.mean();
    let var = data.variance();
    let floor = (1e-6 * (1.0 + mean.abs())).powi(2);
    family
        .moment_estimate(mean, var)
        .or_else(|| family.moment_estimate(mean, var.max(floor)))
        .filter(|t| family.is_valid(t))
        .ok_or_else(|| Error::InvalidData(format!("no starting value for {} from this sample", family.name())))
}

/// `k`-th order statistic (1-based) from sorted counts.
fn order_stat(counts: &[(f64, u64)], k: u64) -> f64 {
    let mut cum = 0;
    for &(v, c) in counts {
        cum += c;
        if cum >= k {
            return v;
        }
    }
    counts.last().unwrap().0
}

fn weighted_median(counts: &[(f64, u64)], n: u64) -> f64 {
    if n % 2 == 1 {
        order_stat(counts, n / 2 + 1)
    } else {
        0.5 * (order_stat(counts, n / 2) + order_stat(counts, n / 2 + 1))
    }
}

/// Median and MAD standardized by `Φ⁻¹(3/4)`.
pub fn median_mad(data: &Dataset) -> Result<(f64, f64)> {
    let counts = data.sorted_counts();
    let n = data.n();
    let med = weighted_median(&counts, n);
    let mut dev: Vec<(f64, u64)> = counts.iter().map(|&(v, c)| ((v - med).abs(), c)).collect();
    dev.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mad = weighted_median(&dev, n);
    if mad == 0.0 {
        return Err(Error::DegenerateScale(format!(
            "MAD is zero (at least half the sample equals {med})"
        )));
    }
    Ok((med, mad / norm_quantile(0.75)))
}

/// Maximum likelihood estimate (normal scale with divisor `n − 1`).
pub fn mle(family: &dyn ParametricFamily, data: &Dataset) -> Result<Vec<f64>> {
    let counts = data.sorted_counts();
    let support = family.support();
    if let Some(&(x, _)) = counts.iter().find(|(v, _)| !support.contains(*v)) {
        return Err(Error::InvalidData(format!(
            "observation {x} lies outside the support of {}",
            family.name()
        )));
    }
    let (mean, var) = (data.mean(), data.variance());
    if let Some(theta) = family.closed_form_mle(mean, var) {
        if !family.is_valid(&theta) {
            return Err(Error::DegenerateScale(format!(
                "maximum likelihood estimate {theta:?} lies on the boundary of the parameter domain"
            )));
        }
        return Ok(theta);
    }
    let start = family.moment_estimate(mean, var).ok_or_else(|| {
        Error::DegenerateScale(format!("no moment estimate for {} (variance {var})", family.name()))
    })?;
    let nll = |u: &[f64]| -> f64 {
        let theta = family.from_unconstrained(u);
        if theta.iter().any(|t| !t.is_finite()) || !family.is_valid(&theta) {
            return f64::INFINITY;
        }
        -counts
            .iter()
            .map(|&(v, c)| c as f64 * family.log_density(&theta, v))
            .sum::<f64>()
    };
    let config = OptimizerConfig::default();
    let (u, _, converged) = minimize(&nll, &family.to_unconstrained(&start), &config);
    let theta = family.from_unconstrained(&u);
    if !converged {
        return Err(Error::OptimizerFailure {
            reason: "likelihood maximization did not converge".into(),
            best: theta,
        });
    }
    Ok(theta)
}
