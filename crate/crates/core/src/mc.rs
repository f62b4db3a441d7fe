//! Contaminated and perturbed samples, and a Monte Carlo risk comparison of
//! estimators.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::expectation::{Expectation, ExpectationConfig};
use crate::family::Model;
use crate::ic::{IcCache, Neighborhood};
use crate::onestep::{one_step_cached, IcSpec, OneStepConfig};
use crate::rmx::RadiusInterval;
use crate::start::{mle, start_estimate, StartMethod};

/// Draws from a contaminating distribution.
pub type Sampler = Arc<dyn Fn(&mut dyn RngCore) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum Contaminant {
    Dirac(f64),
    Sampler(Sampler),
}

impl fmt::Debug for Contaminant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Contaminant::Dirac(a) => write!(f, "Dirac({a})"),
            Contaminant::Sampler(_) => f.write_str("Sampler(..)"),
        }
    }
}

/// i.i.d. sampling from `(1 − s) P_θ + s Q`.
#[derive(Debug, Clone)]
pub struct ContaminationScenario {
    pub family: Model,
    pub theta: Vec<f64>,
    pub s: f64,
    pub contaminant: Contaminant,
    pub n: usize,
    pub seed: u64,
}

impl ContaminationScenario {
    pub fn new(family: Model, theta: Vec<f64>, s: f64, contaminant: Contaminant, n: usize, seed: u64) -> Result<Self> {
        family.validate(&theta)?;
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::InvalidConfig(format!("contamination fraction {s} outside [0, 1]")));
        }
        if n < 2 {
            return Err(Error::InvalidConfig(format!("sample size {n} below 2")));
        }
        Ok(ContaminationScenario {
            family,
            theta,
            s,
            contaminant,
            n,
            seed,
        })
    }

    fn draw(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        (0..self.n)
            .map(|_| {
                let contaminated = self.s > 0.0 && rng.random::<f64>() < self.s;
                if contaminated {
                    match &self.contaminant {
                        Contaminant::Dirac(a) => *a,
                        Contaminant::Sampler(q) => q(rng),
                    }
                } else {
                    self.family.sample(&self.theta, rng)
                }
            })
            .collect()
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Independent stream for replication `rep`.
fn rep_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(splitmix64(seed) ^ rep))
}

/// One contaminated sample, determined by the scenario seed.
pub fn sample_contaminated(scenario: &ContaminationScenario) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    Dataset::from_observations(scenario.draw(&mut rng), "contaminated")
}

/// Bounded tangent `q` of a simple perturbation.
pub type Tangent<'a> = &'a (dyn Fn(f64) -> f64 + Sync);

/// `draws` observations from `(1 + r n^{−1/2} q) dP_θ`, by acceptance–rejection
/// against `P_θ`.
pub fn sample_simple_perturbation_draws(
    family: &Model,
    theta: &[f64],
    q: Tangent<'_>,
    r: f64,
    n: usize,
    draws: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    family.validate(theta)?;
    if !(r >= 0.0 && r.is_finite()) || n == 0 {
        return Err(Error::InvalidTangent(format!("need r >= 0 and n >= 1, got r = {r}, n = {n}")));
    }
    let e = Expectation::new(&**family, theta, ExpectationConfig::default())?;
    let (inf, sup) = e.range_of(q);
    if !(inf.is_finite() && sup.is_finite()) {
        return Err(Error::InvalidTangent("q must be bounded".into()));
    }
    let mean = e.expect_scalar(q)?;
    if mean.abs() > 1e-8 * (1.0 + inf.abs().max(sup.abs())) {
        return Err(Error::InvalidTangent(format!("E q = {mean:e}, expected 0")));
    }
    if inf < -1.0 - 1e-12 {
        return Err(Error::InvalidTangent(format!("inf q = {inf} below -1")));
    }
    let root_n = (n as f64).sqrt();
    if root_n < -r * inf {
        return Err(Error::InvalidTangent(format!(
            "n^(1/2) = {root_n} below -r inf q = {}",
            -r * inf
        )));
    }
    let t = r / root_n;
    let envelope = 1.0 + t * sup.max(0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(draws);
    while out.len() < draws {
        let x = family.sample(theta, &mut rng);
        let accept = (1.0 + t * q(x)) / envelope;
        if rng.random::<f64>() < accept {
            out.push(x);
        }
    }
    Ok(out)
}

pub fn sample_simple_perturbation(
    family: &Model,
    theta: &[f64],
    q: Tangent<'_>,
    r: f64,
    n: usize,
    seed: u64,
) -> Result<Dataset> {
    let obs = sample_simple_perturbation_draws(family, theta, q, r, n, n, seed)?;
    Dataset::from_observations(obs, "perturbed")
}

/// Estimate with an optional one-step shift and its bound.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub theta: Vec<f64>,
    /// `(‖S_n − θ̂‖, b)` for one-step estimators.
    pub shift: Option<(f64, f64)>,
}

pub type EstimatorFn = Arc<dyn Fn(&Dataset) -> Result<Estimate> + Send + Sync>;

#[derive(Clone)]
pub struct Estimator {
    pub label: String,
    pub run: EstimatorFn,
}

impl fmt::Debug for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Estimator({})", self.label)
    }
}

impl Estimator {
    pub fn new(label: impl Into<String>, run: EstimatorFn) -> Self {
        Estimator {
            label: label.into(),
            run,
        }
    }

    /// Maximum likelihood (mean and sd for the normal model).
    pub fn mle(family: Model) -> Self {
        Estimator::new(
            "mle",
            Arc::new(move |d: &Dataset| {
                Ok(Estimate {
                    theta: mle(&*family, d)?,
                    shift: None,
                })
            }),
        )
    }

    /// A start estimator on its own, labelled by its method.
    pub fn start(family: Model, method: StartMethod) -> Self {
        Estimator::new(
            method.label(),
            Arc::new(move |d: &Dataset| {
                Ok(Estimate {
                    theta: start_estimate(method, &*family, d)?,
                    shift: None,
                })
            }),
        )
    }

    /// Start estimate, radius-minmax curve for radii `√n·eps` and one step.
    /// Solved curves are shared across calls.
    pub fn rmx(family: Model, eps_lo: f64, eps_up: f64, neighborhood: Neighborhood, start: StartMethod) -> Self {
        let cache = Arc::new(IcCache::new());
        let config = OneStepConfig {
            neighborhood,
            ..OneStepConfig::default()
        };
        Estimator::new(
            "rmx",
            Arc::new(move |d: &Dataset| {
                let iv = RadiusInterval::from_fractions(eps_lo, eps_up, d.n())?;
                let theta0 = start_estimate(start, &*family, d)?;
                let rep = one_step_cached(&family, &theta0, start.label(), d, IcSpec::Interval(iv), &config, &cache)?;
                Ok(Estimate {
                    shift: Some((rep.shift_norm(), rep.multipliers.b)),
                    theta: rep.estimate,
                })
            }),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McRow {
    pub label: String,
    /// Mean of `n‖θ̂ − θ‖²` over successful replications.
    pub n_mse: f64,
    /// Monte Carlo standard error of `n_mse`.
    pub std_error: f64,
    pub successes: usize,
    pub failures: usize,
    /// One-step shifts exceeding the clipping bound.
    pub shift_violations: usize,
}

impl McRow {
    pub fn has_failures(&self) -> bool {
        self.failures > 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McTable {
    pub reps: usize,
    pub n: usize,
    pub s: f64,
    pub seed: u64,
    pub rows: Vec<McRow>,
}

pub const MIN_REPS: usize = 100;

type RepOutcome = Vec<std::result::Result<(f64, bool), ()>>;

/// Empirical `n·MSE` of each estimator over `reps` replications.
///
/// Replications run in parallel on independent streams derived from
/// `(seed, rep)` and are reduced in replication order.
pub fn mc_compare(
    scenario: &ContaminationScenario,
    estimators: &[Estimator],
    reps: usize,
    seed: u64,
) -> Result<McTable> {
    if reps < MIN_REPS {
        return Err(Error::InvalidConfig(format!("need at least {MIN_REPS} replications, got {reps}")));
    }
    let n = scenario.n as f64;
    let outcomes: Vec<RepOutcome> = (0..reps as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = rep_rng(seed, rep);
            let sample = scenario.draw(&mut rng);
            let data = Dataset::from_observations(sample, "replication").expect("n >= 2 finite draws");
            estimators
                .iter()
                .map(|est| match (est.run)(&data) {
                    Ok(e) if e.theta.iter().all(|t| t.is_finite()) => {
                        let loss = n * e
                            .theta
                            .iter()
                            .zip(&scenario.theta)
                            .map(|(a, b)| (a - b) * (a - b))
                            .sum::<f64>();
                        let violated = e.shift.is_some_and(|(s, b)| s > b + 1e-9);
                        Ok((loss, violated))
                    }
                    _ => Err(()),
                })
                .collect()
        })
        .collect();

    let rows = estimators
        .iter()
        .enumerate()
        .map(|(j, est)| {
            let mut losses = Vec::with_capacity(reps);
            let mut failures = 0;
            let mut shift_violations = 0;
            for o in &outcomes {
                match o[j] {
                    Ok((loss, violated)) => {
                        losses.push(loss);
                        shift_violations += violated as usize;
                    }
                    Err(()) => failures += 1,
                }
            }
            let m = losses.len() as f64;
            let mean = losses.iter().sum::<f64>() / m;
            let var = losses.iter().map(|l| (l - mean) * (l - mean)).sum::<f64>() / (m - 1.0);
            McRow {
                label: est.label.clone(),
                n_mse: mean,
                std_error: (var / m).sqrt(),
                successes: losses.len(),
                failures,
                shift_violations,
            }
        })
        .collect();
    Ok(McTable {
        reps,
        n: scenario.n,
        s: scenario.s,
        seed,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::{NormalLocationScale, Poisson};

    fn normal() -> Model {
        Arc::new(NormalLocationScale)
    }

    #[test]
    fn full_contamination_is_dirac() {
        let sc = ContaminationScenario::new(normal(), vec![0.0, 1.0], 1.0, Contaminant::Dirac(7.5), 50, 3).unwrap();
        assert!(sample_contaminated(&sc).unwrap().expand().iter().all(|&x| x == 7.5));
    }

    #[test]
    fn contaminated_fraction_is_binomial() {
        let sc =
            ContaminationScenario::new(normal(), vec![3.2, 0.7], 0.1, Contaminant::Dirac(28.95), 10_000, 11).unwrap();
        let d = sample_contaminated(&sc).unwrap();
        let frac = d.expand().iter().filter(|&&x| x == 28.95).count() as f64 / 1e4;
        // binomial sd is 0.003
        assert!((frac - 0.1).abs() < 0.01, "{frac}");
    }

    #[test]
    fn clean_sample_mean() {
        let sc = ContaminationScenario::new(Arc::new(Poisson), vec![3.9], 0.0, Contaminant::Dirac(0.0), 20_000, 5)
            .unwrap();
        let m = sample_contaminated(&sc).unwrap().mean();
        assert!((m - 3.9).abs() < 4.0 * (3.9f64 / 2e4).sqrt());
    }

    #[test]
    fn scenario_validation() {
        assert!(ContaminationScenario::new(normal(), vec![0.0, 1.0], 1.5, Contaminant::Dirac(0.0), 10, 0).is_err());
        assert!(ContaminationScenario::new(normal(), vec![0.0, -1.0], 0.1, Contaminant::Dirac(0.0), 10, 0).is_err());
    }

    #[test]
    fn perturbation_tilts_the_tangent_mean() {
        let q = |x: f64| x.signum();
        let draws = 100_000;
        let obs = sample_simple_perturbation_draws(&normal(), &[0.0, 1.0], &q, 1.0, 100, draws, 9).unwrap();
        let mean = obs.iter().map(|&x| q(x)).sum::<f64>() / draws as f64;
        // E_Q q = r n^{-1/2} E q² = 0.1, with sd of q close to 1
        let se = (1.0 - 0.01f64).sqrt() / (draws as f64).sqrt();
        assert!((mean - 0.1).abs() < 3.0 * se, "{mean}");
    }

    #[test]
    fn trivial_perturbations_are_the_model() {
        let zero = |_: f64| 0.0;
        let q = |x: f64| x.signum();
        let a = sample_simple_perturbation_draws(&normal(), &[0.0, 1.0], &zero, 1.0, 10, 200, 4).unwrap();
        let b = sample_simple_perturbation_draws(&normal(), &[0.0, 1.0], &q, 0.0, 10, 200, 4).unwrap();
        // both accept every proposal, so they consume the same stream
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_tangents() {
        let m = normal();
        let unbounded = |x: f64| x;
        let uncentred = |x: f64| if x > 0.0 { 1.0 } else { 0.0 };
        let below = |x: f64| if x > 0.0 { 2.0 } else { -2.0 };
        for q in [&unbounded as Tangent, &uncentred, &below] {
            assert!(matches!(
                sample_simple_perturbation(&m, &[0.0, 1.0], q, 1.0, 100, 1),
                Err(Error::InvalidTangent(_))
            ));
        }
    }

    #[test]
    fn reproducible_and_cramer_rao_at_the_model() {
        let sc = ContaminationScenario::new(normal(), vec![1.0, 2.0], 0.0, Contaminant::Dirac(0.0), 200, 0).unwrap();
        let est = [Estimator::mle(normal())];
        let a = mc_compare(&sc, &est, 400, 17).unwrap();
        let b = mc_compare(&sc, &est, 400, 17).unwrap();
        assert_eq!(a, b);
        // tr I⁻¹ = σ²(1 + 1/2) = 6
        let row = &a.rows[0];
        assert!((row.n_mse - 6.0).abs() < 3.0 * row.std_error, "{row:?}");
        assert!(mc_compare(&sc, &est, 50, 17).is_err());
    }

    #[test]
    fn failures_are_counted() {
        let sc = ContaminationScenario::new(normal(), vec![0.0, 1.0], 0.0, Contaminant::Dirac(0.0), 10, 0).unwrap();
        let failing = Estimator::new("fails", Arc::new(|_: &Dataset| Err(Error::InvalidData("no".into()))));
        let t = mc_compare(&sc, &[failing, Estimator::mle(normal())], 100, 1).unwrap();
        assert_eq!(t.rows[0].failures, 100);
        assert!(t.rows[0].has_failures());
        assert_eq!(t.rows[1].successes, 100);
    }
}
