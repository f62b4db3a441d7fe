//! Smooth parametric families: densities, scores and Fisher information.

mod check;
mod expfam;
mod gamma;
mod normal;
mod poisson;

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::RngCore;

use crate::error::{Error, Result};

pub use check::{self_check, SelfCheck};
pub use expfam::{family_from_exponential, ExpFamily, ExponentialFamilySpec};
pub use gamma::Gamma;
pub use normal::{NormalLocation, NormalLocationScale};
pub use poisson::Poisson;

/// Shared handle to a family.
pub type Model = Arc<dyn ParametricFamily>;

/// Sample space of a univariate family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Support {
    /// Open interval `(lower, upper)`; either end may be infinite.
    Continuous { lower: f64, upper: f64 },
    /// Integers `lower, lower + 1, ...`.
    Lattice { lower: i64 },
}

impl Support {
    pub fn is_lattice(&self) -> bool {
        matches!(self, Support::Lattice { .. })
    }

    pub fn contains(&self, x: f64) -> bool {
        match *self {
            Support::Continuous { lower, upper } => x > lower && x < upper,
            Support::Lattice { lower } => x >= lower as f64 && x == x.floor() && x.is_finite(),
        }
    }
}

/// Location–scale structure of a parameter value: `Λ_θ(x) = s⁻¹ Λ_θ₀((x − m)/s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocationScale {
    pub location: f64,
    pub scale: f64,
    /// The standardized parameter `θ₀`.
    pub standard: Vec<f64>,
}

/// A smooth (L2-differentiable) parametric family on the real line.
///
/// Raw evaluation methods assume a valid `θ`; the checked wrappers ([`ParametricFamily::scores`], [`ParametricFamily::fisher_checked`])
/// validate first. All evaluations are pure.
pub trait ParametricFamily: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    fn param_names(&self) -> Vec<String>;

    fn support(&self) -> Support;

    /// Parameter domain predicate (e.g. σ > 0).
    fn is_valid(&self, theta: &[f64]) -> bool;

    fn density(&self, theta: &[f64], x: f64) -> f64;

    fn log_density(&self, theta: &[f64], x: f64) -> f64;

    /// Writes `Λ_θ(x)` into `out` (length `dim()`); `x` may lie anywhere in
    /// [`ParametricFamily::extension_domain`].
    fn scores_into(&self, theta: &[f64], x: f64, out: &mut [f64]);

    fn fisher(&self, theta: &[f64]) -> DMatrix<f64>;

    fn cdf(&self, theta: &[f64], x: f64) -> f64;

    fn quantile(&self, theta: &[f64], p: f64) -> f64 {
        match self.support() {
            Support::Lattice { lower } => lattice_quantile(|k| self.cdf(theta, k), lower, p),
            Support::Continuous { lower, upper } => invert_cdf(
                |x| self.cdf(theta, x),
                |x| self.density(theta, x),
                p,
                lower,
                upper,
                if lower.is_finite() { lower + 1.0 } else { 0.0 },
            ),
        }
    }

    /// Whether the scores are bounded on the support.
    fn scores_bounded(&self) -> bool {
        false
    }

    fn location_scale(&self, _theta: &[f64]) -> Option<LocationScale> {
        None
    }

    /// Closed interval on which the scores formula may be evaluated (lattice
    /// families extend to the reals between lattice points).
    fn extension_domain(&self) -> (f64, f64) {
        match self.support() {
            Support::Continuous { lower, upper } => (lower, upper),
            Support::Lattice { lower } => (lower as f64, f64::INFINITY),
        }
    }

    fn sample(&self, theta: &[f64], rng: &mut dyn RngCore) -> f64 {
        let u: f64 = rand::Rng::random(rng);
        self.quantile(theta, u)
    }

    /// Map to unconstrained coordinates for numerical optimization.
    fn to_unconstrained(&self, theta: &[f64]) -> Vec<f64> {
        theta.to_vec()
    }

    fn from_unconstrained(&self, u: &[f64]) -> Vec<f64> {
        u.to_vec()
    }

    /// Method-of-moments estimate, used to start numerical fits.
    fn moment_estimate(&self, _mean: f64, _var: f64) -> Option<Vec<f64>> {
        None
    }

    /// Closed-form maximum likelihood estimate from the sample mean and the
    /// `n − 1` variance, for families that have one. The result may lie on
    /// the boundary of the parameter domain (e.g. σ = 0).
    fn closed_form_mle(&self, _mean: f64, _var: f64) -> Option<Vec<f64>> {
        None
    }

    fn validate(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.dim() || theta.iter().any(|t| !t.is_finite()) || !self.is_valid(theta) {
            return Err(Error::InvalidParameter {
                family: self.name().to_string(),
                theta: theta.to_vec(),
            });
        }
        Ok(())
    }

    fn scores(&self, theta: &[f64], x: f64) -> Result<DVector<f64>> {
        self.validate(theta)?;
        let (lo, hi) = self.extension_domain();
        if x.is_nan() || x < lo || x > hi {
            return Err(Error::OutsideSupport {
                family: self.name().to_string(),
                x,
            });
        }
        let mut out = DVector::zeros(self.dim());
        self.scores_into(theta, x, out.as_mut_slice());
        Ok(out)
    }

    fn fisher_checked(&self, theta: &[f64]) -> Result<DMatrix<f64>> {
        self.validate(theta)?;
        Ok(self.fisher(theta))
    }
}

/// Smallest lattice point `k ≥ lower` with `F(k) ≥ p`.
pub(crate) fn lattice_quantile(cdf: impl Fn(f64) -> f64, lower: i64, p: f64) -> f64 {
    if p <= 0.0 {
        return lower as f64;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let mut hi = lower.max(0) as f64 + 1.0;
    while cdf(hi) < p {
        hi *= 2.0;
        if hi > 1e15 {
            return f64::INFINITY;
        }
    }
    let mut lo = lower as f64 - 1.0;
    // invariant: F(lo) < p <= F(hi)
    while hi - lo > 1.0 {
        let mid = ((lo + hi) / 2.0).floor();
        if cdf(mid) >= p {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Safeguarded Newton inversion of a continuous distribution function.
///
/// Stops once `|F(x) − p| ≤ 1e-12 · min(p, 1 − p)` or the bracket collapses.
pub(crate) fn invert_cdf(
    cdf: impl Fn(f64) -> f64,
    density: impl Fn(f64) -> f64,
    p: f64,
    lower: f64,
    upper: f64,
    guess: f64,
) -> f64 {
    if p <= 0.0 {
        return lower;
    }
    if p >= 1.0 {
        return upper;
    }
    let tol = 1e-12 * p.min(1.0 - p).min(1.0);
    let mut x = if guess > lower && guess < upper {
        guess
    } else if lower.is_finite() && upper.is_finite() {
        0.5 * (lower + upper)
    } else if lower.is_finite() {
        lower + 1.0
    } else if upper.is_finite() {
        upper - 1.0
    } else {
        0.0
    };
    let mut lo = lower;
    let mut hi = upper;
    if !lo.is_finite() {
        let mut step = 1.0_f64.max(x.abs());
        lo = x - step;
        while cdf(lo) >= p && lo.is_finite() {
            step *= 2.0;
            lo = x - step;
        }
    }
    if !hi.is_finite() {
        let mut step = 1.0_f64.max(x.abs());
        hi = x + step;
        while cdf(hi) < p && hi.is_finite() {
            step *= 2.0;
            hi = x + step;
        }
    }
    if !(x > lo && x < hi) {
        x = 0.5 * (lo + hi);
    }
    for _ in 0..300 {
        let f = cdf(x) - p;
        if f.abs() <= tol {
            return x;
        }
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let d = density(x);
        let mut next = if d > 0.0 { x - f / d } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (hi - lo) <= 4.0 * f64::EPSILON * x.abs().max(f64::MIN_POSITIVE) || next == x {
            return next;
        }
        x = next;
    }
    x
}

/// Numerically stable log of `n!` for real `n ≥ 0`.
pub(crate) fn ln_factorial(n: f64) -> f64 {
    crate::special::ln_gamma(n + 1.0)
}
