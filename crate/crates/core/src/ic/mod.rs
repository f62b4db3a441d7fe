//! Influence curves: the classical one, minmax-MSE solutions on contamination
//! and total-variation neighborhoods, and their risks.

mod cache;
mod contamination;
mod totalvariation;

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::expectation::{Expectation, ExpectationConfig};
use crate::family::{LocationScale, Model, ParametricFamily};

pub use cache::IcCache;
pub use contamination::solve_contamination_ic;
pub use totalvariation::{solve_totalvariation_ic, tv_by_reduction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Neighborhood {
    Contamination,
    TotalVariation,
}

impl Neighborhood {
    pub fn short(&self) -> &'static str {
        match self {
            Neighborhood::Contamination => "c",
            Neighborhood::TotalVariation => "v",
        }
    }
}

impl fmt::Display for Neighborhood {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Neighborhood::Contamination => "contamination",
            Neighborhood::TotalVariation => "total-variation",
        })
    }
}

/// Functional form of an influence curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum IcForm {
    /// `A Λ`
    Classical,
    /// `A(Λ − z)·min{1, b/|A(Λ − z)|}`
    Clipped,
    /// `c ∨ AΛ ∧ (c + b)`, one-dimensional only
    Clamped,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Bound on the relative residuals of the defining equations.
    pub tol: f64,
    pub max_sweeps: usize,
    /// Non-contracting sweeps tolerated before damping by one half.
    pub damping_after: usize,
    /// Shift applied to θ when the centering equation has no unique solution.
    pub degenerate_shift: f64,
    pub expectation: ExpectationConfig,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: 1e-9,
            max_sweeps: 200,
            damping_after: 20,
            degenerate_shift: 1e-8,
            expectation: ExpectationConfig::default(),
        }
    }
}

/// Relative residuals of the defining equations at the returned multipliers.
///
/// Contamination: `clip` is `|E(|Y| − b)_+ − r²b| / r²b`, `centering` is
/// `|A E(Λ − z)w| / b` and `standardization` is `max |A E(Λ−z)(Λ−z)'w − 𝕀|`.
/// Total variation: `clip` and `centering` are the lower and upper
/// positive-part equations relative to `r²b`, `standardization` is `|E ψΛ − 1|`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Residuals {
    pub clip: f64,
    pub centering: f64,
    pub standardization: f64,
}

impl Residuals {
    pub fn max(&self) -> f64 {
        self.clip.max(self.centering).max(self.standardization)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    pub sweeps: usize,
    pub residuals: Residuals,
    /// Maximal residual after each sweep.
    pub history: Vec<f64>,
    pub damped: bool,
    /// Shift added to θ to break a degenerate centering, if any.
    pub perturbation: Option<f64>,
}

/// An influence curve at a fixed parameter, with its Lagrange multipliers.
#[derive(Debug, Clone)]
pub struct InfluenceCurve {
    family: Model,
    theta: Vec<f64>,
    pub neighborhood: Neighborhood,
    pub radius: f64,
    pub form: IcForm,
    /// Standardizing matrix `A`.
    pub a_mat: DMatrix<f64>,
    /// Centering `z`; the multiplier `a` is `A z`.
    pub z: DVector<f64>,
    /// Clipping bound (`b = ∞` for classical curves with unbounded scores).
    pub b: f64,
    /// Lower clip of the total-variation solution.
    pub c: Option<f64>,
    /// Set for the total-variation approximation via contamination at `2r`.
    pub approximate: bool,
    pub diagnostics: Diagnostics,
}

impl InfluenceCurve {
    pub fn family(&self) -> &Model {
        &self.family
    }

    /// Parameter the curve was solved at (including any degenerate-centering shift).
    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn dim(&self) -> usize {
        self.z.len()
    }

    /// The centering multiplier `a = A z`.
    pub fn a(&self) -> DVector<f64> {
        &self.a_mat * &self.z
    }

    pub fn tr_a(&self) -> f64 {
        self.a_mat.trace()
    }

    /// Evaluates `ψ(x)` into `out` without checking `x`.
    pub fn eval_into(&self, x: f64, out: &mut [f64]) {
        let k = self.dim();
        let mut s = [0.0; 8];
        let mut heap;
        let s: &mut [f64] = if k <= 8 {
            &mut s[..k]
        } else {
            heap = vec![0.0; k];
            &mut heap
        };
        self.family.scores_into(&self.theta, x, s);
        for (i, o) in out.iter_mut().enumerate() {
            *o = (0..k).map(|j| self.a_mat[(i, j)] * (s[j] - self.z[j])).sum();
        }
        match self.form {
            IcForm::Classical => {}
            IcForm::Clipped => {
                let n = out.iter().map(|v| v * v).sum::<f64>().sqrt();
                if n > self.b {
                    let w = self.b / n;
                    out.iter_mut().for_each(|v| *v *= w);
                }
            }
            IcForm::Clamped => {
                let c = self.c.unwrap_or(f64::NEG_INFINITY);
                out[0] = out[0].max(c).min(c + self.b);
            }
        }
    }

    /// `ψ(x)` for `x` in the extension domain of the family's scores.
    pub fn eval(&self, x: f64) -> Result<DVector<f64>> {
        let (lo, hi) = self.family.extension_domain();
        if x.is_nan() || x < lo || x > hi {
            return Err(Error::OutsideSupport {
                family: self.family.name().to_string(),
                x,
            });
        }
        let mut out = DVector::zeros(self.dim());
        self.eval_into(x, out.as_mut_slice());
        Ok(out)
    }

    /// Clipping weight: `|ψ(x)| / |A(Λ(x) − z)|`, 1 where no clipping occurs.
    pub fn weight(&self, x: f64) -> f64 {
        let k = self.dim();
        let mut s = vec![0.0; k];
        self.family.scores_into(&self.theta, x, &mut s);
        let y: Vec<f64> = (0..k)
            .map(|i| (0..k).map(|j| self.a_mat[(i, j)] * (s[j] - self.z[j])).sum())
            .collect();
        let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut psi = vec![0.0; k];
        self.eval_into(x, &mut psi);
        let np = psi.iter().map(|v| v * v).sum::<f64>().sqrt();
        if ny == 0.0 {
            1.0
        } else {
            np / ny
        }
    }

    /// Kinks of `ψ` under `P_θ`, used as quadrature breakpoints.
    pub(crate) fn kinks(&self, e: &Expectation<'_>) -> Vec<f64> {
        let k = self.dim();
        let mut buf = vec![0.0; k];
        let mut s = vec![0.0; k];
        match self.form {
            IcForm::Classical => Vec::new(),
            IcForm::Clipped => e.sign_changes(|x| {
                self.family.scores_into(&self.theta, x, &mut s);
                for (i, o) in buf.iter_mut().enumerate() {
                    *o = (0..k).map(|j| self.a_mat[(i, j)] * (s[j] - self.z[j])).sum();
                }
                buf.iter().map(|v| v * v).sum::<f64>().sqrt() - self.b
            }),
            IcForm::Clamped => {
                let c = self.c.unwrap_or(f64::NEG_INFINITY);
                let mut lin = |x: f64| {
                    self.family.scores_into(&self.theta, x, &mut s);
                    self.a_mat[(0, 0)] * (s[0] - self.z[0])
                };
                let mut br = e.sign_changes(|x| lin(x) - c);
                br.extend(e.sign_changes(|x| lin(x) - c - self.b));
                br
            }
        }
    }

    fn expectation(&self, config: ExpectationConfig) -> Result<Expectation<'_>> {
        Expectation::new(&*self.family, &self.theta, config)
    }

    /// `(max_i |E ψ_i|, max_ij |E ψΛ' − 𝕀|)`.
    pub fn check(&self, config: ExpectationConfig) -> Result<(f64, f64)> {
        let k = self.dim();
        let e = self.expectation(config)?;
        let kinks = self.kinks(&e);
        let mut psi = vec![0.0; k];
        let mut s = vec![0.0; k];
        let m = e.expect_with_breaks(
            k + k * k,
            |x, out| {
                self.eval_into(x, &mut psi);
                self.family.scores_into(&self.theta, x, &mut s);
                out[..k].copy_from_slice(&psi);
                for i in 0..k {
                    for j in 0..k {
                        out[k + i * k + j] = psi[i] * s[j];
                    }
                }
            },
            &kinks,
        )?;
        let centering = m[..k].iter().fold(0.0_f64, |acc, v| acc.max(v.abs()));
        let fisher = DMatrix::from_row_slice(k, k, &m[k..]) - DMatrix::identity(k, k);
        Ok((centering, fisher.amax()))
    }

    /// `E|ψ|²`.
    pub fn variance(&self, config: ExpectationConfig) -> Result<f64> {
        let k = self.dim();
        let e = self.expectation(config)?;
        let kinks = self.kinks(&e);
        let mut psi = vec![0.0; k];
        Ok(e.expect_with_breaks(
            1,
            |x, out| {
                self.eval_into(x, &mut psi);
                out[0] = psi.iter().map(|v| v * v).sum();
            },
            &kinks,
        )?[0])
    }

    /// Maps a curve solved at the standard member of a location–scale family
    /// to `theta`: `A = s²A₀`, `z = z₀/s`, `b = s·b₀`, `c = s·c₀`.
    pub(crate) fn rescaled(&self, ls: &LocationScale, theta: &[f64]) -> InfluenceCurve {
        let s = ls.scale;
        InfluenceCurve {
            family: self.family.clone(),
            theta: theta.to_vec(),
            neighborhood: self.neighborhood,
            radius: self.radius,
            form: self.form,
            a_mat: &self.a_mat * (s * s),
            z: &self.z / s,
            b: self.b * s,
            c: self.c.map(|c| c * s),
            approximate: self.approximate,
            diagnostics: self.diagnostics.clone(),
        }
    }
}

/// Variance, bias bound and maximal MSE of an influence curve at a radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RiskReport {
    pub neighborhood: Neighborhood,
    pub radius: f64,
    /// `E|ψ|²`
    pub variance: f64,
    /// `ω_c` or `ω_v`
    pub bias_bound: f64,
    pub mse: f64,
    /// `tr A` for solver outputs.
    pub tr_a: Option<f64>,
    pub approximate: bool,
}

impl RiskReport {
    pub(crate) fn rescaled(&self, s: f64) -> RiskReport {
        RiskReport {
            variance: self.variance * s * s,
            bias_bound: self.bias_bound * s,
            mse: self.mse * s * s,
            tr_a: self.tr_a.map(|t| t * s * s),
            ..*self
        }
    }
}

pub(crate) fn mse_value(variance: f64, r: f64, omega: f64) -> f64 {
    if r == 0.0 {
        variance
    } else {
        variance + r * r * omega * omega
    }
}

/// Inverse with a condition-number guard.
pub fn invert(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let sv = m.clone().svd(false, false).singular_values;
    let (smax, smin) = (sv.max(), sv.min());
    if !(smin > 0.0) || smax / smin > 1e12 || !smax.is_finite() {
        return Err(Error::RankDeficiency(format!(
            "{what} is singular or ill-conditioned (singular values {:?})",
            sv.as_slice()
        )));
    }
    m.clone()
        .lu()
        .try_inverse()
        .ok_or_else(|| Error::RankDeficiency(format!("{what} is singular")))
}

/// `ψ_h = I⁻¹Λ`.
pub fn classical_ic(family: &Model, theta: &[f64]) -> Result<InfluenceCurve> {
    classical_ic_at(family, theta, Neighborhood::Contamination, &ExpectationConfig::default())
}

pub(crate) fn classical_ic_at(
    family: &Model,
    theta: &[f64],
    neighborhood: Neighborhood,
    config: &ExpectationConfig,
) -> Result<InfluenceCurve> {
    let fisher = family.fisher_checked(theta)?;
    let k = family.dim();
    let a_mat = invert(&fisher, "Fisher information")?;
    let mut ic = InfluenceCurve {
        family: family.clone(),
        theta: theta.to_vec(),
        neighborhood,
        radius: 0.0,
        form: IcForm::Classical,
        a_mat,
        z: DVector::zeros(k),
        b: f64::INFINITY,
        c: None,
        approximate: false,
        diagnostics: Diagnostics::default(),
    };
    if family.scores_bounded() {
        let e = Expectation::new(&**family, theta, *config)?;
        let mut psi = vec![0.0; k];
        match neighborhood {
            Neighborhood::TotalVariation if k == 1 => {
                let (lo, hi) = e.range_of(|x| {
                    ic.eval_into(x, &mut psi);
                    psi[0]
                });
                ic.b = hi - lo;
                ic.c = Some(lo);
            }
            _ => ic.b = e.sup_abs(k, |x, out| ic.eval_into(x, out)),
        }
    }
    Ok(ic)
}

/// Classical curve plus its report at `r = 0`.
pub(crate) fn classical_solution(
    family: &Model,
    theta: &[f64],
    neighborhood: Neighborhood,
    config: &SolverConfig,
) -> Result<(InfluenceCurve, RiskReport)> {
    let ic = classical_ic_at(family, theta, neighborhood, &config.expectation)?;
    let variance = ic.variance(config.expectation)?;
    let report = RiskReport {
        neighborhood,
        radius: 0.0,
        variance,
        bias_bound: ic.b,
        mse: variance,
        tr_a: Some(ic.tr_a()),
        approximate: false,
    };
    Ok((ic, report))
}

/// Runs `solve` at the standard member when `family` is location–scale and
/// maps the result back to `theta`.
pub(crate) fn via_equivariance<F>(family: &Model, theta: &[f64], solve: F) -> Result<(InfluenceCurve, RiskReport)>
where
    F: FnOnce(&[f64]) -> Result<(InfluenceCurve, RiskReport)>,
{
    family.validate(theta)?;
    match family.location_scale(theta) {
        Some(ls) if ls.standard.as_slice() != theta => {
            let (ic, report) = solve(&ls.standard)?;
            Ok((ic.rescaled(&ls, theta), report.rescaled(ls.scale)))
        }
        _ => solve(theta),
    }
}

/// Dispatches on the neighborhood: total variation uses the exact
/// one-dimensional solver for `k = 1` and the reduction otherwise.
pub fn solve_ic(
    family: &Model,
    theta: &[f64],
    r: f64,
    neighborhood: Neighborhood,
    config: &SolverConfig,
) -> Result<(InfluenceCurve, RiskReport)> {
    match neighborhood {
        Neighborhood::Contamination => solve_contamination_ic(family, theta, r, config),
        Neighborhood::TotalVariation if family.dim() == 1 => solve_totalvariation_ic(family, theta, r, config),
        Neighborhood::TotalVariation => tv_by_reduction(family, theta, r, config),
    }
}

/// Bias bound of a curve: `sup|ψ|` (contamination) or `sup ψ − inf ψ`
/// (total variation, `k = 1`).
pub fn omega(ic: &InfluenceCurve, neighborhood: Neighborhood) -> Result<f64> {
    match (neighborhood, ic.form) {
        (Neighborhood::Contamination, IcForm::Clipped) => Ok(ic.b),
        (Neighborhood::Contamination, IcForm::Clamped) => {
            let c = ic.c.unwrap_or(0.0);
            Ok(c.abs().max((c + ic.b).abs()))
        }
        (Neighborhood::TotalVariation, IcForm::Clamped) => Ok(ic.b),
        (Neighborhood::TotalVariation, IcForm::Clipped) if ic.approximate => Ok(2.0 * ic.b),
        (_, IcForm::Classical) if !ic.b.is_finite() => Ok(f64::INFINITY),
        (Neighborhood::Contamination, IcForm::Classical) => Ok(ic.b),
        (Neighborhood::TotalVariation, _) => {
            if ic.dim() != 1 {
                return Err(Error::UnsupportedDimension(ic.dim()));
            }
            let e = ic.expectation(ExpectationConfig::default())?;
            let mut psi = [0.0];
            let (lo, hi) = e.range_of(|x| {
                ic.eval_into(x, &mut psi);
                psi[0]
            });
            Ok(hi - lo)
        }
    }
}

/// Bias bound of an arbitrary function `f` of the observation.
pub fn omega_of<F>(
    family: &dyn ParametricFamily,
    theta: &[f64],
    m: usize,
    mut f: F,
    neighborhood: Neighborhood,
    config: ExpectationConfig,
) -> Result<f64>
where
    F: FnMut(f64, &mut [f64]),
{
    let e = Expectation::new(family, theta, config)?;
    match neighborhood {
        Neighborhood::Contamination => Ok(e.sup_abs(m, f)),
        Neighborhood::TotalVariation => {
            if m != 1 {
                return Err(Error::UnsupportedDimension(m));
            }
            let mut v = [0.0];
            let (lo, hi) = e.range_of(|x| {
                f(x, &mut v);
                v[0]
            });
            Ok(hi - lo)
        }
    }
}

/// `MSE(ψ, r) = E|ψ|² + r²ω²`.
pub fn mse_of(ic: &InfluenceCurve, r: f64, neighborhood: Neighborhood) -> Result<RiskReport> {
    let variance = ic.variance(ExpectationConfig::default())?;
    let bias_bound = omega(ic, neighborhood)?;
    Ok(RiskReport {
        neighborhood,
        radius: r,
        variance,
        bias_bound,
        mse: mse_value(variance, r, bias_bound),
        tr_a: None,
        approximate: ic.approximate,
    })
}
