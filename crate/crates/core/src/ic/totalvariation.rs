use std::cell::RefCell;

use nalgebra::{DMatrix, DVector};

use super::{
    classical_solution, mse_value, solve_contamination_ic, via_equivariance, Diagnostics, IcForm, InfluenceCurve,
    Neighborhood, Residuals, RiskReport, SolverConfig,
};
use crate::error::{Error, Result};
use crate::expectation::Expectation;
use crate::family::{Model, ParametricFamily};
use crate::optim::brent_root;

/// Minmax-MSE influence curve on the total-variation neighborhood (`k = 1`):
/// `ψ* = c ∨ AΛ ∧ (c + b)` with `r²b = E(c − AΛ)_+ = E(AΛ − c − b)_+` and
/// `E ψ*Λ = 1`.
///
/// The equations are homogeneous in `(A, b, c)`. With `A = 1` the clipping
/// bound is explicit, `b(c) = E(c − Λ)_+ / r²`, and `c` is the root of the
/// decreasing map `E(Λ − c − b(c))_+ − E(c − Λ)_+` on `[inf Λ, 0]`; `A` then
/// follows from the standardization.
pub fn solve_totalvariation_ic(
    family: &Model,
    theta: &[f64],
    r: f64,
    config: &SolverConfig,
) -> Result<(InfluenceCurve, RiskReport)> {
    if family.dim() != 1 {
        return Err(Error::UnsupportedDimension(family.dim()));
    }
    if !(r >= 0.0 && r.is_finite()) {
        return Err(Error::InvalidConfig(format!("radius {r} must be finite and non-negative")));
    }
    if r == 0.0 {
        return classical_solution(family, theta, Neighborhood::TotalVariation, config);
    }
    via_equivariance(family, theta, |t| solve_raw(family, t, r, config))
}

/// Total-variation curve approximated by the contamination solution at
/// radius `2r`, from `ω_c ≤ ω_v ≤ 2ω_c`. The report uses the bound `2b`.
pub fn tv_by_reduction(
    family: &Model,
    theta: &[f64],
    r: f64,
    config: &SolverConfig,
) -> Result<(InfluenceCurve, RiskReport)> {
    if r == 0.0 {
        return classical_solution(family, theta, Neighborhood::TotalVariation, config);
    }
    let (mut ic, rep) = solve_contamination_ic(family, theta, 2.0 * r, config)?;
    ic.neighborhood = Neighborhood::TotalVariation;
    ic.radius = r;
    ic.approximate = true;
    let report = RiskReport {
        neighborhood: Neighborhood::TotalVariation,
        radius: r,
        bias_bound: 2.0 * ic.b,
        mse: mse_value(rep.variance, r, 2.0 * ic.b),
        approximate: true,
        ..rep
    };
    Ok((ic, report))
}

fn solve_raw(family: &Model, theta: &[f64], r: f64, config: &SolverConfig) -> Result<(InfluenceCurve, RiskReport)> {
    let fam: &dyn ParametricFamily = &**family;
    let e = Expectation::new(fam, theta, config.expectation)?;
    let score = |x: f64| {
        let mut s = [0.0];
        fam.scores_into(theta, x, &mut s);
        s[0]
    };
    let r2 = r * r;
    let failure: RefCell<Option<Error>> = RefCell::new(None);
    let pos = |g: &mut dyn FnMut(f64) -> f64| -> f64 {
        e.expect_pos_part(g).unwrap_or_else(|err| {
            failure.borrow_mut().get_or_insert(err);
            f64::NAN
        })
    };
    let below = |c: f64| pos(&mut |x| c - score(x));
    let mut phi = |c: f64| -> f64 {
        let low = below(c);
        let b = low / r2;
        pos(&mut |x| score(x) - c - b) - low
    };
    let (lo, _) = e.range_of(score);
    let (f_lo, f_hi) = (phi(lo), phi(0.0));
    let found = brent_root(&mut phi, lo, 0.0, f_lo, f_hi, 1e-15 * lo.abs().max(1.0), 300);
    let c1 = found.map_err(|err| Error::SolverFailure {
        sweeps: 0,
        reason: format!("lower clip not bracketed on [{lo}, 0]: {err}"),
        history: Vec::new(),
    });
    let b1 = c1.as_ref().map(|c1| below(*c1) / r2).unwrap_or(f64::NAN);
    if let Some(err) = failure.into_inner() {
        return Err(err);
    }
    let c1 = c1?;

    // standardization: E(c₁ ∨ Λ ∧ (c₁+b₁))Λ = 1/A
    let mut unit = InfluenceCurve {
        family: family.clone(),
        theta: theta.to_vec(),
        neighborhood: Neighborhood::TotalVariation,
        radius: r,
        form: IcForm::Clamped,
        a_mat: DMatrix::from_element(1, 1, 1.0),
        z: DVector::zeros(1),
        b: b1,
        c: Some(c1),
        approximate: false,
        diagnostics: Diagnostics::default(),
    };
    let kinks = unit.kinks(&e);
    let mut psi = [0.0];
    let mut sc = [0.0];
    let fisher_term = e.expect_with_breaks(
        1,
        |x, out| {
            unit.eval_into(x, &mut psi);
            fam.scores_into(theta, x, &mut sc);
            out[0] = psi[0] * sc[0];
        },
        &kinks,
    )?[0];
    if !(fisher_term > 0.0) {
        return Err(Error::RankDeficiency(format!("E ψΛ = {fisher_term} at the total-variation clip")));
    }
    let a = 1.0 / fisher_term;
    unit.a_mat[(0, 0)] = a;
    unit.b = a * b1;
    unit.c = Some(a * c1);
    let ic = unit;

    // residuals at the scaled multipliers
    let (b, c) = (ic.b, a * c1);
    let kinks = ic.kinks(&e);
    let lower_eq = e.expect_pos_part(|x| {
        fam.scores_into(theta, x, &mut sc);
        c - a * sc[0]
    })?;
    let upper_eq = e.expect_pos_part(|x| {
        fam.scores_into(theta, x, &mut sc);
        a * sc[0] - c - b
    })?;
    let standard = e.expect_with_breaks(
        1,
        |x, out| {
            ic.eval_into(x, &mut psi);
            fam.scores_into(theta, x, &mut sc);
            out[0] = psi[0] * sc[0];
        },
        &kinks,
    )?[0];
    let residuals = Residuals {
        clip: (lower_eq - r2 * b).abs() / (r2 * b),
        centering: (upper_eq - r2 * b).abs() / (r2 * b),
        standardization: (standard - 1.0).abs(),
    };
    let mut ic = ic;
    ic.diagnostics = Diagnostics {
        sweeps: 1,
        residuals,
        history: vec![residuals.max()],
        damped: false,
        perturbation: None,
    };
    if residuals.max() >= config.tol {
        return Err(Error::SolverFailure {
            sweeps: 1,
            reason: format!("total-variation residuals {residuals:?} above tolerance {:.1e}", config.tol),
            history: vec![residuals.max()],
        });
    }
    let variance = ic.variance(config.expectation)?;
    let report = RiskReport {
        neighborhood: Neighborhood::TotalVariation,
        radius: r,
        variance,
        bias_bound: ic.b,
        mse: mse_value(variance, r, ic.b),
        tr_a: Some(ic.tr_a()),
        approximate: false,
    };
    Ok((ic, report))
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::family::{NormalLocation, NormalLocationScale, Poisson};
    use crate::special::{norm_cdf, norm_pdf};

    #[test]
    fn rejects_two_dimensional_models() {
        let model: Model = Arc::new(NormalLocationScale);
        assert!(matches!(
            solve_totalvariation_ic(&model, &[0.0, 1.0], 0.3, &SolverConfig::default()),
            Err(Error::UnsupportedDimension(2))
        ));
    }

    #[test]
    fn symmetric_location_model() {
        // by symmetry c = −b/2, so with t = b/(2A) the clipping equation reads
        // r²·2t = E(X − t)_+ = φ(t) − t(1 − Φ(t))
        let model: Model = Arc::new(NormalLocation::default());
        let r = 0.4;
        let (ic, rep) = solve_totalvariation_ic(&model, &[0.0], r, &SolverConfig::default()).unwrap();
        let a = ic.a_mat[(0, 0)];
        let t = ic.b / (2.0 * a);
        assert!((ic.c.unwrap() + ic.b / 2.0).abs() < 1e-8);
        let lhs = r * r * 2.0 * t;
        let rhs = norm_pdf(t) - t * (1.0 - norm_cdf(t));
        assert!((lhs - rhs).abs() < 1e-9, "{lhs} vs {rhs}");
        assert!(((rep.mse - rep.tr_a.unwrap()) / rep.mse).abs() < 1e-6);
    }

    #[test]
    fn poisson_reduction_is_conservative() {
        let model: Model = Arc::new(Poisson);
        let cfg = SolverConfig::default();
        for &r in &[0.1, 0.5, 1.0] {
            let (_, exact) = solve_totalvariation_ic(&model, &[3.9], r, &cfg).unwrap();
            let (_, approx) = tv_by_reduction(&model, &[3.9], r, &cfg).unwrap();
            assert!(approx.approximate);
            assert!(approx.mse >= exact.mse - 1e-9, "r = {r}: {} < {}", approx.mse, exact.mse);
        }
    }

    #[test]
    fn reduction_uses_double_radius() {
        let model: Model = Arc::new(NormalLocationScale);
        let cfg = SolverConfig::default();
        let (red, _) = tv_by_reduction(&model, &[0.0, 1.0], 0.3, &cfg).unwrap();
        let (con, _) = solve_contamination_ic(&model, &[0.0, 1.0], 0.6, &cfg).unwrap();
        assert_eq!(red.b, con.b);
        assert_eq!(red.a_mat, con.a_mat);
        assert_eq!(red.radius, 0.3);
    }
}
