use nalgebra::{DMatrix, DVector};

use super::{
    classical_solution, invert, mse_value, via_equivariance, Diagnostics, IcForm, InfluenceCurve, Neighborhood,
    Residuals, RiskReport, SolverConfig,
};
use crate::error::{Error, Result};
use crate::expectation::Expectation;
use crate::family::{Model, ParametricFamily};
use crate::optim::brent_root;

/// Minmax-MSE influence curve on the contamination neighborhood of radius `r`:
/// `ψ* = A(Λ − z)·min{1, b/|A(Λ − z)|}` with
/// `r²b = E(|A(Λ−z)| − b)_+`, `E(Λ − z)w = 0` and `A⁻¹ = E(Λ−z)(Λ−z)'w`.
///
/// Solved by fixed-point sweeps from `A = I⁻¹`, `z = 0`: each sweep solves the
/// monotone clipping equation for `b`, then updates `z = E Λw / E w` and
/// `A = [E(Λ−z)(Λ−z)'w]⁻¹`.
pub fn solve_contamination_ic(
    family: &Model,
    theta: &[f64],
    r: f64,
    config: &SolverConfig,
) -> Result<(InfluenceCurve, RiskReport)> {
    if !(r >= 0.0 && r.is_finite()) {
        return Err(Error::InvalidConfig(format!("radius {r} must be finite and non-negative")));
    }
    if r == 0.0 {
        return classical_solution(family, theta, Neighborhood::Contamination, config);
    }
    via_equivariance(family, theta, |t| solve_with_perturbation(family, t, r, config))
}

fn solve_with_perturbation(
    family: &Model,
    theta: &[f64],
    r: f64,
    config: &SolverConfig,
) -> Result<(InfluenceCurve, RiskReport)> {
    match solve_raw(family, theta, r, config) {
        Err(Error::DegenerateCentering { suggested_shift, .. }) => {
            let shifted: Vec<f64> = theta.iter().map(|t| t + suggested_shift).collect();
            let (mut ic, report) = solve_raw(family, &shifted, r, config)?;
            ic.diagnostics.perturbation = Some(suggested_shift);
            Ok((ic, report))
        }
        other => other,
    }
}

struct Sweep {
    b: f64,
    clip_residual: f64,
    ew: f64,
    elw: DVector<f64>,
    ellw: DMatrix<f64>,
    band: f64,
}

fn standardized(fam: &dyn ParametricFamily, theta: &[f64], a: &DMatrix<f64>, z: &DVector<f64>, x: f64, s: &mut [f64], y: &mut [f64]) -> f64 {
    fam.scores_into(theta, x, s);
    let k = s.len();
    for i in 0..k {
        y[i] = (0..k).map(|j| a[(i, j)] * (s[j] - z[j])).sum();
    }
    y.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Solves `r²b = E(|Y| − b)_+` for the current `A`, `z`; returns `b` and the
/// relative residual.
fn solve_clip(e: &Expectation<'_>, a: &DMatrix<f64>, z: &DVector<f64>, r: f64) -> Result<(f64, f64)> {
    let fam = e.family();
    let theta = e.theta();
    let k = fam.dim();
    let (mut s, mut y) = (vec![0.0; k], vec![0.0; k]);
    let mut hi = e.sup_abs(1, |x, out| out[0] = standardized(fam, theta, a, z, x, &mut s, &mut y));
    let r2 = r * r;
    let mut failure = None;
    let mut h = |b: f64| -> f64 {
        match e.expect_pos_part(|x| standardized(fam, theta, a, z, x, &mut s, &mut y) - b) {
            Ok(v) => v - r2 * b,
            Err(err) => {
                failure.get_or_insert(err);
                f64::NAN
            }
        }
    };
    let h0 = h(0.0);
    let mut hhi = h(hi);
    while hhi >= 0.0 {
        hi *= 2.0;
        hhi = h(hi);
    }
    let found = if h0.is_nan() || hhi.is_nan() {
        None
    } else {
        Some(brent_root(&mut h, 0.0, hi, h0, hhi, 1e-14 * hi, 200))
    };
    let resid = found.as_ref().map(|b| match b {
        Ok(b) => h(*b).abs() / (r2 * b),
        Err(_) => f64::NAN,
    });
    if let Some(err) = failure {
        return Err(err);
    }
    let b = found.expect("finite clipping equation")?;
    Ok((b, resid.unwrap()))
}

fn sweep(e: &Expectation<'_>, a: &DMatrix<f64>, z: &DVector<f64>, r: f64) -> Result<Sweep> {
    let (b, clip_residual) = solve_clip(e, a, z, r)?;
    let fam = e.family();
    let theta = e.theta();
    let k = fam.dim();
    let (mut s, mut y) = (vec![0.0; k], vec![0.0; k]);
    let kinks = e.sign_changes(|x| standardized(fam, theta, a, z, x, &mut s, &mut y) - b);
    let m = e.expect_with_breaks(
        2 + k + k * k,
        |x, out| {
            let n = standardized(fam, theta, a, z, x, &mut s, &mut y);
            let w = if n <= b { 1.0 } else { b / n };
            out[0] = w;
            for i in 0..k {
                out[1 + i] = s[i] * w;
                for j in 0..k {
                    out[1 + k + i * k + j] = s[i] * s[j] * w;
                }
            }
            out[1 + k + k * k] = if n < b { 1.0 } else { 0.0 };
        },
        &kinks,
    )?;
    Ok(Sweep {
        b,
        clip_residual,
        ew: m[0],
        elw: DVector::from_column_slice(&m[1..1 + k]),
        ellw: DMatrix::from_row_slice(k, k, &m[1 + k..1 + k + k * k]),
        band: m[1 + k + k * k],
    })
}

/// `E(Λ − z)(Λ − z)'w` from raw weighted moments.
fn centered_second(sw: &Sweep, z: &DVector<f64>) -> DMatrix<f64> {
    &sw.ellw - &sw.elw * z.transpose() - z * sw.elw.transpose() + z * z.transpose() * sw.ew
}

fn solve_raw(family: &Model, theta: &[f64], r: f64, config: &SolverConfig) -> Result<(InfluenceCurve, RiskReport)> {
    let fam: &dyn ParametricFamily = &**family;
    let k = fam.dim();
    let e = Expectation::new(fam, theta, config.expectation)?;
    let lattice = e.is_lattice();
    let mut a = invert(&fam.fisher(theta), "Fisher information")?;
    let mut z = DVector::zeros(k);
    let mut history = Vec::new();
    let mut best = f64::INFINITY;
    let mut stall = 0;
    let mut damping = 1.0;
    let mut last_band = 1.0;

    for sweep_no in 1..=config.max_sweeps {
        let sw = sweep(&e, &a, &z, r)?;
        last_band = sw.band;
        let center = &sw.elw - &z * sw.ew;
        let std_res = (&a * centered_second(&sw, &z) - DMatrix::identity(k, k)).amax();
        let residuals = Residuals {
            clip: sw.clip_residual,
            centering: (&a * center).norm() / sw.b,
            standardization: std_res,
        };
        let res = residuals.max();
        history.push(res);
        if res < config.tol {
            if lattice && sw.band == 0.0 {
                return Err(Error::DegenerateCentering {
                    theta: theta.to_vec(),
                    suggested_shift: config.degenerate_shift,
                });
            }
            let ic = InfluenceCurve {
                family: family.clone(),
                theta: theta.to_vec(),
                neighborhood: Neighborhood::Contamination,
                radius: r,
                form: IcForm::Clipped,
                a_mat: a,
                z,
                b: sw.b,
                c: None,
                approximate: false,
                diagnostics: Diagnostics {
                    sweeps: sweep_no,
                    residuals,
                    history,
                    damped: damping < 1.0,
                    perturbation: None,
                },
            };
            let variance = ic.variance(config.expectation)?;
            let report = RiskReport {
                neighborhood: Neighborhood::Contamination,
                radius: r,
                variance,
                bias_bound: ic.b,
                mse: mse_value(variance, r, ic.b),
                tr_a: Some(ic.tr_a()),
                approximate: false,
            };
            return Ok((ic, report));
        }
        if res < best {
            best = res;
            stall = 0;
        } else {
            stall += 1;
            if stall >= config.damping_after {
                damping = 0.5;
            }
        }
        if !(sw.ew > 0.0) {
            break;
        }
        let z_new = &sw.elw / sw.ew;
        let a_new = invert(&centered_second(&sw, &z_new), "weighted score covariance")?;
        z = &z + (z_new - &z) * damping;
        a = &a + (a_new - &a) * damping;
    }
    if lattice && last_band == 0.0 {
        return Err(Error::DegenerateCentering {
            theta: theta.to_vec(),
            suggested_shift: config.degenerate_shift,
        });
    }
    Err(Error::SolverFailure {
        sweeps: history.len(),
        reason: format!("residual {:.3e} above tolerance {:.1e}", history.last().copied().unwrap_or(f64::NAN), config.tol),
        history,
    })
}
