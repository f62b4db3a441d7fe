//! Deterministic numeric expectations `E_θ f(X)` under a family member.
//!
//! Continuous families are integrated over `[Q(ε), Q(1 − ε)]` with a globally
//! adaptive Gauss–Kronrod (7/15) scheme: the panel with the largest error
//! estimate is bisected until the summed error falls below
//! `max(abs_tol, rel_tol·|E f|)`. Lattice families are summed from the lower
//! support end until the omitted upper tail mass drops below `lattice_tail`.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::family::{ParametricFamily, Support};
use crate::optim::brent_root;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpectationConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Probability `ε` cut from each tail of a continuous family.
    pub continuous_range: f64,
    /// Upper tail mass left out of lattice summation.
    pub lattice_tail: f64,
    /// Cap on integrand evaluations per expectation.
    pub max_nodes: usize,
}

impl Default for ExpectationConfig {
    fn default() -> Self {
        ExpectationConfig {
            abs_tol: 1e-10,
            rel_tol: 1e-9,
            continuous_range: 1e-12,
            lattice_tail: 1e-14,
            max_nodes: 400_000,
        }
    }
}

impl ExpectationConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.abs_tol, self.rel_tol, self.continuous_range, self.lattice_tail];
        if positive.iter().any(|t| !(*t > 0.0)) || self.continuous_range >= 0.5 {
            return Err(Error::InvalidConfig(format!("{self:?}: tolerances must be positive")));
        }
        if self.max_nodes < 64 {
            return Err(Error::InvalidConfig(format!("max_nodes = {} < 64", self.max_nodes)));
        }
        Ok(())
    }
}

const SUP_GRID: usize = 4096;
const SUP_REFINE: usize = 8;
const SCAN_PER_PANEL: usize = 32;
const BASE_PROBS: [f64; 13] = [
    1e-9, 1e-6, 1e-3, 0.02, 0.1, 0.25, 0.5, 0.75, 0.9, 0.98, 0.999, 0.999_999, 0.999_999_999,
];

#[derive(Debug)]
enum Domain {
    Continuous { breaks: Vec<f64> },
    Lattice { points: Vec<f64>, probs: Vec<f64> },
}

/// Expectation engine bound to one family member `P_θ`.
#[derive(Debug)]
pub struct Expectation<'a> {
    family: &'a dyn ParametricFamily,
    theta: Vec<f64>,
    config: ExpectationConfig,
    domain: Domain,
    scan: OnceLock<Vec<f64>>,
    sup_grid: OnceLock<Vec<f64>>,
}

impl<'a> Expectation<'a> {
    pub fn new(family: &'a dyn ParametricFamily, theta: &[f64], config: ExpectationConfig) -> Result<Self> {
        config.validate()?;
        family.validate(theta)?;
        let domain = match family.support() {
            Support::Continuous { .. } => {
                let eps = config.continuous_range;
                let mut breaks = vec![family.quantile(theta, eps)];
                for &p in BASE_PROBS.iter().filter(|&&p| p > eps && p < 1.0 - eps) {
                    breaks.push(family.quantile(theta, p));
                }
                breaks.push(family.quantile(theta, 1.0 - eps));
                breaks.dedup_by(|b, a| *b <= *a);
                if breaks.len() < 2 || breaks.iter().any(|b| !b.is_finite()) {
                    return Err(Error::DegenerateParametrization(format!(
                        "cannot bound the integration range of {} at {theta:?}",
                        family.name()
                    )));
                }
                Domain::Continuous { breaks }
            }
            Support::Lattice { lower } => {
                let mut points = Vec::new();
                let mut probs = Vec::new();
                let mut k = lower as f64;
                loop {
                    points.push(k);
                    probs.push(family.density(theta, k));
                    let tail = 1.0 - family.cdf(theta, k);
                    if tail < config.lattice_tail {
                        break;
                    }
                    k += 1.0;
                    if points.len() > 10_000_000 {
                        return Err(Error::DegenerateParametrization(format!(
                            "lattice summation range of {} at {theta:?} too long",
                            family.name()
                        )));
                    }
                }
                Domain::Lattice { points, probs }
            }
        };
        Ok(Expectation {
            family,
            theta: theta.to_vec(),
            config,
            domain,
            scan: OnceLock::new(),
            sup_grid: OnceLock::new(),
        })
    }

    pub fn family(&self) -> &'a dyn ParametricFamily {
        self.family
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn config(&self) -> &ExpectationConfig {
        &self.config
    }

    pub fn is_lattice(&self) -> bool {
        matches!(self.domain, Domain::Lattice { .. })
    }

    /// Integration range (continuous) or summation range (lattice).
    pub fn range(&self) -> (f64, f64) {
        match &self.domain {
            Domain::Continuous { breaks } => (breaks[0], *breaks.last().unwrap()),
            Domain::Lattice { points, .. } => (points[0], *points.last().unwrap()),
        }
    }

    /// Lattice support points and their probabilities.
    pub fn lattice(&self) -> Option<(&[f64], &[f64])> {
        match &self.domain {
            Domain::Lattice { points, probs } => Some((points, probs)),
            Domain::Continuous { .. } => None,
        }
    }

    /// `E f(X)` for an `m`-vector valued `f` writing into its output slice.
    pub fn expect<F>(&self, m: usize, f: F) -> Result<Vec<f64>>
    where
        F: FnMut(f64, &mut [f64]),
    {
        self.expect_with_breaks(m, f, &[])
    }

    pub fn expect_scalar<F>(&self, mut f: F) -> Result<f64>
    where
        F: FnMut(f64) -> f64,
    {
        Ok(self.expect(1, |x, out| out[0] = f(x))?[0])
    }

    /// As [`Expectation::expect`], with extra panel boundaries at `breaks`
    /// (kinks of the integrand).
    pub fn expect_with_breaks<F>(&self, m: usize, mut f: F, breaks: &[f64]) -> Result<Vec<f64>>
    where
        F: FnMut(f64, &mut [f64]),
    {
        match &self.domain {
            Domain::Lattice { points, probs } => {
                let mut acc = vec![0.0; m];
                let mut buf = vec![0.0; m];
                for (&x, &p) in points.iter().zip(probs) {
                    if p == 0.0 {
                        continue;
                    }
                    f(x, &mut buf);
                    for (a, v) in acc.iter_mut().zip(&buf) {
                        *a += p * v;
                    }
                }
                Ok(acc)
            }
            Domain::Continuous { breaks: base } => {
                let (lo, hi) = (base[0], *base.last().unwrap());
                let mut cuts: Vec<f64> = base.clone();
                cuts.extend(breaks.iter().copied().filter(|b| *b > lo && *b < hi));
                cuts.sort_by(f64::total_cmp);
                let min_gap = 1e-13 * (hi - lo);
                cuts.dedup_by(|b, a| *b - *a <= min_gap);
                let fam = self.family;
                let theta = &self.theta;
                let weighted = |x: f64, out: &mut [f64]| {
                    let p = fam.density(theta, x);
                    if p == 0.0 {
                        out.iter_mut().for_each(|o| *o = 0.0);
                        return;
                    }
                    f(x, out);
                    out.iter_mut().for_each(|o| *o *= p);
                };
                adaptive_gk(weighted, m, &cuts, &self.config)
            }
        }
    }

    /// `E (g)_+`, with subintervals split at the sign changes of `g`.
    pub fn expect_pos_part<G>(&self, mut g: G) -> Result<f64>
    where
        G: FnMut(f64) -> f64,
    {
        if self.is_lattice() {
            return self.expect_scalar(|x| g(x).max(0.0));
        }
        let roots = self.sign_changes(&mut g);
        Ok(self.expect_with_breaks(1, |x, out| out[0] = g(x).max(0.0), &roots)?[0])
    }

    /// Points where `g` changes sign between neighbouring scan-grid nodes,
    /// refined by Brent's method. Empty for lattice families.
    pub fn sign_changes<G>(&self, mut g: G) -> Vec<f64>
    where
        G: FnMut(f64) -> f64,
    {
        if self.is_lattice() {
            return Vec::new();
        }
        let scan = self.scan_grid();
        let mut roots = Vec::new();
        let mut prev_x = scan[0];
        let mut prev_g = g(prev_x);
        for &x in &scan[1..] {
            let gx = g(x);
            if prev_g == 0.0 {
                roots.push(prev_x);
            } else if gx != 0.0 && (gx > 0.0) != (prev_g > 0.0) && gx.is_finite() && prev_g.is_finite() {
                let tol = 1e-14 * x.abs().max(prev_x.abs()).max(1e-300);
                if let Ok(r) = brent_root(&mut g, prev_x, x, prev_g, gx, tol, 200) {
                    roots.push(r);
                }
            }
            prev_x = x;
            prev_g = gx;
        }
        roots
    }

    /// Sign-change scan grid: the base panels, each split into 32 cells.
    pub fn scan_grid(&self) -> &[f64] {
        self.scan.get_or_init(|| match &self.domain {
            Domain::Lattice { points, .. } => points.clone(),
            Domain::Continuous { breaks } => {
                let mut grid = Vec::with_capacity((breaks.len() - 1) * SCAN_PER_PANEL + 1);
                for w in breaks.windows(2) {
                    for j in 0..SCAN_PER_PANEL {
                        grid.push(w[0] + (w[1] - w[0]) * j as f64 / SCAN_PER_PANEL as f64);
                    }
                }
                grid.push(*breaks.last().unwrap());
                grid
            }
        })
    }

    /// Quantile-equispaced grid of 4096 points spanning the integration range.
    pub fn sup_grid(&self) -> &[f64] {
        self.sup_grid.get_or_init(|| match &self.domain {
            Domain::Lattice { points, .. } => points.clone(),
            Domain::Continuous { breaks } => {
                let eps = self.config.continuous_range;
                let mut grid: Vec<f64> = (0..SUP_GRID)
                    .map(|i| {
                        let u = eps + (1.0 - 2.0 * eps) * i as f64 / (SUP_GRID - 1) as f64;
                        self.family.quantile(&self.theta, u)
                    })
                    .collect();
                grid[0] = breaks[0];
                grid[SUP_GRID - 1] = *breaks.last().unwrap();
                grid.dedup_by(|b, a| *b <= *a);
                grid
            }
        })
    }

    /// Essential sup of `|f|`: grid maximum refined by golden-section search
    /// around the largest grid values.
    pub fn sup_abs<F>(&self, m: usize, mut f: F) -> f64
    where
        F: FnMut(f64, &mut [f64]),
    {
        let mut buf = vec![0.0; m];
        let mut norm = |x: f64| {
            f(x, &mut buf);
            buf.iter().map(|v| v * v).sum::<f64>().sqrt()
        };
        self.grid_extremum(&mut norm)
    }

    /// `(inf g, sup g)` of a scalar function over the support.
    pub fn range_of<G>(&self, mut g: G) -> (f64, f64)
    where
        G: FnMut(f64) -> f64,
    {
        let sup = self.grid_extremum(&mut g);
        let inf = -self.grid_extremum(&mut |x| -g(x));
        (inf, sup)
    }

    fn grid_extremum(&self, h: &mut dyn FnMut(f64) -> f64) -> f64 {
        let grid = self.sup_grid();
        let vals: Vec<f64> = grid.iter().map(|&x| h(x)).collect();
        let mut best = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if self.is_lattice() || grid.len() < 3 {
            return best;
        }
        // local maxima of the grid values, largest first
        let mut peaks: Vec<usize> = (0..grid.len())
            .filter(|&i| {
                let left = if i == 0 { f64::NEG_INFINITY } else { vals[i - 1] };
                let right = if i + 1 == grid.len() { f64::NEG_INFINITY } else { vals[i + 1] };
                vals[i] >= left && vals[i] >= right
            })
            .collect();
        peaks.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]));
        for &i in peaks.iter().take(SUP_REFINE) {
            let a = grid[i.saturating_sub(1)];
            let b = grid[(i + 1).min(grid.len() - 1)];
            best = best.max(golden_max(h, a, b));
        }
        best
    }
}

fn golden_max(h: &mut dyn FnMut(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (h(c), h(d));
    let mut best = h(a).max(h(b)).max(fc).max(fd);
    for _ in 0..80 {
        if (b - a).abs() <= 1e-13 * (a.abs() + b.abs()).max(1e-300) {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = h(c);
            best = best.max(fc);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = h(d);
            best = best.max(fd);
        }
    }
    best
}

// Gauss–Kronrod 7/15 nodes on [-1, 1] (non-negative half) and weights.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
// Gauss weights for XGK[1], XGK[3], XGK[5], XGK[7]
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

struct Panel {
    a: f64,
    b: f64,
    value: Vec<f64>,
    err: f64,
}

fn gk15<F>(f: &mut F, a: f64, b: f64, m: usize, buf: &mut [f64]) -> Panel
where
    F: FnMut(f64, &mut [f64]),
{
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut kron = vec![0.0; m];
    let mut gauss = vec![0.0; m];
    f(c, buf);
    for j in 0..m {
        kron[j] = WGK[7] * buf[j];
        gauss[j] = WG[3] * buf[j];
    }
    for i in 0..7 {
        for sign in [-1.0, 1.0] {
            f(c + sign * h * XGK[i], buf);
            for j in 0..m {
                kron[j] += WGK[i] * buf[j];
                if i % 2 == 1 {
                    gauss[j] += WG[i / 2] * buf[j];
                }
            }
        }
    }
    let mut err = 0.0_f64;
    for j in 0..m {
        kron[j] *= h;
        gauss[j] *= h;
        err = err.max((kron[j] - gauss[j]).abs());
    }
    Panel { a, b, value: kron, err }
}

fn adaptive_gk<F>(mut f: F, m: usize, cuts: &[f64], config: &ExpectationConfig) -> Result<Vec<f64>>
where
    F: FnMut(f64, &mut [f64]),
{
    let mut buf = vec![0.0; m];
    let mut panels: Vec<Panel> = cuts
        .windows(2)
        .map(|w| gk15(&mut f, w[0], w[1], m, &mut buf))
        .collect();
    let mut nodes = 15 * panels.len();
    let total = |panels: &[Panel]| {
        let mut acc = vec![0.0; m];
        for p in panels {
            for (a, v) in acc.iter_mut().zip(&p.value) {
                *a += v;
            }
        }
        acc
    };
    let mut previous = total(&panels);
    loop {
        let current = total(&panels);
        let err: f64 = panels.iter().map(|p| p.err).sum();
        let scale = current.iter().fold(0.0_f64, |s, v| s.max(v.abs()));
        if err <= config.abs_tol.max(config.rel_tol * scale) {
            return Ok(current);
        }
        if nodes + 30 > config.max_nodes {
            return Err(Error::QuadratureFailure {
                max_nodes: config.max_nodes,
                last: current,
                previous,
            });
        }
        let (worst, _) = panels
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, be), (i, p)| if p.err > be { (i, p.err) } else { (bi, be) });
        let Panel { a, b, .. } = panels[worst];
        let mid = 0.5 * (a + b);
        if !(mid > a && mid < b) {
            // cannot split further; accept the panel as is
            panels[worst].err = 0.0;
            continue;
        }
        let left = gk15(&mut f, a, mid, m, &mut buf);
        let right = gk15(&mut f, mid, b, m, &mut buf);
        nodes += 30;
        panels[worst] = left;
        panels.insert(worst + 1, right);
        previous = current;
    }
}

/// `E_θ f(X)` for an `m`-vector valued integrand.
pub fn expect<F>(
    family: &dyn ParametricFamily,
    theta: &[f64],
    m: usize,
    f: F,
    config: ExpectationConfig,
) -> Result<Vec<f64>>
where
    F: FnMut(f64, &mut [f64]),
{
    Expectation::new(family, theta, config)?.expect(m, f)
}

/// `E_θ max(g(X), 0)`.
pub fn expect_pos_part<G>(family: &dyn ParametricFamily, theta: &[f64], g: G, config: ExpectationConfig) -> Result<f64>
where
    G: FnMut(f64) -> f64,
{
    Expectation::new(family, theta, config)?.expect_pos_part(g)
}

/// `P_θ`-essential sup of `|f|`.
pub fn sup_abs<F>(family: &dyn ParametricFamily, theta: &[f64], m: usize, f: F, config: ExpectationConfig) -> Result<f64>
where
    F: FnMut(f64, &mut [f64]),
{
    Ok(Expectation::new(family, theta, config)?.sup_abs(m, f))
}
