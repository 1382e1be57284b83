//! Gauss–Legendre rules and a panel-adaptive integrator for vector-valued integrands.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// `n`-point Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss–Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() <= 1e-16 * x.abs().max(1.0) {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `(x, w)` pairs mapped to `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (mid + half * x, half * w))
    }

    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.mapped(a, b).map(|(x, w)| w * f(x)).sum()
    }
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

const GK15_X: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK15_WK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
/// 7-point Gauss weights at the odd-indexed Kronrod nodes.
const G7_W: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Kronrod 15-point and embedded Gauss 7-point estimates of `∫_a^b f`.
pub fn gauss_kronrod15(a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> (f64, f64) {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let fc = f(mid);
    let mut k = GK15_WK[7] * fc;
    let mut g = G7_W[3] * fc;
    for i in 0..7 {
        let dx = half * GK15_X[i];
        let pair = f(mid - dx) + f(mid + dx);
        k += GK15_WK[i] * pair;
        if i % 2 == 1 {
            g += G7_W[i / 2] * pair;
        }
    }
    (k * half, g * half)
}

/// Discretization and accuracy settings shared by the mass and density integrals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    /// Number of geometric panels accumulating at `s = 0`.
    pub n_panels: usize,
    /// Ratio between consecutive geometric panel boundaries.
    pub grading: f64,
    /// Gauss–Legendre order per time panel.
    pub order: usize,
    /// Largest radial panel of the ball integral, in standard deviations.
    pub radial_width: f64,
    /// Gauss–Legendre order of the polar-angle integral (dimensions other than 1 and 3).
    pub angular_order: usize,
    pub rel_tol: f64,
    /// Maximum number of panel halvings.
    pub max_depth: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            n_panels: 64,
            grading: 0.5,
            order: 8,
            radial_width: 1.0,
            angular_order: 24,
            rel_tol: 1e-8,
            max_depth: 40,
        }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_panels < 16 {
            return Err(invalid(format!("n_panels must be >= 16, got {}", self.n_panels)));
        }
        if self.order < 4 || self.angular_order < 4 {
            return Err(invalid("quadrature orders must be >= 4"));
        }
        if !(self.radial_width > 0.0 && self.radial_width <= 4.0) {
            return Err(invalid(format!("radial_width must lie in (0, 4], got {}", self.radial_width)));
        }
        if !(self.grading > 0.0 && self.grading < 1.0) {
            return Err(invalid(format!("grading must lie in (0, 1), got {}", self.grading)));
        }
        if !(self.rel_tol > 0.0 && self.rel_tol <= 1e-2) {
            return Err(invalid(format!("rel_tol must lie in (0, 1e-2], got {}", self.rel_tol)));
        }
        if self.max_depth == 0 {
            return Err(invalid("max_depth must be positive"));
        }
        Ok(())
    }

    /// Panels of `[a, b]` with boundaries `a + (b − a) q^k`, `k = 0..=n_panels`, plus the remainder at `a`.
    pub fn geometric_panels(&self, a: f64, b: f64) -> Vec<(f64, f64)> {
        let len = b - a;
        let mut out = Vec::with_capacity(self.n_panels + 1);
        let mut hi = len;
        for _ in 0..self.n_panels {
            let lo = hi * self.grading;
            out.push((a + lo, a + hi));
            hi = lo;
        }
        out.push((a, a + hi));
        out.reverse();
        out
    }

    pub fn tolerance(&self) -> Tolerance {
        Tolerance {
            rel: self.rel_tol,
            abs: 0.0,
            max_depth: self.max_depth,
        }
    }
}

/// Acceptance rule for panel refinement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub rel: f64,
    pub abs: f64,
    pub max_depth: usize,
}

/// Integral values and error estimates per component.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub value: Vec<f64>,
    pub error: Vec<f64>,
}

fn apply_rule<F>(rule: &GaussLegendre, a: f64, b: f64, f: &F, buf: &mut [f64], q: &mut [f64], qabs: &mut [f64])
where
    F: Fn(f64, &mut [f64]),
{
    q.iter_mut().for_each(|v| *v = 0.0);
    qabs.iter_mut().for_each(|v| *v = 0.0);
    for (x, w) in rule.mapped(a, b) {
        f(x, buf);
        for j in 0..buf.len() {
            q[j] += w * buf[j];
            qabs[j] += w * buf[j].abs();
        }
    }
}

struct Refiner<'a, F> {
    rule: &'a GaussLegendre,
    f: &'a F,
    tol: Tolerance,
    scale: Vec<f64>,
    total_len: f64,
}

impl<F: Fn(f64, &mut [f64])> Refiner<'_, F> {
    fn refine(&self, a: f64, b: f64, whole: Vec<f64>, depth: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = whole.len();
        let m = 0.5 * (a + b);
        let mut buf = vec![0.0; n];
        let mut ql = vec![0.0; n];
        let mut qr = vec![0.0; n];
        let mut scratch = vec![0.0; n];
        apply_rule(self.rule, a, m, self.f, &mut buf, &mut ql, &mut scratch);
        apply_rule(self.rule, m, b, self.f, &mut buf, &mut qr, &mut scratch);
        let frac = (b - a) / self.total_len;
        let ok = (0..n).all(|j| {
            let fine = ql[j] + qr[j];
            let diff = (fine - whole[j]).abs();
            diff <= (self.tol.rel * fine.abs())
                .max(self.tol.rel * self.scale[j] * frac)
                .max(self.tol.abs)
        });
        if ok {
            let err = (0..n).map(|j| (ql[j] + qr[j] - whole[j]).abs()).collect();
            let val = (0..n).map(|j| ql[j] + qr[j]).collect();
            return Ok((val, err));
        }
        if depth >= self.tol.max_depth || m <= a || m >= b {
            return Err(Error::ToleranceNotMet {
                rel_tol: self.tol.rel,
                context: format!("panel [{a:e}, {b:e}] after {depth} halvings"),
            });
        }
        let (vl, el) = self.refine(a, m, ql, depth + 1)?;
        let (vr, er) = self.refine(m, b, qr, depth + 1)?;
        Ok((
            vl.iter().zip(&vr).map(|(x, y)| x + y).collect(),
            el.iter().zip(&er).map(|(x, y)| x + y).collect(),
        ))
    }
}

/// Integrates the `ncomp`-valued `f` over the union of `panels`.
///
/// A panel is accepted when its one-rule and two-half-rule estimates agree
/// componentwise to `rel` relative to either the panel value or the panel's
/// share of `∫|f|`; otherwise it is halved. Panels are processed in parallel
/// and summed in input order, so results do not depend on the thread count.
pub fn integrate_panels<F>(
    rule: &GaussLegendre,
    panels: &[(f64, f64)],
    ncomp: usize,
    f: &F,
    tol: Tolerance,
) -> Result<Estimate>
where
    F: Fn(f64, &mut [f64]) + Sync,
{
    let first: Vec<(Vec<f64>, Vec<f64>)> = panels
        .par_iter()
        .with_min_len(16)
        .map(|&(a, b)| {
            let mut buf = vec![0.0; ncomp];
            let mut q = vec![0.0; ncomp];
            let mut qabs = vec![0.0; ncomp];
            apply_rule(rule, a, b, f, &mut buf, &mut q, &mut qabs);
            (q, qabs)
        })
        .collect();
    let mut scale = vec![0.0; ncomp];
    for (_, qabs) in &first {
        for j in 0..ncomp {
            scale[j] += qabs[j];
        }
    }
    let total_len: f64 = panels.iter().map(|(a, b)| b - a).sum();
    if total_len <= 0.0 {
        return Ok(Estimate {
            value: vec![0.0; ncomp],
            error: vec![0.0; ncomp],
        });
    }
    let refiner = Refiner {
        rule,
        f,
        tol,
        scale,
        total_len,
    };
    let refined: Vec<Result<(Vec<f64>, Vec<f64>)>> = panels
        .par_iter()
        .zip(first.into_par_iter())
        .with_min_len(16)
        .map(|(&(a, b), (q, _))| {
            if b > a {
                refiner.refine(a, b, q, 0)
            } else {
                Ok((vec![0.0; ncomp], vec![0.0; ncomp]))
            }
        })
        .collect();
    let mut value = vec![0.0; ncomp];
    let mut error = vec![0.0; ncomp];
    for item in refined {
        let (v, e) = item?;
        for j in 0..ncomp {
            value[j] += v[j];
            error[j] += e[j];
        }
    }
    Ok(Estimate { value, error })
}

/// Scalar convenience wrapper around [`integrate_panels`].
pub fn integrate_scalar<F>(
    rule: &GaussLegendre,
    panels: &[(f64, f64)],
    f: F,
    tol: Tolerance,
) -> Result<(f64, f64)>
where
    F: Fn(f64) -> f64 + Sync,
{
    let g = |x: f64, out: &mut [f64]| out[0] = f(x);
    let est = integrate_panels(rule, panels, 1, &g, tol)?;
    Ok((est.value[0], est.error[0]))
}
