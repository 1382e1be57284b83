//! Weak-form residual `∫∫ u (φ_t + Δφ) dx dt` for tensor-product bump test functions.
//!
//! Both the heat kernel and the test function factor over coordinates, so the
//! spatial integral reduces to one-dimensional Gaussian convolutions of the
//! bump and its second derivative. The source part is written with Fubini as
//! `∫_0 dt' ∫_{t > t'} ∫ G(x, ξ(t'), t − t') (φ_t + Δφ)(x, t) dx dt`.

use serde::{Deserialize, Serialize};

use super::InitialData;
use crate::error::{invalid, Result};
use crate::paths::SingularTrajectory;
use crate::quadrature::{integrate_scalar, GaussLegendre, QuadratureConfig, Tolerance};

/// `ψ(z) = exp(−1 / (1 − z²))` on `(−1, 1)`, zero elsewhere.
fn psi(z: f64) -> f64 {
    if z.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - z * z)).exp()
    }
}

fn psi_d1(z: f64) -> f64 {
    if z.abs() >= 1.0 {
        return 0.0;
    }
    let q = 1.0 - z * z;
    psi(z) * (-2.0 * z / (q * q))
}

fn psi_d2(z: f64) -> f64 {
    if z.abs() >= 1.0 {
        return 0.0;
    }
    let q = 1.0 - z * z;
    psi(z) * (6.0 * z.powi(4) - 2.0) / q.powi(4)
}

/// `φ(x, t) = ψ((t − t_c)/h_t) Π_i ψ((x_i − c_i)/h_x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BumpFunction {
    pub center_x: Vec<f64>,
    pub half_width_x: f64,
    pub center_t: f64,
    pub half_width_t: f64,
}

impl BumpFunction {
    fn validate(&self, dim: usize) -> Result<()> {
        if self.center_x.len() != dim {
            return Err(invalid("test function center has the wrong dimension"));
        }
        if !(self.half_width_x > 0.0 && self.half_width_t > 0.0) {
            return Err(invalid("test function widths must be positive"));
        }
        Ok(())
    }

    pub fn time_support(&self) -> (f64, f64) {
        (self.center_t - self.half_width_t, self.center_t + self.half_width_t)
    }

    pub fn value(&self, x: &[f64], t: f64) -> f64 {
        self.time_factor(t)
            * x.iter()
                .zip(&self.center_x)
                .map(|(xi, ci)| psi((xi - ci) / self.half_width_x))
                .product::<f64>()
    }

    fn time_factor(&self, t: f64) -> f64 {
        psi((t - self.center_t) / self.half_width_t)
    }

    fn time_factor_d1(&self, t: f64) -> f64 {
        psi_d1((t - self.center_t) / self.half_width_t) / self.half_width_t
    }

    /// `∂_t φ` and `Δφ` at `(x, t)`.
    pub fn derivatives(&self, x: &[f64], t: f64) -> (f64, f64) {
        let h = self.half_width_x;
        let b: Vec<f64> = x.iter().zip(&self.center_x).map(|(xi, ci)| psi((xi - ci) / h)).collect();
        let b2: Vec<f64> = x
            .iter()
            .zip(&self.center_x)
            .map(|(xi, ci)| psi_d2((xi - ci) / h) / (h * h))
            .collect();
        let prod: f64 = b.iter().product();
        let lap: f64 = (0..b.len())
            .map(|j| b2[j] * (0..b.len()).filter(|&i| i != j).map(|i| b[i]).product::<f64>())
            .sum();
        (self.time_factor_d1(t) * prod, self.time_factor(t) * lap)
    }
}

/// Which part of `u` enters the residual.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ResidualPart {
    Background,
    Source,
    Total,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeakResidual {
    pub value: f64,
    pub error: f64,
    /// `‖φ_t‖₁ + Σ_j ‖∂_j²φ‖₁`, an upper bound for `‖φ_t + Δφ‖₁`.
    pub phi_scale: f64,
}

const SPATIAL_PANELS: usize = 32;
const ABS_FLOOR_PANELS: f64 = 64.0;
const GAUSS_WINDOW: f64 = 10.0;

struct Spatial<'a> {
    phi: &'a BumpFunction,
    rule: GaussLegendre,
}

impl Spatial<'_> {
    /// `(∫ γ_v(x − m) B(x) dx, ∫ γ_v(x − m) B''(x) dx)` along one axis, `γ_v` centered Gaussian of variance `v`.
    fn convolve(&self, axis: usize, m: f64, v: f64) -> (f64, f64) {
        let c = self.phi.center_x[axis];
        let h = self.phi.half_width_x;
        if v <= 0.0 {
            return (psi((m - c) / h), psi_d2((m - c) / h) / (h * h));
        }
        let sd = v.sqrt();
        let lo = (c - h).max(m - GAUSS_WINDOW * sd);
        let hi = (c + h).min(m + GAUSS_WINDOW * sd);
        if lo >= hi {
            return (0.0, 0.0);
        }
        let norm = 1.0 / (2.0 * std::f64::consts::PI * v).sqrt();
        let width = (hi - lo) / SPATIAL_PANELS as f64;
        let (mut g, mut g2) = (0.0, 0.0);
        for k in 0..SPATIAL_PANELS {
            let a = lo + k as f64 * width;
            for (x, w) in self.rule.mapped(a, a + width) {
                let z = (x - c) / h;
                let wk = w * norm * (-(x - m) * (x - m) / (2.0 * v)).exp();
                g += wk * psi(z);
                g2 += wk * psi_d2(z) / (h * h);
            }
        }
        (g, g2)
    }

    /// `∫ ψ(z(x)) dx`, `∫ |ψ''(z(x))| / h² dx` over one axis.
    fn moments(&self) -> (f64, f64, f64) {
        let h = self.phi.half_width_x;
        let width = 2.0 * h / SPATIAL_PANELS as f64;
        let (mut m0, mut m2, mut m2abs) = (0.0, 0.0, 0.0);
        for k in 0..SPATIAL_PANELS {
            let a = -h + k as f64 * width;
            for (x, w) in self.rule.mapped(a, a + width) {
                let d2 = psi_d2(x / h) / (h * h);
                m0 += w * psi(x / h);
                m2 += w * d2;
                m2abs += w * d2.abs();
            }
        }
        (m0, m2, m2abs)
    }

    /// `∫ (φ_t + Δφ)(x, t) Π_i γ_{v}(x_i − mean_i) dx` at time `t`.
    fn tested(&self, mean: &[f64], v: f64, t: f64) -> f64 {
        let n = mean.len();
        let (g, h): (Vec<f64>, Vec<f64>) = (0..n).map(|i| self.convolve(i, mean[i], v)).unzip();
        let prod: f64 = g.iter().product();
        let lap: f64 = (0..n)
            .map(|j| h[j] * (0..n).filter(|&i| i != j).map(|i| g[i]).product::<f64>())
            .sum();
        self.phi.time_factor_d1(t) * prod + self.phi.time_factor(t) * lap
    }
}

fn uniform_panels(a: f64, b: f64, n: usize) -> Vec<(f64, f64)> {
    let w = (b - a) / n as f64;
    (0..n)
        .map(|k| (a + k as f64 * w, if k + 1 == n { b } else { a + (k + 1) as f64 * w }))
        .collect()
}

/// `∫_{t1}^{t2} ∫ u (φ_t + Δφ) dx dt` for `u` = background, source term `F`, or both.
///
/// The time support of `φ` must lie in `[t1, t2] ⊂ [0, T]`.
pub fn weak_residual(
    traj: &SingularTrajectory,
    u0: &InitialData,
    phi: &BumpFunction,
    part: ResidualPart,
    (t1, t2): (f64, f64),
    quad: &QuadratureConfig,
) -> Result<WeakResidual> {
    quad.validate()?;
    let dim = traj.dim();
    phi.validate(dim)?;
    u0.validate(dim)?;
    let (lo, hi) = phi.time_support();
    if !(0.0 <= t1 && t1 <= lo && hi <= t2 && t2 <= traj.horizon()) {
        return Err(invalid(format!(
            "test function time support [{lo}, {hi}] must lie in [t1, t2] = [{t1}, {t2}] within [0, {}]",
            traj.horizon()
        )));
    }
    let spatial = Spatial {
        phi,
        rule: GaussLegendre::new(16),
    };
    let rule = GaussLegendre::new(quad.order);
    let time_panels = uniform_panels(lo, hi, 8);

    let (m0, _, m2abs) = spatial.moments();
    let a_abs = rule_sum(&rule, &time_panels, |t| phi.time_factor_d1(t).abs());
    let a_int = rule_sum(&rule, &time_panels, |t| phi.time_factor(t));
    let phi_scale = a_abs * m0.powi(dim as i32) + a_int * dim as f64 * m2abs * m0.powi(dim as i32 - 1);
    // Absolute floors keep near-cancelling residuals from refining forever.
    let tol = Tolerance {
        rel: quad.rel_tol,
        abs: quad.rel_tol * phi_scale / ABS_FLOOR_PANELS,
        max_depth: quad.max_depth,
    };
    let inner_tol = Tolerance {
        rel: quad.rel_tol * 0.1,
        abs: 0.1 * tol.abs / hi,
        ..tol
    };

    let mut value = 0.0;
    let mut error = 0.0;
    if matches!(part, ResidualPart::Background | ResidualPart::Total) {
        let (v, e) = match u0 {
            InitialData::Constant { value: c } => {
                let (_, m2, _) = spatial.moments();
                let a_d1 = rule_sum(&rule, &time_panels, |t| phi.time_factor_d1(t));
                let v = c * (a_d1 * m0.powi(dim as i32) + a_int * dim as f64 * m2 * m0.powi(dim as i32 - 1));
                (v, 0.0)
            }
            InitialData::GaussianBump {
                amplitude,
                width,
                center,
            } => {
                let w2 = width * width;
                let mass = amplitude * (2.0 * std::f64::consts::PI * w2).powf(dim as f64 / 2.0);
                let f = |t: f64| mass * spatial.tested(center, w2 + 2.0 * t, t);
                integrate_scalar(&rule, &time_panels, f, tol)?
            }
        };
        value += v;
        error += e;
    }
    if matches!(part, ResidualPart::Source | ResidualPart::Total) {
        let inner = |tp: f64| -> f64 {
            let xi = match traj.eval(tp) {
                Ok(p) => p,
                Err(_) => return f64::NAN,
            };
            let start = tp.max(lo);
            if start >= hi {
                return 0.0;
            }
            let g = |t: f64| spatial.tested(&xi, 2.0 * (t - tp), t);
            integrate_scalar(&rule, &uniform_panels(start, hi, 4), g, inner_tol)
                .map(|(v, _)| v)
                .unwrap_or(f64::NAN)
        };
        let mut outer = Vec::new();
        if lo > 0.0 {
            outer.extend(uniform_panels(0.0, lo, 8));
        }
        outer.extend(uniform_panels(lo, hi, 8));
        let (v, e) = integrate_scalar(&rule, &outer, inner, tol)?;
        if !v.is_finite() {
            return Err(crate::error::Error::ToleranceNotMet {
                rel_tol: inner_tol.rel,
                context: "inner time integral of the source residual".into(),
            });
        }
        value += v;
        error += e;
    }
    Ok(WeakResidual {
        value,
        error,
        phi_scale,
    })
}

fn rule_sum(rule: &GaussLegendre, panels: &[(f64, f64)], f: impl Fn(f64) -> f64) -> f64 {
    panels.iter().map(|&(a, b)| rule.integrate(a, b, &f)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bump_derivatives_match_finite_differences() {
        for &z in &[-0.9, -0.5, 0.0, 0.3, 0.8] {
            let h = 1e-5;
            let d1 = (psi(z + h) - psi(z - h)) / (2.0 * h);
            let d2 = (psi(z + h) - 2.0 * psi(z) + psi(z - h)) / (h * h);
            assert!((psi_d1(z) - d1).abs() < 1e-7, "z={z}");
            assert!((psi_d2(z) - d2).abs() < 1e-4, "z={z}");
        }
        assert_eq!(psi(1.0), 0.0);
        assert_eq!(psi_d2(-1.2), 0.0);
    }

    #[test]
    fn convolution_with_vanishing_variance_is_point_value() {
        let phi = BumpFunction {
            center_x: vec![0.0],
            half_width_x: 1.0,
            center_t: 0.5,
            half_width_t: 0.25,
        };
        let sp = Spatial {
            phi: &phi,
            rule: GaussLegendre::new(16),
        };
        let (g0, h0) = sp.convolve(0, 0.3, 0.0);
        let (g, h) = sp.convolve(0, 0.3, 1e-10);
        assert!((g - g0).abs() < 1e-8 && (h - h0).abs() < 1e-6);
        // Total integral of ψ'' vanishes.
        let (_, m2, _) = sp.moments();
        assert!(m2.abs() < 1e-9, "{m2}");
    }
}
