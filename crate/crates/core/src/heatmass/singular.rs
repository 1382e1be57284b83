//! Mass of the Duhamel source term on balls around the current singular point.
//!
//! After the shift `y = x − ξ(T)`,
//! `∫_{B_r} F(x, T) dx = ∫_0^T P(|Y_s| ≤ r) ds` with `Y_s ~ N(η(s), 2s I)`.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::ball::BallProbability;
use super::HeatKernelParams;
use crate::error::{invalid, Error, Result};
use crate::functionals::occupation_intervals;
use crate::paths::{Profile, RebasedIncrement};
use crate::quadrature::{integrate_panels, GaussLegendre, QuadratureConfig};

/// Quadrature value with its error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MassEstimate {
    pub value: f64,
    pub error: f64,
}

/// Split of the singular mass over `[s0, T]`, `[0, s0] \ 𝒯(2r)` and `𝒯(2r)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MassSplit {
    pub i1: f64,
    pub i2: f64,
    pub i3: f64,
}

impl MassSplit {
    pub fn total(&self) -> f64 {
        self.i1 + self.i2 + self.i3
    }
}

/// Gauss order on single path segments, where the integrand is smooth.
const SEGMENT_ORDER: usize = 3;

/// Integration panel `[a, b]` with its Gauss order.
#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    order: usize,
}

fn split_at(panels: Vec<Panel>, breaks: &[f64]) -> Vec<Panel> {
    let mut out = Vec::with_capacity(panels.len() + breaks.len());
    for p in panels {
        let mut lo = p.a;
        for &x in breaks.iter().filter(|&&x| x > p.a && x < p.b) {
            out.push(Panel { a: lo, b: x, ..p });
            lo = x;
        }
        out.push(Panel { a: lo, ..p });
    }
    out
}

fn graded(quad: &QuadratureConfig, a: f64, b: f64) -> Vec<Panel> {
    quad.geometric_panels(a, b)
        .into_iter()
        .map(|(a, b)| Panel { a, b, order: quad.order })
        .collect()
}

/// Panels of `[0, T]` adapted to the increment and the radii.
fn mass_panels(eta: &RebasedIncrement, horizon: f64, radii: &[f64], quad: &QuadratureConfig) -> Vec<Panel> {
    match eta.profile() {
        Profile::Zero => graded(quad, 0.0, horizon),
        Profile::Power { c, alpha, .. } => {
            let mut breaks: Vec<f64> = radii
                .iter()
                .map(|r| (r / c).powf(1.0 / alpha))
                .filter(|&s| s > 0.0 && s < horizon)
                .collect();
            breaks.sort_by(|a, b| a.total_cmp(b));
            split_at(graded(quad, 0.0, horizon), &breaks)
        }
        Profile::Piecewise { s, .. } => {
            let mut panels = graded(quad, 0.0, s[1]);
            panels.extend(s[1..].windows(2).map(|w| Panel {
                a: w[0],
                b: w[1],
                order: SEGMENT_ORDER,
            }));
            panels
        }
    }
}

fn check_inputs(eta: &RebasedIncrement, radii: &[f64], params: &HeatKernelParams, quad: &QuadratureConfig) -> Result<()> {
    quad.validate()?;
    if eta.dim() != params.dim() {
        return Err(invalid(format!(
            "increment has dimension {}, parameters have {}",
            eta.dim(),
            params.dim()
        )));
    }
    let t = params.horizon();
    if eta.s0() < t * (1.0 - 1e-12) {
        return Err(Error::OutOfDomain {
            t: t - eta.s0(),
            horizon: t,
        });
    }
    if radii.iter().any(|&r| !(r > 0.0 && r.is_finite())) {
        return Err(invalid("radii must be positive"));
    }
    Ok(())
}

/// Integrates `s ↦ P(|Y_s| ≤ r_i)` over `panels` for every radius.
fn integrate_over(
    eta: &RebasedIncrement,
    radii: &[f64],
    panels: &[Panel],
    params: &HeatKernelParams,
    quad: &QuadratureConfig,
) -> Result<Vec<MassEstimate>> {
    let ball = BallProbability::new(params.dim(), quad)?;
    let mut order: Vec<usize> = (0..radii.len()).collect();
    order.sort_by(|&i, &j| radii[i].total_cmp(&radii[j]));
    let sorted: Vec<f64> = order.iter().map(|&i| radii[i]).collect();
    let failure: OnceLock<Error> = OnceLock::new();
    let dim = eta.dim();

    let integrand = |s: f64, out: &mut [f64]| {
        let d = match eta.profile() {
            Profile::Zero => 0.0,
            Profile::Power { c, alpha, .. } => c * s.powf(*alpha),
            Profile::Piecewise { .. } => {
                let mut p = [0.0; 8];
                let mut heap;
                let buf: &mut [f64] = if dim <= 8 {
                    &mut p[..dim]
                } else {
                    heap = vec![0.0; dim];
                    &mut heap
                };
                eta.eval_into(s.min(eta.s0()), buf);
                buf.iter().map(|v| v * v).sum::<f64>().sqrt()
            }
        };
        let sigma = (2.0 * s).sqrt();
        let scaled: Vec<f64> = sorted.iter().map(|r| r / sigma).collect();
        let mut vals = vec![0.0; scaled.len()];
        if let Err(e) = ball.cdf_sorted(&scaled, d / sigma, &mut vals) {
            let _ = failure.set(e);
        }
        for (k, &i) in order.iter().enumerate() {
            out[i] = vals[k];
        }
    };
    let mut orders: Vec<usize> = panels.iter().map(|p| p.order).collect();
    orders.sort_unstable();
    orders.dedup();
    let mut total = vec![MassEstimate { value: 0.0, error: 0.0 }; radii.len()];
    for order in orders {
        let rule = GaussLegendre::new(order);
        let span: Vec<(f64, f64)> = panels.iter().filter(|p| p.order == order).map(|p| (p.a, p.b)).collect();
        let est = integrate_panels(&rule, &span, radii.len(), &integrand, quad.tolerance())?;
        for (m, (v, e)) in total.iter_mut().zip(est.value.iter().zip(&est.error)) {
            m.value += v;
            m.error += e;
        }
    }
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    Ok(total)
}

/// `∫_{B_r(ξ(T))} F(x, T) dx` for each radius; `eta` must cover `[0, T]`.
pub fn singular_mass_curve(
    eta: &RebasedIncrement,
    radii: &[f64],
    params: &HeatKernelParams,
    quad: &QuadratureConfig,
) -> Result<Vec<MassEstimate>> {
    check_inputs(eta, radii, params, quad)?;
    let panels = mass_panels(eta, params.horizon(), radii, quad);
    integrate_over(eta, radii, &panels, params, quad)
}

/// `∫_{B_r(ξ(T))} F(x, T) dx`.
pub fn singular_mass(
    eta: &RebasedIncrement,
    r: f64,
    params: &HeatKernelParams,
    quad: &QuadratureConfig,
) -> Result<MassEstimate> {
    Ok(singular_mass_curve(eta, &[r], params, quad)?[0])
}

/// Diagnostic split of [`singular_mass`] at `s0` and at the occupation set of radius `2r`.
pub fn singular_mass_split(
    eta: &RebasedIncrement,
    r: f64,
    s0: f64,
    params: &HeatKernelParams,
    quad: &QuadratureConfig,
) -> Result<MassSplit> {
    check_inputs(eta, &[r], params, quad)?;
    let t = params.horizon();
    if !(s0 > 0.0 && s0 <= t) {
        return Err(invalid(format!("s0 must lie in (0, {t}], got {s0}")));
    }
    let occupied: Vec<(f64, f64)> = occupation_intervals(eta, 2.0 * r)
        .into_iter()
        .filter(|&(a, _)| a < s0)
        .map(|(a, b)| (a, b.min(s0)))
        .collect();
    let mut breaks: Vec<f64> = occupied.iter().flat_map(|&(a, b)| [a, b]).collect();
    breaks.push(s0);
    breaks.sort_by(|a, b| a.total_cmp(b));
    let panels = split_at(mass_panels(eta, t, &[r], quad), &breaks);

    let inside = |m: f64| occupied.iter().any(|&(a, b)| m >= a && m <= b);
    let (mut p1, mut p2, mut p3) = (Vec::new(), Vec::new(), Vec::new());
    for p in panels {
        let m = 0.5 * (p.a + p.b);
        if m > s0 {
            p1.push(p);
        } else if inside(m) {
            p3.push(p);
        } else {
            p2.push(p);
        }
    }
    let part = |ps: &[Panel]| -> Result<f64> {
        if ps.is_empty() {
            Ok(0.0)
        } else {
            Ok(integrate_over(eta, &[r], ps, params, quad)?[0].value)
        }
    };
    Ok(MassSplit {
        i1: part(&p1)?,
        i2: part(&p2)?,
        i3: part(&p3)?,
    })
}
