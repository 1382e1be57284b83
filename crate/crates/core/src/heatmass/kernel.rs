//! Heat kernel and the Duhamel density `F(x, t)` of the moving source.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::error::{invalid, Error, Result};
use crate::paths::{SingularTrajectory, TrajectoryKind};
use crate::quadrature::{integrate_scalar, GaussLegendre, QuadratureConfig};

fn dist2(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// `G(x, y, t) = (4πt)^{−N/2} exp(−|x − y|² / (4t))`.
pub fn heat_kernel(x: &[f64], y: &[f64], t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::NonpositiveTime(t));
    }
    if x.len() != y.len() || x.is_empty() {
        return Err(invalid("points must share a nonzero dimension"));
    }
    Ok(kernel_from_dist2(dist2(x, y), t, x.len()))
}

pub(crate) fn kernel_from_dist2(q: f64, t: f64, dim: usize) -> f64 {
    (-q / (4.0 * t) - 0.5 * dim as f64 * (4.0 * PI * t).ln()).exp()
}

/// Panels in `s = t − t' ∈ [0, t]`: geometric towards `s = 0`, split at the
/// grid nodes of a sampled trajectory.
pub(crate) fn source_panels(traj: &SingularTrajectory, t: f64, quad: &QuadratureConfig) -> Vec<(f64, f64)> {
    match traj.kind() {
        TrajectoryKind::Sampled { path } => {
            let dt = path.dt();
            // Nodes t_k ≤ t map to s = t − t_k.
            let k_max = ((t / dt) * (1.0 + 1e-12)).floor() as usize;
            let mut breaks: Vec<f64> = (0..=k_max.min(path.steps()))
                .map(|k| t - k as f64 * dt)
                .filter(|&s| s > 0.0)
                .collect();
            breaks.push(0.0);
            breaks.push(t);
            breaks.sort_by(|a, b| a.total_cmp(b));
            breaks.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * dt);
            let first = breaks[1];
            let mut panels = quad.geometric_panels(0.0, first);
            panels.extend(breaks[1..].windows(2).map(|w| (w[0], w[1])));
            panels
        }
        _ => quad.geometric_panels(0.0, t),
    }
}

/// `F(x, t) = ∫_0^t G(x, ξ(t'), t − t') dt'` for `t ∈ (0, T]`.
pub fn pointwise_f(x: &[f64], traj: &SingularTrajectory, t: f64, quad: &QuadratureConfig) -> Result<(f64, f64)> {
    quad.validate()?;
    if x.len() != traj.dim() {
        return Err(invalid("evaluation point dimension does not match the trajectory"));
    }
    if !(t > 0.0) {
        return Err(Error::NonpositiveTime(t));
    }
    let center = traj.eval(t)?;
    if dist2(x, &center) == 0.0 {
        return Err(Error::AtSingularPoint);
    }
    let dim = traj.dim();
    let rule = GaussLegendre::new(quad.order);
    let panels = source_panels(traj, t, quad);
    let failure: OnceLock<Error> = OnceLock::new();
    let integrand = |s: f64| match traj.eval(t - s) {
        Ok(p) => kernel_from_dist2(dist2(x, &p), s, dim),
        Err(e) => {
            let _ = failure.set(e);
            0.0
        }
    };
    let out = integrate_scalar(&rule, &panels, integrand, quad.tolerance())?;
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_examples() {
        let g = heat_kernel(&[0.3, 0.1, -2.0], &[0.3, 0.1, -2.0], 0.5).unwrap();
        assert!((g - (2.0 * PI).powf(-1.5)).abs() < 1e-15);
        let g = heat_kernel(&[1.0, 0.0, 0.0], &[0.0; 3], 0.25).unwrap();
        let want = PI.powf(-1.5) * (-1.0f64).exp();
        assert!((g - want).abs() < 1e-15 * want);
        assert!(matches!(heat_kernel(&[0.0], &[0.0], 0.0), Err(Error::NonpositiveTime(_))));
    }

    #[test]
    fn kernel_is_normalized_in_one_and_three_dimensions() {
        let rule = GaussLegendre::new(40);
        let t = 0.3;
        let one_d = rule.integrate(-8.0, 8.0, |y| heat_kernel(&[0.2], &[y], t).unwrap());
        assert!((one_d - 1.0).abs() < 1e-10);
        // Radial integral 4π ∫ ρ² G dρ in three dimensions.
        let three_d = rule.integrate(0.0, 8.0, |rho| {
            4.0 * PI * rho * rho * heat_kernel(&[rho, 0.0, 0.0], &[0.0; 3], t).unwrap()
        });
        assert!((three_d - 1.0).abs() < 1e-8);
    }

    #[test]
    fn singular_point_is_rejected() {
        let traj = SingularTrajectory::constant(vec![0.5, 0.0, 0.0], 1.0).unwrap();
        let quad = QuadratureConfig::default();
        assert!(matches!(
            pointwise_f(&[0.5, 0.0, 0.0], &traj, 1.0, &quad),
            Err(Error::AtSingularPoint)
        ));
    }
}
