//! Heat kernel, ball masses and the weak-form residual of the moving-source solution.
//!
//! The solution is `u(x, T) = ∫ G(x, y, T) u₀(y) dy + F(x, T)`; the first term
//! is the background and `F` the source term carrying the singularity.

mod ball;
mod kernel;
mod singular;
mod weak;

use serde::{Deserialize, Serialize};

pub use ball::{gaussian_ball_mass, BallProbability};
pub use kernel::{heat_kernel, pointwise_f};
pub use singular::{singular_mass, singular_mass_curve, singular_mass_split, MassEstimate, MassSplit};
pub use weak::{weak_residual, BumpFunction, ResidualPart, WeakResidual};

use crate::error::{invalid, Error, Result};
use crate::paths::SingularTrajectory;
use crate::quadrature::QuadratureConfig;

/// Space dimension and time horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeatKernelParams {
    dim: usize,
    horizon: f64,
}

impl HeatKernelParams {
    pub fn new(dim: usize, horizon: f64) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dimension must be at least 1"));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(invalid(format!("horizon must be positive, got {horizon}")));
        }
        Ok(Self { dim, horizon })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// The removability results concern `N ≥ 3`; lower dimensions are computed but flagged.
    pub fn in_theory_range(&self) -> bool {
        self.dim >= 3
    }
}

/// Initial data `u₀`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum InitialData {
    Constant { value: f64 },
    /// `amplitude · exp(−|y − center|² / (2 width²))`.
    GaussianBump {
        amplitude: f64,
        width: f64,
        center: Vec<f64>,
    },
}

impl InitialData {
    fn validate(&self, dim: usize) -> Result<()> {
        match self {
            Self::Constant { value } if *value > 0.0 && value.is_finite() => Ok(()),
            Self::Constant { value } => Err(Error::UnsupportedInitialData(format!(
                "constant data must be positive, got {value}"
            ))),
            Self::GaussianBump {
                amplitude,
                width,
                center,
            } => {
                if !(*amplitude > 0.0 && *width > 0.0 && amplitude.is_finite() && width.is_finite()) {
                    return Err(Error::UnsupportedInitialData(
                        "bump amplitude and width must be positive".into(),
                    ));
                }
                if center.len() != dim {
                    return Err(Error::UnsupportedInitialData(format!(
                        "bump center has dimension {}, expected {dim}",
                        center.len()
                    )));
                }
                Ok(())
            }
        }
    }
}

/// Volume of the unit ball in `R^N`.
pub fn unit_ball_volume(dim: usize) -> f64 {
    match dim {
        0 => 1.0,
        1 => 2.0,
        _ => 2.0 * std::f64::consts::PI / dim as f64 * unit_ball_volume(dim - 2),
    }
}

/// `∫_{B_r(center)} ∫ G(x, y, T) u₀(y) dy dx`.
///
/// Constant data give `c ω_N r^N`. A Gaussian bump stays Gaussian under the
/// heat flow, so its mass is a ball probability with variance `width² + 2T`.
pub fn background_mass(
    u0: &InitialData,
    r: f64,
    params: &HeatKernelParams,
    center: &[f64],
    quad: &QuadratureConfig,
) -> Result<f64> {
    let dim = params.dim();
    u0.validate(dim)?;
    if center.len() != dim {
        return Err(invalid("ball center dimension does not match"));
    }
    if !(r > 0.0 && r.is_finite()) {
        return Err(invalid(format!("radius must be positive, got {r}")));
    }
    match u0 {
        InitialData::Constant { value } => Ok(value * unit_ball_volume(dim) * r.powi(dim as i32)),
        InitialData::GaussianBump {
            amplitude,
            width,
            center: y0,
        } => {
            let w2 = width * width;
            let d = center
                .iter()
                .zip(y0)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            let total = amplitude * (2.0 * std::f64::consts::PI * w2).powf(dim as f64 / 2.0);
            let s_eff = 0.5 * (w2 + 2.0 * params.horizon());
            Ok(total * BallProbability::new(dim, quad)?.probability(r, d, s_eff)?)
        }
    }
}

/// Ball masses `M_sing`, `M_bg` and `M_total` on a radius grid at time `T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BallMassCurve {
    pub radii: Vec<f64>,
    pub m_sing: Vec<f64>,
    pub m_bg: Vec<f64>,
    pub m_total: Vec<f64>,
    pub err_est: Vec<f64>,
    pub horizon: f64,
    pub dim: usize,
    pub u0: InitialData,
    pub path_id: Option<String>,
}

/// Mass curve of `u = background + F` on balls centered at `ξ(T)`.
pub fn total_mass_curve(
    traj: &SingularTrajectory,
    u0: &InitialData,
    radii: &[f64],
    params: &HeatKernelParams,
    quad: &QuadratureConfig,
) -> Result<BallMassCurve> {
    if traj.dim() != params.dim() {
        return Err(invalid("trajectory dimension does not match the parameters"));
    }
    if (traj.horizon() - params.horizon()).abs() > 1e-12 * params.horizon() {
        return Err(invalid(format!(
            "trajectory horizon {} differs from T = {}",
            traj.horizon(),
            params.horizon()
        )));
    }
    u0.validate(params.dim())?;
    let eta = traj.rebase(params.horizon())?;
    let center = traj.eval(params.horizon())?;
    let sing = singular_mass_curve(&eta, radii, params, quad)?;
    let m_bg = radii
        .iter()
        .map(|&r| background_mass(u0, r, params, &center, quad))
        .collect::<Result<Vec<_>>>()?;
    let m_sing: Vec<f64> = sing.iter().map(|m| m.value).collect();
    let err_est: Vec<f64> = sing.iter().map(|m| m.error).collect();
    let m_total = m_sing.iter().zip(&m_bg).map(|(a, b)| a + b).collect();
    Ok(BallMassCurve {
        radii: radii.to_vec(),
        m_sing,
        m_bg,
        m_total,
        err_est,
        horizon: params.horizon(),
        dim: params.dim(),
        u0: u0.clone(),
        path_id: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_ball_volumes() {
        use std::f64::consts::PI;
        assert_eq!(unit_ball_volume(1), 2.0);
        assert!((unit_ball_volume(2) - PI).abs() < 1e-15);
        assert!((unit_ball_volume(3) - 4.0 * PI / 3.0).abs() < 1e-15);
        assert!((unit_ball_volume(4) - PI * PI / 2.0).abs() < 1e-14);
    }

    #[test]
    fn constant_background_examples() {
        let params = HeatKernelParams::new(3, 1.0).unwrap();
        let quad = QuadratureConfig::default();
        let one = background_mass(&InitialData::Constant { value: 1.0 }, 0.1, &params, &[0.0; 3], &quad).unwrap();
        assert!((one - 4.0 / 3.0 * std::f64::consts::PI * 1e-3).abs() < 1e-18);
        let two = background_mass(&InitialData::Constant { value: 2.0 }, 0.1, &params, &[0.0; 3], &quad).unwrap();
        assert_eq!(two, 2.0 * one);
        assert!(matches!(
            background_mass(&InitialData::Constant { value: 0.0 }, 0.1, &params, &[0.0; 3], &quad),
            Err(Error::UnsupportedInitialData(_))
        ));
    }

    #[test]
    fn params_validation() {
        assert!(HeatKernelParams::new(0, 1.0).is_err());
        assert!(HeatKernelParams::new(3, 0.0).is_err());
        assert!(!HeatKernelParams::new(2, 1.0).unwrap().in_theory_range());
    }
}
