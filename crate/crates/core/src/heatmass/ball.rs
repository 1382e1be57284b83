//! Probability that an isotropic Gaussian lands in a centered ball.

use std::f64::consts::PI;

use crate::error::{invalid, Error, Result};
use crate::quadrature::{gauss_kronrod15, GaussLegendre, QuadratureConfig};

/// Probability mass below which radial panels are not refined further.
const ABS_FLOOR: f64 = 1e-30;

/// Number of standard deviations past which the ball probability is set to 0 or 1.
fn cutoff(dim: usize) -> f64 {
    9.0 + (dim as f64).sqrt()
}

/// Surface area of the unit sphere `S^k ⊂ R^{k+1}`.
fn sphere_area(k: usize) -> f64 {
    let h = (k as f64 + 1.0) / 2.0;
    2.0 * PI.powf(h) / libm::tgamma(h)
}

/// `P(|Y| ≤ r)` for `Y ~ N(d e, 2s I_N)`, evaluated by radial quadrature.
///
/// In units of `sqrt(2s)` the radial density of `|Y|` is
/// `C_N ρ^{N−1} exp(−(ρ−b)²/2) J_N(ρ b)` with
/// `J_N(z) = ∫_0^π exp(−z(1 − cos φ)) sin^{N−2} φ dφ`.
/// `J_3` is integrated exactly; other dimensions use Gauss–Legendre in `φ`.
/// Radial panels use the Gauss–Kronrod 7/15 pair and are halved until the
/// two estimates agree.
#[derive(Debug, Clone)]
pub struct BallProbability {
    dim: usize,
    radial_width: f64,
    angular: GaussLegendre,
    c_n: f64,
    k_cut: f64,
    rel_tol: f64,
    max_depth: usize,
}

impl BallProbability {
    pub fn new(dim: usize, quad: &QuadratureConfig) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dimension must be at least 1"));
        }
        quad.validate()?;
        let c_n = if dim >= 2 {
            sphere_area(dim - 2) / (2.0 * PI).powf(dim as f64 / 2.0)
        } else {
            0.0
        };
        Ok(Self {
            dim,
            radial_width: quad.radial_width,
            angular: GaussLegendre::new(quad.angular_order),
            c_n,
            k_cut: cutoff(dim),
            rel_tol: (quad.rel_tol * 1e-2).max(1e-13),
            max_depth: quad.max_depth,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Single-radius probability.
    pub fn probability(&self, r: f64, d: f64, s: f64) -> Result<f64> {
        check_args(r, d, s)?;
        let mut out = [0.0];
        self.probabilities(&[r], d, s, &mut out)?;
        Ok(out[0])
    }

    /// Probabilities for several radii given in any order.
    pub fn probabilities(&self, radii: &[f64], d: f64, s: f64, out: &mut [f64]) -> Result<()> {
        if !(d >= 0.0 && d.is_finite()) || !(s > 0.0 && s.is_finite()) {
            return Err(invalid(format!("need d >= 0 and s > 0, got d = {d}, s = {s}")));
        }
        if radii.iter().any(|&r| !(r > 0.0)) {
            return Err(invalid("radii must be positive"));
        }
        let sigma = (2.0 * s).sqrt();
        let mut order: Vec<usize> = (0..radii.len()).collect();
        order.sort_by(|&i, &j| radii[i].total_cmp(&radii[j]));
        let scaled: Vec<f64> = order.iter().map(|&i| radii[i] / sigma).collect();
        let mut sorted_out = vec![0.0; radii.len()];
        self.cdf_sorted(&scaled, d / sigma, &mut sorted_out)?;
        for (k, &i) in order.iter().enumerate() {
            out[i] = sorted_out[k];
        }
        Ok(())
    }

    /// Scaled CDF `P(|Z + b e| ≤ a_i)` for ascending `a`.
    pub(crate) fn cdf_sorted(&self, a: &[f64], b: f64, out: &mut [f64]) -> Result<()> {
        let k = self.k_cut;
        if self.dim == 1 {
            for (o, &ai) in out.iter_mut().zip(a) {
                *o = if ai - b >= k {
                    1.0
                } else if b - ai >= k {
                    0.0
                } else {
                    let sq = std::f64::consts::SQRT_2;
                    (0.5 * (libm::erfc((b - ai) / sq) - libm::erfc((ai + b) / sq))).clamp(0.0, 1.0)
                };
            }
            return Ok(());
        }
        let lo = (b - k).max(0.0);
        let hi = b + k;
        let mut pos = lo;
        let mut cum = 0.0;
        for (o, &ai) in out.iter_mut().zip(a) {
            if ai <= lo {
                *o = 0.0;
                continue;
            }
            if ai >= hi {
                *o = 1.0;
                continue;
            }
            while pos < ai {
                let next = (pos + self.radial_width).min(ai);
                cum += self.adapt(pos, next, b, 0)?;
                pos = next;
            }
            *o = cum.clamp(0.0, 1.0);
        }
        Ok(())
    }

    fn adapt(&self, lo: f64, hi: f64, bc: f64, depth: usize) -> Result<f64> {
        let (fine, coarse) = gauss_kronrod15(lo, hi, |x| self.density(x, bc));
        if (fine - coarse).abs() <= self.rel_tol * fine.abs() + ABS_FLOOR {
            return Ok(fine);
        }
        if depth >= self.max_depth {
            return Err(Error::ToleranceNotMet {
                rel_tol: self.rel_tol,
                context: format!("radial panel [{lo:e}, {hi:e}] at scaled offset {bc:e}"),
            });
        }
        let mid = 0.5 * (lo + hi);
        Ok(self.adapt(lo, mid, bc, depth + 1)? + self.adapt(mid, hi, bc, depth + 1)?)
    }

    /// Radial density at scaled radius `rho` for scaled center distance `b`.
    fn density(&self, rho: f64, b: f64) -> f64 {
        if rho <= 0.0 {
            return 0.0;
        }
        let gauss = (-0.5 * (rho - b) * (rho - b)).exp();
        let z = rho * b;
        match self.dim {
            3 => {
                let j = if z == 0.0 {
                    2.0
                } else if z < 0.5 {
                    -(-2.0 * z).exp_m1() / z
                } else {
                    (1.0 - (-2.0 * z).exp()) / z
                };
                self.c_n * rho * rho * gauss * j
            }
            _ => self.c_n * rho.powi(self.dim as i32 - 1) * gauss * self.angular_factor(z),
        }
    }

    fn angular_factor(&self, z: f64) -> f64 {
        let p = self.dim as i32 - 2;
        let phi_max = if z > 20.0 {
            (1.0 - 40.0 / z).acos()
        } else {
            PI
        };
        let mid = 0.5 * phi_max;
        let f = |phi: f64| (-z * (1.0 - phi.cos())).exp() * phi.sin().powi(p);
        self.angular.integrate(0.0, mid, f) + self.angular.integrate(mid, phi_max, f)
    }
}

fn check_args(r: f64, d: f64, s: f64) -> Result<()> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(invalid(format!("radius must be positive, got {r}")));
    }
    if !(d >= 0.0 && d.is_finite()) {
        return Err(invalid(format!("center distance must be nonnegative, got {d}")));
    }
    if !(s > 0.0 && s.is_finite()) {
        return Err(invalid(format!("time must be positive, got {s}")));
    }
    Ok(())
}

/// `P(|Y| ≤ r)` for `Y` Gaussian with mean at distance `d` and covariance `2s` per axis.
pub fn gaussian_ball_mass(r: f64, d: f64, s: f64, dim: usize) -> Result<f64> {
    let quad = QuadratureConfig {
        rel_tol: 1e-10,
        ..QuadratureConfig::default()
    };
    BallProbability::new(dim, &quad)?.probability(r, d, s)
}
