//! Singular trajectories and their rebased increments.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fbm::SamplePath;

/// Shape of a trajectory on `[0, T]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TrajectoryKind {
    Constant {
        point: Vec<f64>,
    },
    /// `ξ(t) = anchor + c (T − t)^α e` with `e` a unit vector.
    Holder {
        anchor: Vec<f64>,
        c: f64,
        alpha: f64,
        direction: Vec<f64>,
    },
    /// Linear interpolation between the nodes of a sampled path.
    Sampled { path: SamplePath },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularTrajectory {
    kind: TrajectoryKind,
    horizon: f64,
}

fn check_horizon(horizon: f64) -> Result<()> {
    if horizon > 0.0 && horizon.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("horizon must be positive, got {horizon}")))
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

impl SingularTrajectory {
    pub fn constant(point: Vec<f64>, horizon: f64) -> Result<Self> {
        check_horizon(horizon)?;
        if point.is_empty() {
            return Err(invalid("point must have at least one coordinate"));
        }
        Ok(Self {
            kind: TrajectoryKind::Constant { point },
            horizon,
        })
    }

    /// `direction` is normalized; it must be nonzero and match `anchor` in length.
    pub fn holder(
        anchor: Vec<f64>,
        c: f64,
        alpha: f64,
        direction: Vec<f64>,
        horizon: f64,
    ) -> Result<Self> {
        check_horizon(horizon)?;
        if anchor.is_empty() || anchor.len() != direction.len() {
            return Err(invalid("anchor and direction must share a nonzero dimension"));
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(invalid(format!("Holder constant must be positive, got {c}")));
        }
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(invalid(format!("Holder exponent must lie in (0, 1], got {alpha}")));
        }
        let len = norm(&direction);
        if !(len > 0.0 && len.is_finite()) {
            return Err(invalid("direction must be a nonzero vector"));
        }
        let direction = direction.iter().map(|x| x / len).collect();
        Ok(Self {
            kind: TrajectoryKind::Holder {
                anchor,
                c,
                alpha,
                direction,
            },
            horizon,
        })
    }

    pub fn sampled(path: SamplePath) -> Self {
        let horizon = path.horizon();
        Self {
            kind: TrajectoryKind::Sampled { path },
            horizon,
        }
    }

    pub fn kind(&self) -> &TrajectoryKind {
        &self.kind
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            TrajectoryKind::Constant { point } => point.len(),
            TrajectoryKind::Holder { anchor, .. } => anchor.len(),
            TrajectoryKind::Sampled { path } => path.dim(),
        }
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if (0.0..=self.horizon).contains(&t) {
            Ok(())
        } else {
            Err(Error::OutOfDomain {
                t,
                horizon: self.horizon,
            })
        }
    }

    /// `ξ(t)` for `t ∈ [0, T]`.
    pub fn eval(&self, t: f64) -> Result<Vec<f64>> {
        self.check_time(t)?;
        Ok(match &self.kind {
            TrajectoryKind::Constant { point } => point.clone(),
            TrajectoryKind::Holder {
                anchor,
                c,
                alpha,
                direction,
            } => {
                let m = c * (self.horizon - t).powf(*alpha);
                anchor
                    .iter()
                    .zip(direction)
                    .map(|(a, e)| a + m * e)
                    .collect()
            }
            TrajectoryKind::Sampled { path } => interpolate(path, t),
        })
    }

    /// `η(s) = ξ(T − s) − ξ(T)` on `[0, s0]`.
    pub fn rebase(&self, s0: f64) -> Result<RebasedIncrement> {
        if !(s0 > 0.0) {
            return Err(invalid(format!("s0 must be positive, got {s0}")));
        }
        self.check_time(self.horizon - s0)?;
        let dim = self.dim();
        let profile = match &self.kind {
            TrajectoryKind::Constant { .. } => Profile::Zero,
            TrajectoryKind::Holder {
                c,
                alpha,
                direction,
                ..
            } => Profile::Power {
                c: *c,
                alpha: *alpha,
                direction: direction.clone(),
            },
            TrajectoryKind::Sampled { path } => {
                let n = path.steps();
                let dt = path.dt();
                let end = path.node(n);
                let mut s = Vec::new();
                let mut values = Vec::new();
                for j in 0..=n {
                    let sj = j as f64 * dt;
                    if j > 0 && sj >= s0 - 1e-9 * dt {
                        break;
                    }
                    s.push(sj);
                    values.extend(path.node(n - j).iter().zip(end).map(|(x, e)| x - e));
                }
                let last = interpolate(path, self.horizon - s0);
                s.push(s0);
                values.extend(last.iter().zip(end).map(|(x, e)| x - e));
                // The first node is exactly zero by construction.
                values[..dim].iter_mut().for_each(|v| *v = 0.0);
                Profile::Piecewise { dt, s, values }
            }
        };
        Ok(RebasedIncrement { dim, s0, profile })
    }
}

fn interpolate(path: &SamplePath, t: f64) -> Vec<f64> {
    let n = path.steps();
    let x = t / path.dt();
    let k = (x.floor() as usize).min(n);
    if k == n || x == k as f64 {
        return path.node(k).to_vec();
    }
    let w = x - k as f64;
    path.node(k)
        .iter()
        .zip(path.node(k + 1))
        .map(|(a, b)| a + w * (b - a))
        .collect()
}

/// Representation of `η` on `[0, s0]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Profile {
    /// `η ≡ 0`.
    Zero,
    /// `η(s) = c s^α e`.
    Power {
        c: f64,
        alpha: f64,
        direction: Vec<f64>,
    },
    /// Linear between nodes `s[0] = 0 < … < s[last] = s0`; `values` is row-major.
    Piecewise {
        dt: f64,
        s: Vec<f64>,
        values: Vec<f64>,
    },
}

/// `s ↦ η(s) = ξ(T − s) − ξ(T)` on `[0, s0]`, with `η(0) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RebasedIncrement {
    dim: usize,
    s0: f64,
    profile: Profile,
}

impl RebasedIncrement {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn s0(&self) -> f64 {
        self.s0
    }

    pub fn profile(&self) -> &Profile {
        &self.profile
    }

    /// Grid spacing of a sampled increment.
    pub fn dt(&self) -> Option<f64> {
        match &self.profile {
            Profile::Piecewise { dt, .. } => Some(*dt),
            _ => None,
        }
    }

    fn check(&self, s: f64) -> Result<()> {
        if (0.0..=self.s0).contains(&s) {
            Ok(())
        } else {
            Err(Error::OutOfDomain { t: s, horizon: self.s0 })
        }
    }

    pub fn eval(&self, s: f64) -> Result<Vec<f64>> {
        self.check(s)?;
        let mut out = vec![0.0; self.dim];
        self.eval_into(s, &mut out);
        Ok(out)
    }

    /// `|η(s)|`.
    pub fn norm(&self, s: f64) -> Result<f64> {
        self.check(s)?;
        Ok(match &self.profile {
            Profile::Zero => 0.0,
            Profile::Power { c, alpha, .. } => c * s.powf(*alpha),
            Profile::Piecewise { .. } => {
                let mut buf = vec![0.0; self.dim];
                self.eval_into(s, &mut buf);
                norm(&buf)
            }
        })
    }

    /// Unchecked evaluation; `s` must lie in `[0, s0]`.
    pub(crate) fn eval_into(&self, s: f64, out: &mut [f64]) {
        match &self.profile {
            Profile::Zero => out.iter_mut().for_each(|v| *v = 0.0),
            Profile::Power { c, alpha, direction } => {
                let m = c * s.powf(*alpha);
                out.iter_mut().zip(direction).for_each(|(v, e)| *v = m * e);
            }
            Profile::Piecewise { dt, s: nodes, values } => {
                let last = nodes.len() - 1;
                let mut k = ((s / dt).floor() as usize).min(last - 1);
                // The final segment may be shorter than dt.
                while k > 0 && nodes[k] > s {
                    k -= 1;
                }
                while k + 1 < last && nodes[k + 1] < s {
                    k += 1;
                }
                let (a, b) = (nodes[k], nodes[k + 1]);
                let w = ((s - a) / (b - a)).clamp(0.0, 1.0);
                let d = self.dim;
                for (i, v) in out.iter_mut().enumerate() {
                    let x0 = values[k * d + i];
                    let x1 = values[(k + 1) * d + i];
                    *v = x0 + w * (x1 - x0);
                }
            }
        }
    }

    /// `max_{s ∈ [0, s0]} |η(s)|`.
    pub fn max_excursion(&self) -> f64 {
        match &self.profile {
            Profile::Zero => 0.0,
            Profile::Power { c, alpha, .. } => c * self.s0.powf(*alpha),
            Profile::Piecewise { values, .. } => values
                .chunks_exact(self.dim)
                .map(norm)
                .fold(0.0, f64::max),
        }
    }

    /// Node times and values of a piecewise-linear increment.
    pub fn nodes(&self) -> Option<(&[f64], &[f64])> {
        match &self.profile {
            Profile::Piecewise { s, values, .. } => Some((s, values)),
            _ => None,
        }
    }
}
