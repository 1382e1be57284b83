//! First exit time, occupation time and the occupation tail integral.
//!
//! On a piecewise-linear increment, `|η|²` is a convex quadratic on every
//! segment, so the set `{|η| ≤ r}` meets each segment in one interval whose
//! endpoints are roots of that quadratic. Exit and occupation times are
//! therefore exact for the interpolant.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::paths::{Profile, RebasedIncrement};

/// Relative tolerance used to match radii between grids.
pub const RADIUS_MATCH_TOL: f64 = 1e-9;

/// Geometric radii `r_max q^j`, `j = 0..m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusGrid {
    r_max: f64,
    ratio: f64,
    radii: Vec<f64>,
}

impl RadiusGrid {
    pub const MIN_LEN: usize = 8;

    pub fn new(r_max: f64, ratio: f64, count: usize) -> Result<Self> {
        if !(r_max > 0.0 && r_max.is_finite()) {
            return Err(invalid(format!("r_max must be positive, got {r_max}")));
        }
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(invalid(format!("grid ratio must lie in (0, 1), got {ratio}")));
        }
        if count < Self::MIN_LEN {
            return Err(invalid(format!(
                "radius grid needs at least {} radii, got {count}",
                Self::MIN_LEN
            )));
        }
        let radii = (0..count).map(|j| r_max * ratio.powi(j as i32)).collect();
        Ok(Self {
            r_max,
            ratio,
            radii,
        })
    }

    /// `count` radii from `r_max` down to `r_min` inclusive.
    pub fn spanning(r_max: f64, r_min: f64, count: usize) -> Result<Self> {
        if !(r_min > 0.0 && r_min < r_max) || count < 2 {
            return Err(invalid(format!("need 0 < r_min < r_max, got [{r_min}, {r_max}]")));
        }
        let ratio = (r_min / r_max).powf(1.0 / (count - 1) as f64);
        let mut grid = Self::new(r_max, ratio, count)?;
        *grid.radii.last_mut().unwrap() = r_min;
        Ok(grid)
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn len(&self) -> usize {
        self.radii.len()
    }

    pub fn is_empty(&self) -> bool {
        self.radii.is_empty()
    }
}

/// Index of `r` in `radii` up to [`RADIUS_MATCH_TOL`].
pub fn match_radius(radii: &[f64], r: f64) -> Option<usize> {
    radii
        .iter()
        .position(|&x| (x - r).abs() <= RADIUS_MATCH_TOL * x.abs().max(r.abs()))
}

/// `(σ(r), τ(r))` tabulated on a radius grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitOccupationCurve {
    pub radii: Vec<f64>,
    pub sigma: Vec<f64>,
    pub tau: Vec<f64>,
    pub s0: f64,
    pub max_excursion: f64,
}

impl ExitOccupationCurve {
    pub fn compute(eta: &RebasedIncrement, radii: &[f64]) -> Result<Self> {
        if radii.iter().any(|&r| !(r > 0.0)) {
            return Err(invalid("radii must be positive"));
        }
        Ok(Self {
            radii: radii.to_vec(),
            sigma: radii.iter().map(|&r| first_exit_time(eta, r)).collect(),
            tau: radii.iter().map(|&r| occupation_time(eta, r)).collect(),
            s0: eta.s0(),
            max_excursion: eta.max_excursion(),
        })
    }

    pub fn sigma_at(&self, r: f64) -> Option<f64> {
        match_radius(&self.radii, r).map(|i| self.sigma[i])
    }

    pub fn tau_at(&self, r: f64) -> Option<f64> {
        match_radius(&self.radii, r).map(|i| self.tau[i])
    }
}

/// Sub-interval of `u ∈ [0, 1]` on which `|a + u (b − a)| ≤ r`, if any.
fn segment_sublevel(a: &[f64], b: &[f64], r: f64) -> Option<(f64, f64)> {
    let r2 = r * r;
    let (mut qa, mut qd, mut ad, mut qb) = (0.0, 0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let d = y - x;
        qa += x * x;
        qb += y * y;
        qd += d * d;
        ad += x * d;
    }
    let in_a = qa <= r2;
    let in_b = qb <= r2;
    if in_a && in_b {
        return Some((0.0, 1.0));
    }
    if qd == 0.0 {
        return None;
    }
    // Roots of qd u² + 2 ad u + (qa − r²) = 0.
    let c = qa - r2;
    let disc = ad * ad - qd * c;
    if disc < 0.0 {
        return None;
    }
    let q = -(ad + ad.signum() * disc.sqrt());
    let (mut lo, mut hi) = if q == 0.0 {
        (0.0, 0.0)
    } else {
        let u1 = q / qd;
        let u2 = c / q;
        (u1.min(u2), u1.max(u2))
    };
    if in_a {
        lo = 0.0;
    }
    if in_b {
        hi = 1.0;
    }
    let lo = lo.max(0.0);
    let hi = hi.min(1.0);
    (lo <= hi && !(lo == hi && !in_a && !in_b)).then_some((lo, hi))
}

/// Maximal intervals of `{s ∈ [0, s0] : |η(s)| ≤ r}`, in increasing order.
pub fn occupation_intervals(eta: &RebasedIncrement, r: f64) -> Vec<(f64, f64)> {
    let s0 = eta.s0();
    match eta.profile() {
        Profile::Zero => vec![(0.0, s0)],
        Profile::Power { c, alpha, .. } => vec![(0.0, power_crossing(*c, *alpha, r, s0))],
        Profile::Piecewise { s, values, .. } => {
            let d = eta.dim();
            let mut out: Vec<(f64, f64)> = Vec::new();
            for k in 0..s.len() - 1 {
                let a = &values[k * d..(k + 1) * d];
                let b = &values[(k + 1) * d..(k + 2) * d];
                if let Some((lo, hi)) = segment_sublevel(a, b, r) {
                    let h = s[k + 1] - s[k];
                    let start = if lo == 0.0 { s[k] } else { s[k] + lo * h };
                    let end = if hi == 1.0 { s[k + 1] } else { s[k] + hi * h };
                    match out.last_mut() {
                        Some(last) if last.1 >= start => last.1 = last.1.max(end),
                        _ => out.push((start, end)),
                    }
                }
            }
            out
        }
    }
}

fn power_crossing(c: f64, alpha: f64, r: f64, s0: f64) -> f64 {
    (r / c).powf(1.0 / alpha).min(s0)
}

/// `σ(r) = inf {s ∈ [0, s0] : |η(s)| > r}`, or `s0` if the ball is never left.
pub fn first_exit_time(eta: &RebasedIncrement, r: f64) -> f64 {
    let s0 = eta.s0();
    match eta.profile() {
        Profile::Zero => s0,
        Profile::Power { c, alpha, .. } => power_crossing(*c, *alpha, r, s0),
        Profile::Piecewise { s, values, .. } => {
            let d = eta.dim();
            for k in 0..s.len() - 1 {
                let a = &values[k * d..(k + 1) * d];
                let b = &values[(k + 1) * d..(k + 2) * d];
                match segment_sublevel(a, b, r) {
                    Some((_, 1.0)) => continue,
                    Some((_, hi)) => return s[k] + hi * (s[k + 1] - s[k]),
                    None => return s[k],
                }
            }
            s0
        }
    }
}

/// `τ(r)`, the measure of `{s ∈ [0, s0] : |η(s)| ≤ r}`.
pub fn occupation_time(eta: &RebasedIncrement, r: f64) -> f64 {
    if r >= eta.max_excursion() {
        return eta.s0();
    }
    occupation_intervals(eta, r)
        .iter()
        .map(|(a, b)| b - a)
        .sum::<f64>()
        .min(eta.s0())
}

/// `∫_a^b l^{−p} dl`.
fn power_integral(a: f64, b: f64, p: i32) -> f64 {
    if p == 1 {
        (b / a).ln()
    } else {
        let e = 1 - p;
        (b.powi(e) - a.powi(e)) / e as f64
    }
}

/// `r^N [∫_r^{c0} τ(l) l^{−N−1} dl + τ(c0) c0^{−N} / N]`.
///
/// `τ` is linear between tabulated radii, equals `s0` from the maximal
/// excursion on, and is integrated against the exact weight on each panel.
pub fn tail_integral(curve: &ExitOccupationCurve, r: f64, dim: usize, c0: f64) -> Result<f64> {
    if dim == 0 {
        return Err(invalid("dimension must be at least 1"));
    }
    if !(r > 0.0 && r < c0) {
        return Err(invalid(format!("need 0 < r < c0, got r = {r}, c0 = {c0}")));
    }
    if c0 < curve.max_excursion {
        return Err(invalid(format!(
            "c0 = {c0} is below the maximal excursion {}",
            curve.max_excursion
        )));
    }
    let lo = r * (1.0 - RADIUS_MATCH_TOL);
    let mut table: Vec<(f64, f64)> = curve
        .radii
        .iter()
        .zip(&curve.tau)
        .filter(|(&l, _)| l >= lo && l <= c0)
        .map(|(&l, &t)| (l, t))
        .collect();
    let found = table.len();
    if found < 4 {
        return Err(Error::GridTooCoarse {
            found,
            needed: 4,
            lo: r,
            hi: c0,
        });
    }
    if match_radius(&curve.radii, r).is_none() {
        table.push((r, interpolate_tau(curve, r)?));
    }
    if curve.max_excursion > r {
        table.push((curve.max_excursion, curve.s0));
    }
    table.push((c0, curve.s0));
    table.sort_by(|x, y| x.0.total_cmp(&y.0));
    table.dedup_by(|x, y| (x.0 - y.0).abs() <= RADIUS_MATCH_TOL * y.0);
    table.retain(|&(l, _)| l >= lo);
    // The smallest entry stands for r itself.
    table[0].0 = r;

    let n = dim as i32;
    let mut acc = 0.0;
    for w in table.windows(2) {
        let ((la, ta), (lb, tb)) = (w[0], w[1]);
        let slope = (tb - ta) / (lb - la);
        let m0 = power_integral(la, lb, n + 1);
        let m1 = power_integral(la, lb, n) - la * m0;
        acc += ta * m0 + slope * m1;
    }
    let tau_c0 = table.last().unwrap().1;
    acc += tau_c0 * c0.powi(-n) / dim as f64;
    Ok(r.powi(n) * acc)
}

fn interpolate_tau(curve: &ExitOccupationCurve, r: f64) -> Result<f64> {
    let mut pts: Vec<(f64, f64)> = curve.radii.iter().copied().zip(curve.tau.iter().copied()).collect();
    pts.sort_by(|x, y| x.0.total_cmp(&y.0));
    let (first, last) = (pts[0].0, pts[pts.len() - 1].0);
    if r < first || r > last {
        return Err(Error::GridTooCoarse {
            found: 0,
            needed: 1,
            lo: r,
            hi: r,
        });
    }
    let i = pts.partition_point(|p| p.0 < r).max(1);
    let ((la, ta), (lb, tb)) = (pts[i - 1], pts[i]);
    Ok(ta + (tb - ta) * (r - la) / (lb - la))
}
