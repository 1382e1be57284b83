//! Exact sampling of fractional Gaussian noise and fractional Brownian motion.
//!
//! Increments are drawn by circulant embedding of the fGn autocovariance,
//! which is nonnegative definite for every `H` in `(0, 1)`; the sample
//! covariance is therefore exact up to floating point, not approximated.
//! Each scalar component uses its own seed derived from the path seed.

use rand_distr::StandardNormal;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fft::fft_in_place;
use crate::seeding::{derive_seed, rng_from_seed};

/// Relative tolerance on negative circulant eigenvalues before they count as
/// an invalid embedding rather than rounding noise.
pub const EIGENVALUE_TOLERANCE: f64 = 1e-9;

/// Hurst exponent `H` in `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct HurstExponent(f64);

impl HurstExponent {
    pub fn new(h: f64) -> Result<Self> {
        if h > 0.0 && h < 1.0 {
            Ok(Self(h))
        } else {
            Err(invalid(format!("Hurst exponent must lie in (0, 1), got {h}")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// The removability theory covers `H <= 1/2`; larger values are sampled
    /// but flagged by callers.
    pub fn in_theory_range(self) -> bool {
        self.0 <= 0.5
    }
}

impl TryFrom<f64> for HurstExponent {
    type Error = Error;
    fn try_from(h: f64) -> Result<Self> {
        Self::new(h)
    }
}

impl From<HurstExponent> for f64 {
    fn from(h: HurstExponent) -> f64 {
        h.0
    }
}

/// Sampling request for one fGn stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FgnSpec {
    pub hurst: HurstExponent,
    /// Number of increments; must be a power of two, at least 2.
    pub grid_len: usize,
    pub dt: f64,
    pub seed: u64,
}

impl FgnSpec {
    pub fn new(hurst: f64, grid_len: usize, dt: f64, seed: u64) -> Result<Self> {
        let spec = Self {
            hurst: HurstExponent::new(hurst)?,
            grid_len,
            dt,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        if self.grid_len < 2 || !self.grid_len.is_power_of_two() {
            return Err(invalid(format!(
                "grid_len must be a power of two >= 2, got {}",
                self.grid_len
            )));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(invalid(format!("dt must be positive, got {}", self.dt)));
        }
        Ok(())
    }

    pub fn horizon(&self) -> f64 {
        self.grid_len as f64 * self.dt
    }
}

/// A path sampled on the uniform grid `t_k = k dt`, `k = 0..=n`, starting at the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePath {
    dim: usize,
    dt: f64,
    /// Row-major `(n + 1) x dim` node values.
    values: Vec<f64>,
    hurst: Option<HurstExponent>,
}

impl SamplePath {
    pub fn from_nodes(
        dim: usize,
        dt: f64,
        values: Vec<f64>,
        hurst: Option<HurstExponent>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("path dimension must be at least 1"));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(invalid(format!("dt must be positive, got {dt}")));
        }
        if !values.len().is_multiple_of(dim) || values.len() / dim < 2 {
            return Err(invalid(format!(
                "expected at least two nodes of dimension {dim}, got {} values",
                values.len()
            )));
        }
        if values[..dim].iter().any(|&v| v != 0.0) {
            return Err(invalid("sampled paths must start at the origin"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("path contains non-finite values"));
        }
        Ok(Self {
            dim,
            dt,
            values,
            hurst,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of grid steps `n`.
    pub fn steps(&self) -> usize {
        self.values.len() / self.dim - 1
    }

    pub fn horizon(&self) -> f64 {
        self.steps() as f64 * self.dt
    }

    pub fn hurst(&self) -> Option<HurstExponent> {
        self.hurst
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn node(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub fn nodes(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.dim)
    }
}

/// `rho_H(k) = (|k+1|^{2H} - 2|k|^{2H} + |k-1|^{2H}) / 2`, the unit-step fGn autocovariance.
pub fn fgn_autocovariance(k: usize, hurst: HurstExponent) -> f64 {
    let two_h = 2.0 * hurst.value();
    let k = k as f64;
    0.5 * ((k + 1.0).powf(two_h) - 2.0 * k.powf(two_h) + (k - 1.0).abs().powf(two_h))
}

/// Circulant-embedding sampler with the spectrum precomputed for one
/// `(H, grid_len, dt)`; reuse it across replicas and components.
#[derive(Debug, Clone)]
pub struct FgnSampler {
    hurst: HurstExponent,
    grid_len: usize,
    dt: f64,
    /// `sqrt(lambda_k / (2n))` scaled by `dt^H`.
    amplitudes: Vec<f64>,
}

impl FgnSampler {
    pub fn new(hurst: HurstExponent, grid_len: usize, dt: f64) -> Result<Self> {
        FgnSpec {
            hurst,
            grid_len,
            dt,
            seed: 0,
        }
        .validate()?;

        let n = grid_len;
        let m = 2 * n;
        let mut re = vec![0.0; m];
        let mut im = vec![0.0; m];
        for k in 0..=n {
            re[k] = fgn_autocovariance(k, hurst);
        }
        for k in 1..n {
            re[m - k] = re[k];
        }
        fft_in_place(&mut re, &mut im);

        let max_eig = re.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let tol = EIGENVALUE_TOLERANCE * max_eig;
        let scale = dt.powf(hurst.value());
        let mut amplitudes = Vec::with_capacity(m);
        for &lambda in &re {
            if lambda < -tol {
                return Err(Error::NegativeEigenvalue { value: lambda, tol });
            }
            amplitudes.push((lambda.max(0.0) / m as f64).sqrt() * scale);
        }
        Ok(Self {
            hurst,
            grid_len,
            dt,
            amplitudes,
        })
    }

    pub fn from_spec(spec: &FgnSpec) -> Result<Self> {
        Self::new(spec.hurst, spec.grid_len, spec.dt)
    }

    pub fn hurst(&self) -> HurstExponent {
        self.hurst
    }

    pub fn grid_len(&self) -> usize {
        self.grid_len
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// One fGn stream of `grid_len` increments with covariance `rho_H(k) dt^{2H}`.
    pub fn sample(&self, seed: u64) -> Vec<f64> {
        let mut rng = rng_from_seed(seed);
        let m = self.amplitudes.len();
        let mut re = Vec::with_capacity(m);
        let mut im = Vec::with_capacity(m);
        for &amp in &self.amplitudes {
            let a: f64 = rng.sample(StandardNormal);
            let b: f64 = rng.sample(StandardNormal);
            re.push(amp * a);
            im.push(amp * b);
        }
        fft_in_place(&mut re, &mut im);
        // Re and Im parts are independent exact draws; only Re is used so
        // that each stream depends on exactly one seed.
        re.truncate(self.grid_len);
        re
    }

    /// `dim` independent fBm components; component `j` uses `derive_seed(seed, &[j])`.
    pub fn fbm_path(&self, dim: usize, seed: u64) -> Result<SamplePath> {
        if dim == 0 {
            return Err(invalid("path dimension must be at least 1"));
        }
        let n = self.grid_len;
        let mut values = vec![0.0; (n + 1) * dim];
        for j in 0..dim {
            let incr = self.sample(derive_seed(seed, &[j as u64]));
            let mut acc = 0.0;
            for (k, dx) in incr.iter().enumerate() {
                acc += dx;
                values[(k + 1) * dim + j] = acc;
            }
        }
        SamplePath::from_nodes(dim, self.dt, values, Some(self.hurst))
    }
}

/// Exact fGn increments for `spec`; bit-identical for identical specs.
pub fn generate_fgn(spec: &FgnSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    Ok(FgnSampler::from_spec(spec)?.sample(spec.seed))
}

/// `dim`-dimensional fBm on `[0, horizon]` with `horizon = grid_len * dt`.
pub fn generate_fbm_path(spec: &FgnSpec, dim: usize, horizon: f64) -> Result<SamplePath> {
    spec.validate()?;
    let expected = spec.horizon();
    if (horizon - expected).abs() > 1e-12 * expected.max(horizon) {
        return Err(invalid(format!(
            "horizon {horizon} does not equal grid_len * dt = {expected}"
        )));
    }
    FgnSampler::from_spec(spec)?.fbm_path(dim, spec.seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h(v: f64) -> HurstExponent {
        HurstExponent::new(v).unwrap()
    }

    #[test]
    fn autocovariance_examples() {
        for &hv in &[0.1, 0.25, 0.5, 0.9] {
            assert_eq!(fgn_autocovariance(0, h(hv)), 1.0);
        }
        assert!(fgn_autocovariance(1, h(0.5)).abs() < 1e-15);
        assert!(fgn_autocovariance(7, h(0.5)).abs() < 1e-15);
        let want = 0.5 * (2f64.sqrt() - 2.0);
        assert!((fgn_autocovariance(1, h(0.25)) - want).abs() < 1e-15);
        assert!((want + 0.2928932).abs() < 1e-7);
    }

    #[test]
    fn hurst_range_is_enforced() {
        assert!(HurstExponent::new(0.0).is_err());
        assert!(HurstExponent::new(1.0).is_err());
        assert!(HurstExponent::new(f64::NAN).is_err());
        assert!(h(0.5).in_theory_range());
        assert!(!h(0.7).in_theory_range());
    }

    #[test]
    fn spec_validation() {
        assert!(FgnSpec::new(0.3, 1000, 0.1, 0).is_err());
        assert!(FgnSpec::new(0.3, 1, 0.1, 0).is_err());
        assert!(FgnSpec::new(0.3, 1024, 0.0, 0).is_err());
        assert!(FgnSpec::new(0.3, 1024, 0.1, 0).is_ok());
    }

    #[test]
    fn embedding_spectrum_is_nonnegative() {
        for &hv in &[0.05, 0.2, 0.5, 0.8, 0.95] {
            let s = FgnSampler::new(h(hv), 4096, 1.0).unwrap();
            assert!(s.amplitudes.iter().all(|a| a.is_finite() && *a >= 0.0));
        }
    }

    #[test]
    fn determinism() {
        let spec = FgnSpec::new(0.3, 256, 0.01, 99).unwrap();
        let a = generate_fgn(&spec).unwrap();
        let b = generate_fgn(&spec).unwrap();
        assert_eq!(a, b);
        let c = generate_fgn(&FgnSpec { seed: 100, ..spec }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn path_starts_at_origin_and_accumulates() {
        let spec = FgnSpec::new(0.4, 64, 0.5, 3).unwrap();
        let path = generate_fbm_path(&spec, 2, 32.0).unwrap();
        assert_eq!(path.steps(), 64);
        assert_eq!(path.node(0), &[0.0, 0.0]);
        let incr = FgnSampler::from_spec(&spec)
            .unwrap()
            .sample(derive_seed(3, &[1]));
        let total: f64 = incr.iter().sum();
        assert!((path.node(64)[1] - total).abs() < 1e-12);
        assert!(generate_fbm_path(&spec, 2, 31.0).is_err());
        assert!(generate_fbm_path(&spec, 0, 32.0).is_err());
    }

    #[test]
    fn sample_path_rejects_bad_start() {
        assert!(SamplePath::from_nodes(1, 1.0, vec![1.0, 2.0], None).is_err());
        assert!(SamplePath::from_nodes(2, 1.0, vec![0.0, 0.0, 1.0], None).is_err());
        let p = SamplePath::from_nodes(1, 0.5, vec![0.0, 2.0, 1.0], None).unwrap();
        assert_eq!(p.horizon(), 1.0);
    }
}
