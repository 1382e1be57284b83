//! Experiment configuration: flat `key = value` TOML with dotted sections.
//!
//! ```text
//! dim = 3
//! horizon = 1.0
//! path.variant = "holder"
//! path.alpha = 0.4
//! quad.rel_tol = 1e-8
//! ```
//!
//! Any key can be overridden from the environment as `HEATSING_<KEY>` with
//! dots written as double underscores, e.g. `HEATSING_QUAD__REL_TOL=1e-6`.

use std::collections::BTreeMap;
use std::path::PathBuf;

use heatsing::functionals::RadiusGrid;
use heatsing::heatmass::InitialData;
use heatsing::quadrature::QuadratureConfig;
use heatsing::scaling::FitModel;
use serde::Serialize;
use toml::Value;

use crate::error::{CliError, CliResult};

pub const ENV_PREFIX: &str = "HEATSING_";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    MassCurve,
    Fit,
    VerifyBounds,
    Moments,
    FbmCheck,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Self::MassCurve => "mass-curve",
            Self::Fit => "fit",
            Self::VerifyBounds => "verify-bounds",
            Self::Moments => "moments",
            Self::FbmCheck => "fbm-check",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        [Self::MassCurve, Self::Fit, Self::VerifyBounds, Self::Moments, Self::FbmCheck]
            .into_iter()
            .find(|e| e.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum PathSpec {
    Constant {
        point: Vec<f64>,
    },
    Holder {
        anchor: Vec<f64>,
        c: f64,
        alpha: f64,
        direction: Vec<f64>,
    },
    Fbm {
        hurst: f64,
        grid_len: usize,
    },
}

impl PathSpec {
    pub fn is_stochastic(&self) -> bool {
        matches!(self, Self::Fbm { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSpec {
    pub r_max: f64,
    pub ratio: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MassTarget {
    Total,
    Singular,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitSpec {
    pub window: (f64, f64),
    pub model: FitModel,
    pub target: MassTarget,
    /// Expected exponent and tolerance; the fit passes unconditionally when absent.
    pub expect_kappa: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsSpec {
    pub theta: f64,
    pub ratio_cap: f64,
    pub c0: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentSpec {
    pub order: u32,
    pub radii: Vec<f64>,
    pub max_spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FbmCheckSpec {
    pub hurst: Vec<f64>,
    pub grid_len: usize,
    pub replicas: usize,
    pub max_lag: usize,
    pub z_limit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub dim: usize,
    pub horizon: f64,
    pub s0: f64,
    pub path: PathSpec,
    pub u0: InitialData,
    pub grid: GridSpec,
    pub quad: QuadratureConfig,
    pub ensemble: usize,
    pub seed: u64,
    pub fit: FitSpec,
    pub bounds: BoundsSpec,
    pub moments: MomentSpec,
    pub fbm: FbmCheckSpec,
    #[serde(skip)]
    pub out_dir: PathBuf,
}

/// Raw dotted-key view of a configuration document.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    entries: BTreeMap<String, Value>,
}

fn flatten(prefix: &str, table: toml::Table, out: &mut BTreeMap<String, Value>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k } else { format!("{prefix}.{k}") };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            other => {
                out.insert(key, other);
            }
        }
    }
}

/// Parses a bare value the way it would appear on the right of `=`; anything
/// that is not valid TOML is taken as a string.
fn parse_value(raw: &str) -> Value {
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| Value::String(raw.to_string())),
        Err(_) => Value::String(raw.to_string()),
    }
}

impl RawConfig {
    pub fn parse(text: &str) -> CliResult<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| CliError::Config(format!("malformed config: {}", e.message())))?;
        let mut entries = BTreeMap::new();
        flatten("", table, &mut entries);
        Ok(Self { entries })
    }

    pub fn set(&mut self, key: &str, raw: &str) {
        self.entries.insert(key.to_string(), parse_value(raw));
    }

    /// Applies `HEATSING_*` overrides from the given environment pairs.
    pub fn apply_env<I: IntoIterator<Item = (String, String)>>(&mut self, vars: I) {
        for (k, v) in vars {
            if let Some(rest) = k.strip_prefix(ENV_PREFIX) {
                let key = rest.to_ascii_lowercase().replace("__", ".");
                self.set(&key, &v);
            }
        }
    }
}

struct Reader {
    entries: BTreeMap<String, Value>,
}

fn type_error(key: &str, want: &str, got: &Value) -> CliError {
    CliError::Config(format!("{key}: expected {want}, got {got}"))
}

impl Reader {
    fn take(&mut self, key: &str) -> Option<Value> {
        self.entries.remove(key)
    }

    fn f64_opt(&mut self, key: &str) -> CliResult<Option<f64>> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::Float(x)) => Ok(Some(x)),
            Some(Value::Integer(i)) => Ok(Some(i as f64)),
            Some(v) => Err(type_error(key, "a number", &v)),
        }
    }

    fn f64_or(&mut self, key: &str, default: f64) -> CliResult<f64> {
        Ok(self.f64_opt(key)?.unwrap_or(default))
    }

    fn u64_opt(&mut self, key: &str) -> CliResult<Option<u64>> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::Integer(i)) if i >= 0 => Ok(Some(i as u64)),
            Some(v) => Err(type_error(key, "a non-negative integer", &v)),
        }
    }

    fn usize_or(&mut self, key: &str, default: usize) -> CliResult<usize> {
        Ok(self.u64_opt(key)?.map(|v| v as usize).unwrap_or(default))
    }

    fn str_opt(&mut self, key: &str) -> CliResult<Option<String>> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(v) => Err(type_error(key, "a string", &v)),
        }
    }

    fn vec_opt(&mut self, key: &str) -> CliResult<Option<Vec<f64>>> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::Array(items)) => items
                .into_iter()
                .map(|v| match v {
                    Value::Float(x) => Ok(x),
                    Value::Integer(i) => Ok(i as f64),
                    other => Err(type_error(key, "an array of numbers", &other)),
                })
                .collect::<CliResult<Vec<f64>>>()
                .map(Some),
            Some(v) => Err(type_error(key, "an array of numbers", &v)),
        }
    }

    fn vec_or(&mut self, key: &str, default: Vec<f64>) -> CliResult<Vec<f64>> {
        Ok(self.vec_opt(key)?.unwrap_or(default))
    }
}

fn require(cond: bool, msg: impl Into<String>) -> CliResult<()> {
    if cond {
        Ok(())
    } else {
        Err(CliError::Config(msg.into()))
    }
}

fn unit_axis(dim: usize) -> Vec<f64> {
    let mut e = vec![0.0; dim];
    e[0] = 1.0;
    e
}

impl ExperimentConfig {
    /// Builds a validated configuration for `experiment` from raw entries.
    pub fn from_raw(experiment: Experiment, raw: RawConfig) -> CliResult<Self> {
        let mut r = Reader { entries: raw.entries };
        if let Some(name) = r.str_opt("experiment")? {
            let declared = Experiment::parse(&name)
                .ok_or_else(|| CliError::Config(format!("unknown experiment {name:?}")))?;
            require(
                declared == experiment,
                format!("config declares experiment {name:?} but {} was requested", experiment.name()),
            )?;
        }

        let dim = r.usize_or("dim", 3)?;
        require(dim >= 1, "dim must be at least 1")?;
        let horizon = r.f64_or("horizon", 1.0)?;
        require(horizon > 0.0 && horizon.is_finite(), "horizon must be positive")?;
        let s0 = r.f64_or("s0", horizon)?;
        require(s0 > 0.0 && s0 <= horizon, "s0 must lie in (0, horizon]")?;
        let seed = r.u64_opt("seed")?.unwrap_or(0);

        let variant = r.str_opt("path.variant")?.unwrap_or_else(|| "constant".into());
        let path = match variant.as_str() {
            "constant" => PathSpec::Constant {
                point: r.vec_or("path.point", vec![0.0; dim])?,
            },
            "holder" => PathSpec::Holder {
                anchor: r.vec_or("path.anchor", vec![0.0; dim])?,
                c: r.f64_or("path.c", 1.0)?,
                alpha: r.f64_or("path.alpha", 0.5)?,
                direction: r.vec_or("path.direction", unit_axis(dim))?,
            },
            "fbm" => PathSpec::Fbm {
                hurst: r.f64_or("path.hurst", 0.5)?,
                grid_len: r.usize_or("path.grid_len", 1 << 14)?,
            },
            other => return Err(CliError::Config(format!("unknown path.variant {other:?}"))),
        };
        match &path {
            PathSpec::Constant { point } => require(point.len() == dim, "path.point must have dim entries")?,
            PathSpec::Holder {
                anchor,
                c,
                alpha,
                direction,
            } => {
                require(anchor.len() == dim && direction.len() == dim, "path.anchor and path.direction need dim entries")?;
                require(*c > 0.0, "path.c must be positive")?;
                require(*alpha > 0.0 && *alpha <= 1.0, "path.alpha must lie in (0, 1]")?;
            }
            PathSpec::Fbm { hurst, grid_len } => {
                require(*hurst > 0.0 && *hurst < 1.0, "path.hurst must lie in (0, 1)")?;
                require(grid_len.is_power_of_two() && *grid_len >= 2, "path.grid_len must be a power of two >= 2")?;
            }
        }

        let u0_variant = r.str_opt("u0.variant")?.unwrap_or_else(|| "constant".into());
        let u0 = match u0_variant.as_str() {
            "constant" => InitialData::Constant {
                value: r.f64_or("u0.value", 1.0)?,
            },
            "gaussian_bump" => InitialData::GaussianBump {
                amplitude: r.f64_or("u0.amplitude", 1.0)?,
                width: r.f64_or("u0.width", 1.0)?,
                center: r.vec_or("u0.center", vec![0.0; dim])?,
            },
            other => return Err(CliError::Config(format!("unknown u0.variant {other:?}"))),
        };
        match &u0 {
            InitialData::Constant { value } => require(*value > 0.0, "u0.value must be positive")?,
            InitialData::GaussianBump {
                amplitude,
                width,
                center,
            } => require(
                *amplitude > 0.0 && *width > 0.0 && center.len() == dim,
                "u0 bump needs positive amplitude and width and a dim-sized center",
            )?,
        }

        let grid = GridSpec {
            r_max: r.f64_or("grid.r_max", 0.1)?,
            ratio: r.f64_or("grid.ratio", 0.5f64.powf(0.25))?,
            count: r.usize_or("grid.count", 28)?,
        };
        require(grid.ratio > 0.0 && grid.ratio < 1.0, format!("grid.ratio must lie in (0, 1), got {}", grid.ratio))?;
        require(grid.r_max > 0.0, "grid.r_max must be positive")?;
        require(grid.count >= RadiusGrid::MIN_LEN, format!("grid.count must be >= {}", RadiusGrid::MIN_LEN))?;

        let d = QuadratureConfig::default();
        let quad = QuadratureConfig {
            n_panels: r.usize_or("quad.n_panels", d.n_panels)?,
            grading: r.f64_or("quad.grading", d.grading)?,
            order: r.usize_or("quad.order", d.order)?,
            radial_width: r.f64_or("quad.radial_width", d.radial_width)?,
            angular_order: r.usize_or("quad.angular_order", d.angular_order)?,
            rel_tol: r.f64_or("quad.rel_tol", d.rel_tol)?,
            max_depth: r.usize_or("quad.max_depth", d.max_depth)?,
        };
        quad.validate().map_err(|e| CliError::Config(e.to_string()))?;

        let ensemble = r.usize_or("ensemble.size", 1)?;
        require(ensemble >= 1, "ensemble.size must be positive")?;

        let model = match r.str_opt("fit.model")?.as_deref() {
            None | Some("pure_power") => FitModel::PurePower,
            Some("power_loglog") => FitModel::PowerLogLog,
            Some(other) => return Err(CliError::Config(format!("unknown fit.model {other:?}"))),
        };
        let window = (r.f64_or("fit.r_min", 1e-3)?, r.f64_or("fit.r_max", 0.1)?);
        require(window.0 > 0.0 && window.0 < window.1, "fit window needs 0 < fit.r_min < fit.r_max")?;
        let expect = r.f64_opt("fit.expect_kappa")?;
        let tol = r.f64_or("fit.tolerance", 0.15)?;
        let target = match r.str_opt("fit.target")?.as_deref() {
            None | Some("total") => MassTarget::Total,
            Some("singular") => MassTarget::Singular,
            Some(other) => return Err(CliError::Config(format!("unknown fit.target {other:?}"))),
        };
        let fit = FitSpec {
            window,
            model,
            target,
            expect_kappa: expect.map(|k| (k, tol)),
        };

        let default_cap = if path.is_stochastic() {
            heatsing::scaling::RATIO_CAP_STOCHASTIC
        } else {
            heatsing::scaling::RATIO_CAP_DETERMINISTIC
        };
        let bounds = BoundsSpec {
            theta: r.f64_or("bounds.theta", 0.5)?,
            ratio_cap: r.f64_or("bounds.ratio_cap", default_cap)?,
            c0: r.f64_opt("bounds.c0")?,
        };
        require(bounds.theta > 0.0 && bounds.theta < 1.0, "bounds.theta must lie in (0, 1)")?;
        let k = bounds.theta.ln() / grid.ratio.ln();
        require(
            (k - k.round()).abs() < 1e-9 && k.round() >= 1.0,
            format!("bounds.theta = {} must be an integer power of grid.ratio = {}", bounds.theta, grid.ratio),
        )?;
        require(bounds.ratio_cap >= 1.0, "bounds.ratio_cap must be >= 1")?;

        let moments = MomentSpec {
            order: r.u64_opt("moments.order")?.unwrap_or(1) as u32,
            radii: r.vec_or("moments.radii", (2..=6).map(|m| (-(m as f64)).exp()).collect())?,
            max_spread: r.f64_or("moments.max_spread", 20.0)?,
        };
        require((1..=3).contains(&moments.order), "moments.order must be 1, 2 or 3")?;
        require(
            !moments.radii.is_empty() && moments.radii.iter().all(|&x| x > 0.0),
            "moments.radii must be positive",
        )?;

        let fbm = FbmCheckSpec {
            hurst: r.vec_or("fbm.hurst", vec![0.2, 0.3, 0.5])?,
            grid_len: r.usize_or("fbm.grid_len", 1024)?,
            replicas: r.usize_or("fbm.replicas", 2000)?,
            max_lag: r.usize_or("fbm.max_lag", 10)?,
            z_limit: r.f64_or("fbm.z_limit", 3.0)?,
        };
        require(
            fbm.hurst.iter().all(|&h| h > 0.0 && h < 1.0),
            "fbm.hurst entries must lie in (0, 1)",
        )?;
        require(fbm.grid_len.is_power_of_two() && fbm.grid_len > fbm.max_lag, "fbm.grid_len must be a power of two above fbm.max_lag")?;
        require(fbm.replicas >= 2, "fbm.replicas must be at least 2")?;

        let out_dir = PathBuf::from(r.str_opt("output.dir")?.unwrap_or_else(|| "out".into()));

        if let Some(key) = r.entries.keys().next() {
            return Err(CliError::Config(format!("unknown config key {key:?}")));
        }

        let cfg = Self {
            experiment,
            dim,
            horizon,
            s0,
            path,
            u0,
            grid,
            quad,
            ensemble,
            seed,
            fit,
            bounds,
            moments,
            fbm,
            out_dir,
        };
        cfg.check_coverage()?;
        cfg.check_resolution()?;
        Ok(cfg)
    }

    pub fn radius_grid(&self) -> CliResult<RadiusGrid> {
        RadiusGrid::new(self.grid.r_max, self.grid.ratio, self.grid.count).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Smallest radius whose functionals enter the experiment's output.
    fn smallest_radius(&self) -> f64 {
        let grid_min = self.grid.r_max * self.grid.ratio.powi(self.grid.count as i32 - 1);
        match self.experiment {
            Experiment::MassCurve => grid_min,
            Experiment::Fit => self.fit.window.0.max(grid_min),
            Experiment::VerifyBounds => (self.bounds.theta * self.fit.window.0).max(grid_min),
            Experiment::Moments => self.moments.radii.iter().copied().fold(f64::INFINITY, f64::min),
            Experiment::FbmCheck => f64::INFINITY,
        }
    }

    /// The radius grid must reach down to every radius the experiment reads.
    fn check_coverage(&self) -> CliResult<()> {
        let grid_min = self.grid.r_max * self.grid.ratio.powi(self.grid.count as i32 - 1);
        let needed = match self.experiment {
            Experiment::Fit => self.fit.window.0,
            Experiment::VerifyBounds => self.bounds.theta * self.fit.window.0,
            _ => return Ok(()),
        };
        require(
            grid_min <= needed * (1.0 + 1e-9),
            format!("radius grid stops at {grid_min:e}, above the needed {needed:e}; raise grid.count"),
        )
    }

    /// Sampled paths must resolve the smallest radius: `dt ≤ r_min^{1/H} / 100`.
    fn check_resolution(&self) -> CliResult<()> {
        if let PathSpec::Fbm { hurst, grid_len } = self.path {
            let r_min = self.smallest_radius();
            if !r_min.is_finite() {
                return Ok(());
            }
            let dt = self.horizon / grid_len as f64;
            let limit = r_min.powf(1.0 / hurst) / 100.0;
            require(
                dt <= limit,
                format!("grid spacing dt = {dt:e} exceeds r_min^(1/H)/100 = {limit:e} for r_min = {r_min:e}"),
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bare_values_parse_as_toml_or_strings() {
        assert_eq!(parse_value("1e-6"), Value::Float(1e-6));
        assert_eq!(parse_value("[1, 2.5]"), Value::Array(vec![Value::Integer(1), Value::Float(2.5)]));
        assert_eq!(parse_value("holder"), Value::String("holder".into()));
    }

    #[test]
    fn env_keys_map_to_dotted_keys() {
        let mut raw = RawConfig::parse("[quad]\nrel_tol = 1e-8\n").unwrap();
        raw.apply_env([
            ("HEATSING_QUAD__REL_TOL".to_string(), "1e-6".to_string()),
            ("PATH".to_string(), "/bin".to_string()),
        ]);
        assert_eq!(raw.entries.get("quad.rel_tol"), Some(&Value::Float(1e-6)));
        assert_eq!(raw.entries.len(), 1);
    }

    #[test]
    fn defaults_build_a_valid_config() {
        let cfg = ExperimentConfig::from_raw(Experiment::MassCurve, RawConfig::default()).unwrap();
        assert_eq!(cfg.dim, 3);
        assert_eq!(cfg.radius_grid().unwrap().len(), 28);
    }
}
