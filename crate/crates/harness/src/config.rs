//! Run configuration: a flat TOML file of optical and run parameters.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use num_complex::Complex64;
use serde::Deserialize;
use sha2::{Digest, Sha256};
use slitflow::weakmeas::{CalciteParams, PhotonBudget};
use slitflow::{GridSpec, OpticalConfig};

use crate::error::{HarnessError, Result};

/// Name of the bundled configuration accepted in place of a path.
pub const BUILTIN_NAME: &str = "paper-geometry";

pub const BUILTIN_TEXT: &str = include_str!("../configs/paper-geometry.toml");

pub const REQUIRED_KEYS: [&str; 7] =
    ["wavelength_m", "slit_separation_m", "slit_waist_m", "amp_plus_re", "amp_plus_im", "amp_minus_re", "amp_minus_im"];

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    wavelength_m: Option<f64>,
    slit_separation_m: Option<f64>,
    slit_waist_m: Option<f64>,
    amp_plus_re: Option<f64>,
    amp_plus_im: Option<f64>,
    amp_minus_re: Option<f64>,
    amp_minus_im: Option<f64>,
    grid_n: Option<usize>,
    grid_halfwidth_m: Option<f64>,
    planes: Option<String>,
    zeta: Option<f64>,
    phi0_rad: Option<f64>,
    photon_budget: Option<toml::Value>,
    trace_steps: Option<usize>,
    trajectories_per_slit: Option<usize>,
    z_max_m: Option<f64>,
    sweep_planes: Option<usize>,
}

/// `count` equally spaced planes on `[z_start, z_end]`, written `N@A:B`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlaneSpec {
    pub count: usize,
    pub z_start: f64,
    pub z_end: f64,
}

impl PlaneSpec {
    pub fn positions(&self) -> Vec<f64> {
        slitflow::reconstruct::plane_positions(self.count, self.z_start, self.z_end)
    }
}

impl fmt::Display for PlaneSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}@{}:{}", self.count, self.z_start, self.z_end)
    }
}

impl FromStr for PlaneSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let bad = || format!("plane spec must look like N@Z0:Z1, got '{s}'");
        let (n, range) = s.trim().split_once('@').ok_or_else(bad)?;
        let (a, b) = range.split_once(':').ok_or_else(bad)?;
        let count: usize = n.trim().parse().map_err(|_| bad())?;
        let z_start: f64 = a.trim().parse().map_err(|_| bad())?;
        let z_end: f64 = b.trim().parse().map_err(|_| bad())?;
        if count < 2 {
            return Err(format!("plane spec needs at least 2 planes, got {count}"));
        }
        if !(z_start.is_finite() && z_end.is_finite() && z_start >= 0.0 && z_end > z_start) {
            return Err(format!("plane spec needs 0 <= Z0 < Z1, got '{s}'"));
        }
        Ok(Self { count, z_start, z_end })
    }
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub optics: OpticalConfig,
    pub grid: GridSpec,
    pub planes: PlaneSpec,
    pub calcite: CalciteParams,
    pub photon_budget: PhotonBudget,
    pub trace_steps: usize,
    pub per_slit: usize,
    pub z_max: f64,
    pub sweep_planes: usize,
}

impl RunConfig {
    /// Load from `paper-geometry` or a file path.
    pub fn load(spec: &str) -> Result<Self> {
        if spec == BUILTIN_NAME {
            return Self::parse(BUILTIN_TEXT, BUILTIN_NAME);
        }
        let path = Path::new(spec);
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Config {
            source_name: spec.to_string(),
            message: format!("cannot read file: {e}"),
        })?;
        Self::parse(&text, spec)
    }

    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let fail = |message: String| HarnessError::Config { source_name: source_name.to_string(), message };
        let raw: RawConfig = toml::from_str(text).map_err(|e| fail(e.message().to_string()))?;

        let required = [
            raw.wavelength_m,
            raw.slit_separation_m,
            raw.slit_waist_m,
            raw.amp_plus_re,
            raw.amp_plus_im,
            raw.amp_minus_re,
            raw.amp_minus_im,
        ];
        let mut v = [0.0; 7];
        for (i, (value, key)) in required.iter().zip(REQUIRED_KEYS).enumerate() {
            v[i] = value.ok_or_else(|| fail(format!("missing required key '{key}'")))?;
        }
        let optics = OpticalConfig::new(v[0], v[1], v[2], Complex64::new(v[3], v[4]), Complex64::new(v[5], v[6]))
            .map_err(|e| fail(e.to_string()))?;

        let grid = match (raw.grid_n, raw.grid_halfwidth_m) {
            (None, None) => GridSpec::Auto,
            (Some(n), Some(halfwidth)) => {
                if n < 2 {
                    return Err(fail(format!("key 'grid_n' must be at least 2, got {n}")));
                }
                if !(halfwidth.is_finite() && halfwidth > 0.0) {
                    return Err(fail(format!("key 'grid_halfwidth_m' must be > 0, got {halfwidth}")));
                }
                GridSpec::Fixed { n, halfwidth }
            }
            (Some(_), None) => return Err(fail("key 'grid_n' requires 'grid_halfwidth_m'".into())),
            (None, Some(_)) => return Err(fail("key 'grid_halfwidth_m' requires 'grid_n'".into())),
        };

        let planes = match raw.planes {
            Some(s) => s.parse().map_err(|e: String| fail(format!("key 'planes': {e}")))?,
            None => PlaneSpec { count: 41, z_start: 2.75, z_end: 8.2 },
        };

        let zeta = raw.zeta.unwrap_or(CalciteParams::DEFAULT_ZETA);
        if !(zeta.is_finite() && zeta > 0.0) {
            return Err(fail(format!("key 'zeta' must be > 0, got {zeta}")));
        }
        let phi0 = raw.phi0_rad.unwrap_or(0.0);
        if !phi0.is_finite() {
            return Err(fail("key 'phi0_rad' is not finite".into()));
        }

        let photon_budget = match raw.photon_budget {
            None => PhotonBudget::Noiseless,
            Some(toml::Value::String(s)) => {
                s.parse().map_err(|e: slitflow::Error| fail(format!("key 'photon_budget': {e}")))?
            }
            Some(toml::Value::Integer(n)) if n > 0 => PhotonBudget::Photons(n as u64),
            Some(other) => {
                return Err(fail(format!("key 'photon_budget' must be \"noiseless\" or a positive count, got {other}")))
            }
        };

        let positive = |key: &str, value: Option<usize>, default: usize| match value {
            Some(0) => Err(fail(format!("key '{key}' must be positive"))),
            Some(n) => Ok(n),
            None => Ok(default),
        };
        let trace_steps = positive("trace_steps", raw.trace_steps, 2000)?;
        let per_slit = positive("trajectories_per_slit", raw.trajectories_per_slit, 20)?;
        let sweep_planes = positive("sweep_planes", raw.sweep_planes, 200)?;
        let z_max = raw.z_max_m.unwrap_or(planes.z_end);
        if !(z_max.is_finite() && z_max > 0.0) {
            return Err(fail(format!("key 'z_max_m' must be > 0, got {z_max}")));
        }

        Ok(Self {
            optics,
            grid,
            planes,
            calcite: CalciteParams::new(zeta, phi0),
            photon_budget,
            trace_steps,
            per_slit,
            z_max,
            sweep_planes,
        })
    }

    /// Every resolved setting as `key=value`, sorted by key.
    pub fn canonical_lines(&self) -> Vec<String> {
        let o = &self.optics;
        let mut map = BTreeMap::new();
        map.insert("wavelength_m", o.wavelength().to_string());
        map.insert("slit_separation_m", o.slit_separation().to_string());
        map.insert("slit_waist_m", o.slit_waist().to_string());
        map.insert("amp_plus_re", o.amp_plus().re.to_string());
        map.insert("amp_plus_im", o.amp_plus().im.to_string());
        map.insert("amp_minus_re", o.amp_minus().re.to_string());
        map.insert("amp_minus_im", o.amp_minus().im.to_string());
        match self.grid {
            GridSpec::Auto => {
                map.insert("grid", "auto".to_string());
            }
            GridSpec::Fixed { n, halfwidth } => {
                map.insert("grid_n", n.to_string());
                map.insert("grid_halfwidth_m", halfwidth.to_string());
            }
        }
        map.insert("planes", self.planes.to_string());
        map.insert("zeta", self.calcite.zeta.to_string());
        map.insert("phi0_rad", self.calcite.phi0.to_string());
        map.insert("photon_budget", self.photon_budget.to_string());
        map.insert("trace_steps", self.trace_steps.to_string());
        map.insert("trajectories_per_slit", self.per_slit.to_string());
        map.insert("z_max_m", self.z_max.to_string());
        map.insert("sweep_planes", self.sweep_planes.to_string());
        map.into_iter().map(|(k, v)| format!("{k}={v}")).collect()
    }

    /// SHA-256 of the canonical lines; independent of key order and number
    /// formatting in the source file.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for line in self.canonical_lines() {
            h.update(line.as_bytes());
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "wavelength_m = 1e-6\nslit_separation_m = 5e-4\nslit_waist_m = 1e-4\n\
                           amp_plus_re = 1.0\namp_plus_im = 0.0\namp_minus_re = 1.0\namp_minus_im = 0.0\n";

    #[test]
    fn builtin_parses() {
        let c = RunConfig::load(BUILTIN_NAME).unwrap();
        assert_eq!(c.planes, PlaneSpec { count: 41, z_start: 2.75, z_end: 8.2 });
        assert!(c.optics.is_mirror_symmetric());
        assert_eq!(c.photon_budget, PhotonBudget::Noiseless);
    }

    #[test]
    fn defaults_fill_optional_keys() {
        let c = RunConfig::parse(MINIMAL, "t").unwrap();
        assert_eq!(c.grid, GridSpec::Auto);
        assert_eq!(c.trace_steps, 2000);
        assert_eq!(c.per_slit, 20);
        assert_eq!(c.z_max, 8.2);
    }

    #[test]
    fn missing_key_is_named() {
        for key in REQUIRED_KEYS {
            let text: String = MINIMAL.lines().filter(|l| !l.starts_with(key)).map(|l| format!("{l}\n")).collect();
            let err = RunConfig::parse(&text, "t").unwrap_err();
            assert!(err.to_string().contains(key), "{err}");
            assert_eq!(err.exit_code(), 2);
        }
    }

    #[test]
    fn unknown_key_is_rejected() {
        let err = RunConfig::parse(&format!("{MINIMAL}wavelenght = 3\n"), "t").unwrap_err();
        assert!(err.to_string().contains("wavelenght"), "{err}");
    }

    #[test]
    fn hash_ignores_order_and_number_format() {
        let a = RunConfig::parse(MINIMAL, "a").unwrap();
        let reversed: String = MINIMAL.lines().rev().map(|l| format!("{l}\n")).collect();
        let b = RunConfig::parse(&reversed.replace("1e-6", "0.000001").replace("1.0", "1"), "b").unwrap();
        assert_eq!(a.hash(), b.hash());
        let c = RunConfig::parse(&MINIMAL.replace("5e-4", "6e-4"), "c").unwrap();
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn plane_spec_round_trip() {
        let p: PlaneSpec = "41@2.75:8.2".parse().unwrap();
        assert_eq!(p.count, 41);
        assert_eq!(p.to_string().parse::<PlaneSpec>().unwrap(), p);
        assert_eq!(p.positions().len(), 41);
        assert!("1@0:1".parse::<PlaneSpec>().is_err());
        assert!("4@2:1".parse::<PlaneSpec>().is_err());
        assert!("four".parse::<PlaneSpec>().is_err());
    }

    #[test]
    fn photon_budget_forms() {
        let c = RunConfig::parse(&format!("{MINIMAL}photon_budget = 100000\n"), "t").unwrap();
        assert_eq!(c.photon_budget, PhotonBudget::Photons(100000));
        let c = RunConfig::parse(&format!("{MINIMAL}photon_budget = \"noiseless\"\n"), "t").unwrap();
        assert_eq!(c.photon_budget, PhotonBudget::Noiseless);
        assert!(RunConfig::parse(&format!("{MINIMAL}photon_budget = -3\n"), "t").is_err());
    }
}
