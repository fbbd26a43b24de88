//! Run configuration: one TOML file per run, versioned and strict.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use parasob::generators::GeneratorKind;
use parasob::verify::TheoremId;
use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

use crate::CliError;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// Environment variable that replaces the base directory outputs are
/// resolved against.
pub const OUTPUT_ROOT_ENV: &str = "PARASOB_OUTPUT_ROOT";

/// A number or the string `"auto"`.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub enum AutoOr {
    #[default]
    Auto,
    Value(f64),
}

impl Serialize for AutoOr {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            AutoOr::Auto => s.serialize_str("auto"),
            AutoOr::Value(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for AutoOr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = AutoOr;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a number or \"auto\"")
            }
            fn visit_str<E: de::Error>(self, v: &str) -> Result<AutoOr, E> {
                if v == "auto" {
                    Ok(AutoOr::Auto)
                } else {
                    Err(E::invalid_value(de::Unexpected::Str(v), &self))
                }
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> Result<AutoOr, E> {
                Ok(AutoOr::Value(v))
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> Result<AutoOr, E> {
                Ok(AutoOr::Value(v as f64))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> Result<AutoOr, E> {
                Ok(AutoOr::Value(v as f64))
            }
        }
        d.deserialize_any(V)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub grid: GridConfig,
    #[serde(default)]
    pub region: RegionConfig,
    #[serde(default)]
    pub weight: WeightConfig,
    #[serde(default)]
    pub battery: BatteryConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default)]
    pub apchar: ApcharConfig,
    #[serde(default)]
    pub scan_k: ScanKConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Grid with spacing `h`, time step `h²`, centered at the origin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n: usize,
    pub h: f64,
    /// Half width of the spatial box.
    pub space_extent: f64,
    /// Half length of the time interval.
    pub time_extent: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionShape {
    #[default]
    Cube,
    Cylinder,
}

/// Region centered at the origin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionConfig {
    #[serde(default)]
    pub shape: RegionShape,
    #[serde(default = "one")]
    pub r: f64,
    #[serde(default = "one")]
    pub alpha: f64,
}

impl Default for RegionConfig {
    fn default() -> Self {
        Self { shape: RegionShape::Cube, r: 1.0, alpha: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightConfig {
    #[default]
    Unit,
    /// `max(d_p(z, z0), h/2)^a`.
    Power {
        a: f64,
        #[serde(default)]
        center_x: Vec<f64>,
        #[serde(default)]
        center_t: f64,
    },
    /// Scalar field file on exactly the configured grid.
    File { path: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatteryConfig {
    #[serde(default = "default_generators")]
    pub generators: Vec<GeneratorKind>,
    #[serde(default = "default_count")]
    pub count: usize,
    #[serde(default = "one_u64")]
    pub seed: u64,
    /// Largest wave number; `min(6, 1/(4h))` when absent.
    #[serde(default)]
    pub kmax: Option<f64>,
}

impl Default for BatteryConfig {
    fn default() -> Self {
        Self { generators: default_generators(), count: default_count(), seed: 1, kmax: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default = "default_theorems")]
    pub theorems: Vec<TheoremId>,
    #[serde(default = "two")]
    pub p: f64,
    /// `auto`: `(n+2)/(n+2−p)` for the unit weight, otherwise the formula
    /// with `q` from the `A_q` index search.
    #[serde(default)]
    pub k: AutoOr,
    /// `auto`: largest scanned reverse Hölder exponent within `rh_budget`.
    #[serde(default)]
    pub eps0: AutoOr,
    #[serde(default = "ten")]
    pub rh_budget: f64,
    /// Ratio budget per theorem; theorems without one always pass.
    #[serde(default)]
    pub budgets: BTreeMap<TheoremId, f64>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            theorems: default_theorems(),
            p: 2.0,
            k: AutoOr::Auto,
            eps0: AutoOr::Auto,
            rh_budget: 10.0,
            budgets: BTreeMap::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApcharConfig {
    #[serde(default = "default_ps")]
    pub p: Vec<f64>,
    /// Largest cube radius; the whole grid when absent.
    #[serde(default)]
    pub max_radius: Option<f64>,
}

impl Default for ApcharConfig {
    fn default() -> Self {
        Self { p: default_ps(), max_radius: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanKConfig {
    #[serde(default = "default_scan_budgets")]
    pub budgets: Vec<f64>,
    #[serde(default = "default_scan_tolerance")]
    pub tolerance: f64,
}

impl Default for ScanKConfig {
    fn default() -> Self {
        Self { budgets: default_scan_budgets(), tolerance: default_scan_tolerance() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: default_dir() }
    }
}

fn one() -> f64 {
    1.0
}
fn two() -> f64 {
    2.0
}
fn ten() -> f64 {
    10.0
}
fn one_u64() -> u64 {
    1
}
fn default_count() -> usize {
    12
}
fn default_generators() -> Vec<GeneratorKind> {
    vec![GeneratorKind::HeatKernel, GeneratorKind::Fourier, GeneratorKind::Antiderivative]
}
fn default_theorems() -> Vec<TheoremId> {
    vec![TheoremId::Poincare, TheoremId::SobolevPoincare]
}
fn default_ps() -> Vec<f64> {
    vec![2.0]
}
fn default_scan_budgets() -> Vec<f64> {
    vec![0.5, 1.0, 2.0, 4.0]
}
fn default_scan_tolerance() -> f64 {
    1e-4
}
fn default_dir() -> PathBuf {
    PathBuf::from("parasob-out")
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_path_buf(), source })?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return bad(format!(
                "schema_version {} unsupported (expected {CONFIG_SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        let g = &self.grid;
        if !(1..=3).contains(&g.n) {
            return bad(format!("grid.n = {} must be 1, 2 or 3", g.n));
        }
        if !(g.h > 0.0 && g.space_extent > 0.0 && g.time_extent > 0.0) {
            return bad("grid.h and extents must be positive".into());
        }
        if !(self.region.r > 0.0 && self.region.alpha > 0.0) {
            return bad("region.r and region.alpha must be positive".into());
        }
        if let WeightConfig::Power { center_x, .. } = &self.weight {
            if !center_x.is_empty() && center_x.len() != g.n {
                return bad(format!("weight.center_x needs {} entries", g.n));
            }
        }
        if !(self.verify.p >= 1.0) {
            return bad("verify.p must be ≥ 1".into());
        }
        if self.apchar.p.iter().any(|&p| !(p > 1.0)) {
            return bad("apchar.p entries must exceed 1".into());
        }
        if self.scan_k.budgets.iter().any(|&b| !(b > 0.0)) || !(self.scan_k.tolerance > 0.0) {
            return bad("scan_k budgets and tolerance must be positive".into());
        }
        Ok(())
    }

    /// Output directory: `output.dir` joined onto `$PARASOB_OUTPUT_ROOT`
    /// when set, else onto `base`.
    pub fn output_dir(&self, base: &Path) -> PathBuf {
        match std::env::var_os(OUTPUT_ROOT_ENV) {
            Some(root) if !root.is_empty() => PathBuf::from(root).join(&self.output.dir),
            _ => base.join(&self.output.dir),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "schema_version = 1\n[grid]\nn = 1\nh = 0.125\nspace_extent = 1.0\ntime_extent = 1.0\n";

    #[test]
    fn minimal_config_gets_defaults() {
        let c = RunConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.verify.k, AutoOr::Auto);
        assert_eq!(c.battery.count, 12);
        assert_eq!(c.weight, WeightConfig::Unit);
    }

    #[test]
    fn unknown_keys_and_versions_are_rejected() {
        assert!(RunConfig::from_toml(&format!("{MINIMAL}bogus = 1\n")).is_err());
        assert!(RunConfig::from_toml(&format!("{MINIMAL}[verify]\nq = 2\n")).is_err());
        assert!(RunConfig::from_toml(&MINIMAL.replace("schema_version = 1", "schema_version = 9")).is_err());
        assert!(RunConfig::from_toml(&format!("{MINIMAL}[verify]\nk = \"big\"\n")).is_err());
    }

    #[test]
    fn parameters_parse() {
        let text = format!(
            "{MINIMAL}[weight]\nkind = \"power\"\na = -1\n[verify]\nk = 3\neps0 = \"auto\"\ntheorems = [\"riesz_lemma\"]\n[verify.budgets]\nriesz_lemma = 4.0\n"
        );
        let c = RunConfig::from_toml(&text).unwrap();
        assert_eq!(c.verify.k, AutoOr::Value(3.0));
        assert_eq!(c.verify.budgets[&TheoremId::RieszLemma], 4.0);
        assert!(matches!(c.weight, WeightConfig::Power { a, .. } if a == -1.0));
    }
}
