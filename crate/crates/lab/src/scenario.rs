//! Scenario files: one TOML document describing a configuration and the
//! degrees, grid and sampling budget to run it with.
//!
//! ```toml
//! name = "half-pole"
//! k = 1
//! p_list = [25, 50, 100]
//! seed = 7
//!
//! [[poles]]
//! point = "0,0"
//! tau = 0.5
//!
//! [weight]
//! kind = "zero"
//! ```
//!
//! Points are written `re,im` or `inf`; vanishing rates are decimals.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sphere_bergman_core::weight::RadialTable;
use sphere_bergman_core::{HolderBound, PoleSet, Preset, ProjectivePoint, SphereGrid, WeightSpec};

use crate::error::{LabError, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PointSpec {
    Infinity,
    Affine { re: f64, im: f64 },
}

impl PointSpec {
    pub fn to_point(self) -> ProjectivePoint {
        match self {
            PointSpec::Infinity => ProjectivePoint::infinity(),
            PointSpec::Affine { re, im } => ProjectivePoint::affine(Complex64::new(re, im)),
        }
    }
}

impl fmt::Display for PointSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PointSpec::Infinity => f.write_str("inf"),
            // `{}` on f64 prints the shortest string that parses back exactly
            PointSpec::Affine { re, im } => write!(f, "{re},{im}"),
        }
    }
}

impl FromStr for PointSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("inf") {
            return Ok(PointSpec::Infinity);
        }
        let (re, im) = s.split_once(',').ok_or_else(|| format!("point `{s}` is neither `re,im` nor `inf`"))?;
        let parse = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("point `{s}`: {e}"));
        let (re, im) = (parse(re)?, parse(im)?);
        if !re.is_finite() || !im.is_finite() {
            return Err(format!("point `{s}` must have finite coordinates (use `inf` for the point at infinity)"));
        }
        Ok(PointSpec::Affine { re, im })
    }
}

impl Serialize for PointSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PointSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoleEntry {
    pub point: PointSpec,
    pub tau: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightConfig {
    #[default]
    Zero,
    Constant {
        value: f64,
    },
    ChordalLipschitz {
        center: PointSpec,
        c: f64,
    },
    ZonalHolder {
        c: f64,
        nu: f64,
        level: f64,
    },
    Tilted {
        c: f64,
    },
    ZonalLogModulus {
        c: f64,
        level: f64,
    },
    /// Piecewise linear in `u = 1/(1+|z|²)`.
    Radial {
        u: Vec<f64>,
        values: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        holder_nu: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        holder_constant: Option<f64>,
    },
}

impl WeightConfig {
    pub fn to_spec(&self) -> Result<WeightSpec> {
        Ok(match self {
            WeightConfig::Zero => WeightSpec::Zero,
            WeightConfig::Constant { value } => WeightSpec::constant(*value),
            WeightConfig::ChordalLipschitz { center, c } => {
                WeightSpec::Preset(Preset::ChordalLipschitz { center: center.to_point(), c: *c })
            }
            WeightConfig::ZonalHolder { c, nu, level } => {
                if !(*nu > 0.0 && *nu <= 1.0) {
                    return Err(LabError::Config(format!("zonal_holder exponent must lie in (0, 1], got {nu}")));
                }
                WeightSpec::Preset(Preset::ZonalHolder { c: *c, nu: *nu, level: *level })
            }
            WeightConfig::Tilted { c } => WeightSpec::Preset(Preset::Tilted { c: *c }),
            WeightConfig::ZonalLogModulus { c, level } => {
                WeightSpec::Preset(Preset::ZonalLogModulus { c: *c, level: *level })
            }
            WeightConfig::Radial { u, values, holder_nu, holder_constant } => {
                if u.len() != values.len() {
                    return Err(LabError::Config("radial weight needs as many values as u nodes".into()));
                }
                let table = RadialTable::new(u.iter().copied().zip(values.iter().copied()).collect())
                    .ok_or_else(|| LabError::Config("radial weight table must be nonempty and finite".into()))?;
                let holder = match (holder_nu, holder_constant) {
                    (Some(nu), Some(constant)) => Some(HolderBound { nu: *nu, constant: *constant }),
                    (None, None) => None,
                    _ => return Err(LabError::Config("holder_nu and holder_constant go together".into())),
                };
                WeightSpec::RadialTabulated { table, holder }
            }
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Complementarity residual at which the envelope solver stops.
    #[serde(default = "default_envelope_tol")]
    pub envelope: f64,
    #[serde(default = "default_max_sweeps")]
    pub max_sweeps: usize,
    #[serde(default = "default_omega")]
    pub omega: f64,
    /// Chordal distance from the poles inside which sup errors are not taken.
    #[serde(default = "default_delta0")]
    pub pole_exclusion: f64,
}

fn default_envelope_tol() -> f64 {
    1e-8
}
fn default_max_sweeps() -> usize {
    200_000
}
fn default_omega() -> f64 {
    1.8
}
fn default_delta0() -> f64 {
    0.1
}
fn default_samples() -> usize {
    200
}
fn default_lambda() -> f64 {
    3.0
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            envelope: default_envelope_tol(),
            max_sweeps: default_max_sweeps(),
            omega: default_omega(),
            pole_exclusion: default_delta0(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub k: u32,
    pub p_list: Vec<u32>,
    #[serde(default = "default_samples")]
    pub n_samples: usize,
    #[serde(default)]
    pub seed: u64,
    /// `[n_radial, n_angular]`; defaults to the resolution floor of the largest degree.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<[usize; 2]>,
    /// `λ_p = lambda_factor · log p` in the speed study.
    #[serde(default = "default_lambda")]
    pub lambda_factor: f64,
    #[serde(default)]
    pub poles: Vec<PoleEntry>,
    #[serde(default)]
    pub weight: WeightConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario fields are all representable in TOML")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(LabError::Config(m));
        if self.name.trim().is_empty() {
            return bad("name must not be empty".into());
        }
        if self.k == 0 {
            return bad("k must be a positive integer".into());
        }
        if self.p_list.is_empty() || self.p_list.contains(&0) {
            return bad("p_list must list positive degrees".into());
        }
        if self.p_list.windows(2).any(|w| w[1] <= w[0]) {
            return bad("p_list must be strictly increasing".into());
        }
        if self.n_samples == 0 {
            return bad("n_samples must be positive".into());
        }
        if self.seed > i64::MAX as u64 {
            return bad("seed must fit in a signed 64-bit integer".into());
        }
        if !(self.lambda_factor > 0.0 && self.lambda_factor.is_finite()) {
            return bad("lambda_factor must be positive".into());
        }
        let t = &self.tolerances;
        if !(t.envelope > 0.0) || t.max_sweeps == 0 || !(t.omega > 0.0 && t.omega < 2.0) || !(t.pole_exclusion >= 0.0) {
            return bad("tolerances: need envelope > 0, max_sweeps > 0, omega in (0, 2), pole_exclusion >= 0".into());
        }
        self.pole_set()?;
        self.weight.to_spec()?;
        if let Some([nr, na]) = self.grid {
            let p_max = *self.p_list.last().unwrap_or(&1);
            let (need_r, need_a) = SphereGrid::floor_for(self.k, p_max);
            if nr < need_r || na < need_a {
                return bad(format!(
                    "grid {nr}x{na} is below the resolution floor {need_r}x{need_a} for k = {}, p = {p_max}",
                    self.k
                ));
            }
        }
        Ok(())
    }

    pub fn pole_set(&self) -> Result<PoleSet> {
        let pairs: Vec<_> = self.poles.iter().map(|p| (p.point.to_point(), p.tau)).collect();
        PoleSet::from_pairs(&pairs).map_err(|e| LabError::Config(e.to_string()))
    }

    pub fn weight_spec(&self) -> Result<WeightSpec> {
        self.weight.to_spec()
    }

    pub fn total_tau(&self) -> f64 {
        self.poles.iter().map(|p| p.tau).sum()
    }

    /// Fails with the bigness diagnostic when `Σ τ ≥ k`.
    pub fn require_big(&self) -> Result<()> {
        let poles = self.pole_set()?;
        if sphere_bergman_core::is_big(self.k, &poles) {
            Ok(())
        } else {
            Err(LabError::NotBig { k: self.k, total_tau: poles.total_tau() })
        }
    }

    pub fn max_p(&self) -> u32 {
        self.p_list.iter().copied().max().unwrap_or(1)
    }

    /// The configured grid, or the resolution floor of the largest degree.
    pub fn common_grid(&self) -> Result<SphereGrid> {
        let (nr, na) = match self.grid {
            Some([nr, na]) => (nr, na),
            None => SphereGrid::floor_for(self.k, self.max_p()),
        };
        Ok(SphereGrid::new(nr, na)?)
    }
}

/// Parses `128x256`.
pub fn parse_grid(s: &str) -> std::result::Result<[usize; 2], String> {
    let (a, b) = s.split_once(['x', 'X']).ok_or_else(|| format!("grid `{s}` should look like 128x256"))?;
    let a = a.trim().parse().map_err(|e| format!("grid `{s}`: {e}"))?;
    let b = b.trim().parse().map_err(|e| format!("grid `{s}`: {e}"))?;
    Ok([a, b])
}

#[cfg(test)]
mod tests {
    use super::*;

    const HALF_POLE: &str = r#"
name = "half-pole"
k = 1
p_list = [25, 50, 100]
seed = 7

[[poles]]
point = "0,0"
tau = 0.5
"#;

    #[test]
    fn parses_minimal_file_with_defaults() {
        let s = Scenario::parse(HALF_POLE).unwrap();
        assert_eq!(s.k, 1);
        assert_eq!(s.poles, vec![PoleEntry { point: PointSpec::Affine { re: 0.0, im: 0.0 }, tau: 0.5 }]);
        assert_eq!(s.weight, WeightConfig::Zero);
        assert_eq!(s.n_samples, 200);
        assert_eq!(s.tolerances, Tolerances::default());
        assert_eq!(Scenario::parse(&s.to_toml()).unwrap(), s);
    }

    #[test]
    fn point_syntax() {
        assert_eq!("inf".parse::<PointSpec>().unwrap(), PointSpec::Infinity);
        assert_eq!(" -1.5, 2e-3 ".parse::<PointSpec>().unwrap(), PointSpec::Affine { re: -1.5, im: 2e-3 });
        assert!("1.0".parse::<PointSpec>().is_err());
        assert!("nan,0".parse::<PointSpec>().is_err());
        assert_eq!(PointSpec::Affine { re: 0.1, im: -3.0 }.to_string(), "0.1,-3");
    }

    #[test]
    fn rejects_invalid_scenarios() {
        let with = |extra: &str| Scenario::parse(&format!("{HALF_POLE}{extra}"));
        assert!(with("\n[[poles]]\npoint = \"0,0\"\ntau = 0.2\n").is_err());
        assert!(Scenario::parse(&HALF_POLE.replace("tau = 0.5", "tau = -0.5")).is_err());
        assert!(Scenario::parse(&HALF_POLE.replace("[25, 50, 100]", "[50, 25]")).is_err());
        assert!(Scenario::parse(&HALF_POLE.replace("seed = 7", "seed = 7\ngrid = [64, 64]")).is_err());
        assert!(Scenario::parse(&HALF_POLE.replace("seed = 7", "seed = 7\ncolour = 1")).is_err());
        assert!(Scenario::parse(&HALF_POLE.replace("seed = 7", "seed = 7\ngrid = [216, 216]")).is_ok());
    }

    #[test]
    fn not_big_is_reported_with_criterion() {
        let s = Scenario::parse(&HALF_POLE.replace("tau = 0.5", "tau = 1.0")).unwrap();
        let err = s.require_big().unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("sum_j tau_j < k"));
    }

    #[test]
    fn grid_flag_syntax() {
        assert_eq!(parse_grid("128x256").unwrap(), [128, 256]);
        assert!(parse_grid("128").is_err());
    }
}
