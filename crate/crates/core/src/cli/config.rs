//! Fit configuration: a TOML file with dotted-key overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::effects::{EffectTerm, DEFAULT_GRID_1D, DEFAULT_GRID_2D, DEFAULT_LEVEL};
use crate::priors::{ScalingOptions, DEFAULT_IG};
use crate::sampler::SamplerConfig;
use crate::{Error, Result};

pub const DEFAULT_BASIS_DIM: usize = 10;
pub const DEFAULT_CHAINS: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PriorConfig {
    /// Without `rate`, a shared rate is chosen by prior scaling.
    Weibull {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rate: Option<Vec<f64>>,
        #[serde(default = "default_target_sd")]
        target_sd: f64,
        #[serde(default = "default_scaling_draws")]
        scaling_draws: usize,
    },
    InverseGamma {
        #[serde(default = "default_ig_alpha")]
        alpha: f64,
        #[serde(default = "default_ig_beta")]
        beta: f64,
    },
}

fn default_target_sd() -> f64 {
    ScalingOptions::default().target_sd
}
fn default_scaling_draws() -> usize {
    ScalingOptions::default().draws
}
fn default_ig_alpha() -> f64 {
    DEFAULT_IG.0
}
fn default_ig_beta() -> f64 {
    DEFAULT_IG.1
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig::Weibull {
            rate: None,
            target_sd: default_target_sd(),
            scaling_draws: default_scaling_draws(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EffectRequest {
    /// One name for a main effect, two for an interaction.
    pub coordinates: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<usize>,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default)]
    pub center: bool,
}

fn default_level() -> f64 {
    DEFAULT_LEVEL
}

impl EffectRequest {
    pub fn term(&self, names: &[String]) -> Result<EffectTerm> {
        let idx = |name: &String| {
            names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| Error::Config(format!("effect coordinate '{name}' is not a model coordinate")))
        };
        match self.coordinates.as_slice() {
            [a] => Ok(EffectTerm::Main { j: idx(a)? }),
            [a, b] => {
                let term = EffectTerm::Interaction { j: idx(a)?, k: idx(b)? };
                term.validate(names.len())?;
                Ok(term)
            }
            other => Err(Error::Config(format!(
                "an effect needs 1 or 2 coordinates, got {}",
                other.len()
            ))),
        }
    }

    pub fn grid_len(&self) -> usize {
        self.grid.unwrap_or(if self.coordinates.len() == 1 {
            DEFAULT_GRID_1D
        } else {
            DEFAULT_GRID_2D
        })
    }

    /// File stem such as `effect_lon` or `effect_lon_lat`.
    pub fn stem(&self) -> String {
        format!("effect_{}", self.coordinates.join("_"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub input: PathBuf,
    pub coordinates: Vec<String>,
    pub response: String,
    /// One entry per coordinate, or a single entry used for all.
    #[serde(default = "default_dims")]
    pub basis_dims: Vec<usize>,
    pub output: PathBuf,
    #[serde(default = "default_chains")]
    pub chains: usize,
    #[serde(default)]
    pub prior: PriorConfig,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub effects: Vec<EffectRequest>,
}

fn default_dims() -> Vec<usize> {
    vec![DEFAULT_BASIS_DIM]
}
fn default_chains() -> usize {
    DEFAULT_CHAINS
}

/// Parses a scalar override value as TOML, falling back to a string.
fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap(),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Sets `a.b.c = value` in a TOML table, creating intermediate tables.
pub fn set_dotted(table: &mut toml::Table, key: &str, raw: &str) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("invalid override key '{key}'")));
    }
    let mut cur = table;
    for part in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override '{key}': '{part}' is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), parse_value(raw));
    Ok(())
}

impl FitConfig {
    /// Reads a TOML file, applies `key=value` overrides, and validates.
    /// Relative `input`/`output` paths in the file resolve against its directory.
    pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut table: toml::Table = text
            .parse()
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for key in ["input", "output"] {
            if let Some(toml::Value::String(s)) = table.get(key) {
                let p = Path::new(s);
                if p.is_relative() {
                    let joined = base.join(p).to_string_lossy().into_owned();
                    table.insert(key.into(), toml::Value::String(joined));
                }
            }
        }
        Self::from_table(table, overrides)
    }

    pub fn from_table(mut table: toml::Table, overrides: &[(String, String)]) -> Result<Self> {
        for (k, v) in overrides {
            set_dotted(&mut table, k, v)?;
        }
        let cfg: FitConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn p(&self) -> usize {
        self.coordinates.len()
    }

    pub fn dims(&self) -> Vec<usize> {
        if self.basis_dims.len() == 1 {
            vec![self.basis_dims[0]; self.p()]
        } else {
            self.basis_dims.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.p();
        if p == 0 {
            return Err(Error::Config("at least one coordinate column is required".into()));
        }
        let mut seen = self.coordinates.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != p || self.coordinates.contains(&self.response) {
            return Err(Error::Config("coordinate and response columns must be distinct".into()));
        }
        if self.basis_dims.len() != 1 && self.basis_dims.len() != p {
            return Err(Error::Config(format!(
                "basis_dims has {} entries for {p} coordinates",
                self.basis_dims.len()
            )));
        }
        if let Some(d) = self.basis_dims.iter().find(|&&d| d < 4) {
            return Err(Error::Config(format!("basis dimension {d} is below the minimum of 4")));
        }
        if self.chains == 0 {
            return Err(Error::Config("at least one chain is required".into()));
        }
        match &self.prior {
            PriorConfig::Weibull { rate, target_sd, scaling_draws } => {
                if let Some(r) = rate {
                    if r.len() != 1 && r.len() != p {
                        return Err(Error::Config(format!("weibull rate has {} entries for {p} coordinates", r.len())));
                    }
                    if r.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                        return Err(Error::Config("weibull rates must be positive".into()));
                    }
                } else if !(target_sd.is_finite() && *target_sd > 0.0) || *scaling_draws == 0 {
                    return Err(Error::Config("prior scaling needs a positive target_sd and scaling_draws".into()));
                }
            }
            PriorConfig::InverseGamma { alpha, beta } => {
                if !(alpha.is_finite() && *alpha > 0.0 && beta.is_finite() && *beta > 0.0) {
                    return Err(Error::Config("inverse gamma hyperparameters must be positive".into()));
                }
            }
        }
        self.sampler.validate(p)?;
        for e in &self.effects {
            e.term(&self.coordinates)?;
            if e.grid_len() < 2 {
                return Err(Error::Config("effect grids need at least 2 points".into()));
            }
            if !(e.level > 0.0 && e.level < 1.0) {
                return Err(Error::Config(format!("band level {} outside (0, 1)", e.level)));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form of the resolved configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_example_loads() {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/temperature.toml");
        let cfg = FitConfig::load(&path, &[]).unwrap();
        assert_eq!(cfg.dims(), vec![40, 10, 10]);
        assert_eq!(cfg.effects.len(), 2);
        assert!(cfg.input.ends_with("examples/temperature.csv"));
    }

    const MINIMAL: &str = r#"
input = "data.csv"
coordinates = ["x1", "x2"]
response = "y"
output = "out"
"#;

    #[test]
    fn defaults_and_broadcast() {
        let cfg = FitConfig::from_table(MINIMAL.parse().unwrap(), &[]).unwrap();
        assert_eq!(cfg.dims(), vec![10, 10]);
        assert_eq!(cfg.chains, 4);
        assert_eq!(cfg.sampler.iterations, 1200);
        assert_eq!(cfg.sampler.burn_in, 200);
        assert!(matches!(cfg.prior, PriorConfig::Weibull { rate: None, .. }));
    }

    #[test]
    fn overrides_apply() {
        let ov = vec![
            ("sampler.iterations".to_string(), "300".to_string()),
            ("basis_dims".to_string(), "[5, 6]".to_string()),
            ("prior.kind".to_string(), "inverse_gamma".to_string()),
            ("response".to_string(), "z".to_string()),
        ];
        let cfg = FitConfig::from_table(MINIMAL.parse().unwrap(), &ov).unwrap();
        assert_eq!(cfg.sampler.iterations, 300);
        assert_eq!(cfg.dims(), vec![5, 6]);
        assert_eq!(cfg.response, "z");
        assert_eq!(cfg.prior, PriorConfig::InverseGamma { alpha: 0.001, beta: 0.001 });
    }

    #[test]
    fn hash_tracks_content() {
        let a = FitConfig::from_table(MINIMAL.parse().unwrap(), &[]).unwrap();
        let b = FitConfig::from_table(MINIMAL.parse().unwrap(), &[("sampler.seed".into(), "9".into())]).unwrap();
        assert_eq!(a.hash(), a.clone().hash());
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn effect_for_unknown_coordinate_is_rejected() {
        let text = format!("{MINIMAL}\n[[effects]]\ncoordinates = [\"x3\"]\n");
        let err = FitConfig::from_table(text.parse().unwrap(), &[]).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn rejects_unknown_keys_and_small_dims() {
        let text = format!("{MINIMAL}\nbogus = 1\n");
        assert!(FitConfig::from_table(text.parse().unwrap(), &[]).is_err());
        let err = FitConfig::from_table(MINIMAL.parse().unwrap(), &[("basis_dims".into(), "[3]".into())]);
        assert!(err.is_err());
    }
}
