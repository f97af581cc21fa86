//! On-disk fit artifacts: binary sample files, the JSON manifest, and
//! re-ingestion with integrity and drift checks.
//!
//! Sample files hold one row per retained draw, little-endian `f64`, with
//! columns `[σ², ρ_1..ρ_p, b_1..b_D]` on the standardized response scale.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::FitConfig;
use super::data::Rescaling;
use crate::basis::MarginalBasis;
use crate::priors::SmoothingPrior;
use crate::sampler::{ChainOutput, ChainStats, Timings};
use crate::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainRecord {
    pub chain: usize,
    pub file: String,
    pub draws: usize,
    pub sha256: String,
    pub stats: ChainStats,
    pub timings: Timings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub config_hash: String,
    pub config: FitConfig,
    pub n: usize,
    pub dims: Vec<usize>,
    pub coordinates: Vec<String>,
    pub response: String,
    pub rescaling: Vec<Rescaling>,
    pub y_mean: f64,
    pub y_scale: f64,
    /// Prior after resolving prior scaling.
    pub prior: SmoothingPrior,
    pub columns: Vec<String>,
    pub chains: Vec<ChainRecord>,
    /// Other files written next to the manifest.
    pub files: Vec<String>,
}

impl Manifest {
    pub fn p(&self) -> usize {
        self.dims.len()
    }

    pub fn num_coefs(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn bases(&self) -> Result<Vec<MarginalBasis>> {
        self.dims.iter().map(|&d| MarginalBasis::new(d)).collect()
    }

    /// Fails if `cfg` differs from the configuration this fit was made with.
    pub fn check_config(&self, cfg: &FitConfig) -> Result<()> {
        let h = cfg.hash();
        if h != self.config_hash {
            return Err(Error::Artifact(format!(
                "configuration drift: fit was produced with config {} but the given config hashes to {h}",
                self.config_hash
            )));
        }
        Ok(())
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }
}

pub fn column_names(coordinates: &[String], num_coefs: usize) -> Vec<String> {
    let mut cols = vec!["sigma2".to_string()];
    cols.extend(coordinates.iter().map(|c| format!("rho_{c}")));
    cols.extend((1..=num_coefs).map(|k| format!("b_{k}")));
    cols
}

pub fn sample_file_name(chain: usize) -> String {
    format!("samples_chain{chain}.bin")
}

/// Writes a chain's draws and returns the file's SHA-256.
pub fn write_samples(path: &Path, out: &ChainOutput) -> Result<String> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut hasher = Sha256::new();
    for s in 0..out.num_draws() {
        let row = std::iter::once(out.sigma2[s])
            .chain(out.rho_draw(s).iter().copied())
            .chain(out.b_draw(s).iter().copied());
        for v in row {
            let bytes = v.to_le_bytes();
            hasher.update(bytes);
            w.write_all(&bytes).map_err(|e| Error::io(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(hasher.finalize()))
}

/// Reads a sample file back into a [`ChainOutput`] with the given metadata.
pub fn read_samples(path: &Path, manifest: &Manifest, record: &ChainRecord) -> Result<ChainOutput> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let digest = hex::encode(Sha256::digest(&bytes));
    if digest != record.sha256 {
        return Err(Error::Artifact(format!(
            "{} does not match the checksum recorded in the manifest",
            path.display()
        )));
    }
    let (p, d) = (manifest.p(), manifest.num_coefs());
    let width = 1 + p + d;
    if bytes.len() != record.draws * width * 8 {
        return Err(Error::Artifact(format!(
            "{} has {} bytes, expected {} draws of {width} values",
            path.display(),
            bytes.len(),
            record.draws
        )));
    }
    let vals: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let mut out = ChainOutput {
        chain: record.chain,
        seed: manifest.config.sampler.seed,
        p,
        num_coefs: d,
        sigma2: Vec::with_capacity(record.draws),
        rho: Vec::with_capacity(record.draws * p),
        b: Vec::with_capacity(record.draws * d),
        y_mean: manifest.y_mean,
        y_scale: manifest.y_scale,
        stats: record.stats.clone(),
        timings: record.timings,
    };
    for row in vals.chunks_exact(width) {
        out.sigma2.push(row[0]);
        out.rho.extend_from_slice(&row[1..1 + p]);
        out.b.extend_from_slice(&row[1 + p..]);
    }
    Ok(out)
}

pub fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<()> {
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(manifest)?;
    fs::write(&path, text).map_err(|e| Error::io(path, e))
}

/// A fit read back from disk.
#[derive(Debug, Clone)]
pub struct LoadedFit {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub chains: Vec<ChainOutput>,
}

impl LoadedFit {
    /// Reads the manifest and every sample file, verifying the format
    /// version, the embedded config hash and the sample checksums.
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: Manifest = serde_json::from_str(&text)?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(Error::Artifact(format!(
                "manifest format {} is not supported (expected {FORMAT_VERSION})",
                manifest.format_version
            )));
        }
        if manifest.config.hash() != manifest.config_hash {
            return Err(Error::Artifact(
                "manifest config does not match its recorded hash".into(),
            ));
        }
        if manifest.columns != column_names(&manifest.coordinates, manifest.num_coefs()) {
            return Err(Error::Artifact("manifest column list is inconsistent with its dimensions".into()));
        }
        let chains = manifest
            .chains
            .iter()
            .map(|r| read_samples(&dir.join(&r.file), &manifest, r))
            .collect::<Result<Vec<_>>>()?;
        Ok(LoadedFit {
            dir: dir.to_path_buf(),
            manifest,
            chains,
        })
    }

    /// Values of a named parameter across all chains, one trace per chain,
    /// on the original response scale: `sigma2` and `tau2_<coord>` are
    /// multiplied by the squared response scale, `rho_<coord>` is shifted by
    /// its log, and `b_<k>` is mapped to `mean + scale·b`.
    pub fn traces(&self, name: &str) -> Result<Vec<Vec<f64>>> {
        let m = &self.manifest;
        let (col, exp) = if let Some(rest) = name.strip_prefix("tau2_") {
            (m.column_index(&format!("rho_{rest}")), true)
        } else {
            (m.column_index(name), false)
        };
        let col = col.ok_or_else(|| {
            Error::Config(format!(
                "unknown parameter '{name}'; expected sigma2, rho_<coord>, tau2_<coord> or b_<k>"
            ))
        })?;
        let p = m.p();
        let (mean, scale) = (m.y_mean, m.y_scale);
        let s2 = scale * scale;
        Ok(self
            .chains
            .iter()
            .map(|c| match col {
                0 => c.sigma2.iter().map(|v| v * s2).collect(),
                k if k <= p && exp => c.rho_trace(k - 1).into_iter().map(|r| r.exp() * s2).collect(),
                k if k <= p => c.rho_trace(k - 1).into_iter().map(|r| r + s2.ln()).collect(),
                k => c.b_trace(k - 1 - p).into_iter().map(|b| mean + scale * b).collect(),
            })
            .collect())
    }

    /// All `b` draws of all chains on the original response scale
    /// (`mean + scale·b`), `draws × D` row-major.
    pub fn all_b_original(&self) -> Vec<f64> {
        let (mean, scale) = (self.manifest.y_mean, self.manifest.y_scale);
        self.chains.iter().flat_map(|c| c.b.iter().map(move |b| mean + scale * b)).collect()
    }

    /// All `b` draws of all chains, `draws × D` row-major.
    pub fn all_b(&self) -> Vec<f64> {
        self.chains.iter().flat_map(|c| c.b.iter().copied()).collect()
    }
}
