//! Plot-ready data on the original coordinate and response scales: effect
//! curves and surfaces, slices of the fitted function, and traces.

use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::artifacts::LoadedFit;
use super::config::EffectRequest;
use crate::basis::design_row;
use crate::effects::{compute_effect, credible_bands, unit_grid, Bands, EffectResult, DEFAULT_LEVEL};
use crate::sampler::SamplerConfig;
use crate::{Error, Result};

/// 1-based MCMC iteration of the `s`-th retained draw.
pub fn iteration_number(cfg: &SamplerConfig, s: usize) -> usize {
    cfg.burn_in + s * cfg.thin + 1
}

/// Effect of `req` with every draw mapped to the original response scale.
pub fn effect_on_original_scale(fit: &LoadedFit, req: &EffectRequest) -> Result<EffectResult> {
    let m = &fit.manifest;
    let term = req.term(&m.coordinates)?;
    let g = req.grid_len();
    let grids = term.coords().iter().map(|_| unit_grid(g)).collect();
    compute_effect(&fit.all_b_original(), &m.bases()?, term, grids, req.level, req.center)
}

fn band_columns(b: &Bands, g: usize) -> [String; 5] {
    [
        b.mean[g].to_string(),
        b.pointwise_lo[g].to_string(),
        b.pointwise_hi[g].to_string(),
        b.simultaneous_lo[g].to_string(),
        b.simultaneous_hi[g].to_string(),
    ]
}

const BAND_HEADER: [&str; 5] = ["mean", "pointwise_lo", "pointwise_hi", "simultaneous_lo", "simultaneous_hi"];

/// Writes gridded bands; `grids` are unit-scale grids of the listed
/// coordinates (row-major product, first slowest).
fn write_grid_csv(path: &Path, fit: &LoadedFit, coords: &[usize], grids: &[Vec<f64>], bands: &Bands) -> Result<()> {
    let m = &fit.manifest;
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<&str> = coords.iter().map(|&j| m.coordinates[j].as_str()).collect();
    header.extend(BAND_HEADER);
    w.write_record(&header)?;
    let lens: Vec<usize> = grids.iter().map(Vec::len).collect();
    let total: usize = lens.iter().product();
    let mut idx = vec![0usize; grids.len()];
    for g in 0..total {
        crate::tensor::digits(g, &lens, &mut idx);
        let mut rec: Vec<String> = coords
            .iter()
            .zip(&idx)
            .zip(grids)
            .map(|((&j, &i), grid)| m.rescaling[j].inverse(grid[i]).to_string())
            .collect();
        rec.extend(band_columns(bands, g));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn write_effect_csv(path: &Path, fit: &LoadedFit, eff: &EffectResult) -> Result<()> {
    write_grid_csv(path, fit, &eff.term.coords(), &eff.grids, &eff.bands)
}

#[derive(Serialize)]
struct EffectMeta<'a> {
    coordinates: &'a [String],
    response: &'a str,
    level: f64,
    centered: bool,
    grid: Vec<usize>,
    draws: usize,
    simultaneous_critical: f64,
    config_hash: &'a str,
}

pub fn write_effect_json(path: &Path, fit: &LoadedFit, req: &EffectRequest, eff: &EffectResult) -> Result<()> {
    let meta = EffectMeta {
        coordinates: &req.coordinates,
        response: &fit.manifest.response,
        level: eff.bands.level,
        centered: eff.centered,
        grid: eff.grids.iter().map(Vec::len).collect(),
        draws: eff.num_draws(),
        simultaneous_critical: eff.bands.critical,
        config_hash: &fit.manifest.config_hash,
    };
    let text = serde_json::to_string_pretty(&meta)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// A slice of the fitted function: some coordinates fixed (original units),
/// the remaining one or two gridded over their observed range.
#[derive(Debug, Clone)]
pub struct Slice {
    pub free: Vec<usize>,
    pub grids: Vec<Vec<f64>>,
    pub bands: Bands,
}

pub fn slice(fit: &LoadedFit, fixed: &[(String, f64)], grid: usize, level: Option<f64>) -> Result<Slice> {
    let m = &fit.manifest;
    let p = m.p();
    let mut point = vec![f64::NAN; p];
    for (name, v) in fixed {
        let j = m
            .coordinates
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::Config(format!("unknown coordinate '{name}' in slice")))?;
        let u = m.rescaling[j].forward_unclamped(*v);
        if !(0.0..=1.0).contains(&u) {
            return Err(Error::OutOfDomain { value: *v, row: None });
        }
        point[j] = u;
    }
    let free: Vec<usize> = (0..p).filter(|&j| point[j].is_nan()).collect();
    if free.is_empty() {
        return Err(Error::Config("a slice must leave at least one coordinate free".into()));
    }
    if free.len() > 2 {
        return Err(Error::Config(format!(
            "a slice may leave at most 2 coordinates free, {} are free",
            free.len()
        )));
    }
    if grid < 2 {
        return Err(Error::Config("slice grids need at least 2 points".into()));
    }
    let grids: Vec<Vec<f64>> = free.iter().map(|_| unit_grid(grid)).collect();
    let lens: Vec<usize> = grids.iter().map(Vec::len).collect();
    let total: usize = lens.iter().product();
    let bases = m.bases()?;
    let mut idx = vec![0usize; free.len()];
    let rows = (0..total)
        .map(|g| {
            crate::tensor::digits(g, &lens, &mut idx);
            let mut x = point.clone();
            for ((&j, &i), gr) in free.iter().zip(&idx).zip(&grids) {
                x[j] = gr[i];
            }
            design_row(&bases, &x)
        })
        .collect::<Result<Vec<_>>>()?;
    let b = fit.all_b_original();
    let d = m.num_coefs();
    let values: Vec<f64> = b
        .par_chunks(d)
        .flat_map_iter(|draw| rows.iter().map(move |r| r.dot(draw)))
        .collect();
    let bands = credible_bands(&values, total, level.unwrap_or(DEFAULT_LEVEL))?;
    Ok(Slice { free, grids, bands })
}

pub fn write_slice_csv(path: &Path, fit: &LoadedFit, s: &Slice) -> Result<()> {
    write_grid_csv(path, fit, &s.free, &s.grids, &s.bands)
}

/// `iteration, value` for one chain of a named parameter.
pub fn write_trace_csv(path: &Path, fit: &LoadedFit, name: &str, chain: usize) -> Result<usize> {
    let traces = fit.traces(name)?;
    let t = traces.get(chain).ok_or_else(|| {
        Error::Config(format!("chain {chain} does not exist ({} chains)", traces.len()))
    })?;
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["iteration", "value"])?;
    for (s, v) in t.iter().enumerate() {
        w.write_record([iteration_number(&fit.manifest.config.sampler, s).to_string(), v.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(t.len())
}
