//! Fit orchestration and the files written next to the manifest.

use std::fs;
use std::path::Path;

use super::artifacts::{self, ChainRecord, LoadedFit, Manifest, FORMAT_VERSION};
use super::config::{EffectRequest, FitConfig, PriorConfig};
use super::data::{ingest_csv, Dataset};
use super::plot;
use crate::basis::{MarginalBasis, TensorDesign};
use crate::diagnostics::{self, SummaryRow};
use crate::penalty::PenaltyEigenstructure;
use crate::priors::{prior_scaling, ScalingOptions, SmoothingPrior};
use crate::sampler::{check_problem_size, run_chains, ChainOutput, Model, SamplerConfig};
use crate::{Error, Result};

pub const TRACE_FILE: &str = "trace.csv";
pub const DIAGNOSTICS_CSV: &str = "diagnostics.csv";
pub const DIAGNOSTICS_TXT: &str = "diagnostics.txt";

/// Resolves the configured prior, running prior scaling when requested.
pub fn resolve_prior(cfg: &PriorConfig, design: &TensorDesign, es: &PenaltyEigenstructure) -> Result<SmoothingPrior> {
    let p = design.p();
    let prior = match cfg {
        PriorConfig::InverseGamma { alpha, beta } => SmoothingPrior::inverse_gamma(p, *alpha, *beta),
        PriorConfig::Weibull { rate: Some(r), .. } => {
            if r.len() == 1 {
                SmoothingPrior::weibull(p, r[0])
            } else {
                SmoothingPrior::Weibull { rate: r.clone() }
            }
        }
        PriorConfig::Weibull { rate: None, target_sd, scaling_draws } => {
            let opts = ScalingOptions {
                target_sd: *target_sd,
                draws: *scaling_draws,
                ..Default::default()
            };
            let rate = prior_scaling(design, es, &opts)?;
            log::info!("prior scaling: weibull rate {rate:.6e}");
            SmoothingPrior::weibull(p, rate)
        }
    };
    prior.validate(p)?;
    Ok(prior)
}

/// Everything needed to sample from one dataset.
pub struct Problem {
    pub design: TensorDesign,
    pub penalty: PenaltyEigenstructure,
    pub prior: SmoothingPrior,
}

impl Problem {
    pub fn build(x: &[f64], dims: &[usize], prior: &PriorConfig) -> Result<Self> {
        check_problem_size(dims)?;
        let bases = dims.iter().map(|&d| MarginalBasis::new(d)).collect::<Result<Vec<_>>>()?;
        let design = TensorDesign::new(bases, x)?;
        let penalty = PenaltyEigenstructure::for_dims(dims)?;
        let prior = resolve_prior(prior, &design, &penalty)?;
        Ok(Problem { design, penalty, prior })
    }

    pub fn model(&self) -> Model<'_> {
        Model {
            design: &self.design,
            penalty: &self.penalty,
            prior: &self.prior,
        }
    }

    pub fn sample(&self, y: &[f64], sampler: &SamplerConfig, chains: usize) -> Result<Vec<ChainOutput>> {
        run_chains(&self.model(), y, sampler, chains)
    }
}

/// Default summary parameters: `sigma2` and every `tau2_<coord>`.
pub fn default_parameters(coordinates: &[String]) -> Vec<String> {
    std::iter::once("sigma2".to_string())
        .chain(coordinates.iter().map(|c| format!("tau2_{c}")))
        .collect()
}

pub fn summarize_parameters(fit: &LoadedFit, names: &[String]) -> Result<Vec<SummaryRow>> {
    names
        .iter()
        .map(|n| diagnostics::summarize(n, &fit.traces(n)?))
        .collect()
}

pub fn write_diagnostics(dir: &Path, rows: &[SummaryRow]) -> Result<()> {
    let csv_path = dir.join(DIAGNOSTICS_CSV);
    let f = fs::File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    diagnostics::write_csv(rows, f)?;
    let txt_path = dir.join(DIAGNOSTICS_TXT);
    fs::write(&txt_path, diagnostics::format_table(rows)).map_err(|e| Error::io(txt_path, e))
}

/// `chain, iteration, sigma2, tau2_<coord>...` on the original response scale.
pub fn write_trace(dir: &Path, fit: &LoadedFit) -> Result<()> {
    let path = dir.join(TRACE_FILE);
    let mut w = csv::Writer::from_path(&path)?;
    let names = default_parameters(&fit.manifest.coordinates);
    let mut header = vec!["chain".to_string(), "iteration".to_string()];
    header.extend(names.iter().cloned());
    w.write_record(&header)?;
    let traces = names.iter().map(|n| fit.traces(n)).collect::<Result<Vec<_>>>()?;
    for (c, chain) in fit.chains.iter().enumerate() {
        for s in 0..chain.num_draws() {
            let mut rec = vec![chain.chain.to_string(), plot::iteration_number(&fit.manifest.config.sampler, s).to_string()];
            rec.extend(traces.iter().map(|t| t[c][s].to_string()));
            w.write_record(&rec)?;
        }
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(())
}

/// Runs a full fit described by `cfg` and writes all artifacts.
pub fn run_fit(cfg: &FitConfig) -> Result<LoadedFit> {
    cfg.validate()?;
    let data = ingest_csv(&cfg.input, &cfg.coordinates, &cfg.response)?;
    fit_dataset(cfg, &data)
}

/// Fits an already-ingested dataset; `cfg.input` is only recorded.
pub fn fit_dataset(cfg: &FitConfig, data: &Dataset) -> Result<LoadedFit> {
    cfg.validate()?;
    if data.names != cfg.coordinates {
        return Err(Error::Config("dataset coordinates do not match the configuration".into()));
    }
    let dims = cfg.dims();
    let problem = Problem::build(&data.x, &dims, &cfg.prior)?;
    let chains = problem.sample(&data.y, &cfg.sampler, cfg.chains)?;

    let dir = &cfg.output;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut records = Vec::with_capacity(chains.len());
    for c in &chains {
        let file = artifacts::sample_file_name(c.chain);
        let sha256 = artifacts::write_samples(&dir.join(&file), c)?;
        records.push(ChainRecord {
            chain: c.chain,
            file,
            draws: c.num_draws(),
            sha256,
            stats: c.stats.clone(),
            timings: c.timings,
        });
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        config_hash: cfg.hash(),
        config: cfg.clone(),
        n: data.n(),
        dims: dims.clone(),
        coordinates: cfg.coordinates.clone(),
        response: cfg.response.clone(),
        rescaling: data.rescaling.clone(),
        y_mean: chains[0].y_mean,
        y_scale: chains[0].y_scale,
        prior: problem.prior.clone(),
        columns: artifacts::column_names(&cfg.coordinates, dims.iter().product()),
        chains: records,
        files: Vec::new(),
    };
    let mut fit = LoadedFit {
        dir: dir.clone(),
        manifest,
        chains,
    };
    let mut files = vec![TRACE_FILE.to_string()];
    write_trace(dir, &fit)?;
    let draws_per_chain = fit.chains[0].num_draws();
    if draws_per_chain >= diagnostics::MIN_DRAWS {
        let rows = summarize_parameters(&fit, &default_parameters(&cfg.coordinates))?;
        write_diagnostics(dir, &rows)?;
        files.extend([DIAGNOSTICS_CSV.to_string(), DIAGNOSTICS_TXT.to_string()]);
    } else {
        log::warn!("only {draws_per_chain} draws per chain; diagnostics need {}", diagnostics::MIN_DRAWS);
    }
    for req in &cfg.effects {
        files.extend(write_effect(&fit, req, dir)?);
    }
    fit.manifest.files = files;
    artifacts::write_manifest(dir, &fit.manifest)?;
    Ok(fit)
}

/// Computes one requested effect and writes its CSV and JSON files.
pub fn write_effect(fit: &LoadedFit, req: &EffectRequest, dir: &Path) -> Result<Vec<String>> {
    let eff = plot::effect_on_original_scale(fit, req)?;
    let stem = req.stem();
    let (csv_name, json_name) = (format!("{stem}.csv"), format!("{stem}.json"));
    plot::write_effect_csv(&dir.join(&csv_name), fit, &eff)?;
    plot::write_effect_json(&dir.join(&json_name), fit, req, &eff)?;
    Ok(vec![csv_name, json_name])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cli::testutil::small_fit;

    #[test]
    fn fit_writes_every_listed_file() {
        let dir = tempfile::tempdir().unwrap();
        let fit = small_fit(dir.path(), 3);
        let m = &fit.manifest;
        assert_eq!(m.chains.len(), 2);
        assert!(m.chains.iter().all(|c| c.draws == 150));
        for f in m.files.iter().chain(m.chains.iter().map(|c| &c.file)) {
            assert!(dir.path().join(f).is_file(), "{f} missing");
        }
        for f in [TRACE_FILE, DIAGNOSTICS_CSV, DIAGNOSTICS_TXT, "effect_lon.csv", "effect_lon.json"] {
            assert!(m.files.iter().any(|x| x == f), "{f} not listed");
        }
        let trace = fs::read_to_string(dir.path().join(TRACE_FILE)).unwrap();
        assert_eq!(trace.lines().count(), 1 + 2 * 150);
        assert!(trace.starts_with("chain,iteration,sigma2,tau2_lon,tau2_lat"));
    }

    #[test]
    fn reloaded_fit_matches_memory() {
        let dir = tempfile::tempdir().unwrap();
        let fit = small_fit(dir.path(), 4);
        let back = LoadedFit::load(dir.path()).unwrap();
        assert_eq!(back.manifest, fit.manifest);
        for (a, b) in back.chains.iter().zip(&fit.chains) {
            assert_eq!(a.b, b.b);
            assert_eq!(a.rho, b.rho);
            assert_eq!(a.sigma2, b.sigma2);
        }
    }

    #[test]
    fn prior_resolution() {
        let bases = vec![MarginalBasis::new(5).unwrap()];
        let x: Vec<f64> = (0..40).map(|i| i as f64 / 39.0).collect();
        let design = TensorDesign::new(bases, &x).unwrap();
        let es = PenaltyEigenstructure::for_dims(&[5]).unwrap();
        let fixed = PriorConfig::Weibull { rate: Some(vec![2.5]), target_sd: 1.0, scaling_draws: 10 };
        assert_eq!(resolve_prior(&fixed, &design, &es).unwrap(), SmoothingPrior::weibull(1, 2.5));
        let ig = PriorConfig::InverseGamma { alpha: 0.0, beta: 1.0 };
        assert!(resolve_prior(&ig, &design, &es).is_err());
        let scaled = resolve_prior(&PriorConfig::default(), &design, &es).unwrap();
        assert!(matches!(scaled, SmoothingPrior::Weibull { ref rate } if rate[0] > 0.0));
    }

    #[test]
    fn default_parameter_names() {
        let names = default_parameters(&["a".into(), "b".into()]);
        assert_eq!(names, vec!["sigma2", "tau2_a", "tau2_b"]);
    }
}
