//! Batch front end: configuration, data ingestion, fit orchestration,
//! artifacts, simulation harness and plot data.
//!
//! Subcommands are `fit`, `simulate`, `effects`, `diagnose` and `plotdata`.
//! Thread count follows `RAYON_NUM_THREADS`.

pub mod artifacts;
pub mod config;
pub mod data;
pub mod fit;
pub mod plot;
pub mod simulate;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::diagnostics;
use crate::priors::DEFAULT_IG;
use crate::{Error, Result};
use artifacts::LoadedFit;
use config::{EffectRequest, FitConfig, PriorConfig};
use simulate::{SimScenario, TestFunction};

#[derive(Debug, Parser)]
#[command(name = "tensor-pspline", version, about = "Bayesian anisotropic tensor-product P-spline smoothing")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model described by a TOML configuration file.
    Fit(FitArgs),
    /// Run the simulation harness on known test functions.
    Simulate(SimulateArgs),
    /// Compute a main effect or interaction from a finished fit.
    Effects(EffectsArgs),
    /// Summaries and convergence diagnostics of a finished fit.
    Diagnose(DiagnoseArgs),
    /// Slices, traces and effect bands on original scales.
    Plotdata(PlotdataArgs),
}

fn parse_key_value(s: &str) -> std::result::Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| format!("expected KEY=VALUE, got '{s}'"))
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Override any configuration key, e.g. `--set sampler.iterations=500`.
    #[arg(long = "set", value_parser = parse_key_value)]
    pub overrides: Vec<(String, String)>,
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    #[arg(long)]
    pub chains: Option<usize>,
}

impl FitArgs {
    fn overrides(&self) -> Vec<(String, String)> {
        let q = |p: &Path| toml::Value::String(p.to_string_lossy().into_owned()).to_string();
        let mut out = Vec::new();
        if let Some(p) = &self.input {
            out.push(("input".into(), q(p)));
        }
        if let Some(p) = &self.output {
            out.push(("output".into(), q(p)));
        }
        let nums = [
            ("sampler.seed", self.seed.map(|v| v.to_string())),
            ("sampler.iterations", self.iterations.map(|v| v.to_string())),
            ("sampler.burn_in", self.burn_in.map(|v| v.to_string())),
            ("sampler.thin", self.thin.map(|v| v.to_string())),
            ("chains", self.chains.map(|v| v.to_string())),
        ];
        out.extend(nums.into_iter().filter_map(|(k, v)| v.map(|v| (k.to_string(), v))));
        out.extend(self.overrides.iter().cloned());
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum PriorKind {
    Weibull,
    InverseGamma,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value = "f1")]
    pub function: String,
    #[arg(long, default_value_t = 2)]
    pub p: usize,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 10)]
    pub d: usize,
    #[arg(long, default_value_t = 0.5)]
    pub sigma: f64,
    #[arg(long, default_value_t = 1)]
    pub replicates: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub chains: usize,
    #[arg(long, default_value_t = 1200)]
    pub iterations: usize,
    #[arg(long, default_value_t = 200)]
    pub burn_in: usize,
    #[arg(long, value_enum, default_value_t = PriorKind::Weibull)]
    pub prior: PriorKind,
    /// Fixed Weibull rate; prior scaling is used when absent.
    #[arg(long)]
    pub rate: Option<f64>,
    /// Replicate-level CSV output.
    #[arg(long, default_value = "simulation.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitLocation {
    /// Fit output directory (containing manifest.json).
    #[arg(long)]
    pub fit: PathBuf,
    /// Configuration the fit is expected to come from; mismatches are errors.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

impl FitLocation {
    fn load(&self) -> Result<LoadedFit> {
        let fit = LoadedFit::load(&self.fit)?;
        if let Some(path) = &self.config {
            fit.manifest.check_config(&FitConfig::load(path, &[])?)?;
        }
        Ok(fit)
    }
}

#[derive(Debug, Args)]
pub struct EffectsArgs {
    #[command(flatten)]
    pub loc: FitLocation,
    /// One coordinate for a main effect, two (comma-separated) for an interaction.
    #[arg(long, value_delimiter = ',', required = true)]
    pub coords: Vec<String>,
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long, default_value_t = crate::effects::DEFAULT_LEVEL)]
    pub level: f64,
    /// Subtract each draw's integral (overall level).
    #[arg(long)]
    pub center: bool,
    /// Output directory; defaults to the fit directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[command(flatten)]
    pub loc: FitLocation,
    /// Parameters to summarize (default: sigma2 and every tau2_<coord>).
    #[arg(long, value_delimiter = ',')]
    pub params: Vec<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PlotdataArgs {
    #[command(flatten)]
    pub loc: FitLocation,
    /// Fixed coordinates of a slice, e.g. `--slice lat=35 --slice time=2000`.
    #[arg(long = "slice", value_parser = parse_key_value)]
    pub slice: Vec<(String, String)>,
    /// Grid points per free coordinate.
    #[arg(long, default_value_t = 100)]
    pub grid: usize,
    #[arg(long)]
    pub level: Option<f64>,
    /// Parameter traces to emit (sigma2, tau2_<coord>, rho_<coord>, b_<k>).
    #[arg(long = "trace")]
    pub traces: Vec<String>,
    #[arg(long, default_value_t = 0)]
    pub chain: usize,
    /// Effects to emit; comma-separated pairs give interactions.
    #[arg(long = "effect")]
    pub effects: Vec<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn out_dir(out: &Option<PathBuf>, fit: &LoadedFit) -> Result<PathBuf> {
    let dir = out.clone().unwrap_or_else(|| fit.dir.clone());
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Fit(a) => {
            let cfg = FitConfig::load(&a.config, &a.overrides())?;
            let fit = fit::run_fit(&cfg)?;
            let out = &fit.manifest.config.output;
            println!("fit written to {} (config {})", out.display(), fit.manifest.config_hash);
            if let Ok(table) = std::fs::read_to_string(out.join(fit::DIAGNOSTICS_TXT)) {
                print!("{table}");
            }
            Ok(())
        }
        Command::Simulate(a) => {
            let function: TestFunction = a.function.parse()?;
            let mut s = SimScenario::new(function, a.p, a.n, a.d);
            s.sigma = a.sigma;
            s.replicates = a.replicates;
            s.seed = a.seed;
            s.chains = a.chains;
            s.sampler.iterations = a.iterations;
            s.sampler.burn_in = a.burn_in;
            s.prior = match (a.prior, a.rate) {
                (PriorKind::InverseGamma, _) => PriorConfig::InverseGamma {
                    alpha: DEFAULT_IG.0,
                    beta: DEFAULT_IG.1,
                },
                (PriorKind::Weibull, Some(r)) => PriorConfig::Weibull {
                    rate: Some(vec![r]),
                    target_sd: 1.0,
                    scaling_draws: 200,
                },
                (PriorKind::Weibull, None) => PriorConfig::default(),
            };
            let results = simulate::simulate(&s)?;
            simulate::write_results_csv(&a.out, &s, &results)?;
            println!("{:>9} {:>12} {:>10} {:>10}  tau2 medians", "replicate", "mse", "seconds", "accept");
            for r in &results {
                let taus: Vec<String> = r.tau2_median.iter().map(|t| format!("{t:.4e}")).collect();
                println!(
                    "{:>9} {:>12.6} {:>10.2} {:>10.3}  {}",
                    r.replicate,
                    r.mse,
                    r.sampling_seconds,
                    r.acceptance,
                    taus.join(" ")
                );
            }
            let mses: Vec<f64> = results.iter().map(|r| r.mse).collect();
            println!("median mse {:.6}", diagnostics::quantile(&mses, 0.5));
            Ok(())
        }
        Command::Effects(a) => {
            let fit = a.loc.load()?;
            let req = EffectRequest {
                coordinates: a.coords.clone(),
                grid: a.grid,
                level: a.level,
                center: a.center,
            };
            req.term(&fit.manifest.coordinates)?;
            let dir = out_dir(&a.out, &fit)?;
            for f in fit::write_effect(&fit, &req, &dir)? {
                println!("{}", dir.join(f).display());
            }
            Ok(())
        }
        Command::Diagnose(a) => {
            let fit = a.loc.load()?;
            let params = if a.params.is_empty() {
                fit::default_parameters(&fit.manifest.coordinates)
            } else {
                a.params.clone()
            };
            let rows = fit::summarize_parameters(&fit, &params)?;
            if let Some(dir) = &a.out {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                fit::write_diagnostics(dir, &rows)?;
            }
            print!("{}", diagnostics::format_table(&rows));
            Ok(())
        }
        Command::Plotdata(a) => {
            let fit = a.loc.load()?;
            if a.slice.is_empty() && a.traces.is_empty() && a.effects.is_empty() {
                return Err(Error::Config("nothing requested: use --slice, --trace or --effect".into()));
            }
            let dir = out_dir(&a.out, &fit)?;
            if !a.slice.is_empty() {
                let fixed = a
                    .slice
                    .iter()
                    .map(|(k, v)| {
                        v.parse::<f64>()
                            .map(|x| (k.clone(), x))
                            .map_err(|_| Error::Config(format!("slice value '{v}' for '{k}' is not a number")))
                    })
                    .collect::<Result<Vec<_>>>()?;
                let s = plot::slice(&fit, &fixed, a.grid, a.level)?;
                let names: Vec<&str> = s.free.iter().map(|&j| fit.manifest.coordinates[j].as_str()).collect();
                let path = dir.join(format!("slice_{}.csv", names.join("_")));
                plot::write_slice_csv(&path, &fit, &s)?;
                println!("{}", path.display());
            }
            for name in &a.traces {
                let path = dir.join(format!("trace_{name}_chain{}.csv", a.chain));
                plot::write_trace_csv(&path, &fit, name, a.chain)?;
                println!("{}", path.display());
            }
            for spec in &a.effects {
                let req = EffectRequest {
                    coordinates: spec.split(',').map(|s| s.trim().to_string()).collect(),
                    grid: None,
                    level: a.level.unwrap_or(crate::effects::DEFAULT_LEVEL),
                    center: false,
                };
                for f in fit::write_effect(&fit, &req, &dir)? {
                    println!("{}", dir.join(f).display());
                }
            }
            Ok(())
        }
    }
}
