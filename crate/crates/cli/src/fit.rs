use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use dprfs::baselines::{self, DpGmmHyper, EmConfig, GmmFit};
use dprfs::sampler::{self, ChainConfig, ChainTrace, Hyperparams, DEFAULT_DEGENERATE_FACTOR};
use dprfs::synth::{self, Dataset};
use dprfs::GammaParams;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{CliError, CliResult};
use crate::io;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Dirichlet process mixture of Poisson RFS components over sets.
    Dprfs,
    /// Dirichlet process Gaussian mixture over the pooled points.
    Dpgmm,
    /// Finite Gaussian mixture over the pooled points, fitted by EM.
    Gmm,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Dataset file (JSON Lines).
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// TOML file with fit settings; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Random seed [default: $RFS_SEED, else 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Gibbs sweeps after initialization [default: 500].
    #[arg(long)]
    pub sweeps: Option<usize>,
    /// Sweeps discarded before the K mode [default: 10% of sweeps].
    #[arg(long)]
    pub burn_in: Option<usize>,
    /// Independent chains run concurrently, chain i seeded with seed + i.
    #[arg(long)]
    pub chains: Option<usize>,
    /// Number of components (gmm only).
    #[arg(long)]
    pub k: Option<usize>,
    /// Initial DP concentration [default: 1].
    #[arg(long)]
    pub eta: Option<f64>,
    /// Keep the concentration fixed instead of resampling it.
    #[arg(long)]
    pub fixed_eta: bool,
    /// EM restarts (gmm only) [default: 5].
    #[arg(long)]
    pub restarts: Option<usize>,
    /// Maximum EM iterations (gmm only) [default: 500].
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Flag clusters whose predictive covariance norm exceeds this multiple
    /// of the data covariance norm [default: 1e6].
    #[arg(long)]
    pub degenerate_factor: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FitFile {
    method: Option<Method>,
    seed: Option<u64>,
    sweeps: Option<usize>,
    burn_in: Option<usize>,
    chains: Option<usize>,
    k: Option<usize>,
    concentration: Option<f64>,
    resample_concentration: Option<bool>,
    concentration_shape: Option<f64>,
    concentration_rate: Option<f64>,
    rate_shape: Option<f64>,
    rate_rate: Option<f64>,
    restarts: Option<usize>,
    max_iters: Option<usize>,
    tol: Option<f64>,
    degenerate_factor: Option<f64>,
}

/// Fully resolved fit settings, echoed into every JSON output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub method: Method,
    pub seed: u64,
    pub sweeps: usize,
    pub burn_in: usize,
    pub chains: usize,
    pub k: Option<usize>,
    pub concentration: f64,
    pub resample_concentration: bool,
    /// `Gamma(shape, rate)` hyperprior on the concentration.
    pub concentration_shape: f64,
    pub concentration_rate: f64,
    /// `Gamma(shape, rate)` prior on the Poisson rate (dprfs only).
    pub rate_shape: f64,
    pub rate_rate: f64,
    pub restarts: usize,
    pub max_iters: usize,
    pub tol: f64,
    pub degenerate_factor: f64,
}

fn resolve(args: &FitArgs) -> CliResult<FitConfig> {
    let file: FitFile = match &args.config {
        Some(path) => io::read_toml(path)?,
        None => FitFile::default(),
    };
    let method = args
        .method
        .or(file.method)
        .ok_or_else(|| CliError::Input("--method is required (dprfs, dpgmm or gmm)".into()))?;
    let seed = match args.seed.or(file.seed) {
        Some(s) => s,
        None => io::env_seed()?.unwrap_or(0),
    };
    let sweeps = args.sweeps.or(file.sweeps).unwrap_or(500);
    let em = EmConfig::default();
    let config = FitConfig {
        method,
        seed,
        sweeps,
        burn_in: args.burn_in.or(file.burn_in).unwrap_or(sweeps / 10),
        chains: args.chains.or(file.chains).unwrap_or(1),
        k: args.k.or(file.k),
        concentration: args.eta.or(file.concentration).unwrap_or(1.0),
        resample_concentration: !args.fixed_eta && file.resample_concentration.unwrap_or(true),
        concentration_shape: file.concentration_shape.unwrap_or(1.0),
        concentration_rate: file.concentration_rate.unwrap_or(1.0),
        rate_shape: file.rate_shape.unwrap_or(1.0),
        rate_rate: file.rate_rate.unwrap_or(1.0),
        restarts: args.restarts.or(file.restarts).unwrap_or(em.restarts),
        max_iters: args.max_iters.or(file.max_iters).unwrap_or(em.max_iters),
        tol: file.tol.unwrap_or(em.tol),
        degenerate_factor: args
            .degenerate_factor
            .or(file.degenerate_factor)
            .unwrap_or(DEFAULT_DEGENERATE_FACTOR),
    };
    if config.chains == 0 {
        return Err(CliError::Input("--chains must be at least 1".into()));
    }
    if config.burn_in > config.sweeps {
        return Err(CliError::Input(format!(
            "burn-in {} exceeds the {} sweeps",
            config.burn_in, config.sweeps
        )));
    }
    if method == Method::Gmm && config.k.is_none() {
        return Err(CliError::Input("--k is required for gmm".into()));
    }
    if config.degenerate_factor.is_nan() || config.degenerate_factor <= 0.0 {
        return Err(CliError::Input("degenerate factor must be positive".into()));
    }
    Ok(config)
}

pub fn run(args: &FitArgs) -> CliResult<()> {
    let config = resolve(args)?;
    let dataset = synth::read_dataset(&args.data).map_err(|e| CliError::at(&args.data, e))?;
    if dataset.patterns.is_empty() {
        return Err(CliError::at(&args.data, "dataset has no observations"));
    }
    io::ensure_dir(&args.out)?;
    let dirs: Vec<PathBuf> = if config.chains == 1 {
        vec![args.out.clone()]
    } else {
        (0..config.chains).map(|i| args.out.join(format!("chain_{i}"))).collect()
    };
    let results: Vec<CliResult<()>> = std::thread::scope(|scope| {
        let handles: Vec<_> = dirs
            .iter()
            .enumerate()
            .map(|(i, dir)| {
                let chain = FitConfig {
                    seed: config.seed + i as u64,
                    ..config.clone()
                };
                let dataset = &dataset;
                scope.spawn(move || fit_one(&chain, dataset, dir))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("fit thread panicked")).collect()
    });
    results.into_iter().collect::<CliResult<Vec<()>>>()?;
    println!("{}", serde_json::to_string_pretty(&config)?);
    Ok(())
}

fn fit_one(config: &FitConfig, dataset: &Dataset, dir: &Path) -> CliResult<()> {
    io::ensure_dir(dir)?;
    let chain = ChainConfig {
        num_sweeps: config.sweeps,
        burn_in: Some(config.burn_in),
        seed: config.seed,
        resample_concentration: config.resample_concentration,
        ..ChainConfig::default()
    };
    let eta_prior = GammaParams::new(config.concentration_shape, config.concentration_rate)?;
    let meta = &dataset.meta;
    match config.method {
        Method::Dprfs => {
            let mut hyper = Hyperparams::from_data(&dataset.patterns)?;
            hyper.prior.rate_prior = GammaParams::new(config.rate_shape, config.rate_rate)?;
            hyper = Hyperparams::new(hyper.prior, config.concentration, Some(eta_prior))?;
            let trace = sampler::run_chain(&dataset.patterns, &hyper, &chain)?;
            let summary = sampler::summarize(&trace, &dataset.patterns, &hyper, config.degenerate_factor)?;
            write_chain_outputs(dir, config, meta, "set", &trace)?;
            io::write_json(
                &dir.join("summary.json"),
                &json!({ "method": config.method, "config": config, "dataset": meta, "summary": summary }),
            )
        }
        Method::Dpgmm => {
            let points = baselines::pool_patterns(&dataset.patterns);
            let mut hyper = DpGmmHyper::from_points(&points)?;
            hyper.concentration = config.concentration;
            hyper.concentration_prior = Some(eta_prior);
            let trace = baselines::fit_dpgmm_collapsed(&points, &hyper, &chain)?;
            let summary = baselines::summarize_dpgmm(&trace, &points, &hyper, config.degenerate_factor)?;
            write_chain_outputs(dir, config, meta, "point", &trace)?;
            io::write_json(
                &dir.join("summary.json"),
                &json!({ "method": config.method, "config": config, "dataset": meta, "summary": summary }),
            )
        }
        Method::Gmm => {
            let points = baselines::pool_patterns(&dataset.patterns);
            let em = EmConfig {
                max_iters: config.max_iters,
                tol: config.tol,
                seed: config.seed,
                restarts: config.restarts,
            };
            let k = config.k.expect("validated");
            let fit = baselines::fit_gmm_em(&points, k, &em)?;
            write_gmm_outputs(dir, config, meta, &points, &fit)
        }
    }
}

fn write_chain_outputs(
    dir: &Path,
    config: &FitConfig,
    meta: &serde_json::Map<String, serde_json::Value>,
    unit: &str,
    trace: &ChainTrace,
) -> CliResult<()> {
    io::write_csv(
        &dir.join("trace.csv"),
        "sweep,k,eta,loglik",
        trace
            .records
            .iter()
            .map(|r| format!("{},{},{},{}", r.sweep, r.k, r.concentration, r.log_likelihood)),
    )?;
    let last = trace.last().expect("a chain records its initial state");
    io::write_json(
        &dir.join("assignments.json"),
        &json!({
            "method": config.method,
            "config": config,
            "dataset": meta,
            "unit": unit,
            "sweep": last.sweep,
            "assignments": last.assignments,
        }),
    )
}

fn write_gmm_outputs(
    dir: &Path,
    config: &FitConfig,
    meta: &serde_json::Map<String, serde_json::Value>,
    points: &[Vec<f64>],
    fit: &GmmFit,
) -> CliResult<()> {
    let k = fit.model.k();
    // EM has no concentration; the column stays empty.
    io::write_csv(
        &dir.join("trace.csv"),
        "sweep,k,eta,loglik",
        fit.log_likelihood_trace
            .iter()
            .enumerate()
            .map(|(i, ll)| format!("{i},{k},,{ll}")),
    )?;
    let assignments = fit.model.predict(points)?;
    io::write_json(
        &dir.join("assignments.json"),
        &json!({
            "method": config.method,
            "config": config,
            "dataset": meta,
            "unit": "point",
            "sweep": fit.log_likelihood_trace.len(),
            "assignments": assignments,
        }),
    )?;
    let components: Vec<_> = fit
        .model
        .weights()
        .iter()
        .zip(fit.model.components())
        .enumerate()
        .map(|(label, (w, c))| {
            let cov = c.covariance();
            json!({
                "label": label,
                "weight": w,
                "mean": c.mean().as_slice(),
                "covariance": (0..cov.nrows()).map(|i| cov.row(i).iter().copied().collect::<Vec<f64>>()).collect::<Vec<_>>(),
            })
        })
        .collect();
    io::write_json(
        &dir.join("summary.json"),
        &json!({
            "method": config.method,
            "config": config,
            "dataset": meta,
            "summary": {
                "k": k,
                "log_likelihood": fit.log_likelihood,
                "iterations": fit.log_likelihood_trace.len(),
                "regularized": fit.regularized,
                "components": components,
            },
        }),
    )
}
