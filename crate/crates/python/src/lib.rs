//! Python bindings: point-pattern densities, the conjugate predictive,
//! the star generator, DP-RFS / DP-GMM / EM fits and evaluation.
//!
//! Point patterns cross the boundary as lists of coordinate lists
//! (`[]` for the empty pattern).

use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use dprfs::baselines::{self, DpGmmHyper, EmConfig};
use dprfs::conjugate;
use dprfs::eval;
use dprfs::rfs::{self, GaussianParams, PointPattern, PoissonRfsParams};
use dprfs::sampler::{self, ChainConfig, ChainTrace, Hyperparams, PosteriorSummary};
use dprfs::synth::{self, StarConfig};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Point patterns as nested Python lists.
type Patterns = Vec<Vec<Vec<f64>>>;

fn to_py(err: dprfs::Error) -> PyErr {
    match err {
        dprfs::Error::Numerical(msg) => PyArithmeticError::new_err(msg),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn infer_dim(patterns: &[Vec<Vec<f64>>], dim: Option<usize>) -> PyResult<usize> {
    dim.or_else(|| patterns.iter().flatten().next().map(Vec::len))
        .ok_or_else(|| PyValueError::new_err("cannot infer the dimension: pass dim="))
}

fn patterns(raw: &[Vec<Vec<f64>>], dim: Option<usize>) -> PyResult<Vec<PointPattern>> {
    let d = infer_dim(raw, dim)?;
    raw.iter().map(|p| PointPattern::new(d, p).map_err(to_py)).collect()
}

fn gaussian(mean: Vec<f64>, cov: Vec<Vec<f64>>) -> PyResult<GaussianParams> {
    let d = mean.len();
    if cov.len() != d || cov.iter().any(|row| row.len() != d) {
        return Err(PyValueError::new_err(format!("covariance must be {d}x{d}")));
    }
    let flat: Vec<f64> = cov.into_iter().flatten().collect();
    GaussianParams::new(DVector::from_vec(mean), DMatrix::from_row_slice(d, d, &flat)).map_err(to_py)
}

/// Log density of a point pattern under a Poisson RFS with the given rate
/// and Gaussian feature density.
#[pyfunction]
fn log_poisson_rfs_density(points: Vec<Vec<f64>>, rate: f64, mean: Vec<f64>, cov: Vec<Vec<f64>>) -> PyResult<f64> {
    let params = PoissonRfsParams::new(rate, gaussian(mean, cov)?).map_err(to_py)?;
    let x = PointPattern::new(params.dim(), &points).map_err(to_py)?;
    rfs::log_poisson_rfs_density(&x, &params).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (rate, mean, cov, seed=0))]
fn sample_poisson_rfs(rate: f64, mean: Vec<f64>, cov: Vec<Vec<f64>>, seed: u64) -> PyResult<Vec<Vec<f64>>> {
    let params = PoissonRfsParams::new(rate, gaussian(mean, cov)?).map_err(to_py)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(rfs::sample_poisson_rfs(&params, &mut rng).to_vecs())
}

/// Conjugate Gamma × Normal-inverse-Wishart prior over Poisson RFS
/// parameters.
#[pyclass(module = "dprfs_py", from_py_object)]
#[derive(Clone)]
struct RfsPrior {
    inner: conjugate::RfsPrior,
}

#[pymethods]
impl RfsPrior {
    /// Data-driven defaults: `Gamma(1, 1)` on the rate, NIW centred on the
    /// pooled points.
    #[staticmethod]
    #[pyo3(signature = (data, dim=None))]
    fn from_data(data: Vec<Vec<Vec<f64>>>, dim: Option<usize>) -> PyResult<Self> {
        let data = patterns(&data, dim)?;
        Ok(Self {
            inner: conjugate::RfsPrior::from_data(&data).map_err(to_py)?,
        })
    }

    #[new]
    fn new(
        rate_shape: f64,
        rate_rate: f64,
        mean_loc: Vec<f64>,
        mean_scale: f64,
        dof: f64,
        scale_matrix: Vec<Vec<f64>>,
    ) -> PyResult<Self> {
        let d = mean_loc.len();
        if scale_matrix.len() != d || scale_matrix.iter().any(|r| r.len() != d) {
            return Err(PyValueError::new_err(format!("scale matrix must be {d}x{d}")));
        }
        let flat: Vec<f64> = scale_matrix.into_iter().flatten().collect();
        let niw = conjugate::NiwParams::new(
            DVector::from_vec(mean_loc),
            mean_scale,
            dof,
            DMatrix::from_row_slice(d, d, &flat),
        )
        .map_err(to_py)?;
        let gamma = conjugate::GammaParams::new(rate_shape, rate_rate).map_err(to_py)?;
        Ok(Self {
            inner: conjugate::RfsPrior::new(gamma, niw),
        })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn rate_prior(&self) -> (f64, f64) {
        (self.inner.rate_prior.shape(), self.inner.rate_prior.rate())
    }

    /// Posterior predictive log density of `pattern` given the sets in
    /// `given`.
    #[pyo3(signature = (pattern, given=Vec::new()))]
    fn log_predictive(&self, pattern: Vec<Vec<f64>>, given: Vec<Vec<Vec<f64>>>) -> PyResult<f64> {
        let d = self.inner.dim();
        let given = patterns(&given, Some(d))?;
        let stats = conjugate::SetSufficientStats::from_patterns(d, &given).map_err(to_py)?;
        let x = PointPattern::new(d, &pattern).map_err(to_py)?;
        conjugate::log_predictive_set(&self.inner, &stats, &x).map_err(to_py)
    }

    /// Posterior `(shape, rate)` of the Poisson rate given the sets.
    fn rate_posterior(&self, given: Vec<Vec<Vec<f64>>>) -> PyResult<(f64, f64)> {
        let d = self.inner.dim();
        let given = patterns(&given, Some(d))?;
        let stats = conjugate::SetSufficientStats::from_patterns(d, &given).map_err(to_py)?;
        let post = conjugate::gamma_posterior(&self.inner.rate_prior, &stats);
        Ok((post.shape(), post.rate()))
    }

    fn __repr__(&self) -> String {
        format!(
            "RfsPrior(dim={}, rate_prior=Gamma({}, {}))",
            self.inner.dim(),
            self.inner.rate_prior.shape(),
            self.inner.rate_prior.rate()
        )
    }
}

/// Star benchmark data: returns `(patterns, labels)`.
#[pyfunction]
#[pyo3(signature = (n=synth::DEFAULT_NUM_OBSERVATIONS, seed=0, rates=None, corner_offset=synth::DEFAULT_CORNER_OFFSET, center_variance=synth::DEFAULT_CENTER_VARIANCE))]
fn generate_star(
    n: usize,
    seed: u64,
    rates: Option<Vec<f64>>,
    corner_offset: f64,
    center_variance: f64,
) -> PyResult<(Patterns, Vec<usize>)> {
    let mut config = StarConfig::star(corner_offset, center_variance, n, seed);
    if let Some(r) = rates {
        config.component_rates = r;
    }
    let (data, labels) = synth::generate_star(&config).map_err(to_py)?;
    Ok((data.iter().map(PointPattern::to_vecs).collect(), labels))
}

fn chain_config(sweeps: usize, burn_in: Option<usize>, seed: u64, resample: bool) -> ChainConfig {
    ChainConfig {
        num_sweeps: sweeps,
        burn_in,
        seed,
        resample_concentration: resample,
        ..ChainConfig::default()
    }
}

fn fit_result<'py>(py: Python<'py>, trace: &ChainTrace, summary: &PosteriorSummary) -> PyResult<Bound<'py, PyDict>> {
    let out = PyDict::new(py);
    let records = &trace.records;
    out.set_item("sweep", records.iter().map(|r| r.sweep).collect::<Vec<_>>())?;
    out.set_item("k", records.iter().map(|r| r.k).collect::<Vec<_>>())?;
    out.set_item("eta", records.iter().map(|r| r.concentration).collect::<Vec<_>>())?;
    out.set_item("loglik", records.iter().map(|r| r.log_likelihood).collect::<Vec<_>>())?;
    out.set_item("assignments", records.last().map(|r| r.assignments.clone()))?;
    out.set_item("k_mode", summary.k_mode)?;
    out.set_item("burn_in", trace.burn_in)?;
    let clusters: Vec<Bound<'py, PyDict>> = summary
        .clusters
        .iter()
        .map(|c| {
            let d = PyDict::new(py);
            d.set_item("label", c.label)?;
            d.set_item("member_count", c.member_count)?;
            d.set_item("total_points", c.total_points)?;
            d.set_item("mean_rate", c.mean_rate)?;
            d.set_item("mean_location", c.mean_location.clone())?;
            d.set_item("predictive_covariance_norm", c.predictive_covariance_norm)?;
            d.set_item("degenerate", c.degenerate)?;
            Ok(d)
        })
        .collect::<PyResult<_>>()?;
    out.set_item("clusters", clusters)?;
    Ok(out)
}

/// Collapsed Gibbs fit of the DP-RFS mixture. Returns a dict with the
/// per-sweep trace, the final assignments and per-cluster summaries.
#[pyfunction]
#[pyo3(signature = (data, sweeps=500, burn_in=None, seed=0, eta=1.0, resample_eta=true, prior=None, dim=None))]
#[allow(clippy::too_many_arguments)]
fn fit_dprfs<'py>(
    py: Python<'py>,
    data: Vec<Vec<Vec<f64>>>,
    sweeps: usize,
    burn_in: Option<usize>,
    seed: u64,
    eta: f64,
    resample_eta: bool,
    prior: Option<RfsPrior>,
    dim: Option<usize>,
) -> PyResult<Bound<'py, PyDict>> {
    let dim = dim.or(prior.as_ref().map(|p| p.inner.dim()));
    let data = patterns(&data, dim)?;
    let defaults = Hyperparams::from_data(&data).map_err(to_py)?;
    let hyper = Hyperparams::new(
        prior.map_or(defaults.prior, |p| p.inner),
        eta,
        defaults.concentration_prior,
    )
    .map_err(to_py)?;
    let config = chain_config(sweeps, burn_in, seed, resample_eta);
    let (trace, summary) = py
        .detach(|| -> dprfs::Result<_> {
            let trace = sampler::run_chain(&data, &hyper, &config)?;
            let summary = sampler::summarize(&trace, &data, &hyper, sampler::DEFAULT_DEGENERATE_FACTOR)?;
            Ok((trace, summary))
        })
        .map_err(to_py)?;
    fit_result(py, &trace, &summary)
}

/// Collapsed Gibbs fit of a DP Gaussian mixture over individual points.
#[pyfunction]
#[pyo3(signature = (points, sweeps=500, burn_in=None, seed=0))]
fn fit_dpgmm<'py>(
    py: Python<'py>,
    points: Vec<Vec<f64>>,
    sweeps: usize,
    burn_in: Option<usize>,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let hyper = DpGmmHyper::from_points(&points).map_err(to_py)?;
    let config = chain_config(sweeps, burn_in, seed, true);
    let (trace, summary) = py
        .detach(|| -> dprfs::Result<_> {
            let trace = baselines::fit_dpgmm_collapsed(&points, &hyper, &config)?;
            let summary =
                baselines::summarize_dpgmm(&trace, &points, &hyper, sampler::DEFAULT_DEGENERATE_FACTOR)?;
            Ok((trace, summary))
        })
        .map_err(to_py)?;
    fit_result(py, &trace, &summary)
}

/// EM fit of a `k`-component Gaussian mixture.
#[pyfunction]
#[pyo3(signature = (points, k, seed=0, restarts=5, max_iters=500))]
fn fit_gmm<'py>(
    py: Python<'py>,
    points: Vec<Vec<f64>>,
    k: usize,
    seed: u64,
    restarts: usize,
    max_iters: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let config = EmConfig {
        seed,
        restarts,
        max_iters,
        ..EmConfig::default()
    };
    let fit = py
        .detach(|| baselines::fit_gmm_em(&points, k, &config))
        .map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("weights", fit.model.weights().to_vec())?;
    out.set_item(
        "means",
        fit.model
            .components()
            .iter()
            .map(|c| c.mean().as_slice().to_vec())
            .collect::<Vec<_>>(),
    )?;
    out.set_item(
        "covariances",
        fit.model
            .components()
            .iter()
            .map(|c| {
                let m = c.covariance();
                (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
            })
            .collect::<Vec<Vec<Vec<f64>>>>(),
    )?;
    out.set_item("log_likelihood", fit.log_likelihood)?;
    out.set_item("log_likelihood_trace", fit.log_likelihood_trace.clone())?;
    out.set_item("regularized", fit.regularized)?;
    out.set_item("assignments", fit.model.predict(&points).map_err(to_py)?)?;
    Ok(out)
}

/// Union of all points across patterns, in order.
#[pyfunction]
fn pool_patterns(data: Vec<Vec<Vec<f64>>>) -> Vec<Vec<f64>> {
    data.into_iter().flatten().collect()
}

#[pyfunction]
fn partition_accuracy(predicted: Vec<usize>, truth: Vec<usize>) -> PyResult<f64> {
    eval::partition_accuracy(&predicted, &truth).map_err(to_py)
}

/// Number of distinct values in one Pólya urn run of length `m`.
#[pyfunction]
#[pyo3(signature = (m, eta, seed=0))]
fn polya_urn_distinct(m: usize, eta: f64, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut next = 0usize;
    let draws = sampler::polya_urn_sample(
        m,
        eta,
        |_| {
            next += 1;
            next
        },
        &mut rng,
    );
    let mut seen = draws;
    seen.sort_unstable();
    seen.dedup();
    seen.len()
}

#[pyfunction]
fn expected_distinct(m: usize, eta: f64) -> f64 {
    sampler::expected_distinct(m, eta)
}

#[pymodule]
fn dprfs_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<RfsPrior>()?;
    m.add_function(wrap_pyfunction!(log_poisson_rfs_density, m)?)?;
    m.add_function(wrap_pyfunction!(sample_poisson_rfs, m)?)?;
    m.add_function(wrap_pyfunction!(generate_star, m)?)?;
    m.add_function(wrap_pyfunction!(fit_dprfs, m)?)?;
    m.add_function(wrap_pyfunction!(fit_dpgmm, m)?)?;
    m.add_function(wrap_pyfunction!(fit_gmm, m)?)?;
    m.add_function(wrap_pyfunction!(pool_patterns, m)?)?;
    m.add_function(wrap_pyfunction!(partition_accuracy, m)?)?;
    m.add_function(wrap_pyfunction!(polya_urn_distinct, m)?)?;
    m.add_function(wrap_pyfunction!(expected_distinct, m)?)?;
    Ok(())
}
