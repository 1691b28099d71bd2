//! Finite Gaussian mixture fitted by expectation-maximization.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg;
use crate::rfs::GaussianParams;

/// Mixing weights and Gaussian components of a `K`-component mixture.
#[derive(Clone, Debug)]
pub struct GmmModel {
    weights: Vec<f64>,
    components: Vec<GaussianParams>,
}

impl GmmModel {
    pub fn new(weights: Vec<f64>, components: Vec<GaussianParams>) -> Result<Self> {
        if weights.is_empty() || weights.len() != components.len() {
            return Err(Error::Param(format!(
                "{} weights for {} components",
                weights.len(),
                components.len()
            )));
        }
        if weights.iter().any(|w| w.is_nan() || *w < 0.0) {
            return Err(Error::Param("mixture weights must be nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Param(format!("mixture weights sum to {total}")));
        }
        let dim = components[0].dim();
        for c in &components {
            check_dim(dim, c.dim())?;
        }
        Ok(Self { weights, components })
    }

    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[GaussianParams] {
        &self.components
    }

    /// Total log-likelihood of `points`, and the responsibilities as a
    /// by-product.
    pub fn e_step(&self, points: &[Vec<f64>]) -> Result<(f64, Vec<Vec<f64>>)> {
        let log_w: Vec<f64> = self.weights.iter().map(|w| w.ln()).collect();
        let mut total = 0.0;
        let mut resp = Vec::with_capacity(points.len());
        for x in points {
            let mut row = Vec::with_capacity(self.k());
            for (lw, c) in log_w.iter().zip(&self.components) {
                row.push(lw + c.log_density(x)?);
            }
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
            let lse = max + sum.ln();
            row.iter_mut().for_each(|v| *v = (*v - lse).exp());
            total += lse;
            resp.push(row);
        }
        Ok((total, resp))
    }

    /// Index of the most responsible component for each point.
    pub fn predict(&self, points: &[Vec<f64>]) -> Result<Vec<usize>> {
        let (_, resp) = self.e_step(points)?;
        Ok(resp
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |best, (i, &r)| if r > best.1 { (i, r) } else { best })
                    .0
            })
            .collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    pub max_iters: usize,
    /// Stop when the relative change in log-likelihood drops below this.
    pub tol: f64,
    pub seed: u64,
    pub restarts: usize,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            max_iters: 500,
            tol: 1e-8,
            seed: 0,
            restarts: 5,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GmmFit {
    pub model: GmmModel,
    pub responsibilities: Vec<Vec<f64>>,
    pub log_likelihood: f64,
    /// Log-likelihood before each M-step of the winning restart.
    pub log_likelihood_trace: Vec<f64>,
    /// Some component covariance needed the ridge to stay positive-definite,
    /// or the fit stopped early because a ridged step lowered the
    /// log-likelihood.
    pub regularized: bool,
}

/// Fits a `K`-component Gaussian mixture by EM with k-means++ seeding,
/// keeping the best of `restarts` runs by final log-likelihood.
pub fn fit_gmm_em(points: &[Vec<f64>], k: usize, config: &EmConfig) -> Result<GmmFit> {
    if k == 0 {
        return Err(Error::Input("number of components must be at least 1".into()));
    }
    if points.len() < k {
        return Err(Error::Input(format!(
            "{k} components requested for {} points",
            points.len()
        )));
    }
    let dim = points[0].len();
    if dim == 0 {
        return Err(Error::Input("points must have dimension at least 1".into()));
    }
    for p in points {
        check_dim(dim, p.len())?;
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("point coordinates must be finite".into()));
        }
    }
    let (_, _, cov) = linalg::mean_and_covariance(dim, points.iter().map(Vec::as_slice));
    let mean_var = cov.trace() / dim as f64;
    let ridge = 1e-6 * if mean_var > 0.0 { mean_var } else { 1.0 };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut best: Option<GmmFit> = None;
    for _ in 0..config.restarts.max(1) {
        let fit = fit_once(points, k, config, &cov, ridge, &mut rng)?;
        if best.as_ref().is_none_or(|b| fit.log_likelihood > b.log_likelihood) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn fit_once<R: Rng + ?Sized>(
    points: &[Vec<f64>],
    k: usize,
    config: &EmConfig,
    data_cov: &DMatrix<f64>,
    ridge: f64,
    rng: &mut R,
) -> Result<GmmFit> {
    let dim = points[0].len();
    let mut regularized = false;
    let start_cov = regularize(data_cov, ridge, &mut regularized)?;
    let components = kmeans_pp_seeds(points, k, rng)
        .into_iter()
        .map(|i| GaussianParams::new(DVector::from_column_slice(&points[i]), start_cov.clone()))
        .collect::<Result<Vec<_>>>()?;
    let mut model = GmmModel {
        weights: vec![1.0 / k as f64; k],
        components,
    };

    let mut trace = Vec::new();
    let (mut ll, mut resp) = model.e_step(points)?;
    trace.push(ll);
    for _ in 0..config.max_iters {
        let mut ridged = false;
        let next = m_step(points, &resp, &model, dim, ridge, &mut ridged)?;
        let (next_ll, next_resp) = next.e_step(points)?;
        if !next_ll.is_finite() {
            return Err(Error::Numerical(format!("EM log-likelihood became {next_ll}")));
        }
        regularized |= ridged;
        // A plain EM step never lowers the likelihood; a ridged one near a
        // collapsing component can. Keep the last monotone iterate.
        if next_ll < ll - 1e-9 * ll.abs() {
            regularized = true;
            break;
        }
        let change = (next_ll - ll).abs() / ll.abs().max(f64::MIN_POSITIVE);
        model = next;
        ll = next_ll;
        resp = next_resp;
        trace.push(ll);
        if change < config.tol {
            break;
        }
    }
    Ok(GmmFit {
        model,
        responsibilities: resp,
        log_likelihood: ll,
        log_likelihood_trace: trace,
        regularized,
    })
}

fn m_step(
    points: &[Vec<f64>],
    resp: &[Vec<f64>],
    previous: &GmmModel,
    dim: usize,
    ridge: f64,
    regularized: &mut bool,
) -> Result<GmmModel> {
    let n = points.len() as f64;
    let k = previous.k();
    let mut weights = Vec::with_capacity(k);
    let mut components = Vec::with_capacity(k);
    for j in 0..k {
        let nk: f64 = resp.iter().map(|r| r[j]).sum();
        if nk <= f64::EPSILON * n {
            // Component lost all support; keep its parameters at zero weight.
            weights.push(0.0);
            components.push(previous.components[j].clone());
            continue;
        }
        let mut mean = DVector::zeros(dim);
        for (x, r) in points.iter().zip(resp) {
            mean.axpy(r[j], &DVector::from_column_slice(x), 1.0);
        }
        mean /= nk;
        let mut cov = DMatrix::zeros(dim, dim);
        for (x, r) in points.iter().zip(resp) {
            let diff = DVector::from_column_slice(x) - &mean;
            cov.ger(r[j], &diff, &diff, 1.0);
        }
        cov /= nk;
        linalg::symmetrize(&mut cov);
        let cov = regularize(&cov, ridge, regularized)?;
        weights.push(nk / n);
        components.push(GaussianParams::new(mean, cov)?);
    }
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    Ok(GmmModel { weights, components })
}

/// Adds `ridge · I` only when the covariance is not positive-definite.
fn regularize(cov: &DMatrix<f64>, ridge: f64, regularized: &mut bool) -> Result<DMatrix<f64>> {
    if linalg::cholesky(cov, "covariance").is_ok() {
        return Ok(cov.clone());
    }
    if cov.iter().any(|v| !v.is_finite()) || !ridge.is_finite() {
        return Err(Error::Numerical("covariance overflowed".into()));
    }
    *regularized = true;
    let dim = cov.nrows();
    let mut out = cov + DMatrix::identity(dim, dim) * ridge;
    let mut bump = ridge;
    while linalg::cholesky(&out, "covariance").is_err() {
        bump *= 10.0;
        if !bump.is_finite() {
            return Err(Error::Numerical("no finite ridge makes the covariance positive-definite".into()));
        }
        out = cov + DMatrix::identity(dim, dim) * bump;
    }
    Ok(out)
}

/// k-means++ seeding: the first centre uniformly, each next one with
/// probability proportional to the squared distance to its nearest centre.
fn kmeans_pp_seeds<R: Rng + ?Sized>(points: &[Vec<f64>], k: usize, rng: &mut R) -> Vec<usize> {
    let sq = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let mut seeds = vec![rng.random_range(0..points.len())];
    let mut nearest: Vec<f64> = points.iter().map(|p| sq(p, &points[seeds[0]])).collect();
    while seeds.len() < k {
        let total: f64 = nearest.iter().sum();
        let next = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            nearest
                .iter()
                .position(|&d| {
                    u -= d;
                    u < 0.0
                })
                .unwrap_or_else(|| nearest.iter().rposition(|&d| d > 0.0).expect("positive total"))
        } else {
            // All remaining points coincide with a centre.
            rng.random_range(0..points.len())
        };
        seeds.push(next);
        for (d, p) in nearest.iter_mut().zip(points) {
            *d = d.min(sq(p, &points[next]));
        }
    }
    seeds
}
