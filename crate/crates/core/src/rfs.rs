//! Poisson random finite sets with Gaussian feature densities.
//!
//! A point pattern is an unordered finite set of points in `R^d`. Under a
//! Poisson RFS with rate `λ` and feature density `f`, its density is
//! `e^{-λ} λ^{|X|} ∏ f(x_i)`. The reference hyper-volume is fixed to one,
//! so densities are dimensionless and the empty pattern has density
//! `e^{-λ}`.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_factorial;

use crate::error::{check_dim, Error, Result};
use crate::linalg;

/// One set-valued observation.
///
/// Points are stored contiguously; their order carries no meaning. An
/// empty pattern still knows its dimension so it can be checked against
/// model parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointPattern {
    dim: usize,
    coords: Vec<f64>,
}

impl PointPattern {
    pub fn empty(dim: usize) -> Result<Self> {
        Self::from_flat(dim, Vec::new())
    }

    pub fn new(dim: usize, points: &[Vec<f64>]) -> Result<Self> {
        let mut coords = Vec::with_capacity(points.len() * dim);
        for p in points {
            check_dim(dim, p.len())?;
            coords.extend_from_slice(p);
        }
        Self::from_flat(dim, coords)
    }

    /// Builds a pattern from row-major coordinates (`len = n * dim`).
    pub fn from_flat(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Input("point dimension must be at least 1".into()));
        }
        if !coords.len().is_multiple_of(dim) {
            return Err(Error::Input(format!(
                "{} coordinates do not split into points of dimension {dim}",
                coords.len()
            )));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::Input("point coordinates must be finite".into()));
        }
        Ok(Self { dim, coords })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Cardinality `|X|`.
    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn to_vecs(&self) -> Vec<Vec<f64>> {
        self.iter().map(<[f64]>::to_vec).collect()
    }
}

/// Mean and covariance of a multivariate normal feature density.
#[derive(Clone, Debug)]
pub struct GaussianParams {
    mean: DVector<f64>,
    covariance: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    log_det: f64,
}

impl GaussianParams {
    pub fn new(mean: DVector<f64>, covariance: DMatrix<f64>) -> Result<Self> {
        check_dim(mean.len(), covariance.nrows())?;
        if mean.is_empty() {
            return Err(Error::Param("Gaussian dimension must be at least 1".into()));
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::Param("Gaussian mean must be finite".into()));
        }
        let chol = linalg::cholesky(&covariance, "covariance")?;
        let log_det = linalg::chol_log_det(&chol);
        Ok(Self {
            mean,
            covariance,
            chol,
            log_det,
        })
    }

    /// Standard normal in `dim` dimensions.
    pub fn standard(dim: usize) -> Result<Self> {
        Self::new(DVector::zeros(dim), DMatrix::identity(dim, dim))
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.covariance
    }

    pub fn log_det_covariance(&self) -> f64 {
        self.log_det
    }

    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.dim(), x.len())?;
        let d = self.dim() as f64;
        let maha = linalg::mahalanobis_sq(&self.chol, x, &self.mean);
        Ok(-0.5 * (d * (2.0 * PI).ln() + self.log_det + maha))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let z = DVector::from_fn(self.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
        &self.mean + self.chol.l_dirty().lower_triangle() * z
    }
}

/// `log N(x; mean, covariance)`.
pub fn gaussian_log_density(x: &[f64], params: &GaussianParams) -> Result<f64> {
    params.log_density(x)
}

/// Rate and feature density of a Poisson RFS; the intensity is
/// `rate * f(x)`.
#[derive(Clone, Debug)]
pub struct PoissonRfsParams {
    rate: f64,
    feature: GaussianParams,
}

impl PoissonRfsParams {
    pub fn new(rate: f64, feature: GaussianParams) -> Result<Self> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(Error::Param(format!("Poisson rate must be positive and finite, got {rate}")));
        }
        Ok(Self { rate, feature })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn feature(&self) -> &GaussianParams {
        &self.feature
    }

    pub fn dim(&self) -> usize {
        self.feature.dim()
    }
}

/// `log Poisson(n; rate) = n log λ - λ - log n!`.
///
/// `rate` must be positive.
pub fn log_cardinality_pmf(n: usize, rate: f64) -> f64 {
    n as f64 * rate.ln() - rate - ln_factorial(n as u64)
}

/// `log p(X | λ, f) = -λ + |X| log λ + Σ log f(x_i)`.
pub fn log_poisson_rfs_density(pattern: &PointPattern, params: &PoissonRfsParams) -> Result<f64> {
    check_dim(params.dim(), pattern.dim())?;
    let card = pattern.len() as f64 * params.rate.ln() - params.rate;
    pattern
        .iter()
        .try_fold(card, |acc, x| Ok(acc + params.feature.log_density(x)?))
}

/// Draws `n ~ Poisson(λ)` and then `n` i.i.d. points from the feature
/// density.
pub fn sample_poisson_rfs<R: Rng + ?Sized>(params: &PoissonRfsParams, rng: &mut R) -> PointPattern {
    let n = sample_poisson_count(params.rate, rng);
    let dim = params.dim();
    let mut coords = Vec::with_capacity(n * dim);
    for _ in 0..n {
        coords.extend(params.feature.sample(rng).iter());
    }
    PointPattern { dim, coords }
}

pub(crate) fn sample_poisson_count<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> usize {
    let poisson = Poisson::new(rate).expect("rate validated as positive and finite");
    poisson.sample(rng) as usize
}
