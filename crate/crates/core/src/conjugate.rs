//! Conjugate Bayesian analysis of the Poisson RFS.
//!
//! The prior over `(λ, Ψ)` factorizes as `Gamma(α, β) × NIW(μ₀, κ₀, ν₀, Λ₀)`.
//! After observing sets `X_1..X_N` the rate posterior is
//! `Gamma(α + Σ|X_i|, β + N)` and the Gaussian parameters follow the NIW
//! posterior of the pooled points. The predictive density of a new set is
//! a negative-binomial-like cardinality factor times the joint marginal of
//! its points under the NIW posterior.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{Distribution, Gamma as GammaDist, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{check_dim, Error, Result};
use crate::linalg;
use crate::rfs::{GaussianParams, PointPattern, PoissonRfsParams};

/// Gamma distribution in shape/rate form.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaParams {
    shape: f64,
    rate: f64,
}

impl GammaParams {
    pub fn new(shape: f64, rate: f64) -> Result<Self> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        if !ok(shape) || !ok(rate) {
            return Err(Error::Param(format!(
                "Gamma shape and rate must be positive and finite, got ({shape}, {rate})"
            )));
        }
        Ok(Self { shape, rate })
    }

    pub fn shape(&self) -> f64 {
        self.shape
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn mean(&self) -> f64 {
        self.shape / self.rate
    }

    pub fn log_density(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return f64::NEG_INFINITY;
        }
        self.shape * self.rate.ln() - ln_gamma(self.shape) + (self.shape - 1.0) * x.ln() - self.rate * x
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        GammaDist::new(self.shape, 1.0 / self.rate)
            .expect("validated Gamma parameters")
            .sample(rng)
    }
}

/// Normal-Inverse-Wishart: `Σ ~ IW(ν, Λ)`, `μ | Σ ~ N(μ₀, Σ / κ)`.
#[derive(Clone, Debug)]
pub struct NiwParams {
    mean_loc: DVector<f64>,
    mean_scale: f64,
    dof: f64,
    scale_matrix: DMatrix<f64>,
    scale_chol: Cholesky<f64, Dyn>,
}

impl NiwParams {
    pub fn new(mean_loc: DVector<f64>, mean_scale: f64, dof: f64, scale_matrix: DMatrix<f64>) -> Result<Self> {
        let d = mean_loc.len();
        if d == 0 {
            return Err(Error::Param("NIW dimension must be at least 1".into()));
        }
        check_dim(d, scale_matrix.nrows())?;
        if mean_loc.iter().any(|v| !v.is_finite()) {
            return Err(Error::Param("NIW location must be finite".into()));
        }
        if !(mean_scale > 0.0 && mean_scale.is_finite()) {
            return Err(Error::Param(format!("NIW mean scale must be positive, got {mean_scale}")));
        }
        if !(dof > d as f64 - 1.0 && dof.is_finite()) {
            return Err(Error::Param(format!(
                "NIW degrees of freedom must exceed d - 1 = {}, got {dof}",
                d - 1
            )));
        }
        let scale_chol = linalg::cholesky(&scale_matrix, "NIW scale matrix")?;
        Ok(Self {
            mean_loc,
            mean_scale,
            dof,
            scale_matrix,
            scale_chol,
        })
    }

    /// Scale-adapted defaults: `μ₀` = mean of the points, `κ₀ = 0.01`,
    /// `ν₀ = d + 2`, `Λ₀` = covariance of the points.
    ///
    /// With fewer than two points, or a singular covariance, `Λ₀` falls
    /// back to the identity.
    pub fn from_data<'a, I>(dim: usize, points: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        if dim == 0 {
            return Err(Error::Param("NIW dimension must be at least 1".into()));
        }
        let (count, mean, cov) = linalg::mean_and_covariance(dim, points);
        let scale = if count >= 2 && linalg::cholesky(&cov, "covariance").is_ok() {
            cov
        } else {
            DMatrix::identity(dim, dim)
        };
        Self::new(mean, 0.01, dim as f64 + 2.0, scale)
    }

    pub fn dim(&self) -> usize {
        self.mean_loc.len()
    }

    pub fn mean_loc(&self) -> &DVector<f64> {
        &self.mean_loc
    }

    pub fn mean_scale(&self) -> f64 {
        self.mean_scale
    }

    pub fn dof(&self) -> f64 {
        self.dof
    }

    pub fn scale_matrix(&self) -> &DMatrix<f64> {
        &self.scale_matrix
    }

    pub fn log_det_scale(&self) -> f64 {
        linalg::chol_log_det(&self.scale_chol)
    }

    /// Degrees of freedom of the single-point Student-t predictive.
    pub fn predictive_dof(&self) -> f64 {
        self.dof - self.dim() as f64 + 1.0
    }

    /// Shape matrix of the single-point Student-t predictive,
    /// `Λ (κ + 1) / (κ (ν - d + 1))`.
    pub fn predictive_shape(&self) -> DMatrix<f64> {
        &self.scale_matrix * self.predictive_factor()
    }

    fn predictive_factor(&self) -> f64 {
        (self.mean_scale + 1.0) / (self.mean_scale * self.predictive_dof())
    }

    /// Draws `(μ, Σ)` via the Bartlett decomposition of the Wishart
    /// distribution of `Σ⁻¹`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> GaussianParams {
        let d = self.dim();
        // Σ⁻¹ ~ Wishart(ν, Λ⁻¹) and Λ⁻¹ = L⁻ᵀ L⁻¹ for Λ = L Lᵀ.
        let l_inv = self
            .scale_chol
            .l_dirty()
            .lower_triangle()
            .solve_lower_triangular(&DMatrix::identity(d, d))
            .expect("Cholesky factor is invertible");
        let mut bartlett = DMatrix::zeros(d, d);
        for i in 0..d {
            let chi2 = GammaDist::new(0.5 * (self.dof - i as f64), 2.0)
                .expect("dof > d - 1")
                .sample(rng);
            bartlett[(i, i)] = chi2.sqrt();
            for j in 0..i {
                bartlett[(i, j)] = rng.sample::<f64, _>(StandardNormal);
            }
        }
        // Σ⁻¹ = (L⁻ᵀ A)(L⁻ᵀ A)ᵀ
        let factor = l_inv.transpose() * bartlett;
        let precision = &factor * factor.transpose();
        let mut covariance = precision
            .cholesky()
            .expect("Wishart draw is positive-definite")
            .inverse();
        linalg::symmetrize(&mut covariance);
        let mean_cov = &covariance / self.mean_scale;
        let mean_dist = GaussianParams::new(self.mean_loc.clone(), mean_cov).expect("scaled SPD covariance");
        let mean = mean_dist.sample(rng);
        GaussianParams::new(mean, covariance).expect("SPD covariance draw")
    }

    /// Log density of the NIW at `(μ, Σ)`.
    pub fn log_density(&self, params: &GaussianParams) -> Result<f64> {
        check_dim(self.dim(), params.dim())?;
        let d = self.dim() as f64;
        let sigma_chol = linalg::cholesky(params.covariance(), "covariance")?;
        let log_det_sigma = params.log_det_covariance();
        // tr(Λ Σ⁻¹)
        let trace = sigma_chol.solve(&self.scale_matrix).trace();
        let log_iw = 0.5 * self.dof * self.log_det_scale()
            - 0.5 * self.dof * d * 2.0_f64.ln()
            - ln_multigamma(self.dim(), 0.5 * self.dof)
            - 0.5 * (self.dof + d + 1.0) * log_det_sigma
            - 0.5 * trace;
        let mean_dist = GaussianParams::new(self.mean_loc.clone(), params.covariance() / self.mean_scale)?;
        Ok(log_iw + mean_dist.log_density(params.mean().as_slice())?)
    }

    /// Folds one point into the posterior.
    fn observe(&mut self, x: &[f64]) {
        let diff = DVector::from_iterator(x.len(), x.iter().zip(self.mean_loc.iter()).map(|(a, b)| a - b));
        let kappa_new = self.mean_scale + 1.0;
        let weight = self.mean_scale / kappa_new;
        self.mean_loc += &diff / kappa_new;
        self.mean_scale = kappa_new;
        self.dof += 1.0;
        self.scale_matrix.ger(weight, &diff, &diff, 1.0);
        self.scale_chol.rank_one_update(&diff, weight);
    }
}

/// Multivariate log-gamma `log Γ_d(a)`.
pub fn ln_multigamma(d: usize, a: f64) -> f64 {
    let df = d as f64;
    0.25 * df * (df - 1.0) * PI.ln() + (0..d).map(|j| ln_gamma(a - 0.5 * j as f64)).sum::<f64>()
}

/// Conjugate prior over `(λ, Ψ)`: Gamma over the rate, NIW over the
/// Gaussian parameters.
#[derive(Clone, Debug)]
pub struct RfsPrior {
    pub rate_prior: GammaParams,
    pub feature_prior: NiwParams,
}

impl RfsPrior {
    pub fn new(rate_prior: GammaParams, feature_prior: NiwParams) -> Self {
        Self {
            rate_prior,
            feature_prior,
        }
    }

    /// `Gamma(1, 1)` over the rate and data-driven NIW defaults over the
    /// pooled points (see [`NiwParams::from_data`]).
    pub fn from_data(data: &[PointPattern]) -> Result<Self> {
        let dim = data
            .first()
            .map(PointPattern::dim)
            .ok_or_else(|| Error::Input("cannot derive a prior from an empty dataset".into()))?;
        for x in data {
            check_dim(dim, x.dim())?;
        }
        let feature_prior = NiwParams::from_data(dim, data.iter().flat_map(PointPattern::iter))?;
        Ok(Self::new(GammaParams::new(1.0, 1.0)?, feature_prior))
    }

    pub fn dim(&self) -> usize {
        self.feature_prior.dim()
    }

    pub fn log_density(&self, params: &PoissonRfsParams) -> Result<f64> {
        Ok(self.rate_prior.log_density(params.rate()) + self.feature_prior.log_density(params.feature())?)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> PoissonRfsParams {
        let rate = self.rate_prior.sample(rng).max(f64::MIN_POSITIVE);
        PoissonRfsParams::new(rate, self.feature_prior.sample(rng)).expect("positive rate")
    }
}

/// Sufficient statistics of a collection of point patterns.
#[derive(Clone, Debug, PartialEq)]
pub struct SetSufficientStats {
    dim: usize,
    num_sets: usize,
    total_points: usize,
    point_sum: DVector<f64>,
    point_scatter: DMatrix<f64>,
}

impl SetSufficientStats {
    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            num_sets: 0,
            total_points: 0,
            point_sum: DVector::zeros(dim),
            point_scatter: DMatrix::zeros(dim, dim),
        }
    }

    pub fn from_patterns<'a, I>(dim: usize, patterns: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a PointPattern>,
    {
        let mut stats = Self::empty(dim);
        for x in patterns {
            stats.add(x)?;
        }
        Ok(stats)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_sets(&self) -> usize {
        self.num_sets
    }

    pub fn total_points(&self) -> usize {
        self.total_points
    }

    pub fn point_sum(&self) -> &DVector<f64> {
        &self.point_sum
    }

    pub fn point_scatter(&self) -> &DMatrix<f64> {
        &self.point_scatter
    }

    pub fn is_empty(&self) -> bool {
        self.num_sets == 0
    }

    pub fn add(&mut self, pattern: &PointPattern) -> Result<()> {
        check_dim(self.dim, pattern.dim())?;
        for x in pattern.iter() {
            self.accumulate(x, 1.0);
        }
        self.num_sets += 1;
        self.total_points += pattern.len();
        Ok(())
    }

    pub fn remove(&mut self, pattern: &PointPattern) -> Result<()> {
        check_dim(self.dim, pattern.dim())?;
        if self.num_sets == 0 {
            return Err(Error::State("cannot remove a set from empty statistics".into()));
        }
        if self.total_points < pattern.len() {
            return Err(Error::State(format!(
                "removing {} points from statistics holding {}",
                pattern.len(),
                self.total_points
            )));
        }
        for x in pattern.iter() {
            self.accumulate(x, -1.0);
        }
        self.num_sets -= 1;
        self.total_points -= pattern.len();
        if self.num_sets == 0 {
            // Pin the exact zero state rather than keeping rounding residue.
            *self = Self::empty(self.dim);
        }
        Ok(())
    }

    /// Adds a single vector as a one-point member.
    pub fn add_point(&mut self, x: &[f64]) -> Result<()> {
        check_dim(self.dim, x.len())?;
        self.accumulate(x, 1.0);
        self.num_sets += 1;
        self.total_points += 1;
        Ok(())
    }

    pub fn remove_point(&mut self, x: &[f64]) -> Result<()> {
        check_dim(self.dim, x.len())?;
        if self.num_sets == 0 || self.total_points == 0 {
            return Err(Error::State("cannot remove a point from empty statistics".into()));
        }
        self.accumulate(x, -1.0);
        self.num_sets -= 1;
        self.total_points -= 1;
        if self.num_sets == 0 {
            *self = Self::empty(self.dim);
        }
        Ok(())
    }

    /// Returns a copy with `pattern` added.
    pub fn with_added(&self, pattern: &PointPattern) -> Result<Self> {
        let mut out = self.clone();
        out.add(pattern)?;
        Ok(out)
    }

    /// Returns a copy with `pattern` removed.
    pub fn with_removed(&self, pattern: &PointPattern) -> Result<Self> {
        let mut out = self.clone();
        out.remove(pattern)?;
        Ok(out)
    }

    fn accumulate(&mut self, x: &[f64], sign: f64) {
        let v = DVector::from_column_slice(x);
        self.point_scatter.ger(sign, &v, &v, 1.0);
        self.point_sum.axpy(sign, &v, 1.0);
    }
}

/// `Gamma(α + Σ|X_i|, β + N)`.
pub fn gamma_posterior(prior: &GammaParams, stats: &SetSufficientStats) -> GammaParams {
    GammaParams {
        shape: prior.shape + stats.total_points as f64,
        rate: prior.rate + stats.num_sets as f64,
    }
}

/// NIW posterior given the pooled points behind `stats`.
pub fn niw_posterior(prior: &NiwParams, stats: &SetSufficientStats) -> Result<NiwParams> {
    check_dim(prior.dim(), stats.dim)?;
    if stats.total_points == 0 {
        return Ok(prior.clone());
    }
    let m = stats.total_points as f64;
    let kappa_n = prior.mean_scale + m;
    let nu_n = prior.dof + m;
    let point_mean = &stats.point_sum / m;
    let mu_n = (&prior.mean_loc * prior.mean_scale + &stats.point_sum) / kappa_n;
    let centered_scatter = &stats.point_scatter - &point_mean * stats.point_sum.transpose();
    let shift = &point_mean - &prior.mean_loc;
    let mut lambda_n =
        &prior.scale_matrix + centered_scatter + (&shift * shift.transpose()) * (prior.mean_scale * m / kappa_n);
    linalg::symmetrize(&mut lambda_n);
    NiwParams::new(mu_n, kappa_n, nu_n, lambda_n)
}

/// Log of the cardinality factor of the set predictive,
/// `Γ(α+n) β^α / (Γ(α) (β+1)^{α+n})`.
pub fn log_predictive_cardinality(post: &GammaParams, n: usize) -> f64 {
    let (a, b) = (post.shape, post.rate);
    let n = n as f64;
    ln_gamma(a + n) - ln_gamma(a) + a * b.ln() - (a + n) * (b + 1.0).ln()
}

/// Single-point Student-t predictive under the NIW.
struct StudentT<'a> {
    post: &'a NiwParams,
    dof: f64,
    factor: f64,
    log_norm: f64,
}

impl<'a> StudentT<'a> {
    fn new(post: &'a NiwParams) -> Self {
        let d = post.dim() as f64;
        let dof = post.predictive_dof();
        let factor = post.predictive_factor();
        let log_det_shape = d * factor.ln() + post.log_det_scale();
        let log_norm = ln_gamma(0.5 * (dof + d)) - ln_gamma(0.5 * dof) - 0.5 * d * (dof * PI).ln() - 0.5 * log_det_shape;
        Self {
            post,
            dof,
            factor,
            log_norm,
        }
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        let d = self.post.dim() as f64;
        let maha = linalg::mahalanobis_sq(&self.post.scale_chol, x, &self.post.mean_loc) / self.factor;
        self.log_norm - 0.5 * (self.dof + d) * (maha / self.dof).ln_1p()
    }
}

/// Posterior predictive density of a single point, a multivariate
/// Student-t with `ν - d + 1` degrees of freedom.
pub fn student_t_log_density(x: &[f64], post: &NiwParams) -> Result<f64> {
    check_dim(post.dim(), x.len())?;
    Ok(StudentT::new(post).log_density(x))
}

/// `log ∫ ∏ f_Ψ(x_i) NIW(Ψ) dΨ`, computed as a chain of one-point
/// predictives, each conditioned on the points before it.
pub fn log_marginal_points(post: &NiwParams, pattern: &PointPattern) -> Result<f64> {
    check_dim(post.dim(), pattern.dim())?;
    let mut points = pattern.iter();
    let Some(first) = points.next() else {
        return Ok(0.0);
    };
    let mut total = StudentT::new(post).log_density(first);
    if points.len() == 0 {
        return Ok(total);
    }
    let mut running = post.clone();
    running.observe(first);
    for x in points {
        total += StudentT::new(&running).log_density(x);
        running.observe(x);
    }
    Ok(total)
}

/// Predictive log density of a new set given the sets summarized by
/// `stats`. With empty `stats` this integrates over the prior.
pub fn log_predictive_set(prior: &RfsPrior, stats: &SetSufficientStats, pattern: &PointPattern) -> Result<f64> {
    check_dim(prior.dim(), pattern.dim())?;
    let rate_post = gamma_posterior(&prior.rate_prior, stats);
    let feature_post = niw_posterior(&prior.feature_prior, stats)?;
    Ok(log_predictive_cardinality(&rate_post, pattern.len()) + log_marginal_points(&feature_post, pattern)?)
}

/// Log marginal likelihood of all sets behind `stats` jointly, in closed
/// form from the Gamma and NIW normalizing constants.
pub fn log_marginal_stats(prior: &RfsPrior, stats: &SetSufficientStats) -> Result<f64> {
    let rate_post = gamma_posterior(&prior.rate_prior, stats);
    let a0 = &prior.rate_prior;
    let rate_part = a0.shape * a0.rate.ln() - ln_gamma(a0.shape) + ln_gamma(rate_post.shape)
        - rate_post.shape * rate_post.rate.ln();
    Ok(rate_part + log_marginal_niw(&prior.feature_prior, stats)?)
}

/// Log marginal likelihood of the pooled points behind `stats` under a
/// NIW prior, via the ratio of normalizing constants.
pub fn log_marginal_niw(prior: &NiwParams, stats: &SetSufficientStats) -> Result<f64> {
    let post = niw_posterior(prior, stats)?;
    let d = prior.dim();
    let df = d as f64;
    let m = stats.total_points as f64;
    Ok(-0.5 * m * df * PI.ln() + ln_multigamma(d, 0.5 * post.dof) - ln_multigamma(d, 0.5 * prior.dof)
        + 0.5 * prior.dof * prior.log_det_scale()
        - 0.5 * post.dof * post.log_det_scale()
        + 0.5 * df * (prior.mean_scale.ln() - post.mean_scale.ln()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn niw1(mu: f64, kappa: f64, nu: f64, lambda: f64) -> NiwParams {
        NiwParams::new(
            DVector::from_element(1, mu),
            kappa,
            nu,
            DMatrix::from_element(1, 1, lambda),
        )
        .unwrap()
    }

    fn pat2(points: &[[f64; 2]]) -> PointPattern {
        let v: Vec<Vec<f64>> = points.iter().map(|p| p.to_vec()).collect();
        PointPattern::new(2, &v).unwrap()
    }

    #[test]
    fn stats_add_examples() {
        let mut s = SetSufficientStats::empty(2);
        s.add(&PointPattern::empty(2).unwrap()).unwrap();
        assert_eq!((s.num_sets(), s.total_points()), (1, 0));

        let s = SetSufficientStats::empty(2).with_added(&pat2(&[[1.0, 0.0], [0.0, 1.0]])).unwrap();
        assert_eq!(s.total_points(), 2);
        assert_eq!(s.point_sum().as_slice(), &[1.0, 1.0]);
        assert_eq!(s.point_scatter()[(0, 0)], 1.0);
        assert_eq!(s.point_scatter()[(0, 1)], 0.0);
    }

    #[test]
    fn stats_remove_examples() {
        let x = pat2(&[[1.5, -2.0]]);
        let s = SetSufficientStats::empty(2).with_added(&x).unwrap();
        assert_eq!(s.with_removed(&x).unwrap(), SetSufficientStats::empty(2));

        let e = PointPattern::empty(2).unwrap();
        let s = SetSufficientStats::empty(2).with_added(&x).unwrap().with_added(&e).unwrap();
        let r = s.with_removed(&e).unwrap();
        assert_eq!(r.num_sets(), 1);
        assert_eq!(r.total_points(), 1);
        assert_eq!(r.point_sum(), s.point_sum());

        assert!(matches!(
            SetSufficientStats::empty(2).with_removed(&e),
            Err(Error::State(_))
        ));
        assert!(SetSufficientStats::empty(2).with_added(&PointPattern::empty(1).unwrap()).is_err());
    }

    #[test]
    fn gamma_posterior_examples() {
        let prior = GammaParams::new(1.0, 1.0).unwrap();
        let sets = [
            PointPattern::new(1, &[vec![0.0], vec![1.0]]).unwrap(),
            PointPattern::new(1, &[vec![0.0], vec![1.0], vec![2.0]]).unwrap(),
        ];
        let stats = SetSufficientStats::from_patterns(1, &sets).unwrap();
        assert_eq!(gamma_posterior(&prior, &stats), GammaParams::new(6.0, 3.0).unwrap());
        assert_eq!(gamma_posterior(&prior, &SetSufficientStats::empty(1)), prior);
        let one_empty = SetSufficientStats::from_patterns(1, &[PointPattern::empty(1).unwrap()]).unwrap();
        assert_eq!(gamma_posterior(&prior, &one_empty), GammaParams::new(1.0, 2.0).unwrap());
    }

    #[test]
    fn niw_posterior_examples() {
        let prior = niw1(0.0, 1.0, 3.0, 1.0);
        let same = niw_posterior(&prior, &SetSufficientStats::empty(1)).unwrap();
        assert_eq!(same.mean_loc(), prior.mean_loc());
        assert_eq!(same.scale_matrix(), prior.scale_matrix());

        let x = PointPattern::new(1, &[vec![2.0]]).unwrap();
        let post = niw_posterior(&prior, &SetSufficientStats::from_patterns(1, [&x]).unwrap()).unwrap();
        assert_eq!(post.mean_loc()[0], 1.0);
        assert_eq!(post.mean_scale(), 2.0);
        assert_eq!(post.dof(), 4.0);
        // Λ_N = 1 + 0 + (1·1/2)·4 = 3
        assert!((post.scale_matrix()[(0, 0)] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn niw_posterior_ignores_set_boundaries() {
        let prior = NiwParams::new(DVector::zeros(2), 0.5, 4.0, DMatrix::identity(2, 2)).unwrap();
        let a = [pat2(&[[1.0, 2.0], [3.0, -1.0]]), pat2(&[[0.5, 0.5]])];
        let b = [pat2(&[[1.0, 2.0]]), pat2(&[[3.0, -1.0], [0.5, 0.5]]), PointPattern::empty(2).unwrap()];
        let pa = niw_posterior(&prior, &SetSufficientStats::from_patterns(2, &a).unwrap()).unwrap();
        let pb = niw_posterior(&prior, &SetSufficientStats::from_patterns(2, &b).unwrap()).unwrap();
        assert!((pa.scale_matrix() - pb.scale_matrix()).amax() < 1e-12);
        assert!((pa.mean_loc() - pb.mean_loc()).amax() < 1e-12);
    }

    #[test]
    fn predictive_cardinality_examples() {
        let post = GammaParams::new(1.0, 1.0).unwrap();
        assert!((log_predictive_cardinality(&post, 0) - 0.5_f64.ln()).abs() < 1e-15);
        assert!((log_predictive_cardinality(&post, 1) - 0.25_f64.ln()).abs() < 1e-15);
        assert!(log_predictive_cardinality(&GammaParams::new(3.0, 0.1).unwrap(), 1000).is_finite());
    }

    #[test]
    fn empty_set_predictive() {
        let prior = RfsPrior::new(GammaParams::new(1.0, 1.0).unwrap(), niw1(0.0, 1.0, 2.0, 1.0));
        let got = log_predictive_set(&prior, &SetSufficientStats::empty(1), &PointPattern::empty(1).unwrap()).unwrap();
        assert!((got - 0.5_f64.ln()).abs() < 1e-15);
        let x = PointPattern::empty(1).unwrap();
        assert_eq!(log_marginal_points(&prior.feature_prior, &x).unwrap(), 0.0);
    }

    #[test]
    fn singleton_marginal_equals_student_t() {
        let post = NiwParams::new(
            DVector::from_vec(vec![0.3, -1.0]),
            0.7,
            5.5,
            DMatrix::from_row_slice(2, 2, &[2.0, 0.4, 0.4, 1.0]),
        )
        .unwrap();
        let x = [1.2, 0.4];
        let single = pat2(&[x]);
        assert_eq!(
            student_t_log_density(&x, &post).unwrap(),
            log_marginal_points(&post, &single).unwrap()
        );
    }

    #[test]
    fn student_t_symmetry_and_gaussian_limit() {
        let post = NiwParams::new(
            DVector::from_vec(vec![1.0, 2.0]),
            2.0,
            6.0,
            DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 2.0]),
        )
        .unwrap();
        let delta = [0.7, -1.3];
        let plus = [1.0 + delta[0], 2.0 + delta[1]];
        let minus = [1.0 - delta[0], 2.0 - delta[1]];
        let a = student_t_log_density(&plus, &post).unwrap();
        let b = student_t_log_density(&minus, &post).unwrap();
        assert!((a - b).abs() < 1e-12);

        // ν = 1e6 with Λ scaled so the predictive shape is the identity.
        let nu = 1e6;
        let kappa = 1e9;
        let d = 2.0;
        let factor = (kappa + 1.0) / (kappa * (nu - d + 1.0));
        let big = NiwParams::new(DVector::zeros(2), kappa, nu, DMatrix::identity(2, 2) / factor).unwrap();
        let g = GaussianParams::standard(2).unwrap();
        for x in [[0.0, 0.0], [1.0, -0.5], [2.0, 2.0]] {
            let t = student_t_log_density(&x, &big).unwrap();
            assert!((t - g.log_density(&x).unwrap()).abs() < 1e-3);
        }
    }

    #[test]
    fn chain_matches_normalizer_ratio() {
        let prior = NiwParams::new(
            DVector::from_vec(vec![0.0, 1.0]),
            0.01,
            4.0,
            DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]),
        )
        .unwrap();
        let x = pat2(&[[0.1, 0.2], [1.5, -0.3], [-2.0, 4.0], [0.0, 0.0], [3.0, 3.0]]);
        let chain = log_marginal_points(&prior, &x).unwrap();
        let stats = SetSufficientStats::from_patterns(2, [&x]).unwrap();
        let ratio = log_marginal_niw(&prior, &stats).unwrap();
        assert!((chain - ratio).abs() < 1e-8, "{chain} vs {ratio}");
    }

    #[test]
    fn marginal_is_order_invariant() {
        let prior = niw1(0.0, 0.1, 2.0, 1.0);
        let a = PointPattern::new(1, &[vec![-1.0], vec![2.5]]).unwrap();
        let b = PointPattern::new(1, &[vec![2.5], vec![-1.0]]).unwrap();
        let la = log_marginal_points(&prior, &a).unwrap();
        let lb = log_marginal_points(&prior, &b).unwrap();
        assert!((la - lb).abs() < 1e-10);
    }

    #[test]
    fn niw_validation() {
        assert!(NiwParams::new(DVector::zeros(2), 0.0, 4.0, DMatrix::identity(2, 2)).is_err());
        assert!(NiwParams::new(DVector::zeros(2), 1.0, 1.0, DMatrix::identity(2, 2)).is_err());
        assert!(NiwParams::new(DVector::zeros(2), 1.0, 1.5, DMatrix::identity(2, 2)).is_ok());
        assert!(NiwParams::new(DVector::zeros(2), 1.0, 4.0, -DMatrix::identity(2, 2)).is_err());
        assert!(GammaParams::new(0.0, 1.0).is_err());
        assert!(GammaParams::new(1.0, -1.0).is_err());
    }

    #[test]
    fn niw_sample_mean_covariance() {
        // E[Σ] = Λ / (ν - d - 1), E[μ] = μ₀.
        let lambda = DMatrix::from_row_slice(2, 2, &[3.0, 0.5, 0.5, 2.0]);
        let prior = NiwParams::new(DVector::from_vec(vec![1.0, -1.0]), 2.0, 9.0, lambda.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let draws = 20_000;
        let mut mean_sigma = DMatrix::zeros(2, 2);
        let mut mean_mu = DVector::zeros(2);
        for _ in 0..draws {
            let g = prior.sample(&mut rng);
            mean_sigma += g.covariance();
            mean_mu += g.mean();
        }
        mean_sigma /= draws as f64;
        mean_mu /= draws as f64;
        let expected = lambda / 6.0;
        assert!((mean_sigma - expected).amax() < 0.03);
        assert!((mean_mu - prior.mean_loc()).amax() < 0.03);
    }

    #[test]
    fn from_data_defaults() {
        let data = [pat2(&[[0.0, 0.0], [2.0, 0.0]]), pat2(&[[0.0, 2.0], [2.0, 2.0]])];
        let prior = RfsPrior::from_data(&data).unwrap();
        assert_eq!(prior.rate_prior, GammaParams::new(1.0, 1.0).unwrap());
        let f = &prior.feature_prior;
        assert_eq!(f.mean_loc().as_slice(), &[1.0, 1.0]);
        assert_eq!(f.mean_scale(), 0.01);
        assert_eq!(f.dof(), 4.0);
        assert!((f.scale_matrix() - DMatrix::identity(2, 2)).amax() < 1e-12);

        let degenerate = [pat2(&[[1.0, 1.0]]), PointPattern::empty(2).unwrap()];
        let prior = RfsPrior::from_data(&degenerate).unwrap();
        assert_eq!(prior.feature_prior.scale_matrix(), &DMatrix::identity(2, 2));
        assert!(RfsPrior::from_data(&[]).is_err());
    }
}
