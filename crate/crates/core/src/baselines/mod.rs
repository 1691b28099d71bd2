//! Comparison methods that ignore the set structure of the data: a finite
//! Gaussian mixture fitted by EM and a DP Gaussian mixture fitted by
//! collapsed Gibbs sampling, both on the pooled points.

mod em;

pub use em::{fit_gmm_em, EmConfig, GmmFit, GmmModel};

use crate::conjugate::{GammaParams, NiwParams};
use crate::error::{check_dim, Error, Result};
use crate::rfs::PointPattern;
use crate::sampler::{self, ChainConfig, ChainTrace, PosteriorSummary};

/// Union of all point patterns, in input order.
pub fn pool_patterns(data: &[PointPattern]) -> Vec<Vec<f64>> {
    data.iter().flat_map(|x| x.iter().map(<[f64]>::to_vec)).collect()
}

/// Pooled points together with the label of the set each came from.
pub fn pool_labels(data: &[PointPattern], labels: &[usize]) -> Result<Vec<usize>> {
    if data.len() != labels.len() {
        return Err(Error::Input(format!(
            "{} labels for {} patterns",
            labels.len(),
            data.len()
        )));
    }
    Ok(data
        .iter()
        .zip(labels)
        .flat_map(|(x, &l)| std::iter::repeat_n(l, x.len()))
        .collect())
}

/// Hyperparameters of the DP Gaussian mixture.
#[derive(Clone, Debug)]
pub struct DpGmmHyper {
    pub feature_prior: NiwParams,
    pub concentration: f64,
    pub concentration_prior: Option<GammaParams>,
}

impl DpGmmHyper {
    /// The same data-driven NIW defaults the DP-RFS model uses, `η = 1`
    /// and a `Gamma(1, 1)` hyperprior on `η`.
    pub fn from_points(points: &[Vec<f64>]) -> Result<Self> {
        let dim = points
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::Input("cannot derive a prior from no points".into()))?;
        Ok(Self {
            feature_prior: NiwParams::from_data(dim, points.iter().map(Vec::as_slice))?,
            concentration: 1.0,
            concentration_prior: Some(GammaParams::new(1.0, 1.0)?),
        })
    }
}

/// Collapsed Gibbs sampling of a DP mixture of Gaussians over individual
/// vectors, with Student-t predictives from the shared NIW machinery.
pub fn fit_dpgmm_collapsed(points: &[Vec<f64>], hyper: &DpGmmHyper, config: &ChainConfig) -> Result<ChainTrace> {
    for p in points {
        check_dim(hyper.feature_prior.dim(), p.len())?;
    }
    sampler::run_collapsed_chain(
        &hyper.feature_prior,
        points,
        hyper.concentration,
        hyper.concentration_prior.as_ref(),
        config,
    )
}

pub fn summarize_dpgmm(
    trace: &ChainTrace,
    points: &[Vec<f64>],
    hyper: &DpGmmHyper,
    degenerate_factor: f64,
) -> Result<PosteriorSummary> {
    sampler::summarize_with(
        trace,
        &hyper.feature_prior,
        points,
        hyper.feature_prior.dim(),
        points.iter().map(Vec::as_slice),
        degenerate_factor,
        |_| None,
    )
}
