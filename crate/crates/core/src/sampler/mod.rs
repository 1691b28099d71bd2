//! Collapsed Gibbs sampling for Dirichlet process mixtures.
//!
//! Component parameters are integrated out; only the cluster indicators
//! are sampled. Item `i` joins existing cluster `k` with weight
//! `n_{-i,k} · p(item | members of k)` and opens a new cluster with weight
//! `η · p(item | prior)`.

mod model;
mod prior;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::conjugate::{self, GammaParams, RfsPrior, SetSufficientStats};
use crate::error::{check_dim, Error, Result};
use crate::linalg;
use crate::rfs::PointPattern;

pub use model::ComponentModel;
pub use prior::{expected_distinct, polya_urn_sample, sample_concentration, sample_gem_weights, StickBreaking};

/// Opaque cluster identifier; never reused within a chain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClusterId(u64);

impl ClusterId {
    pub fn get(self) -> u64 {
        self.0
    }
}

/// Target of one assignment move.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Choice {
    Existing(ClusterId),
    New,
}

/// Sufficient statistics of the members of one live cluster.
#[derive(Clone, Debug, PartialEq)]
pub struct ClusterStats {
    stats: SetSufficientStats,
}

impl ClusterStats {
    pub fn stats(&self) -> &SetSufficientStats {
        &self.stats
    }

    /// `n_k`, the number of items assigned to the cluster.
    pub fn member_count(&self) -> usize {
        self.stats.num_sets()
    }
}

/// Prior hyperparameters of the DP-RFS mixture.
#[derive(Clone, Debug)]
pub struct Hyperparams {
    pub prior: RfsPrior,
    /// DP concentration `η`; the starting value when it is resampled.
    pub concentration: f64,
    /// Gamma hyperprior on `η`; `None` keeps `η` fixed.
    pub concentration_prior: Option<GammaParams>,
}

impl Hyperparams {
    pub fn new(prior: RfsPrior, concentration: f64, concentration_prior: Option<GammaParams>) -> Result<Self> {
        check_concentration(concentration)?;
        Ok(Self {
            prior,
            concentration,
            concentration_prior,
        })
    }

    /// Data-driven prior, `η = 1` and a `Gamma(1, 1)` hyperprior on `η`.
    pub fn from_data(data: &[PointPattern]) -> Result<Self> {
        Self::new(RfsPrior::from_data(data)?, 1.0, Some(GammaParams::new(1.0, 1.0)?))
    }
}

fn check_concentration(concentration: f64) -> Result<()> {
    if concentration > 0.0 && concentration.is_finite() {
        Ok(())
    } else {
        Err(Error::Param(format!(
            "concentration must be positive and finite, got {concentration}"
        )))
    }
}

/// Full sampler state: indicators, live clusters and `η`.
#[derive(Clone, Debug)]
pub struct GibbsState {
    assignments: Vec<ClusterId>,
    clusters: BTreeMap<ClusterId, ClusterStats>,
    concentration: f64,
    next_id: u64,
    detached: Option<usize>,
}

impl GibbsState {
    /// Every item in one cluster.
    pub fn single_cluster<M: ComponentModel>(model: &M, data: &[M::Item], concentration: f64) -> Result<Self> {
        let labels = vec![0; data.len()];
        Self::from_labels(model, data, &labels, concentration)
    }

    /// Items assigned uniformly at random to `max_clusters` initial
    /// clusters (fewer may end up occupied).
    pub fn random<M: ComponentModel, R: Rng + ?Sized>(
        model: &M,
        data: &[M::Item],
        max_clusters: usize,
        concentration: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if max_clusters == 0 {
            return Err(Error::Input("initial cluster count must be at least 1".into()));
        }
        let labels: Vec<usize> = (0..data.len()).map(|_| rng.random_range(0..max_clusters)).collect();
        Self::from_labels(model, data, &labels, concentration)
    }

    /// Builds a state from arbitrary integer labels.
    pub fn from_labels<M: ComponentModel>(
        model: &M,
        data: &[M::Item],
        labels: &[usize],
        concentration: f64,
    ) -> Result<Self> {
        check_concentration(concentration)?;
        if labels.len() != data.len() {
            return Err(Error::Input(format!(
                "{} labels for {} items",
                labels.len(),
                data.len()
            )));
        }
        let mut ids: BTreeMap<usize, ClusterId> = BTreeMap::new();
        let mut clusters = BTreeMap::new();
        let mut assignments = Vec::with_capacity(data.len());
        let mut next_id = 0;
        for (item, &label) in data.iter().zip(labels) {
            check_dim(model.dim(), M::item_dim(item))?;
            let id = *ids.entry(label).or_insert_with(|| {
                next_id += 1;
                ClusterId(next_id - 1)
            });
            let entry = clusters.entry(id).or_insert_with(|| ClusterStats {
                stats: model.empty_stats(),
            });
            M::add(&mut entry.stats, item)?;
            assignments.push(id);
        }
        Ok(Self {
            assignments,
            clusters,
            concentration,
            next_id,
            detached: None,
        })
    }

    pub fn num_items(&self) -> usize {
        self.assignments.len()
    }

    pub fn num_clusters(&self) -> usize {
        self.clusters.len()
    }

    pub fn concentration(&self) -> f64 {
        self.concentration
    }

    pub fn set_concentration(&mut self, concentration: f64) -> Result<()> {
        check_concentration(concentration)?;
        self.concentration = concentration;
        Ok(())
    }

    pub fn assignments(&self) -> &[ClusterId] {
        &self.assignments
    }

    pub fn clusters(&self) -> &BTreeMap<ClusterId, ClusterStats> {
        &self.clusters
    }

    /// Assignments relabelled `0..K` in order of first appearance.
    pub fn canonical_labels(&self) -> Vec<usize> {
        canonical_labels(&self.assignments)
    }

    /// Removes item `index` from its cluster, deleting the cluster if it
    /// becomes empty. Returns the item's former cluster.
    pub fn detach<M: ComponentModel>(&mut self, index: usize, item: &M::Item) -> Result<ClusterId> {
        if let Some(other) = self.detached {
            return Err(Error::State(format!("item {other} is already detached")));
        }
        let id = *self
            .assignments
            .get(index)
            .ok_or_else(|| Error::Input(format!("item index {index} out of range")))?;
        let cluster = self
            .clusters
            .get_mut(&id)
            .ok_or_else(|| Error::State(format!("item {index} refers to a dead cluster")))?;
        M::remove(&mut cluster.stats, item)?;
        if cluster.member_count() == 0 {
            self.clusters.remove(&id);
        }
        self.detached = Some(index);
        Ok(id)
    }

    /// Places the detached item `index` into `choice`, opening a fresh
    /// cluster for [`Choice::New`].
    pub fn attach<M: ComponentModel>(
        &mut self,
        model: &M,
        index: usize,
        item: &M::Item,
        choice: Choice,
    ) -> Result<ClusterId> {
        if self.detached != Some(index) {
            return Err(Error::State(format!("item {index} is not detached")));
        }
        let id = match choice {
            Choice::Existing(id) => id,
            Choice::New => {
                let id = ClusterId(self.next_id);
                self.next_id += 1;
                self.clusters.insert(
                    id,
                    ClusterStats {
                        stats: model.empty_stats(),
                    },
                );
                id
            }
        };
        let cluster = self
            .clusters
            .get_mut(&id)
            .ok_or_else(|| Error::State(format!("cluster {} is not live", id.0)))?;
        M::add(&mut cluster.stats, item)?;
        self.assignments[index] = id;
        self.detached = None;
        Ok(id)
    }

    /// Recomputes every cluster's statistics from scratch and compares
    /// them to the incrementally maintained ones (max abs difference).
    pub fn check_consistency<M: ComponentModel>(&self, model: &M, data: &[M::Item], tol: f64) -> Result<()> {
        if self.detached.is_some() {
            return Err(Error::State("an item is detached".into()));
        }
        let mut fresh: BTreeMap<ClusterId, SetSufficientStats> = BTreeMap::new();
        for (item, id) in data.iter().zip(&self.assignments) {
            if !self.clusters.contains_key(id) {
                return Err(Error::State(format!("assignment to dead cluster {}", id.0)));
            }
            M::add(fresh.entry(*id).or_insert_with(|| model.empty_stats()), item)?;
        }
        if fresh.len() != self.clusters.len() {
            return Err(Error::State("live cluster without members".into()));
        }
        let total: usize = self.clusters.values().map(ClusterStats::member_count).sum();
        if total != data.len() {
            return Err(Error::State(format!("{total} members for {} items", data.len())));
        }
        for (id, stats) in fresh {
            let kept = &self.clusters[&id].stats;
            let sum_err = (kept.point_sum() - stats.point_sum()).amax();
            let scatter_err = (kept.point_scatter() - stats.point_scatter()).amax();
            if kept.num_sets() != stats.num_sets()
                || kept.total_points() != stats.total_points()
                || sum_err > tol
                || scatter_err > tol
            {
                return Err(Error::State(format!("cluster {} statistics drifted", id.0)));
            }
        }
        Ok(())
    }

    /// Collapsed log-likelihood of the data given the current partition.
    pub fn log_likelihood<M: ComponentModel>(&self, model: &M) -> Result<f64> {
        self.clusters
            .values()
            .try_fold(0.0, |acc, c| Ok(acc + model.log_marginal(&c.stats)?))
    }
}

pub(crate) fn canonical_labels<T: Ord + Copy>(assignments: &[T]) -> Vec<usize> {
    let mut map = BTreeMap::new();
    assignments
        .iter()
        .map(|a| {
            let next = map.len();
            *map.entry(*a).or_insert(next)
        })
        .collect()
}

/// Unnormalized log weights for re-assigning the detached item `index`:
/// `log n_k + log p(item | cluster k)` for each live cluster in id order,
/// then `log η + log p(item | prior)` for a new cluster.
pub fn assignment_log_weights<M: ComponentModel>(
    state: &GibbsState,
    model: &M,
    index: usize,
    item: &M::Item,
) -> Result<Vec<(Choice, f64)>> {
    if state.detached != Some(index) {
        return Err(Error::State(format!(
            "item {index} must be detached before weighting its assignment"
        )));
    }
    let mut weights = Vec::with_capacity(state.clusters.len() + 1);
    for (id, cluster) in &state.clusters {
        let lw = (cluster.member_count() as f64).ln() + model.log_predictive(&cluster.stats, item)?;
        weights.push((Choice::Existing(*id), lw));
    }
    let lw_new = state.concentration.ln() + model.log_predictive(&model.empty_stats(), item)?;
    weights.push((Choice::New, lw_new));
    Ok(weights)
}

/// Normalizes log weights into probabilities by max-shift exponentiation.
pub fn normalize_log_weights(log_weights: &[f64]) -> Result<Vec<f64>> {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::Numerical(format!("log weights have no finite maximum ({max})")));
    }
    let mut probs: Vec<f64> = log_weights.iter().map(|w| (w - max).exp()).collect();
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);
    Ok(probs)
}

/// Inverse-CDF draw from unnormalized log weights.
pub fn sample_log_categorical<R: Rng + ?Sized>(log_weights: &[f64], rng: &mut R) -> Result<usize> {
    let probs = normalize_log_weights(log_weights)?;
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return Ok(i);
        }
    }
    // u landed in the rounding gap above the final partial sum.
    Ok(probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1))
}

/// Resamples every indicator once, in index order.
pub fn gibbs_sweep<M: ComponentModel, R: Rng + ?Sized>(
    state: &mut GibbsState,
    model: &M,
    data: &[M::Item],
    rng: &mut R,
) -> Result<()> {
    if data.len() != state.num_items() {
        return Err(Error::Input(format!(
            "state tracks {} items but {} were supplied",
            state.num_items(),
            data.len()
        )));
    }
    let mut log_weights = Vec::new();
    for (i, item) in data.iter().enumerate() {
        state.detach::<M>(i, item)?;
        let weights = assignment_log_weights(state, model, i, item)?;
        log_weights.clear();
        log_weights.extend(weights.iter().map(|(_, w)| *w));
        let pick = sample_log_categorical(&log_weights, rng)?;
        state.attach(model, i, item, weights[pick].0)?;
    }
    Ok(())
}

/// How the chain's first partition is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Initialization {
    /// All items in one cluster.
    Single,
    /// Uniform random labels over `max_clusters` clusters.
    Random { max_clusters: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub num_sweeps: usize,
    /// Defaults to 10% of `num_sweeps` when unset.
    pub burn_in: Option<usize>,
    pub seed: u64,
    pub resample_concentration: bool,
    pub init: Initialization,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            num_sweeps: 500,
            burn_in: None,
            seed: 0,
            resample_concentration: true,
            init: Initialization::Single,
        }
    }
}

impl ChainConfig {
    pub fn resolved_burn_in(&self) -> usize {
        self.burn_in.unwrap_or(self.num_sweeps / 10)
    }
}

/// State of the chain after one sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub sweep: usize,
    pub k: usize,
    pub concentration: f64,
    pub log_likelihood: f64,
    /// Partition as labels `0..K` in order of first appearance.
    pub assignments: Vec<usize>,
}

/// Every sweep of a chain, starting with the initial state as sweep 0.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ChainTrace {
    pub burn_in: usize,
    pub records: Vec<SweepRecord>,
}

impl ChainTrace {
    /// Records after the burn-in period. When the chain is no longer than
    /// its burn-in, this is the final record alone.
    pub fn post_burn_in(&self) -> &[SweepRecord] {
        let start = self.records.partition_point(|r| r.sweep <= self.burn_in);
        if start < self.records.len() {
            &self.records[start..]
        } else {
            &self.records[self.records.len().saturating_sub(1)..]
        }
    }

    pub fn last(&self) -> Option<&SweepRecord> {
        self.records.last()
    }

    /// Most frequent `K` after burn-in; ties go to the smaller `K`.
    pub fn k_mode(&self) -> Option<usize> {
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for r in self.post_burn_in() {
            *counts.entry(r.k).or_default() += 1;
        }
        counts
            .into_iter()
            .fold(None, |best: Option<(usize, usize)>, (k, c)| match best {
                Some((_, bc)) if bc >= c => best,
                _ => Some((k, c)),
            })
            .map(|(k, _)| k)
    }
}

/// Runs a collapsed Gibbs chain for any conjugate component family.
pub fn run_collapsed_chain<M: ComponentModel>(
    model: &M,
    data: &[M::Item],
    concentration: f64,
    concentration_prior: Option<&GammaParams>,
    config: &ChainConfig,
) -> Result<ChainTrace> {
    if data.is_empty() {
        return Err(Error::Input("cannot run a chain on an empty dataset".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut state = match config.init {
        Initialization::Single => GibbsState::single_cluster(model, data, concentration)?,
        Initialization::Random { max_clusters } => {
            GibbsState::random(model, data, max_clusters, concentration, &mut rng)?
        }
    };
    let hyperprior = if config.resample_concentration {
        concentration_prior
    } else {
        None
    };
    let mut trace = ChainTrace {
        burn_in: config.resolved_burn_in(),
        records: Vec::with_capacity(config.num_sweeps + 1),
    };
    trace.records.push(record(0, &state, model)?);
    for sweep in 1..=config.num_sweeps {
        gibbs_sweep(&mut state, model, data, &mut rng)?;
        let eta = sample_concentration(
            state.concentration,
            state.num_clusters(),
            data.len(),
            hyperprior,
            &mut rng,
        );
        state.set_concentration(eta)?;
        trace.records.push(record(sweep, &state, model)?);
    }
    Ok(trace)
}

fn record<M: ComponentModel>(sweep: usize, state: &GibbsState, model: &M) -> Result<SweepRecord> {
    let log_likelihood = state.log_likelihood(model)?;
    if !log_likelihood.is_finite() {
        return Err(Error::Numerical(format!(
            "log-likelihood is {log_likelihood} at sweep {sweep}"
        )));
    }
    Ok(SweepRecord {
        sweep,
        k: state.num_clusters(),
        concentration: state.concentration,
        log_likelihood,
        assignments: state.canonical_labels(),
    })
}

/// Fits the DP-RFS mixture to a collection of point patterns.
pub fn run_chain(data: &[PointPattern], hyper: &Hyperparams, config: &ChainConfig) -> Result<ChainTrace> {
    if let Some(first) = data.first() {
        for x in data {
            check_dim(first.dim(), x.dim())?;
        }
    }
    run_collapsed_chain(
        &hyper.prior,
        data,
        hyper.concentration,
        hyper.concentration_prior.as_ref(),
        config,
    )
}

fn null_as_infinity<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
}

/// One cluster of the final sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub label: usize,
    pub member_count: usize,
    pub total_points: usize,
    /// Posterior mean of the Poisson rate, `α_N / β_N`; absent for
    /// vector-valued mixtures.
    pub mean_rate: Option<f64>,
    /// Posterior mean of the Gaussian location, `μ_N`.
    pub mean_location: Vec<f64>,
    /// Spectral norm of the posterior predictive covariance (infinite when
    /// the predictive has two or fewer degrees of freedom; `null` in JSON).
    #[serde(deserialize_with = "null_as_infinity")]
    pub predictive_covariance_norm: f64,
    /// Predictive covariance exceeds the degeneracy threshold.
    pub degenerate: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub k_mode: usize,
    pub final_k: usize,
    pub num_records: usize,
    pub degenerate_threshold: f64,
    pub clusters: Vec<ClusterSummary>,
}

impl PosteriorSummary {
    pub fn cluster(&self, label: usize) -> Option<&ClusterSummary> {
        self.clusters.iter().find(|c| c.label == label)
    }
}

/// Default multiple of the data covariance norm above which a cluster's
/// predictive covariance is flagged as degenerate.
pub const DEFAULT_DEGENERATE_FACTOR: f64 = 1e6;

/// Summarizes a DP-RFS chain: `K` mode after burn-in plus per-cluster
/// posterior means for the final sweep's partition.
pub fn summarize(
    trace: &ChainTrace,
    data: &[PointPattern],
    hyper: &Hyperparams,
    degenerate_factor: f64,
) -> Result<PosteriorSummary> {
    let dim = hyper.prior.dim();
    let pooled = data.iter().flat_map(PointPattern::iter);
    summarize_with(trace, &hyper.prior, data, dim, pooled, degenerate_factor, |stats| {
        Some(conjugate::gamma_posterior(&hyper.prior.rate_prior, stats).mean())
    })
}

pub(crate) fn summarize_with<'a, M, I, F>(
    trace: &ChainTrace,
    model: &M,
    data: &[M::Item],
    dim: usize,
    pooled_points: I,
    degenerate_factor: f64,
    mean_rate: F,
) -> Result<PosteriorSummary>
where
    M: ComponentModel + AsRef<conjugate::NiwParams>,
    I: IntoIterator<Item = &'a [f64]>,
    F: Fn(&SetSufficientStats) -> Option<f64>,
{
    let last = trace
        .last()
        .ok_or_else(|| Error::Input("cannot summarize an empty trace".into()))?;
    if last.assignments.len() != data.len() {
        return Err(Error::Input(format!(
            "trace covers {} items but {} were supplied",
            last.assignments.len(),
            data.len()
        )));
    }
    let k_mode = trace.k_mode().expect("non-empty trace has a mode");
    let (count, _, cov) = linalg::mean_and_covariance(dim, pooled_points);
    let reference = if count >= 2 {
        linalg::spectral_norm_sym(&cov).max(f64::MIN_POSITIVE)
    } else {
        1.0
    };
    let threshold = degenerate_factor * reference;

    let mut groups: BTreeMap<usize, SetSufficientStats> = BTreeMap::new();
    for (item, &label) in data.iter().zip(&last.assignments) {
        M::add(groups.entry(label).or_insert_with(|| model.empty_stats()), item)?;
    }
    let feature_prior = model.as_ref();
    let clusters = groups
        .into_iter()
        .map(|(label, stats)| {
            let post = conjugate::niw_posterior(feature_prior, &stats)?;
            let dof = post.predictive_dof();
            let norm = if dof > 2.0 {
                linalg::spectral_norm_sym(&post.predictive_shape()) * dof / (dof - 2.0)
            } else {
                f64::INFINITY
            };
            Ok(ClusterSummary {
                label,
                member_count: stats.num_sets(),
                total_points: stats.total_points(),
                mean_rate: mean_rate(&stats),
                mean_location: post.mean_loc().iter().copied().collect(),
                predictive_covariance_norm: norm,
                degenerate: norm > threshold,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PosteriorSummary {
        k_mode,
        final_k: last.k,
        num_records: trace.post_burn_in().len(),
        degenerate_threshold: threshold,
        clusters,
    })
}

impl AsRef<conjugate::NiwParams> for RfsPrior {
    fn as_ref(&self) -> &conjugate::NiwParams {
        &self.feature_prior
    }
}

impl AsRef<conjugate::NiwParams> for conjugate::NiwParams {
    fn as_ref(&self) -> &conjugate::NiwParams {
        self
    }
}
