use crate::conjugate::{self, NiwParams, RfsPrior, SetSufficientStats};
use crate::error::{check_dim, Result};
use crate::rfs::PointPattern;

/// A conjugate component family that the collapsed sampler can integrate
/// out: it knows how to fold items into sufficient statistics and how to
/// score an item under the posterior predictive of those statistics.
pub trait ComponentModel {
    type Item;

    fn dim(&self) -> usize;

    fn item_dim(item: &Self::Item) -> usize;

    fn add(stats: &mut SetSufficientStats, item: &Self::Item) -> Result<()>;

    fn remove(stats: &mut SetSufficientStats, item: &Self::Item) -> Result<()>;

    /// Log posterior predictive of `item` given the members behind `stats`.
    fn log_predictive(&self, stats: &SetSufficientStats, item: &Self::Item) -> Result<f64>;

    /// Log marginal likelihood of all members behind `stats`.
    fn log_marginal(&self, stats: &SetSufficientStats) -> Result<f64>;

    fn empty_stats(&self) -> SetSufficientStats {
        SetSufficientStats::empty(self.dim())
    }
}

/// Poisson RFS components: each item is a whole point pattern.
impl ComponentModel for RfsPrior {
    type Item = PointPattern;

    fn dim(&self) -> usize {
        RfsPrior::dim(self)
    }

    fn item_dim(item: &PointPattern) -> usize {
        item.dim()
    }

    fn add(stats: &mut SetSufficientStats, item: &PointPattern) -> Result<()> {
        stats.add(item)
    }

    fn remove(stats: &mut SetSufficientStats, item: &PointPattern) -> Result<()> {
        stats.remove(item)
    }

    fn log_predictive(&self, stats: &SetSufficientStats, item: &PointPattern) -> Result<f64> {
        conjugate::log_predictive_set(self, stats, item)
    }

    fn log_marginal(&self, stats: &SetSufficientStats) -> Result<f64> {
        conjugate::log_marginal_stats(self, stats)
    }
}

/// Plain Gaussian components over individual vectors; each vector counts
/// as one member.
impl ComponentModel for NiwParams {
    type Item = Vec<f64>;

    fn dim(&self) -> usize {
        NiwParams::dim(self)
    }

    fn item_dim(item: &Vec<f64>) -> usize {
        item.len()
    }

    fn add(stats: &mut SetSufficientStats, item: &Vec<f64>) -> Result<()> {
        stats.add_point(item)
    }

    fn remove(stats: &mut SetSufficientStats, item: &Vec<f64>) -> Result<()> {
        stats.remove_point(item)
    }

    fn log_predictive(&self, stats: &SetSufficientStats, item: &Vec<f64>) -> Result<f64> {
        check_dim(self.dim(), item.len())?;
        let post = conjugate::niw_posterior(self, stats)?;
        conjugate::student_t_log_density(item, &post)
    }

    fn log_marginal(&self, stats: &SetSufficientStats) -> Result<f64> {
        conjugate::log_marginal_niw(self, stats)
    }
}
