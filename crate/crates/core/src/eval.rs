//! Comparing inferred partitions and rates against ground truth.

use std::collections::BTreeMap;

use pathfinding::kuhn_munkres::kuhn_munkres;
use pathfinding::matrix::Matrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampler::{ChainTrace, PosteriorSummary};
use crate::synth::StarConfig;

/// `(sweep, K)` for every recorded sweep.
pub fn k_trace(trace: &ChainTrace) -> Vec<(usize, usize)> {
    trace.records.iter().map(|r| (r.sweep, r.k)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub predicted: usize,
    pub truth: usize,
    /// Items carrying both labels.
    pub count: usize,
}

/// Optimal one-to-one matching between predicted clusters and true labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matching {
    /// Matched items over all items.
    pub accuracy: f64,
    /// Matched pairs with non-zero overlap.
    pub pairs: Vec<MatchedPair>,
}

impl Matching {
    pub fn cluster_for(&self, truth: usize) -> Option<usize> {
        self.pairs.iter().find(|p| p.truth == truth).map(|p| p.predicted)
    }
}

/// Maximizes the total overlap of a one-to-one cluster/label matching
/// over the contingency table (Hungarian algorithm).
pub fn partition_matching(predicted: &[usize], truth: &[usize]) -> Result<Matching> {
    if predicted.len() != truth.len() {
        return Err(Error::Input(format!(
            "{} predictions for {} labels",
            predicted.len(),
            truth.len()
        )));
    }
    if predicted.is_empty() {
        return Ok(Matching {
            accuracy: 1.0,
            pairs: Vec::new(),
        });
    }
    let index = |labels: &[usize]| {
        let mut ids = BTreeMap::new();
        for &l in labels {
            let next = ids.len();
            ids.entry(l).or_insert(next);
        }
        ids
    };
    let pred_ids = index(predicted);
    let truth_ids = index(truth);
    let mut table = vec![vec![0i64; truth_ids.len()]; pred_ids.len()];
    for (p, t) in predicted.iter().zip(truth) {
        table[pred_ids[p]][truth_ids[t]] += 1;
    }
    let pred_labels: Vec<usize> = order(&pred_ids);
    let truth_labels: Vec<usize> = order(&truth_ids);

    // kuhn_munkres needs rows <= columns.
    let transpose = pred_ids.len() > truth_ids.len();
    let rows: Vec<Vec<i64>> = if transpose {
        (0..truth_ids.len())
            .map(|j| table.iter().map(|row| row[j]).collect())
            .collect()
    } else {
        table.clone()
    };
    let weights = Matrix::from_rows(rows).expect("rectangular contingency table");
    let (total, assignment) = kuhn_munkres(&weights);
    let mut pairs: Vec<MatchedPair> = assignment
        .iter()
        .enumerate()
        .map(|(r, &c)| {
            let (pi, ti) = if transpose { (c, r) } else { (r, c) };
            MatchedPair {
                predicted: pred_labels[pi],
                truth: truth_labels[ti],
                count: table[pi][ti] as usize,
            }
        })
        .filter(|p| p.count > 0)
        .collect();
    pairs.sort_by_key(|p| p.truth);
    Ok(Matching {
        accuracy: total as f64 / predicted.len() as f64,
        pairs,
    })
}

fn order(ids: &BTreeMap<usize, usize>) -> Vec<usize> {
    let mut out = vec![0; ids.len()];
    for (&label, &i) in ids {
        out[i] = label;
    }
    out
}

/// Fraction of items on the optimal one-to-one cluster/label matching.
/// Invariant to relabelling either argument.
pub fn partition_accuracy(predicted: &[usize], truth: &[usize]) -> Result<f64> {
    Ok(partition_matching(predicted, truth)?.accuracy)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub component: usize,
    pub true_rate: f64,
    /// Matched cluster, or `None` when the component went unmatched.
    pub cluster: Option<usize>,
    pub estimated_rate: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnmatchedCluster {
    pub cluster: usize,
    pub estimated_rate: Option<f64>,
    pub member_count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub components: Vec<RateRow>,
    pub unmatched_clusters: Vec<UnmatchedCluster>,
    /// Clusters whose predictive covariance exceeded the degeneracy
    /// threshold, whether matched or not.
    pub flagged_clusters: Vec<usize>,
}

/// Pairs each true component's rate with the posterior mean rate of its
/// matched cluster.
pub fn rate_report(summary: &PosteriorSummary, truth: &StarConfig, matching: &Matching) -> Result<RateReport> {
    if summary.clusters.is_empty() {
        return Err(Error::Input("summary has no clusters".into()));
    }
    let components = truth
        .component_rates
        .iter()
        .enumerate()
        .map(|(component, &true_rate)| {
            let cluster = matching.cluster_for(component);
            let estimated_rate = cluster.and_then(|c| summary.cluster(c)).and_then(|c| c.mean_rate);
            RateRow {
                component,
                true_rate,
                cluster,
                estimated_rate,
            }
        })
        .collect::<Vec<_>>();
    let unmatched_clusters = summary
        .clusters
        .iter()
        .filter(|c| !matching.pairs.iter().any(|p| p.predicted == c.label))
        .map(|c| UnmatchedCluster {
            cluster: c.label,
            estimated_rate: c.mean_rate,
            member_count: c.member_count,
        })
        .collect();
    let flagged_clusters = summary
        .clusters
        .iter()
        .filter(|c| c.degenerate)
        .map(|c| c.label)
        .collect();
    Ok(RateReport {
        components,
        unmatched_clusters,
        flagged_clusters,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::{ClusterSummary, SweepRecord};

    #[test]
    fn relabelled_partition_is_perfect() {
        let truth = [0, 0, 1, 1, 2, 2, 2];
        let pred = [5, 5, 9, 9, 1, 1, 1];
        assert_eq!(partition_accuracy(&pred, &truth).unwrap(), 1.0);
        assert_eq!(partition_accuracy(&truth, &pred).unwrap(), 1.0);
    }

    #[test]
    fn single_cluster_vs_five_balanced_labels() {
        let truth: Vec<usize> = (0..50).map(|i| i % 5).collect();
        let pred = vec![0; 50];
        assert!((partition_accuracy(&pred, &truth).unwrap() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn more_clusters_than_labels() {
        let truth = [0, 0, 0, 1, 1, 1];
        let pred = [0, 0, 1, 2, 2, 3];
        let m = partition_matching(&pred, &truth).unwrap();
        assert!((m.accuracy - 4.0 / 6.0).abs() < 1e-15);
        assert_eq!(m.cluster_for(0), Some(0));
        assert_eq!(m.cluster_for(1), Some(2));
    }

    #[test]
    fn length_mismatch_is_an_error() {
        assert!(partition_accuracy(&[0, 1], &[0]).is_err());
    }

    #[test]
    fn k_trace_one_entry_per_record() {
        let trace = ChainTrace {
            burn_in: 0,
            records: (0..4)
                .map(|s| SweepRecord {
                    sweep: s,
                    k: 3,
                    concentration: 1.0,
                    log_likelihood: -1.0,
                    assignments: vec![],
                })
                .collect(),
        };
        assert_eq!(k_trace(&trace), vec![(0, 3), (1, 3), (2, 3), (3, 3)]);
    }

    fn cluster(label: usize, rate: f64, degenerate: bool) -> ClusterSummary {
        ClusterSummary {
            label,
            member_count: 10,
            total_points: 10,
            mean_rate: Some(rate),
            mean_location: vec![0.0, 0.0],
            predictive_covariance_norm: 1.0,
            degenerate,
        }
    }

    #[test]
    fn rate_report_pairs_and_leftovers() {
        let truth = StarConfig::default();
        let summary = PosteriorSummary {
            k_mode: 6,
            final_k: 6,
            num_records: 1,
            degenerate_threshold: 1e6,
            clusters: vec![
                cluster(0, 99.0, false),
                cluster(1, 0.45, false),
                cluster(2, 0.52, false),
                cluster(3, 0.48, false),
                cluster(4, 0.55, false),
                cluster(5, 3.0, true),
            ],
        };
        let pred = [0, 1, 2, 3, 4, 5];
        let labels = [0, 1, 2, 3, 4, 0];
        let m = partition_matching(&pred, &labels).unwrap();
        let report = rate_report(&summary, &truth, &m).unwrap();
        assert_eq!(report.components[0].estimated_rate, Some(99.0));
        assert_eq!(report.components[3].true_rate, 0.5);
        assert_eq!(report.components[3].estimated_rate, Some(0.48));
        assert_eq!(report.unmatched_clusters.len(), 1);
        assert_eq!(report.unmatched_clusters[0].cluster, 5);
        assert_eq!(report.flagged_clusters, vec![5]);

        let empty = PosteriorSummary {
            clusters: vec![],
            ..summary
        };
        assert!(rate_report(&empty, &truth, &m).is_err());
    }
}
