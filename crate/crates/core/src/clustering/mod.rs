//! Gaussian mixtures for cluster-loss targets, DBSCAN for discretization,
//! and silhouette scoring. All of it runs on deduplicated weighted points.

pub mod dbscan;
pub mod gmm;
pub mod points;
pub mod silhouette;

pub use dbscan::{assign_cluster, dbscan, dbscan_tune, dbscan_with, eps_grid, pairwise_eps_grid, tune_with, DbscanModel, TuneCandidate, TuneResult};
pub use gmm::{gmm_fit, select_k_elbow, GmmConfig, GmmModel, KScore, KSelection};
pub use points::{percentile, DistanceMatrix, Standardizer, WeightedPoints};
pub use silhouette::{silhouette_score, silhouette_with};

/// `index,cluster` lines, `noise` for unlabelled points.
pub fn assignments_csv(labels: &[Option<usize>]) -> String {
    let mut s = String::from("index,cluster\n");
    for (i, l) in labels.iter().enumerate() {
        match l {
            Some(c) => s.push_str(&format!("{i},{c}\n")),
            None => s.push_str(&format!("{i},noise\n")),
        }
    }
    s
}
