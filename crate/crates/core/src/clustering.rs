//! Pythagorean fuzzy c-means clustering.
//!
//! Alternates membership updates against fixed centroids with centroid
//! updates against fixed memberships until the centroids stop moving. The
//! objective is the mean fuzzy-membership-weighted squared point-to-centroid
//! distance, normalized by `c * n` so values are comparable across dataset
//! sizes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pfs::{vector_distance, FeatureVector, Pfn, PfsError};

#[derive(Debug, Error)]
pub enum ClusteringError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Pfs(#[from] PfsError),
    #[error("expected {expected} initial centroids, got {actual}")]
    CentroidCount { expected: usize, actual: usize },
    #[error("no data points supplied")]
    NoPoints,
    #[error("cluster {cluster} lost all membership mass")]
    DegenerateCluster { cluster: usize },
}

/// Weighting applied to memberships inside the centroid update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CentroidWeighting {
    /// Weight each point by `u^m` — the stationary point of the objective,
    /// which guarantees the objective never increases across iterations.
    Fuzzified,
    /// Weight each point by the raw membership `u`.
    Literal,
}

#[derive(Debug, Clone)]
pub struct PfcmConfig {
    /// Number of clusters, at least 2.
    pub clusters: usize,
    /// Fuzzifier `m`, strictly greater than 1.
    pub fuzzifier: f64,
    /// Convergence threshold on the mean centroid movement.
    pub epsilon: f64,
    pub max_iters: usize,
    pub weighting: CentroidWeighting,
}

impl PfcmConfig {
    pub fn new(clusters: usize) -> Self {
        Self {
            clusters,
            fuzzifier: 2.0,
            epsilon: 1e-6,
            max_iters: 200,
            weighting: CentroidWeighting::Fuzzified,
        }
    }

    pub fn validate(&self) -> Result<(), ClusteringError> {
        if self.clusters < 2 {
            return Err(ClusteringError::InvalidConfig(format!(
                "clusters must be >= 2, got {}",
                self.clusters
            )));
        }
        if self.fuzzifier.is_nan() || self.fuzzifier <= 1.0 {
            return Err(ClusteringError::InvalidConfig(format!(
                "fuzzifier must be > 1, got {}",
                self.fuzzifier
            )));
        }
        if self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return Err(ClusteringError::InvalidConfig(format!(
                "epsilon must be > 0, got {}",
                self.epsilon
            )));
        }
        if self.max_iters == 0 {
            return Err(ClusteringError::InvalidConfig(
                "max_iters must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Converged clustering state: memberships (c rows by n columns), centroids,
/// the final objective, and the per-iteration objective values.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    pub memberships: Vec<Vec<f64>>,
    pub centroids: Vec<FeatureVector>,
    pub objective: f64,
    pub iterations: usize,
    pub objective_history: Vec<f64>,
}

fn check_shapes(points: &[FeatureVector], centroids: &[FeatureVector]) -> Result<(), ClusteringError> {
    if points.is_empty() {
        return Err(ClusteringError::NoPoints);
    }
    if centroids.is_empty() {
        return Err(ClusteringError::CentroidCount {
            expected: 1,
            actual: 0,
        });
    }
    let dims = points[0].len();
    if dims == 0 {
        return Err(ClusteringError::Pfs(PfsError::EmptyVector));
    }
    for p in points.iter().chain(centroids.iter()) {
        if p.len() != dims {
            return Err(ClusteringError::Pfs(PfsError::DimensionMismatch {
                left: dims,
                right: p.len(),
            }));
        }
    }
    Ok(())
}

fn distance_matrix(
    points: &[FeatureVector],
    centroids: &[FeatureVector],
) -> Result<Vec<Vec<f64>>, ClusteringError> {
    centroids
        .iter()
        .map(|v| {
            points
                .iter()
                .map(|x| vector_distance(x, v).map_err(ClusteringError::from))
                .collect()
        })
        .collect()
}

/// Mean fuzzy-weighted squared distance `(1 / (c n)) sum u_ij^m d_ij^2`.
pub fn objective(
    points: &[FeatureVector],
    memberships: &[Vec<f64>],
    centroids: &[FeatureVector],
    fuzzifier: f64,
) -> Result<f64, ClusteringError> {
    check_shapes(points, centroids)?;
    let (c, n) = (centroids.len(), points.len());
    if memberships.len() != c || memberships.iter().any(|row| row.len() != n) {
        return Err(ClusteringError::Pfs(PfsError::DimensionMismatch {
            left: memberships.len(),
            right: c,
        }));
    }
    let distances = distance_matrix(points, centroids)?;
    let mut total = 0.0;
    for i in 0..c {
        for j in 0..n {
            let d = distances[i][j];
            total += memberships[i][j].powf(fuzzifier) * d * d;
        }
    }
    Ok(total / (c * n) as f64)
}

fn memberships_from_distances(distances: &[Vec<f64>], fuzzifier: f64) -> Vec<Vec<f64>> {
    let c = distances.len();
    let n = distances[0].len();
    let exponent = 2.0 / (fuzzifier - 1.0);
    let mut u = vec![vec![0.0; n]; c];
    for j in 0..n {
        // A point sitting exactly on a centroid belongs there outright;
        // the lowest cluster index wins when several coincide.
        if let Some(hit) = (0..c).find(|&i| distances[i][j] == 0.0) {
            u[hit][j] = 1.0;
            continue;
        }
        for i in 0..c {
            let mut denom = 0.0;
            for other in 0..c {
                denom += (distances[i][j] / distances[other][j]).powf(exponent);
            }
            u[i][j] = 1.0 / denom;
        }
    }
    u
}

/// Membership update against fixed centroids; every column of the result
/// sums to 1.
pub fn update_memberships(
    points: &[FeatureVector],
    centroids: &[FeatureVector],
    fuzzifier: f64,
) -> Result<Vec<Vec<f64>>, ClusteringError> {
    check_shapes(points, centroids)?;
    let distances = distance_matrix(points, centroids)?;
    Ok(memberships_from_distances(&distances, fuzzifier))
}

/// Centroid update against fixed memberships: per dimension, the new
/// centroid's squared degrees are the weighted means of the points' squared
/// degrees. Convex combinations keep every entry a valid PFN.
pub fn update_centroids(
    points: &[FeatureVector],
    memberships: &[Vec<f64>],
    fuzzifier: f64,
    weighting: CentroidWeighting,
) -> Result<Vec<FeatureVector>, ClusteringError> {
    if points.is_empty() {
        return Err(ClusteringError::NoPoints);
    }
    let n = points.len();
    let dims = points[0].len();
    let mut centroids = Vec::with_capacity(memberships.len());
    for (i, row) in memberships.iter().enumerate() {
        if row.len() != n {
            return Err(ClusteringError::Pfs(PfsError::DimensionMismatch {
                left: row.len(),
                right: n,
            }));
        }
        let weights: Vec<f64> = row
            .iter()
            .map(|&u| match weighting {
                CentroidWeighting::Fuzzified => u.powf(fuzzifier),
                CentroidWeighting::Literal => u,
            })
            .collect();
        let mass: f64 = weights.iter().sum();
        if mass <= 1e-12 {
            return Err(ClusteringError::DegenerateCluster { cluster: i });
        }
        let mut entries = Vec::with_capacity(dims);
        for d in 0..dims {
            let mut mu_sq = 0.0;
            let mut nu_sq = 0.0;
            for (j, point) in points.iter().enumerate() {
                let p = point.values()[d];
                mu_sq += weights[j] * p.mu() * p.mu();
                nu_sq += weights[j] * p.nu() * p.nu();
            }
            let mu = (mu_sq / mass).clamp(0.0, 1.0).sqrt();
            let nu = (nu_sq / mass).clamp(0.0, 1.0).sqrt();
            entries.push(Pfn::new(mu, nu)?);
        }
        centroids.push(FeatureVector::new(entries));
    }
    Ok(centroids)
}

/// Runs the full alternating scheme from the given initial centroids.
/// Deterministic: no randomness is involved once the centroids are fixed.
pub fn run_pfcm(
    points: &[FeatureVector],
    config: &PfcmConfig,
    initial_centroids: &[FeatureVector],
) -> Result<ClusterModel, ClusteringError> {
    config.validate()?;
    if initial_centroids.len() != config.clusters {
        return Err(ClusteringError::CentroidCount {
            expected: config.clusters,
            actual: initial_centroids.len(),
        });
    }
    check_shapes(points, initial_centroids)?;

    let mut centroids = initial_centroids.to_vec();
    let mut memberships = Vec::new();
    let mut history = Vec::new();
    let mut iterations = 0;

    for _ in 0..config.max_iters {
        let distances = distance_matrix(points, &centroids)?;
        memberships = memberships_from_distances(&distances, config.fuzzifier);
        let next = update_centroids(points, &memberships, config.fuzzifier, config.weighting)?;

        let mut movement = 0.0;
        for (new, old) in next.iter().zip(&centroids) {
            movement += vector_distance(new, old)?;
        }
        movement /= config.clusters as f64;

        centroids = next;
        iterations += 1;
        history.push(objective(points, &memberships, &centroids, config.fuzzifier)?);

        if movement <= config.epsilon {
            break;
        }
    }

    let objective = *history.last().expect("at least one iteration ran");
    Ok(ClusterModel {
        memberships,
        centroids,
        objective,
        iterations,
        objective_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::two_clouds;

    fn pfn(mu: f64, nu: f64) -> Pfn {
        Pfn::new(mu, nu).unwrap()
    }

    fn vec1(p: Pfn) -> FeatureVector {
        FeatureVector::new(vec![p])
    }

    #[test]
    fn config_validation() {
        assert!(PfcmConfig::new(1).validate().is_err());
        let mut cfg = PfcmConfig::new(2);
        cfg.max_iters = 0;
        assert!(cfg.validate().is_err());
        cfg.max_iters = 10;
        cfg.fuzzifier = 1.0;
        assert!(cfg.validate().is_err());
        cfg.fuzzifier = 2.0;
        cfg.epsilon = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn objective_hand_case() {
        // One point at distance 1 from both centroids, equal memberships.
        let points = vec![vec1(pfn(1.0, 0.0))];
        let centroids = vec![vec1(pfn(0.0, 1.0)), vec1(pfn(0.0, 1.0))];
        let u = vec![vec![0.5], vec![0.5]];
        let j = objective(&points, &u, &centroids, 2.0).unwrap();
        assert!((j - 0.25).abs() < 1e-15);
    }

    #[test]
    fn objective_zero_when_points_sit_on_centroids() {
        let points = vec![vec1(pfn(0.3, 0.2)), vec1(pfn(0.8, 0.1))];
        let centroids = vec![vec1(pfn(0.3, 0.2)), vec1(pfn(0.8, 0.1))];
        let u = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert_eq!(objective(&points, &u, &centroids, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn objective_decreases_with_larger_fuzzifier() {
        let points = vec![vec1(pfn(1.0, 0.0))];
        let centroids = vec![vec1(pfn(0.0, 1.0)), vec1(pfn(0.5, 0.5))];
        let u = vec![vec![0.6], vec![0.4]];
        let j2 = objective(&points, &u, &centroids, 2.0).unwrap();
        let j3 = objective(&points, &u, &centroids, 3.0).unwrap();
        assert!(j3 < j2);
    }

    #[test]
    fn membership_zero_distance_branch() {
        let points = vec![vec1(pfn(0.4, 0.3))];
        let centroids = vec![vec1(pfn(0.9, 0.1)), vec1(pfn(0.4, 0.3)), vec1(pfn(0.1, 0.9))];
        let u = update_memberships(&points, &centroids, 2.0).unwrap();
        assert_eq!(u[0][0], 0.0);
        assert_eq!(u[1][0], 1.0);
        assert_eq!(u[2][0], 0.0);
    }

    #[test]
    fn membership_symmetry_and_ratio() {
        // Equidistant point -> (0.5, 0.5).
        let points = vec![vec1(pfn(0.5, 0.5))];
        let centroids = vec![vec1(pfn(1.0, 0.0)), vec1(pfn(0.0, 1.0))];
        let u = update_memberships(&points, &centroids, 2.0).unwrap();
        assert!((u[0][0] - 0.5).abs() < 1e-12);
        assert!((u[1][0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn membership_distance_ratio_hand_case() {
        // d1 = 1, d2 = 2, m = 2 -> u = (0.8, 0.2). Exercised through the
        // internal kernel so the distances can be pinned exactly.
        let distances = vec![vec![1.0], vec![2.0]];
        let u = memberships_from_distances(&distances, 2.0);
        assert!((u[0][0] - 0.8).abs() < 1e-12);
        assert!((u[1][0] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn membership_columns_sum_to_one() {
        let points = two_clouds(40, 4, 7);
        let centroids = vec![points[0].clone(), points[25].clone(), points[39].clone()];
        let u = update_memberships(&points, &centroids, 2.0).unwrap();
        let n = points.len();
        for j in 0..n {
            let s: f64 = u.iter().map(|row| row[j]).sum();
            assert!((s - 1.0).abs() < 1e-9, "column {j} sums to {s}");
        }
    }

    #[test]
    fn centroid_update_weighted_mean_of_squares() {
        let points = vec![vec1(pfn(1.0, 0.0)), vec1(pfn(0.0, 1.0))];
        let u = vec![vec![0.5, 0.5], vec![0.5, 0.5]];
        let v = update_centroids(&points, &u, 2.0, CentroidWeighting::Fuzzified).unwrap();
        let expected = 0.5f64.sqrt();
        for centroid in &v {
            let p = centroid.values()[0];
            assert!((p.mu() - expected).abs() < 1e-12);
            assert!((p.nu() - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn centroid_update_identity_cases() {
        let points = vec![vec1(pfn(0.3, 0.4)), vec1(pfn(0.3, 0.4))];
        let u = vec![vec![1.0, 1.0]];
        let v = update_centroids(&points, &u, 2.0, CentroidWeighting::Fuzzified).unwrap();
        let p = v[0].values()[0];
        assert!((p.mu() - 0.3).abs() < 1e-12);
        assert!((p.nu() - 0.4).abs() < 1e-12);

        // Single point with full membership reproduces the point.
        let one = vec![vec1(pfn(0.6, 0.2))];
        let v = update_centroids(&one, &[vec![1.0]], 2.0, CentroidWeighting::Fuzzified).unwrap();
        let p = v[0].values()[0];
        assert!((p.mu() - 0.6).abs() < 1e-12);
        assert!((p.nu() - 0.2).abs() < 1e-12);
    }

    #[test]
    fn centroid_update_degenerate_cluster() {
        let points = vec![vec1(pfn(0.3, 0.4))];
        let u = vec![vec![1.0], vec![0.0]];
        assert!(matches!(
            update_centroids(&points, &u, 2.0, CentroidWeighting::Fuzzified),
            Err(ClusteringError::DegenerateCluster { cluster: 1 })
        ));
    }

    #[test]
    fn run_converges_immediately_when_centroids_are_the_points() {
        let points = vec![vec1(pfn(0.9, 0.1)), vec1(pfn(0.1, 0.9))];
        let cfg = PfcmConfig::new(2);
        let model = run_pfcm(&points, &cfg, &points.clone()).unwrap();
        assert_eq!(model.iterations, 1);
        assert_eq!(model.objective, 0.0);
    }

    #[test]
    fn run_separates_two_clouds() {
        let points = two_clouds(30, 6, 11);
        let cfg = PfcmConfig::new(2);
        // Seed one centroid inside each cloud.
        let init = vec![points[0].clone(), points[points.len() - 1].clone()];
        let model = run_pfcm(&points, &cfg, &init).unwrap();
        let half = points.len() / 2;
        for j in 0..points.len() {
            let own = if j < half { 0 } else { 1 };
            assert!(
                model.memberships[own][j] > 0.5,
                "point {j} has membership {} to its own cluster",
                model.memberships[own][j]
            );
        }
    }

    #[test]
    fn objective_history_non_increasing() {
        let points = two_clouds(50, 8, 3);
        let cfg = PfcmConfig::new(2);
        let init = vec![points[3].clone(), points[4].clone()];
        let model = run_pfcm(&points, &cfg, &init).unwrap();
        for w in model.objective_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "objective rose: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn run_is_deterministic_and_permutation_equivariant() {
        let points = two_clouds(24, 5, 19);
        let cfg = PfcmConfig::new(2);
        let init = vec![points[1].clone(), points[40].clone()];
        let a = run_pfcm(&points, &cfg, &init).unwrap();
        let b = run_pfcm(&points, &cfg, &init).unwrap();
        assert_eq!(a, b);

        // Reverse the points: columns of U reverse, V and J unchanged.
        let reversed: Vec<FeatureVector> = points.iter().rev().cloned().collect();
        let c = run_pfcm(&reversed, &cfg, &init).unwrap();
        assert!((a.objective - c.objective).abs() < 1e-9);
        for (va, vc) in a.centroids.iter().zip(&c.centroids) {
            assert!(vector_distance(va, vc).unwrap() < 1e-9);
        }
        let n = points.len();
        for i in 0..2 {
            for j in 0..n {
                assert!((a.memberships[i][j] - c.memberships[i][n - 1 - j]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn run_rejects_wrong_centroid_count() {
        let points = two_clouds(10, 3, 1);
        let cfg = PfcmConfig::new(2);
        assert!(matches!(
            run_pfcm(&points, &cfg, &points[..3]),
            Err(ClusteringError::CentroidCount { expected: 2, actual: 3 })
        ));
    }
}
