//! Synthetic datasets for tests, benchmarks, and demos.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::pfs::{encode_feature, FeatureKind, FeatureSchema, FeatureVector};

/// Points clustered around the given centers in raw value space [0, 1],
/// encoded as PFN vectors. Every dimension of a point shares the cloud
/// center, jittered independently.
pub fn cloud_points(
    centers: &[f64],
    per_cloud: usize,
    dims: usize,
    spread: f64,
    seed: u64,
) -> Vec<FeatureVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(centers.len() * per_cloud);
    for &center in centers {
        for _ in 0..per_cloud {
            let values = (0..dims)
                .map(|_| {
                    let v = (center + rng.random_range(-spread..=spread)).clamp(0.0, 1.0);
                    encode_feature(FeatureKind::Real, Some(v)).expect("clamped value is valid")
                })
                .collect();
            points.push(FeatureVector::new(values));
        }
    }
    points
}

/// Two well-separated clouds (`per_cloud` points each).
pub fn two_clouds(per_cloud: usize, dims: usize, seed: u64) -> Vec<FeatureVector> {
    cloud_points(&[0.15, 0.85], per_cloud, dims, 0.05, seed)
}

/// Four clouds spread across the value range.
pub fn four_clouds(per_cloud: usize, dims: usize, seed: u64) -> Vec<FeatureVector> {
    cloud_points(&[0.1, 0.35, 0.65, 0.9], per_cloud, dims, 0.04, seed)
}

/// A resident CSV matching `schema`, with roughly `missing_rate` empty cells.
/// Returns the full file contents including the header row.
pub fn synthetic_residents_csv(
    schema: &FeatureSchema,
    rows: usize,
    missing_rate: f64,
    seed: u64,
) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = String::new();
    let names: Vec<&str> = schema.features().iter().map(|f| f.name.as_str()).collect();
    out.push_str(&names.join(","));
    out.push('\n');
    for _ in 0..rows {
        let mut cells = Vec::with_capacity(schema.len());
        for feature in schema.features() {
            if rng.random::<f64>() < missing_rate {
                cells.push(String::new());
            } else {
                match feature.kind {
                    FeatureKind::Real => {
                        // Two clumps so the file actually clusters.
                        let base: f64 = if rng.random::<f64>() < 0.5 { 0.2 } else { 0.8 };
                        let v = (base + rng.random_range(-0.1..=0.1f64)).clamp(0.0, 1.0);
                        cells.push(format!("{v:.4}"));
                    }
                    FeatureKind::Binary => {
                        cells.push(if rng.random::<f64>() < 0.5 { "1" } else { "0" }.into());
                    }
                }
            }
        }
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pfs::vector_distance;

    #[test]
    fn clouds_are_separated() {
        let points = two_clouds(10, 6, 42);
        assert_eq!(points.len(), 20);
        let d = vector_distance(&points[0], &points[19]).unwrap();
        assert!(d > 0.5, "cross-cloud distance {d} too small");
        let d_within = vector_distance(&points[0], &points[9]).unwrap();
        assert!(d_within < 0.3, "within-cloud distance {d_within} too large");
    }

    #[test]
    fn csv_is_deterministic() {
        let schema = FeatureSchema::desk_default();
        let a = synthetic_residents_csv(&schema, 20, 0.3, 1);
        let b = synthetic_residents_csv(&schema, 20, 0.3, 1);
        assert_eq!(a, b);
        assert_eq!(a.lines().count(), 21);
    }
}
