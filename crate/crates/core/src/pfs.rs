//! Pythagorean fuzzy numbers, distance measures, and feature encoding.
//!
//! A Pythagorean fuzzy number (PFN) is a pair of membership / non-membership
//! degrees `(mu, nu)` constrained by `mu^2 + nu^2 <= 1`, with the remaining
//! mass `pi = sqrt(1 - mu^2 - nu^2)` interpreted as hesitancy. Raw resident
//! features (normalized reals, binary labels, or missing observations) are
//! encoded into PFNs so that absent data carries maximal hesitancy instead of
//! a fabricated value.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::format::{check_format_version, FormatVersionError, FORMAT_VERSION};

/// Absolute slack allowed on the unit-circle invariant after floating
/// arithmetic (centroid updates, radial repair).
pub const PFN_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum PfsError {
    #[error("membership degrees out of range: mu={mu}, nu={nu}")]
    DegreeOutOfRange { mu: f64, nu: f64 },
    #[error("mu^2 + nu^2 = {sum} exceeds 1 (mu={mu}, nu={nu})")]
    UnitCircleExceeded { mu: f64, nu: f64, sum: f64 },
    #[error("vector length mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("feature vectors must have at least one dimension")]
    EmptyVector,
    #[error("real feature value {value} outside [0, 1]")]
    ValueOutOfRange { value: f64 },
    #[error("binary feature value {value} is neither 0 nor 1")]
    InvalidBinary { value: f64 },
    #[error("duplicate feature name `{0}`")]
    DuplicateFeature(String),
    #[error("schema must declare at least one feature")]
    EmptySchema,
    #[error(transparent)]
    FormatVersion(#[from] FormatVersionError),
    #[error("schema json: {0}")]
    Json(String),
}

/// A Pythagorean fuzzy number. Valid by construction: both degrees lie in
/// [0, 1] and `mu^2 + nu^2 <= 1` (within [`PFN_TOLERANCE`]).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "(f64, f64)", into = "(f64, f64)")]
pub struct Pfn {
    mu: f64,
    nu: f64,
}

impl Pfn {
    pub fn new(mu: f64, nu: f64) -> Result<Self, PfsError> {
        if !(0.0..=1.0).contains(&mu) || !(0.0..=1.0).contains(&nu) {
            return Err(PfsError::DegreeOutOfRange { mu, nu });
        }
        let sum = mu * mu + nu * nu;
        if sum > 1.0 + PFN_TOLERANCE {
            return Err(PfsError::UnitCircleExceeded { mu, nu, sum });
        }
        Ok(Self { mu, nu })
    }

    /// The fully hesitant number P(0, 0); encodes a missing observation.
    pub fn hesitant() -> Self {
        Self { mu: 0.0, nu: 0.0 }
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    /// Hesitancy `pi = sqrt(1 - mu^2 - nu^2)`.
    pub fn hesitancy(&self) -> f64 {
        self.hesitancy_sq().sqrt()
    }

    fn hesitancy_sq(&self) -> f64 {
        (1.0 - self.mu * self.mu - self.nu * self.nu).max(0.0)
    }
}

impl TryFrom<(f64, f64)> for Pfn {
    type Error = PfsError;

    fn try_from((mu, nu): (f64, f64)) -> Result<Self, Self::Error> {
        Pfn::new(mu, nu)
    }
}

impl From<Pfn> for (f64, f64) {
    fn from(p: Pfn) -> Self {
        (p.mu, p.nu)
    }
}

/// Squared distance between two PFNs; kept separate so vector distances can
/// skip the per-dimension square root.
fn pfn_distance_sq(a: Pfn, b: Pfn) -> f64 {
    let dm = a.mu * a.mu - b.mu * b.mu;
    let dn = a.nu * a.nu - b.nu * b.nu;
    let dp = a.hesitancy_sq() - b.hesitancy_sq();
    (dm * dm + dn * dn + dp * dp) / 2.0
}

/// Distance between two PFNs: the Euclidean distance between their squared
/// degree triples `(mu^2, nu^2, pi^2)`, scaled into [0, 1].
pub fn pfn_distance(a: Pfn, b: Pfn) -> f64 {
    pfn_distance_sq(a, b).sqrt().min(1.0)
}

/// An ordered PFN vector; alignment to a [`FeatureSchema`] is checked where
/// schema and data meet (ingestion, clustering entry points).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(Vec<Pfn>);

impl FeatureVector {
    pub fn new(values: Vec<Pfn>) -> Self {
        Self(values)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[Pfn] {
        &self.0
    }
}

/// Root-mean of per-dimension PFN distances; stays in [0, 1].
pub fn vector_distance(a: &FeatureVector, b: &FeatureVector) -> Result<f64, PfsError> {
    if a.len() != b.len() {
        return Err(PfsError::DimensionMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Err(PfsError::EmptyVector);
    }
    let sum: f64 = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(&x, &y)| pfn_distance_sq(x, y))
        .sum();
    Ok((sum / a.len() as f64).sqrt().min(1.0))
}

/// The five broad groups of resident characteristics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureCategory {
    BasicHealthMetric,
    TcmConstitution,
    TcmSyndrome,
    PastIllness,
    CurrentIllness,
}

/// How a raw cell is interpreted before PFN encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    /// A real value already normalized into [0, 1].
    Real,
    /// A present/absent label written as 1 / 0.
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureDescriptor {
    pub name: String,
    pub category: FeatureCategory,
    pub kind: FeatureKind,
}

/// Ordered feature descriptors shared by every vector in a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSchema {
    features: Vec<FeatureDescriptor>,
}

#[derive(Serialize, Deserialize)]
struct SchemaFile {
    format_version: u32,
    features: Vec<FeatureDescriptor>,
}

impl FeatureSchema {
    pub fn new(features: Vec<FeatureDescriptor>) -> Result<Self, PfsError> {
        if features.is_empty() {
            return Err(PfsError::EmptySchema);
        }
        let mut seen = std::collections::BTreeSet::new();
        for f in &features {
            if !seen.insert(f.name.as_str()) {
                return Err(PfsError::DuplicateFeature(f.name.clone()));
            }
        }
        Ok(Self { features })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn features(&self) -> &[FeatureDescriptor] {
        &self.features
    }

    /// Desk-scale default: 64 features spread over the five categories in
    /// roughly the proportions of a full resident record (a handful of
    /// real-valued health metrics, the rest binary labels).
    pub fn desk_default() -> Self {
        let mut features = Vec::with_capacity(64);
        let mut push = |name: String, category: FeatureCategory, kind: FeatureKind| {
            features.push(FeatureDescriptor {
                name,
                category,
                kind,
            });
        };
        for name in [
            "age",
            "height",
            "weight",
            "heart_rate",
            "blood_pressure",
            "vital_capacity",
            "bmi",
        ] {
            push(
                name.to_string(),
                FeatureCategory::BasicHealthMetric,
                FeatureKind::Real,
            );
        }
        for i in 1..=9 {
            push(
                format!("constitution_{i:02}"),
                FeatureCategory::TcmConstitution,
                FeatureKind::Binary,
            );
        }
        for i in 1..=8 {
            push(
                format!("syndrome_{i:02}"),
                FeatureCategory::TcmSyndrome,
                FeatureKind::Binary,
            );
        }
        for i in 1..=20 {
            push(
                format!("past_illness_{i:02}"),
                FeatureCategory::PastIllness,
                FeatureKind::Binary,
            );
        }
        for i in 1..=20 {
            push(
                format!("current_illness_{i:02}"),
                FeatureCategory::CurrentIllness,
                FeatureKind::Binary,
            );
        }
        Self::new(features).expect("default schema is valid")
    }

    pub fn to_json(&self) -> String {
        let file = SchemaFile {
            format_version: FORMAT_VERSION,
            features: self.features.clone(),
        };
        let mut s = serde_json::to_string_pretty(&file).expect("schema serializes");
        s.push('\n');
        s
    }

    pub fn from_json(json: &str) -> Result<Self, PfsError> {
        let file: SchemaFile =
            serde_json::from_str(json).map_err(|e| PfsError::Json(e.to_string()))?;
        check_format_version(file.format_version)?;
        Self::new(file.features)
    }

    pub fn load(path: &Path) -> Result<Self, PfsError> {
        let text = std::fs::read_to_string(path).map_err(|e| PfsError::Json(e.to_string()))?;
        Self::from_json(&text)
    }
}

/// Encodes one raw cell into a PFN. `None` means the observation is missing
/// and maps to the fully hesitant P(0, 0); a normalized real `v` maps to
/// P(v, 1-v); binary labels map to P(1, 0) / P(0, 1).
pub fn encode_feature(kind: FeatureKind, value: Option<f64>) -> Result<Pfn, PfsError> {
    match (kind, value) {
        (_, None) => Ok(Pfn::hesitant()),
        (FeatureKind::Real, Some(v)) => {
            if !(0.0..=1.0).contains(&v) {
                return Err(PfsError::ValueOutOfRange { value: v });
            }
            Pfn::new(v, 1.0 - v)
        }
        (FeatureKind::Binary, Some(v)) => {
            if v == 1.0 {
                Pfn::new(1.0, 0.0)
            } else if v == 0.0 {
                Pfn::new(0.0, 1.0)
            } else {
                Err(PfsError::InvalidBinary { value: v })
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pfn(mu: f64, nu: f64) -> Pfn {
        Pfn::new(mu, nu).unwrap()
    }

    #[test]
    fn rejects_invalid_degrees() {
        assert!(matches!(
            Pfn::new(-0.1, 0.0),
            Err(PfsError::DegreeOutOfRange { .. })
        ));
        assert!(matches!(
            Pfn::new(0.0, 1.5),
            Err(PfsError::DegreeOutOfRange { .. })
        ));
        assert!(matches!(
            Pfn::new(0.9, 0.9),
            Err(PfsError::UnitCircleExceeded { .. })
        ));
    }

    #[test]
    fn hesitancy_spans_the_unit_circle() {
        assert_eq!(pfn(1.0, 0.0).hesitancy(), 0.0);
        assert_eq!(Pfn::hesitant().hesitancy(), 1.0);
        let p = pfn(0.5, 0.5);
        assert!((p.hesitancy() - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn distance_identity() {
        assert_eq!(pfn_distance(pfn(0.3, 0.4), pfn(0.3, 0.4)), 0.0);
    }

    #[test]
    fn distance_between_extremes_is_one() {
        assert_eq!(pfn_distance(pfn(1.0, 0.0), pfn(0.0, 1.0)), 1.0);
    }

    #[test]
    fn distance_hand_evaluated() {
        // terms 0.36^2, 0.64^2, 1^2 -> sqrt(1.5392 / 2)
        let d = pfn_distance(pfn(0.6, 0.8), Pfn::hesitant());
        assert!((d - (1.5392f64 / 2.0).sqrt()).abs() < 1e-12);
        assert!((d - 0.87727).abs() < 1e-5);
    }

    #[test]
    fn vector_distance_basics() {
        let a = FeatureVector::new(vec![pfn(0.2, 0.3), pfn(0.7, 0.1)]);
        assert_eq!(vector_distance(&a, &a).unwrap(), 0.0);

        let x = FeatureVector::new(vec![pfn(0.6, 0.8)]);
        let y = FeatureVector::new(vec![Pfn::hesitant()]);
        assert_eq!(
            vector_distance(&x, &y).unwrap(),
            pfn_distance(pfn(0.6, 0.8), Pfn::hesitant())
        );

        let ones = FeatureVector::new(vec![pfn(1.0, 0.0), pfn(1.0, 0.0)]);
        let anti = FeatureVector::new(vec![pfn(0.0, 1.0), pfn(0.0, 1.0)]);
        assert_eq!(vector_distance(&ones, &anti).unwrap(), 1.0);
    }

    #[test]
    fn vector_distance_errors() {
        let a = FeatureVector::new(vec![pfn(0.2, 0.3)]);
        let b = FeatureVector::new(vec![pfn(0.2, 0.3), pfn(0.1, 0.1)]);
        assert!(matches!(
            vector_distance(&a, &b),
            Err(PfsError::DimensionMismatch { left: 1, right: 2 })
        ));
        let empty = FeatureVector::new(vec![]);
        assert!(matches!(
            vector_distance(&empty, &empty),
            Err(PfsError::EmptyVector)
        ));
    }

    #[test]
    fn encode_missing_is_fully_hesitant() {
        let p = encode_feature(FeatureKind::Real, None).unwrap();
        assert_eq!(p, Pfn::hesitant());
        assert_eq!(p.hesitancy(), 1.0);
    }

    #[test]
    fn encode_real_and_binary() {
        let p = encode_feature(FeatureKind::Real, Some(0.5)).unwrap();
        assert_eq!((p.mu(), p.nu()), (0.5, 0.5));
        assert!((p.hesitancy() - 0.5f64.sqrt()).abs() < 1e-15);

        assert_eq!(
            encode_feature(FeatureKind::Binary, Some(1.0)).unwrap(),
            pfn(1.0, 0.0)
        );
        assert_eq!(
            encode_feature(FeatureKind::Binary, Some(0.0)).unwrap(),
            pfn(0.0, 1.0)
        );
    }

    #[test]
    fn encode_rejects_bad_cells() {
        assert!(matches!(
            encode_feature(FeatureKind::Real, Some(1.2)),
            Err(PfsError::ValueOutOfRange { .. })
        ));
        assert!(matches!(
            encode_feature(FeatureKind::Binary, Some(0.5)),
            Err(PfsError::InvalidBinary { .. })
        ));
    }

    #[test]
    fn schema_validation() {
        let dup = vec![
            FeatureDescriptor {
                name: "x".into(),
                category: FeatureCategory::BasicHealthMetric,
                kind: FeatureKind::Real,
            },
            FeatureDescriptor {
                name: "x".into(),
                category: FeatureCategory::PastIllness,
                kind: FeatureKind::Binary,
            },
        ];
        assert!(matches!(
            FeatureSchema::new(dup),
            Err(PfsError::DuplicateFeature(_))
        ));
        assert!(matches!(
            FeatureSchema::new(vec![]),
            Err(PfsError::EmptySchema)
        ));
    }

    #[test]
    fn desk_default_shape() {
        let schema = FeatureSchema::desk_default();
        assert_eq!(schema.len(), 64);
        for category in [
            FeatureCategory::BasicHealthMetric,
            FeatureCategory::TcmConstitution,
            FeatureCategory::TcmSyndrome,
            FeatureCategory::PastIllness,
            FeatureCategory::CurrentIllness,
        ] {
            assert!(schema.features().iter().any(|f| f.category == category));
        }
    }

    #[test]
    fn schema_json_round_trip() {
        let schema = FeatureSchema::desk_default();
        let json = schema.to_json();
        let back = FeatureSchema::from_json(&json).unwrap();
        assert_eq!(schema, back);

        let bad = json.replacen("\"format_version\": 1", "\"format_version\": 9", 1);
        assert!(matches!(
            FeatureSchema::from_json(&bad),
            Err(PfsError::FormatVersion(_))
        ));
    }

    prop_compose! {
        fn arb_pfn()(mu in 0.0..=1.0f64, t in 0.0..=1.0f64) -> Pfn {
            let nu = t * (1.0 - mu * mu).max(0.0).sqrt();
            Pfn::new(mu, nu).unwrap()
        }
    }

    proptest! {
        #[test]
        fn distance_is_symmetric_and_bounded(a in arb_pfn(), b in arb_pfn()) {
            let d = pfn_distance(a, b);
            prop_assert_eq!(d, pfn_distance(b, a));
            prop_assert!((0.0..=1.0).contains(&d));
        }

        #[test]
        fn distance_zero_iff_squared_degrees_equal(a in arb_pfn(), b in arb_pfn()) {
            let d = pfn_distance(a, b);
            let same = a.mu() * a.mu() == b.mu() * b.mu() && a.nu() * a.nu() == b.nu() * b.nu();
            prop_assert_eq!(d == 0.0, same);
        }

        #[test]
        fn triangle_inequality(a in arb_pfn(), b in arb_pfn(), c in arb_pfn()) {
            prop_assert!(pfn_distance(a, c) <= pfn_distance(a, b) + pfn_distance(b, c) + 1e-9);
        }

        #[test]
        fn encode_real_always_valid(v in 0.0..=1.0f64) {
            let p = encode_feature(FeatureKind::Real, Some(v)).unwrap();
            prop_assert!(p.mu() * p.mu() + p.nu() * p.nu() <= 1.0 + PFN_TOLERANCE);
        }

        #[test]
        fn vector_distance_permutation_invariant(
            pairs in proptest::collection::vec((arb_pfn(), arb_pfn()), 2..12),
            seed in 0u64..1000,
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let (xs, ys): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
            let mut order: Vec<usize> = (0..xs.len()).collect();
            order.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let px = FeatureVector::new(order.iter().map(|&i| xs[i]).collect());
            let py = FeatureVector::new(order.iter().map(|&i| ys[i]).collect());
            let base = vector_distance(
                &FeatureVector::new(xs),
                &FeatureVector::new(ys),
            ).unwrap();
            let permuted = vector_distance(&px, &py).unwrap();
            prop_assert!((base - permuted).abs() < 1e-12);
        }
    }
}
