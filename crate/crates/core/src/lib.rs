//! Solver toolkit for diversified community prevention programs.
//!
//! The crate has two halves that meet in the middle:
//!
//! * **Resident grouping** — Pythagorean fuzzy numbers ([`pfs`]), fuzzy
//!   c-means clustering over them ([`clustering`]), and ecogeography-based
//!   optimization of the initial centroids ([`ebo`]).
//! * **Program optimization** — the prevention-program data model with
//!   substitution bundles and resource constraints ([`program`]), a water
//!   wave optimization solver over integer substitution vectors ([`wwo`]),
//!   and an independent brute-force oracle for validating it ([`oracle`]).
//!
//! Around those sit the synthetic instance generator ([`generator`]),
//! resident CSV ingestion ([`ingest`]), the multi-round
//! optimize/review/reimport protocol ([`rounds`]), and report emission
//! ([`report`]). All entry points are deterministic given their explicit
//! seeds.

pub mod clustering;
pub mod dataset;
pub mod ebo;
pub mod format;
pub mod generator;
pub mod ingest;
pub mod oracle;
pub mod pfs;
pub mod program;
pub mod report;
pub mod rounds;
pub mod wwo;

pub use clustering::{ClusterModel, PfcmConfig};
pub use ebo::EboConfig;
pub use generator::GeneratorSpec;
pub use pfs::{FeatureSchema, FeatureVector, Pfn};
pub use program::{Choice, Instance, PreventionProgram, Solution};
pub use wwo::{FitnessDecomposition, WwoConfig, WwoOutcome};
