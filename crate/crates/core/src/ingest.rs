//! Resident feature ingestion from CSV.
//!
//! The header row must match the schema's feature names in column order.
//! Cells hold a decimal in [0, 1] for real features, the literals `1` / `0`
//! for binary labels, or nothing at all for a missing observation.

use std::io::Read;
use std::path::Path;

use thiserror::Error;

use crate::pfs::{encode_feature, FeatureSchema, FeatureVector, PfsError};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("header mismatch at column {column}: file has `{found}`, schema expects `{expected}`")]
    HeaderMismatch {
        column: usize,
        found: String,
        expected: String,
    },
    #[error("file has {found} columns, schema expects {expected}")]
    ColumnCount { found: usize, expected: usize },
    #[error("line {line}, column `{column}`: {detail}")]
    Cell {
        line: u64,
        column: String,
        detail: String,
    },
    #[error(transparent)]
    Schema(#[from] PfsError),
}

/// Summary of one ingestion pass.
#[derive(Debug, Clone, PartialEq)]
pub struct IngestReport {
    pub rows: usize,
    /// Fraction of missing cells per feature, aligned with the schema.
    pub missing_rates: Vec<f64>,
}

impl IngestReport {
    pub fn overall_missing_rate(&self) -> f64 {
        if self.missing_rates.is_empty() {
            return 0.0;
        }
        self.missing_rates.iter().sum::<f64>() / self.missing_rates.len() as f64
    }
}

/// Reads resident vectors from any CSV source.
pub fn parse_residents<R: Read>(
    reader: R,
    schema: &FeatureSchema,
) -> Result<(Vec<FeatureVector>, IngestReport), IngestError> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);

    let headers = csv.headers()?.clone();
    if headers.len() != schema.len() {
        return Err(IngestError::ColumnCount {
            found: headers.len(),
            expected: schema.len(),
        });
    }
    for (i, (found, descriptor)) in headers.iter().zip(schema.features()).enumerate() {
        if found != descriptor.name {
            return Err(IngestError::HeaderMismatch {
                column: i + 1,
                found: found.to_string(),
                expected: descriptor.name.clone(),
            });
        }
    }

    let mut vectors = Vec::new();
    let mut missing = vec![0usize; schema.len()];
    for record in csv.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != schema.len() {
            return Err(IngestError::ColumnCount {
                found: record.len(),
                expected: schema.len(),
            });
        }
        let mut values = Vec::with_capacity(schema.len());
        for (i, descriptor) in schema.features().iter().enumerate() {
            let cell = record.get(i).unwrap_or("").trim();
            let parsed = if cell.is_empty() {
                missing[i] += 1;
                None
            } else {
                Some(cell.parse::<f64>().map_err(|e| IngestError::Cell {
                    line,
                    column: descriptor.name.clone(),
                    detail: format!("`{cell}` is not a number ({e})"),
                })?)
            };
            let pfn = encode_feature(descriptor.kind, parsed).map_err(|e| IngestError::Cell {
                line,
                column: descriptor.name.clone(),
                detail: e.to_string(),
            })?;
            values.push(pfn);
        }
        vectors.push(FeatureVector::new(values));
    }

    let rows = vectors.len();
    let missing_rates = missing
        .into_iter()
        .map(|m| if rows == 0 { 0.0 } else { m as f64 / rows as f64 })
        .collect();
    Ok((
        vectors,
        IngestReport {
            rows,
            missing_rates,
        },
    ))
}

/// Reads resident vectors from a CSV file plus its schema sidecar.
pub fn ingest_residents(
    csv_path: &Path,
    schema_path: &Path,
) -> Result<(Vec<FeatureVector>, IngestReport), IngestError> {
    let schema = FeatureSchema::load(schema_path)?;
    let file = std::fs::File::open(csv_path)?;
    parse_residents(file, &schema)
}
