//! Report emission: seed batches, trace CSVs, and round summaries.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::clustering::ClusterModel;
use crate::ebo::GenerationBest;
use crate::format::FORMAT_VERSION;
use crate::program::{Instance, PreventionProgram, Solution};
use crate::rounds::{RoundError, RoundState};
use crate::wwo::{run_wwo, GenerationTrace, Violations, WwoConfig, WwoOutcome};

/// One solver run inside a seed batch.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRow {
    pub round: u32,
    pub seed: u64,
    pub objective: f64,
    pub violations: Violations,
    pub feasible: bool,
    pub evaluations: usize,
}

/// Runs the solver `seeds` times on one instance, seeding run `i` with
/// `base_seed + i`. Rows come back in seed order for box-plot rendering.
pub fn seed_batch(
    instance: &Instance,
    round: u32,
    config: &WwoConfig,
    base_seed: u64,
    seeds: u64,
) -> Result<Vec<RunRow>, RoundError> {
    let mut rows = Vec::with_capacity(seeds as usize);
    for i in 0..seeds {
        let config = WwoConfig {
            seed: base_seed + i,
            ..config.clone()
        };
        let outcome = run_wwo(instance, &config)?;
        rows.push(RunRow {
            round,
            seed: config.seed,
            objective: outcome.decomposition.objective,
            violations: outcome.decomposition.violations,
            feasible: outcome.is_feasible(),
            evaluations: outcome.evaluations,
        });
    }
    Ok(rows)
}

pub fn write_runs_csv<W: Write>(rows: &[RunRow], writer: W) -> std::io::Result<()> {
    let mut w = writer;
    writeln!(
        w,
        "round,seed,objective,v_drugs,v_shared,v_non_shared,feasible,evaluations"
    )?;
    for row in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            row.round,
            row.seed,
            row.objective,
            row.violations.drugs,
            row.violations.shared,
            row.violations.non_shared,
            row.feasible,
            row.evaluations
        )?;
    }
    Ok(())
}

pub fn write_wwo_trace<W: Write>(trace: &[GenerationTrace], writer: W) -> std::io::Result<()> {
    let mut w = writer;
    writeln!(
        w,
        "generation,best_objective,best_v_drugs,best_v_shared,best_v_non_shared,best_fitness"
    )?;
    for row in trace {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            row.generation,
            row.best_objective,
            row.best_violations.drugs,
            row.best_violations.shared,
            row.best_violations.non_shared,
            row.best_fitness
        )?;
    }
    Ok(())
}

pub fn write_ebo_trace<W: Write>(trace: &[GenerationBest], writer: W) -> std::io::Result<()> {
    let mut w = writer;
    writeln!(w, "generation,best_j")?;
    for row in trace {
        writeln!(w, "{},{}", row.generation, row.best_objective)?;
    }
    Ok(())
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite objectives"));
    let n = values.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub seeds: u64,
    pub median_objective: f64,
    pub feasible_runs: u64,
}

/// Round history plus optional batch digest; totals are recomputed from the
/// per-round records so they always match the audit trail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub format_version: u32,
    pub rounds: Vec<crate::rounds::RoundRecord>,
    pub current_round: u32,
    pub finalized: bool,
    pub total_evaluations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub batch: Option<BatchSummary>,
}

pub fn summarize(state: &RoundState, batch: &[RunRow]) -> Summary {
    let batch_summary = if batch.is_empty() {
        None
    } else {
        let mut objectives: Vec<f64> = batch.iter().map(|r| r.objective).collect();
        Some(BatchSummary {
            seeds: batch.len() as u64,
            median_objective: median(&mut objectives),
            feasible_runs: batch.iter().filter(|r| r.feasible).count() as u64,
        })
    };
    Summary {
        format_version: FORMAT_VERSION,
        rounds: state.history.clone(),
        current_round: state.round,
        finalized: state.finalized,
        total_evaluations: state.history.iter().map(|r| r.evaluations).sum(),
        batch: batch_summary,
    }
}

/// Implementation-ready program set, as written after the final round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalPrograms {
    pub format_version: u32,
    pub programs: Vec<PreventionProgram>,
}

impl FinalPrograms {
    pub fn new(programs: Vec<PreventionProgram>) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            programs,
        }
    }
}

/// Solver result document written by the optimize subcommand; readable as a
/// plain solution file since it carries the same `pairs` field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResultFile {
    pub format_version: u32,
    pub pairs: Solution,
    pub objective: f64,
    pub violations: Violations,
    pub fitness: f64,
    pub feasible: bool,
    pub evaluations: usize,
}

impl From<&WwoOutcome> for SolveResultFile {
    fn from(outcome: &WwoOutcome) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            pairs: outcome.best.clone(),
            objective: outcome.decomposition.objective,
            violations: outcome.decomposition.violations,
            fitness: outcome.decomposition.fitness,
            feasible: outcome.is_feasible(),
            evaluations: outcome.evaluations,
        }
    }
}

/// Clustering export: centroid (mu, nu) pairs, the membership matrix, the
/// final objective, and the iteration count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModelFile {
    pub format_version: u32,
    pub centroids: Vec<crate::pfs::FeatureVector>,
    pub memberships: Vec<Vec<f64>>,
    pub objective: f64,
    pub iterations: usize,
}

impl From<&ClusterModel> for ClusterModelFile {
    fn from(model: &ClusterModel) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            centroids: model.centroids.clone(),
            memberships: model.memberships.clone(),
            objective: model.objective,
            iterations: model.iterations,
        }
    }
}

pub fn to_pretty_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report document serializes");
    s.push('\n');
    s
}
