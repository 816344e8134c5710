//! The multi-round optimize / review / reimport protocol.
//!
//! Each round runs the solver on the current instance and writes an editable
//! review bundle: per program, the before/after prescription, the deviation,
//! and a status preset to `pending`. A reviewer approves or modifies each
//! program (modifying means editing the embedded program definition), then
//! the round is closed: approved programs take the solver's substitution,
//! modified ones take the edited definition verbatim. If the resulting
//! program set fits the inventory the protocol ends with an
//! implementation-ready set; otherwise a new round opens with those programs
//! as the next base.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::format::{check_format_version, FormatVersionError, FORMAT_VERSION};
use crate::program::{
    apply_update, check_constraints, deviation, CommunityId, ConstraintRow, DrugId, DrugLine,
    Instance, ModelError, PreventionProgram, ResourceId, Solution,
};
use crate::wwo::{run_wwo, SolveError, Violations, WwoConfig, WwoOutcome};

#[derive(Debug, Error)]
pub enum RoundError {
    #[error("programs still pending review: {}", ids.join(", "))]
    Pending { ids: Vec<String> },
    #[error("round not closeable: {0}")]
    NotCloseable(String),
    #[error("bundle belongs to round {bundle} but the state is at round {state}")]
    RoundMismatch { bundle: u32, state: u32 },
    #[error("inventory update references unknown {kind} `{id}`")]
    UnknownInventoryEntry { kind: String, id: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    FormatVersion(#[from] FormatVersionError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewStatus {
    Pending,
    Approved,
    Modified,
}

/// One program's entry in the review bundle. `program` holds the updated
/// definition; a reviewer who sets the status to `modified` edits it in
/// place, and that edited definition becomes the next round's base verbatim.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgramReview {
    pub id: crate::program::ProgramId,
    pub status: ReviewStatus,
    pub deviation: f64,
    pub before: BTreeMap<DrugId, DrugLine>,
    pub after: BTreeMap<DrugId, DrugLine>,
    pub program: PreventionProgram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewBundle {
    pub format_version: u32,
    pub round: u32,
    pub solver_feasible: bool,
    pub solution: Solution,
    pub objective: f64,
    pub violations: Violations,
    pub evaluations: usize,
    pub programs: Vec<ProgramReview>,
    pub ledger: Vec<ConstraintRow>,
}

impl ReviewBundle {
    pub fn from_json(json: &str) -> Result<Self, RoundError> {
        let bundle: ReviewBundle = serde_json::from_str(json)?;
        check_format_version(bundle.format_version)?;
        Ok(bundle)
    }

    pub fn to_json_pretty(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("bundle serializes");
        s.push('\n');
        s
    }

    /// Marks every pending program as approved (scripted review policy).
    pub fn approve_all_pending(&mut self) {
        for review in &mut self.programs {
            if review.status == ReviewStatus::Pending {
                review.status = ReviewStatus::Approved;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: u32,
    pub objective: f64,
    pub feasible: bool,
    pub evaluations: usize,
    pub approved: usize,
    pub modified: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundState {
    pub format_version: u32,
    pub round: u32,
    pub finalized: bool,
    pub instance: Instance,
    pub history: Vec<RoundRecord>,
}

impl RoundState {
    pub fn open(instance: Instance) -> Result<Self, RoundError> {
        instance.validate()?;
        Ok(Self {
            format_version: FORMAT_VERSION,
            round: 1,
            finalized: false,
            instance,
            history: Vec::new(),
        })
    }

    pub fn from_json(json: &str) -> Result<Self, RoundError> {
        let state: RoundState = serde_json::from_str(json)?;
        check_format_version(state.format_version)?;
        state.instance.validate()?;
        Ok(state)
    }

    pub fn to_json_pretty(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("state serializes");
        s.push('\n');
        s
    }

    /// Overlays fresh availability figures (consumption between rounds).
    pub fn apply_inventory_update(&mut self, update: &InventoryUpdate) -> Result<(), RoundError> {
        for (drug, &quantity) in &update.drugs {
            if !self.instance.inventory.drugs.contains_key(drug) {
                return Err(RoundError::UnknownInventoryEntry {
                    kind: "drug".into(),
                    id: drug.to_string(),
                });
            }
            self.instance.inventory.drugs.insert(drug.clone(), quantity);
        }
        for (resource, &quantity) in &update.shared {
            if !self.instance.inventory.shared.contains_key(resource) {
                return Err(RoundError::UnknownInventoryEntry {
                    kind: "shared resource".into(),
                    id: resource.to_string(),
                });
            }
            self.instance
                .inventory
                .shared
                .insert(resource.clone(), quantity);
        }
        for (community_id, entries) in &update.non_shared {
            let community = self
                .instance
                .communities
                .iter_mut()
                .find(|c| &c.id == community_id)
                .ok_or_else(|| RoundError::UnknownInventoryEntry {
                    kind: "community".into(),
                    id: community_id.to_string(),
                })?;
            for (resource, &quantity) in entries {
                if !community.non_shared_inventory.contains_key(resource) {
                    return Err(RoundError::UnknownInventoryEntry {
                        kind: "non-shared resource".into(),
                        id: format!("{community_id}/{resource}"),
                    });
                }
                community
                    .non_shared_inventory
                    .insert(resource.clone(), quantity);
            }
        }
        self.instance.validate()?;
        Ok(())
    }
}

/// Availability overlay supplied when a round opens.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InventoryUpdate {
    pub format_version: u32,
    #[serde(default)]
    pub drugs: BTreeMap<DrugId, f64>,
    #[serde(default)]
    pub shared: BTreeMap<ResourceId, f64>,
    #[serde(default)]
    pub non_shared: BTreeMap<CommunityId, BTreeMap<ResourceId, f64>>,
}

impl InventoryUpdate {
    pub fn from_json(json: &str) -> Result<Self, RoundError> {
        let update: InventoryUpdate = serde_json::from_str(json)?;
        check_format_version(update.format_version)?;
        Ok(update)
    }
}

/// Runs the solver on the round's instance and assembles the review bundle.
pub fn run_round(
    state: &RoundState,
    config: &WwoConfig,
) -> Result<(ReviewBundle, WwoOutcome), RoundError> {
    if state.finalized {
        return Err(RoundError::NotCloseable(
            "the protocol already produced a final program set".into(),
        ));
    }
    let outcome = run_wwo(&state.instance, config)?;
    let mut programs = Vec::with_capacity(state.instance.programs.len());
    for (program, &choice) in state.instance.programs.iter().zip(outcome.best.choices()) {
        let updated = apply_update(&state.instance, program, choice)?;
        programs.push(ProgramReview {
            id: program.id.clone(),
            status: ReviewStatus::Pending,
            deviation: deviation(program, choice)?,
            before: program.prescription.clone(),
            after: updated.prescription.clone(),
            program: updated,
        });
    }
    let ledger = check_constraints(&state.instance, &outcome.best)?.rows;
    let bundle = ReviewBundle {
        format_version: FORMAT_VERSION,
        round: state.round,
        solver_feasible: outcome.is_feasible(),
        solution: outcome.best.clone(),
        objective: outcome.decomposition.objective,
        violations: outcome.decomposition.violations,
        evaluations: outcome.evaluations,
        programs,
        ledger,
    };
    Ok((bundle, outcome))
}

#[derive(Debug, Clone)]
pub enum RoundOutcome {
    /// Every program approved or validly modified, and the set fits the
    /// inventory: ready for implementation.
    Final {
        programs: Vec<PreventionProgram>,
        record: RoundRecord,
    },
    /// Constraints failed against the reviewed set; a new round opens with
    /// it as the base.
    Reopened(RoundState),
}

/// Closes a reviewed round.
pub fn close_round(state: &RoundState, bundle: &ReviewBundle) -> Result<RoundOutcome, RoundError> {
    if bundle.round != state.round {
        return Err(RoundError::RoundMismatch {
            bundle: bundle.round,
            state: state.round,
        });
    }
    let pending: Vec<String> = bundle
        .programs
        .iter()
        .filter(|r| r.status == ReviewStatus::Pending)
        .map(|r| r.id.to_string())
        .collect();
    if !pending.is_empty() {
        return Err(RoundError::Pending { ids: pending });
    }
    let modified = bundle
        .programs
        .iter()
        .filter(|r| r.status == ReviewStatus::Modified)
        .count();
    if !bundle.solver_feasible && modified == 0 {
        return Err(RoundError::NotCloseable(
            "the solver result violates constraints and no program was modified".into(),
        ));
    }

    // Approved programs re-derive from the recorded solution (canonical);
    // modified ones take the reviewer's edited definition after validation.
    let mut next_programs = Vec::with_capacity(state.instance.programs.len());
    for ((program, &choice), review) in state
        .instance
        .programs
        .iter()
        .zip(bundle.solution.choices())
        .zip(&bundle.programs)
    {
        match review.status {
            ReviewStatus::Approved => {
                next_programs.push(apply_update(&state.instance, program, choice)?);
            }
            ReviewStatus::Modified => {
                state.instance.validate_program(&review.program)?;
                next_programs.push(review.program.clone());
            }
            ReviewStatus::Pending => unreachable!("pending statuses rejected above"),
        }
    }

    let mut candidate = state.instance.clone();
    candidate.programs = next_programs;
    candidate.validate()?;

    let n = candidate.programs.len();
    let report = check_constraints(&candidate, &Solution::all_keep(n))?;
    let record = RoundRecord {
        round: state.round,
        objective: bundle.objective,
        feasible: report.is_feasible(),
        evaluations: bundle.evaluations,
        approved: bundle
            .programs
            .iter()
            .filter(|r| r.status == ReviewStatus::Approved)
            .count(),
        modified,
    };

    if report.is_feasible() {
        Ok(RoundOutcome::Final {
            programs: candidate.programs,
            record,
        })
    } else {
        let mut history = state.history.clone();
        history.push(record);
        Ok(RoundOutcome::Reopened(RoundState {
            format_version: FORMAT_VERSION,
            round: state.round + 1,
            finalized: false,
            instance: candidate,
            history,
        }))
    }
}
