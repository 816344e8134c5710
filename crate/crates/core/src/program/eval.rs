//! Evaluation semantics: applying substitutions, deviation, the objective,
//! demand aggregation, and the constraint report.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{
    AggregationRule, Choice, CommunityId, DrugId, DrugLine, Instance, ModelError,
    PreventionProgram, ResourceId, Solution,
};

/// Applies one choice to a program, returning the updated program. The
/// original drug line is removed, the replacement enters at the bundle
/// quantity (merging additively with an existing line and inheriting the
/// replaced line's importance when new), auxiliary pairs are applied the same
/// way, and resource usages absorb the bundle's deltas floored at zero.
pub fn apply_update(
    instance: &Instance,
    program: &PreventionProgram,
    choice: Choice,
) -> Result<PreventionProgram, ModelError> {
    let (position, bundle_index) = match choice {
        Choice::Keep => return Ok(program.clone()),
        Choice::Substitute { position, bundle } => (position, bundle),
    };
    let encoding_error = |detail: String| ModelError::Encoding {
        program: program.id.to_string(),
        detail,
    };
    let drug = program
        .drug_at_position(position)
        .ok_or_else(|| encoding_error(format!("position {position} out of range")))?
        .clone();
    if !program.replaceable.contains(&drug) {
        return Err(encoding_error(format!("drug {drug} is not replaceable")));
    }
    let bundles = instance.bundles_for(&drug);
    let bundle = bundles
        .get(bundle_index.wrapping_sub(1))
        .ok_or_else(|| encoding_error(format!("bundle index {bundle_index} out of range")))?;

    let mut updated = program.clone();
    let removed = updated
        .prescription
        .remove(&drug)
        .expect("position lookup found the drug");
    add_line(&mut updated.prescription, &bundle.replacement, bundle.quantity, removed.importance);
    for aux in &bundle.auxiliary {
        let removed_aux = updated.prescription.remove(&aux.remove).ok_or_else(|| {
            encoding_error(format!(
                "auxiliary removal of {} impossible: not prescribed",
                aux.remove
            ))
        })?;
        add_line(&mut updated.prescription, &aux.add, aux.quantity, removed_aux.importance);
    }
    for (resource, delta) in &bundle.shared_deltas {
        apply_delta(&mut updated.shared_usages, resource, *delta);
    }
    for (resource, delta) in &bundle.non_shared_deltas {
        apply_delta(&mut updated.non_shared_usages, resource, *delta);
    }
    // The carried-over replaceable set never grows: surviving lines keep
    // their status, removed ones drop out.
    updated.replaceable = program
        .replaceable
        .iter()
        .filter(|d| updated.prescription.contains_key(*d))
        .filter(|d| !instance.bundles_for(d).is_empty())
        .cloned()
        .collect();
    Ok(updated)
}

fn add_line(
    prescription: &mut BTreeMap<DrugId, DrugLine>,
    drug: &DrugId,
    quantity: f64,
    importance: f64,
) {
    match prescription.get_mut(drug) {
        Some(line) => line.quantity += quantity,
        None => {
            prescription.insert(
                drug.clone(),
                DrugLine {
                    quantity,
                    importance,
                },
            );
        }
    }
}

fn apply_delta(usages: &mut BTreeMap<ResourceId, f64>, resource: &ResourceId, delta: f64) {
    let entry = usages.entry(resource.clone()).or_insert(0.0);
    *entry = (*entry + delta).max(0.0);
}

/// Deviation of one updated program from its original: the replaced drug's
/// importance weight times the 1-based priority index of the chosen bundle.
/// Unchanged programs deviate by zero.
pub fn deviation(program: &PreventionProgram, choice: Choice) -> Result<f64, ModelError> {
    match choice {
        Choice::Keep => Ok(0.0),
        Choice::Substitute { position, bundle } => {
            let drug = program.drug_at_position(position).ok_or_else(|| {
                ModelError::Encoding {
                    program: program.id.to_string(),
                    detail: format!("position {position} out of range"),
                }
            })?;
            let line = &program.prescription[drug];
            Ok(line.importance * bundle as f64)
        }
    }
}

/// Total weighted deviation: each program's deviation scaled by its
/// susceptibility weight and by the importance weight of every community it
/// covers.
pub fn objective(instance: &Instance, solution: &Solution) -> Result<f64, ModelError> {
    if solution.len() != instance.programs.len() {
        return Err(ModelError::SolutionLength {
            expected: instance.programs.len(),
            actual: solution.len(),
        });
    }
    let weights: BTreeMap<&CommunityId, f64> = instance
        .communities
        .iter()
        .map(|c| (&c.id, c.weight))
        .collect();
    let mut total = 0.0;
    for (program, &choice) in instance.programs.iter().zip(solution.choices()) {
        let dev = deviation(program, choice)?;
        for community in program.coverage.keys() {
            let w = weights.get(community).copied().unwrap_or(0.0);
            total += program.susceptibility * w * dev;
        }
    }
    Ok(total)
}

/// Folds usage lines `(count, per-prescription quantity)` into total demand
/// under the given rule.
pub fn aggregate(usages: &[(f64, f64)], rule: &AggregationRule) -> f64 {
    match rule {
        AggregationRule::Sum => usages.iter().map(|(count, qty)| count * qty).sum(),
        AggregationRule::BatchCeil { batch } => {
            let b = *batch as f64;
            usages.iter().map(|(count, qty)| (count * qty / b).ceil()).sum()
        }
        AggregationRule::BatchCeilPooled { batch } => {
            let total: f64 = usages.iter().map(|(count, qty)| count * qty).sum();
            (total / *batch as f64).ceil()
        }
    }
}

/// Identifies one resource constraint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKey {
    Drug(DrugId),
    Shared(ResourceId),
    NonShared(CommunityId, ResourceId),
}

impl std::fmt::Display for ConstraintKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConstraintKey::Drug(d) => write!(f, "drug:{d}"),
            ConstraintKey::Shared(r) => write!(f, "shared:{r}"),
            ConstraintKey::NonShared(c, r) => write!(f, "non-shared:{c}/{r}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintRow {
    pub key: ConstraintKey,
    pub demand: f64,
    pub available: f64,
}

impl ConstraintRow {
    pub fn slack(&self) -> f64 {
        self.available - self.demand
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub rows: Vec<ConstraintRow>,
}

impl ConstraintReport {
    pub fn is_feasible(&self) -> bool {
        self.rows.iter().all(|r| r.slack() >= 0.0)
    }
}

/// Evaluates every resource constraint against the updated programs implied
/// by `solution`: drug demands sum plainly, shared and per-community
/// non-shared demands follow their registered aggregation rules (non-shared
/// counts use the per-community resident numbers, not program totals).
pub fn check_constraints(
    instance: &Instance,
    solution: &Solution,
) -> Result<ConstraintReport, ModelError> {
    if solution.len() != instance.programs.len() {
        return Err(ModelError::SolutionLength {
            expected: instance.programs.len(),
            actual: solution.len(),
        });
    }
    let updated: Vec<PreventionProgram> = instance
        .programs
        .iter()
        .zip(solution.choices())
        .map(|(program, &choice)| apply_update(instance, program, choice))
        .collect::<Result<_, _>>()?;

    let mut rows = Vec::new();
    for (drug, &available) in &instance.inventory.drugs {
        let usages: Vec<(f64, f64)> = updated
            .iter()
            .filter_map(|p| {
                p.prescription
                    .get(drug)
                    .map(|line| (p.users as f64, line.quantity))
            })
            .collect();
        rows.push(ConstraintRow {
            key: ConstraintKey::Drug(drug.clone()),
            demand: aggregate(&usages, &AggregationRule::Sum),
            available,
        });
    }
    for (resource, rule) in &instance.aggregation_rules.shared {
        let usages: Vec<(f64, f64)> = updated
            .iter()
            .filter_map(|p| {
                p.shared_usages
                    .get(resource)
                    .map(|&qty| (p.users as f64, qty))
            })
            .collect();
        rows.push(ConstraintRow {
            key: ConstraintKey::Shared(resource.clone()),
            demand: aggregate(&usages, rule),
            available: instance.inventory.shared.get(resource).copied().unwrap_or(0.0),
        });
    }
    for community in &instance.communities {
        for (resource, rule) in &instance.aggregation_rules.non_shared {
            let usages: Vec<(f64, f64)> = updated
                .iter()
                .filter_map(|p| {
                    let residents = *p.coverage.get(&community.id)?;
                    let qty = *p.non_shared_usages.get(resource)?;
                    Some((residents as f64, qty))
                })
                .collect();
            rows.push(ConstraintRow {
                key: ConstraintKey::NonShared(community.id.clone(), resource.clone()),
                demand: aggregate(&usages, rule),
                available: community
                    .non_shared_inventory
                    .get(resource)
                    .copied()
                    .unwrap_or(0.0),
            });
        }
    }
    Ok(ConstraintReport { rows })
}
