//! Brute-force reference implementations for validating the solver.
//!
//! Everything here re-derives the evaluation semantics from the raw instance
//! data — substitution application, deviation, aggregation, and violations
//! are implemented from scratch rather than through [`crate::program`]'s
//! evaluation operations, so a bug on either side shows up as a differential
//! mismatch instead of agreeing with itself.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::program::{Choice, DrugId, Instance, ModelError, ResourceId, Solution};
use crate::wwo::{FitnessDecomposition, Violations, FITNESS_EPSILON};
use crate::program::AggregationRule;

/// Largest solution-space size the exhaustive oracle will walk.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnumerationBudget(pub u64);

impl Default for EnumerationBudget {
    fn default() -> Self {
        Self(1_000_000)
    }
}

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("solution space of size {size} exceeds the enumeration budget {budget}")]
    SpaceTooLarge { size: u128, budget: u64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Result of exhaustive enumeration: the feasible solution minimizing the
/// objective when one exists, otherwise the minimum-violation solution.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleOptimum {
    pub solution: Solution,
    pub objective: f64,
    pub feasible: bool,
    pub space: u128,
}

/// Number of valid solutions: the product over programs of
/// `1 + sum of bundle counts over replaceable positions`.
pub fn solution_space_size(instance: &Instance) -> u128 {
    instance
        .programs
        .iter()
        .map(|p| {
            1 + instance
                .replaceable_positions(p)
                .iter()
                .map(|&(_, bundles)| bundles as u128)
                .sum::<u128>()
        })
        .product()
}

/// Straight re-derivation of one program's post-update usage state: drug
/// quantities, shared usages, non-shared usages, and the deviation weight.
struct UpdatedUsages {
    drug_quantities: BTreeMap<DrugId, f64>,
    shared: BTreeMap<ResourceId, f64>,
    non_shared: BTreeMap<ResourceId, f64>,
    deviation: f64,
}

fn updated_usages(
    instance: &Instance,
    program_index: usize,
    choice: Choice,
) -> Result<UpdatedUsages, ModelError> {
    let program = &instance.programs[program_index];
    let mut drug_quantities: BTreeMap<DrugId, f64> = program
        .prescription
        .iter()
        .map(|(drug, line)| (drug.clone(), line.quantity))
        .collect();
    let mut shared = program.shared_usages.clone();
    let mut non_shared = program.non_shared_usages.clone();
    let mut deviation = 0.0;

    if let Choice::Substitute { position, bundle } = choice {
        let drug = program
            .drug_at_position(position)
            .ok_or_else(|| ModelError::Encoding {
                program: program.id.to_string(),
                detail: format!("position {position} out of range"),
            })?
            .clone();
        let bundles = instance.bundles_for(&drug);
        let chosen = bundles.get(bundle - 1).ok_or_else(|| ModelError::Encoding {
            program: program.id.to_string(),
            detail: format!("bundle index {bundle} out of range"),
        })?;
        deviation = program.prescription[&drug].importance * bundle as f64;

        drug_quantities.remove(&drug);
        *drug_quantities.entry(chosen.replacement.clone()).or_insert(0.0) += chosen.quantity;
        for aux in &chosen.auxiliary {
            drug_quantities.remove(&aux.remove);
            *drug_quantities.entry(aux.add.clone()).or_insert(0.0) += aux.quantity;
        }
        for (resource, delta) in &chosen.shared_deltas {
            let entry = shared.entry(resource.clone()).or_insert(0.0);
            *entry = (*entry + delta).max(0.0);
        }
        for (resource, delta) in &chosen.non_shared_deltas {
            let entry = non_shared.entry(resource.clone()).or_insert(0.0);
            *entry = (*entry + delta).max(0.0);
        }
    }

    Ok(UpdatedUsages {
        drug_quantities,
        shared,
        non_shared,
        deviation,
    })
}

fn batch_of(rule: &AggregationRule) -> Option<f64> {
    match rule {
        AggregationRule::Sum => None,
        AggregationRule::BatchCeil { batch } | AggregationRule::BatchCeilPooled { batch } => {
            Some(*batch as f64)
        }
    }
}

/// Independently re-derives the full fitness decomposition of a solution.
/// Must agree with the solver's evaluator on every valid input.
pub fn recompute_fitness(
    instance: &Instance,
    solution: &Solution,
) -> Result<FitnessDecomposition, ModelError> {
    if solution.len() != instance.programs.len() {
        return Err(ModelError::SolutionLength {
            expected: instance.programs.len(),
            actual: solution.len(),
        });
    }
    let updated: Vec<UpdatedUsages> = (0..instance.programs.len())
        .map(|j| updated_usages(instance, j, solution.choices()[j]))
        .collect::<Result<_, _>>()?;

    // Objective: susceptibility times community weight times deviation,
    // summed program by program, coverage community by community.
    let weight_of: BTreeMap<&crate::program::CommunityId, f64> = instance
        .communities
        .iter()
        .map(|c| (&c.id, c.weight))
        .collect();
    let mut objective = 0.0;
    for (program, usage) in instance.programs.iter().zip(&updated) {
        for community in program.coverage.keys() {
            objective += program.susceptibility * weight_of[community] * usage.deviation;
        }
    }

    // Drug overdrafts: plain sums over programs, drugs in sorted id order.
    let mut drugs = 0.0;
    for (drug, &available) in &instance.inventory.drugs {
        let mut demand = 0.0;
        for (program, usage) in instance.programs.iter().zip(&updated) {
            if let Some(&qty) = usage.drug_quantities.get(drug) {
                demand += program.users as f64 * qty;
            }
        }
        drugs += (demand - available).max(0.0);
    }

    // Shared overdrafts, per registered resource in sorted id order.
    let mut shared = 0.0;
    for (resource, rule) in &instance.aggregation_rules.shared {
        let available = instance.inventory.shared.get(resource).copied().unwrap_or(0.0);
        let mut demand = 0.0;
        for (program, usage) in instance.programs.iter().zip(&updated) {
            if let Some(&qty) = usage.shared.get(resource) {
                let doses = program.users as f64 * qty;
                demand += match rule {
                    AggregationRule::BatchCeil { .. } => {
                        (doses / batch_of(rule).expect("batch rule")).ceil()
                    }
                    _ => doses,
                };
            }
        }
        if let AggregationRule::BatchCeilPooled { .. } = rule {
            demand = (demand / batch_of(rule).expect("batch rule")).ceil();
        }
        shared += (demand - available).max(0.0);
    }

    // Non-shared overdrafts: communities in declaration order, resources in
    // sorted id order, counting per-community residents.
    let mut non_shared = 0.0;
    for community in &instance.communities {
        for (resource, rule) in &instance.aggregation_rules.non_shared {
            let available = community
                .non_shared_inventory
                .get(resource)
                .copied()
                .unwrap_or(0.0);
            let mut demand = 0.0;
            for (program, usage) in instance.programs.iter().zip(&updated) {
                let residents = match program.coverage.get(&community.id) {
                    Some(&n) => n as f64,
                    None => continue,
                };
                if let Some(&qty) = usage.non_shared.get(resource) {
                    let doses = residents * qty;
                    demand += match rule {
                        AggregationRule::BatchCeil { .. } => {
                            (doses / batch_of(rule).expect("batch rule")).ceil()
                        }
                        _ => doses,
                    };
                }
            }
            if let AggregationRule::BatchCeilPooled { .. } = rule {
                demand = (demand / batch_of(rule).expect("batch rule")).ceil();
            }
            non_shared += (demand - available).max(0.0);
        }
    }

    let violations = Violations {
        drugs,
        shared,
        non_shared,
    };
    let fitness = 1.0 / (objective + violations.total() + FITNESS_EPSILON);
    Ok(FitnessDecomposition {
        objective,
        violations,
        fitness,
    })
}

/// Exhaustively evaluates every valid solution in lexicographic order.
///
/// Returns the feasible minimizer of the objective when any solution is
/// feasible; otherwise the solution minimizing total violation (ties broken
/// by objective, then by enumeration order).
pub fn enumerate_optimum(
    instance: &Instance,
    budget: EnumerationBudget,
) -> Result<OracleOptimum, OracleError> {
    let space = solution_space_size(instance);
    if space > budget.0 as u128 {
        return Err(OracleError::SpaceTooLarge {
            size: space,
            budget: budget.0,
        });
    }

    // Per program: the ordered choice list [Keep, (pos1, 1), (pos1, 2), ...].
    let choice_lists: Vec<Vec<Choice>> = instance
        .programs
        .iter()
        .map(|p| {
            let mut choices = vec![Choice::Keep];
            for (position, bundles) in instance.replaceable_positions(p) {
                for bundle in 1..=bundles {
                    choices.push(Choice::Substitute { position, bundle });
                }
            }
            choices
        })
        .collect();

    let n = choice_lists.len();
    let mut odometer = vec![0usize; n];
    let mut best_feasible: Option<(Solution, f64)> = None;
    let mut best_infeasible: Option<(Solution, f64, f64)> = None; // (sol, violation, f)

    loop {
        let solution = Solution::new(
            odometer
                .iter()
                .zip(&choice_lists)
                .map(|(&i, list)| list[i])
                .collect(),
        );
        let decomposition = recompute_fitness(instance, &solution)?;
        if decomposition.is_feasible() {
            if best_feasible
                .as_ref()
                .is_none_or(|(_, f)| decomposition.objective < *f)
            {
                best_feasible = Some((solution, decomposition.objective));
            }
        } else if best_feasible.is_none() {
            let violation = decomposition.violations.total();
            let better = match &best_infeasible {
                None => true,
                Some((_, v, f)) => {
                    violation < *v || (violation == *v && decomposition.objective < *f)
                }
            };
            if better {
                best_infeasible = Some((solution, violation, decomposition.objective));
            }
        }

        // Advance the odometer, least-significant program last so the walk
        // is lexicographic in program order.
        let mut at = n;
        loop {
            if at == 0 {
                if let Some((solution, objective)) = best_feasible {
                    return Ok(OracleOptimum {
                        solution,
                        objective,
                        feasible: true,
                        space,
                    });
                }
                let (solution, _, objective) =
                    best_infeasible.expect("space has at least one solution");
                return Ok(OracleOptimum {
                    solution,
                    objective,
                    feasible: false,
                    space,
                });
            }
            at -= 1;
            odometer[at] += 1;
            if odometer[at] < choice_lists[at].len() {
                break;
            }
            odometer[at] = 0;
        }
    }
}
