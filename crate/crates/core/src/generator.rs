//! Deterministic synthetic instance generation.
//!
//! Inventories are scaled relative to the base (all-unchanged) demand by a
//! tightness factor: at tightness >= 1 the base programs fit as-is, below 1
//! the generator plants one feasible substitution pattern and sizes every
//! availability to cover it, which forces the solver to actually substitute.
//!
//! All quantities and weights land on a 1/64 grid. Sums of such values are
//! exact in double precision, so independently coded evaluators agree on
//! generated instances bit for bit.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::format::FORMAT_VERSION;
use crate::program::{
    check_constraints, AggregationRule, AggregationRules, AuxiliaryReplacement, Choice, Community,
    CommunityId, ConstraintKey, Drug, DrugId, DrugLine, Instance, ModelError, PreventionProgram,
    ResourceId, ResourceInventory, Solution, SubstitutionBundle,
};

#[derive(Debug, Error)]
pub enum GeneratorError {
    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone)]
pub struct GeneratorSpec {
    pub communities: usize,
    pub programs: usize,
    pub drugs: usize,
    pub shared_resources: usize,
    pub non_shared_resources: usize,
    /// Bundles per replaceable drug.
    pub alternatives: usize,
    /// Availability scale relative to base demand; below 1 forces
    /// substitution.
    pub tightness: f64,
    pub seed: u64,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        Self {
            communities: 3,
            programs: 6,
            drugs: 10,
            shared_resources: 2,
            non_shared_resources: 2,
            alternatives: 3,
            tightness: 0.8,
            seed: 0,
        }
    }
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<(), GeneratorError> {
        for (value, name) in [
            (self.communities, "communities"),
            (self.programs, "programs"),
            (self.drugs, "drugs"),
            (self.shared_resources, "shared_resources"),
            (self.non_shared_resources, "non_shared_resources"),
            (self.alternatives, "alternatives"),
        ] {
            if value == 0 {
                return Err(GeneratorError::InvalidSpec(format!("{name} must be >= 1")));
            }
        }
        if self.drugs < 2 {
            return Err(GeneratorError::InvalidSpec(
                "at least 2 drugs are needed to form substitutions".into(),
            ));
        }
        if self.tightness.is_nan() || self.tightness <= 0.0 {
            return Err(GeneratorError::InvalidSpec(format!(
                "tightness must be > 0, got {}",
                self.tightness
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct GeneratedInstance {
    pub instance: Instance,
    /// Whether some feasible solution is guaranteed to exist.
    pub feasible_guaranteed: bool,
    /// The substitution pattern the inventory was sized around, when the
    /// tightness called for one.
    pub planted: Option<Solution>,
}

/// Rounds onto the 1/64 grid.
fn quantize(value: f64) -> f64 {
    (value * 64.0).round() / 64.0
}

fn dyadic_in<R: Rng>(rng: &mut R, low: f64, high: f64) -> f64 {
    quantize(rng.random_range(low..=high)).clamp(low.min(1.0 / 64.0), high)
}

pub fn generate_instance(spec: &GeneratorSpec) -> Result<GeneratedInstance, GeneratorError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let drugs: Vec<Drug> = (1..=spec.drugs)
        .map(|i| Drug {
            id: DrugId(format!("drug-{i:02}")),
            name: format!("Drug {i:02}"),
        })
        .collect();
    let drug_ids: Vec<DrugId> = drugs.iter().map(|d| d.id.clone()).collect();

    let shared_ids: Vec<ResourceId> = (1..=spec.shared_resources)
        .map(|i| ResourceId(format!("shared-{i:02}")))
        .collect();
    let non_shared_ids: Vec<ResourceId> = (1..=spec.non_shared_resources)
        .map(|i| ResourceId(format!("local-{i:02}")))
        .collect();
    let aggregation_rules = AggregationRules {
        shared: shared_ids
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let rule = if i % 2 == 0 {
                    AggregationRule::Sum
                } else {
                    AggregationRule::BatchCeil { batch: 50 }
                };
                (r.clone(), rule)
            })
            .collect(),
        non_shared: non_shared_ids
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let rule = if i % 2 == 0 {
                    AggregationRule::Sum
                } else {
                    AggregationRule::BatchCeil { batch: 20 }
                };
                (r.clone(), rule)
            })
            .collect(),
    };

    let community_ids: Vec<CommunityId> = (1..=spec.communities)
        .map(|i| CommunityId(format!("community-{i:02}")))
        .collect();

    // Prescriptions first; replaceable sets and bundles must respect them.
    let mut programs = Vec::with_capacity(spec.programs);
    for j in 1..=spec.programs {
        let users = 40 + rng.random_range(0..400u64);
        let covered = rng.random_range(1..=spec.communities.min(3));
        let picks = rand::seq::index::sample(&mut rng, spec.communities, covered);
        let mut coverage = BTreeMap::new();
        let mut remaining = users;
        for (k, idx) in picks.iter().enumerate() {
            let share = if k + 1 == covered {
                remaining
            } else {
                let cut = remaining / (covered - k) as u64;
                rng.random_range(1..=cut.max(1))
            };
            coverage.insert(community_ids[idx].clone(), share);
            remaining -= share;
        }

        let line_count = rng.random_range(2..=spec.drugs.min(5));
        let mut prescription = BTreeMap::new();
        for idx in rand::seq::index::sample(&mut rng, spec.drugs, line_count) {
            prescription.insert(
                drug_ids[idx].clone(),
                DrugLine {
                    quantity: dyadic_in(&mut rng, 0.5, 4.0),
                    importance: dyadic_in(&mut rng, 1.0 / 64.0, 1.0),
                },
            );
        }

        let mut shared_usages = BTreeMap::new();
        for resource in &shared_ids {
            if rng.random_bool(0.6) {
                shared_usages.insert(resource.clone(), dyadic_in(&mut rng, 1.0 / 64.0, 0.75));
            }
        }
        let mut non_shared_usages = BTreeMap::new();
        for resource in &non_shared_ids {
            if rng.random_bool(0.6) {
                non_shared_usages.insert(resource.clone(), dyadic_in(&mut rng, 1.0 / 64.0, 0.25));
            }
        }

        programs.push(PreventionProgram {
            id: crate::program::ProgramId(format!("program-{j:02}")),
            susceptibility: dyadic_in(&mut rng, 1.0 / 64.0, 1.0),
            users,
            coverage,
            prescription,
            replaceable: BTreeSet::new(),
            shared_usages,
            non_shared_usages,
        });
    }

    // Mark replaceable drugs: each program offers a thinned subset of its
    // prescription; program 1 always gets one so the instance has moves.
    let mut replaceable_drugs: BTreeSet<DrugId> = BTreeSet::new();
    for (j, program) in programs.iter_mut().enumerate() {
        let candidates: Vec<DrugId> = program.prescription.keys().cloned().collect();
        let mut chosen = BTreeSet::new();
        for drug in &candidates {
            if rng.random_bool(0.5) {
                chosen.insert(drug.clone());
            }
        }
        if j == 0 && chosen.is_empty() {
            chosen.insert(candidates[0].clone());
        }
        // Cap so the solution space stays enumerable at desk scale.
        while chosen.len() > 2 {
            let drop = chosen.iter().next().cloned().expect("non-empty");
            chosen.remove(&drop);
        }
        replaceable_drugs.extend(chosen.iter().cloned());
        program.replaceable = chosen;
    }

    // Bundles per replaceable drug. Auxiliary pairs are only attached when
    // every program that may apply them co-prescribes the removed drug.
    let mut alternatives: BTreeMap<DrugId, Vec<SubstitutionBundle>> = BTreeMap::new();
    for drug in &replaceable_drugs {
        let users_of: Vec<&PreventionProgram> = programs
            .iter()
            .filter(|p| p.replaceable.contains(drug))
            .collect();
        let mut common: BTreeSet<DrugId> = users_of
            .first()
            .map(|p| p.prescription.keys().cloned().collect())
            .unwrap_or_default();
        for p in users_of.iter().skip(1) {
            common.retain(|d| p.prescription.contains_key(d));
        }
        common.remove(drug);

        let mut bundles = Vec::with_capacity(spec.alternatives);
        for _ in 0..spec.alternatives {
            let replacement = loop {
                let pick = &drug_ids[rng.random_range(0..spec.drugs)];
                if pick != drug {
                    break pick.clone();
                }
            };
            let mut shared_deltas = BTreeMap::new();
            if !shared_ids.is_empty() && rng.random_bool(0.4) {
                let resource = shared_ids[rng.random_range(0..shared_ids.len())].clone();
                shared_deltas.insert(resource, quantize(rng.random_range(-0.25..=0.25)));
            }
            let mut non_shared_deltas = BTreeMap::new();
            if !non_shared_ids.is_empty() && rng.random_bool(0.4) {
                let resource = non_shared_ids[rng.random_range(0..non_shared_ids.len())].clone();
                non_shared_deltas.insert(resource, quantize(rng.random_range(-0.125..=0.125)));
            }
            let mut auxiliary = Vec::new();
            if !common.is_empty() && rng.random_bool(0.3) {
                let remove = common
                    .iter()
                    .nth(rng.random_range(0..common.len()))
                    .cloned()
                    .expect("non-empty");
                let add = loop {
                    let pick = &drug_ids[rng.random_range(0..spec.drugs)];
                    if pick != drug && *pick != remove {
                        break pick.clone();
                    }
                };
                auxiliary.push(AuxiliaryReplacement {
                    remove,
                    add,
                    quantity: dyadic_in(&mut rng, 0.25, 2.0),
                });
            }
            bundles.push(SubstitutionBundle {
                replacement,
                quantity: dyadic_in(&mut rng, 0.5, 4.0),
                auxiliary,
                shared_deltas,
                non_shared_deltas,
            });
        }
        alternatives.insert(drug.clone(), bundles);
    }

    let communities: Vec<Community> = community_ids
        .iter()
        .map(|id| Community {
            id: id.clone(),
            weight: dyadic_in(&mut rng, 1.0 / 64.0, 1.0),
            non_shared_inventory: non_shared_ids.iter().map(|r| (r.clone(), 0.0)).collect(),
        })
        .collect();

    // Assemble with placeholder inventory, then size availabilities from the
    // base and planted demands.
    let mut instance = Instance {
        format_version: FORMAT_VERSION,
        drugs,
        alternatives,
        communities,
        programs,
        inventory: ResourceInventory {
            drugs: drug_ids.iter().map(|d| (d.clone(), 0.0)).collect(),
            shared: shared_ids.iter().map(|r| (r.clone(), 0.0)).collect(),
        },
        aggregation_rules,
    };

    let n = instance.programs.len();
    let base = check_constraints(&instance, &Solution::all_keep(n))?;

    let (planted, squeezed_drug) = if spec.tightness < 1.0 {
        // Substitute the top-priority bundle in one movable program; the
        // drug it replaces becomes the one deliberately squeezed constraint.
        let mut solution = Solution::all_keep(n);
        let movable = (0..n)
            .find(|&j| !instance.replaceable_positions(&instance.programs[j]).is_empty())
            .expect("program 1 always has a replaceable drug");
        let (position, _) = instance.replaceable_positions(&instance.programs[movable])[0];
        let drug = instance.programs[movable]
            .drug_at_position(position)
            .expect("replaceable position exists")
            .clone();
        solution.set(
            movable,
            Choice::Substitute {
                position,
                bundle: 1,
            },
        );
        (Some(solution), Some(drug))
    } else {
        (None, None)
    };
    let planted_demand = planted
        .as_ref()
        .map(|solution| check_constraints(&instance, solution))
        .transpose()?;

    // Largest demand increase any single substitution can cause, per row:
    // tight instances stock that much extra of everything except the one
    // squeezed drug, so the feasible region stays rich while the base
    // programs still overdraw it.
    let mut single_move_pad = vec![0.0f64; base.rows.len()];
    if planted.is_some() {
        for (j, program) in instance.programs.iter().enumerate() {
            for (position, bundles) in instance.replaceable_positions(program) {
                for bundle in 1..=bundles {
                    let mut solution = Solution::all_keep(n);
                    solution.set(j, Choice::Substitute { position, bundle });
                    let report = check_constraints(&instance, &solution)?;
                    for (pad, (row, base_row)) in single_move_pad
                        .iter_mut()
                        .zip(report.rows.iter().zip(&base.rows))
                    {
                        *pad = pad.max(row.demand - base_row.demand);
                    }
                }
            }
        }
    }

    let headroom = 0.25;
    for (row_index, row) in base.rows.iter().enumerate() {
        let scaled = spec.tightness * row.demand;
        let floor = planted_demand
            .as_ref()
            .map(|report| report.rows[row_index].demand)
            .unwrap_or(0.0);
        let mut available = scaled.max(floor);
        let squeezed = match (&row.key, &squeezed_drug) {
            (ConstraintKey::Drug(drug), Some(target)) => drug == target,
            _ => false,
        };
        if planted.is_some() && !squeezed {
            available += headroom * row.demand.max(floor) + single_move_pad[row_index];
        }
        match &row.key {
            ConstraintKey::Drug(drug) => {
                instance.inventory.drugs.insert(drug.clone(), available);
            }
            ConstraintKey::Shared(resource) => {
                instance.inventory.shared.insert(resource.clone(), available);
            }
            ConstraintKey::NonShared(community, resource) => {
                let community = instance
                    .communities
                    .iter_mut()
                    .find(|c| &c.id == community)
                    .expect("constraint keys come from the instance");
                community
                    .non_shared_inventory
                    .insert(resource.clone(), available);
            }
        }
    }

    instance.validate()?;
    Ok(GeneratedInstance {
        feasible_guaranteed: true,
        planted,
        instance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{enumerate_optimum, solution_space_size, EnumerationBudget};

    #[test]
    fn loose_inventory_keeps_base_feasible() {
        let generated = generate_instance(&GeneratorSpec {
            tightness: 2.0,
            seed: 3,
            ..GeneratorSpec::default()
        })
        .unwrap();
        assert!(generated.feasible_guaranteed);
        assert!(generated.planted.is_none());
        let n = generated.instance.programs.len();
        let report = check_constraints(&generated.instance, &Solution::all_keep(n)).unwrap();
        assert!(report.is_feasible());
        let best = enumerate_optimum(&generated.instance, EnumerationBudget::default()).unwrap();
        assert!(best.feasible);
        assert_eq!(best.objective, 0.0);
    }

    #[test]
    fn tight_inventory_forces_substitution_but_stays_solvable() {
        let generated = generate_instance(&GeneratorSpec {
            tightness: 0.8,
            seed: 4,
            ..GeneratorSpec::default()
        })
        .unwrap();
        let n = generated.instance.programs.len();
        let base = check_constraints(&generated.instance, &Solution::all_keep(n)).unwrap();
        assert!(!base.is_feasible(), "base demand should exceed inventory");

        let planted = generated.planted.clone().unwrap();
        let planted_report = check_constraints(&generated.instance, &planted).unwrap();
        assert!(planted_report.is_feasible());

        let best = enumerate_optimum(&generated.instance, EnumerationBudget::default()).unwrap();
        assert!(best.feasible);
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = GeneratorSpec {
            seed: 11,
            ..GeneratorSpec::default()
        };
        let a = generate_instance(&spec).unwrap();
        let b = generate_instance(&spec).unwrap();
        assert_eq!(a.instance, b.instance);
        assert_eq!(a.instance.to_json_pretty(), b.instance.to_json_pretty());
        assert_eq!(a.planted, b.planted);
    }

    #[test]
    fn generated_instances_validate_across_seeds() {
        for seed in 0..30 {
            let spec = GeneratorSpec {
                seed,
                tightness: if seed % 2 == 0 { 0.8 } else { 1.5 },
                ..GeneratorSpec::default()
            };
            let generated = generate_instance(&spec).unwrap();
            generated.instance.validate().unwrap();
            assert!(solution_space_size(&generated.instance) >= 1);
        }
    }

    #[test]
    fn spec_validation() {
        let mut spec = GeneratorSpec {
            programs: 0,
            ..GeneratorSpec::default()
        };
        assert!(spec.validate().is_err());
        spec.programs = 3;
        spec.tightness = 0.0;
        assert!(spec.validate().is_err());
        spec.tightness = 1.0;
        spec.drugs = 1;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn quantities_sit_on_the_dyadic_grid() {
        let generated = generate_instance(&GeneratorSpec::default()).unwrap();
        let on_grid = |v: f64| (v * 64.0).fract() == 0.0;
        for program in &generated.instance.programs {
            assert!(on_grid(program.susceptibility));
            for line in program.prescription.values() {
                assert!(on_grid(line.quantity));
                assert!(on_grid(line.importance));
            }
            for &q in program
                .shared_usages
                .values()
                .chain(program.non_shared_usages.values())
            {
                assert!(on_grid(q));
            }
        }
        for bundles in generated.instance.alternatives.values() {
            for bundle in bundles {
                assert!(on_grid(bundle.quantity));
                for aux in &bundle.auxiliary {
                    assert!(on_grid(aux.quantity));
                }
                for &d in bundle
                    .shared_deltas
                    .values()
                    .chain(bundle.non_shared_deltas.values())
                {
                    assert!(on_grid(d));
                }
            }
        }
    }
}
