//! Data model of the prevention-program optimization problem.
//!
//! An [`Instance`] couples prevention programs (prescriptions plus resource
//! usages covering residents across communities) with priority-ordered
//! substitution bundles per replaceable drug, an inventory of drugs and
//! shared resources, per-community non-shared inventories, and the
//! aggregation rule each resource uses to turn per-prescription usages into
//! total demand. A [`Solution`] assigns every program either "unchanged" or
//! one (position, bundle) substitution.

pub(crate) mod eval;

pub use eval::{
    aggregate, apply_update, check_constraints, deviation, objective, ConstraintKey,
    ConstraintReport, ConstraintRow,
};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::format::{check_format_version, FormatVersionError};

macro_rules! id_type {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                self.0.fmt(f)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_string())
            }
        }
    };
}

id_type!(DrugId);
id_type!(ResourceId);
id_type!(CommunityId);
id_type!(ProgramId);

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("instance validation failed:\n  {}", issues.join("\n  "))]
    Validation { issues: Vec<String> },
    #[error("program {program}: {detail}")]
    Encoding { program: String, detail: String },
    #[error("solution has {actual} pairs but the instance has {expected} programs")]
    SolutionLength { expected: usize, actual: usize },
    #[error(transparent)]
    FormatVersion(#[from] FormatVersionError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Drug {
    pub id: DrugId,
    pub name: String,
}

/// One linked side-replacement inside a main-drug bundle: `remove` leaves the
/// prescription and `add` enters it at `quantity` per prescription.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuxiliaryReplacement {
    pub remove: DrugId,
    pub add: DrugId,
    pub quantity: f64,
}

/// A substitution option for a replaceable drug. Bundles are stored in
/// decreasing priority order; choosing the bundle at 1-based index `i`
/// contributes `i` deviation steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubstitutionBundle {
    pub replacement: DrugId,
    /// Per-prescription quantity of the replacement drug.
    pub quantity: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub auxiliary: Vec<AuxiliaryReplacement>,
    /// Changes to per-prescription shared-resource usages (may be negative;
    /// resulting usages are floored at zero).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub shared_deltas: BTreeMap<ResourceId, f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub non_shared_deltas: BTreeMap<ResourceId, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Community {
    pub id: CommunityId,
    /// Importance weight, in [0, 1].
    pub weight: f64,
    /// Availability of each non-shared resource in this community.
    #[serde(default)]
    pub non_shared_inventory: BTreeMap<ResourceId, f64>,
}

/// One prescription line: per-prescription quantity and the drug's importance
/// weight within the program.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrugLine {
    pub quantity: f64,
    pub importance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreventionProgram {
    pub id: ProgramId,
    /// Susceptibility weight of the covered residents, in [0, 1].
    pub susceptibility: f64,
    /// Total residents using the program.
    pub users: u64,
    /// Residents per covered community; values sum to `users`.
    pub coverage: BTreeMap<CommunityId, u64>,
    /// Prescription lines keyed by drug. Iteration order of this map is the
    /// canonical position order used by solution encodings.
    pub prescription: BTreeMap<DrugId, DrugLine>,
    /// Drugs that may be substituted; each must have a non-empty bundle list.
    #[serde(default)]
    pub replaceable: BTreeSet<DrugId>,
    /// Per-prescription usage of shared resources.
    #[serde(default)]
    pub shared_usages: BTreeMap<ResourceId, f64>,
    /// Per-prescription usage of non-shared resources.
    #[serde(default)]
    pub non_shared_usages: BTreeMap<ResourceId, f64>,
}

impl PreventionProgram {
    /// Drug at the given 1-based canonical position, if any.
    pub fn drug_at_position(&self, position: usize) -> Option<&DrugId> {
        if position == 0 {
            return None;
        }
        self.prescription.keys().nth(position - 1)
    }

    /// 1-based position of the given drug in the canonical order.
    pub fn position_of(&self, drug: &DrugId) -> Option<usize> {
        self.prescription.keys().position(|d| d == drug).map(|p| p + 1)
    }
}

/// How per-prescription usages combine into total demand on a resource.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AggregationRule {
    /// Plain summation (drugs, consumable material).
    Sum,
    /// Device-like resources: each usage line occupies `ceil(doses / batch)`
    /// units, one batch run per program.
    BatchCeil { batch: u64 },
    /// Pooled variant: doses from all programs pool first, then one ceiling
    /// is taken over the total.
    BatchCeilPooled { batch: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceInventory {
    /// Total available quantity per drug.
    pub drugs: BTreeMap<DrugId, f64>,
    /// Total available quantity per shared resource.
    #[serde(default)]
    pub shared: BTreeMap<ResourceId, f64>,
}

/// Registry of resource types and their aggregation rules. The key sets
/// define which shared / non-shared resources exist.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregationRules {
    #[serde(default)]
    pub shared: BTreeMap<ResourceId, AggregationRule>,
    #[serde(default)]
    pub non_shared: BTreeMap<ResourceId, AggregationRule>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub format_version: u32,
    pub drugs: Vec<Drug>,
    /// Priority-ordered substitution bundles per replaceable drug.
    #[serde(default)]
    pub alternatives: BTreeMap<DrugId, Vec<SubstitutionBundle>>,
    pub communities: Vec<Community>,
    pub programs: Vec<PreventionProgram>,
    pub inventory: ResourceInventory,
    pub aggregation_rules: AggregationRules,
}

impl Instance {
    pub fn from_json(json: &str) -> Result<Self, ModelError> {
        let instance: Instance = serde_json::from_str(json)?;
        check_format_version(instance.format_version)?;
        instance.validate()?;
        Ok(instance)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ModelError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json_pretty(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("instance serializes");
        s.push('\n');
        s
    }

    pub fn community(&self, id: &CommunityId) -> Option<&Community> {
        self.communities.iter().find(|c| &c.id == id)
    }

    pub fn bundles_for(&self, drug: &DrugId) -> &[SubstitutionBundle] {
        self.alternatives.get(drug).map(Vec::as_slice).unwrap_or(&[])
    }

    /// 1-based canonical positions of a program's replaceable drugs, each
    /// with its bundle count.
    pub fn replaceable_positions(&self, program: &PreventionProgram) -> Vec<(usize, usize)> {
        program
            .prescription
            .keys()
            .enumerate()
            .filter(|(_, drug)| program.replaceable.contains(*drug))
            .map(|(i, drug)| (i + 1, self.bundles_for(drug).len()))
            .filter(|&(_, bundles)| bundles > 0)
            .collect()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let mut issues = Vec::new();
        check_unique(self.drugs.iter().map(|d| &d.id.0), "drug", &mut issues);
        check_unique(self.communities.iter().map(|c| &c.id.0), "community", &mut issues);
        check_unique(self.programs.iter().map(|p| &p.id.0), "program", &mut issues);
        if self.programs.is_empty() {
            issues.push("instance declares no programs".into());
        }
        if self.communities.is_empty() {
            issues.push("instance declares no communities".into());
        }

        let drug_ids: BTreeSet<&DrugId> = self.drugs.iter().map(|d| &d.id).collect();
        let community_ids: BTreeSet<&CommunityId> =
            self.communities.iter().map(|c| &c.id).collect();
        let shared_ids: BTreeSet<&ResourceId> = self.aggregation_rules.shared.keys().collect();
        let non_shared_ids: BTreeSet<&ResourceId> =
            self.aggregation_rules.non_shared.keys().collect();

        for community in &self.communities {
            if !(0.0..=1.0).contains(&community.weight) {
                issues.push(format!(
                    "community {}: weight {} outside [0, 1]",
                    community.id, community.weight
                ));
            }
            for resource in non_shared_ids.iter() {
                if !community.non_shared_inventory.contains_key(resource) {
                    issues.push(format!(
                        "community {}: missing availability for non-shared resource {resource}",
                        community.id
                    ));
                }
            }
            for (resource, quantity) in &community.non_shared_inventory {
                if !non_shared_ids.contains(resource) {
                    issues.push(format!(
                        "community {}: availability for unregistered resource {resource}",
                        community.id
                    ));
                }
                if !quantity.is_finite() || *quantity < 0.0 {
                    issues.push(format!(
                        "community {}: availability of {resource} is {quantity}",
                        community.id
                    ));
                }
            }
        }

        for (rule_set, name) in [
            (&self.aggregation_rules.shared, "shared"),
            (&self.aggregation_rules.non_shared, "non-shared"),
        ] {
            for (resource, rule) in rule_set {
                match rule {
                    AggregationRule::BatchCeil { batch } | AggregationRule::BatchCeilPooled { batch } => {
                        if *batch == 0 {
                            issues.push(format!(
                                "{name} resource {resource}: batch size must be positive"
                            ));
                        }
                    }
                    AggregationRule::Sum => {}
                }
            }
        }

        for drug in &self.drugs {
            if !self.inventory.drugs.contains_key(&drug.id) {
                issues.push(format!("inventory missing availability for drug {}", drug.id));
            }
        }
        for (drug, quantity) in &self.inventory.drugs {
            if !drug_ids.contains(drug) {
                issues.push(format!("inventory lists undeclared drug {drug}"));
            }
            if !quantity.is_finite() || *quantity < 0.0 {
                issues.push(format!("inventory of drug {drug} is {quantity}"));
            }
        }
        for resource in shared_ids.iter() {
            if !self.inventory.shared.contains_key(resource) {
                issues.push(format!(
                    "inventory missing availability for shared resource {resource}"
                ));
            }
        }
        for (resource, quantity) in &self.inventory.shared {
            if !shared_ids.contains(resource) {
                issues.push(format!("inventory lists unregistered shared resource {resource}"));
            }
            if !quantity.is_finite() || *quantity < 0.0 {
                issues.push(format!("inventory of shared resource {resource} is {quantity}"));
            }
        }

        for (drug, bundles) in &self.alternatives {
            if !drug_ids.contains(drug) {
                issues.push(format!("alternatives listed for undeclared drug {drug}"));
            }
            if bundles.is_empty() {
                issues.push(format!("alternative list of drug {drug} is empty"));
            }
            for (i, bundle) in bundles.iter().enumerate() {
                let at = format!("bundle {} of drug {drug}", i + 1);
                if !drug_ids.contains(&bundle.replacement) {
                    issues.push(format!("{at}: undeclared replacement drug {}", bundle.replacement));
                }
                if bundle.replacement == *drug {
                    issues.push(format!("{at}: replacement equals the replaced drug"));
                }
                if !bundle.quantity.is_finite() || bundle.quantity < 0.0 {
                    issues.push(format!("{at}: quantity {} invalid", bundle.quantity));
                }
                for aux in &bundle.auxiliary {
                    if !drug_ids.contains(&aux.remove) || !drug_ids.contains(&aux.add) {
                        issues.push(format!("{at}: auxiliary pair references undeclared drugs"));
                    }
                    if aux.remove == *drug {
                        issues.push(format!(
                            "{at}: auxiliary removal targets the replaced drug itself"
                        ));
                    }
                    if !aux.quantity.is_finite() || aux.quantity < 0.0 {
                        issues.push(format!("{at}: auxiliary quantity {} invalid", aux.quantity));
                    }
                }
                for (resource, delta) in &bundle.shared_deltas {
                    if !shared_ids.contains(resource) {
                        issues.push(format!("{at}: delta for unregistered shared resource {resource}"));
                    }
                    if !delta.is_finite() {
                        issues.push(format!("{at}: shared delta for {resource} is {delta}"));
                    }
                }
                for (resource, delta) in &bundle.non_shared_deltas {
                    if !non_shared_ids.contains(resource) {
                        issues.push(format!(
                            "{at}: delta for unregistered non-shared resource {resource}"
                        ));
                    }
                    if !delta.is_finite() {
                        issues.push(format!("{at}: non-shared delta for {resource} is {delta}"));
                    }
                }
            }
        }

        for program in &self.programs {
            validate_program_against(
                program,
                &drug_ids,
                &community_ids,
                &shared_ids,
                &non_shared_ids,
                &self.alternatives,
                &mut issues,
            );
        }

        if issues.is_empty() {
            Ok(())
        } else {
            Err(ModelError::Validation { issues })
        }
    }

    /// Structural validation of a single (possibly expert-edited) program in
    /// the context of this instance.
    pub fn validate_program(&self, program: &PreventionProgram) -> Result<(), ModelError> {
        let mut issues = Vec::new();
        let drug_ids: BTreeSet<&DrugId> = self.drugs.iter().map(|d| &d.id).collect();
        let community_ids: BTreeSet<&CommunityId> =
            self.communities.iter().map(|c| &c.id).collect();
        let shared_ids: BTreeSet<&ResourceId> = self.aggregation_rules.shared.keys().collect();
        let non_shared_ids: BTreeSet<&ResourceId> =
            self.aggregation_rules.non_shared.keys().collect();
        validate_program_against(
            program,
            &drug_ids,
            &community_ids,
            &shared_ids,
            &non_shared_ids,
            &self.alternatives,
            &mut issues,
        );
        if issues.is_empty() {
            Ok(())
        } else {
            Err(ModelError::Validation { issues })
        }
    }
}

fn check_unique<'a>(
    ids: impl Iterator<Item = &'a String>,
    kind: &str,
    issues: &mut Vec<String>,
) {
    let mut seen = BTreeSet::new();
    for id in ids {
        if !seen.insert(id) {
            issues.push(format!("duplicate {kind} id `{id}`"));
        }
    }
}

fn validate_program_against(
    program: &PreventionProgram,
    drug_ids: &BTreeSet<&DrugId>,
    community_ids: &BTreeSet<&CommunityId>,
    shared_ids: &BTreeSet<&ResourceId>,
    non_shared_ids: &BTreeSet<&ResourceId>,
    alternatives: &BTreeMap<DrugId, Vec<SubstitutionBundle>>,
    issues: &mut Vec<String>,
) {
    let at = format!("program {}", program.id);
    if !(0.0..=1.0).contains(&program.susceptibility) {
        issues.push(format!(
            "{at}: susceptibility {} outside [0, 1]",
            program.susceptibility
        ));
    }
    let covered: u64 = program.coverage.values().sum();
    if covered != program.users {
        issues.push(format!(
            "{at}: coverage sums to {covered} but users is {}",
            program.users
        ));
    }
    for community in program.coverage.keys() {
        if !community_ids.contains(community) {
            issues.push(format!("{at}: covers undeclared community {community}"));
        }
    }
    if program.prescription.is_empty() {
        issues.push(format!("{at}: empty prescription"));
    }
    for (drug, line) in &program.prescription {
        if !drug_ids.contains(drug) {
            issues.push(format!("{at}: prescribes undeclared drug {drug}"));
        }
        if !line.quantity.is_finite() || line.quantity < 0.0 {
            issues.push(format!("{at}: quantity of {drug} is {}", line.quantity));
        }
        if !(0.0..=1.0).contains(&line.importance) {
            issues.push(format!(
                "{at}: importance of {drug} is {} (outside [0, 1])",
                line.importance
            ));
        }
    }
    for drug in &program.replaceable {
        if !program.prescription.contains_key(drug) {
            issues.push(format!("{at}: replaceable drug {drug} not in the prescription"));
            continue;
        }
        match alternatives.get(drug) {
            None => issues.push(format!("{at}: replaceable drug {drug} has no alternative list")),
            Some(bundles) => {
                // Every bundle must be applicable to this prescription: any
                // auxiliary removal must target a co-prescribed drug.
                for (i, bundle) in bundles.iter().enumerate() {
                    for aux in &bundle.auxiliary {
                        if !program.prescription.contains_key(&aux.remove) {
                            issues.push(format!(
                                "{at}: bundle {} of {drug} removes {} which the program does not prescribe",
                                i + 1,
                                aux.remove
                            ));
                        }
                    }
                }
            }
        }
    }
    for (resource, quantity) in &program.shared_usages {
        if !shared_ids.contains(resource) {
            issues.push(format!("{at}: usage of unregistered shared resource {resource}"));
        }
        if !quantity.is_finite() || *quantity < 0.0 {
            issues.push(format!("{at}: shared usage of {resource} is {quantity}"));
        }
    }
    for (resource, quantity) in &program.non_shared_usages {
        if !non_shared_ids.contains(resource) {
            issues.push(format!(
                "{at}: usage of unregistered non-shared resource {resource}"
            ));
        }
        if !quantity.is_finite() || *quantity < 0.0 {
            issues.push(format!("{at}: non-shared usage of {resource} is {quantity}"));
        }
    }
}

/// One program's assignment inside a [`Solution`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Choice {
    /// Leave the program unchanged (wire encoding `[0, 0]`).
    Keep,
    /// Replace the drug at the 1-based canonical `position` with the
    /// 1-based `bundle` from its alternative list.
    Substitute { position: usize, bundle: usize },
}

/// A joint update of all programs: one [`Choice`] per program, in instance
/// program order. Serializes as an array of `[position, bundle]` pairs with
/// `[0, 0]` reserved for "unchanged".
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    choices: Vec<Choice>,
}

impl Solution {
    pub fn all_keep(programs: usize) -> Self {
        Self {
            choices: vec![Choice::Keep; programs],
        }
    }

    pub fn new(choices: Vec<Choice>) -> Self {
        Self { choices }
    }

    pub fn choices(&self) -> &[Choice] {
        &self.choices
    }

    pub fn len(&self) -> usize {
        self.choices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.choices.is_empty()
    }

    pub fn set(&mut self, program: usize, choice: Choice) {
        self.choices[program] = choice;
    }

    pub fn to_pairs(&self) -> Vec<(usize, usize)> {
        self.choices
            .iter()
            .map(|c| match c {
                Choice::Keep => (0, 0),
                Choice::Substitute { position, bundle } => (*position, *bundle),
            })
            .collect()
    }

    pub fn from_pairs(pairs: Vec<(usize, usize)>) -> Result<Self, ModelError> {
        let choices = pairs
            .into_iter()
            .enumerate()
            .map(|(j, (position, bundle))| {
                if position == 0 && bundle == 0 {
                    Ok(Choice::Keep)
                } else if position == 0 || bundle == 0 {
                    Err(ModelError::Encoding {
                        program: format!("#{}", j + 1),
                        detail: format!("pair ({position}, {bundle}) mixes zero and non-zero indices"),
                    })
                } else {
                    Ok(Choice::Substitute { position, bundle })
                }
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { choices })
    }

    /// Checks every pair against the instance: positions must name
    /// replaceable drugs and bundle indices must exist.
    pub fn validate(&self, instance: &Instance) -> Result<(), ModelError> {
        if self.choices.len() != instance.programs.len() {
            return Err(ModelError::SolutionLength {
                expected: instance.programs.len(),
                actual: self.choices.len(),
            });
        }
        for (program, &choice) in instance.programs.iter().zip(&self.choices) {
            if let Choice::Substitute { position, bundle } = choice {
                let drug = program.drug_at_position(position).ok_or_else(|| {
                    ModelError::Encoding {
                        program: program.id.to_string(),
                        detail: format!("position {position} out of range"),
                    }
                })?;
                if !program.replaceable.contains(drug) {
                    return Err(ModelError::Encoding {
                        program: program.id.to_string(),
                        detail: format!("drug {drug} at position {position} is not replaceable"),
                    });
                }
                let bundles = instance.bundles_for(drug).len();
                if bundle == 0 || bundle > bundles {
                    return Err(ModelError::Encoding {
                        program: program.id.to_string(),
                        detail: format!(
                            "bundle index {bundle} out of range (drug {drug} has {bundles})"
                        ),
                    });
                }
            }
        }
        Ok(())
    }
}

impl Serialize for Solution {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.to_pairs().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Solution {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let pairs = Vec::<(usize, usize)>::deserialize(deserializer)?;
        Solution::from_pairs(pairs).map_err(serde::de::Error::custom)
    }
}

/// On-disk wrapper for a bare solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionFile {
    pub format_version: u32,
    pub pairs: Solution,
}
