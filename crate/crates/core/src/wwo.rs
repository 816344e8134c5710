//! Water wave optimization over substitution vectors.
//!
//! Solutions are ranked by a penalized fitness `1 / (f + v_D + v_G + v_F +
//! eps)`: the weighted-deviation objective plus the total overdraft of each
//! constraint family. Each wave carries an integer wavelength derived from
//! its fitness rank — fit waves take one neighborhood step, unfit waves take
//! up to one step per program — and three operators drive the search:
//! propagation (wavelength-many neighborhood moves, accepted only on
//! improvement), refraction (a stagnant wave copies roughly half its pairs
//! from the best), and breaking (a new best tries one higher-priority bundle
//! per program).

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::program::{
    apply_update, check_constraints, deviation, AggregationRule, Choice, ConstraintKey, Instance,
    ModelError, Solution,
};

/// Guard added to the fitness denominator; a feasible unchanged solution has
/// zero objective and zero violations, and would otherwise divide by zero.
pub const FITNESS_EPSILON: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("no program has a replaceable drug; there is nothing to move")]
    NoMove,
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone)]
pub struct WwoConfig {
    /// Wave count, at least 2.
    pub population: usize,
    /// Generations a wave may go unimproved before refraction.
    pub stagnation: usize,
    /// Total fitness evaluations allowed, including the initial population.
    pub budget: usize,
    pub seed: u64,
}

impl Default for WwoConfig {
    fn default() -> Self {
        Self {
            population: 10,
            stagnation: 5,
            budget: 10_000,
            seed: 0,
        }
    }
}

impl WwoConfig {
    pub fn validate(&self) -> Result<(), SolveError> {
        if self.population < 2 {
            return Err(SolveError::InvalidConfig(format!(
                "population must be >= 2, got {}",
                self.population
            )));
        }
        if self.stagnation == 0 {
            return Err(SolveError::InvalidConfig("stagnation must be >= 1".into()));
        }
        if self.budget < self.population {
            return Err(SolveError::InvalidConfig(format!(
                "budget {} cannot cover the initial population of {}",
                self.budget, self.population
            )));
        }
        Ok(())
    }
}

/// Overdraft per constraint family: how far demand exceeds availability,
/// summed over the constraints of each kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violations {
    pub drugs: f64,
    pub shared: f64,
    pub non_shared: f64,
}

impl Violations {
    pub fn total(&self) -> f64 {
        self.drugs + self.shared + self.non_shared
    }

    pub fn is_zero(&self) -> bool {
        self.drugs == 0.0 && self.shared == 0.0 && self.non_shared == 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitnessDecomposition {
    pub objective: f64,
    pub violations: Violations,
    pub fitness: f64,
}

impl FitnessDecomposition {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_zero()
    }
}

/// Constraint overdrafts of a solution, grouped by family.
pub fn violations(instance: &Instance, solution: &Solution) -> Result<Violations, ModelError> {
    let report = check_constraints(instance, solution)?;
    let mut v = Violations {
        drugs: 0.0,
        shared: 0.0,
        non_shared: 0.0,
    };
    for row in &report.rows {
        let over = (row.demand - row.available).max(0.0);
        match row.key {
            ConstraintKey::Drug(_) => v.drugs += over,
            ConstraintKey::Shared(_) => v.shared += over,
            ConstraintKey::NonShared(..) => v.non_shared += over,
        }
    }
    Ok(v)
}

/// Penalized fitness of a solution; higher is better.
pub fn fitness(
    instance: &Instance,
    solution: &Solution,
) -> Result<FitnessDecomposition, ModelError> {
    Evaluator::new(instance)?.fitness(solution)
}

/// Rank-to-wavelength mapping: the best wave (rank 1) gets 1, the worst gets
/// the program count, monotone in between.
pub fn wavelength(rank: usize, population: usize, programs: usize) -> usize {
    debug_assert!(population >= 2);
    debug_assert!((1..=population).contains(&rank));
    debug_assert!(programs >= 1);
    let numer = (population - rank) * (programs - 1);
    let denom = population - 1;
    programs - numer.div_ceil(denom)
}

/// Precomputed per-choice contributions so fitness evaluation is a handful
/// of indexed adds per program. Indices follow the same canonical orders as
/// [`check_constraints`]: drugs and shared resources sorted by id,
/// non-shared constraints by (community file order, resource id).
pub struct Evaluator {
    /// (1-based position, bundle count) of each program's replaceable drugs.
    moves: Vec<Vec<(usize, usize)>>,
    programs: Vec<ProgramChoices>,
    drug_available: Vec<f64>,
    shared_available: Vec<f64>,
    shared_pool_batch: Vec<Option<f64>>,
    non_shared_available: Vec<f64>,
    non_shared_pool_batch: Vec<Option<f64>>,
}

struct ProgramChoices {
    keep: ChoiceContribution,
    /// Keyed by (position, bundle), both 1-based.
    substitutions: std::collections::BTreeMap<(usize, usize), ChoiceContribution>,
}

struct ChoiceContribution {
    objective: f64,
    drugs: Vec<(usize, f64)>,
    shared: Vec<(usize, f64)>,
    non_shared: Vec<(usize, f64)>,
}

impl Evaluator {
    pub fn new(instance: &Instance) -> Result<Self, ModelError> {
        let drug_index: std::collections::BTreeMap<_, usize> = instance
            .inventory
            .drugs
            .keys()
            .enumerate()
            .map(|(i, d)| (d.clone(), i))
            .collect();
        let shared_index: std::collections::BTreeMap<_, usize> = instance
            .aggregation_rules
            .shared
            .keys()
            .enumerate()
            .map(|(i, r)| (r.clone(), i))
            .collect();
        let non_shared_resources: Vec<_> = instance
            .aggregation_rules
            .non_shared
            .keys()
            .cloned()
            .collect();
        let cell_count = instance.communities.len() * non_shared_resources.len();
        let cell_of = |community_pos: usize, resource_pos: usize| {
            community_pos * non_shared_resources.len() + resource_pos
        };

        let drug_available: Vec<f64> = instance.inventory.drugs.values().copied().collect();
        let shared_available: Vec<f64> = instance
            .aggregation_rules
            .shared
            .keys()
            .map(|r| instance.inventory.shared.get(r).copied().unwrap_or(0.0))
            .collect();
        let shared_pool_batch: Vec<Option<f64>> = instance
            .aggregation_rules
            .shared
            .values()
            .map(|rule| match rule {
                AggregationRule::BatchCeilPooled { batch } => Some(*batch as f64),
                _ => None,
            })
            .collect();
        let mut non_shared_available = vec![0.0; cell_count];
        let mut non_shared_pool_batch = vec![None; cell_count];
        for (ci, community) in instance.communities.iter().enumerate() {
            for (ri, resource) in non_shared_resources.iter().enumerate() {
                non_shared_available[cell_of(ci, ri)] = community
                    .non_shared_inventory
                    .get(resource)
                    .copied()
                    .unwrap_or(0.0);
                if let AggregationRule::BatchCeilPooled { batch } =
                    instance.aggregation_rules.non_shared[resource]
                {
                    non_shared_pool_batch[cell_of(ci, ri)] = Some(batch as f64);
                }
            }
        }
        let community_pos: std::collections::BTreeMap<_, usize> = instance
            .communities
            .iter()
            .enumerate()
            .map(|(i, c)| (c.id.clone(), i))
            .collect();
        let community_weight: std::collections::BTreeMap<_, f64> = instance
            .communities
            .iter()
            .map(|c| (c.id.clone(), c.weight))
            .collect();

        let mut moves = Vec::with_capacity(instance.programs.len());
        let mut programs = Vec::with_capacity(instance.programs.len());
        for program in &instance.programs {
            let coverage_weight: f64 = program
                .coverage
                .keys()
                .map(|c| community_weight.get(c).copied().unwrap_or(0.0))
                .sum();
            let contribution_of = |updated: &crate::program::PreventionProgram,
                                   objective: f64|
             -> ChoiceContribution {
                let users = updated.users as f64;
                let drugs = updated
                    .prescription
                    .iter()
                    .map(|(drug, line)| (drug_index[drug], users * line.quantity))
                    .collect();
                let shared = updated
                    .shared_usages
                    .iter()
                    .map(|(resource, &qty)| {
                        let idx = shared_index[resource];
                        let value = match instance.aggregation_rules.shared[resource] {
                            AggregationRule::BatchCeil { batch } => {
                                (users * qty / batch as f64).ceil()
                            }
                            _ => users * qty,
                        };
                        (idx, value)
                    })
                    .collect();
                let mut non_shared = Vec::new();
                for (resource, &qty) in &updated.non_shared_usages {
                    let ri = non_shared_resources
                        .iter()
                        .position(|r| r == resource)
                        .expect("validated resource");
                    for (community, &residents) in &updated.coverage {
                        let value = match instance.aggregation_rules.non_shared[resource] {
                            AggregationRule::BatchCeil { batch } => {
                                (residents as f64 * qty / batch as f64).ceil()
                            }
                            _ => residents as f64 * qty,
                        };
                        non_shared.push((cell_of(community_pos[community], ri), value));
                    }
                }
                ChoiceContribution {
                    objective,
                    drugs,
                    shared,
                    non_shared,
                }
            };

            let keep = contribution_of(program, 0.0);
            let mut substitutions = std::collections::BTreeMap::new();
            let replaceable = instance.replaceable_positions(program);
            for &(position, bundles) in &replaceable {
                for bundle in 1..=bundles {
                    let choice = Choice::Substitute { position, bundle };
                    let updated = apply_update(instance, program, choice)?;
                    let objective =
                        program.susceptibility * coverage_weight * deviation(program, choice)?;
                    substitutions.insert((position, bundle), contribution_of(&updated, objective));
                }
            }
            moves.push(replaceable);
            programs.push(ProgramChoices {
                keep,
                substitutions,
            });
        }

        Ok(Self {
            moves,
            programs,
            drug_available,
            shared_available,
            shared_pool_batch,
            non_shared_available,
            non_shared_pool_batch,
        })
    }

    pub fn program_count(&self) -> usize {
        self.programs.len()
    }

    /// Replaceable (position, bundle count) pairs per program.
    pub fn moves(&self) -> &[Vec<(usize, usize)>] {
        &self.moves
    }

    pub fn fitness(&self, solution: &Solution) -> Result<FitnessDecomposition, ModelError> {
        if solution.len() != self.programs.len() {
            return Err(ModelError::SolutionLength {
                expected: self.programs.len(),
                actual: solution.len(),
            });
        }
        let mut drug_demand = vec![0.0; self.drug_available.len()];
        let mut shared_demand = vec![0.0; self.shared_available.len()];
        let mut non_shared_demand = vec![0.0; self.non_shared_available.len()];
        let mut objective = 0.0;
        for (j, (&choice, program)) in solution.choices().iter().zip(&self.programs).enumerate() {
            let contribution = match choice {
                Choice::Keep => &program.keep,
                Choice::Substitute { position, bundle } => program
                    .substitutions
                    .get(&(position, bundle))
                    .ok_or_else(|| ModelError::Encoding {
                        program: format!("#{}", j + 1),
                        detail: format!("pair ({position}, {bundle}) is not a valid substitution"),
                    })?,
            };
            objective += contribution.objective;
            for &(idx, value) in &contribution.drugs {
                drug_demand[idx] += value;
            }
            for &(idx, value) in &contribution.shared {
                shared_demand[idx] += value;
            }
            for &(idx, value) in &contribution.non_shared {
                non_shared_demand[idx] += value;
            }
        }

        let violations = Violations {
            drugs: overdraft(&drug_demand, &self.drug_available, None),
            shared: overdraft(
                &shared_demand,
                &self.shared_available,
                Some(&self.shared_pool_batch),
            ),
            non_shared: overdraft(
                &non_shared_demand,
                &self.non_shared_available,
                Some(&self.non_shared_pool_batch),
            ),
        };
        let fitness = 1.0 / (objective + violations.total() + FITNESS_EPSILON);
        Ok(FitnessDecomposition {
            objective,
            violations,
            fitness,
        })
    }
}

fn overdraft(demand: &[f64], available: &[f64], pool_batches: Option<&[Option<f64>]>) -> f64 {
    let mut total = 0.0;
    for (i, (&d, &a)) in demand.iter().zip(available).enumerate() {
        let d = match pool_batches.and_then(|b| b[i]) {
            Some(batch) => (d / batch).ceil(),
            None => d,
        };
        total += (d - a).max(0.0);
    }
    total
}

fn random_substitution<R: Rng>(moves: &[(usize, usize)], rng: &mut R) -> Choice {
    let (position, bundles) = moves[rng.random_range(0..moves.len())];
    Choice::Substitute {
        position,
        bundle: rng.random_range(1..=bundles),
    }
}

fn neighbor_move<R: Rng>(
    moves: &[Vec<(usize, usize)>],
    movable: &[usize],
    solution: &Solution,
    rng: &mut R,
) -> Solution {
    let j = movable[rng.random_range(0..movable.len())];
    let program_moves = &moves[j];
    let mut next = solution.clone();
    if rng.random_bool(0.5) {
        // Move type 1: keep the replaced drug, redraw the bundle. An
        // unchanged pair has no drug yet, so one is drawn first.
        match solution.choices()[j] {
            Choice::Substitute { position, .. } => {
                let (_, bundles) = program_moves
                    .iter()
                    .find(|&&(p, _)| p == position)
                    .copied()
                    .expect("current position is replaceable");
                next.set(
                    j,
                    Choice::Substitute {
                        position,
                        bundle: rng.random_range(1..=bundles),
                    },
                );
            }
            Choice::Keep => next.set(j, random_substitution(program_moves, rng)),
        }
    } else {
        // Move type 2: redraw both the drug position and the bundle.
        next.set(j, random_substitution(program_moves, rng));
    }
    next
}

/// One random neighborhood move. Fails with [`SolveError::NoMove`] when no
/// program has a replaceable drug.
pub fn neighbor<R: Rng>(
    instance: &Instance,
    solution: &Solution,
    rng: &mut R,
) -> Result<Solution, SolveError> {
    let moves: Vec<Vec<(usize, usize)>> = instance
        .programs
        .iter()
        .map(|p| instance.replaceable_positions(p))
        .collect();
    let movable: Vec<usize> = (0..moves.len()).filter(|&j| !moves[j].is_empty()).collect();
    if movable.is_empty() {
        return Err(SolveError::NoMove);
    }
    Ok(neighbor_move(&moves, &movable, solution, rng))
}

/// Composes `steps` neighborhood moves.
pub fn propagate<R: Rng>(
    instance: &Instance,
    solution: &Solution,
    steps: usize,
    rng: &mut R,
) -> Result<Solution, SolveError> {
    let mut current = solution.clone();
    for _ in 0..steps {
        current = neighbor(instance, &current, rng)?;
    }
    Ok(current)
}

/// Pulls a stagnant solution toward the best: each pair is independently
/// replaced by the best solution's pair with probability one half.
pub fn refract<R: Rng>(solution: &Solution, best: &Solution, rng: &mut R) -> Solution {
    let choices = solution
        .choices()
        .iter()
        .zip(best.choices())
        .map(|(&own, &from_best)| if rng.random_bool(0.5) { from_best } else { own })
        .collect();
    Solution::new(choices)
}

/// Intensifies a newly improved best solution: for each program whose bundle
/// index exceeds 1, evaluates the variant using the next-higher-priority
/// bundle, and returns the best such candidate when it beats the input.
pub fn break_wave(
    instance: &Instance,
    best: &Solution,
) -> Result<Option<(Solution, FitnessDecomposition)>, ModelError> {
    let evaluator = Evaluator::new(instance)?;
    let base = evaluator.fitness(best)?;
    break_wave_with(&evaluator, best, base, usize::MAX, &mut 0)
}

fn break_wave_with(
    evaluator: &Evaluator,
    best: &Solution,
    base: FitnessDecomposition,
    budget: usize,
    evaluations: &mut usize,
) -> Result<Option<(Solution, FitnessDecomposition)>, ModelError> {
    let mut champion: Option<(Solution, FitnessDecomposition)> = None;
    for (j, &choice) in best.choices().iter().enumerate() {
        if let Choice::Substitute { position, bundle } = choice {
            if bundle <= 1 || *evaluations >= budget {
                continue;
            }
            let mut candidate = best.clone();
            candidate.set(
                j,
                Choice::Substitute {
                    position,
                    bundle: bundle - 1,
                },
            );
            let decomposition = evaluator.fitness(&candidate)?;
            *evaluations += 1;
            if champion
                .as_ref()
                .is_none_or(|(_, c)| decomposition.fitness > c.fitness)
            {
                champion = Some((candidate, decomposition));
            }
        }
    }
    Ok(champion.filter(|(_, c)| c.fitness > base.fitness))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenerationTrace {
    pub generation: usize,
    pub best_objective: f64,
    pub best_violations: Violations,
    pub best_fitness: f64,
}

#[derive(Debug, Clone)]
pub struct WwoOutcome {
    pub best: Solution,
    pub decomposition: FitnessDecomposition,
    pub trace: Vec<GenerationTrace>,
    pub evaluations: usize,
}

impl WwoOutcome {
    pub fn is_feasible(&self) -> bool {
        self.decomposition.is_feasible()
    }
}

#[derive(Clone)]
struct Wave {
    solution: Solution,
    decomposition: FitnessDecomposition,
}

fn trace_row(generation: usize, best: &Wave) -> GenerationTrace {
    GenerationTrace {
        generation,
        best_objective: best.decomposition.objective,
        best_violations: best.decomposition.violations,
        best_fitness: best.decomposition.fitness,
    }
}

/// Runs the full solver. All randomness flows from `config.seed`; the
/// sequence of accepted solutions is reproducible bit for bit.
pub fn run_wwo(instance: &Instance, config: &WwoConfig) -> Result<WwoOutcome, SolveError> {
    config.validate()?;
    let evaluator = Evaluator::new(instance)?;
    let programs = evaluator.program_count();
    let movable: Vec<usize> = (0..programs)
        .filter(|&j| !evaluator.moves()[j].is_empty())
        .collect();

    // Nothing to optimize: report the unchanged programs as they stand.
    if movable.is_empty() {
        let best = Solution::all_keep(programs);
        let decomposition = evaluator.fitness(&best)?;
        return Ok(WwoOutcome {
            best,
            decomposition,
            trace: Vec::new(),
            evaluations: 1,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut evaluations = 0usize;
    let mut population: Vec<Wave> = Vec::with_capacity(config.population);
    for wave in 0..config.population {
        let mut solution = Solution::all_keep(programs);
        // The first wave is the identity: moves only ever set substitution
        // pairs, so the unchanged solution must enter through seeding.
        for &j in &movable {
            if wave == 0 {
                break;
            }
            if !rng.random_bool(0.5) {
                // Uniform over the program's valid (position, bundle) pairs.
                let total: usize = evaluator.moves()[j].iter().map(|&(_, b)| b).sum();
                let mut pick = rng.random_range(0..total);
                for &(position, bundles) in &evaluator.moves()[j] {
                    if pick < bundles {
                        solution.set(
                            j,
                            Choice::Substitute {
                                position,
                                bundle: pick + 1,
                            },
                        );
                        break;
                    }
                    pick -= bundles;
                }
            }
        }
        let decomposition = evaluator.fitness(&solution)?;
        evaluations += 1;
        population.push(Wave {
            solution,
            decomposition,
        });
    }

    let mut best = population
        .iter()
        .max_by(|a, b| {
            a.decomposition
                .fitness
                .partial_cmp(&b.decomposition.fitness)
                .expect("fitness is finite")
        })
        .expect("population non-empty")
        .clone();
    let mut stagnant = vec![0usize; config.population];
    let mut trace = vec![trace_row(0, &best)];
    let mut generation = 0;

    'generations: while evaluations < config.budget {
        generation += 1;
        let mut order: Vec<usize> = (0..config.population).collect();
        order.sort_by(|&a, &b| {
            population[b]
                .decomposition
                .fitness
                .partial_cmp(&population[a].decomposition.fitness)
                .expect("fitness is finite")
        });

        for (rank0, &idx) in order.iter().enumerate() {
            if evaluations >= config.budget {
                break 'generations;
            }
            let steps = wavelength(rank0 + 1, config.population, programs);
            let mut candidate = population[idx].solution.clone();
            for _ in 0..steps {
                candidate = neighbor_move(evaluator.moves(), &movable, &candidate, &mut rng);
            }
            let decomposition = evaluator.fitness(&candidate)?;
            evaluations += 1;

            if decomposition.fitness > population[idx].decomposition.fitness {
                population[idx] = Wave {
                    solution: candidate,
                    decomposition,
                };
                stagnant[idx] = 0;
                if decomposition.fitness > best.decomposition.fitness {
                    best = population[idx].clone();
                    if let Some((solution, decomposition)) = break_wave_with(
                        &evaluator,
                        &best.solution,
                        best.decomposition,
                        config.budget,
                        &mut evaluations,
                    )? {
                        best = Wave {
                            solution,
                            decomposition,
                        };
                        population[idx] = best.clone();
                    }
                }
            } else {
                stagnant[idx] += 1;
                if stagnant[idx] >= config.stagnation {
                    if evaluations >= config.budget {
                        break 'generations;
                    }
                    let refracted = refract(&population[idx].solution, &best.solution, &mut rng);
                    let decomposition = evaluator.fitness(&refracted)?;
                    evaluations += 1;
                    population[idx] = Wave {
                        solution: refracted,
                        decomposition,
                    };
                    stagnant[idx] = 0;
                    if decomposition.fitness > best.decomposition.fitness {
                        best = population[idx].clone();
                    }
                }
            }
        }
        trace.push(trace_row(generation, &best));
    }

    Ok(WwoOutcome {
        best: best.solution,
        decomposition: best.decomposition,
        trace,
        evaluations,
    })
}
