//! Ecogeography-based optimization of initial cluster centroids.
//!
//! Each solution is a real genome of length `c * D * 2` encoding `c`
//! candidate centroids as (mu, nu) pairs in [0, 1]. Fitness is the clustering
//! objective obtained by running the fuzzy c-means scheme from the decoded
//! centroids, so lower is better. Solutions exchange genome components
//! through local migration (toward a neighbor) and global migration (mixing
//! a neighbor and a non-neighbor), with the global share growing linearly
//! over the generations. A random neighborhood topology is redrawn whenever
//! the best solution stagnates.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::clustering::{run_pfcm, ClusterModel, ClusteringError, PfcmConfig};
use crate::pfs::{FeatureVector, Pfn};

/// Objective recorded for a genome whose clustering run collapsed
/// (degenerate cluster). Any successful run scores below 1, so this value
/// acts as "worst possible" while keeping the migration rates finite.
const FAILED_OBJECTIVE: f64 = 1e6;

#[derive(Debug, Error)]
pub enum EboError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("need at least {clusters} points to seed {clusters} centroids, got {points}")]
    TooFewPoints { points: usize, clusters: usize },
    #[error(transparent)]
    Clustering(#[from] ClusteringError),
}

#[derive(Debug, Clone)]
pub struct EboConfig {
    /// Population size, at least 3.
    pub population: usize,
    /// Lower bound of the global-migration probability schedule.
    pub eta_min: f64,
    /// Upper bound of the global-migration probability schedule.
    pub eta_max: f64,
    /// Generation cap; also the denominator of the eta schedule.
    pub generations: usize,
    /// Neighbors assigned to each solution (1 <= neighbors < population).
    pub neighbors: usize,
    /// Generations without a new best before the topology is redrawn.
    pub stagnation: usize,
    /// Small positive epsilon keeping the migration rates away from 0/0.
    pub epsilon_rate: f64,
    /// Optional cap on clustering evaluations; the run stops at whichever of
    /// the generation cap and this budget is hit first.
    pub max_evaluations: Option<usize>,
}

impl Default for EboConfig {
    fn default() -> Self {
        Self {
            population: 20,
            eta_min: 0.1,
            eta_max: 0.7,
            generations: 50,
            neighbors: 3,
            stagnation: 5,
            epsilon_rate: 1e-9,
            max_evaluations: None,
        }
    }
}

impl EboConfig {
    pub fn validate(&self) -> Result<(), EboError> {
        if self.population < 3 {
            return Err(EboError::InvalidConfig(format!(
                "population must be >= 3, got {}",
                self.population
            )));
        }
        if !(0.0..=1.0).contains(&self.eta_min)
            || !(0.0..=1.0).contains(&self.eta_max)
            || self.eta_min > self.eta_max
        {
            return Err(EboError::InvalidConfig(format!(
                "eta bounds must satisfy 0 <= eta_min <= eta_max <= 1, got [{}, {}]",
                self.eta_min, self.eta_max
            )));
        }
        if self.neighbors == 0 || self.neighbors >= self.population {
            return Err(EboError::InvalidConfig(format!(
                "neighbors must satisfy 1 <= neighbors < population, got {}",
                self.neighbors
            )));
        }
        if self.stagnation == 0 {
            return Err(EboError::InvalidConfig("stagnation must be >= 1".into()));
        }
        if self.epsilon_rate.is_nan() || self.epsilon_rate <= 0.0 {
            return Err(EboError::InvalidConfig(format!(
                "epsilon_rate must be > 0, got {}",
                self.epsilon_rate
            )));
        }
        if let Some(budget) = self.max_evaluations {
            if budget < self.population {
                return Err(EboError::InvalidConfig(format!(
                    "evaluation budget {budget} cannot cover the initial population of {}",
                    self.population
                )));
            }
        }
        Ok(())
    }
}

/// Emigration/immigration rates per solution. Better (lower) objectives get
/// higher emigration and lower immigration; all rates land in (0, 1].
pub fn migration_rates(objectives: &[f64], epsilon_rate: f64) -> Vec<(f64, f64)> {
    let j_max = objectives.iter().cloned().fold(f64::MIN, f64::max);
    let j_min = objectives.iter().cloned().fold(f64::MAX, f64::min);
    let denom = j_max - j_min + epsilon_rate;
    objectives
        .iter()
        .map(|&j| {
            let emigration = (j_max - j + epsilon_rate) / denom;
            let immigration = (j - j_min + epsilon_rate) / denom;
            (emigration, immigration)
        })
        .collect()
}

/// Moves one component toward a neighbor's: `x + r (x_dag - x)`.
pub fn local_migration(component: f64, neighbor: f64, r: f64) -> f64 {
    component + r * (neighbor - component)
}

/// Mixes a neighbor and a non-neighbor into one component. The fitter of the
/// two (ties favor the non-neighbor) anchors the move.
pub fn global_migration(
    component: f64,
    neighbor: f64,
    outsider: f64,
    neighbor_objective: f64,
    outsider_objective: f64,
    r: f64,
) -> f64 {
    if outsider_objective <= neighbor_objective {
        neighbor + r * (outsider - component)
    } else {
        outsider + r * (neighbor - component)
    }
}

/// Linear ramp of the global-migration probability over the generations.
pub fn eta_schedule(generation: usize, config: &EboConfig) -> f64 {
    debug_assert!(generation <= config.generations);
    if config.generations == 0 {
        return config.eta_min;
    }
    let frac = generation as f64 / config.generations as f64;
    config.eta_min + frac * (config.eta_max - config.eta_min)
}

/// Draws a fresh topology: each solution gets exactly `neighbors` distinct
/// neighbors, never including itself.
pub fn random_topology<R: Rng>(population: usize, neighbors: usize, rng: &mut R) -> Vec<Vec<usize>> {
    (0..population)
        .map(|own| {
            let picks = rand::seq::index::sample(rng, population - 1, neighbors);
            picks
                .into_iter()
                .map(|i| if i >= own { i + 1 } else { i })
                .collect()
        })
        .collect()
}

struct Genome(Vec<f64>);

impl Genome {
    fn decode(&self, clusters: usize, dims: usize) -> Vec<FeatureVector> {
        (0..clusters)
            .map(|c| {
                let entries = (0..dims)
                    .map(|d| {
                        let at = (c * dims + d) * 2;
                        Pfn::new(self.0[at], self.0[at + 1]).expect("repaired genome is valid")
                    })
                    .collect();
                FeatureVector::new(entries)
            })
            .collect()
    }
}

/// Clamps entries to [0, 1] and radially rescales any (mu, nu) pair that
/// escapes the unit circle.
fn repair(genome: &mut [f64]) {
    for v in genome.iter_mut() {
        *v = v.clamp(0.0, 1.0);
    }
    for pair in genome.chunks_exact_mut(2) {
        let norm_sq = pair[0] * pair[0] + pair[1] * pair[1];
        if norm_sq > 1.0 {
            let scale = norm_sq.sqrt();
            pair[0] /= scale;
            pair[1] /= scale;
        }
    }
}

/// Roulette pick from `candidates`, weighting index `i` by `weights[i]`.
fn roulette<R: Rng>(candidates: &[usize], weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = candidates.iter().map(|&i| weights[i]).sum();
    let mut ticket = rng.random::<f64>() * total;
    for &i in candidates {
        ticket -= weights[i];
        if ticket <= 0.0 {
            return i;
        }
    }
    *candidates.last().expect("candidates non-empty")
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationBest {
    pub generation: usize,
    pub best_objective: f64,
}

#[derive(Debug)]
pub struct EboOutcome {
    /// Clustering result of the best genome found.
    pub model: ClusterModel,
    /// Clustering evaluations actually spent.
    pub evaluations: usize,
    /// Best objective after the initial population and after each generation.
    pub trace: Vec<GenerationBest>,
}

fn evaluate(
    genome: &Genome,
    points: &[FeatureVector],
    pfcm: &PfcmConfig,
    dims: usize,
) -> Result<(f64, Option<ClusterModel>), EboError> {
    let centroids = genome.decode(pfcm.clusters, dims);
    match run_pfcm(points, pfcm, &centroids) {
        Ok(model) => Ok((model.objective, Some(model))),
        Err(ClusteringError::DegenerateCluster { .. }) => Ok((FAILED_OBJECTIVE, None)),
        Err(e) => Err(e.into()),
    }
}

/// Evolves initial centroid sets and returns the clustering of the best one.
///
/// All randomness flows from `seed`; two runs with identical inputs produce
/// identical outcomes.
pub fn run_ebo(
    points: &[FeatureVector],
    pfcm: &PfcmConfig,
    config: &EboConfig,
    seed: u64,
) -> Result<EboOutcome, EboError> {
    pfcm.validate()?;
    config.validate()?;
    if points.is_empty() {
        return Err(ClusteringError::NoPoints.into());
    }
    if points.len() < pfcm.clusters {
        return Err(EboError::TooFewPoints {
            points: points.len(),
            clusters: pfcm.clusters,
        });
    }
    let dims = points[0].len();
    let genome_len = pfcm.clusters * dims * 2;
    let budget = config.max_evaluations.unwrap_or(usize::MAX);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Seed genomes from sampled data points, plus one uniform-random genome
    // to keep some diversity off the data manifold.
    let mut population: Vec<Genome> = Vec::with_capacity(config.population);
    for p in 0..config.population {
        let mut genes = Vec::with_capacity(genome_len);
        if p + 1 == config.population {
            for _ in 0..genome_len {
                genes.push(rng.random::<f64>());
            }
        } else {
            let picks = rand::seq::index::sample(&mut rng, points.len(), pfcm.clusters);
            for idx in picks {
                for value in points[idx].values() {
                    genes.push(value.mu());
                    genes.push(value.nu());
                }
            }
        }
        repair(&mut genes);
        population.push(Genome(genes));
    }

    let mut evaluations = 0;
    let mut objectives = Vec::with_capacity(config.population);
    let mut best_objective = f64::INFINITY;
    let mut best_model: Option<ClusterModel> = None;
    for genome in &population {
        let (j, model) = evaluate(genome, points, pfcm, dims)?;
        evaluations += 1;
        if j < best_objective {
            best_objective = j;
            best_model = model;
        }
        objectives.push(j);
    }

    let mut trace = vec![GenerationBest {
        generation: 0,
        best_objective,
    }];
    let mut topology = random_topology(config.population, config.neighbors, &mut rng);
    let mut stagnant = 0usize;

    'evolution: for generation in 1..=config.generations {
        if evaluations >= budget {
            break;
        }
        let eta = eta_schedule(generation - 1, config);
        let rates = migration_rates(&objectives, config.epsilon_rate);
        let emigration: Vec<f64> = rates.iter().map(|r| r.0).collect();
        let mut improved_best = false;

        for idx in 0..config.population {
            let immigration = rates[idx].1;
            let mut candidate = population[idx].0.clone();
            let mut changed = false;
            for (d, slot) in candidate.iter_mut().enumerate() {
                if rng.random::<f64>() >= immigration {
                    continue;
                }
                let neighbor = roulette(&topology[idx], &emigration, &mut rng);
                let outsiders: Vec<usize> = (0..config.population)
                    .filter(|&i| i != idx && !topology[idx].contains(&i))
                    .collect();
                let original = population[idx].0[d];
                let r = rng.random::<f64>();
                *slot = if rng.random::<f64>() < eta && !outsiders.is_empty() {
                    let outsider = roulette(&outsiders, &emigration, &mut rng);
                    global_migration(
                        original,
                        population[neighbor].0[d],
                        population[outsider].0[d],
                        objectives[neighbor],
                        objectives[outsider],
                        r,
                    )
                } else {
                    local_migration(original, population[neighbor].0[d], r)
                };
                changed = true;
            }
            if !changed {
                continue;
            }
            repair(&mut candidate);
            if evaluations >= budget {
                break 'evolution;
            }
            let genome = Genome(candidate);
            let (j, model) = evaluate(&genome, points, pfcm, dims)?;
            evaluations += 1;
            if j < objectives[idx] {
                population[idx] = genome;
                objectives[idx] = j;
                if j < best_objective {
                    best_objective = j;
                    best_model = model;
                    improved_best = true;
                }
            }
        }

        trace.push(GenerationBest {
            generation,
            best_objective,
        });
        if improved_best {
            stagnant = 0;
        } else {
            stagnant += 1;
            if stagnant >= config.stagnation {
                topology = random_topology(config.population, config.neighbors, &mut rng);
                stagnant = 0;
            }
        }
    }

    let model = best_model.ok_or_else(|| {
        EboError::InvalidConfig("every seeded genome produced a degenerate clustering".into())
    })?;
    Ok(EboOutcome {
        model,
        evaluations,
        trace,
    })
}
