//! `prevopt` — clustering and prevention-program optimization from the
//! command line.
//!
//! Subcommands: `gen` (synthetic instances), `cluster` (resident grouping),
//! `optimize` (one solver run), `verify` (oracle checks), `round` (the
//! interactive optimize/review/close protocol), and `report` (seed batches
//! and round summaries). Every stochastic subcommand takes an explicit
//! `--seed` and writes byte-identical outputs across repeated runs.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use prevopt_core::clustering::{run_pfcm, CentroidWeighting, PfcmConfig};
use prevopt_core::ebo::{run_ebo, EboConfig, GenerationBest};
use prevopt_core::generator::{generate_instance, GeneratorSpec};
use prevopt_core::ingest::ingest_residents;
use prevopt_core::oracle::{enumerate_optimum, solution_space_size, EnumerationBudget};
use prevopt_core::program::{Instance, SolutionFile};
use prevopt_core::report::{
    seed_batch, summarize, to_pretty_json, write_ebo_trace, write_runs_csv, write_wwo_trace,
    ClusterModelFile, FinalPrograms, SolveResultFile,
};
use prevopt_core::rounds::{
    close_round, run_round, InventoryUpdate, ReviewBundle, RoundOutcome, RoundState,
};
use prevopt_core::wwo::{run_wwo, WwoConfig};
use prevopt_core::{format, oracle};

#[derive(Parser)]
#[command(
    name = "prevopt",
    version,
    about = "Fuzzy clustering and prevention-program optimization"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct SolverArgs {
    /// Wave population size.
    #[arg(long, default_value_t = 10)]
    population: usize,
    /// Generations without improvement before a wave refracts.
    #[arg(long, default_value_t = 5)]
    stagnation: usize,
    /// Total fitness evaluations.
    #[arg(long, default_value_t = 10_000)]
    budget: usize,
}

impl SolverArgs {
    fn config(&self, seed: u64) -> WwoConfig {
        WwoConfig {
            population: self.population,
            stagnation: self.stagnation,
            budget: self.budget,
            seed,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic problem instance.
    Gen {
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 3)]
        communities: usize,
        #[arg(long, default_value_t = 6)]
        programs: usize,
        #[arg(long, default_value_t = 10)]
        drugs: usize,
        #[arg(long, default_value_t = 2)]
        shared: usize,
        #[arg(long = "non-shared", default_value_t = 2)]
        non_shared: usize,
        /// Substitution bundles per replaceable drug.
        #[arg(long, default_value_t = 3)]
        alternatives: usize,
        /// Availability relative to base demand; below 1 forces substitution.
        #[arg(long, default_value_t = 0.8)]
        tightness: f64,
        #[arg(long)]
        out: PathBuf,
        /// Optional metadata sidecar (planted solution, space size).
        #[arg(long)]
        meta: Option<PathBuf>,
    },
    /// Cluster residents from a CSV file.
    Cluster {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        clusters: usize,
        #[arg(long)]
        seed: u64,
        /// `ebo` evolves the initial centroids; `random` samples them once.
        #[arg(long, default_value = "ebo")]
        method: String,
        #[arg(long, default_value_t = 2.0)]
        fuzzifier: f64,
        #[arg(long, default_value_t = 1e-6)]
        epsilon: f64,
        #[arg(long, default_value_t = 200)]
        max_iters: usize,
        /// Weight centroid updates by raw memberships instead of u^m.
        #[arg(long)]
        literal_centroids: bool,
        #[arg(long, default_value_t = 20)]
        population: usize,
        #[arg(long, default_value_t = 3)]
        neighbors: usize,
        #[arg(long, default_value_t = 50)]
        generations: usize,
        #[arg(long, default_value_t = 5)]
        stagnation: usize,
        #[arg(long, default_value_t = 0.1)]
        eta_min: f64,
        #[arg(long, default_value_t = 0.7)]
        eta_max: f64,
        #[arg(long, default_value_t = 1e-9)]
        epsilon_rate: f64,
        /// Cap on clustering evaluations.
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Per-generation best-objective trace CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Solve one instance and write the best solution found.
    Optimize {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long)]
        out: PathBuf,
        /// Per-generation best-fitness trace CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Recompute fitness independently and, when it fits the budget,
    /// enumerate the exact optimum.
    Verify {
        #[arg(long)]
        instance: PathBuf,
        /// Solution file to check (bare pairs or a solver result).
        #[arg(long)]
        solution: Option<PathBuf>,
        /// Walk the entire solution space.
        #[arg(long)]
        enumerate: bool,
        #[arg(long, default_value_t = 1_000_000)]
        max_space: u64,
    },
    /// The interactive optimize / review / close protocol.
    Round {
        #[command(subcommand)]
        action: RoundAction,
    },
    /// Seed batches and round summaries for an opened round directory.
    Report {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        seed: u64,
        /// Solver runs in the batch.
        #[arg(long, default_value_t = 30)]
        seeds: u64,
        #[command(flatten)]
        solver: SolverArgs,
    },
}

#[derive(Subcommand)]
enum RoundAction {
    /// Start round 1 from an instance file.
    Open {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        dir: PathBuf,
        /// Availability overlay applied before the round starts.
        #[arg(long)]
        inventory_update: Option<PathBuf>,
    },
    /// Solve the current round and write its review bundle.
    Run {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long)]
        seed: u64,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Close the current round from its reviewed bundle.
    Close {
        #[arg(long)]
        dir: PathBuf,
        /// Approve every pending program (scripted review).
        #[arg(long)]
        auto_approve: bool,
    },
    /// Show round number, history, and finalization state.
    Status {
        #[arg(long)]
        dir: PathBuf,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Gen {
            seed,
            communities,
            programs,
            drugs,
            shared,
            non_shared,
            alternatives,
            tightness,
            out,
            meta,
        } => {
            let spec = GeneratorSpec {
                communities,
                programs,
                drugs,
                shared_resources: shared,
                non_shared_resources: non_shared,
                alternatives,
                tightness,
                seed,
            };
            let generated = generate_instance(&spec)?;
            std::fs::write(&out, generated.instance.to_json_pretty())
                .with_context(|| format!("writing {}", out.display()))?;
            let space = solution_space_size(&generated.instance);
            if let Some(meta_path) = meta {
                let meta_doc = serde_json::json!({
                    "format_version": format::FORMAT_VERSION,
                    "seed": seed,
                    "tightness": tightness,
                    "feasible_guaranteed": generated.feasible_guaranteed,
                    "planted": generated.planted,
                    "solution_space": space.to_string(),
                });
                write_json_value(&meta_path, &meta_doc)?;
            }
            println!(
                "wrote {} ({} programs, {} drugs, solution space {})",
                out.display(),
                generated.instance.programs.len(),
                generated.instance.drugs.len(),
                space
            );
        }

        Command::Cluster {
            data,
            schema,
            clusters,
            seed,
            method,
            fuzzifier,
            epsilon,
            max_iters,
            literal_centroids,
            population,
            neighbors,
            generations,
            stagnation,
            eta_min,
            eta_max,
            epsilon_rate,
            budget,
            out,
            trace,
        } => {
            let (points, report) = ingest_residents(&data, &schema)
                .with_context(|| format!("ingesting {}", data.display()))?;
            println!(
                "ingested {} residents, {} features, missing rate {:.4}",
                report.rows,
                report.missing_rates.len(),
                report.overall_missing_rate()
            );
            let pfcm = PfcmConfig {
                clusters,
                fuzzifier,
                epsilon,
                max_iters,
                weighting: if literal_centroids {
                    CentroidWeighting::Literal
                } else {
                    CentroidWeighting::Fuzzified
                },
            };
            let (model, ebo_trace) = match method.as_str() {
                "ebo" => {
                    let config = EboConfig {
                        population,
                        neighbors,
                        generations,
                        stagnation,
                        eta_min,
                        eta_max,
                        epsilon_rate,
                        max_evaluations: budget,
                    };
                    let outcome = run_ebo(&points, &pfcm, &config, seed)?;
                    println!(
                        "ebo finished: objective {:.6}, {} clustering evaluations",
                        outcome.model.objective, outcome.evaluations
                    );
                    (outcome.model, outcome.trace)
                }
                "random" => {
                    use rand::SeedableRng;
                    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
                    if points.len() < clusters {
                        bail!("need at least {clusters} residents to seed {clusters} centroids");
                    }
                    let picks = rand::seq::index::sample(&mut rng, points.len(), clusters);
                    let init: Vec<_> = picks.into_iter().map(|i| points[i].clone()).collect();
                    let model = run_pfcm(&points, &pfcm, &init)?;
                    println!(
                        "pfcm finished: objective {:.6}, {} iterations",
                        model.objective, model.iterations
                    );
                    let trace = model
                        .objective_history
                        .iter()
                        .enumerate()
                        .map(|(i, &j)| GenerationBest {
                            generation: i,
                            best_objective: j,
                        })
                        .collect();
                    (model, trace)
                }
                other => bail!("unknown clustering method `{other}` (use `ebo` or `random`)"),
            };
            std::fs::write(&out, to_pretty_json(&ClusterModelFile::from(&model)))
                .with_context(|| format!("writing {}", out.display()))?;
            if let Some(trace_path) = trace {
                let mut buffer = Vec::new();
                write_ebo_trace(&ebo_trace, &mut buffer)?;
                std::fs::write(&trace_path, buffer)
                    .with_context(|| format!("writing {}", trace_path.display()))?;
            }
            println!("wrote {}", out.display());
        }

        Command::Optimize {
            instance,
            seed,
            solver,
            out,
            trace,
        } => {
            let instance = Instance::load(&instance)
                .with_context(|| format!("loading {}", instance.display()))?;
            let outcome = run_wwo(&instance, &solver.config(seed))?;
            std::fs::write(&out, to_pretty_json(&SolveResultFile::from(&outcome)))
                .with_context(|| format!("writing {}", out.display()))?;
            if let Some(trace_path) = trace {
                let mut buffer = Vec::new();
                write_wwo_trace(&outcome.trace, &mut buffer)?;
                std::fs::write(&trace_path, buffer)
                    .with_context(|| format!("writing {}", trace_path.display()))?;
            }
            println!(
                "best objective {:.6}, violations {:.6}, feasible {}, {} evaluations",
                outcome.decomposition.objective,
                outcome.decomposition.violations.total(),
                outcome.is_feasible(),
                outcome.evaluations
            );
            println!("wrote {}", out.display());
        }

        Command::Verify {
            instance,
            solution,
            enumerate,
            max_space,
        } => {
            let instance = Instance::load(&instance)
                .with_context(|| format!("loading {}", instance.display()))?;
            if let Some(solution_path) = solution {
                let text = std::fs::read_to_string(&solution_path)
                    .with_context(|| format!("reading {}", solution_path.display()))?;
                let file: SolutionFile = serde_json::from_str(&text)
                    .with_context(|| format!("parsing {}", solution_path.display()))?;
                format::check_format_version(file.format_version)?;
                file.pairs.validate(&instance)?;
                let decomposition = oracle::recompute_fitness(&instance, &file.pairs)?;
                println!(
                    "recomputed: objective {:.9}, v_drugs {:.9}, v_shared {:.9}, v_non_shared {:.9}, feasible {}",
                    decomposition.objective,
                    decomposition.violations.drugs,
                    decomposition.violations.shared,
                    decomposition.violations.non_shared,
                    decomposition.is_feasible()
                );
                // Solver results embed their own decomposition; cross-check.
                if let Ok(result) = serde_json::from_str::<SolveResultFile>(&text) {
                    let matches = (result.objective - decomposition.objective).abs() <= 1e-12
                        && (result.violations.total() - decomposition.violations.total()).abs()
                            <= 1e-12;
                    println!("embedded decomposition matches: {matches}");
                }
            }
            if enumerate {
                let space = solution_space_size(&instance);
                if space > max_space as u128 {
                    println!(
                        "solution space {space} exceeds --max-space {max_space}; skipping enumeration"
                    );
                } else {
                    let best = enumerate_optimum(&instance, EnumerationBudget(max_space))?;
                    println!(
                        "enumerated {} solutions: optimum objective {:.9}, feasible {}, solution {}",
                        best.space,
                        best.objective,
                        best.feasible,
                        serde_json::to_string(&best.solution)?
                    );
                }
            }
        }

        Command::Round { action } => round_command(action)?,

        Command::Report {
            dir,
            out_dir,
            seed,
            seeds,
            solver,
        } => {
            let state = load_state(&dir)?;
            std::fs::create_dir_all(&out_dir)?;
            let rows = seed_batch(&state.instance, state.round, &solver.config(seed), seed, seeds)?;
            let mut buffer = Vec::new();
            write_runs_csv(&rows, &mut buffer)?;
            let runs_path = out_dir.join("runs.csv");
            std::fs::write(&runs_path, buffer)?;
            let summary = summarize(&state, &rows);
            let summary_path = out_dir.join("summary.json");
            std::fs::write(&summary_path, to_pretty_json(&summary))?;
            let final_src = dir.join("final-programs.json");
            if final_src.exists() {
                std::fs::copy(&final_src, out_dir.join("final-programs.json"))?;
            }
            let feasible = rows.iter().filter(|r| r.feasible).count();
            println!(
                "batch of {} runs on round {}: {}/{} feasible",
                rows.len(),
                state.round,
                feasible,
                rows.len()
            );
            println!("wrote {} and {}", runs_path.display(), summary_path.display());
        }
    }
    Ok(())
}

fn state_path(dir: &Path) -> PathBuf {
    dir.join("state.json")
}

fn bundle_path(dir: &Path, round: u32) -> PathBuf {
    dir.join(format!("bundle-{round}.json"))
}

fn load_state(dir: &Path) -> Result<RoundState> {
    let path = state_path(dir);
    let text =
        std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    Ok(RoundState::from_json(&text)?)
}

fn save_state(dir: &Path, state: &RoundState) -> Result<()> {
    std::fs::write(state_path(dir), state.to_json_pretty())?;
    Ok(())
}

fn round_command(action: RoundAction) -> Result<()> {
    match action {
        RoundAction::Open {
            instance,
            dir,
            inventory_update,
        } => {
            if state_path(&dir).exists() {
                bail!("{} already holds a round state", dir.display());
            }
            std::fs::create_dir_all(&dir)?;
            let instance = Instance::load(&instance)
                .with_context(|| format!("loading {}", instance.display()))?;
            let mut state = RoundState::open(instance)?;
            if let Some(update_path) = inventory_update {
                let text = std::fs::read_to_string(&update_path)
                    .with_context(|| format!("reading {}", update_path.display()))?;
                state.apply_inventory_update(&InventoryUpdate::from_json(&text)?)?;
            }
            save_state(&dir, &state)?;
            println!("opened round 1 in {}", dir.display());
        }
        RoundAction::Run { dir, seed, solver } => {
            let state = load_state(&dir)?;
            let (bundle, outcome) = run_round(&state, &solver.config(seed))?;
            let path = bundle_path(&dir, state.round);
            std::fs::write(&path, bundle.to_json_pretty())?;
            println!(
                "round {}: objective {:.6}, feasible {}, {} evaluations",
                state.round,
                bundle.objective,
                outcome.is_feasible(),
                outcome.evaluations
            );
            println!(
                "wrote {}; review its programs, then close the round",
                path.display()
            );
        }
        RoundAction::Close { dir, auto_approve } => {
            let mut state = load_state(&dir)?;
            let path = bundle_path(&dir, state.round);
            let text = std::fs::read_to_string(&path)
                .with_context(|| format!("reading {}", path.display()))?;
            let mut bundle = ReviewBundle::from_json(&text)?;
            if auto_approve {
                bundle.approve_all_pending();
            }
            match close_round(&state, &bundle)? {
                RoundOutcome::Final { programs, record } => {
                    state.history.push(record);
                    state.finalized = true;
                    save_state(&dir, &state)?;
                    let final_path = dir.join("final-programs.json");
                    std::fs::write(&final_path, to_pretty_json(&FinalPrograms::new(programs)))?;
                    println!(
                        "round {} closed: final program set written to {}",
                        state.round,
                        final_path.display()
                    );
                }
                RoundOutcome::Reopened(next) => {
                    println!(
                        "round {} closed with unmet constraints: opening round {}",
                        state.round, next.round
                    );
                    save_state(&dir, &next)?;
                }
            }
        }
        RoundAction::Status { dir } => {
            let state = load_state(&dir)?;
            println!("round {}, finalized {}", state.round, state.finalized);
            for record in &state.history {
                println!(
                    "  round {}: objective {:.6}, feasible {}, approved {}, modified {}, {} evaluations",
                    record.round,
                    record.objective,
                    record.feasible,
                    record.approved,
                    record.modified,
                    record.evaluations
                );
            }
        }
    }
    Ok(())
}

fn write_json_value(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
