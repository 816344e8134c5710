//! Acceptance suite: one test per release criterion, each printing a
//! PASS line with its measured numbers (run with `-- --nocapture` to see
//! them on success).

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use prevopt_core::clustering::{run_pfcm, PfcmConfig};
use prevopt_core::dataset::{four_clouds, synthetic_residents_csv, two_clouds};
use prevopt_core::ebo::{run_ebo, EboConfig};
use prevopt_core::generator::{generate_instance, GeneratorSpec};
use prevopt_core::oracle::{enumerate_optimum, solution_space_size, EnumerationBudget};
use prevopt_core::pfs::{pfn_distance, FeatureSchema, Pfn};
use prevopt_core::program::{check_constraints, Choice, Instance, Solution};
use prevopt_core::rounds::{close_round, run_round, RoundOutcome, RoundState};
use prevopt_core::wwo::{run_wwo, wavelength, Evaluator, WwoConfig};
use prevopt_core::{oracle, wwo};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn pass(name: &str, details: &str) {
    println!("acceptance {name}: PASS ({details})");
}

/// Largest objective cost of moving any single program one bundle-index step.
fn one_step_deviation_bound(instance: &Instance) -> f64 {
    let weight_of: std::collections::BTreeMap<_, f64> = instance
        .communities
        .iter()
        .map(|c| (c.id.clone(), c.weight))
        .collect();
    let mut bound: f64 = 0.0;
    for program in &instance.programs {
        let coverage: f64 = program
            .coverage
            .keys()
            .map(|c| weight_of.get(c).copied().unwrap_or(0.0))
            .sum();
        for drug in &program.replaceable {
            let importance = program.prescription[drug].importance;
            bound = bound.max(program.susceptibility * coverage * importance);
        }
    }
    bound
}

#[test]
fn oracle_equivalence() {
    let started = Instant::now();
    let instances = 50;
    let mut exact = 0usize;
    let mut within_one_step = 0usize;
    for i in 0..instances {
        let spec = GeneratorSpec {
            programs: 3 + (i % 3),
            drugs: 6 + (i % 4),
            alternatives: 2 + (i % 2),
            communities: 2 + (i % 3),
            tightness: [0.7, 0.8, 0.9, 1.1, 1.3][i % 5],
            seed: 9000 + i as u64,
            ..GeneratorSpec::default()
        };
        let instance = generate_instance(&spec).unwrap().instance;
        let space = solution_space_size(&instance);
        assert!(space <= 100_000, "instance {i} space {space} over the cap");

        let best = enumerate_optimum(&instance, EnumerationBudget(100_000)).unwrap();
        assert!(best.feasible, "generated instances guarantee feasibility");

        let outcome = run_wwo(
            &instance,
            &WwoConfig {
                population: 30,
                stagnation: 3,
                budget: 100_000,
                seed: 1,
            },
        )
        .unwrap();

        if outcome.is_feasible()
            && (outcome.decomposition.objective - best.objective).abs() <= 1e-12
        {
            exact += 1;
        } else {
            assert!(
                outcome.is_feasible(),
                "instance {i}: solver returned an infeasible best"
            );
            let gap = outcome.decomposition.objective - best.objective;
            let bound = one_step_deviation_bound(&instance);
            assert!(
                gap <= bound + 1e-9,
                "instance {i}: gap {gap} exceeds the one-step deviation bound {bound}"
            );
            within_one_step += 1;
        }
    }
    let elapsed = started.elapsed();
    assert!(
        exact >= 45,
        "only {exact}/{instances} runs matched the enumerated optimum exactly"
    );
    assert!(
        elapsed < Duration::from_secs(60),
        "took {elapsed:?}, limit 60s"
    );
    pass(
        "oracle-equivalence",
        &format!("{exact}/{instances} exact, {within_one_step} within one deviation step, {elapsed:?}"),
    );
}

#[test]
fn differential_fitness() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut checked = 0usize;
    for i in 0..20 {
        let spec = GeneratorSpec {
            programs: 4 + (i % 4),
            tightness: [0.7, 0.9, 1.2][i % 3],
            seed: 500 + i as u64,
            ..GeneratorSpec::default()
        };
        let instance = generate_instance(&spec).unwrap().instance;
        let evaluator = Evaluator::new(&instance).unwrap();
        for _ in 0..50 {
            let mut solution = Solution::all_keep(instance.programs.len());
            for (j, program) in instance.programs.iter().enumerate() {
                let moves = instance.replaceable_positions(program);
                if moves.is_empty() || rng.random_bool(0.4) {
                    continue;
                }
                let (position, bundles) = moves[rng.random_range(0..moves.len())];
                solution.set(
                    j,
                    Choice::Substitute {
                        position,
                        bundle: rng.random_range(1..=bundles),
                    },
                );
            }
            let fast = evaluator.fitness(&solution).unwrap();
            let slow = oracle::recompute_fitness(&instance, &solution).unwrap();
            let serialized = serde_json::to_string(&solution).unwrap();
            for (label, a, b) in [
                ("objective", fast.objective, slow.objective),
                ("v_drugs", fast.violations.drugs, slow.violations.drugs),
                ("v_shared", fast.violations.shared, slow.violations.shared),
                (
                    "v_non_shared",
                    fast.violations.non_shared,
                    slow.violations.non_shared,
                ),
            ] {
                assert!(
                    (a - b).abs() <= 1e-12,
                    "{label} mismatch on instance {i}, solution {serialized}: {a} vs {b}"
                );
            }
            checked += 1;
        }
    }
    let elapsed = started.elapsed();
    assert_eq!(checked, 1000);
    assert!(
        elapsed < Duration::from_secs(10),
        "took {elapsed:?}, limit 10s"
    );
    pass(
        "differential-fitness",
        &format!("{checked} decompositions agreed to 1e-12, {elapsed:?}"),
    );
}

#[test]
fn wavelength_pinning() {
    let started = Instant::now();
    let mut checked = 0usize;
    for population in 2..=50 {
        for programs in 1..=100 {
            let mut last = 0;
            for rank in 1..=population {
                let steps = wavelength(rank, population, programs);
                assert!((1..=programs).contains(&steps));
                if rank == 1 {
                    assert_eq!(steps, 1, "best rank must take one step");
                }
                if rank == population {
                    assert_eq!(steps, programs, "worst rank must take {programs} steps");
                }
                assert!(
                    steps >= last,
                    "wavelength must not shrink as rank worsens (N_P={population}, N={programs})"
                );
                last = steps;
                checked += 1;
            }
        }
    }
    let elapsed = started.elapsed();
    assert!(
        elapsed < Duration::from_secs(1),
        "took {elapsed:?}, limit 1s"
    );
    pass(
        "wavelength-pinning",
        &format!("{checked} (rank, N_P, N) triples pinned, {elapsed:?}"),
    );
}

#[test]
fn pfcm_correctness() {
    let started = Instant::now();
    let mut runs = 0usize;
    for seed in 0..100u64 {
        let (points, clusters) = if seed % 2 == 0 {
            (two_clouds(100, 16, seed), 2)
        } else if seed % 4 == 1 {
            (four_clouds(50, 16, seed), 4)
        } else {
            (four_clouds(50, 16, seed), 8)
        };
        let config = PfcmConfig::new(clusters);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let picks = rand::seq::index::sample(&mut rng, points.len(), clusters);
        let init: Vec<_> = picks.into_iter().map(|i| points[i].clone()).collect();
        let model = match run_pfcm(&points, &config, &init) {
            Ok(model) => model,
            Err(prevopt_core::clustering::ClusteringError::DegenerateCluster { .. }) => continue,
            Err(e) => panic!("seed {seed}: {e}"),
        };

        for j in 0..points.len() {
            let sum: f64 = model.memberships.iter().map(|row| row[j]).sum();
            assert!(
                (sum - 1.0).abs() <= 1e-9,
                "seed {seed}: column {j} sums to {sum}"
            );
        }
        for pair in model.objective_history.windows(2) {
            assert!(
                pair[1] <= pair[0] + 1e-9,
                "seed {seed}: objective rose {} -> {}",
                pair[0],
                pair[1]
            );
        }
        runs += 1;
    }
    let elapsed = started.elapsed();
    assert!(runs >= 95, "too many degenerate runs: only {runs} completed");
    assert!(
        elapsed < Duration::from_secs(30),
        "took {elapsed:?}, limit 30s"
    );
    pass(
        "pfcm-correctness",
        &format!("{runs} seeded runs kept columns normalized and objectives non-increasing, {elapsed:?}"),
    );
}

#[test]
fn ebo_benefit() {
    let started = Instant::now();
    let points = four_clouds(40, 12, 77);
    let pfcm = PfcmConfig::new(4);
    let budget = 40usize;
    let seeds = 10u64;

    let mut evolved = Vec::with_capacity(seeds as usize);
    let mut restarts = Vec::with_capacity(seeds as usize);
    for seed in 0..seeds {
        let config = EboConfig {
            population: 8,
            neighbors: 3,
            generations: 1000,
            max_evaluations: Some(budget),
            ..EboConfig::default()
        };
        let outcome = run_ebo(&points, &pfcm, &config, seed).unwrap();
        assert!(outcome.evaluations <= budget);
        evolved.push(outcome.model.objective);

        // Random-restart baseline: the same number of clustering runs, each
        // seeded by sampling distinct points, keeping the best objective.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut best = f64::INFINITY;
        for _ in 0..budget {
            let picks = rand::seq::index::sample(&mut rng, points.len(), pfcm.clusters);
            let init: Vec<_> = picks.into_iter().map(|i| points[i].clone()).collect();
            if let Ok(model) = run_pfcm(&points, &pfcm, &init) {
                best = best.min(model.objective);
            }
        }
        restarts.push(best);
    }

    let median = |values: &mut Vec<f64>| {
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        (values[values.len() / 2 - 1] + values[values.len() / 2]) / 2.0
    };
    let evolved_median = median(&mut evolved);
    let restart_median = median(&mut restarts);
    let elapsed = started.elapsed();
    assert!(
        evolved_median <= restart_median + 1e-12,
        "evolved median {evolved_median} worse than restart median {restart_median}"
    );
    assert!(
        elapsed < Duration::from_secs(300),
        "took {elapsed:?}, limit 5min"
    );
    pass(
        "ebo-benefit",
        &format!(
            "median J {evolved_median:.6} (evolved) <= {restart_median:.6} (restarts) at {budget} runs/seed, {elapsed:?}"
        ),
    );
}

#[test]
fn fuzzy_metric_suite() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut sample = || {
        let mu = rng.random::<f64>();
        let nu = rng.random::<f64>() * (1.0 - mu * mu).max(0.0).sqrt();
        Pfn::new(mu, nu).unwrap()
    };
    let trials = 100_000usize;
    for _ in 0..trials {
        let (a, b, c) = (sample(), sample(), sample());
        let ab = pfn_distance(a, b);
        let bc = pfn_distance(b, c);
        let ac = pfn_distance(a, c);
        assert_eq!(ab, pfn_distance(b, a), "symmetry");
        assert!((0.0..=1.0).contains(&ab), "range: {ab}");
        assert!(ac <= ab + bc + 1e-9, "triangle: {ac} > {ab} + {bc}");
        let same_squares =
            a.mu() * a.mu() == b.mu() * b.mu() && a.nu() * a.nu() == b.nu() * b.nu();
        assert_eq!(ab == 0.0, same_squares, "identity at the squared level");
    }
    let elapsed = started.elapsed();
    assert!(
        elapsed < Duration::from_secs(5),
        "took {elapsed:?}, limit 5s"
    );
    pass(
        "fuzzy-metric-suite",
        &format!("{trials} random triples held all metric properties, {elapsed:?}"),
    );
}

#[test]
fn round_protocol_end_to_end() {
    let started = Instant::now();
    let generated = generate_instance(&GeneratorSpec {
        tightness: 0.8,
        seed: 424,
        ..GeneratorSpec::default()
    })
    .unwrap();
    let base_report = check_constraints(
        &generated.instance,
        &Solution::all_keep(generated.instance.programs.len()),
    )
    .unwrap();
    assert!(!base_report.is_feasible(), "instance must start infeasible");

    let config = WwoConfig {
        population: 20,
        stagnation: 5,
        budget: 20_000,
        seed: 6,
    };
    let mut state = RoundState::open(generated.instance).unwrap();
    let mut rounds_used = 0;
    let mut final_programs = None;
    for _ in 0..3 {
        rounds_used += 1;
        let (mut bundle, _) = run_round(&state, &config).unwrap();
        bundle.approve_all_pending();
        match close_round(&state, &bundle).unwrap() {
            RoundOutcome::Final { programs, .. } => {
                final_programs = Some(programs);
                break;
            }
            RoundOutcome::Reopened(next) => state = next,
        }
    }
    let programs = final_programs.expect("protocol must settle within three rounds");
    let mut final_instance = state.instance.clone();
    final_instance.programs = programs;
    let report = check_constraints(
        &final_instance,
        &Solution::all_keep(final_instance.programs.len()),
    )
    .unwrap();
    assert!(report.is_feasible(), "final program set must fit inventory");
    let elapsed = started.elapsed();
    assert!(
        elapsed < Duration::from_secs(60),
        "took {elapsed:?}, limit 60s"
    );
    pass(
        "round-protocol",
        &format!("closed in {rounds_used} round(s) with a feasible final set, {elapsed:?}"),
    );
}

// ---------------------------------------------------------------------------
// Determinism of the CLI surface: every subcommand, run twice with the same
// seed, must produce byte-identical outputs.
// ---------------------------------------------------------------------------

fn prevopt(dir: &Path, args: &[&str]) -> String {
    let output = Command::new(env!("CARGO_BIN_EXE_prevopt"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs");
    assert!(
        output.status.success(),
        "prevopt {args:?} failed:\n{}",
        String::from_utf8_lossy(&output.stderr)
    );
    String::from_utf8(output.stdout).expect("utf8 stdout")
}

fn file_bytes(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap_or_else(|e| panic!("reading {name}: {e}"))
}

#[test]
fn cli_determinism() {
    let started = Instant::now();
    let root = tempfile::tempdir().unwrap();
    let schema = FeatureSchema::desk_default();
    std::fs::write(root.path().join("schema.json"), schema.to_json()).unwrap();
    std::fs::write(
        root.path().join("residents.csv"),
        synthetic_residents_csv(&schema, 30, 0.3, 11),
    )
    .unwrap();

    let mut compared = Vec::new();
    for pass_dir in ["a", "b"] {
        let dir = root.path().join(pass_dir);
        std::fs::create_dir(&dir).unwrap();
        std::fs::copy(root.path().join("schema.json"), dir.join("schema.json")).unwrap();
        std::fs::copy(root.path().join("residents.csv"), dir.join("residents.csv")).unwrap();

        prevopt(
            &dir,
            &[
                "gen", "--seed", "12", "--tightness", "0.8", "--out", "instance.json", "--meta",
                "meta.json",
            ],
        );
        prevopt(
            &dir,
            &[
                "cluster",
                "--data",
                "residents.csv",
                "--schema",
                "schema.json",
                "--clusters",
                "2",
                "--seed",
                "4",
                "--population",
                "5",
                "--neighbors",
                "2",
                "--budget",
                "30",
                "--max-iters",
                "50",
                "--out",
                "model.json",
                "--trace",
                "cluster-trace.csv",
            ],
        );
        prevopt(
            &dir,
            &[
                "optimize",
                "--instance",
                "instance.json",
                "--seed",
                "3",
                "--population",
                "8",
                "--budget",
                "3000",
                "--out",
                "result.json",
                "--trace",
                "solve-trace.csv",
            ],
        );
        let verify_stdout = prevopt(
            &dir,
            &[
                "verify",
                "--instance",
                "instance.json",
                "--solution",
                "result.json",
                "--enumerate",
            ],
        );
        std::fs::write(dir.join("verify-stdout.txt"), verify_stdout).unwrap();
        prevopt(
            &dir,
            &[
                "round",
                "open",
                "--instance",
                "instance.json",
                "--dir",
                "rounds",
            ],
        );
        prevopt(
            &dir,
            &[
                "round", "run", "--dir", "rounds", "--seed", "3", "--population", "8", "--budget",
                "3000",
            ],
        );
        prevopt(
            &dir,
            &["round", "close", "--dir", "rounds", "--auto-approve"],
        );
        prevopt(
            &dir,
            &[
                "report",
                "--dir",
                "rounds",
                "--out-dir",
                "report",
                "--seed",
                "100",
                "--seeds",
                "3",
                "--population",
                "8",
                "--budget",
                "1500",
            ],
        );

        compared = vec![
            "instance.json",
            "meta.json",
            "model.json",
            "cluster-trace.csv",
            "result.json",
            "solve-trace.csv",
            "verify-stdout.txt",
            "rounds/state.json",
            "rounds/bundle-1.json",
            "rounds/final-programs.json",
            "report/runs.csv",
            "report/summary.json",
        ];
    }

    for name in &compared {
        let a = file_bytes(&root.path().join("a"), name);
        let b = file_bytes(&root.path().join("b"), name);
        assert_eq!(a, b, "{name} differs between identical runs");
    }
    let elapsed = started.elapsed();
    pass(
        "determinism",
        &format!(
            "{} outputs byte-identical across repeated runs, {elapsed:?}",
            compared.len()
        ),
    );
}
