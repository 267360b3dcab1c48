//! Behavioral checks that need a few thousand steps of training. Networks
//! are shrunk (64 hidden units, batch 128) to keep each run under a minute.

use std::path::Path;

use qta_core::analysis::{canonical_goal, field_uncertainty, field_value, GridField};
use qta_core::checkpoint;
use qta_core::harness::{evaluate, train, Precision, RunConfig};
use qta_core::maze::{EnvConfig, MazeEnv, MazeKind, MazeSpec, Rect};
use qta_core::oracle::{OracleField, Target};
use qta_core::rng::stream;
use qta_core::Actor;

const DESK: &[&str] = &[
    "ensemble.hidden_size=64",
    "train.batch_size=128",
    "curriculum.n_candidates=200",
    "replay.capacity=100000",
];

fn desk(seed: u64, extra: &[&str]) -> RunConfig {
    let mut o: Vec<&str> = DESK.to_vec();
    o.extend_from_slice(extra);
    RunConfig {
        seed,
        ..RunConfig::default()
    }
    .with_overrides(&o)
    .unwrap()
}

fn test_mazes() -> Vec<MazeSpec> {
    vec![
        MazeSpec::generate(MazeKind::SquareWave, 1, 1.0).unwrap(),
        MazeSpec::generate(MazeKind::SquareWave, 2, 1.0).unwrap(),
        MazeSpec::generate(MazeKind::MMaze, 4, 1.0).unwrap(),
        MazeSpec::generate(MazeKind::MMaze, 12, 1.0).unwrap(),
    ]
}

#[test]
fn untrained_policy_rarely_succeeds_and_oracle_always_does() {
    let mut rng = stream(7, "baseline");
    for spec in test_mazes() {
        let env = MazeEnv::new(spec, EnvConfig::default()).unwrap();
        let scale = qta_core::ObsScale::from_bounds(&env.spec().bounds);
        let actor = Actor::<Precision>::new(&[256, 256], scale, 1e-3, &mut rng).unwrap();
        let rate = evaluate(&actor, &env, 20, &mut rng).unwrap();
        assert!(rate <= 0.2, "{:?}: untrained success {rate}", env.spec().kind);

        let mut successes = 0;
        for _ in 0..20 {
            let mut state = env.reset(&mut rng);
            let field = OracleField::for_goal(&env, state.desired_goal).unwrap();
            loop {
                let action = field.greedy_action(&env, state.position, state.desired_goal);
                let r = env.step(&mut state, action);
                if r.terminal {
                    successes += 1;
                }
                if r.terminal || r.truncated {
                    break;
                }
            }
        }
        assert_eq!(successes, 20);
    }
}

fn corridor_config(dir: &Path) -> RunConfig {
    let spec = MazeSpec {
        kind: MazeKind::SquareWave,
        size: 0,
        unit: 1.0,
        corridor_width: 1.0,
        bounds: Rect::new([0.0, 0.0], [5.0, 1.0]),
        walls: Vec::new(),
        start_region: Rect::new([0.0, 0.0], [0.5, 1.0]),
        goal_region: Rect::new([4.5, 0.0], [5.0, 1.0]),
        min_solve_steps: 0,
        solve_step: 1.0,
    };
    let path = dir.join("corridor.toml");
    std::fs::write(&path, spec.to_toml().unwrap()).unwrap();
    let file = format!("maze.file={:?}", path.to_str().unwrap());
    desk(2, &[&file, "train.steps=20000"])
}

#[test]
fn mean_q_near_start_tracks_the_optimal_value() {
    let dir = tempfile::tempdir().unwrap();
    let run = train(&corridor_config(dir.path())).unwrap();
    assert!(run.metrics.converged(), "{:?}", run.metrics.evals);
    let env = &run.env;
    let goal = canonical_goal(env.spec());
    let oracle = OracleField::for_goal(env, goal).unwrap();
    let mut rng = stream(0, "mean-q");
    for start in [[0.25, 0.5], [0.25, 0.25], [0.4, 0.75]] {
        let optimal = oracle.optimal_value(start, run.agent.ensemble.config().gamma);
        let q = run.agent.ensemble.mean_q(start, goal, 64, &mut rng).unwrap();
        let rel = (q - optimal).abs() / optimal.abs();
        assert!(rel <= 0.2, "at {start:?}: mean Q {q:.3} vs optimal {optimal:.3}");
    }
}

fn field_at(dir: &Path, step: u64, what: &str, config: &RunConfig) -> GridField {
    let (agent, _) = checkpoint::load::<Precision>(&dir.join(format!("checkpoint-{step}.bin"))).unwrap();
    let env = MazeEnv::new(config.maze.build().unwrap(), config.env).unwrap();
    let goal = canonical_goal(env.spec());
    match what {
        "value" => field_value(&agent, &env, goal, 0.1).unwrap(),
        _ => field_uncertainty(&agent, &env, goal, 0.1, 8, 0).unwrap(),
    }
}

#[test]
fn early_uncertainty_is_highest_far_from_the_start() {
    let dir = tempfile::tempdir().unwrap();
    let out = format!("output.dir={:?}", dir.path().to_str().unwrap());
    let config = desk(3, &[&out, "maze.size=12", "train.steps=5000", "train.stop_on_convergence=false", "output.checkpoint_every=5000"]);
    train(&config).unwrap();
    let unc = field_at(dir.path(), 5000, "uncertainty", &config);
    let spec = config.maze.build().unwrap();
    let from_start = OracleField::compute(&spec, &Target::Region(spec.start_region), 0.05, 0.5).unwrap();
    let (mut near, mut far) = (Vec::new(), Vec::new());
    for (cell, v) in unc.geometry.free_cells().into_iter().zip(unc.free_values()) {
        let d = from_start.distance_at(unc.geometry.center(cell));
        if d < 3.0 {
            near.push(v);
        } else if d > 15.0 {
            far.push(v);
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!(!near.is_empty() && !far.is_empty());
    assert!(mean(&far) > mean(&near), "far {} near {}", mean(&far), mean(&near));
}

#[test]
fn value_field_gets_lighter_over_training() {
    let dir = tempfile::tempdir().unwrap();
    let out = format!("output.dir={:?}", dir.path().to_str().unwrap());
    let config = desk(
        4,
        &[
            &out,
            "train.steps=50000",
            "train.stop_on_convergence=false",
            "output.checkpoint_every=5000",
        ],
    );
    train(&config).unwrap();
    let early = field_at(dir.path(), 5000, "value", &config).mean();
    let late = field_at(dir.path(), 50000, "value", &config).mean();
    assert!(late > early, "mean value {early:.3} at 5k, {late:.3} at 50k");
}
