use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand, ValueEnum};
use log::info;
use qta_core::analysis::{
    canonical_goal, dump_goals, field_goal_probability, field_oracle, field_uncertainty, field_value, field_value_error,
    GridField,
};
use qta_core::checkpoint::{self, Manifest};
use qta_core::harness::{evaluate, run_suite, train, Precision, RunConfig, SuiteMatrix};
use qta_core::rng::stream;
use qta_core::{Agent, EnvConfig, MazeEnv, MazeSpec, QtaError, SelectionParams, Vec2};

/// Uncertainty-driven goal curricula in 2D mazes.
#[derive(Parser)]
#[command(name = "qta", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one agent; writes config, metrics and checkpoints to the output dir.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// `section.key=value`, repeatable.
        #[arg(long = "override", value_name = "K=V")]
        overrides: Vec<String>,
        /// Shorthand for `--override output.dir=...`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Deterministic success rate of a checkpoint's policy.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Maze file or `kind:size` shorthand; defaults to the training maze.
        #[arg(long)]
        maze: Option<String>,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Runs a configuration matrix over several seeds.
    Suite {
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        seeds: Vec<u64>,
        /// Base config the matrix overrides apply to.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Writes one scalar field over the maze's free space as a grid file.
    Heatmap {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        maze: Option<String>,
        #[arg(long, value_enum)]
        what: What,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        res: f64,
        /// Probe actions per cell; defaults to the ensemble mode's count.
        #[arg(long)]
        d: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Goal as `x,y`; defaults to the goal region's centre.
        #[arg(long, value_parser = parse_point)]
        goal: Option<Vec2>,
    },
    /// Samples goals from the goal-probability field into a CSV file.
    DumpGoals {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        maze: Option<String>,
        #[arg(long, default_value_t = 200)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        res: f64,
        #[arg(long)]
        d: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_parser = parse_point)]
        goal: Option<Vec2>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum What {
    Value,
    Error,
    Uncertainty,
    Goalprob,
    Oracle,
}

fn parse_point(s: &str) -> Result<Vec2, String> {
    let (x, y) = s.split_once(',').ok_or("expected x,y")?;
    let x: f64 = x.trim().parse().map_err(|_| format!("bad x in `{s}`"))?;
    let y: f64 = y.trim().parse().map_err(|_| format!("bad y in `{s}`"))?;
    Ok([x, y])
}

/// An error with the exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

const CONFIG_ERROR: u8 = 2;
const RUNTIME_ERROR: u8 = 3;

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        let code = match error.downcast_ref::<QtaError>() {
            Some(QtaError::InvalidParameter { .. } | QtaError::Config(_)) => CONFIG_ERROR,
            _ => RUNTIME_ERROR,
        };
        Failure { code, error }
    }
}

impl From<QtaError> for Failure {
    fn from(e: QtaError) -> Self {
        anyhow::Error::from(e).into()
    }
}

trait ConfigStage<T> {
    fn config_stage(self, what: &str) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> ConfigStage<T> for Result<T, E> {
    fn config_stage(self, what: &str) -> Result<T, Failure> {
        self.map_err(|e| Failure {
            code: CONFIG_ERROR,
            error: e.into().context(what.to_string()),
        })
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { CONFIG_ERROR } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Train {
            config,
            seed,
            overrides,
            out,
        } => {
            let mut c = match config {
                Some(path) => RunConfig::load(&path).config_stage("loading config")?,
                None => RunConfig::default(),
            };
            c = c.with_overrides(&overrides).config_stage("applying overrides")?;
            if let Some(seed) = seed {
                c.seed = seed;
            }
            if let Some(out) = out {
                c.output.dir = Some(out);
            }
            c.validate().config_stage("validating config")?;
            let outcome = train(&c)?;
            let m = &outcome.metrics;
            println!(
                "steps {} episodes {} updates {} converged {}",
                m.env_steps,
                m.episodes,
                m.update_cycles,
                m.steps_to_convergence.map_or("no".to_string(), |s| s.to_string())
            );
            if let Some((step, rate)) = m.evals.last() {
                println!("last eval at step {step}: success rate {rate:.2}");
            }
            if let Some(dir) = &c.output.dir {
                println!("checkpoint {}", dir.join("checkpoint.bin").display());
            }
        }
        Command::Eval {
            checkpoint,
            maze,
            episodes,
            seed,
        } => {
            let (agent, manifest) = load_checkpoint(&checkpoint)?;
            let env = resolve_env(maze.as_deref(), &manifest)?;
            let mut rng = stream(seed, "eval");
            let rate = evaluate(&agent.actor, &env, episodes, &mut rng)?;
            info!("eval {} over {episodes} episodes: {rate}", checkpoint.display());
            println!("success_rate {rate}");
        }
        Command::Suite { matrix, seeds, config } => {
            let text = fs::read_to_string(&matrix)
                .with_context(|| format!("reading {}", matrix.display()))
                .config_stage("loading matrix")?;
            let matrix = SuiteMatrix::from_toml(&text).config_stage("parsing matrix")?;
            let base = match config {
                Some(path) => RunConfig::load(&path).config_stage("loading config")?,
                None => RunConfig::default(),
            };
            let table = run_suite(&base, &matrix, &seeds)?;
            print!("{table}");
            for row in &table.rows {
                for s in &row.seeds {
                    if let Some(e) = &s.error {
                        eprintln!("{} seed {} failed: {e}", row.name, s.seed);
                    }
                }
            }
        }
        Command::Heatmap {
            checkpoint,
            maze,
            what,
            out,
            res,
            d,
            seed,
            goal,
        } => {
            let field = if what == What::Oracle {
                let manifest = match &checkpoint {
                    Some(path) => Some(load_checkpoint(path)?.1),
                    None => None,
                };
                let env = match &manifest {
                    Some(m) => resolve_env(maze.as_deref(), m)?,
                    None => {
                        let maze = maze.ok_or_else(|| Failure {
                            code: CONFIG_ERROR,
                            error: anyhow!("--maze is required without a checkpoint"),
                        })?;
                        MazeEnv::new(parse_maze(&maze)?, EnvConfig::default())?
                    }
                };
                let gamma = manifest.as_ref().map_or(0.99, |m| m.ensemble.gamma);
                field_oracle(&env, goal.unwrap_or_else(|| canonical_goal(env.spec())), res, gamma)?
            } else {
                let path = checkpoint.ok_or_else(|| Failure {
                    code: CONFIG_ERROR,
                    error: anyhow!("--checkpoint is required for this field"),
                })?;
                let (agent, manifest) = load_checkpoint(&path)?;
                let env = resolve_env(maze.as_deref(), &manifest)?;
                let goal = goal.unwrap_or_else(|| canonical_goal(env.spec()));
                let d = d.unwrap_or_else(|| agent.ensemble.config().default_probes());
                match what {
                    What::Value => field_value(&agent, &env, goal, res)?,
                    What::Error => field_value_error(&agent, &env, goal, res)?,
                    What::Uncertainty => field_uncertainty(&agent, &env, goal, res, d, seed)?,
                    What::Goalprob => {
                        let unc = field_uncertainty(&agent, &env, goal, res, d, seed)?;
                        let (field, flagged) = field_goal_probability(&unc, &curriculum_params(&manifest))?;
                        if flagged {
                            log::warn!("every cell had zero weight; wrote the uniform field");
                        }
                        field
                    }
                    What::Oracle => unreachable!("handled above"),
                }
            };
            write_field(&field, &out)?;
        }
        Command::DumpGoals {
            checkpoint,
            maze,
            n,
            out,
            res,
            d,
            seed,
            goal,
        } => {
            let (agent, manifest) = load_checkpoint(&checkpoint)?;
            let env = resolve_env(maze.as_deref(), &manifest)?;
            let goal = goal.unwrap_or_else(|| canonical_goal(env.spec()));
            let d = d.unwrap_or_else(|| agent.ensemble.config().default_probes());
            let unc = field_uncertainty(&agent, &env, goal, res, d, seed)?;
            let mut rng = stream(seed, "dump-goals");
            let dump = dump_goals(&unc, &curriculum_params(&manifest), n, &mut rng)?;
            let file = File::create(&out).with_context(|| format!("creating {}", out.display()))?;
            dump.write_csv(BufWriter::new(file))?;
            println!("wrote {} goals to {}", dump.samples.len(), out.display());
        }
    }
    Ok(())
}

fn load_checkpoint(path: &Path) -> Result<(Agent<Precision>, Manifest), Failure> {
    checkpoint::load::<Precision>(path)
        .with_context(|| format!("loading checkpoint {}", path.display()))
        .map_err(|error| Failure {
            code: RUNTIME_ERROR,
            error,
        })
}

/// The training config stored in a checkpoint, when present.
fn recorded_config(manifest: &Manifest) -> Option<RunConfig> {
    serde_json::from_value(manifest.metadata.get("config")?.clone()).ok()
}

fn curriculum_params(manifest: &Manifest) -> SelectionParams {
    recorded_config(manifest).map(|c| c.curriculum).unwrap_or_default()
}

fn parse_maze(arg: &str) -> Result<MazeSpec, Failure> {
    let path = Path::new(arg);
    if path.is_file() {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading {arg}"))
            .config_stage("loading maze")?;
        return MazeSpec::from_toml(&text).config_stage("parsing maze");
    }
    MazeSpec::from_shorthand(arg).config_stage("parsing maze")
}

fn resolve_env(maze: Option<&str>, manifest: &Manifest) -> Result<MazeEnv, Failure> {
    let recorded = recorded_config(manifest);
    let env_config = recorded.as_ref().map(|c| c.env).unwrap_or_default();
    let spec = match (maze, &recorded) {
        (Some(m), _) => parse_maze(m)?,
        (None, Some(c)) => c.maze.build().config_stage("rebuilding the training maze")?,
        (None, None) => {
            return Err(Failure {
                code: CONFIG_ERROR,
                error: anyhow!("checkpoint records no maze; pass --maze"),
            })
        }
    };
    Ok(MazeEnv::new(spec, env_config)?)
}

fn write_field(field: &GridField, out: &Path) -> Result<(), Failure> {
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    field.write(out)?;
    let (lo, hi) = field.range();
    println!(
        "wrote {} field {}x{} (min {lo}, max {hi}) to {}",
        field.label,
        field.geometry.width,
        field.geometry.height,
        out.display()
    );
    Ok(())
}
