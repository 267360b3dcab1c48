//! Run configuration, the training loop, evaluation, and seed suites.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::{debug, info, warn};
use serde::{Deserialize, Serialize};

use crate::agent::{ActMode, Actor, Agent, ExplorationPolicy, UpdateReport};
use crate::checkpoint;
use crate::curriculum::{can_resample, select_goal, Selection, SelectionParams};
use crate::error::{QtaError, Result};
use crate::features::ObsScale;
use crate::maze::{EnvConfig, MazeEnv, MazeKind, MazeSpec, Vec2};
use crate::pun::{CriticEnsemble, EnsembleConfig};
use crate::replay::{BufferMode, PrioritizedHindsightBuffer, PriorityState, ReplayConfig, Transition};
use crate::rng::{Rng, RunStreams};

/// Scalar type used for training.
pub type Precision = f32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MazeConfig {
    pub kind: MazeKind,
    pub size: u32,
    pub unit: f64,
    /// A maze spec file; overrides the generator parameters when set.
    pub file: Option<PathBuf>,
}

impl Default for MazeConfig {
    fn default() -> Self {
        Self {
            kind: MazeKind::MMaze,
            size: 4,
            unit: 1.0,
            file: None,
        }
    }
}

impl MazeConfig {
    pub fn build(&self) -> Result<MazeSpec> {
        match &self.file {
            Some(path) => MazeSpec::from_toml(&fs::read_to_string(path)?),
            None => MazeSpec::generate(self.kind, self.size, self.unit),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub steps: u64,
    pub batch_size: usize,
    pub actor_lr: f64,
    pub eval_every: u64,
    pub eval_episodes: usize,
    /// Consecutive perfect evaluations that count as convergence.
    pub convergence_evals: usize,
    pub stop_on_convergence: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 200_000,
            batch_size: 1024,
            actor_lr: 1e-3,
            eval_every: 2000,
            eval_episodes: 10,
            convergence_evals: 2,
            stop_on_convergence: true,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    /// Extra checkpoint every this many environment steps; 0 disables.
    pub checkpoint_every: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub maze: MazeConfig,
    pub env: EnvConfig,
    pub train: TrainConfig,
    pub explore: ExplorationPolicy,
    pub ensemble: EnsembleConfig,
    pub replay: ReplayConfig,
    pub curriculum: SelectionParams,
    pub output: OutputConfig,
}

fn config_err(e: impl fmt::Display) -> QtaError {
    QtaError::Config(e.to_string())
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(config_err)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(config_err)
    }

    /// Applies `section.key=value` overrides. Values parse as TOML literals
    /// and fall back to plain strings.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let mut root = toml::Value::try_from(self).map_err(config_err)?;
        for o in overrides {
            let o = o.as_ref();
            let (path, raw) = o
                .split_once('=')
                .ok_or_else(|| QtaError::Config(format!("override `{o}` is not key=value")))?;
            let value = parse_literal(raw.trim());
            set_path(&mut root, path.trim(), value)?;
        }
        root.try_into().map_err(config_err)
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.train;
        if t.batch_size == 0 {
            return Err(QtaError::invalid("train.batch_size", "must be positive"));
        }
        if !(t.actor_lr > 0.0) {
            return Err(QtaError::invalid("train.actor_lr", "must be positive"));
        }
        if t.eval_every == 0 || t.eval_episodes == 0 || t.convergence_evals == 0 {
            return Err(QtaError::invalid("train", "evaluation cadence and counts must be positive"));
        }
        if t.batch_size > self.replay.capacity {
            return Err(QtaError::invalid("train.batch_size", "exceeds replay capacity"));
        }
        self.explore.validate()?;
        self.ensemble.validate()?;
        self.replay.validate()?;
        self.curriculum.validate()?;
        if self.maze.file.is_none() && !(self.maze.unit > 0.0) {
            return Err(QtaError::invalid("maze.unit", "must be positive"));
        }
        Ok(())
    }
}

fn parse_literal(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.into())),
        Err(_) => toml::Value::String(raw.into()),
    }
}

fn set_path(root: &mut toml::Value, path: &str, value: toml::Value) -> Result<()> {
    let mut node = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let table = node
            .as_table_mut()
            .ok_or_else(|| QtaError::Config(format!("`{path}` descends into a non-table")))?;
        if i + 1 == parts.len() {
            let value = match (table.get(*part), value) {
                (Some(toml::Value::Float(_)), toml::Value::Integer(v)) => toml::Value::Float(v as f64),
                (_, v) => v,
            };
            table.insert((*part).to_string(), value);
            return Ok(());
        }
        node = table
            .entry((*part).to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    }
    Err(QtaError::Config("empty override key".into()))
}

/// One row of the metrics log.
#[derive(Clone, Debug, PartialEq)]
pub enum MetricsRow {
    Episode {
        step: u64,
        episode: u64,
        ret: f64,
        length: u32,
        goals: u32,
        critic_loss: f64,
        predictive_loss: f64,
        actor_loss: f64,
    },
    Eval {
        step: u64,
        episode: u64,
        success_rate: f64,
    },
    Select {
        step: u64,
        episode: u64,
        first: bool,
        mean_eps: f64,
        max_eps: f64,
        goal: Vec2,
        filtered: usize,
        fallback: bool,
    },
}

pub const METRICS_HEADER: &str = "event,step,episode,return,length,goals,success_rate,critic_loss,predictive_loss,actor_loss,first_goal,mean_eps,max_eps,goal_x,goal_y,filtered,fallback";

impl fmt::Display for MetricsRow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricsRow::Episode {
                step,
                episode,
                ret,
                length,
                goals,
                critic_loss,
                predictive_loss,
                actor_loss,
            } => write!(
                f,
                "episode,{step},{episode},{ret},{length},{goals},,{critic_loss},{predictive_loss},{actor_loss},,,,,,,"
            ),
            MetricsRow::Eval {
                step,
                episode,
                success_rate,
            } => write!(f, "eval,{step},{episode},,,,{success_rate},,,,,,,,,,"),
            MetricsRow::Select {
                step,
                episode,
                first,
                mean_eps,
                max_eps,
                goal,
                filtered,
                fallback,
            } => write!(
                f,
                "select,{step},{episode},,,,,,,,{},{mean_eps},{max_eps},{},{},{filtered},{}",
                u8::from(*first),
                goal[0],
                goal[1],
                u8::from(*fallback)
            ),
        }
    }
}

struct MetricsLog {
    rows: Vec<String>,
    file: Option<BufWriter<File>>,
}

impl MetricsLog {
    fn new(path: Option<&Path>) -> Result<Self> {
        let file = match path {
            Some(p) => {
                let mut w = BufWriter::new(File::create(p)?);
                writeln!(w, "{METRICS_HEADER}")?;
                Some(w)
            }
            None => None,
        };
        Ok(Self { rows: Vec::new(), file })
    }

    fn push(&mut self, row: MetricsRow) -> Result<()> {
        let line = row.to_string();
        if let Some(w) = &mut self.file {
            writeln!(w, "{line}")?;
        }
        self.rows.push(line);
        Ok(())
    }

    fn flush(&mut self) -> Result<()> {
        if let Some(w) = &mut self.file {
            w.flush()?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunMetrics {
    pub env_steps: u64,
    pub episodes: u64,
    pub update_cycles: u64,
    /// `(step, success rate)` per evaluation.
    pub evals: Vec<(u64, f64)>,
    pub episode_returns: Vec<(u64, f64)>,
    pub critic_losses: Vec<f64>,
    pub predictive_losses: Vec<f64>,
    pub actor_losses: Vec<f64>,
    pub mean_candidate_eps: Vec<f64>,
    pub steps_to_convergence: Option<u64>,
    /// Metrics log lines without the header, as written.
    pub log: Vec<String>,
}

impl RunMetrics {
    pub fn converged(&self) -> bool {
        self.steps_to_convergence.is_some()
    }

    pub fn log_text(&self) -> String {
        let mut s = String::from(METRICS_HEADER);
        s.push('\n');
        for l in &self.log {
            s.push_str(l);
            s.push('\n');
        }
        s
    }
}

/// Fresh agent for an environment.
pub fn build_agent(config: &RunConfig, env: &MazeEnv, rng: &mut Rng) -> Result<Agent<Precision>> {
    let scale = ObsScale::from_bounds(&env.spec().bounds);
    let ensemble = CriticEnsemble::new(config.ensemble.clone(), scale, rng)?;
    let hidden = vec![config.ensemble.hidden_size; config.ensemble.hidden_layers];
    let actor = Actor::new(&hidden, scale, config.train.actor_lr, rng)?;
    Ok(Agent { ensemble, actor })
}

pub fn build_env(config: &RunConfig) -> Result<MazeEnv> {
    MazeEnv::new(config.maze.build()?, config.env)
}

/// Fraction of `episodes` deterministic rollouts from environment-sampled
/// starts that reach their goal.
pub fn evaluate<F: crate::nn::Scalar>(actor: &Actor<F>, env: &MazeEnv, episodes: usize, rng: &mut Rng) -> Result<f64> {
    if episodes == 0 {
        return Ok(0.0);
    }
    let explore = ExplorationPolicy::default();
    let mut successes = 0;
    for _ in 0..episodes {
        let mut state = env.reset(rng);
        loop {
            let a = actor.act(state.position, state.desired_goal, ActMode::Eval, &explore, u64::MAX, rng)?;
            let r = env.step(&mut state, a);
            if r.terminal {
                successes += 1;
                break;
            }
            if r.truncated {
                break;
            }
        }
    }
    Ok(successes as f64 / episodes as f64)
}

/// Everything a finished run leaves behind.
#[derive(Debug)]
pub struct RunOutcome {
    pub metrics: RunMetrics,
    pub agent: Agent<Precision>,
    pub env: MazeEnv,
}

/// One gradient cycle: sample, update every network, then refresh the
/// sampled priorities according to the buffer mode.
pub fn update_cycle(
    agent: &mut Agent<Precision>,
    buffer: &mut PrioritizedHindsightBuffer,
    config: &RunConfig,
    step: u64,
    streams: &mut RunStreams,
) -> Result<UpdateReport> {
    let beta = config.replay.beta_at(step);
    let batch = buffer.sample_batch(config.train.batch_size, beta, &mut streams.replay)?;
    let weights = match config.replay.mode {
        BufferMode::UniformHer => None,
        _ => Some(batch.weights.as_slice()),
    };
    let report = agent.update(&batch.transitions, weights, &mut streams.targets)?;
    let priorities = match config.replay.mode {
        BufferMode::UniformHer => None,
        BufferMode::TdErrorPer => Some(report.td_errors.clone()),
        BufferMode::UncertaintyPer => {
            let states: Vec<Vec2> = batch
                .transitions
                .iter()
                .map(|t| match config.replay.priority_state {
                    PriorityState::Next => t.next_obs,
                    PriorityState::Current => t.obs,
                })
                .collect();
            let goals: Vec<Vec2> = batch.transitions.iter().map(|t| t.goal).collect();
            let d = config
                .curriculum
                .probes
                .unwrap_or_else(|| agent.ensemble.config().default_probes());
            let est = agent
                .ensemble
                .uncertainty_per_goal(&states, &goals, d, &mut streams.uncertainty)?;
            Some(est.iter().map(|e| e.epsilon).collect())
        }
    };
    if let Some(p) = priorities {
        buffer.update_priorities(&batch.leaves, &p)?;
    }
    if !agent.ensemble.all_finite() {
        return Err(QtaError::NonFinite("critic parameters"));
    }
    Ok(report)
}

struct Trainer<'a> {
    config: &'a RunConfig,
    env: MazeEnv,
    agent: Agent<Precision>,
    buffer: PrioritizedHindsightBuffer,
    streams: RunStreams,
    log: MetricsLog,
    metrics: RunMetrics,
    step: u64,
    streak: usize,
    streak_start: u64,
    out_dir: Option<PathBuf>,
}

/// Trains from scratch according to `config`.
pub fn train(config: &RunConfig) -> Result<RunOutcome> {
    config.validate()?;
    let env = build_env(config)?;
    let mut streams = RunStreams::new(config.seed);
    let agent = build_agent(config, &env, &mut streams.init)?;
    let buffer = PrioritizedHindsightBuffer::new(config.replay.clone(), env.goal_radius())?;
    let out_dir = config.output.dir.clone();
    if let Some(dir) = &out_dir {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("config.toml"), config.to_toml()?)?;
        fs::write(dir.join("maze.toml"), env.spec().to_toml()?)?;
    }
    let log = MetricsLog::new(out_dir.as_ref().map(|d| d.join("metrics.csv")).as_deref())?;
    let mut trainer = Trainer {
        config,
        env,
        agent,
        buffer,
        streams,
        log,
        metrics: RunMetrics::default(),
        step: 0,
        streak: 0,
        streak_start: 0,
        out_dir,
    };
    let result = trainer.run();
    trainer.log.flush()?;
    if let Err(e) = &result {
        warn!("run aborted at step {}: {e}", trainer.step);
    }
    if let Some(dir) = trainer.out_dir.clone() {
        trainer.save_checkpoint(&dir.join("checkpoint.bin"))?;
    }
    result?;
    let Trainer {
        mut metrics,
        agent,
        env,
        log,
        step,
        ..
    } = trainer;
    metrics.env_steps = step;
    metrics.log = log.rows;
    Ok(RunOutcome { metrics, agent, env })
}

impl Trainer<'_> {
    fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let meta = serde_json::json!({
            "step": self.step,
            "seed": self.config.seed,
            "config": self.config,
        });
        checkpoint::save(path, &self.agent, meta)
    }

    fn t_max(&self) -> f64 {
        f64::from(self.env.max_episode_steps())
    }

    fn curriculum_active(&self) -> bool {
        self.config.curriculum.enabled
            && !self.buffer.is_empty()
            && self.buffer.len() as u64 >= self.config.explore.warmup_steps
    }

    fn select(&mut self, position: Vec2, g_env: Vec2, first: bool, episode: u64) -> Result<Vec2> {
        let sel: Selection = select_goal(
            &self.buffer,
            &self.agent.ensemble,
            position,
            g_env,
            first,
            &self.config.curriculum,
            self.t_max(),
            &mut self.streams.candidates,
        )?;
        self.metrics.mean_candidate_eps.push(sel.mean_raw());
        self.log.push(MetricsRow::Select {
            step: self.step,
            episode,
            first,
            mean_eps: sel.mean_raw(),
            max_eps: sel.max_raw(),
            goal: sel.goal,
            filtered: sel.distribution.filtered,
            fallback: sel.distribution.fallback,
        })?;
        Ok(sel.goal)
    }

    fn run(&mut self) -> Result<()> {
        let budget = self.config.train.steps;
        let mut episode = 0u64;
        while self.step < budget {
            let mut state = self.env.reset(&mut self.streams.env);
            let g_env = state.desired_goal;
            if self.curriculum_active() {
                state.desired_goal = self.select(state.position, g_env, true, episode)?;
            }
            let mut trajectory: Vec<Transition> = Vec::new();
            let mut ret = 0.0;
            let mut goals = 1;
            let mut losses = (0.0, 0.0, 0.0, 0u32);
            let mut stop = false;
            loop {
                let obs = state.position;
                let goal = state.desired_goal;
                let action = self.agent.actor.act(
                    obs,
                    goal,
                    ActMode::Train,
                    &self.config.explore,
                    self.step,
                    &mut self.streams.explore,
                )?;
                let r = self.env.step(&mut state, action);
                ret += r.reward;
                trajectory.push(Transition {
                    obs,
                    action,
                    reward: r.reward,
                    next_obs: r.observation,
                    goal,
                    achieved: r.achieved_goal,
                    terminal: r.terminal,
                    trajectory: episode,
                    index: trajectory.len() as u32,
                });
                let this_step = self.step;
                self.step += 1;
                if this_step >= self.config.explore.warmup_steps && self.buffer.len() >= self.config.train.batch_size {
                    let (c, p, a) = self.update_cycle(this_step)?;
                    losses.0 += c;
                    losses.1 += p;
                    losses.2 += a;
                    losses.3 += 1;
                }
                if self.step.is_multiple_of(self.config.train.eval_every) {
                    stop |= self.evaluate_now(episode)?;
                }
                if self.config.output.checkpoint_every > 0 && self.step.is_multiple_of(self.config.output.checkpoint_every) {
                    if let Some(dir) = &self.out_dir {
                        self.save_checkpoint(&dir.join(format!("checkpoint-{}.bin", self.step)))?;
                    }
                }
                if stop || self.step >= budget || r.truncated {
                    break;
                }
                if r.terminal {
                    if !can_resample(state.steps_elapsed, self.env.max_episode_steps()) || !self.curriculum_active() {
                        break;
                    }
                    state.desired_goal = self.select(state.position, g_env, false, episode)?;
                    goals += 1;
                }
            }
            let length = trajectory.len() as u32;
            self.buffer.store_trajectory(&trajectory)?;
            self.metrics.episode_returns.push((self.step, ret));
            let n = f64::from(losses.3.max(1));
            self.log.push(MetricsRow::Episode {
                step: self.step,
                episode,
                ret,
                length,
                goals,
                critic_loss: losses.0 / n,
                predictive_loss: losses.1 / n,
                actor_loss: losses.2 / n,
            })?;
            episode += 1;
            self.metrics.episodes = episode;
            if stop {
                break;
            }
        }
        Ok(())
    }

    fn update_cycle(&mut self, step: u64) -> Result<(f64, f64, f64)> {
        let report = update_cycle(&mut self.agent, &mut self.buffer, self.config, step, &mut self.streams)?;
        self.metrics.update_cycles += 1;
        self.metrics.critic_losses.push(report.critic_loss);
        self.metrics.predictive_losses.push(report.predictive_loss);
        self.metrics.actor_losses.push(report.actor_loss);
        Ok((report.critic_loss, report.predictive_loss, report.actor_loss))
    }

    /// Returns true when the run should stop on convergence.
    fn evaluate_now(&mut self, episode: u64) -> Result<bool> {
        let rate = evaluate(
            &self.agent.actor,
            &self.env,
            self.config.train.eval_episodes,
            &mut self.streams.eval,
        )?;
        self.metrics.evals.push((self.step, rate));
        self.log.push(MetricsRow::Eval {
            step: self.step,
            episode,
            success_rate: rate,
        })?;
        self.log.flush()?;
        info!("step {} eval success {rate:.2}", self.step);
        if rate >= 1.0 {
            if self.streak == 0 {
                self.streak_start = self.step;
            }
            self.streak += 1;
            if self.streak >= self.config.train.convergence_evals && self.metrics.steps_to_convergence.is_none() {
                self.metrics.steps_to_convergence = Some(self.streak_start);
                debug!("converged at step {}", self.streak_start);
                return Ok(self.config.train.stop_on_convergence);
            }
        } else {
            self.streak = 0;
        }
        Ok(false)
    }
}

/// One row of a suite matrix: a name and the overrides that define it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteCell {
    pub name: String,
    #[serde(default)]
    pub overrides: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteMatrix {
    /// Overrides applied to every cell.
    pub base: Vec<String>,
    pub cells: Vec<SuiteCell>,
}

impl SuiteMatrix {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(config_err)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeedResult {
    pub seed: u64,
    pub steps_to_convergence: Option<u64>,
    pub error: Option<String>,
    pub metrics_log: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteRow {
    pub name: String,
    pub seeds: Vec<SeedResult>,
}

impl SuiteRow {
    pub fn converged(&self) -> Vec<f64> {
        self.seeds
            .iter()
            .filter_map(|s| s.steps_to_convergence.map(|v| v as f64))
            .collect()
    }

    /// Mean and population std of steps-to-convergence, when every seed converged.
    pub fn summary(&self) -> Option<(f64, f64)> {
        let c = self.converged();
        if c.is_empty() || c.len() != self.seeds.len() {
            return None;
        }
        let n = c.len() as f64;
        let mean = c.iter().sum::<f64>() / n;
        let var = c.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some((mean, var.sqrt()))
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SuiteTable {
    pub rows: Vec<SuiteRow>,
}

impl fmt::Display for SuiteTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<24} {:>10} {:>14} {:>12}", "config", "converged", "mean", "std")?;
        for row in &self.rows {
            let ok = row.converged().len();
            let n = row.seeds.len();
            match row.summary() {
                Some((m, s)) => writeln!(f, "{:<24} {:>10} {:>14.1} {:>12.1}", row.name, format!("{ok}/{n}"), m, s)?,
                None => writeln!(f, "{:<24} {:>10} {:>14} {:>12}", row.name, format!("{ok}/{n}"), "omitted", "omitted")?,
            }
        }
        Ok(())
    }
}

/// Runs every `(cell, seed)` pair in turn; a failing run is recorded and
/// the suite continues.
pub fn run_suite(base: &RunConfig, matrix: &SuiteMatrix, seeds: &[u64]) -> Result<SuiteTable> {
    if matrix.cells.is_empty() || seeds.is_empty() {
        return Err(QtaError::Config("suite needs at least one cell and one seed".into()));
    }
    let shared = base.with_overrides(&matrix.base)?;
    let mut table = SuiteTable::default();
    for cell in &matrix.cells {
        let cell_config = shared.with_overrides(&cell.overrides)?;
        let mut row = SuiteRow {
            name: cell.name.clone(),
            seeds: Vec::new(),
        };
        for &seed in seeds {
            let mut c = cell_config.clone();
            c.seed = seed;
            if let Some(dir) = &shared.output.dir {
                c.output.dir = Some(dir.join(&cell.name).join(format!("seed-{seed}")));
            }
            info!("suite cell {} seed {seed}", cell.name);
            let result = match train(&c) {
                Ok(out) => SeedResult {
                    seed,
                    steps_to_convergence: out.metrics.steps_to_convergence,
                    error: None,
                    metrics_log: out.metrics.log_text(),
                },
                Err(e) => SeedResult {
                    seed,
                    steps_to_convergence: None,
                    error: Some(e.to_string()),
                    metrics_log: String::new(),
                },
            };
            row.seeds.push(result);
        }
        table.rows.push(row);
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> RunConfig {
        let mut c = RunConfig::default();
        c.train.steps = 600;
        c.train.batch_size = 32;
        c.train.eval_every = 200;
        c.train.eval_episodes = 2;
        c.explore.warmup_steps = 100;
        c.ensemble.hidden_size = 16;
        c.curriculum.n_candidates = 50;
        c.replay.capacity = 10_000;
        c
    }

    #[test]
    fn overrides_reach_nested_fields() {
        let c = RunConfig::default()
            .with_overrides(&["ensemble.noise_sigma=0.05", "replay.mode=td-error-per", "train.steps=10", "seed=7", "ensemble.gamma=1"])
            .unwrap();
        assert_eq!(c.ensemble.noise_sigma, 0.05);
        assert_eq!(c.replay.mode, BufferMode::TdErrorPer);
        assert_eq!(c.train.steps, 10);
        assert_eq!(c.seed, 7);
        assert_eq!(c.ensemble.gamma, 1.0);
        assert!(RunConfig::default().with_overrides(&["nonsense"]).is_err());
        assert!(RunConfig::default().with_overrides(&["replay.mode=bogus"]).is_err());
    }

    #[test]
    fn toml_round_trip_and_defaults() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&c.to_toml().unwrap()).unwrap(), c);
        let partial = RunConfig::from_toml("seed = 3\n[train]\nsteps = 5\n").unwrap();
        assert_eq!(partial.train.batch_size, 1024);
        assert_eq!(partial.train.steps, 5);
    }

    #[test]
    fn defaults_follow_hyperparameter_table() {
        let c = RunConfig::default();
        assert_eq!(c.train.batch_size, 1024);
        assert_eq!(c.ensemble.hidden_size, 256);
        assert_eq!(c.replay.her_k, 4);
        assert_eq!(c.ensemble.gamma, 0.99);
        assert_eq!(c.train.actor_lr, 1e-3);
        assert_eq!(c.ensemble.critic_lr, 2e-3);
        assert_eq!(c.ensemble.predictive_lr, 5e-3);
        assert_eq!(c.explore.warmup_steps, 1000);
        assert_eq!(c.explore.noise_std, 0.2);
        assert_eq!(c.explore.random_prob, 0.3);
        assert_eq!((c.curriculum.threshold, c.curriculum.slope, c.curriculum.intercept), (-1.6, 626.0, -591.0));
        assert_eq!(c.ensemble.rho, 0.95);
        assert_eq!((c.replay.beta_initial, c.replay.beta_steps, c.replay.alpha), (0.3, 200_000, 1.0));
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut c = tiny();
        c.train.batch_size = 0;
        assert!(train(&c).is_err());
        let mut c = tiny();
        c.explore.random_prob = 1.5;
        assert!(c.validate().is_err());
    }

    #[test]
    fn runs_are_deterministic_and_account_updates() {
        let c = tiny();
        let a = train(&c).unwrap();
        let b = train(&c).unwrap();
        assert_eq!(a.metrics.log, b.metrics.log);
        assert_eq!(a.metrics.env_steps, 600);
        assert_eq!(a.metrics.evals.len(), 3);
        assert!(a.metrics.log.iter().any(|l| l.starts_with("select,")));
    }

    #[test]
    fn one_update_per_post_warmup_step() {
        let mut c = tiny();
        c.explore.warmup_steps = 300;
        let out = train(&c).unwrap();
        assert_eq!(out.metrics.update_cycles, 300);
    }

    #[test]
    fn warmup_blocks_updates() {
        let mut c = tiny();
        c.explore.warmup_steps = 600;
        let out = train(&c).unwrap();
        assert_eq!(out.metrics.update_cycles, 0);
    }

    #[test]
    fn literal_parsing() {
        assert_eq!(parse_literal("3"), toml::Value::Integer(3));
        assert_eq!(parse_literal("true"), toml::Value::Boolean(true));
        assert_eq!(parse_literal("m-maze"), toml::Value::String("m-maze".into()));
    }
}
