//! Procedural square-wave and M-mazes and the kinematic dot-agent
//! environment that runs inside them.
//!
//! Mazes are laid out on a grid of square cells of side `unit`: corridors are
//! one cell wide and walls are merged into maximal axis-aligned rectangles.
//! The agent is a point; it is inside a wall only when it lies strictly in a
//! wall's interior, so wall faces are free space and the agent can slide
//! along them.

use log::debug;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{QtaError, Result};
use crate::oracle::{OracleField, Target, DEFAULT_RESOLUTION};
use crate::rng::Rng;

pub type Vec2 = [f64; 2];

/// Rows of the square-wave maze (the wave's amplitude in cells).
pub const SQUARE_WAVE_ROWS: usize = 5;
/// Columns of the M-maze: left leg, wall, dead-end prong, wall, right leg.
pub const M_MAZE_COLUMNS: usize = 5;

pub const DEFAULT_GOAL_RADIUS: f64 = 0.3;
pub const DEFAULT_MAX_STEP: f64 = 0.5;

pub fn distance(a: Vec2, b: Vec2) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Sparse goal reward: 0 on reaching the goal, -1 otherwise.
pub fn goal_reward(achieved: Vec2, desired: Vec2, goal_radius: f64) -> f64 {
    if distance(achieved, desired) <= goal_radius {
        0.0
    } else {
        -1.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: Vec2,
    pub max: Vec2,
}

impl Rect {
    pub fn new(min: Vec2, max: Vec2) -> Self {
        Self { min, max }
    }

    pub fn point(p: Vec2) -> Self {
        Self { min: p, max: p }
    }

    pub fn width(&self) -> f64 {
        self.max[0] - self.min[0]
    }

    pub fn height(&self) -> f64 {
        self.max[1] - self.min[1]
    }

    pub fn center(&self) -> Vec2 {
        [
            0.5 * (self.min[0] + self.max[0]),
            0.5 * (self.min[1] + self.max[1]),
        ]
    }

    pub fn corners(&self) -> [Vec2; 4] {
        [
            self.min,
            [self.max[0], self.min[1]],
            [self.min[0], self.max[1]],
            self.max,
        ]
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p[0] >= self.min[0] && p[0] <= self.max[0] && p[1] >= self.min[1] && p[1] <= self.max[1]
    }

    pub fn interior_contains(&self, p: Vec2) -> bool {
        p[0] > self.min[0] && p[0] < self.max[0] && p[1] > self.min[1] && p[1] < self.max[1]
    }

    /// True when the interiors overlap.
    pub fn overlaps(&self, other: &Rect) -> bool {
        self.min[0] < other.max[0]
            && other.min[0] < self.max[0]
            && self.min[1] < other.max[1]
            && other.min[1] < self.max[1]
    }

    pub fn sample(&self, rng: &mut Rng) -> Vec2 {
        let x = if self.width() > 0.0 {
            rng.random_range(self.min[0]..=self.max[0])
        } else {
            self.min[0]
        };
        let y = if self.height() > 0.0 {
            rng.random_range(self.min[1]..=self.max[1])
        } else {
            self.min[1]
        };
        [x, y]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MazeKind {
    SquareWave,
    MMaze,
}

impl std::fmt::Display for MazeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MazeKind::SquareWave => f.write_str("square-wave"),
            MazeKind::MMaze => f.write_str("m-maze"),
        }
    }
}

impl std::str::FromStr for MazeKind {
    type Err = QtaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "square-wave" | "square" => Ok(MazeKind::SquareWave),
            "m-maze" | "m" => Ok(MazeKind::MMaze),
            other => Err(QtaError::invalid("maze.kind", format!("unknown kind `{other}`"))),
        }
    }
}

/// Geometry of one generated maze.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MazeSpec {
    pub kind: MazeKind,
    /// Periods for a square-wave maze, corridor length in units for an M-maze.
    pub size: u32,
    pub unit: f64,
    pub corridor_width: f64,
    pub bounds: Rect,
    pub walls: Vec<Rect>,
    pub start_region: Rect,
    pub goal_region: Rect,
    /// Minimum solve time in steps of length `solve_step`.
    pub min_solve_steps: u32,
    pub solve_step: f64,
}

impl MazeSpec {
    pub fn generate(kind: MazeKind, size: u32, unit: f64) -> Result<Self> {
        match kind {
            MazeKind::SquareWave => generate_square_wave(size, unit),
            MazeKind::MMaze => generate_m_maze(size, unit),
        }
    }

    /// Parses `m-maze:4` / `square-wave:1` style shorthands.
    pub fn from_shorthand(s: &str) -> Result<Self> {
        let (kind, size) = s
            .split_once(':')
            .ok_or_else(|| QtaError::invalid("maze", format!("expected <kind>:<size>, got `{s}`")))?;
        let size: u32 = size
            .trim()
            .parse()
            .map_err(|_| QtaError::invalid("maze", format!("bad size in `{s}`")))?;
        Self::generate(kind.trim().parse()?, size, 1.0)
    }

    pub fn is_free(&self, p: Vec2) -> bool {
        self.bounds.contains(p) && !self.walls.iter().any(|w| self.solid(w).interior_contains(p))
    }

    /// A wall flush with the bounds, stretched past them so that its face
    /// on the boundary line is solid too.
    pub fn solid(&self, w: &Rect) -> Rect {
        let mut r = *w;
        for axis in 0..2 {
            if r.min[axis] <= self.bounds.min[axis] {
                r.min[axis] = f64::NEG_INFINITY;
            }
            if r.max[axis] >= self.bounds.max[axis] {
                r.max[axis] = f64::INFINITY;
            }
        }
        r
    }

    /// Recomputes the minimum solve time for a different step length.
    pub fn with_solve_step(mut self, max_step: f64) -> Result<Self> {
        if !(max_step > 0.0) {
            return Err(QtaError::invalid("max_step", "must be positive"));
        }
        self.solve_step = max_step;
        self.min_solve_steps = self.compute_min_solve_steps()?;
        Ok(self)
    }

    pub fn oracle_resolution(&self) -> f64 {
        DEFAULT_RESOLUTION * self.unit
    }

    fn compute_min_solve_steps(&self) -> Result<u32> {
        let field = OracleField::compute(
            self,
            &Target::Region(self.goal_region),
            self.oracle_resolution(),
            self.solve_step,
        )?;
        let mut worst = 0u32;
        for corner in self.start_region.corners() {
            let steps = field.steps(corner);
            if steps == u32::MAX {
                return Err(QtaError::invalid("maze", "goal unreachable from start region"));
            }
            worst = worst.max(steps);
        }
        Ok(worst)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| QtaError::format("maze spec", e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: MazeSpec =
            toml::from_str(text).map_err(|e| QtaError::format("maze spec", e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.unit > 0.0) || !(self.solve_step > 0.0) {
            return Err(QtaError::invalid("maze", "unit and solve_step must be positive"));
        }
        for region in [&self.start_region, &self.goal_region] {
            if !self.bounds.contains(region.min) || !self.bounds.contains(region.max) {
                return Err(QtaError::invalid("maze", "region outside bounds"));
            }
            if self.walls.iter().any(|w| w.overlaps(region)) {
                return Err(QtaError::invalid("maze", "region intersects a wall"));
            }
        }
        Ok(())
    }
}

/// Free/wall layout on a cell grid, row 0 at the bottom.
struct CellLayout {
    cols: usize,
    rows: usize,
    free: Vec<bool>,
}

impl CellLayout {
    fn walled(cols: usize, rows: usize) -> Self {
        Self {
            cols,
            rows,
            free: vec![false; cols * rows],
        }
    }

    fn open(&mut self, col: usize, row: usize) {
        self.free[row * self.cols + col] = true;
    }

    fn open_column(&mut self, col: usize, rows: std::ops::Range<usize>) {
        for r in rows {
            self.open(col, r);
        }
    }

    fn is_free(&self, col: usize, row: usize) -> bool {
        self.free[row * self.cols + col]
    }

    /// Horizontal runs of wall cells, merged vertically when runs repeat.
    fn wall_rects(&self, unit: f64) -> Vec<Rect> {
        let mut open: Vec<(usize, usize, usize, usize)> = Vec::new(); // c0, c1, r0, r1 (exclusive)
        let mut done = Vec::new();
        for row in 0..self.rows {
            let mut runs = Vec::new();
            let mut c = 0;
            while c < self.cols {
                if self.is_free(c, row) {
                    c += 1;
                    continue;
                }
                let start = c;
                while c < self.cols && !self.is_free(c, row) {
                    c += 1;
                }
                runs.push((start, c));
            }
            let mut next = Vec::new();
            for (c0, c1) in runs {
                if let Some(pos) = open.iter().position(|&(a, b, _, _)| a == c0 && b == c1) {
                    let (a, b, r0, _) = open.swap_remove(pos);
                    next.push((a, b, r0, row + 1));
                } else {
                    next.push((c0, c1, row, row + 1));
                }
            }
            done.append(&mut open);
            open = next;
        }
        done.append(&mut open);
        done.sort_unstable();
        done.into_iter()
            .map(|(c0, c1, r0, r1)| {
                Rect::new(
                    [c0 as f64 * unit, r0 as f64 * unit],
                    [c1 as f64 * unit, r1 as f64 * unit],
                )
            })
            .collect()
    }

    fn cell(&self, col: usize, row: usize, unit: f64) -> Rect {
        Rect::new(
            [col as f64 * unit, row as f64 * unit],
            [(col + 1) as f64 * unit, (row + 1) as f64 * unit],
        )
    }
}

fn finish(
    kind: MazeKind,
    size: u32,
    unit: f64,
    layout: &CellLayout,
    start: (usize, usize),
    goal: (usize, usize),
) -> Result<MazeSpec> {
    let spec = MazeSpec {
        kind,
        size,
        unit,
        corridor_width: unit,
        bounds: Rect::new(
            [0.0, 0.0],
            [layout.cols as f64 * unit, layout.rows as f64 * unit],
        ),
        walls: layout.wall_rects(unit),
        start_region: layout.cell(start.0, start.1, unit),
        goal_region: layout.cell(goal.0, goal.1, unit),
        min_solve_steps: 0,
        solve_step: DEFAULT_MAX_STEP * unit,
    };
    spec.validate()?;
    let step = spec.solve_step;
    spec.with_solve_step(step)
}

/// Serpentine corridor with `periods` full up/down cycles.
///
/// Vertical legs sit in even columns; the separating wall columns have their
/// gap alternately at the top and at the bottom. The agent starts at the
/// bottom of the first leg and the goal is at the top of the last one.
pub fn generate_square_wave(periods: u32, unit: f64) -> Result<MazeSpec> {
    if periods == 0 {
        return Err(QtaError::invalid("periods", "must be at least 1"));
    }
    if !(unit > 0.0) || !unit.is_finite() {
        return Err(QtaError::invalid("unit", "must be positive"));
    }
    let legs = 2 * periods as usize + 1;
    let cols = 2 * legs - 1;
    let rows = SQUARE_WAVE_ROWS;
    let mut layout = CellLayout::walled(cols, rows);
    for leg in 0..legs {
        layout.open_column(2 * leg, 0..rows);
    }
    for k in 0..legs - 1 {
        let gap_row = if k % 2 == 0 { rows - 1 } else { 0 };
        layout.open(2 * k + 1, gap_row);
    }
    finish(
        MazeKind::SquareWave,
        periods,
        unit,
        &layout,
        (0, 0),
        (cols - 1, rows - 1),
    )
}

/// M-shaped maze: two outer legs joined along the top, with a central
/// dead-end prong hanging down between them. Start and goal sit at the
/// bottom of the left and right legs.
pub fn generate_m_maze(length_units: u32, unit: f64) -> Result<MazeSpec> {
    if length_units < 2 {
        return Err(QtaError::invalid("length_units", "must be at least 2"));
    }
    if !(unit > 0.0) || !unit.is_finite() {
        return Err(QtaError::invalid("unit", "must be positive"));
    }
    let length = length_units as usize;
    let cols = M_MAZE_COLUMNS;
    let rows = length + 1;
    let mut layout = CellLayout::walled(cols, rows);
    for col in [0, 2, 4] {
        layout.open_column(col, 0..rows);
    }
    layout.open(1, length);
    layout.open(3, length);
    finish(MazeKind::MMaze, length_units, unit, &layout, (0, 0), (cols - 1, 0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub goal_radius: f64,
    pub max_step: f64,
    /// 0 selects four times the maze's minimum solve time.
    pub max_episode_steps: u32,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            goal_radius: DEFAULT_GOAL_RADIUS,
            max_step: DEFAULT_MAX_STEP,
            max_episode_steps: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnvState {
    pub position: Vec2,
    pub desired_goal: Vec2,
    pub steps_elapsed: u32,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepResult {
    pub observation: Vec2,
    pub achieved_goal: Vec2,
    pub reward: f64,
    pub terminal: bool,
    pub truncated: bool,
}

#[derive(Clone, Debug)]
pub struct MazeEnv {
    spec: MazeSpec,
    goal_radius: f64,
    max_step: f64,
    max_episode_steps: u32,
}

impl MazeEnv {
    pub fn new(spec: MazeSpec, config: EnvConfig) -> Result<Self> {
        if !(config.goal_radius > 0.0) {
            return Err(QtaError::invalid("env.goal_radius", "must be positive"));
        }
        if !(config.max_step > 0.0) {
            return Err(QtaError::invalid("env.max_step", "must be positive"));
        }
        spec.validate()?;
        let spec = if spec.solve_step != config.max_step {
            spec.with_solve_step(config.max_step)?
        } else {
            spec
        };
        let max_episode_steps = if config.max_episode_steps == 0 {
            4 * spec.min_solve_steps.max(1)
        } else {
            config.max_episode_steps
        };
        Ok(Self {
            spec,
            goal_radius: config.goal_radius,
            max_step: config.max_step,
            max_episode_steps,
        })
    }

    pub fn spec(&self) -> &MazeSpec {
        &self.spec
    }

    pub fn goal_radius(&self) -> f64 {
        self.goal_radius
    }

    pub fn max_step(&self) -> f64 {
        self.max_step
    }

    pub fn max_episode_steps(&self) -> u32 {
        self.max_episode_steps
    }

    pub fn reward(&self, achieved: Vec2, desired: Vec2) -> f64 {
        goal_reward(achieved, desired, self.goal_radius)
    }

    pub fn reset(&self, rng: &mut Rng) -> EnvState {
        let position = self.spec.start_region.sample(rng);
        let desired_goal = self.spec.goal_region.sample(rng);
        EnvState {
            position,
            desired_goal,
            steps_elapsed: 0,
        }
    }

    /// Advances the agent by one action, mutating `state` in place.
    pub fn step(&self, state: &mut EnvState, action: Vec2) -> StepResult {
        let mut clipped = action;
        for c in clipped.iter_mut() {
            if !(-1.0..=1.0).contains(c) {
                debug!("clipping action component {c}");
                *c = if c.is_nan() { 0.0 } else { c.clamp(-1.0, 1.0) };
            }
        }
        let displacement = [clipped[0] * self.max_step, clipped[1] * self.max_step];
        state.position = self.slide(state.position, displacement);
        state.steps_elapsed += 1;
        let reward = self.reward(state.position, state.desired_goal);
        let terminal = reward == 0.0;
        StepResult {
            observation: state.position,
            achieved_goal: state.position,
            reward,
            terminal,
            truncated: !terminal && state.steps_elapsed >= self.max_episode_steps,
        }
    }

    /// Axis-decomposed sliding: x first, then y; motion stops at the first
    /// wall face or the maze bounds.
    pub fn slide(&self, from: Vec2, displacement: Vec2) -> Vec2 {
        let mut p = from;
        p[0] = self.move_axis(p, 0, displacement[0]);
        p[1] = self.move_axis(p, 1, displacement[1]);
        p
    }

    fn move_axis(&self, p: Vec2, axis: usize, delta: f64) -> f64 {
        let other = 1 - axis;
        let from = p[axis];
        let bounds = &self.spec.bounds;
        if delta > 0.0 {
            let mut limit = (from + delta).min(bounds.max[axis]);
            for w in self.spec.walls.iter().map(|w| self.spec.solid(w)) {
                if p[other] > w.min[other] && p[other] < w.max[other] && w.min[axis] >= from {
                    limit = limit.min(w.min[axis]);
                }
            }
            limit.max(from)
        } else if delta < 0.0 {
            let mut limit = (from + delta).max(bounds.min[axis]);
            for w in self.spec.walls.iter().map(|w| self.spec.solid(w)) {
                if p[other] > w.min[other] && p[other] < w.max[other] && w.max[axis] <= from {
                    limit = limit.max(w.max[axis]);
                }
            }
            limit.min(from)
        } else {
            from
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn open_env() -> MazeEnv {
        let spec = generate_m_maze(4, 1.0).unwrap();
        MazeEnv::new(spec, EnvConfig::default()).unwrap()
    }

    #[test]
    fn rejects_degenerate_sizes() {
        assert!(generate_square_wave(0, 1.0).is_err());
        assert!(generate_square_wave(1, 0.0).is_err());
        assert!(generate_square_wave(1, -1.0).is_err());
        assert!(generate_m_maze(1, 1.0).is_err());
        assert!(generate_m_maze(0, 1.0).is_err());
        assert!(generate_m_maze(4, -2.0).is_err());
    }

    #[test]
    fn walls_never_touch_each_other() {
        for spec in [
            generate_square_wave(1, 1.0).unwrap(),
            generate_square_wave(3, 1.0).unwrap(),
            generate_m_maze(4, 1.0).unwrap(),
            generate_m_maze(12, 1.0).unwrap(),
        ] {
            for (i, a) in spec.walls.iter().enumerate() {
                for b in &spec.walls[i + 1..] {
                    let touch = a.min[0] <= b.max[0]
                        && b.min[0] <= a.max[0]
                        && a.min[1] <= b.max[1]
                        && b.min[1] <= a.max[1];
                    assert!(!touch, "{a:?} touches {b:?}");
                }
            }
        }
    }

    #[test]
    fn regions_are_in_free_space() {
        for spec in [generate_square_wave(2, 1.0).unwrap(), generate_m_maze(12, 1.0).unwrap()] {
            for p in spec.start_region.corners().iter().chain(spec.goal_region.corners().iter()) {
                assert!(spec.is_free(*p));
            }
            assert!(spec.is_free(spec.start_region.center()));
        }
    }

    #[test]
    fn walls_flush_with_the_bounds_block_the_boundary_line() {
        let env = open_env();
        let mut p = [0.9, 0.0];
        for _ in 0..4 {
            p = env.slide(p, [0.5, 0.0]);
        }
        assert_eq!(p, [1.0, 0.0]);
        assert!(!env.spec().is_free([1.5, 0.0]));
        assert!(env.spec().is_free([1.0, 0.0]));
        let top = env.slide([2.5, 4.5], [0.0, 0.5]);
        assert_eq!(top, [2.5, 5.0]);
    }

    #[test]
    fn m_maze_twelve_has_prong_and_expected_bounds() {
        let spec = generate_m_maze(12, 1.0).unwrap();
        assert_eq!(spec.bounds, Rect::new([0.0, 0.0], [5.0, 13.0]));
        // bottom of the central prong is free and only reachable from above
        assert!(spec.is_free([2.5, 0.5]));
        assert!(!spec.is_free([1.5, 0.5]));
        assert!(!spec.is_free([3.5, 6.0]));
        assert_eq!(spec.walls.len(), 2);
    }

    #[test]
    fn free_space_kinematics() {
        let env = open_env();
        let mut s = EnvState {
            position: [0.5, 0.5],
            desired_goal: [4.5, 0.5],
            steps_elapsed: 0,
        };
        let r = env.step(&mut s, [0.6, 0.0]);
        assert!((r.observation[0] - 0.8).abs() < 1e-12);
        assert_eq!(r.observation[1], 0.5);
        assert_eq!(r.reward, -1.0);
        assert!(!r.terminal && !r.truncated);
        assert_eq!(r.achieved_goal, r.observation);
    }

    #[test]
    fn sliding_cancels_blocked_axis() {
        let env = open_env();
        // wall column x in [1, 2], y in [0, 4]
        let mut s = EnvState {
            position: [0.9, 1.0],
            desired_goal: [4.5, 0.5],
            steps_elapsed: 0,
        };
        let r = env.step(&mut s, [1.0, 1.0]);
        assert_eq!(r.observation, [1.0, 1.5]);
        let r = env.step(&mut s, [1.0, 0.0]);
        assert_eq!(r.observation, [1.0, 1.5]);
    }

    #[test]
    fn reaching_goal_is_terminal_with_zero_reward() {
        let env = open_env();
        let mut s = EnvState {
            position: [0.5, 0.5],
            desired_goal: [0.5, 0.9],
            steps_elapsed: 0,
        };
        let r = env.step(&mut s, [0.0, 0.4]);
        assert_eq!(r.reward, 0.0);
        assert!(r.terminal);
        assert!(!r.truncated);
    }

    #[test]
    fn truncation_at_step_limit() {
        let spec = generate_m_maze(4, 1.0).unwrap();
        let env = MazeEnv::new(
            spec,
            EnvConfig {
                max_episode_steps: 3,
                ..EnvConfig::default()
            },
        )
        .unwrap();
        let mut s = env.reset(&mut stream(0, "t"));
        let flags: Vec<bool> = (0..3).map(|_| env.step(&mut s, [0.0, 0.0]).truncated).collect();
        assert_eq!(flags, vec![false, false, true]);
    }

    #[test]
    fn out_of_range_actions_are_clipped() {
        let env = open_env();
        let mut s = EnvState {
            position: [0.5, 0.5],
            desired_goal: [4.5, 0.5],
            steps_elapsed: 0,
        };
        env.step(&mut s, [0.0, 7.0]);
        assert_eq!(s.position, [0.5, 1.0]);
    }

    #[test]
    fn default_episode_limit_is_four_times_t() {
        let env = open_env();
        assert_eq!(env.max_episode_steps(), 4 * env.spec().min_solve_steps);
    }

    #[test]
    fn point_regions_reset_deterministically() {
        let mut spec = generate_m_maze(4, 1.0).unwrap();
        spec.start_region = Rect::point([0.5, 0.5]);
        spec.goal_region = Rect::point([4.5, 0.5]);
        let env = MazeEnv::new(spec, EnvConfig::default()).unwrap();
        let mut rng = stream(3, "reset");
        for _ in 0..10 {
            let s = env.reset(&mut rng);
            assert_eq!(s.position, [0.5, 0.5]);
            assert_eq!(s.desired_goal, [4.5, 0.5]);
            assert_eq!(s.steps_elapsed, 0);
        }
    }

    #[test]
    fn spec_text_round_trip() {
        let spec = generate_square_wave(2, 1.0).unwrap();
        let text = spec.to_toml().unwrap();
        assert!(text.contains("square-wave"));
        assert_eq!(MazeSpec::from_toml(&text).unwrap(), spec);
    }

    #[test]
    fn shorthand_parsing() {
        assert_eq!(MazeSpec::from_shorthand("m-maze:4").unwrap().size, 4);
        assert_eq!(
            MazeSpec::from_shorthand("square-wave:2").unwrap().kind,
            MazeKind::SquareWave
        );
        assert!(MazeSpec::from_shorthand("spiral:3").is_err());
        assert!(MazeSpec::from_shorthand("m-maze").is_err());
    }
}
