//! Geodesic distance fields over maze free space.
//!
//! The field is an 8-connected Dijkstra over cell centres. Diagonal moves
//! are only allowed when both orthogonal neighbours are free, so paths never
//! cut through a wall corner.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use log::warn;

use crate::error::{QtaError, Result};
use crate::maze::{distance, MazeEnv, MazeSpec, Rect, Vec2};

/// Oracle grid resolution in maze units.
pub const DEFAULT_RESOLUTION: f64 = 0.05;

const STEP_EPS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Target {
    Region(Rect),
    Disc { center: Vec2, radius: f64 },
}

impl Target {
    fn contains(&self, p: Vec2) -> bool {
        match self {
            Target::Region(r) => r.contains(p),
            Target::Disc { center, radius } => distance(*center, p) <= *radius,
        }
    }

    fn anchor(&self) -> Vec2 {
        match self {
            Target::Region(r) => r.center(),
            Target::Disc { center, .. } => *center,
        }
    }
}

/// Cell grid covering the maze bounds; shared by oracle and analysis fields.
#[derive(Clone, Debug, PartialEq)]
pub struct CellGrid {
    pub origin: Vec2,
    pub resolution: f64,
    pub width: usize,
    pub height: usize,
    pub free: Vec<bool>,
}

impl CellGrid {
    pub fn new(spec: &MazeSpec, resolution: f64) -> Result<Self> {
        if !(resolution > 0.0) || !resolution.is_finite() {
            return Err(QtaError::invalid("resolution", "must be positive"));
        }
        let width = (spec.bounds.width() / resolution - STEP_EPS).ceil().max(1.0) as usize;
        let height = (spec.bounds.height() / resolution - STEP_EPS).ceil().max(1.0) as usize;
        let origin = spec.bounds.min;
        let mut free = Vec::with_capacity(width * height);
        for j in 0..height {
            for i in 0..width {
                let c = [
                    origin[0] + (i as f64 + 0.5) * resolution,
                    origin[1] + (j as f64 + 0.5) * resolution,
                ];
                free.push(spec.is_free(c));
            }
        }
        Ok(Self {
            origin,
            resolution,
            width,
            height,
            free,
        })
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.free.is_empty()
    }

    pub fn center(&self, index: usize) -> Vec2 {
        let i = index % self.width;
        let j = index / self.width;
        [
            self.origin[0] + (i as f64 + 0.5) * self.resolution,
            self.origin[1] + (j as f64 + 0.5) * self.resolution,
        ]
    }

    pub fn cell_of(&self, p: Vec2) -> usize {
        let i = ((p[0] - self.origin[0]) / self.resolution).floor();
        let j = ((p[1] - self.origin[1]) / self.resolution).floor();
        let i = (i.max(0.0) as usize).min(self.width - 1);
        let j = (j.max(0.0) as usize).min(self.height - 1);
        j * self.width + i
    }

    /// Neighbour indices with their move cost in cells (1 or sqrt 2).
    pub fn neighbours(&self, index: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let i = (index % self.width) as isize;
        let j = (index / self.width) as isize;
        const MOVES: [(isize, isize); 8] = [
            (1, 0),
            (-1, 0),
            (0, 1),
            (0, -1),
            (1, 1),
            (1, -1),
            (-1, 1),
            (-1, -1),
        ];
        MOVES.iter().filter_map(move |&(di, dj)| {
            let free = |a: isize, b: isize| {
                a >= 0
                    && b >= 0
                    && (a as usize) < self.width
                    && (b as usize) < self.height
                    && self.free[b as usize * self.width + a as usize]
            };
            let (ni, nj) = (i + di, j + dj);
            if !free(ni, nj) {
                return None;
            }
            if di != 0 && dj != 0 {
                if !free(i + di, j) || !free(i, j + dj) {
                    return None;
                }
                Some((nj as usize * self.width + ni as usize, std::f64::consts::SQRT_2))
            } else {
                Some((nj as usize * self.width + ni as usize, 1.0))
            }
        })
    }
}

#[derive(Clone, Copy, PartialEq)]
struct Open {
    dist: f64,
    index: usize,
}

impl Eq for Open {}

impl Ord for Open {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.index.cmp(&self.index))
    }
}

impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Geodesic distances to a target set, in maze units.
#[derive(Clone, Debug)]
pub struct OracleField {
    pub grid: CellGrid,
    pub distances: Vec<f64>,
    pub max_step: f64,
    pub diagnostic: Option<String>,
}

impl OracleField {
    pub fn compute(spec: &MazeSpec, target: &Target, resolution: f64, max_step: f64) -> Result<Self> {
        if resolution > spec.corridor_width / 4.0 {
            return Err(QtaError::invalid(
                "resolution",
                format!(
                    "{resolution} is coarser than a quarter corridor width ({})",
                    spec.corridor_width / 4.0
                ),
            ));
        }
        if !(max_step > 0.0) {
            return Err(QtaError::invalid("max_step", "must be positive"));
        }
        let grid = CellGrid::new(spec, resolution)?;
        let mut distances = vec![f64::INFINITY; grid.len()];
        let mut heap = BinaryHeap::new();
        for (idx, d) in distances.iter_mut().enumerate() {
            if grid.free[idx] && target.contains(grid.center(idx)) {
                *d = 0.0;
                heap.push(Open { dist: 0.0, index: idx });
            }
        }
        if heap.is_empty() {
            // Regions thinner than a cell still claim the cell they sit in.
            let idx = grid.cell_of(target.anchor());
            if grid.free[idx] {
                distances[idx] = 0.0;
                heap.push(Open { dist: 0.0, index: idx });
            }
        }
        let diagnostic = if heap.is_empty() {
            let msg = format!("target {target:?} covers no free cell; field is unreachable everywhere");
            warn!("{msg}");
            Some(msg)
        } else {
            None
        };
        while let Some(Open { dist, index }) = heap.pop() {
            if dist > distances[index] {
                continue;
            }
            for (next, cost) in grid.neighbours(index) {
                let nd = dist + cost * resolution;
                if nd < distances[next] {
                    distances[next] = nd;
                    heap.push(Open { dist: nd, index: next });
                }
            }
        }
        Ok(Self {
            grid,
            distances,
            max_step,
            diagnostic,
        })
    }

    /// Field toward a disc around `goal`, as used for the goal-reaching task.
    pub fn for_goal(env: &MazeEnv, goal: Vec2) -> Result<Self> {
        let spec = env.spec();
        Self::compute(
            spec,
            &Target::Disc {
                center: goal,
                radius: env.goal_radius(),
            },
            spec.oracle_resolution(),
            env.max_step(),
        )
    }

    /// Distance at `p`. A point on a wall face lands in a wall cell; it then
    /// takes the value of the nearest free neighbouring cell.
    pub fn distance_at(&self, p: Vec2) -> f64 {
        let idx = self.grid.cell_of(p);
        if self.grid.free[idx] {
            return self.distances[idx];
        }
        let w = self.grid.width as isize;
        let h = self.grid.height as isize;
        let (i, j) = ((idx % self.grid.width) as isize, (idx / self.grid.width) as isize);
        let mut best = (f64::INFINITY, f64::INFINITY);
        for dj in -1..=1 {
            for di in -1..=1 {
                let (a, b) = (i + di, j + dj);
                if a >= 0 && b >= 0 && a < w && b < h {
                    let k = (b * w + a) as usize;
                    if self.grid.free[k] {
                        let cand = (distance(self.grid.center(k), p), self.distances[k]);
                        if cand.0 < best.0 || (cand.0 == best.0 && cand.1 < best.1) {
                            best = cand;
                        }
                    }
                }
            }
        }
        best.1
    }

    pub fn steps_for_distance(&self, d: f64) -> u32 {
        steps_for_distance(d, self.max_step)
    }

    /// Step count at `p`; `u32::MAX` when unreachable.
    pub fn steps(&self, p: Vec2) -> u32 {
        self.steps_for_distance(self.distance_at(p))
    }

    pub fn optimal_return(&self, p: Vec2) -> f64 {
        let steps = self.steps(p);
        if steps == 0 {
            0.0
        } else {
            -(f64::from(steps) - 1.0)
        }
    }

    pub fn optimal_value(&self, p: Vec2, gamma: f64) -> f64 {
        discounted_value(self.steps(p), gamma)
    }

    /// Greedy descent action: the box-boundary action (or a direct hop onto
    /// the goal) whose resulting position has the smallest field distance.
    pub fn greedy_action(&self, env: &MazeEnv, position: Vec2, goal: Vec2) -> Vec2 {
        let reach = env.max_step();
        let direct = [(goal[0] - position[0]) / reach, (goal[1] - position[1]) / reach];
        if direct[0].abs() <= 1.0 && direct[1].abs() <= 1.0 {
            let landed = env.slide(position, [direct[0] * reach, direct[1] * reach]);
            if distance(landed, goal) <= env.goal_radius() {
                return direct;
            }
        }
        const DIRECTIONS: usize = 72;
        let mut best = ([0.0, 0.0], f64::INFINITY);
        for k in 0..DIRECTIONS {
            let theta = 2.0 * std::f64::consts::PI * k as f64 / DIRECTIONS as f64;
            let (s, c) = theta.sin_cos();
            let scale = c.abs().max(s.abs());
            let action = [c / scale, s / scale];
            let landed = env.slide(position, [action[0] * reach, action[1] * reach]);
            let d = if distance(landed, goal) <= env.goal_radius() {
                -1.0
            } else {
                self.distance_at(landed)
            };
            if d < best.1 {
                best = (action, d);
            }
        }
        best.0
    }
}

pub fn steps_for_distance(d: f64, max_step: f64) -> u32 {
    if !d.is_finite() {
        u32::MAX
    } else if d <= 0.0 {
        0
    } else {
        (d / max_step - STEP_EPS).ceil().max(1.0) as u32
    }
}

/// Discounted optimal value `-(1 - gamma^steps) / (1 - gamma)`.
pub fn discounted_value(steps: u32, gamma: f64) -> f64 {
    if steps == u32::MAX {
        return -1.0 / (1.0 - gamma);
    }
    -(1.0 - gamma.powi(steps as i32)) / (1.0 - gamma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maze::{generate_m_maze, generate_square_wave, EnvConfig, MazeKind};

    /// 0.5 x 5 corridor along x.
    fn corridor() -> MazeSpec {
        MazeSpec {
            kind: MazeKind::MMaze,
            size: 2,
            unit: 1.0,
            corridor_width: 1.0,
            bounds: Rect::new([0.0, 0.0], [5.0, 1.0]),
            walls: vec![],
            start_region: Rect::new([0.0, 0.0], [1.0, 1.0]),
            goal_region: Rect::new([4.0, 0.0], [5.0, 1.0]),
            min_solve_steps: 0,
            solve_step: 0.5,
        }
    }

    #[test]
    fn straight_corridor_steps_and_return() {
        let spec = corridor();
        let target = Target::Region(Rect::new([4.45, 0.0], [5.0, 1.0]));
        let field = OracleField::compute(&spec, &target, 0.05, 0.5).unwrap();
        // cell centres at x = 0.475 and x = 4.475 are 4 units apart
        let d = field.distance_at([0.49, 0.5]);
        assert!((d - 4.0).abs() < 1e-9, "{d}");
        assert_eq!(field.steps([0.49, 0.5]), 8);
        assert_eq!(field.optimal_return([0.49, 0.5]), -7.0);
    }

    #[test]
    fn inside_target_is_zero() {
        let spec = corridor();
        let field = OracleField::compute(&spec, &Target::Region(spec.goal_region), 0.05, 0.5).unwrap();
        assert_eq!(field.steps([4.5, 0.5]), 0);
        assert_eq!(field.optimal_value([4.5, 0.5], 0.99), 0.0);
    }

    #[test]
    fn discounted_closed_form() {
        let v = discounted_value(20, 0.99);
        assert!((v + 18.2093).abs() < 1e-3, "{v}");
        assert_eq!(discounted_value(0, 0.99), 0.0);
    }

    #[test]
    fn coarse_resolution_rejected() {
        let spec = corridor();
        assert!(OracleField::compute(&spec, &Target::Region(spec.goal_region), 0.3, 0.5).is_err());
    }

    #[test]
    fn walled_target_gives_infinite_field() {
        let spec = generate_m_maze(4, 1.0).unwrap();
        let inside_wall = Target::Region(Rect::new([1.2, 0.2], [1.8, 0.8]));
        let field = OracleField::compute(&spec, &inside_wall, 0.05, 0.5).unwrap();
        assert!(field.diagnostic.is_some());
        assert!(field.distances.iter().all(|d| d.is_infinite()));
        assert_eq!(field.steps([0.5, 0.5]), u32::MAX);
    }

    #[test]
    fn wall_cells_are_infinite_and_free_space_connected() {
        for spec in [generate_square_wave(1, 1.0).unwrap(), generate_m_maze(12, 1.0).unwrap()] {
            let field =
                OracleField::compute(&spec, &Target::Region(spec.goal_region), 0.05, 0.5).unwrap();
            for (idx, d) in field.distances.iter().enumerate() {
                assert_eq!(field.grid.free[idx], d.is_finite());
            }
        }
    }

    #[test]
    fn geodesic_exceeds_straight_line_in_m_maze() {
        let spec = generate_m_maze(12, 1.0).unwrap();
        let field = OracleField::compute(&spec, &Target::Region(spec.goal_region), 0.05, 0.5).unwrap();
        let start = spec.start_region.center();
        let straight = distance(start, spec.goal_region.center());
        assert!(field.distance_at(start) > 2.0 * straight);
    }

    #[test]
    fn triangle_inequality_along_moves() {
        let spec = generate_square_wave(1, 1.0).unwrap();
        let field = OracleField::compute(&spec, &Target::Region(spec.goal_region), 0.05, 0.5).unwrap();
        for idx in 0..field.grid.len() {
            if !field.grid.free[idx] {
                continue;
            }
            for (n, cost) in field.grid.neighbours(idx) {
                assert!(field.distances[idx] <= field.distances[n] + cost * 0.05 + 1e-9);
            }
        }
    }

    #[test]
    fn t_recorded_for_generated_mazes() {
        let m4 = generate_m_maze(4, 1.0).unwrap();
        // up 4, across 4, down 4 between cell centres, give or take the region
        assert!((20..=30).contains(&m4.min_solve_steps), "{}", m4.min_solve_steps);
        let sq = generate_square_wave(1, 1.0).unwrap();
        assert!(sq.min_solve_steps > 20);
        let env = MazeEnv::new(m4.clone(), EnvConfig::default()).unwrap();
        assert_eq!(env.spec().min_solve_steps, m4.min_solve_steps);
    }
}
