//! Network input assembly.
//!
//! Positions and goals are mapped affinely into `[-1, 1]` using the maze
//! bounds; actions are already in `[-1, 1]` and pass through unchanged.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::maze::{Rect, Vec2};
use crate::nn::{cast, Scalar};

pub const OBS_DIM: usize = 2;
pub const ACTION_DIM: usize = 2;
pub const GOAL_DIM: usize = 2;
pub const CRITIC_INPUT_DIM: usize = OBS_DIM + ACTION_DIM + GOAL_DIM;
pub const ACTOR_INPUT_DIM: usize = OBS_DIM + GOAL_DIM;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObsScale {
    pub center: Vec2,
    pub half_extent: Vec2,
}

impl Default for ObsScale {
    fn default() -> Self {
        Self::identity()
    }
}

impl ObsScale {
    pub fn identity() -> Self {
        Self {
            center: [0.0, 0.0],
            half_extent: [1.0, 1.0],
        }
    }

    pub fn from_bounds(bounds: &Rect) -> Self {
        Self {
            center: bounds.center(),
            half_extent: [0.5 * bounds.width(), 0.5 * bounds.height()],
        }
    }

    #[inline]
    pub fn normalize(&self, p: Vec2) -> Vec2 {
        [
            (p[0] - self.center[0]) / self.half_extent[0],
            (p[1] - self.center[1]) / self.half_extent[1],
        ]
    }
}

/// Rows of `[obs, action, goal]`, all slices of equal length.
pub fn critic_input<F: Scalar>(scale: &ObsScale, obs: &[Vec2], actions: &[Vec2], goals: &[Vec2]) -> Array2<F> {
    debug_assert!(obs.len() == actions.len() && obs.len() == goals.len());
    let mut x = Array2::zeros((obs.len(), CRITIC_INPUT_DIM));
    for (r, mut row) in x.rows_mut().into_iter().enumerate() {
        let s = scale.normalize(obs[r]);
        let g = scale.normalize(goals[r]);
        let vals = [s[0], s[1], actions[r][0], actions[r][1], g[0], g[1]];
        for (dst, v) in row.iter_mut().zip(vals) {
            *dst = cast(v);
        }
    }
    x
}

/// Rows of `[obs, goal]`.
pub fn actor_input<F: Scalar>(scale: &ObsScale, obs: &[Vec2], goals: &[Vec2]) -> Array2<F> {
    debug_assert_eq!(obs.len(), goals.len());
    let mut x = Array2::zeros((obs.len(), ACTOR_INPUT_DIM));
    for (r, mut row) in x.rows_mut().into_iter().enumerate() {
        let s = scale.normalize(obs[r]);
        let g = scale.normalize(goals[r]);
        for (dst, v) in row.iter_mut().zip([s[0], s[1], g[0], g[1]]) {
            *dst = cast(v);
        }
    }
    x
}

/// Critic input with the action columns taken from a network output.
pub fn critic_input_with_actions<F: Scalar>(
    scale: &ObsScale,
    obs: &[Vec2],
    actions: &Array2<F>,
    goals: &[Vec2],
) -> Array2<F> {
    let mut x = Array2::zeros((obs.len(), CRITIC_INPUT_DIM));
    for (r, mut row) in x.rows_mut().into_iter().enumerate() {
        let s = scale.normalize(obs[r]);
        let g = scale.normalize(goals[r]);
        row[0] = cast(s[0]);
        row[1] = cast(s[1]);
        row[2] = actions[[r, 0]];
        row[3] = actions[[r, 1]];
        row[4] = cast(g[0]);
        row[5] = cast(g[1]);
    }
    x
}
