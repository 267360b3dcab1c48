//! Goal selection by normalized epistemic uncertainty.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{QtaError, Result};
use crate::maze::Vec2;
use crate::nn::Scalar;
use crate::pun::CriticEnsemble;
use crate::replay::PrioritizedHindsightBuffer;
use crate::rng::Rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionParams {
    pub slope: f64,
    pub intercept: f64,
    pub threshold: f64,
    pub n_candidates: usize,
    /// Probe actions per candidate; `None` takes the ensemble mode's default.
    pub probes: Option<usize>,
    pub enabled: bool,
}

impl Default for SelectionParams {
    fn default() -> Self {
        Self {
            slope: 626.0,
            intercept: -591.0,
            threshold: -1.6,
            n_candidates: 1000,
            probes: None,
            enabled: true,
        }
    }
}

impl SelectionParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_candidates == 0 {
            return Err(QtaError::invalid("curriculum.n_candidates", "must be at least 1"));
        }
        if !(self.slope.is_finite() && self.intercept.is_finite() && self.threshold.is_finite()) {
            return Err(QtaError::invalid("curriculum", "slope, intercept and threshold must be finite"));
        }
        if self.probes == Some(0) {
            return Err(QtaError::invalid("curriculum.probes", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GoalCandidate {
    pub state: Vec2,
    pub goal: Vec2,
    pub raw: f64,
    pub normalized: f64,
    pub mean_q: Option<f64>,
}

/// Min-max scaling to `[0, 1]`; an all-equal list maps to 0.5.
pub fn normalize(raw: &[f64]) -> Result<Vec<f64>> {
    if raw.is_empty() {
        return Err(QtaError::EmptyBatch);
    }
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(QtaError::NonFinite("uncertainty estimates"));
    }
    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi == lo {
        return Ok(vec![0.5; raw.len()]);
    }
    let span = hi - lo;
    Ok(raw.iter().map(|v| ((v - lo) / span).clamp(0.0, 1.0)).collect())
}

pub fn linear_weight(normalized: f64, slope: f64, intercept: f64) -> f64 {
    (slope * normalized + intercept).max(0.0)
}

/// Selection probabilities over a candidate set.
#[derive(Clone, Debug, PartialEq)]
pub struct SelectionDistribution {
    pub probabilities: Vec<f64>,
    /// Candidates removed by the achievability threshold.
    pub filtered: usize,
    /// True when every survivor had zero weight or none survived.
    pub fallback: bool,
}

/// Applies the optional threshold filter (`mean_q < threshold * t_max`
/// drops a candidate) and the clipped linear weighting.
pub fn selection_distribution(
    normalized: &[f64],
    mean_q: Option<&[f64]>,
    params: &SelectionParams,
    t_max: f64,
) -> SelectionDistribution {
    let n = normalized.len();
    let cutoff = params.threshold * t_max;
    let survives: Vec<bool> = match mean_q {
        Some(q) => q.iter().map(|&v| !(v < cutoff)).collect(),
        None => vec![true; n],
    };
    let filtered = survives.iter().filter(|s| !**s).count();
    let mut weights: Vec<f64> = normalized
        .iter()
        .zip(&survives)
        .map(|(&e, &s)| if s { linear_weight(e, params.slope, params.intercept) } else { 0.0 })
        .collect();
    let total: f64 = weights.iter().sum();
    let mut fallback = false;
    if !(total > 0.0) || !total.is_finite() {
        fallback = true;
        let pool: Vec<bool> = if filtered == n { vec![true; n] } else { survives };
        let count = pool.iter().filter(|s| **s).count() as f64;
        weights = pool.iter().map(|&s| if s { 1.0 / count } else { 0.0 }).collect();
    } else {
        for w in &mut weights {
            *w /= total;
        }
    }
    SelectionDistribution {
        probabilities: weights,
        filtered,
        fallback,
    }
}

/// Inverse-CDF draw from a probability vector.
pub fn sample_index(probabilities: &[f64], rng: &mut Rng) -> usize {
    let u: f64 = rng.random::<f64>() * probabilities.iter().sum::<f64>();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probabilities.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

/// One selection event, with enough context to log it.
#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    pub goal: Vec2,
    pub chosen: usize,
    pub candidates: Vec<GoalCandidate>,
    pub distribution: SelectionDistribution,
    pub first_of_episode: bool,
}

impl Selection {
    pub fn mean_raw(&self) -> f64 {
        self.candidates.iter().map(|c| c.raw).sum::<f64>() / self.candidates.len() as f64
    }

    pub fn max_raw(&self) -> f64 {
        self.candidates.iter().map(|c| c.raw).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Draws candidates from the buffer, scores them against `g_env`, and
/// samples one. `state` is the agent's position, used by the threshold
/// filter on the first goal of an episode.
#[allow(clippy::too_many_arguments)]
pub fn select_goal<F: Scalar>(
    buffer: &PrioritizedHindsightBuffer,
    ensemble: &CriticEnsemble<F>,
    state: Vec2,
    g_env: Vec2,
    first_of_episode: bool,
    params: &SelectionParams,
    t_max: f64,
    rng: &mut Rng,
) -> Result<Selection> {
    let pairs = buffer.sample_goal_candidates(params.n_candidates, rng)?;
    let d = params.probes.unwrap_or_else(|| ensemble.config().default_probes());
    let states: Vec<Vec2> = pairs.iter().map(|p| p.0).collect();
    let estimates = ensemble.state_uncertainty_batch(&states, g_env, d, rng)?;
    let raw: Vec<f64> = estimates.iter().map(|e| e.epsilon).collect();
    let normalized = normalize(&raw)?;
    let mean_q = if first_of_episode {
        let goals: Vec<Vec2> = pairs.iter().map(|p| p.1).collect();
        Some(ensemble.mean_q_batch(&vec![state; goals.len()], &goals, d, rng)?)
    } else {
        None
    };
    let distribution = selection_distribution(&normalized, mean_q.as_deref(), params, t_max);
    let chosen = sample_index(&distribution.probabilities, rng);
    let candidates = pairs
        .iter()
        .enumerate()
        .map(|(k, &(s, g))| GoalCandidate {
            state: s,
            goal: g,
            raw: raw[k],
            normalized: normalized[k],
            mean_q: mean_q.as_ref().map(|q| q[k]),
        })
        .collect();
    Ok(Selection {
        goal: pairs[chosen].1,
        chosen,
        candidates,
        distribution,
        first_of_episode,
    })
}

/// Whether a success at `steps_elapsed` leaves room for another goal.
pub fn can_resample(steps_elapsed: u32, max_episode_steps: u32) -> bool {
    steps_elapsed < max_episode_steps
}
