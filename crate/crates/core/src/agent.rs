//! Deterministic goal-conditioned policy trained against the critic ensemble.

use log::warn;
use ndarray::{s, Array2};
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{QtaError, Result};
use crate::features::{actor_input, critic_input_with_actions, ObsScale, ACTION_DIM, ACTOR_INPUT_DIM, OBS_DIM};
use crate::maze::Vec2;
use crate::nn::{cast, Activation, AdamConfig, AdamState, Mlp, Scalar};
use crate::pun::CriticEnsemble;
use crate::replay::Transition;
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActMode {
    Train,
    Eval,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExplorationPolicy {
    pub noise_std: f64,
    pub random_prob: f64,
    pub warmup_steps: u64,
}

impl Default for ExplorationPolicy {
    fn default() -> Self {
        Self {
            noise_std: 0.2,
            random_prob: 0.3,
            warmup_steps: 1000,
        }
    }
}

impl ExplorationPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.random_prob) {
            return Err(QtaError::invalid("explore.random_prob", "must lie in [0, 1]"));
        }
        if !(self.noise_std >= 0.0) || !self.noise_std.is_finite() {
            return Err(QtaError::invalid("explore.noise_std", "must be non-negative"));
        }
        Ok(())
    }
}

pub fn uniform_action(rng: &mut Rng) -> Vec2 {
    [rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)]
}

#[derive(Clone, Debug)]
pub struct Actor<F: Scalar> {
    pub net: Mlp<F>,
    pub target: Mlp<F>,
    pub opt: AdamState<F>,
    pub lr: f64,
    scale: ObsScale,
}

impl<F: Scalar> Actor<F> {
    pub fn new(hidden: &[usize], scale: ObsScale, lr: f64, rng: &mut Rng) -> Result<Self> {
        let mut sizes = vec![ACTOR_INPUT_DIM];
        sizes.extend_from_slice(hidden);
        sizes.push(ACTION_DIM);
        let net = Mlp::new(&sizes, Activation::Tanh, 1.0, rng)?;
        Self::from_network(net, scale, lr)
    }

    pub fn from_network(net: Mlp<F>, scale: ObsScale, lr: f64) -> Result<Self> {
        if net.input_dim() != ACTOR_INPUT_DIM || net.output_dim() != ACTION_DIM {
            return Err(QtaError::LayoutMismatch("actor must map state and goal to a 2D action".into()));
        }
        if !(lr > 0.0) {
            return Err(QtaError::invalid("train.actor_lr", "must be positive"));
        }
        Ok(Self {
            target: net.clone(),
            opt: AdamState::new(&net, AdamConfig::default()),
            net,
            lr,
            scale,
        })
    }

    pub fn scale(&self) -> &ObsScale {
        &self.scale
    }

    pub fn actions(&self, obs: &[Vec2], goals: &[Vec2]) -> Result<Array2<F>> {
        self.net.predict(actor_input::<F>(&self.scale, obs, goals).view())
    }

    pub fn target_actions(&self, obs: &[Vec2], goals: &[Vec2]) -> Result<Array2<F>> {
        self.target.predict(actor_input::<F>(&self.scale, obs, goals).view())
    }

    pub fn policy(&self, state: Vec2, goal: Vec2) -> Result<Vec2> {
        let a = self.actions(&[state], &[goal])?;
        Ok([to_f64(a[[0, 0]]), to_f64(a[[0, 1]])])
    }

    /// Action for one state. Training mode mixes in uniform actions and
    /// Gaussian noise; `env_step` below the warm-up count forces uniform.
    pub fn act(
        &self,
        state: Vec2,
        goal: Vec2,
        mode: ActMode,
        explore: &ExplorationPolicy,
        env_step: u64,
        rng: &mut Rng,
    ) -> Result<Vec2> {
        if mode == ActMode::Eval {
            return self.policy(state, goal);
        }
        if env_step < explore.warmup_steps || rng.random::<f64>() < explore.random_prob {
            return Ok(uniform_action(rng));
        }
        let mut a = self.policy(state, goal)?;
        if explore.noise_std > 0.0 {
            let noise = Normal::new(0.0, explore.noise_std).map_err(|e| QtaError::invalid("explore.noise_std", e.to_string()))?;
            for c in &mut a {
                *c = (*c + noise.sample(rng)).clamp(-1.0, 1.0);
            }
        }
        Ok(a)
    }

    /// One Adam step ascending the ensemble-mean Q of the policy's own
    /// actions. Returns the loss `-mean Q` before the step.
    pub fn actor_update(&mut self, ensemble: &CriticEnsemble<F>, batch: &[Transition]) -> Result<f64> {
        if batch.is_empty() {
            return Err(QtaError::EmptyBatch);
        }
        let obs: Vec<Vec2> = batch.iter().map(|t| t.obs).collect();
        let goals: Vec<Vec2> = batch.iter().map(|t| t.goal).collect();
        let (loss, da, cache) = self.policy_gradient(ensemble, &obs, &goals)?;
        if !loss.is_finite() {
            warn!("non-finite actor loss, skipping update");
            return Ok(loss);
        }
        let (grads, _) = self.net.backward(&cache, &da)?;
        self.opt.apply(&mut self.net, &grads, self.lr)?;
        Ok(loss)
    }

    /// Loss and its gradient with respect to the actor's output.
    pub fn policy_gradient(
        &self,
        ensemble: &CriticEnsemble<F>,
        obs: &[Vec2],
        goals: &[Vec2],
    ) -> Result<(f64, Array2<F>, crate::nn::ForwardCache<F>)> {
        let n = obs.len();
        let x = actor_input::<F>(&self.scale, obs, goals);
        let (a, cache) = self.net.forward(x.view())?;
        let xc = critic_input_with_actions(ensemble.scale(), obs, &a, goals);
        let g = ensemble.len();
        let coeff: F = cast(-1.0 / (n * g) as f64);
        let upstream = Array2::from_elem((n, 1), coeff);
        let mut da = Array2::<F>::zeros((n, ACTION_DIM));
        let mut total_q = 0.0;
        for critic in ensemble.member_critics() {
            let (q, ccache) = critic.forward(xc.view())?;
            total_q += q.iter().map(|&v| to_f64(v)).sum::<f64>();
            let dx = critic.backward_input(&ccache, &upstream)?;
            da.zip_mut_with(&dx.slice(s![.., OBS_DIM..OBS_DIM + ACTION_DIM]), |d, &v| *d = *d + v);
        }
        Ok((-total_q / (n * g) as f64, da, cache))
    }

    pub fn update_target(&mut self, rho: f64) -> Result<()> {
        self.target.polyak_from(&self.net, cast(rho))
    }
}

fn to_f64<F: Scalar>(v: F) -> f64 {
    v.to_f64().unwrap_or(f64::NAN)
}

/// Critic ensemble and actor trained together.
#[derive(Clone, Debug)]
pub struct Agent<F: Scalar> {
    pub ensemble: CriticEnsemble<F>,
    pub actor: Actor<F>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct UpdateReport {
    pub critic_loss: f64,
    pub predictive_loss: f64,
    pub actor_loss: f64,
    pub td_errors: Vec<f64>,
}

impl<F: Scalar> Agent<F> {
    /// Polyak-tracks every target network with the ensemble's coefficient.
    pub fn update_targets(&mut self) -> Result<()> {
        self.ensemble.update_targets()?;
        self.actor.update_target(self.ensemble.config().rho)
    }

    /// Target, critic, predictive, actor, and target-tracking steps on one
    /// batch.
    pub fn update(&mut self, batch: &[Transition], weights: Option<&[f64]>, rng: &mut Rng) -> Result<UpdateReport> {
        let targets = self.ensemble.compute_target(batch, &self.actor, rng)?;
        let critic = self.ensemble.critic_update(batch, &targets, weights)?;
        let predictive = self.ensemble.predictive_update(batch)?;
        let actor_loss = self.actor.actor_update(&self.ensemble, batch)?;
        self.update_targets()?;
        Ok(UpdateReport {
            critic_loss: mean(&critic.losses),
            predictive_loss: mean(&predictive),
            actor_loss,
            td_errors: critic.td_errors,
        })
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}
