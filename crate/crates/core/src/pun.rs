//! Predictive Uncertainty Networks: an ensemble of critics whose last hidden
//! state feeds both a Q head and a predictive head regressing the next
//! observation. Disagreement among the predictive heads is the epistemic
//! uncertainty estimate.
//!
//! Each member owns three Adam states: one for the critic loss over the whole
//! critic, one for the predictive loss over the critic backbone, and one for
//! the predictive head itself.

use log::warn;
use ndarray::{Array2, Axis};
use rand::seq::index;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::agent::Actor;
use crate::error::{QtaError, Result};
use crate::features::{critic_input, ObsScale, CRITIC_INPUT_DIM, OBS_DIM};
use crate::maze::Vec2;
use crate::nn::{cast, Activation, AdamConfig, AdamState, Mlp, Scalar};
use crate::replay::Transition;
use crate::rng::{splitmix64, Rng};

/// Rows evaluated per network call when probing many states.
const PROBE_CHUNK: usize = 8192;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnsembleMode {
    /// Shared target from the minimum over a random pair of target critics.
    #[default]
    JointMinPair,
    /// Shared min-pair target, per-member Bernoulli masks on the loss.
    Bootstrapped,
    /// Independent per-member targets.
    DeepEnsemble,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UncertaintySource {
    #[default]
    PredictiveStd,
    QStd,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetPolicy {
    #[default]
    Target,
    Online,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnsembleConfig {
    pub members: usize,
    pub hidden_size: usize,
    pub hidden_layers: usize,
    pub mode: EnsembleMode,
    pub keep_prob: f64,
    pub source: UncertaintySource,
    pub noise_sigma: f64,
    pub gamma: f64,
    pub critic_lr: f64,
    pub predictive_lr: f64,
    pub rho: f64,
    pub stop_gradient: bool,
    pub target_policy: TargetPolicy,
    pub mask_seed: u64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            members: 3,
            hidden_size: 256,
            hidden_layers: 2,
            mode: EnsembleMode::JointMinPair,
            keep_prob: 0.8,
            source: UncertaintySource::PredictiveStd,
            noise_sigma: 0.0,
            gamma: 0.99,
            critic_lr: 2e-3,
            predictive_lr: 5e-3,
            rho: 0.95,
            stop_gradient: false,
            target_policy: TargetPolicy::Target,
            mask_seed: 0,
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.members == 0 {
            return Err(QtaError::invalid("ensemble.members", "must be at least 1"));
        }
        if self.hidden_size == 0 || self.hidden_layers == 0 {
            return Err(QtaError::invalid("ensemble.hidden", "need at least one hidden layer"));
        }
        if !(0.0..=1.0).contains(&self.keep_prob) || self.keep_prob == 0.0 {
            return Err(QtaError::invalid("ensemble.keep_prob", "must lie in (0, 1]"));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(QtaError::invalid("ensemble.noise_sigma", "must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(QtaError::invalid("ensemble.gamma", "must lie in [0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(QtaError::invalid("ensemble.rho", "must lie in [0, 1]"));
        }
        for (name, lr) in [("ensemble.critic_lr", self.critic_lr), ("ensemble.predictive_lr", self.predictive_lr)] {
            if !(lr > 0.0) || !lr.is_finite() {
                return Err(QtaError::invalid(name, "must be positive"));
            }
        }
        if self.mode != EnsembleMode::DeepEnsemble && self.members == 2 {
            // a pair drawn from two members is always both of them; still valid
        }
        Ok(())
    }

    fn critic_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![CRITIC_INPUT_DIM];
        sizes.extend(std::iter::repeat_n(self.hidden_size, self.hidden_layers));
        sizes.push(1);
        sizes
    }

    /// Probe count used when none is configured explicitly.
    pub fn default_probes(&self) -> usize {
        match self.mode {
            EnsembleMode::JointMinPair => 8,
            EnsembleMode::Bootstrapped | EnsembleMode::DeepEnsemble => 16,
        }
    }
}

/// One critic with its predictive head, target copy, and optimisers.
#[derive(Clone, Debug)]
pub struct Member<F: Scalar> {
    pub critic: Mlp<F>,
    pub target: Mlp<F>,
    pub predictor: Mlp<F>,
    pub critic_opt: AdamState<F>,
    pub backbone_opt: AdamState<F>,
    pub predictor_opt: AdamState<F>,
}

impl<F: Scalar> Member<F> {
    fn new(config: &EnsembleConfig, rng: &mut Rng) -> Result<Self> {
        let critic = Mlp::new(&config.critic_sizes(), Activation::Identity, 0.1, rng)?;
        let predictor = Mlp::new(&[config.hidden_size, OBS_DIM], Activation::Identity, 1.0, rng)?;
        Ok(Self::from_networks(critic, predictor))
    }

    pub fn from_networks(critic: Mlp<F>, predictor: Mlp<F>) -> Self {
        let adam = AdamConfig::default();
        Self {
            target: critic.clone(),
            critic_opt: AdamState::new(&critic, adam),
            backbone_opt: AdamState::new(&critic, adam),
            predictor_opt: AdamState::new(&predictor, adam),
            critic,
            predictor,
        }
    }

    /// Q values and next-observation predictions from one shared latent.
    pub fn evaluate(&self, x: &Array2<F>) -> Result<(Array2<F>, Array2<F>)> {
        let latent = self.critic.latent(x.view())?;
        let q = self.critic.final_head(latent.view())?;
        let pred = self.predictor.predict(latent.view())?;
        Ok((q, pred))
    }
}

/// Per-transition, per-member regression targets (`batch x members`).
#[derive(Clone, Debug, PartialEq)]
pub struct Targets<F> {
    pub values: Array2<F>,
    /// The member pair whose minimum formed a shared target.
    pub pair: Option<[usize; 2]>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CriticReport {
    pub losses: Vec<f64>,
    /// Mean absolute TD error across members, per transition.
    pub td_errors: Vec<f64>,
    pub applied: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UncertaintyEstimate {
    /// Member disagreement, always non-negative.
    pub raw: f64,
    /// `raw` plus any configured injection noise.
    pub epsilon: f64,
    pub probes: usize,
    pub goal: Vec2,
}

#[derive(Clone, Debug)]
pub struct CriticEnsemble<F: Scalar> {
    members: Vec<Member<F>>,
    config: EnsembleConfig,
    scale: ObsScale,
}

pub fn population_std(values: &[f64]) -> f64 {
    if values.iter().all(|&v| v == values[0]) {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}

/// `d` probe actions per state, uniform over the action box, state-major.
pub fn draw_probe_actions(states: usize, d: usize, rng: &mut Rng) -> Vec<Vec2> {
    (0..states * d)
        .map(|_| [rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)])
        .collect()
}

impl<F: Scalar> CriticEnsemble<F> {
    pub fn new(config: EnsembleConfig, scale: ObsScale, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let members = (0..config.members)
            .map(|_| Member::new(&config, rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            members,
            config,
            scale,
        })
    }

    pub fn from_members(members: Vec<Member<F>>, config: EnsembleConfig, scale: ObsScale) -> Result<Self> {
        config.validate()?;
        if members.len() != config.members {
            return Err(QtaError::invalid("members", "count differs from config"));
        }
        let sizes = members[0].critic.sizes();
        for m in &members {
            if m.critic.sizes() != sizes || m.target.sizes() != sizes {
                return Err(QtaError::LayoutMismatch("ensemble members differ in topology".into()));
            }
            if m.predictor.input_dim() != m.critic.latent_dim().unwrap_or(0) {
                return Err(QtaError::LayoutMismatch("predictor does not consume the critic latent".into()));
            }
        }
        Ok(Self {
            members,
            config,
            scale,
        })
    }

    pub fn config(&self) -> &EnsembleConfig {
        &self.config
    }

    pub fn config_mut(&mut self) -> &mut EnsembleConfig {
        &mut self.config
    }

    pub fn scale(&self) -> &ObsScale {
        &self.scale
    }

    pub fn members(&self) -> &[Member<F>] {
        &self.members
    }

    pub fn members_mut(&mut self) -> &mut [Member<F>] {
        &mut self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Bootstrap mask of `member` for a stored transition; fixed for the
    /// transition's lifetime.
    pub fn mask(&self, member: usize, t: &Transition) -> bool {
        if self.config.mode != EnsembleMode::Bootstrapped {
            return true;
        }
        let h = splitmix64(
            self.config.mask_seed
                ^ splitmix64(t.trajectory ^ splitmix64(u64::from(t.index) ^ splitmix64(member as u64 + 1))),
        );
        ((h >> 11) as f64 / (1u64 << 53) as f64) < self.config.keep_prob
    }

    fn draw_pair(&self, rng: &mut Rng) -> [usize; 2] {
        if self.members.len() == 1 {
            return [0, 0];
        }
        let picked = index::sample(rng, self.members.len(), 2);
        [picked.index(0), picked.index(1)]
    }

    /// Bellman targets `r + gamma (1 - terminal) min_{i in M} Q_targ,i(s', a', g)`.
    pub fn compute_target(&self, batch: &[Transition], actor: &Actor<F>, rng: &mut Rng) -> Result<Targets<F>> {
        if batch.is_empty() {
            return Err(QtaError::EmptyBatch);
        }
        let next: Vec<Vec2> = batch.iter().map(|t| t.next_obs).collect();
        let goals: Vec<Vec2> = batch.iter().map(|t| t.goal).collect();
        let next_actions = match self.config.target_policy {
            TargetPolicy::Target => actor.target_actions(&next, &goals)?,
            TargetPolicy::Online => actor.actions(&next, &goals)?,
        };
        let x = crate::features::critic_input_with_actions(&self.scale, &next, &next_actions, &goals);
        let gamma: F = cast(self.config.gamma);
        let g = self.members.len();
        let mut values = Array2::zeros((batch.len(), g));
        let bootstrap = |t: &Transition, q: F| -> F {
            let live: F = if t.terminal { F::zero() } else { F::one() };
            cast::<F>(t.reward) + gamma * live * q
        };
        match self.config.mode {
            EnsembleMode::DeepEnsemble => {
                for (i, m) in self.members.iter().enumerate() {
                    let q = m.target.predict(x.view())?;
                    for (b, t) in batch.iter().enumerate() {
                        values[[b, i]] = bootstrap(t, q[[b, 0]]);
                    }
                }
                Ok(Targets { values, pair: None })
            }
            EnsembleMode::JointMinPair | EnsembleMode::Bootstrapped => {
                let pair = self.draw_pair(rng);
                let qa = self.members[pair[0]].target.predict(x.view())?;
                let qb = self.members[pair[1]].target.predict(x.view())?;
                for (b, t) in batch.iter().enumerate() {
                    let y = bootstrap(t, qa[[b, 0]].min(qb[[b, 0]]));
                    values.row_mut(b).fill(y);
                }
                Ok(Targets {
                    values,
                    pair: Some(pair),
                })
            }
        }
    }

    /// One Adam step per member on the (importance- and mask-weighted)
    /// squared error to the targets.
    pub fn critic_update(
        &mut self,
        batch: &[Transition],
        targets: &Targets<F>,
        weights: Option<&[f64]>,
    ) -> Result<CriticReport> {
        if batch.is_empty() {
            return Err(QtaError::EmptyBatch);
        }
        let n = batch.len();
        if targets.values.dim() != (n, self.members.len()) {
            return Err(QtaError::DimensionMismatch {
                expected: n,
                actual: targets.values.nrows(),
            });
        }
        if let Some(w) = weights {
            if w.len() != n {
                return Err(QtaError::DimensionMismatch {
                    expected: n,
                    actual: w.len(),
                });
            }
        }
        let x = self.batch_input(batch);
        let inv_n = 1.0 / n as f64;
        let lr = self.config.critic_lr;
        let mut report = CriticReport {
            losses: Vec::with_capacity(self.members.len()),
            td_errors: vec![0.0; n],
            applied: true,
        };
        let masks: Vec<Vec<bool>> = (0..self.members.len())
            .map(|i| batch.iter().map(|t| self.mask(i, t)).collect())
            .collect();
        let g = self.members.len() as f64;
        for (i, member) in self.members.iter_mut().enumerate() {
            let (q, cache) = member.critic.forward(x.view())?;
            let mut dq = Array2::<F>::zeros((n, 1));
            let mut loss = 0.0;
            for b in 0..n {
                let diff = (q[[b, 0]] - targets.values[[b, i]]).to_f64().unwrap_or(f64::NAN);
                report.td_errors[b] += diff.abs() / g;
                let w = weights.map_or(1.0, |w| w[b]) * if masks[i][b] { 1.0 } else { 0.0 };
                loss += w * diff * diff * inv_n;
                dq[[b, 0]] = cast(2.0 * w * diff * inv_n);
            }
            if !loss.is_finite() {
                warn!("non-finite critic loss for member {i}, skipping update");
                report.applied = false;
                report.losses.push(loss);
                continue;
            }
            let (grads, _) = member.critic.backward(&cache, &dq)?;
            report.applied &= member.critic_opt.apply(&mut member.critic, &grads, lr)?;
            report.losses.push(loss);
        }
        Ok(report)
    }

    /// One Adam step per member regressing the next observation from the
    /// critic latent; gradients reach the backbone unless stopped.
    pub fn predictive_update(&mut self, batch: &[Transition]) -> Result<Vec<f64>> {
        if batch.is_empty() {
            return Err(QtaError::EmptyBatch);
        }
        let n = batch.len();
        let x = self.batch_input(batch);
        let targets: Vec<Vec2> = batch.iter().map(|t| self.scale.normalize(t.next_obs)).collect();
        let inv_n = 1.0 / n as f64;
        let lr = self.config.predictive_lr;
        let stop_gradient = self.config.stop_gradient;
        let mut losses = Vec::with_capacity(self.members.len());
        for (i, member) in self.members.iter_mut().enumerate() {
            let (latent, backbone_cache) = member.critic.forward_to_latent(x.view())?;
            let (pred, head_cache) = member.predictor.forward(latent.view())?;
            let mut dpred = Array2::<F>::zeros((n, OBS_DIM));
            let mut loss = 0.0;
            for b in 0..n {
                for c in 0..OBS_DIM {
                    let diff = pred[[b, c]].to_f64().unwrap_or(f64::NAN) - targets[b][c];
                    loss += diff * diff * inv_n;
                    dpred[[b, c]] = cast(2.0 * diff * inv_n);
                }
            }
            losses.push(loss);
            if !loss.is_finite() {
                warn!("non-finite predictive loss for member {i}, skipping update");
                continue;
            }
            let (head_grads, dlatent) = member.predictor.backward(&head_cache, &dpred)?;
            if !stop_gradient {
                let (backbone_grads, _) = member.critic.backward(&backbone_cache, &dlatent)?;
                member
                    .backbone_opt
                    .apply(&mut member.critic, &backbone_grads, lr)?;
            }
            member
                .predictor_opt
                .apply(&mut member.predictor, &head_grads, lr)?;
        }
        Ok(losses)
    }

    /// Polyak-averages every target critic toward its online critic.
    pub fn update_targets(&mut self) -> Result<()> {
        let rho: F = cast(self.config.rho);
        for m in &mut self.members {
            m.target.polyak_from(&m.critic, rho)?;
        }
        Ok(())
    }

    fn batch_input(&self, batch: &[Transition]) -> Array2<F> {
        let obs: Vec<Vec2> = batch.iter().map(|t| t.obs).collect();
        let actions: Vec<Vec2> = batch.iter().map(|t| t.action).collect();
        let goals: Vec<Vec2> = batch.iter().map(|t| t.goal).collect();
        critic_input(&self.scale, &obs, &actions, &goals)
    }

    /// Q values of every member, `rows x members`.
    pub fn q_values(&self, obs: &[Vec2], actions: &[Vec2], goals: &[Vec2]) -> Result<Array2<f64>> {
        let x = critic_input::<F>(&self.scale, obs, actions, goals);
        let mut out = Array2::zeros((obs.len(), self.members.len()));
        for (i, m) in self.members.iter().enumerate() {
            let q = m.critic.predict(x.view())?;
            for r in 0..obs.len() {
                out[[r, i]] = q[[r, 0]].to_f64().unwrap_or(f64::NAN);
            }
        }
        Ok(out)
    }

    /// Per-row member disagreement for explicit probe rows.
    ///
    /// Predictive source: population std across members of each predicted
    /// component, averaged over components. Q source: population std of the
    /// members' Q values.
    pub fn row_disagreement(&self, obs: &[Vec2], actions: &[Vec2], goals: &[Vec2]) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(obs.len());
        let g = self.members.len();
        for start in (0..obs.len()).step_by(PROBE_CHUNK) {
            let end = (start + PROBE_CHUNK).min(obs.len());
            let x = critic_input::<F>(&self.scale, &obs[start..end], &actions[start..end], &goals[start..end]);
            let rows = end - start;
            let width = match self.config.source {
                UncertaintySource::PredictiveStd => OBS_DIM,
                UncertaintySource::QStd => 1,
            };
            // member-major outputs: outputs[i] is rows x width
            let mut outputs = Vec::with_capacity(g);
            for m in &self.members {
                let latent = m.critic.latent(x.view())?;
                let y = match self.config.source {
                    UncertaintySource::PredictiveStd => m.predictor.predict(latent.view())?,
                    UncertaintySource::QStd => m.critic.final_head(latent.view())?,
                };
                outputs.push(y);
            }
            let mut column = vec![0.0; g];
            for r in 0..rows {
                let mut total = 0.0;
                for c in 0..width {
                    for (i, y) in outputs.iter().enumerate() {
                        column[i] = y[[r, c]].to_f64().unwrap_or(f64::NAN);
                    }
                    total += population_std(&column);
                }
                out.push(total / width as f64);
            }
        }
        Ok(out)
    }

    /// Uncertainty of each state under explicit probe actions (`d` per
    /// state, state-major) and per-state goals.
    pub fn uncertainty_with_actions(&self, states: &[Vec2], goals: &[Vec2], actions: &[Vec2], d: usize) -> Result<Vec<f64>> {
        if d == 0 {
            return Err(QtaError::invalid("d", "need at least one probe action"));
        }
        if actions.len() != states.len() * d || goals.len() != states.len() {
            return Err(QtaError::DimensionMismatch {
                expected: states.len() * d,
                actual: actions.len(),
            });
        }
        let obs: Vec<Vec2> = states.iter().flat_map(|s| std::iter::repeat_n(*s, d)).collect();
        let row_goals: Vec<Vec2> = goals.iter().flat_map(|g| std::iter::repeat_n(*g, d)).collect();
        let rows = self.row_disagreement(&obs, actions, &row_goals)?;
        Ok(rows.chunks(d).map(|c| c.iter().sum::<f64>() / d as f64).collect())
    }

    pub fn state_uncertainty(&self, state: Vec2, goal: Vec2, d: usize, rng: &mut Rng) -> Result<UncertaintyEstimate> {
        Ok(self.state_uncertainty_batch(&[state], goal, d, rng)?[0])
    }

    /// Batched estimator; draws per state exactly what the scalar path
    /// would draw, in order: `d` probe actions, then the noise sample.
    pub fn state_uncertainty_batch(
        &self,
        states: &[Vec2],
        goal: Vec2,
        d: usize,
        rng: &mut Rng,
    ) -> Result<Vec<UncertaintyEstimate>> {
        let goals = vec![goal; states.len()];
        self.uncertainty_per_goal(states, &goals, d, rng)
    }

    pub fn uncertainty_per_goal(
        &self,
        states: &[Vec2],
        goals: &[Vec2],
        d: usize,
        rng: &mut Rng,
    ) -> Result<Vec<UncertaintyEstimate>> {
        if d == 0 {
            return Err(QtaError::invalid("d", "need at least one probe action"));
        }
        if states.is_empty() {
            return Err(QtaError::EmptyBatch);
        }
        let sigma = self.config.noise_sigma;
        let noise = if sigma > 0.0 {
            Some(Normal::new(0.0, sigma).map_err(|e| QtaError::invalid("noise_sigma", e.to_string()))?)
        } else {
            None
        };
        let mut actions = Vec::with_capacity(states.len() * d);
        let mut noises = Vec::with_capacity(states.len());
        for _ in states {
            actions.extend(draw_probe_actions(1, d, rng));
            noises.push(noise.as_ref().map_or(0.0, |n| n.sample(rng)));
        }
        let raw = self.uncertainty_with_actions(states, goals, &actions, d)?;
        Ok(raw
            .into_iter()
            .zip(noises)
            .zip(goals)
            .map(|((raw, noise), goal)| UncertaintyEstimate {
                raw,
                epsilon: raw + noise,
                probes: d,
                goal: *goal,
            })
            .collect())
    }

    /// Mean over members and `d` random actions of `Q_i(s, a_j, g)`.
    pub fn mean_q(&self, state: Vec2, goal: Vec2, d: usize, rng: &mut Rng) -> Result<f64> {
        Ok(self.mean_q_batch(&[state], &[goal], d, rng)?[0])
    }

    pub fn mean_q_batch(&self, states: &[Vec2], goals: &[Vec2], d: usize, rng: &mut Rng) -> Result<Vec<f64>> {
        if d == 0 {
            return Err(QtaError::invalid("d", "need at least one probe action"));
        }
        if states.len() != goals.len() {
            return Err(QtaError::DimensionMismatch {
                expected: states.len(),
                actual: goals.len(),
            });
        }
        let actions = draw_probe_actions(states.len(), d, rng);
        let obs: Vec<Vec2> = states.iter().flat_map(|s| std::iter::repeat_n(*s, d)).collect();
        let row_goals: Vec<Vec2> = goals.iter().flat_map(|g| std::iter::repeat_n(*g, d)).collect();
        let mut sums = vec![0.0; states.len()];
        for start in (0..obs.len()).step_by(PROBE_CHUNK) {
            let end = (start + PROBE_CHUNK).min(obs.len());
            let q = self.q_values(&obs[start..end], &actions[start..end], &row_goals[start..end])?;
            for (r, row) in q.axis_iter(Axis(0)).enumerate() {
                sums[(start + r) / d] += row.sum();
            }
        }
        let denom = (d * self.members.len()) as f64;
        Ok(sums.into_iter().map(|s| s / denom).collect())
    }

    /// Average Q over members for given actions, one value per row.
    pub fn mean_q_at(&self, obs: &[Vec2], actions: &[Vec2], goals: &[Vec2]) -> Result<Vec<f64>> {
        let q = self.q_values(obs, actions, goals)?;
        let g = self.members.len() as f64;
        Ok(q.axis_iter(Axis(0)).map(|r| r.sum() / g).collect())
    }

    /// The ensemble's critics evaluated on one input matrix (used by the
    /// actor update); returns each member's output and forward cache.
    pub(crate) fn member_critics(&self) -> impl Iterator<Item = &Mlp<F>> {
        self.members.iter().map(|m| &m.critic)
    }

    pub fn all_finite(&self) -> bool {
        self.members
            .iter()
            .all(|m| m.critic.all_finite() && m.target.all_finite() && m.predictor.all_finite())
    }
}
