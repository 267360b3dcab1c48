//! Trajectory replay with hindsight relabeling and sum-tree prioritized
//! sampling.

use std::collections::VecDeque;
use std::io::Write;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{QtaError, Result};
use crate::maze::{goal_reward, Vec2, DEFAULT_GOAL_RADIUS};
use crate::rng::Rng;

/// One environment step, tagged with its trajectory and position in it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transition {
    pub obs: Vec2,
    pub action: Vec2,
    pub reward: f64,
    pub next_obs: Vec2,
    pub goal: Vec2,
    pub achieved: Vec2,
    pub terminal: bool,
    pub trajectory: u64,
    pub index: u32,
}

/// Complete binary tree of priority sums over a fixed number of leaves.
#[derive(Clone, Debug)]
pub struct SumTree {
    leaves: usize,
    sums: Vec<f64>,
    maxes: Vec<f64>,
}

impl SumTree {
    pub fn new(capacity: usize) -> Self {
        let leaves = capacity.max(1).next_power_of_two();
        Self {
            leaves,
            sums: vec![0.0; 2 * leaves],
            maxes: vec![0.0; 2 * leaves],
        }
    }

    pub fn capacity(&self) -> usize {
        self.leaves
    }

    pub fn total(&self) -> f64 {
        self.sums[1]
    }

    /// Largest leaf value.
    pub fn max(&self) -> f64 {
        self.maxes[1]
    }

    pub fn get(&self, leaf: usize) -> f64 {
        self.sums[self.leaves + leaf]
    }

    pub fn set(&mut self, leaf: usize, value: f64) {
        debug_assert!(value >= 0.0 && value.is_finite());
        let mut node = self.leaves + leaf;
        self.sums[node] = value;
        self.maxes[node] = value;
        while node > 1 {
            node /= 2;
            self.sums[node] = self.sums[2 * node] + self.sums[2 * node + 1];
            self.maxes[node] = self.maxes[2 * node].max(self.maxes[2 * node + 1]);
        }
    }

    /// Leaf whose cumulative range `[prefix_before, prefix_before + p)`
    /// contains `value`. Never returns a zero-priority leaf while the tree
    /// holds positive mass.
    pub fn find(&self, mut value: f64) -> usize {
        let mut node = 1;
        while node < self.leaves {
            let left = self.sums[2 * node];
            let right = self.sums[2 * node + 1];
            if value < left || right == 0.0 {
                node *= 2;
            } else {
                value -= left;
                node = 2 * node + 1;
            }
        }
        node - self.leaves
    }

    /// Checks that every internal node equals the sum of its children.
    pub fn is_consistent(&self) -> bool {
        (1..self.leaves).all(|n| {
            self.sums[n] == self.sums[2 * n] + self.sums[2 * n + 1]
                && self.maxes[n] == self.maxes[2 * n].max(self.maxes[2 * n + 1])
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BufferMode {
    #[default]
    UncertaintyPer,
    TdErrorPer,
    UniformHer,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriorityState {
    #[default]
    Next,
    Current,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReplayConfig {
    pub capacity: usize,
    pub mode: BufferMode,
    pub her_k: u32,
    pub alpha: f64,
    pub beta_initial: f64,
    pub beta_steps: u64,
    pub priority_floor: f64,
    pub priority_state: PriorityState,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        Self {
            capacity: 1_000_000,
            mode: BufferMode::UncertaintyPer,
            her_k: 4,
            alpha: 1.0,
            beta_initial: 0.3,
            beta_steps: 200_000,
            priority_floor: 1e-6,
            priority_state: PriorityState::Next,
        }
    }
}

impl ReplayConfig {
    pub fn validate(&self) -> Result<()> {
        if self.capacity == 0 {
            return Err(QtaError::invalid("replay.capacity", "must be positive"));
        }
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(QtaError::invalid("replay.alpha", "must be a non-negative number"));
        }
        if !(0.0..=1.0).contains(&self.beta_initial) {
            return Err(QtaError::invalid("replay.beta_initial", "must lie in [0, 1]"));
        }
        if !(self.priority_floor > 0.0) {
            return Err(QtaError::invalid("replay.priority_floor", "must be positive"));
        }
        Ok(())
    }

    pub fn relabel_probability(&self) -> f64 {
        let k = f64::from(self.her_k);
        k / (k + 1.0)
    }

    /// Importance exponent at environment step `t`.
    pub fn beta_at(&self, t: u64) -> f64 {
        beta_at(self.beta_initial, self.beta_steps, t)
    }
}

/// Linear ramp from `beta_initial` at 0 to 1 at `horizon`, then 1.
pub fn beta_at(beta_initial: f64, horizon: u64, t: u64) -> f64 {
    if horizon == 0 || t >= horizon {
        return 1.0;
    }
    let f = t as f64 / horizon as f64;
    beta_initial * (1.0 - f) + f
}

#[derive(Clone, Copy, Debug)]
struct Slot {
    transition: Transition,
    start: usize,
    len: u32,
}

#[derive(Clone, Copy, Debug)]
struct Span {
    start: usize,
    len: usize,
}

/// A sampled minibatch. `sources[b]` is the in-trajectory index whose
/// achieved goal replaced the stored goal, when relabeled.
#[derive(Clone, Debug, Default)]
pub struct SampledBatch {
    pub transitions: Vec<Transition>,
    pub weights: Vec<f64>,
    pub leaves: Vec<usize>,
    pub relabeled: Vec<bool>,
    pub sources: Vec<Option<u32>>,
}

impl SampledBatch {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }
}

#[derive(Clone, Debug)]
pub struct PrioritizedHindsightBuffer {
    config: ReplayConfig,
    goal_radius: f64,
    slots: Vec<Option<Slot>>,
    tree: SumTree,
    spans: VecDeque<Span>,
    head: usize,
    size: usize,
}

impl PrioritizedHindsightBuffer {
    pub fn new(config: ReplayConfig, goal_radius: f64) -> Result<Self> {
        config.validate()?;
        if !(goal_radius > 0.0) {
            return Err(QtaError::invalid("goal_radius", "must be positive"));
        }
        Ok(Self {
            slots: vec![None; config.capacity],
            tree: SumTree::new(config.capacity),
            spans: VecDeque::new(),
            head: 0,
            size: 0,
            goal_radius,
            config,
        })
    }

    pub fn with_defaults(capacity: usize) -> Result<Self> {
        Self::new(
            ReplayConfig {
                capacity,
                ..ReplayConfig::default()
            },
            DEFAULT_GOAL_RADIUS,
        )
    }

    pub fn config(&self) -> &ReplayConfig {
        &self.config
    }

    pub fn len(&self) -> usize {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }

    pub fn trajectories(&self) -> usize {
        self.spans.len()
    }

    pub fn tree(&self) -> &SumTree {
        &self.tree
    }

    /// Raw (pre-exponent) priority of a live leaf.
    pub fn priority(&self, leaf: usize) -> Option<f64> {
        self.slots.get(leaf)?.as_ref()?;
        let p = self.tree.get(leaf);
        Some(if self.config.alpha == 0.0 { p } else { p.powf(1.0 / self.config.alpha) })
    }

    pub fn transition(&self, leaf: usize) -> Option<&Transition> {
        self.slots.get(leaf)?.as_ref().map(|s| &s.transition)
    }

    fn max_priority(&self) -> f64 {
        if self.size == 0 {
            return 1.0;
        }
        let m = self.tree.max();
        if self.config.alpha == 0.0 {
            1.0
        } else {
            m.powf(1.0 / self.config.alpha)
        }
    }

    fn leaf_value(&self, priority: f64) -> f64 {
        priority.max(self.config.priority_floor).powf(self.config.alpha)
    }

    /// Appends a whole trajectory, evicting the oldest trajectories as
    /// needed. Transition indices are rewritten to `0..len`.
    pub fn store_trajectory(&mut self, trajectory: &[Transition]) -> Result<()> {
        let len = trajectory.len();
        if len == 0 {
            return Err(QtaError::EmptyBatch);
        }
        if len > self.config.capacity {
            return Err(QtaError::invalid("trajectory", "longer than buffer capacity"));
        }
        while self.config.capacity - self.size < len {
            self.evict_oldest();
        }
        let start = self.head;
        let initial = self.leaf_value(self.max_priority());
        for (i, t) in trajectory.iter().enumerate() {
            let slot = (start + i) % self.config.capacity;
            let mut t = *t;
            t.index = i as u32;
            self.slots[slot] = Some(Slot {
                transition: t,
                start,
                len: len as u32,
            });
            self.tree.set(slot, initial);
        }
        self.spans.push_back(Span { start, len });
        self.head = (start + len) % self.config.capacity;
        self.size += len;
        Ok(())
    }

    fn evict_oldest(&mut self) {
        if let Some(span) = self.spans.pop_front() {
            for i in 0..span.len {
                let slot = (span.start + i) % self.config.capacity;
                self.slots[slot] = None;
                self.tree.set(slot, 0.0);
            }
            self.size -= span.len;
        }
    }

    fn oldest_slot(&self) -> usize {
        self.spans.front().map_or(0, |s| s.start)
    }

    fn uniform_leaf(&self, rng: &mut Rng) -> usize {
        (self.oldest_slot() + rng.random_range(0..self.size)) % self.config.capacity
    }

    /// Draws `n` transitions, relabels each with probability `k/(k+1)`, and
    /// returns max-normalized importance weights.
    pub fn sample_batch(&self, n: usize, beta: f64, rng: &mut Rng) -> Result<SampledBatch> {
        if n == 0 {
            return Err(QtaError::EmptyBatch);
        }
        if self.size < n {
            return Err(QtaError::Underfilled {
                available: self.size,
                requested: n,
            });
        }
        let mut batch = SampledBatch {
            transitions: Vec::with_capacity(n),
            weights: Vec::with_capacity(n),
            leaves: Vec::with_capacity(n),
            relabeled: Vec::with_capacity(n),
            sources: Vec::with_capacity(n),
        };
        let uniform = self.config.mode == BufferMode::UniformHer;
        let total = self.tree.total();
        let segment = total / n as f64;
        for k in 0..n {
            let leaf = if uniform {
                self.uniform_leaf(rng)
            } else {
                let lo = segment * k as f64;
                let u = lo + rng.random::<f64>() * segment;
                self.tree.find(u.min(total))
            };
            batch.leaves.push(leaf);
        }
        let relabel_p = self.config.relabel_probability();
        let count = self.size as f64;
        for &leaf in &batch.leaves {
            let slot = self.slots[leaf].ok_or(QtaError::DeadIndex(leaf))?;
            let (t, source) = self.relabel(&slot, relabel_p, rng);
            batch.relabeled.push(source.is_some());
            batch.sources.push(source);
            batch.transitions.push(t);
            let w = if uniform {
                1.0
            } else {
                let p = self.tree.get(leaf) / total;
                (count * p).powf(-beta)
            };
            batch.weights.push(w);
        }
        let max_w = batch.weights.iter().copied().fold(0.0, f64::max);
        if max_w > 0.0 && max_w.is_finite() {
            for w in &mut batch.weights {
                *w /= max_w;
            }
        }
        Ok(batch)
    }

    fn relabel(&self, slot: &Slot, p: f64, rng: &mut Rng) -> (Transition, Option<u32>) {
        let mut t = slot.transition;
        if !(rng.random::<f64>() < p) {
            return (t, None);
        }
        let j = rng.random_range(t.index..slot.len);
        let source = self.slots[(slot.start + j as usize) % self.config.capacity]
            .as_ref()
            .expect("trajectory slots are contiguous and live");
        t.goal = source.transition.achieved;
        t.reward = goal_reward(t.achieved, t.goal, self.goal_radius);
        t.terminal = t.reward == 0.0;
        (t, Some(j))
    }

    /// Sets leaf priorities, floored at the configured minimum.
    pub fn update_priorities(&mut self, leaves: &[usize], priorities: &[f64]) -> Result<()> {
        if leaves.len() != priorities.len() {
            return Err(QtaError::DimensionMismatch {
                expected: leaves.len(),
                actual: priorities.len(),
            });
        }
        for (&leaf, &p) in leaves.iter().zip(priorities) {
            if leaf >= self.slots.len() || self.slots[leaf].is_none() {
                return Err(QtaError::DeadIndex(leaf));
            }
            let p = if p.is_finite() { p } else { self.config.priority_floor };
            let v = self.leaf_value(p);
            self.tree.set(leaf, v);
        }
        Ok(())
    }

    /// `n` uniformly drawn `(state, achieved goal)` pairs, with replacement.
    pub fn sample_goal_candidates(&self, n: usize, rng: &mut Rng) -> Result<Vec<(Vec2, Vec2)>> {
        if self.size == 0 {
            return Err(QtaError::Underfilled {
                available: 0,
                requested: n,
            });
        }
        Ok((0..n)
            .map(|_| {
                let t = self.slots[self.uniform_leaf(rng)]
                    .as_ref()
                    .expect("uniform draws land on live slots")
                    .transition;
                (t.next_obs, t.achieved)
            })
            .collect())
    }

    /// Live transitions from oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> + '_ {
        let start = self.oldest_slot();
        (0..self.size).map(move |i| &self.slots[(start + i) % self.config.capacity].as_ref().unwrap().transition)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "trajectory,index,obs_x,obs_y,action_x,action_y,reward,next_x,next_y,goal_x,goal_y,achieved_x,achieved_y,terminal"
        )?;
        for t in self.iter() {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                t.trajectory,
                t.index,
                t.obs[0],
                t.obs[1],
                t.action[0],
                t.action[1],
                t.reward,
                t.next_obs[0],
                t.next_obs[1],
                t.goal[0],
                t.goal[1],
                t.achieved[0],
                t.achieved[1],
                u8::from(t.terminal)
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;

    fn walk(id: u64, len: usize) -> Vec<Transition> {
        (0..len)
            .map(|i| {
                let x = i as f64;
                Transition {
                    obs: [x, 0.0],
                    action: [1.0, 0.0],
                    reward: -1.0,
                    next_obs: [x + 1.0, 0.0],
                    goal: [100.0, 0.0],
                    achieved: [x + 1.0, 0.0],
                    terminal: false,
                    trajectory: id,
                    index: i as u32,
                }
            })
            .collect()
    }

    #[test]
    fn prefix_descent_picks_cumulative_range() {
        let mut tree = SumTree::new(4);
        for (i, p) in [1.0, 2.0, 3.0, 4.0].into_iter().enumerate() {
            tree.set(i, p);
        }
        assert_eq!(tree.total(), 10.0);
        assert_eq!(tree.find(0.0), 0);
        assert_eq!(tree.find(0.999), 0);
        assert_eq!(tree.find(1.0), 1);
        assert_eq!(tree.find(5.5), 2);
        assert_eq!(tree.find(6.0), 3);
        assert_eq!(tree.find(10.0), 3);
    }

    #[test]
    fn descent_skips_empty_right_subtrees() {
        let mut tree = SumTree::new(8);
        tree.set(1, 1.0);
        assert_eq!(tree.find(1.0), 1);
        assert_eq!(tree.find(7.0), 1);
    }

    #[test]
    fn first_trajectory_gets_unit_priorities() {
        let mut buf = PrioritizedHindsightBuffer::with_defaults(100).unwrap();
        buf.store_trajectory(&walk(0, 10)).unwrap();
        assert_eq!(buf.len(), 10);
        for leaf in 0..10 {
            assert_eq!(buf.priority(leaf), Some(1.0));
        }
        assert_eq!(buf.tree().total(), 10.0);
    }

    #[test]
    fn new_transitions_take_current_max() {
        let mut buf = PrioritizedHindsightBuffer::with_defaults(100).unwrap();
        buf.store_trajectory(&walk(0, 3)).unwrap();
        buf.update_priorities(&[1], &[5.0]).unwrap();
        buf.store_trajectory(&walk(1, 2)).unwrap();
        assert_eq!(buf.priority(3), Some(5.0));
        assert_eq!(buf.priority(4), Some(5.0));
    }

    #[test]
    fn eviction_drops_whole_oldest_trajectory() {
        let mut buf = PrioritizedHindsightBuffer::with_defaults(10).unwrap();
        buf.store_trajectory(&walk(0, 4)).unwrap();
        buf.store_trajectory(&walk(1, 4)).unwrap();
        buf.store_trajectory(&walk(2, 4)).unwrap();
        assert_eq!(buf.len(), 8);
        assert_eq!(buf.trajectories(), 2);
        assert!(buf.iter().all(|t| t.trajectory != 0));
        assert!(buf.tree().is_consistent());
        assert_eq!(buf.tree().total(), 8.0);
    }

    #[test]
    fn zero_priority_is_floored() {
        let mut buf = PrioritizedHindsightBuffer::with_defaults(10).unwrap();
        buf.store_trajectory(&walk(0, 2)).unwrap();
        buf.update_priorities(&[0], &[0.0]).unwrap();
        assert_eq!(buf.priority(0), Some(1e-6));
    }

    #[test]
    fn dead_and_empty_inputs_rejected() {
        let mut buf = PrioritizedHindsightBuffer::with_defaults(10).unwrap();
        assert!(matches!(buf.store_trajectory(&[]), Err(QtaError::EmptyBatch)));
        buf.store_trajectory(&walk(0, 2)).unwrap();
        assert!(matches!(buf.update_priorities(&[5], &[1.0]), Err(QtaError::DeadIndex(5))));
        let mut rng = stream(0, "t");
        assert!(matches!(buf.sample_batch(3, 1.0, &mut rng), Err(QtaError::Underfilled { .. })));
    }

    #[test]
    fn beta_schedule_endpoints() {
        let c = ReplayConfig::default();
        assert_eq!(c.beta_at(0), 0.3);
        assert!((c.beta_at(100_000) - 0.65).abs() < 1e-12);
        assert_eq!(c.beta_at(200_000), 1.0);
        assert_eq!(c.beta_at(10_000_000), 1.0);
    }

    #[test]
    fn uniform_priorities_give_unit_weights() {
        let mut buf = PrioritizedHindsightBuffer::with_defaults(64).unwrap();
        buf.store_trajectory(&walk(0, 20)).unwrap();
        let mut rng = stream(1, "t");
        let b = buf.sample_batch(16, 1.0, &mut rng).unwrap();
        assert!(b.weights.iter().all(|&w| w == 1.0));
    }

    #[test]
    fn relabels_respect_reward_rule_and_order() {
        let mut buf = PrioritizedHindsightBuffer::with_defaults(256).unwrap();
        for id in 0..5 {
            buf.store_trajectory(&walk(id, 30)).unwrap();
        }
        let mut rng = stream(2, "t");
        let b = buf.sample_batch(120, 0.5, &mut rng).unwrap();
        for (t, src) in b.transitions.iter().zip(&b.sources) {
            match src {
                Some(j) => {
                    assert!(*j >= t.index);
                    assert_eq!(t.goal, [f64::from(*j) + 1.0, 0.0]);
                    assert_eq!(t.reward, goal_reward(t.achieved, t.goal, DEFAULT_GOAL_RADIUS));
                    assert_eq!(t.terminal, t.reward == 0.0);
                }
                None => assert_eq!(t.goal, [100.0, 0.0]),
            }
        }
    }

    #[test]
    fn alpha_zero_is_uniform() {
        let mut buf = PrioritizedHindsightBuffer::new(
            ReplayConfig {
                capacity: 8,
                alpha: 0.0,
                ..ReplayConfig::default()
            },
            0.3,
        )
        .unwrap();
        buf.store_trajectory(&walk(0, 4)).unwrap();
        buf.update_priorities(&[0, 1, 2, 3], &[1.0, 10.0, 100.0, 1000.0]).unwrap();
        assert!((0..4).all(|l| buf.tree().get(l) == 1.0));
    }

    #[test]
    fn goal_candidates_from_single_transition() {
        let mut buf = PrioritizedHindsightBuffer::with_defaults(8).unwrap();
        buf.store_trajectory(&walk(0, 1)).unwrap();
        let mut rng = stream(3, "t");
        let c = buf.sample_goal_candidates(20, &mut rng).unwrap();
        assert_eq!(c.len(), 20);
        assert!(c.iter().all(|&(s, g)| s == [1.0, 0.0] && g == [1.0, 0.0]));
    }

    #[test]
    fn csv_dump_has_header_and_rows() {
        let mut buf = PrioritizedHindsightBuffer::with_defaults(8).unwrap();
        buf.store_trajectory(&walk(7, 3)).unwrap();
        let mut out = Vec::new();
        buf.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.lines().nth(1).unwrap().starts_with("7,0,"));
    }

    #[derive(Clone, Debug)]
    enum Op {
        Store(usize),
        Update(usize, f64),
        Sample(usize),
    }

    fn op() -> impl Strategy<Value = Op> {
        prop_oneof![
            (1usize..12).prop_map(Op::Store),
            (0usize..64, 0.0f64..50.0).prop_map(|(l, p)| Op::Update(l, p)),
            (1usize..8).prop_map(Op::Sample),
        ]
    }

    proptest! {
        #[test]
        fn tree_stays_consistent(ops in prop::collection::vec(op(), 1..200), seed in 0u64..1000) {
            let mut buf = PrioritizedHindsightBuffer::with_defaults(40).unwrap();
            let mut rng = stream(seed, "ops");
            let mut id = 0;
            for o in ops {
                match o {
                    Op::Store(len) => {
                        buf.store_trajectory(&walk(id, len)).unwrap();
                        id += 1;
                    }
                    Op::Update(l, p) => {
                        let live = buf.transition(l).is_some();
                        prop_assert_eq!(buf.update_priorities(&[l], &[p]).is_ok(), live);
                    }
                    Op::Sample(n) => {
                        if buf.len() >= n {
                            let b = buf.sample_batch(n, 0.7, &mut rng).unwrap();
                            prop_assert!(b.leaves.iter().all(|&l| buf.transition(l).is_some()));
                        }
                    }
                }
                prop_assert!(buf.tree().is_consistent());
                prop_assert_eq!(buf.iter().count(), buf.len());
                let live: f64 = (0..40).filter(|&l| buf.transition(l).is_some()).map(|l| buf.tree().get(l)).sum();
                prop_assert!((buf.tree().total() - live).abs() <= 1e-9 * live.max(1.0));
            }
        }
    }
}
