//! Fixtures shared by the benchmarks.

use qta_core::features::ObsScale;
use qta_core::rng::Rng;
use qta_core::{Actor, Agent, CriticEnsemble, EnsembleConfig, Transition};
use rand::Rng as _;

pub fn agent(hidden: usize, rng: &mut Rng) -> Agent<f32> {
    let scale = ObsScale::from_bounds(&qta_core::Rect::new([0.0, 0.0], [5.0, 5.0]));
    let config = EnsembleConfig {
        hidden_size: hidden,
        ..EnsembleConfig::default()
    };
    let ensemble = CriticEnsemble::new(config, scale, rng).expect("valid ensemble");
    let actor = Actor::new(&[hidden, hidden], scale, 1e-3, rng).expect("valid actor");
    Agent { ensemble, actor }
}

pub fn random_batch(n: usize, rng: &mut Rng) -> Vec<Transition> {
    (0..n)
        .map(|i| {
            let obs = [rng.random_range(0.0..5.0), rng.random_range(0.0..5.0)];
            let action = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let next = [obs[0] + 0.5 * action[0], obs[1] + 0.5 * action[1]];
            Transition {
                obs,
                action,
                reward: -1.0,
                next_obs: next,
                goal: [4.5, 4.5],
                achieved: next,
                terminal: false,
                trajectory: 0,
                index: i as u32,
            }
        })
        .collect()
}
