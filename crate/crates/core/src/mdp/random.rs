use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::TabularMdp;
use crate::error::{Error, Result};
use crate::tables::QTable;

/// Seeded random MDP: each transition row is sampled uniformly and
/// normalized, rewards are uniform in `[-reward_scale, reward_scale]`.
pub fn build_random_mdp(
    num_states: usize,
    num_actions: usize,
    seed: u64,
    reward_scale: f64,
    discount: f64,
) -> Result<TabularMdp> {
    if num_states == 0 || num_actions == 0 {
        return Err(Error::InvalidParameter("random MDP sizes must be positive".into()));
    }
    if !(reward_scale >= 0.0) || !reward_scale.is_finite() {
        return Err(Error::InvalidParameter(format!("reward_scale {} must be finite and >= 0", reward_scale)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut transition = Vec::with_capacity(num_states * num_actions * num_states);
    for _ in 0..num_states * num_actions {
        // (0, 1] keeps every row strictly positive
        let row: Vec<f64> = (0..num_states).map(|_| 1.0 - rng.random::<f64>()).collect();
        let sum: f64 = row.iter().sum();
        transition.extend(row.iter().map(|x| x / sum));
    }
    let reward = QTable::from_fn(num_states, num_actions, |_, _| {
        if reward_scale > 0.0 {
            rng.random_range(-reward_scale..=reward_scale)
        } else {
            0.0
        }
    });
    TabularMdp::new(num_states, num_actions, transition, reward, discount, reward_scale)
}
