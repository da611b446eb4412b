use serde::{Deserialize, Serialize};

use super::TabularMdp;
use crate::error::{Error, Result};
use crate::tables::QTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    North = 0,
    South = 1,
    West = 2,
    East = 3,
}

impl Action {
    pub const ALL: [Action; 4] = [Action::North, Action::South, Action::West, Action::East];
}

/// What happens when an attempted move slips.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SlipMode {
    /// The executed action is drawn uniformly from all four actions.
    #[default]
    UniformAll,
    /// The executed action is drawn uniformly from the three other actions.
    UniformOther,
}

/// Corner-reward grid world. Row 0 is the top (north) edge; cell index is
/// `row * width + col`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridWorldConfig {
    #[serde(default = "default_side")]
    pub width: usize,
    #[serde(default = "default_side")]
    pub height: usize,
    #[serde(default = "one")]
    pub reward_top_right: f64,
    #[serde(default = "one")]
    pub reward_bottom_left: f64,
    #[serde(default = "two")]
    pub reward_bottom_right: f64,
    #[serde(default = "default_slip")]
    pub slip_probability: f64,
    #[serde(default)]
    pub slip_mode: SlipMode,
    #[serde(default = "default_discount")]
    pub discount: f64,
}

fn default_side() -> usize {
    5
}
fn one() -> f64 {
    1.0
}
fn two() -> f64 {
    2.0
}
fn default_slip() -> f64 {
    0.1
}
fn default_discount() -> f64 {
    0.99
}

impl Default for GridWorldConfig {
    fn default() -> Self {
        GridWorldConfig {
            width: default_side(),
            height: default_side(),
            reward_top_right: 1.0,
            reward_bottom_left: 1.0,
            reward_bottom_right: 2.0,
            slip_probability: default_slip(),
            slip_mode: SlipMode::UniformAll,
            discount: default_discount(),
        }
    }
}

impl GridWorldConfig {
    pub fn num_states(&self) -> usize {
        self.width * self.height
    }

    fn step(&self, cell: usize, action: Action) -> usize {
        let (row, col) = (cell / self.width, cell % self.width);
        match action {
            Action::North if row > 0 => cell - self.width,
            Action::South if row + 1 < self.height => cell + self.width,
            Action::West if col > 0 => cell - 1,
            Action::East if col + 1 < self.width => cell + 1,
            _ => cell,
        }
    }

    /// Per-cell reward. Corners are assigned top-right, bottom-left,
    /// bottom-right in that order, so on degenerate grids where corners
    /// coincide the later assignment wins.
    pub fn cell_rewards(&self) -> Vec<f64> {
        let mut r = vec![0.0; self.num_states()];
        let top_right = self.width - 1;
        let bottom_left = (self.height - 1) * self.width;
        let bottom_right = self.num_states() - 1;
        r[top_right] = self.reward_top_right;
        r[bottom_left] = self.reward_bottom_left;
        r[bottom_right] = self.reward_bottom_right;
        r
    }
}

/// Builds the slip grid world. `R[s][a]` is the expected reward of the
/// destination cell under the slip dynamics.
pub fn build_gridworld(config: &GridWorldConfig) -> Result<TabularMdp> {
    if config.width == 0 || config.height == 0 {
        return Err(Error::InvalidParameter(format!(
            "grid must be non-empty, got {}x{}",
            config.width, config.height
        )));
    }
    if !(0.0..=1.0).contains(&config.slip_probability) {
        return Err(Error::InvalidParameter(format!(
            "slip_probability {} outside [0, 1]",
            config.slip_probability
        )));
    }
    let ns = config.num_states();
    let na = Action::ALL.len();
    let slip = config.slip_probability;
    let cell_reward = config.cell_rewards();

    let mut transition = vec![0.0; ns * na * ns];
    let mut reward = QTable::zeros(ns, na);
    for s in 0..ns {
        for (a, &attempted) in Action::ALL.iter().enumerate() {
            let row = &mut transition[(s * na + a) * ns..(s * na + a + 1) * ns];
            for &executed in &Action::ALL {
                let weight = match config.slip_mode {
                    SlipMode::UniformAll => {
                        slip / 4.0 + if executed == attempted { 1.0 - slip } else { 0.0 }
                    }
                    SlipMode::UniformOther => {
                        if executed == attempted {
                            1.0 - slip
                        } else {
                            slip / 3.0
                        }
                    }
                };
                if weight > 0.0 {
                    row[config.step(s, executed)] += weight;
                }
            }
            let r: f64 = row.iter().zip(&cell_reward).map(|(p, c)| p * c).sum();
            reward.set(s, a, r);
        }
    }
    let r_max = [config.reward_top_right, config.reward_bottom_left, config.reward_bottom_right]
        .iter()
        .fold(0.0_f64, |m, r| m.max(r.abs()));
    TabularMdp::new(ns, na, transition, reward, config.discount, r_max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_corner_rewards() {
        let cfg = GridWorldConfig::default();
        let cells = cfg.cell_rewards();
        assert_eq!(cells[4], 1.0);
        assert_eq!(cells[20], 1.0);
        assert_eq!(cells[24], 2.0);
        assert_eq!(cells.iter().filter(|&&r| r != 0.0).count(), 3);
        let mdp = build_gridworld(&cfg).unwrap();
        assert_eq!(mdp.r_max(), 2.0);
        assert_eq!(mdp.num_actions(), 4);
        assert_eq!(mdp.num_states(), 25);
    }

    #[test]
    fn deterministic_dynamics_are_one_hot() {
        let cfg = GridWorldConfig {
            slip_probability: 0.0,
            ..Default::default()
        };
        let mdp = build_gridworld(&cfg).unwrap();
        // interior cell 12 (row 2, col 2)
        for (a, target) in [(0, 7), (1, 17), (2, 11), (3, 13)] {
            let row = mdp.transition_row(12, a);
            assert_eq!(row[target], 1.0);
            assert_eq!(row.iter().filter(|&&p| p != 0.0).count(), 1);
        }
    }

    #[test]
    fn two_by_one_east_with_slip() {
        let cfg = GridWorldConfig {
            width: 2,
            height: 1,
            ..Default::default()
        };
        let mdp = build_gridworld(&cfg).unwrap();
        let row = mdp.transition_row(0, Action::East as usize);
        assert!((row[1] - 0.925).abs() < 1e-15);
        assert!((row[0] - 0.075).abs() < 1e-15);
    }

    #[test]
    fn uniform_other_mode() {
        let cfg = GridWorldConfig {
            width: 2,
            height: 1,
            slip_mode: SlipMode::UniformOther,
            ..Default::default()
        };
        let mdp = build_gridworld(&cfg).unwrap();
        let row = mdp.transition_row(0, Action::East as usize);
        assert!((row[1] - 0.9).abs() < 1e-15);
        assert!((row[0] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn reward_is_expected_destination_reward() {
        let mdp = build_gridworld(&GridWorldConfig::default()).unwrap();
        // From cell 23 moving East toward the bottom-right corner.
        let r = mdp.reward().get(23, Action::East as usize);
        let expected = 2.0 * (0.9 + 0.025);
        assert!((r - expected).abs() < 1e-12);
    }

    #[test]
    fn zero_grid_rejected() {
        let cfg = GridWorldConfig {
            width: 0,
            ..Default::default()
        };
        assert!(build_gridworld(&cfg).is_err());
    }
}
