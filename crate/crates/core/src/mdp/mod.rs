//! Finite MDPs, builders and exact evaluation.

mod eval;
mod gridworld;
mod random;

pub use eval::{exact_v_star, iteration_cap, soft_policy_evaluation, soft_policy_evaluation_direct};
pub use gridworld::{build_gridworld, Action, GridWorldConfig, SlipMode};
pub use random::build_random_mdp;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tables::{PolicyTable, QTable, ValueVector};

/// Tolerance on transition row sums.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// A finite discounted MDP `(S, A, P, R, γ)` with reward bound `r_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    num_states: usize,
    num_actions: usize,
    /// `P[s][a][s']`, flattened row-major.
    transition: Vec<f64>,
    reward: QTable,
    discount: f64,
    r_max: f64,
}

impl TabularMdp {
    /// Builds and validates an MDP.
    pub fn new(
        num_states: usize,
        num_actions: usize,
        transition: Vec<f64>,
        reward: QTable,
        discount: f64,
        r_max: f64,
    ) -> Result<Self> {
        let mdp = TabularMdp {
            num_states,
            num_actions,
            transition,
            reward,
            discount,
            r_max,
        };
        validate_mdp(&mdp)?;
        Ok(mdp)
    }

    #[cfg(test)]
    pub(crate) fn new_unchecked(
        num_states: usize,
        num_actions: usize,
        transition: Vec<f64>,
        reward: QTable,
        discount: f64,
        r_max: f64,
    ) -> Self {
        TabularMdp {
            num_states,
            num_actions,
            transition,
            reward,
            discount,
            r_max,
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn reward(&self) -> &QTable {
        &self.reward
    }

    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let n = self.num_states;
        let start = (s * self.num_actions + a) * n;
        &self.transition[start..start + n]
    }

    pub fn transition(&self) -> &[f64] {
        &self.transition
    }

    /// Returns a copy with every reward multiplied by `c > 0`.
    pub fn scale_rewards(&self, c: f64) -> Result<TabularMdp> {
        TabularMdp::new(
            self.num_states,
            self.num_actions,
            self.transition.clone(),
            self.reward.map(|r| r * c),
            self.discount,
            self.r_max * c.abs(),
        )
    }

    /// `(PV)(s,a) = Σ_{s'} P(s'|s,a) V(s')`.
    pub fn expected_next(&self, v: &ValueVector) -> QTable {
        QTable::from_fn(self.num_states, self.num_actions, |s, a| {
            self.transition_row(s, a).iter().zip(&v.0).map(|(p, x)| p * x).sum()
        })
    }

    /// `R + γ P V`.
    pub fn backup(&self, v: &ValueVector) -> QTable {
        let next = self.expected_next(v);
        self.reward.zip_map(&next, |r, pv| r + self.discount * pv)
    }

    /// `(P^π V)(s) = Σ_a π(a|s) Σ_{s'} P(s'|s,a) V(s')`.
    pub fn policy_expected_next(&self, policy: &PolicyTable, v: &ValueVector) -> ValueVector {
        policy.expect(&self.expected_next(v))
    }

    /// `V^τ_max = (r_max + τ log|A|) / (1 − γ)`.
    pub fn v_max(&self, tau: f64) -> f64 {
        (self.r_max + tau * (self.num_actions as f64).ln()) / (1.0 - self.discount)
    }

    /// Serializes to the shape-tagged JSON layout.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&MdpJson::from(self)).expect("MDP serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<TabularMdp> {
        let raw: MdpJson = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        raw.try_into()
    }
}

/// Checks every invariant of [`TabularMdp`] and reports the first violation.
pub fn validate_mdp(mdp: &TabularMdp) -> Result<()> {
    let (ns, na) = (mdp.num_states, mdp.num_actions);
    if ns == 0 || na == 0 {
        return Err(Error::InvalidMdp(format!("empty state or action space ({}x{})", ns, na)));
    }
    if mdp.transition.len() != ns * na * ns {
        return Err(Error::ShapeMismatch {
            expected: format!("{} transition entries", ns * na * ns),
            actual: format!("{}", mdp.transition.len()),
        });
    }
    mdp.reward.check_shape(ns, na)?;
    if !(mdp.discount > 0.0 && mdp.discount < 1.0) {
        return Err(Error::DiscountRange(mdp.discount));
    }
    if !(mdp.r_max >= 0.0) || !mdp.r_max.is_finite() {
        return Err(Error::InvalidMdp(format!("r_max must be finite and non-negative, got {}", mdp.r_max)));
    }
    for s in 0..ns {
        for a in 0..na {
            let row = mdp.transition_row(s, a);
            if let Some((next, &value)) = row.iter().enumerate().find(|(_, p)| !(**p >= 0.0)) {
                return Err(Error::NegativeProbability { state: s, action: a, next, value });
            }
            let sum: f64 = row.iter().sum();
            if !((sum - 1.0).abs() <= STOCHASTIC_TOL) {
                return Err(Error::NotStochastic { state: s, action: a, sum });
            }
            let r = mdp.reward.get(s, a);
            if !r.is_finite() || r.abs() > mdp.r_max {
                return Err(Error::RewardOutOfRange { state: s, action: a, value: r, r_max: mdp.r_max });
            }
        }
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct TaggedArray {
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct MdpJson {
    num_states: usize,
    num_actions: usize,
    discount: f64,
    r_max: f64,
    transition: TaggedArray,
    reward: TaggedArray,
}

impl From<&TabularMdp> for MdpJson {
    fn from(m: &TabularMdp) -> Self {
        MdpJson {
            num_states: m.num_states,
            num_actions: m.num_actions,
            discount: m.discount,
            r_max: m.r_max,
            transition: TaggedArray {
                shape: vec![m.num_states, m.num_actions, m.num_states],
                data: m.transition.clone(),
            },
            reward: TaggedArray {
                shape: vec![m.num_states, m.num_actions],
                data: m.reward.as_slice().to_vec(),
            },
        }
    }
}

impl TryFrom<MdpJson> for TabularMdp {
    type Error = Error;

    fn try_from(j: MdpJson) -> Result<Self> {
        let (ns, na) = (j.num_states, j.num_actions);
        if j.transition.shape != [ns, na, ns] {
            return Err(Error::ShapeMismatch {
                expected: format!("[{}, {}, {}]", ns, na, ns),
                actual: format!("{:?}", j.transition.shape),
            });
        }
        if j.reward.shape != [ns, na] {
            return Err(Error::ShapeMismatch {
                expected: format!("[{}, {}]", ns, na),
                actual: format!("{:?}", j.reward.shape),
            });
        }
        let reward = QTable::from_vec(ns, na, j.reward.data)?;
        TabularMdp::new(ns, na, j.transition.data, reward, j.discount, j.r_max)
    }
}
