//! Dense per-state and per-(state, action) tables.
//!
//! All tables are row-major with one row per state. They are plain value
//! types: cloning is cheap enough at tabular sizes and no operation mutates
//! its inputs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-state values (V, V^π, V*).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueVector(pub Vec<f64>);

impl ValueVector {
    pub fn zeros(num_states: usize) -> Self {
        ValueVector(vec![0.0; num_states])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &ValueVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn mean(&self) -> f64 {
        if self.0.is_empty() {
            return 0.0;
        }
        self.0.iter().sum::<f64>() / self.0.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

impl std::ops::Index<usize> for ValueVector {
    type Output = f64;
    fn index(&self, s: usize) -> &f64 {
        &self.0[s]
    }
}

/// Per-(state, action) values. Holds Q, Ψ and advantages alike.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    num_states: usize,
    num_actions: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn zeros(num_states: usize, num_actions: usize) -> Self {
        QTable {
            num_states,
            num_actions,
            values: vec![0.0; num_states * num_actions],
        }
    }

    pub fn from_vec(num_states: usize, num_actions: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != num_states * num_actions {
            return Err(Error::ShapeMismatch {
                expected: format!("{}x{}", num_states, num_actions),
                actual: format!("{} entries", values.len()),
            });
        }
        Ok(QTable {
            num_states,
            num_actions,
            values,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let num_actions = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != num_actions) {
            return Err(Error::ShapeMismatch {
                expected: format!("rows of length {}", num_actions),
                actual: "ragged rows".into(),
            });
        }
        let values = rows.iter().flatten().copied().collect();
        QTable::from_vec(rows.len(), num_actions, values)
    }

    pub fn from_fn(num_states: usize, num_actions: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(num_states * num_actions);
        for s in 0..num_states {
            for a in 0..num_actions {
                values.push(f(s, a));
            }
        }
        QTable {
            num_states,
            num_actions,
            values,
        }
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.num_states, self.num_actions)
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.num_actions + a]
    }

    pub fn set(&mut self, s: usize, a: usize, v: f64) {
        self.values[s * self.num_actions + a] = v;
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.num_actions..(s + 1) * self.num_actions]
    }

    pub fn row_mut(&mut self, s: usize) -> &mut [f64] {
        &mut self.values[s * self.num_actions..(s + 1) * self.num_actions]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.num_actions.max(1))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(<[f64]>::to_vec).collect()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> QTable {
        QTable {
            num_states: self.num_states,
            num_actions: self.num_actions,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &QTable, f: impl Fn(f64, f64) -> f64) -> QTable {
        debug_assert_eq!(self.shape(), other.shape());
        QTable {
            num_states: self.num_states,
            num_actions: self.num_actions,
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    /// Adds a state-indexed vector to every action of that state.
    pub fn add_state_values(&self, v: &ValueVector) -> QTable {
        QTable::from_fn(self.num_states, self.num_actions, |s, a| self.get(s, a) + v[s])
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_abs_diff(&self, other: &QTable) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub(crate) fn check_shape(&self, num_states: usize, num_actions: usize) -> Result<()> {
        if self.shape() != (num_states, num_actions) {
            return Err(Error::ShapeMismatch {
                expected: format!("{}x{}", num_states, num_actions),
                actual: format!("{}x{}", self.num_states, self.num_actions),
            });
        }
        Ok(())
    }
}

/// Row-stochastic policy π(a|s).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyTable {
    probs: QTable,
}

pub const POLICY_ROW_TOL: f64 = 1e-12;

impl PolicyTable {
    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        let p = 1.0 / num_actions as f64;
        PolicyTable {
            probs: QTable::from_fn(num_states, num_actions, |_, _| p),
        }
    }

    /// Validates non-negativity and row sums.
    pub fn new(probs: QTable) -> Result<Self> {
        for (s, row) in probs.rows().enumerate() {
            if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
                return Err(Error::InvalidParameter(format!("policy row {} has a negative or non-finite entry", s)));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > POLICY_ROW_TOL {
                return Err(Error::InvalidParameter(format!("policy row {} sums to {}", s, sum)));
            }
        }
        Ok(PolicyTable { probs })
    }

    pub(crate) fn from_table_unchecked(probs: QTable) -> Self {
        PolicyTable { probs }
    }

    /// One-hot policy from per-state action indices.
    pub fn deterministic(num_actions: usize, actions: &[usize]) -> Self {
        PolicyTable {
            probs: QTable::from_fn(actions.len(), num_actions, |s, a| if actions[s] == a { 1.0 } else { 0.0 }),
        }
    }

    pub fn num_states(&self) -> usize {
        self.probs.num_states()
    }

    pub fn num_actions(&self) -> usize {
        self.probs.num_actions()
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs.get(s, a)
    }

    pub fn row(&self, s: usize) -> &[f64] {
        self.probs.row(s)
    }

    pub fn table(&self) -> &QTable {
        &self.probs
    }

    /// ⟨π, Q⟩ per state.
    pub fn expect(&self, q: &QTable) -> ValueVector {
        ValueVector(
            (0..self.num_states())
                .map(|s| dot(self.row(s), q.row(s)))
                .collect(),
        )
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
