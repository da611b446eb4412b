//! Regularized-MDP operators.
//!
//! `L^α Ψ = α log Σ_a exp(Ψ(a)/α)` is the soft maximum at temperature α.
//! It is evaluated with the row maximum subtracted first, since Ψ entries
//! routinely reach the hundreds while α is a few hundredths. Temperature 0
//! is an exact branch (hard max and lowest-index argmax), not a limit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{iteration_cap, TabularMdp};
use crate::tables::{PolicyTable, QTable, ValueVector};

/// Reparameterized regularization weights.
///
/// `alpha = tau + lambda` is the total temperature and
/// `kappa = lambda / (tau + lambda)` the KL share, so the entropy weight is
/// `tau = (1 − κ) α` and the KL weight is `lambda = κ α`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegParams {
    alpha: f64,
    kappa: f64,
}

impl RegParams {
    pub fn new(alpha: f64, kappa: f64) -> Result<Self> {
        if !(alpha >= 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidParameter(format!("alpha must be finite and >= 0, got {}", alpha)));
        }
        if !(0.0..1.0).contains(&kappa) {
            return Err(Error::InvalidParameter(format!("kappa must lie in [0, 1), got {}", kappa)));
        }
        Ok(RegParams { alpha, kappa })
    }

    /// From entropy weight τ and KL weight λ.
    pub fn from_tau_lambda(tau: f64, lambda: f64) -> Result<Self> {
        if !(tau >= 0.0 && lambda >= 0.0) {
            return Err(Error::InvalidParameter(format!("tau and lambda must be >= 0, got {} and {}", tau, lambda)));
        }
        let alpha = tau + lambda;
        let kappa = if alpha > 0.0 { lambda / alpha } else { 0.0 };
        RegParams::new(alpha, kappa)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn lambda(&self) -> f64 {
        self.kappa * self.alpha
    }

    pub fn tau(&self) -> f64 {
        self.alpha - self.lambda()
    }
}

fn row_max(row: &[f64]) -> f64 {
    row.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Lowest index attaining the row maximum.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn lse_unchecked(row: &[f64], alpha: f64) -> f64 {
    let m = row_max(row);
    if alpha == 0.0 {
        return m;
    }
    let sum: f64 = row.iter().map(|&x| ((x - m) / alpha).exp()).sum();
    m + alpha * sum.ln()
}

/// `L^α` of one row. Returns the row maximum for `alpha == 0`.
pub fn log_sum_exp(psi_row: &[f64], alpha: f64) -> Result<f64> {
    if psi_row.is_empty() {
        return Err(Error::InvalidParameter("log_sum_exp of an empty row".into()));
    }
    if psi_row.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("log_sum_exp input"));
    }
    if !(alpha >= 0.0) {
        return Err(Error::InvalidParameter(format!("alpha must be >= 0, got {}", alpha)));
    }
    Ok(lse_unchecked(psi_row, alpha))
}

/// `V = L^α Ψ` per state.
pub fn soft_value(psi: &QTable, alpha: f64) -> Result<ValueVector> {
    psi.rows().map(|row| log_sum_exp(row, alpha)).collect::<Result<Vec<_>>>().map(ValueVector)
}

pub(crate) fn softmax_row_into(row: &[f64], alpha: f64, out: &mut [f64]) {
    let m = row_max(row);
    let mut sum = 0.0;
    for (o, &x) in out.iter_mut().zip(row) {
        *o = ((x - m) / alpha).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// Boltzmann policy `π(a|s) ∝ exp(Ψ(s,a)/α)`.
pub fn softmax_policy(psi: &QTable, alpha: f64) -> Result<PolicyTable> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "softmax_policy needs alpha > 0 (got {}); use argmax_policy for the hard case",
            alpha
        )));
    }
    if !psi.is_finite() {
        return Err(Error::NonFinite("softmax_policy input"));
    }
    let mut out = QTable::zeros(psi.num_states(), psi.num_actions());
    for s in 0..psi.num_states() {
        softmax_row_into(psi.row(s), alpha, out.row_mut(s));
    }
    Ok(PolicyTable::from_table_unchecked(out))
}

/// One-hot greedy policy with lowest-index tie-break.
pub fn argmax_policy(psi: &QTable) -> PolicyTable {
    let actions: Vec<usize> = psi.rows().map(argmax).collect();
    PolicyTable::deterministic(psi.num_actions(), &actions)
}

/// `G^{0,α}(Ψ)`: softmax for `α > 0`, argmax for `α = 0`.
pub fn greedy_policy(psi: &QTable, alpha: f64) -> Result<PolicyTable> {
    if alpha == 0.0 {
        Ok(argmax_policy(psi))
    } else {
        softmax_policy(psi, alpha)
    }
}

/// Soft advantage `A = Ψ − L^α Ψ`; non-positive, and equal to `α log π`
/// for the softmax policy. `alpha == 0` gives `Ψ − max_a Ψ`.
pub fn soft_advantage(psi: &QTable, alpha: f64) -> Result<QTable> {
    let v = soft_value(psi, alpha)?;
    Ok(QTable::from_fn(psi.num_states(), psi.num_actions(), |s, a| psi.get(s, a) - v[s]))
}

/// Shannon entropy per state, with `0 log 0 = 0`.
pub fn entropy(policy: &PolicyTable) -> ValueVector {
    ValueVector(
        (0..policy.num_states())
            .map(|s| {
                -policy
                    .row(s)
                    .iter()
                    .filter(|&&p| p > 0.0)
                    .map(|&p| p * p.ln())
                    .sum::<f64>()
            })
            .collect(),
    )
}

/// `KL(p‖q)` per state. States where `p(a) > 0 = q(a)` for some action get
/// `+∞`.
pub fn kl_divergence(p: &PolicyTable, q: &PolicyTable) -> Result<ValueVector> {
    q.table().check_shape(p.num_states(), p.num_actions())?;
    Ok(ValueVector(
        (0..p.num_states())
            .map(|s| {
                let mut kl = 0.0;
                for (&pa, &qa) in p.row(s).iter().zip(q.row(s)) {
                    if pa > 0.0 {
                        if qa == 0.0 {
                            return f64::INFINITY;
                        }
                        kl += pa * (pa / qa).ln();
                    }
                }
                kl.max(0.0)
            })
            .collect(),
    ))
}

/// Maximizer of `⟨π, Q⟩ + τH(π) − λ KL(π‖μ)`:
/// `π ∝ μ^{λ/α} exp(Q/α)`, i.e. the softmax of `Q + λ log μ` at α.
/// Actions with `μ(a) = 0` get zero mass when `λ > 0`.
pub fn regularized_greedy(q: &QTable, mu: &PolicyTable, params: RegParams) -> Result<PolicyTable> {
    let alpha = params.alpha();
    if !(alpha > 0.0) {
        return Err(Error::InvalidParameter("regularized_greedy needs tau + lambda > 0".into()));
    }
    mu.table().check_shape(q.num_states(), q.num_actions())?;
    let lambda = params.lambda();
    let (ns, na) = q.shape();
    let mut out = QTable::zeros(ns, na);
    let mut logits = vec![0.0; na];
    for s in 0..ns {
        let mu_row = mu.row(s);
        if mu_row.iter().all(|&m| m == 0.0) {
            return Err(Error::InvalidParameter(format!("reference policy row {} is all zero", s)));
        }
        for a in 0..na {
            logits[a] = if lambda > 0.0 {
                if mu_row[a] == 0.0 {
                    f64::NEG_INFINITY
                } else {
                    q.get(s, a) + lambda * mu_row[a].ln()
                }
            } else {
                q.get(s, a)
            };
        }
        softmax_row_into(&logits, alpha, out.row_mut(s));
    }
    Ok(PolicyTable::from_table_unchecked(out))
}

/// `R + γP(⟨π, Q⟩ + τH(π) − λ KL(π‖μ))`.
pub fn regularized_bellman(
    mdp: &TabularMdp,
    q: &QTable,
    pi: &PolicyTable,
    mu: &PolicyTable,
    params: RegParams,
) -> Result<QTable> {
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    q.check_shape(ns, na)?;
    pi.table().check_shape(ns, na)?;
    let (tau, lambda) = (params.tau(), params.lambda());
    let mut v = pi.expect(q);
    if tau > 0.0 {
        for (x, h) in v.0.iter_mut().zip(entropy(pi).0) {
            *x += tau * h;
        }
    }
    if lambda > 0.0 {
        let kl = kl_divergence(pi, mu)?;
        for (s, (x, d)) in v.0.iter_mut().zip(kl.0).enumerate() {
            if !d.is_finite() {
                return Err(Error::InfiniteKl(s));
            }
            *x -= lambda * d;
        }
    }
    Ok(mdp.backup(&v))
}

/// Fixed point of `V ↦ L^τ(R + γPV)` by iteration from zero, stopped once
/// the residual is at most `tol`. Temperature 0 gives `V*`.
pub fn soft_optimal_value(mdp: &TabularMdp, temperature: f64, tol: f64) -> Result<ValueVector> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance must be positive, got {}", tol)));
    }
    if !(temperature >= 0.0) {
        return Err(Error::InvalidParameter(format!("temperature must be >= 0, got {}", temperature)));
    }
    let gamma = mdp.discount();
    let scale = mdp.r_max() + temperature * (mdp.num_actions() as f64).ln();
    let cap = iteration_cap(gamma, tol, scale.max(f64::MIN_POSITIVE));
    let mut v = ValueVector::zeros(mdp.num_states());
    for _ in 0..cap {
        let q = mdp.backup(&v);
        let next = ValueVector(q.rows().map(|row| lse_unchecked(row, temperature)).collect());
        if !next.is_finite() {
            return Err(Error::NonFinite("soft_optimal_value"));
        }
        let residual = next.max_abs_diff(&v);
        v = next;
        if residual <= tol {
            return Ok(v);
        }
    }
    Ok(v)
}

/// Everything derived from the soft-optimal value at one temperature.
#[derive(Debug, Clone)]
pub struct SoftOptimum {
    pub temperature: f64,
    pub v: ValueVector,
    /// `Q* = R + γPV*`.
    pub q: QTable,
    /// `π* = G^{0,τ}(Q*)`.
    pub policy: PolicyTable,
    /// `A* = Q* − V*`.
    pub advantage: QTable,
}

pub fn soft_optimum(mdp: &TabularMdp, temperature: f64, tol: f64) -> Result<SoftOptimum> {
    let v = soft_optimal_value(mdp, temperature, tol)?;
    let q = mdp.backup(&v);
    let policy = greedy_policy(&q, temperature)?;
    let advantage = QTable::from_fn(q.num_states(), q.num_actions(), |s, a| q.get(s, a) - v[s]);
    Ok(SoftOptimum {
        temperature,
        v,
        q,
        policy,
        advantage,
    })
}
