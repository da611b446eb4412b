use nalgebra::{DMatrix, DVector};

use super::TabularMdp;
use crate::error::{Error, Result};
use crate::soft_ops::entropy;
use crate::tables::{PolicyTable, ValueVector};

/// Number of sweeps a γ-contraction needs to bring an initial residual of
/// `scale` below `tol`, plus a fixed margin for rounding.
pub fn iteration_cap(discount: f64, tol: f64, scale: f64) -> usize {
    const MARGIN: usize = 64;
    if scale <= tol || scale == 0.0 {
        return MARGIN;
    }
    let n = ((tol / scale).ln() / discount.ln()).ceil();
    n.max(0.0) as usize + MARGIN
}

fn check_tol(tol: f64) -> Result<()> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance must be positive, got {}", tol)));
    }
    Ok(())
}

fn check_policy(mdp: &TabularMdp, policy: &PolicyTable) -> Result<()> {
    policy.table().check_shape(mdp.num_states(), mdp.num_actions())
}

/// Per-state reward plus entropy bonus under π: `⟨π, R⟩ + τ H(π)`.
fn policy_reward(mdp: &TabularMdp, policy: &PolicyTable, tau: f64) -> ValueVector {
    let r = policy.expect(mdp.reward());
    if tau == 0.0 {
        return r;
    }
    let h = entropy(policy);
    ValueVector(r.0.iter().zip(&h.0).map(|(r, h)| r + tau * h).collect())
}

/// `V^π_τ`, the fixed point of `V ↦ ⟨π, R + γPV⟩ + τH(π)`, by successive
/// approximation from zero. Stops once the Bellman residual is below `tol`.
pub fn soft_policy_evaluation(mdp: &TabularMdp, policy: &PolicyTable, tau: f64, tol: f64) -> Result<ValueVector> {
    check_tol(tol)?;
    check_policy(mdp, policy)?;
    if !(tau >= 0.0) {
        return Err(Error::InvalidParameter(format!("tau must be >= 0, got {}", tau)));
    }
    let gamma = mdp.discount();
    let r_pi = policy_reward(mdp, policy, tau);
    let cap = iteration_cap(gamma, tol, r_pi.max_abs());
    let mut v = ValueVector::zeros(mdp.num_states());
    for _ in 0..cap {
        let next = mdp.policy_expected_next(policy, &v);
        let tv = ValueVector(r_pi.0.iter().zip(&next.0).map(|(r, n)| r + gamma * n).collect());
        if !tv.is_finite() {
            return Err(Error::NonFinite("soft_policy_evaluation"));
        }
        let residual = tv.max_abs_diff(&v);
        v = tv;
        if residual <= tol {
            return Ok(v);
        }
    }
    Err(Error::InvalidParameter(format!(
        "policy evaluation did not reach tolerance {} within {} sweeps",
        tol, cap
    )))
}

/// `V^π_τ` by solving `(I − γP^π) V = ⟨π, R⟩ + τH(π)` with an LU
/// factorization.
pub fn soft_policy_evaluation_direct(mdp: &TabularMdp, policy: &PolicyTable, tau: f64) -> Result<ValueVector> {
    check_policy(mdp, policy)?;
    let ns = mdp.num_states();
    let gamma = mdp.discount();
    let r_pi = policy_reward(mdp, policy, tau);
    let mut m = DMatrix::<f64>::identity(ns, ns);
    for s in 0..ns {
        for (a, &p) in policy.row(s).iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            for (s2, &t) in mdp.transition_row(s, a).iter().enumerate() {
                m[(s, s2)] -= gamma * p * t;
            }
        }
    }
    let rhs = DVector::from_vec(r_pi.0);
    let sol = m.lu().solve(&rhs).ok_or(Error::NonFinite("soft_policy_evaluation_direct"))?;
    let v = ValueVector(sol.iter().copied().collect());
    if !v.is_finite() {
        return Err(Error::NonFinite("soft_policy_evaluation_direct"));
    }
    Ok(v)
}

/// Unregularized value iteration `V ← max_a (R + γPV)` from zero, stopped
/// once successive iterates differ by at most `tol (1−γ)/γ`, which bounds
/// the distance to `V*` by `tol`.
pub fn exact_v_star(mdp: &TabularMdp, tol: f64) -> Result<ValueVector> {
    check_tol(tol)?;
    let gamma = mdp.discount();
    let stop = tol * (1.0 - gamma) / gamma;
    let cap = iteration_cap(gamma, stop, mdp.r_max().max(f64::MIN_POSITIVE));
    let mut v = ValueVector::zeros(mdp.num_states());
    for _ in 0..cap {
        let q = mdp.backup(&v);
        let next = ValueVector(q.rows().map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max)).collect());
        let delta = next.max_abs_diff(&v);
        v = next;
        if delta <= stop {
            break;
        }
    }
    Ok(v)
}
