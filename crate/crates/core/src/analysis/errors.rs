use serde::Serialize;

use crate::bounding::BoundingFn;
use crate::error::{Error, Result};
use crate::mdp::TabularMdp;
use crate::soft_ops::{entropy, soft_advantage, RegParams};
use crate::solvers::RunTrace;
use crate::tables::{PolicyTable, QTable, ValueVector};

/// Sup-norms of the inherent error terms at iteration `k ≥ 1`, next to the
/// identity baselines evaluated on the same iterates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ErrorTermRow {
    pub iteration: usize,
    /// `‖−κ⟨π*, f(A_{k−1})⟩‖_∞`.
    pub cross: f64,
    pub cross_identity: f64,
    /// `‖⟨π*, κA*_τ − γP⟨π_k, A_{k−1} − g(A_{k−1})⟩⟩‖_∞`.
    pub entropy: f64,
    pub entropy_identity: f64,
    /// `‖Δ^{Xf}_k + Δ^{Hg}_k‖_∞`.
    pub total: f64,
    /// Whether `γ P^{π*} H(π_k) ≤ κ H(π*)` holds at every state.
    pub premise: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorTermReport {
    pub c_f: f64,
    pub rows: Vec<ErrorTermRow>,
}

impl ErrorTermReport {
    /// Iterations breaking `‖Δ^{Xf}‖ ≤ ‖Δ^{XId}‖` or `‖Δ^{Xf}‖ ≤ c_f`.
    pub fn cross_violations(&self, tol: f64) -> Vec<usize> {
        self.rows
            .iter()
            .filter(|r| r.cross > r.cross_identity + tol || r.cross > self.c_f + tol)
            .map(|r| r.iteration)
            .collect()
    }

    /// Iterations where the premise holds but `‖Δ^{Hg}‖ > ‖Δ^{HId}‖`.
    pub fn entropy_violations(&self, tol: f64) -> Vec<usize> {
        self.rows
            .iter()
            .filter(|r| r.premise && r.entropy > r.entropy_identity + tol)
            .map(|r| r.iteration)
            .collect()
    }
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Error terms for `k = 1..=K`. Record `k − 1` supplies `Ψ_{k−1}` and
/// `π_k = G(Ψ_{k−1})`, so every record before the last must keep its tables.
pub fn error_terms(
    mdp: &TabularMdp,
    trace: &RunTrace,
    params: RegParams,
    f: &BoundingFn,
    g: &BoundingFn,
    pi_star: &PolicyTable,
    a_star_tau: &QTable,
) -> Result<ErrorTermReport> {
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    a_star_tau.check_shape(ns, na)?;
    pi_star.table().check_shape(ns, na)?;
    let kappa = params.kappa();
    let gamma = mdp.discount();

    let h_star = entropy(pi_star);
    let entropy_identity: Vec<f64> = (0..ns)
        .map(|s| kappa * crate::tables::dot(pi_star.row(s), a_star_tau.row(s)))
        .collect();

    let mut rows = Vec::with_capacity(trace.len().saturating_sub(1));
    for pair in trace.records.windows(2) {
        let prev = &pair[0];
        let missing = || Error::InvalidParameter(format!("record {} has no tables", prev.iteration));
        let psi = prev.psi.as_ref().ok_or_else(missing)?;
        let pi_k = prev.policy.as_ref().ok_or_else(missing)?;
        psi.check_shape(ns, na)?;
        let adv = soft_advantage(psi, params.alpha())?;
        let step = prev.iteration as u64;

        let cross: Vec<f64> = (0..ns)
            .map(|s| -kappa * (0..na).map(|a| pi_star.prob(s, a) * f.eval(adv.get(s, a), step)).sum::<f64>())
            .collect();
        let cross_identity: Vec<f64> = (0..ns)
            .map(|s| -kappa * crate::tables::dot(pi_star.row(s), adv.row(s)))
            .collect();

        let residual = ValueVector(
            (0..ns)
                .map(|s| (0..na).map(|a| pi_k.prob(s, a) * (adv.get(s, a) - g.eval(adv.get(s, a), step))).sum())
                .collect(),
        );
        let propagated = mdp.expected_next(&residual);
        let ent: Vec<f64> = (0..ns)
            .map(|s| (0..na).map(|a| pi_star.prob(s, a) * (kappa * a_star_tau.get(s, a) - gamma * propagated.get(s, a))).sum())
            .collect();
        let total: Vec<f64> = cross.iter().zip(&ent).map(|(x, h)| x + h).collect();

        let h_k = entropy(pi_k);
        let lhs = mdp.policy_expected_next(pi_star, &h_k);
        let premise = (0..ns).all(|s| gamma * lhs[s] <= kappa * h_star[s]);

        rows.push(ErrorTermRow {
            iteration: prev.iteration + 1,
            cross: sup(&cross),
            cross_identity: sup(&cross_identity),
            entropy: sup(&ent),
            entropy_identity: sup(&entropy_identity),
            total: sup(&total),
            premise,
        });
    }
    Ok(ErrorTermReport {
        c_f: f.bound(trace.last().iteration as u64),
        rows,
    })
}
