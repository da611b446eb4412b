use serde::Serialize;

use crate::bounding::{delta_bar, BoundingFn};
use crate::error::Result;
use crate::mdp::TabularMdp;
use crate::soft_ops::{soft_optimal_value, RegParams};
use crate::solvers::RunTrace;
use crate::tables::ValueVector;

/// Trailing window length for the convergence test and limit estimates.
pub const CONVERGENCE_WINDOW: usize = 10;
/// Largest admissible `‖V_k − V_{k−1}‖_∞` inside the window.
pub const CONVERGENCE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundFlags {
    /// `Ṽ ≤ V*_α`.
    pub upper: bool,
    /// `Ṽ ≥ V*_α − width`.
    pub lower: bool,
    /// `Ṽ ≥ V*_τ`; only asserted for `f = g = Id`.
    pub tau_lower: Option<bool>,
    /// `max_window Ψ_k ≤ Q*_α`.
    pub psi_upper: Option<bool>,
    /// `min_window Ψ_k ≥ Q̃ − width·(1 − γ)`.
    pub psi_lower: Option<bool>,
}

/// Limit bounds on a finished run. Slack is `bound side − other side`, so
/// non-negative slack means satisfied.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub converged: bool,
    pub v_star_alpha: ValueVector,
    pub v_star_tau: ValueVector,
    pub v_tilde: ValueVector,
    /// `Ṽ − (V*_α − width)`.
    pub lower_slack: Vec<f64>,
    /// `V*_α − Ṽ`.
    pub upper_slack: Vec<f64>,
    /// `Ṽ − V*_τ`.
    pub tau_slack: Vec<f64>,
    pub psi_upper_slack: Option<f64>,
    pub psi_lower_slack: Option<f64>,
    pub c_f: f64,
    pub delta_bar_g: f64,
    /// `(κ c_f + γ α Δ̄_g log|A|)/(1 − γ)`.
    pub width: f64,
    /// Tolerance applied to every slack when setting the flags.
    pub tolerance: f64,
    pub satisfied: BoundFlags,
}

/// Checks `V*_α ≥ Ṽ ≥ V*_α − width` with `Ṽ` the final `V_k`, the `Ψ`
/// limit bounds over the trailing window, and for `f = g = Id` the lower
/// bound `Ṽ ≥ V*_τ`. Non-converged traces are flagged but still measured.
pub fn prop1_bound_check(
    mdp: &TabularMdp,
    trace: &RunTrace,
    params: RegParams,
    f: &BoundingFn,
    g: &BoundingFn,
    tolerance: f64,
) -> Result<BoundReport> {
    let oracle_tol = 1e-12_f64.max(tolerance * 1e-3);
    let v_star_alpha = soft_optimal_value(mdp, params.alpha(), oracle_tol)?;
    let v_star_tau = soft_optimal_value(mdp, params.tau(), oracle_tol)?;
    prop1_bound_check_against(mdp, trace, params, f, g, &v_star_alpha, &v_star_tau, tolerance)
}

/// [`prop1_bound_check`] with precomputed `V*_α` and `V*_τ`.
#[allow(clippy::too_many_arguments)]
pub fn prop1_bound_check_against(
    mdp: &TabularMdp,
    trace: &RunTrace,
    params: RegParams,
    f: &BoundingFn,
    g: &BoundingFn,
    v_star_alpha: &ValueVector,
    v_star_tau: &ValueVector,
    tolerance: f64,
) -> Result<BoundReport> {
    let alpha = params.alpha();
    let kappa = params.kappa();
    let gamma = mdp.discount();
    let na = mdp.num_actions() as f64;
    let v_star_alpha = v_star_alpha.clone();
    let v_star_tau = v_star_tau.clone();
    for v in [&v_star_alpha, &v_star_tau] {
        if v.len() != mdp.num_states() {
            return Err(crate::error::Error::ShapeMismatch {
                expected: format!("{} states", mdp.num_states()),
                actual: format!("{} states", v.len()),
            });
        }
    }

    let records = &trace.records;
    let v_tilde = trace.last().v.clone();
    let converged = trace.diverged.is_none()
        && records.len() > CONVERGENCE_WINDOW
        && records[records.len() - CONVERGENCE_WINDOW - 1..]
            .windows(2)
            .all(|w| w[1].v.max_abs_diff(&w[0].v) <= CONVERGENCE_TOL);

    let step = trace.last().iteration as u64;
    let c_f = f.bound(step);
    let delta_bar_g = delta_bar(g, alpha);
    let f_term = if kappa == 0.0 { 0.0 } else { kappa * c_f };
    let g_term = gamma * alpha * delta_bar_g * na.ln();
    let width = (f_term + g_term) / (1.0 - gamma);

    let n = v_tilde.len();
    let upper_slack: Vec<f64> = (0..n).map(|s| v_star_alpha[s] - v_tilde[s]).collect();
    let lower_slack: Vec<f64> = (0..n).map(|s| v_tilde[s] - (v_star_alpha[s] - width)).collect();
    let tau_slack: Vec<f64> = (0..n).map(|s| v_tilde[s] - v_star_tau[s]).collect();

    let window: Vec<_> = records
        .iter()
        .rev()
        .take(CONVERGENCE_WINDOW)
        .filter_map(|r| r.psi.as_ref())
        .collect();
    let (psi_upper_slack, psi_lower_slack) = if window.is_empty() {
        (None, None)
    } else {
        let q_star = mdp.backup(&v_star_alpha);
        let q_tilde = mdp.backup(&v_tilde);
        let margin = f_term + g_term;
        let mut up = f64::INFINITY;
        let mut lo = f64::INFINITY;
        for s in 0..n {
            for a in 0..mdp.num_actions() {
                let hi = window.iter().map(|p| p.get(s, a)).fold(f64::NEG_INFINITY, f64::max);
                let low = window.iter().map(|p| p.get(s, a)).fold(f64::INFINITY, f64::min);
                up = up.min(q_star.get(s, a) - hi);
                lo = lo.min(low - (q_tilde.get(s, a) - margin));
            }
        }
        (Some(up), Some(lo))
    };

    let ok = |xs: &[f64]| xs.iter().all(|&x| x >= -tolerance);
    let identity = matches!(f, BoundingFn::Identity) && matches!(g, BoundingFn::Identity);
    let satisfied = BoundFlags {
        upper: ok(&upper_slack),
        lower: ok(&lower_slack),
        tau_lower: identity.then(|| ok(&tau_slack)),
        psi_upper: psi_upper_slack.map(|x| x >= -tolerance),
        psi_lower: psi_lower_slack.map(|x| x >= -tolerance),
    };
    Ok(BoundReport {
        converged,
        v_star_alpha,
        v_star_tau,
        v_tilde,
        lower_slack,
        upper_slack,
        tau_slack,
        psi_upper_slack,
        psi_lower_slack,
        c_f,
        delta_bar_g,
        width,
        tolerance,
        satisfied,
    })
}
