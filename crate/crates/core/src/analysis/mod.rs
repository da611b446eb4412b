//! Post-hoc analytics over completed traces: suboptimality curves, IQM
//! aggregation, bound verification, error terms and action-gap statistics.

mod bounds;
mod errors;

pub use bounds::{prop1_bound_check, prop1_bound_check_against, BoundFlags, BoundReport, CONVERGENCE_TOL, CONVERGENCE_WINDOW};
pub use errors::{error_terms, ErrorTermReport, ErrorTermRow};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mdp::{soft_policy_evaluation_direct, TabularMdp};
use crate::solvers::RunTrace;

/// Interquartile mean: drops `⌊n/4⌋` order statistics from each tail and
/// averages the rest.
pub fn iqm(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidParameter("iqm of an empty sample".into()));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::NonFinite("iqm input"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let cut = sorted.len() / 4;
    let middle = &sorted[cut..sorted.len() - cut];
    Ok(middle.iter().sum::<f64>() / middle.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuboptimalityCurve {
    /// `‖V^{π}_τ − V*_τ‖_∞` for the policy of each record.
    pub raw: Vec<f64>,
    /// `raw / raw[0]`; entry 0 is exactly 1.
    pub normalized: Vec<f64>,
}

pub fn suboptimality_value(
    mdp: &TabularMdp,
    policy: &crate::tables::PolicyTable,
    tau: f64,
    v_star_tau: &crate::tables::ValueVector,
) -> Result<f64> {
    let v = soft_policy_evaluation_direct(mdp, policy, tau)?;
    Ok(v.max_abs_diff(v_star_tau))
}

/// Normalizes by the first entry. A zero first entry leaves values as is.
pub fn normalize_curve(raw: &[f64]) -> Vec<f64> {
    let Some(&first) = raw.first() else {
        return Vec::new();
    };
    let scale = if first > 0.0 { first } else { 1.0 };
    let mut out: Vec<f64> = raw.iter().map(|r| r / scale).collect();
    out[0] = 1.0;
    out
}

/// Suboptimality of the policy carried by each record (the greedy policy of
/// its `Ψ_k`). Every record must keep its policy table.
pub fn suboptimality_curve(
    mdp: &TabularMdp,
    trace: &RunTrace,
    tau: f64,
    v_star_tau: &crate::tables::ValueVector,
) -> Result<SuboptimalityCurve> {
    let raw = trace
        .records
        .iter()
        .map(|r| {
            let policy = r
                .policy
                .as_ref()
                .ok_or_else(|| Error::InvalidParameter(format!("record {} has no policy table", r.iteration)))?;
            suboptimality_value(mdp, policy, tau, v_star_tau).map(|d| d.max(0.0))
        })
        .collect::<Result<Vec<f64>>>()?;
    let normalized = normalize_curve(&raw);
    Ok(SuboptimalityCurve { raw, normalized })
}

/// Action gaps `V_k(s) − Ψ_k(s, a)` of one record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapSummary {
    pub iteration: usize,
    /// Smallest gap among non-argmax actions; `None` with a single action.
    pub min_suboptimal: Option<f64>,
    pub mean: f64,
    pub max: f64,
}

pub fn gap_summary(iteration: usize, psi: &crate::tables::QTable, v: &crate::tables::ValueVector) -> GapSummary {
    let (ns, na) = psi.shape();
    let mut min_sub = f64::INFINITY;
    let mut sum = 0.0;
    let mut max = f64::NEG_INFINITY;
    for s in 0..ns {
        let row = psi.row(s);
        let best = crate::soft_ops::argmax(row);
        for (a, &x) in row.iter().enumerate() {
            let gap = v[s] - x;
            sum += gap;
            max = max.max(gap);
            if a != best {
                min_sub = min_sub.min(gap);
            }
        }
    }
    GapSummary {
        iteration,
        min_suboptimal: (na > 1).then_some(min_sub),
        mean: sum / (ns * na) as f64,
        max,
    }
}

/// Gap summaries for every record holding its `Ψ_k` table.
pub fn gap_statistics(trace: &RunTrace) -> Vec<GapSummary> {
    trace
        .records
        .iter()
        .filter_map(|r| r.psi.as_ref().map(|psi| gap_summary(r.iteration, psi, &r.v)))
        .collect()
}
