//! Iteration schemes: explicit MDVI, Munchausen VI and bounded advantage
//! learning, plus the convergence-condition and mirror-descent checks.

mod checks;
mod step;

pub use checks::{check_condition_eq10, mirror_descent_residual};
pub use step::{
    bal_step, expected_sarsa_step, mdvi_explicit_step, mvi_step, step_diagnostics, BalOperator, NoiseConfig,
    NoiseDistribution, NoiseSource, StepDiagnostics, StepOutput, DEFAULT_DIVERGENCE_FACTOR,
};

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bounding::BoundingFn;
use crate::error::{Error, Result};
use crate::mdp::TabularMdp;
use crate::soft_ops::{soft_advantage, soft_value, RegParams};
use crate::tables::{PolicyTable, QTable, ValueVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Explicit MDVI on `(Q_k, π_k)`.
    MdviExplicit,
    /// Munchausen VI; BAL with `f = g = Id`.
    Mvi,
    /// Bounded advantage learning with the configured `f`, `g`.
    Bal,
}

/// Initial table `Ψ₀` (or `Q₀` for explicit MDVI, see [`run_scheme`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum PsiInit {
    Zeros,
    /// I.i.d. uniform on `(−m, m)`.
    UniformIn { m: f64 },
    /// I.i.d. uniform on `(−V^τ_max, V^τ_max)`.
    UniformVmax,
    Explicit { values: Vec<Vec<f64>> },
}

impl PsiInit {
    pub fn draw(&self, mdp: &TabularMdp, params: RegParams, rng: &mut ChaCha8Rng) -> Result<QTable> {
        let (ns, na) = (mdp.num_states(), mdp.num_actions());
        let uniform = |m: f64, rng: &mut ChaCha8Rng| -> Result<QTable> {
            if !(m >= 0.0) || !m.is_finite() {
                return Err(Error::InvalidParameter(format!("init range {} must be finite and >= 0", m)));
            }
            if m == 0.0 {
                return Ok(QTable::zeros(ns, na));
            }
            Ok(QTable::from_fn(ns, na, |_, _| rng.random_range(-m..m)))
        };
        match self {
            PsiInit::Zeros => Ok(QTable::zeros(ns, na)),
            PsiInit::UniformIn { m } => uniform(*m, rng),
            PsiInit::UniformVmax => uniform(mdp.v_max(params.tau()), rng),
            PsiInit::Explicit { values } => {
                let t = QTable::from_rows(values)?;
                t.check_shape(ns, na)?;
                if !t.is_finite() {
                    return Err(Error::NonFinite("explicit initial table"));
                }
                Ok(t)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub scheme: Scheme,
    pub params: RegParams,
    pub f: BoundingFn,
    pub g: BoundingFn,
    /// Number of updates `K`; the trace holds `K + 1` records.
    pub iterations: usize,
    pub seed: u64,
    pub noise: Option<NoiseConfig>,
    pub psi_init: PsiInit,
    /// Keep `Ψ_k` and `π_{k+1}` tables for every record. Without it only
    /// the final record keeps them.
    pub keep_tables: bool,
    pub allow_invalid_bounding: bool,
    /// Divergence ceiling as a multiple of `V^α_max`.
    pub divergence_factor: f64,
}

impl SolverConfig {
    pub fn new(scheme: Scheme, params: RegParams) -> Self {
        SolverConfig {
            scheme,
            params,
            f: BoundingFn::Identity,
            g: BoundingFn::Identity,
            iterations: 100,
            seed: 0,
            noise: None,
            psi_init: PsiInit::Zeros,
            keep_tables: true,
            allow_invalid_bounding: false,
            divergence_factor: DEFAULT_DIVERGENCE_FACTOR,
        }
    }

    pub fn bal(params: RegParams, f: BoundingFn, g: BoundingFn) -> Self {
        SolverConfig {
            f,
            g,
            ..SolverConfig::new(Scheme::Bal, params)
        }
    }

    /// BAL with `f = g ≡ 0`.
    pub fn expected_sarsa(params: RegParams) -> Self {
        SolverConfig::bal(params, BoundingFn::Zero, BoundingFn::Zero)
    }

    pub fn with_iterations(mut self, k: usize) -> Self {
        self.iterations = k;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_init(mut self, init: PsiInit) -> Self {
        self.psi_init = init;
        self
    }

    pub fn with_noise(mut self, noise: NoiseConfig) -> Self {
        self.noise = Some(noise);
        self
    }

    /// Bounding functions in effect: M-VI and explicit MDVI always use the
    /// identity.
    pub fn effective_bounding(&self) -> (BoundingFn, BoundingFn) {
        match self.scheme {
            Scheme::Bal => (self.f, self.g),
            Scheme::Mvi | Scheme::MdviExplicit => (BoundingFn::Identity, BoundingFn::Identity),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.scheme == Scheme::MdviExplicit && self.params.alpha() == 0.0 {
            return Err(Error::InvalidParameter("explicit MDVI needs alpha > 0".into()));
        }
        if !(self.divergence_factor > 0.0) {
            return Err(Error::InvalidParameter("divergence_factor must be positive".into()));
        }
        if !self.allow_invalid_bounding {
            let (f, g) = self.effective_bounding();
            for h in [f, g] {
                if !h.is_valid() {
                    return Err(Error::InvalidBounding(h.name()));
                }
            }
        }
        Ok(())
    }
}

/// One iterate of a run.
///
/// Record `k` holds `Ψ_k`, `V_k = L^α Ψ_k` and the policy it induces,
/// `π_{k+1} = G^{0,α}(Ψ_k)`; the diagnostics compare `π_{k+1}` with the
/// policy of record `k − 1` (uniform for `k = 0`).
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iteration: usize,
    pub psi: Option<QTable>,
    /// `Q_k` for explicit MDVI runs.
    pub q: Option<QTable>,
    pub v: ValueVector,
    pub policy: Option<PolicyTable>,
    pub entropy: ValueVector,
    pub kl: Option<ValueVector>,
    pub condition_residual: ValueVector,
    /// Wall time since the run started; not part of any serialized output.
    pub elapsed: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Divergence {
    pub iteration: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub scheme: Scheme,
    pub params: RegParams,
    pub f: BoundingFn,
    pub g: BoundingFn,
    pub seed: u64,
    pub records: Vec<TraceRecord>,
    pub diverged: Option<Divergence>,
}

impl RunTrace {
    pub fn last(&self) -> &TraceRecord {
        self.records.last().expect("a trace always holds the initial record")
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn final_psi(&self) -> Option<&QTable> {
        self.last().psi.as_ref()
    }
}

#[allow(clippy::too_many_arguments)]
fn build_record(
    mdp: &TabularMdp,
    iteration: usize,
    psi: &QTable,
    q: Option<QTable>,
    prev_policy: &PolicyTable,
    params: RegParams,
    g: &BoundingFn,
    start: Instant,
) -> Result<(TraceRecord, PolicyTable)> {
    let alpha = params.alpha();
    let policy = crate::soft_ops::greedy_policy(psi, alpha)?;
    let v = soft_value(psi, alpha)?;
    let advantage = soft_advantage(psi, alpha)?;
    let diag = step_diagnostics(mdp, &policy, prev_policy, &advantage, params, g, iteration as u64)?;
    let record = TraceRecord {
        iteration,
        psi: Some(psi.clone()),
        q,
        v,
        policy: Some(policy.clone()),
        entropy: diag.entropy,
        kl: diag.kl,
        condition_residual: diag.condition_residual,
        elapsed: start.elapsed(),
    };
    Ok((record, policy))
}

/// Runs `config.iterations` updates of the selected scheme.
///
/// BAL and M-VI iterate `Ψ_k` directly. Explicit MDVI iterates `(Q_k, π_k)`
/// from `π₀` uniform and `Q₀ = Ψ₀ − κα log π₀`, and records
/// `Ψ_k = Q_k + κα log π_k` so all schemes share one trace layout.
///
/// A divergent step ends the trace early with [`RunTrace::diverged`] set;
/// that is not an error. Errors are reserved for invalid configurations.
pub fn run_scheme(mdp: &TabularMdp, config: &SolverConfig) -> Result<RunTrace> {
    config.validate()?;
    let params = config.params;
    let (f, g) = config.effective_bounding();
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    let start = Instant::now();

    let mut init_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let psi0 = config.psi_init.draw(mdp, params, &mut init_rng)?;
    let mut noise = config.noise.map(|n| NoiseSource::new(n, config.seed)).transpose()?;
    let ceiling = config.divergence_factor * mdp.v_max(params.alpha());
    let op = BalOperator { params, f, g, ceiling };

    let mut trace = RunTrace {
        scheme: config.scheme,
        params,
        f,
        g,
        seed: config.seed,
        records: Vec::with_capacity(config.iterations + 1),
        diverged: None,
    };

    let uniform = PolicyTable::uniform(ns, na);
    let lambda = params.lambda();
    let mut psi = psi0;
    let mut prev_policy = uniform.clone();
    // explicit MDVI state
    let mut q = (config.scheme == Scheme::MdviExplicit)
        .then(|| psi.zip_map(uniform.table(), |p, mu| p - lambda * mu.ln()));

    for k in 0..=config.iterations {
        let (mut record, policy) = build_record(mdp, k, &psi, q.clone(), &prev_policy, params, &g, start)?;
        let is_last = k == config.iterations;
        if !config.keep_tables && !is_last {
            record.psi = None;
            record.q = None;
            record.policy = None;
        }
        trace.records.push(record);
        if is_last {
            break;
        }

        let stepped = match config.scheme {
            Scheme::Bal | Scheme::Mvi => bal_step(mdp, &psi, &prev_policy, &op, k as u64, noise.as_mut()).map(|out| {
                debug_assert_eq!(out.policy, policy);
                out.psi
            }),
            Scheme::MdviExplicit => {
                let q_k = q.as_ref().expect("explicit MDVI keeps Q");
                mdvi_explicit_step(mdp, q_k, &prev_policy, params, noise.as_mut()).and_then(|(q_next, pi_next)| {
                    step::check_divergence(&q_next, ceiling, k + 1)?;
                    let psi_next = q_next.zip_map(pi_next.table(), |x, p| x + lambda * p.ln());
                    q = Some(q_next);
                    Ok(psi_next)
                })
            }
        };
        match stepped {
            Ok(next) => {
                psi = next;
                prev_policy = policy;
            }
            Err(e @ Error::Diverged { .. }) | Err(e @ Error::InfiniteKl(_)) | Err(e @ Error::NonFinite(_)) => {
                trace.diverged = Some(Divergence {
                    iteration: k + 1,
                    message: e.to_string(),
                });
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(trace)
}
