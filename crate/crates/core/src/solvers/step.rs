use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::checks::check_condition_eq10;
use crate::bounding::BoundingFn;
use crate::error::{Error, Result};
use crate::mdp::TabularMdp;
use crate::soft_ops::{
    entropy, greedy_policy, kl_divergence, regularized_bellman, regularized_greedy, soft_advantage, softmax_policy,
    RegParams,
};
use crate::tables::{dot, PolicyTable, QTable, ValueVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseDistribution {
    /// Uniform on `[-magnitude, magnitude]`.
    Uniform,
    /// Centered normal with standard deviation `magnitude`.
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub distribution: NoiseDistribution,
    pub magnitude: f64,
    /// Offsets the noise stream; the run seed still selects the generator.
    #[serde(default)]
    pub seed: u64,
}

/// I.i.d. per-entry error injection `ε_{k+1}`.
#[derive(Debug, Clone)]
pub struct NoiseSource {
    config: NoiseConfig,
    rng: ChaCha8Rng,
}

impl NoiseSource {
    pub fn new(config: NoiseConfig, run_seed: u64) -> Result<Self> {
        if !(config.magnitude >= 0.0) || !config.magnitude.is_finite() {
            return Err(Error::InvalidParameter(format!("noise magnitude {} must be finite and >= 0", config.magnitude)));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(run_seed);
        // stream 0 is reserved for the initial table
        rng.set_stream(config.seed.wrapping_add(1));
        Ok(NoiseSource { config, rng })
    }

    pub fn perturb(&mut self, table: &mut QTable) {
        let m = self.config.magnitude;
        if m == 0.0 {
            return;
        }
        let ns = table.num_states();
        match self.config.distribution {
            NoiseDistribution::Uniform => {
                for s in 0..ns {
                    for x in table.row_mut(s) {
                        *x += self.rng.random_range(-m..=m);
                    }
                }
            }
            NoiseDistribution::Gaussian => {
                let normal = Normal::new(0.0, m).expect("finite non-negative std");
                for s in 0..ns {
                    for x in table.row_mut(s) {
                        *x += normal.sample(&mut self.rng);
                    }
                }
            }
        }
    }
}

/// Per-step quantities of the policy `π_{k+1} = G^{0,α}(Ψ_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDiagnostics {
    /// `H(π_{k+1})`; zero in the hard case.
    pub entropy: ValueVector,
    /// `KL(π_{k+1}‖π_k)`; not tracked in the hard case.
    pub kl: Option<ValueVector>,
    /// Sufficient-condition residual; non-negative where the condition holds.
    pub condition_residual: ValueVector,
}

/// The bounded gap-increasing operator `T^{fg}` with its divergence ceiling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BalOperator {
    pub params: RegParams,
    pub f: BoundingFn,
    pub g: BoundingFn,
    /// Largest admissible `|Ψ|` before a step is reported as divergent.
    pub ceiling: f64,
}

pub const DEFAULT_DIVERGENCE_FACTOR: f64 = 1e6;

impl BalOperator {
    /// Ceiling defaults to `10⁶ · V^α_max`.
    pub fn new(mdp: &TabularMdp, params: RegParams, f: BoundingFn, g: BoundingFn) -> Self {
        BalOperator {
            params,
            f,
            g,
            ceiling: DEFAULT_DIVERGENCE_FACTOR * mdp.v_max(params.alpha()),
        }
    }

    pub fn with_ceiling(mut self, ceiling: f64) -> Self {
        self.ceiling = ceiling;
        self
    }

    /// `R + κ f(A) + γ P ⟨π, Ψ − g(A)⟩` without noise.
    pub fn apply(&self, mdp: &TabularMdp, psi: &QTable, policy: &PolicyTable, advantage: &QTable, step: u64) -> QTable {
        let (ns, na) = psi.shape();
        let kappa = self.params.kappa();
        let successor = ValueVector(
            (0..ns)
                .map(|s| {
                    policy
                        .row(s)
                        .iter()
                        .zip(psi.row(s).iter().zip(advantage.row(s)))
                        .map(|(&p, (&q, &a))| if p == 0.0 { 0.0 } else { p * (q - self.g.eval(a, step)) })
                        .sum()
                })
                .collect(),
        );
        let next = mdp.expected_next(&successor);
        QTable::from_fn(ns, na, |s, a| {
            mdp.reward().get(s, a) + kappa * self.f.eval(advantage.get(s, a), step) + mdp.discount() * next.get(s, a)
        })
    }
}

/// Output of one scheme step.
#[derive(Debug, Clone)]
pub struct StepOutput {
    pub psi: QTable,
    pub policy: PolicyTable,
    pub advantage: QTable,
    pub diagnostics: StepDiagnostics,
}

/// Diagnostics for `π_{k+1} = G(Ψ_k)` against the previous policy `π_k`.
pub fn step_diagnostics(
    mdp: &TabularMdp,
    policy: &PolicyTable,
    prev_policy: &PolicyTable,
    advantage: &QTable,
    params: RegParams,
    g: &BoundingFn,
    step: u64,
) -> Result<StepDiagnostics> {
    let hard = params.alpha() == 0.0;
    let ent = if hard { ValueVector::zeros(policy.num_states()) } else { entropy(policy) };
    let kl = if hard { None } else { Some(kl_divergence(policy, prev_policy)?) };
    let condition_residual = check_condition_eq10(mdp, policy, prev_policy, advantage, params, g, step)?;
    Ok(StepDiagnostics {
        entropy: ent,
        kl,
        condition_residual,
    })
}

pub(crate) fn check_divergence(psi: &QTable, ceiling: f64, iteration: usize) -> Result<()> {
    let magnitude = psi.as_slice().iter().fold(0.0_f64, |m, x| if x.is_nan() { f64::INFINITY } else { m.max(x.abs()) });
    if magnitude > ceiling || !magnitude.is_finite() {
        return Err(Error::Diverged {
            iteration,
            magnitude,
            ceiling,
        });
    }
    Ok(())
}

/// One BAL step: `π_{k+1} = G^{0,α}(Ψ_k)`, `A_k = Ψ_k − L^α Ψ_k`,
/// `Ψ_{k+1} = R + κ f(A_k) + γP⟨π_{k+1}, Ψ_k − g(A_k)⟩ + ε_{k+1}`.
///
/// With `α = 0` the policy is the lowest-index argmax and `A_k = Ψ_k − max Ψ_k`.
pub fn bal_step(
    mdp: &TabularMdp,
    psi: &QTable,
    prev_policy: &PolicyTable,
    op: &BalOperator,
    step: u64,
    noise: Option<&mut NoiseSource>,
) -> Result<StepOutput> {
    psi.check_shape(mdp.num_states(), mdp.num_actions())?;
    let alpha = op.params.alpha();
    let policy = greedy_policy(psi, alpha)?;
    let advantage = soft_advantage(psi, alpha)?;
    let diagnostics = step_diagnostics(mdp, &policy, prev_policy, &advantage, op.params, &op.g, step)?;
    let mut next = op.apply(mdp, psi, &policy, &advantage, step);
    if let Some(noise) = noise {
        noise.perturb(&mut next);
    }
    check_divergence(&next, op.ceiling, step as usize + 1)?;
    Ok(StepOutput {
        psi: next,
        policy,
        advantage,
        diagnostics,
    })
}

/// Munchausen VI step written with the log-policy bonus:
/// `Ψ_{k+1} = R + κα log π_{k+1} + γP⟨π_{k+1}, Ψ_k − α log π_{k+1}⟩`.
pub fn mvi_step(mdp: &TabularMdp, psi: &QTable, params: RegParams) -> Result<(QTable, PolicyTable)> {
    let alpha = params.alpha();
    let policy = softmax_policy(psi, alpha)?;
    let log_pi = policy.table().map(f64::ln);
    let inner = psi.zip_map(&log_pi, |q, l| q - alpha * l);
    let next = mdp.expected_next(&policy.expect(&inner));
    let (ns, na) = psi.shape();
    let out = QTable::from_fn(ns, na, |s, a| {
        mdp.reward().get(s, a) + params.kappa() * alpha * log_pi.get(s, a) + mdp.discount() * next.get(s, a)
    });
    Ok((out, policy))
}

/// Expected Sarsa backup `R + γP⟨π_{k+1}, Ψ_k⟩` with the softmax policy.
pub fn expected_sarsa_step(mdp: &TabularMdp, psi: &QTable, alpha: f64) -> Result<(QTable, PolicyTable)> {
    let policy = greedy_policy(psi, alpha)?;
    let v = policy.expect(psi);
    Ok((mdp.backup(&v), policy))
}

/// Explicit MDVI step: `π_{k+1} = G^{λ,τ}_{π_k}(Q_k)`,
/// `Q_{k+1} = T^{λ,τ}_{π_{k+1}|π_k} Q_k + ε_{k+1}`.
pub fn mdvi_explicit_step(
    mdp: &TabularMdp,
    q: &QTable,
    prev_policy: &PolicyTable,
    params: RegParams,
    noise: Option<&mut NoiseSource>,
) -> Result<(QTable, PolicyTable)> {
    let policy = regularized_greedy(q, prev_policy, params)?;
    let mut next = regularized_bellman(mdp, q, &policy, prev_policy, params)?;
    if let Some(noise) = noise {
        noise.perturb(&mut next);
    }
    Ok((next, policy))
}

/// `⟨π, h(A)⟩` per state.
pub(crate) fn expected_bounded(policy: &PolicyTable, advantage: &QTable, h: &BoundingFn, step: u64) -> ValueVector {
    ValueVector(
        (0..policy.num_states())
            .map(|s| {
                let ha: Vec<f64> = advantage.row(s).iter().map(|&a| h.eval(a, step)).collect();
                dot(policy.row(s), &ha)
            })
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::build_random_mdp;
    use crate::soft_ops::soft_value;

    fn random_psi(ns: usize, na: usize, seed: u64, scale: f64) -> QTable {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        QTable::from_fn(ns, na, |_, _| rng.random_range(-scale..scale))
    }

    #[test]
    fn identity_bal_matches_mvi() {
        for seed in 0..10 {
            let mdp = build_random_mdp(5, 3, seed, 1.0, 0.9).unwrap();
            let psi = random_psi(5, 3, seed + 100, 2.0);
            let params = RegParams::new(0.3, 0.7).unwrap();
            let op = BalOperator::new(&mdp, params, BoundingFn::Identity, BoundingFn::Identity);
            let bal = bal_step(&mdp, &psi, &PolicyTable::uniform(5, 3), &op, 0, None).unwrap();
            let (mvi, _) = mvi_step(&mdp, &psi, params).unwrap();
            assert!(bal.psi.max_abs_diff(&mvi) < 1e-12, "{}", bal.psi.max_abs_diff(&mvi));
        }
    }

    #[test]
    fn zero_bal_is_expected_sarsa() {
        let mdp = build_random_mdp(4, 3, 3, 1.0, 0.9).unwrap();
        let psi = random_psi(4, 3, 5, 3.0);
        let params = RegParams::new(0.5, 0.9).unwrap();
        let op = BalOperator::new(&mdp, params, BoundingFn::Zero, BoundingFn::Zero);
        let bal = bal_step(&mdp, &psi, &PolicyTable::uniform(4, 3), &op, 0, None).unwrap();
        let (es, _) = expected_sarsa_step(&mdp, &psi, 0.5).unwrap();
        assert!(bal.psi.max_abs_diff(&es) < 1e-14);
    }

    /// Hand evaluation on a 2-state, 2-action MDP:
    /// P(·|0,0) = [1, 0], P(·|0,1) = [0, 1], P(·|1,0) = [0.5, 0.5], P(·|1,1) = [0, 1];
    /// R = [[1, 0], [0, 2]]; γ = 0.9; Ψ₀ = [[1, 0], [0, 0]]; α = 0.5, κ = 0.5;
    /// f = clip(x, −1, 1), g = identity.
    #[test]
    fn tiny_instance_hand_evaluation() {
        let mdp = TabularMdp::new(
            2,
            2,
            vec![1.0, 0.0, 0.0, 1.0, 0.5, 0.5, 0.0, 1.0],
            QTable::from_rows(&[vec![1.0, 0.0], vec![0.0, 2.0]]).unwrap(),
            0.9,
            2.0,
        )
        .unwrap();
        let psi = QTable::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let params = RegParams::new(0.5, 0.5).unwrap();
        let op = BalOperator::new(&mdp, params, BoundingFn::clip_unit(), BoundingFn::Identity);
        let out = bal_step(&mdp, &psi, &PolicyTable::uniform(2, 2), &op, 0, None).unwrap();

        // State 0: L = 0.5 ln(e² + 1) = 1.0634640055214863
        //          A = [−0.0634640055214863, −1.0634640055214863]
        //          f(A) = [−0.0634640055214863, −1]
        //          with g = Id, ⟨π, Ψ − A⟩ = L = 1.0634640055214863
        // State 1: L = 0.5 ln 2 = 0.34657359027997264, successor value = L
        let l0 = 1.063_464_005_521_486_3;
        let l1 = 0.346_573_590_279_972_64;
        let expected = [
            1.0 + 0.5 * (-0.063_464_005_521_486_3) + 0.9 * l0,
            0.0 - 0.5 + 0.9 * l1,
            0.0 + 0.5 * (-l1) + 0.9 * (0.5 * l0 + 0.5 * l1),
            2.0 + 0.5 * (-l1) + 0.9 * l1,
        ];
        for (i, &e) in expected.iter().enumerate() {
            assert!((out.psi.as_slice()[i] - e).abs() < 1e-14, "entry {}: {} vs {}", i, out.psi.as_slice()[i], e);
        }
    }

    #[test]
    fn mdvi_without_kl_is_soft_value_iteration() {
        let mdp = build_random_mdp(4, 3, 8, 1.0, 0.9).unwrap();
        let q = random_psi(4, 3, 1, 2.0);
        let params = RegParams::new(0.4, 0.0).unwrap();
        let (next, _) = mdvi_explicit_step(&mdp, &q, &PolicyTable::uniform(4, 3), params, None).unwrap();
        let v = soft_value(&q, 0.4).unwrap();
        assert!(next.max_abs_diff(&mdp.backup(&v)) < 1e-13);
    }

    #[test]
    fn small_discount_backup_close_to_reward() {
        let mdp = build_random_mdp(4, 2, 2, 1.0, 0.01).unwrap();
        let q = random_psi(4, 2, 2, 1.0);
        let params = RegParams::new(0.1, 0.5).unwrap();
        let (next, _) = mdvi_explicit_step(&mdp, &q, &PolicyTable::uniform(4, 2), params, None).unwrap();
        let scale = 1.0 + q.max_abs() + params.alpha() * 2f64.ln();
        assert!(next.max_abs_diff(mdp.reward()) <= 0.01 * scale);
    }

    #[test]
    fn divergence_is_reported() {
        let mdp = build_random_mdp(2, 2, 1, 1.0, 0.9).unwrap();
        let params = RegParams::new(0.1, 0.5).unwrap();
        let op = BalOperator::new(&mdp, params, BoundingFn::Identity, BoundingFn::Identity).with_ceiling(1.0);
        let psi = QTable::from_fn(2, 2, |_, _| 5.0);
        let err = bal_step(&mdp, &psi, &PolicyTable::uniform(2, 2), &op, 3, None).unwrap_err();
        assert!(matches!(err, Error::Diverged { iteration: 4, .. }));
    }

    #[test]
    fn noise_is_seeded() {
        let cfg = NoiseConfig {
            distribution: NoiseDistribution::Gaussian,
            magnitude: 0.1,
            seed: 3,
        };
        let mut a = QTable::zeros(3, 2);
        let mut b = QTable::zeros(3, 2);
        NoiseSource::new(cfg, 9).unwrap().perturb(&mut a);
        NoiseSource::new(cfg, 9).unwrap().perturb(&mut b);
        assert_eq!(a, b);
        assert!(a.max_abs() > 0.0);
        let mut u = QTable::zeros(50, 2);
        NoiseSource::new(NoiseConfig { distribution: NoiseDistribution::Uniform, ..cfg }, 9).unwrap().perturb(&mut u);
        assert!(u.max_abs() <= 0.1);
    }

    #[test]
    fn hard_case_diagnostics() {
        let mdp = build_random_mdp(3, 3, 4, 1.0, 0.9).unwrap();
        let params = RegParams::new(0.0, 0.8).unwrap();
        let op = BalOperator::new(&mdp, params, BoundingFn::tanh(1.0), BoundingFn::tanh(1.0));
        let psi = random_psi(3, 3, 4, 1.0);
        let out = bal_step(&mdp, &psi, &PolicyTable::uniform(3, 3), &op, 0, None).unwrap();
        assert!(out.diagnostics.kl.is_none());
        assert_eq!(out.diagnostics.entropy.0, vec![0.0; 3]);
        assert!(out.diagnostics.condition_residual.0.iter().all(|&r| r >= 0.0));
        for s in 0..3 {
            assert_eq!(out.policy.row(s).iter().filter(|&&p| p == 1.0).count(), 1);
        }
    }
}
