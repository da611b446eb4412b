use super::step::{expected_bounded, BalOperator};
use crate::bounding::BoundingFn;
use crate::error::Result;
use crate::mdp::TabularMdp;
use crate::soft_ops::{entropy, kl_divergence, regularized_bellman, soft_advantage, softmax_policy, RegParams};
use crate::tables::{PolicyTable, QTable, ValueVector};

/// Residual of the sufficient convergence condition
/// `λ KL(π_{k+1}‖π_k) − γ P^{π_{k+1}} (α H(π_{k+1}) + ⟨π_{k+1}, g(A_k)⟩)`.
///
/// Non-negative exactly where the condition holds. An infinite KL with
/// `λ > 0` yields `+∞`.
pub fn check_condition_eq10(
    mdp: &TabularMdp,
    pi_next: &PolicyTable,
    pi_k: &PolicyTable,
    a_k: &QTable,
    params: RegParams,
    g: &BoundingFn,
    step: u64,
) -> Result<ValueVector> {
    let (alpha, lambda) = (params.alpha(), params.lambda());
    let h = entropy(pi_next);
    let bonus = expected_bounded(pi_next, a_k, g, step);
    let inner = ValueVector(h.0.iter().zip(&bonus.0).map(|(h, b)| alpha * h + b).collect());
    let propagated = mdp.policy_expected_next(pi_next, &inner);
    let kl_term: Vec<f64> = if lambda > 0.0 {
        kl_divergence(pi_next, pi_k)?.0.into_iter().map(|d| lambda * d).collect()
    } else {
        vec![0.0; mdp.num_states()]
    };
    Ok(ValueVector(
        kl_term
            .iter()
            .zip(&propagated.0)
            .map(|(k, p)| if k.is_infinite() { f64::INFINITY } else { k - mdp.discount() * p })
            .collect(),
    ))
}

/// Max-abs gap between the BAL update expressed on `Q` and its
/// mirror-descent form.
///
/// Both sides live in `Q`-space: the left side is `T^{fg} Ψ_k − κα log π_{k+1}`
/// (the `Q_{k+1}` paired with `Ψ_{k+1}`), the right side
/// `T^{λ,τ}_{π_{k+1}|π_k} Q_k − κ(A_k − f(A_k)) + γP⟨π_{k+1}, A_k − g(A_k)⟩`
/// with `Q_k = Ψ_k − κα log π_k`. `pi_k` must have full support.
pub fn mirror_descent_residual(
    mdp: &TabularMdp,
    psi: &QTable,
    pi_k: &PolicyTable,
    params: RegParams,
    f: &BoundingFn,
    g: &BoundingFn,
    step: u64,
) -> Result<f64> {
    let alpha = params.alpha();
    let kappa = params.kappa();
    let pi_next = softmax_policy(psi, alpha)?;
    let advantage = soft_advantage(psi, alpha)?;

    let op = BalOperator {
        params,
        f: *f,
        g: *g,
        ceiling: f64::INFINITY,
    };
    let lhs = op
        .apply(mdp, psi, &pi_next, &advantage, step)
        .zip_map(&advantage, |t, a| t - kappa * a);

    let q_k = psi.zip_map(pi_k.table(), |p, mu| p - params.lambda() * mu.ln());
    let md = regularized_bellman(mdp, &q_k, &pi_next, pi_k, params)?;
    let gap = ValueVector(
        (0..mdp.num_states())
            .map(|s| {
                pi_next
                    .row(s)
                    .iter()
                    .zip(advantage.row(s))
                    .map(|(&p, &a)| p * (a - g.eval(a, step)))
                    .sum()
            })
            .collect(),
    );
    let gap_next = mdp.expected_next(&gap);
    let (ns, na) = psi.shape();
    let rhs = QTable::from_fn(ns, na, |s, a| {
        let adv = advantage.get(s, a);
        md.get(s, a) - kappa * (adv - f.eval(adv, step)) + mdp.discount() * gap_next.get(s, a)
    });
    Ok(lhs.max_abs_diff(&rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::build_random_mdp;
    use crate::soft_ops::argmax_policy;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_psi(ns: usize, na: usize, seed: u64) -> QTable {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        QTable::from_fn(ns, na, |_, _| rng.random_range(-3.0..3.0))
    }

    #[test]
    fn identity_g_residual_is_scaled_kl() {
        let mdp = build_random_mdp(4, 3, 1, 1.0, 0.9).unwrap();
        let params = RegParams::new(0.5, 0.6).unwrap();
        let psi = random_psi(4, 3, 2);
        let pi_next = softmax_policy(&psi, 0.5).unwrap();
        let pi_k = softmax_policy(&random_psi(4, 3, 3), 0.5).unwrap();
        let a = soft_advantage(&psi, 0.5).unwrap();
        let r = check_condition_eq10(&mdp, &pi_next, &pi_k, &a, params, &BoundingFn::Identity, 0).unwrap();
        let kl = kl_divergence(&pi_next, &pi_k).unwrap();
        for s in 0..4 {
            assert!(r[s] >= 0.0);
            assert!((r[s] - params.lambda() * kl[s]).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_g_uniform_policy_violates() {
        let mdp = build_random_mdp(3, 4, 5, 1.0, 0.9).unwrap();
        let params = RegParams::new(0.02, 0.99).unwrap();
        let u = PolicyTable::uniform(3, 4);
        let a = soft_advantage(&QTable::zeros(3, 4), 0.02).unwrap();
        let r = check_condition_eq10(&mdp, &u, &u, &a, params, &BoundingFn::Zero, 0).unwrap();
        let expected = -0.9 * 0.02 * 4f64.ln();
        for s in 0..3 {
            assert!((r[s] - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn deterministic_next_policy_satisfies_condition() {
        let mdp = build_random_mdp(3, 3, 6, 1.0, 0.9).unwrap();
        let params = RegParams::new(0.3, 0.5).unwrap();
        let psi = random_psi(3, 3, 7);
        let pi_next = argmax_policy(&psi);
        let a = soft_advantage(&psi, 0.0).unwrap();
        for g in [BoundingFn::Zero, BoundingFn::tanh(1.0), BoundingFn::clip_unit(), BoundingFn::Identity] {
            let r = check_condition_eq10(&mdp, &pi_next, &PolicyTable::uniform(3, 3), &a, params, &g, 0).unwrap();
            assert!(r.0.iter().all(|&x| x >= 0.0), "{:?}", r);
        }
    }

    #[test]
    fn infinite_kl_counts_as_satisfied() {
        let mdp = build_random_mdp(2, 2, 1, 1.0, 0.9).unwrap();
        let params = RegParams::new(0.3, 0.5).unwrap();
        let pi_next = PolicyTable::uniform(2, 2);
        let pi_k = PolicyTable::deterministic(2, &[0, 0]);
        let a = soft_advantage(&QTable::zeros(2, 2), 0.3).unwrap();
        let r = check_condition_eq10(&mdp, &pi_next, &pi_k, &a, params, &BoundingFn::Zero, 0).unwrap();
        assert_eq!(r.0, vec![f64::INFINITY; 2]);
    }

    #[test]
    fn mirror_descent_identity_cases() {
        let mdp = build_random_mdp(5, 3, 2, 1.0, 0.9).unwrap();
        let params = RegParams::new(0.4, 0.8).unwrap();
        let psi = random_psi(5, 3, 9);
        let pi_k = softmax_policy(&random_psi(5, 3, 10), 1.0).unwrap();
        let id = BoundingFn::Identity;
        assert!(mirror_descent_residual(&mdp, &psi, &pi_k, params, &id, &id, 0).unwrap() <= 1e-10);
        let f = BoundingFn::tanh(10.0);
        let g = BoundingFn::Clip { scale: 10.0, lo: -1.0, hi: 1.0 };
        let r = mirror_descent_residual(&mdp, &psi, &pi_k, params, &f, &g, 0).unwrap();
        assert!(r <= 1e-9);
        let shift = ValueVector(vec![3.0, -2.0, 0.5, 7.0, -1.0]);
        let r2 = mirror_descent_residual(&mdp, &psi.add_state_values(&shift), &pi_k, params, &f, &g, 0).unwrap();
        assert!((r2 - r).abs() <= 1e-10);
    }
}
