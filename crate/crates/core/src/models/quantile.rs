//! Quantile preferences in Q-factor form.
//!
//! `(S_σ q)(x, a) = r(x, a) + β · Q_τ[ q(x', σ(x')) ]`, where `Q_τ` is the
//! `τ`-quantile over the shock `z' ~ P(z, ·)` and `x' = successor(x, a, z')`.
//! Q-factors are indexed by the feasible-pair enumeration.

use std::path::Path;

use crate::adp::{Adp, Policy, StateActionSpace, ValueVector};
use crate::dynamics::ExogenousDynamics;
use crate::error::{AdpError, Result};

/// Q-factors: one entry per feasible pair.
pub type QFactor = ValueVector;

/// Absorbs accumulation error in the cumulative weights.
const TAU_SLACK: f64 = 1e-15;

/// `min { k : Σ_i w_i 1{atom_i ≤ k} ≥ τ }`, always one of the atoms.
pub fn quantile(atoms: &[f64], weights: &[f64], tau: f64) -> Result<f64> {
    if atoms.is_empty() {
        return Err(AdpError::invalid("atoms", "empty support"));
    }
    if atoms.len() != weights.len() {
        return Err(AdpError::LengthMismatch {
            expected: atoms.len(),
            actual: weights.len(),
        });
    }
    if !(tau > 0.0 && tau < 1.0) {
        return Err(AdpError::invalid("tau", format!("{tau} is not in (0, 1)")));
    }
    if let Some(a) = atoms.iter().find(|a| !a.is_finite()) {
        return Err(AdpError::invalid("atoms", format!("non-finite atom {a}")));
    }
    if weights.iter().any(|&w| !(w >= 0.0)) {
        return Err(AdpError::invalid("weights", "negative or NaN weight"));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(AdpError::invalid("weights", format!("weights sum to {total}")));
    }
    let mut support: Vec<(f64, f64)> = atoms.iter().copied().zip(weights.iter().copied()).collect();
    Ok(sorted_quantile(&mut support, tau))
}

fn sorted_quantile(support: &mut [(f64, f64)], tau: f64) -> f64 {
    support.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut cumulative = 0.0;
    for &(atom, w) in support.iter() {
        cumulative += w;
        if cumulative >= tau - TAU_SLACK {
            return atom;
        }
    }
    support[support.len() - 1].0
}

#[derive(Debug, Clone)]
pub struct QuantileModel {
    space: StateActionSpace,
    dynamics: ExogenousDynamics,
    beta: f64,
    tau: f64,
    reward: Vec<f64>,
}

impl QuantileModel {
    /// Every feasible pair must have a successor table; quantile programs have
    /// no terminal actions.
    pub fn new(
        space: StateActionSpace,
        dynamics: ExogenousDynamics,
        beta: f64,
        tau: f64,
        reward: Vec<f64>,
    ) -> Result<Self> {
        if !(beta > 0.0 && beta < 1.0) {
            return Err(AdpError::invalid("beta", format!("{beta} is not in (0, 1)")));
        }
        if !(tau > 0.0 && tau < 1.0) {
            return Err(AdpError::invalid("tau", format!("{tau} is not in (0, 1)")));
        }
        if reward.len() != space.n_pairs() {
            return Err(AdpError::LengthMismatch {
                expected: space.n_pairs(),
                actual: reward.len(),
            });
        }
        if let Some(r) = reward.iter().find(|r| !r.is_finite()) {
            return Err(AdpError::invalid("reward", format!("non-finite entry {r}")));
        }
        if let Some(k) = (0..space.n_pairs()).find(|&k| dynamics.is_terminal(k)) {
            return Err(AdpError::invalid(
                "successors",
                format!("pair {k} has no successor table"),
            ));
        }
        Ok(Self {
            space,
            dynamics,
            beta,
            tau,
            reward,
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn reward(&self) -> &[f64] {
        &self.reward
    }

    pub fn dynamics(&self) -> &ExogenousDynamics {
        &self.dynamics
    }

    pub fn reward_bounds(&self) -> (f64, f64) {
        let lo = self.reward.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.reward.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    /// The order interval `[r̲/(1-β), r̄/(1-β)]` that every `S_σ` maps into itself.
    pub fn value_bounds(&self) -> (f64, f64) {
        let (lo, hi) = self.reward_bounds();
        (lo / (1.0 - self.beta), hi / (1.0 - self.beta))
    }

    fn check_q(&self, q: &[f64]) -> Result<()> {
        if q.len() != self.space.n_pairs() {
            return Err(AdpError::LengthMismatch {
                expected: self.space.n_pairs(),
                actual: q.len(),
            });
        }
        Ok(())
    }

    /// `r(x, a) + β Q_τ[ next(x') ]` with `next` giving the successor's value.
    fn pair_value(&self, k: usize, next: impl Fn(usize) -> f64, buf: &mut Vec<(f64, f64)>) -> f64 {
        let (x, _) = self.space.pairs()[k];
        let succ = self.dynamics.successors(k).expect("quantile pairs are never terminal");
        buf.clear();
        buf.extend(
            self.dynamics
                .support(self.dynamics.z_of(x))
                .iter()
                .map(|&(z_next, prob, _)| (next(succ[z_next]), prob)),
        );
        self.reward[k] + self.beta * sorted_quantile(buf, self.tau)
    }

    fn apply_with(&self, next: impl Fn(usize) -> f64) -> Result<QFactor> {
        let mut buf = Vec::new();
        let out: Vec<f64> = (0..self.space.n_pairs())
            .map(|k| self.pair_value(k, &next, &mut buf))
            .collect();
        finite(&self.space, out)
    }
}

fn finite(space: &StateActionSpace, out: Vec<f64>) -> Result<QFactor> {
    if let Some(k) = out.iter().position(|v| !v.is_finite()) {
        let (x, a) = space.pairs()[k];
        return Err(AdpError::NumericalDomain {
            state: x,
            action: Some(a),
            value: out[k],
        });
    }
    ValueVector::new(out)
}

/// `S_σ q`.
pub fn q_policy_operator(model: &QuantileModel, policy: &Policy, q: &QFactor) -> Result<QFactor> {
    model.space.check_policy(policy)?;
    model.check_q(q)?;
    let space = &model.space;
    model.apply_with(|x| q[space.pair_index(x, policy.action(x)).expect("feasible policy")])
}

/// `r(x, a) + β Q_τ[ max_{a'} q(x', a') ]` at every pair.
pub fn q_bellman(model: &QuantileModel, q: &QFactor) -> Result<QFactor> {
    let policy = greedy_from_q(model, q)?;
    q_policy_operator(model, &policy, q)
}

/// Per-state argmax of `q`, ties resolved towards the lowest action index.
pub fn greedy_from_q(model: &QuantileModel, q: &QFactor) -> Result<Policy> {
    model.check_q(q)?;
    let space = &model.space;
    let actions = (0..space.n_states())
        .map(|x| {
            let mut best = space.pairs_of(x).start;
            for k in space.pairs_of(x) {
                if q[k] > q[best] {
                    best = k;
                }
            }
            space.pairs()[best].1
        })
        .collect();
    Ok(Policy::new(actions))
}

/// The Q-factor program viewed as an abstract dynamic program on `ℝ^G`.
///
/// `S_σ` is monotone in the successor values, so the greedy policy of `q`
/// attains the pointwise maximum over policies at every pair.
impl Adp for QuantileModel {
    fn space(&self) -> &StateActionSpace {
        &self.space
    }

    fn value_len(&self) -> usize {
        self.space.n_pairs()
    }

    fn apply_policy(&self, policy: &Policy, v: &ValueVector) -> Result<ValueVector> {
        q_policy_operator(self, policy, v)
    }

    fn greedy(&self, v: &ValueVector) -> Result<Policy> {
        greedy_from_q(self, v)
    }

    fn default_initial_value(&self) -> ValueVector {
        ValueVector::constant(self.space.n_pairs(), self.value_bounds().0)
    }
}

/// `v(x) = max_a q(x, a)`.
pub fn state_values(model: &QuantileModel, q: &QFactor) -> Result<ValueVector> {
    let policy = greedy_from_q(model, q)?;
    let space = &model.space;
    ValueVector::new(
        (0..space.n_states())
            .map(|x| q[space.pair_index(x, policy.action(x)).expect("feasible")])
            .collect(),
    )
}

/// `v(x) = max_a { r(x, a) + β Q_τ[ v(x') ] }`, the state-form Bellman operator.
pub fn state_bellman(model: &QuantileModel, v: &ValueVector) -> Result<ValueVector> {
    let space = &model.space;
    if v.len() != space.n_states() {
        return Err(AdpError::LengthMismatch {
            expected: space.n_states(),
            actual: v.len(),
        });
    }
    let mut buf = Vec::new();
    let out = (0..space.n_states())
        .map(|x| {
            space
                .pairs_of(x)
                .map(|k| model.pair_value(k, |x_next| v[x_next], &mut buf))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    finite(space, out)
}

/// CSV with header `state,action,q_value`, one row per feasible pair.
pub fn write_q_csv(path: impl AsRef<Path>, model: &QuantileModel, q: &QFactor) -> Result<()> {
    model.check_q(q)?;
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["state", "action", "q_value"])?;
    for (&(x, a), v) in model.space.pairs().iter().zip(q.iter()) {
        w.write_record([x.to_string(), a.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
