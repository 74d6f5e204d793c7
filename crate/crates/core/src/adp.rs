//! Abstract dynamic programs on finite index sets.
//!
//! A value space is `R^n` with the pointwise order. A program is a family of
//! order-preserving policy operators `T_σ`, one per feasible policy; the
//! Bellman operator is their pointwise maximum. Most models describe the family
//! through a single scalar map, [`ActionValueModel::action_value`], giving
//! `(T_σ v)(x)` whenever `σ(x) = a`. Greedy selection, policy application and
//! the Bellman operator are all derived from that map, so a greedy policy
//! attains the Bellman maximum bit-for-bit.

use std::ops::{Deref, Index};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{AdpError, Result};

/// The states of a finite program, optionally with real coordinates per state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateIndexSet {
    n_states: usize,
    labels: Option<Vec<Vec<f64>>>,
}

impl StateIndexSet {
    pub fn new(n_states: usize) -> Result<Self> {
        if n_states == 0 {
            return Err(AdpError::invalid("n_states", "must be at least 1"));
        }
        Ok(Self {
            n_states,
            labels: None,
        })
    }

    pub fn with_labels(labels: Vec<Vec<f64>>) -> Result<Self> {
        let mut set = Self::new(labels.len())?;
        set.labels = Some(labels);
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.n_states
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn labels(&self) -> Option<&[Vec<f64>]> {
        self.labels.as_deref()
    }
}

/// Finite states, finite actions and the feasibility correspondence `Γ`.
///
/// Feasible `(state, action)` pairs are enumerated state-major with actions
/// ascending; that enumeration indexes rewards, transition data and
/// Q-factors throughout the crate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateActionSpace {
    states: StateIndexSet,
    n_actions: usize,
    feasible: Vec<Vec<usize>>,
    pairs: Vec<(usize, usize)>,
    pair_offsets: Vec<usize>,
}

impl StateActionSpace {
    pub fn new(states: StateIndexSet, n_actions: usize, feasible: Vec<Vec<usize>>) -> Result<Self> {
        if n_actions == 0 {
            return Err(AdpError::invalid("n_actions", "must be at least 1"));
        }
        if feasible.len() != states.len() {
            return Err(AdpError::LengthMismatch {
                expected: states.len(),
                actual: feasible.len(),
            });
        }
        let mut pairs = Vec::new();
        let mut pair_offsets = Vec::with_capacity(states.len() + 1);
        let mut cleaned = Vec::with_capacity(feasible.len());
        for (x, actions) in feasible.into_iter().enumerate() {
            let mut actions = actions;
            actions.sort_unstable();
            actions.dedup();
            if actions.is_empty() {
                return Err(AdpError::invalid(
                    "feasible",
                    format!("state {x} has no feasible action"),
                ));
            }
            if let Some(&a) = actions.iter().find(|&&a| a >= n_actions) {
                return Err(AdpError::invalid(
                    "feasible",
                    format!("state {x} lists action {a} but there are only {n_actions} actions"),
                ));
            }
            pair_offsets.push(pairs.len());
            pairs.extend(actions.iter().map(|&a| (x, a)));
            cleaned.push(actions);
        }
        pair_offsets.push(pairs.len());
        Ok(Self {
            states,
            n_actions,
            feasible: cleaned,
            pairs,
            pair_offsets,
        })
    }

    /// Every action is feasible in every state.
    pub fn full(n_states: usize, n_actions: usize) -> Result<Self> {
        let states = StateIndexSet::new(n_states)?;
        Self::new(states, n_actions, vec![(0..n_actions).collect(); n_states])
    }

    pub fn states(&self) -> &StateIndexSet {
        &self.states
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_pairs(&self) -> usize {
        self.pairs.len()
    }

    pub fn feasible(&self, x: usize) -> &[usize] {
        &self.feasible[x]
    }

    pub fn is_feasible(&self, x: usize, a: usize) -> bool {
        x < self.n_states() && self.feasible[x].binary_search(&a).is_ok()
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    /// Position of `(x, a)` in the pair enumeration.
    pub fn pair_index(&self, x: usize, a: usize) -> Option<usize> {
        if x >= self.n_states() {
            return None;
        }
        self.feasible[x]
            .binary_search(&a)
            .ok()
            .map(|i| self.pair_offsets[x] + i)
    }

    /// Range of pair indices belonging to state `x`.
    pub fn pairs_of(&self, x: usize) -> std::ops::Range<usize> {
        self.pair_offsets[x]..self.pair_offsets[x + 1]
    }

    pub fn check_policy(&self, policy: &Policy) -> Result<()> {
        if policy.len() != self.n_states() {
            return Err(AdpError::LengthMismatch {
                expected: self.n_states(),
                actual: policy.len(),
            });
        }
        for (x, &a) in policy.actions().iter().enumerate() {
            if !self.is_feasible(x, a) {
                return Err(AdpError::InfeasiblePolicy { state: x, action: a });
            }
        }
        Ok(())
    }

    /// The policy taking the lowest feasible action everywhere.
    pub fn first_policy(&self) -> Policy {
        Policy::new(self.feasible.iter().map(|acts| acts[0]).collect())
    }
}

/// A finite real vector indexed by states (or by feasible pairs for Q-factors).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ValueVector(Vec<f64>);

impl ValueVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some((i, &v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(AdpError::NumericalDomain {
                state: i,
                action: None,
                value: v,
            });
        }
        Ok(Self(values))
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn constant(n: usize, c: f64) -> Self {
        assert!(c.is_finite(), "constant value must be finite");
        Self(vec![c; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// `max_i |self_i - other_i|`.
    pub fn sup_distance(&self, other: &ValueVector) -> f64 {
        assert_eq!(self.len(), other.len(), "sup_distance on vectors of different length");
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn sup_norm(&self) -> f64 {
        self.0.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<ValueVector> {
        ValueVector::new(self.0.iter().map(|&v| f(v)).collect())
    }
}

impl Deref for ValueVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl Index<usize> for ValueVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl TryFrom<Vec<f64>> for ValueVector {
    type Error = AdpError;
    fn try_from(values: Vec<f64>) -> Result<Self> {
        ValueVector::new(values)
    }
}

impl From<ValueVector> for Vec<f64> {
    fn from(v: ValueVector) -> Vec<f64> {
        v.0
    }
}

/// A deterministic stationary policy: one action index per state.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Policy(Vec<usize>);

impl Policy {
    pub fn new(actions: Vec<usize>) -> Self {
        Self(actions)
    }

    pub fn actions(&self) -> &[usize] {
        &self.0
    }

    pub fn action(&self, x: usize) -> usize {
        self.0[x]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `T_σ v = offset + matrix · v`.
#[derive(Debug, Clone)]
pub struct AffineOperator {
    pub offset: Vec<f64>,
    pub matrix: DMatrix<f64>,
}

/// A family of policy operators on a finite value space.
///
/// Implemented automatically for every [`ActionValueModel`]. Models whose value
/// space is not indexed by states (Q-factor programs) implement it directly.
pub trait Adp {
    fn space(&self) -> &StateActionSpace;

    /// Length of the vectors in the value space.
    fn value_len(&self) -> usize {
        self.space().n_states()
    }

    /// `T_σ v`.
    fn apply_policy(&self, policy: &Policy, v: &ValueVector) -> Result<ValueVector>;

    /// The v-greedy policy, ties resolved towards the lowest action index.
    fn greedy(&self, v: &ValueVector) -> Result<Policy>;

    /// `T v` together with the greedy policy that attains it.
    fn bellman_with_greedy(&self, v: &ValueVector) -> Result<(ValueVector, Policy)> {
        let policy = self.greedy(v)?;
        let tv = self.apply_policy(&policy, v)?;
        Ok((tv, policy))
    }

    fn bellman(&self, v: &ValueVector) -> Result<ValueVector> {
        self.bellman_with_greedy(v).map(|(tv, _)| tv)
    }

    /// The affine form of `T_σ`, if the model is affine in `v`.
    fn affine_form(&self, _policy: &Policy) -> Option<AffineOperator> {
        None
    }

    /// Starting point for the solvers: a sub-solution inside the value space.
    fn default_initial_value(&self) -> ValueVector {
        ValueVector::zeros(self.value_len())
    }
}

/// A program specified by its per-pair action values.
pub trait ActionValueModel {
    fn model_space(&self) -> &StateActionSpace;

    /// `(T_σ v)(x)` for any σ with `σ(x) = a`. Called only for feasible pairs
    /// and for `v` accepted by [`check_value`](Self::check_value).
    fn action_value(&self, x: usize, a: usize, v: &[f64]) -> f64;

    /// Rejects `v` outside the model's value space.
    fn check_value(&self, v: &[f64]) -> Result<()> {
        let n = self.model_space().n_states();
        if v.len() != n {
            return Err(AdpError::LengthMismatch {
                expected: n,
                actual: v.len(),
            });
        }
        Ok(())
    }

    fn policy_affine_form(&self, _policy: &Policy) -> Option<AffineOperator> {
        None
    }

    fn initial_value(&self) -> ValueVector {
        ValueVector::zeros(self.model_space().n_states())
    }
}

fn checked_action_value<M: ActionValueModel + ?Sized>(
    model: &M,
    x: usize,
    a: usize,
    v: &[f64],
) -> Result<f64> {
    let value = model.action_value(x, a, v);
    if value.is_finite() {
        Ok(value)
    } else {
        Err(AdpError::NumericalDomain {
            state: x,
            action: Some(a),
            value,
        })
    }
}

impl<M: ActionValueModel> Adp for M {
    fn space(&self) -> &StateActionSpace {
        self.model_space()
    }

    fn apply_policy(&self, policy: &Policy, v: &ValueVector) -> Result<ValueVector> {
        let space = self.model_space();
        space.check_policy(policy)?;
        self.check_value(v)?;
        let out = (0..space.n_states())
            .map(|x| checked_action_value(self, x, policy.action(x), v))
            .collect::<Result<Vec<_>>>()?;
        Ok(ValueVector(out))
    }

    fn greedy(&self, v: &ValueVector) -> Result<Policy> {
        self.bellman_with_greedy(v).map(|(_, p)| p)
    }

    fn bellman_with_greedy(&self, v: &ValueVector) -> Result<(ValueVector, Policy)> {
        let space = self.model_space();
        self.check_value(v)?;
        let n = space.n_states();
        let mut values = Vec::with_capacity(n);
        let mut actions = Vec::with_capacity(n);
        for x in 0..n {
            let mut best_a = usize::MAX;
            let mut best = f64::NEG_INFINITY;
            for &a in space.feasible(x) {
                let q = checked_action_value(self, x, a, v)?;
                if best_a == usize::MAX || q > best {
                    best = q;
                    best_a = a;
                }
            }
            values.push(best);
            actions.push(best_a);
        }
        Ok((ValueVector(values), Policy(actions)))
    }

    fn affine_form(&self, policy: &Policy) -> Option<AffineOperator> {
        self.policy_affine_form(policy)
    }

    fn default_initial_value(&self) -> ValueVector {
        self.initial_value()
    }
}

/// `v ≤ w` in the pointwise order.
pub fn pointwise_le(v: &[f64], w: &[f64]) -> Result<bool> {
    if v.len() != w.len() {
        return Err(AdpError::LengthMismatch {
            expected: v.len(),
            actual: w.len(),
        });
    }
    Ok(v.iter().zip(w).all(|(a, b)| a <= b))
}

pub fn apply_policy_operator<A: Adp + ?Sized>(
    adp: &A,
    policy: &Policy,
    v: &ValueVector,
) -> Result<ValueVector> {
    adp.apply_policy(policy, v)
}

pub fn greedy_policy<A: Adp + ?Sized>(adp: &A, v: &ValueVector) -> Result<Policy> {
    adp.greedy(v)
}

pub fn apply_bellman<A: Adp + ?Sized>(adp: &A, v: &ValueVector) -> Result<ValueVector> {
    adp.bellman(v)
}
