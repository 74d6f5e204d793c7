//! Baseline finite Markov decision process with a constant discount factor.

use nalgebra::DMatrix;

use crate::adp::{ActionValueModel, AffineOperator, Policy, StateActionSpace, ValueVector};
use crate::error::{AdpError, Result};

/// `(T_σ v)(x) = r(x, σ(x)) + β Σ_{x'} v(x') P(x, σ(x), x')`.
#[derive(Debug, Clone)]
pub struct FiniteMdp {
    space: StateActionSpace,
    beta: f64,
    reward: Vec<f64>,
    /// Sparse next-state distribution for every feasible pair.
    transitions: Vec<Vec<(usize, f64)>>,
}

impl FiniteMdp {
    /// `reward` and `transitions` are indexed by the feasible-pair enumeration;
    /// each transition row is a dense distribution over next states.
    pub fn new(
        space: StateActionSpace,
        beta: f64,
        reward: Vec<f64>,
        transitions: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if !(0.0..1.0).contains(&beta) {
            return Err(AdpError::invalid("beta", format!("{beta} is not in [0, 1)")));
        }
        let n_pairs = space.n_pairs();
        let n = space.n_states();
        if reward.len() != n_pairs {
            return Err(AdpError::LengthMismatch {
                expected: n_pairs,
                actual: reward.len(),
            });
        }
        if transitions.len() != n_pairs {
            return Err(AdpError::LengthMismatch {
                expected: n_pairs,
                actual: transitions.len(),
            });
        }
        if let Some(r) = reward.iter().find(|r| !r.is_finite()) {
            return Err(AdpError::invalid("reward", format!("non-finite entry {r}")));
        }
        let mut sparse = Vec::with_capacity(n_pairs);
        for (k, row) in transitions.iter().enumerate() {
            if row.len() != n {
                return Err(AdpError::LengthMismatch {
                    expected: n,
                    actual: row.len(),
                });
            }
            if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
                return Err(AdpError::invalid(
                    "transitions",
                    format!("row of pair {k} has a negative or non-finite entry"),
                ));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(AdpError::invalid(
                    "transitions",
                    format!("row of pair {k} sums to {sum}"),
                ));
            }
            sparse.push(
                row.iter()
                    .enumerate()
                    .filter(|(_, &p)| p > 0.0)
                    .map(|(j, &p)| (j, p))
                    .collect(),
            );
        }
        Ok(Self {
            space,
            beta,
            reward,
            transitions: sparse,
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn reward(&self) -> &[f64] {
        &self.reward
    }

    pub fn reward_bounds(&self) -> (f64, f64) {
        let lo = self.reward.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.reward.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    pub fn transition(&self, pair: usize) -> &[(usize, f64)] {
        &self.transitions[pair]
    }
}

impl ActionValueModel for FiniteMdp {
    fn model_space(&self) -> &StateActionSpace {
        &self.space
    }

    fn action_value(&self, x: usize, a: usize, v: &[f64]) -> f64 {
        let k = self.space.pair_index(x, a).expect("feasible pair");
        let expected: f64 = self.transitions[k].iter().map(|&(j, p)| p * v[j]).sum();
        self.reward[k] + self.beta * expected
    }

    fn policy_affine_form(&self, policy: &Policy) -> Option<AffineOperator> {
        let n = self.space.n_states();
        let mut offset = Vec::with_capacity(n);
        let mut matrix = DMatrix::zeros(n, n);
        for x in 0..n {
            let k = self.space.pair_index(x, policy.action(x))?;
            offset.push(self.reward[k]);
            for &(j, p) in &self.transitions[k] {
                matrix[(x, j)] += self.beta * p;
            }
        }
        Some(AffineOperator { offset, matrix })
    }

    /// Zero when rewards are nonnegative, otherwise the lower bound `r_min / (1 - β)`.
    fn initial_value(&self) -> ValueVector {
        let (lo, _) = self.reward_bounds();
        let n = self.space.n_states();
        if lo >= 0.0 {
            ValueVector::zeros(n)
        } else {
            ValueVector::constant(n, lo / (1.0 - self.beta))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adp::{apply_bellman, apply_policy_operator, greedy_policy, Adp};

    fn one_state_two_actions() -> FiniteMdp {
        let space = StateActionSpace::full(1, 2).unwrap();
        FiniteMdp::new(space, 0.5, vec![1.0, 2.0], vec![vec![1.0], vec![1.0]]).unwrap()
    }

    #[test]
    fn policy_operator_direct_evaluation() {
        let mdp = one_state_two_actions();
        let v = ValueVector::new(vec![4.0]).unwrap();
        let tv = apply_policy_operator(&mdp, &Policy::new(vec![0]), &v).unwrap();
        assert_eq!(tv.as_slice(), &[3.0]);
    }

    #[test]
    fn zero_reward_zero_value() {
        let space = StateActionSpace::full(2, 1).unwrap();
        let mdp = FiniteMdp::new(
            space,
            0.9,
            vec![0.0, 0.0],
            vec![vec![0.3, 0.7], vec![1.0, 0.0]],
        )
        .unwrap();
        let tv = apply_policy_operator(&mdp, &Policy::new(vec![0, 0]), &ValueVector::zeros(2))
            .unwrap();
        assert_eq!(tv.as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn greedy_and_bellman() {
        let mdp = one_state_two_actions();
        let zero = ValueVector::zeros(1);
        assert_eq!(greedy_policy(&mdp, &zero).unwrap(), Policy::new(vec![1]));
        assert_eq!(apply_bellman(&mdp, &zero).unwrap().as_slice(), &[2.0]);
    }

    #[test]
    fn ties_go_to_lowest_action() {
        let space = StateActionSpace::full(2, 3).unwrap();
        let mdp = FiniteMdp::new(
            space,
            0.5,
            vec![1.0; 6],
            vec![vec![0.5, 0.5]; 6],
        )
        .unwrap();
        let v = ValueVector::new(vec![3.0, -1.0]).unwrap();
        assert_eq!(mdp.greedy(&v).unwrap(), Policy::new(vec![0, 0]));
    }

    #[test]
    fn single_action_bellman_equals_policy_operator() {
        let space = StateActionSpace::full(2, 1).unwrap();
        let mdp = FiniteMdp::new(
            space,
            0.8,
            vec![1.0, -2.0],
            vec![vec![0.25, 0.75], vec![0.6, 0.4]],
        )
        .unwrap();
        let v = ValueVector::new(vec![0.3, 7.0]).unwrap();
        let p = Policy::new(vec![0, 0]);
        assert_eq!(mdp.bellman(&v).unwrap(), mdp.apply_policy(&p, &v).unwrap());
    }

    #[test]
    fn rejects_bad_rows() {
        let space = StateActionSpace::full(2, 1).unwrap();
        assert!(FiniteMdp::new(
            space.clone(),
            0.8,
            vec![1.0, 1.0],
            vec![vec![0.5, 0.6], vec![1.0, 0.0]]
        )
        .is_err());
        assert!(FiniteMdp::new(space, 1.0, vec![1.0, 1.0], vec![vec![1.0, 0.0]; 2]).is_err());
    }

    #[test]
    fn negative_rewards_start_from_lower_bound() {
        let space = StateActionSpace::full(1, 1).unwrap();
        let mdp = FiniteMdp::new(space, 0.5, vec![-1.0], vec![vec![1.0]]).unwrap();
        assert_eq!(mdp.default_initial_value().as_slice(), &[-2.0]);
    }
}
