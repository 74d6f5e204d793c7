//! Brute-force and sampling checks of the hypotheses behind the solvers.
//!
//! Exhaustive policy enumeration certifies the optimality properties on small
//! instances; seeded random sampling looks for counterexamples to order
//! preservation, concavity, contraction and lower-perimeter avoidance. Every
//! failed check carries a witness that reproduces it.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adp::{Adp, Policy, StateActionSpace, ValueVector};
use crate::algorithms::{policy_evaluation, value_function_iteration, IterationControl};
use crate::error::{AdpError, Result};

/// Default cap on the number of enumerated policies.
pub const POLICY_LIMIT: u128 = 1_000_000;

/// Absolute slack for order comparisons in the sampled checks.
const ORDER_SLACK: f64 = 1e-12;
/// Concavity is a two-sided combination of operator values, so it gets more room.
const CONCAVITY_SLACK: f64 = 1e-10;

/// Seeded sampler over boxes of the value space and over feasible policies.
#[derive(Debug, Clone)]
pub struct BoxSampler {
    seed: u64,
    rng: ChaCha8Rng,
}

impl BoxSampler {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        if hi > lo {
            self.rng.random_range(lo..=hi)
        } else {
            lo
        }
    }

    /// A nonnegative scalar spread over several orders of magnitude.
    pub fn nonnegative(&mut self) -> f64 {
        if self.rng.random_bool(0.5) {
            self.uniform(0.0, 2.0)
        } else {
            10f64.powf(self.uniform(-3.0, 4.0))
        }
    }

    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }

    /// Uniform draw from the box `[lo, hi]`.
    pub fn vector(&mut self, lo: &[f64], hi: &[f64]) -> ValueVector {
        let v = lo.iter().zip(hi).map(|(&l, &h)| self.uniform(l, h)).collect();
        ValueVector::new(v).expect("finite box")
    }

    /// A uniformly random feasible policy.
    pub fn policy(&mut self, space: &StateActionSpace) -> Policy {
        let actions = (0..space.n_states())
            .map(|x| {
                let feas = space.feasible(x);
                feas[self.index(feas.len())]
            })
            .collect();
        Policy::new(actions)
    }
}

/// A reproducible counterexample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub trial: usize,
    pub detail: String,
    pub inputs: BTreeMap<String, Vec<f64>>,
}

impl Witness {
    fn new(trial: usize, detail: String) -> Self {
        Self {
            trial,
            detail,
            inputs: BTreeMap::new(),
        }
    }

    fn with(mut self, name: &str, values: &[f64]) -> Self {
        self.inputs.insert(name.to_string(), values.to_vec());
        self
    }

    fn with_policy(self, policy: &Policy) -> Self {
        let p: Vec<f64> = policy.actions().iter().map(|&a| a as f64).collect();
        self.with("policy", &p)
    }
}

/// Outcome of a sampled property check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub property: String,
    pub trials: usize,
    pub failures: usize,
    pub seed: u64,
    /// Largest observed violation (or, for contraction, the largest ratio).
    pub statistic: f64,
    /// The first failing trial.
    pub witness: Option<Witness>,
}

impl PropertyReport {
    fn new(property: &str, trials: usize, seed: u64) -> Self {
        Self {
            property: property.to_string(),
            trials,
            failures: 0,
            seed,
            statistic: 0.0,
            witness: None,
        }
    }

    fn fail(&mut self, witness: impl FnOnce() -> Witness) {
        self.failures += 1;
        if self.witness.is_none() {
            self.witness = Some(witness());
        }
    }

    pub fn passed(&self) -> bool {
        self.failures == 0
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn check_trials(trials: usize) -> Result<()> {
    if trials == 0 {
        return Err(AdpError::invalid("trials", "must be at least 1"));
    }
    Ok(())
}

fn check_box(adp: &(impl Adp + ?Sized), lo: &[f64], hi: &[f64]) -> Result<()> {
    let n = adp.value_len();
    for b in [lo, hi] {
        if b.len() != n {
            return Err(AdpError::LengthMismatch {
                expected: n,
                actual: b.len(),
            });
        }
    }
    if lo.iter().zip(hi).any(|(l, h)| !(l <= h)) {
        return Err(AdpError::invalid("box", "lower corner exceeds upper corner"));
    }
    Ok(())
}

/// All feasible policies in lexicographic order, state 0 most significant.
pub fn enumerate_policies(space: &StateActionSpace, limit: u128) -> Result<Vec<Policy>> {
    let mut count: u128 = 1;
    for x in 0..space.n_states() {
        count = count.saturating_mul(space.feasible(x).len() as u128);
    }
    if count > limit {
        return Err(AdpError::TooManyPolicies { count, limit });
    }
    let n = space.n_states();
    let mut digits = vec![0usize; n];
    let mut out = Vec::with_capacity(count as usize);
    loop {
        out.push(Policy::new(
            (0..n).map(|x| space.feasible(x)[digits[x]]).collect(),
        ));
        let mut x = n;
        loop {
            if x == 0 {
                return Ok(out);
            }
            x -= 1;
            digits[x] += 1;
            if digits[x] < space.feasible(x).len() {
                break;
            }
            digits[x] = 0;
        }
    }
}

/// Exhaustive verification of the optimality properties.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimalityReport {
    pub n_policies: usize,
    /// Some policy's value dominates every other policy's value.
    pub b1_optimal_policy_exists: bool,
    /// The greatest policy value solves the Bellman equation, and it is the
    /// only policy value that does.
    pub b2_unique_bellman_solution: bool,
    /// A policy is optimal exactly when it is greedy for the greatest value.
    pub b3_optimal_iff_greedy: bool,
    pub v_max: Vec<f64>,
    pub v_solver: Vec<f64>,
    /// `‖v_solver - v_max‖∞`.
    pub solver_gap: f64,
    pub tolerance: f64,
    pub witnesses: Vec<String>,
}

impl OptimalityReport {
    pub fn passed(&self) -> bool {
        self.b1_optimal_policy_exists && self.b2_unique_bellman_solution && self.b3_optimal_iff_greedy
    }
}

/// Evaluates every policy, takes the pointwise maximum of their values and
/// compares it with the value function iteration solution. Comparisons use
/// `10 · ctrl.tol`.
pub fn brute_force_optimality<A: Adp + ?Sized>(adp: &A, ctrl: &IterationControl) -> Result<OptimalityReport> {
    ctrl.validate()?;
    let tol = 10.0 * ctrl.tol;
    let quiet = IterationControl {
        record_trace: false,
        keep_iterates: 0,
        ..*ctrl
    };
    let policies = enumerate_policies(adp.space(), POLICY_LIMIT)?;
    let values = policies
        .iter()
        .map(|p| policy_evaluation(adp, p, &quiet, true, None))
        .collect::<Result<Vec<_>>>()?;

    let n = adp.value_len();
    let mut v_max = vec![f64::NEG_INFINITY; n];
    for v in &values {
        for (m, &x) in v_max.iter_mut().zip(v.iter()) {
            *m = m.max(x);
        }
    }
    let v_max = ValueVector::new(v_max)?;
    let mut witnesses = Vec::new();

    let optimal: Vec<bool> = values.iter().map(|v| v.sup_distance(&v_max) <= tol).collect();
    let b1 = optimal.iter().any(|&o| o);
    if !b1 {
        witnesses.push("no policy value attains the pointwise maximum".to_string());
    }

    let (t_max, _) = adp.bellman_with_greedy(&v_max)?;
    let mut b2 = t_max.sup_distance(&v_max) <= tol;
    if !b2 {
        witnesses.push(format!(
            "‖T v_max - v_max‖ = {:e} exceeds {tol:e}",
            t_max.sup_distance(&v_max)
        ));
    }
    for (p, v) in policies.iter().zip(&values) {
        let residual = adp.bellman(v)?.sup_distance(v);
        if residual <= tol && v.sup_distance(&v_max) > tol {
            b2 = false;
            witnesses.push(format!(
                "policy {:?} has a Bellman fixed point distinct from v_max",
                p.actions()
            ));
        }
    }

    let mut b3 = true;
    for ((p, v), &is_opt) in policies.iter().zip(&values).zip(&optimal) {
        let greedy = adp.apply_policy(p, &v_max)?.sup_distance(&t_max) <= tol;
        if greedy != is_opt {
            b3 = false;
            witnesses.push(format!(
                "policy {:?}: optimal = {is_opt}, v_max-greedy = {greedy} (gap {:e})",
                p.actions(),
                v.sup_distance(&v_max)
            ));
        }
    }

    let solved = value_function_iteration(adp, adp.default_initial_value(), &quiet)?;
    let solver_gap = solved.value.sup_distance(&v_max);
    Ok(OptimalityReport {
        n_policies: policies.len(),
        b1_optimal_policy_exists: b1,
        b2_unique_bellman_solution: b2,
        b3_optimal_iff_greedy: b3,
        v_max: v_max.into_inner(),
        v_solver: solved.value.into_inner(),
        solver_gap,
        tolerance: tol,
        witnesses,
    })
}

/// `v ≤ w ⇒ T_σ v ≤ T_σ w` for random `σ` and ordered pairs in `[lo, hi]`.
pub fn check_order_preserving<A: Adp + ?Sized>(
    adp: &A,
    lo: &[f64],
    hi: &[f64],
    seed: u64,
    trials: usize,
) -> Result<PropertyReport> {
    check_trials(trials)?;
    check_box(adp, lo, hi)?;
    let mut s = BoxSampler::new(seed);
    let mut report = PropertyReport::new("order_preserving", trials, seed);
    for trial in 0..trials {
        let sigma = s.policy(adp.space());
        let v = s.vector(lo, hi);
        let w = s.vector(&v, hi);
        let tv = adp.apply_policy(&sigma, &v)?;
        let tw = adp.apply_policy(&sigma, &w)?;
        let (i, excess) = worst(tv.iter().zip(tw.iter()).map(|(a, b)| a - b));
        report.statistic = report.statistic.max(excess);
        if excess > ORDER_SLACK {
            report.fail(|| {
                Witness::new(trial, format!("T_σ v exceeds T_σ w by {excess:e} at index {i} although v ≤ w"))
                    .with_policy(&sigma)
                    .with("v", &v)
                    .with("w", &w)
            });
        }
    }
    Ok(report)
}

/// `T_σ(λv + (1-λ)w) ≥ λ T_σ v + (1-λ) T_σ w` for random `σ`, `v`, `w`, `λ`.
pub fn check_concavity<A: Adp + ?Sized>(
    adp: &A,
    lo: &[f64],
    hi: &[f64],
    seed: u64,
    trials: usize,
) -> Result<PropertyReport> {
    check_trials(trials)?;
    check_box(adp, lo, hi)?;
    let mut s = BoxSampler::new(seed);
    let mut report = PropertyReport::new("concavity", trials, seed);
    for trial in 0..trials {
        let sigma = s.policy(adp.space());
        let v = s.vector(lo, hi);
        let w = s.vector(lo, hi);
        let lambda = s.uniform(0.0, 1.0);
        let mix = ValueVector::new(v.iter().zip(w.iter()).map(|(a, b)| lambda * a + (1.0 - lambda) * b).collect())?;
        let tv = adp.apply_policy(&sigma, &v)?;
        let tw = adp.apply_policy(&sigma, &w)?;
        let tm = adp.apply_policy(&sigma, &mix)?;
        let (i, excess) = worst(
            tm.iter()
                .zip(tv.iter().zip(tw.iter()))
                .map(|(m, (a, b))| lambda * a + (1.0 - lambda) * b - m),
        );
        report.statistic = report.statistic.max(excess);
        if excess > CONCAVITY_SLACK {
            report.fail(|| {
                Witness::new(trial, format!("chord lies {excess:e} above the operator at index {i}"))
                    .with_policy(&sigma)
                    .with("v", &v)
                    .with("w", &w)
                    .with("lambda", &[lambda])
            });
        }
    }
    Ok(report)
}

/// Largest sampled `‖T_σ v - T_σ w‖∞ / ‖v - w‖∞`; a ratio `≥ 1` counts as a failure.
pub fn estimate_contraction_modulus<A: Adp + ?Sized>(
    adp: &A,
    lo: &[f64],
    hi: &[f64],
    seed: u64,
    trials: usize,
) -> Result<PropertyReport> {
    check_trials(trials)?;
    check_box(adp, lo, hi)?;
    let mut s = BoxSampler::new(seed);
    let mut report = PropertyReport::new("contraction_modulus", trials, seed);
    for trial in 0..trials {
        let sigma = s.policy(adp.space());
        let v = s.vector(lo, hi);
        let w = s.vector(lo, hi);
        let d = v.sup_distance(&w);
        if d == 0.0 {
            continue;
        }
        let ratio = adp.apply_policy(&sigma, &v)?.sup_distance(&adp.apply_policy(&sigma, &w)?) / d;
        report.statistic = report.statistic.max(ratio);
        if ratio >= 1.0 {
            report.fail(|| {
                Witness::new(trial, format!("distance ratio {ratio} is not below one"))
                    .with_policy(&sigma)
                    .with("v", &v)
                    .with("w", &w)
            });
        }
    }
    Ok(report)
}

/// `T_σ v` stays off the lower perimeter of `[0, b]`: every entry is positive
/// and at least `r_lower` for random `σ` and `v ∈ [0, b]`. The first trial
/// uses `v = 0`, where a monotone `T_σ` is smallest.
pub fn check_lower_perimeter<A: Adp + ?Sized>(
    adp: &A,
    b: &[f64],
    r_lower: f64,
    seed: u64,
    trials: usize,
) -> Result<PropertyReport> {
    check_trials(trials)?;
    let zero = vec![0.0; b.len()];
    check_box(adp, &zero, b)?;
    let mut s = BoxSampler::new(seed);
    let mut report = PropertyReport::new("lower_perimeter", trials, seed);
    for trial in 0..trials {
        let sigma = s.policy(adp.space());
        let v = if trial == 0 {
            ValueVector::zeros(b.len())
        } else {
            s.vector(&zero, b)
        };
        let tv = adp.apply_policy(&sigma, &v)?;
        let (i, low) = tv
            .iter()
            .copied()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, x)| if x < acc.1 { (i, x) } else { acc });
        report.statistic = report.statistic.max(r_lower - low);
        if low < r_lower - ORDER_SLACK || low <= 0.0 {
            report.fail(|| {
                Witness::new(trial, format!("(T_σ v)({i}) = {low} is below the bound {r_lower} or not positive"))
                    .with_policy(&sigma)
                    .with("v", &v)
            });
        }
    }
    Ok(report)
}

/// Index and value of the largest entry.
fn worst(diffs: impl Iterator<Item = f64>) -> (usize, f64) {
    diffs
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, d)| if d > acc.1 { (i, d) } else { acc })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::FiniteMdp;

    #[test]
    fn enumeration_is_lexicographic() {
        let space = StateActionSpace::new(
            crate::adp::StateIndexSet::new(2).unwrap(),
            3,
            vec![vec![0, 2], vec![0, 1, 2]],
        )
        .unwrap();
        let all: Vec<Vec<usize>> = enumerate_policies(&space, 100)
            .unwrap()
            .into_iter()
            .map(|p| p.actions().to_vec())
            .collect();
        assert_eq!(
            all,
            vec![
                vec![0, 0],
                vec![0, 1],
                vec![0, 2],
                vec![2, 0],
                vec![2, 1],
                vec![2, 2]
            ]
        );
    }

    #[test]
    fn enumeration_guard() {
        let space = StateActionSpace::full(13, 3).unwrap();
        assert!(matches!(
            enumerate_policies(&space, POLICY_LIMIT),
            Err(AdpError::TooManyPolicies { count: 1_594_323, .. })
        ));
    }

    #[test]
    fn brute_force_on_one_state_mdp() {
        let space = StateActionSpace::full(1, 2).unwrap();
        let mdp = FiniteMdp::new(space, 0.5, vec![1.0, 2.0], vec![vec![1.0]; 2]).unwrap();
        let report = brute_force_optimality(&mdp, &IterationControl::default().with_tol(1e-12)).unwrap();
        assert!(report.passed(), "{:?}", report.witnesses);
        assert_eq!(report.n_policies, 2);
        assert!((report.v_max[0] - 4.0).abs() < 1e-12);
        assert!(report.solver_gap < 1e-9);
    }

    #[test]
    fn sampler_is_reproducible() {
        let mut a = BoxSampler::new(7);
        let mut b = BoxSampler::new(7);
        let lo = [0.0, 1.0];
        let hi = [1.0, 3.0];
        assert_eq!(a.vector(&lo, &hi), b.vector(&lo, &hi));
        assert_eq!(a.nonnegative(), b.nonnegative());
    }

    #[test]
    fn report_round_trips_through_json() {
        let space = StateActionSpace::full(2, 1).unwrap();
        let mdp = FiniteMdp::new(space, 0.9, vec![1.0, 0.0], vec![vec![0.5, 0.5], vec![0.0, 1.0]]).unwrap();
        let report = check_lower_perimeter(&mdp, &[10.0, 10.0], 0.0, 3, 20).unwrap();
        assert!(!report.passed());
        let back: PropertyReport = serde_json::from_str(&report.to_json().unwrap()).unwrap();
        assert_eq!(back, report);
    }
}
