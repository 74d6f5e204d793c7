//! Entropic risk preferences with state-dependent discounting.
//!
//! `v(y, z) = max_a { r(x, a) + (β(z) / θ) ln Σ_{z'} e^{θ v(x')} P(z, z') }`
//! with `θ < 0` and `x' = successor(x, a, z')`. Terminal pairs contribute
//! their reward only.

use serde::{Deserialize, Serialize};

use crate::adp::{ActionValueModel, Policy, StateActionSpace, StateIndexSet, ValueVector};
use crate::algorithms::IterationControl;
use crate::dynamics::{dominating_bound, ExogenousDynamics};
use crate::error::{AdpError, Result};
use crate::markov::{first_drift_horizon, stationary_distribution, tauchen, Ar1Spec, DiscountTiming};

/// Longest horizon tried when looking for `sup_z E Π β < 1`.
pub const DRIFT_HORIZON: usize = 10_000;

/// `(1/θ) ln Σ p_i e^{θ v_i}` for `θ < 0`.
pub fn entropic_ce(values: &[f64], probs: &[f64], theta: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(AdpError::invalid("values", "empty support"));
    }
    if values.len() != probs.len() {
        return Err(AdpError::LengthMismatch {
            expected: values.len(),
            actual: probs.len(),
        });
    }
    if !(theta < 0.0) || !theta.is_finite() {
        return Err(AdpError::invalid("theta", format!("{theta} must be negative")));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(AdpError::invalid("values", format!("non-finite entry {v}")));
    }
    if probs.iter().any(|&p| !(p >= 0.0)) {
        return Err(AdpError::invalid("probs", "negative or NaN weight"));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(AdpError::invalid("probs", format!("weights sum to {total}")));
    }
    let terms = values
        .iter()
        .zip(probs)
        .filter(|(_, &p)| p > 0.0)
        .map(|(&v, &p)| (v, p.ln()));
    Ok(entropic_ce_log(terms, theta))
}

/// Entropic CE from `(value, ln weight)` terms, shifted so every exponent is `≤ 0`.
fn entropic_ce_log(terms: impl Iterator<Item = (f64, f64)> + Clone, theta: f64) -> f64 {
    let mut shift = f64::NEG_INFINITY;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (v, lp) in terms.clone() {
        shift = shift.max(lp + theta * v);
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let sum: f64 = terms.map(|(v, lp)| (lp + theta * v - shift).exp()).sum();
    ((shift + sum.ln()) / theta).clamp(lo, hi)
}

/// Risk-sensitive program on a state space driven by an exogenous chain.
#[derive(Debug, Clone)]
pub struct RiskSensitiveModel {
    space: StateActionSpace,
    dynamics: ExogenousDynamics,
    theta: f64,
    beta: Vec<f64>,
    reward: Vec<f64>,
    drift_horizon: usize,
    upper: ValueVector,
}

impl RiskSensitiveModel {
    /// `beta[z]` is the discount applied in exogenous state `z`; `reward` is
    /// indexed by the feasible-pair enumeration.
    ///
    /// Continuing pairs need a strictly positive reward and terminal pairs a
    /// nonnegative one. Construction runs the drift check on `β` and computes
    /// the upper bound `b` with the default iteration control.
    pub fn new(
        space: StateActionSpace,
        dynamics: ExogenousDynamics,
        theta: f64,
        beta: Vec<f64>,
        reward: Vec<f64>,
    ) -> Result<Self> {
        Self::with_control(space, dynamics, theta, beta, reward, &IterationControl::default())
    }

    pub fn with_control(
        space: StateActionSpace,
        dynamics: ExogenousDynamics,
        theta: f64,
        beta: Vec<f64>,
        reward: Vec<f64>,
        ctrl: &IterationControl,
    ) -> Result<Self> {
        if !(theta < 0.0) || !theta.is_finite() {
            return Err(AdpError::invalid("theta", format!("{theta} must be negative")));
        }
        if beta.len() != dynamics.n_exogenous() {
            return Err(AdpError::LengthMismatch {
                expected: dynamics.n_exogenous(),
                actual: beta.len(),
            });
        }
        if let Some(b) = beta.iter().find(|b| !(**b >= 0.0) || !b.is_finite()) {
            return Err(AdpError::invalid("beta", format!("{b} is not a bounded nonnegative discount")));
        }
        if reward.len() != space.n_pairs() {
            return Err(AdpError::LengthMismatch {
                expected: space.n_pairs(),
                actual: reward.len(),
            });
        }
        for (k, &r) in reward.iter().enumerate() {
            let ok = if dynamics.is_terminal(k) { r >= 0.0 } else { r > 0.0 };
            if !ok || !r.is_finite() {
                let (x, a) = space.pairs()[k];
                return Err(AdpError::invalid(
                    "reward",
                    format!("r({x}, {a}) = {r} violates the positive reward bound"),
                ));
            }
        }
        let drift_horizon = match first_drift_horizon(dynamics.p(), &beta, DRIFT_HORIZON, DiscountTiming::Current)? {
            Some((k, _)) => k,
            None => {
                return Err(AdpError::Stability(format!(
                    "sup_z E Π β(Z_t) stays ≥ 1 for every horizon up to {DRIFT_HORIZON}"
                )))
            }
        };
        let mut model = Self {
            space,
            dynamics,
            theta,
            beta,
            reward,
            drift_horizon,
            upper: ValueVector::zeros(0),
        };
        model.upper = model.compute_upper_bound_b(ctrl)?;
        Ok(model)
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn reward(&self) -> &[f64] {
        &self.reward
    }

    pub fn dynamics(&self) -> &ExogenousDynamics {
        &self.dynamics
    }

    /// Smallest `n` with `sup_z E_z Π_{t<n} β(Z_t) < 1`.
    pub fn drift_horizon(&self) -> usize {
        self.drift_horizon
    }

    /// `(r̲, r̄)` over all feasible pairs.
    pub fn reward_bounds(&self) -> (f64, f64) {
        let lo = self.reward.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.reward.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    /// The upper end `b` of the value space `[0, b]`.
    pub fn upper_bound(&self) -> &ValueVector {
        &self.upper
    }

    /// Fixed point of `(S v)(x) = r̄ + β(z) Σ_{z'} max_a v(successor(x, a, z')) P(z, z')`.
    pub fn compute_upper_bound_b(&self, ctrl: &IterationControl) -> Result<ValueVector> {
        ctrl.validate()?;
        let (_, r_hi) = self.reward_bounds();
        let beta = &self.beta;
        let dynamics = &self.dynamics;
        dominating_bound(
            &self.space,
            dynamics,
            r_hi,
            |x, _, prob| beta[dynamics.z_of(x)] * prob,
            ctrl,
        )
    }

    /// Action value with an explicit `θ`, for sweeps that share one model.
    pub fn action_value_at(&self, x: usize, a: usize, v: &[f64], theta: f64) -> f64 {
        let k = self.space.pair_index(x, a).expect("feasible pair");
        let r = self.reward[k];
        let Some(succ) = self.dynamics.successors(k) else {
            return r;
        };
        let z = self.dynamics.z_of(x);
        let terms = self
            .dynamics
            .support(z)
            .iter()
            .map(|&(z_next, _, lp)| (v[succ[z_next]], lp));
        r + self.beta[z] * entropic_ce_log(terms, theta)
    }
}

impl ActionValueModel for RiskSensitiveModel {
    fn model_space(&self) -> &StateActionSpace {
        &self.space
    }

    fn action_value(&self, x: usize, a: usize, v: &[f64]) -> f64 {
        self.action_value_at(x, a, v, self.theta)
    }

    /// Accepts `v` in `[0, b]`, with a relative slack of `1e-9` at the top.
    fn check_value(&self, v: &[f64]) -> Result<()> {
        let n = self.space.n_states();
        if v.len() != n {
            return Err(AdpError::LengthMismatch {
                expected: n,
                actual: v.len(),
            });
        }
        for (i, (&value, &upper)) in v.iter().zip(self.upper.iter()).enumerate() {
            if !(value >= 0.0 && value <= upper + 1e-9 * (1.0 + upper)) {
                return Err(AdpError::OutsideValueSpace {
                    index: i,
                    value,
                    lower: 0.0,
                    upper,
                });
            }
        }
        Ok(())
    }
}

/// `rs_action_value` in free-function form.
pub fn rs_action_value(model: &RiskSensitiveModel, x: usize, a: usize, v: &ValueVector) -> Result<f64> {
    if !model.space.is_feasible(x, a) {
        return Err(AdpError::InfeasiblePolicy { state: x, action: a });
    }
    model.check_value(v)?;
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

pub const EXIT: usize = 0;
pub const CONTINUE: usize = 1;

/// Firm exit with AR(1) productivity, `π(x) = x` and `β(x) = κ x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FirmExitParams {
    pub rho: f64,
    pub alpha: f64,
    pub kappa: f64,
    pub n: usize,
    pub s: f64,
    pub theta: f64,
    /// Grid half-width in unconditional standard deviations.
    pub m_std: f64,
}

impl Default for FirmExitParams {
    fn default() -> Self {
        Self {
            rho: 0.85,
            alpha: 0.0062,
            kappa: 0.99875,
            n: 400,
            s: 100.0,
            theta: -1.0,
            m_std: 3.0,
        }
    }
}

impl FirmExitParams {
    /// Productivity process in levels, centred at one.
    pub fn ar1(&self) -> Ar1Spec {
        Ar1Spec {
            m_std: self.m_std,
            ..Ar1Spec::new(self.rho, self.alpha, 1.0 - self.rho, self.n)
        }
    }
}

/// The firm-exit model with its productivity grid and stationary distribution.
#[derive(Debug, Clone)]
pub struct FirmExit {
    pub model: RiskSensitiveModel,
    pub params: FirmExitParams,
    pub grid: Vec<f64>,
    pub stationary: Vec<f64>,
}

pub fn build_firm_exit_model(params: &FirmExitParams) -> Result<FirmExit> {
    if !(params.s >= 0.0) || !params.s.is_finite() {
        return Err(AdpError::invalid("s", format!("{} must be a nonnegative real", params.s)));
    }
    if !(params.kappa > 0.0) || !params.kappa.is_finite() {
        return Err(AdpError::invalid("kappa", format!("{} must be positive", params.kappa)));
    }
    let p = tauchen(&params.ar1())?;
    let grid = p.grid().expect("tauchen attaches a grid").to_vec();
    if grid[0] <= 0.0 {
        return Err(AdpError::invalid(
            "alpha",
            format!("productivity grid reaches {} ≤ 0", grid[0]),
        ));
    }
    let n = params.n;
    let labels = grid.iter().map(|&x| vec![x]).collect();
    let space = StateActionSpace::new(StateIndexSet::with_labels(labels)?, 2, vec![vec![EXIT, CONTINUE]; n])?;
    let mut reward = Vec::with_capacity(2 * n);
    let mut successors = Vec::with_capacity(2 * n);
    for &x in &grid {
        reward.push(params.s);
        successors.push(None);
        reward.push(x);
        successors.push(Some((0..n).collect()));
    }
    let beta = grid.iter().map(|&x| params.kappa * x).collect();
    let stationary = stationary_distribution(&p, 1e-13)?;
    let dynamics = ExogenousDynamics::new(&space, (0..n).collect(), p, successors)?;
    let model = RiskSensitiveModel::new(space, dynamics, params.theta, beta, reward)?;
    Ok(FirmExit {
        model,
        params: *params,
        grid,
        stationary,
    })
}

impl FirmExit {
    /// Same model with a different risk parameter; the bound `b` does not depend on `θ`.
    pub fn with_theta(&self, theta: f64) -> Result<FirmExit> {
        if !(theta < 0.0) || !theta.is_finite() {
            return Err(AdpError::invalid("theta", format!("{theta} must be negative")));
        }
        let mut out = self.clone();
        out.model.theta = theta;
        out.params.theta = theta;
        Ok(out)
    }

    /// Value of remaining in operation: the CONTINUE action value at each grid point.
    pub fn h_star(&self, v: &ValueVector) -> Result<Vec<f64>> {
        (0..self.grid.len())
            .map(|x| rs_action_value(&self.model, x, CONTINUE, v))
            .collect()
    }

    /// `(max(s, h), h)` with `h` the continuation values at `v`; the first
    /// component is one Bellman update of `v`.
    pub fn bellman_split(&self, v: &ValueVector) -> Result<(Vec<f64>, Vec<f64>)> {
        let h = self.h_star(v)?;
        let tv = h.iter().map(|&c| if c > self.params.s { c } else { self.params.s }).collect();
        Ok((tv, h))
    }

    /// Smallest grid point at which `policy` continues, or `None` if it always exits.
    ///
    /// `policy` is expected to be greedy for the solved value function. Errors
    /// unless it exits below the threshold and continues at and above it.
    pub fn exit_threshold(&self, policy: &Policy) -> Result<Option<(usize, f64)>> {
        self.model.space.check_policy(policy)?;
        let actions = policy.actions();
        let Some(first) = actions.iter().position(|&a| a == CONTINUE) else {
            return Ok(None);
        };
        if let Some(bad) = actions[first..].iter().position(|&a| a != CONTINUE) {
            return Err(AdpError::Structure(format!(
                "policy continues at grid index {first} but exits at {}",
                first + bad
            )));
        }
        Ok(Some((first, self.grid[first])))
    }
}
