//! Discounting through a scalar map applied to continuation values.
//!
//! `(T_σ v)(x) = r(x, σ(x)) + Σ_{z'} P(z, z') b(v(x'))`, with `b ≥ 0`
//! order preserving, subadditive and dominated by `δ(z') t`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::adp::{ActionValueModel, StateActionSpace, ValueVector};
use crate::algorithms::IterationControl;
use crate::dynamics::{dominating_bound, ExogenousDynamics};
use crate::error::{AdpError, Result};
use crate::markov::{first_drift_horizon, DiscountTiming};
use crate::oracle::{BoxSampler, PropertyReport, Witness};

/// Longest horizon tried when looking for `sup_z E Π δ < 1`.
pub const DRIFT_HORIZON: usize = 10_000;

/// Default sample count for the discount checks run at construction.
pub const DEFAULT_CHECK_TRIALS: usize = 2_000;

/// The scalar map `b` of `β v = b ∘ v`.
#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DiscountFunction {
    /// `c t`.
    Linear { c: f64 },
    /// `c min(t, cap)`.
    CappedLinear { c: f64, cap: f64 },
    /// `c t / (1 + k t)`.
    Saturating { c: f64, k: f64 },
    /// `c t` below one, `c √t` from one on.
    SqrtAboveOne { c: f64 },
    /// `c t^p`.
    Power { c: f64, p: f64 },
    /// Linear interpolation through `(t, b(t))` knots, constant beyond the ends.
    PiecewiseLinear { knots: Vec<(f64, f64)> },
    #[serde(skip)]
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for DiscountFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Linear { c } => write!(f, "Linear {{ c: {c} }}"),
            Self::CappedLinear { c, cap } => write!(f, "CappedLinear {{ c: {c}, cap: {cap} }}"),
            Self::Saturating { c, k } => write!(f, "Saturating {{ c: {c}, k: {k} }}"),
            Self::SqrtAboveOne { c } => write!(f, "SqrtAboveOne {{ c: {c} }}"),
            Self::Power { c, p } => write!(f, "Power {{ c: {c}, p: {p} }}"),
            Self::PiecewiseLinear { knots } => write!(f, "PiecewiseLinear {{ knots: {knots:?} }}"),
            Self::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl DiscountFunction {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            Self::Linear { c } => c * t,
            Self::CappedLinear { c, cap } => c * t.min(*cap),
            Self::Saturating { c, k } => c * t / (1.0 + k * t),
            Self::SqrtAboveOne { c } => {
                if t >= 1.0 {
                    c * t.sqrt()
                } else {
                    c * t
                }
            }
            Self::Power { c, p } => c * t.powf(*p),
            Self::PiecewiseLinear { knots } => interpolate(knots, t),
            Self::Custom(f) => f(t),
        }
    }

    fn validate(&self) -> Result<()> {
        let params: Vec<f64> = match self {
            Self::Linear { c } | Self::SqrtAboveOne { c } => vec![*c],
            Self::CappedLinear { c, cap } => vec![*c, *cap],
            Self::Saturating { c, k } => vec![*c, *k],
            Self::Power { c, p } => vec![*c, *p],
            Self::PiecewiseLinear { knots } => {
                if knots.is_empty() {
                    return Err(AdpError::invalid("knots", "need at least one knot"));
                }
                if knots.windows(2).any(|w| !(w[0].0 < w[1].0)) {
                    return Err(AdpError::invalid("knots", "abscissae must increase strictly"));
                }
                knots.iter().flat_map(|&(t, b)| [t, b]).collect()
            }
            Self::Custom(_) => vec![],
        };
        if params.iter().any(|p| !p.is_finite()) {
            return Err(AdpError::invalid("discount", "non-finite parameter"));
        }
        Ok(())
    }
}

fn interpolate(knots: &[(f64, f64)], t: f64) -> f64 {
    let first = knots[0];
    let last = knots[knots.len() - 1];
    if t <= first.0 {
        return first.1;
    }
    if t >= last.0 {
        return last.1;
    }
    let j = knots.partition_point(|&(x, _)| x <= t);
    let (x0, y0) = knots[j - 1];
    let (x1, y1) = knots[j];
    y0 + (y1 - y0) * (t - x0) / (x1 - x0)
}

/// The scalar map together with its domination bound `δ(z)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscountMap {
    pub function: DiscountFunction,
    /// One entry per exogenous state.
    pub delta: Vec<f64>,
}

/// Sampled checks of the discount assumptions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscountCheckReport {
    pub nonnegative: PropertyReport,
    pub order_preserving: PropertyReport,
    pub subadditive: PropertyReport,
    pub dominated: PropertyReport,
}

impl DiscountCheckReport {
    pub fn passed(&self) -> bool {
        self.all().iter().all(|r| r.passed())
    }

    pub fn all(&self) -> [&PropertyReport; 4] {
        [
            &self.nonnegative,
            &self.order_preserving,
            &self.subadditive,
            &self.dominated,
        ]
    }

    fn first_failure(&self) -> Option<&PropertyReport> {
        self.all().into_iter().find(|r| !r.passed())
    }
}

fn report(property: &str, trials: usize, seed: u64) -> PropertyReport {
    PropertyReport {
        property: property.to_string(),
        trials,
        failures: 0,
        seed,
        statistic: 0.0,
        witness: None,
    }
}

/// Counts a failure when `excess` is above `1e-12` relative to `scale`.
fn record(
    r: &mut PropertyReport,
    trial: usize,
    excess: f64,
    scale: f64,
    detail: impl FnOnce() -> (String, Vec<(&'static str, Vec<f64>)>),
) {
    r.statistic = r.statistic.max(excess);
    if excess > 1e-12 * (1.0 + scale.abs()) || excess.is_nan() {
        r.failures += 1;
        if r.witness.is_none() {
            let (text, inputs) = detail();
            r.witness = Some(Witness {
                trial,
                detail: text,
                inputs: inputs.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
            });
        }
    }
}

/// Samples nonnegative arguments and reports nonnegativity, order
/// preservation, subadditivity and `δ`-domination of the map, each with a
/// witness on failure.
pub fn check_discount_assumptions(
    discount: &DiscountMap,
    sampler: &mut BoxSampler,
    trials: usize,
) -> Result<DiscountCheckReport> {
    if trials == 0 {
        return Err(AdpError::invalid("trials", "must be at least 1"));
    }
    if discount.delta.is_empty() {
        return Err(AdpError::invalid("delta", "empty"));
    }
    let b = |t: f64| discount.function.eval(t);
    let seed = sampler.seed();
    let mut out = DiscountCheckReport {
        nonnegative: report("nonnegative", trials, seed),
        order_preserving: report("order_preserving", trials, seed),
        subadditive: report("subadditive", trials, seed),
        dominated: report("dominated", trials, seed),
    };
    for trial in 0..trials {
        let s = sampler.nonnegative();
        let t = sampler.nonnegative();
        let (lo, hi) = if s <= t { (s, t) } else { (t, s) };
        let z = sampler.index(discount.delta.len());

        let bt = b(t);
        record(&mut out.nonnegative, trial, -bt, 0.0, || {
            (format!("b({t}) = {bt} is negative"), vec![("t", vec![t])])
        });
        let (b_lo, b_hi) = (b(lo), b(hi));
        record(&mut out.order_preserving, trial, b_lo - b_hi, b_hi, || {
            (
                format!("b({lo}) = {b_lo} exceeds b({hi}) = {b_hi}"),
                vec![("s", vec![lo]), ("t", vec![hi])],
            )
        });
        let (bs, bsum) = (b(s), b(s + t));
        record(&mut out.subadditive, trial, bsum - bs - bt, bsum, || {
            (
                format!("b({s} + {t}) = {bsum} exceeds b({s}) + b({t}) = {}", bs + bt),
                vec![("s", vec![s]), ("t", vec![t])],
            )
        });
        let bound = discount.delta[z] * t;
        record(&mut out.dominated, trial, bt - bound, bound, || {
            (
                format!("b({t}) = {bt} exceeds δ({z}) t = {bound}"),
                vec![("t", vec![t]), ("z", vec![z as f64])],
            )
        });
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct NonlinearDiscountModel {
    space: StateActionSpace,
    dynamics: ExogenousDynamics,
    reward: Vec<f64>,
    discount: DiscountMap,
    checks: Option<DiscountCheckReport>,
    drift_horizon: Option<usize>,
    upper: Option<ValueVector>,
}

impl NonlinearDiscountModel {
    /// Checks the discount map (seed 0, [`DEFAULT_CHECK_TRIALS`] samples), the
    /// drift of `δ` and computes the upper bound `b`. A failed check is an error.
    pub fn new(
        space: StateActionSpace,
        dynamics: ExogenousDynamics,
        reward: Vec<f64>,
        discount: DiscountMap,
    ) -> Result<Self> {
        Self::with_checks(
            space,
            dynamics,
            reward,
            discount,
            &mut BoxSampler::new(0),
            DEFAULT_CHECK_TRIALS,
            &IterationControl::default(),
        )
    }

    pub fn with_checks(
        space: StateActionSpace,
        dynamics: ExogenousDynamics,
        reward: Vec<f64>,
        discount: DiscountMap,
        sampler: &mut BoxSampler,
        trials: usize,
        ctrl: &IterationControl,
    ) -> Result<Self> {
        let mut model = Self::new_unchecked(space, dynamics, reward, discount)?;
        let checks = check_discount_assumptions(&model.discount, sampler, trials)?;
        if let Some(failed) = checks.first_failure() {
            let detail = failed.witness.as_ref().map(|w| w.detail.as_str()).unwrap_or("");
            return Err(AdpError::invalid(
                "discount",
                format!("{} check failed: {detail}", failed.property),
            ));
        }
        model.checks = Some(checks);
        let horizon = first_drift_horizon(model.dynamics.p(), &model.discount.delta, DRIFT_HORIZON, DiscountTiming::Next)?;
        let Some((k, _)) = horizon else {
            return Err(AdpError::Stability(format!(
                "sup_z E Π δ(Z_t) stays ≥ 1 for every horizon up to {DRIFT_HORIZON}"
            )));
        };
        model.drift_horizon = Some(k);
        model.upper = Some(model.compute_nd_upper_bound(ctrl)?);
        Ok(model)
    }

    /// Skips the discount checks, the drift check and the upper bound; the
    /// value space is then all nonnegative vectors. For planted counterexamples.
    pub fn new_unchecked(
        space: StateActionSpace,
        dynamics: ExogenousDynamics,
        reward: Vec<f64>,
        discount: DiscountMap,
    ) -> Result<Self> {
        discount.function.validate()?;
        if discount.delta.len() != dynamics.n_exogenous() {
            return Err(AdpError::LengthMismatch {
                expected: dynamics.n_exogenous(),
                actual: discount.delta.len(),
            });
        }
        if let Some(d) = discount.delta.iter().find(|d| !(**d >= 0.0) || !d.is_finite()) {
            return Err(AdpError::invalid("delta", format!("{d} is not a nonnegative real")));
        }
        if reward.len() != space.n_pairs() {
            return Err(AdpError::LengthMismatch {
                expected: space.n_pairs(),
                actual: reward.len(),
            });
        }
        if let Some(r) = reward.iter().find(|r| !(**r >= 0.0) || !r.is_finite()) {
            return Err(AdpError::invalid("reward", format!("{r} is not a nonnegative real")));
        }
        Ok(Self {
            space,
            dynamics,
            reward,
            discount,
            checks: None,
            drift_horizon: None,
            upper: None,
        })
    }

    pub fn reward(&self) -> &[f64] {
        &self.reward
    }

    pub fn discount(&self) -> &DiscountMap {
        &self.discount
    }

    pub fn dynamics(&self) -> &ExogenousDynamics {
        &self.dynamics
    }

    /// The construction-time discount checks, absent for unchecked models.
    pub fn checks(&self) -> Option<&DiscountCheckReport> {
        self.checks.as_ref()
    }

    pub fn drift_horizon(&self) -> Option<usize> {
        self.drift_horizon
    }

    /// The upper end `b` of the value space `[0, b]`, absent for unchecked models.
    pub fn upper_bound(&self) -> Option<&ValueVector> {
        self.upper.as_ref()
    }

    pub fn reward_bounds(&self) -> (f64, f64) {
        let lo = self.reward.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.reward.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    /// Fixed point of `(S v)(x) = sup r + Σ_{z'} δ(z') max_a v(successor(x, a, z')) P(z, z')`.
    pub fn compute_nd_upper_bound(&self, ctrl: &IterationControl) -> Result<ValueVector> {
        ctrl.validate()?;
        if first_drift_horizon(self.dynamics.p(), &self.discount.delta, DRIFT_HORIZON, DiscountTiming::Next)?.is_none() {
            return Err(AdpError::Stability(format!(
                "sup_z E Π δ(Z_t) stays ≥ 1 for every horizon up to {DRIFT_HORIZON}"
            )));
        }
        let (_, r_sup) = self.reward_bounds();
        let delta = &self.discount.delta;
        dominating_bound(&self.space, &self.dynamics, r_sup, |_, z_next, prob| delta[z_next] * prob, ctrl)
    }
}

impl ActionValueModel for NonlinearDiscountModel {
    fn model_space(&self) -> &StateActionSpace {
        &self.space
    }

    fn action_value(&self, x: usize, a: usize, v: &[f64]) -> f64 {
        let k = self.space.pair_index(x, a).expect("feasible pair");
        let r = self.reward[k];
        let Some(succ) = self.dynamics.successors(k) else {
            return r;
        };
        let continuation: f64 = self
            .dynamics
            .support(self.dynamics.z_of(x))
            .iter()
            .map(|&(z_next, prob, _)| prob * self.discount.function.eval(v[succ[z_next]]))
            .sum();
        r + continuation
    }

    /// Accepts `v ≥ 0`, and `v ≤ b` (relative slack `1e-9`) when `b` is known.
    fn check_value(&self, v: &[f64]) -> Result<()> {
        let n = self.space.n_states();
        if v.len() != n {
            return Err(AdpError::LengthMismatch {
                expected: n,
                actual: v.len(),
            });
        }
        for (i, &value) in v.iter().enumerate() {
            let upper = self.upper.as_ref().map_or(f64::INFINITY, |b| b[i]);
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

/// `nd_action_value` in free-function form.
pub fn nd_action_value(model: &NonlinearDiscountModel, x: usize, a: usize, v: &ValueVector) -> Result<f64> {
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
