//! Fixed-point solvers: successive approximation, value function iteration,
//! Howard policy iteration and optimistic policy iteration.

use std::fmt;
use std::path::Path;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::adp::{Adp, Policy, ValueVector};
use crate::error::{AdpError, Result};

/// Consecutive strictly increasing step distances that abort an iteration.
pub const DIVERGENCE_WINDOW: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationControl {
    /// Sup-norm threshold on successive iterates.
    pub tol: f64,
    pub max_iter: usize,
    pub record_trace: bool,
    /// Number of leading iterates to keep in the result (for plotting).
    pub keep_iterates: usize,
}

impl Default for IterationControl {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 100_000,
            record_trace: true,
            keep_iterates: 0,
        }
    }
}

impl IterationControl {
    pub fn new(tol: f64, max_iter: usize) -> Result<Self> {
        let ctrl = Self {
            tol,
            max_iter,
            ..Self::default()
        };
        ctrl.validate()?;
        Ok(ctrl)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || !self.tol.is_finite() {
            return Err(AdpError::invalid("tol", format!("{} must be positive", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(AdpError::invalid("max_iter", "must be at least 1"));
        }
        Ok(())
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn keeping_iterates(mut self, k: usize) -> Self {
        self.keep_iterates = k;
        self
    }
}

/// Outcome of iterating a self-map.
#[derive(Debug, Clone)]
pub struct FixedPointResult {
    pub value: ValueVector,
    pub iterations: usize,
    /// `‖v_{k+1} - v_k‖∞` per iteration, when recorded.
    pub trace: Option<Vec<f64>>,
    pub converged: bool,
    pub elapsed_seconds: f64,
    /// `v_1, v_2, ...` up to `keep_iterates`.
    pub iterates: Vec<ValueVector>,
    pub last_distance: f64,
}

/// Outcome of a dynamic-programming solve.
#[derive(Debug, Clone)]
pub struct SolveResult {
    pub value: ValueVector,
    /// Greedy with respect to `value`.
    pub policy: Policy,
    pub iterations: usize,
    pub trace: Option<Vec<f64>>,
    pub converged: bool,
    pub elapsed_seconds: f64,
    pub iterates: Vec<ValueVector>,
}

impl SolveResult {
    fn from_fixed_point<A: Adp + ?Sized>(adp: &A, fp: FixedPointResult) -> Result<Self> {
        let policy = adp.greedy(&fp.value)?;
        Ok(Self {
            value: fp.value,
            policy,
            iterations: fp.iterations,
            trace: fp.trace,
            converged: fp.converged,
            elapsed_seconds: fp.elapsed_seconds,
            iterates: fp.iterates,
        })
    }
}

/// Tracks runs of strictly increasing step distances.
#[derive(Default)]
struct DivergenceMonitor {
    previous: Option<f64>,
    run: usize,
}

impl DivergenceMonitor {
    fn observe(&mut self, d: f64) -> bool {
        match self.previous {
            Some(p) if d > p => self.run += 1,
            _ => self.run = 0,
        }
        self.previous = Some(d);
        self.run >= DIVERGENCE_WINDOW
    }
}

/// Iterates `v_{k+1} = step(v_k)` until `‖v_{k+1} - v_k‖∞ ≤ tol` or `max_iter`.
///
/// Hitting `max_iter` is reported through `converged = false`, not as an error.
pub fn successive_approximation<F>(
    mut step: F,
    v0: ValueVector,
    ctrl: &IterationControl,
) -> Result<FixedPointResult>
where
    F: FnMut(&ValueVector) -> Result<ValueVector>,
{
    ctrl.validate()?;
    let start = Instant::now();
    let mut v = v0;
    let mut trace = ctrl.record_trace.then(Vec::new);
    let mut iterates = Vec::new();
    let mut monitor = DivergenceMonitor::default();
    let mut converged = false;
    let mut iterations = 0;
    let mut last_distance = f64::INFINITY;

    while iterations < ctrl.max_iter {
        let next = step(&v)?;
        if next.len() != v.len() {
            return Err(AdpError::LengthMismatch {
                expected: v.len(),
                actual: next.len(),
            });
        }
        if let Some((i, &bad)) = next.iter().enumerate().find(|(_, x)| !x.is_finite()) {
            return Err(AdpError::NumericalDomain {
                state: i,
                action: None,
                value: bad,
            });
        }
        iterations += 1;
        let d = next.sup_distance(&v);
        last_distance = d;
        if let Some(t) = trace.as_mut() {
            t.push(d);
        }
        if iterates.len() < ctrl.keep_iterates {
            iterates.push(next.clone());
        }
        v = next;
        if d <= ctrl.tol {
            converged = true;
            break;
        }
        if monitor.observe(d) {
            return Err(AdpError::Divergence {
                iterations,
                policy: None,
            });
        }
    }

    Ok(FixedPointResult {
        value: v,
        iterations,
        trace,
        converged,
        elapsed_seconds: start.elapsed().as_secs_f64(),
        iterates,
        last_distance,
    })
}

/// Iterates the Bellman operator.
pub fn value_function_iteration<A: Adp + ?Sized>(
    adp: &A,
    v0: ValueVector,
    ctrl: &IterationControl,
) -> Result<SolveResult> {
    check_len(adp, &v0)?;
    let start = Instant::now();
    let fp = successive_approximation(|v| adp.bellman(v), v0, ctrl)?;
    let mut result = SolveResult::from_fixed_point(adp, fp)?;
    result.elapsed_seconds = start.elapsed().as_secs_f64();
    Ok(result)
}

/// Solves `(I - M) x = offset` by LU with one step of iterative refinement.
pub fn solve_affine_fixed_point(offset: &[f64], matrix: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = offset.len();
    if matrix.nrows() != n || matrix.ncols() != n {
        return Err(AdpError::LengthMismatch {
            expected: n,
            actual: matrix.nrows(),
        });
    }
    let a = DMatrix::identity(n, n) - matrix;
    let lu = a.lu();
    let rhs = DVector::from_column_slice(offset);
    let mut x = lu.solve(&rhs).ok_or(AdpError::Singular)?;
    let residual = &rhs - (&x - matrix * &x);
    if let Some(correction) = lu.solve(&residual) {
        x += correction;
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(AdpError::Singular);
    }
    Ok(x.iter().copied().collect())
}

/// Lifetime value `v_σ` of following `policy` forever.
///
/// With `exact_affine` set and an affine model, solves the linear system;
/// otherwise iterates `T_σ` from `initial` (or the model's default start).
pub fn policy_evaluation<A: Adp + ?Sized>(
    adp: &A,
    policy: &Policy,
    ctrl: &IterationControl,
    exact_affine: bool,
    initial: Option<&ValueVector>,
) -> Result<ValueVector> {
    adp.space().check_policy(policy)?;
    if exact_affine {
        if let Some(affine) = adp.affine_form(policy) {
            let v = solve_affine_fixed_point(&affine.offset, &affine.matrix)?;
            return ValueVector::new(v);
        }
    }
    let v0 = match initial {
        Some(v) => {
            check_len(adp, v)?;
            v.clone()
        }
        None => adp.default_initial_value(),
    };
    let inner = IterationControl {
        record_trace: false,
        keep_iterates: 0,
        ..*ctrl
    };
    let fp = successive_approximation(|v| adp.apply_policy(policy, v), v0, &inner).map_err(
        |e| match e {
            AdpError::Divergence { iterations, .. } => AdpError::Divergence {
                iterations,
                policy: Some(policy.actions().to_vec()),
            },
            other => other,
        },
    )?;
    if !fp.converged {
        return Err(AdpError::Convergence(format!(
            "policy evaluation of {:?} stopped at distance {} after {} iterations",
            policy.actions(),
            fp.last_distance,
            fp.iterations
        )));
    }
    Ok(fp.value)
}

/// Howard policy iteration: alternate greedy selection and policy evaluation.
///
/// Stops when the greedy policy repeats or successive values are within `tol`.
/// Affine models are evaluated exactly; others by warm-started iteration.
pub fn howard_policy_iteration<A: Adp + ?Sized>(
    adp: &A,
    v0: ValueVector,
    ctrl: &IterationControl,
) -> Result<SolveResult> {
    ctrl.validate()?;
    check_len(adp, &v0)?;
    let start = Instant::now();
    let mut v = v0;
    let mut previous: Option<Policy> = None;
    let mut trace = ctrl.record_trace.then(Vec::new);
    let mut iterates = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < ctrl.max_iter {
        let (tv, policy) = adp.bellman_with_greedy(&v)?;
        if previous.as_ref() == Some(&policy) {
            // v is already v_σ for this σ; the remaining gap is the Bellman residual.
            let residual = tv.sup_distance(&v);
            if residual <= ctrl.tol {
                if let Some(t) = trace.as_mut() {
                    t.push(residual);
                }
                converged = true;
                break;
            }
        }
        let next = policy_evaluation(adp, &policy, ctrl, true, Some(&v))?;
        iterations += 1;
        let d = next.sup_distance(&v);
        if let Some(t) = trace.as_mut() {
            t.push(d);
        }
        if iterates.len() < ctrl.keep_iterates {
            iterates.push(next.clone());
        }
        v = next;
        previous = Some(policy);
        if d <= ctrl.tol {
            converged = true;
            break;
        }
    }

    let policy = adp.greedy(&v)?;
    Ok(SolveResult {
        value: v,
        policy,
        iterations,
        trace,
        converged,
        elapsed_seconds: start.elapsed().as_secs_f64(),
        iterates,
    })
}

/// Optimistic policy iteration: `v_{k+1} = T_{σ_k}^m v_k` with `σ_k` greedy for `v_k`.
///
/// `m = 1` follows exactly the arithmetic of value function iteration.
pub fn optimistic_policy_iteration<A: Adp + ?Sized>(
    adp: &A,
    v0: ValueVector,
    m: usize,
    ctrl: &IterationControl,
) -> Result<SolveResult> {
    if m == 0 {
        return Err(AdpError::invalid("m", "must be at least 1"));
    }
    check_len(adp, &v0)?;
    let start = Instant::now();
    let step = |v: &ValueVector| -> Result<ValueVector> {
        let (mut w, policy) = adp.bellman_with_greedy(v)?;
        for _ in 1..m {
            w = adp.apply_policy(&policy, &w)?;
        }
        Ok(w)
    };
    let fp = successive_approximation(step, v0, ctrl)?;
    let mut result = SolveResult::from_fixed_point(adp, fp)?;
    result.elapsed_seconds = start.elapsed().as_secs_f64();
    Ok(result)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Vfi,
    Hpi,
    Opi,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Vfi => "vfi",
            Algorithm::Hpi => "hpi",
            Algorithm::Opi => "opi",
        })
    }
}

impl std::str::FromStr for Algorithm {
    type Err = AdpError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vfi" => Ok(Algorithm::Vfi),
            "hpi" => Ok(Algorithm::Hpi),
            "opi" => Ok(Algorithm::Opi),
            other => Err(AdpError::invalid("algorithm", format!("unknown algorithm `{other}`"))),
        }
    }
}

/// Dispatches to the named algorithm; `m` is used by OPI only.
pub fn solve<A: Adp + ?Sized>(
    adp: &A,
    algorithm: Algorithm,
    v0: ValueVector,
    m: usize,
    ctrl: &IterationControl,
) -> Result<SolveResult> {
    match algorithm {
        Algorithm::Vfi => value_function_iteration(adp, v0, ctrl),
        Algorithm::Hpi => howard_policy_iteration(adp, v0, ctrl),
        Algorithm::Opi => optimistic_policy_iteration(adp, v0, m, ctrl),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub algorithm: Algorithm,
    pub m: usize,
    pub seconds: f64,
    pub iterations: usize,
    pub converged: bool,
}

const TIMING_REPETITIONS: usize = 3;

fn best_of<A: Adp + ?Sized>(
    adp: &A,
    algorithm: Algorithm,
    v0: &ValueVector,
    m: usize,
    ctrl: &IterationControl,
) -> Result<(f64, SolveResult)> {
    let mut best: Option<(f64, SolveResult)> = None;
    for _ in 0..TIMING_REPETITIONS {
        let start = Instant::now();
        let result = solve(adp, algorithm, v0.clone(), m, ctrl)?;
        let secs = start.elapsed().as_secs_f64();
        if best.as_ref().map_or(true, |(b, _)| secs < *b) {
            best = Some((secs, result));
        }
    }
    Ok(best.expect("at least one repetition"))
}

/// Times VFI, HPI and OPI(m) from a shared start, best of three runs each.
///
/// VFI and HPI do not depend on `m`; their single timing is repeated on every row.
pub fn run_timing_comparison<A: Adp + ?Sized>(
    adp: &A,
    v0: &ValueVector,
    m_values: &[usize],
    ctrl: &IterationControl,
) -> Result<Vec<TimingRow>> {
    if m_values.is_empty() {
        return Err(AdpError::invalid("m_values", "must not be empty"));
    }
    let quiet = IterationControl {
        record_trace: false,
        keep_iterates: 0,
        ..*ctrl
    };
    let (vfi_secs, vfi) = best_of(adp, Algorithm::Vfi, v0, 1, &quiet)?;
    let (hpi_secs, hpi) = best_of(adp, Algorithm::Hpi, v0, 1, &quiet)?;
    let mut rows = Vec::with_capacity(3 * m_values.len());
    for &m in m_values {
        let (opi_secs, opi) = best_of(adp, Algorithm::Opi, v0, m, &quiet)?;
        rows.push(TimingRow {
            algorithm: Algorithm::Vfi,
            m,
            seconds: vfi_secs,
            iterations: vfi.iterations,
            converged: vfi.converged,
        });
        rows.push(TimingRow {
            algorithm: Algorithm::Hpi,
            m,
            seconds: hpi_secs,
            iterations: hpi.iterations,
            converged: hpi.converged,
        });
        rows.push(TimingRow {
            algorithm: Algorithm::Opi,
            m,
            seconds: opi_secs,
            iterations: opi.iterations,
            converged: opi.converged,
        });
    }
    Ok(rows)
}

/// `‖v_k - v*‖∞` for each kept iterate.
pub fn distances_to(iterates: &[ValueVector], target: &ValueVector) -> Vec<f64> {
    iterates.iter().map(|v| v.sup_distance(target)).collect()
}

/// CSV with header `iteration,sup_distance`, iterations numbered from 1.
pub fn write_trace_csv(path: impl AsRef<Path>, trace: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["iteration", "sup_distance"])?;
    for (k, d) in trace.iter().enumerate() {
        w.write_record([(k + 1).to_string(), d.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// CSV with header `algorithm,m,seconds,iterations`.
pub fn write_timings_csv(path: impl AsRef<Path>, rows: &[TimingRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["algorithm", "m", "seconds", "iterations"])?;
    for row in rows {
        w.write_record([
            row.algorithm.to_string(),
            row.m.to_string(),
            row.seconds.to_string(),
            row.iterations.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn check_len<A: Adp + ?Sized>(adp: &A, v: &ValueVector) -> Result<()> {
    if v.len() != adp.value_len() {
        return Err(AdpError::LengthMismatch {
            expected: adp.value_len(),
            actual: v.len(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adp::StateActionSpace;
    use crate::mdp::FiniteMdp;

    fn scalar(x: f64) -> ValueVector {
        ValueVector::new(vec![x]).unwrap()
    }

    fn one_state_mdp() -> FiniteMdp {
        let space = StateActionSpace::full(1, 2).unwrap();
        FiniteMdp::new(space, 0.5, vec![1.0, 2.0], vec![vec![1.0], vec![1.0]]).unwrap()
    }

    #[test]
    fn geometric_series() {
        let ctrl = IterationControl::new(1e-10, 1000).unwrap();
        let fp = successive_approximation(|v| Ok(scalar(1.0 + 0.5 * v[0])), scalar(0.0), &ctrl)
            .unwrap();
        assert!(fp.converged);
        assert!((fp.value[0] - 2.0).abs() < 1e-9);
        assert!(*fp.trace.unwrap().last().unwrap() <= 1e-10);
    }

    #[test]
    fn identity_converges_immediately() {
        let ctrl = IterationControl::default();
        let v0 = ValueVector::new(vec![3.0, -1.5]).unwrap();
        let fp = successive_approximation(|v| Ok(v.clone()), v0.clone(), &ctrl).unwrap();
        assert_eq!(fp.iterations, 1);
        assert_eq!(fp.value, v0);
    }

    #[test]
    fn max_iter_is_not_an_error() {
        let ctrl = IterationControl::new(1e-12, 3).unwrap();
        let fp = successive_approximation(|v| Ok(scalar(1.0 + 0.5 * v[0])), scalar(0.0), &ctrl)
            .unwrap();
        assert!(!fp.converged);
        assert_eq!(fp.iterations, 3);
    }

    #[test]
    fn expanding_map_reports_divergence() {
        let ctrl = IterationControl::default();
        let err = successive_approximation(|v| Ok(scalar(1.0 + 1.5 * v[0])), scalar(0.0), &ctrl)
            .unwrap_err();
        assert!(matches!(err, AdpError::Divergence { iterations, .. } if iterations == DIVERGENCE_WINDOW + 1));
    }

    #[test]
    fn invalid_control_rejected() {
        assert!(IterationControl::new(0.0, 10).is_err());
        assert!(IterationControl::new(1e-8, 0).is_err());
    }

    #[test]
    fn vfi_one_state() {
        let mdp = one_state_mdp();
        let r = value_function_iteration(&mdp, ValueVector::zeros(1), &IterationControl::default())
            .unwrap();
        assert!(r.converged);
        assert!((r.value[0] - 4.0).abs() < 1e-7);
        assert_eq!(r.policy, Policy::new(vec![1]));
    }

    #[test]
    fn policy_evaluation_geometric() {
        let mdp = one_state_mdp();
        let ctrl = IterationControl::new(1e-12, 10_000).unwrap();
        let exact = policy_evaluation(&mdp, &Policy::new(vec![0]), &ctrl, true, None).unwrap();
        assert!((exact[0] - 2.0).abs() < 1e-14);
        let iterated = policy_evaluation(&mdp, &Policy::new(vec![0]), &ctrl, false, None).unwrap();
        assert!((iterated[0] - 2.0).abs() < 1e-11);
    }

    #[test]
    fn hpi_one_state() {
        let mdp = one_state_mdp();
        let r = howard_policy_iteration(&mdp, ValueVector::zeros(1), &IterationControl::default())
            .unwrap();
        assert!(r.converged);
        assert!(r.iterations <= 2);
        assert!((r.value[0] - 4.0).abs() < 1e-12);
        assert_eq!(r.policy, Policy::new(vec![1]));
    }

    #[test]
    fn hpi_from_fixed_point_needs_one_evaluation() {
        let mdp = one_state_mdp();
        let r = howard_policy_iteration(&mdp, scalar(4.0), &IterationControl::default()).unwrap();
        assert_eq!(r.iterations, 1);
        assert_eq!(r.policy, Policy::new(vec![1]));
    }

    #[test]
    fn opi_large_m() {
        let mdp = one_state_mdp();
        let ctrl = IterationControl::new(1e-6, 100).unwrap();
        let r = optimistic_policy_iteration(&mdp, ValueVector::zeros(1), 1000, &ctrl).unwrap();
        assert!((r.value[0] - 4.0).abs() < 1e-6);
        assert!(r.iterations <= 2);
    }

    #[test]
    fn opi_m1_matches_vfi_trace() {
        let space = StateActionSpace::full(3, 2).unwrap();
        let mdp = FiniteMdp::new(
            space,
            0.9,
            vec![1.0, 0.5, 0.2, 0.9, 0.0, 1.3],
            vec![
                vec![0.2, 0.3, 0.5],
                vec![1.0, 0.0, 0.0],
                vec![0.1, 0.1, 0.8],
                vec![0.0, 0.5, 0.5],
                vec![0.3, 0.3, 0.4],
                vec![0.9, 0.0, 0.1],
            ],
        )
        .unwrap();
        let ctrl = IterationControl::default();
        let vfi = value_function_iteration(&mdp, ValueVector::zeros(3), &ctrl).unwrap();
        let opi = optimistic_policy_iteration(&mdp, ValueVector::zeros(3), 1, &ctrl).unwrap();
        assert_eq!(vfi.trace, opi.trace);
        assert_eq!(vfi.value, opi.value);
    }

    #[test]
    fn zero_reward_single_iteration() {
        let space = StateActionSpace::full(2, 2).unwrap();
        let mdp = FiniteMdp::new(space, 0.9, vec![0.0; 4], vec![vec![0.5, 0.5]; 4]).unwrap();
        let r = value_function_iteration(&mdp, ValueVector::zeros(2), &IterationControl::default())
            .unwrap();
        assert_eq!(r.iterations, 1);
        assert_eq!(r.value.as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn timing_rows_repeat_vfi_and_hpi() {
        let mdp = one_state_mdp();
        let rows = run_timing_comparison(
            &mdp,
            &ValueVector::zeros(1),
            &[1, 5, 20],
            &IterationControl::default(),
        )
        .unwrap();
        assert_eq!(rows.len(), 9);
        let vfi: Vec<_> = rows.iter().filter(|r| r.algorithm == Algorithm::Vfi).collect();
        let hpi: Vec<_> = rows.iter().filter(|r| r.algorithm == Algorithm::Hpi).collect();
        assert!(vfi.windows(2).all(|w| w[0].iterations == w[1].iterations && w[0].seconds == w[1].seconds));
        assert!(hpi.windows(2).all(|w| w[0].iterations == w[1].iterations));
        assert!(rows.iter().all(|r| r.converged));
        assert!(run_timing_comparison(&mdp, &ValueVector::zeros(1), &[], &IterationControl::default()).is_err());
    }

    #[test]
    fn trace_csv_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        write_trace_csv(&path, &[0.5, 0.25]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "iteration,sup_distance\n1,0.5\n2,0.25\n");
    }
}
