//! Valuation of a firm whose flow profit depends on its data stock.
//!
//! `v = π + K v` on the grid `B × S`, where
//! `(K f)(b, s) = Σ_{b'} Σ_{s'} b' f(b', s') Q(b, b') P(s, s')`.
//! Values are stored flat with index `b_idx * n_s + s_idx`.

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::adp::ValueVector;
use crate::algorithms::{solve_affine_fixed_point, successive_approximation, IterationControl};
use crate::error::{AdpError, Result};
use crate::markov::StochasticMatrix;

/// Largest system solved by dense LU under [`SolveMethod::Auto`].
pub const DIRECT_SOLVE_LIMIT: usize = 4096;

/// Cobb-Douglas technology `a(s) k^{α1} ℓ^{α2}` with factor prices `r` and `w`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfitTechnology {
    pub a_of_s: Vec<f64>,
    pub alpha1: f64,
    pub alpha2: f64,
    pub w: f64,
    pub r_rental: f64,
}

impl ProfitTechnology {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha1 > 0.0 && self.alpha2 > 0.0 && self.alpha1 + self.alpha2 < 1.0) {
            return Err(AdpError::invalid(
                "elasticities",
                format!("need α1, α2 > 0 and α1 + α2 < 1, got ({}, {})", self.alpha1, self.alpha2),
            ));
        }
        if !(self.w > 0.0 && self.r_rental > 0.0) || !self.w.is_finite() || !self.r_rental.is_finite() {
            return Err(AdpError::invalid("prices", "factor prices must be positive and finite"));
        }
        Ok(())
    }

    /// Maximised profit at every data-stock grid point.
    pub fn profits(&self) -> Result<Vec<f64>> {
        (0..self.a_of_s.len()).map(|s| static_profit(self, s)).collect()
    }
}

/// `max_{k, ℓ} a(s) k^{α1} ℓ^{α2} - w ℓ - r k`
/// `= (1 - α1 - α2) [a(s) (α1/r)^{α1} (α2/w)^{α2}]^{1/(1 - α1 - α2)}`.
pub fn static_profit(tech: &ProfitTechnology, s: usize) -> Result<f64> {
    tech.validate()?;
    let a = *tech.a_of_s.get(s).ok_or_else(|| {
        AdpError::invalid("s", format!("index {s} out of range for {} grid points", tech.a_of_s.len()))
    })?;
    if !(a > 0.0) || !a.is_finite() {
        return Err(AdpError::NumericalDomain {
            state: s,
            action: None,
            value: a,
        });
    }
    let (a1, a2) = (tech.alpha1, tech.alpha2);
    let scale = 1.0 - a1 - a2;
    Ok(scale * (a * (a1 / tech.r_rental).powf(a1) * (a2 / tech.w).powf(a2)).powf(1.0 / scale))
}

#[derive(Debug, Clone)]
pub struct DataValuationModel {
    b_grid: Vec<f64>,
    s_grid: Vec<f64>,
    q: StochasticMatrix,
    p: StochasticMatrix,
    profit: Vec<f64>,
    alpha_drift: f64,
    lambda_drift: f64,
}

impl DataValuationModel {
    /// `q` drives the discount factor on `b_grid`, `p` the data stock on
    /// `s_grid`, and `Σ_{s'} P(s, s') π(s') ≤ α π(s) + λ` must hold at every `s`.
    pub fn new(
        b_grid: Vec<f64>,
        s_grid: Vec<f64>,
        q: StochasticMatrix,
        p: StochasticMatrix,
        profit: Vec<f64>,
        alpha_drift: f64,
        lambda_drift: f64,
    ) -> Result<Self> {
        if b_grid.is_empty() || s_grid.is_empty() {
            return Err(AdpError::invalid("grid", "grids must be nonempty"));
        }
        if let Some(b) = b_grid.iter().find(|b| !(**b > 0.0) || !b.is_finite()) {
            return Err(AdpError::invalid("b_grid", format!("{b} is not a positive discount factor")));
        }
        if let Some(s) = s_grid.iter().find(|s| !s.is_finite()) {
            return Err(AdpError::invalid("s_grid", format!("non-finite point {s}")));
        }
        for (name, m, n) in [("q", &q, b_grid.len()), ("p", &p, s_grid.len())] {
            if m.n() != n {
                return Err(AdpError::invalid(name, format!("{}×{} kernel for a grid of {n} points", m.n(), m.n())));
            }
        }
        if profit.len() != s_grid.len() {
            return Err(AdpError::LengthMismatch {
                expected: s_grid.len(),
                actual: profit.len(),
            });
        }
        if let Some(pi) = profit.iter().find(|p| !(**p > 0.0) || !p.is_finite()) {
            return Err(AdpError::invalid("profit", format!("{pi} is not a positive profit")));
        }
        if !(alpha_drift > 0.0) || !alpha_drift.is_finite() {
            return Err(AdpError::invalid("alpha_drift", format!("{alpha_drift} must be positive")));
        }
        if !(lambda_drift >= 0.0) || !lambda_drift.is_finite() {
            return Err(AdpError::invalid("lambda_drift", format!("{lambda_drift} must be nonnegative")));
        }
        let expected = p.apply(&profit);
        for (s, (&ep, &pi)) in expected.iter().zip(&profit).enumerate() {
            let rhs = alpha_drift * pi + lambda_drift;
            if ep > rhs + 1e-12 * (1.0 + rhs) {
                return Err(AdpError::invalid(
                    "alpha_drift",
                    format!("profit drift fails at s = {s}: E π(S') = {ep} > α π + λ = {rhs}"),
                ));
            }
        }
        Ok(Self {
            b_grid,
            s_grid,
            q,
            p,
            profit,
            alpha_drift,
            lambda_drift,
        })
    }

    pub fn n_b(&self) -> usize {
        self.b_grid.len()
    }

    pub fn n_s(&self) -> usize {
        self.s_grid.len()
    }

    pub fn len(&self) -> usize {
        self.n_b() * self.n_s()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn b_grid(&self) -> &[f64] {
        &self.b_grid
    }

    pub fn s_grid(&self) -> &[f64] {
        &self.s_grid
    }

    pub fn q(&self) -> &StochasticMatrix {
        &self.q
    }

    pub fn p(&self) -> &StochasticMatrix {
        &self.p
    }

    pub fn profit(&self) -> &[f64] {
        &self.profit
    }

    /// `(α, λ)` of the profit drift inequality.
    pub fn drift_constants(&self) -> (f64, f64) {
        (self.alpha_drift, self.lambda_drift)
    }

    /// `(b1, b2)`: the smallest and largest discount factors on the grid.
    pub fn discount_range(&self) -> (f64, f64) {
        let lo = self.b_grid.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.b_grid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    /// `π0 = min_s π(s)`.
    pub fn min_profit(&self) -> f64 {
        self.profit.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `π` on the flattened grid.
    pub fn flat_profit(&self) -> Vec<f64> {
        (0..self.n_b()).flat_map(|_| self.profit.iter().copied()).collect()
    }

    /// `K` as a dense matrix on the flattened grid.
    pub fn k_matrix(&self) -> DMatrix<f64> {
        let (nb, ns) = (self.n_b(), self.n_s());
        let mut k = DMatrix::zeros(nb * ns, nb * ns);
        for b in 0..nb {
            for s in 0..ns {
                for b2 in 0..nb {
                    let wq = self.b_grid[b2] * self.q.get(b, b2);
                    if wq == 0.0 {
                        continue;
                    }
                    for s2 in 0..ns {
                        k[(b * ns + s, b2 * ns + s2)] = wq * self.p.get(s, s2);
                    }
                }
            }
        }
        k
    }
}

/// `K v`, computed as the `s`-expectation followed by the discounted `b`-expectation.
pub fn apply_k(model: &DataValuationModel, v: &[f64]) -> Result<Vec<f64>> {
    let (nb, ns) = (model.n_b(), model.n_s());
    if v.len() != nb * ns {
        return Err(AdpError::LengthMismatch {
            expected: nb * ns,
            actual: v.len(),
        });
    }
    // inner[b' * ns + s] = Σ_{s'} P(s, s') v(b', s')
    let inner: Vec<f64> = (0..nb)
        .flat_map(|b2| model.p.apply(&v[b2 * ns..(b2 + 1) * ns]))
        .collect();
    let mut out = vec![0.0; nb * ns];
    for b in 0..nb {
        for b2 in 0..nb {
            let w = model.q.get(b, b2) * model.b_grid[b2];
            if w == 0.0 {
                continue;
            }
            for s in 0..ns {
                out[b * ns + s] += w * inner[b2 * ns + s];
            }
        }
    }
    Ok(out)
}

/// The dominating element `e(b, s) = (b2 / b) π(s)` and the bound `ρ` with `K e ≤ ρ e`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DriftCertificate {
    pub rho: f64,
    pub e: Vec<f64>,
    /// `max (K e - ρ e)` over the grid.
    pub max_excess: f64,
    /// `K e ≤ ρ e` pointwise within `1e-12`.
    pub inequality_holds: bool,
    /// `ρ < 1` and the inequality holds.
    pub pass: bool,
}

pub fn check_drift(model: &DataValuationModel) -> Result<DriftCertificate> {
    let (_, b2) = model.discount_range();
    let (alpha, lambda) = model.drift_constants();
    let rho = b2 * (alpha + lambda / model.min_profit());
    let ns = model.n_s();
    let e: Vec<f64> = (0..model.len())
        .map(|i| b2 / model.b_grid[i / ns] * model.profit[i % ns])
        .collect();
    let ke = apply_k(model, &e)?;
    let max_excess = ke
        .iter()
        .zip(&e)
        .map(|(k, e)| k - rho * e)
        .fold(f64::NEG_INFINITY, f64::max);
    let inequality_holds = max_excess <= 1e-12;
    Ok(DriftCertificate {
        rho,
        e,
        max_excess,
        inequality_holds,
        pass: inequality_holds && rho < 1.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolveMethod {
    Direct,
    Iterate,
    /// Direct up to [`DIRECT_SOLVE_LIMIT`] unknowns, iteration above.
    Auto,
}

#[derive(Debug, Clone)]
pub struct DataValuationSolution {
    pub value: ValueVector,
    pub method: SolveMethod,
    /// Zero for the direct solve.
    pub iterations: usize,
    /// `‖v - π - K v‖∞`.
    pub residual: f64,
    /// Largest decrease of any entry between successive iterates (zero when monotone).
    pub max_decrease: f64,
    pub drift: DriftCertificate,
}

/// Solves `v = π + K v` after certifying the drift condition.
pub fn solve_data_valuation(
    model: &DataValuationModel,
    method: SolveMethod,
    ctrl: &IterationControl,
) -> Result<DataValuationSolution> {
    ctrl.validate()?;
    let drift = check_drift(model)?;
    if !drift.pass {
        return Err(AdpError::Stability(format!(
            "drift certificate fails: ρ = {}, max(Ke - ρe) = {:e}",
            drift.rho, drift.max_excess
        )));
    }
    let method = match method {
        SolveMethod::Auto if model.len() <= DIRECT_SOLVE_LIMIT => SolveMethod::Direct,
        SolveMethod::Auto => SolveMethod::Iterate,
        m => m,
    };
    let pi = model.flat_profit();
    let (value, iterations, max_decrease) = match method {
        SolveMethod::Direct => {
            let v = solve_affine_fixed_point(&pi, &model.k_matrix())?;
            (ValueVector::new(v)?, 0, 0.0)
        }
        _ => {
            let mut max_decrease: f64 = 0.0;
            let step = |v: &ValueVector| {
                let kv = apply_k(model, v)?;
                let next: Vec<f64> = pi.iter().zip(&kv).map(|(p, k)| p + k).collect();
                for (a, b) in v.iter().zip(&next) {
                    max_decrease = max_decrease.max(a - b);
                }
                ValueVector::new(next)
            };
            let quiet = IterationControl {
                record_trace: false,
                keep_iterates: 0,
                ..*ctrl
            };
            let fp = successive_approximation(step, ValueVector::zeros(model.len()), &quiet)?;
            if !fp.converged {
                return Err(AdpError::Convergence(format!(
                    "data valuation: distance {} after {} iterations",
                    fp.last_distance, fp.iterations
                )));
            }
            (fp.value, fp.iterations, max_decrease)
        }
    };
    let kv = apply_k(model, &value)?;
    let residual = value
        .iter()
        .zip(pi.iter().zip(&kv))
        .map(|(v, (p, k))| (v - p - k).abs())
        .fold(0.0, f64::max);
    Ok(DataValuationSolution {
        value,
        method,
        iterations,
        residual,
        max_decrease,
        drift,
    })
}

/// CSV with header `b,s,v_star`, one row per grid point.
pub fn write_solution_csv(path: impl AsRef<Path>, model: &DataValuationModel, v: &[f64]) -> Result<()> {
    if v.len() != model.len() {
        return Err(AdpError::LengthMismatch {
            expected: model.len(),
            actual: v.len(),
        });
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["b", "s", "v_star"])?;
    let ns = model.n_s();
    for (i, value) in v.iter().enumerate() {
        w.write_record([
            model.b_grid[i / ns].to_string(),
            model.s_grid[i % ns].to_string(),
            value.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ProfitSpec {
    Values(Vec<f64>),
    CobbDouglas(ProfitTechnology),
}

/// JSON fixture format for a data-valuation problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataValuationSpec {
    pub b_grid: Vec<f64>,
    pub s_grid: Vec<f64>,
    pub q: Vec<Vec<f64>>,
    pub p: Vec<Vec<f64>>,
    pub profit: ProfitSpec,
    pub alpha_drift: f64,
    pub lambda_drift: f64,
}

impl DataValuationSpec {
    pub fn build(&self) -> Result<DataValuationModel> {
        let profit = match &self.profit {
            ProfitSpec::Values(v) => v.clone(),
            ProfitSpec::CobbDouglas(tech) => tech.profits()?,
        };
        DataValuationModel::new(
            self.b_grid.clone(),
            self.s_grid.clone(),
            StochasticMatrix::new(self.q.clone())?,
            StochasticMatrix::new(self.p.clone())?,
            profit,
            self.alpha_drift,
            self.lambda_drift,
        )
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}
