//! Finite Markov chains: Tauchen discretization, stationary distributions and
//! the drift conditions used to certify state-dependent discounting.

use std::f64::consts::SQRT_2;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{AdpError, Result};

const ROW_SUM_TOL: f64 = 1e-12;

/// A row-stochastic matrix, optionally attached to a grid of state values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StochasticMatrix {
    n: usize,
    p: Vec<f64>,
    grid: Option<Vec<f64>>,
}

impl StochasticMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(AdpError::invalid("P", "matrix is empty"));
        }
        let mut p = Vec::with_capacity(n * n);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != n {
                return Err(AdpError::invalid(
                    "P",
                    format!("row {i} has {} entries, expected {n}", row.len()),
                ));
            }
            p.extend(row);
        }
        Self::from_flat(n, p)
    }

    pub fn from_flat(n: usize, p: Vec<f64>) -> Result<Self> {
        if p.len() != n * n {
            return Err(AdpError::LengthMismatch {
                expected: n * n,
                actual: p.len(),
            });
        }
        for i in 0..n {
            let row = &p[i * n..(i + 1) * n];
            if let Some(j) = row.iter().position(|&x| !(x >= 0.0) || !x.is_finite()) {
                return Err(AdpError::invalid(
                    "P",
                    format!("entry ({i}, {j}) = {} is not a probability", row[j]),
                ));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(AdpError::invalid("P", format!("row {i} sums to {sum}")));
            }
        }
        Ok(Self { n, p, grid: None })
    }

    pub fn identity(n: usize) -> Self {
        let mut p = vec![0.0; n * n];
        for i in 0..n {
            p[i * n + i] = 1.0;
        }
        Self { n, p, grid: None }
    }

    pub fn with_grid(mut self, grid: Vec<f64>) -> Result<Self> {
        if grid.len() != self.n {
            return Err(AdpError::LengthMismatch {
                expected: self.n,
                actual: grid.len(),
            });
        }
        self.grid = Some(grid);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn grid(&self) -> Option<&[f64]> {
        self.grid.as_deref()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.p[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.p[i * self.n..(i + 1) * self.n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.p.chunks(self.n)
    }

    /// `(P f)(i) = Σ_j P(i, j) f(j)`.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        self.rows()
            .map(|row| row.iter().zip(f).map(|(p, x)| p * x).sum())
            .collect()
    }

    /// `(μ P)(j) = Σ_i μ(i) P(i, j)`.
    pub fn left_apply(&self, mu: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (row, &m) in self.rows().zip(mu) {
            if m == 0.0 {
                continue;
            }
            for (o, &p) in out.iter_mut().zip(row) {
                *o += m * p;
            }
        }
        out
    }

    /// Writes one row per state with header `to_0,...,to_{n-1}`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record((0..self.n).map(|j| format!("to_{j}")))?;
        for row in self.rows() {
            w.write_record(row.iter().map(|x| x.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let mut rows = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let row = rec
                .iter()
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|e| AdpError::invalid("P", format!("`{s}`: {e}")))
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Self::new(rows)
    }

    /// Writes the grid as a single-column CSV with header `x`.
    pub fn write_grid_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let grid = self
            .grid
            .as_ref()
            .ok_or_else(|| AdpError::invalid("grid", "matrix has no grid attached"))?;
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["x"])?;
        for x in grid {
            w.write_record([x.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_grid_csv(path: impl AsRef<Path>) -> Result<Vec<f64>> {
        let mut r = csv::Reader::from_path(path)?;
        r.records()
            .map(|rec| {
                let rec = rec?;
                let s = rec.get(0).unwrap_or("");
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| AdpError::invalid("grid", format!("`{s}`: {e}")))
            })
            .collect()
    }
}

/// `X' = mu + rho X + alpha ε`, with `ε` standard normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ar1Spec {
    pub rho: f64,
    pub alpha: f64,
    pub mu: f64,
    pub n: usize,
    pub m_std: f64,
}

impl Ar1Spec {
    /// Grid half-width defaults to three unconditional standard deviations.
    pub fn new(rho: f64, alpha: f64, mu: f64, n: usize) -> Self {
        Self {
            rho,
            alpha,
            mu,
            n,
            m_std: 3.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho.abs() < 1.0) {
            return Err(AdpError::invalid("rho", format!("|{}| must be < 1", self.rho)));
        }
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(AdpError::invalid("alpha", format!("{} must be > 0", self.alpha)));
        }
        if !self.mu.is_finite() {
            return Err(AdpError::invalid("mu", "must be finite"));
        }
        if self.n < 3 {
            return Err(AdpError::invalid("n", format!("{} must be at least 3", self.n)));
        }
        if !(self.m_std > 0.0) || !self.m_std.is_finite() {
            return Err(AdpError::invalid("m_std", format!("{} must be > 0", self.m_std)));
        }
        Ok(())
    }

    pub fn unconditional_mean(&self) -> f64 {
        self.mu / (1.0 - self.rho)
    }

    pub fn unconditional_std(&self) -> f64 {
        self.alpha / (1.0 - self.rho * self.rho).sqrt()
    }
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

fn normal_sf(z: f64) -> f64 {
    0.5 * erfc(z / SQRT_2)
}

/// `P(a < Z ≤ b)`, evaluated on whichever tail keeps the difference accurate.
fn normal_mass(a: f64, b: f64) -> f64 {
    if a >= 0.0 {
        normal_sf(a) - normal_sf(b)
    } else {
        normal_cdf(b) - normal_cdf(a)
    }
}

/// Tauchen discretization of an AR(1) process on an evenly spaced grid.
pub fn tauchen(spec: &Ar1Spec) -> Result<StochasticMatrix> {
    spec.validate()?;
    let n = spec.n;
    let center = spec.unconditional_mean();
    let half_width = spec.m_std * spec.unconditional_std();
    let grid: Vec<f64> = (0..n)
        .map(|j| center + half_width * (2.0 * j as f64 / (n - 1) as f64 - 1.0))
        .collect();
    let step = 2.0 * half_width / (n - 1) as f64;
    let half = step / 2.0;

    let mut p = Vec::with_capacity(n * n);
    for &x in &grid {
        let mean = spec.mu + spec.rho * x;
        let z = |t: f64| (t - mean) / spec.alpha;
        let start = p.len();
        for (j, &xj) in grid.iter().enumerate() {
            let mass = if j == 0 {
                normal_cdf(z(xj + half))
            } else if j == n - 1 {
                normal_sf(z(xj - half))
            } else {
                normal_mass(z(xj - half), z(xj + half))
            };
            p.push(mass.max(0.0));
        }
        let row = &mut p[start..];
        let sum: f64 = row.iter().sum();
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    StochasticMatrix::from_flat(n, p)?.with_grid(grid)
}

/// Stationary distribution by power iteration from the uniform vector.
///
/// Iterates the lazy chain `(I + P) / 2`, which has the same stationary
/// distributions as `P` but no periodicity, and stops once `‖πP − π‖∞ ≤ tol`.
/// Chains that mix too slowly for that fall back to solving `π (I − P) = 0`,
/// `Σ π = 1` directly; the result is accepted only if it meets `tol`.
pub fn stationary_distribution(p: &StochasticMatrix, tol: f64) -> Result<Vec<f64>> {
    const MAX_SWEEPS: usize = 100_000;
    if !(tol > 0.0) {
        return Err(AdpError::invalid("tol", "must be positive"));
    }
    let n = p.n();
    let mut pi = vec![1.0 / n as f64; n];
    for _ in 0..MAX_SWEEPS {
        let moved = p.left_apply(&pi);
        let residual = moved
            .iter()
            .zip(&pi)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if residual <= tol {
            return Ok(pi);
        }
        for (x, m) in pi.iter_mut().zip(&moved) {
            *x = 0.5 * (*x + m);
        }
        let total: f64 = pi.iter().sum();
        for x in pi.iter_mut() {
            *x /= total;
        }
    }
    if let Some(pi) = stationary_by_solve(p).filter(|pi| stationary_residual(p, pi) <= tol) {
        return Ok(pi);
    }
    Err(AdpError::Convergence(format!(
        "stationary distribution: ‖πP − π‖ still above {tol:e} after {MAX_SWEEPS} sweeps and a direct solve"
    )))
}

fn stationary_residual(p: &StochasticMatrix, pi: &[f64]) -> f64 {
    p.left_apply(pi)
        .iter()
        .zip(pi)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

/// `(I − P)ᵀ π = 0` with the last equation replaced by `Σ π = 1`.
fn stationary_by_solve(p: &StochasticMatrix) -> Option<Vec<f64>> {
    let n = p.n();
    let a = DMatrix::from_fn(n, n, |i, j| {
        if i == n - 1 {
            1.0
        } else {
            f64::from(u8::from(i == j)) - p.get(j, i)
        }
    });
    let mut rhs = DVector::zeros(n);
    rhs[n - 1] = 1.0;
    let x = a.lu().solve(&rhs)?;
    if x.iter().any(|v| !v.is_finite() || *v < -1e-12) {
        return None;
    }
    let mut pi: Vec<f64> = x.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|v| *v /= total);
    Some(pi)
}

/// When the discount factor of a period is read off the chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiscountTiming {
    /// `E_z Π_{t=0}^{k-1} δ(Z_t)`: discount set by the current state.
    Current,
    /// `E_z Π_{t=1}^{k} δ(Z_t)`: discount set by the next state.
    Next,
}

/// Per-horizon suprema of expected discount products.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    /// Smallest horizon `k ≥ 1` with `values[k] < 1`.
    pub n_star: Option<usize>,
    /// `values[k] = sup_z E_z Π δ` over `k` periods; `values[0] = 1`.
    pub values: Vec<f64>,
}

fn drift_step(p: &StochasticMatrix, delta: &[f64], f: &[f64], timing: DiscountTiming) -> Vec<f64> {
    match timing {
        DiscountTiming::Current => p
            .apply(f)
            .into_iter()
            .zip(delta)
            .map(|(pf, d)| d * pf)
            .collect(),
        DiscountTiming::Next => {
            let weighted: Vec<f64> = f.iter().zip(delta).map(|(x, d)| x * d).collect();
            p.apply(&weighted)
        }
    }
}

fn check_delta(p: &StochasticMatrix, delta: &[f64]) -> Result<()> {
    if delta.len() != p.n() {
        return Err(AdpError::LengthMismatch {
            expected: p.n(),
            actual: delta.len(),
        });
    }
    if let Some(d) = delta.iter().find(|d| !(**d >= 0.0) || !d.is_finite()) {
        return Err(AdpError::invalid("delta", format!("{d} is not a nonnegative real")));
    }
    Ok(())
}

/// Iterates `(L f)(z) = δ(z) Σ P(z, z') f(z')` on `f ≡ 1` up to `horizon`.
pub fn discount_drift_check(p: &StochasticMatrix, delta: &[f64], horizon: usize) -> Result<DriftReport> {
    discount_drift_check_with(p, delta, horizon, DiscountTiming::Current)
}

pub fn discount_drift_check_with(
    p: &StochasticMatrix,
    delta: &[f64],
    horizon: usize,
    timing: DiscountTiming,
) -> Result<DriftReport> {
    check_delta(p, delta)?;
    if horizon == 0 {
        return Err(AdpError::invalid("horizon", "must be at least 1"));
    }
    let mut f = vec![1.0; p.n()];
    let mut values = Vec::with_capacity(horizon + 1);
    values.push(1.0);
    let mut n_star = None;
    for k in 1..=horizon {
        f = drift_step(p, delta, &f, timing);
        let sup = f.iter().copied().fold(0.0, f64::max);
        if n_star.is_none() && sup < 1.0 {
            n_star = Some(k);
        }
        values.push(sup);
    }
    Ok(DriftReport { n_star, values })
}

/// The first horizon `k ≤ max_horizon` whose drift value is below one, with that value.
pub fn first_drift_horizon(
    p: &StochasticMatrix,
    delta: &[f64],
    max_horizon: usize,
    timing: DiscountTiming,
) -> Result<Option<(usize, f64)>> {
    check_delta(p, delta)?;
    let mut f = vec![1.0; p.n()];
    for k in 1..=max_horizon {
        f = drift_step(p, delta, &f, timing);
        let sup = f.iter().copied().fold(0.0, f64::max);
        if sup < 1.0 {
            return Ok(Some((k, sup)));
        }
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_must_sum_to_one() {
        assert!(StochasticMatrix::new(vec![vec![0.5, 0.4], vec![0.0, 1.0]]).is_err());
        assert!(StochasticMatrix::new(vec![vec![1.5, -0.5], vec![0.0, 1.0]]).is_err());
        assert!(StochasticMatrix::new(vec![vec![0.5, 0.5], vec![0.0, 1.0]]).is_ok());
    }

    #[test]
    fn tauchen_iid_rows_identical() {
        let p = tauchen(&Ar1Spec::new(0.0, 1.0, 0.0, 7)).unwrap();
        for row in p.rows() {
            assert_eq!(row, p.row(0));
        }
    }

    #[test]
    fn tauchen_firm_grid_is_centered_at_one() {
        let p = tauchen(&Ar1Spec::new(0.85, 0.0062, 1.0 - 0.85, 400)).unwrap();
        let grid = p.grid().unwrap();
        assert_eq!(grid.len(), 400);
        let mid = 0.5 * (grid[0] + grid[399]);
        assert!((mid - 1.0).abs() < 1e-12, "midpoint {mid}");
        for row in p.rows() {
            let s: f64 = row.iter().sum();
            assert!((s - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn tauchen_rejects_bad_specs() {
        assert!(tauchen(&Ar1Spec::new(1.0, 0.1, 0.0, 5)).is_err());
        assert!(tauchen(&Ar1Spec::new(0.5, 0.0, 0.0, 5)).is_err());
        assert!(tauchen(&Ar1Spec::new(0.5, 0.1, 0.0, 2)).is_err());
    }

    #[test]
    fn stationary_two_state() {
        let p = StochasticMatrix::new(vec![vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        let pi = stationary_distribution(&p, 1e-14).unwrap();
        assert!((pi[0] - 0.5).abs() < 1e-14 && (pi[1] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn periodic_chain_converges() {
        // Period two, and the uniform start is not stationary.
        let q = StochasticMatrix::new(vec![
            vec![0.0, 0.5, 0.5],
            vec![1.0, 0.0, 0.0],
            vec![1.0, 0.0, 0.0],
        ])
        .unwrap();
        let pi = stationary_distribution(&q, 1e-13).unwrap();
        for (got, want) in pi.iter().zip([0.5, 0.25, 0.25]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn unreachable_tolerance_is_a_convergence_error() {
        let p = StochasticMatrix::new(vec![vec![0.9, 0.1], vec![0.5, 0.5]]).unwrap();
        assert!(matches!(
            stationary_distribution(&p, 1e-300),
            Err(AdpError::Convergence(_))
        ));
    }

    #[test]
    fn drift_constant_delta() {
        let p = StochasticMatrix::new(vec![vec![0.3, 0.7], vec![0.9, 0.1]]).unwrap();
        let report = discount_drift_check(&p, &[0.9, 0.9], 5).unwrap();
        assert_eq!(report.n_star, Some(1));
        for k in 0..=5 {
            assert!((report.values[k] - 0.9f64.powi(k as i32)).abs() < 1e-15);
        }
        let report = discount_drift_check(&p, &[1.0, 1.0], 5).unwrap();
        assert_eq!(report.n_star, None);
        assert!(report.values.iter().all(|&v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn drift_timings_differ() {
        let p = StochasticMatrix::new(vec![vec![0.0, 1.0], vec![0.0, 1.0]]).unwrap();
        let delta = [2.0, 0.5];
        let current = discount_drift_check_with(&p, &delta, 1, DiscountTiming::Current).unwrap();
        let next = discount_drift_check_with(&p, &delta, 1, DiscountTiming::Next).unwrap();
        assert_eq!(current.values[1], 2.0);
        assert_eq!(next.values[1], 0.5);
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = tauchen(&Ar1Spec::new(0.5, 0.2, 0.1, 5)).unwrap();
        p.write_csv(dir.path().join("p.csv")).unwrap();
        p.write_grid_csv(dir.path().join("grid.csv")).unwrap();
        let q = StochasticMatrix::read_csv(dir.path().join("p.csv")).unwrap();
        let grid = StochasticMatrix::read_grid_csv(dir.path().join("grid.csv")).unwrap();
        assert_eq!(q.with_grid(grid).unwrap(), p);
    }
}
