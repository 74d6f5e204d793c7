#![allow(dead_code)]

use adp::{Adp, Policy, StateActionSpace, ValueVector};

/// One-action program whose only policy operator applies `f` entrywise.
pub struct Pointwise {
    space: StateActionSpace,
    f: fn(f64) -> f64,
}

impl Pointwise {
    pub fn new(n: usize, f: fn(f64) -> f64) -> Self {
        Self {
            space: StateActionSpace::full(n, 1).unwrap(),
            f,
        }
    }
}

impl Adp for Pointwise {
    fn space(&self) -> &StateActionSpace {
        &self.space
    }

    fn apply_policy(&self, _policy: &Policy, v: &ValueVector) -> adp::Result<ValueVector> {
        v.map(self.f)
    }

    fn greedy(&self, _v: &ValueVector) -> adp::Result<Policy> {
        Ok(self.space.first_policy())
    }
}

/// Dense Gaussian elimination with partial pivoting for `(I - M) x = c`.
pub fn gaussian_fixed_point(offset: &[f64], matrix: &[Vec<f64>]) -> Vec<f64> {
    let n = offset.len();
    let mut a: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row: Vec<f64> = (0..n).map(|j| if i == j { 1.0 } else { 0.0 } - matrix[i][j]).collect();
            row.push(offset[i]);
            row
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n).max_by(|&r, &s| a[r][col].abs().total_cmp(&a[s][col].abs())).unwrap();
        a.swap(col, pivot);
        for r in col + 1..n {
            let factor = a[r][col] / a[col][col];
            for c in col..=n {
                a[r][c] -= factor * a[col][c];
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let tail: f64 = (i + 1..n).map(|j| a[i][j] * x[j]).sum();
        x[i] = (a[i][n] - tail) / a[i][i];
    }
    x
}
