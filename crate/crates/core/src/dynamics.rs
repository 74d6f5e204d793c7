//! State laws of the form `x = (y, z)`, `z' ~ P(z, ·)`, `y' = H(y, a, z')`.
//!
//! Each feasible pair carries a successor table `z' ↦ x'`; a pair without one
//! is terminal (its action value is the reward alone).

use crate::adp::{StateActionSpace, StateIndexSet};
use crate::error::{AdpError, Result};
use crate::markov::StochasticMatrix;

#[derive(Debug, Clone)]
pub struct ExogenousDynamics {
    z_of_state: Vec<usize>,
    p: StochasticMatrix,
    /// Per exogenous state: `(z', P(z, z'), ln P(z, z'))` over the positive entries.
    support: Vec<Vec<(usize, f64, f64)>>,
    successors: Vec<Option<Vec<usize>>>,
}

impl ExogenousDynamics {
    /// `successors[k][z']` is the next state after pair `k` when the shock lands on `z'`.
    pub fn new(
        space: &StateActionSpace,
        z_of_state: Vec<usize>,
        p: StochasticMatrix,
        successors: Vec<Option<Vec<usize>>>,
    ) -> Result<Self> {
        let n = space.n_states();
        let n_z = p.n();
        if z_of_state.len() != n {
            return Err(AdpError::LengthMismatch {
                expected: n,
                actual: z_of_state.len(),
            });
        }
        if let Some(&z) = z_of_state.iter().find(|&&z| z >= n_z) {
            return Err(AdpError::invalid(
                "z_of_state",
                format!("exogenous index {z} out of range for {n_z} exogenous states"),
            ));
        }
        if successors.len() != space.n_pairs() {
            return Err(AdpError::LengthMismatch {
                expected: space.n_pairs(),
                actual: successors.len(),
            });
        }
        for (k, table) in successors.iter().enumerate() {
            let Some(table) = table else { continue };
            if table.len() != n_z {
                return Err(AdpError::invalid(
                    "successors",
                    format!("pair {k} lists {} successors, expected {n_z}", table.len()),
                ));
            }
            for (z_next, &x_next) in table.iter().enumerate() {
                if x_next >= n || z_of_state[x_next] != z_next {
                    return Err(AdpError::invalid(
                        "successors",
                        format!(
                            "pair {k}: successor {x_next} for shock {z_next} is not a state with that exogenous component"
                        ),
                    ));
                }
            }
        }
        let support = p
            .rows()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .filter(|(_, &q)| q > 0.0)
                    .map(|(j, &q)| (j, q, q.ln()))
                    .collect()
            })
            .collect();
        Ok(Self {
            z_of_state,
            p,
            support,
            successors,
        })
    }

    /// Product state space `x = y * n_z + z` with labels `(y, z_value)`.
    ///
    /// `feasible(y, z)` lists the actions available in state `(y, z)` and
    /// `next_y(y, z, a, z')` returns `Some(y')`, or `None` for a terminal action.
    pub fn product<F, H>(
        n_y: usize,
        n_actions: usize,
        p: StochasticMatrix,
        feasible: F,
        next_y: H,
    ) -> Result<(StateActionSpace, Self)>
    where
        F: Fn(usize, usize) -> Vec<usize>,
        H: Fn(usize, usize, usize, usize) -> Option<usize>,
    {
        if n_y == 0 {
            return Err(AdpError::invalid("n_y", "must be at least 1"));
        }
        let n_z = p.n();
        let z_values: Vec<f64> = match p.grid() {
            Some(g) => g.to_vec(),
            None => (0..n_z).map(|z| z as f64).collect(),
        };
        let mut labels = Vec::with_capacity(n_y * n_z);
        let mut feas = Vec::with_capacity(n_y * n_z);
        let mut z_of_state = Vec::with_capacity(n_y * n_z);
        for y in 0..n_y {
            for z in 0..n_z {
                labels.push(vec![y as f64, z_values[z]]);
                feas.push(feasible(y, z));
                z_of_state.push(z);
            }
        }
        let space = StateActionSpace::new(StateIndexSet::with_labels(labels)?, n_actions, feas)?;
        let mut successors = Vec::with_capacity(space.n_pairs());
        for &(x, a) in space.pairs() {
            let (y, z) = (x / n_z, x % n_z);
            let mut table = Vec::with_capacity(n_z);
            let mut terminal = false;
            for z_next in 0..n_z {
                match next_y(y, z, a, z_next) {
                    Some(y_next) if y_next < n_y => table.push(y_next * n_z + z_next),
                    Some(y_next) => {
                        return Err(AdpError::invalid(
                            "next_y",
                            format!("endogenous state {y_next} out of range for {n_y} states"),
                        ))
                    }
                    None => {
                        terminal = true;
                        break;
                    }
                }
            }
            successors.push((!terminal).then_some(table));
        }
        let dynamics = Self::new(&space, z_of_state, p, successors)?;
        Ok((space, dynamics))
    }

    pub fn p(&self) -> &StochasticMatrix {
        &self.p
    }

    pub fn n_exogenous(&self) -> usize {
        self.p.n()
    }

    pub fn z_of(&self, x: usize) -> usize {
        self.z_of_state[x]
    }

    pub fn z_of_state(&self) -> &[usize] {
        &self.z_of_state
    }

    /// Positive-probability shocks from exogenous state `z`: `(z', P, ln P)`.
    pub fn support(&self, z: usize) -> &[(usize, f64, f64)] {
        &self.support[z]
    }

    pub fn successors(&self, pair: usize) -> Option<&[usize]> {
        self.successors[pair].as_deref()
    }

    pub fn is_terminal(&self, pair: usize) -> bool {
        self.successors[pair].is_none()
    }
}

/// Fixed point of `(S v)(x) = c + Σ_{z'} w(x, z') max_{a} v(succ(x, a, z'))`,
/// the maximum over the continuing actions of `x`.
///
/// `S` is a maximum of positive affine maps, so Howard iteration over the
/// successor selection climbs to the fixed point in finitely many linear
/// solves. Callers must establish stability (spectral radius below one) first.
pub(crate) fn dominating_fixed_point(
    space: &StateActionSpace,
    dynamics: &ExogenousDynamics,
    constant: f64,
    weight: impl Fn(usize, usize, f64) -> f64,
) -> Result<Vec<f64>> {
    use nalgebra::DMatrix;

    let n = space.n_states();
    // terms[x] = [(weight, candidate successors)] over positive-weight shocks.
    let terms: Vec<Vec<(f64, Vec<usize>)>> = (0..n)
        .map(|x| {
            let z = dynamics.z_of(x);
            dynamics
                .support(z)
                .iter()
                .filter_map(|&(z_next, prob, _)| {
                    let w = weight(x, z_next, prob);
                    let mut cands: Vec<usize> = space
                        .pairs_of(x)
                        .filter_map(|k| dynamics.successors(k).map(|t| t[z_next]))
                        .collect();
                    cands.sort_unstable();
                    cands.dedup();
                    (w > 0.0 && !cands.is_empty()).then_some((w, cands))
                })
                .collect()
        })
        .collect();

    // Keeps the current successor unless another one is better beyond rounding,
    // so near-ties cannot make the selection cycle.
    let improve = |v: &[f64], current: &[Vec<usize>]| -> Vec<Vec<usize>> {
        terms
            .iter()
            .zip(current)
            .map(|(row, chosen)| {
                row.iter()
                    .zip(chosen)
                    .map(|((_, cands), &cur)| {
                        let mut best = cur;
                        for &c in cands {
                            if v[c] > v[best] + 1e-12 * (1.0 + v[best].abs()) {
                                best = c;
                            }
                        }
                        best
                    })
                    .collect()
            })
            .collect()
    };

    let mut selection: Vec<Vec<usize>> = terms
        .iter()
        .map(|row| row.iter().map(|(_, cands)| cands[0]).collect())
        .collect();
    for _ in 0..(n + 500) {
        let mut matrix = DMatrix::zeros(n, n);
        for (x, row) in terms.iter().enumerate() {
            for ((w, _), &s) in row.iter().zip(&selection[x]) {
                matrix[(x, s)] += w;
            }
        }
        let v = crate::algorithms::solve_affine_fixed_point(&vec![constant; n], &matrix)?;
        let next = improve(&v, &selection);
        if next == selection {
            return Ok(v);
        }
        selection = next;
    }
    Err(AdpError::Convergence(
        "upper bound: successor selection did not stabilise".into(),
    ))
}

/// `S v` for the operator of [`dominating_fixed_point`].
pub(crate) fn dominating_apply(
    space: &StateActionSpace,
    dynamics: &ExogenousDynamics,
    constant: f64,
    weight: impl Fn(usize, usize, f64) -> f64,
    v: &[f64],
) -> Vec<f64> {
    (0..space.n_states())
        .map(|x| {
            let z = dynamics.z_of(x);
            let mut s = constant;
            for &(z_next, prob, _) in dynamics.support(z) {
                let best = space
                    .pairs_of(x)
                    .filter_map(|k| dynamics.successors(k).map(|t| v[t[z_next]]))
                    .fold(f64::NEG_INFINITY, f64::max);
                if best.is_finite() {
                    s += weight(x, z_next, prob) * best;
                }
            }
            s
        })
        .collect()
}

/// Fixed point of the dominating operator to within `tol` in sup norm: the
/// Howard solution, polished by successive approximation if its residual is
/// above `tol`.
pub(crate) fn dominating_bound(
    space: &StateActionSpace,
    dynamics: &ExogenousDynamics,
    constant: f64,
    weight: impl Fn(usize, usize, f64) -> f64 + Copy,
    ctrl: &crate::algorithms::IterationControl,
) -> Result<crate::adp::ValueVector> {
    use crate::adp::ValueVector;
    let b = dominating_fixed_point(space, dynamics, constant, weight)?;
    let apply = |v: &ValueVector| ValueVector::new(dominating_apply(space, dynamics, constant, weight, v));
    let b = ValueVector::new(b)?;
    let sb = apply(&b)?;
    if sb.sup_distance(&b) <= ctrl.tol {
        return Ok(b);
    }
    let quiet = crate::algorithms::IterationControl {
        record_trace: false,
        keep_iterates: 0,
        ..*ctrl
    };
    let fp = crate::algorithms::successive_approximation(apply, sb, &quiet)?;
    if !fp.converged {
        return Err(AdpError::Convergence(format!(
            "upper bound residual {} above tolerance {}",
            fp.last_distance, ctrl.tol
        )));
    }
    Ok(fp.value)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_layout_and_terminal_actions() {
        let p = StochasticMatrix::new(vec![vec![0.5, 0.5], vec![0.2, 0.8]]).unwrap();
        let (space, dyn_) = ExogenousDynamics::product(
            2,
            2,
            p,
            |_, _| vec![0, 1],
            |y, _, a, _| if a == 0 { None } else { Some((y + 1) % 2) },
        )
        .unwrap();
        assert_eq!(space.n_states(), 4);
        assert_eq!(dyn_.z_of(3), 1);
        let k = space.pair_index(1, 1).unwrap();
        // state 1 = (y=0, z=1) -> y'=1
        assert_eq!(dyn_.successors(k).unwrap(), &[2, 3]);
        assert!(dyn_.is_terminal(space.pair_index(2, 0).unwrap()));
    }

    #[test]
    fn inconsistent_successor_rejected() {
        let p = StochasticMatrix::new(vec![vec![0.5, 0.5], vec![0.2, 0.8]]).unwrap();
        let space = StateActionSpace::full(2, 1).unwrap();
        let bad = ExogenousDynamics::new(&space, vec![0, 1], p, vec![Some(vec![1, 0]), None]);
        assert!(bad.is_err());
    }
}
