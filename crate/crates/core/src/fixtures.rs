//! Seeded random instances and planted counterexamples for tests and the CLI.
//!
//! Random instances have at most four states and three actions per state so
//! that exhaustive policy enumeration stays cheap.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::adp::StateActionSpace;
use crate::dynamics::ExogenousDynamics;
use crate::error::Result;
use crate::markov::StochasticMatrix;
use crate::mdp::FiniteMdp;
use crate::models::data_valuation::{DataValuationModel, ProfitTechnology};
use crate::models::nonlinear_discount::{DiscountFunction, DiscountMap, NonlinearDiscountModel};
use crate::models::quantile::QuantileModel;
use crate::models::risk_sensitive::RiskSensitiveModel;

/// Smallest reward in the random risk-sensitive instances.
pub const RS_REWARD_FLOOR: f64 = 0.3;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A probability vector of length `n`; entries are zeroed with probability `sparsity`.
fn random_distribution(rng: &mut ChaCha8Rng, n: usize, sparsity: f64) -> Vec<f64> {
    loop {
        let mut row: Vec<f64> = (0..n)
            .map(|_| if rng.random_bool(sparsity) { 0.0 } else { rng.random_range(0.05..1.0) })
            .collect();
        let total: f64 = row.iter().sum();
        if total > 0.0 {
            row.iter_mut().for_each(|p| *p /= total);
            // Put the rounding remainder on the largest entry so the row sums to one.
            let drift = 1.0 - row.iter().sum::<f64>();
            let j = (0..n).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
            row[j] += drift;
            return row;
        }
    }
}

fn random_feasible(rng: &mut ChaCha8Rng, n_states: usize, n_actions: usize) -> Vec<Vec<usize>> {
    (0..n_states)
        .map(|_| {
            let mut set: Vec<usize> = (0..n_actions).filter(|_| rng.random_bool(0.7)).collect();
            if set.is_empty() {
                set.push(rng.random_range(0..n_actions));
            }
            set
        })
        .collect()
}

/// Random `(y, z)` dynamics with `n_y · n_z ≤ 4`.
fn random_dynamics(rng: &mut ChaCha8Rng) -> Result<(StateActionSpace, ExogenousDynamics)> {
    let (n_y, n_z) = [(1, 2), (1, 3), (1, 4), (2, 2)][rng.random_range(0..4)];
    let n_actions = rng.random_range(1..=3);
    let rows = (0..n_z).map(|_| random_distribution(rng, n_z, 0.25)).collect();
    let p = StochasticMatrix::new(rows)?;
    let feasible = random_feasible(rng, n_y * n_z, n_actions);
    let next: Vec<usize> = (0..n_y * n_actions * n_z).map(|_| rng.random_range(0..n_y)).collect();
    ExogenousDynamics::product(
        n_y,
        n_actions,
        p,
        |y, z| feasible[y * n_z + z].clone(),
        |y, _, a, z_next| Some(next[(y * n_actions + a) * n_z + z_next]),
    )
}

pub fn random_mdp(seed: u64) -> Result<FiniteMdp> {
    let mut rng = rng(seed);
    let n = rng.random_range(2..=4);
    let n_actions = rng.random_range(1..=3);
    let space = StateActionSpace::new(
        crate::adp::StateIndexSet::new(n)?,
        n_actions,
        random_feasible(&mut rng, n, n_actions),
    )?;
    let beta = rng.random_range(0.5..0.95);
    let reward = (0..space.n_pairs()).map(|_| rng.random_range(0.0..1.0)).collect();
    let transitions = (0..space.n_pairs()).map(|_| random_distribution(&mut rng, n, 0.3)).collect();
    FiniteMdp::new(space, beta, reward, transitions)
}

pub fn random_risk_sensitive(seed: u64) -> Result<RiskSensitiveModel> {
    let mut rng = rng(seed);
    let (space, dynamics) = random_dynamics(&mut rng)?;
    let theta = rng.random_range(-2.0..-0.1);
    let beta = (0..dynamics.n_exogenous()).map(|_| rng.random_range(0.5..0.95)).collect();
    let reward = (0..space.n_pairs())
        .map(|_| rng.random_range(RS_REWARD_FLOOR..RS_REWARD_FLOOR + 1.0))
        .collect();
    RiskSensitiveModel::new(space, dynamics, theta, beta, reward)
}

pub fn random_quantile(seed: u64) -> Result<QuantileModel> {
    let mut rng = rng(seed);
    let (space, dynamics) = random_dynamics(&mut rng)?;
    let beta = rng.random_range(0.5..0.95);
    let tau = rng.random_range(0.1..0.9);
    let reward = (0..space.n_pairs()).map(|_| rng.random_range(0.0..1.0)).collect();
    QuantileModel::new(space, dynamics, beta, tau, reward)
}

pub fn random_nonlinear_discount(seed: u64) -> Result<NonlinearDiscountModel> {
    let mut rng = rng(seed);
    let (space, dynamics) = random_dynamics(&mut rng)?;
    let c = rng.random_range(0.5..0.95);
    let function = match rng.random_range(0..4) {
        0 => DiscountFunction::Linear { c },
        1 => DiscountFunction::CappedLinear {
            c,
            cap: rng.random_range(1.0..5.0),
        },
        2 => DiscountFunction::Saturating {
            c,
            k: rng.random_range(0.05..0.5),
        },
        _ => DiscountFunction::SqrtAboveOne { c },
    };
    let delta = vec![c; dynamics.n_exogenous()];
    let reward = (0..space.n_pairs()).map(|_| rng.random_range(0.0..1.0)).collect();
    NonlinearDiscountModel::new(space, dynamics, reward, DiscountMap { function, delta })
}

/// The drift constants `(α, λ)` minimising `ρ = b2 (α + λ / π0)` over a grid of `α`.
pub fn fit_drift_constants(p: &StochasticMatrix, profit: &[f64], b2: f64) -> (f64, f64, f64) {
    let expected = p.apply(profit);
    let pi0 = profit.iter().copied().fold(f64::INFINITY, f64::min);
    let mut best = (f64::NAN, f64::NAN, f64::INFINITY);
    for i in 1..=400 {
        let alpha = i as f64 * 0.005;
        let lambda = expected
            .iter()
            .zip(profit)
            .map(|(e, p)| e - alpha * p)
            .fold(0.0, f64::max);
        let rho = b2 * (alpha + lambda / pi0);
        if rho < best.2 {
            best = (alpha, lambda, rho);
        }
    }
    best
}

/// Random grids and kernels with Cobb-Douglas profits; redrawn until the
/// drift certificate `ρ < 1` holds.
pub fn random_data_valuation(seed: u64) -> Result<DataValuationModel> {
    let mut rng = rng(seed);
    loop {
        let nb = rng.random_range(2..=5);
        let ns = rng.random_range(2..=5);
        let mut b_grid: Vec<f64> = (0..nb).map(|_| rng.random_range(0.5..0.95)).collect();
        b_grid.sort_by(f64::total_cmp);
        let s_grid: Vec<f64> = (0..ns).map(|s| s as f64).collect();
        let q = StochasticMatrix::new((0..nb).map(|_| random_distribution(&mut rng, nb, 0.2)).collect())?;
        let p = StochasticMatrix::new((0..ns).map(|_| random_distribution(&mut rng, ns, 0.2)).collect())?;
        let tech = ProfitTechnology {
            a_of_s: (0..ns).map(|_| rng.random_range(0.8..1.25)).collect(),
            alpha1: 0.25,
            alpha2: 0.25,
            w: 0.25,
            r_rental: 0.25,
        };
        let profit = tech.profits()?;
        let b2 = b_grid[nb - 1];
        let (alpha, lambda, rho) = fit_drift_constants(&p, &profit, b2);
        if rho < 1.0 {
            return DataValuationModel::new(b_grid, s_grid, q, p, profit, alpha, lambda);
        }
    }
}

/// Three productivity states, a safe action and a state-sensitive one.
pub fn three_state_quantile() -> Result<QuantileModel> {
    let p = StochasticMatrix::new(vec![
        vec![0.5, 0.3, 0.2],
        vec![0.2, 0.5, 0.3],
        vec![0.1, 0.3, 0.6],
    ])?
    .with_grid(vec![0.9, 1.0, 1.1])?;
    let space = StateActionSpace::full(3, 2)?;
    let dynamics = ExogenousDynamics::new(&space, vec![0, 1, 2], p, vec![Some(vec![0, 1, 2]); 6])?;
    QuantileModel::new(space, dynamics, 0.9, 0.5, vec![1.0, 0.5, 1.0, 1.4, 1.0, 2.0])
}

/// Models built to violate one hypothesis each.
pub mod planted {
    use super::*;

    /// Two states, `b` decreasing: the first state's action choice moves the
    /// second state's value the opposite way, so no policy value is greatest.
    pub fn incomparable_policies() -> Result<NonlinearDiscountModel> {
        let (space, dynamics) = ExogenousDynamics::product(
            2,
            2,
            StochasticMatrix::identity(1),
            |y, _| if y == 0 { vec![0, 1] } else { vec![0] },
            |y, _, _, _| if y == 0 { None } else { Some(0) },
        )?;
        let discount = DiscountMap {
            function: DiscountFunction::PiecewiseLinear {
                knots: vec![(0.0, 1.0), (1.0, 0.0)],
            },
            delta: vec![0.9],
        };
        // Pairs: (0, 0) exits with 1, (0, 1) exits with 0, (1, 0) continues to state 0.
        NonlinearDiscountModel::new_unchecked(space, dynamics, vec![1.0, 0.0, 0.0], discount)
    }

    fn two_state_nd(function: DiscountFunction) -> Result<NonlinearDiscountModel> {
        let p = StochasticMatrix::new(vec![vec![0.5, 0.5], vec![0.3, 0.7]])?;
        let space = StateActionSpace::full(2, 1)?;
        let dynamics = ExogenousDynamics::new(&space, vec![0, 1], p, vec![Some(vec![0, 1]); 2])?;
        let discount = DiscountMap {
            function,
            delta: vec![0.9, 0.9],
        };
        NonlinearDiscountModel::new_unchecked(space, dynamics, vec![1.0, 0.5], discount)
    }

    /// Discount map that rises then falls, so `T_σ` is not order preserving.
    pub fn decreasing_discount() -> DiscountFunction {
        DiscountFunction::PiecewiseLinear {
            knots: vec![(0.0, 0.0), (1.0, 0.9), (10.0, 0.1)],
        }
    }

    pub fn non_monotone() -> Result<NonlinearDiscountModel> {
        two_state_nd(decreasing_discount())
    }

    /// Convex discount map, so `T_σ` is convex rather than concave.
    pub fn convex() -> Result<NonlinearDiscountModel> {
        two_state_nd(DiscountFunction::Power { c: 0.2, p: 2.0 })
    }

    /// Discount factor above one, so `T_σ` expands distances.
    pub fn expansive() -> Result<NonlinearDiscountModel> {
        two_state_nd(DiscountFunction::Linear { c: 1.2 })
    }

    /// An absorbing zero-reward state: `T_σ 0` vanishes there.
    pub fn zero_reward_absorbing() -> Result<FiniteMdp> {
        let space = StateActionSpace::full(2, 1)?;
        FiniteMdp::new(space, 0.9, vec![1.0, 0.0], vec![vec![0.5, 0.5], vec![0.0, 1.0]])
    }

    /// `b(t) = t²` with `δ ≡ 0.9`: fails domination and subadditivity.
    pub fn square_discount() -> DiscountMap {
        DiscountMap {
            function: DiscountFunction::Power { c: 1.0, p: 2.0 },
            delta: vec![0.9],
        }
    }

    /// Discount factors reaching one: the drift certificate has `ρ ≥ 1`.
    pub fn unstable_data_valuation() -> Result<DataValuationModel> {
        let q = StochasticMatrix::new(vec![vec![0.5, 0.5], vec![0.5, 0.5]])?;
        let p = StochasticMatrix::new(vec![vec![0.5, 0.5], vec![0.5, 0.5]])?;
        DataValuationModel::new(vec![0.9, 1.0], vec![0.0, 1.0], q, p, vec![1.0, 1.0], 1.0, 0.0)
    }
}
