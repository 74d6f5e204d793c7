//! JSON experiment configuration.

use std::path::{Path, PathBuf};

use adp::dynamics::ExogenousDynamics;
use adp::models::data_valuation::{DataValuationModel, DataValuationSpec, SolveMethod};
use adp::models::nonlinear_discount::{DiscountMap, NonlinearDiscountModel};
use adp::models::quantile::QuantileModel;
use adp::models::risk_sensitive::{build_firm_exit_model, FirmExit, FirmExitParams, RiskSensitiveModel};
use adp::{Adp, AdpError, Algorithm, FiniteMdp, IterationControl, StateActionSpace, StateIndexSet, StochasticMatrix};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    #[serde(default = "default_algorithm")]
    pub algorithm: Algorithm,
    /// Evaluation sweeps per OPI step.
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default)]
    pub seed: u64,
    pub out: Option<PathBuf>,
    /// OPI sweep counts for the timing table.
    #[serde(default = "default_m_list")]
    pub m_list: Vec<usize>,
    /// Samples per property check.
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub study: StudyOptions,
    /// Data-valuation solver.
    #[serde(default = "default_method")]
    pub method: SolveMethod,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyOptions {
    pub theta_min: f64,
    pub theta_max: f64,
    pub theta_steps: usize,
    /// Multiplier applied to the stationary distribution in `policy_vs_stationary.csv`.
    pub stationary_scale: f64,
    /// Iterates kept per algorithm in `algo_iterates.csv`.
    pub iterates: usize,
}

impl Default for StudyOptions {
    fn default() -> Self {
        Self {
            theta_min: -2.0,
            theta_max: -0.1,
            theta_steps: 20,
            stationary_scale: 150.0,
            iterates: 3,
        }
    }
}

fn default_algorithm() -> Algorithm {
    Algorithm::Vfi
}

fn default_method() -> SolveMethod {
    SolveMethod::Auto
}

fn default_m() -> usize {
    10
}

fn default_tol() -> f64 {
    1e-8
}

fn default_max_iter() -> usize {
    100_000
}

fn default_m_list() -> Vec<usize> {
    vec![1, 2, 5, 10, 20, 50]
}

fn default_trials() -> usize {
    500
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    Mdp(MdpSpec),
    RiskSensitive(RiskSensitiveSpec),
    FirmExit(FirmExitParams),
    Quantile(QuantileSpec),
    NonlinearDiscount(NonlinearDiscountSpec),
    DataValuation(DataValuationSpec),
}

impl ModelSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            ModelSpec::Mdp(_) => "mdp",
            ModelSpec::RiskSensitive(_) => "risk_sensitive",
            ModelSpec::FirmExit(_) => "firm_exit",
            ModelSpec::Quantile(_) => "quantile",
            ModelSpec::NonlinearDiscount(_) => "nonlinear_discount",
            ModelSpec::DataValuation(_) => "data_valuation",
        }
    }
}

/// Tabular MDP. `reward[x][a]` and `transitions[x][a][x']` cover every action;
/// entries for infeasible pairs are ignored.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpSpec {
    pub beta: f64,
    pub reward: Vec<Vec<f64>>,
    pub transitions: Vec<Vec<Vec<f64>>>,
    /// Feasible actions per state; all actions when absent.
    pub feasible: Option<Vec<Vec<usize>>>,
}

/// States driven by an exogenous chain `P` on `z`.
///
/// `successors[x][a]` lists the next state for each `z'`, or is `null` for a
/// terminal action. `reward[x][a]` covers every action.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExogenousTable {
    pub p: Vec<Vec<f64>>,
    /// Exogenous component of each state; `x ↦ x` when absent.
    pub z_of_state: Option<Vec<usize>>,
    pub reward: Vec<Vec<f64>>,
    pub successors: Vec<Vec<Option<Vec<usize>>>>,
    pub feasible: Option<Vec<Vec<usize>>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RiskSensitiveSpec {
    pub theta: f64,
    /// Discount per exogenous state.
    pub beta: Vec<f64>,
    pub table: ExogenousTable,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantileSpec {
    pub beta: f64,
    pub tau: f64,
    pub table: ExogenousTable,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NonlinearDiscountSpec {
    pub discount: DiscountMap,
    pub table: ExogenousTable,
}

/// A constructed model.
pub enum Model {
    Mdp(FiniteMdp),
    RiskSensitive(RiskSensitiveModel),
    FirmExit(Box<FirmExit>),
    Quantile(QuantileModel),
    NonlinearDiscount(NonlinearDiscountModel),
    DataValuation(DataValuationModel),
}

impl Model {
    /// The dynamic program, if the model has a policy family.
    pub fn adp(&self) -> Option<&dyn Adp> {
        match self {
            Model::Mdp(m) => Some(m),
            Model::RiskSensitive(m) => Some(m),
            Model::FirmExit(f) => Some(&f.model),
            Model::Quantile(m) => Some(m),
            Model::NonlinearDiscount(m) => Some(m),
            Model::DataValuation(_) => None,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::config(format!("config {}: {e}", path.display())))
    }

    pub fn control(&self) -> adp::Result<IterationControl> {
        IterationControl::new(self.tol, self.max_iter)
    }

    /// Validates the shared settings and builds the model. With `unchecked`,
    /// nonlinear-discount models skip their discount and drift checks.
    pub fn build(&self, unchecked: bool) -> adp::Result<Model> {
        self.control()?;
        if self.m == 0 {
            return Err(AdpError::invalid("m", "must be at least 1"));
        }
        if self.m_list.is_empty() || self.m_list.contains(&0) {
            return Err(AdpError::invalid("m_list", "must be nonempty with positive entries"));
        }
        if self.trials == 0 {
            return Err(AdpError::invalid("trials", "must be at least 1"));
        }
        let s = &self.study;
        if !(s.theta_min < s.theta_max && s.theta_max < 0.0) || s.theta_steps < 2 {
            return Err(AdpError::invalid(
                "study",
                "need theta_min < theta_max < 0 and at least 2 theta_steps",
            ));
        }
        if !(s.stationary_scale > 0.0) || !s.stationary_scale.is_finite() {
            return Err(AdpError::invalid("stationary_scale", "must be positive"));
        }
        Ok(match &self.model {
            ModelSpec::Mdp(spec) => Model::Mdp(build_mdp(spec)?),
            ModelSpec::RiskSensitive(spec) => {
                let (space, dynamics, reward) = build_table(&spec.table)?;
                Model::RiskSensitive(RiskSensitiveModel::new(space, dynamics, spec.theta, spec.beta.clone(), reward)?)
            }
            ModelSpec::FirmExit(params) => Model::FirmExit(Box::new(build_firm_exit_model(params)?)),
            ModelSpec::Quantile(spec) => {
                let (space, dynamics, reward) = build_table(&spec.table)?;
                Model::Quantile(QuantileModel::new(space, dynamics, spec.beta, spec.tau, reward)?)
            }
            ModelSpec::NonlinearDiscount(spec) => {
                let (space, dynamics, reward) = build_table(&spec.table)?;
                let discount = spec.discount.clone();
                Model::NonlinearDiscount(if unchecked {
                    NonlinearDiscountModel::new_unchecked(space, dynamics, reward, discount)?
                } else {
                    NonlinearDiscountModel::new(space, dynamics, reward, discount)?
                })
            }
            ModelSpec::DataValuation(spec) => Model::DataValuation(spec.build()?),
        })
    }
}

fn space_of(n: usize, n_actions: usize, feasible: &Option<Vec<Vec<usize>>>) -> adp::Result<StateActionSpace> {
    match feasible {
        None => StateActionSpace::full(n, n_actions),
        Some(f) => StateActionSpace::new(StateIndexSet::new(n)?, n_actions, f.clone()),
    }
}

/// Number of actions from a per-state table whose rows must share one length.
fn action_count<T>(name: &str, rows: &[Vec<T>]) -> adp::Result<usize> {
    let n_actions = rows.first().map_or(0, Vec::len);
    if n_actions == 0 {
        return Err(AdpError::invalid(name, "needs at least one state and one action"));
    }
    if let Some(x) = rows.iter().position(|r| r.len() != n_actions) {
        return Err(AdpError::invalid(
            name,
            format!("state {x} lists {} actions, expected {n_actions}", rows[x].len()),
        ));
    }
    Ok(n_actions)
}

fn build_mdp(spec: &MdpSpec) -> adp::Result<FiniteMdp> {
    let n = spec.reward.len();
    let n_actions = action_count("reward", &spec.reward)?;
    if spec.transitions.len() != n {
        return Err(AdpError::invalid(
            "transitions",
            format!("{} states, expected {n}", spec.transitions.len()),
        ));
    }
    action_count("transitions", &spec.transitions)?;
    let space = space_of(n, n_actions, &spec.feasible)?;
    let reward = space.pairs().iter().map(|&(x, a)| spec.reward[x][a]).collect();
    let transitions = space.pairs().iter().map(|&(x, a)| spec.transitions[x][a].clone()).collect();
    FiniteMdp::new(space, spec.beta, reward, transitions)
}

fn build_table(table: &ExogenousTable) -> adp::Result<(StateActionSpace, ExogenousDynamics, Vec<f64>)> {
    let n = table.reward.len();
    let n_actions = action_count("reward", &table.reward)?;
    if table.successors.len() != n {
        return Err(AdpError::invalid(
            "successors",
            format!("{} states, expected {n}", table.successors.len()),
        ));
    }
    action_count("successors", &table.successors)?;
    let space = space_of(n, n_actions, &table.feasible)?;
    let p = StochasticMatrix::new(table.p.clone())?;
    let z_of_state = table.z_of_state.clone().unwrap_or_else(|| (0..n).collect());
    let successors = space.pairs().iter().map(|&(x, a)| table.successors[x][a].clone()).collect();
    let reward = space.pairs().iter().map(|&(x, a)| table.reward[x][a]).collect();
    let dynamics = ExogenousDynamics::new(&space, z_of_state, p, successors)?;
    Ok((space, dynamics, reward))
}
