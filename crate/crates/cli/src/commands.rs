//! Subcommand implementations.

use std::path::Path;

use adp::algorithms::{distances_to, solve as run_algorithm, write_timings_csv, write_trace_csv};
use adp::models::data_valuation::{check_drift, solve_data_valuation, write_solution_csv, DataValuationModel};
use adp::models::nonlinear_discount::check_discount_assumptions;
use adp::models::quantile::{state_values, write_q_csv};
use adp::models::risk_sensitive::FirmExit;
use adp::oracle::{
    brute_force_optimality, check_concavity, check_lower_perimeter, check_order_preserving,
    estimate_contraction_modulus, BoxSampler, PropertyReport,
};
use adp::output::{write_columns, write_policy_csv, write_policy_vs_stationary_csv, write_threshold_sweep_csv};
use adp::{run_timing_comparison, value_function_iteration, Adp, AdpError, Algorithm, SolveResult, ValueVector};
use serde::Serialize;

use crate::config::{ExperimentConfig, Model};
use crate::CliError;

type CmdResult = Result<(), CliError>;

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(AdpError::from)?;
    std::fs::write(path, text + "\n").map_err(|e| CliError::config(format!("cannot write {}: {e}", path.display())))
}

/// `state`, the state's coordinates when it has any, then `value`.
fn write_state_values(path: &Path, adp: &dyn Adp, coord_names: Option<&[&str]>, v: &[f64]) -> Result<(), CliError> {
    let idx: Vec<f64> = (0..v.len()).map(|i| i as f64).collect();
    let labels = adp.space().states().labels();
    let width = labels.and_then(|l| l.first()).map_or(0, Vec::len);
    let coords: Vec<Vec<f64>> = (0..width)
        .map(|j| labels.expect("labels present").iter().map(|l| l[j]).collect())
        .collect();
    let names: Vec<String> = match coord_names {
        Some(n) if n.len() == width => n.iter().map(|s| s.to_string()).collect(),
        _ => (0..width).map(|j| format!("coord_{j}")).collect(),
    };
    let mut header = vec!["state"];
    header.extend(names.iter().map(String::as_str));
    header.push("value");
    let mut columns: Vec<&[f64]> = vec![&idx];
    columns.extend(coords.iter().map(Vec::as_slice));
    columns.push(v);
    write_columns(path, &header, &columns)?;
    Ok(())
}

fn require_converged(label: &str, result: &SolveResult) -> CmdResult {
    if result.converged {
        Ok(())
    } else {
        let last = result.trace.as_ref().and_then(|t| t.last().copied()).unwrap_or(f64::NAN);
        Err(CliError::non_convergence(format!(
            "{label} did not converge in {} iterations (last step {last:e})",
            result.iterations
        )))
    }
}

pub fn solve(cfg: &ExperimentConfig, out: &Path) -> CmdResult {
    let model = cfg.build(false)?;
    if let Model::DataValuation(m) = &model {
        return solve_dv(cfg, m, out);
    }
    let adp = model.adp().expect("model with a policy family");
    let ctrl = cfg.control()?;
    let result = run_algorithm(adp, cfg.algorithm, adp.default_initial_value(), cfg.m, &ctrl)?;
    match &model {
        Model::Quantile(q) => {
            let v = state_values(q, &result.value)?;
            write_state_values(&out.join("value.csv"), adp, None, &v)?;
            write_q_csv(out.join("q.csv"), q, &result.value)?;
        }
        Model::FirmExit(_) => write_state_values(&out.join("value.csv"), adp, Some(&["x"]), &result.value)?,
        _ => write_state_values(&out.join("value.csv"), adp, None, &result.value)?,
    }
    write_policy_csv(out.join("policy.csv"), &result.policy)?;
    write_trace_csv(out.join("trace.csv"), result.trace.as_deref().unwrap_or(&[]))?;
    println!(
        "{} {}: {} iterations, converged = {}",
        cfg.model.kind(),
        cfg.algorithm,
        result.iterations,
        result.converged
    );
    if let Model::FirmExit(firm) = &model {
        if result.converged {
            match firm.exit_threshold(&result.policy)? {
                Some((i, x)) => println!("exit threshold: grid index {i}, productivity {x}"),
                None => println!("exit threshold: the firm always exits"),
            }
        }
    }
    require_converged(&cfg.algorithm.to_string(), &result)
}

#[derive(Serialize)]
struct FirmSummary {
    vfi_iterations: usize,
    threshold_index: Option<usize>,
    threshold: Option<f64>,
    bellman_residual: f64,
    drift_horizon: usize,
    distances: Vec<(String, Vec<f64>)>,
}

/// Evenly spaced values from `lo` to `hi` inclusive.
fn linspace(lo: f64, hi: f64, steps: usize) -> Vec<f64> {
    (0..steps)
        .map(|i| lo + (hi - lo) * i as f64 / (steps - 1) as f64)
        .collect()
}

/// Solves at each `θ` on its own thread and returns the thresholds in order.
fn theta_sweep(firm: &FirmExit, thetas: &[f64], cfg: &ExperimentConfig) -> Result<Vec<(f64, Option<f64>)>, CliError> {
    let ctrl = adp::IterationControl {
        record_trace: false,
        ..cfg.control()?
    };
    let run = |theta: f64| -> Result<(f64, Option<f64>), CliError> {
        let model = firm.with_theta(theta)?;
        let result = value_function_iteration(&model.model, ValueVector::zeros(model.grid.len()), &ctrl)?;
        require_converged(&format!("vfi at θ = {theta}"), &result)?;
        Ok((theta, model.exit_threshold(&result.policy)?.map(|(_, x)| x)))
    };
    std::thread::scope(|scope| {
        let handles: Vec<_> = thetas.iter().map(|&t| scope.spawn(move || run(t))).collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("sweep worker panicked"))
            .collect()
    })
}

/// Pads `iterates` to `k` entries by repeating the final value.
fn padded(iterates: &[ValueVector], last: &ValueVector, k: usize) -> Vec<ValueVector> {
    (0..k).map(|i| iterates.get(i).unwrap_or(last).clone()).collect()
}

pub fn firm_exit_study(cfg: &ExperimentConfig, out: &Path) -> CmdResult {
    let model = cfg.build(false)?;
    let Model::FirmExit(firm) = &model else {
        return Err(CliError::config(format!(
            "firm-exit-study needs a firm_exit model, got {}",
            cfg.model.kind()
        )));
    };
    let n = firm.grid.len();
    let k = cfg.study.iterates;
    let ctrl = cfg.control()?.keeping_iterates(k);
    let v0 = ValueVector::zeros(n);

    let vfi = value_function_iteration(&firm.model, v0.clone(), &ctrl)?;
    require_converged("vfi", &vfi)?;
    let (v_star, h_star) = firm.bellman_split(&vfi.value)?;
    let s = vec![firm.params.s; n];
    write_columns(
        out.join("vs.csv"),
        &["x", "v_star", "h_star", "s"],
        &[&firm.grid, &v_star, &h_star, &s],
    )?;
    write_state_values(&out.join("value.csv"), &firm.model, Some(&["x"]), &vfi.value)?;
    write_policy_csv(out.join("policy.csv"), &vfi.policy)?;
    write_trace_csv(out.join("trace.csv"), vfi.trace.as_deref().unwrap_or(&[]))?;
    let threshold = firm.exit_threshold(&vfi.policy)?;

    let st = &cfg.study;
    let thetas = linspace(st.theta_min, st.theta_max, st.theta_steps);
    let sweep = theta_sweep(firm, &thetas, cfg)?;
    write_threshold_sweep_csv(out.join("threshold_sweep.csv"), &sweep)?;

    let scaled: Vec<f64> = firm.stationary.iter().map(|p| p * st.stationary_scale).collect();
    write_policy_vs_stationary_csv(out.join("policy_vs_stationary.csv"), &firm.grid, &vfi.policy, &scaled)?;

    let v_star = ValueVector::new(v_star)?;
    let hpi = run_algorithm(&firm.model, Algorithm::Hpi, v0.clone(), cfg.m, &ctrl)?;
    let opi = run_algorithm(&firm.model, Algorithm::Opi, v0.clone(), cfg.m, &ctrl)?;
    require_converged("hpi", &hpi)?;
    require_converged(&format!("opi(m = {})", cfg.m), &opi)?;
    let runs = [("vfi", &vfi), ("hpi", &hpi), ("opi", &opi)];
    let mut header = vec!["x".to_string()];
    let mut columns: Vec<Vec<f64>> = vec![firm.grid.clone()];
    let mut distances = Vec::new();
    for (name, result) in runs {
        let its = padded(&result.iterates, &result.value, k);
        distances.push((name.to_string(), distances_to(&its, &v_star)));
        for (i, v) in its.into_iter().enumerate() {
            header.push(format!("{name}_{}", i + 1));
            columns.push(v.into_inner());
        }
    }
    header.push("v_star".to_string());
    columns.push(v_star.as_slice().to_vec());
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let cols: Vec<&[f64]> = columns.iter().map(Vec::as_slice).collect();
    write_columns(out.join("algo_iterates.csv"), &header, &cols)?;

    let timings = run_timing_comparison(&firm.model, &v0, &cfg.m_list, &cfg.control()?)?;
    write_timings_csv(out.join("timings.csv"), &timings)?;
    std::fs::write(out.join("plots.gp"), PLOTS_GP).map_err(|e| CliError::config(e.to_string()))?;

    let summary = FirmSummary {
        vfi_iterations: vfi.iterations,
        threshold_index: threshold.map(|(i, _)| i),
        threshold: threshold.map(|(_, x)| x),
        bellman_residual: firm.model.bellman(&vfi.value)?.sup_distance(&vfi.value),
        drift_horizon: firm.model.drift_horizon(),
        distances,
    };
    write_json(&out.join("summary.json"), &summary)?;
    match threshold {
        Some((i, x)) => println!("vfi: {} iterations; exit below grid index {i} (x = {x})", vfi.iterations),
        None => println!("vfi: {} iterations; the firm always exits", vfi.iterations),
    }
    println!("wrote firm-exit study to {}", out.display());
    Ok(())
}

const PLOTS_GP: &str = r#"# gnuplot -e "dir='out'" plots.gp
if (!exists("dir")) dir = "."
set datafile separator ","
set key autotitle columnhead
set terminal pngcairo size 900,600

set output dir."/vs.png"
set xlabel "productivity x"
plot dir."/vs.csv" using 1:2 with lines title "v*", \
     "" using 1:3 with lines title "h*", \
     "" using 1:4 with lines dashtype 2 title "s"

set output dir."/threshold_sweep.png"
set xlabel "theta"
set ylabel "threshold productivity"
plot dir."/threshold_sweep.csv" using 1:2 with linespoints notitle

set output dir."/policy_vs_stationary.png"
set xlabel "productivity x"
unset ylabel
plot dir."/policy_vs_stationary.csv" using 1:2 with steps title "policy (1 = continue)", \
     "" using 1:3 with lines title "scaled stationary mass"

set output dir."/algo_iterates.png"
plot for [c=2:11] dir."/algo_iterates.csv" using 1:c with lines

set output dir."/timings.png"
set xlabel "m"
set ylabel "seconds"
plot dir."/timings.csv" using 2:(strcol(1) eq "vfi" ? $3 : 1/0) with linespoints title "vfi", \
     "" using 2:(strcol(1) eq "hpi" ? $3 : 1/0) with linespoints title "hpi", \
     "" using 2:(strcol(1) eq "opi" ? $3 : 1/0) with linespoints title "opi"
"#;

#[derive(Serialize)]
struct WitnessEntry<'a> {
    property: &'a str,
    witness: serde_json::Value,
}

/// Sampled property checks appropriate to the model family.
fn property_reports(model: &Model, cfg: &ExperimentConfig) -> adp::Result<Vec<PropertyReport>> {
    let (seed, trials) = (cfg.seed, cfg.trials);
    let adp = model.adp().expect("model with a policy family");
    let n = adp.value_len();
    let mut reports = Vec::new();
    match model {
        Model::Mdp(m) => {
            let (lo, hi) = m.reward_bounds();
            let bound = lo.abs().max(hi.abs()) / (1.0 - m.beta());
            let (lo, hi) = (vec![-bound; n], vec![bound; n]);
            reports.push(check_order_preserving(m, &lo, &hi, seed, trials)?);
            reports.push(estimate_contraction_modulus(m, &lo, &hi, seed, trials)?);
        }
        Model::RiskSensitive(_) | Model::FirmExit(_) => {
            let rs = match model {
                Model::FirmExit(f) => &f.model,
                Model::RiskSensitive(m) => m,
                _ => unreachable!(),
            };
            let b = rs.upper_bound().as_slice().to_vec();
            let zero = vec![0.0; n];
            reports.push(check_order_preserving(rs, &zero, &b, seed, trials)?);
            reports.push(check_concavity(rs, &zero, &b, seed, trials)?);
            reports.push(check_lower_perimeter(rs, &b, rs.reward_bounds().0, seed, trials)?);
        }
        Model::Quantile(m) => {
            let (lo, hi) = m.value_bounds();
            let (lo, hi) = (vec![lo; n], vec![hi; n]);
            reports.push(check_order_preserving(m, &lo, &hi, seed, trials)?);
            reports.push(estimate_contraction_modulus(m, &lo, &hi, seed, trials)?);
        }
        Model::NonlinearDiscount(m) => {
            let checks = check_discount_assumptions(m.discount(), &mut BoxSampler::new(seed), trials)?;
            reports.extend(checks.all().into_iter().map(|r| PropertyReport {
                property: format!("discount_{}", r.property),
                ..r.clone()
            }));
            // The box [0, r̄ / (1 - δ̄)] when δ̄ < 1; a wide box otherwise.
            let d = m.discount().delta.iter().copied().fold(0.0, f64::max);
            let bound = m.reward_bounds().1.max(1.0) / (1.0 - d.min(0.99));
            let zero = vec![0.0; n];
            let hi = vec![bound; n];
            reports.push(check_order_preserving(m, &zero, &hi, seed, trials)?);
            reports.push(check_concavity(m, &zero, &hi, seed, trials)?);
        }
        Model::DataValuation(_) => unreachable!("no policy family"),
    }
    Ok(reports)
}

pub fn validate(cfg: &ExperimentConfig, out: &Path, properties_only: bool) -> CmdResult {
    let model = cfg.build(true)?;
    if let Model::DataValuation(m) = &model {
        println!("data_valuation: no policy family, optimality checks skipped");
        let drift = check_drift(m)?;
        write_json(&out.join("drift.json"), &drift)?;
        println!("drift: rho = {}, Ke <= rho e: {}", drift.rho, drift.inequality_holds);
        return if drift.pass {
            Ok(())
        } else {
            Err(CliError::validation(format!(
                "drift certificate fails (rho = {}, max excess {:e})",
                drift.rho, drift.max_excess
            )))
        };
    }
    let adp = model.adp().expect("model with a policy family");
    let mut failures = Vec::new();
    let mut witnesses = Vec::new();
    if !properties_only {
        let ctrl = cfg.control()?;
        match brute_force_optimality(adp, &ctrl) {
            Ok(report) => {
                println!(
                    "optimality over {} policies: B1 {}, B2 {}, B3 {}, solver gap {:e}",
                    report.n_policies,
                    report.b1_optimal_policy_exists,
                    report.b2_unique_bellman_solution,
                    report.b3_optimal_iff_greedy,
                    report.solver_gap
                );
                if !report.passed() {
                    failures.push("optimality".to_string());
                    for w in &report.witnesses {
                        witnesses.push(WitnessEntry {
                            property: "optimality",
                            witness: serde_json::Value::String(w.clone()),
                        });
                    }
                }
                write_json(&out.join("optimality.json"), &report)?;
            }
            Err(e @ AdpError::TooManyPolicies { .. }) => {
                return Err(CliError::config(format!(
                    "{e}; rerun with --properties-only for the sampled checks"
                )))
            }
            Err(e) => {
                failures.push("optimality".to_string());
                witnesses.push(WitnessEntry {
                    property: "optimality",
                    witness: serde_json::Value::String(format!("enumeration failed: {e}")),
                });
            }
        }
    }
    let reports = property_reports(&model, cfg)?;
    for r in &reports {
        println!(
            "{}: {} failures in {} trials (statistic {:e})",
            r.property, r.failures, r.trials, r.statistic
        );
        if let Some(w) = &r.witness {
            failures.push(r.property.clone());
            witnesses.push(WitnessEntry {
                property: &r.property,
                witness: serde_json::to_value(w).map_err(AdpError::from)?,
            });
        }
    }
    write_json(&out.join("properties.json"), &reports)?;
    if failures.is_empty() {
        println!("all checks passed");
        return Ok(());
    }
    let path = out.join("witnesses.json");
    write_json(&path, &witnesses)?;
    Err(CliError::validation(format!(
        "failed: {}; witnesses in {}",
        failures.join(", "),
        path.display()
    )))
}

fn solve_dv(cfg: &ExperimentConfig, model: &DataValuationModel, out: &Path) -> CmdResult {
    let sol = solve_data_valuation(model, cfg.method, &cfg.control()?)?;
    write_solution_csv(out.join("value.csv"), model, &sol.value)?;
    write_json(&out.join("drift.json"), &sol.drift)?;
    println!(
        "data valuation ({:?}): rho = {}, residual {:e}, {} iterations",
        sol.method, sol.drift.rho, sol.residual, sol.iterations
    );
    Ok(())
}

pub fn data_valuation(cfg: &ExperimentConfig, out: &Path) -> CmdResult {
    match cfg.build(false)? {
        Model::DataValuation(m) => solve_dv(cfg, &m, out),
        _ => Err(CliError::config(format!(
            "data-valuation needs a data_valuation model, got {}",
            cfg.model.kind()
        ))),
    }
}

pub fn compare_algos(cfg: &ExperimentConfig, out: &Path) -> CmdResult {
    let model = cfg.build(false)?;
    let Some(adp) = model.adp() else {
        return Err(CliError::config("compare-algos needs a model with a policy family"));
    };
    let ctrl = cfg.control()?;
    let v0 = adp.default_initial_value();
    let mut runs = vec![
        (Algorithm::Vfi, 0usize, run_algorithm(adp, Algorithm::Vfi, v0.clone(), 1, &ctrl)?),
        (Algorithm::Hpi, 0, run_algorithm(adp, Algorithm::Hpi, v0.clone(), 1, &ctrl)?),
    ];
    for &m in &cfg.m_list {
        runs.push((Algorithm::Opi, m, run_algorithm(adp, Algorithm::Opi, v0.clone(), m, &ctrl)?));
    }
    let reference = runs[0].2.value.clone();
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    for (alg, m, r) in &runs {
        let gap = r.value.sup_distance(&reference);
        worst = worst.max(gap);
        rows.push(format!("{alg},{m},{},{},{gap}", r.iterations, r.converged));
    }
    let text = format!("algorithm,m,iterations,converged,sup_gap_to_vfi\n{}\n", rows.join("\n"));
    std::fs::write(out.join("agreement.csv"), text).map_err(|e| CliError::config(e.to_string()))?;
    let timings = run_timing_comparison(adp, &v0, &cfg.m_list, &ctrl)?;
    write_timings_csv(out.join("timings.csv"), &timings)?;
    println!("largest gap to vfi: {worst:e}");
    for (alg, m, r) in &runs {
        require_converged(&format!("{alg}(m = {m})"), r)?;
    }
    Ok(())
}
