//! CSV writers for solutions and experiment tables.

use std::path::Path;

use crate::adp::{Policy, ValueVector};
use crate::error::{AdpError, Result};

/// `state,value`.
pub fn write_value_csv(path: impl AsRef<Path>, v: &ValueVector) -> Result<()> {
    let idx: Vec<f64> = (0..v.len()).map(|i| i as f64).collect();
    write_columns(path, &["state", "value"], &[&idx, v])
}

/// `state,action`.
pub fn write_policy_csv(path: impl AsRef<Path>, policy: &Policy) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["state", "action"])?;
    for (x, a) in policy.actions().iter().enumerate() {
        w.write_record([x.to_string(), a.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Equal-length numeric columns under the given header.
pub fn write_columns(path: impl AsRef<Path>, header: &[&str], columns: &[&[f64]]) -> Result<()> {
    if header.len() != columns.len() {
        return Err(AdpError::LengthMismatch {
            expected: header.len(),
            actual: columns.len(),
        });
    }
    let rows = columns.first().map_or(0, |c| c.len());
    if let Some(c) = columns.iter().find(|c| c.len() != rows) {
        return Err(AdpError::LengthMismatch {
            expected: rows,
            actual: c.len(),
        });
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for i in 0..rows {
        w.write_record(columns.iter().map(|c| c[i].to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// `theta,threshold`, with an empty threshold when the policy always exits.
pub fn write_threshold_sweep_csv(path: impl AsRef<Path>, rows: &[(f64, Option<f64>)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["theta", "threshold"])?;
    for (theta, threshold) in rows {
        w.write_record([theta.to_string(), threshold.map(|t| t.to_string()).unwrap_or_default()])?;
    }
    w.flush()?;
    Ok(())
}

/// `x,action,stationary_mass`.
pub fn write_policy_vs_stationary_csv(
    path: impl AsRef<Path>,
    grid: &[f64],
    policy: &Policy,
    stationary: &[f64],
) -> Result<()> {
    if policy.len() != grid.len() || stationary.len() != grid.len() {
        return Err(AdpError::LengthMismatch {
            expected: grid.len(),
            actual: policy.len().min(stationary.len()),
        });
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["x", "action", "stationary_mass"])?;
    for ((x, a), m) in grid.iter().zip(policy.actions()).zip(stationary) {
        w.write_record([x.to_string(), a.to_string(), m.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
