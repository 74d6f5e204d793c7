//! Concrete model families built on the core abstractions.

pub mod data_valuation;
pub mod nonlinear_discount;
pub mod quantile;
pub mod risk_sensitive;
