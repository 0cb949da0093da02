//! Published prediction models and the prior predictions they induce.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::data::{CovariateSchema, PersonPeriodTable};
use crate::error::{Error, Result};
use crate::likelihood::ParamVector;
use crate::link::Link;

/// Baselines `eta_hat` per period plus named coefficients `beta_hat`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorModel {
    pub label: String,
    pub link: Link,
    tau: usize,
    eta_hat: Vec<f64>,
    coefficients: Vec<(String, f64)>,
}

impl PriorModel {
    pub fn new(
        label: impl Into<String>,
        link: Link,
        eta_hat: Vec<f64>,
        coefficients: Vec<(String, f64)>,
    ) -> Result<Self> {
        if eta_hat.is_empty() {
            return Err(Error::InvalidData("prior needs at least one baseline".into()));
        }
        if let Some(k) = eta_hat.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!(
                "prior baseline for period {} is not finite",
                k + 1
            )));
        }
        let mut seen = HashSet::new();
        for (name, value) in &coefficients {
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidData(format!("duplicate prior coefficient '{name}'")));
            }
            if !value.is_finite() {
                return Err(Error::InvalidData(format!("prior coefficient '{name}' is not finite")));
            }
        }
        Ok(Self {
            label: label.into(),
            link,
            tau: eta_hat.len(),
            eta_hat,
            coefficients,
        })
    }

    pub fn tau(&self) -> usize {
        self.tau
    }

    pub fn eta_hat(&self) -> &[f64] {
        &self.eta_hat
    }

    pub fn coefficients(&self) -> &[(String, f64)] {
        &self.coefficients
    }

    /// Prior parameters laid out on a local schema and horizon.
    pub fn params_for(&self, schema: &CovariateSchema, tau: usize) -> Result<ParamVector> {
        if self.tau < tau {
            return Err(Error::TauMismatch {
                prior_tau: self.tau,
                data_tau: tau,
            });
        }
        Ok(ParamVector::new(
            self.eta_hat[..tau].to_vec(),
            align_prior(self, schema)?,
        ))
    }
}

/// Coefficients in schema order; covariates unknown to the prior get 0.
pub fn align_prior(prior: &PriorModel, schema: &CovariateSchema) -> Result<Vec<f64>> {
    let mut aligned = vec![0.0; schema.p()];
    let mut unknown = Vec::new();
    for (name, value) in &prior.coefficients {
        match schema.position(name) {
            Some(j) => aligned[j] = *value,
            None => unknown.push(name.clone()),
        }
    }
    if unknown.is_empty() {
        Ok(aligned)
    } else {
        Err(Error::UnknownCovariate(unknown))
    }
}

/// Predicted hazard `g(eta_hat_k + x'beta_hat)` for every table row, using the prior's own link.
pub fn prior_predictions(prior: &PriorModel, table: &PersonPeriodTable, schema: &CovariateSchema) -> Result<Vec<f64>> {
    if schema.p() != table.p() {
        return Err(Error::Alignment(format!(
            "schema has {} covariates, table has {}",
            schema.p(),
            table.p()
        )));
    }
    let params = prior.params_for(schema, table.tau())?;
    (0..table.n_rows())
        .map(|row| prior.link.inverse(params.linear_predictor(table, row)))
        .collect()
}
