//! Discrete-time survival log-likelihood and its KL-weighted variant.
//!
//! Both objectives share one row kernel
//! `r * log(g / (1 - g)) + log(1 - g)` with `g = g(eta_k + x'beta)`.
//! The local likelihood uses the death indicator as the response `r`; the
//! weighted likelihood uses the pseudo-response `(delta + lambda * delta_hat) / (1 + lambda)`.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::data::PersonPeriodTable;
use crate::error::{Error, Result};
use crate::link::{clamp_hazard, Link};

/// Joint parameter: per-period baselines followed by covariate effects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub eta: Vec<f64>,
    pub beta: Vec<f64>,
}

impl ParamVector {
    pub fn new(eta: Vec<f64>, beta: Vec<f64>) -> Self {
        Self { eta, beta }
    }

    pub fn zeros(tau: usize, p: usize) -> Self {
        Self {
            eta: vec![0.0; tau],
            beta: vec![0.0; p],
        }
    }

    pub fn len(&self) -> usize {
        self.eta.len() + self.beta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flattened as `eta_1..eta_tau, beta_1..beta_p`.
    pub fn to_array(&self) -> Array1<f64> {
        self.eta.iter().chain(&self.beta).copied().collect()
    }

    pub fn from_slice(values: &[f64], tau: usize) -> Self {
        Self {
            eta: values[..tau].to_vec(),
            beta: values[tau..].to_vec(),
        }
    }

    pub(crate) fn linear_predictor(&self, table: &PersonPeriodTable, row: usize) -> f64 {
        let x = table.covariates(row);
        let mut lp = self.eta[table.period(row) - 1];
        for (xj, bj) in x.iter().zip(&self.beta) {
            lp += xj * bj;
        }
        lp
    }

    fn check_dims(&self, table: &PersonPeriodTable) -> Result<()> {
        if self.eta.len() != table.tau() || self.beta.len() != table.p() {
            return Err(Error::Dimension(format!(
                "parameters have {} baselines and {} coefficients, table needs {} and {}",
                self.eta.len(),
                self.beta.len(),
                table.tau(),
                table.p()
            )));
        }
        if self.eta.iter().chain(&self.beta).any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("non-finite parameter".into()));
        }
        Ok(())
    }
}

/// Per-row responses entering the row kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseWeights {
    pseudo_response: Vec<f64>,
    lambda: f64,
}

impl ResponseWeights {
    /// Observed death indicators, i.e. `lambda = 0`.
    pub fn local(table: &PersonPeriodTable) -> Self {
        Self {
            pseudo_response: table.deaths().iter().map(|&d| if d { 1.0 } else { 0.0 }).collect(),
            lambda: 0.0,
        }
    }

    /// `(delta + lambda * delta_hat) / (1 + lambda)` row by row.
    pub fn integrated(table: &PersonPeriodTable, prior_preds: &[f64], lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "lambda must be a finite non-negative number, got {lambda}"
            )));
        }
        if prior_preds.len() != table.n_rows() {
            return Err(Error::Alignment(format!(
                "{} prior predictions for {} person-period rows",
                prior_preds.len(),
                table.n_rows()
            )));
        }
        if let Some(row) = prior_preds.iter().position(|&v| !(v > 0.0 && v < 1.0)) {
            return Err(Error::Alignment(format!(
                "prior prediction {} at row {row} is not in (0, 1)",
                prior_preds[row]
            )));
        }
        let pseudo_response = table
            .deaths()
            .iter()
            .zip(prior_preds)
            .map(|(&d, &p)| {
                let d = if d { 1.0 } else { 0.0 };
                (d + lambda * p) / (1.0 + lambda)
            })
            .collect();
        Ok(Self {
            pseudo_response,
            lambda,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.pseudo_response
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

/// Objective value with optional first and second derivatives.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub value: f64,
    pub gradient: Option<Array1<f64>>,
    pub hessian: Option<Array2<f64>>,
}

/// A likelihood bound to a table, its responses and a link.
#[derive(Debug, Clone)]
pub struct Objective<'a> {
    table: &'a PersonPeriodTable,
    responses: ResponseWeights,
    link: Link,
}

impl<'a> Objective<'a> {
    pub fn new(table: &'a PersonPeriodTable, responses: ResponseWeights, link: Link) -> Result<Self> {
        if responses.values().len() != table.n_rows() {
            return Err(Error::Alignment(format!(
                "{} responses for {} person-period rows",
                responses.values().len(),
                table.n_rows()
            )));
        }
        Ok(Self { table, responses, link })
    }

    pub fn local(table: &'a PersonPeriodTable, link: Link) -> Self {
        Self {
            table,
            responses: ResponseWeights::local(table),
            link,
        }
    }

    pub fn table(&self) -> &PersonPeriodTable {
        self.table
    }

    pub fn responses(&self) -> &ResponseWeights {
        &self.responses
    }

    pub fn link(&self) -> Link {
        self.link
    }

    pub fn value(&self, params: &ParamVector) -> Result<f64> {
        Ok(self.evaluate(params, false, false)?.value)
    }

    pub fn gradient(&self, params: &ParamVector) -> Result<Array1<f64>> {
        Ok(self.evaluate(params, true, false)?.gradient.unwrap())
    }

    pub fn hessian(&self, params: &ParamVector) -> Result<Array2<f64>> {
        Ok(self.evaluate(params, false, true)?.hessian.unwrap())
    }

    pub fn evaluate(&self, params: &ParamVector, with_gradient: bool, with_hessian: bool) -> Result<Evaluation> {
        let table = self.table;
        params.check_dims(table)?;
        let tau = table.tau();
        let p = table.p();
        let dim = tau + p;
        let mut value = CompensatedSum::default();
        let mut grad = with_gradient.then(|| Array1::<f64>::zeros(dim));
        let mut hess = with_hessian.then(|| Array2::<f64>::zeros((dim, dim)));
        for (row, &response) in self.responses.values().iter().enumerate() {
            let lp = params.linear_predictor(table, row);
            self.link.check_domain(lp)?;
            let e = self.link.eval(lp);
            let g = clamp_hazard(e.hazard);
            let q = clamp_hazard(e.complement);
            value.add(response * (g / q).ln() + q.ln());

            if grad.is_none() && hess.is_none() {
                continue;
            }
            let k = table.period(row) - 1;
            let x = table.covariates(row);
            let resid = response - e.hazard;
            if let Some(grad) = grad.as_mut() {
                let d1 = e.score_factor * resid;
                grad[k] += d1;
                for (j, xj) in x.iter().enumerate() {
                    grad[tau + j] += d1 * xj;
                }
            }
            if let Some(hess) = hess.as_mut() {
                let d2 = e.score_factor_deriv * resid - e.score_factor * e.score_factor * e.hazard * e.complement;
                hess[[k, k]] += d2;
                for (j, xj) in x.iter().enumerate() {
                    let w = d2 * xj;
                    hess[[k, tau + j]] += w;
                    for (l, xl) in x.iter().enumerate().skip(j) {
                        hess[[tau + j, tau + l]] += w * xl;
                    }
                }
            }
        }

        if let Some(hess) = hess.as_mut() {
            for a in 0..dim {
                for b in (a + 1)..dim {
                    hess[[b, a]] = hess[[a, b]];
                }
            }
        }
        Ok(Evaluation {
            value: value.total(),
            gradient: grad,
            hessian: hess,
        })
    }
}

/// Neumaier summation; the optimizer compares objectives that differ near rounding level.
#[derive(Debug, Default, Clone, Copy)]
struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.compensation += (self.sum - t) + v;
        } else {
            self.compensation += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn total(self) -> f64 {
        self.sum + self.compensation
    }
}

fn objective<'a>(
    table: &'a PersonPeriodTable,
    prior_preds: Option<&[f64]>,
    lambda: f64,
    link: Link,
) -> Result<Objective<'a>> {
    match prior_preds {
        Some(preds) => Objective::new(table, ResponseWeights::integrated(table, preds, lambda)?, link),
        None if lambda == 0.0 => Ok(Objective::local(table, link)),
        None => Err(Error::InvalidConfig(
            "a non-zero lambda requires prior predictions".into(),
        )),
    }
}

/// Local log-likelihood of a person-period table.
pub fn log_likelihood(params: &ParamVector, table: &PersonPeriodTable, link: Link) -> Result<f64> {
    Objective::local(table, link).value(params)
}

/// KL-weighted log-likelihood; equals [`log_likelihood`] at `lambda = 0`.
pub fn weighted_log_likelihood(
    params: &ParamVector,
    table: &PersonPeriodTable,
    prior_preds: &[f64],
    lambda: f64,
    link: Link,
) -> Result<f64> {
    objective(table, Some(prior_preds), lambda, link)?.value(params)
}

/// Gradient ordered `eta_1..eta_tau, beta_1..beta_p`.
pub fn gradient(
    params: &ParamVector,
    table: &PersonPeriodTable,
    prior_preds: Option<&[f64]>,
    lambda: f64,
    link: Link,
) -> Result<Array1<f64>> {
    objective(table, prior_preds, lambda, link)?.gradient(params)
}

pub fn hessian(
    params: &ParamVector,
    table: &PersonPeriodTable,
    prior_preds: Option<&[f64]>,
    lambda: f64,
    link: Link,
) -> Result<Array2<f64>> {
    objective(table, prior_preds, lambda, link)?.hessian(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{expand_person_period, CovariateSchema, SubjectRecord, SurvivalDataset};
    use approx::assert_relative_eq;

    fn single_row(event: bool) -> PersonPeriodTable {
        let data = SurvivalDataset::new(
            CovariateSchema::new(Vec::<String>::new()).unwrap(),
            vec![SubjectRecord::new("s", 1, event, vec![])],
            1,
        )
        .unwrap();
        expand_person_period(&data)
    }

    #[test]
    fn single_row_values() {
        let params = ParamVector::zeros(1, 0);
        for event in [true, false] {
            let ll = log_likelihood(&params, &single_row(event), Link::Logit).unwrap();
            assert_relative_eq!(ll, 0.5f64.ln(), epsilon = 1e-15);
        }
    }

    #[test]
    fn weighted_single_row_values() {
        let params = ParamVector::zeros(1, 0);
        let t1 = single_row(true);
        let w = weighted_log_likelihood(&params, &t1, &[1.0 - 1e-16], 7.0, Link::Logit).unwrap();
        assert_relative_eq!(w, log_likelihood(&params, &t1, Link::Logit).unwrap(), epsilon = 1e-12);

        let t0 = single_row(false);
        let w = weighted_log_likelihood(&params, &t0, &[0.8], 1.0, Link::Logit).unwrap();
        assert_relative_eq!(w, 0.5f64.ln(), epsilon = 1e-15);
        let rw = ResponseWeights::integrated(&t0, &[0.8], 1.0).unwrap();
        assert_relative_eq!(rw.values()[0], 0.4, epsilon = 1e-15);
    }

    #[test]
    fn single_row_derivatives() {
        let params = ParamVector::zeros(1, 0);
        let t = single_row(true);
        let g = gradient(&params, &t, None, 0.0, Link::Logit).unwrap();
        assert_eq!(g[0], 0.5);
        let h = hessian(&params, &t, None, 0.0, Link::Logit).unwrap();
        assert_eq!(h[[0, 0]], -0.25);
    }

    #[test]
    fn alignment_and_domain_errors() {
        let t = single_row(true);
        let params = ParamVector::zeros(1, 0);
        assert!(matches!(
            weighted_log_likelihood(&params, &t, &[0.5, 0.5], 1.0, Link::Logit),
            Err(Error::Alignment(_))
        ));
        assert!(matches!(
            weighted_log_likelihood(&params, &t, &[1.5], 1.0, Link::Logit),
            Err(Error::Alignment(_))
        ));
        assert!(weighted_log_likelihood(&params, &t, &[0.5], -1.0, Link::Logit).is_err());
        assert!(matches!(
            log_likelihood(&params, &t, Link::Log),
            Err(Error::Domain { .. })
        ));
        assert!(matches!(
            log_likelihood(&ParamVector::zeros(2, 0), &t, Link::Logit),
            Err(Error::Dimension(_))
        ));
        assert!(gradient(&params, &t, None, 1.0, Link::Logit).is_err());
    }

    #[test]
    fn zero_lambda_responses_are_exact_indicators() {
        let t = single_row(true);
        let rw = ResponseWeights::integrated(&t, &[0.3], 0.0).unwrap();
        assert_eq!(rw.values(), ResponseWeights::local(&t).values());
    }
}
