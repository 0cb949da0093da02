//! Maximum likelihood fitting of the local and KL-weighted objectives, and
//! prediction from fitted models.
//!
//! The optimizer is a full Newton iteration over the joint `(eta, beta)`
//! with step halving. Baselines are kept inside `[ETA_MIN, ETA_MAX]` by
//! projection; a baseline sitting on a bound whose gradient points outward
//! is held fixed for that iteration. When the negative Hessian is not
//! positive definite the step is damped towards the gradient direction.

use ndarray::{Array1, Array2};

use crate::data::{expand_person_period, CovariateSchema, PersonPeriodTable, SurvivalDataset};
use crate::error::{Error, Result};
use crate::likelihood::{log_likelihood, Objective, ParamVector, ResponseWeights};
use crate::linalg::{cholesky, cholesky_solve, first_dependent_column};
use crate::link::{Link, HAZARD_EPS, LOG_LINK_MARGIN};
use crate::prior::{prior_predictions, PriorModel};

pub const ETA_MIN: f64 = -15.0;
pub const ETA_MAX: f64 = 15.0;

/// Projected-gradient max-norm below which a fit counts as stationary.
pub const STATIONARITY_TOL: f64 = 1e-5;

/// Gradient max-norm that ends the iteration regardless of objective change.
const GRADIENT_TOL: f64 = 1e-8;

/// Gradient max-norm required alongside a small relative objective change.
const POLISHED_GRADIENT_TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Relative objective change that, together with stationarity, ends the iteration.
    pub tol: f64,
    pub step_halving_max: usize,
    /// Starting point; `None` uses zero coefficients and per-period empirical baselines.
    pub init: Option<ParamVector>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-9,
            step_halving_max: 30,
            init: None,
        }
    }
}

impl FitOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("max_iter must be at least 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig("tol must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    pub params: ParamVector,
    pub link: Link,
    pub schema: CovariateSchema,
    pub tau: usize,
    pub converged: bool,
    pub n_iter: usize,
    pub final_objective: f64,
    /// 0 for local fits.
    pub lambda_used: f64,
    /// False for periods that had nobody at risk when fitting without a prior.
    pub estimable: Vec<bool>,
    /// Objective after every accepted step, starting with the initial point.
    pub objective_trace: Vec<f64>,
}

impl FittedModel {
    pub fn predict_hazard(&self, covariates: &[f64]) -> Result<Vec<f64>> {
        predict_hazard(self, covariates)
    }

    pub fn predict_survival(&self, covariates: &[f64]) -> Result<Vec<f64>> {
        predict_survival(self, covariates)
    }
}

/// Maximizes the local log-likelihood.
pub fn fit_local(data: &SurvivalDataset, link: Link, opts: &FitOptions) -> Result<FittedModel> {
    let table = expand_person_period(data);
    let responses = ResponseWeights::local(&table);
    fit_objective(data, &table, responses, link, opts, None)
}

/// Maximizes the KL-weighted log-likelihood with weight `lambda` on the prior.
pub fn fit_kl(
    data: &SurvivalDataset,
    prior: &PriorModel,
    lambda: f64,
    link: Link,
    opts: &FitOptions,
) -> Result<FittedModel> {
    let table = expand_person_period(data);
    let preds = prior_predictions(prior, &table, data.schema())?;
    fit_kl_with_predictions(data, &table, prior, &preds, lambda, link, opts)
}

/// [`fit_kl`] on an already expanded table and precomputed prior predictions.
pub fn fit_kl_with_predictions(
    data: &SurvivalDataset,
    table: &PersonPeriodTable,
    prior: &PriorModel,
    prior_preds: &[f64],
    lambda: f64,
    link: Link,
    opts: &FitOptions,
) -> Result<FittedModel> {
    let responses = ResponseWeights::integrated(table, prior_preds, lambda)?;
    let fixed = (lambda > 0.0).then(|| prior.eta_hat());
    fit_objective(data, table, responses, link, opts, fixed)
}

fn fit_objective(
    data: &SurvivalDataset,
    table: &PersonPeriodTable,
    responses: ResponseWeights,
    link: Link,
    opts: &FitOptions,
    prior_eta: Option<&[f64]>,
) -> Result<FittedModel> {
    opts.validate()?;
    if data.n_events() == 0 {
        return Err(Error::NoEvents);
    }
    let tau = data.tau();
    let p = data.schema().p();
    if p >= table.n_rows() {
        return Err(Error::Dimension(format!(
            "{p} covariates need more than {} person-period rows",
            table.n_rows()
        )));
    }
    let estimable: Vec<bool> = table.at_risk_counts().iter().map(|&c| c > 0).collect();
    check_identifiable(table, &estimable, data.schema())?;

    let lambda = responses.lambda();
    let objective = Objective::new(table, responses, link)?;

    let mut params = match &opts.init {
        Some(init) => {
            if init.eta.len() != tau || init.beta.len() != p {
                return Err(Error::Dimension("initial parameters do not match the data".into()));
            }
            let mut init = init.clone();
            init.eta.iter_mut().for_each(|e| *e = e.clamp(ETA_MIN, ETA_MAX));
            init
        }
        None => default_init(table, objective.responses(), link)?,
    };
    for k in 0..tau {
        if !estimable[k] {
            params.eta[k] = match prior_eta {
                Some(eta) => eta[k].clamp(ETA_MIN, ETA_MAX),
                None => ETA_MIN,
            };
        }
    }
    if link == Link::Log && !log_link_feasible(&params, table) {
        return Err(Error::Domain {
            link: link.name(),
            value: max_linear_predictor(&params, table),
        });
    }

    // Parameters the optimizer may move: estimable baselines then all coefficients.
    let free: Vec<usize> = (0..tau).filter(|&k| estimable[k]).chain(tau..tau + p).collect();

    let mut current = objective.evaluate(&params, true, true)?;
    let mut trace = vec![current.value];
    let mut n_iter = 0;
    let mut last_rel_change = f64::INFINITY;
    let converged;

    loop {
        let grad = current.gradient.as_ref().unwrap();
        let (pg_max, movable) = projected_gradient(&params, grad, &free);
        if pg_max < GRADIENT_TOL || (last_rel_change < opts.tol && pg_max < POLISHED_GRADIENT_TOL) {
            converged = true;
            break;
        }
        if n_iter >= opts.max_iter {
            converged = false;
            break;
        }

        let direction = ascent_direction(current.hessian.as_ref().unwrap(), grad, &movable);
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.step_halving_max {
            let candidate = take_step(&params, &movable, &direction, step);
            if link != Link::Log || log_link_feasible(&candidate, table) {
                if let Ok(value) = objective.value(&candidate) {
                    if value >= current.value {
                        accepted = Some(candidate);
                        break;
                    }
                }
            }
            step *= 0.5;
        }
        let Some(next) = accepted else {
            converged = pg_max < STATIONARITY_TOL;
            break;
        };

        let next_eval = objective.evaluate(&next, true, true)?;
        if next_eval.value == current.value && pg_max < STATIONARITY_TOL {
            // objective no longer resolves the remaining improvement
            params = next;
            current = next_eval;
            converged = true;
            break;
        }
        last_rel_change = (next_eval.value - current.value).abs() / current.value.abs().max(1.0);
        params = next;
        current = next_eval;
        trace.push(current.value);
        n_iter += 1;
    }

    Ok(FittedModel {
        params,
        link,
        schema: data.schema().clone(),
        tau,
        converged,
        n_iter,
        final_objective: current.value,
        lambda_used: lambda,
        estimable: if prior_eta.is_some() {
            vec![true; tau]
        } else {
            estimable
        },
        objective_trace: trace,
    })
}

/// Rejects designs whose period indicators and covariates are linearly dependent.
fn check_identifiable(table: &PersonPeriodTable, estimable: &[bool], schema: &CovariateSchema) -> Result<()> {
    let periods: Vec<usize> = (0..table.tau()).filter(|&k| estimable[k]).collect();
    let m = periods.len();
    let p = table.p();
    let mut slot = vec![usize::MAX; table.tau()];
    for (s, &k) in periods.iter().enumerate() {
        slot[k] = s;
    }
    let mut gram = Array2::<f64>::zeros((m + p, m + p));
    for row in 0..table.n_rows() {
        let s = slot[table.period(row) - 1];
        let x = table.covariates(row);
        gram[[s, s]] += 1.0;
        for (j, xj) in x.iter().enumerate() {
            gram[[s, m + j]] += xj;
            for (l, xl) in x.iter().enumerate().skip(j) {
                gram[[m + j, m + l]] += xj * xl;
            }
        }
    }
    for a in 0..m + p {
        for b in (a + 1)..m + p {
            gram[[b, a]] = gram[[a, b]];
        }
    }
    match first_dependent_column(&gram, 1e-10) {
        None => Ok(()),
        Some(c) if c < m => Err(Error::SingularHessian {
            index: periods[c],
            name: format!("eta_{}", periods[c] + 1),
        }),
        Some(c) => Err(Error::SingularHessian {
            index: table.tau() + c - m,
            name: schema.names()[c - m].clone(),
        }),
    }
}

/// Zero coefficients and `eta_k = h(mean response in period k)`.
fn default_init(table: &PersonPeriodTable, responses: &ResponseWeights, link: Link) -> Result<ParamVector> {
    let tau = table.tau();
    let mut sums = vec![0.0; tau];
    let mut counts = vec![0usize; tau];
    for (row, r) in responses.values().iter().enumerate() {
        let k = table.period(row) - 1;
        sums[k] += r;
        counts[k] += 1;
    }
    let eta = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| {
            if c == 0 {
                return Ok(ETA_MIN);
            }
            let frac = (s / c as f64).clamp(HAZARD_EPS, 1.0 - 1e-6);
            Ok(link.link(frac)?.clamp(ETA_MIN, ETA_MAX))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ParamVector::new(eta, vec![0.0; table.p()]))
}

/// Max-norm of the projected gradient and the parameters free to move this iteration.
fn projected_gradient(params: &ParamVector, grad: &Array1<f64>, free: &[usize]) -> (f64, Vec<usize>) {
    let tau = params.eta.len();
    let mut max = 0.0f64;
    let mut movable = Vec::with_capacity(free.len());
    for &i in free {
        if i < tau {
            let e = params.eta[i];
            if (e <= ETA_MIN && grad[i] < 0.0) || (e >= ETA_MAX && grad[i] > 0.0) {
                continue;
            }
        }
        max = max.max(grad[i].abs());
        movable.push(i);
    }
    (max, movable)
}

/// Newton direction on the movable block, damped when `-H` is not positive definite.
fn ascent_direction(hessian: &Array2<f64>, grad: &Array1<f64>, movable: &[usize]) -> Array1<f64> {
    let m = movable.len();
    let mut neg_h = Array2::<f64>::zeros((m, m));
    let mut g = Array1::<f64>::zeros(m);
    for (a, &i) in movable.iter().enumerate() {
        g[a] = grad[i];
        for (b, &j) in movable.iter().enumerate() {
            neg_h[[a, b]] = -hessian[[i, j]];
        }
    }
    if let Ok(l) = cholesky(&neg_h, 1e-14) {
        return cholesky_solve(&l, &g);
    }
    let scale = neg_h.diag().iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
    let mut mu = 1e-6 * scale;
    while mu < 1e12 * scale {
        let mut damped = neg_h.clone();
        damped.diag_mut().iter_mut().for_each(|d| *d += mu);
        if let Ok(l) = cholesky(&damped, 1e-14) {
            return cholesky_solve(&l, &g);
        }
        mu *= 10.0;
    }
    g / scale
}

fn take_step(params: &ParamVector, movable: &[usize], direction: &Array1<f64>, step: f64) -> ParamVector {
    let tau = params.eta.len();
    let mut next = params.clone();
    for (a, &i) in movable.iter().enumerate() {
        if i < tau {
            next.eta[i] = (next.eta[i] + step * direction[a]).clamp(ETA_MIN, ETA_MAX);
        } else {
            next.beta[i - tau] += step * direction[a];
        }
    }
    next
}

fn max_linear_predictor(params: &ParamVector, table: &PersonPeriodTable) -> f64 {
    (0..table.n_rows())
        .map(|row| params.linear_predictor(table, row))
        .fold(f64::NEG_INFINITY, f64::max)
}

fn log_link_feasible(params: &ParamVector, table: &PersonPeriodTable) -> bool {
    (0..table.n_rows()).all(|row| params.linear_predictor(table, row) < -LOG_LINK_MARGIN)
}

/// Per-period hazards `g(eta_k + x'beta)` for one covariate vector.
pub fn predict_hazard(model: &FittedModel, covariates: &[f64]) -> Result<Vec<f64>> {
    if covariates.len() != model.schema.p() {
        return Err(Error::Dimension(format!(
            "expected {} covariates, got {}",
            model.schema.p(),
            covariates.len()
        )));
    }
    if let Some(k) = model.estimable.iter().position(|&e| !e) {
        return Err(Error::UnestimablePeriod(k + 1));
    }
    let xb: f64 = covariates.iter().zip(&model.params.beta).map(|(x, b)| x * b).sum();
    model
        .params
        .eta
        .iter()
        .map(|&eta| model.link.inverse(eta + xb))
        .collect()
}

/// `S(k) = prod_{j <= k} (1 - hazard_j)` for `k = 1..tau`; `S(0) = 1` is implied.
pub fn predict_survival(model: &FittedModel, covariates: &[f64]) -> Result<Vec<f64>> {
    let hazards = predict_hazard(model, covariates)?;
    let mut s = 1.0;
    Ok(hazards
        .into_iter()
        .map(|h| {
            s *= 1.0 - h;
            s
        })
        .collect())
}

/// Unweighted log-likelihood of `data` under the model's parameters.
pub fn evaluate(model: &FittedModel, data: &SurvivalDataset) -> Result<f64> {
    if data.schema() != &model.schema {
        return Err(Error::Dimension(format!(
            "data covariates [{}] do not match model covariates [{}]",
            data.schema().names().join(", "),
            model.schema.names().join(", ")
        )));
    }
    evaluate_params(&model.params, &model.estimable, model.link, data)
}

/// Unweighted log-likelihood of `data` under a prior model, aligned to the data's schema.
pub fn evaluate_prior(prior: &PriorModel, data: &SurvivalDataset) -> Result<f64> {
    let params = prior.params_for(data.schema(), prior.tau())?;
    evaluate_params(&params, &vec![true; prior.tau()], prior.link, data)
}

fn evaluate_params(params: &ParamVector, estimable: &[bool], link: Link, data: &SurvivalDataset) -> Result<f64> {
    let model_tau = params.eta.len();
    if data.tau() > model_tau {
        return Err(Error::Dimension(format!(
            "data horizon {} exceeds model horizon {model_tau}",
            data.tau()
        )));
    }
    let table = expand_person_period(data);
    let counts = table.at_risk_counts();
    if let Some(k) = (0..data.tau()).find(|&k| counts[k] > 0 && !estimable[k]) {
        return Err(Error::UnestimablePeriod(k + 1));
    }
    let params = ParamVector::new(params.eta[..data.tau()].to_vec(), params.beta.clone());
    log_likelihood(&params, &table, link)
}
