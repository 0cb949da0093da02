//! Synthetic discrete-time survival data and the KL / prior / local replication study.
//!
//! Covariates are multivariate normal with an AR(1) correlation matrix.
//! Event times come from sequential per-period Bernoulli draws with a
//! logistic hazard, censoring from a discrete uniform truncated at an
//! administrative horizon. Each replicate draws from its own ChaCha stream
//! of the study seed, so results do not depend on scheduling.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{CovariateSchema, SubjectRecord, SurvivalDataset};
use crate::error::{Error, Result};
use crate::fit::{evaluate, evaluate_prior, fit_local, FitOptions};
use crate::linalg::cholesky;
use crate::link::{logistic, Link};
use crate::prior::PriorModel;
use crate::tuning::{default_lambda_grid, fit_kl_cv, CvConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    /// Local coefficients equal the prior's.
    A,
    /// Half the prior's coefficients.
    B,
    /// Prior coefficients in reverse order.
    C,
    /// Prior plus new covariates at 0.2 times the prior coefficients.
    D,
    /// New covariates at 0.5 times.
    E,
    /// New covariates at 1 times.
    F,
}

impl Setting {
    pub const ALL: [Setting; 6] = [Setting::A, Setting::B, Setting::C, Setting::D, Setting::E, Setting::F];

    pub fn name(self) -> &'static str {
        match self {
            Setting::A => "a",
            Setting::B => "b",
            Setting::C => "c",
            Setting::D => "d",
            Setting::E => "e",
            Setting::F => "f",
        }
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Setting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "a" => Ok(Setting::A),
            "b" => Ok(Setting::B),
            "c" => Ok(Setting::C),
            "d" => Ok(Setting::D),
            "e" => Ok(Setting::E),
            "f" => Ok(Setting::F),
            other => Err(Error::InvalidConfig(format!(
                "unknown setting '{other}' (expected a-f)"
            ))),
        }
    }
}

pub fn ar1_covariance(p: usize, rho: f64) -> Array2<f64> {
    Array2::from_shape_fn((p, p), |(i, j)| rho.powi(i.abs_diff(j) as i32))
}

/// `n` rows drawn from `MVN(0, ar1_covariance(p, rho))`.
pub fn gen_covariates<R: Rng + ?Sized>(n: usize, p: usize, rho: f64, rng: &mut R) -> Result<Array2<f64>> {
    if p == 0 {
        return Ok(Array2::zeros((n, 0)));
    }
    if !(rho.abs() < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "AR(1) correlation {rho} must lie in (-1, 1)"
        )));
    }
    let chol = cholesky(&ar1_covariance(p, rho), 0.0)
        .map_err(|j| Error::InvalidConfig(format!("AR(1) matrix not positive definite at {j}")))?;
    let mut x = Array2::zeros((n, p));
    let mut z = vec![0.0; p];
    for i in 0..n {
        z.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
        for a in 0..p {
            x[[i, a]] = (0..=a).map(|b| chol[[a, b]] * z[b]).sum();
        }
    }
    Ok(x)
}

/// First period with a logistic-hazard Bernoulli success, or `None` when
/// the subject survives all `tau` periods.
pub fn gen_event_times<R: Rng + ?Sized>(
    x: &Array2<f64>,
    beta: &[f64],
    eta: &[f64],
    tau: usize,
    rng: &mut R,
) -> Result<Vec<Option<usize>>> {
    if x.ncols() != beta.len() {
        return Err(Error::Dimension(format!(
            "{} covariate columns but {} coefficients",
            x.ncols(),
            beta.len()
        )));
    }
    if eta.len() < tau {
        return Err(Error::Dimension(format!("{} baselines for {tau} periods", eta.len())));
    }
    Ok(x.rows()
        .into_iter()
        .map(|row| {
            let xb: f64 = row.iter().zip(beta).map(|(a, b)| a * b).sum();
            (1..=tau).find(|&k| rng.random::<f64>() < logistic(xb + eta[k - 1]))
        })
        .collect())
}

/// `min(U, admin_censor)` with `U` uniform on `1..=censor_max`.
pub fn gen_censoring<R: Rng + ?Sized>(
    n: usize,
    censor_max: usize,
    admin_censor: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if admin_censor == 0 || admin_censor > censor_max {
        return Err(Error::InvalidConfig(format!(
            "need 1 <= admin_censor ({admin_censor}) <= censor_max ({censor_max})"
        )));
    }
    Ok((0..n)
        .map(|_| rng.random_range(1..=censor_max).min(admin_censor))
        .collect())
}

/// Generating coefficients and local dimension for a setting.
pub fn make_setting(setting: Setting, beta0: &[f64]) -> Result<(Vec<f64>, usize)> {
    if beta0.is_empty() {
        return Err(Error::InvalidConfig("beta0 must be non-empty".into()));
    }
    let scaled = |c: f64| beta0.iter().map(move |b| c * b);
    let beta: Vec<f64> = match setting {
        Setting::A => beta0.to_vec(),
        Setting::B => scaled(0.5).collect(),
        Setting::C => beta0.iter().rev().copied().collect(),
        Setting::D => beta0.iter().copied().chain(scaled(0.2)).collect(),
        Setting::E => beta0.iter().copied().chain(scaled(0.5)).collect(),
        Setting::F => beta0.iter().copied().chain(scaled(1.0)).collect(),
    };
    let p = beta.len();
    Ok((beta, p))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub setting: Setting,
    pub beta0: Vec<f64>,
    pub n_local: usize,
    pub n_validation: usize,
    /// Modelling horizon.
    pub tau: usize,
    /// Baseline `eta_k`, one per period.
    pub eta: Vec<f64>,
    pub rho: f64,
    pub censor_max: usize,
    pub admin_censor: usize,
    pub replications: usize,
    pub seed: u64,
    pub folds: usize,
    pub lambda_grid: Vec<f64>,
}

/// `(0.5, -0.5, 0.5, ...)` of length `p0`.
pub fn default_beta0(p0: usize) -> Vec<f64> {
    (0..p0).map(|j| if j % 2 == 0 { 0.5 } else { -0.5 }).collect()
}

/// `logit(0.08)` in every period.
pub fn default_eta(tau: usize) -> Vec<f64> {
    vec![(0.08f64 / 0.92).ln(); tau]
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            setting: Setting::A,
            beta0: default_beta0(10),
            n_local: 300,
            n_validation: 1000,
            tau: 10,
            eta: default_eta(10),
            rho: 0.5,
            censor_max: 30,
            admin_censor: 10,
            replications: 100,
            seed: 1,
            folds: 5,
            lambda_grid: default_lambda_grid(),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if self.beta0.is_empty() {
            return fail("beta0 must be non-empty".into());
        }
        if self.tau == 0 {
            return fail("tau must be at least 1".into());
        }
        if self.eta.len() != self.tau {
            return fail(format!("eta has {} entries for tau = {}", self.eta.len(), self.tau));
        }
        if self.eta.iter().chain(&self.beta0).any(|v| !v.is_finite()) {
            return fail("eta and beta0 must be finite".into());
        }
        if !(self.rho.abs() < 1.0) {
            return fail(format!("rho {} must lie in (-1, 1)", self.rho));
        }
        if self.admin_censor == 0 || self.admin_censor > self.censor_max {
            return fail("need 1 <= admin_censor <= censor_max".into());
        }
        if self.n_local < self.folds {
            return fail(format!("n_local {} is smaller than folds {}", self.n_local, self.folds));
        }
        if self.n_validation == 0 || self.replications == 0 {
            return fail("n_validation and replications must be positive".into());
        }
        self.cv_config(0).validate()
    }

    pub fn cv_config(&self, seed: u64) -> CvConfig {
        CvConfig {
            folds: self.folds,
            lambda_grid: self.lambda_grid.clone(),
            seed,
            stratify_on_event: true,
            fit: FitOptions::default(),
        }
    }

    /// The published model: the shared baselines and `beta0` on `x1..x_p0`.
    pub fn prior(&self) -> PriorModel {
        let coefficients = self
            .beta0
            .iter()
            .enumerate()
            .map(|(j, &b)| (format!("x{}", j + 1), b))
            .collect();
        PriorModel::new("generative prior", Link::Logit, self.eta.clone(), coefficients)
            .expect("validated configuration")
    }
}

/// One synthetic dataset of `n` subjects under coefficients `beta`.
pub fn generate_dataset<R: Rng + ?Sized>(
    cfg: &ScenarioConfig,
    beta: &[f64],
    n: usize,
    id_prefix: &str,
    rng: &mut R,
) -> Result<SurvivalDataset> {
    let p = beta.len();
    let x = gen_covariates(n, p, cfg.rho, rng)?;
    let events = gen_event_times(&x, beta, &cfg.eta, cfg.tau, rng)?;
    let censoring = gen_censoring(n, cfg.censor_max, cfg.admin_censor, rng)?;
    let subjects = (0..n)
        .map(|i| {
            let c = censoring[i];
            let (time, event) = match events[i] {
                Some(t) if t <= c => (t, true),
                _ => (c.min(cfg.tau), false),
            };
            SubjectRecord::new(format!("{id_prefix}{}", i + 1), time, event, x.row(i).to_vec())
        })
        .collect();
    SurvivalDataset::new(CovariateSchema::numbered(p), subjects, cfg.tau)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub replicate: usize,
    pub selected_lambda: Option<f64>,
    pub kl_loglik: Option<f64>,
    pub prior_loglik: Option<f64>,
    pub local_loglik: Option<f64>,
    pub kl_converged: bool,
    pub local_converged: bool,
    pub n_local_events: usize,
    pub error: Option<String>,
}

impl ReplicationRecord {
    pub fn is_complete(&self) -> bool {
        self.error.is_none() && self.kl_loglik.is_some() && self.prior_loglik.is_some() && self.local_loglik.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arm {
    Kl,
    Prior,
    Local,
}

impl Arm {
    pub const ALL: [Arm; 3] = [Arm::Kl, Arm::Prior, Arm::Local];

    pub fn name(self) -> &'static str {
        match self {
            Arm::Kl => "kl",
            Arm::Prior => "prior",
            Arm::Local => "local",
        }
    }

    pub fn value(self, record: &ReplicationRecord) -> Option<f64> {
        match self {
            Arm::Kl => record.kl_loglik,
            Arm::Prior => record.prior_loglik,
            Arm::Local => record.local_loglik,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub arm: Arm,
    pub mean: f64,
    pub median: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaSummary {
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
    pub fraction_at_most_0_1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    pub setting: Setting,
    pub replications: usize,
    /// Replicates with all three arms evaluated; the statistics below use only these.
    pub complete: usize,
    pub arms: Vec<ArmSummary>,
    pub lambda: Option<LambdaSummary>,
}

impl StudySummary {
    pub fn arm(&self, arm: Arm) -> Option<&ArmSummary> {
        self.arms.iter().find(|a| a.arm == arm)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyOutput {
    pub config: ScenarioConfig,
    pub records: Vec<ReplicationRecord>,
    pub summary: StudySummary,
}

/// Independent RNG for one replicate.
pub fn replicate_rng(seed: u64, replicate: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate as u64);
    rng
}

pub fn run_replicate(cfg: &ScenarioConfig, replicate: usize) -> ReplicationRecord {
    let mut record = ReplicationRecord {
        replicate,
        selected_lambda: None,
        kl_loglik: None,
        prior_loglik: None,
        local_loglik: None,
        kl_converged: false,
        local_converged: false,
        n_local_events: 0,
        error: None,
    };
    let mut errors = Vec::new();
    let mut rng = replicate_rng(cfg.seed, replicate);
    let generated = make_setting(cfg.setting, &cfg.beta0).and_then(|(beta, _)| {
        let local = generate_dataset(cfg, &beta, cfg.n_local, "L", &mut rng)?;
        let validation = generate_dataset(cfg, &beta, cfg.n_validation, "V", &mut rng)?;
        Ok((local, validation))
    });
    let (local, validation) = match generated {
        Ok(v) => v,
        Err(e) => {
            record.error = Some(format!("generation: {e}"));
            return record;
        }
    };
    record.n_local_events = local.n_events();
    let cv_seed: u64 = rng.random();
    let prior = cfg.prior();

    match fit_kl_cv(&local, &prior, Link::Logit, &cfg.cv_config(cv_seed))
        .and_then(|(model, cv)| Ok((evaluate(&model, &validation)?, model.converged, cv.best_lambda)))
    {
        Ok((ll, converged, lambda)) => {
            record.kl_loglik = Some(ll);
            record.kl_converged = converged;
            record.selected_lambda = Some(lambda);
        }
        Err(e) => errors.push(format!("kl: {e}")),
    }
    match evaluate_prior(&prior, &validation) {
        Ok(ll) => record.prior_loglik = Some(ll),
        Err(e) => errors.push(format!("prior: {e}")),
    }
    match fit_local(&local, Link::Logit, &FitOptions::default())
        .and_then(|m| Ok((evaluate(&m, &validation)?, m.converged)))
    {
        Ok((ll, converged)) => {
            record.local_loglik = Some(ll);
            record.local_converged = converged;
        }
        Err(e) => errors.push(format!("local: {e}")),
    }
    if !errors.is_empty() {
        record.error = Some(errors.join("; "));
    }
    record
}

pub fn run_study(cfg: &ScenarioConfig) -> Result<StudyOutput> {
    cfg.validate()?;
    let records: Vec<ReplicationRecord> = (0..cfg.replications)
        .into_par_iter()
        .map(|r| run_replicate(cfg, r))
        .collect();
    let summary = summarize(cfg.setting, &records);
    Ok(StudyOutput {
        config: cfg.clone(),
        records,
        summary,
    })
}

pub fn summarize(setting: Setting, records: &[ReplicationRecord]) -> StudySummary {
    let complete: Vec<&ReplicationRecord> = records.iter().filter(|r| r.is_complete()).collect();
    let arms = if complete.is_empty() {
        Vec::new()
    } else {
        Arm::ALL
            .iter()
            .map(|&arm| {
                let values: Vec<f64> = complete.iter().filter_map(|r| arm.value(r)).collect();
                ArmSummary {
                    arm,
                    mean: mean(&values),
                    median: quantile(&values, 0.5),
                }
            })
            .collect()
    };
    let lambdas: Vec<f64> = complete.iter().filter_map(|r| r.selected_lambda).collect();
    let lambda = (!lambdas.is_empty()).then(|| LambdaSummary {
        min: quantile(&lambdas, 0.0),
        q25: quantile(&lambdas, 0.25),
        median: quantile(&lambdas, 0.5),
        q75: quantile(&lambdas, 0.75),
        max: quantile(&lambdas, 1.0),
        fraction_at_most_0_1: lambdas.iter().filter(|&&l| l <= 0.1).count() as f64 / lambdas.len() as f64,
    });
    StudySummary {
        setting,
        replications: records.len(),
        complete: complete.len(),
        arms,
        lambda,
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Linear-interpolation quantile (type 7).
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}
