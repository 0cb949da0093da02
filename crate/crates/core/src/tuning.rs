//! Cross-validated choice of the KL weight.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::{expand_person_period, SurvivalDataset};
use crate::error::{Error, Result};
use crate::fit::{evaluate, fit_kl_with_predictions, FitOptions, FittedModel};
use crate::link::Link;
use crate::prior::{prior_predictions, PriorModel};

#[derive(Debug, Clone, PartialEq)]
pub struct CvConfig {
    pub folds: usize,
    /// Strictly increasing, non-negative.
    pub lambda_grid: Vec<f64>,
    pub seed: u64,
    pub stratify_on_event: bool,
    pub fit: FitOptions,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            folds: 5,
            lambda_grid: default_lambda_grid(),
            seed: 0,
            stratify_on_event: true,
            fit: FitOptions::default(),
        }
    }
}

/// `0` followed by 20 log-spaced points from 0.01 to 10.
pub fn default_lambda_grid() -> Vec<f64> {
    let (lo, hi) = (0.01f64.log10(), 10f64.log10());
    std::iter::once(0.0)
        .chain((0..20).map(|i| 10f64.powf(lo + (hi - lo) * i as f64 / 19.0)))
        .collect()
}

impl CvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::InvalidConfig("at least 2 folds are required".into()));
        }
        if self.lambda_grid.is_empty() {
            return Err(Error::InvalidConfig("lambda grid is empty".into()));
        }
        if self.lambda_grid.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
            return Err(Error::InvalidConfig(
                "lambda grid values must be finite and non-negative".into(),
            ));
        }
        if self.lambda_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidConfig("lambda grid must be strictly increasing".into()));
        }
        self.fit.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvPoint {
    pub lambda: f64,
    /// Mean over folds of the held-out log-likelihood.
    pub mean_loglik: f64,
    pub fold_logliks: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    pub best_lambda: f64,
    pub curve: Vec<CvPoint>,
    /// Fold id per subject index.
    pub fold_assignment: Vec<usize>,
}

/// Seeded fold ids. With stratification, events and non-events are each
/// shuffled and dealt round-robin, the second stratum continuing where the
/// first stopped.
pub fn assign_folds(data: &SurvivalDataset, folds: usize, seed: u64, stratify_on_event: bool) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = data.len();
    let strata: Vec<Vec<usize>> = if stratify_on_event {
        let (events, others): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| data.subjects()[i].event);
        vec![events, others]
    } else {
        vec![(0..n).collect()]
    };
    let mut assignment = vec![0; n];
    let mut next = 0;
    for mut stratum in strata {
        stratum.shuffle(&mut rng);
        for i in stratum {
            assignment[i] = next % folds;
            next += 1;
        }
    }
    assignment
}

/// Held-out log-likelihood for every `(lambda, fold)` pair and the best lambda.
pub fn cv_select_lambda(data: &SurvivalDataset, prior: &PriorModel, link: Link, cfg: &CvConfig) -> Result<CvResult> {
    cfg.validate()?;
    if data.len() < cfg.folds {
        return Err(Error::InvalidConfig(format!(
            "{} subjects cannot fill {} folds",
            data.len(),
            cfg.folds
        )));
    }
    let fold_assignment = assign_folds(data, cfg.folds, cfg.seed, cfg.stratify_on_event);

    struct Split {
        train: SurvivalDataset,
        test: SurvivalDataset,
    }
    let splits = (0..cfg.folds)
        .map(|f| {
            let (test_idx, train_idx): (Vec<usize>, Vec<usize>) =
                (0..data.len()).partition(|&i| fold_assignment[i] == f);
            let train = data.subset(&train_idx);
            if train.n_events() == 0 {
                return Err(Error::DegenerateFold(f));
            }
            Ok(Split {
                train,
                test: data.subset(&test_idx),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let prepared = splits
        .iter()
        .map(|s| {
            let table = expand_person_period(&s.train);
            let preds = prior_predictions(prior, &table, s.train.schema())?;
            Ok((table, preds))
        })
        .collect::<Result<Vec<_>>>()?;

    let jobs: Vec<(usize, usize)> = (0..cfg.lambda_grid.len())
        .flat_map(|l| (0..cfg.folds).map(move |f| (l, f)))
        .collect();
    let scores = jobs
        .par_iter()
        .map(|&(l, f)| {
            let (table, preds) = &prepared[f];
            let split = &splits[f];
            let model = fit_kl_with_predictions(&split.train, table, prior, preds, cfg.lambda_grid[l], link, &cfg.fit)?;
            evaluate(&model, &split.test)
        })
        .collect::<Result<Vec<f64>>>()?;

    let curve: Vec<CvPoint> = cfg
        .lambda_grid
        .iter()
        .enumerate()
        .map(|(l, &lambda)| {
            let fold_logliks = scores[l * cfg.folds..(l + 1) * cfg.folds].to_vec();
            let mean_loglik = fold_logliks.iter().sum::<f64>() / cfg.folds as f64;
            CvPoint {
                lambda,
                mean_loglik,
                fold_logliks,
            }
        })
        .collect();
    Ok(CvResult {
        best_lambda: best_on_curve(&curve),
        curve,
        fold_assignment,
    })
}

/// Largest mean held-out log-likelihood; ties go to the smaller lambda.
pub fn best_on_curve(curve: &[CvPoint]) -> f64 {
    let mut best = &curve[0];
    for point in &curve[1..] {
        if point.mean_loglik > best.mean_loglik {
            best = point;
        }
    }
    best.lambda
}

/// Cross-validates lambda, then refits on all of `data` at the selected value.
pub fn fit_kl_cv(
    data: &SurvivalDataset,
    prior: &PriorModel,
    link: Link,
    cfg: &CvConfig,
) -> Result<(FittedModel, CvResult)> {
    let cv = cv_select_lambda(data, prior, link, cfg)?;
    let model = crate::fit::fit_kl(data, prior, cv.best_lambda, link, &cfg.fit)?;
    Ok((model, cv))
}
