//! Subject-level survival data and its person-period expansion.

use std::collections::HashSet;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordered, uniquely named covariates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CovariateSchema {
    names: Vec<String>,
}

impl CovariateSchema {
    pub fn new<I, S>(names: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        let mut seen = HashSet::new();
        for name in &names {
            if name.trim().is_empty() {
                return Err(Error::InvalidData("empty covariate name".into()));
            }
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidData(format!("duplicate covariate name '{name}'")));
            }
        }
        Ok(Self { names })
    }

    /// `x1, x2, ..., xp`.
    pub fn numbered(p: usize) -> Self {
        Self {
            names: (1..=p).map(|j| format!("x{j}")).collect(),
        }
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn p(&self) -> usize {
        self.names.len()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub id: String,
    /// Last period observed, 1-based.
    pub observed_time: usize,
    /// True when the death happened at `observed_time`; false when censored there.
    pub event: bool,
    pub covariates: Vec<f64>,
}

impl SubjectRecord {
    pub fn new(id: impl Into<String>, observed_time: usize, event: bool, covariates: Vec<f64>) -> Self {
        Self {
            id: id.into(),
            observed_time,
            event,
            covariates,
        }
    }
}

/// A validated collection of subjects sharing one covariate schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalDataset {
    schema: CovariateSchema,
    subjects: Vec<SubjectRecord>,
    tau: usize,
}

impl SurvivalDataset {
    pub fn new(schema: CovariateSchema, subjects: Vec<SubjectRecord>, tau: usize) -> Result<Self> {
        if tau == 0 {
            return Err(Error::InvalidData("tau must be at least 1".into()));
        }
        for (i, s) in subjects.iter().enumerate() {
            if s.covariates.len() != schema.p() {
                return Err(Error::Dimension(format!(
                    "subject {} ('{}') has {} covariates, schema has {}",
                    i,
                    s.id,
                    s.covariates.len(),
                    schema.p()
                )));
            }
            if s.observed_time == 0 || s.observed_time > tau {
                return Err(Error::InvalidData(format!(
                    "subject '{}' has observed time {} outside 1..={tau}",
                    s.id, s.observed_time
                )));
            }
            if let Some(j) = s.covariates.iter().position(|v| !v.is_finite()) {
                return Err(Error::InvalidData(format!(
                    "subject '{}' has non-finite value for covariate '{}'",
                    s.id,
                    schema.names()[j]
                )));
            }
        }
        Ok(Self { schema, subjects, tau })
    }

    /// Uses the largest observed time as the horizon.
    pub fn with_observed_horizon(schema: CovariateSchema, subjects: Vec<SubjectRecord>) -> Result<Self> {
        let tau = subjects.iter().map(|s| s.observed_time).max().unwrap_or(1);
        Self::new(schema, subjects, tau)
    }

    pub fn schema(&self) -> &CovariateSchema {
        &self.schema
    }

    pub fn subjects(&self) -> &[SubjectRecord] {
        &self.subjects
    }

    pub fn tau(&self) -> usize {
        self.tau
    }

    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    pub fn n_events(&self) -> usize {
        self.subjects.iter().filter(|s| s.event).count()
    }

    /// Subset by subject index, keeping the schema and horizon.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            schema: self.schema.clone(),
            subjects: indices.iter().map(|&i| self.subjects[i].clone()).collect(),
            tau: self.tau,
        }
    }
}

/// One row per (subject, period at risk).
///
/// Every materialized row has at-risk indicator `Y_ik = 1`; periods after a
/// subject's observed time are simply absent.
#[derive(Debug, Clone, PartialEq)]
pub struct PersonPeriodTable {
    subject: Vec<usize>,
    period: Vec<usize>,
    death: Vec<bool>,
    covariates: Array2<f64>,
    tau: usize,
}

impl PersonPeriodTable {
    pub fn n_rows(&self) -> usize {
        self.subject.len()
    }

    pub fn tau(&self) -> usize {
        self.tau
    }

    pub fn p(&self) -> usize {
        self.covariates.ncols()
    }

    pub fn subject(&self, row: usize) -> usize {
        self.subject[row]
    }

    /// 1-based period of a row.
    pub fn period(&self, row: usize) -> usize {
        self.period[row]
    }

    pub fn at_risk(&self, _row: usize) -> bool {
        true
    }

    pub fn death(&self, row: usize) -> bool {
        self.death[row]
    }

    pub fn deaths(&self) -> &[bool] {
        &self.death
    }

    pub fn periods(&self) -> &[usize] {
        &self.period
    }

    pub fn covariates(&self, row: usize) -> ArrayView1<'_, f64> {
        self.covariates.row(row)
    }

    pub fn covariate_matrix(&self) -> &Array2<f64> {
        &self.covariates
    }

    /// Number of subjects at risk in each period (index 0 is period 1).
    pub fn at_risk_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.tau];
        for &k in &self.period {
            counts[k - 1] += 1;
        }
        counts
    }

    pub fn death_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.tau];
        for (&k, &d) in self.period.iter().zip(&self.death) {
            if d {
                counts[k - 1] += 1;
            }
        }
        counts
    }
}

pub fn expand_person_period(data: &SurvivalDataset) -> PersonPeriodTable {
    let n_rows: usize = data.subjects.iter().map(|s| s.observed_time).sum();
    let p = data.schema.p();
    let mut subject = Vec::with_capacity(n_rows);
    let mut period = Vec::with_capacity(n_rows);
    let mut death = Vec::with_capacity(n_rows);
    let mut covariates = Array2::zeros((n_rows, p));
    let mut row = 0;
    for (i, s) in data.subjects.iter().enumerate() {
        for k in 1..=s.observed_time {
            subject.push(i);
            period.push(k);
            death.push(s.event && k == s.observed_time);
            covariates
                .row_mut(row)
                .iter_mut()
                .zip(&s.covariates)
                .for_each(|(dst, &v)| *dst = v);
            row += 1;
        }
    }
    PersonPeriodTable {
        subject,
        period,
        death,
        covariates,
        tau: data.tau,
    }
}
