//! On-disk formats: subject CSV files, prior and fitted-model JSON documents.

use std::collections::HashMap;
use std::fs::File;
use std::path::Path;

use indexmap::IndexMap;
use klsurv::{CovariateSchema, FittedModel, Link, ParamVector, PriorModel, SubjectRecord, SurvivalDataset};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Current version of the prior and model documents.
pub const FORMAT_VERSION: u32 = 1;

const REQUIRED_COLUMNS: [&str; 3] = ["id", "time", "event"];

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| CliError::io(path, e))
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(open(path)?))
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    match e.kind() {
        csv::ErrorKind::Io(_) => CliError::input(format!("{}: {e}", path.display())),
        _ => CliError::input(format!("{}: malformed CSV: {e}", path.display())),
    }
}

fn headers(path: &Path, reader: &mut csv::Reader<File>) -> Result<Vec<String>> {
    let headers = reader.headers().map_err(|e| csv_error(path, e))?;
    Ok(headers.iter().map(str::to_owned).collect())
}

fn parse_covariate(path: &Path, line: u64, column: usize, name: &str, raw: &str) -> Result<f64> {
    let value: f64 = raw.parse().map_err(|_| {
        CliError::input(format!(
            "{}: line {line}, column {column} ({name}): '{raw}' is not a number",
            path.display()
        ))
    })?;
    if !value.is_finite() {
        return Err(CliError::input(format!(
            "{}: line {line}, column {column} ({name}): non-finite value '{raw}'",
            path.display()
        )));
    }
    Ok(value)
}

/// Reads a subject file: header `id,time,event,<covariates...>`.
///
/// With `tau = None` the horizon is the largest observed time.
pub fn read_dataset(path: &Path, tau: Option<usize>) -> Result<SurvivalDataset> {
    let mut reader = csv_reader(path)?;
    let header = headers(path, &mut reader)?;
    if header.len() < 3 || header[..3] != REQUIRED_COLUMNS {
        return Err(CliError::input(format!(
            "{}: line 1: header must start with id,time,event (found '{}')",
            path.display(),
            header.join(",")
        )));
    }
    let schema = CovariateSchema::new(header[3..].iter().cloned())
        .map_err(|e| CliError::input(format!("{}: line 1: {e}", path.display())))?;

    let mut seen: HashMap<String, u64> = HashMap::new();
    let mut subjects = Vec::new();
    for result in reader.records() {
        let record = result.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != header.len() {
            return Err(CliError::input(format!(
                "{}: line {line}: expected {} fields, found {}",
                path.display(),
                header.len(),
                record.len()
            )));
        }
        let id = record[0].to_owned();
        if id.is_empty() {
            return Err(CliError::input(format!(
                "{}: line {line}, column 1 (id): empty id",
                path.display()
            )));
        }
        if let Some(first) = seen.insert(id.clone(), line) {
            return Err(CliError::input(format!(
                "{}: line {line}, column 1 (id): duplicate id '{id}' (first seen on line {first})",
                path.display()
            )));
        }
        let time: usize = record[1].parse().map_err(|_| {
            CliError::input(format!(
                "{}: line {line}, column 2 (time): '{}' is not a positive integer",
                path.display(),
                &record[1]
            ))
        })?;
        let upper = tau.unwrap_or(usize::MAX);
        if time < 1 || time > upper {
            let range = tau.map_or_else(|| "1..".to_string(), |t| format!("1..{t}"));
            return Err(CliError::input(format!(
                "{}: line {line}, column 2 (time): {time} is outside {range}",
                path.display()
            )));
        }
        let event = match &record[2] {
            "0" => false,
            "1" => true,
            other => {
                return Err(CliError::input(format!(
                    "{}: line {line}, column 3 (event): '{other}' is not 0 or 1",
                    path.display()
                )))
            }
        };
        let covariates = (3..header.len())
            .map(|c| parse_covariate(path, line, c + 1, &header[c], &record[c]))
            .collect::<Result<Vec<f64>>>()?;
        subjects.push(SubjectRecord::new(id, time, event, covariates));
    }
    if subjects.is_empty() {
        return Err(CliError::input(format!("{}: no subjects", path.display())));
    }
    let data = match tau {
        Some(t) => SurvivalDataset::new(schema, subjects, t),
        None => SurvivalDataset::with_observed_horizon(schema, subjects),
    };
    data.map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

/// Writes a subject file readable by [`read_dataset`].
pub fn write_dataset(path: &Path, data: &SurvivalDataset) -> Result<()> {
    let mut out = String::from("id,time,event");
    for name in data.schema().names() {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for s in data.subjects() {
        out.push_str(&format!("{},{},{}", s.id, s.observed_time, u8::from(s.event)));
        for x in &s.covariates {
            out.push_str(&format!(",{x}"));
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| CliError::io(path, e))
}

/// Reads `id` plus the named covariates, in `schema` order, from any CSV with a header.
/// Extra columns are ignored.
pub fn read_covariates(path: &Path, schema: &CovariateSchema) -> Result<Vec<(String, Vec<f64>)>> {
    let mut reader = csv_reader(path)?;
    let header = headers(path, &mut reader)?;
    let id_col = header
        .iter()
        .position(|h| h == "id")
        .ok_or_else(|| CliError::input(format!("{}: missing column 'id'", path.display())))?;
    let columns = schema
        .names()
        .iter()
        .map(|name| {
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| CliError::input(format!("{}: missing covariate column '{name}'", path.display())))
        })
        .collect::<Result<Vec<usize>>>()?;

    let mut rows = Vec::new();
    for result in reader.records() {
        let record = result.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        let x = columns
            .iter()
            .map(|&c| parse_covariate(path, line, c + 1, &header[c], record.get(c).unwrap_or("")))
            .collect::<Result<Vec<f64>>>()?;
        rows.push((record[id_col].to_owned(), x));
    }
    Ok(rows)
}

/// Re-orders a dataset's covariates to `schema`, dropping columns the schema does not use.
pub fn project_dataset(data: &SurvivalDataset, schema: &CovariateSchema) -> Result<SurvivalDataset> {
    if data.schema() == schema {
        return Ok(data.clone());
    }
    let columns = schema
        .names()
        .iter()
        .map(|name| {
            data.schema()
                .position(name)
                .ok_or_else(|| CliError::input(format!("data has no covariate '{name}'")))
        })
        .collect::<Result<Vec<usize>>>()?;
    let subjects = data
        .subjects()
        .iter()
        .map(|s| {
            let x = columns.iter().map(|&c| s.covariates[c]).collect();
            SubjectRecord::new(s.id.clone(), s.observed_time, s.event, x)
        })
        .collect();
    Ok(SurvivalDataset::new(schema.clone(), subjects, data.tau())?)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

pub fn to_json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("in-memory serialization");
    bytes.push(b'\n');
    bytes
}

fn check_version(path: &Path, version: u32) -> Result<()> {
    if version != FORMAT_VERSION {
        return Err(CliError::input(format!(
            "{}: unsupported version {version} (expected {FORMAT_VERSION})",
            path.display()
        )));
    }
    Ok(())
}

fn check_eta_len(path: &Path, tau: usize, eta: &[f64]) -> Result<()> {
    if eta.len() != tau {
        return Err(CliError::input(format!(
            "{}: eta has {} entries but tau is {tau}",
            path.display(),
            eta.len()
        )));
    }
    Ok(())
}

/// A published model: per-period baselines and name-keyed coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorFile {
    pub version: u32,
    #[serde(default)]
    pub label: String,
    pub link: Link,
    pub tau: usize,
    pub eta: Vec<f64>,
    pub coefficients: IndexMap<String, f64>,
}

impl PriorFile {
    pub fn from_prior(prior: &PriorModel) -> Self {
        Self {
            version: FORMAT_VERSION,
            label: prior.label.clone(),
            link: prior.link,
            tau: prior.tau(),
            eta: prior.eta_hat().to_vec(),
            coefficients: prior.coefficients().iter().cloned().collect(),
        }
    }
}

pub fn read_prior(path: &Path) -> Result<PriorModel> {
    let file: PriorFile = read_json(path)?;
    check_version(path, file.version)?;
    check_eta_len(path, file.tau, &file.eta)?;
    PriorModel::new(file.label, file.link, file.eta, file.coefficients.into_iter().collect())
        .map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

pub fn write_prior(path: &Path, prior: &PriorModel) -> Result<()> {
    std::fs::write(path, to_json_bytes(&PriorFile::from_prior(prior))).map_err(|e| CliError::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Convergence {
    pub converged: bool,
    pub n_iter: usize,
    pub final_objective: f64,
}

/// A fitted model. Baselines of unestimable periods are stored at the lower bound and
/// flagged in `estimable`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub version: u32,
    #[serde(default)]
    pub label: String,
    pub link: Link,
    pub tau: usize,
    pub lambda_used: f64,
    pub eta: Vec<f64>,
    pub beta: IndexMap<String, f64>,
    pub estimable: Vec<bool>,
    pub convergence: Convergence,
}

impl ModelFile {
    pub fn from_model(model: &FittedModel, label: impl Into<String>) -> Self {
        Self {
            version: FORMAT_VERSION,
            label: label.into(),
            link: model.link,
            tau: model.tau,
            lambda_used: model.lambda_used,
            eta: model.params.eta.clone(),
            beta: model
                .schema
                .names()
                .iter()
                .cloned()
                .zip(model.params.beta.iter().copied())
                .collect(),
            estimable: model.estimable.clone(),
            convergence: Convergence {
                converged: model.converged,
                n_iter: model.n_iter,
                final_objective: model.final_objective,
            },
        }
    }

    /// Rebuilds the model; the objective trace is not stored and comes back empty.
    pub fn into_model(self, path: &Path) -> Result<FittedModel> {
        check_version(path, self.version)?;
        check_eta_len(path, self.tau, &self.eta)?;
        if self.estimable.len() != self.tau {
            return Err(CliError::input(format!(
                "{}: estimable has {} entries but tau is {}",
                path.display(),
                self.estimable.len(),
                self.tau
            )));
        }
        if self.eta.iter().chain(self.beta.values()).any(|v| !v.is_finite()) {
            return Err(CliError::input(format!("{}: non-finite parameter", path.display())));
        }
        let schema = CovariateSchema::new(self.beta.keys().cloned())
            .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        Ok(FittedModel {
            params: ParamVector::new(self.eta, self.beta.into_values().collect()),
            link: self.link,
            schema,
            tau: self.tau,
            converged: self.convergence.converged,
            n_iter: self.convergence.n_iter,
            final_objective: self.convergence.final_objective,
            lambda_used: self.lambda_used,
            estimable: self.estimable,
            objective_trace: Vec::new(),
        })
    }
}

/// Reads a model document, returning its label alongside the model.
pub fn read_model(path: &Path) -> Result<(String, FittedModel)> {
    let file: ModelFile = read_json(path)?;
    let label = file.label.clone();
    Ok((label, file.into_model(path)?))
}

pub fn write_model(path: &Path, model: &FittedModel, label: &str) -> Result<()> {
    std::fs::write(path, to_json_bytes(&ModelFile::from_model(model, label))).map_err(|e| CliError::io(path, e))
}
