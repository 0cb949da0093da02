//! The `fit`, `predict`, `simulate` and `validate` commands.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use klsurv::fit::{fit_kl, fit_local};
use klsurv::sim::{default_eta, run_study, Arm, ScenarioConfig, Setting, StudyOutput};
use klsurv::tuning::{default_lambda_grid, fit_kl_cv, CvConfig};
use klsurv::{evaluate, evaluate_prior, expand_person_period, FitOptions, Link};
use serde_json::json;

use crate::error::{CliError, Result};
use crate::formats::{self, to_json_bytes, ModelFile};
use crate::manifest::{OutputDir, RunManifest};

pub const MODEL_FILE: &str = "model.json";
pub const FIT_REPORT_FILE: &str = "fit_report.json";
pub const CV_CURVE_FILE: &str = "cv_curve.csv";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const VALIDATION_FILE: &str = "validation.csv";
pub const REPLICATES_FILE: &str = "replicates.csv";
pub const SUMMARY_CSV_FILE: &str = "summary.csv";
pub const SUMMARY_JSON_FILE: &str = "summary.json";
pub const FIG1_FILE: &str = "fig1_validation_loglik.csv";
pub const FIG2_FILE: &str = "fig2_selected_lambda.csv";

/// Replicates per setting under `--fast`.
pub const FAST_REPLICATIONS: usize = 20;

#[derive(Debug, Parser)]
#[command(
    name = "klsurv",
    version,
    about = "Discrete-time survival models with KL-integrated prior information"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a local or KL-integrated model to a subject file.
    Fit(FitArgs),
    /// Per-period hazard and survival curves for each subject of a covariate file.
    Predict(PredictArgs),
    /// Run the simulation study.
    Simulate(SimulateArgs),
    /// Score models and priors by log-likelihood on a validation file.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Subject file: id,time,event followed by covariate columns.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "logit")]
    pub link: Link,
    /// Horizon; defaults to the largest observed time.
    #[arg(long)]
    pub tau: Option<usize>,
    /// Prior model document.
    #[arg(long, requires = "weighting")]
    pub prior: Option<PathBuf>,
    /// Fixed KL weight.
    #[arg(long, group = "weighting")]
    pub lambda: Option<f64>,
    /// Cross-validate the KL weight, e.g. `folds=5` or `folds=10,stratify=false`.
    #[arg(long, group = "weighting")]
    pub cv: Option<String>,
    /// Comma-separated candidate weights for `--cv`.
    #[arg(long, value_delimiter = ',', requires = "cv")]
    pub lambda_grid: Option<Vec<f64>>,
    /// Seed for the fold assignment.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub max_iter: usize,
    #[arg(long)]
    pub label: Option<String>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// CSV with an `id` column and one column per model covariate.
    #[arg(long)]
    pub covariates: PathBuf,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// One of a-f, or `all`.
    #[arg(long, default_value = "a")]
    pub setting: String,
    #[arg(long)]
    pub replications: Option<usize>,
    /// Shorthand for 20 replicates per setting.
    #[arg(long)]
    pub fast: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n_local: Option<usize>,
    #[arg(long)]
    pub n_validation: Option<usize>,
    #[arg(long)]
    pub tau: Option<usize>,
    /// Scenario document; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Validation subject file.
    #[arg(long)]
    pub data: PathBuf,
    /// Fitted model document; repeatable.
    #[arg(long = "model")]
    pub models: Vec<PathBuf>,
    /// Prior model document, scored as a model; repeatable.
    #[arg(long = "prior")]
    pub priors: Vec<PathBuf>,
    #[arg(long)]
    pub tau: Option<usize>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

pub fn run(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Fit(args) => cmd_fit(&args),
        Command::Predict(args) => cmd_predict(&args),
        Command::Simulate(args) => cmd_simulate(&args),
        Command::Validate(args) => cmd_validate(&args),
    }
}

/// Parses `folds=K[,stratify=BOOL]`.
pub fn parse_cv_spec(spec: &str) -> Result<(usize, bool)> {
    let mut folds = 5;
    let mut stratify = true;
    for part in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| CliError::input(format!("--cv: expected key=value, found '{part}'")))?;
        match key.trim() {
            "folds" => {
                folds = value
                    .trim()
                    .parse()
                    .map_err(|_| CliError::input(format!("--cv: folds '{value}' is not an integer")))?
            }
            "stratify" => {
                stratify = value
                    .trim()
                    .parse()
                    .map_err(|_| CliError::input(format!("--cv: stratify '{value}' is not true/false")))?
            }
            other => return Err(CliError::input(format!("--cv: unknown key '{other}'"))),
        }
    }
    Ok((folds, stratify))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn cmd_fit(args: &FitArgs) -> Result<String> {
    let data = formats::read_dataset(&args.data, args.tau)?;
    let opts = FitOptions {
        max_iter: args.max_iter,
        ..FitOptions::default()
    };
    let prior = args.prior.as_deref().map(formats::read_prior).transpose()?;
    if prior.is_none() && (args.lambda.is_some() || args.cv.is_some()) {
        return Err(CliError::input("--lambda and --cv need --prior"));
    }
    if let Some(lambda) = args.lambda {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(CliError::input(format!(
                "--lambda {lambda} must be finite and non-negative"
            )));
        }
    }

    let mut config = json!({
        "data": args.data,
        "link": args.link,
        "tau": data.tau(),
        "prior": args.prior,
        "max_iter": args.max_iter,
    });
    let mut cv_result = None;
    let (model, selection) = match (&prior, args.lambda, &args.cv) {
        (None, _, _) => (fit_local(&data, args.link, &opts)?, "none"),
        (Some(prior), Some(lambda), _) => {
            config["lambda"] = json!(lambda);
            (fit_kl(&data, prior, lambda, args.link, &opts)?, "fixed")
        }
        (Some(prior), None, Some(spec)) => {
            let (folds, stratify) = parse_cv_spec(spec)?;
            let cfg = CvConfig {
                folds,
                lambda_grid: args.lambda_grid.clone().unwrap_or_else(default_lambda_grid),
                seed: args.seed,
                stratify_on_event: stratify,
                fit: opts.clone(),
            };
            cfg.validate().map_err(|e| CliError::input(format!("--cv: {e}")))?;
            config["cv"] = json!({ "folds": folds, "stratify": stratify, "lambda_grid": cfg.lambda_grid });
            let (model, cv) = fit_kl_cv(&data, prior, args.link, &cfg)?;
            cv_result = Some(cv);
            (model, "cross-validation")
        }
        (Some(_), None, None) => return Err(CliError::input("--prior needs --lambda or --cv")),
    };

    let label = args.label.clone().unwrap_or_else(|| match selection {
        "none" => format!("local {}", args.link),
        _ => format!("kl {}", args.link),
    });
    let seed = cv_result.is_some().then_some(args.seed);
    let mut manifest = RunManifest::new("fit", seed, config)?;
    manifest.add_input(&args.data)?;
    if let Some(path) = &args.prior {
        manifest.add_input(path)?;
    }
    let mut out = OutputDir::create(&args.out, manifest)?;
    out.write(MODEL_FILE, &to_json_bytes(&ModelFile::from_model(&model, &label)))?;

    let unestimable: Vec<usize> = (1..=model.tau).filter(|&k| !model.estimable[k - 1]).collect();
    let report = json!({
        "label": label,
        "link": model.link,
        "converged": model.converged,
        "n_iter": model.n_iter,
        "final_objective": model.final_objective,
        "objective_trace": model.objective_trace,
        "lambda_used": model.lambda_used,
        "lambda_selection": selection,
        "n_subjects": data.len(),
        "n_events": data.n_events(),
        "n_person_periods": expand_person_period(&data).n_rows(),
        "unestimable_periods": unestimable,
    });
    out.write(FIT_REPORT_FILE, &to_json_bytes(&report))?;

    if let Some(cv) = &cv_result {
        let folds = cv.curve.first().map_or(0, |p| p.fold_logliks.len());
        let mut csv = String::from("lambda,mean_loglik");
        for f in 1..=folds {
            write!(csv, ",fold_{f}").unwrap();
        }
        csv.push('\n');
        for point in &cv.curve {
            write!(csv, "{},{}", point.lambda, point.mean_loglik).unwrap();
            for v in &point.fold_logliks {
                write!(csv, ",{v}").unwrap();
            }
            csv.push('\n');
        }
        out.write(CV_CURVE_FILE, csv.as_bytes())?;
    }
    out.finish()?;

    if !model.converged {
        return Err(CliError::NonConvergence { n_iter: model.n_iter });
    }
    let mut msg = format!(
        "fitted {label}: log-likelihood {:.6} after {} iterations",
        model.final_objective, model.n_iter
    );
    if let Some(cv) = &cv_result {
        write!(msg, "; cross-validated lambda {}", cv.best_lambda).unwrap();
    }
    Ok(msg)
}

pub fn cmd_predict(args: &PredictArgs) -> Result<String> {
    let (_, model) = formats::read_model(&args.model)?;
    let rows = formats::read_covariates(&args.covariates, &model.schema)?;
    let mut csv = String::from("id,period,hazard,survival\n");
    for (id, x) in &rows {
        let hazard = model.predict_hazard(x)?;
        let survival = model.predict_survival(x)?;
        debug_assert!(survival.windows(2).all(|w| w[1] <= w[0]));
        for k in 0..model.tau {
            writeln!(csv, "{id},{},{},{}", k + 1, hazard[k], survival[k]).unwrap();
        }
    }
    let config = json!({ "model": args.model, "covariates": args.covariates });
    let mut manifest = RunManifest::new("predict", None, config)?;
    manifest.add_input(&args.model)?;
    manifest.add_input(&args.covariates)?;
    let mut out = OutputDir::create(&args.out, manifest)?;
    out.write(PREDICTIONS_FILE, csv.as_bytes())?;
    out.finish()?;
    Ok(format!("predicted {} subjects over {} periods", rows.len(), model.tau))
}

fn resolve_scenario(args: &SimulateArgs) -> Result<(ScenarioConfig, Vec<Setting>)> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            serde_json::from_str::<ScenarioConfig>(&text)
                .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?
        }
        None => ScenarioConfig::default(),
    };
    let settings = if args.setting.eq_ignore_ascii_case("all") {
        Setting::ALL.to_vec()
    } else {
        vec![Setting::from_str(&args.setting).map_err(|e| CliError::input(format!("--setting: {e}")))?]
    };
    if args.fast {
        cfg.replications = FAST_REPLICATIONS;
    }
    if let Some(r) = args.replications {
        cfg.replications = r;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(n) = args.n_local {
        cfg.n_local = n;
    }
    if let Some(n) = args.n_validation {
        cfg.n_validation = n;
    }
    if let Some(tau) = args.tau {
        if cfg.eta.windows(2).any(|w| w[0] != w[1]) {
            return Err(CliError::input(
                "--tau cannot resize a period-specific eta; set tau in --config",
            ));
        }
        let level = cfg.eta.first().copied().unwrap_or_else(|| default_eta(1)[0]);
        cfg.tau = tau;
        cfg.eta = vec![level; tau];
    }
    cfg.validate().map_err(|e| CliError::input(format!("scenario: {e}")))?;
    Ok((cfg, settings))
}

fn replicates_csv(studies: &[StudyOutput]) -> String {
    let mut csv =
        String::from("setting,replicate,arm,validation_loglik,selected_lambda,converged,n_local_events,error\n");
    for study in studies {
        let setting = study.config.setting;
        for r in &study.records {
            for arm in Arm::ALL {
                let converged = match arm {
                    Arm::Kl => r.kl_converged.to_string(),
                    Arm::Local => r.local_converged.to_string(),
                    Arm::Prior => String::new(),
                };
                let lambda = if arm == Arm::Kl {
                    fmt_opt(r.selected_lambda)
                } else {
                    String::new()
                };
                let error = r.error.as_deref().unwrap_or("").replace(['"', '\n'], " ");
                let error = if error.is_empty() {
                    error
                } else {
                    format!("\"{error}\"")
                };
                writeln!(
                    csv,
                    "{setting},{},{},{},{lambda},{converged},{},{error}",
                    r.replicate + 1,
                    arm.name(),
                    fmt_opt(arm.value(r)),
                    r.n_local_events
                )
                .unwrap();
            }
        }
    }
    csv
}

fn summary_csv(studies: &[StudyOutput]) -> String {
    let mut csv = String::from("setting,arm,replications,complete,mean_loglik,median_loglik,median_lambda\n");
    for study in studies {
        let s = &study.summary;
        for arm in &s.arms {
            let lambda = match (arm.arm, &s.lambda) {
                (Arm::Kl, Some(l)) => l.median.to_string(),
                _ => String::new(),
            };
            writeln!(
                csv,
                "{},{},{},{},{},{},{lambda}",
                s.setting,
                arm.arm.name(),
                s.replications,
                s.complete,
                arm.mean,
                arm.median
            )
            .unwrap();
        }
    }
    csv
}

fn fig1_csv(studies: &[StudyOutput]) -> String {
    let mut csv = String::from("setting,replicate,arm,validation_loglik\n");
    for study in studies {
        for r in study.records.iter().filter(|r| r.is_complete()) {
            for arm in Arm::ALL {
                if let Some(v) = arm.value(r) {
                    writeln!(csv, "{},{},{},{v}", study.config.setting, r.replicate + 1, arm.name()).unwrap();
                }
            }
        }
    }
    csv
}

fn fig2_csv(studies: &[StudyOutput]) -> String {
    let mut csv = String::from("setting,replicate,selected_lambda\n");
    for study in studies {
        for r in &study.records {
            if let Some(l) = r.selected_lambda {
                writeln!(csv, "{},{},{l}", study.config.setting, r.replicate + 1).unwrap();
            }
        }
    }
    csv
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<String> {
    let (base, settings) = resolve_scenario(args)?;
    let mut studies = Vec::with_capacity(settings.len());
    for &setting in &settings {
        let cfg = ScenarioConfig {
            setting,
            ..base.clone()
        };
        studies.push(run_study(&cfg)?);
    }

    let mut config = serde_json::to_value(&base).expect("scenario serializes");
    config["setting"] = json!(settings.iter().map(|s| s.name()).collect::<Vec<_>>());
    let mut manifest = RunManifest::new("simulate", Some(base.seed), config)?;
    if let Some(path) = &args.config {
        manifest.add_input(path)?;
    }
    let mut out = OutputDir::create(&args.out, manifest)?;
    out.write(REPLICATES_FILE, replicates_csv(&studies).as_bytes())?;
    out.write(SUMMARY_CSV_FILE, summary_csv(&studies).as_bytes())?;
    let summaries: Vec<_> = studies.iter().map(|s| &s.summary).collect();
    out.write(SUMMARY_JSON_FILE, &to_json_bytes(&summaries))?;
    out.write(FIG1_FILE, fig1_csv(&studies).as_bytes())?;
    out.write(FIG2_FILE, fig2_csv(&studies).as_bytes())?;
    out.finish()?;

    let total: usize = studies.iter().map(|s| s.records.len()).sum();
    let failed: usize = studies
        .iter()
        .map(|s| {
            s.records
                .iter()
                .filter(|r| r.error.is_some() || !r.is_complete())
                .count()
        })
        .sum();
    if failed > 0 {
        return Err(CliError::StudyFailure { failed, total });
    }

    let mut msg = String::from("setting  kl          prior       local       median lambda\n");
    for s in &summaries {
        let mean = |arm| s.arm(arm).map_or(f64::NAN, |a| a.mean);
        writeln!(
            msg,
            "{:<8} {:<11.3} {:<11.3} {:<11.3} {}",
            s.setting.name(),
            mean(Arm::Kl),
            mean(Arm::Prior),
            mean(Arm::Local),
            s.lambda.as_ref().map_or(f64::NAN, |l| l.median)
        )
        .unwrap();
    }
    Ok(msg.trim_end().to_owned())
}

struct ValidationRow {
    label: String,
    kind: &'static str,
    path: PathBuf,
    link: Link,
    loglik: f64,
}

pub fn cmd_validate(args: &ValidateArgs) -> Result<String> {
    if args.models.is_empty() && args.priors.is_empty() {
        return Err(CliError::input("validate needs at least one --model or --prior"));
    }
    let data = formats::read_dataset(&args.data, args.tau)?;
    let mut rows = Vec::new();
    for path in &args.models {
        let (label, model) = formats::read_model(path)?;
        let projected = formats::project_dataset(&data, &model.schema)
            .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        rows.push(ValidationRow {
            label,
            kind: "model",
            path: path.clone(),
            link: model.link,
            loglik: evaluate(&model, &projected)?,
        });
    }
    for path in &args.priors {
        let prior = formats::read_prior(path)?;
        rows.push(ValidationRow {
            label: prior.label.clone(),
            kind: "prior",
            path: path.clone(),
            link: prior.link,
            loglik: evaluate_prior(&prior, &data)?,
        });
    }
    for row in &mut rows {
        if row.label.is_empty() {
            row.label = row
                .path
                .file_stem()
                .map_or_else(String::new, |s| s.to_string_lossy().into_owned());
        }
    }

    let mut csv = String::from("label,kind,link,path,loglik\n");
    let mut table = format!("{:<24} {:<6} {:<8} {}\n", "model", "kind", "link", "log-likelihood");
    for row in &rows {
        writeln!(
            csv,
            "\"{}\",{},{},\"{}\",{}",
            row.label.replace('"', "'"),
            row.kind,
            row.link,
            row.path.display().to_string().replace('"', "'"),
            row.loglik
        )
        .unwrap();
        writeln!(
            table,
            "{:<24} {:<6} {:<8} {:.6}",
            row.label, row.kind, row.link, row.loglik
        )
        .unwrap();
    }
    let config = json!({ "data": args.data, "tau": data.tau(), "models": args.models, "priors": args.priors });
    let mut manifest = RunManifest::new("validate", None, config)?;
    manifest.add_input(&args.data)?;
    for path in args.models.iter().chain(&args.priors) {
        manifest.add_input(path)?;
    }
    let mut out = OutputDir::create(&args.out, manifest)?;
    out.write(VALIDATION_FILE, csv.as_bytes())?;
    out.finish()?;
    Ok(table.trim_end().to_owned())
}
