//! The `dprss` command line: `fit`, `experiment` and `verify`.
//!
//! Numbers are written with 12 significant digits. Every file written through
//! `--output` gets a sibling `<output>.manifest.json`. The manifest timestamp
//! honors `SOURCE_DATE_EPOCH` so reruns can be byte-identical.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

use crate::datagen::SetupConfig;
use crate::error::DpError;
use crate::eval::{run_experiment, verify_variances, ExperimentGrid, ExperimentRow, Method, VarianceRow, MIN_VERIFY_TRIALS};
use crate::mechanisms::{
    denormalize_fit, denormalize_poly, dp_rss_fit, dp_rss_poly_fit, dp_ss_fit, dp_theil_sen_fit, normalize, Bounds,
    PrivacyBudget, TheilSenHyper,
};
use crate::noise::RandomStream;
use crate::simplex::{records_from_pairs, Record};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),

    #[error("{path}: line {line}: {reason}")]
    Input { path: String, line: u64, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },

    #[error(transparent)]
    Dp(#[from] DpError),
}

impl CliError {
    /// 2 for usage errors, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }

    fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "dprss", version, about = "Differentially private linear regression")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MechanismName {
    #[value(name = "dp_rss")]
    DpRss,
    #[value(name = "dp_ss")]
    DpSs,
    #[value(name = "dp_theil_sen")]
    DpTheilSen,
    #[value(name = "dp_rss_poly")]
    DpRssPoly,
}

impl MechanismName {
    pub fn name(self) -> &'static str {
        match self {
            MechanismName::DpRss => "dp_rss",
            MechanismName::DpSs => "dp_ss",
            MechanismName::DpTheilSen => "dp_theil_sen",
            MechanismName::DpRssPoly => "dp_rss_poly",
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit one private model to a CSV file with header `x,y`.
    Fit {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        mechanism: MechanismName,
        #[arg(long)]
        epsilon: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, allow_hyphen_values = true)]
        x_min: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        x_max: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        y_min: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        y_max: Option<f64>,
        /// Polynomial degree, dp_rss_poly only.
        #[arg(long)]
        degree: Option<usize>,
        /// Write the JSON here (plus a manifest) instead of stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run a Monte Carlo experiment described by a JSON config.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Compare empirical and analytic variances of the private statistics.
    Verify {
        #[arg(long, default_value_t = 1.0)]
        epsilon: f64,
        #[arg(long, default_value_t = 1_000_000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

/// Rounds to 12 significant digits.
pub fn round_sig12(v: f64) -> f64 {
    if !v.is_finite() || v == 0.0 {
        return v;
    }
    format!("{v:.11e}").parse().expect("formatted float parses")
}

/// Shortest decimal text of `v` rounded to 12 significant digits.
pub fn format_number(v: f64) -> String {
    if v.is_nan() {
        return "NaN".to_string();
    }
    let r = round_sig12(v);
    if r == 0.0 {
        return "0".to_string();
    }
    let text = r.to_string();
    // Display never uses exponents; keep tiny and huge magnitudes short.
    if text.len() > 20 {
        format!("{r:e}")
    } else {
        text
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub seed: u64,
    pub budget: f64,
    pub mechanism: String,
    pub timestamp: String,
    pub output_paths: Vec<String>,
}

/// `SOURCE_DATE_EPOCH` when set, otherwise the current time, as RFC 3339 UTC.
pub fn manifest_timestamp() -> Result<String, CliError> {
    let at = match std::env::var("SOURCE_DATE_EPOCH") {
        Ok(raw) => {
            let secs: i64 = raw
                .trim()
                .parse()
                .map_err(|_| CliError::Usage(format!("SOURCE_DATE_EPOCH `{raw}` is not an integer")))?;
            chrono::DateTime::from_timestamp(secs, 0)
                .ok_or_else(|| CliError::Usage(format!("SOURCE_DATE_EPOCH `{raw}` out of range")))?
        }
        Err(_) => chrono::Utc::now(),
    };
    Ok(at.to_rfc3339_opts(chrono::SecondsFormat::Secs, true))
}

pub fn manifest_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn write_with_manifest(
    output: &Path,
    contents: &str,
    command: &str,
    seed: u64,
    budget: f64,
    mechanism: &str,
) -> Result<(), CliError> {
    write_file(output, contents)?;
    let manifest = RunManifest {
        command: command.to_string(),
        seed,
        budget: round_sig12(budget),
        mechanism: mechanism.to_string(),
        timestamp: manifest_timestamp()?,
        output_paths: vec![output.display().to_string()],
    };
    let mut json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    json.push('\n');
    write_file(&manifest_path(output), &json)
}

/// Parsed `(x, y)` pairs and the 1-based file line of each.
pub type XyRows = (Vec<(f64, f64)>, Vec<u64>);

/// Reads a CSV with mandatory header `x,y`.
pub fn read_xy_csv(path: &Path) -> Result<XyRows, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_xy_csv(&text, &path.display().to_string())
}

pub fn parse_xy_csv(text: &str, source: &str) -> Result<XyRows, CliError> {
    let input_err = |line: u64, reason: String| CliError::Input {
        path: source.to_string(),
        line,
        reason,
    };
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| input_err(1, e.to_string()))?.clone();
    let names: Vec<&str> = headers.iter().map(str::trim).collect();
    if names != ["x", "y"] {
        return Err(input_err(1, format!("expected header `x,y`, found `{}`", names.join(","))));
    }

    let mut pairs = Vec::new();
    let mut lines = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            input_err(line, e.to_string())
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let field = |i: usize, name: &str| -> Result<f64, CliError> {
            let raw = row.get(i).unwrap_or("").trim();
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(input_err(line, format!("`{name}` value `{raw}` is not a finite number"))),
            }
        };
        pairs.push((field(0, "x")?, field(1, "y")?));
        lines.push(line);
    }
    Ok((pairs, lines))
}

fn bounds_from_flags(
    x_min: Option<f64>,
    x_max: Option<f64>,
    y_min: Option<f64>,
    y_max: Option<f64>,
) -> Result<Option<Bounds>, CliError> {
    match (x_min, x_max, y_min, y_max) {
        (None, None, None, None) => Ok(None),
        (Some(a), Some(b), Some(c), Some(d)) => Ok(Some(Bounds::new(a, b, c, d)?)),
        _ => Err(CliError::Usage(
            "--x-min, --x-max, --y-min and --y-max must be given together".to_string(),
        )),
    }
}

#[derive(Debug, Serialize)]
struct FitOutput {
    mechanism: &'static str,
    epsilon: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha_hat: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    beta_hat: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    coeffs: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    degree: Option<usize>,
    fallback: bool,
    seed: u64,
}

/// Parameters of one `fit` invocation.
#[derive(Debug, Clone)]
pub struct FitRequest {
    pub mechanism: MechanismName,
    pub epsilon: f64,
    pub seed: u64,
    pub bounds: Option<Bounds>,
    pub degree: Option<usize>,
}

/// Runs a fit on parsed pairs and returns the JSON document (no trailing newline).
pub fn fit_json(pairs: &[(f64, f64)], lines: &[u64], source: &str, req: &FitRequest) -> Result<String, CliError> {
    let budget = PrivacyBudget::new(req.epsilon)?;
    match (req.mechanism, req.degree) {
        (MechanismName::DpRssPoly, None) => {
            return Err(CliError::Usage("dp_rss_poly requires --degree".to_string()));
        }
        (m, Some(_)) if m != MechanismName::DpRssPoly => {
            return Err(CliError::Usage("--degree applies to dp_rss_poly only".to_string()));
        }
        _ => {}
    }

    let records: Vec<Record> = match &req.bounds {
        Some(b) => normalize(pairs, b),
        None => records_from_pairs(pairs),
    }
    .map_err(|e| match e {
        DpError::OutOfBounds { index, reason } => CliError::Input {
            path: source.to_string(),
            line: lines.get(index).copied().unwrap_or(0),
            reason: format!("row {}: {reason}", index + 1),
        },
        other => CliError::Dp(other),
    })?;

    let mut stream = RandomStream::new(req.seed, 0);
    let bounds = req.bounds.unwrap_or_else(Bounds::unit);
    let mut out = FitOutput {
        mechanism: req.mechanism.name(),
        epsilon: round_sig12(req.epsilon),
        alpha_hat: None,
        beta_hat: None,
        coeffs: None,
        degree: None,
        fallback: false,
        seed: req.seed,
    };
    if let Some(degree) = req.degree {
        let fit = denormalize_poly(&dp_rss_poly_fit(&records, degree, budget, &mut stream)?, &bounds);
        out.coeffs = Some(fit.coeffs.iter().map(|&c| round_sig12(c)).collect());
        out.degree = Some(degree);
        out.fallback = fit.fallback;
    } else {
        let fit = match req.mechanism {
            MechanismName::DpRss => dp_rss_fit(&records, budget, &mut stream),
            MechanismName::DpSs => dp_ss_fit(&records, budget, &mut stream),
            MechanismName::DpTheilSen => dp_theil_sen_fit(&records, budget, TheilSenHyper::default(), &mut stream),
            MechanismName::DpRssPoly => unreachable!("degree checked above"),
        };
        let fit = denormalize_fit(fit, &bounds);
        out.alpha_hat = Some(round_sig12(fit.alpha_hat));
        out.beta_hat = Some(round_sig12(fit.beta_hat));
        out.fallback = fit.fallback;
    }
    Ok(serde_json::to_string(&out).expect("finite fit serializes"))
}

const CONFIG_KEYS: [&str; 9] = [
    "n",
    "alpha",
    "beta",
    "sigma",
    "seed",
    "epsilons",
    "iterations",
    "methods",
    "fresh_data_per_iteration",
];

fn field_err(field: &str, reason: impl Into<String>) -> CliError {
    CliError::Dp(DpError::Config {
        field: field.to_string(),
        reason: reason.into(),
    })
}

fn req_f64(obj: &serde_json::Map<String, Value>, key: &str) -> Result<f64, CliError> {
    obj.get(key)
        .ok_or_else(|| field_err(key, "missing"))?
        .as_f64()
        .ok_or_else(|| field_err(key, "must be a number"))
}

fn req_u64(obj: &serde_json::Map<String, Value>, key: &str) -> Result<u64, CliError> {
    obj.get(key)
        .ok_or_else(|| field_err(key, "missing"))?
        .as_u64()
        .ok_or_else(|| field_err(key, "must be a non-negative integer"))
}

/// Parses an experiment config. Unknown keys are rejected. `epsilons`
/// defaults to the standard grid, `methods` to all three line mechanisms.
pub fn parse_experiment_config(text: &str) -> Result<(SetupConfig, ExperimentGrid), CliError> {
    let root: Value = serde_json::from_str(text).map_err(|e| field_err("<root>", format!("invalid JSON: {e}")))?;
    let obj = root.as_object().ok_or_else(|| field_err("<root>", "must be a JSON object"))?;
    if let Some(unknown) = obj.keys().find(|k| !CONFIG_KEYS.contains(&k.as_str())) {
        return Err(field_err(unknown, "unknown key"));
    }

    let n = usize::try_from(req_u64(obj, "n")?).map_err(|_| field_err("n", "too large"))?;
    let setup = SetupConfig {
        n,
        alpha: req_f64(obj, "alpha")?,
        beta: req_f64(obj, "beta")?,
        sigma: req_f64(obj, "sigma")?,
        seed: req_u64(obj, "seed")?,
    };
    setup.validate()?;

    let epsilons = match obj.get("epsilons") {
        None => ExperimentGrid::DEFAULT_EPSILONS.to_vec(),
        Some(v) => v
            .as_array()
            .ok_or_else(|| field_err("epsilons", "must be an array"))?
            .iter()
            .map(|e| e.as_f64().ok_or_else(|| field_err("epsilons", "entries must be numbers")))
            .collect::<Result<_, _>>()?,
    };
    let methods = match obj.get("methods") {
        None => Method::ALL.to_vec(),
        Some(v) => v
            .as_array()
            .ok_or_else(|| field_err("methods", "must be an array"))?
            .iter()
            .map(|m| {
                m.as_str()
                    .ok_or_else(|| field_err("methods", "entries must be strings"))?
                    .parse::<Method>()
                    .map_err(CliError::from)
            })
            .collect::<Result<_, _>>()?,
    };
    let fresh = match obj.get("fresh_data_per_iteration") {
        None => false,
        Some(v) => v
            .as_bool()
            .ok_or_else(|| field_err("fresh_data_per_iteration", "must be a boolean"))?,
    };
    let iterations = usize::try_from(req_u64(obj, "iterations")?).map_err(|_| field_err("iterations", "too large"))?;
    let grid = ExperimentGrid {
        epsilons,
        iterations,
        methods,
        fresh_data_per_iteration: fresh,
    };
    grid.validate()?;
    Ok((setup, grid))
}

pub const EXPERIMENT_HEADER: &str = "method,epsilon,mean_l1,std_l1,mean_l2,std_l2,median_l1,median_l2";
pub const VERIFY_HEADER: &str = "statistic,method,empirical_var,theoretical_var,relative_error,improvement_ratio";

fn std_cell(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), format_number)
}

/// Experiment rows as CSV; `std_*` is `NA` for a single iteration.
pub fn experiment_csv(rows: &[ExperimentRow]) -> String {
    let mut out = String::from(EXPERIMENT_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.method,
            format_number(r.epsilon),
            format_number(r.mean_l1),
            std_cell(r.std_l1),
            format_number(r.mean_l2),
            std_cell(r.std_l2),
            format_number(r.median_l1),
            format_number(r.median_l2),
        )
        .expect("string write");
    }
    out
}

pub fn verify_csv(rows: &[VarianceRow]) -> String {
    let mut out = String::from(VERIFY_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.statistic.name(),
            r.method,
            format_number(r.empirical_var),
            format_number(r.theoretical_var),
            format_number(r.relative_error),
            format_number(r.improvement_ratio),
        )
        .expect("string write");
    }
    out
}

fn emit(output: Option<&Path>, contents: &str, command: &str, seed: u64, budget: f64, mechanism: &str) -> Result<(), CliError> {
    match output {
        Some(path) => write_with_manifest(path, contents, command, seed, budget, mechanism),
        None => io::stdout()
            .write_all(contents.as_bytes())
            .map_err(|e| CliError::io(Path::new("<stdout>"), e)),
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Fit {
            input,
            mechanism,
            epsilon,
            seed,
            x_min,
            x_max,
            y_min,
            y_max,
            degree,
            output,
        } => {
            let bounds = bounds_from_flags(x_min, x_max, y_min, y_max)?;
            let (pairs, lines) = read_xy_csv(&input)?;
            let req = FitRequest {
                mechanism,
                epsilon,
                seed,
                bounds,
                degree,
            };
            let mut json = fit_json(&pairs, &lines, &input.display().to_string(), &req)?;
            json.push('\n');
            emit(output.as_deref(), &json, "fit", seed, epsilon, mechanism.name())
        }
        Command::Experiment { config, output } => {
            let text = fs::read_to_string(&config).map_err(|e| CliError::io(&config, e))?;
            let (setup, grid) = parse_experiment_config(&text)?;
            let rows = run_experiment(&setup, &grid)?;
            let mut methods = grid.methods.clone();
            methods.sort();
            methods.dedup();
            let names: Vec<&str> = methods.iter().map(|m| m.name()).collect();
            let max_eps = grid.epsilons.iter().copied().fold(0.0, f64::max);
            emit(Some(&output), &experiment_csv(&rows), "experiment", setup.seed, max_eps, &names.join(","))
        }
        Command::Verify {
            epsilon,
            trials,
            seed,
            output,
        } => {
            if trials < MIN_VERIFY_TRIALS {
                return Err(CliError::Usage(format!("--trials must be at least {MIN_VERIFY_TRIALS}")));
            }
            let rows = verify_variances(epsilon, trials, &RandomStream::new(seed, 0))?;
            emit(output.as_deref(), &verify_csv(&rows), "verify", seed, epsilon, "dp_rss,dp_ss")
        }
    }
}
