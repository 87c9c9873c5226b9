//! Data ingestion, run configuration, and artifact writing.
//!
//! All artifacts are written atomically (temp file + rename) and every
//! JSON document carries a schema_version. Numeric CSV uses '.' decimal
//! points and a header row; categorical covariate columns are declared in
//! the configuration and expanded to reference-coded dummies (first level
//! dropped).

use crate::error::{invalid_arg, Error, Result};
use crate::gibbs::{run_chain, ChainConfig, ChainOutput, DensityPi};
use crate::model::{default_c_p, Dataset, Hyperparameters, Mode};
use crate::priors::{
    run_prior_check, CuspParams, MgpParams, PriorCheckSettings, PriorConfig, PriorFamily,
    PriorPropertyReport,
};
use crate::sim::{run_replicates, HarnessOptions, Scenario, ScenarioSpec};
use crate::summary::{cv_heldout_loglik, summarize_chain, SummaryReport};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Fit,
    Simulate,
    PriorCheck,
    Summarize,
}

/// A table read from CSV: header names and string cells.
#[derive(Debug, Clone)]
pub struct CsvTable {
    pub headers: Vec<String>,
    pub cells: Vec<Vec<String>>,
}

pub fn read_csv_table(path: &Path) -> Result<CsvTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Validation(format!("cannot open {}: {e}", path.display())))?;
    let headers = reader
        .headers()?
        .iter()
        .map(|s| s.to_string())
        .collect::<Vec<_>>();
    let mut cells = Vec::new();
    for record in reader.records() {
        let record = record?;
        if record.len() != headers.len() {
            return Err(Error::Validation(format!(
                "{}: row {} has {} fields, expected {}",
                path.display(),
                cells.len() + 2,
                record.len(),
                headers.len()
            )));
        }
        cells.push(record.iter().map(|s| s.to_string()).collect());
    }
    Ok(CsvTable { headers, cells })
}

/// Parse a purely numeric table.
pub fn read_csv_matrix(path: &Path) -> Result<(Vec<String>, Array2<f64>)> {
    let table = read_csv_table(path)?;
    let (n, m) = (table.cells.len(), table.headers.len());
    let mut out = Array2::<f64>::zeros((n, m));
    for (i, row) in table.cells.iter().enumerate() {
        for (j, cell) in row.iter().enumerate() {
            out[(i, j)] = cell.parse::<f64>().map_err(|_| {
                Error::Validation(format!(
                    "{}: non-numeric value '{}' at row {}, column '{}'",
                    path.display(),
                    cell,
                    i + 1,
                    table.headers[j]
                ))
            })?;
        }
    }
    Ok((table.headers, out))
}

/// Expand declared categorical columns into reference-coded dummies (the
/// first level in sorted order is dropped) and parse the rest as numeric.
pub fn encode_design_matrix(
    table: &CsvTable,
    categorical: &[String],
    path_label: &str,
) -> Result<(Vec<String>, Array2<f64>)> {
    let n = table.cells.len();
    let mut headers = Vec::new();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    for (j, name) in table.headers.iter().enumerate() {
        if categorical.contains(name) {
            let mut levels: Vec<String> = table
                .cells
                .iter()
                .map(|row| row[j].clone())
                .collect::<std::collections::BTreeSet<_>>()
                .into_iter()
                .collect();
            if levels.len() < 2 {
                return Err(Error::Validation(format!(
                    "{path_label}: categorical column '{name}' has fewer than 2 levels"
                )));
            }
            let reference = levels.remove(0);
            let _ = reference;
            for level in levels {
                headers.push(format!("{name}={level}"));
                columns.push(
                    table
                        .cells
                        .iter()
                        .map(|row| (row[j] == level) as u8 as f64)
                        .collect(),
                );
            }
        } else {
            headers.push(name.clone());
            let mut col = Vec::with_capacity(n);
            for (i, row) in table.cells.iter().enumerate() {
                col.push(row[j].parse::<f64>().map_err(|_| {
                    Error::Validation(format!(
                        "{path_label}: non-numeric value '{}' at row {}, column '{name}' \
                         (declare it categorical?)",
                        row[j],
                        i + 1
                    ))
                })?);
            }
            columns.push(col);
        }
    }
    let mut out = Array2::<f64>::zeros((n, headers.len()));
    for (j, col) in columns.iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            out[(i, j)] = v;
        }
    }
    Ok((headers, out))
}

/// Columnwise zero mean and unit variance; constant columns (such as an
/// intercept) are left untouched.
pub fn standardize_columns(m: &mut Array2<f64>) {
    let (n, q) = m.dim();
    if n == 0 {
        return;
    }
    for j in 0..q {
        let mean: f64 = (0..n).map(|i| m[(i, j)]).sum::<f64>() / n as f64;
        let var: f64 = (0..n).map(|i| (m[(i, j)] - mean).powi(2)).sum::<f64>() / n as f64;
        if var < 1e-12 {
            continue;
        }
        let sd = var.sqrt();
        for i in 0..n {
            m[(i, j)] = (m[(i, j)] - mean) / sd;
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub y: String,
    #[serde(default)]
    pub x: Option<String>,
    #[serde(default)]
    pub w: Option<String>,
    #[serde(default)]
    pub categorical_x: Vec<String>,
    #[serde(default)]
    pub categorical_w: Vec<String>,
    #[serde(default)]
    pub standardize_x: bool,
    #[serde(default)]
    pub standardize_w: bool,
    /// Prepend a column of ones to x (after encoding/standardizing).
    #[serde(default)]
    pub intercept_x: bool,
}

/// Load and validate a dataset per configuration. Relative paths resolve
/// against `base`.
pub fn load_dataset(cfg: &DataConfig, mode: Mode, base: &Path) -> Result<Dataset<f64>> {
    let resolve = |s: &String| -> PathBuf {
        let p = PathBuf::from(s);
        if p.is_absolute() {
            p
        } else {
            base.join(p)
        }
    };
    let (_, y) = read_csv_matrix(&resolve(&cfg.y))?;
    let p = y.ncols();

    let x = match &cfg.x {
        None => Array2::<f64>::ones((p, 1)),
        Some(path) => {
            let table = read_csv_table(&resolve(path))?;
            let (_, mut x) = encode_design_matrix(&table, &cfg.categorical_x, path)?;
            if cfg.standardize_x {
                standardize_columns(&mut x);
            }
            if cfg.intercept_x {
                let mut with_icpt = Array2::<f64>::ones((x.nrows(), x.ncols() + 1));
                for i in 0..x.nrows() {
                    for j in 0..x.ncols() {
                        with_icpt[(i, j + 1)] = x[(i, j)];
                    }
                }
                x = with_icpt;
            }
            x
        }
    };

    let w = match &cfg.w {
        None => None,
        Some(path) => {
            let table = read_csv_table(&resolve(path))?;
            let (_, mut w) = encode_design_matrix(&table, &cfg.categorical_w, path)?;
            if cfg.standardize_w {
                standardize_columns(&mut w);
            }
            Some(w)
        }
    };

    Dataset::new(y, x, w, mode)
}

/// Partial hyperparameter overrides merged onto the p-dependent defaults.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct HyperOverrides {
    pub alpha: Option<f64>,
    pub a_theta: Option<f64>,
    pub b_theta: Option<f64>,
    pub sigma_beta: Option<f64>,
    pub a_sigma: Option<f64>,
    pub b_sigma: Option<f64>,
    pub c_p: Option<f64>,
    pub sigma_mu: Option<f64>,
    pub sigma_b: Option<f64>,
    pub psi: Option<Vec<f64>>,
}

impl HyperOverrides {
    pub fn build(&self, p: usize) -> Hyperparameters<f64> {
        let mut h = Hyperparameters::<f64>::default_for(p);
        if let Some(v) = self.alpha {
            h.alpha = v;
        }
        if let Some(v) = self.a_theta {
            h.a_theta = v;
        }
        if let Some(v) = self.b_theta {
            h.b_theta = v;
        }
        if let Some(v) = self.sigma_beta {
            h.sigma_beta = v;
        }
        if let Some(v) = self.a_sigma {
            h.a_sigma = v;
        }
        if let Some(v) = self.b_sigma {
            h.b_sigma = v;
        }
        if let Some(v) = self.c_p {
            h.c_p = v;
        }
        if let Some(v) = self.sigma_mu {
            h.sigma_mu = v;
        }
        if let Some(v) = self.sigma_b {
            h.sigma_b = v;
        }
        if let Some(v) = &self.psi {
            h.psi = Some(v.clone());
        }
        h
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ChainOverrides {
    pub n_iterations: Option<usize>,
    pub burn_in: Option<usize>,
    pub thin: Option<usize>,
    pub alpha0: Option<f64>,
    pub alpha1: Option<f64>,
    pub h_init: Option<usize>,
    pub record_log_density: Option<bool>,
    pub density_pi: Option<DensityPi>,
}

impl ChainOverrides {
    pub fn build(&self, mode: Mode, seed: u64) -> ChainConfig<f64> {
        let mut c = match mode {
            Mode::Gaussian => ChainConfig::default_gaussian(seed),
            Mode::Probit => ChainConfig::default_probit(seed),
        };
        if let Some(v) = self.n_iterations {
            c.n_iterations = v;
        }
        if let Some(v) = self.burn_in {
            c.burn_in = v;
        }
        if let Some(v) = self.thin {
            c.thin = v;
        }
        if let Some(v) = self.alpha0 {
            c.alpha0 = v;
        }
        if let Some(v) = self.alpha1 {
            c.alpha1 = v;
        }
        if let Some(v) = self.h_init {
            c.h_init = Some(v);
        }
        if let Some(v) = self.record_log_density {
            c.record_log_density = v;
        }
        if let Some(v) = self.density_pi {
            c.density_pi = v;
        }
        c
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub p: usize,
    pub k: usize,
    #[serde(default = "default_s")]
    pub s: f64,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_replicates")]
    pub n_replicates: usize,
    #[serde(default = "default_sigma2_lambda")]
    pub sigma2_lambda: f64,
    #[serde(default)]
    pub use_meta_covariates: bool,
    #[serde(default = "default_mce_thresholds")]
    pub mce_thresholds: Vec<f64>,
}

fn default_s() -> f64 {
    1.0
}
fn default_n() -> usize {
    250
}
fn default_replicates() -> usize {
    25
}
fn default_sigma2_lambda() -> f64 {
    1.0
}
fn default_mce_thresholds() -> Vec<f64> {
    vec![0.03, 0.05, 0.1]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorCheckConfig {
    #[serde(default = "default_family")]
    pub family: PriorFamily,
    #[serde(default = "default_prior_p")]
    pub p: usize,
    #[serde(default = "default_prior_h")]
    pub h: usize,
    #[serde(default = "default_prior_draws")]
    pub n_draws: usize,
    #[serde(default)]
    pub mgp: Option<MgpOverrides>,
    #[serde(default)]
    pub theta_inf: Option<f64>,
    #[serde(default)]
    pub truncation_h_grid: Option<Vec<usize>>,
    #[serde(default)]
    pub truncation_t_grid: Option<Vec<f64>>,
    #[serde(default)]
    pub concentration_h_grid: Option<Vec<usize>>,
    #[serde(default)]
    pub concentration_epsilons: Option<Vec<f64>>,
    #[serde(default)]
    pub support_p_grid: Option<Vec<usize>>,
    #[serde(default)]
    pub support_epsilon: Option<f64>,
    #[serde(default)]
    pub support_draws: Option<usize>,
}

fn default_family() -> PriorFamily {
    PriorFamily::Sis
}
fn default_prior_p() -> usize {
    10
}
fn default_prior_h() -> usize {
    10
}
fn default_prior_draws() -> usize {
    100_000
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct MgpOverrides {
    pub a1: Option<f64>,
    pub a2: Option<f64>,
    pub nu: Option<f64>,
}

/// One JSON document configuring any subcommand.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "schema_version_default")]
    pub schema_version: u32,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub mode: Option<Mode>,
    #[serde(default)]
    pub data: Option<DataConfig>,
    #[serde(default)]
    pub hyper: Option<HyperOverrides>,
    #[serde(default)]
    pub chain: Option<ChainOverrides>,
    #[serde(default)]
    pub scenario: Option<ScenarioConfig>,
    #[serde(default)]
    pub prior_check: Option<PriorCheckConfig>,
    /// Path to a chain checkpoint for `summarize`.
    #[serde(default)]
    pub chain_checkpoint: Option<String>,
    /// K-fold held-out log likelihood after a probit fit.
    #[serde(default)]
    pub cv_folds: Option<usize>,
}

fn schema_version_default() -> u32 {
    SCHEMA_VERSION
}
fn default_seed() -> u64 {
    20260810
}

/// Read a config file and apply repeatable dotted-path `key=value`
/// overrides before deserializing.
pub fn load_config(path: &Path, overrides: &[String]) -> Result<RunConfig> {
    let text = fs::read_to_string(path)?;
    let mut value: Value = serde_json::from_str(&text)?;
    for item in overrides {
        let (key, raw) = item.split_once('=').ok_or_else(|| {
            invalid_arg!("--set expects key=value, got '{item}'")
        })?;
        let parsed: Value = serde_json::from_str(raw)
            .unwrap_or_else(|_| Value::String(raw.to_string()));
        set_path(&mut value, key, parsed)?;
    }
    Ok(serde_json::from_value(value)?)
}

fn set_path(value: &mut Value, dotted: &str, new_value: Value) -> Result<()> {
    let mut node = value;
    let parts: Vec<&str> = dotted.split('.').collect();
    for (idx, part) in parts.iter().enumerate() {
        if !node.is_object() {
            *node = Value::Object(serde_json::Map::new());
        }
        let map = node.as_object_mut().unwrap();
        if idx == parts.len() - 1 {
            map.insert(part.to_string(), new_value);
            return Ok(());
        }
        node = map
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(serde_json::Map::new()));
    }
    Err(invalid_arg!("empty --set key"))
}

/// Atomic write: temp file in the same directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension("tmp-write");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

/// Write a matrix as CSV with the given column headers.
pub fn write_matrix_csv(path: &Path, headers: &[String], m: &Array2<f64>) -> Result<()> {
    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(headers)?;
        for i in 0..m.nrows() {
            let row: Vec<String> = (0..m.ncols()).map(|j| format_float(m[(i, j)])).collect();
            w.write_record(&row)?;
        }
        w.flush()?;
    }
    write_atomic(path, &buf)
}

/// Shortest round-trip float formatting (what serde/ryu produce), so CSV
/// artifacts re-parse to the same bits.
pub fn format_float(v: f64) -> String {
    let mut buf = ryu_format(v);
    if buf.ends_with(".0") {
        buf.truncate(buf.len() - 2);
    }
    buf
}

fn ryu_format(v: f64) -> String {
    serde_json::to_string(&v).unwrap_or_else(|_| v.to_string())
}

fn index_headers(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{}", i + 1)).collect()
}

/// Everything a command writes, as (relative filename, description).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CommandOutcome {
    pub command: Command,
    pub artifacts: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TimingArtifact {
    schema_version: u32,
    seconds_total: f64,
    seconds_per_iteration: Option<f64>,
}

fn write_summary_artifacts(
    out_dir: &Path,
    report: &SummaryReport<f64>,
    artifacts: &mut Vec<String>,
) -> Result<()> {
    write_json_atomic(&out_dir.join("summary.json"), report)?;
    artifacts.push("summary.json".into());
    let p = report.lambda_map.nrows();
    let h = report.lambda_map.ncols();
    write_matrix_csv(
        &out_dir.join("lambda_map.csv"),
        &index_headers("factor", h),
        &report.lambda_map,
    )?;
    artifacts.push("lambda_map.csv".into());
    write_matrix_csv(
        &out_dir.join("beta_map.csv"),
        &index_headers("factor", h),
        &report.beta_map,
    )?;
    artifacts.push("beta_map.csv".into());
    let sigma = Array2::from_shape_fn((p, 1), |(i, _)| report.sigma_map[i]);
    write_matrix_csv(
        &out_dir.join("sigma_map.csv"),
        &["sigma2".to_string()],
        &sigma,
    )?;
    artifacts.push("sigma_map.csv".into());
    write_matrix_csv(
        &out_dir.join("correlation_mean.csv"),
        &index_headers("v", p),
        &report.posterior_mean_correlation,
    )?;
    artifacts.push("correlation_mean.csv".into());
    write_matrix_csv(
        &out_dir.join("partial_correlation_mean.csv"),
        &index_headers("v", p),
        &report.posterior_mean_partial_correlation,
    )?;
    artifacts.push("partial_correlation_mean.csv".into());

    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(["node_i", "node_j", "partial_correlation"])?;
        for e in &report.edges {
            w.write_record([
                e.node_i.to_string(),
                e.node_j.to_string(),
                format_float(e.partial_correlation),
            ])?;
        }
        w.flush()?;
    }
    write_atomic(&out_dir.join("edges.csv"), &buf)?;
    artifacts.push("edges.csv".into());

    if report.mu_map.nrows() > 0 {
        write_matrix_csv(
            &out_dir.join("mu_map.csv"),
            &index_headers("w", report.mu_map.ncols()),
            &report.mu_map,
        )?;
        artifacts.push("mu_map.csv".into());
        write_matrix_csv(
            &out_dir.join("b_map.csv"),
            &index_headers("x", report.b_map.ncols()),
            &report.b_map,
        )?;
        artifacts.push("b_map.csv".into());
    }
    Ok(())
}

fn write_chain_artifacts(
    out_dir: &Path,
    chain: &ChainOutput<f64>,
    artifacts: &mut Vec<String>,
) -> Result<()> {
    write_json_atomic(&out_dir.join("chain.json"), chain)?;
    artifacts.push("chain.json".into());

    let mut buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(["iteration", "h", "h_active"])?;
        for (i, (&h, &ha)) in chain.h_trace.iter().zip(&chain.h_active_trace).enumerate() {
            w.write_record([(i + 1).to_string(), h.to_string(), ha.to_string()])?;
        }
        w.flush()?;
    }
    write_atomic(&out_dir.join("trace.csv"), &buf)?;
    artifacts.push("trace.csv".into());

    if !chain.log_density_trace.is_empty() {
        let mut buf = Vec::new();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record(["draw", "log_density"])?;
            for (i, &d) in chain.log_density_trace.iter().enumerate() {
                w.write_record([i.to_string(), format_float(d)])?;
            }
            w.flush()?;
        }
        write_atomic(&out_dir.join("log_density.csv"), &buf)?;
        artifacts.push("log_density.csv".into());
    }
    Ok(())
}

/// Execute one command and write its artifacts under `out_dir`.
pub fn run_command(
    command: Command,
    config: &RunConfig,
    config_dir: &Path,
    out_dir: &Path,
) -> Result<CommandOutcome> {
    fs::create_dir_all(out_dir)?;
    let mut artifacts = Vec::new();
    match command {
        Command::Fit => {
            let mode = config
                .mode
                .ok_or_else(|| invalid_arg!("fit requires 'mode'"))?;
            let data_cfg = config
                .data
                .as_ref()
                .ok_or_else(|| invalid_arg!("fit requires a 'data' section"))?;
            let data = load_dataset(data_cfg, mode, config_dir)?;
            let hyper = config
                .hyper
                .clone()
                .unwrap_or_default()
                .build(data.p());
            let chain_cfg = config
                .chain
                .clone()
                .unwrap_or_default()
                .build(mode, config.seed);
            let chain = run_chain(&data, &hyper, &chain_cfg)?;
            let mut report = summarize_chain(&chain, &data, &hyper)?;
            if let Some(folds) = config.cv_folds {
                report.cv_heldout_loglik =
                    Some(cv_heldout_loglik(&data, &hyper, &chain_cfg, folds)?);
            }
            write_chain_artifacts(out_dir, &chain, &mut artifacts)?;
            write_summary_artifacts(out_dir, &report, &mut artifacts)?;
            write_json_atomic(
                &out_dir.join("timing.json"),
                &TimingArtifact {
                    schema_version: SCHEMA_VERSION,
                    seconds_total: chain.total_seconds,
                    seconds_per_iteration: Some(chain.seconds_per_iteration),
                },
            )?;
            artifacts.push("timing.json".into());
        }
        Command::Simulate => {
            let sc = config
                .scenario
                .as_ref()
                .ok_or_else(|| invalid_arg!("simulate requires a 'scenario' section"))?;
            let mut spec = ScenarioSpec::<f64>::new(sc.scenario, sc.p, sc.k, sc.s, config.seed);
            spec.n = sc.n;
            spec.n_replicates = sc.n_replicates;
            spec.sigma2_lambda = sc.sigma2_lambda;
            let mut hyper_overrides = config.hyper.clone().unwrap_or_default();
            // Elicitation default for simulations: alpha = true factor count.
            if hyper_overrides.alpha.is_none() {
                hyper_overrides.alpha = Some(sc.k as f64);
            }
            let hyper = hyper_overrides.build(sc.p);
            let chain_cfg = config
                .chain
                .clone()
                .unwrap_or_default()
                .build(Mode::Gaussian, config.seed);
            let options = HarnessOptions {
                use_meta_covariates: sc.use_meta_covariates,
                mce_thresholds: sc.mce_thresholds.clone(),
            };
            let started = std::time::Instant::now();
            let report = run_replicates(&spec, PriorFamily::Sis, &hyper, &chain_cfg, &options)?;
            write_json_atomic(&out_dir.join("aggregate.json"), &report)?;
            artifacts.push("aggregate.json".into());

            let mut buf = Vec::new();
            {
                let mut w = csv::Writer::from_writer(&mut buf);
                w.write_record(["replicate", "lpml", "covariance_mse", "mce", "e_h_active"])?;
                for m in &report.replicates {
                    w.write_record([
                        m.replicate.to_string(),
                        format_float(m.lpml),
                        format_float(m.covariance_mse),
                        format_float(m.mce),
                        format_float(m.e_h_active),
                    ])?;
                }
                w.flush()?;
            }
            write_atomic(&out_dir.join("replicates.csv"), &buf)?;
            artifacts.push("replicates.csv".into());
            write_json_atomic(
                &out_dir.join("timing.json"),
                &TimingArtifact {
                    schema_version: SCHEMA_VERSION,
                    seconds_total: started.elapsed().as_secs_f64(),
                    seconds_per_iteration: None,
                },
            )?;
            artifacts.push("timing.json".into());
        }
        Command::PriorCheck => {
            let pc = config.prior_check.clone().unwrap_or(PriorCheckConfig {
                family: PriorFamily::Sis,
                p: default_prior_p(),
                h: default_prior_h(),
                n_draws: default_prior_draws(),
                mgp: None,
                theta_inf: None,
                truncation_h_grid: None,
                truncation_t_grid: None,
                concentration_h_grid: None,
                concentration_epsilons: None,
                support_p_grid: None,
                support_epsilon: None,
                support_draws: None,
            });
            let mut hyper_overrides = config.hyper.clone().unwrap_or_default();
            if hyper_overrides.c_p.is_none() {
                hyper_overrides.c_p = Some(default_c_p(pc.p));
            }
            let hyper = hyper_overrides.build(pc.p);
            let prior_config: PriorConfig<f64> = match pc.family {
                PriorFamily::Sis => PriorConfig::Sis {
                    hyper,
                    x: Array2::ones((pc.p, 1)),
                },
                PriorFamily::Mgp => {
                    let mut params = MgpParams::default();
                    if let Some(m) = &pc.mgp {
                        if let Some(v) = m.a1 {
                            params.a1 = v;
                        }
                        if let Some(v) = m.a2 {
                            params.a2 = v;
                        }
                        if let Some(v) = m.nu {
                            params.nu = v;
                        }
                    }
                    PriorConfig::Mgp { params }
                }
                PriorFamily::Cusp => PriorConfig::Cusp {
                    hyper,
                    params: CuspParams {
                        theta_inf: pc.theta_inf.unwrap_or(0.0025),
                    },
                },
            };
            let mut settings = PriorCheckSettings {
                p: pc.p,
                h: pc.h,
                n_draws: pc.n_draws,
                seed: config.seed,
                ..PriorCheckSettings::default()
            };
            if let Some(v) = pc.truncation_h_grid {
                settings.truncation_h_grid = v;
            }
            if let Some(v) = pc.truncation_t_grid {
                settings.truncation_t_grid = v;
            }
            if let Some(v) = pc.concentration_h_grid {
                settings.concentration_h_grid = v;
            }
            if let Some(v) = pc.concentration_epsilons {
                settings.concentration_epsilons = v;
            }
            if let Some(v) = pc.support_p_grid {
                settings.support_p_grid = v;
            }
            if let Some(v) = pc.support_epsilon {
                settings.support_epsilon = v;
            }
            if let Some(v) = pc.support_draws {
                settings.support_draws = v;
            }
            let report: PriorPropertyReport = run_prior_check(&prior_config, &settings)?;
            write_json_atomic(&out_dir.join("prior_report.json"), &report)?;
            artifacts.push("prior_report.json".into());

            let mut buf = Vec::new();
            {
                let mut w = csv::Writer::from_writer(&mut buf);
                w.write_record(["column", "variance", "mcse"])?;
                for (i, (v, se)) in report
                    .shrinkage
                    .column_variances
                    .iter()
                    .zip(&report.shrinkage.column_variance_mcse)
                    .enumerate()
                {
                    w.write_record([
                        (i + 1).to_string(),
                        format_float(*v),
                        format_float(*se),
                    ])?;
                }
                w.flush()?;
            }
            write_atomic(&out_dir.join("column_variances.csv"), &buf)?;
            artifacts.push("column_variances.csv".into());
        }
        Command::Summarize => {
            let checkpoint = config
                .chain_checkpoint
                .as_ref()
                .ok_or_else(|| invalid_arg!("summarize requires 'chain_checkpoint'"))?;
            let mode = config
                .mode
                .ok_or_else(|| invalid_arg!("summarize requires 'mode'"))?;
            let data_cfg = config
                .data
                .as_ref()
                .ok_or_else(|| invalid_arg!("summarize requires a 'data' section"))?;
            let data = load_dataset(data_cfg, mode, config_dir)?;
            let path = {
                let p = PathBuf::from(checkpoint);
                if p.is_absolute() {
                    p
                } else {
                    config_dir.join(p)
                }
            };
            let chain: ChainOutput<f64> = serde_json::from_str(&fs::read_to_string(path)?)?;
            let hyper = config
                .hyper
                .clone()
                .unwrap_or_default()
                .build(data.p());
            let report = summarize_chain(&chain, &data, &hyper)?;
            write_summary_artifacts(out_dir, &report, &mut artifacts)?;
        }
    }
    Ok(CommandOutcome { command, artifacts })
}

/// Machine-readable error document for the CLI.
pub fn error_json(err: &Error) -> String {
    let mut map = BTreeMap::new();
    map.insert("schema_version", Value::from(SCHEMA_VERSION));
    map.insert("error_code", Value::from(err.code()));
    map.insert("message", Value::from(err.to_string()));
    serde_json::to_string_pretty(&map).unwrap_or_else(|_| format!("{{\"error\":\"{err}\"}}"))
}
