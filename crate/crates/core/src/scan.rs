//! Configuration-driven runs: single evolutions and parameter scans with
//! break-time extraction, fits and persisted artifacts.
//!
//! Output layout of a scan rooted at `dir`:
//!
//! ```text
//! dir/manifest.json           config echo, per-point status, file hashes
//! dir/point_<i>/trace.csv     time,n0,...,nQ
//! dir/point_<i>/summary.json  params, r_min, b_th, t_q, propagation stats
//! dir/fits.json               fit reports and excluded points
//! dir/plotdata_<form>.csv     x,t_q,fit
//! dir/timings.json            wall-clock times (not hashed)
//! ```
//!
//! Everything except `timings.json` is a deterministic function of the
//! configuration.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::basis::{self, Basis};
use crate::error::{Error, Result};
use crate::fitting::{fit, FitForm, FitOptions, FitReport};
use crate::krylov::{PropagationConfig, PropagationStats, TolProfile};
use crate::model;
use crate::observables::{self, fmt_sig, BreaktimeResult, OccupationTrace};
use crate::params::{ModelKind, ModelParams};

/// Number of points of a sweep given as a range without explicit values.
pub const DEFAULT_SWEEP_POINTS: usize = 10;

/// Tolerance used when a point is retried after a strict-tolerance failure.
pub const RELAXED_TOL: f64 = 1e-4;

/// Species-mode capacity: a number, or `"N"` for `C = N` at every point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Capacity {
    Fixed(u32),
    MatchN,
}

impl Serialize for Capacity {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Capacity::Fixed(c) => s.serialize_u32(*c),
            Capacity::MatchN => s.serialize_str("N"),
        }
    }
}

impl<'de> Deserialize<'de> for Capacity {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(u32),
            Sym(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(c) => Ok(Capacity::Fixed(c)),
            Raw::Sym(s) if s == "N" => Ok(Capacity::MatchN),
            Raw::Sym(s) => Err(serde::de::Error::custom(format!(
                "capacity must be a positive integer or \"N\", got \"{s}\""
            ))),
        }
    }
}

fn default_n() -> u32 {
    50
}

fn default_q() -> u32 {
    10
}

fn default_cm() -> f64 {
    0.016
}

fn default_capacity() -> Capacity {
    Capacity::Fixed(4)
}

/// Collective coupling used when neither `alpha` nor `lambda` is given.
pub const DEFAULT_LAMBDA: f64 = 0.8;

/// Base point of a run; defaults are the undercritical reference point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseParams {
    #[serde(rename = "N", default = "default_n")]
    pub n: u32,
    #[serde(rename = "Q", default = "default_q")]
    pub q: u32,
    /// At most one of `alpha` and `lambda` is set; `lambda = 0.8` if neither is.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(rename = "Cm", default = "default_cm")]
    pub cm: f64,
    #[serde(rename = "C", default = "default_capacity")]
    pub capacity: Capacity,
}

impl Default for BaseParams {
    fn default() -> Self {
        BaseParams {
            n: default_n(),
            q: default_q(),
            alpha: None,
            lambda: None,
            cm: default_cm(),
            capacity: default_capacity(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepVar {
    #[serde(rename = "N")]
    N,
    #[serde(rename = "Q")]
    Q,
    #[serde(rename = "C")]
    C,
    #[serde(rename = "Cm")]
    Cm,
    #[serde(rename = "lambda")]
    Lambda,
    #[serde(rename = "alpha")]
    Alpha,
}

impl SweepVar {
    fn is_integer(self) -> bool {
        matches!(self, SweepVar::N | SweepVar::Q | SweepVar::C)
    }

    pub fn name(self) -> &'static str {
        match self {
            SweepVar::N => "N",
            SweepVar::Q => "Q",
            SweepVar::C => "C",
            SweepVar::Cm => "Cm",
            SweepVar::Lambda => "lambda",
            SweepVar::Alpha => "alpha",
        }
    }
}

/// One swept variable, given either as explicit values or as an evenly spaced range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub variable: SweepVar,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub from: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
}

impl Sweep {
    /// Sweep values, strictly increasing; ranges default to 10 points.
    pub fn resolve(&self) -> Result<Vec<f64>> {
        let vals = match (&self.values, self.from, self.to) {
            (Some(v), None, None) => v.clone(),
            (None, Some(a), Some(b)) => {
                let n = self.points.unwrap_or(DEFAULT_SWEEP_POINTS);
                if n == 0 {
                    return Err(Error::Config("sweep.points must be at least 1".into()));
                }
                if n == 1 {
                    vec![a]
                } else {
                    (0..n)
                        .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
                        .collect()
                }
            }
            _ => {
                return Err(Error::Config(
                    "sweep needs either `values` or both `from` and `to`".into(),
                ))
            }
        };
        let vals: Vec<f64> = if self.variable.is_integer() {
            vals.iter().map(|v| v.round()).collect()
        } else {
            vals
        };
        if vals.is_empty() {
            return Err(Error::Config("sweep value list is empty".into()));
        }
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("sweep values must be finite".into()));
        }
        if vals.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config(
                "sweep values must be strictly increasing".into(),
            ));
        }
        if self.variable.is_integer() && vals.iter().any(|&v| v < 1.0 || v > u32::MAX as f64) {
            return Err(Error::Config(format!(
                "sweep over {} needs positive integers",
                self.variable.name()
            )));
        }
        Ok(vals)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: PathBuf::from("qbreak-out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    #[serde(default)]
    pub forms: Vec<FitForm>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_shift: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    /// Scan points evaluated concurrently.
    pub workers: usize,
    /// Memory allowed for all concurrently running points together.
    pub memory_budget_mb: u64,
    /// Retry failed points with the relaxed tolerance (marked in the output).
    pub allow_relaxed: bool,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            workers: 1,
            memory_budget_mb: 4096,
            allow_relaxed: false,
        }
    }
}

fn default_model() -> ModelKind {
    ModelKind::Npm
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    #[serde(default = "default_model")]
    pub model: ModelKind,
    #[serde(default)]
    pub params: BaseParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Sweep>,
    #[serde(default)]
    pub propagation: PropagationConfig,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub fit: FitSection,
    #[serde(default)]
    pub run: RunSection,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            model: default_model(),
            params: BaseParams::default(),
            sweep: None,
            propagation: PropagationConfig::default(),
            output: OutputSection::default(),
            fit: FitSection::default(),
            run: RunSection::default(),
        }
    }
}

impl ScanConfig {
    /// Parse a TOML document and apply `key=value` overrides (dotted keys).
    pub fn from_toml_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        for ov in overrides {
            apply_override(&mut table, ov)?;
        }
        let cfg: ScanConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Read the optional config file, then apply overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?,
            None => String::new(),
        };
        Self::from_toml_with_overrides(&text, overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.params.alpha.is_some() && self.params.lambda.is_some() {
            return Err(Error::Config(
                "set only one of params.alpha and params.lambda".into(),
            ));
        }
        self.propagation
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        if self.run.workers == 0 {
            return Err(Error::Config("run.workers must be at least 1".into()));
        }
        if self.model == ModelKind::Ppm3 {
            if self.params.q != 2 {
                return Err(Error::Config(
                    "the three-mode ring model needs Q = 2".into(),
                ));
            }
            if matches!(self.sweep.as_ref().map(|s| s.variable), Some(SweepVar::Q)) {
                return Err(Error::Config(
                    "Q cannot be swept for the three-mode ring model".into(),
                ));
            }
        }
        if let Some(s) = &self.sweep {
            s.resolve()?;
            if s.variable == SweepVar::Alpha && self.params.alpha.is_none() {
                return Err(Error::Config(
                    "sweeping alpha needs params.alpha, not params.lambda".into(),
                ));
            }
            if s.variable == SweepVar::Lambda && self.params.alpha.is_some() {
                return Err(Error::Config(
                    "sweeping lambda needs params.lambda, not params.alpha".into(),
                ));
            }
        }
        self.points()?;
        Ok(())
    }

    /// Sweep values (a single `NaN`-free placeholder when there is no sweep).
    pub fn sweep_values(&self) -> Result<Vec<f64>> {
        match &self.sweep {
            Some(s) => s.resolve(),
            None => Ok(vec![]),
        }
    }

    /// Parameters of every point, in sweep order.
    pub fn points(&self) -> Result<Vec<ModelParams>> {
        let values = self.sweep_values()?;
        if values.is_empty() {
            return Ok(vec![self.point_params(None)?]);
        }
        let var = self.sweep.as_ref().unwrap().variable;
        values
            .iter()
            .map(|&v| self.point_params(Some((var, v))))
            .collect()
    }

    fn point_params(&self, sweep: Option<(SweepVar, f64)>) -> Result<ModelParams> {
        let b = &self.params;
        let (mut n, mut q, mut cm, mut cap) = (b.n, b.q, b.cm, b.capacity);
        let (mut alpha, mut lambda) = (b.alpha, b.lambda);
        match sweep {
            Some((SweepVar::N, v)) => n = v as u32,
            Some((SweepVar::Q, v)) => q = v as u32,
            Some((SweepVar::C, v)) => cap = Capacity::Fixed(v as u32),
            Some((SweepVar::Cm, v)) => cm = v,
            Some((SweepVar::Lambda, v)) => lambda = Some(v),
            Some((SweepVar::Alpha, v)) => alpha = Some(v),
            None => {}
        }
        let capacity = match cap {
            Capacity::Fixed(c) => c,
            Capacity::MatchN => n,
        };
        let cm = if self.model == ModelKind::Ppm3 {
            0.0
        } else {
            cm
        };
        let p = match (alpha, lambda) {
            (Some(a), None) => ModelParams::new(n, q, a, cm, capacity),
            (None, Some(l)) => ModelParams::with_lambda(n, q, l, cm, capacity),
            (None, None) => ModelParams::with_lambda(n, q, DEFAULT_LAMBDA, cm, capacity),
            (Some(_), Some(_)) => unreachable!("validated"),
        };
        p.map_err(|e| Error::Config(e.to_string()))
    }

    fn fit_options(&self) -> FitOptions {
        FitOptions {
            fixed_shift: self.fit.fixed_shift,
            ..FitOptions::default()
        }
    }
}

/// Set `a.b.c = value` in a TOML table; `value` is parsed as TOML, falling back to a string.
fn apply_override(table: &mut toml::Table, ov: &str) -> Result<()> {
    let (key, raw) = ov
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override '{ov}' is not of the form key=value")))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap(),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("bad override key '{key}'")));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override key '{key}': '{p}' is not a table")))?;
    }
    let last = parts[parts.len() - 1];
    // alpha and lambda are alternatives; setting one clears the other
    if parts.len() == 2 && parts[0] == "params" {
        match last {
            "alpha" => {
                cur.remove("lambda");
            }
            "lambda" => {
                cur.remove("alpha");
            }
            _ => {}
        }
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// Bytes one point needs while running: basis table, matrix, Krylov vectors, observables.
///
/// The matrix term is a bound from the number of Hamiltonian terms.
pub fn point_memory_estimate(
    kind: ModelKind,
    params: &ModelParams,
    cfg: &PropagationConfig,
) -> Result<u64> {
    let dim = basis::dimension(params)?;
    let matrix = model::matrix_bytes_estimate(kind, params, dim);
    Ok(memory_with_matrix(params, cfg, dim, matrix))
}

/// Like [`point_memory_estimate`], with the matrix term from an exact count of
/// its entries where one is available. Costs one pass over the basis.
pub fn point_memory_counted(
    kind: ModelKind,
    params: &ModelParams,
    cfg: &PropagationConfig,
) -> Result<u64> {
    let dim = basis::dimension(params)?;
    let matrix = match model::count_nnz(kind, params)? {
        Some(nnz) => model::matrix_bytes(dim, nnz),
        None => model::matrix_bytes_estimate(kind, params, dim),
    };
    Ok(memory_with_matrix(params, cfg, dim, matrix))
}

fn memory_with_matrix(params: &ModelParams, cfg: &PropagationConfig, dim: u64, matrix: u64) -> u64 {
    let modes = params.n_modes() as u64;
    let table = dim.saturating_mul(modes * 2);
    let vectors = basis::state_vector_bytes(dim).saturating_mul(cfg.krylov_dim_max as u64 + 3);
    let ops = dim.saturating_mul(modes * 8);
    table
        .saturating_add(matrix)
        .saturating_add(vectors)
        .saturating_add(ops)
}

/// Outcome of one evolved point.
#[derive(Debug, Clone)]
pub struct PointRun {
    pub trace: OccupationTrace,
    pub stats: PropagationStats,
    pub dim: usize,
    pub nnz: usize,
    pub seconds: f64,
}

/// Build the basis and Hamiltonian of one point and record its occupations.
pub fn evolve_point(
    kind: ModelKind,
    params: &ModelParams,
    cfg: &PropagationConfig,
    memory_budget: u64,
) -> Result<PointRun> {
    let start = Instant::now();
    let basis = Basis::enumerate(params, memory_budget)?;
    let h = model::build(kind, params, &basis)?;
    let (trace, stats) = observables::record_occupations(kind, &basis, &h, cfg)?;
    Ok(PointRun {
        trace,
        stats,
        dim: basis.dim(),
        nnz: h.nnz(),
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Evolve one point, optionally retrying once with the relaxed tolerance.
fn evolve_point_with_retry(
    kind: ModelKind,
    params: &ModelParams,
    cfg: &PropagationConfig,
    memory_budget: u64,
    allow_relaxed: bool,
) -> Result<PointRun> {
    match evolve_point(kind, params, cfg, memory_budget) {
        Err(Error::Propagation { .. }) if allow_relaxed && cfg.tol < RELAXED_TOL => {
            let relaxed = PropagationConfig {
                tol: RELAXED_TOL,
                ..cfg.clone()
            };
            evolve_point(kind, params, &relaxed, memory_budget)
        }
        other => other,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PointSummary {
    pub index: usize,
    pub model: ModelKind,
    pub params: ModelParams,
    pub sweep_value: Option<f64>,
    pub lambda: f64,
    pub dim: usize,
    pub nnz: usize,
    pub tol_profile: TolProfile,
    pub closure_error: f64,
    pub stats: PropagationStats,
    pub breaktime: Option<BreaktimeResult>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PointRecord {
    pub index: usize,
    pub sweep_value: Option<f64>,
    pub params: ModelParams,
    /// `"ok"` or the error message.
    pub status: String,
    pub trace: Option<String>,
    pub summary: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitOutcome {
    pub form: FitForm,
    pub report: Option<FitReport>,
    pub error: Option<String>,
    pub plotdata: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitsFile {
    pub sweep_variable: Option<String>,
    pub b_th: Option<f64>,
    /// Indices of points used in the fits.
    pub included: Vec<usize>,
    /// Points without a threshold crossing or with a failed propagation.
    pub excluded: Vec<ExcludedPoint>,
    pub notice: Option<String>,
    pub fits: Vec<FitOutcome>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExcludedPoint {
    pub index: usize,
    pub sweep_value: Option<f64>,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config: ScanConfig,
    pub sweep_values: Vec<f64>,
    pub sweep_spacing: Option<String>,
    pub tol_profile: TolProfile,
    pub b_th: Option<f64>,
    pub error: Option<String>,
    pub points: Vec<PointRecord>,
    pub files: Vec<FileHash>,
    pub unhashed: Vec<String>,
}

/// Result of [`run_scan`].
#[derive(Debug, Clone)]
pub struct ScanResult {
    pub dir: PathBuf,
    pub b_th: Option<f64>,
    pub points: Vec<PointRecord>,
    pub breaktimes: Vec<Option<BreaktimeResult>>,
    pub traces: Vec<Option<OccupationTrace>>,
    pub fits: FitsFile,
    pub manifest: Manifest,
}

impl ScanResult {
    /// `(sweep value, t_q)` of every point with a crossing.
    pub fn crossings(&self) -> Vec<(f64, f64)> {
        self.points
            .iter()
            .zip(&self.breaktimes)
            .filter_map(|(p, b)| Some((p.sweep_value?, b.as_ref()?.t_q?)))
            .collect()
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Check every point against the memory budget before running anything.
pub fn preflight(cfg: &ScanConfig, points: &[ModelParams]) -> Result<()> {
    let budget = cfg.run.memory_budget_mb.saturating_mul(1 << 20);
    let per_point = budget / cfg.run.workers.min(points.len()).max(1) as u64;
    let mut offending = Vec::new();
    for (i, p) in points.iter().enumerate() {
        // the cheap bound is loose for many species; count before rejecting
        let estimate = point_memory_estimate(cfg.model, p, &cfg.propagation).and_then(|b| {
            if b <= per_point {
                Ok(b)
            } else {
                point_memory_counted(cfg.model, p, &cfg.propagation)
            }
        });
        match estimate {
            Ok(b) if b <= per_point => {}
            Ok(b) => offending.push(format!("point {i} ({p}): needs ~{} MiB", b >> 20)),
            Err(e) => offending.push(format!("point {i} ({p}): {e}")),
        }
    }
    if offending.is_empty() {
        Ok(())
    } else {
        Err(Error::Resource(format!(
            "points exceed the memory budget of {} MiB per worker: {}",
            per_point >> 20,
            offending.join("; ")
        )))
    }
}

/// Run every point of the configured sweep and persist the results.
pub fn run_scan(cfg: &ScanConfig) -> Result<ScanResult> {
    cfg.validate()?;
    let points = cfg.points()?;
    preflight(cfg, &points)?;
    let sweep_values = cfg.sweep_values()?;
    let dir = cfg.output.dir.clone();
    std::fs::create_dir_all(&dir)?;

    let budget = cfg.run.memory_budget_mb.saturating_mul(1 << 20);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.run.workers)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let runs: Vec<Result<PointRun>> = pool.install(|| {
        points
            .par_iter()
            .map(|p| {
                evolve_point_with_retry(
                    cfg.model,
                    p,
                    &cfg.propagation,
                    budget,
                    cfg.run.allow_relaxed,
                )
            })
            .collect()
    });

    let value_of = |i: usize| sweep_values.get(i).copied();
    let traces: Vec<Option<OccupationTrace>> = runs
        .iter()
        .map(|r| r.as_ref().ok().map(|run| run.trace.clone()))
        .collect();
    let ok: Vec<&OccupationTrace> = traces.iter().flatten().collect();

    let mut scan_error = None;
    let b_th = if ok.is_empty() {
        scan_error = Some("no point finished".to_string());
        None
    } else {
        match observables::threshold(&ok) {
            Ok(b) => Some(b),
            Err(e) => {
                scan_error = Some(e.to_string());
                None
            }
        }
    };

    let mut records = Vec::with_capacity(points.len());
    let mut breaktimes = Vec::with_capacity(points.len());
    let mut timings = BTreeMap::new();
    let mut files = Vec::new();
    for (i, (p, run)) in points.iter().zip(&runs).enumerate() {
        let pdir_name = format!("point_{i}");
        match run {
            Ok(run) => {
                let pdir = dir.join(&pdir_name);
                std::fs::create_dir_all(&pdir)?;
                run.trace.save_csv(&pdir.join("trace.csv"))?;
                let bt = b_th.map(|b| BreaktimeResult {
                    params: *p,
                    r_min: observables::r_min(&run.trace),
                    b_th: b,
                    t_q: observables::detect(&run.trace, b),
                });
                let summary = PointSummary {
                    index: i,
                    model: cfg.model,
                    params: *p,
                    sweep_value: value_of(i),
                    lambda: p.lambda(),
                    dim: run.dim,
                    nnz: run.nnz,
                    tol_profile: run.trace.tol_profile,
                    closure_error: run.trace.closure_error(),
                    stats: run.stats.clone(),
                    breaktime: bt.clone(),
                };
                write_json(&pdir.join("summary.json"), &summary)?;
                timings.insert(pdir_name.clone(), run.seconds);
                files.push(format!("{pdir_name}/trace.csv"));
                files.push(format!("{pdir_name}/summary.json"));
                records.push(PointRecord {
                    index: i,
                    sweep_value: value_of(i),
                    params: *p,
                    status: "ok".into(),
                    trace: Some(format!("{pdir_name}/trace.csv")),
                    summary: Some(format!("{pdir_name}/summary.json")),
                });
                breaktimes.push(bt);
            }
            Err(e) => {
                records.push(PointRecord {
                    index: i,
                    sweep_value: value_of(i),
                    params: *p,
                    status: e.to_string(),
                    trace: None,
                    summary: None,
                });
                breaktimes.push(None);
            }
        }
    }

    let fits = run_fits(cfg, &dir, &records, &breaktimes, b_th)?;
    write_json(&dir.join("fits.json"), &fits)?;
    files.push("fits.json".into());
    files.extend(fits.fits.iter().filter_map(|f| f.plotdata.clone()));
    write_json(&dir.join("timings.json"), &timings)?;

    let profile = if traces
        .iter()
        .flatten()
        .any(|t| t.tol_profile != cfg.propagation.profile())
    {
        TolProfile::Relaxed
    } else {
        cfg.propagation.profile()
    };
    let hashes = files
        .iter()
        .map(|f| {
            Ok(FileHash {
                path: f.clone(),
                sha256: sha256_file(&dir.join(f))?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest {
        tool: "qbreak".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: cfg.clone(),
        sweep_values: sweep_values.clone(),
        sweep_spacing: cfg.sweep.as_ref().map(|s| match (&s.values, s.points) {
            (Some(_), _) => "explicit values".to_string(),
            (None, p) => format!("{} evenly spaced points", p.unwrap_or(DEFAULT_SWEEP_POINTS)),
        }),
        tol_profile: profile,
        b_th,
        error: scan_error.clone(),
        points: records.clone(),
        files: hashes,
        unhashed: vec!["timings.json".into()],
    };
    write_json(&dir.join("manifest.json"), &manifest)?;

    if let Some(msg) = scan_error {
        // threshold problems abort the scan after everything is on disk
        if ok.iter().any(|t| observables::r_min(t) >= 1.0 - 1e-12) {
            let point = ok
                .iter()
                .find(|t| observables::r_min(t) >= 1.0 - 1e-12)
                .map(|t| t.params.to_string())
                .unwrap_or_default();
            return Err(Error::ThresholdUndefined { point });
        }
        if ok.is_empty() {
            let first = records
                .iter()
                .map(|r| r.status.clone())
                .next()
                .unwrap_or(msg);
            return Err(Error::Propagation {
                time: f64::NAN,
                reason: format!("every point failed; first: {first}"),
            });
        }
    }

    Ok(ScanResult {
        dir,
        b_th,
        points: records,
        breaktimes,
        traces,
        fits,
        manifest,
    })
}

fn run_fits(
    cfg: &ScanConfig,
    dir: &Path,
    records: &[PointRecord],
    breaktimes: &[Option<BreaktimeResult>],
    b_th: Option<f64>,
) -> Result<FitsFile> {
    let mut included = Vec::new();
    let mut excluded = Vec::new();
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (rec, bt) in records.iter().zip(breaktimes) {
        let reason = match (rec.status.as_str(), bt) {
            ("ok", Some(BreaktimeResult { t_q: Some(t), .. })) => match rec.sweep_value {
                Some(x) => {
                    included.push(rec.index);
                    xs.push(x);
                    ys.push(*t);
                    continue;
                }
                None => "no sweep variable".to_string(),
            },
            ("ok", Some(_)) => "threshold never crossed".to_string(),
            ("ok", None) => "threshold undefined".to_string(),
            (err, _) => format!("failed: {err}"),
        };
        excluded.push(ExcludedPoint {
            index: rec.index,
            sweep_value: rec.sweep_value,
            reason,
        });
    }
    let opts = cfg.fit_options();
    let mut fits = Vec::new();
    let mut notice = None;
    if cfg.sweep.is_none() || xs.len() < 2 {
        if !cfg.fit.forms.is_empty() {
            notice = Some(format!(
                "fits skipped: {} point(s) with a threshold crossing",
                xs.len()
            ));
        }
    } else {
        for &form in &cfg.fit.forms {
            match fit(form, &xs, &ys, &opts) {
                Ok(report) => {
                    let name = format!("plotdata_{}.csv", form.name());
                    let mut w = std::io::BufWriter::new(std::fs::File::create(dir.join(&name))?);
                    writeln!(w, "x,t_q,fit")?;
                    for (x, y) in xs.iter().zip(&ys) {
                        writeln!(
                            w,
                            "{},{},{}",
                            fmt_sig(*x),
                            fmt_sig(*y),
                            fmt_sig(report.evaluate(*x))
                        )?;
                    }
                    w.flush()?;
                    fits.push(FitOutcome {
                        form,
                        report: Some(report),
                        error: None,
                        plotdata: Some(name),
                    });
                }
                Err(e) => fits.push(FitOutcome {
                    form,
                    report: None,
                    error: Some(e.to_string()),
                    plotdata: None,
                }),
            }
        }
    }
    Ok(FitsFile {
        sweep_variable: cfg.sweep.as_ref().map(|s| s.variable.name().to_string()),
        b_th,
        included,
        excluded,
        notice,
        fits,
    })
}

/// Evolve the base point of `cfg` (no sweep) and write its trace and summary into the output directory.
pub fn run_single(cfg: &ScanConfig) -> Result<(OccupationTrace, PointSummary)> {
    let mut single = cfg.clone();
    single.sweep = None;
    single.fit.forms.clear();
    single.validate()?;
    let params = single.points()?[0];
    preflight(&single, &[params])?;
    let budget = single.run.memory_budget_mb.saturating_mul(1 << 20);
    let run = evolve_point_with_retry(
        single.model,
        &params,
        &single.propagation,
        budget,
        single.run.allow_relaxed,
    )?;
    let dir = &single.output.dir;
    std::fs::create_dir_all(dir)?;
    run.trace.save_csv(&dir.join("trace.csv"))?;
    let r = observables::r_min(&run.trace);
    let breaktime = (r < 1.0 - 1e-12).then(|| {
        let b = observables::threshold_from_minima(&[r]);
        BreaktimeResult {
            params,
            r_min: r,
            b_th: b,
            t_q: observables::detect(&run.trace, b),
        }
    });
    let summary = PointSummary {
        index: 0,
        model: single.model,
        params,
        sweep_value: None,
        lambda: params.lambda(),
        dim: run.dim,
        nnz: run.nnz,
        tol_profile: run.trace.tol_profile,
        closure_error: run.trace.closure_error(),
        stats: run.stats.clone(),
        breaktime,
    };
    write_json(&dir.join("summary.json"), &summary)?;
    Ok((run.trace, summary))
}
