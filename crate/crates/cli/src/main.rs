use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use qbreak_core::analytics;
use qbreak_core::basis::{self, Basis};
use qbreak_core::fitting::{fit, FitForm, FitOptions};
use qbreak_core::krylov::TolProfile;
use qbreak_core::model;
use qbreak_core::observables::{self, BreaktimeResult, OccupationTrace};
use qbreak_core::scan::{self, ScanConfig};
use qbreak_core::{Error, ModelKind, ModelParams};
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "qbreak",
    version,
    about = "Quantum break-time simulations of attractive bosonic models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// TOML configuration file.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set params.N=50`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory (same as `--set output.dir=...`).
    #[arg(short, long)]
    out: Option<PathBuf>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ScanConfig, Error> {
        let mut overrides = self.overrides.clone();
        if let Some(out) = &self.out {
            overrides.push(format!("output.dir={:?}", out.display().to_string()));
        }
        ScanConfig::load(self.config.as_deref(), &overrides)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Basis dimension and memory estimates for the configured base point.
    BasisInfo {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Assemble the Hamiltonian and report its size.
        #[arg(long)]
        build: bool,
        /// Write the Hamiltonian as `row col value` lines (implies --build).
        #[arg(long, value_name = "PATH")]
        dump_matrix: Option<PathBuf>,
        /// List the basis states (small bases only).
        #[arg(long)]
        states: bool,
    },
    /// Evolve the base point and write trace.csv and summary.json.
    Evolve {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Run the configured sweep, extract break-times and fit them.
    Scan {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Break-times of existing traces under a shared threshold.
    Breaktime {
        /// Trace files or point directories; each needs a summary.json next to the trace.
        #[arg(required = true)]
        traces: Vec<PathBuf>,
        /// Use this threshold instead of the one derived from the traces.
        #[arg(long)]
        b_th: Option<f64>,
    },
    /// Fit a two-column CSV (x, y).
    Fit {
        /// linear, power, log or shifted-power.
        #[arg(long)]
        form: String,
        /// Freeze the shift of the shifted power law.
        #[arg(long)]
        fixed_shift: Option<f64>,
        input: PathBuf,
    },
    /// Regime classification, break-time heuristics and coupling bounds.
    Analytic {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Input(_) | Error::Domain(_) => 2,
        Error::Resource(_) => 3,
        Error::Propagation { .. } | Error::ThresholdUndefined { .. } => 4,
        Error::Io(_) | Error::Json(_) => 1,
    }
}

fn print_json(v: &serde_json::Value) {
    use std::io::Write;
    let text = serde_json::to_string_pretty(v).expect("json");
    // a closed pipe (`qbreak ... | head`) is not an error
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn base_point(cfg: &ScanConfig) -> Result<ModelParams, Error> {
    let mut single = cfg.clone();
    single.sweep = None;
    Ok(single.points()?[0])
}

fn basis_info(
    cfg: &ScanConfig,
    build: bool,
    dump: Option<&Path>,
    states: bool,
) -> Result<(), Error> {
    let p = base_point(cfg)?;
    let dim = basis::dimension(&p)?;
    let mut out = json!({
        "model": cfg.model,
        "params": p,
        "lambda": p.lambda(),
        "dim": dim,
        "state_vector_bytes": basis::state_vector_bytes(dim),
        "matrix_bytes_estimate": model::matrix_bytes_estimate(cfg.model, &p, dim),
        "run_bytes_estimate": scan::point_memory_estimate(cfg.model, &p, &cfg.propagation)?,
        "run_bytes_counted": scan::point_memory_counted(cfg.model, &p, &cfg.propagation)?,
    });
    if build || dump.is_some() || states {
        let budget = cfg.run.memory_budget_mb.saturating_mul(1 << 20);
        let b = Basis::enumerate(&p, budget)?;
        if states {
            if b.dim() > 10_000 {
                return Err(Error::Input(format!("refusing to list {} states", b.dim())));
            }
            out["states"] = json!(b.iter().map(|s| s.to_vec()).collect::<Vec<_>>());
        }
        if build || dump.is_some() {
            let h = model::build(cfg.model, &p, &b)?;
            out["matrix"] = serde_json::to_value(h.stats())?;
            if let Some(path) = dump {
                let f = std::io::BufWriter::new(std::fs::File::create(path)?);
                h.write_coordinate(f)?;
            }
        }
    }
    print_json(&out);
    Ok(())
}

fn evolve(cfg: &ScanConfig) -> Result<(), Error> {
    let (_, summary) = scan::run_single(cfg)?;
    print_json(&json!({
        "output": cfg.output.dir,
        "summary": summary,
    }));
    Ok(())
}

fn run_scan(cfg: &ScanConfig) -> Result<(), Error> {
    let res = scan::run_scan(cfg)?;
    let points: Vec<_> = res
        .points
        .iter()
        .zip(&res.breaktimes)
        .map(|(p, b)| {
            json!({
                "index": p.index,
                "sweep_value": p.sweep_value,
                "status": p.status,
                "r_min": b.as_ref().map(|b| b.r_min),
                "t_q": b.as_ref().and_then(|b| b.t_q),
            })
        })
        .collect();
    print_json(&json!({
        "output": res.dir,
        "b_th": res.b_th,
        "points": points,
        "fits": res.fits.fits,
        "excluded": res.fits.excluded,
        "notice": res.fits.notice,
    }));
    Ok(())
}

fn load_trace(path: &Path) -> Result<OccupationTrace, Error> {
    let (trace_path, dir) = if path.is_dir() {
        (path.join("trace.csv"), path.to_path_buf())
    } else {
        (
            path.to_path_buf(),
            path.parent().map(Path::to_path_buf).unwrap_or_default(),
        )
    };
    let summary_path = dir.join("summary.json");
    let text = std::fs::read_to_string(&summary_path)
        .map_err(|e| Error::Input(format!("cannot read {}: {e}", summary_path.display())))?;
    let summary: serde_json::Value = serde_json::from_str(&text)?;
    let params: ModelParams = serde_json::from_value(summary["params"].clone())?;
    let model: ModelKind = serde_json::from_value(summary["model"].clone())?;
    let tol_profile: TolProfile = serde_json::from_value(summary["tol_profile"].clone())?;
    let f = std::fs::File::open(&trace_path)
        .map_err(|e| Error::Input(format!("cannot read {}: {e}", trace_path.display())))?;
    let (times, n_mean) = observables::read_trace_csv(std::io::BufReader::new(f))?;
    if times.is_empty() {
        return Err(Error::Input(format!(
            "{} has no samples",
            trace_path.display()
        )));
    }
    Ok(OccupationTrace {
        model,
        params,
        times,
        n_mean,
        tol_profile,
    })
}

fn breaktime(paths: &[PathBuf], b_th: Option<f64>) -> Result<(), Error> {
    let traces = paths
        .iter()
        .map(|p| load_trace(p))
        .collect::<Result<Vec<_>, _>>()?;
    let refs: Vec<&OccupationTrace> = traces.iter().collect();
    let b = match b_th {
        Some(b) if b > 0.0 && b < 1.0 => b,
        Some(b) => {
            return Err(Error::Input(format!(
                "threshold must lie in (0, 1), got {b}"
            )))
        }
        None => observables::threshold(&refs)?,
    };
    let results: Vec<BreaktimeResult> = refs
        .iter()
        .map(|t| BreaktimeResult {
            params: t.params,
            r_min: observables::r_min(t),
            b_th: b,
            t_q: observables::detect(t, b),
        })
        .collect();
    print_json(&serde_json::to_value(results)?);
    Ok(())
}

fn read_xy(path: &Path) -> Result<(Vec<f64>, Vec<f64>), Error> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Input(e.to_string()))?;
        if rec.len() < 2 {
            return Err(Error::Input(format!(
                "line {}: expected two columns",
                i + 1
            )));
        }
        match (rec[0].parse::<f64>(), rec[1].parse::<f64>()) {
            (Ok(x), Ok(y)) => {
                xs.push(x);
                ys.push(y);
            }
            // a non-numeric first line is a header
            _ if i == 0 => {}
            _ => return Err(Error::Input(format!("line {}: not a number", i + 1))),
        }
    }
    Ok((xs, ys))
}

fn run_fit(form: &str, fixed_shift: Option<f64>, input: &Path) -> Result<(), Error> {
    let form: FitForm = form.parse()?;
    let (xs, ys) = read_xy(input)?;
    let opts = FitOptions {
        fixed_shift,
        ..FitOptions::default()
    };
    let report = fit(form, &xs, &ys, &opts)?;
    print_json(&serde_json::to_value(report)?);
    Ok(())
}

fn analytic(cfg: &ScanConfig) -> Result<(), Error> {
    let p = base_point(cfg)?;
    print_json(&serde_json::to_value(analytics::summarize(&p))?);
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::BasisInfo {
            cfg,
            build,
            dump_matrix,
            states,
        } => basis_info(&cfg.load()?, build, dump_matrix.as_deref(), states),
        Command::Evolve { cfg } => evolve(&cfg.load()?),
        Command::Scan { cfg } => run_scan(&cfg.load()?),
        Command::Breaktime { traces, b_th } => breaktime(&traces, b_th),
        Command::Fit {
            form,
            fixed_shift,
            input,
        } => run_fit(&form, fixed_shift, &input),
        Command::Analytic { cfg } => analytic(&cfg.load()?),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
