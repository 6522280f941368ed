//! Command-line front end. Exit codes: 0 success, 2 usage or input error,
//! 3 numerically degenerate estimation.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::Array2;
use serde::Serialize;
use serde_json::json;

use crate::error::Error;
use crate::exec::{derive_seed, stream_rng, with_threads};
use crate::experiment::{run_experiment, write_raw_tsv, write_tsv, ExperimentSpec};
use crate::moments::{build_moments, KernelEstimator, MomentSource, ProjectedMoments};
use crate::projection::{StageDiagnostics, STAGE_ONE, STAGE_TWO};
use crate::reweight::{reweighting_stages, ProjectionBudget, Rp2Params};
use crate::simulation::{draw_dataset, CovSpec, Model};
use crate::tuning::{tune_screened, Criterion};

/// Above this many covariates `--storage auto` computes moment blocks from
/// the data instead of storing `p × p` matrices.
pub const PROJECTED_THRESHOLD: usize = 2048;

#[derive(Debug, Parser)]
#[command(name = "ssirvrp", version, about = "Sparse sliced inverse regression via random projections")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate a sparse basis from a CSV file.
    Fit(FitArgs),
    /// Choose the support size by AIC or BIC and report the criterion trace.
    Tune(TuneArgs),
    /// Write a simulated dataset as CSV plus a JSON sidecar.
    Simulate(SimulateArgs),
    /// Run a Monte-Carlo experiment described by a TOML file.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CriterionArg {
    None,
    Aic,
    Bic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Storage {
    /// Dense up to 2048 covariates, projected beyond.
    Auto,
    /// Precompute both `p × p` moment matrices.
    Dense,
    /// Compute each block from the data on demand.
    Projected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KernelArg {
    Means,
    Residual,
}

impl From<KernelArg> for KernelEstimator {
    fn from(k: KernelArg) -> Self {
        match k {
            KernelArg::Means => KernelEstimator::Means,
            KernelArg::Residual => KernelEstimator::Residual,
        }
    }
}

/// Data and estimator options shared by `fit` and `tune`.
#[derive(Debug, Clone, Args)]
pub struct EstimatorArgs {
    /// Headered CSV file with numeric columns.
    #[arg(long)]
    pub input: PathBuf,
    /// Name of the response column; every other column is a covariate.
    #[arg(long)]
    pub response: String,
    /// Dimension of the subspace.
    #[arg(long, default_value_t = 1)]
    pub d: usize,
    /// Number of response slices.
    #[arg(long, default_value_t = 10)]
    pub slices: usize,
    #[arg(long, value_enum, default_value_t = KernelArg::Means)]
    pub kernel: KernelArg,
    /// Projection size.
    #[arg(long, default_value_t = 20)]
    pub k: usize,
    /// Variables kept after the first stage [default: min(50, p)].
    #[arg(long)]
    pub l_prime: Option<usize>,
    /// First-stage budget as GROUPS,CANDIDATES.
    #[arg(long, default_value = "900,300", value_parser = parse_budget)]
    pub stage1: ProjectionBudget,
    /// Second-stage budget as GROUPS,CANDIDATES.
    #[arg(long, default_value = "600,200", value_parser = parse_budget)]
    pub stage2: ProjectionBudget,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (0 = one per core).
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    #[arg(long, value_enum, default_value_t = Storage::Auto)]
    pub storage: Storage,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub est: EstimatorArgs,
    /// Support size; required unless a criterion is given.
    #[arg(long)]
    pub l: Option<usize>,
    #[arg(long, value_enum, default_value_t = CriterionArg::None)]
    pub criterion: CriterionArg,
    /// Sparsity grid for tuning, as `A..B` (inclusive) or `a,b,c`.
    #[arg(long, value_parser = parse_grid)]
    pub grid: Option<Grid>,
    /// Directory for `coefficients.csv` and `report.json`.
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[command(flatten)]
    pub est: EstimatorArgs,
    #[arg(long, value_enum, default_value_t = CriterionArg::Bic)]
    pub criterion: CriterionArg,
    /// Sparsity grid, as `A..B` (inclusive) or `a,b,c`.
    #[arg(long, value_parser = parse_grid)]
    pub grid: Option<Grid>,
    /// Output file for the JSON result (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Model I to V.
    #[arg(long)]
    pub model: String,
    /// identity, dense, toeplitz or sparse-inverse (optionally `name:param`).
    #[arg(long, default_value = "identity")]
    pub cov: String,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub p: usize,
    /// Number of nonzero coefficient rows.
    #[arg(long, default_value_t = 5)]
    pub s: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output prefix; writes `PREFIX.csv` and `PREFIX.json`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// TOML experiment description.
    pub spec: PathBuf,
    /// Summary TSV (default: the spec's `output`, else standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-replicate TSV (default: the spec's `raw_output`, if any).
    #[arg(long)]
    pub raw: Option<PathBuf>,
    /// Overrides the spec's thread count.
    #[arg(long)]
    pub threads: Option<usize>,
}

/// A list of support sizes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grid(pub Vec<usize>);

fn parse_grid(s: &str) -> Result<Grid, String> {
    let bad = || format!("expected A..B or a comma-separated list, got '{s}'");
    if let Some((a, b)) = s.split_once("..") {
        let a: usize = a.trim().parse().map_err(|_| bad())?;
        let b: usize = b.trim().trim_start_matches('=').parse().map_err(|_| bad())?;
        if a > b {
            return Err(bad());
        }
        return Ok(Grid((a..=b).collect()));
    }
    s.split(',')
        .map(|t| t.trim().parse().map_err(|_| bad()))
        .collect::<Result<Vec<_>, _>>()
        .map(Grid)
}

fn parse_budget(s: &str) -> Result<ProjectionBudget, String> {
    let bad = || format!("expected GROUPS,CANDIDATES, got '{s}'");
    let (a, b) = s.split_once(',').ok_or_else(bad)?;
    Ok(ProjectionBudget::new(
        a.trim().parse().map_err(|_| bad())?,
        b.trim().parse().map_err(|_| bad())?,
    ))
}

/// Why a command failed, which decides the exit code.
#[derive(Debug)]
pub enum Failure {
    Input(String),
    Estimation(Error),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Input(_) => 2,
            Failure::Estimation(e) if e.is_numerical() => 3,
            Failure::Estimation(_) => 2,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Input(m) => f.write_str(m),
            Failure::Estimation(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Estimation(e)
    }
}

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Input(format!("{}: {e}", path.display()))
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code. Diagnostics go to standard error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Fit(a) => cmd_fit(&a),
        Command::Tune(a) => cmd_tune(&a),
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Experiment(a) => cmd_experiment(&a),
    };
    match result {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {f}");
            f.exit_code()
        }
    }
}

/// Covariates, response and covariate names from a headered CSV file.
pub struct CsvData {
    pub x: Array2<f64>,
    pub y: Vec<f64>,
    pub names: Vec<String>,
}

pub fn read_csv(path: &Path, response: &str) -> Result<CsvData, Failure> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| io_failure(path, e))?;
    let headers = reader.headers().map_err(|e| io_failure(path, e))?.clone();
    let response_col = headers
        .iter()
        .position(|h| h.trim() == response)
        .ok_or_else(|| Failure::Input(format!("{}: no column named '{response}'", path.display())))?;
    let names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != response_col)
        .map(|(_, h)| h.trim().to_string())
        .collect();
    let p = names.len();
    if p == 0 {
        return Err(Failure::Input(format!("{}: no covariate columns", path.display())));
    }
    let mut values = Vec::new();
    let mut y = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| io_failure(path, e))?;
        if record.len() != headers.len() {
            return Err(Failure::Input(format!(
                "{}: row {} has {} fields, expected {}",
                path.display(),
                row + 1,
                record.len(),
                headers.len()
            )));
        }
        for (col, field) in record.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                Failure::Input(format!(
                    "{}: row {}, column '{}': '{field}' is not a number",
                    path.display(),
                    row + 1,
                    &headers[col]
                ))
            })?;
            if col == response_col {
                y.push(v);
            } else {
                values.push(v);
            }
        }
    }
    let n = y.len();
    let x = Array2::from_shape_vec((n, p), values).expect("row lengths checked");
    Ok(CsvData { x, y, names })
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| io_failure(dir, e))?;
        }
    }
    fs::write(path, bytes).map_err(|e| io_failure(path, e))
}

/// Resolved estimator configuration, echoed into every report.
#[derive(Debug, Clone, Serialize)]
struct ResolvedConfig {
    input: PathBuf,
    response: String,
    n: usize,
    p: usize,
    d: usize,
    slices: usize,
    effective_slices: usize,
    kernel: KernelEstimator,
    k: usize,
    l_prime: usize,
    stage1: ProjectionBudget,
    stage2: ProjectionBudget,
    seed: u64,
    stage1_seed: u64,
    stage2_seed: u64,
    threads: usize,
    storage: Storage,
    storage_used: &'static str,
}

enum Moments {
    Dense(crate::moments::SlicedMoments),
    Projected(ProjectedMoments),
}

impl Moments {
    fn source(&self) -> &dyn MomentSource {
        match self {
            Moments::Dense(m) => m,
            Moments::Projected(m) => m,
        }
    }

    fn slices(&self) -> usize {
        match self {
            Moments::Dense(m) => m.slice_props.len(),
            Moments::Projected(m) => m.slice_props.len(),
        }
    }
}

fn prepare(est: &EstimatorArgs) -> Result<(CsvData, Moments, ResolvedConfig), Failure> {
    let data = read_csv(&est.input, &est.response)?;
    let (n, p) = data.x.dim();
    let kernel: KernelEstimator = est.kernel.into();
    let projected = match est.storage {
        Storage::Auto => p > PROJECTED_THRESHOLD,
        Storage::Dense => false,
        Storage::Projected => true,
    };
    let moments = if projected {
        Moments::Projected(ProjectedMoments::new(data.x.view(), &data.y, est.slices, kernel)?)
    } else {
        Moments::Dense(build_moments(data.x.view(), &data.y, est.slices, kernel)?)
    };
    let config = ResolvedConfig {
        input: est.input.clone(),
        response: est.response.clone(),
        n,
        p,
        d: est.d,
        slices: est.slices,
        effective_slices: moments.slices(),
        kernel,
        k: est.k,
        l_prime: est.l_prime.unwrap_or(50.min(p)),
        stage1: est.stage1,
        stage2: est.stage2,
        seed: est.seed,
        stage1_seed: derive_seed(est.seed, STAGE_ONE),
        stage2_seed: derive_seed(est.seed, STAGE_TWO),
        threads: est.threads,
        storage: est.storage,
        storage_used: if projected { "projected" } else { "dense" },
    };
    Ok((data, moments, config))
}

fn rp2(config: &ResolvedConfig, l: usize) -> Rp2Params {
    Rp2Params {
        stage1: config.stage1,
        stage2: config.stage2,
        k: config.k,
        l,
        l_prime: config.l_prime,
        d: config.d,
        seed: config.seed,
        jitter_retry: true,
    }
}

#[derive(Serialize)]
struct CriterionTrace {
    criterion: Criterion,
    chosen_l: usize,
    values: Vec<serde_json::Value>,
}

struct Estimate {
    support: Vec<usize>,
    basis: crate::projection::Basis,
    screened: Vec<usize>,
    stage1: Vec<f64>,
    stage2: Vec<f64>,
    diagnostics: [StageDiagnostics; 2],
    trace: Option<CriterionTrace>,
}

fn estimate(
    moments: &dyn MomentSource,
    config: &ResolvedConfig,
    l: Option<usize>,
    criterion: Option<Criterion>,
    grid: Option<&Grid>,
) -> Result<Estimate, Failure> {
    let l_fixed = match (criterion, l) {
        (None, Some(l)) => l,
        (None, None) => {
            return Err(Failure::Input("--l is required when no criterion is given".into()))
        }
        (Some(_), _) => config.d,
    };
    let params = rp2(config, l_fixed);
    if criterion.is_none() {
        params.validate(config.p)?;
    } else {
        params.validate_stages(config.p)?;
    }
    let screening = reweighting_stages(moments, &params)?;
    let (support, basis, trace) = match criterion {
        None => {
            let (support, basis) = screening.select(moments, l_fixed, config.d, true)?;
            (support, basis, None)
        }
        Some(c) => {
            let t = tune_screened(moments, &screening, &params, c, grid.map(|g| g.0.as_slice()))?;
            let values = t
                .criterion_values
                .iter()
                .map(|&(l, v)| json!({ "l": l, "value": if v.is_finite() { json!(v) } else { json!(null) } }))
                .collect();
            let trace = CriterionTrace {
                criterion: c,
                chosen_l: t.chosen_l,
                values,
            };
            (t.support, t.basis, Some(trace))
        }
    };
    Ok(Estimate {
        support,
        basis,
        screened: screening.screened,
        stage1: screening.stage1.w,
        stage2: screening.stage2.w,
        diagnostics: screening.diagnostics,
        trace,
    })
}

fn criterion_of(arg: CriterionArg) -> Option<Criterion> {
    match arg {
        CriterionArg::None => None,
        CriterionArg::Aic => Some(Criterion::Aic),
        CriterionArg::Bic => Some(Criterion::Bic),
    }
}

fn named(indices: &[usize], names: &[String]) -> Vec<serde_json::Value> {
    indices
        .iter()
        .map(|&j| json!({ "index": j, "variable": names[j] }))
        .collect()
}

fn threaded<T: Send>(threads: usize, f: impl FnOnce() -> Result<T, Failure> + Send) -> Result<T, Failure> {
    with_threads(threads, f).map_err(|e| Failure::Input(e.to_string()))?
}

pub fn cmd_fit(args: &FitArgs) -> Result<(), Failure> {
    let start = Instant::now();
    threaded(args.est.threads, || {
        let (data, moments, config) = prepare(&args.est)?;
        let criterion = criterion_of(args.criterion);
        let est = estimate(moments.source(), &config, args.l, criterion, args.grid.as_ref())?;

        let mut csv = String::from("variable");
        for c in 0..config.d {
            csv.push_str(&format!(",beta_{}", c + 1));
        }
        csv.push('\n');
        for (j, name) in data.names.iter().enumerate() {
            csv.push_str(name);
            for c in 0..config.d {
                csv.push_str(&format!(",{}", est.basis.matrix[[j, c]]));
            }
            csv.push('\n');
        }
        write_file(&args.out_dir.join("coefficients.csv"), csv.as_bytes())?;

        let report = json!({
            "command": "fit",
            "config": config,
            "l": args.l,
            "criterion": est.trace,
            "grid": args.grid.as_ref().map(|g| g.0.clone()),
            "support": named(&est.support, &data.names),
            "screened": named(&est.screened, &data.names),
            "weights": { "stage1": est.stage1, "stage2": est.stage2 },
            "diagnostics": { "stage1": est.diagnostics[0], "stage2": est.diagnostics[1] },
            "seconds": start.elapsed().as_secs_f64(),
        });
        let text = serde_json::to_string_pretty(&report).expect("serializable report");
        write_file(&args.out_dir.join("report.json"), text.as_bytes())?;
        log::info!("selected {} variables", est.support.len());
        Ok(())
    })
}

pub fn cmd_tune(args: &TuneArgs) -> Result<(), Failure> {
    let start = Instant::now();
    let criterion = criterion_of(args.criterion)
        .ok_or_else(|| Failure::Input("tune needs --criterion aic or bic".into()))?;
    threaded(args.est.threads, || {
        let (data, moments, config) = prepare(&args.est)?;
        let est = estimate(moments.source(), &config, None, Some(criterion), args.grid.as_ref())?;
        let trace = est.trace.expect("criterion given");
        let basis: Vec<Vec<f64>> = est
            .support
            .iter()
            .map(|&j| est.basis.matrix.row(j).to_vec())
            .collect();
        let report = json!({
            "command": "tune",
            "config": config,
            "grid": args.grid.as_ref().map(|g| g.0.clone()),
            "criterion": trace.criterion,
            "chosen_l": trace.chosen_l,
            "criterion_values": trace.values,
            "support": named(&est.support, &data.names),
            "basis_rows": basis,
            "seconds": start.elapsed().as_secs_f64(),
        });
        let text = serde_json::to_string_pretty(&report).expect("serializable report") + "\n";
        match &args.out {
            Some(path) => write_file(path, text.as_bytes()),
            None => io::stdout()
                .write_all(text.as_bytes())
                .map_err(|e| Failure::Input(format!("stdout: {e}"))),
        }
    })
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<(), Failure> {
    let model: Model = args.model.parse().map_err(|e: Error| Failure::Input(e.to_string()))?;
    let cov: CovSpec = args.cov.parse().map_err(|e: Error| Failure::Input(e.to_string()))?;
    let mut rng = stream_rng(args.seed, 0);
    let data = draw_dataset(&mut rng, args.n, args.p, args.s, model, cov)
        .map_err(|e| Failure::Input(e.to_string()))?;

    let mut csv = String::new();
    let header: Vec<String> = (1..=args.p).map(|j| format!("x{j}")).chain(["y".to_string()]).collect();
    csv.push_str(&header.join(","));
    csv.push('\n');
    for (row, y) in data.x.rows().into_iter().zip(&data.y) {
        for v in row {
            csv.push_str(&format!("{v},"));
        }
        csv.push_str(&format!("{y}\n"));
    }
    let prefix = args.out.as_os_str().to_owned();
    let mut csv_path = prefix.clone();
    csv_path.push(".csv");
    let mut json_path = prefix;
    json_path.push(".json");
    write_file(Path::new(&csv_path), csv.as_bytes())?;

    // Only the nonzero rows; every other row of beta is zero.
    let beta: Vec<serde_json::Value> = data
        .support
        .iter()
        .map(|&j| json!({ "index": j, "variable": format!("x{}", j + 1), "row": data.beta.row(j).to_vec() }))
        .collect();
    let sidecar = json!({
        "scenario": { "model": model, "cov": cov, "n": args.n, "p": args.p, "s": args.s, "d": model.d() },
        "seed": args.seed,
        "response": "y",
        "support": data.support,
        "beta": beta,
    });
    let text = serde_json::to_string_pretty(&sidecar).expect("serializable sidecar") + "\n";
    write_file(Path::new(&json_path), text.as_bytes())
}

pub fn cmd_experiment(args: &ExperimentArgs) -> Result<(), Failure> {
    let text = fs::read_to_string(&args.spec).map_err(|e| io_failure(&args.spec, e))?;
    let spec = ExperimentSpec::from_toml(&text).map_err(|e| Failure::Input(e.to_string()))?;
    let threads = args.threads.unwrap_or(spec.threads);
    let output = threaded(threads, || run_experiment(&spec).map_err(Failure::from))?;

    let mut buf = Vec::new();
    write_tsv(&output.rows, &mut buf)?;
    match args.out.as_ref().or(spec.output.as_ref()) {
        Some(path) => write_file(path, &buf)?,
        None => io::stdout()
            .write_all(&buf)
            .map_err(|e| Failure::Input(format!("stdout: {e}")))?,
    }
    if let Some(path) = args.raw.as_ref().or(spec.raw_output.as_ref()) {
        let mut raw = Vec::new();
        write_raw_tsv(&output.raw, &mut raw)?;
        write_file(path, &raw)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids_parse() {
        assert_eq!(parse_grid("2..5").unwrap(), Grid(vec![2, 3, 4, 5]));
        assert_eq!(parse_grid("2..=3").unwrap(), Grid(vec![2, 3]));
        assert_eq!(parse_grid("7").unwrap(), Grid(vec![7]));
        assert_eq!(parse_grid("3, 5,9").unwrap(), Grid(vec![3, 5, 9]));
        assert!(parse_grid("5..2").is_err());
        assert!(parse_grid("a,b").is_err());
    }

    #[test]
    fn budgets_parse() {
        assert_eq!(parse_budget("900,300").unwrap(), ProjectionBudget::new(900, 300));
        assert!(parse_budget("900").is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(Failure::Input("x".into()).exit_code(), 2);
        assert_eq!(Failure::Estimation(Error::DegenerateResponse).exit_code(), 3);
        assert_eq!(Failure::Estimation(Error::EmptyGrid).exit_code(), 2);
    }
}
