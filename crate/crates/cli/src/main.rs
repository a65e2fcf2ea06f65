mod manifest;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use fgray::data::{load_csv, save_csv};
use fgray::pipeline::{fit_lasso, prepare};
use fgray::simgen::{self, Censoring, Setup1Config, Setup2Config, StudyDesign};
use fgray::{
    build_risk_grid, km_censoring, Analysis, AnalysisOptions, CompetingRisksData, CsvSchema, FgError,
    LambdaChoice, LambdaJChoice,
};
use ndarray::Array1;
use serde::Serialize;
use serde_json::json;

use manifest::{sidecar, RunManifest};

const LONG_VERSION: &str = concat!(
    env!("CARGO_PKG_VERSION"),
    "\ntarget: ",
    env!("FGRAY_TARGET"),
    "\nprofile: ",
    env!("FGRAY_PROFILE")
);

#[derive(Parser, Debug)]
#[command(name = "fgray", version, long_version = LONG_VERSION)]
#[command(about = "Penalized Fine-Gray regression with debiased inference for p >> n")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Serialize)]
struct GlobalArgs {
    /// Seed for fold assignment and simulation.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Validate inputs and print the resolved configuration without computing.
    #[arg(long, global = true)]
    dry_run: bool,
    #[arg(short, long, global = true, conflicts_with = "verbose")]
    quiet: bool,
    /// Per-λ progress and KKT residuals.
    #[arg(short, long, global = true)]
    verbose: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw a dataset from one of the simulation designs.
    Simulate(SimulateArgs),
    /// Penalized fit at a fixed or cross-validated λ.
    Fit(FitCmd),
    /// Cross-validation curve of the penalized fit.
    Cv(CvCmd),
    /// One-step estimates and nodewise diagnostics.
    Debias(DebiasCmd),
    /// Confidence intervals and Wald tests for linear contrasts.
    Infer(InferCmd),
    /// Monte Carlo study from a JSON design file.
    Study(StudyCmd),
}

#[derive(Args, Debug, Serialize)]
struct SimulateArgs {
    #[arg(long, default_value_t = 1)]
    setup: u8,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    p: usize,
    #[arg(long, default_value_t = 0.6)]
    mixture_p: f64,
    /// none | uniform:<upper> | exponential:<rate> | rate:<fraction>
    #[arg(long, default_value = "rate:0.3")]
    censoring: String,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct DataArgs {
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long, default_value = "time")]
    time_col: String,
    #[arg(long, default_value = "status")]
    status_col: String,
    #[arg(long)]
    id_col: Option<String>,
    /// Study horizon; later observations are censored at it.
    #[arg(long)]
    horizon: Option<f64>,
}

#[derive(Clone, Copy, Debug, Serialize)]
enum Penalty {
    Cv,
    Value(f64),
}

impl FromStr for Penalty {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("cv") {
            return Ok(Penalty::Cv);
        }
        match s.parse::<f64>() {
            Ok(v) if v >= 0.0 && v.is_finite() => Ok(Penalty::Value(v)),
            _ => Err(format!("expected `cv` or a non-negative number, got `{s}`")),
        }
    }
}

#[derive(Args, Debug, Serialize)]
struct FitArgs {
    /// `cv` or a fixed penalty.
    #[arg(long, default_value = "cv")]
    lambda: Penalty,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[arg(long, default_value_t = 50)]
    n_lambdas: usize,
    #[arg(long, default_value_t = 0.02)]
    lambda_min_ratio: f64,
    /// Fit on the raw covariate scale.
    #[arg(long)]
    no_standardize: bool,
    /// Drop constant covariates instead of failing.
    #[arg(long)]
    drop_constant: bool,
}

#[derive(Args, Debug, Serialize)]
struct NodewiseArgs {
    /// `cv` (per-row cross-validation) or one penalty for every row.
    #[arg(long, default_value = "cv")]
    lambda_j: Penalty,
    #[arg(long, default_value_t = 10)]
    nodewise_folds: usize,
    /// Coefficients to debias, 1-based and comma separated (default: all).
    #[arg(long, value_delimiter = ',')]
    rows: Option<Vec<usize>>,
    /// Skip the SE recomputed at the one-step estimate.
    #[arg(long)]
    no_two_step: bool,
}

#[derive(Args, Debug, Serialize)]
struct FitCmd {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    fit: FitArgs,
    #[arg(long, short)]
    out: PathBuf,
    /// Write the IPCW at-risk weights (subject, event_time, weight).
    #[arg(long)]
    dump_weights: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct CvCmd {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    fit: FitArgs,
    #[arg(long, short)]
    out: PathBuf,
    /// CSV of the curve (lambda, mean_loss, se_loss).
    #[arg(long)]
    curve: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct DebiasCmd {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    fit: FitArgs,
    #[command(flatten)]
    nodewise: NodewiseArgs,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct InferCmd {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    fit: FitArgs,
    #[command(flatten)]
    nodewise: NodewiseArgs,
    /// `e:<j>` for the j-th coefficient (1-based); repeatable.
    #[arg(long)]
    contrast: Vec<String>,
    /// CSV with one contrast per row; optional `contrast_id` column.
    #[arg(long)]
    contrast_file: Option<PathBuf>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Null value of the (L1-normalized) contrast.
    #[arg(long, default_value_t = 0.0)]
    null: f64,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct StudyCmd {
    #[arg(long)]
    design: PathBuf,
    /// Output prefix: writes <prefix>.csv and <prefix>.json.
    #[arg(long, short)]
    out: PathBuf,
    /// Sweep β₁ of the first tracked coefficient over lo:hi:step.
    #[arg(long)]
    power_sweep: Option<String>,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl From<FgError> for CliError {
    fn from(e: FgError) -> Self {
        if e.is_numeric() {
            CliError::Numeric(e.to_string())
        } else if matches!(e, FgError::InvalidArgument(_)) {
            CliError::Usage(e.to_string())
        } else {
            CliError::Data(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = if cli.global.quiet {
        log::LevelFilter::Error
    } else if cli.global.verbose {
        log::LevelFilter::Debug
    } else {
        log::LevelFilter::Warn
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .init();
    if let Some(t) = cli.global.threads {
        if t == 0 {
            eprintln!("fgray: error[1]: usage: --threads must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("fgray: error[1]: usage: {e}");
            return ExitCode::from(1);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (kind, msg) = match &e {
                CliError::Usage(m) => ("usage", m),
                CliError::Data(m) => ("data", m),
                CliError::Numeric(m) => ("numeric", m),
            };
            eprintln!("fgray: error[{}]: {kind}: {msg}", e.code());
            ExitCode::from(e.code())
        }
    }
}

fn run(cli: &Cli) -> CliResult<()> {
    let g = &cli.global;
    match &cli.command {
        Command::Simulate(a) => simulate(g, a),
        Command::Fit(a) => fit(g, a),
        Command::Cv(a) => cv(g, a),
        Command::Debias(a) => debias(g, a),
        Command::Infer(a) => infer(g, a),
        Command::Study(a) => study(g, a),
    }
}

fn seed(g: &GlobalArgs) -> u64 {
    g.seed.unwrap_or(1)
}

fn manifest<T: Serialize>(command: &str, g: &GlobalArgs, args: &T) -> RunManifest {
    let config = json!({ "global": g, "args": args });
    RunManifest::new(command, config, seed(g), rayon::current_num_threads())
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn write_sidecar(path: &Path, m: &RunManifest) -> CliResult<()> {
    write_json(&sidecar(path), m)
}

fn dry_run<T: Serialize>(m: &RunManifest, extra: T) -> CliResult<()> {
    let out = json!({ "dry_run": true, "command": m.command, "config": m.config, "resolved": extra });
    let mut stdout = std::io::stdout().lock();
    match writeln!(stdout, "{}", serde_json::to_string_pretty(&out)?) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn load(d: &DataArgs, m: &mut RunManifest) -> CliResult<CompetingRisksData> {
    let schema = CsvSchema {
        time_col: d.time_col.clone(),
        status_col: d.status_col.clone(),
        id_col: d.id_col.clone(),
        horizon: d.horizon,
    };
    let data = load_csv(&d.input, &schema)
        .map_err(|e| match e {
            FgError::Io(io) => CliError::Data(format!("cannot read {}: {io}", d.input.display())),
            other => other.into(),
        })?;
    m.add_input(&d.input)?;
    data.ensure_fit_ready()?;
    Ok(data)
}

fn analysis_options(g: &GlobalArgs, f: &FitArgs, nw: Option<&NodewiseArgs>) -> CliResult<AnalysisOptions> {
    let mut opts = AnalysisOptions {
        lambda: match f.lambda {
            Penalty::Cv => LambdaChoice::Cv,
            Penalty::Value(v) => LambdaChoice::Value(v),
        },
        folds: f.folds,
        n_lambdas: f.n_lambdas,
        lambda_min_ratio: f.lambda_min_ratio,
        seed: seed(g),
        standardize: !f.no_standardize,
        drop_constant: f.drop_constant,
        ..AnalysisOptions::default()
    };
    opts.nodewise.seed = seed(g);
    if let Some(nw) = nw {
        opts.lambda_j = match nw.lambda_j {
            Penalty::Cv => LambdaJChoice::Cv,
            Penalty::Value(v) => LambdaJChoice::Shared(v),
        };
        opts.nodewise.folds = nw.nodewise_folds;
        opts.two_step = !nw.no_two_step;
        if let Some(rows) = &nw.rows {
            if rows.contains(&0) {
                return Err(CliError::Usage("--rows is 1-based".into()));
            }
            opts.rows = Some(rows.iter().map(|j| j - 1).collect());
            if opts.two_step {
                log::warn!("--rows debiases a subset; the two-step SE is skipped");
                opts.two_step = false;
            }
        }
    }
    Ok(opts)
}

fn simulate(g: &GlobalArgs, a: &SimulateArgs) -> CliResult<()> {
    let mut m = manifest("simulate", g, a);
    let censoring = parse_censoring(&a.censoring)?;
    let design = match a.setup {
        1 => {
            let mut c = Setup1Config::new(a.n, a.p)?;
            c.mixture_p = a.mixture_p;
            c.censoring = censoring;
            c.design()
        }
        2 => {
            let mut c = Setup2Config::new(a.n, a.p)?;
            c.mixture_p = a.mixture_p;
            c.censoring = censoring;
            c.design()
        }
        s => return Err(CliError::Usage(format!("--setup must be 1 or 2, got {s}"))),
    };
    let design = design.resolve_censoring()?;
    if g.dry_run {
        return dry_run(&m, &design);
    }
    let data = design.generate(seed(g))?;
    save_csv(&data, &a.out)?;
    m.add_output(&a.out);
    m.finish();
    write_sidecar(&a.out, &m)
}

fn parse_censoring(s: &str) -> CliResult<Censoring> {
    let bad = || CliError::Usage(format!("censoring `{s}`: expected none, uniform:<c>, exponential:<r> or rate:<f>"));
    if s == "none" {
        return Ok(Censoring::None);
    }
    let (kind, value) = s.split_once(':').ok_or_else(bad)?;
    let v: f64 = value.parse().map_err(|_| bad())?;
    match kind {
        "uniform" => Ok(Censoring::Uniform { upper: v }),
        "exponential" => Ok(Censoring::Exponential { rate: v }),
        "rate" => Ok(Censoring::TargetRate { rate: v }),
        _ => Err(bad()),
    }
}

fn fit(g: &GlobalArgs, a: &FitCmd) -> CliResult<()> {
    let mut m = manifest("fit", g, a);
    let data = load(&a.data, &mut m)?;
    let opts = analysis_options(g, &a.fit, None)?;
    if g.dry_run {
        prepare(&data, &opts)?;
        return dry_run(&m, &opts);
    }
    let res = fit_lasso(&data, &opts)?;
    let beta = res.coefficients_original();
    if let Some(path) = &a.dump_weights {
        let grid = build_risk_grid(&data, &km_censoring(&data))?;
        let mut w = csv::Writer::from_writer(create(path)?);
        let ids: Vec<String> = match data.ids() {
            Some(ids) => ids.to_vec(),
            None => (1..=data.n()).map(|i| i.to_string()).collect(),
        };
        w.write_record(["subject", "event_time", "weight"]).map_err(csv_err)?;
        for (k, &t) in grid.event_times().iter().enumerate() {
            for (i, id) in ids.iter().enumerate() {
                let wt = grid.weight(i, k);
                if wt > 0.0 {
                    w.write_record([id.clone(), t.to_string(), wt.to_string()]).map_err(csv_err)?;
                }
            }
        }
        w.flush()?;
        m.add_output(path);
    }
    m.add_output(&a.out);
    m.finish();
    let coefficients: Vec<_> = data
        .names()
        .iter()
        .zip(&beta)
        .map(|(name, v)| json!({ "name": name, "value": v }))
        .collect();
    let out = json!({
        "manifest": m,
        "lambda": res.fit.lambda,
        "selected_by": if res.cv.is_some() { "cv" } else { "value" },
        "converged": res.fit.converged,
        "kkt_residual": res.fit.kkt_residual,
        "iterations": res.fit.iterations,
        "objective": res.fit.objective,
        "nonzero": res.fit.support().len(),
        "coefficients": coefficients,
        "standardization": res.standardization,
        "cv": res.cv.as_ref().map(|cv| json!({
            "lambda_min": cv.lambda_min,
            "lambda_1se": cv.lambda_1se,
            "index_min": cv.index_min,
            "grid_size": cv.lambda_grid.len(),
            "interior": cv.min_is_interior(),
        })),
    });
    write_json(&a.out, &out)
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Data(e.to_string())
}

fn cv(g: &GlobalArgs, a: &CvCmd) -> CliResult<()> {
    let mut m = manifest("cv", g, a);
    let data = load(&a.data, &mut m)?;
    let mut opts = analysis_options(g, &a.fit, None)?;
    opts.lambda = LambdaChoice::Cv;
    if g.dry_run {
        prepare(&data, &opts)?;
        return dry_run(&m, &opts);
    }
    let res = fit_lasso(&data, &opts)?;
    let cv = res.cv.clone().expect("cross-validated fit");
    if let Some(path) = &a.curve {
        let mut w = csv::Writer::from_writer(create(path)?);
        w.write_record(["lambda", "mean_loss", "se_loss"]).map_err(csv_err)?;
        for ((l, ml), se) in cv.lambda_grid.iter().zip(&cv.mean_loss).zip(&cv.se_loss) {
            w.write_record([l.to_string(), ml.to_string(), se.to_string()]).map_err(csv_err)?;
        }
        w.flush()?;
        m.add_output(path);
    }
    m.add_output(&a.out);
    m.finish();
    let out = json!({
        "manifest": m,
        "cv": cv,
        "interior": cv.min_is_interior(),
        "fit_at_lambda_min": {
            "nonzero": res.fit.support().len(),
            "coefficients": res.coefficients_original(),
        },
    });
    write_json(&a.out, &out)
}

fn debias(g: &GlobalArgs, a: &DebiasCmd) -> CliResult<()> {
    let mut m = manifest("debias", g, a);
    let data = load(&a.data, &mut m)?;
    let opts = analysis_options(g, &a.fit, Some(&a.nodewise))?;
    if g.dry_run {
        prepare(&data, &opts)?;
        return dry_run(&m, &opts);
    }
    let an = Analysis::run(&data, &opts)?;
    let rows = an.coefficients(0.05)?;
    let diag = &an.theta.diagnostics;
    let max_diag = diag.iter().map(|d| (d.diagonal - 1.0).abs()).fold(0.0, f64::max);
    let max_excess = diag
        .iter()
        .map(|d| d.max_off_diagonal - d.off_diagonal_bound())
        .fold(f64::NEG_INFINITY, f64::max);
    let coefficients: Vec<_> = rows
        .iter()
        .zip(an.theta.fits.iter())
        .map(|(r, f)| {
            json!({
                "index": r.index + 1,
                "name": r.name,
                "lasso": r.lasso,
                "one_step": r.estimate,
                "se": r.se,
                "se_corrected": r.se_corrected,
                "lambda_j": f.lambda_j,
                "tau_sq": f.tau_sq,
            })
        })
        .collect();
    m.add_output(&a.out);
    m.finish();
    let out = json!({
        "manifest": m,
        "lambda": an.fit.lambda,
        "coefficients": coefficients,
        "nodewise": {
            "max_diagonal_error": max_diag,
            "max_off_diagonal_excess": max_excess,
        },
    });
    write_json(&a.out, &out)
}

struct Contrast {
    id: String,
    vector: Array1<f64>,
}

fn parse_contrasts(a: &InferCmd, data: &CompetingRisksData) -> CliResult<Vec<Contrast>> {
    let p = data.p();
    let mut out = Vec::new();
    for spec in &a.contrast {
        let j = spec
            .strip_prefix("e:")
            .and_then(|s| s.parse::<usize>().ok())
            .filter(|&j| j >= 1 && j <= p)
            .ok_or_else(|| CliError::Usage(format!("contrast `{spec}`: expected e:<j> with 1 <= j <= {p}")))?;
        let mut v = Array1::zeros(p);
        v[j - 1] = 1.0;
        out.push(Contrast {
            id: spec.clone(),
            vector: v,
        });
    }
    if let Some(path) = &a.contrast_file {
        let mut r = csv::Reader::from_path(path)
            .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
        let headers = r.headers().map_err(csv_err)?.clone();
        let id_col = headers.iter().position(|h| h == "contrast_id");
        let value_cols: Vec<usize> = (0..headers.len()).filter(|&c| Some(c) != id_col).collect();
        if value_cols.len() != p {
            return Err(CliError::Data(format!(
                "contrast file has {} value columns, expected {p}",
                value_cols.len()
            )));
        }
        // columns named after covariates are matched by name, otherwise by position
        let by_name: Option<Vec<usize>> = value_cols
            .iter()
            .map(|&c| data.names().iter().position(|n| n == &headers[c]))
            .collect();
        for (row, rec) in r.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            let mut v = Array1::zeros(p);
            for (k, &c) in value_cols.iter().enumerate() {
                let x: f64 = rec[c].trim().parse().map_err(|_| {
                    CliError::Data(format!("contrast file row {}: `{}` is not a number", row + 1, &rec[c]))
                })?;
                let target = by_name.as_ref().map_or(k, |b| b[k]);
                v[target] = x;
            }
            let id = id_col.map_or_else(|| format!("row{}", row + 1), |c| rec[c].to_string());
            out.push(Contrast { id, vector: v });
        }
    }
    if out.is_empty() {
        return Err(CliError::Usage("give at least one --contrast or a --contrast-file".into()));
    }
    Ok(out)
}

fn infer(g: &GlobalArgs, a: &InferCmd) -> CliResult<()> {
    let mut m = manifest("infer", g, a);
    let data = load(&a.data, &mut m)?;
    if let Some(path) = &a.contrast_file {
        m.add_input(path)?;
    }
    if !(a.alpha > 0.0 && a.alpha < 1.0) {
        return Err(CliError::Usage(format!("--alpha must lie in (0, 1), got {}", a.alpha)));
    }
    let contrasts = parse_contrasts(a, &data)?;
    let mut opts = analysis_options(g, &a.fit, Some(&a.nodewise))?;
    if a.nodewise.no_two_step && opts.rows.is_none() {
        let mut rows: Vec<usize> = contrasts
            .iter()
            .flat_map(|c| c.vector.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(j, _)| j).collect::<Vec<_>>())
            .collect();
        rows.sort_unstable();
        rows.dedup();
        opts.rows = Some(rows);
    }
    if g.dry_run {
        prepare(&data, &opts)?;
        return dry_run(&m, json!({ "options": opts, "contrasts": contrasts.iter().map(|c| &c.id).collect::<Vec<_>>() }));
    }
    let an = Analysis::run(&data, &opts)?;
    let mut w = csv::Writer::from_writer(create(&a.out)?);
    w.write_record([
        "contrast_id",
        "estimate",
        "se",
        "se_corrected",
        "ci_lo",
        "ci_hi",
        "z",
        "p_value",
        "bonferroni_reject",
    ])
    .map_err(csv_err)?;
    let k = contrasts.len() as f64;
    for c in &contrasts {
        let r = an.contrast(c.vector.view(), a.alpha, a.null)?;
        w.write_record([
            c.id.clone(),
            r.estimate.to_string(),
            r.se.to_string(),
            r.se_corrected.map(|v| v.to_string()).unwrap_or_default(),
            r.ci.0.to_string(),
            r.ci.1.to_string(),
            r.z.to_string(),
            r.p_value.to_string(),
            (r.p_value < a.alpha / k).to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    m.add_output(&a.out);
    m.finish();
    write_sidecar(&a.out, &m)
}

fn with_ext(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn study(g: &GlobalArgs, a: &StudyCmd) -> CliResult<()> {
    let mut m = manifest("study", g, a);
    let text = std::fs::read_to_string(&a.design)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", a.design.display())))?;
    let mut design: StudyDesign =
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("design file: {e}")))?;
    m.add_input(&a.design)?;
    if let Some(s) = g.seed {
        design.seed = s;
    }
    m.seed = design.seed;
    design.check()?;
    let sweep = a.power_sweep.as_deref().map(simgen::parse_sweep).transpose()?;
    if g.dry_run {
        return dry_run(&m, json!({ "design": design, "power_sweep": sweep }));
    }
    if let Some(values) = sweep {
        let points = simgen::power_sweep(&design, &values)?;
        let path = with_ext(&a.out, "csv");
        simgen::write_power_csv(&points, create(&path)?)?;
        m.add_output(&path);
        m.finish();
        return write_sidecar(&path, &m);
    }
    let result = simgen::run_study(&design)?;
    let csv_path = with_ext(&a.out, "csv");
    let json_path = with_ext(&a.out, "json");
    let mut w = create(&csv_path)?;
    result.write_csv(&mut w)?;
    w.flush()?;
    m.add_output(&csv_path);
    m.add_output(&json_path);
    m.finish();
    write_sidecar(&csv_path, &m)?;
    write_json(&json_path, &json!({ "manifest": m, "result": result }))
}
