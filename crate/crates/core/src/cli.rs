//! Command-line front end: experiment configs, trace CSV emission, figure
//! reproduction, verification reports, and matrix export.
//!
//! Exit codes: 0 on success, 1 when a verification check fails, 2 on solver
//! or I/O errors, 64 on usage errors (bad flags, malformed configs).

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::accel::{run_accelerated, AcceleratorVariant, WindowDepth};
use crate::diagnostics::{
    check_equivalence, check_monotonicity, check_aa_gmres_relation, check_windowed_equivalence,
    common_decreasing_prefix, compute_operator_norms, run_standard_checks, CheckResult,
    DiagnosticsError, OperatorNorms, EQUIVALENCE_TOL,
};
use crate::fixed_point::{run_richardson, RichardsonOperator, SolveError};
use crate::gmres::{gmres_preconditioned, GmresSide};
use crate::problems::{
    build_convection_diffusion_2d, build_laplace_2d, write_matrix_market, Preconditioner,
    ProblemInstance,
};
use crate::trace::{MethodKind, NormKind, SolveOptions, SolveReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILURE: i32 = 1;
pub const EXIT_SOLVER_ERROR: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

/// Retain per-iteration vectors for verification only while
/// `n * iterations` stays below this; beyond it only trace-level checks run.
const RETAIN_BUDGET: usize = 6_000_000;
/// Dense operator norms (contraction gates) are computed automatically only
/// up to this dimension.
const NORMS_LIMIT: usize = 1024;

#[derive(Parser)]
#[command(
    name = "richaccel",
    version,
    about = "Windowed acceleration of preconditioned Richardson iterations",
    subcommand_required = true,
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the methods of an experiment config and write residual traces.
    Run(RunArgs),
    /// Re-create a bundled figure: traces, gnuplot script, and checks.
    Reproduce(ReproduceArgs),
    /// Run an experiment with verification checks enabled.
    Verify(VerifyArgs),
    /// Write a test matrix in MatrixMarket coordinate format.
    ExportMatrix(ExportArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Path to the experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Directory for CSV output.
    #[arg(long, default_value = "out")]
    output_dir: PathBuf,
    /// Normalize residual norms by their starting values.
    #[arg(long)]
    relative: bool,
}

#[derive(Args)]
struct ReproduceArgs {
    /// Bundled figure name: fig1, fig2, fig3, fig4, or fig5.
    figure: String,
    /// Directory for CSVs, the gnuplot script, and checks.jsonl.
    #[arg(long, default_value = "out")]
    output_dir: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    /// Path to the experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Directory for the checks.jsonl report.
    #[arg(long, default_value = "out")]
    output_dir: PathBuf,
    /// Seed for the perturbation-based optimality certification.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ExportArgs {
    /// Problem family: laplace or convection-diffusion.
    #[arg(long)]
    problem: String,
    /// Grid size per dimension (the matrix is n^2 x n^2).
    #[arg(long)]
    n: usize,
    /// First convection coefficient (convection-diffusion only).
    #[arg(long, default_value_t = 0.0)]
    c1: f64,
    /// Second convection coefficient (convection-diffusion only).
    #[arg(long, default_value_t = 0.0)]
    c2: f64,
    /// Output path for the MatrixMarket file.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Solver(String),
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Solver(_) | CliError::Io(_) => EXIT_SOLVER_ERROR,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Solver(m) | CliError::Io(m) => f.write_str(m),
        }
    }
}

/// Experiment description, deserialized from TOML.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Display label; defaults to the problem label.
    pub label: Option<String>,
    pub problem: ProblemConfig,
    /// `identity`, `scaled:<omega>`, or `lower-tri`.
    pub preconditioner: String,
    /// Method strings: `richardson`, `gmres-left`, `gmres-right`, or
    /// `<variant>[:<depth>]` with variant in {aa, aag, aar, ngmres,
    /// ngmresr} and depth a window size or `full` (the default).
    pub methods: Vec<String>,
    #[serde(default)]
    pub solve: SolveConfig,
    /// Residual flavor the gnuplot script plots: `classical` or
    /// `preconditioned` (default).
    pub plot_norm: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    /// `laplace` or `convection-diffusion`.
    pub kind: String,
    /// Grid size per dimension.
    pub n: usize,
    #[serde(default)]
    pub c1: f64,
    #[serde(default)]
    pub c2: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    pub tol: f64,
    pub maxit: usize,
}

impl Default for SolveConfig {
    fn default() -> Self {
        let d = SolveOptions::default();
        SolveConfig { tol: d.tol, maxit: d.maxit }
    }
}

/// A runnable method selection, parsed from a config string.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MethodSpec {
    Richardson,
    Accelerated { variant: AcceleratorVariant, depth: WindowDepth },
    Gmres { side: GmresSide },
}

impl MethodSpec {
    pub fn kind(&self) -> MethodKind {
        match *self {
            MethodSpec::Richardson => MethodKind::Richardson,
            MethodSpec::Accelerated { variant, depth } => {
                MethodKind::Accelerated { variant, depth }
            }
            MethodSpec::Gmres { side } => MethodKind::Gmres { side },
        }
    }

    pub fn label(&self) -> String {
        self.kind().label()
    }
}

impl FromStr for MethodSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim().to_ascii_lowercase();
        match t.as_str() {
            "richardson" => Ok(MethodSpec::Richardson),
            "gmres-left" | "gmres_left" => Ok(MethodSpec::Gmres { side: GmresSide::Left }),
            "gmres-right" | "gmres_right" => Ok(MethodSpec::Gmres { side: GmresSide::Right }),
            other => {
                let (v, d) = other.split_once(':').unwrap_or((other, "full"));
                let variant = v.parse::<AcceleratorVariant>()?;
                let depth = d.parse::<WindowDepth>()?;
                Ok(MethodSpec::Accelerated { variant, depth })
            }
        }
    }
}

/// Fully prepared experiment: operator, parsed methods, options.
pub struct Experiment {
    pub label: String,
    pub op: RichardsonOperator,
    pub specs: Vec<MethodSpec>,
    pub opts: SolveOptions,
    pub plot_norm: NormKind,
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn io_error(context: &str, e: std::io::Error) -> CliError {
    CliError::Io(format!("{context}: {e}"))
}

fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read config '{}': {e}", path.display())))?;
    parse_config(&text)
}

fn parse_config(text: &str) -> Result<ExperimentConfig, CliError> {
    toml::from_str(text).map_err(|e| usage(format!("invalid config: {e}")))
}

pub fn build_problem(kind: &str, n: usize, c1: f64, c2: f64) -> Result<ProblemInstance, CliError> {
    match kind.to_ascii_lowercase().as_str() {
        "laplace" => {
            if c1 != 0.0 || c2 != 0.0 {
                return Err(usage("laplace takes no convection coefficients".to_string()));
            }
            build_laplace_2d(n).map_err(|e| usage(e.to_string()))
        }
        "convection-diffusion" | "convdiff" => {
            build_convection_diffusion_2d(n, c1, c2).map_err(|e| usage(e.to_string()))
        }
        other => Err(usage(format!(
            "unknown problem kind '{other}' (expected 'laplace' or 'convection-diffusion')"
        ))),
    }
}

fn build_preconditioner(
    spec: &str,
    problem: &ProblemInstance,
) -> Result<Preconditioner, CliError> {
    Preconditioner::from_spec(spec, &problem.matrix).map_err(|e| usage(e.to_string()))
}

fn prepare(cfg: ExperimentConfig) -> Result<Experiment, CliError> {
    let problem = build_problem(&cfg.problem.kind, cfg.problem.n, cfg.problem.c1, cfg.problem.c2)?;
    let preconditioner = build_preconditioner(&cfg.preconditioner, &problem)?;
    let label = cfg.label.unwrap_or_else(|| problem.label.clone());
    let op = RichardsonOperator::new(problem, preconditioner)
        .map_err(|e| usage(e.to_string()))?;

    if cfg.methods.is_empty() {
        return Err(usage("config lists no methods".to_string()));
    }
    let mut specs = Vec::new();
    let mut seen = BTreeSet::new();
    for m in &cfg.methods {
        let spec = m.parse::<MethodSpec>().map_err(usage)?;
        if !seen.insert(spec.label()) {
            return Err(usage(format!("duplicate method '{}'", spec.label())));
        }
        specs.push(spec);
    }

    let opts = SolveOptions {
        tol: cfg.solve.tol,
        maxit: cfg.solve.maxit,
        retain_vectors: false,
    };
    let plot_norm = match cfg.plot_norm.as_deref().unwrap_or("preconditioned") {
        "classical" => NormKind::Classical,
        "preconditioned" => NormKind::Preconditioned,
        other => return Err(usage(format!("unknown plot_norm '{other}'"))),
    };
    Ok(Experiment { label, op, specs, opts, plot_norm })
}

fn run_spec(
    op: &RichardsonOperator,
    spec: &MethodSpec,
    opts: &SolveOptions,
) -> Result<SolveReport, CliError> {
    let result = match *spec {
        MethodSpec::Richardson => run_richardson(op, opts),
        MethodSpec::Accelerated { variant, depth } => run_accelerated(op, variant, depth, opts),
        MethodSpec::Gmres { side } => gmres_preconditioned(op, side, opts),
    };
    result.map_err(|e| match e {
        SolveError::Diverged { report } => CliError::Solver(format!(
            "{} diverged after {} iterations",
            spec.label(),
            report.iterations()
        )),
        other => CliError::Solver(format!("{}: {other}", spec.label())),
    })
}

/// Runs once without retention; reruns with retained vectors when the trace
/// is small enough for the offline checks to replay it.
fn run_for_checks(
    op: &RichardsonOperator,
    spec: &MethodSpec,
    opts: &SolveOptions,
) -> Result<SolveReport, CliError> {
    let first = run_spec(op, spec, &SolveOptions { retain_vectors: false, ..*opts })?;
    if op.n().saturating_mul(first.trace.len()) <= RETAIN_BUDGET {
        run_spec(op, spec, &SolveOptions { retain_vectors: true, ..*opts })
    } else {
        Ok(first)
    }
}

fn format_float(x: f64) -> String {
    format!("{x:.17e}")
}

fn write_trace_csv(path: &Path, report: &SolveReport, relative: bool) -> Result<(), CliError> {
    let mut out = String::new();
    out.push_str("k,classical_norm,preconditioned_norm,window_len,lsq_rank,lsq_residual_norm\n");
    let (c0, p0) = (report.trace[0].classical_norm, report.trace[0].preconditioned_norm);
    let (cs, ps) = if relative && c0 > 0.0 && p0 > 0.0 { (c0, p0) } else { (1.0, 1.0) };
    for r in &report.trace {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.k,
            format_float(r.classical_norm / cs),
            format_float(r.preconditioned_norm / ps),
            r.window_len,
            r.lsq_rank,
            format_float(r.lsq_residual_norm),
        );
    }
    fs::write(path, out).map_err(|e| io_error("writing trace CSV", e))
}

fn write_summary_csv(path: &Path, reports: &[SolveReport]) -> Result<(), CliError> {
    let mut out = String::new();
    out.push_str("method,status,iterations,final_classical_norm,final_preconditioned_norm\n");
    for r in reports {
        let last = r.trace.last().expect("trace is never empty");
        let _ = writeln!(
            out,
            "{},{:?},{},{},{}",
            r.label(),
            r.status,
            r.iterations(),
            format_float(last.classical_norm),
            format_float(last.preconditioned_norm),
        );
    }
    fs::write(path, out).map_err(|e| io_error("writing summary CSV", e))
}

fn write_gnuplot(
    path: &Path,
    figure: &str,
    plot_norm: NormKind,
    labels: &[String],
) -> Result<(), CliError> {
    let (column, flavor) = match plot_norm {
        NormKind::Classical => (2, "classical"),
        NormKind::Preconditioned => (3, "preconditioned"),
    };
    let mut s = String::new();
    let _ = writeln!(s, "set terminal pngcairo size 960,640 noenhanced");
    let _ = writeln!(s, "set output '{figure}.png'");
    let _ = writeln!(s, "set datafile separator ','");
    let _ = writeln!(s, "set logscale y");
    let _ = writeln!(s, "set format y '%.0e'");
    let _ = writeln!(s, "set xlabel 'iteration k'");
    let _ = writeln!(s, "set ylabel '{flavor} residual norm'");
    let _ = writeln!(s, "set key top right");
    let _ = write!(s, "plot");
    for (i, label) in labels.iter().enumerate() {
        let sep = if i == 0 { " " } else { ",\\\n     " };
        let _ = write!(s, "{sep}'{label}.csv' skip 1 using 1:{column} with lines lw 2 title '{label}'");
    }
    let _ = writeln!(s);
    fs::write(path, s).map_err(|e| io_error("writing gnuplot script", e))
}

#[derive(Serialize)]
struct CheckLine<'a> {
    method: &'a str,
    #[serde(flatten)]
    check: &'a CheckResult,
}

fn write_checks_jsonl(path: &Path, rows: &[(String, CheckResult)]) -> Result<(), CliError> {
    let mut out = String::new();
    for (method, check) in rows {
        let line = serde_json::to_string(&CheckLine { method, check })
            .map_err(|e| CliError::Io(format!("serializing check result: {e}")))?;
        out.push_str(&line);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| io_error("writing checks.jsonl", e))
}

fn print_check_table(rows: &[(String, CheckResult)]) {
    println!(
        "{:<16} {:<40} {:<5} {:>12} {:>12}  note",
        "method", "check", "state", "max_defect", "threshold"
    );
    for (method, c) in rows {
        let state = if c.skipped.is_some() {
            "skip"
        } else if c.passed {
            "pass"
        } else {
            "FAIL"
        };
        let note = match (&c.skipped, c.location) {
            (Some(reason), _) => reason.clone(),
            (None, Some(k)) => format!("worst at k = {k}"),
            (None, None) => String::new(),
        };
        println!(
            "{method:<16} {:<40} {state:<5} {:>12.3e} {:>12.3e}  {note}",
            c.name, c.max_defect, c.threshold
        );
    }
}

fn diag_error(e: DiagnosticsError) -> CliError {
    CliError::Solver(format!("diagnostics failure: {e}"))
}

/// Per-method checks plus the cross-method equivalences available in this
/// experiment's method set.
fn collect_checks(
    ex: &Experiment,
    reports: &[SolveReport],
    norms: Option<&OperatorNorms>,
    seed: u64,
) -> Result<Vec<(String, CheckResult)>, CliError> {
    let mut rows: Vec<(String, CheckResult)> = Vec::new();
    for report in reports {
        let label = report.label();
        if report.vectors.is_some() {
            for c in run_standard_checks(&ex.op, report, norms, seed).map_err(diag_error)? {
                rows.push((label.clone(), c));
            }
        } else {
            // Only trace-level claims are checkable without retained vectors.
            for c in check_monotonicity(report, norms) {
                rows.push((label.clone(), c));
            }
        }
    }

    let find = |l: &str| reports.iter().find(|r| r.label() == l && r.vectors.is_some());
    if let (Some(ng), Some(gm)) = (find("ngmres_full"), find("gmres_right")) {
        let upto = common_decreasing_prefix(ng, gm);
        rows.push((
            "cross".into(),
            check_equivalence("full_ngmres_vs_right_gmres", ng, gm, upto, EQUIVALENCE_TOL)
                .map_err(diag_error)?,
        ));
    }
    if let (Some(ng), Some(gm)) = (find("ngmresr_full"), find("gmres_left")) {
        let upto = common_decreasing_prefix(ng, gm);
        rows.push((
            "cross".into(),
            check_equivalence("full_ngmresr_vs_left_gmres", ng, gm, upto, EQUIVALENCE_TOL)
                .map_err(diag_error)?,
        ));
    }
    if let (Some(aa), Some(gm)) = (find("aa_full"), find("gmres_left")) {
        for c in check_aa_gmres_relation(&ex.op, aa, gm).map_err(diag_error)? {
            rows.push(("cross".into(), c));
        }
    }

    for variant in [AcceleratorVariant::Ngmres, AcceleratorVariant::Ngmresr] {
        let depths: Vec<usize> = ex
            .specs
            .iter()
            .filter_map(|s| match s {
                MethodSpec::Accelerated { variant: v, depth: WindowDepth::Window(m) }
                    if *v == variant && *m > 0 =>
                {
                    Some(*m)
                }
                _ => None,
            })
            .collect();
        if depths.is_empty() {
            continue;
        }
        match check_windowed_equivalence(&ex.op, variant, &depths, &ex.opts) {
            Ok(cs) => rows.extend(cs.into_iter().map(|c| ("cross".to_string(), c))),
            Err(DiagnosticsError::DimensionTooLarge { .. }) => {
                for m in depths {
                    rows.push((
                        "cross".into(),
                        CheckResult::skipped(
                            format!("windowed_equivalence_{}_m{m}", variant.name()),
                            EQUIVALENCE_TOL,
                            "problem too large for dense structure detection",
                        ),
                    ));
                }
            }
            Err(e) => return Err(diag_error(e)),
        }
    }
    Ok(rows)
}

fn operator_norms_if_small(op: &RichardsonOperator) -> Result<Option<OperatorNorms>, CliError> {
    if op.n() <= NORMS_LIMIT {
        compute_operator_norms(op).map(Some).map_err(diag_error)
    } else {
        Ok(None)
    }
}

fn cmd_run(args: &RunArgs) -> Result<i32, CliError> {
    let ex = prepare(load_config(&args.config)?)?;
    fs::create_dir_all(&args.output_dir)
        .map_err(|e| io_error("creating output directory", e))?;
    let mut reports = Vec::new();
    println!("experiment '{}': {} unknowns", ex.label, ex.op.n());
    for spec in &ex.specs {
        let report = run_spec(&ex.op, spec, &ex.opts)?;
        let last = report.trace.last().expect("trace is never empty");
        println!(
            "  {:<16} {:>6} iterations  status {:?}  final residuals {:.3e} / {:.3e}",
            report.label(),
            report.iterations(),
            report.status,
            last.classical_norm,
            last.preconditioned_norm,
        );
        write_trace_csv(
            &args.output_dir.join(format!("{}.csv", report.label())),
            &report,
            args.relative,
        )?;
        reports.push(report);
    }
    write_summary_csv(&args.output_dir.join("summary.csv"), &reports)?;
    Ok(EXIT_OK)
}

fn cmd_verify(args: &VerifyArgs) -> Result<i32, CliError> {
    let ex = prepare(load_config(&args.config)?)?;
    fs::create_dir_all(&args.output_dir)
        .map_err(|e| io_error("creating output directory", e))?;
    let norms = operator_norms_if_small(&ex.op)?;
    let mut reports = Vec::new();
    for spec in &ex.specs {
        reports.push(run_for_checks(&ex.op, spec, &ex.opts)?);
    }
    let rows = collect_checks(&ex, &reports, norms.as_ref(), args.seed)?;
    print_check_table(&rows);
    write_checks_jsonl(&args.output_dir.join("checks.jsonl"), &rows)?;
    let failed = rows.iter().filter(|(_, c)| !c.passed).count();
    if failed > 0 {
        println!("{failed} check(s) FAILED");
        Ok(EXIT_CHECK_FAILURE)
    } else {
        println!("all {} checks passed ({} skipped)", rows.len(),
            rows.iter().filter(|(_, c)| c.skipped.is_some()).count());
        Ok(EXIT_OK)
    }
}

fn figure_config(name: &str) -> Option<&'static str> {
    match name {
        "fig1" => Some(include_str!("../configs/fig1.toml")),
        "fig2" => Some(include_str!("../configs/fig2.toml")),
        "fig3" => Some(include_str!("../configs/fig3.toml")),
        "fig4" => Some(include_str!("../configs/fig4.toml")),
        "fig5" => Some(include_str!("../configs/fig5.toml")),
        _ => None,
    }
}

fn cmd_reproduce(args: &ReproduceArgs) -> Result<i32, CliError> {
    let text = figure_config(&args.figure).ok_or_else(|| {
        usage(format!("unknown figure '{}' (expected fig1 through fig5)", args.figure))
    })?;
    let ex = prepare(parse_config(text)?)?;
    fs::create_dir_all(&args.output_dir)
        .map_err(|e| io_error("creating output directory", e))?;

    println!("reproducing {} ('{}', {} unknowns)", args.figure, ex.label, ex.op.n());
    let norms = operator_norms_if_small(&ex.op)?;
    let mut reports = Vec::new();
    let mut labels = Vec::new();
    for spec in &ex.specs {
        let report = run_for_checks(&ex.op, spec, &ex.opts)?;
        println!(
            "  {:<16} {:>6} iterations  status {:?}",
            report.label(),
            report.iterations(),
            report.status
        );
        write_trace_csv(
            &args.output_dir.join(format!("{}.csv", report.label())),
            &report,
            false,
        )?;
        labels.push(report.label());
        reports.push(report);
    }
    write_summary_csv(&args.output_dir.join("summary.csv"), &reports)?;
    write_gnuplot(
        &args.output_dir.join(format!("{}.gp", args.figure)),
        &args.figure,
        ex.plot_norm,
        &labels,
    )?;
    let rows = collect_checks(&ex, &reports, norms.as_ref(), 0)?;
    print_check_table(&rows);
    write_checks_jsonl(&args.output_dir.join("checks.jsonl"), &rows)?;
    let failed = rows.iter().filter(|(_, c)| !c.passed).count();
    if failed > 0 {
        println!("{failed} check(s) FAILED");
        Ok(EXIT_CHECK_FAILURE)
    } else {
        Ok(EXIT_OK)
    }
}

fn cmd_export_matrix(args: &ExportArgs) -> Result<i32, CliError> {
    let problem = build_problem(&args.problem, args.n, args.c1, args.c2)?;
    let mut buf = Vec::new();
    write_matrix_market(&problem.matrix, &mut buf)
        .map_err(|e| io_error("formatting matrix", e))?;
    fs::write(&args.output, &buf).map_err(|e| io_error("writing matrix file", e))?;
    println!(
        "wrote {} ({} rows, {} nonzeros)",
        args.output.display(),
        problem.matrix.n_rows(),
        problem.matrix.nnz()
    );
    Ok(EXIT_OK)
}

/// Parses `args` and runs the requested subcommand, returning the process
/// exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Reproduce(a) => cmd_reproduce(a),
        Command::Verify(a) => cmd_verify(a),
        Command::ExportMatrix(a) => cmd_export_matrix(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
