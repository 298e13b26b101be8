//! `isospec`: spectra of vectorial Sturm–Liouville problems and isospectral
//! transforms from the command line.
//!
//! Exit codes: 0 success, 1 domain failure (validation, verification,
//! inadmissible perturbation), 2 usage or I/O error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use isospec::fd::suggest_window;
use isospec::io::{self, ProblemSpec};
use isospec::model::{validate_problem, BUILTIN_PROBLEMS};
use isospec::spectrum::{scan_spectrum, ScanOptions, SpectrumReport};
use isospec::transform::{build_perturbation, transform_problem, PerturbationEntry};
use isospec::verify::{check_isospectral, run_pipeline, ISOSPECTRAL_TOL};
use isospec::{builtin_problem, Error, Grid, MatrixPotential, Problem};

#[derive(Parser)]
#[command(name = "isospec", version, about = "Vectorial Sturm-Liouville spectra and isospectral transforms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check symmetry, self-adjointness and rank conditions of a problem.
    Validate {
        problem: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Eigenvalues, multiplicities and eigenfunctions in a window.
    Spectrum {
        problem: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Build the transformed problem for a perturbation file.
    Transform {
        problem: PathBuf,
        perturbation: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Compare two spectra, or run the full transform pipeline with all checks.
    Verify {
        problem: PathBuf,
        /// Second problem to compare against.
        #[arg(required_unless_present = "pipeline", conflicts_with = "pipeline")]
        other: Option<PathBuf>,
        /// Perturbation file: transform `problem` and check everything.
        #[arg(long)]
        pipeline: Option<PathBuf>,
        /// Use this grid potential as `Q` instead of the computed one.
        #[arg(long, requires = "pipeline")]
        q: Option<PathBuf>,
        /// Largest accepted eigenvalue shift.
        #[arg(long, default_value_t = ISOSPECTRAL_TOL)]
        verify_tol: f64,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Print a builtin problem as JSON (lists the names without one).
    Example {
        name: Option<String>,
        /// Write to this file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Integration grid nodes (odd, at least 5).
    #[arg(long, default_value_t = 401)]
    grid: usize,
    #[arg(long, allow_negative_numbers = true)]
    min: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    max: Option<f64>,
    /// Eigenvalue refinement tolerance.
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    /// Relative singular-value threshold for the rank decision.
    #[arg(long, default_value_t = 1e-6)]
    rank_tol: f64,
    /// Spacing of the coarse eigenvalue scan.
    #[arg(long, default_value_t = 0.02)]
    scan_step: f64,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

/// A failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Parse(_) | Error::Io(_) | Error::InvalidGrid(_) | Error::InvalidWindow { .. } => 2,
            _ => 1,
        };
        Self { code, message: e.to_string() }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure { code: 2, message: message.into() }
}

type CliResult = Result<u8, Failure>;

impl RunArgs {
    fn options(&self) -> Result<ScanOptions, Failure> {
        if self.grid < 5 || self.grid.is_multiple_of(2) {
            return Err(usage(format!("--grid must be odd and at least 5, got {}", self.grid)));
        }
        for (flag, v) in [("--tol", self.tol), ("--rank-tol", self.rank_tol), ("--scan-step", self.scan_step)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(usage(format!("{flag} must be positive, got {v}")));
            }
        }
        Ok(ScanOptions { step: self.scan_step, tol: self.tol, rank_tol: self.rank_tol, grid_nodes: self.grid })
    }

    /// The requested window; missing ends come from the low-order oracle
    /// sized to hold `count` eigenvalues.
    fn window(&self, p: &Problem, count: usize) -> Result<(f64, f64), Failure> {
        let (min, max) = match (self.min, self.max) {
            (Some(a), Some(b)) => (a, b),
            (a, b) => {
                let (lo, hi) = suggest_window(p, count)?;
                (a.unwrap_or(lo), b.unwrap_or(hi))
            }
        };
        if !(min.is_finite() && max.is_finite() && min < max) {
            return Err(usage(format!("invalid window [{min}, {max}]")));
        }
        Ok((min, max))
    }

    fn out_dir(&self) -> Result<&Path, Failure> {
        fs::create_dir_all(&self.out).map_err(|e| usage(format!("{}: {e}", self.out.display())))?;
        Ok(&self.out)
    }
}

fn load(path: &Path) -> Result<Problem, Failure> {
    io::load_problem(path).map_err(|e| {
        let mut f = Failure::from(e);
        f.message = format!("{}: {}", path.display(), f.message);
        f
    })
}

fn print_json<T: serde::Serialize + ?Sized>(value: &T) -> Result<(), Failure> {
    print!("{}", io::to_json(value)?);
    Ok(())
}

fn write_spectrum(report: &SpectrumReport, dir: &Path, format: Format) -> Result<(), Failure> {
    match format {
        Format::Json => io::write_json(&dir.join("spectrum.json"), &report.entries())?,
        Format::Csv => {
            let mut text = String::from("lambda,multiplicity,residual\n");
            for e in report.entries() {
                text.push_str(&format!(
                    "{},{},{}\n",
                    io::format_f64(e.lambda),
                    e.multiplicity,
                    io::format_f64(e.residual)
                ));
            }
            fs::write(dir.join("spectrum.csv"), text).map_err(Error::from)?;
        }
    }
    for (k, pair) in report.pairs.iter().enumerate() {
        for (l, phi) in pair.phis.iter().enumerate() {
            let file = fs::File::create(dir.join(format!("eigenfunction_k{k}_i{}.csv", l + 1))).map_err(Error::from)?;
            io::write_function_csv(file, &report.grid, phi)?;
        }
    }
    Ok(())
}

fn cmd_validate(problem: &Path, format: Format) -> CliResult {
    let p = load(problem)?;
    let report = validate_problem(&p)?;
    match format {
        Format::Json => print_json(&report)?,
        Format::Csv => {
            println!("name,passed,defect,threshold");
            for c in &report.checks {
                println!("{},{},{},{}", c.name, c.passed, io::format_f64(c.defect), io::format_f64(c.threshold));
            }
        }
    }
    for c in report.failures() {
        eprintln!("failed: {} (defect {:e}, threshold {:e})", c.name, c.defect, c.threshold);
    }
    Ok(if report.passed() { 0 } else { 1 })
}

fn require_valid(p: &Problem, path: &Path) -> Result<(), Failure> {
    let report = validate_problem(p)?;
    if let Some(c) = report.failures().next() {
        return Err(Failure { code: 1, message: format!("{}: {} check failed", path.display(), c.name) });
    }
    Ok(())
}

fn cmd_spectrum(problem: &Path, run: &RunArgs) -> CliResult {
    let p = load(problem)?;
    require_valid(&p, problem)?;
    let opts = run.options()?;
    let window = run.window(&p, 8)?;
    let report = scan_spectrum(&p, window.0, window.1, opts)?;
    write_spectrum(&report, run.out_dir()?, run.format)?;
    print_json(&report.entries())?;
    Ok(0)
}

/// Enough oracle eigenvalues to reach the largest requested index.
fn entries_window(p: &Problem, run: &RunArgs, entries: &[PerturbationEntry]) -> Result<(f64, f64), Failure> {
    let top = entries.iter().map(|e| e.k + 1).max().unwrap_or(1);
    run.window(p, (top * p.dim()).max(8))
}

fn cmd_transform(problem: &Path, perturbation: &Path, run: &RunArgs) -> CliResult {
    let p = load(problem)?;
    require_valid(&p, problem)?;
    let entries = io::load_perturbation(perturbation)?;
    let opts = run.options()?;
    let window = entries_window(&p, run, &entries)?;
    let report = scan_spectrum(&p, window.0, window.1, opts)?;
    let pert = build_perturbation(&report, &entries)?;
    let grid = Grid::new(opts.grid_nodes)?;
    let (q_problem, result) = transform_problem(&p, &pert, &grid)?;

    let dir = run.out_dir()?;
    let q_file = fs::File::create(dir.join("q_potential.csv")).map_err(Error::from)?;
    io::write_potential_csv(q_file, &grid, &result.q)?;
    let spec = ProblemSpec::from_problem(&q_problem.with_potential(sampled_q(&result.q, &grid)?)?, "q_potential.csv");
    io::write_json(&dir.join("problem.json"), &spec)?;
    let boundary = result.boundary_output(&p);
    io::write_json(&dir.join("boundary.json"), &boundary)?;
    for t in &result.psis {
        let file = fs::File::create(dir.join(format!("psi_k{}_i{}.csv", t.k, t.i))).map_err(Error::from)?;
        io::write_function_csv(file, &grid, &t.psi)?;
    }
    print_json(&boundary)?;
    Ok(0)
}

fn sampled_q(q: &[isospec::linalg::Mat], grid: &Grid) -> Result<MatrixPotential, Failure> {
    Ok(MatrixPotential::Sampled(isospec::model::SampledPotential::new(grid.clone(), q.to_vec())?))
}

fn cmd_verify(
    problem: &Path,
    other: Option<&Path>,
    pipeline: Option<&Path>,
    q: Option<&Path>,
    verify_tol: f64,
    run: &RunArgs,
) -> CliResult {
    let p = load(problem)?;
    require_valid(&p, problem)?;
    let opts = run.options()?;
    if let Some(pert_path) = pipeline {
        let entries = io::load_perturbation(pert_path)?;
        let window = entries_window(&p, run, &entries)?;
        let q_override = match q {
            Some(path) => {
                let file = fs::File::open(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
                Some(MatrixPotential::Sampled(io::read_potential_csv(file, p.dim())?))
            }
            None => None,
        };
        let run_out = run_pipeline(&p, &entries, window, verify_tol, opts, q_override)?;
        let report = &run_out.report;
        print_json(report)?;
        if !report.isospectral.passed {
            eprintln!("failed: spectra differ (max shift {:e})", report.isospectral.max_shift);
        }
        for r in report.residuals.iter().filter(|r| !r.passed) {
            eprintln!("failed: {} residual {:e} > {:e}", r.name, r.max_residual, r.tolerance);
        }
        return Ok(if report.passed { 0 } else { 1 });
    }
    let other = other.ok_or_else(|| usage("a second problem or --pipeline is required"))?;
    let pb = load(other)?;
    require_valid(&pb, other)?;
    let window = run.window(&p, 8)?;
    let report = check_isospectral(&p, &pb, window, verify_tol, opts)?;
    print_json(&report)?;
    if !report.passed {
        eprintln!(
            "failed: max shift {:e}, multiplicities {}",
            report.max_shift,
            if report.multiplicity_match { "match" } else { "differ" }
        );
    }
    Ok(if report.passed { 0 } else { 1 })
}

fn cmd_example(name: Option<&str>, out: Option<&Path>) -> CliResult {
    let Some(name) = name else {
        for n in BUILTIN_PROBLEMS {
            println!("{n}");
        }
        return Ok(0);
    };
    let p = builtin_problem(name).map_err(|e| usage(e.to_string()))?;
    match out {
        Some(path) => io::save_problem(path, &p)?,
        None => print_json(&ProblemSpec::from_problem(&p, "potential.csv"))?,
    }
    Ok(0)
}

fn configure_threads() -> Result<(), Failure> {
    if let Ok(v) = std::env::var("ISOSPEC_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| usage(format!("ISOSPEC_THREADS must be a positive integer, got {v:?}")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| usage(e.to_string()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match &cli.command {
        Command::Validate { problem, format } => cmd_validate(problem, *format),
        Command::Spectrum { problem, run } => cmd_spectrum(problem, run),
        Command::Transform { problem, perturbation, run } => cmd_transform(problem, perturbation, run),
        Command::Verify { problem, other, pipeline, q, verify_tol, run } => {
            cmd_verify(problem, other.as_deref(), pipeline.as_deref(), q.as_deref(), *verify_tol, run)
        }
        Command::Example { name, out } => cmd_example(name.as_deref(), out.as_deref()),
    });
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
