use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use xdgmg::bench::{self, BenchCase, SolverKind, SweepRow};
use xdgmg::Error;

/// Cut-cell XDG Poisson solver with aggregation multigrid.
#[derive(Parser)]
#[command(name = "xdgmg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one case and write a one-row CSV report.
    Solve {
        #[command(flatten)]
        case: CaseArgs,
        /// Also write the residual history (iteration,residual).
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Run every combination of grids, degrees and solvers.
    Sweep {
        #[command(flatten)]
        case: CaseArgs,
        /// Cells per axis, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "2,4,8")]
        grids: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "2")]
        degrees: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "omg,gmres-pmg")]
        solvers: Vec<String>,
    },
    /// Time matrix-vector and matrix-matrix products on the case's matrix.
    BenchMatops {
        #[command(flatten)]
        case: CaseArgs,
        #[arg(long, default_value_t = 100)]
        reps: usize,
    },
    /// Write the agglomerated system matrix and right-hand side in MatrixMarket format.
    ExportMatrix {
        #[command(flatten)]
        case: CaseArgs,
        /// Right-hand side file; defaults to the matrix path with `_rhs` appended to the stem.
        #[arg(long)]
        rhs: Option<PathBuf>,
    },
}

#[derive(Args)]
struct CaseArgs {
    /// key=value file applied before the flags below.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dim: Option<String>,
    #[arg(long)]
    cells: Option<String>,
    #[arg(long)]
    degree: Option<String>,
    #[arg(long = "mu-a")]
    mu_a: Option<String>,
    #[arg(long = "mu-b")]
    mu_b: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    /// sphere:cx,cy[,cz],r | plane:nx,ny[,nz],offset | benchmark | constant:c
    #[arg(long)]
    levelset: Option<String>,
    /// direct | omg | gmres-pmg
    #[arg(long)]
    solver: Option<String>,
    #[arg(long)]
    tol: Option<String>,
    #[arg(long)]
    klo: Option<String>,
    #[arg(long)]
    levels: Option<String>,
    #[arg(long = "max-iter")]
    max_iter: Option<String>,
    #[arg(long = "quad-depth")]
    quad_depth: Option<String>,
    #[arg(long = "gauss-order")]
    gauss_order: Option<String>,
    /// Manufactured solution for an L² error column: sphere[:R] | plane-sine[:c]
    #[arg(long)]
    exact: Option<String>,
    /// Output file; stdout if absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl CaseArgs {
    fn case(&self) -> Result<BenchCase, Error> {
        let mut case = BenchCase::default();
        if let Some(path) = &self.config {
            case.apply_config(&std::fs::read_to_string(path)?)?;
        }
        let flags = [
            ("dim", &self.dim),
            ("cells", &self.cells),
            ("degree", &self.degree),
            ("mu-a", &self.mu_a),
            ("mu-b", &self.mu_b),
            ("alpha", &self.alpha),
            ("levelset", &self.levelset),
            ("solver", &self.solver),
            ("tol", &self.tol),
            ("klo", &self.klo),
            ("levels", &self.levels),
            ("max-iter", &self.max_iter),
            ("quad-depth", &self.quad_depth),
            ("gauss-order", &self.gauss_order),
            ("exact", &self.exact),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                case.set(key, v)?;
            }
        }
        case.validate()?;
        Ok(case)
    }

    fn output(&self) -> Result<Box<dyn Write>, Error> {
        Ok(match &self.out {
            Some(p) => Box::new(File::create(p)?),
            None => Box::new(io::stdout().lock()),
        })
    }
}

enum Failure {
    Usage(String),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Usage(e.to_string())
        }
    }
}

fn rhs_path(matrix: &Path) -> PathBuf {
    let stem = matrix
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    matrix.with_file_name(format!("{stem}_rhs.mtx"))
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Solve { case, history } => {
            let bc = case.case()?;
            let row = SweepRow {
                cells: bc.cells,
                dim: bc.dim,
                degree: bc.degree,
                solver: bc.solver,
                result: bench::run_case(&bc).map_err(|e| e.to_string()),
            };
            bench::write_sweep_csv(std::slice::from_ref(&row), case.output()?)?;
            match &row.result {
                Ok(r) => {
                    if let Some(p) = history {
                        r.report
                            .write_history_csv(File::create(p).map_err(Error::from)?)?;
                    }
                    if !r.report.converged {
                        return Err(Failure::Numerical(format!(
                            "{} did not converge: residual {:e} after {} iterations",
                            r.report.solver, r.report.final_residual, r.report.iterations
                        )));
                    }
                }
                Err(msg) => return Err(Failure::Numerical(msg.clone())),
            }
        }
        Command::Sweep {
            case,
            grids,
            degrees,
            solvers,
        } => {
            let bc = case.case()?;
            let solvers = solvers
                .iter()
                .map(|s| SolverKind::parse(s))
                .collect::<Result<Vec<_>, _>>()?;
            let rows = bench::run_sweep(&bc, &grids, &degrees, &solvers)?;
            bench::write_sweep_csv(&rows, case.output()?)?;
        }
        Command::BenchMatops { case, reps } => {
            let bc = case.case()?;
            let rows = bench::micro_bench_matops(&bc, reps)?;
            bench::write_matops_csv(&rows, case.output()?)?;
        }
        Command::ExportMatrix { case, rhs } => {
            let bc = case.case()?;
            let matrix = case
                .out
                .clone()
                .ok_or_else(|| Failure::Usage("export-matrix needs --out <matrix.mtx>".into()))?;
            let rhs = rhs.unwrap_or_else(|| rhs_path(&matrix));
            let (n, nnz) = bench::export_matrix(&bc, &matrix, &rhs)?;
            eprintln!(
                "wrote {} ({n} rows, {nnz} entries) and {}",
                matrix.display(),
                rhs.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("numerical failure: {msg}");
            ExitCode::from(2)
        }
    }
}
