//! The `dip` command line.
//!
//! Exit status: 0 on success, 1 when a solve does not converge or an input
//! cannot be processed, 2 on usage errors.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use dip_core::driver::{InnerTolerance, Reference, SolveResult, SolverOptions, Status};
use dip_core::oracle::{solve_centralized, REFERENCE_TOL};
use dip_core::{initial_points, solve, PartitionedNlp};

use crate::opf::{
    interconnect_copies, parse_matpower_case, parse_tie_specs, partition_opf, write_matpower_case, OpfCase,
    OpfError, ParseError,
};
use crate::pnlp::{parse_pnlp, structure_of, write_pnlp, PnlpError};
use crate::report::{write_csv, write_transcript, Summary};

#[derive(Debug, Parser)]
#[command(name = "dip", version, about = "Decentralized interior point method for partitioned NLPs and AC OPF")]
#[command(arg_required_else_help = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve a partitioned AC OPF with the decentralized method.
    SolveOpf(SolveArgs),
    /// Solve a pnlp-v1 JSON instance with the decentralized method.
    SolvePnlp(SolveArgs),
    /// Solve with the centralized reference method (MATPOWER or pnlp input).
    Oracle(SolveArgs),
    /// Finite-difference check of the analytic OPF derivatives.
    CheckDerivatives(CheckArgs),
    /// Write `k` interconnected copies of a case as one MATPOWER case.
    MakeInterconnected(InterconnectArgs),
}

#[derive(Debug, Args)]
pub struct PartitionArgs {
    /// JSON list of regions, each a list of bus ids.
    #[arg(long, value_name = "PATH", conflicts_with = "copies")]
    pub partition: Option<PathBuf>,
    /// Number of interconnected copies of the case, one region each.
    #[arg(long, value_name = "K", requires = "ties")]
    pub copies: Option<usize>,
    /// JSON list of tie lines for --copies.
    #[arg(long, value_name = "PATH", requires = "copies")]
    pub ties: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Input file: MATPOWER case, or pnlp-v1 JSON for solve-pnlp (and for
    /// oracle when the name ends in `.json`).
    #[arg(long, value_name = "PATH")]
    pub case: PathBuf,
    #[command(flatten)]
    pub partition: PartitionArgs,
    #[arg(long, value_name = "EPS")]
    pub tol: Option<f64>,
    #[arg(long)]
    pub delta0: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub max_outer: Option<usize>,
    #[arg(long)]
    pub kappa_eta: Option<f64>,
    #[arg(long)]
    pub theta_eta: Option<f64>,
    /// Upper bound on the forcing tolerance of the inner solve.
    #[arg(long)]
    pub inner_tol_cap: Option<f64>,
    /// Fixed inner tolerance instead of the forcing rule.
    #[arg(long, value_name = "TOL")]
    pub fixed_inner_tol: Option<f64>,
    /// Start every inner solve from zero.
    #[arg(long)]
    pub cold_inner: bool,
    /// Per-iteration CSV.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Final JSON summary.
    #[arg(long, value_name = "PATH")]
    pub summary: Option<PathBuf>,
    /// JSONL message transcript.
    #[arg(long, value_name = "PATH")]
    pub transcript: Option<PathBuf>,
    /// Run the centralized method first and report errors against it.
    #[arg(long)]
    pub reference: bool,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[arg(long, value_name = "PATH")]
    pub case: PathBuf,
    #[command(flatten)]
    pub partition: PartitionArgs,
    /// Relative tolerance of the comparison.
    #[arg(long, default_value_t = 1e-5)]
    pub tol: f64,
}

#[derive(Debug, Args)]
pub struct InterconnectArgs {
    #[arg(long, value_name = "PATH")]
    pub case: PathBuf,
    #[arg(long, value_name = "K")]
    pub copies: usize,
    #[arg(long, value_name = "PATH")]
    pub ties: PathBuf,
    /// Interconnected MATPOWER case.
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    /// Regions of the interconnected case, as a --partition file.
    #[arg(long, value_name = "PATH")]
    pub regions: Option<PathBuf>,
    /// pnlp-v1 structure export of the partitioned problem.
    #[arg(long, value_name = "PATH")]
    pub structure: Option<PathBuf>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Case {
        path: PathBuf,
        #[source]
        source: ParseError,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Pnlp {
        path: PathBuf,
        #[source]
        source: PnlpError,
    },
    #[error(transparent)]
    Opf(#[from] OpfError),
    #[error(transparent)]
    Core(#[from] dip_core::Error),
    #[error("reference solve ended with status {0}")]
    Reference(&'static str),
    #[error("derivative check failed")]
    Derivatives,
    #[error("solve ended with status {0}")]
    NotConverged(&'static str),
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_case(path: &Path) -> Result<OpfCase, CliError> {
    parse_matpower_case(&read(path)?).map_err(|source| CliError::Case {
        path: path.to_path_buf(),
        source,
    })
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    serde_json::from_str(&read(path)?).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// A problem ready for the driver.
pub struct Instance {
    pub problem: PartitionedNlp,
    pub x0: Vec<Vec<f64>>,
}

/// Case, regions and partitioned OPF from the input flags. Without
/// --partition or --copies the whole case is one region.
pub fn opf_instance(case_path: &Path, p: &PartitionArgs) -> Result<Instance, CliError> {
    let case = read_case(case_path)?;
    let (case, regions) = match (&p.partition, p.copies, &p.ties) {
        (Some(path), _, _) => {
            let regions: Vec<Vec<usize>> = read_json(path)?;
            (case, regions)
        }
        (None, Some(k), Some(ties)) => {
            let text = read(ties)?;
            let ties = parse_tie_specs(&text).map_err(|source| CliError::Json {
                path: ties.clone(),
                source,
            })?;
            let ic = interconnect_copies(&case, k, &ties)?;
            (ic.case, ic.regions)
        }
        _ => {
            let all = case.buses.iter().map(|b| b.id).collect();
            (case, vec![all])
        }
    };
    let part = partition_opf(&case, &regions)?;
    let x0 = part.flat_start(&case);
    Ok(Instance {
        problem: part.problem,
        x0,
    })
}

pub fn pnlp_instance(path: &Path) -> Result<Instance, CliError> {
    let inst = parse_pnlp(&read(path)?)
        .and_then(|i| i.build())
        .map_err(|source| CliError::Pnlp {
            path: path.to_path_buf(),
            source,
        })?;
    Ok(Instance {
        problem: inst.0,
        x0: inst.1,
    })
}

impl SolveArgs {
    pub fn options(&self) -> SolverOptions {
        let mut o = SolverOptions::default();
        let set = |dst: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *dst = v;
            }
        };
        set(&mut o.tol, self.tol);
        set(&mut o.delta0, self.delta0);
        set(&mut o.sigma, self.sigma);
        set(&mut o.tau, self.tau);
        set(&mut o.kappa_eta, self.kappa_eta);
        set(&mut o.theta_eta, self.theta_eta);
        set(&mut o.inner_tol_cap, self.inner_tol_cap);
        if let Some(m) = self.max_outer {
            o.max_outer = m;
        }
        if let Some(t) = self.fixed_inner_tol {
            o.inner_tolerance = InnerTolerance::Fixed(t);
        }
        if self.cold_inner {
            o.warm_start = false;
        }
        o
    }
}

fn centralized(inst: &Instance, options: &SolverOptions, reference: Option<&Reference>) -> Result<SolveResult, CliError> {
    let start = initial_points(&inst.problem, inst.x0.clone(), options.delta0)?;
    Ok(solve_centralized(&inst.problem, options, start, vec![0.0; inst.problem.n_c()], reference)?)
}

/// Runs the centralized method to [`REFERENCE_TOL`] and returns `(x*, f*)`.
pub fn reference_solution(inst: &Instance, options: &SolverOptions) -> Result<Reference, CliError> {
    let o = SolverOptions {
        tol: REFERENCE_TOL,
        ..options.clone()
    };
    let r = centralized(inst, &o, None)?;
    if r.status != Status::Converged {
        return Err(CliError::Reference(r.status.name()));
    }
    Ok(Reference {
        x: r.points.iter().map(|p| p.x.clone()).collect(),
        objective: r.final_metrics.objective,
    })
}

fn run_solve(args: &SolveArgs, inst: Instance, decentralized: bool, out: &mut dyn Write) -> Result<(), CliError> {
    let options = args.options();
    options.validate()?;
    let reference = if args.reference {
        Some(reference_solution(&inst, &options)?)
    } else {
        None
    };
    let result = if decentralized {
        let start = initial_points(&inst.problem, inst.x0.clone(), options.delta0)?;
        solve(&inst.problem, &options, start, vec![0.0; inst.problem.n_c()], reference.as_ref())?
    } else {
        centralized(&inst, &options, reference.as_ref())?
    };
    if let Some(path) = &args.out {
        let mut buf = Vec::new();
        write_csv(&mut buf, &result.records).expect("writing to memory");
        write(path, &buf)?;
    }
    let summary = Summary::of(&result);
    if let Some(path) = &args.summary {
        write(path, summary.to_json().as_bytes())?;
    }
    if let Some(path) = &args.transcript {
        let mut buf = Vec::new();
        write_transcript(&mut buf, result.bus.log()).expect("writing to memory");
        write(path, &buf)?;
    }
    let _ = writeln!(
        out,
        "{}: {} iterations, {} inner, ||F0|| = {:e}, f = {}",
        summary.status,
        summary.iterations,
        summary.inner_iterations,
        summary.final_norms.kkt0_inf,
        summary.final_norms.objective
    );
    if result.status != Status::Converged {
        return Err(CliError::NotConverged(result.status.name()));
    }
    Ok(())
}

/// Evaluation point for the derivative check: voltages and powers near the
/// flat start, multipliers of both signs.
fn probe_point(x0: &[f64], n_g: usize, n_h: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let x = x0
        .iter()
        .enumerate()
        .map(|(j, v)| v + 0.05 * ((j as f64) * 0.7).sin())
        .collect();
    let gamma = (0..n_g).map(|j| ((j as f64) * 1.3).cos()).collect();
    let mu = (0..n_h).map(|j| 0.5 + 0.25 * ((j as f64) * 0.9).sin()).collect();
    (x, gamma, mu)
}

fn run_check(args: &CheckArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let inst = opf_instance(&args.case, &args.partition)?;
    let mut ok = true;
    for (i, sub) in inst.problem.subsystems().iter().enumerate() {
        let d = sub.dims();
        let (x, gamma, mu) = probe_point(&inst.x0[i], d.n_g, d.n_h);
        let rep = inst.problem.check_derivatives_fd(i, &x, &gamma, &mu, args.tol)?;
        let _ = writeln!(
            out,
            "region {i}: gradient {:.1e} jac_g {:.1e} jac_h {:.1e} hessian {:.1e} {}",
            rep.gradient,
            rep.jac_g,
            rep.jac_h,
            rep.hessian,
            if rep.passed { "pass" } else { "FAIL" }
        );
        ok &= rep.passed;
    }
    if ok {
        Ok(())
    } else {
        Err(CliError::Derivatives)
    }
}

fn run_interconnect(args: &InterconnectArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let case = read_case(&args.case)?;
    let ties = parse_tie_specs(&read(&args.ties)?).map_err(|source| CliError::Json {
        path: args.ties.clone(),
        source,
    })?;
    let ic = interconnect_copies(&case, args.copies, &ties)?;
    write(&args.out, write_matpower_case(&ic.case).as_bytes())?;
    if let Some(path) = &args.regions {
        let json = serde_json::to_string(&ic.regions).expect("regions serialize");
        write(path, format!("{json}\n").as_bytes())?;
    }
    if let Some(path) = &args.structure {
        let part = partition_opf(&ic.case, &ic.regions)?;
        write(path, write_pnlp(&structure_of(&part.problem)).as_bytes())?;
    }
    let _ = writeln!(
        out,
        "{} buses, {} branches, {} generators in {} regions",
        ic.case.buses.len(),
        ic.case.branches.len(),
        ic.case.generators.len(),
        ic.regions.len()
    );
    Ok(())
}

pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match &cli.command {
        Command::SolveOpf(a) => run_solve(a, opf_instance(&a.case, &a.partition)?, true, out),
        Command::SolvePnlp(a) => run_solve(a, pnlp_instance(&a.case)?, true, out),
        Command::Oracle(a) => {
            let inst = if a.case.extension().is_some_and(|e| e == "json") {
                pnlp_instance(&a.case)?
            } else {
                opf_instance(&a.case, &a.partition)?
            };
            run_solve(a, inst, false, out)
        }
        Command::CheckDerivatives(a) => run_check(a, out),
        Command::MakeInterconnected(a) => run_interconnect(a, out),
    }
}

/// Parses `args` (including the program name), runs, and returns the exit
/// status.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            if code == 0 {
                let _ = write!(out, "{text}");
            } else {
                let _ = write!(err, "{text}");
            }
            return code;
        }
    };
    match execute(&cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}
