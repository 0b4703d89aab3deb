//! Batch front door: problem files in, reports and CSV out.
//!
//! Exit codes: 0 success, 1 bad input/IO, 2 a solvability condition failed,
//! 3 incompatible reduced system, 4 solver divergence, 5 low-confidence
//! funnel bundle.

mod expr;
mod output;
mod presets;
mod spec;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use greenbvp::funnel::{approximation_scheme, sample_funnel, FunnelOptions, SchemeOptions};
use greenbvp::greens::{
    build_greens, compatibility_determinant, homogeneous_lift, kernel_norms, GreensKernel,
};
use greenbvp::hammerstein::{check_conditions, picard_solve, ProbeConfig, SelectionSpec};
use greenbvp::numerics::{Grid, ScalarFn};
use greenbvp::spectral::{build_comparison, hill_radius, power_radius_detailed};

use output::{canonical_json, kernel_csv, print_report, solution_csv, to_value, write_atomic};
use spec::ProblemSpec;

#[derive(Parser)]
#[command(
    name = "greenbvp",
    version,
    about = "Green's-function tooling for second-order two-point boundary value problems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct InputArgs {
    /// Problem file (key = value lines; see the bundled presets for examples)
    #[arg(long, value_name = "FILE", conflicts_with = "preset")]
    spec: Option<PathBuf>,
    /// Built-in example problem: example-3.5, example-3.6, example-4.3
    #[arg(long, value_name = "NAME")]
    preset: Option<String>,
    /// Override the grid resolution (even, default from the problem file)
    #[arg(long, value_name = "N")]
    grid: Option<usize>,
    /// Seed for randomized selections and sampling
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for CSV artifacts
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum SelectionArg {
    Center,
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Power,
    Hill,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Build the kernel and report determinant, norms, and thresholds
    Greens {
        #[command(flatten)]
        input: InputArgs,
        /// Also write the dense kernel snapshot to `<out>/kernel.csv`
        #[arg(long)]
        snapshot: bool,
    },
    /// Evaluate the solvability conditions (exit 2 when one fails)
    Check {
        #[command(flatten)]
        input: InputArgs,
    },
    /// Run the fixed-point solver and write the trajectory CSV
    Solve {
        #[command(flatten)]
        input: InputArgs,
        /// Stop when the L1 increment drops below this
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long, default_value_t = 500)]
        max_iter: usize,
        /// Initial selection of the set-valued right-hand side
        #[arg(long, value_enum, default_value_t = SelectionArg::Center)]
        selection: SelectionArg,
    },
    /// Spectral radius of the comparison operator 2∫|G|η
    Spectral {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long, value_enum, default_value_t = MethodArg::Power)]
        method: MethodArg,
        /// Override the weight η(t) from the problem file
        #[arg(long, value_name = "EXPR")]
        eta: Option<String>,
        /// Search ceiling for the discriminant route
        #[arg(long, default_value_t = 2.0)]
        lambda_max: f64,
    },
    /// Sample the solution funnel of a box problem, or run the x/n
    /// perturbation scheme when --perturb is given
    Funnel {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long, default_value_t = 64)]
        members: usize,
        /// Comma-separated shift indices; switches to the scheme probe
        #[arg(long, value_delimiter = ',')]
        perturb: Vec<usize>,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
    },
}

#[derive(Debug)]
enum CliError {
    Core(greenbvp::Error),
    Input(String),
    Io(std::io::Error),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Input(m) => write!(f, "{m}"),
            CliError::Io(e) => write!(f, "{e}"),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(greenbvp::Error::IncompatibleSystem { .. }) => 3,
            CliError::Core(greenbvp::Error::Divergence(_)) => 4,
            CliError::Core(greenbvp::Error::ConditionViolated { .. }) => 2,
            _ => 1,
        }
    }
}

impl From<greenbvp::Error> for CliError {
    fn from(e: greenbvp::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<spec::SpecError> for CliError {
    fn from(e: spec::SpecError) -> Self {
        CliError::Input(e.0)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    match run(cli) {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {err}");
            std::process::exit(err.exit_code());
        }
    }
}

fn load_spec(input: &InputArgs) -> Result<ProblemSpec, CliError> {
    let mut spec = match (&input.spec, &input.preset) {
        (Some(path), None) => {
            let text = std::fs::read_to_string(path)?;
            ProblemSpec::parse(&text)?
        }
        (None, Some(name)) => presets::load_preset(name)?,
        (None, None) => {
            return Err(CliError::Input(
                "provide a problem with --spec FILE or --preset NAME".to_string(),
            ))
        }
        (Some(_), Some(_)) => unreachable!("clap conflicts_with"),
    };
    if let Some(n) = input.grid {
        spec.grid_n = n;
    }
    Ok(spec)
}

struct Problem {
    spec: ProblemSpec,
    grid: Grid,
    kernel: GreensKernel,
    determinant: f64,
}

fn build_problem(input: &InputArgs) -> Result<Problem, CliError> {
    let spec = load_spec(input)?;
    let grid = spec.grid()?;
    let coeffs = spec.coefficients();
    let bc = spec.boundary_conditions()?;
    let determinant = compatibility_determinant(&coeffs, &bc, &grid)?;
    let kernel = build_greens(&coeffs, &bc, &grid)?;
    Ok(Problem {
        spec,
        grid,
        kernel,
        determinant,
    })
}

fn run(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Greens { input, snapshot } => cmd_greens(&input, snapshot),
        Command::Check { input } => cmd_check(&input),
        Command::Solve {
            input,
            tol,
            max_iter,
            selection,
        } => cmd_solve(&input, tol, max_iter, selection),
        Command::Spectral {
            input,
            method,
            eta,
            lambda_max,
        } => cmd_spectral(&input, method, eta.as_deref(), lambda_max),
        Command::Funnel {
            input,
            members,
            perturb,
            tol,
        } => cmd_funnel(&input, members, &perturb, tol),
    }
}

fn cmd_greens(input: &InputArgs, snapshot: bool) -> Result<i32, CliError> {
    let problem = build_problem(input)?;
    let norms = kernel_norms(&problem.kernel);
    let mut report = json!({
        "mesh": problem.grid.subintervals(),
        "determinant": problem.determinant,
        "representation": problem.kernel.representation(),
        "norms": to_value(&norms),
        "thresholds": {
            "growth_m": 1.0 / norms.sup_l2_rows,
            "eta_l2": 1.0 / (2.0 * norms.sup_l2_rows),
            "lipschitz_mu_l1": 1.0 / norms.sup_abs,
        },
    });
    if snapshot {
        let path = input.out.join("kernel.csv");
        write_atomic(&path, &kernel_csv(&problem.kernel))?;
        report["snapshot"] = json!(path.display().to_string());
    }
    print_report(&report);
    Ok(0)
}

fn cmd_check(input: &InputArgs) -> Result<i32, CliError> {
    let problem = build_problem(input)?;
    let rhs = problem.spec.right_hand_side()?;
    rhs.probe_metadata(&ProbeConfig::default())?;
    let norms = kernel_norms(&problem.kernel);
    let report = check_conditions(&norms, &rhs, &problem.grid);
    let mut value = to_value(&report);
    value["mesh"] = json!(problem.grid.subintervals());
    print_report(&value);
    Ok(if report.all_pass() { 0 } else { 2 })
}

fn cmd_solve(
    input: &InputArgs,
    tol: f64,
    max_iter: usize,
    selection: SelectionArg,
) -> Result<i32, CliError> {
    let problem = build_problem(input)?;
    let rhs = problem.spec.right_hand_side()?;
    rhs.probe_metadata(&ProbeConfig::default())?;
    let lift = if problem.spec.homogeneous_targets() {
        None
    } else {
        Some(homogeneous_lift(
            &problem.spec.coefficients(),
            problem.kernel.boundary_conditions(),
            &problem.grid,
        )?)
    };
    let selection = match selection {
        SelectionArg::Center => SelectionSpec::Center,
        SelectionArg::Random => SelectionSpec::Random { seed: input.seed },
    };
    match picard_solve(&problem.kernel, lift.as_ref(), &rhs, &selection, tol, max_iter) {
        Ok(solution) => {
            let path = input.out.join("solution.csv");
            write_atomic(&path, &solution_csv(&solution))?;
            let report = json!({
                "converged": true,
                "mesh": problem.grid.subintervals(),
                "iterations": solution.iterations,
                "increments": solution.increments,
                "q": solution.q,
                "guaranteed": solution.guaranteed,
                "observed_ratio": solution.observed_ratio(10.0 * tol),
                "residual_ode": solution.residual_ode,
                "residual_bc": solution.residual_bc,
                "csv": path.display().to_string(),
            });
            print_report(&report);
            Ok(0)
        }
        Err(greenbvp::Error::Divergence(history)) => {
            let report = json!({
                "converged": false,
                "mesh": problem.grid.subintervals(),
                "iterations": history.iterations,
                "increments": history.increments,
                "last_increment": history.last_increment,
            });
            print_report(&report);
            Ok(4)
        }
        Err(other) => Err(other.into()),
    }
}

/// The discriminant route shoots the periodic problem for x'' - x, where
/// |G| = -G; refuse anything else.
fn hill_applicable(problem: &Problem) -> Result<(), CliError> {
    let coeffs = problem.spec.coefficients();
    let periodic = problem.kernel.boundary_conditions().is_periodic();
    let matches_reference = problem.grid.nodes().iter().all(|&t| {
        (coeffs.a2(t) - 1.0).abs() < 1e-12
            && coeffs.a1(t).abs() < 1e-12
            && (coeffs.a0(t) + 1.0).abs() < 1e-12
    });
    if !periodic || !matches_reference || !problem.kernel.is_nonpositive() {
        return Err(CliError::Input(
            "the discriminant route applies only to the periodic problem for x'' - x \
             (sign-definite kernel); use --method power"
                .to_string(),
        ));
    }
    Ok(())
}

fn cmd_spectral(
    input: &InputArgs,
    method: MethodArg,
    eta_override: Option<&str>,
    lambda_max: f64,
) -> Result<i32, CliError> {
    let problem = build_problem(input)?;
    let eta: ScalarFn = match eta_override {
        Some(source) => {
            let expr = expr::Expression::parse(source, problem.spec.dim)
                .map_err(|e| CliError::Input(format!("--eta: {e}")))?;
            if !expr.is_time_only() {
                return Err(CliError::Input("--eta: must depend on t only".to_string()));
            }
            std::sync::Arc::new(move |t| expr.eval_time(t))
        }
        None => problem.spec.eta_fn().ok_or_else(|| {
            CliError::Input("no weight: give `eta` in the problem file or --eta".to_string())
        })?,
    };
    let mesh = problem.grid.subintervals();
    let power = |problem: &Problem| -> Result<(f64, usize), CliError> {
        let matrix = build_comparison(&problem.kernel, &eta)?;
        Ok(power_radius_detailed(&matrix, 1e-12, 20_000)?)
    };
    let report = match method {
        MethodArg::Power => {
            let (radius, iterations) = power(&problem)?;
            json!({"method": "power", "radius": radius, "iterations": iterations, "mesh": mesh})
        }
        MethodArg::Hill => {
            hill_applicable(&problem)?;
            let result = hill_radius(&eta, lambda_max, &problem.grid)?;
            json!({
                "method": "hill",
                "radius": result.radius,
                "root_found": result.root_found,
                "iterations": result.evaluations,
                "mesh": mesh,
            })
        }
        MethodArg::Both => {
            hill_applicable(&problem)?;
            let (power_value, iterations) = power(&problem)?;
            let hill = hill_radius(&eta, lambda_max, &problem.grid)?;
            json!({
                "method": "both",
                "radius": power_value,
                "power": {"radius": power_value, "iterations": iterations},
                "hill": {
                    "radius": hill.radius,
                    "root_found": hill.root_found,
                    "iterations": hill.evaluations,
                },
                "gap": (power_value - hill.radius).abs(),
                "mesh": mesh,
            })
        }
    };
    print_report(&report);
    Ok(0)
}

fn member_path(out: &Path, index: usize) -> PathBuf {
    out.join(format!("member_{index:03}.csv"))
}

fn cmd_funnel(
    input: &InputArgs,
    members: usize,
    perturb: &[usize],
    tol: f64,
) -> Result<i32, CliError> {
    let problem = build_problem(input)?;
    let rhs = problem.spec.right_hand_side()?;
    rhs.probe_metadata(&ProbeConfig::default())?;

    if !perturb.is_empty() {
        let opts = SchemeOptions {
            seed: input.seed,
            ..SchemeOptions::default()
        };
        let report = approximation_scheme(&rhs, &problem.kernel, perturb, &opts)?;
        let mut value = to_value(&report);
        value["mesh"] = json!(problem.grid.subintervals());
        write_atomic(&input.out.join("scheme.json"), &canonical_json(&value))?;
        print_report(&value);
        return Ok(if report.all_pass() { 0 } else { 2 });
    }

    let opts = FunnelOptions {
        members,
        seed: input.seed,
        tol,
        ..FunnelOptions::default()
    };
    let bundle = sample_funnel(&problem.kernel, &rhs, &opts)?;
    let mut files = Vec::with_capacity(bundle.members.len());
    for (index, member) in bundle.members.iter().enumerate() {
        let path = member_path(&input.out, index);
        write_atomic(&path, &solution_csv(member))?;
        files.push(path.display().to_string());
    }
    let manifest = json!({
        "seed": input.seed,
        "mesh": problem.grid.subintervals(),
        "diameter_c1": bundle.diameter_c1,
        "max_residual": bundle.max_residual,
        "residual_tolerance": bundle.residual_tolerance,
        "bound_R": bundle.bound_c1,
        "bound_sup": bundle.bound_sup,
        "converged_count": bundle.converged_count,
        "requested": bundle.requested,
        "low_confidence": bundle.low_confidence,
        "member_seeds": bundle.member_seeds,
        "members": files,
    });
    write_atomic(&input.out.join("manifest.json"), &canonical_json(&manifest))?;
    print_report(&manifest);
    Ok(if bundle.low_confidence { 5 } else { 0 })
}
