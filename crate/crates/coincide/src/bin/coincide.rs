//! Command-line front end.
//!
//! Exit codes: 0 when every check passed, 2 when a check failed, 3 when the
//! solver failed, 1 for usage, configuration and file errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use coincide::expr::{Expr, Scope};
use coincide::run::{self, RunOptions, RunOutcome};
use coincide::{read_config, ForcingRegistry, IoError, IoResult};
use coincide_core::nonlinearity::compute_apriori_exponents;
use coincide_core::solver::{brouwer_degree_small, DegreeReport};

#[derive(Parser)]
#[command(name = "coincide", version, about = "Constrained semilinear elliptic systems on boxes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Problem configuration (TOML).
    config: PathBuf,
    /// Output directory for the report and field files.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print only the machine block.
    #[arg(long)]
    machine: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Analytic invariance criteria, sampled resolvent invariance and forcing audits.
    CheckInvariance(RunArgs),
    /// Solve on the configured box.
    Solve {
        #[command(flatten)]
        run: RunArgs,
        /// Initial field (CSV on the configured grid), projected into K.
        #[arg(long)]
        init: Option<PathBuf>,
    },
    /// Solve on expanding boxes and report tails.
    SolveRn(RunArgs),
    /// Project one state onto K(x).
    Project {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x: Vec<f64>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        u: Vec<f64>,
    },
    /// Brouwer degree of a map on a box in dimension 1 to 3.
    ///
    /// Either give one expression in u1..ud per component, or a configuration
    /// with at most three unknowns to get the degree of I - phi_h.
    Degree {
        /// One component of the map; repeat for each component.
        #[arg(long = "map", allow_hyphen_values = true, conflicts_with = "config")]
        map: Vec<String>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Resolvent step for the configuration form.
        #[arg(long, default_value_t = 0.1)]
        h: f64,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        lo: Vec<f64>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        hi: Vec<f64>,
        /// Lattice cells per axis.
        #[arg(long, default_value_t = 40)]
        density: usize,
    },
    /// Auxiliary exponents of the a priori estimate.
    Exponents {
        #[arg(long)]
        s: f64,
        #[arg(long)]
        q: f64,
        #[arg(long)]
        n: usize,
    },
}

fn emit(outcome: RunOutcome, machine: bool) -> i32 {
    if machine {
        println!("{}", outcome.report.machine_json());
    } else {
        print!("{}", outcome.report.render());
    }
    outcome.status.code()
}

fn print_degree(r: &DegreeReport) {
    println!("degree = {}", r.degree);
    match r.winding {
        Some(w) => println!("boundary count = {w} ({})", if r.consistent() { "consistent" } else { "INCONSISTENT" }),
        None => println!("boundary count = n/a"),
    }
    for z in &r.zeros {
        println!("zero at {:?}, det = {:.6e}", z.point, z.det);
    }
}

fn execute(command: Command) -> IoResult<i32> {
    let registry = ForcingRegistry::builtin();
    match command {
        Command::CheckInvariance(a) => {
            let cfg = read_config(&a.config, &registry)?;
            let opts = RunOptions { out_dir: a.out, init: None };
            Ok(emit(run::check_invariance(&cfg, &registry, &opts)?, a.machine))
        }
        Command::Solve { run: a, init } => {
            let cfg = read_config(&a.config, &registry)?;
            let opts = RunOptions { out_dir: a.out, init };
            Ok(emit(run::solve(&cfg, &registry, &opts)?, a.machine))
        }
        Command::SolveRn(a) => {
            let cfg = read_config(&a.config, &registry)?;
            let opts = RunOptions { out_dir: a.out, init: None };
            Ok(emit(run::solve_rn(&cfg, &registry, &opts)?, a.machine))
        }
        Command::Project { config, x, u } => {
            let cfg = read_config(&config, &registry)?;
            if x.len() != cfg.dim() || u.len() != cfg.components() {
                return Err(IoError::Validation(format!("need {} coordinates and {} components", cfg.dim(), cfg.components())));
            }
            let field = cfg.constraint_field()?;
            let p = field.project(&x, &u)?;
            let dist = field.distance(&x, &u)?;
            println!("projection = {p:?}");
            println!("distance = {dist:.16e}");
            Ok(0)
        }
        Command::Degree { map, config, h, lo, hi, density } => {
            let r = if let Some(path) = config {
                let cfg = read_config(&path, &registry)?;
                run::phi_degree(&cfg, &registry, h, &lo, &hi, density)?
            } else {
                let d = lo.len();
                if map.len() != d || hi.len() != d {
                    return Err(IoError::Validation("--map, --lo and --hi need the same number of components".into()));
                }
                let scope = Scope::forcing(0, d);
                let exprs = map.iter().enumerate().map(|(k, s)| Expr::compile(s, &scope, &format!("map component {}", k + 1))).collect::<IoResult<Vec<_>>>()?;
                let g = |u: &[f64], out: &mut [f64]| {
                    for (o, e) in out.iter_mut().zip(&exprs) {
                        *o = e.eval(u);
                    }
                };
                brouwer_degree_small(&g, &lo, &hi, density)?
            };
            print_degree(&r);
            Ok(0)
        }
        Command::Exponents { s, q, n } => {
            let e = compute_apriori_exponents(s, q, n)?;
            println!("theta1 = {:.12}", e.theta1);
            println!("theta1_tilde = {:.12}", e.theta1_tilde);
            println!("theta2 = {:.12}", e.theta2);
            println!("gamma1 = {:.12}", e.gamma1);
            println!("gamma2 = {:.12}", e.gamma2);
            println!("p_embed = {:.12}", e.p_embed);
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
