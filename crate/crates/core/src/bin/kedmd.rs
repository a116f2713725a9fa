use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use log::info;

use kedmd::analysis::{fit_rate, h1_bound, sobolev_bound};
use kedmd::config::{load_config, Preset};
use kedmd::csvio::{self, format_f64};
use kedmd::dynamics::{BoxDomain, FlowMap, GridConvention, GridSpec, SystemId, VectorField};
use kedmd::experiment::{run_experiment, write_outputs, RunOptions};
use kedmd::interpolation::{interpolate, CenterSet, KernelFactorization};
use kedmd::wendland::WendlandKernel;
use kedmd::{Error, Result};

#[derive(Parser)]
#[command(name = "kedmd", version, about = "Kernel EDMD with Wendland kernels")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Inspect Wendland kernels.
    #[command(subcommand)]
    Kernel(KernelCmd),
    /// Interpolate values at centers and evaluate at new points.
    Interpolate(InterpolateArgs),
    /// Sample a flow map on a grid and write X.csv and AX.csv.
    Simulate(SimulateArgs),
    /// Run an experiment from a configuration file.
    #[command(subcommand)]
    Kedmd(KedmdCmd),
    /// Run one of the built-in benchmark tables.
    Reproduce(ReproduceArgs),
    /// Koopman operator-norm bounds.
    #[command(subcommand)]
    Bound(BoundCmd),
    /// Log-log convergence slopes from an (h, error) CSV.
    Rates(RatesArgs),
}

#[derive(Subcommand)]
enum KernelCmd {
    /// Print the polynomial, degree and smoothness of phi_{d,k}.
    Show {
        #[arg(long)]
        d: usize,
        #[arg(long)]
        k: usize,
    },
}

#[derive(Args)]
struct InterpolateArgs {
    /// Kernel as `d,k` (optionally `d,k,scale`).
    #[arg(long)]
    kernel: String,
    /// CSV of centers, one point per row.
    #[arg(long)]
    centers: PathBuf,
    /// CSV with one value per center.
    #[arg(long)]
    values: PathBuf,
    /// CSV of evaluation points.
    #[arg(long)]
    eval: PathBuf,
    /// Output CSV (stdout if omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    system: SystemId,
    /// Box as `lo1,hi1;lo2,hi2;...`, or a single `lo,hi` applied to every axis.
    #[arg(long)]
    domain: Option<String>,
    /// Grid mesh size.
    #[arg(long)]
    grid: f64,
    #[arg(long, default_value_t = kedmd::dynamics::DEFAULT_DT)]
    dt: f64,
    #[arg(long, default_value_t = kedmd::dynamics::DEFAULT_SUBSTEPS)]
    substeps: usize,
    #[arg(long, value_enum, default_value = "fill-distance")]
    convention: ConventionArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum ConventionArg {
    FillDistance,
    Spacing,
}

impl From<ConventionArg> for GridConvention {
    fn from(c: ConventionArg) -> Self {
        match c {
            ConventionArg::FillDistance => GridConvention::FillDistance,
            ConventionArg::Spacing => GridConvention::Spacing,
        }
    }
}

#[derive(Subcommand)]
enum KedmdCmd {
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the configured output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ReproduceArgs {
    /// duffing-table1, duffing-table2 or lorenz-table3.
    #[arg(long)]
    experiment: Preset,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated subset of mesh sizes.
    #[arg(long, value_delimiter = ',')]
    hs: Option<Vec<f64>>,
    /// Comma-separated subset of smoothness degrees.
    #[arg(long, value_delimiter = ',')]
    ks: Option<Vec<usize>>,
    /// Skip the per-cell error field files.
    #[arg(long)]
    no_fields: bool,
    /// Factorize every kernel matrix as a single envelope matrix.
    #[arg(long)]
    no_symmetry: bool,
    /// Overrides the per-factor memory limit in bytes.
    #[arg(long)]
    max_factor_bytes: Option<usize>,
}

#[derive(Subcommand)]
enum BoundCmd {
    /// H^1 -> H^1 bound from sampled Jacobians of the flow map.
    H1 {
        #[arg(long)]
        system: SystemId,
        #[arg(long, default_value_t = kedmd::dynamics::DEFAULT_DT)]
        dt: f64,
        #[arg(long, default_value_t = kedmd::dynamics::DEFAULT_SUBSTEPS)]
        substeps: usize,
        #[arg(long)]
        domain: Option<String>,
        /// Mesh size of the sample grid.
        #[arg(long, default_value_t = 0.05)]
        grid: f64,
        /// Finite-difference step; defaults to 1e-5 times the domain diameter.
        #[arg(long)]
        fd_step: Option<f64>,
        /// Sobolev order; only 1 is supported.
        #[arg(long, default_value_t = 1)]
        order: usize,
    },
}

#[derive(Args)]
struct RatesArgs {
    /// CSV with columns `h` and `error` (or the first two columns).
    #[arg(long)]
    input: PathBuf,
}

fn parse_domain(text: Option<&str>, system: SystemId, dim: usize) -> Result<BoxDomain> {
    let Some(text) = text else {
        return match system {
            SystemId::Duffing => BoxDomain::cube(2, -2.0, 2.0),
            SystemId::Lorenz => BoxDomain::cube(3, -0.5, 0.5),
            _ => BoxDomain::cube(dim, -1.0, 1.0),
        };
    };
    let parse_pair = |s: &str| -> Result<(f64, f64)> {
        let v: Vec<f64> = s
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Input(format!("bad domain `{text}`: {e}")))?;
        match v[..] {
            [lo, hi] => Ok((lo, hi)),
            _ => Err(Error::Input(format!(
                "bad domain `{text}`: expected lo,hi pairs"
            ))),
        }
    };
    let pairs = text
        .split(';')
        .map(parse_pair)
        .collect::<Result<Vec<_>>>()?;
    if pairs.len() == 1 {
        return BoxDomain::cube(dim, pairs[0].0, pairs[0].1);
    }
    BoxDomain::new(
        pairs.iter().map(|p| p.0).collect(),
        pairs.iter().map(|p| p.1).collect(),
    )
}

fn default_field(system: SystemId) -> Result<VectorField> {
    match system {
        SystemId::Duffing => Ok(VectorField::Duffing),
        SystemId::Lorenz => Ok(VectorField::lorenz()),
        other => Err(Error::Input(format!(
            "system `{other}` needs parameters; use a configuration file"
        ))),
    }
}

fn points_table(path: &Path) -> Result<CenterSet> {
    let t = csvio::read_table(path)?;
    CenterSet::new(t.columns, t.values)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Kernel(KernelCmd::Show { d, k }) => {
            let kernel = WendlandKernel::new(d, k)?;
            println!("phi_{{{d},{k}}}(r) = {}", kernel.poly());
            println!("degree = {}", kernel.degree());
            println!("smoothness = C^{}", 2 * k);
            println!("native space = H^{}", kernel.sigma());
            println!("phi(0) = {}", format_f64(kernel.diagonal()));
        }
        Command::Interpolate(args) => {
            let parts: Vec<&str> = args.kernel.split(',').collect();
            let parse_usize = |s: &str| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|e| Error::Input(format!("bad kernel spec `{}`: {e}", args.kernel)))
            };
            let kernel = match parts[..] {
                [d, k] => WendlandKernel::new(parse_usize(d)?, parse_usize(k)?)?,
                [d, k, s] => WendlandKernel::with_scale(
                    parse_usize(d)?,
                    parse_usize(k)?,
                    s.trim()
                        .parse()
                        .map_err(|e| Error::Input(format!("bad kernel scale: {e}")))?,
                )?,
                _ => {
                    return Err(Error::Input(format!(
                        "kernel spec `{}` is not d,k or d,k,scale",
                        args.kernel
                    )))
                }
            };
            let centers = Arc::new(points_table(&args.centers)?);
            let values = csvio::read_table(&args.values)?;
            if values.columns != 1 {
                return Err(Error::Input(format!(
                    "{} must have exactly one column",
                    args.values.display()
                )));
            }
            let fact = Arc::new(KernelFactorization::new(kernel, centers)?);
            let interp = interpolate(&fact, values.values)?;
            let eval = points_table(&args.eval)?;
            let out = interp.evaluate(&eval)?;
            match args.out {
                Some(path) => csvio::write_rows(
                    &path,
                    Some(&["value".to_string()]),
                    out.iter().map(|v| [*v]),
                )?,
                None => {
                    println!("value");
                    for v in out {
                        println!("{}", format_f64(v));
                    }
                }
            }
        }
        Command::Simulate(args) => {
            let field = default_field(args.system)?;
            let domain = parse_domain(args.domain.as_deref(), args.system, field.dim())?;
            let map = FlowMap::new(field, args.dt, args.substeps)?;
            let spec = GridSpec::for_mesh_size(domain, args.grid, args.convention.into())?;
            let x = spec.nodes(kedmd::dynamics::DEFAULT_MAX_GRID_POINTS)?;
            let ax = map.flow_points(x.coords())?;
            let d = x.dim();
            let header: Vec<String> = (1..=d).map(|a| format!("x{a}")).collect();
            csvio::write_rows(&args.out.join("X.csv"), Some(&header), x.coords().chunks(d))?;
            csvio::write_rows(&args.out.join("AX.csv"), Some(&header), ax.chunks(d))?;
            info!("wrote {} samples to {}", x.len(), args.out.display());
        }
        Command::Kedmd(KedmdCmd::Run { config, out }) => {
            let config = load_config(&config)?;
            let dir = out.unwrap_or_else(|| config.output.dir.clone());
            let result = run_experiment(&config, &RunOptions::default())?;
            write_outputs(&result, &dir, config.output.cell_files)?;
            println!("{}", dir.join("table.csv").display());
        }
        Command::Reproduce(args) => {
            let mut config = args.experiment.config();
            config.limits.symmetry &= !args.no_symmetry;
            if let Some(bytes) = args.max_factor_bytes {
                config.limits.max_factor_bytes = bytes;
            }
            let options = RunOptions {
                hs: args.hs,
                ks: args.ks,
            };
            let result = run_experiment(&config, &options)?;
            write_outputs(&result, &args.out, !args.no_fields)?;
            print!(
                "{}",
                std::fs::read_to_string(args.out.join("table.csv")).map_err(|e| Error::Io {
                    path: args.out.join("table.csv"),
                    source: e
                })?
            );
        }
        Command::Bound(BoundCmd::H1 {
            system,
            dt,
            substeps,
            domain,
            grid,
            fd_step,
            order,
        }) => {
            if order != 1 {
                sobolev_bound(order)?;
            }
            let field = default_field(system)?;
            let domain = parse_domain(domain.as_deref(), system, field.dim())?;
            let map = FlowMap::new(field, dt, substeps)?;
            let spec = GridSpec::for_mesh_size(domain.clone(), grid, GridConvention::FillDistance)?;
            let mut coords = spec
                .nodes(kedmd::dynamics::DEFAULT_MAX_GRID_POINTS)?
                .coords()
                .to_vec();
            coords.extend_from_slice(spec.cell_centers(usize::MAX)?.coords());
            let samples = CenterSet::new(domain.dim(), coords)?;
            let step = fd_step.unwrap_or(1e-5 * domain.diameter());
            let bound = h1_bound(&|x: &[f64]| map.flow(x), &samples, step)?;
            println!("{}", format_f64(bound));
        }
        Command::Rates(args) => {
            let t = csvio::read_table(&args.input)?;
            if t.columns < 2 {
                return Err(Error::Input(format!(
                    "{} needs at least two columns (h, error)",
                    args.input.display()
                )));
            }
            let hs = t.column_by_name("h").unwrap_or_else(|| t.column(0));
            let errors = t.column_by_name("error").unwrap_or_else(|| t.column(1));
            let rate = fit_rate(&hs, &errors)?;
            println!("slope = {}", format_f64(rate.slope));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let summary = serde_json::json!({
                "status": "error",
                "kind": e.kind(),
                "message": e.to_string(),
            });
            eprintln!("{summary}");
            ExitCode::FAILURE
        }
    }
}
