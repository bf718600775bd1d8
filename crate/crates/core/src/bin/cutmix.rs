//! Command-line driver: single runs, condition-number sweeps,
//! homogenization, and geometry validation from scenario files.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cutmix::driver::{self, mode_name};
use cutmix::scenario::Scenario;
use cutmix::Error;

#[derive(Parser)]
#[command(name = "cutmix", version, about = "Unfitted multiscale elasticity solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Scenario (or sweep) file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; artifacts land here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (0 = automatic).
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Seed, used by sampling-based cross checks only.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario end to end and export fields plus metrics.
    Run(CommonArgs),
    /// Assemble over a sweep of meshes, widths, and modes; tabulate
    /// condition numbers and log-log slopes.
    Condstudy(CommonArgs),
    /// Report the effective macro modulus for the scenario's pores.
    Homogenize(CommonArgs),
    /// Check discrete geometry against analytic values.
    Validate(CommonArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let args = match &cli.command {
        Command::Run(a) | Command::Condstudy(a) | Command::Homogenize(a) | Command::Validate(a) => a,
    };

    let mut pool = rayon::ThreadPoolBuilder::new();
    if args.threads > 0 {
        pool = pool.num_threads(args.threads);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: config: cannot build thread pool: {e}");
            return ExitCode::FAILURE;
        }
    };

    let outcome = pool.install(|| dispatch(&cli.command, args));
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error: {}: {}", e.category(), msg);
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: &Command, args: &CommonArgs) -> Result<(), Error> {
    match command {
        Command::Run(_) => {
            let scenario = Scenario::load(&args.config)?;
            let out = args.out.clone().unwrap_or_else(|| PathBuf::from("out"));
            let result = driver::run(&scenario, Some(&out))?;
            println!(
                "run {}: {} free DOFs, h in [{:.6}, {:.6}], residual {:.3e}",
                scenario.name,
                result.system.free_dofs().len(),
                result.h_min,
                result.h_max,
                result.report.residual,
            );
            if let Some(kappa) = result.kappa {
                println!("condition number {kappa:.6e}");
            }
            if let Some(l2) = result.l2_error {
                println!("relative L2 error vs reference {l2:.6e}");
            }
            println!("artifacts in {}", out.display());
            Ok(())
        }
        Command::Condstudy(_) => {
            let sweep = driver::Sweep::load(&args.config)?;
            let out = args.out.clone().unwrap_or_else(|| PathBuf::from("out"));
            let study = driver::condstudy(&sweep, Some(&out))?;
            for row in &study.rows {
                match &row.kappa {
                    Ok(k) => println!(
                        "mesh {}x{} 2eps={} beta={} mode={} offset=({}, {}): kappa = {k:.6e}",
                        row.nx,
                        row.ny,
                        row.two_epsilon,
                        row.beta,
                        mode_name(row.mode),
                        row.offset[0],
                        row.offset[1],
                    ),
                    Err(msg) => println!(
                        "mesh {}x{} 2eps={} beta={} mode={}: failed: {msg}",
                        row.nx,
                        row.ny,
                        row.two_epsilon,
                        row.beta,
                        mode_name(row.mode),
                    ),
                }
            }
            for s in &study.slopes {
                println!(
                    "series 2eps={} beta={} mode={}: kappa ~ h^-{:.3}",
                    s.two_epsilon,
                    s.beta,
                    mode_name(s.mode),
                    s.exponent
                );
            }
            println!("tables in {}", out.display());
            Ok(())
        }
        Command::Homogenize(_) => {
            let scenario = Scenario::load(&args.config)?;
            let report = driver::homogenize_report(&scenario)?;
            println!(
                "E0 = {}, total porosity = {:.6}, rve = {:?}",
                report.e0, report.total_porosity, report.rve
            );
            for (i, e) in report.trajectory.iter().enumerate() {
                println!("after pore {:>3}: E = {e:.6}", i + 1);
            }
            println!("effective modulus E_M = {:.6}", report.effective);
            if let Some(out) = &args.out {
                std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
                let path = out.join("homogenize.txt");
                let mut text = format!(
                    "e0 {}\nporosity {}\neffective {}\n",
                    report.e0, report.total_porosity, report.effective
                );
                for (i, e) in report.trajectory.iter().enumerate() {
                    text.push_str(&format!("step {} {e}\n", i + 1));
                }
                std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
            }
            Ok(())
        }
        Command::Validate(_) => {
            let scenario = Scenario::load(&args.config)?;
            let report = driver::validate(&scenario, args.seed)?;
            println!(
                "matrix area {:.6} (analytic {:.6})",
                report.matrix_area, report.analytic_matrix_area
            );
            println!(
                "pore area {:.6} (analytic {:.6}, Monte-Carlo {:.6} +/- {:.1e})",
                report.pore_area,
                report.analytic_pore_area,
                report.mc_pore_area,
                report.mc_standard_error
            );
            println!(
                "interface length {:.6} (analytic {:.6})",
                report.interface_length, report.analytic_interface_length
            );
            for w in &report.warnings {
                println!("warning: {w}");
            }
            if let Some(out) = &args.out {
                std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
                let path = out.join("geometry.txt");
                let mut text = format!(
                    "matrix_area {}\npore_area {}\ninterface_length {}\nanalytic_matrix_area {}\nanalytic_pore_area {}\nanalytic_interface_length {}\nmc_pore_area {}\nmc_standard_error {}\n",
                    report.matrix_area,
                    report.pore_area,
                    report.interface_length,
                    report.analytic_matrix_area,
                    report.analytic_pore_area,
                    report.analytic_interface_length,
                    report.mc_pore_area,
                    report.mc_standard_error
                );
                for w in &report.warnings {
                    text.push_str(&format!("warning {w}\n"));
                }
                std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
            }
            Ok(())
        }
    }
}
