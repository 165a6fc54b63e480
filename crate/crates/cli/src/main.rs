use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use vemflow_core::mesh::{generate_mesh, save_mesh, MeshFamily};
use vemflow_core::solver::PicardOptions;
use vemflow_core::verify::{build_case, plotdata, run_single, ConvergenceTable, TestId};

#[derive(Parser)]
#[command(
    name = "vemflow",
    version,
    about = "Polygonal-mesh VEM solver for coupled Brinkman-Forchheimer flow and heat"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a mesh of the unit square.
    Mesh {
        #[arg(long)]
        family: MeshFamily,
        #[arg(long = "N")]
        n: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Run a manufactured-solution convergence study.
    Study {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
        test: u8,
        /// Constant viscosity (test 3 only).
        #[arg(long)]
        nu: Option<f64>,
        #[arg(long)]
        family: MeshFamily,
        #[arg(long = "N", value_delimiter = ',', default_values_t = [4, 8, 16])]
        n: Vec<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[arg(long, default_value_t = 100)]
        max_iter: usize,
        /// CSV destination (stdout if omitted).
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Convert a study CSV to log2 h / log2 error pairs.
    Plotdata {
        input: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

fn writer(path: Option<&PathBuf>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn test_id(test: u8, nu: Option<f64>) -> anyhow::Result<TestId> {
    Ok(match (test, nu) {
        (1, None) => TestId::One,
        (2, None) => TestId::Two,
        (3, Some(nu)) if nu > 0.0 => TestId::Three { nu },
        (3, Some(nu)) => bail!("--nu must be positive, got {nu}"),
        (3, None) => bail!("test 3 requires --nu"),
        (_, Some(_)) => bail!("--nu only applies to test 3"),
        _ => unreachable!("clap restricts --test to 1..=3"),
    })
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Mesh {
            family,
            n,
            seed,
            output,
        } => {
            let mesh = generate_mesh(family, n, seed)?;
            save_mesh(&mesh, &output)?;
            eprintln!(
                "{family} N={n}: {} vertices, {} elements, h={:.4e}",
                mesh.n_vertices(),
                mesh.n_elements(),
                mesh.h
            );
            Ok(true)
        }
        Command::Study {
            test,
            nu,
            family,
            n,
            seed,
            tol,
            max_iter,
            output,
        } => {
            let case = build_case(test_id(test, nu)?);
            let options = PicardOptions {
                tol,
                max_iter,
                ..Default::default()
            };
            let mut table = ConvergenceTable::default();
            let mut converged = true;
            for &level in &n {
                match run_single(family, level, seed, &case, &options) {
                    Ok((row, _)) => {
                        eprintln!(
                            "{family} N={level}: iters={} e_u={:.4e} e_T={:.4e} e_p={:.4e} div={:.2e}",
                            row.iterations, row.e_u_h1, row.e_t_h1, row.e_p_l2, row.div_norm
                        );
                        table.rows.push(row);
                    }
                    Err(e) => {
                        eprintln!("error: {e}");
                        converged = false;
                    }
                }
            }
            table.write_csv(writer(output.as_ref())?)?;
            Ok(converged)
        }
        Command::Plotdata { input, output } => {
            let file = File::open(&input).with_context(|| format!("opening {}", input.display()))?;
            plotdata(file, writer(output.as_ref())?)?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
