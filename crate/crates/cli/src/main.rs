use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use muskat_core::muskat2d::{format_samples, parse_points};
use muskat_lab::acceptance::{acceptance_suite, AcceptanceOptions, Faults};
use muskat_lab::config::parse_config_with_overrides;
use muskat_lab::error::{LabError, Result};
use muskat_lab::scenario::{
    convergence, convergence_csv, output_root, probe, run_scenario, velocity_decay_verdict,
    DEFAULT_OUTPUT_DIR,
};

#[derive(Parser)]
#[command(name = "muskat-lab", version, about = "Numerical lab for the equal-viscosity Muskat problem")]
struct Cli {
    /// Output root; overrides `output.dir` and MUSKAT_LAB_OUT.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// `key=value` applied after the config file; repeatable.
    #[arg(long = "override", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Worker threads, 0 for one per core.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario config and check its verdicts.
    Run { config: PathBuf },
    /// Run the acceptance criteria.
    Accept {
        /// Include the long two-dimensional line run.
        #[arg(long)]
        slow: bool,
        /// Inject a defect that the suite should catch.
        #[arg(long, value_enum)]
        inject: Vec<Fault>,
    },
    /// Sample the velocity field at the points listed in a file.
    Probe { config: PathBuf, points: PathBuf },
    /// Time-step refinement study for a config.
    Convergence { config: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum Fault {
    KernelSign,
    ReductionLayers,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| LabError::io(path, e))
}

fn load(path: &Path, overrides: &[String]) -> Result<muskat_lab::config::RunConfig> {
    parse_config_with_overrides(&read(path)?, overrides)
}

fn execute(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Command::Run { config } => {
            let cfg = load(config, &cli.overrides)?;
            let report = run_scenario(&cfg, &output_root(cli.out.as_deref(), &cfg))?;
            print!("{}", report.report_text());
            Ok(report.passed())
        }
        Command::Accept { slow, inject } => {
            let mut faults = Faults::default();
            for f in inject {
                match f {
                    Fault::KernelSign => faults.kernel_sign_flip = true,
                    Fault::ReductionLayers => faults.reduction_without_images = true,
                }
            }
            let out = cli.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR)).join("acceptance");
            let options = AcceptanceOptions {
                include_slow: *slow,
                faults,
                out,
            };
            let outcomes = acceptance_suite(&options, |o| println!("{}", o.row()));
            let passed = outcomes.iter().filter(|o| o.pass()).count();
            println!("{passed}/{} criteria passed", outcomes.len());
            Ok(passed == outcomes.len())
        }
        Command::Probe { config, points } => {
            let cfg = load(config, &cli.overrides)?;
            let samples = probe(&cfg, &parse_points(&read(points)?)?)?;
            print!("{}", format_samples(&samples));
            let verdict = velocity_decay_verdict(&samples);
            println!("{}", verdict.report_line());
            Ok(verdict.pass)
        }
        Command::Convergence { config } => {
            let cfg = load(config, &cli.overrides)?;
            print!("{}", convergence_csv(&convergence(&cfg)?));
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
