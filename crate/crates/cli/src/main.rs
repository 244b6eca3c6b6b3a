use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mesolj_cli::config::{parse_config, StudyKind};
use mesolj_cli::error::CliResult;
use mesolj_cli::manifest::Manifest;
use mesolj_cli::output::OutputDir;
use mesolj_cli::studies;

#[derive(Parser)]
#[command(
    name = "mesolj",
    version,
    about = "Interacting Brownian particles under a generalized Lennard-Jones force: \
             kernel analysis, Fokker-Planck solving, and mesoscale convergence studies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// Base seed; study seeds are seed_base, seed_base + 1, ...
    #[arg(long, default_value_t = 1)]
    seed_base: u64,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Kernel integrability windows, constants, and the mollified table.
    AnalyzeKernel(CommonArgs),
    /// Solve the Fokker-Planck equation and write snapshots.
    SolvePde(CommonArgs),
    /// Run one particle simulation and write the trajectory.
    Simulate(CommonArgs),
    /// Convergence-rate study of the cut-off system against the PDE.
    Convergence(CommonArgs),
    /// Raw/cut-off pathwise coincidence fractions.
    Coincidence(CommonArgs),
    /// Stochastic-convolution norm scaling fits.
    Sconv(CommonArgs),
}

impl Command {
    fn common(&self) -> &CommonArgs {
        match self {
            Command::AnalyzeKernel(a)
            | Command::SolvePde(a)
            | Command::Simulate(a)
            | Command::Convergence(a)
            | Command::Coincidence(a)
            | Command::Sconv(a) => a,
        }
    }

    fn kind(&self) -> Option<StudyKind> {
        match self {
            // building-block subcommands accept any study's config
            Command::AnalyzeKernel(_) | Command::SolvePde(_) | Command::Simulate(_) => None,
            Command::Convergence(_) => Some(StudyKind::Convergence),
            Command::Coincidence(_) => Some(StudyKind::Coincidence),
            Command::Sconv(_) => Some(StudyKind::Sconv),
        }
    }

    fn study_name(&self) -> &'static str {
        match self {
            Command::AnalyzeKernel(_) => "analyze-kernel",
            Command::SolvePde(_) => "solve-pde",
            Command::Simulate(_) => "simulate",
            Command::Convergence(_) => "convergence",
            Command::Coincidence(_) => "coincidence",
            Command::Sconv(_) => "sconv",
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let args = cli.command.common();
    if args.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(args.threads)
            .build_global()
            .ok();
    }
    let text = fs::read_to_string(&args.config).map_err(|e| {
        mesolj_cli::error::CliError::Io(format!("cannot read {}: {e}", args.config.display()))
    })?;
    let exp = parse_config(&text, cli.command.kind())?;

    let out = OutputDir::create(&args.out)?;
    let mut manifest = Manifest::new(cli.command.study_name(), &text, args.seed_base, exp.seeds);
    // manifest lands on disk before any result file (crash forensics)
    manifest.write(&out, "manifest.json")?;

    match &cli.command {
        Command::AnalyzeKernel(_) => {
            studies::run_analyze_kernel(&exp, &out, &mut manifest)?;
        }
        Command::SolvePde(_) => {
            studies::run_solve_pde(&exp, &out, &mut manifest)?;
        }
        Command::Simulate(_) => {
            studies::run_simulate(&exp, args.seed_base, &out, &mut manifest)?;
        }
        Command::Convergence(_) => {
            let summary = studies::run_convergence(&exp, args.seed_base, &out, &mut manifest)?;
            eprintln!(
                "convergence: slope {} (rho = {}), medians decreasing: {}, verdict: {}",
                summary.fit.line.slope,
                summary.rho,
                summary.medians_decreasing,
                summary.fit.verdict.name()
            );
        }
        Command::Coincidence(_) => {
            let summary = studies::run_coincidence(&exp, args.seed_base, &out, &mut manifest)?;
            for row in &summary.rows {
                eprintln!(
                    "coincidence: N = {}: coincident {}, error >= eta {}",
                    row.n_particles, row.coincident_fraction, row.exceed_fraction
                );
            }
        }
        Command::Sconv(_) => {
            let summary = studies::run_sconv(&exp, args.seed_base, &out, &mut manifest)?;
            eprintln!(
                "sconv: slope {} vs theory {}, verdict: {}",
                summary.fit_lz.line.slope, summary.fit_lz.theory[0].1, summary.fit_lz.verdict.name()
            );
        }
    }
    manifest.finish(&out, "manifest.json")?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
