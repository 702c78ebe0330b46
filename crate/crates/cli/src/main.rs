use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lgeo::config::RunConfig;
use lgeo::pipeline::{self, Overrides, RunReport, SweepKind, EXIT_CONFIG};

#[derive(Parser)]
#[command(name = "lgeo", version, about = "Weak geodesics between Lagrangian graphs over the torus")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve the tau sweep and write fields, trends and the report.
    Solve(RunArgs),
    /// Run all enabled checks for a configuration.
    Verify(RunArgs),
    /// Write trend tables over the tau schedule or the grid levels.
    Sweep {
        #[arg(value_enum)]
        parameter: Parameter,
        #[command(flatten)]
        args: RunArgs,
    },
    /// Algebraic self checks; needs no configuration.
    Selftest {
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        jobs: Option<usize>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Parameter {
    Tau,
    Grid,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `[output] dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma separated, e.g. `1,0.25,0.0625`.
    #[arg(long, value_delimiter = ',')]
    tau_schedule: Option<Vec<f64>>,
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    time_grid: Option<usize>,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

impl RunArgs {
    fn load(&self) -> lgeo::error::Result<RunConfig> {
        let mut cfg = RunConfig::load(&self.config)?;
        Overrides {
            tau_schedule: self.tau_schedule.clone(),
            grid: self.grid,
            time_grid: self.time_grid,
            seed: self.seed,
            out: self.out.clone(),
        }
        .apply(&mut cfg)?;
        if self.jobs.is_some_and(|j| j > 1) && !cfg.newton.warm_start_tau {
            cfg.newton.parallel_tau = true;
        }
        Ok(cfg)
    }
}

fn set_jobs(jobs: Option<usize>) {
    if let Some(j) = jobs {
        // Only fails if a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(j.max(1)).build_global();
    }
}

fn summarize(report: &RunReport, dir: &std::path::Path) -> ExitCode {
    for c in &report.verification.checks {
        println!("{:<22} {:?}  {}", c.name, c.status, c.summary);
    }
    if let Some(e) = &report.error {
        eprintln!("error: {e}");
    }
    println!(
        "{} (exit {}), report at {}",
        if report.passed { "PASS" } else { "FAIL" },
        report.exit_code,
        dir.join("report.json").display()
    );
    ExitCode::from(report.exit_code as u8)
}

fn run_with(args: &RunArgs, f: impl FnOnce(&RunConfig) -> RunReport) -> ExitCode {
    set_jobs(args.jobs);
    match args.load() {
        Ok(cfg) => {
            let report = f(&cfg);
            summarize(&report, &cfg.output.dir)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_CONFIG as u8)
        }
    }
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Cmd::Solve(args) => run_with(&args, pipeline::cmd_solve),
        Cmd::Verify(args) => run_with(&args, pipeline::cmd_verify),
        Cmd::Sweep { parameter, args } => {
            let kind = match parameter {
                Parameter::Tau => SweepKind::Tau,
                Parameter::Grid => SweepKind::Grid,
            };
            run_with(&args, |cfg| pipeline::cmd_sweep(cfg, kind))
        }
        Cmd::Selftest { out, seed, jobs } => {
            set_jobs(jobs);
            let report = pipeline::selftest(seed, &out);
            summarize(&report, &out)
        }
    }
}
