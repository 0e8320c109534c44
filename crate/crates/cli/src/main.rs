use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use demforge::driver::{self, RunOptions};
use demforge::{CollideVariant, Error, SimConfig};

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;
const EXIT_VERIFY: u8 = 4;

#[derive(Parser)]
#[command(
    name = "demforge",
    version,
    about = "Granular DEM simulation with a warp divergence cost model"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate and write snapshots plus per-step metrics.
    Run(Common),
    /// Compare the two Collide variants on sparse and warmed-up dense states.
    Bench(Common),
    /// Check contacts and forces against the brute-force oracle and run the property suite.
    Verify(Common),
}

#[derive(Args)]
struct Common {
    config: PathBuf,
    /// Output directory (run: snapshots and metrics; bench: report file).
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Override run.steps.
    #[arg(long)]
    steps: Option<u64>,
    /// Override run.collide_variant.
    #[arg(long, value_parser = parse_variant)]
    variant: Option<CollideVariant>,
    /// Override the seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Record per-kernel wall time in the metrics file (makes it non-reproducible).
    #[arg(long)]
    wall_time: bool,
}

fn parse_variant(s: &str) -> Result<CollideVariant, String> {
    CollideVariant::parse(s).ok_or_else(|| format!("expected baseline or two_phase, got '{s}'"))
}

fn load(args: &Common) -> Result<SimConfig, Error> {
    let mut config = SimConfig::load(&args.config)?;
    if let Some(steps) = args.steps {
        config.run.steps = steps;
    }
    if let Some(variant) = args.variant {
        config.run.collide_variant = variant;
    }
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    config.validate()?;
    Ok(config)
}

fn configure_threads() -> Result<(), String> {
    let Ok(value) = std::env::var("DEMFORGE_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .map_err(|_| format!("DEMFORGE_THREADS must be a non-negative integer, got '{value}'"))?;
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(if e.is_config() {
        EXIT_CONFIG
    } else {
        EXIT_RUNTIME
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(EXIT_CONFIG);
    }
    let args = match &cli.command {
        Command::Run(a) | Command::Bench(a) | Command::Verify(a) => a,
    };
    let config = match load(args) {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };

    match &cli.command {
        Command::Run(_) => {
            let options = RunOptions {
                out_dir: args.out_dir.clone().unwrap_or_else(|| PathBuf::from("out")),
                wall_time: args.wall_time,
            };
            match driver::run(&config, &options) {
                Ok(summary) => {
                    println!(
                        "{} steps, {} snapshots, metrics in {}",
                        summary.steps,
                        summary.snapshots.len(),
                        summary.metrics.display()
                    );
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e),
            }
        }
        Command::Bench(_) => {
            let total = 1 + config.run.warmup_steps + config.run.steps;
            let stride = (total / 20).max(1);
            let result = driver::bench_with_progress(&config, |done, total| {
                if done % stride == 0 || done == total {
                    eprintln!("step {done}/{total}");
                }
            });
            match result {
                Ok(report) => {
                    let text = report.render();
                    print!("{text}");
                    if let Some(dir) = &args.out_dir {
                        let written = std::fs::create_dir_all(dir)
                            .map_err(|e| Error::Io {
                                path: dir.display().to_string(),
                                source: e,
                            })
                            .and_then(|_| {
                                driver::write_report(&dir.join("bench_report.txt"), &text)
                            });
                        if let Err(e) = written {
                            return fail(&e);
                        }
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => fail(&e),
            }
        }
        Command::Verify(_) => match driver::verify(&config) {
            Ok(report) => {
                print!("{}", report.render());
                if report.passed() {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::from(EXIT_VERIFY)
                }
            }
            Err(e) => fail(&e),
        },
    }
}
