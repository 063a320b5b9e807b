use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use post_lab::config::ConfigSet;
use post_lab::error::LabError;
use post_lab::runner::{report, run, RunOptions};

#[derive(Parser)]
#[command(name = "post", version, about = "Run decay-spectrum experiments from JSON configs")]
struct Cli {
    /// Directory for result files.
    #[arg(long, global = true, env = "POST_OUT_DIR", default_value = ".")]
    out_dir: PathBuf,
    /// Worker threads (defaults to one per core).
    #[arg(long, global = true, env = "POST_THREADS")]
    threads: Option<usize>,
    /// Seed for every experiment, replacing the configured ones.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment or a set of experiments and write their tables.
    Run { config: PathBuf },
    /// Run a set of experiments and write a pass/fail summary.
    Report { config: PathBuf },
}

fn fail(e: LabError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(1);
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .expect("thread pool is configured once");
    }
    let opts = RunOptions {
        out_dir: cli.out_dir,
        seed: cli.seed,
    };
    match cli.command {
        Command::Run { config } => {
            let set = match ConfigSet::load(&config) {
                Ok(s) => s,
                Err(e) => return fail(e),
            };
            match run(&set, &opts) {
                Ok(outcomes) => {
                    for o in outcomes {
                        println!("wrote {}", o.path.display());
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => fail(e),
            }
        }
        Command::Report { config } => {
            let set = match ConfigSet::load(&config) {
                Ok(s) => s,
                Err(e) => return fail(e),
            };
            match report(&set, &opts) {
                Ok((r, path)) => {
                    for e in &r.experiments {
                        if let Some(err) = &e.error {
                            println!("[FAIL] {}: {err}", e.name);
                        }
                        for c in &e.checks {
                            let tag = if c.passed { "PASS" } else { "FAIL" };
                            println!("[{tag}] {}/{}: {}", e.name, c.name, c.detail);
                        }
                    }
                    println!("summary written to {}", path.display());
                    if r.passed {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(2)
                    }
                }
                Err(e) => fail(e),
            }
        }
    }
}
