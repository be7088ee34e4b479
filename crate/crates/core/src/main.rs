use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use isacpilot::experiment::{run_config, verify, RunError, RunOptions, Task};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Command {
    Optimize,
    Sweep,
    ParetoCloud,
    Roc,
    Nmse,
    Ser,
    Gradcheck,
    Diagnostics,
    /// Re-hash the config and check the hash recorded in every CSV under --out.
    Verify,
}

/// Orthogonal ISAC pilot design experiments.
#[derive(Debug, Parser)]
#[command(name = "isacpilot", version)]
struct Cli {
    #[arg(value_enum)]
    task: Command,
    #[arg(long)]
    config: PathBuf,
    /// Override the master seed from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (defaults to the config's `output`, then the working directory).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on this.
    #[arg(long, value_parser = clap::value_parser!(u16).range(1..))]
    threads: Option<u16>,
}

fn task_of(c: Command) -> Option<Task> {
    Some(match c {
        Command::Optimize => Task::Optimize,
        Command::Sweep => Task::Sweep,
        Command::ParetoCloud => Task::ParetoCloud,
        Command::Roc => Task::Roc,
        Command::Nmse => Task::Nmse,
        Command::Ser => Task::Ser,
        Command::Gradcheck => Task::Gradcheck,
        Command::Diagnostics => Task::Diagnostics,
        Command::Verify => return None,
    })
}

fn fail(e: &RunError) -> ExitCode {
    eprintln!("isacpilot: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let Some(task) = task_of(cli.task) else {
        let dir = cli.out.unwrap_or_else(|| PathBuf::from("."));
        return match verify(&cli.config, &dir) {
            Ok(entries) if entries.is_empty() => {
                eprintln!("isacpilot: no CSV with a config hash in {}", dir.display());
                ExitCode::from(1)
            }
            Ok(entries) => {
                let bad = entries.iter().filter(|e| !e.matches).count();
                for e in &entries {
                    println!("{} {}", if e.matches { "ok      " } else { "MISMATCH" }, e.file.display());
                }
                println!("verify: {} of {} files match", entries.len() - bad, entries.len());
                if bad == 0 {
                    ExitCode::SUCCESS
                } else {
                    ExitCode::from(1)
                }
            }
            Err(e) => fail(&e),
        };
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        pool = pool.num_threads(n as usize);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("isacpilot: cannot start worker pool: {e}");
            return ExitCode::from(2);
        }
    };
    let opts = RunOptions { task, config_path: cli.config, seed: cli.seed, out: cli.out };
    match pool.install(|| run_config(&opts)) {
        Ok(summary) => {
            println!("{}", summary.line);
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e),
    }
}
