//! Command-line driver: runs one configured experiment or a directory
//! of them, printing one PASS/FAIL line per asserted bound.

mod config;
mod experiments;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};

use config::Experiment;
use experiments::{run, verify_all, write_summary};

#[derive(Parser)]
#[command(name = "renewal", about = "Renewal-equation experiment runner")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one experiment config and assert its bounds.
    Run(CommonArgs),
    /// Run every .cfg file in a directory and write a summary CSV.
    VerifyAll(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment config file (a directory of .cfg files for verify-all).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to the config's output.dir.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the particle seed from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker thread limit; RENEWAL_THREADS is the fallback.
    #[arg(long)]
    threads: Option<usize>,
}

fn unix_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

fn init_threads(args: &CommonArgs) {
    let n = args.threads.or_else(|| {
        std::env::var("RENEWAL_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(n) = n.filter(|&n| n > 0) {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Run(args) => run_one(args),
        Cmd::VerifyAll(args) => run_batch(args),
    }
}

fn run_one(args: CommonArgs) -> ExitCode {
    init_threads(&args);
    let started = unix_ms();
    let mut exp = match Experiment::from_file(&args.config) {
        Ok(exp) => exp,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(2);
        }
    };
    if let (Some(seed), Some(p)) = (args.seed, exp.particles.as_mut()) {
        p.seed = seed;
    }
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(&exp.out_dir));
    let checks = match run(&exp, &out) {
        Ok(checks) => checks,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(2);
        }
    };
    for c in &checks {
        println!("{}", c.line());
    }
    let failed = checks.iter().filter(|c| !c.pass).count();
    let log = format!(
        "config = {}\nstarted_unix_ms = {}\nfinished_unix_ms = {}\nchecks = {}\nfailed = {}\n",
        args.config.display(),
        started,
        unix_ms(),
        checks.len(),
        failed
    );
    if let Err(e) = std::fs::write(out.join("run.log"), log) {
        eprintln!("io error: {e}");
        return ExitCode::from(2);
    }
    if failed > 0 {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    }
}

fn run_batch(args: CommonArgs) -> ExitCode {
    init_threads(&args);
    let started = unix_ms();
    let out_root = args.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    let entries = match verify_all(&args.config, &out_root, args.seed) {
        Ok(entries) => entries,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(2);
        }
    };
    let mut bad = false;
    for e in &entries {
        println!("== {} ({}) -> {}", e.name, e.kind, e.status);
        for line in &e.lines {
            println!("   {line}");
        }
        bad |= e.status != "pass";
    }
    if let Err(e) = write_summary(&out_root, &entries) {
        eprintln!("{e}");
        return ExitCode::from(2);
    }
    let log = format!(
        "config_dir = {}\nstarted_unix_ms = {}\nfinished_unix_ms = {}\nexperiments = {}\n",
        args.config.display(),
        started,
        unix_ms(),
        entries.len()
    );
    if let Err(e) = std::fs::write(out_root.join("batch.log"), log) {
        eprintln!("io error: {e}");
        return ExitCode::from(2);
    }
    if bad {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    }
}
