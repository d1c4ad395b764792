use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::error;

use sharpap_cli::pipeline::output_dir;
use sharpap_cli::{run_stages, run_timing_comparison, ExperimentConfig, Stages};
use sharpap_core::Error;

#[derive(Parser)]
#[command(name = "sharpap", version, about = "Sharpness-aware poisoning attacks on recommenders")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load, binarise and split the dataset.
    Ingest(Common),
    /// Generate fake profiles for every configured attacker.
    Attack(Common),
    /// Attack, then retrain victims and report metrics.
    Evaluate(Common),
    /// Attack, then export loss landscapes of the poisoned surrogates.
    Landscape(Common),
    /// Attack, then evaluate behind the PCA detector.
    Defend(Common),
    /// The full pipeline.
    Run(Common),
    /// Compare backbone and SharpAP wall-clock time.
    Timing(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Override the top-level seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (also `SHARPAP_THREADS`).
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory (also `SHARPAP_OUT`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Validate the config and print the planned stages.
    #[arg(long)]
    dry_run: bool,
}

fn is_validation(e: &Error) -> bool {
    matches!(e, Error::InvalidConfig { .. } | Error::Json(_))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let (common, stages) = match &cli.command {
        Command::Ingest(c) => (c, Some(Stages::INGEST)),
        Command::Attack(c) => (c, Some(Stages { attack: true, ..Stages::INGEST })),
        Command::Evaluate(c) => (c, Some(Stages { attack: true, evaluate: true, ..Stages::INGEST })),
        Command::Landscape(c) => (c, Some(Stages { attack: true, landscape: true, ..Stages::INGEST })),
        Command::Defend(c) => (c, Some(Stages { attack: true, defend: true, ..Stages::INGEST })),
        Command::Run(c) => (c, Some(Stages::ALL)),
        Command::Timing(c) => (c, None),
    };

    let mut cfg = match ExperimentConfig::from_file(&common.config) {
        Ok(c) => c,
        Err(e) => {
            error!("{e}");
            return ExitCode::from(if matches!(e, Error::Io(_)) { 2 } else { 1 });
        }
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Err(e) = cfg.validate() {
        error!("{e}");
        return ExitCode::from(1);
    }
    let out = output_dir(&cfg, common.out.clone());
    let threads = common
        .threads
        .or_else(|| std::env::var("SHARPAP_THREADS").ok().and_then(|s| s.parse().ok()));
    if let Some(n) = threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            error!("thread pool: {e}");
            return ExitCode::from(2);
        }
    }

    if common.dry_run {
        let plan = stages.map_or_else(|| vec!["ingest", "timing"], |s| s.names());
        println!("config ok, fingerprint {}", cfg.fingerprint().unwrap_or_default());
        println!("output directory: {}", out.display());
        println!("stages: {}", plan.join(" -> "));
        return ExitCode::SUCCESS;
    }

    let result = match stages {
        Some(stages) => run_stages(&cfg, &out, stages).map(|run| {
            if !run.report.rows.is_empty() {
                println!("attacker,victim,metric,K,mean,std");
                for r in &run.report.rows {
                    println!("{},{},{},{},{:.6},{:.6}", r.attacker, r.victim, r.metric, r.k, r.mean, r.std);
                }
            }
            println!("artifacts in {}", out.display());
        }),
        None => run_timing_comparison(&cfg).and_then(|t| {
            std::fs::create_dir_all(&out)?;
            t.write_json(&out.join("timing.json"))?;
            for r in &t.rows {
                println!(
                    "{}: {:.3}s total, {:.3}s per iteration",
                    r.variant, r.total_seconds, r.seconds_per_iteration
                );
            }
            println!("overhead {:.2}%", t.overhead_percent);
            Ok(())
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(if is_validation(&e) { 1 } else { 2 })
        }
    }
}
