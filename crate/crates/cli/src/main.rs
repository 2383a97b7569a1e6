use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use mamo::assurance::{revenue_report, Account, RevenueReport};
use mamo::pipeline::archive::{self, ACCOUNTS_FILE, REPORT_CSV};
use mamo::pipeline::{
    assure, emit_metrics, fit_exponent, persist_assurance, persist_reconciliation, persist_simulation,
    read_windows, reconcile, run_pipeline, simulate, ConfigError, PipelineError, RunConfig, RunMetrics,
};

/// Config as resolved for a run, kept next to the archives so later stages
/// can be replayed without repeating the flags.
const RESOLVED_CONFIG: &str = "config.json";

#[derive(Parser)]
#[command(name = "mamo", version, about = "Trusted third-party billing simulation")]
struct Cli {
    /// JSON run configuration; missing fields take defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Archive directory (overrides `output_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Where to write the CSV this command produces.
    #[arg(long, global = true)]
    csv: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate calls, run the switch and the channel; write switch
    /// archives and the delivered stream.
    Simulate,
    /// Pair the delivered messages into billing archives.
    Reconcile,
    /// Merge switch and billing archives into assurance files.
    Assure,
    /// Rate the assurance files into the revenue report.
    Report,
    /// All stages in one go.
    Run,
    /// Full runs at several sizes; one metrics row per run.
    Bench {
        #[arg(long, value_delimiter = ',', default_value = "1000,5000,10000,15000,20000")]
        sizes: Vec<usize>,
    },
}

fn resolve(cli: &Cli) -> Result<RunConfig, ConfigError> {
    let saved = cli.out.as_ref().map(|o| o.join(RESOLVED_CONFIG));
    let mut config = match (&cli.config, &cli.command) {
        (Some(path), _) => RunConfig::load(path)?,
        // Later stages reuse what `simulate` resolved.
        (None, Command::Reconcile | Command::Assure | Command::Report) if saved.as_ref().is_some_and(|p| p.exists()) => {
            RunConfig::load(saved.as_ref().unwrap())?
        }
        _ => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.output_dir = out.clone();
    }
    config.validate()?;
    Ok(config)
}

fn print_report(r: &RevenueReport) {
    println!("calls billed before/after  {} / {}", r.calls_before, r.calls_after);
    println!("revenue before             {}", r.balance_before_extended_mamo);
    println!("revenue after              {}", r.balance_after_extended_mamo);
    println!("recovered                  {}", r.recovered_amount);
    match r.recovered_percentage {
        Some(p) => println!("recovered %                {p:.4}"),
        None => println!("recovered %                n/a"),
    }
    println!("uncollectible calls        {}", r.uncollectible_calls);
}

fn write_metrics(runs: &[RunMetrics], path: Option<&Path>) -> Result<()> {
    if let Some(path) = path {
        emit_metrics(runs, path)?;
        println!("metrics -> {}", path.display());
    }
    Ok(())
}

fn execute(cli: &Cli, config: RunConfig) -> Result<()> {
    let dir = config.output_dir.clone();
    match &cli.command {
        Command::Simulate => {
            let sim = simulate(&config)?;
            let files = persist_simulation(&dir, &sim)?;
            archive::write_json(&dir.join(RESOLVED_CONFIG), &config)?;
            println!(
                "{} calls, {} schedules, {} delivered, {} dropped; {} files in {}",
                sim.calls.len(),
                sim.switch_batches.len(),
                sim.delivery.delivered.len(),
                sim.delivery.dropped.len(),
                files.len() + 1,
                dir.display()
            );
        }
        Command::Reconcile => {
            let windows = read_windows(&dir)?;
            let delivered = archive::read_delivery(&dir)?;
            let rec = reconcile(&config, &windows, &delivered)?;
            persist_reconciliation(&dir, &rec)?;
            let c = rec.counters;
            println!(
                "{} records ({} full, {} without handset), {} rejected, {} duplicates, {} resend requests, {:.0} ns/message",
                rec.record_count(),
                c.fully_reconciled,
                c.billed_without_handset,
                c.rejected,
                c.duplicates,
                c.resend_requests,
                rec.ingest_time_ns as f64 / rec.delivered.max(1) as f64
            );
        }
        Command::Assure => {
            let windows = read_windows(&dir)?;
            let switch = windows
                .iter()
                .map(|w| archive::read_switch_batch(&dir, *w))
                .collect::<Result<Vec<_>, _>>()?;
            let billing = windows
                .iter()
                .map(|w| archive::read_billing_batch(&dir, *w))
                .collect::<Result<Vec<_>, _>>()?;
            let files = assure(&switch, &billing)?;
            persist_assurance(&dir, &files)?;
            let unmatched: usize = files.iter().map(|f| f.unmatched_marks.len()).sum();
            let params: usize = files.iter().map(|f| f.parameter_marks.len()).sum();
            println!("{} assurance files, {unmatched} unmatched marks, {params} parameter marks", files.len());
        }
        Command::Report => {
            let files = archive::assurance_files_in(&dir)?
                .iter()
                .map(|p| archive::read_assurance_file(p))
                .collect::<Result<Vec<_>, _>>()?;
            let accounts: Vec<Account> = archive::read_json(&dir.join(ACCOUNTS_FILE))?;
            let report = revenue_report(&files, &config.tariff, &accounts);
            archive::write_report(&dir, &report)?;
            if let Some(csv) = &cli.csv {
                fs::copy(dir.join(REPORT_CSV), csv).with_context(|| format!("copying report to {}", csv.display()))?;
            }
            print_report(&report);
        }
        Command::Run => {
            let out = run_pipeline(&config)?;
            archive::write_json(&dir.join(RESOLVED_CONFIG), &config)?;
            print_report(&out.report);
            write_metrics(&[out.metrics], cli.csv.as_deref())?;
        }
        Command::Bench { sizes } => {
            let mut runs = Vec::new();
            for &n in sizes {
                let run = RunConfig {
                    call_count: n,
                    output_dir: dir.join(format!("bench_{n}")),
                    ..config.clone()
                };
                run.validate()?;
                let m = run_pipeline(&run)?.metrics;
                println!("{n:>6} calls  {:>12} ns  {:>8.0} ns/message", m.reconciliation_time_ns, m.ns_per_message);
                runs.push(m);
            }
            if runs.len() >= 2 {
                let points: Vec<_> = runs
                    .iter()
                    .map(|m| (m.message_count as f64, m.reconciliation_time_ns as f64))
                    .collect();
                println!("fitted exponent {:.3}", fit_exponent(&points));
            }
            let csv = cli.csv.clone().unwrap_or_else(|| dir.join("metrics.csv"));
            write_metrics(&runs, Some(&csv))?;
        }
    }
    Ok(())
}

fn is_config_error(err: &anyhow::Error) -> bool {
    err.chain().any(|e| {
        e.is::<ConfigError>() || matches!(e.downcast_ref::<PipelineError>(), Some(PipelineError::Config(_)))
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = resolve(&cli).map_err(anyhow::Error::from).and_then(|c| execute(&cli, c));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            // Our errors embed their source in the message; print each cause once.
            let mut shown = err.to_string();
            eprintln!("error: {shown}");
            for cause in err.chain().skip(1) {
                let text = cause.to_string();
                if !shown.contains(&text) {
                    eprintln!("  caused by: {text}");
                }
                shown = text;
            }
            ExitCode::from(if is_config_error(&err) { 2 } else { 3 })
        }
    }
}
