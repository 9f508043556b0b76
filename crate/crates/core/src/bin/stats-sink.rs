use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use cometlab::sink::{count_gaps, persist, sample_cpu, CpuRun, RunDataset, StatsSink};
use tokio_util::sync::CancellationToken;

/// Collects NDJSON receipts and server CPU samples until interrupted, then
/// writes the run directory.
#[derive(Parser)]
struct Args {
    #[arg(long, default_value = "127.0.0.1:7070")]
    listen: SocketAddr,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value = "run")]
    run_id: String,
    /// Process whose CPU usage is sampled.
    #[arg(long)]
    cpu_pid: Option<u32>,
    #[arg(long, default_value_t = 1_000)]
    cpu_period_ms: u64,
}

#[tokio::main]
async fn main() -> ExitCode {
    cometlab::init_logging();
    let args = Args::parse();
    let stop = CancellationToken::new();
    cometlab::cancel_on_signal(stop.clone());

    let sink = StatsSink::new();
    let (addr, listener) = match sink.listen(args.listen, stop.clone()).await {
        Ok(bound) => bound,
        Err(e) => {
            eprintln!("listen {}: {e}", args.listen);
            return ExitCode::from(2);
        }
    };
    println!("listening on {addr}");
    let cpu = args.cpu_pid.map(|pid| tokio::spawn(sample_cpu(pid, args.cpu_period_ms, stop.clone())));

    stop.cancelled().await;
    let _ = listener.await;
    let cpu = match cpu {
        Some(task) => match task.await {
            Ok(Ok(run)) => run,
            Ok(Err(e)) => {
                eprintln!("{e}");
                CpuRun::default()
            }
            Err(e) => {
                eprintln!("cpu sampler: {e}");
                CpuRun::default()
            }
        },
        None => CpuRun::default(),
    };

    let mut dataset = RunDataset::new(args.run_id, serde_json::json!({}));
    dataset.receipts = sink.take_receipts();
    dataset.counters.ingest_accepted = sink.accepted();
    dataset.counters.ingest_malformed = sink.malformed();
    dataset.counters.cpu_period_ms = args.cpu_period_ms;
    dataset.counters.cpu_gaps = count_gaps(&cpu.samples, args.cpu_period_ms) as u64;
    dataset.counters.sampler_overhead_us = cpu.sampler_overhead_us;
    dataset.counters.complete = true;
    dataset.cpu = cpu.samples;
    match persist(&dataset, &args.out_dir) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::FAILURE
        }
    }
}
