use std::process::ExitCode;

use clap::Parser;
use cometlab::bayeux::ChannelName;
use cometlab::item::Mode;
use cometlab::swarm::{run_swarm, SinkTarget, SwarmConfig};
use tokio_util::sync::CancellationToken;

/// Simulated push or pull clients streaming receipts to a sink.
#[derive(Parser)]
struct Args {
    #[arg(long)]
    mode: Mode,
    #[arg(long)]
    clients: u32,
    /// Server base URL.
    #[arg(long)]
    server: String,
    #[arg(long, default_value = "/stock/AAPL")]
    channel: ChannelName,
    #[arg(long, default_value_t = 15_000)]
    pull_interval_ms: u64,
    #[arg(long)]
    duration_ms: u64,
    /// `tcp:HOST:PORT`, `file:PATH`, a bare socket address or a file path.
    #[arg(long)]
    sink: SinkTarget,
    #[arg(long)]
    ramp_up_ms: Option<u64>,
    #[arg(long, default_value = "swarm")]
    run_id: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[tokio::main]
async fn main() -> ExitCode {
    cometlab::init_logging();
    let args = Args::parse();
    let config = SwarmConfig {
        run_id: args.run_id,
        mode: args.mode,
        clients: args.clients,
        server_url: args.server,
        channel: args.channel,
        pull_interval_ms: args.pull_interval_ms,
        run_duration_ms: args.duration_ms,
        sink: args.sink,
        ramp_up_ms: args.ramp_up_ms,
        seed: args.seed,
    };
    let stop = CancellationToken::new();
    cometlab::cancel_on_signal(stop.clone());
    match run_swarm(config, stop).await {
        Ok(summary) => {
            println!("{}", serde_json::to_string(&summary).expect("summary serializes"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(2)
        }
    }
}
