use std::process::ExitCode;

use clap::Parser;
use cometlab::bayeux::ChannelName;
use cometlab::publisher::{run_publisher, PublisherConfig};

/// Publishes a fixed number of synthetic stock quotes at a fixed rate.
#[derive(Parser)]
struct Args {
    /// Server base URL; items go to `<target>/publish`.
    #[arg(long)]
    target: String,
    #[arg(long, default_value = "/stock/AAPL")]
    channel: ChannelName,
    #[arg(long, default_value_t = 10)]
    messages: u32,
    #[arg(long, default_value_t = 5_000)]
    interval_ms: u64,
}

#[tokio::main]
async fn main() -> ExitCode {
    cometlab::init_logging();
    let args = Args::parse();
    let config = PublisherConfig {
        target: args.target,
        channel: args.channel,
        total_messages: args.messages,
        publish_interval_ms: args.interval_ms,
    };
    match run_publisher(&config, &reqwest::Client::new()).await {
        Ok(log) => {
            println!("{}", serde_json::to_string_pretty(&log).expect("log serializes"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(2)
        }
    }
}
