use std::io::Write;
use std::net::{IpAddr, Ipv4Addr};

use clap::Parser;
use cometlab::push::{PushConfig, PushServer};
use tokio::net::TcpListener;
use tokio_util::sync::CancellationToken;

/// Long-polling publish/subscribe server.
#[derive(Parser)]
struct Args {
    #[arg(long, default_value_t = IpAddr::V4(Ipv4Addr::LOCALHOST))]
    host: IpAddr,
    /// 0 picks a free port; the bound address is printed on stdout.
    #[arg(long, default_value_t = 0)]
    port: u16,
    /// How long a connect is held without events.
    #[arg(long, default_value_t = 45_000)]
    timeout_ms: u64,
    #[arg(long, default_value_t = 16)]
    outbox_capacity: usize,
    /// Idle time after which a session without a held connect expires.
    /// Defaults to twice the timeout.
    #[arg(long)]
    session_grace_ms: Option<u64>,
}

#[tokio::main]
async fn main() -> std::io::Result<()> {
    cometlab::init_logging();
    let args = Args::parse();
    let config = PushConfig {
        outbox_capacity: args.outbox_capacity,
        session_grace_ms: args.session_grace_ms.unwrap_or(2 * args.timeout_ms),
        ..PushConfig::with_timeout(args.timeout_ms)
    };
    let listener = TcpListener::bind((args.host, args.port)).await?;
    println!("listening on {}", listener.local_addr()?);
    std::io::stdout().flush()?;

    let shutdown = CancellationToken::new();
    cometlab::cancel_on_signal(shutdown.clone());
    PushServer::new(config).serve(listener, shutdown).await
}
