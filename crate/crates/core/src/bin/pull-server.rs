use std::io::Write;
use std::net::{IpAddr, Ipv4Addr};

use clap::Parser;
use cometlab::pull::PullServer;
use tokio::net::TcpListener;
use tokio_util::sync::CancellationToken;

/// Latest-value polling server.
#[derive(Parser)]
struct Args {
    #[arg(long, default_value_t = IpAddr::V4(Ipv4Addr::LOCALHOST))]
    host: IpAddr,
    /// 0 picks a free port; the bound address is printed on stdout.
    #[arg(long, default_value_t = 0)]
    port: u16,
}

#[tokio::main]
async fn main() -> std::io::Result<()> {
    cometlab::init_logging();
    let args = Args::parse();
    let listener = TcpListener::bind((args.host, args.port)).await?;
    println!("listening on {}", listener.local_addr()?);
    std::io::stdout().flush()?;

    let shutdown = CancellationToken::new();
    cometlab::cancel_on_signal(shutdown.clone());
    PullServer::new().serve(listener, shutdown).await
}
