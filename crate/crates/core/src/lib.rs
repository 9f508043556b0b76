//! Testbed comparing BAYEUX-style long-polling push against fixed-interval
//! pull for web event notification.
//!
//! The crate holds every runtime component: the protocol model, the push and
//! pull servers, a publisher, a simulated client swarm, a statistics sink with
//! a process CPU sampler, and the experiment lab that sweeps configurations and
//! writes CSV reports.

pub mod bayeux;
pub mod clock;
pub mod item;
pub mod lab;
pub mod publisher;
pub mod pull;
pub mod push;
pub mod sink;
pub mod swarm;

/// Logs to stderr, filtered by `RUST_LOG` (default `warn`).
pub fn init_logging() {
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn"));
    let _ = tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).try_init();
}

/// Cancels `token` on Ctrl-C or SIGTERM.
pub fn cancel_on_signal(token: tokio_util::sync::CancellationToken) {
    tokio::spawn(async move {
        let mut term = tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate())
            .expect("install SIGTERM handler");
        tokio::select! {
            _ = tokio::signal::ctrl_c() => {}
            _ = term.recv() => {}
        }
        token.cancel();
    });
}
