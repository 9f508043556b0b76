use std::fmt;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use tokio::io::{AsyncWrite, AsyncWriteExt, BufWriter};
use tokio::sync::mpsc;
use tokio::task::JoinHandle;

use crate::item::ReceiptRecord;

/// Where receipt records go: a stats sink over TCP, or a local NDJSON file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SinkTarget {
    Tcp(SocketAddr),
    File(PathBuf),
}

impl FromStr for SinkTarget {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(path) = s.strip_prefix("file:") {
            return Ok(SinkTarget::File(path.into()));
        }
        let addr = s.strip_prefix("tcp:").unwrap_or(s);
        match addr.parse::<SocketAddr>() {
            Ok(a) => Ok(SinkTarget::Tcp(a)),
            Err(_) if s.starts_with("tcp:") => Err(format!("bad sink address {addr:?}")),
            Err(_) => Ok(SinkTarget::File(s.into())),
        }
    }
}

impl fmt::Display for SinkTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SinkTarget::Tcp(a) => write!(f, "tcp:{a}"),
            SinkTarget::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

/// Many-producer handle; `emit` never blocks and counts drops when the
/// buffer is full.
#[derive(Clone)]
pub struct Emitter {
    tx: mpsc::Sender<ReceiptRecord>,
    dropped: Arc<AtomicU64>,
}

pub struct EmitterTask {
    handle: JoinHandle<std::io::Result<u64>>,
    dropped: Arc<AtomicU64>,
}

impl Emitter {
    pub async fn open(target: &SinkTarget, capacity: usize) -> std::io::Result<(Emitter, EmitterTask)> {
        let writer: Box<dyn AsyncWrite + Send + Unpin> = match target {
            SinkTarget::Tcp(addr) => {
                let stream = tokio::net::TcpStream::connect(addr).await?;
                stream.set_nodelay(true)?;
                Box::new(stream)
            }
            SinkTarget::File(path) => Box::new(tokio::fs::File::create(path).await?),
        };
        let (tx, rx) = mpsc::channel(capacity.max(1));
        let dropped = Arc::new(AtomicU64::new(0));
        let handle = tokio::spawn(write_records(rx, BufWriter::new(writer)));
        Ok((Emitter { tx, dropped: dropped.clone() }, EmitterTask { handle, dropped }))
    }

    pub fn emit(&self, record: ReceiptRecord) {
        if self.tx.try_send(record).is_err() {
            self.dropped.fetch_add(1, Ordering::Relaxed);
        }
    }
}

impl EmitterTask {
    /// Waits for every queued record to be written once all emitters are
    /// dropped. Returns `(written, dropped)`.
    pub async fn finish(self) -> std::io::Result<(u64, u64)> {
        let written = self
            .handle
            .await
            .map_err(|e| std::io::Error::other(e.to_string()))??;
        Ok((written, self.dropped.load(Ordering::Relaxed)))
    }
}

async fn write_records(
    mut rx: mpsc::Receiver<ReceiptRecord>,
    mut out: BufWriter<Box<dyn AsyncWrite + Send + Unpin>>,
) -> std::io::Result<u64> {
    let mut written = 0;
    let mut line = Vec::with_capacity(256);
    while let Some(record) = rx.recv().await {
        line.clear();
        serde_json::to_writer(&mut line, &record).map_err(std::io::Error::other)?;
        line.push(b'\n');
        out.write_all(&line).await?;
        written += 1;
        if rx.is_empty() {
            out.flush().await?;
        }
    }
    out.flush().await?;
    out.shutdown().await?;
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_targets() {
        assert_eq!("127.0.0.1:9000".parse(), Ok(SinkTarget::Tcp("127.0.0.1:9000".parse().unwrap())));
        assert_eq!("tcp:127.0.0.1:9".parse(), Ok(SinkTarget::Tcp("127.0.0.1:9".parse().unwrap())));
        assert_eq!("file:/tmp/x".parse(), Ok(SinkTarget::File("/tmp/x".into())));
        assert_eq!("out.ndjson".parse(), Ok(SinkTarget::File("out.ndjson".into())));
        assert!("tcp:nope".parse::<SinkTarget>().is_err());
    }
}
