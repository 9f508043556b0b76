//! Statistics sink: NDJSON receipt ingestion over TCP, server CPU sampling
//! and run persistence.

mod cpu;
mod persist;

use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::Arc;

use parking_lot::Mutex;
use tokio::io::{AsyncBufReadExt, BufReader};
use tokio::net::{TcpListener, TcpStream};
use tokio_util::sync::CancellationToken;

pub use cpu::{
    core_count, count_gaps, parse_stat, read_proc_times, sample_cpu, CpuError, CpuRun, CpuSample,
    ProcTimes,
};
pub use persist::{
    is_complete, load, persist, run_dir, PersistError, RunCounters, RunDataset, ServerCounters,
    CONFIG_FILE, COUNTERS_FILE, CPU_FILE, RECEIPTS_FILE,
};

use crate::item::ReceiptRecord;

#[derive(Debug, Default)]
struct Inner {
    receipts: Mutex<Vec<ReceiptRecord>>,
    accepted: AtomicU64,
    malformed: AtomicU64,
    open_connections: AtomicUsize,
}

/// Collects receipt records; cheap to clone and share across connections.
#[derive(Debug, Clone, Default)]
pub struct StatsSink {
    inner: Arc<Inner>,
}

impl StatsSink {
    pub fn new() -> Self {
        Self::default()
    }

    /// Parses one NDJSON line. Malformed lines are counted and skipped.
    pub fn ingest(&self, line: &[u8]) -> bool {
        let line = line.trim_ascii();
        if line.is_empty() {
            return false;
        }
        match serde_json::from_slice::<ReceiptRecord>(line) {
            Ok(record) => {
                self.inner.receipts.lock().push(record);
                self.inner.accepted.fetch_add(1, Ordering::Relaxed);
                true
            }
            Err(_) => {
                self.inner.malformed.fetch_add(1, Ordering::Relaxed);
                false
            }
        }
    }

    pub fn accepted(&self) -> u64 {
        self.inner.accepted.load(Ordering::Relaxed)
    }

    pub fn malformed(&self) -> u64 {
        self.inner.malformed.load(Ordering::Relaxed)
    }

    pub fn open_connections(&self) -> usize {
        self.inner.open_connections.load(Ordering::Relaxed)
    }

    pub fn receipts(&self) -> Vec<ReceiptRecord> {
        self.inner.receipts.lock().clone()
    }

    pub fn take_receipts(&self) -> Vec<ReceiptRecord> {
        std::mem::take(&mut *self.inner.receipts.lock())
    }

    /// Binds `addr` and accepts swarm connections until `stop` fires.
    pub async fn listen(
        &self,
        addr: SocketAddr,
        stop: CancellationToken,
    ) -> std::io::Result<(SocketAddr, tokio::task::JoinHandle<()>)> {
        let listener = TcpListener::bind(addr).await?;
        let local = listener.local_addr()?;
        let sink = self.clone();
        let handle = tokio::spawn(async move {
            loop {
                tokio::select! {
                    _ = stop.cancelled() => break,
                    accepted = listener.accept() => match accepted {
                        Ok((stream, _)) => {
                            let sink = sink.clone();
                            sink.inner.open_connections.fetch_add(1, Ordering::SeqCst);
                            tokio::spawn(async move {
                                if let Err(e) = sink.read_stream(stream).await {
                                    tracing::warn!("sink connection: {e}");
                                }
                                sink.inner.open_connections.fetch_sub(1, Ordering::SeqCst);
                            });
                        }
                        Err(e) => tracing::warn!("sink accept: {e}"),
                    }
                }
            }
        });
        Ok((local, handle))
    }

    async fn read_stream(&self, stream: TcpStream) -> std::io::Result<()> {
        let mut reader = BufReader::new(stream);
        let mut line = Vec::with_capacity(256);
        loop {
            line.clear();
            if reader.read_until(b'\n', &mut line).await? == 0 {
                return Ok(());
            }
            self.ingest(&line);
        }
    }
}
