use std::time::Duration;

use reqwest::StatusCode;
use tokio::time::Instant;

use super::ClientContext;
use crate::clock::now_ms;
use crate::item::{Mode, PublishItem, ReceiptRecord};

/// Polls `GET /pull` on a fixed-rate schedule starting at `begin`.
///
/// Tick `k` fires at `begin + k * interval`; a tick that is already in the
/// past when the previous poll returns is skipped rather than fired late.
/// Returns the number of receipts emitted.
pub async fn pull_client_loop(idx: u32, begin: Instant, ctx: &ClientContext) -> u64 {
    let cfg = &ctx.config;
    let interval = Duration::from_millis(cfg.pull_interval_ms);
    let url = format!("{}/pull", cfg.base_url());
    let channel = cfg.channel.to_string();
    let mut receipts = 0;
    let mut tick = 0u32;

    loop {
        let at = begin + interval * tick;
        if !ctx.sleep_until(at).await {
            break;
        }
        ctx.count_request();
        let request = ctx
            .http
            .get(&url)
            .query(&[("channel", channel.as_str())])
            .timeout(interval.max(Duration::from_millis(500)))
            .send();
        let result = tokio::select! {
            _ = ctx.stop.cancelled() => break,
            r = request => r,
        };
        match result {
            Ok(resp) if resp.status() == StatusCode::OK => match resp.json::<PublishItem>().await {
                Ok(item) => {
                    let record = ReceiptRecord::new(&cfg.run_id, idx, Mode::Pull, item.id, item.creation_ts, now_ms());
                    ctx.emitter.emit(record);
                    receipts += 1;
                }
                Err(e) => {
                    tracing::debug!(idx, "bad pull body: {e}");
                    ctx.count_error();
                }
            },
            Ok(resp) if resp.status() == StatusCode::NO_CONTENT => {}
            Ok(resp) => {
                tracing::debug!(idx, status = %resp.status(), "pull rejected");
                ctx.count_error();
            }
            Err(e) => {
                tracing::debug!(idx, "pull failed: {e}");
                ctx.count_error();
            }
        }

        tick += 1;
        let now = Instant::now();
        while begin + interval * tick <= now {
            tick += 1;
        }
    }
    receipts
}
