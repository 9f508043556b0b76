use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::LabError;
use crate::item::ReceiptRecord;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricStat {
    pub mean: f64,
    pub stddev: f64,
    pub samples: u64,
}

impl MetricStat {
    /// Population mean and standard deviation; `None` for an empty input.
    pub fn of(values: impl IntoIterator<Item = f64>) -> Option<Self> {
        let values: Vec<f64> = values.into_iter().collect();
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(Self { mean, stddev: var.sqrt(), samples: values.len() as u64 })
    }
}

/// Mean of `|receipt - creation|` over all given receipts.
pub fn mean_trip_time<'a>(receipts: impl IntoIterator<Item = &'a ReceiptRecord>) -> Result<f64, LabError> {
    MetricStat::of(receipts.into_iter().map(|r| (r.receipt_ts - r.creation_ts).abs() as f64))
        .map(|s| s.mean)
        .ok_or(LabError::EmptyDataset)
}

/// The earliest receipt of each `(client, item)` pair.
pub fn first_receipts(receipts: &[ReceiptRecord]) -> Vec<&ReceiptRecord> {
    let mut first: BTreeMap<(u32, u64), &ReceiptRecord> = BTreeMap::new();
    for r in receipts {
        first
            .entry((r.client_idx, r.item_id))
            .and_modify(|cur| {
                if r.receipt_ts < cur.receipt_ts {
                    *cur = r;
                }
            })
            .or_insert(r);
    }
    first.into_values().collect()
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ClientCounts {
    pub non_unique: u64,
    pub unique: BTreeSet<u64>,
}

/// Receipt counts for clients `0..clients`; clients with no receipts appear
/// with zero counts.
pub fn per_client_counts(receipts: &[ReceiptRecord], clients: u32) -> Vec<ClientCounts> {
    let mut counts = vec![ClientCounts::default(); clients as usize];
    for r in receipts {
        let idx = r.client_idx as usize;
        if idx >= counts.len() {
            counts.resize(idx + 1, ClientCounts::default());
        }
        counts[idx].non_unique += 1;
        counts[idx].unique.insert(r.item_id);
    }
    counts
}

/// Mean non-unique and unique receipts per client over `clients` clients.
pub fn received_counts(receipts: &[ReceiptRecord], total_messages: u32, clients: u32) -> (f64, f64) {
    let counts = per_client_counts(receipts, clients);
    if counts.is_empty() {
        return (0.0, 0.0);
    }
    let n = counts.len() as f64;
    let non_unique = counts.iter().map(|c| c.non_unique as f64).sum::<f64>() / n;
    let unique = counts
        .iter()
        .map(|c| c.unique.len().min(total_messages as usize) as f64)
        .sum::<f64>()
        / n;
    (non_unique, unique)
}

/// Receipts whose `(client, item)` pair was already seen.
pub fn duplicate_pairs(receipts: &[ReceiptRecord]) -> u64 {
    let mut seen = BTreeSet::new();
    receipts.iter().filter(|r| !seen.insert((r.client_idx, r.item_id))).count() as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::item::Mode;

    fn rec(client: u32, item: u64, created: i64, received: i64) -> ReceiptRecord {
        ReceiptRecord::new("r", client, Mode::Pull, item, created, received)
    }

    #[test]
    fn trip_time_means() {
        assert_eq!(mean_trip_time(&[rec(0, 0, 1_000, 1_000)]).unwrap(), 0.0);
        assert_eq!(mean_trip_time(&[rec(0, 0, 0, 100), rec(0, 1, 0, 300)]).unwrap(), 200.0);
        assert!(matches!(mean_trip_time(&[]), Err(LabError::EmptyDataset)));
        // absolute value
        assert_eq!(mean_trip_time(&[rec(0, 0, 500, 400)]).unwrap(), 100.0);
    }

    #[test]
    fn push_client_with_all_items() {
        let rs: Vec<_> = (0..10).map(|i| rec(0, i, 0, 1)).collect();
        assert_eq!(received_counts(&rs, 10, 1), (10.0, 10.0));
    }

    #[test]
    fn pull_client_with_repeats() {
        let rs: Vec<_> = [0, 0, 1, 1, 1, 2].into_iter().map(|i| rec(0, i, 0, 1)).collect();
        assert_eq!(received_counts(&rs, 10, 1), (6.0, 3.0));
        assert_eq!(duplicate_pairs(&rs), 3);
    }

    #[test]
    fn empty_and_silent_clients() {
        assert_eq!(received_counts(&[], 10, 0), (0.0, 0.0));
        assert_eq!(received_counts(&[], 10, 4), (0.0, 0.0));
        let rs = vec![rec(1, 0, 0, 1), rec(1, 1, 0, 1)];
        assert_eq!(received_counts(&rs, 10, 2), (1.0, 1.0));
    }

    #[test]
    fn first_receipt_per_pair() {
        let rs = vec![rec(0, 1, 0, 50), rec(0, 1, 0, 20), rec(1, 1, 0, 70), rec(0, 2, 10, 30)];
        let firsts = first_receipts(&rs);
        assert_eq!(firsts.len(), 3);
        assert_eq!(mean_trip_time(firsts).unwrap(), (20.0 + 70.0 + 20.0) / 3.0);
    }

    #[test]
    fn stat_of_values() {
        let s = MetricStat::of([2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]).unwrap();
        assert_eq!((s.mean, s.stddev, s.samples), (5.0, 2.0, 8));
        assert!(MetricStat::of([]).is_none());
    }
}
