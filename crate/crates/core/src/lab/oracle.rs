//! Exact-timestamp replay of a pull schedule against a publish schedule.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OraclePoll {
    pub at_ms: u64,
    /// Latest item published at or before `at_ms`, if any.
    pub item: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleOutcome {
    pub publish_interval_ms: u64,
    pub polls: Vec<OraclePoll>,
}

impl OracleOutcome {
    /// Polls that returned an item (every such poll is a receipt).
    pub fn expected_non_unique(&self) -> usize {
        self.polls.iter().filter(|p| p.item.is_some()).count()
    }

    pub fn expected_unique_ids(&self) -> BTreeSet<u64> {
        self.polls.iter().filter_map(|p| p.item).collect()
    }

    /// Age of the returned item at each receipt.
    pub fn ages_ms(&self) -> Vec<u64> {
        self.polls
            .iter()
            .filter_map(|p| p.item.map(|k| p.at_ms - k * self.publish_interval_ms))
            .collect()
    }

    /// Age at the first receipt of each distinct item.
    pub fn first_ages_ms(&self) -> Vec<u64> {
        let mut seen = BTreeSet::new();
        self.polls
            .iter()
            .filter_map(|p| p.item.filter(|k| seen.insert(*k)).map(|k| p.at_ms - k * self.publish_interval_ms))
            .collect()
    }
}

/// Item `k` is published at `k * q` for `k < n`; a client polls at
/// `phase + j * p` for as long as the poll time is before `n * q + drain`.
/// Each poll returns the latest item published at or before it.
pub fn pull_schedule_oracle(q_ms: u64, p_ms: u64, n: u64, phase_ms: u64, drain_ms: u64) -> OracleOutcome {
    assert!(q_ms > 0 && p_ms > 0 && n > 0, "intervals and message count must be positive");
    let end = n * q_ms + drain_ms;
    let polls = (0..)
        .map(|j| phase_ms + j * p_ms)
        .take_while(|&t| t < end)
        .map(|t| OraclePoll { at_ms: t, item: Some((t / q_ms).min(n - 1)) })
        .collect();
    OracleOutcome { publish_interval_ms: q_ms, polls }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slower_publish_than_poll_sees_everything() {
        for phase in (0..15_000).step_by(250) {
            let o = pull_schedule_oracle(20_000, 15_000, 10, phase, 0);
            assert_eq!(o.expected_unique_ids(), (0..10).collect());
        }
    }

    #[test]
    fn fast_publish_misses_items() {
        // polls at 0, 15, 30, 45 s see items 0, 3, 6, 9
        let o = pull_schedule_oracle(5_000, 15_000, 10, 0, 0);
        assert_eq!(o.expected_unique_ids(), [0, 3, 6, 9].into_iter().collect());
        for phase in (0..15_000).step_by(100) {
            let n = pull_schedule_oracle(5_000, 15_000, 10, phase, 0).expected_unique_ids().len();
            assert!((3..=4).contains(&n), "phase {phase}: {n}");
        }
    }

    #[test]
    fn long_publish_interval_gives_about_35_receipts() {
        for phase in (0..15_000).step_by(500) {
            let n = pull_schedule_oracle(50_000, 15_000, 10, phase, 0).expected_non_unique();
            assert!((33..=35).contains(&n), "phase {phase}: {n}");
        }
    }

    #[test]
    fn equal_intervals_see_each_item_once_per_period() {
        let o = pull_schedule_oracle(1_500, 1_500, 10, 700, 0);
        assert_eq!(o.expected_non_unique(), 10);
        assert_eq!(o.expected_unique_ids().len(), 10);
    }

    #[test]
    fn ages() {
        let o = pull_schedule_oracle(2_000, 1_500, 3, 0, 0);
        // polls at 0, 1500, 3000, 4500 -> items 0, 0, 1, 2
        assert_eq!(o.ages_ms(), vec![0, 1_500, 1_000, 500]);
        assert_eq!(o.first_ages_ms(), vec![0, 1_000, 500]);
    }
}
