use std::collections::BTreeMap;

use crate::analytic::collective_volume;
use crate::types::{CollectiveKind, KindMap};
use crate::volume::Volume;

/// Power-of-two histogram over per-call payload bytes: bucket `k` counts
/// calls whose payload lies in `[2^k, 2^(k+1))`. Zero-byte calls get their
/// own bucket so frequencies always sum to the call count.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SizeHistogram {
    zero_calls: u64,
    buckets: BTreeMap<u32, u64>,
}

impl SizeHistogram {
    pub fn record(&mut self, payload_bytes: u64, count: u64) {
        if payload_bytes == 0 {
            self.zero_calls += count;
        } else {
            *self.buckets.entry(payload_bytes.ilog2()).or_insert(0) += count;
        }
    }

    pub fn total_calls(&self) -> u64 {
        self.zero_calls + self.buckets.values().sum::<u64>()
    }

    pub fn is_empty(&self) -> bool {
        self.total_calls() == 0
    }

    /// Buckets in ascending size order as `(lo_bytes, hi_bytes, calls)`,
    /// the zero bucket (when populated) first as `(0, 1, calls)`.
    pub fn iter(&self) -> impl Iterator<Item = (u64, u64, u64)> + '_ {
        let zero = (self.zero_calls > 0).then_some((0u64, 1u64, self.zero_calls));
        zero.into_iter()
            .chain(self.buckets.iter().map(|(k, n)| (1u64 << k, 1u64 << (k + 1), *n)))
    }

    /// Calls with payloads strictly below `threshold_bytes`.
    pub fn calls_below(&self, threshold_bytes: u64) -> u64 {
        self.iter()
            .filter(|(lo, _, _)| *lo < threshold_bytes)
            .map(|(_, _, n)| n)
            .sum()
    }

    /// Calls with payloads at or above `threshold_bytes` (bucket granularity).
    pub fn calls_at_or_above(&self, threshold_bytes: u64) -> u64 {
        self.total_calls() - self.calls_below(threshold_bytes)
    }
}

/// Per-kind aggregation of a stream of calls.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct KindAggregate {
    pub call_count: u64,
    /// Sum of per-call payload bytes exactly as logged or serialized.
    pub payload_bytes: u64,
    /// Sum of per-call wire volume: the collective volume formula applied
    /// to each call's payload and group size.
    pub wire_bytes: Volume,
    pub histogram: SizeHistogram,
}

/// Aggregated view of a communication stream, per collective kind: totals,
/// call counts, and message-size histograms.
///
/// Produced both from synthesized event streams (where the element width is
/// known) and from parsed trace logs (bytes only).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommSummary {
    /// Element width used to build this summary, when known. Lets element
    /// volumes be recovered exactly from byte volumes.
    pub elem_bytes: Option<u32>,
    per_kind: KindMap<KindAggregate>,
}

impl CommSummary {
    pub fn new(elem_bytes: Option<u32>) -> Self {
        CommSummary {
            elem_bytes,
            per_kind: KindMap::default(),
        }
    }

    /// Folds `count` identical calls of `payload_bytes` over `group_size`
    /// ranks into the summary.
    pub fn record(&mut self, kind: CollectiveKind, payload_bytes: u64, group_size: u64, count: u64) {
        let agg = &mut self.per_kind[kind];
        agg.call_count += count;
        agg.payload_bytes += payload_bytes * count;
        agg.wire_bytes += collective_volume(kind, payload_bytes, group_size) * count;
        agg.histogram.record(payload_bytes, count);
    }

    pub fn kind(&self, kind: CollectiveKind) -> &KindAggregate {
        &self.per_kind[kind]
    }

    pub fn kinds(&self) -> impl Iterator<Item = (CollectiveKind, &KindAggregate)> {
        self.per_kind.iter()
    }

    /// Exact wire volume in elements for one kind; `None` when the element
    /// width is unknown (trace-derived summaries).
    pub fn wire_elems(&self, kind: CollectiveKind) -> Option<Volume> {
        self.elem_bytes
            .map(|eb| self.per_kind[kind].wire_bytes.div_int(eb as u128))
    }

    pub fn total_calls(&self) -> u64 {
        self.kinds().map(|(_, a)| a.call_count).sum()
    }

    pub fn total_payload_bytes(&self) -> u64 {
        self.kinds().map(|(_, a)| a.payload_bytes).sum()
    }

    pub fn total_wire_bytes(&self) -> Volume {
        self.kinds().map(|(_, a)| a.wire_bytes).sum()
    }

    /// True when the per-kind aggregates match exactly; the element-width
    /// annotation is ignored so trace-derived and event-derived summaries
    /// can be compared.
    pub fn same_aggregates(&self, other: &CommSummary) -> bool {
        self.per_kind == other.per_kind
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_buckets_are_powers_of_two() {
        let mut h = SizeHistogram::default();
        h.record(1, 1); // [1, 2)
        h.record(1023, 2); // [512, 1024)
        h.record(1024, 1); // [1024, 2048)
        h.record(0, 3);
        assert_eq!(h.total_calls(), 7);
        let buckets: Vec<_> = h.iter().collect();
        assert_eq!(buckets, vec![(0, 1, 3), (1, 2, 1), (512, 1024, 2), (1024, 2048, 1)]);
        assert_eq!(h.calls_below(1024), 6);
        assert_eq!(h.calls_at_or_above(1024), 1);
    }

    #[test]
    fn record_accumulates_wire_volume() {
        let mut s = CommSummary::new(Some(2));
        // One allreduce of 1024 bytes over 4 ranks: wire = 2*1024*3/4 = 1536.
        s.record(CollectiveKind::Allreduce, 1024, 4, 1);
        assert_eq!(s.kind(CollectiveKind::Allreduce).wire_bytes, Volume::from(1536u64));
        assert_eq!(s.kind(CollectiveKind::Allreduce).payload_bytes, 1024);
        assert_eq!(s.wire_elems(CollectiveKind::Allreduce), Some(Volume::from(768u64)));
        assert_eq!(s.total_calls(), 1);
    }
}
