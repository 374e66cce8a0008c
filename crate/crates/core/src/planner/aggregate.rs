use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::model::{AppId, NodeId, Request};

/// Requests sharing an application and an origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AggregateKey {
    pub app: AppId,
    pub origin: NodeId,
}

impl AggregateKey {
    pub fn of(r: &Request) -> Self {
        AggregateKey {
            app: r.app,
            origin: r.origin,
        }
    }
}

/// Per-slot demand `d_t = sum of sizes of active members` over the history.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateSeries {
    pub key: AggregateKey,
    pub members: usize,
    pub series: Vec<f64>,
}

/// One aggregate per `(app, origin)` seen in `history`, sorted by key. Demand
/// is tallied for slots `0..horizon`.
pub fn aggregate_history(history: &[Request], horizon: u32) -> Vec<AggregateSeries> {
    let mut map: BTreeMap<AggregateKey, AggregateSeries> = BTreeMap::new();
    for r in history {
        let key = AggregateKey::of(r);
        let agg = map.entry(key).or_insert_with(|| AggregateSeries {
            key,
            members: 0,
            series: vec![0.0; horizon as usize],
        });
        agg.members += 1;
        for t in r.arrival.min(horizon)..r.departure().min(horizon) {
            agg.series[t as usize] += r.size;
        }
    }
    map.into_values().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RequestId;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn req(id: u64, app: u32, origin: u32, size: f64, arrival: u32, duration: u32) -> Request {
        Request {
            id: RequestId(id),
            app: AppId(app),
            origin: NodeId(origin),
            size,
            arrival,
            duration,
        }
    }

    #[test]
    fn overlapping_slot_sums() {
        let h = vec![req(0, 0, 1, 1.0, 0, 2), req(1, 0, 1, 2.0, 1, 2)];
        let aggs = aggregate_history(&h, 4);
        assert_eq!(aggs.len(), 1);
        assert_eq!(aggs[0].series, vec![1.0, 3.0, 2.0, 0.0]);
        assert_eq!(aggs[0].members, 2);
    }

    #[test]
    fn distinct_origins_distinct_aggregates() {
        let h = vec![req(0, 0, 1, 1.0, 0, 1), req(1, 0, 2, 1.0, 0, 1)];
        let keys: Vec<_> = aggregate_history(&h, 2).iter().map(|a| a.key.origin).collect();
        assert_eq!(keys, vec![NodeId(1), NodeId(2)]);
    }

    #[test]
    fn aggregates_partition_global_demand() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let horizon = 150;
        let h: Vec<Request> = (0..1000)
            .map(|i| {
                req(
                    i,
                    rng.random_range(0..4),
                    rng.random_range(0..6),
                    rng.random_range(1..20) as f64,
                    rng.random_range(0..horizon),
                    rng.random_range(1..30),
                )
            })
            .collect();
        // Independent tally over slots.
        let global: Vec<f64> = (0..horizon)
            .map(|t| h.iter().filter(|r| r.is_active(t)).map(|r| r.size).sum())
            .collect();
        let aggs = aggregate_history(&h, horizon);
        for t in 0..horizon as usize {
            let sum: f64 = aggs.iter().map(|a| a.series[t]).sum();
            assert_eq!(sum, global[t]);
        }
        assert_eq!(aggs.iter().map(|a| a.members).sum::<usize>(), 1000);
    }
}
