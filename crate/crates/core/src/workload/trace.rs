//! MMPP request traces and their CSV form.

use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Geometric, Normal, Poisson};
use serde::{Deserialize, Serialize};

use super::apps::{positive_normal, AppSpec};
use super::WorkloadError;
use crate::model::{AppId, NodeId, Request, RequestId, SubstrateNetwork};

/// Two-state Markov modulation of the per-node arrival rate. Rates are
/// multiples of the mean rate `lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MmppSpec {
    pub high_factor: f64,
    pub low_factor: f64,
    /// Per-slot probability of leaving the high state.
    pub p_high_to_low: f64,
    /// Per-slot probability of leaving the low state.
    pub p_low_to_high: f64,
}

impl Default for MmppSpec {
    fn default() -> Self {
        MmppSpec {
            high_factor: 1.5,
            low_factor: 0.5,
            p_high_to_low: 0.05,
            p_low_to_high: 0.05,
        }
    }
}

impl MmppSpec {
    /// Long-run probability of the high state.
    pub fn stationary_high(&self) -> f64 {
        self.p_low_to_high / (self.p_low_to_high + self.p_high_to_low)
    }

    /// Long-run mean rate as a multiple of `lambda`.
    pub fn stationary_factor(&self) -> f64 {
        let h = self.stationary_high();
        h * self.high_factor + (1.0 - h) * self.low_factor
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TraceSpec {
    pub history_slots: u32,
    pub test_slots: u32,
    /// Mean arrivals per edge node per slot.
    pub lambda: f64,
    #[serde(default)]
    pub mmpp: MmppSpec,
    pub size_mean: f64,
    pub size_std: f64,
    pub duration_mean: f64,
    pub zipf_alpha: f64,
    /// Relative application weights; empty means uniform.
    #[serde(default)]
    pub app_weights: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
}

impl Default for TraceSpec {
    fn default() -> Self {
        TraceSpec {
            history_slots: 5400,
            test_slots: 600,
            lambda: 10.0,
            mmpp: MmppSpec::default(),
            size_mean: 10.0,
            size_std: 2.0,
            duration_mean: 10.0,
            zipf_alpha: 1.0,
            app_weights: Vec::new(),
            seed: 0,
        }
    }
}

impl TraceSpec {
    pub fn horizon(&self) -> u32 {
        self.history_slots + self.test_slots
    }

    fn validate(&self) -> Result<(), WorkloadError> {
        let m = &self.mmpp;
        let bad = |s: &str| Err(WorkloadError::InvalidSpec(s.into()));
        if !(m.high_factor > m.low_factor && m.low_factor >= 0.0) {
            return bad("MMPP rates must satisfy high > low >= 0");
        }
        let open = |p: f64| p > 0.0 && p < 1.0;
        if !open(m.p_high_to_low) || !open(m.p_low_to_high) {
            return bad("MMPP switch probabilities must lie in (0, 1)");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be finite and >= 0");
        }
        if !(self.size_mean > 0.0 && self.size_std >= 0.0) {
            return bad("size distribution needs mean > 0 and std >= 0");
        }
        if !(self.duration_mean >= 1.0) {
            return bad("mean duration must be at least one slot");
        }
        if self.app_weights.iter().any(|w| !(*w >= 0.0)) {
            return bad("application weights must be >= 0");
        }
        Ok(())
    }
}

/// Zipf weights for `n` ranks, normalized to mean 1.
pub fn zipf_weights(n: usize, alpha: f64) -> Vec<f64> {
    let raw: Vec<f64> = (1..=n).map(|k| (k as f64).powf(-alpha)).collect();
    let mean = raw.iter().sum::<f64>() / n as f64;
    raw.into_iter().map(|w| w / mean).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub requests: Vec<Request>,
    pub history_slots: u32,
    pub test_slots: u32,
}

impl Trace {
    /// History requests (arriving before `history_slots`) and test requests
    /// with arrivals shifted so the test period starts at slot 0.
    pub fn split(&self) -> (Vec<Request>, Vec<Request>) {
        let h = self.history_slots;
        let history = self.requests.iter().filter(|r| r.arrival < h).copied().collect();
        let test = self
            .requests
            .iter()
            .filter(|r| r.arrival >= h)
            .map(|r| Request {
                arrival: r.arrival - h,
                ..*r
            })
            .collect();
        (history, test)
    }

    pub fn write_csv<W: Write>(requests: &[Request], out: W) -> Result<(), WorkloadError> {
        let mut w = csv::Writer::from_writer(out);
        for r in requests {
            w.serialize(TraceRow::from(r))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Vec<Request>, WorkloadError> {
        let mut rd = csv::Reader::from_reader(input);
        let mut out = Vec::new();
        for row in rd.deserialize::<TraceRow>() {
            let row = row?;
            if !(row.size > 0.0) || row.duration < 1 {
                return Err(WorkloadError::InvalidSpec(format!(
                    "request {} has size {} and duration {}",
                    row.request_id, row.size, row.duration
                )));
            }
            out.push(row.into());
        }
        Ok(out)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TraceRow {
    request_id: u64,
    arrival_slot: u32,
    duration: u32,
    origin: u32,
    app: u32,
    size: f64,
}

impl From<&Request> for TraceRow {
    fn from(r: &Request) -> Self {
        TraceRow {
            request_id: r.id.0,
            arrival_slot: r.arrival,
            duration: r.duration,
            origin: r.origin.0,
            app: r.app.0,
            size: r.size,
        }
    }
}

impl From<TraceRow> for Request {
    fn from(r: TraceRow) -> Self {
        Request {
            id: RequestId(r.request_id),
            app: AppId(r.app),
            origin: NodeId(r.origin),
            size: r.size,
            arrival: r.arrival_slot,
            duration: r.duration,
        }
    }
}

/// Per-node MMPP arrivals at edge nodes. Each node runs its own two-state
/// chain started from the stationary distribution; popularity ranks are a
/// random permutation of the edge nodes. Arrivals within a slot are shuffled
/// and then numbered consecutively.
pub fn gen_mmpp_trace(
    spec: &TraceSpec,
    n_apps: usize,
    substrate: &SubstrateNetwork,
    rng: &mut impl Rng,
) -> Result<Trace, WorkloadError> {
    spec.validate()?;
    if n_apps == 0 {
        return Err(WorkloadError::InvalidSpec("no applications".into()));
    }
    let weights = if spec.app_weights.is_empty() {
        vec![1.0; n_apps]
    } else if spec.app_weights.len() == n_apps {
        spec.app_weights.clone()
    } else {
        return Err(WorkloadError::InvalidSpec(format!(
            "{} application weights for {n_apps} applications",
            spec.app_weights.len()
        )));
    };
    let app_dist = rand_distr::weighted::WeightedIndex::new(&weights)
        .map_err(|e| WorkloadError::InvalidSpec(format!("application weights: {e}")))?;
    let edge = substrate.edge_nodes();
    if edge.is_empty() {
        return Err(WorkloadError::InvalidSpec("substrate has no edge nodes".into()));
    }
    let mut ranks: Vec<usize> = (0..edge.len()).collect();
    ranks.shuffle(rng);
    let zipf = zipf_weights(edge.len(), spec.zipf_alpha);
    let popularity: Vec<f64> = ranks.iter().map(|&r| zipf[r]).collect();

    let size = Normal::new(spec.size_mean, spec.size_std)
        .map_err(|e| WorkloadError::InvalidSpec(format!("size distribution: {e}")))?;
    let duration = Geometric::new(1.0 / spec.duration_mean)
        .map_err(|e| WorkloadError::InvalidSpec(format!("duration distribution: {e}")))?;
    let m = &spec.mmpp;
    let mut high: Vec<bool> = (0..edge.len())
        .map(|_| rng.random_bool(m.stationary_high()))
        .collect();

    let mut requests = Vec::new();
    let mut batch = Vec::new();
    let mut next_id = 0u64;
    for t in 0..spec.horizon() {
        batch.clear();
        for (i, &v) in edge.iter().enumerate() {
            let factor = if high[i] { m.high_factor } else { m.low_factor };
            let rate = spec.lambda * factor * popularity[i];
            let count = if rate > 0.0 {
                Poisson::new(rate).expect("positive finite rate").sample(rng) as u64
            } else {
                0
            };
            for _ in 0..count {
                batch.push((v, AppId(app_dist.sample(rng) as u32)));
            }
            let leave = if high[i] { m.p_high_to_low } else { m.p_low_to_high };
            if rng.random_bool(leave) {
                high[i] = !high[i];
            }
        }
        batch.shuffle(rng);
        for &(origin, app) in &batch {
            requests.push(Request {
                id: RequestId(next_id),
                app,
                origin,
                size: positive_normal(&size, rng),
                arrival: t,
                duration: 1 + duration.sample(rng) as u32,
            });
            next_id += 1;
        }
    }
    Ok(Trace {
        requests,
        history_slots: spec.history_slots,
        test_slots: spec.test_slots,
    })
}

/// Rescales the request size so that the expected active node demand equals
/// `target` times the total edge-node capacity:
/// `lambda x #edge x E[duration] x size x E[footprint] = target x C_edge`.
pub fn scale_to_utilization(
    spec: &TraceSpec,
    apps: &AppSpec,
    target: f64,
    substrate: &SubstrateNetwork,
) -> Result<TraceSpec, WorkloadError> {
    if !(0.2..=2.0).contains(&target) {
        return Err(WorkloadError::InvalidSpec(format!(
            "utilization target {target} outside [0.2, 2.0]"
        )));
    }
    let edge = substrate.edge_nodes();
    let edge_capacity: f64 = edge.iter().map(|&v| substrate.node(v).capacity).sum();
    let rate = spec.lambda * spec.mmpp.stationary_factor() * edge.len() as f64;
    let denom = rate * spec.duration_mean * apps.mean_footprint();
    if !(denom > 0.0) || !(edge_capacity > 0.0) {
        return Err(WorkloadError::InvalidSpec(
            "utilization undefined without arrivals or edge capacity".into(),
        ));
    }
    let mean = target * edge_capacity / denom;
    let cv = spec.size_std / spec.size_mean;
    Ok(TraceSpec {
        size_mean: mean,
        size_std: mean * cv,
        ..spec.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::topology::{build_topology, Preset, TopologySpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn desk() -> SubstrateNetwork {
        build_topology(&TopologySpec::preset(Preset::Desk10, 0)).unwrap()
    }

    fn small_spec() -> TraceSpec {
        TraceSpec {
            history_slots: 200,
            test_slots: 100,
            seed: 0,
            ..TraceSpec::default()
        }
    }

    #[test]
    fn symmetric_mmpp_mean() {
        let m = MmppSpec {
            high_factor: 1.5,
            low_factor: 0.5,
            p_high_to_low: 0.2,
            p_low_to_high: 0.2,
        };
        // lambda_h = 15, lambda_l = 5 at lambda = 10.
        assert!((10.0 * m.stationary_factor() - 10.0).abs() < 1e-12);
        assert_eq!(TraceSpec::default().lambda, 10.0);
    }

    #[test]
    fn long_run_counts_match_stationary_prediction() {
        // Asymmetric chain so the oracle is not trivially lambda.
        let mmpp = MmppSpec {
            high_factor: 2.0,
            low_factor: 0.5,
            p_high_to_low: 0.1,
            p_low_to_high: 0.05,
        };
        let spec = TraceSpec {
            history_slots: 100_000,
            test_slots: 0,
            lambda: 4.0,
            mmpp,
            zipf_alpha: 0.0,
            ..TraceSpec::default()
        };
        let net = desk();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let trace = gen_mmpp_trace(&spec, 4, &net, &mut rng).unwrap();
        let per_node_slot = trace.requests.len() as f64 / (100_000.0 * 6.0);
        // pi_high = 0.05 / 0.15 = 1/3, mean factor = 2/3 + 1/3 = 1.
        let predicted = 4.0 * (2.0 / 3.0 + 0.5 * 2.0 / 3.0);
        assert!((per_node_slot / predicted - 1.0).abs() < 0.02, "{per_node_slot} vs {predicted}");
    }

    #[test]
    fn sizes_and_durations_match_spec_means() {
        let spec = TraceSpec {
            history_slots: 3000,
            test_slots: 0,
            ..TraceSpec::default()
        };
        let net = desk();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let trace = gen_mmpp_trace(&spec, 4, &net, &mut rng).unwrap();
        let n = trace.requests.len() as f64;
        assert!(n >= 100_000.0);
        let size = trace.requests.iter().map(|r| r.size).sum::<f64>() / n;
        let dur = trace.requests.iter().map(|r| r.duration as f64).sum::<f64>() / n;
        assert!((size / 10.0 - 1.0).abs() < 0.02, "size mean {size}");
        assert!((dur / 10.0 - 1.0).abs() < 0.02, "duration mean {dur}");
    }

    #[test]
    fn origins_are_edge_nodes_and_order_is_strict() {
        let net = desk();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let trace = gen_mmpp_trace(&small_spec(), 4, &net, &mut rng).unwrap();
        let edge = net.edge_nodes();
        assert!(trace.requests.iter().all(|r| edge.contains(&r.origin)));
        for w in trace.requests.windows(2) {
            assert!(w[0].arrival <= w[1].arrival);
            assert!(w[0].id < w[1].id);
        }
    }

    #[test]
    fn deterministic_and_csv_roundtrip() {
        let net = desk();
        let a = gen_mmpp_trace(&small_spec(), 4, &net, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        let b = gen_mmpp_trace(&small_spec(), 4, &net, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        let (mut x, mut y) = (Vec::new(), Vec::new());
        Trace::write_csv(&a.requests, &mut x).unwrap();
        Trace::write_csv(&b.requests, &mut y).unwrap();
        assert_eq!(x, y);
        assert!(x.starts_with(b"request_id,arrival_slot,duration,origin,app,size\n"));
        let back = Trace::read_csv(x.as_slice()).unwrap();
        assert_eq!(back, a.requests);
    }

    #[test]
    fn split_rebases_test_period() {
        let net = desk();
        let trace = gen_mmpp_trace(&small_spec(), 4, &net, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let (history, test) = trace.split();
        assert_eq!(history.len() + test.len(), trace.requests.len());
        assert!(history.iter().all(|r| r.arrival < 200));
        assert!(test.iter().all(|r| r.arrival < 100));
    }

    #[test]
    fn utilization_scaling() {
        let net = desk();
        let apps = AppSpec::default();
        let base = TraceSpec::default();
        for (target, size) in [(0.6, 6.0), (1.0, 10.0), (1.4, 14.0)] {
            let s = scale_to_utilization(&base, &apps, target, &net).unwrap();
            assert!((s.size_mean - size).abs() < 1e-9);
            assert!((s.size_std / s.size_mean - 0.2).abs() < 1e-12);
        }
        assert!(scale_to_utilization(&base, &apps, 0.0, &net).is_err());
        assert!(scale_to_utilization(&base, &apps, 2.5, &net).is_err());
    }

    #[test]
    fn utilization_hand_calculation_on_iris() {
        let net = build_topology(&TopologySpec::preset(Preset::Iris, 0)).unwrap();
        let edge = net.edge_nodes().len() as f64;
        // Little's law: active requests = lambda x duration per node.
        let active_per_node = 10.0 * 10.0;
        let expected = edge * 200_000.0 / (edge * active_per_node * 4.0 * 50.0);
        let s = scale_to_utilization(&TraceSpec::default(), &AppSpec::default(), 1.0, &net).unwrap();
        assert!((s.size_mean - expected).abs() < 1e-9);
    }

    #[test]
    fn zipf_normalization() {
        let w = zipf_weights(4, 1.0);
        assert!((w.iter().sum::<f64>() - 4.0).abs() < 1e-12);
        assert!((w[0] / w[1] - 2.0).abs() < 1e-12);
    }
}
