//! Random application sets.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::WorkloadError;
use crate::model::{
    AppId, AppKind, Application, EfficiencyMap, Eta, SubstrateNetwork, VNodeId, VirtualLink,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AppSpec {
    /// One application is generated per entry.
    pub kinds: Vec<AppKind>,
    pub vnf_min: u16,
    pub vnf_max: u16,
    pub element_mean: f64,
    pub element_std: f64,
    /// Size multiplier of the link leaving the accelerator VNF.
    pub accelerator_factor: f64,
}

impl Default for AppSpec {
    fn default() -> Self {
        AppSpec {
            kinds: vec![AppKind::Chain, AppKind::Chain, AppKind::Tree, AppKind::Accelerator],
            vnf_min: 3,
            vnf_max: 5,
            element_mean: 50.0,
            element_std: 30.0,
            accelerator_factor: 0.3,
        }
    }
}

impl AppSpec {
    /// Nominal expected node footprint `E[#VNF] x element mean`, used to
    /// convert a utilization target into a request size. Truncating element
    /// sizes at zero raises the true mean of N(50, 30) to about 53.1; the
    /// nominal value is kept so that 60-140% maps to sizes 6-14.
    pub fn mean_footprint(&self) -> f64 {
        (self.vnf_min as f64 + self.vnf_max as f64) / 2.0 * self.element_mean
    }
}

/// A draw of `N(mean, std)` conditioned on being positive, by rejection.
/// The mean must be positive so the loop ends quickly.
pub(crate) fn positive_normal(normal: &Normal<f64>, rng: &mut impl Rng) -> f64 {
    loop {
        let v = normal.sample(rng);
        if v > 0.0 {
            return v;
        }
    }
}

fn chain_links(k: u16) -> Vec<(u16, u16)> {
    (0..k).map(|i| (i, i + 1)).collect()
}

/// `root -> v1`, then two branches below `v1` splitting the remaining VNFs.
fn tree_links(k: u16) -> Vec<(u16, u16)> {
    let mut links = vec![(0, 1)];
    let rest = k - 1;
    let left = rest.div_ceil(2);
    let mut prev = 1;
    for v in 2..2 + left {
        links.push((prev, v));
        prev = v;
    }
    prev = 1;
    for v in 2 + left..=k {
        links.push((prev, v));
        prev = v;
    }
    links
}

pub fn gen_applications(
    spec: &AppSpec,
    substrate: &SubstrateNetwork,
    rng: &mut impl Rng,
) -> Result<Vec<Application>, WorkloadError> {
    if spec.vnf_min < 1 || spec.vnf_min > spec.vnf_max {
        return Err(WorkloadError::InvalidSpec(format!(
            "VNF count range [{}, {}]",
            spec.vnf_min, spec.vnf_max
        )));
    }
    if !(spec.element_mean > 0.0) {
        return Err(WorkloadError::InvalidSpec(format!("element size mean {}", spec.element_mean)));
    }
    let normal = Normal::new(spec.element_mean, spec.element_std)
        .map_err(|e| WorkloadError::InvalidSpec(format!("element size distribution: {e}")))?;
    let mut apps = Vec::with_capacity(spec.kinds.len());
    for (i, &kind) in spec.kinds.iter().enumerate() {
        let id = AppId(i as u32);
        let mut k = rng.random_range(spec.vnf_min..=spec.vnf_max);
        if kind == AppKind::Tree {
            k = k.max(3);
        }
        let shape = match kind {
            AppKind::Tree => tree_links(k),
            _ => chain_links(k),
        };
        let node_sizes: Vec<f64> = std::iter::once(0.0)
            .chain((0..k).map(|_| positive_normal(&normal, rng)))
            .collect();
        let mut links: Vec<VirtualLink> = shape
            .iter()
            .map(|&(p, c)| VirtualLink {
                parent: VNodeId(p),
                child: VNodeId(c),
                size: positive_normal(&normal, rng),
            })
            .collect();
        let mut efficiency = EfficiencyMap::default();
        match kind {
            AppKind::Accelerator => {
                // A chain VNF that has a successor.
                let acc = rng.random_range(1..k.max(2));
                let downstream = links
                    .iter_mut()
                    .find(|l| l.parent == VNodeId(acc))
                    .expect("chain VNF below the tail has a successor");
                downstream.size *= spec.accelerator_factor;
            }
            AppKind::Gpu => {
                let gpu = VNodeId(rng.random_range(1..=k));
                for n in substrate.nodes().iter().filter(|n| !n.gpu) {
                    efficiency.set_node(gpu, n.id, Eta::FORBIDDEN);
                }
            }
            _ => {}
        }
        let name = format!("{}-{}", format!("{kind:?}").to_lowercase(), i);
        apps.push(Application::new(id, name, kind, node_sizes, links, efficiency)?);
    }
    Ok(apps)
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

    #[test]
    fn default_mix_shapes() {
        let net = desk();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let apps = gen_applications(&AppSpec::default(), &net, &mut rng).unwrap();
            assert_eq!(apps.len(), 4);
            for app in &apps {
                assert_eq!(app.node_size(VNodeId::ROOT), 0.0);
                let vnfs = app.node_count() - 1;
                assert!((3..=5).contains(&vnfs));
                assert!(app.node_sizes().iter().skip(1).all(|&s| s > 0.0));
            }
            let tree = &apps[2];
            assert_eq!(tree.child_links(VNodeId(1)).len(), 2);
        }
    }

    #[test]
    fn tree_shapes() {
        assert_eq!(tree_links(3), vec![(0, 1), (1, 2), (1, 3)]);
        assert_eq!(tree_links(5), vec![(0, 1), (1, 2), (2, 3), (1, 4), (4, 5)]);
    }

    #[test]
    fn accelerator_scales_one_downstream_link() {
        let net = desk();
        let spec = AppSpec {
            kinds: vec![AppKind::Accelerator],
            element_std: 0.0,
            ..AppSpec::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let app = &gen_applications(&spec, &net, &mut rng).unwrap()[0];
        let scaled: Vec<_> = app.links().iter().filter(|l| l.size != 50.0).collect();
        assert_eq!(scaled.len(), 1);
        assert!((scaled[0].size - 0.3 * 50.0).abs() < 1e-12);
        assert_ne!(scaled[0].parent, VNodeId::ROOT);
    }

    #[test]
    fn gpu_vnf_forbidden_off_gpu_nodes() {
        let net = desk();
        let spec = AppSpec {
            kinds: vec![AppKind::Gpu],
            ..AppSpec::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let app = &gen_applications(&spec, &net, &mut rng).unwrap()[0];
        let forbidden: Vec<_> = app
            .vnfs()
            .filter(|&q| net.nodes().iter().any(|n| app.node_eta(q, n.id).is_forbidden()))
            .collect();
        assert_eq!(forbidden.len(), 1);
        for n in net.nodes() {
            assert_eq!(app.node_eta(forbidden[0], n.id).is_forbidden(), !n.gpu);
        }
    }

    #[test]
    fn element_size_parameters() {
        let spec = AppSpec::default();
        assert_eq!((spec.element_mean, spec.element_std), (50.0, 30.0));
        assert_eq!(spec.mean_footprint(), 200.0);
    }

    #[test]
    fn draws_are_positive_with_truncated_mean() {
        // Midpoint rule for the mean of N(50, 30) above zero.
        let (mu, sd) = (50.0, 30.0);
        let pdf = |x: f64| (-(x - mu) * (x - mu) / (2.0 * sd * sd)).exp();
        let h = 1e-3;
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..(350.0 / h) as usize {
            let x = (i as f64 + 0.5) * h;
            num += x * pdf(x);
            den += pdf(x);
        }
        let truth = num / den;
        assert!((truth - 53.13).abs() < 0.01);

        let normal = Normal::new(mu, sd).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 200_000;
        let draws: Vec<f64> = (0..n).map(|_| positive_normal(&normal, &mut rng)).collect();
        assert!(draws.iter().all(|&v| v > 0.0));
        let mean = draws.iter().sum::<f64>() / n as f64;
        // Standard error is about 28 / sqrt(2e5) = 0.06.
        assert!((mean - truth).abs() < 0.3, "{mean} vs {truth}");
    }
}
