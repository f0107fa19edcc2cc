//! Seeded network model for running components without real sockets.
//!
//! A [`LatencyMatrix`] gives every node pair a round-trip time, a uniform
//! jitter bound and a loss probability. [`SimTransport`] draws per-link
//! delays from it with one ChaCha stream per directed pair and traffic
//! class, and [`VirtualClock`] orders the resulting arrivals.

mod clock;
mod oracle;
mod transport;

use std::collections::{BTreeMap, BTreeSet};
use std::net::Ipv4Addr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use clock::{VirtualClock, ms_to_ns, ns_to_ms};
pub use oracle::{Estimate, Layout, expected_mean_response, expected_response_time, expected_response_time_with};
pub use transport::{Delivery, SimTransport, deliver, stream_seed};

use crate::overlay::{Layer, NodeRecord, table1_nodes};

pub const DEFAULT_SAME_NODE_US: f64 = 20.0;
pub const USER_NODE: &str = "U";

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum SimError {
    #[error("no link between `{0}` and `{1}`")]
    UnknownNodePair(String, String),
    #[error("clock is at {now_ms} ms, cannot go back to {requested_ms} ms")]
    TimeReversal { now_ms: f64, requested_ms: f64 },
    #[error("layout is incomplete: {0}")]
    IncompleteLayout(String),
    #[error("invalid link {a}-{b}: {reason}")]
    InvalidLink { a: String, b: String, reason: String },
    #[error("link {0}-{1} given twice with different values")]
    Asymmetric(String, String),
    #[error("matrix document: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkSpec {
    pub rtt_ms: f64,
    #[serde(default)]
    pub jitter_ms: f64,
    #[serde(default)]
    pub loss: f64,
}

impl LinkSpec {
    pub fn new(rtt_ms: f64, jitter_ms: f64, loss: f64) -> Self {
        Self { rtt_ms, jitter_ms, loss }
    }

    fn check(&self, a: &str, b: &str) -> Result<(), SimError> {
        let bad = |reason: &str| Err(SimError::InvalidLink { a: a.into(), b: b.into(), reason: reason.into() });
        if !(self.rtt_ms.is_finite() && self.rtt_ms >= 0.0) {
            return bad("rtt must be a finite value >= 0");
        }
        if !(self.jitter_ms.is_finite() && self.jitter_ms >= 0.0) {
            return bad("jitter must be a finite value >= 0");
        }
        if !(0.0..=1.0).contains(&self.loss) {
            return bad("loss must be a probability");
        }
        Ok(())
    }
}

fn key(a: &str, b: &str) -> (String, String) {
    if a <= b { (a.to_string(), b.to_string()) } else { (b.to_string(), a.to_string()) }
}

/// Symmetric node-pair link table. Same-node traffic always takes
/// `same_node_us` with no jitter or loss.
#[derive(Debug, Clone, PartialEq)]
pub struct LatencyMatrix {
    links: BTreeMap<(String, String), LinkSpec>,
    pub same_node_us: f64,
}

#[derive(Serialize, Deserialize)]
struct LinkRow {
    a: String,
    b: String,
    #[serde(flatten)]
    spec: LinkSpec,
}

#[derive(Serialize, Deserialize)]
struct MatrixDoc {
    #[serde(default = "default_same_node_us")]
    same_node_us: f64,
    #[serde(default, rename = "link")]
    links: Vec<LinkRow>,
}

fn default_same_node_us() -> f64 {
    DEFAULT_SAME_NODE_US
}

/// Round-trip figures per pair of layers; the user device counts as edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerLatencies {
    pub edge_edge: LinkSpec,
    pub edge_cloud: LinkSpec,
    pub cloud_cloud: LinkSpec,
}

impl Default for LayerLatencies {
    fn default() -> Self {
        Self {
            edge_edge: LinkSpec::new(2.0, 0.2, 0.0),
            edge_cloud: LinkSpec::new(50.0, 5.0, 0.0),
            cloud_cloud: LinkSpec::new(1.0, 0.1, 0.0),
        }
    }
}

impl LayerLatencies {
    /// Random calibration: edge rtt in [1,5], cloud in [0.5,2], wan in
    /// [20,200] ms, each with jitter of a tenth of its rtt.
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut link = |lo: f64, hi: f64| {
            let rtt = rng.random_range(lo..=hi);
            LinkSpec::new(rtt, rtt / 10.0, 0.0)
        };
        let edge_edge = link(1.0, 5.0);
        let cloud_cloud = link(0.5, 2.0);
        let edge_cloud = link(20.0, 200.0);
        Self { edge_edge, edge_cloud, cloud_cloud }
    }

    pub fn jitter_free(mut self) -> Self {
        for l in [&mut self.edge_edge, &mut self.edge_cloud, &mut self.cloud_cloud] {
            l.jitter_ms = 0.0;
            l.loss = 0.0;
        }
        self
    }
}

/// The user's device: an edge machine on the mesh that is not part of the
/// cluster.
pub fn user_node() -> NodeRecord {
    NodeRecord::new(USER_NODE, "User", Layer::Edge, 1, 512).with_vpn_ip(Ipv4Addr::new(192, 0, 0, 6))
}

/// Table 1 nodes plus the user device.
pub fn sim_nodes() -> Vec<NodeRecord> {
    let mut nodes = table1_nodes();
    nodes.push(user_node());
    nodes
}

impl Default for LatencyMatrix {
    fn default() -> Self {
        Self::from_layers(&sim_nodes(), LayerLatencies::default())
    }
}

impl LatencyMatrix {
    pub fn new(same_node_us: f64) -> Self {
        Self { links: BTreeMap::new(), same_node_us }
    }

    pub fn from_layers(nodes: &[NodeRecord], l: LayerLatencies) -> Self {
        let mut m = Self::new(DEFAULT_SAME_NODE_US);
        for (i, a) in nodes.iter().enumerate() {
            for b in &nodes[i + 1..] {
                let spec = match (a.layer, b.layer) {
                    (Layer::Edge, Layer::Edge) => l.edge_edge,
                    (Layer::Cloud, Layer::Cloud) => l.cloud_cloud,
                    _ => l.edge_cloud,
                };
                m.links.insert(key(&a.tag, &b.tag), spec);
            }
        }
        m
    }

    pub fn set(&mut self, a: &str, b: &str, spec: LinkSpec) -> Result<(), SimError> {
        spec.check(a, b)?;
        if a != b {
            self.links.insert(key(a, b), spec);
        }
        Ok(())
    }

    pub fn link(&self, a: &str, b: &str) -> Result<LinkSpec, SimError> {
        if a == b {
            return Ok(LinkSpec::new(2.0 * self.same_node_us / 1000.0, 0.0, 0.0));
        }
        self.links.get(&key(a, b)).copied().ok_or_else(|| SimError::UnknownNodePair(a.into(), b.into()))
    }

    pub fn nodes(&self) -> BTreeSet<&str> {
        self.links.keys().flat_map(|(a, b)| [a.as_str(), b.as_str()]).collect()
    }

    /// Jitter-free one-way delay.
    pub fn one_way_ms(&self, a: &str, b: &str) -> Result<f64, SimError> {
        if a == b {
            return Ok(self.same_node_us / 1000.0);
        }
        Ok(self.link(a, b)?.rtt_ms / 2.0)
    }

    /// One-way delay drawn from `rng`, or `None` when the link loses it.
    pub fn sample<R: Rng + ?Sized>(&self, a: &str, b: &str, rng: &mut R) -> Result<Option<f64>, SimError> {
        if a == b {
            return Ok(Some(self.same_node_us / 1000.0));
        }
        let l = self.link(a, b)?;
        if l.loss > 0.0 && rng.random::<f64>() < l.loss {
            return Ok(None);
        }
        let jitter = if l.jitter_ms > 0.0 { rng.random_range(-l.jitter_ms..=l.jitter_ms) } else { 0.0 };
        Ok(Some((l.rtt_ms / 2.0 + jitter).max(0.0)))
    }

    pub fn without_jitter(&self) -> Self {
        let mut m = self.clone();
        for l in m.links.values_mut() {
            l.jitter_ms = 0.0;
            l.loss = 0.0;
        }
        m
    }

    /// Reads the matrix document: `same_node_us` plus `[[link]]` rows with
    /// `a`, `b`, `rtt_ms` and optional `jitter_ms` and `loss`. A pair may
    /// appear in either order, or in both if the values agree.
    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        let doc: MatrixDoc = toml::from_str(text).map_err(|e| SimError::Parse(e.to_string()))?;
        if !(doc.same_node_us.is_finite() && doc.same_node_us >= 0.0) {
            return Err(SimError::Parse("same_node_us must be >= 0".into()));
        }
        let mut m = Self::new(doc.same_node_us);
        for row in doc.links {
            if row.a == row.b {
                return Err(SimError::InvalidLink { a: row.a, b: row.b, reason: "diagonal is fixed by same_node_us".into() });
            }
            row.spec.check(&row.a, &row.b)?;
            match m.links.get(&key(&row.a, &row.b)) {
                Some(existing) if *existing != row.spec => return Err(SimError::Asymmetric(row.a, row.b)),
                _ => {
                    m.links.insert(key(&row.a, &row.b), row.spec);
                }
            }
        }
        Ok(m)
    }

    pub fn to_toml(&self) -> String {
        let doc = MatrixDoc {
            same_node_us: self.same_node_us,
            links: self.links.iter().map(|((a, b), spec)| LinkRow { a: a.clone(), b: b.clone(), spec: *spec }).collect(),
        };
        toml::to_string(&doc).expect("matrix serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_matrix_follows_layers() {
        let m = LatencyMatrix::default();
        assert_eq!(m.link("D", "E").unwrap().rtt_ms, 2.0);
        assert_eq!(m.link("U", "D").unwrap().rtt_ms, 2.0);
        assert_eq!(m.link("A", "E").unwrap().rtt_ms, 50.0);
        assert_eq!(m.link("B", "A").unwrap().rtt_ms, 1.0);
        assert_eq!(m.one_way_ms("C", "C").unwrap(), 0.02);
        assert_eq!(m.nodes().len(), 6);
    }

    #[test]
    fn toml_round_trip_and_symmetry() {
        let m = LatencyMatrix::default();
        assert_eq!(LatencyMatrix::from_toml(&m.to_toml()).unwrap(), m);

        let text = r#"
            same_node_us = 10
            [[link]]
            a = "X"
            b = "Y"
            rtt_ms = 8
            [[link]]
            a = "Y"
            b = "X"
            rtt_ms = 8
        "#;
        let m = LatencyMatrix::from_toml(text).unwrap();
        assert_eq!(m.link("Y", "X").unwrap(), LinkSpec::new(8.0, 0.0, 0.0));
        assert_eq!(m.one_way_ms("X", "X").unwrap(), 0.01);

        let clash = text.replacen("rtt_ms = 8", "rtt_ms = 9", 1);
        assert!(matches!(LatencyMatrix::from_toml(&clash), Err(SimError::Asymmetric(..))));
    }

    #[test]
    fn rejects_invalid_values() {
        let bad_loss = "[[link]]\na = \"X\"\nb = \"Y\"\nrtt_ms = 1\nloss = 1.5\n";
        assert!(matches!(LatencyMatrix::from_toml(bad_loss), Err(SimError::InvalidLink { .. })));
        let negative = "[[link]]\na = \"X\"\nb = \"Y\"\nrtt_ms = -1\n";
        assert!(matches!(LatencyMatrix::from_toml(negative), Err(SimError::InvalidLink { .. })));
        assert!(matches!(LatencyMatrix::from_toml("same_node_us = \"x\""), Err(SimError::Parse(_))));
        assert!(matches!(LatencyMatrix::default().link("A", "Q"), Err(SimError::UnknownNodePair(..))));
    }

    #[test]
    fn sampled_delay_stays_within_jitter() {
        let m = LatencyMatrix::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let d = m.sample("A", "D", &mut rng).unwrap().unwrap();
            assert!((20.0..=30.0).contains(&d), "{d}");
        }
    }

    #[test]
    fn random_layers_keep_their_ranges() {
        for seed in 0..50 {
            let l = LayerLatencies::random(seed);
            assert!((1.0..=5.0).contains(&l.edge_edge.rtt_ms));
            assert!((0.5..=2.0).contains(&l.cloud_cloud.rtt_ms));
            assert!((20.0..=200.0).contains(&l.edge_cloud.rtt_ms));
            assert!(l.edge_cloud.rtt_ms > l.edge_edge.rtt_ms);
        }
    }
}
