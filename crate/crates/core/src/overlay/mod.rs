//! Full-mesh VPN planning over the node inventory.
//!
//! A [`MeshPlan`] gives every node a private address inside one subnet and
//! lists every other node as a peer. Per-peer configuration files are
//! rendered by [`config`], routing decisions come from [`route`], and the
//! interaction between the mesh and a cluster's pod network is checked in
//! [`conflict`].

pub mod config;
pub mod conflict;
pub mod route;

use std::collections::HashSet;
use std::fmt;
use std::net::Ipv4Addr;

use base64::Engine as _;
use base64::engine::general_purpose::STANDARD as BASE64;
use ipnet::Ipv4Net;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use config::{InterfaceSection, PeerConfig, PeerSection, render_peer_config};
pub use conflict::{ConflictKind, ConflictReport, Remedy, detect_cidr_conflict, reconcile_allowed_ips, replace_cni};
pub use route::{RouteDecision, RoutingTable, route};

pub const DEFAULT_KEEPALIVE_S: u16 = 25;
pub const DEFAULT_BASE_PORT: u16 = 4999;
pub const DEFAULT_SUBNET: &str = "192.0.0.0/24";

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum OverlayError {
    #[error("inventory is empty")]
    EmptyInventory,
    #[error("duplicate node tag `{0}`")]
    DuplicateTag(String),
    #[error("subnet exhausted: {nodes} nodes but only {usable} usable host addresses")]
    SubnetExhausted { nodes: usize, usable: u64 },
    #[error("vpn address {0} assigned to more than one node")]
    DuplicateVpnIp(Ipv4Addr),
    #[error("node `{tag}` has vpn address {ip} outside subnet {subnet}")]
    AddressOutsideSubnet { tag: String, ip: Ipv4Addr, subnet: Ipv4Net },
    #[error("edge node `{0}` must not carry a public address")]
    EdgeWithPublicIp(String),
    #[error("unknown peer `{0}`")]
    UnknownPeer(String),
    #[error("cluster range {cluster} overlaps vpn subnet {subnet}")]
    OverlappingRanges { cluster: Ipv4Net, subnet: Ipv4Net },
    #[error("subnet {0} is too small to reserve a pod range")]
    SubnetTooSmall(Ipv4Net),
    #[error("reserved pod range {range} already holds peer address {ip}")]
    ReservedRangeInUse { range: Ipv4Net, ip: Ipv4Addr },
    #[error("config line {line}: {reason}")]
    ConfigParse { line: usize, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layer {
    Edge,
    Cloud,
}

impl fmt::Display for Layer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Layer::Edge => "edge",
            Layer::Cloud => "cloud",
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeRole {
    Server,
    Agent,
    #[default]
    Unassigned,
}

impl fmt::Display for NodeRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NodeRole::Server => "server",
            NodeRole::Agent => "agent",
            NodeRole::Unassigned => "unassigned",
        })
    }
}

/// One physical or virtual machine in the inventory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub tag: String,
    pub name: String,
    pub layer: Layer,
    pub cpu_cores: u32,
    pub mem_mb: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub public_ip: Option<Ipv4Addr>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vpn_ip: Option<Ipv4Addr>,
    /// WireGuard listen port; `None` means auto-assign.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub port: Option<u16>,
    #[serde(default)]
    pub role: NodeRole,
}

impl NodeRecord {
    pub fn new(tag: &str, name: &str, layer: Layer, cpu_cores: u32, mem_mb: u64) -> Self {
        Self {
            tag: tag.to_string(),
            name: name.to_string(),
            layer,
            cpu_cores,
            mem_mb,
            public_ip: None,
            vpn_ip: None,
            port: None,
            role: NodeRole::Unassigned,
        }
    }

    pub fn with_public_ip(mut self, ip: Ipv4Addr) -> Self {
        self.public_ip = Some(ip);
        self
    }

    pub fn with_vpn_ip(mut self, ip: Ipv4Addr) -> Self {
        self.vpn_ip = Some(ip);
        self
    }

    pub fn cpu_millicores(&self) -> u64 {
        u64::from(self.cpu_cores) * 1000
    }

    pub fn validate(&self) -> Result<(), OverlayError> {
        if self.layer == Layer::Edge && self.public_ip.is_some() {
            return Err(OverlayError::EdgeWithPublicIp(self.tag.clone()));
        }
        Ok(())
    }
}

/// The five-node hybrid environment: three cloud instances with public
/// addresses and two edge VMs without.
pub fn table1_nodes() -> Vec<NodeRecord> {
    vec![
        NodeRecord::new("A", "Nectar1", Layer::Cloud, 16, 64 * 1024)
            .with_public_ip(Ipv4Addr::new(45, 113, 235, 156))
            .with_vpn_ip(Ipv4Addr::new(192, 0, 0, 1)),
        NodeRecord::new("B", "Nectar2", Layer::Cloud, 2, 9 * 1024)
            .with_public_ip(Ipv4Addr::new(45, 113, 232, 199))
            .with_vpn_ip(Ipv4Addr::new(192, 0, 0, 2)),
        NodeRecord::new("C", "Nectar3", Layer::Cloud, 2, 9 * 1024)
            .with_public_ip(Ipv4Addr::new(45, 113, 232, 232))
            .with_vpn_ip(Ipv4Addr::new(192, 0, 0, 3)),
        NodeRecord::new("D", "VM1", Layer::Edge, 1, 512).with_vpn_ip(Ipv4Addr::new(192, 0, 0, 4)),
        NodeRecord::new("E", "VM2", Layer::Edge, 1, 512).with_vpn_ip(Ipv4Addr::new(192, 0, 0, 5)),
    ]
}

pub fn default_subnet() -> Ipv4Net {
    DEFAULT_SUBNET.parse().expect("valid default subnet")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeerSpec {
    pub node: NodeRecord,
    pub private_key: String,
    pub public_key: String,
    pub listen_port: u16,
    pub allowed_cidrs: Vec<Ipv4Net>,
}

impl PeerSpec {
    pub fn tag(&self) -> &str {
        &self.node.tag
    }

    pub fn vpn_ip(&self) -> Ipv4Addr {
        self.node.vpn_ip.expect("planned peers always carry a vpn address")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeshPlan {
    pub subnet: Ipv4Net,
    pub peers: Vec<PeerSpec>,
    pub keepalive_s: u16,
}

impl MeshPlan {
    pub fn peer(&self, tag: &str) -> Result<&PeerSpec, OverlayError> {
        self.peers
            .iter()
            .find(|p| p.tag() == tag)
            .ok_or_else(|| OverlayError::UnknownPeer(tag.to_string()))
    }

    pub fn peer_by_vpn_ip(&self, ip: Ipv4Addr) -> Option<&PeerSpec> {
        self.peers.iter().find(|p| p.vpn_ip() == ip)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &NodeRecord> {
        self.peers.iter().map(|p| &p.node)
    }
}

/// Number of assignable host addresses in `net`.
pub fn usable_hosts(net: &Ipv4Net) -> u64 {
    let size = 1u64 << (32 - u32::from(net.prefix_len()));
    if net.prefix_len() >= 31 { size } else { size - 2 }
}

/// Plans a full mesh with keys drawn from the thread-local generator.
pub fn plan_mesh(nodes: &[NodeRecord], subnet: Ipv4Net, base_port: u16) -> Result<MeshPlan, OverlayError> {
    plan_mesh_with(nodes, subnet, base_port, &mut rand::rng())
}

/// Plans a full mesh: validates the inventory, fills unset vpn addresses
/// sequentially from the subnet and generates one keypair per node.
pub fn plan_mesh_with<R: RngCore + ?Sized>(
    nodes: &[NodeRecord],
    subnet: Ipv4Net,
    base_port: u16,
    rng: &mut R,
) -> Result<MeshPlan, OverlayError> {
    if nodes.is_empty() {
        return Err(OverlayError::EmptyInventory);
    }
    let subnet = subnet.trunc();
    let usable = usable_hosts(&subnet);
    if nodes.len() as u64 > usable {
        return Err(OverlayError::SubnetExhausted { nodes: nodes.len(), usable });
    }

    let mut tags = HashSet::new();
    let mut taken = HashSet::new();
    for node in nodes {
        node.validate()?;
        if !tags.insert(node.tag.as_str()) {
            return Err(OverlayError::DuplicateTag(node.tag.clone()));
        }
        if let Some(ip) = node.vpn_ip {
            if !subnet.contains(&ip) {
                return Err(OverlayError::AddressOutsideSubnet { tag: node.tag.clone(), ip, subnet });
            }
            if !taken.insert(ip) {
                return Err(OverlayError::DuplicateVpnIp(ip));
            }
        }
    }

    let mut free = subnet.hosts().filter(|ip| !taken.contains(ip));
    let mut peers = Vec::with_capacity(nodes.len());
    for (i, node) in nodes.iter().enumerate() {
        let mut node = node.clone();
        let ip = match node.vpn_ip {
            Some(ip) => ip,
            None => free.next().ok_or(OverlayError::SubnetExhausted { nodes: nodes.len(), usable })?,
        };
        node.vpn_ip = Some(ip);
        let (private_key, public_key) = generate_keypair(rng);
        let listen_port = node.port.unwrap_or_else(|| base_port.wrapping_add(i as u16));
        peers.push(PeerSpec {
            node,
            private_key,
            public_key,
            listen_port,
            allowed_cidrs: vec![Ipv4Net::new(ip, 32).expect("/32 is valid")],
        });
    }

    Ok(MeshPlan { subnet, peers, keepalive_s: DEFAULT_KEEPALIVE_S })
}

/// Opaque keypair: 32 random bytes, and a public half derived from it so the
/// two stay paired. Not a real curve25519 key.
pub fn generate_keypair<R: RngCore + ?Sized>(rng: &mut R) -> (String, String) {
    let mut secret = [0u8; 32];
    rng.fill_bytes(&mut secret);
    let public = Sha256::digest(secret);
    (BASE64.encode(secret), BASE64.encode(public))
}

pub(crate) fn net_range(net: &Ipv4Net) -> (u32, u32) {
    (u32::from(net.network()), u32::from(net.broadcast()))
}

pub(crate) fn ranges_intersect(a: &Ipv4Net, b: &Ipv4Net) -> bool {
    let (a0, a1) = net_range(a);
    let (b0, b1) = net_range(b);
    a0 <= b1 && b0 <= a1
}
