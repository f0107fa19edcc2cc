//! Pod-network versus VPN conflicts.
//!
//! Pods get addresses from the cluster range, which the mesh knows nothing
//! about unless some peer lists it in its allowed ranges. Two remedies
//! exist: widen every peer's allowed ranges to include the cluster range,
//! or move the pod network into a reserved half of the VPN subnet.

use std::net::Ipv4Addr;

use ipnet::Ipv4Net;
use serde::{Deserialize, Serialize};

use super::{MeshPlan, OverlayError, net_range, ranges_intersect};

const MAX_EXAMPLES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Remedy {
    None,
    ExtendAllowedIps,
    ReplaceCni,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConflictKind {
    None,
    /// Part of the cluster range is not in any peer's allowed ranges.
    Unroutable,
    /// The cluster range contains addresses already held by mesh peers.
    OverlapsVpnHosts,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConflictReport {
    pub conflicting_cidr: Ipv4Net,
    pub kind: ConflictKind,
    /// Up to three sample addresses that cannot be delivered (or collide).
    pub unroutable_examples: Vec<Ipv4Addr>,
    /// Preferred remedy; `Remedy::None` when there is no conflict.
    pub remedy: Remedy,
    /// Every applicable remedy, best first.
    pub remedies: Vec<Remedy>,
}

impl ConflictReport {
    pub fn is_conflict(&self) -> bool {
        self.kind != ConflictKind::None
    }
}

/// Merged, sorted, inclusive intervals covered by the union of all peers'
/// allowed ranges.
fn covered_intervals(plan: &MeshPlan) -> Vec<(u32, u32)> {
    let mut spans: Vec<(u32, u32)> = plan.peers.iter().flat_map(|p| p.allowed_cidrs.iter().map(net_range)).collect();
    spans.sort_unstable();
    let mut merged: Vec<(u32, u32)> = Vec::with_capacity(spans.len());
    for (lo, hi) in spans {
        match merged.last_mut() {
            Some(last) if u64::from(lo) <= u64::from(last.1) + 1 => last.1 = last.1.max(hi),
            _ => merged.push((lo, hi)),
        }
    }
    merged
}

/// Inclusive sub-intervals of `[lo, hi]` not covered by `covered`.
fn gaps(lo: u32, hi: u32, covered: &[(u32, u32)]) -> Vec<(u32, u32)> {
    let mut out = Vec::new();
    let mut cursor = u64::from(lo);
    let hi64 = u64::from(hi);
    for &(c0, c1) in covered {
        let (c0, c1) = (u64::from(c0), u64::from(c1));
        if c1 < cursor {
            continue;
        }
        if c0 > hi64 {
            break;
        }
        if c0 > cursor {
            out.push((cursor as u32, (c0 - 1).min(hi64) as u32));
        }
        cursor = c1 + 1;
        if cursor > hi64 {
            return out;
        }
    }
    if cursor <= hi64 {
        out.push((cursor as u32, hi));
    }
    out
}

fn host_bounds(net: &Ipv4Net) -> (u32, u32) {
    let (lo, hi) = net_range(net);
    if net.prefix_len() >= 31 { (lo, hi) } else { (lo + 1, hi - 1) }
}

pub fn detect_cidr_conflict(plan: &MeshPlan, cluster_cidr: Ipv4Net) -> ConflictReport {
    let cluster = cluster_cidr.trunc();
    let in_subnet = ranges_intersect(&cluster, &plan.subnet);

    let mut collisions: Vec<Ipv4Addr> = plan.peers.iter().map(|p| p.vpn_ip()).filter(|ip| cluster.contains(ip)).collect();
    if !collisions.is_empty() {
        collisions.sort();
        collisions.truncate(MAX_EXAMPLES);
        return ConflictReport {
            conflicting_cidr: cluster,
            kind: ConflictKind::OverlapsVpnHosts,
            unroutable_examples: collisions,
            remedy: Remedy::ReplaceCni,
            remedies: vec![Remedy::ReplaceCni],
        };
    }

    let (lo, hi) = net_range(&cluster);
    let holes = gaps(lo, hi, &covered_intervals(plan));
    if holes.is_empty() {
        return ConflictReport {
            conflicting_cidr: cluster,
            kind: ConflictKind::None,
            unroutable_examples: Vec::new(),
            remedy: Remedy::None,
            remedies: Vec::new(),
        };
    }

    // Prefer host addresses as samples; fall back to the network/broadcast
    // address only when nothing else is uncovered.
    let (h0, h1) = host_bounds(&cluster);
    let mut examples = Vec::new();
    for &(g0, g1) in &holes {
        let (a, b) = (g0.max(h0), g1.min(h1));
        let mut ip = u64::from(a);
        while ip <= u64::from(b) && examples.len() < MAX_EXAMPLES {
            examples.push(Ipv4Addr::from(ip as u32));
            ip += 1;
        }
        if examples.len() == MAX_EXAMPLES {
            break;
        }
    }
    if examples.is_empty() {
        examples.push(Ipv4Addr::from(holes[0].0));
    }

    let remedies = if in_subnet { vec![Remedy::ReplaceCni] } else { vec![Remedy::ExtendAllowedIps, Remedy::ReplaceCni] };
    ConflictReport {
        conflicting_cidr: cluster,
        kind: ConflictKind::Unroutable,
        unroutable_examples: examples,
        remedy: remedies[0],
        remedies,
    }
}

/// Adds the cluster range to every peer's allowed ranges. Idempotent.
pub fn reconcile_allowed_ips(plan: &MeshPlan, cluster_cidr: Ipv4Net) -> Result<MeshPlan, OverlayError> {
    let cluster = cluster_cidr.trunc();
    if ranges_intersect(&cluster, &plan.subnet) {
        return Err(OverlayError::OverlappingRanges { cluster, subnet: plan.subnet });
    }
    Ok(extend_all(plan, cluster))
}

fn extend_all(plan: &MeshPlan, range: Ipv4Net) -> MeshPlan {
    let mut plan = plan.clone();
    for peer in &mut plan.peers {
        if !peer.allowed_cidrs.contains(&range) {
            peer.allowed_cidrs.push(range);
        }
    }
    plan
}

/// Moves the pod network into the upper half of the VPN subnet and
/// publishes that half through every peer. Returns the new plan and the
/// pod range the cluster must switch to.
pub fn replace_cni(plan: &MeshPlan) -> Result<(MeshPlan, Ipv4Net), OverlayError> {
    if plan.subnet.prefix_len() >= 30 {
        return Err(OverlayError::SubnetTooSmall(plan.subnet));
    }
    let upper = plan
        .subnet
        .subnets(plan.subnet.prefix_len() + 1)
        .expect("prefix below 32")
        .nth(1)
        .expect("two halves");
    if let Some(ip) = plan.peers.iter().map(|p| p.vpn_ip()).find(|ip| upper.contains(ip)) {
        return Err(OverlayError::ReservedRangeInUse { range: upper, ip });
    }
    Ok((extend_all(plan, upper), upper))
}
