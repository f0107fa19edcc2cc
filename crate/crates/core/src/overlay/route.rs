use std::collections::HashMap;
use std::net::Ipv4Addr;


use super::{MeshPlan, OverlayError};

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum RouteDecision {
    Deliverable(String),
    Unroutable,
}

impl RouteDecision {
    pub fn is_deliverable(&self) -> bool {
        matches!(self, RouteDecision::Deliverable(_))
    }
}

/// Longest-prefix-match table over every peer's allowed ranges.
///
/// One hash map per prefix length, probed from /32 down. When two peers
/// claim the same prefix the lexicographically lowest tag keeps it.
#[derive(Debug, Clone)]
pub struct RoutingTable {
    by_len: Vec<HashMap<u32, String>>,
    lengths: Vec<u8>,
}

fn mask(len: u8) -> u32 {
    if len == 0 { 0 } else { u32::MAX << (32 - u32::from(len)) }
}

impl RoutingTable {
    pub fn from_plan(plan: &MeshPlan) -> Self {
        let mut peers: Vec<_> = plan.peers.iter().collect();
        peers.sort_by(|a, b| a.tag().cmp(b.tag()));
        let mut by_len = vec![HashMap::new(); 33];
        for peer in peers {
            for net in &peer.allowed_cidrs {
                let key = u32::from(net.network()) & mask(net.prefix_len());
                by_len[usize::from(net.prefix_len())].entry(key).or_insert_with(|| peer.tag().to_string());
            }
        }
        let mut lengths: Vec<u8> = (0..=32u8).filter(|&l| !by_len[usize::from(l)].is_empty()).collect();
        lengths.reverse();
        Self { by_len, lengths }
    }

    pub fn lookup(&self, dst: Ipv4Addr) -> Option<&str> {
        let addr = u32::from(dst);
        self.lengths
            .iter()
            .find_map(|&len| self.by_len[usize::from(len)].get(&(addr & mask(len))))
            .map(String::as_str)
    }
}

/// Decides whether `dst_ip` is reachable over the mesh from `src_tag`.
pub fn route(plan: &MeshPlan, src_tag: &str, dst_ip: Ipv4Addr) -> Result<RouteDecision, OverlayError> {
    plan.peer(src_tag)?;
    Ok(match RoutingTable::from_plan(plan).lookup(dst_ip) {
        Some(tag) => RouteDecision::Deliverable(tag.to_string()),
        None => RouteDecision::Unroutable,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::overlay::{DEFAULT_BASE_PORT, default_subnet, plan_mesh, reconcile_allowed_ips, table1_nodes};

    fn plan() -> MeshPlan {
        plan_mesh(&table1_nodes(), default_subnet(), DEFAULT_BASE_PORT).unwrap()
    }

    #[test]
    fn vpn_addresses_route_to_their_owner() {
        let plan = plan();
        assert_eq!(route(&plan, "A", Ipv4Addr::new(192, 0, 0, 4)).unwrap(), RouteDecision::Deliverable("D".into()));
        assert_eq!(route(&plan, "A", Ipv4Addr::new(8, 8, 8, 8)).unwrap(), RouteDecision::Unroutable);
        assert_eq!(route(&plan, "Z", Ipv4Addr::new(8, 8, 8, 8)).unwrap_err(), OverlayError::UnknownPeer("Z".into()));
    }

    #[test]
    fn pod_range_routes_after_reconcile() {
        let cidr: ipnet::Ipv4Net = "10.42.0.0/16".parse().unwrap();
        let plan = plan();
        assert_eq!(route(&plan, "A", Ipv4Addr::new(10, 42, 1, 3)).unwrap(), RouteDecision::Unroutable);
        let plan = reconcile_allowed_ips(&plan, cidr).unwrap();
        // equal /16 claims from every peer: lowest tag wins
        assert_eq!(route(&plan, "E", Ipv4Addr::new(10, 42, 1, 3)).unwrap(), RouteDecision::Deliverable("A".into()));
        // vpn /32s are unaffected
        assert_eq!(route(&plan, "E", Ipv4Addr::new(192, 0, 0, 3)).unwrap(), RouteDecision::Deliverable("C".into()));
    }

    #[test]
    fn longest_prefix_wins_over_shorter() {
        let mut plan = plan();
        plan.peers[0].allowed_cidrs.push("10.0.0.0/8".parse().unwrap());
        plan.peers[4].allowed_cidrs.push("10.1.0.0/16".parse().unwrap());
        let table = RoutingTable::from_plan(&plan);
        assert_eq!(table.lookup(Ipv4Addr::new(10, 1, 2, 3)), Some("E"));
        assert_eq!(table.lookup(Ipv4Addr::new(10, 2, 2, 3)), Some("A"));
        assert_eq!(table.lookup(Ipv4Addr::new(11, 0, 0, 1)), None);
    }

    #[test]
    fn default_route_matches_everything() {
        let mut plan = plan();
        plan.peers[2].allowed_cidrs.push("0.0.0.0/0".parse().unwrap());
        assert_eq!(route(&plan, "A", Ipv4Addr::new(8, 8, 8, 8)).unwrap(), RouteDecision::Deliverable("C".into()));
    }
}
