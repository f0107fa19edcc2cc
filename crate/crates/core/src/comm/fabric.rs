use std::collections::HashMap;
use std::net::Ipv4Addr;

use super::{BindingStrategy, CommError, Envelope, ProxyRoutingTable, proxy_forward};
use crate::overlay::{MeshPlan, RoutingTable};

/// Traffic class of a link crossing; transports may keep separate random
/// streams per class so background traffic does not perturb the data plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LinkClass {
    Data,
    Telemetry,
    Control,
}

/// Moves bytes between two nodes. Returns the one-way latency in
/// milliseconds, or `None` when the link lost the envelope.
pub trait Transport {
    fn carry(&mut self, from: &str, to: &str, class: LinkClass) -> Result<Option<f64>, CommError>;
}

#[derive(Debug, Clone, PartialEq)]
pub enum DeliveryResult {
    /// `links` counts node-to-node crossings, including local ones.
    Delivered { latency_ms: f64, links: u32 },
    RoutingError(CommError),
    Dropped,
}

impl DeliveryResult {
    pub fn is_delivered(&self) -> bool {
        matches!(self, DeliveryResult::Delivered { .. })
    }
}

/// Which node owns which address: vpn addresses and pod addresses alike.
#[derive(Debug, Clone, Default)]
pub struct AddressBook {
    hosts: HashMap<Ipv4Addr, String>,
}

impl AddressBook {
    pub fn from_plan(plan: &MeshPlan) -> Self {
        let mut book = Self::default();
        for peer in &plan.peers {
            book.insert(peer.vpn_ip(), peer.tag());
        }
        book
    }

    pub fn insert(&mut self, ip: Ipv4Addr, node: &str) {
        self.hosts.insert(ip, node.to_string());
    }

    pub fn remove(&mut self, ip: Ipv4Addr) {
        self.hosts.remove(&ip);
    }

    pub fn node_of(&self, ip: Ipv4Addr) -> Option<&str> {
        self.hosts.get(&ip).map(String::as_str)
    }
}

/// The network as seen by components: mesh routes, address ownership, the
/// binding strategy and, for the proxy pattern, the proxy's routing table.
#[derive(Debug, Clone)]
pub struct Fabric {
    plan: MeshPlan,
    routes: RoutingTable,
    pub strategy: BindingStrategy,
    pub book: AddressBook,
    pub proxy: ProxyRoutingTable,
}

impl Fabric {
    pub fn new(plan: MeshPlan, strategy: BindingStrategy) -> Self {
        let routes = RoutingTable::from_plan(&plan);
        let book = AddressBook::from_plan(&plan);
        Self { plan, routes, strategy, book, proxy: ProxyRoutingTable::default() }
    }

    pub fn plan(&self) -> &MeshPlan {
        &self.plan
    }

    pub fn set_plan(&mut self, plan: MeshPlan) {
        self.routes = RoutingTable::from_plan(&plan);
        for peer in &plan.peers {
            self.book.insert(peer.vpn_ip(), peer.tag());
        }
        self.plan = plan;
    }

    /// Whether a component on `from_node` could reach `ip` at all.
    pub fn reachable(&self, from_node: &str, ip: Ipv4Addr) -> bool {
        match self.book.node_of(ip) {
            Some(node) if node == from_node => true,
            Some(_) => self.routes.lookup(ip).is_some(),
            None => false,
        }
    }

    fn leg<T: Transport + ?Sized>(&self, transport: &mut T, from: &str, ip: Ipv4Addr, class: LinkClass) -> Result<Option<(f64, String)>, CommError> {
        let to = self.book.node_of(ip).ok_or(CommError::RoutingError(ip))?.to_string();
        if to != from && self.routes.lookup(ip).is_none() {
            return Err(CommError::RoutingError(ip));
        }
        Ok(transport.carry(from, &to, class)?.map(|ms| (ms, to)))
    }

    /// Sends `env` from `from_node`. Under the proxy pattern the envelope is
    /// carried to the proxy, rewritten there and carried on, so `env` comes
    /// back with the final destination and hop count. Control traffic never
    /// takes the proxy detour.
    pub fn send<T: Transport + ?Sized>(&self, transport: &mut T, from_node: &str, env: &mut Envelope, class: LinkClass) -> DeliveryResult {
        let result = match (self.strategy, class) {
            (BindingStrategy::ProxyServer(proxy), LinkClass::Data | LinkClass::Telemetry) => {
                self.leg(transport, from_node, *proxy.ip(), class).and_then(|first| match first {
                    None => Ok(None),
                    Some((l1, proxy_node)) => {
                        *env = proxy_forward(&self.proxy, env)?;
                        Ok(self.leg(transport, &proxy_node, *env.dst.ip(), class)?.map(|(l2, _)| (l1 + l2, 2)))
                    }
                })
            }
            _ => self.leg(transport, from_node, *env.dst.ip(), class).map(|r| r.map(|(l, _)| (l, 1))),
        };
        match result {
            Ok(Some((latency_ms, links))) => DeliveryResult::Delivered { latency_ms, links },
            Ok(None) => DeliveryResult::Dropped,
            Err(e @ CommError::RoutingError(_)) | Err(e @ CommError::NoRoute(_)) => DeliveryResult::RoutingError(e),
            Err(CommError::DroppedByProxy) => DeliveryResult::Dropped,
            Err(e) => DeliveryResult::RoutingError(e),
        }
    }
}

/// Sends one envelope across `fabric`, resolving the sender's node from the
/// envelope's source address.
pub fn send<T: Transport + ?Sized>(transport: &mut T, fabric: &Fabric, env: &mut Envelope) -> DeliveryResult {
    let Some(from) = fabric.book.node_of(*env.src.ip()).map(str::to_string) else {
        return DeliveryResult::RoutingError(CommError::RoutingError(*env.src.ip()));
    };
    fabric.send(transport, &from, env, LinkClass::Data)
}
