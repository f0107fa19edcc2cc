use std::collections::BTreeMap;
use std::net::SocketAddrV4;

use serde::{Deserialize, Serialize};

use super::{CommError, ComponentId, Envelope};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DefaultRule {
    Drop,
    Forward(SocketAddrV4),
}

/// Component id to reachable address, as held by the proxy.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProxyRoutingTable {
    pub entries: BTreeMap<ComponentId, SocketAddrV4>,
    pub default: Option<DefaultRule>,
}

impl ProxyRoutingTable {
    pub fn insert(&mut self, id: ComponentId, addr: SocketAddrV4) -> Option<SocketAddrV4> {
        self.entries.insert(id, addr)
    }

    pub fn remove(&mut self, id: &ComponentId) -> Option<SocketAddrV4> {
        self.entries.remove(id)
    }
}

/// Rewrites the destination of `env` from the routing table. Source and
/// correlation id are preserved; the hop count goes up by one.
pub fn proxy_forward(table: &ProxyRoutingTable, env: &Envelope) -> Result<Envelope, CommError> {
    let target = env.target.as_ref().ok_or(CommError::MissingTarget)?;
    let dst = match (table.entries.get(target), table.default) {
        (Some(addr), _) => *addr,
        (None, Some(DefaultRule::Forward(addr))) => addr,
        (None, Some(DefaultRule::Drop)) => return Err(CommError::DroppedByProxy),
        (None, None) => return Err(CommError::NoRoute(target.clone())),
    };
    let mut out = env.clone();
    out.dst = dst;
    out.hop_count += 1;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env_to(target: &str) -> Envelope {
        Envelope::new("task_result", "10.42.0.5:5003".parse().unwrap(), "10.42.0.2:5001".parse().unwrap(), 41, vec![1, 2])
            .with_target(target.into())
    }

    fn table() -> ProxyRoutingTable {
        let mut t = ProxyRoutingTable::default();
        t.insert("master".into(), "192.0.0.1:5001".parse().unwrap());
        t
    }

    #[test]
    fn rewrites_destination_only() {
        let env = env_to("master");
        let out = proxy_forward(&table(), &env).unwrap();
        assert_eq!(out.dst, "192.0.0.1:5001".parse().unwrap());
        assert_eq!(out.hop_count, 1);
        assert_eq!(out.src, env.src);
        assert_eq!(out.correlation_id, 41);
        assert_eq!(out.payload, env.payload);
    }

    #[test]
    fn unknown_target_without_default() {
        assert_eq!(proxy_forward(&table(), &env_to("ghost")).unwrap_err(), CommError::NoRoute("ghost".into()));
        let mut untargeted = env_to("master");
        untargeted.target = None;
        assert_eq!(proxy_forward(&table(), &untargeted).unwrap_err(), CommError::MissingTarget);
    }

    #[test]
    fn default_rules() {
        let mut t = table();
        t.default = Some(DefaultRule::Drop);
        assert_eq!(proxy_forward(&t, &env_to("ghost")).unwrap_err(), CommError::DroppedByProxy);
        t.default = Some(DefaultRule::Forward("192.0.0.9:1".parse().unwrap()));
        assert_eq!(proxy_forward(&t, &env_to("ghost")).unwrap().dst, "192.0.0.9:1".parse().unwrap());
    }

    #[test]
    fn chained_proxies_count_each_hop() {
        let once = proxy_forward(&table(), &env_to("master")).unwrap();
        let twice = proxy_forward(&table(), &once).unwrap();
        assert_eq!(twice.hop_count, 2);
    }
}
