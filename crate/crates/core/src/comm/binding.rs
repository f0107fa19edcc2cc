use std::net::{Ipv4Addr, SocketAddrV4};

use serde::{Deserialize, Serialize};

use crate::cluster::PodRecord;
use crate::overlay::NodeRecord;

/// Environment variable through which a pod learns its own address.
pub const POD_IP_ENV: &str = "POD_IP";

/// Which address a component binds and advertises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BindingStrategy {
    /// Pods share the node's network namespace and bind its vpn address.
    HostNetwork,
    /// Pods bind their pod address; every send is redirected to the proxy.
    ProxyServer(SocketAddrV4),
    /// Pods bind the pod address handed to them in their environment.
    EnvVariable,
}

impl BindingStrategy {
    pub fn uses_host_network(&self) -> bool {
        matches!(self, BindingStrategy::HostNetwork)
    }
}

pub fn bind_address(strategy: &BindingStrategy, node: &NodeRecord, pod: &PodRecord) -> Ipv4Addr {
    match strategy {
        BindingStrategy::HostNetwork => node.vpn_ip.unwrap_or(pod.pod_ip),
        BindingStrategy::EnvVariable | BindingStrategy::ProxyServer(_) => pod.pod_ip,
    }
}

/// Extra container environment implied by the strategy.
pub fn injected_env(strategy: &BindingStrategy, pod: &PodRecord) -> Vec<(String, String)> {
    match strategy {
        BindingStrategy::EnvVariable => vec![(POD_IP_ENV.to_string(), pod.pod_ip.to_string())],
        _ => Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::{PodPhase, PodRecord, ResourceLimits};
    use crate::framework::ComponentKind;
    use crate::overlay::table1_nodes;

    fn pod(ip: [u8; 4], host_network: bool) -> PodRecord {
        PodRecord {
            uid: "pod-1".into(),
            deployment: "d".into(),
            node: "Nectar1".into(),
            component: ComponentKind::Master,
            phase: PodPhase::Ready,
            pod_ip: Ipv4Addr::from(ip),
            host_network,
            limits: ResourceLimits::default(),
            restarts: 0,
            last_probe_tick: 0,
            consecutive_failures: 0,
            created_seq: 0,
            replaced: false,
        }
    }

    #[test]
    fn host_network_binds_vpn_address() {
        let node = &table1_nodes()[0];
        assert_eq!(bind_address(&BindingStrategy::HostNetwork, node, &pod([192, 0, 0, 1], true)), Ipv4Addr::new(192, 0, 0, 1));
    }

    #[test]
    fn env_variable_binds_pod_address() {
        let node = &table1_nodes()[0];
        let p = pod([10, 42, 0, 7], false);
        assert_eq!(bind_address(&BindingStrategy::EnvVariable, node, &p), Ipv4Addr::new(10, 42, 0, 7));
        assert_eq!(injected_env(&BindingStrategy::EnvVariable, &p), vec![("POD_IP".to_string(), "10.42.0.7".to_string())]);
        assert!(injected_env(&BindingStrategy::HostNetwork, &p).is_empty());
    }

    #[test]
    fn proxy_binds_pod_address() {
        let node = &table1_nodes()[0];
        let strategy = BindingStrategy::ProxyServer("192.0.0.3:7000".parse().unwrap());
        assert_eq!(bind_address(&strategy, node, &pod([10, 42, 0, 9], false)), Ipv4Addr::new(10, 42, 0, 9));
    }
}
