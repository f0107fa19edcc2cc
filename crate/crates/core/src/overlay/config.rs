//! WireGuard-style INI peer configuration.

use std::fmt;
use std::net::{Ipv4Addr, SocketAddrV4};

use ipnet::Ipv4Net;

use super::{MeshPlan, OverlayError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InterfaceSection {
    pub private_key: String,
    /// The node's vpn address with the mesh subnet's prefix length.
    pub address: Ipv4Net,
    pub listen_port: u16,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PeerSection {
    pub public_key: String,
    pub allowed_ips: Vec<Ipv4Net>,
    pub endpoint: Option<SocketAddrV4>,
    pub persistent_keepalive: Option<u16>,
}

/// One node's view of the mesh, as written to `<tag>.conf`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PeerConfig {
    pub interface: InterfaceSection,
    pub peers: Vec<PeerSection>,
}

impl PeerConfig {
    pub fn from_plan(plan: &MeshPlan, tag: &str) -> Result<Self, OverlayError> {
        let me = plan.peer(tag)?;
        let interface = InterfaceSection {
            private_key: me.private_key.clone(),
            address: Ipv4Net::new(me.vpn_ip(), plan.subnet.prefix_len()).expect("prefix from a valid subnet"),
            listen_port: me.listen_port,
        };
        let peers = plan
            .peers
            .iter()
            .filter(|p| p.tag() != tag)
            .map(|p| PeerSection {
                public_key: p.public_key.clone(),
                allowed_ips: p.allowed_cidrs.clone(),
                endpoint: p.node.public_ip.map(|ip| SocketAddrV4::new(ip, p.listen_port)),
                persistent_keepalive: Some(plan.keepalive_s),
            })
            .collect();
        Ok(Self { interface, peers })
    }

    pub fn parse(text: &str) -> Result<Self, OverlayError> {
        enum Section {
            None,
            Interface,
            Peer,
        }
        let mut section = Section::None;
        let mut private_key = None;
        let mut address = None;
        let mut listen_port = None;
        let mut seen_interface = false;
        let mut peers: Vec<PeerSection> = Vec::new();

        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let err = |reason: String| OverlayError::ConfigParse { line: line_no, reason };
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if line.starts_with('[') {
                match line.to_ascii_lowercase().as_str() {
                    "[interface]" => {
                        if seen_interface {
                            return Err(err("duplicate [Interface] section".into()));
                        }
                        seen_interface = true;
                        section = Section::Interface;
                    }
                    "[peer]" => {
                        peers.push(PeerSection {
                            public_key: String::new(),
                            allowed_ips: Vec::new(),
                            endpoint: None,
                            persistent_keepalive: None,
                        });
                        section = Section::Peer;
                    }
                    other => return Err(err(format!("unknown section {other}"))),
                }
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| err(format!("expected `Key = Value`, got `{line}`")))?;
            let key = key.trim().to_ascii_lowercase();
            let value = value.trim();
            match section {
                Section::None => return Err(err("key outside of any section".into())),
                Section::Interface => match key.as_str() {
                    "privatekey" => private_key = Some(value.to_string()),
                    "address" => address = Some(value.parse::<Ipv4Net>().map_err(|e| err(e.to_string()))?),
                    "listenport" => listen_port = Some(value.parse::<u16>().map_err(|e| err(e.to_string()))?),
                    _ => {}
                },
                Section::Peer => {
                    let peer = peers.last_mut().expect("peer section opened");
                    match key.as_str() {
                        "publickey" => peer.public_key = value.to_string(),
                        "allowedips" => {
                            for cidr in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                                peer.allowed_ips.push(cidr.parse().map_err(|e: ipnet::AddrParseError| err(e.to_string()))?);
                            }
                        }
                        "endpoint" => peer.endpoint = Some(value.parse().map_err(|e: std::net::AddrParseError| err(e.to_string()))?),
                        "persistentkeepalive" => {
                            peer.persistent_keepalive = Some(value.parse().map_err(|e: std::num::ParseIntError| err(e.to_string()))?)
                        }
                        _ => {}
                    }
                }
            }
        }

        let missing = |what: &str| OverlayError::ConfigParse { line: 0, reason: format!("missing {what}") };
        if !seen_interface {
            return Err(missing("[Interface] section"));
        }
        for peer in &peers {
            if peer.public_key.is_empty() {
                return Err(missing("PublicKey in [Peer]"));
            }
        }
        Ok(Self {
            interface: InterfaceSection {
                private_key: private_key.ok_or_else(|| missing("PrivateKey"))?,
                address: address.ok_or_else(|| missing("Address"))?,
                listen_port: listen_port.ok_or_else(|| missing("ListenPort"))?,
            },
            peers,
        })
    }

    pub fn vpn_ip(&self) -> Ipv4Addr {
        self.interface.address.addr()
    }
}

impl fmt::Display for PeerConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "[Interface]")?;
        writeln!(f, "PrivateKey = {}", self.interface.private_key)?;
        writeln!(f, "Address = {}", self.interface.address)?;
        writeln!(f, "ListenPort = {}", self.interface.listen_port)?;
        for peer in &self.peers {
            writeln!(f)?;
            writeln!(f, "[Peer]")?;
            writeln!(f, "PublicKey = {}", peer.public_key)?;
            let allowed: Vec<String> = peer.allowed_ips.iter().map(ToString::to_string).collect();
            writeln!(f, "AllowedIPs = {}", allowed.join(", "))?;
            if let Some(endpoint) = peer.endpoint {
                writeln!(f, "Endpoint = {endpoint}")?;
            }
            if let Some(keepalive) = peer.persistent_keepalive {
                writeln!(f, "PersistentKeepalive = {keepalive}")?;
            }
        }
        Ok(())
    }
}

pub fn render_peer_config(plan: &MeshPlan, tag: &str) -> Result<String, OverlayError> {
    Ok(PeerConfig::from_plan(plan, tag)?.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::overlay::{DEFAULT_BASE_PORT, default_subnet, plan_mesh, table1_nodes};

    fn table1_plan() -> MeshPlan {
        plan_mesh(&table1_nodes(), default_subnet(), DEFAULT_BASE_PORT).unwrap()
    }

    #[test]
    fn peer_a_lists_four_peers_and_edges_have_no_endpoint() {
        let plan = table1_plan();
        let text = render_peer_config(&plan, "A").unwrap();
        assert_eq!(text.matches("[Peer]").count(), 4);
        assert_eq!(text.matches("[Interface]").count(), 1);
        assert_eq!(text.matches("Endpoint = ").count(), 2);
        assert!(text.contains("Endpoint = 45.113.232.199:5000"));
        assert!(text.contains("Address = 192.0.0.1/24"));
        assert!(text.contains("ListenPort = 4999"));

        let cfg = PeerConfig::parse(&text).unwrap();
        let d = plan.peer("D").unwrap();
        let d_section = cfg.peers.iter().find(|p| p.public_key == d.public_key).unwrap();
        assert_eq!(d_section.endpoint, None);
        assert_eq!(d_section.persistent_keepalive, Some(25));
    }

    #[test]
    fn field_names_are_exact() {
        let text = render_peer_config(&table1_plan(), "D").unwrap();
        for key in ["PrivateKey = ", "Address = ", "ListenPort = ", "PublicKey = ", "AllowedIPs = ", "Endpoint = ", "PersistentKeepalive = "] {
            assert!(text.contains(key), "missing {key}");
        }
    }

    #[test]
    fn single_peer_renders_interface_only() {
        let plan = plan_mesh(&table1_nodes()[..1], default_subnet(), DEFAULT_BASE_PORT).unwrap();
        let text = render_peer_config(&plan, "A").unwrap();
        assert!(text.starts_with("[Interface]\n"));
        assert!(!text.contains("[Peer]"));
    }

    #[test]
    fn unknown_peer() {
        assert_eq!(render_peer_config(&table1_plan(), "Z").unwrap_err(), OverlayError::UnknownPeer("Z".into()));
    }

    #[test]
    fn parse_is_whitespace_and_case_tolerant() {
        let text = "# generated\n[interface]\n  privatekey=abc \nAddress=192.0.0.9/24\nListenPort = 51820\n\n[Peer]\nPublicKey = k\nAllowedIPs = 192.0.0.1/32,10.42.0.0/16\n";
        let cfg = PeerConfig::parse(text).unwrap();
        assert_eq!(cfg.interface.private_key, "abc");
        assert_eq!(cfg.vpn_ip(), Ipv4Addr::new(192, 0, 0, 9));
        assert_eq!(cfg.peers[0].allowed_ips.len(), 2);
        assert_eq!(cfg.peers[0].persistent_keepalive, None);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = PeerConfig::parse("[Interface]\nPrivateKey = a\nAddress = nope\n").unwrap_err();
        assert!(matches!(err, OverlayError::ConfigParse { line: 3, .. }));
        assert!(PeerConfig::parse("PrivateKey = a\n").is_err());
        assert!(PeerConfig::parse("[Interface]\nPrivateKey = a\nAddress = 10.0.0.1/24\n").is_err());
        assert!(PeerConfig::parse("[Interface]\nPrivateKey = a\nAddress = 10.0.0.1/24\nListenPort = 1\n[Peer]\n").is_err());
    }
}
