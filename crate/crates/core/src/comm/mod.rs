//! Component-to-component messaging.
//!
//! Every message travels as an [`Envelope`]. How a component's address is
//! chosen, and therefore whether the VPN can carry its traffic, depends on
//! the active [`BindingStrategy`]. The [`Fabric`] applies those rules for a
//! concrete mesh and decides, for each send, whether it is delivered,
//! rejected with a routing error, or lost.

mod binding;
mod fabric;
mod proxy;
pub mod wire;

use std::fmt;
use std::net::{Ipv4Addr, SocketAddrV4};

use base64::Engine as _;
use base64::engine::general_purpose::STANDARD as BASE64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub use binding::{BindingStrategy, POD_IP_ENV, bind_address, injected_env};
pub use fabric::{AddressBook, DeliveryResult, Fabric, LinkClass, Transport, send};
pub use proxy::{DefaultRule, ProxyRoutingTable, proxy_forward};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum CommError {
    #[error("no route to {0}")]
    RoutingError(Ipv4Addr),
    #[error("proxy has no route for component `{0}`")]
    NoRoute(ComponentId),
    #[error("envelope carries no target component")]
    MissingTarget,
    #[error("dropped by proxy default rule")]
    DroppedByProxy,
    #[error("nothing listening at {0}")]
    Unreachable(SocketAddrV4),
    #[error("malformed payload: {0}")]
    MalformedPayload(String),
    #[error("frame of {0} bytes exceeds limit")]
    FrameTooLarge(usize),
    #[error("transport: {0}")]
    Transport(String),
}

/// Stable identifier of one framework component instance.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ComponentId(pub String);

impl ComponentId {
    pub fn new(s: impl Into<String>) -> Self {
        Self(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ComponentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ComponentId {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}

/// A component reference as known to its peers: identity plus bound address.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Peer {
    pub id: ComponentId,
    pub addr: SocketAddrV4,
}

impl Peer {
    pub fn new(id: impl Into<ComponentId>, addr: SocketAddrV4) -> Self {
        Self { id: id.into(), addr }
    }
}

impl From<String> for ComponentId {
    fn from(s: String) -> Self {
        Self(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Envelope {
    #[serde(rename = "type")]
    pub msg_type: String,
    pub src: SocketAddrV4,
    pub dst: SocketAddrV4,
    #[serde(rename = "replyTo")]
    pub reply_to: SocketAddrV4,
    #[serde(rename = "cid")]
    pub correlation_id: u64,
    #[serde(rename = "hops")]
    pub hop_count: u32,
    #[serde(serialize_with = "ser_b64", deserialize_with = "de_b64")]
    pub payload: Vec<u8>,
    /// Logical destination component, used by the proxy to pick a route.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<ComponentId>,
}

impl Envelope {
    pub fn new(msg_type: impl Into<String>, src: SocketAddrV4, dst: SocketAddrV4, correlation_id: u64, payload: Vec<u8>) -> Self {
        Self {
            msg_type: msg_type.into(),
            src,
            dst,
            reply_to: src,
            correlation_id,
            hop_count: 0,
            payload,
            target: None,
        }
    }

    pub fn with_target(mut self, target: ComponentId) -> Self {
        self.target = Some(target);
        self
    }
}

fn ser_b64<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&BASE64.encode(bytes))
}

fn de_b64<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
    let text = String::deserialize(d)?;
    BASE64.decode(text.as_bytes()).map_err(serde::de::Error::custom)
}

/// Raw outbound message as produced by a component, before normalization.
#[derive(Debug, Deserialize)]
struct RawMessage {
    #[serde(rename = "type")]
    msg_type: String,
    dst: SocketAddrV4,
    #[serde(default, rename = "replyTo")]
    reply_to: Option<SocketAddrV4>,
    #[serde(default)]
    cid: Option<u64>,
    #[serde(default)]
    target: Option<ComponentId>,
    #[serde(default, deserialize_with = "de_b64_opt")]
    payload: Option<Vec<u8>>,
}

fn de_b64_opt<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<u8>>, D::Error> {
    de_b64(d).map(Some)
}

/// Brings both message families to one envelope shape.
///
/// Messages to fixed components (master, logger) historically omit a reply
/// address, while generic messages carry one. After normalization every
/// envelope has `reply_to` set: kept verbatim when present, otherwise the
/// sender's bound address. `fallback_cid` is used when the raw message has
/// no correlation id.
pub fn normalize_envelope(raw: &[u8], sender_bound: SocketAddrV4, fallback_cid: u64) -> Result<Envelope, CommError> {
    let msg: RawMessage = serde_json::from_slice(raw).map_err(|e| CommError::MalformedPayload(e.to_string()))?;
    Ok(Envelope {
        msg_type: msg.msg_type,
        src: sender_bound,
        dst: msg.dst,
        reply_to: msg.reply_to.unwrap_or(sender_bound),
        correlation_id: msg.cid.unwrap_or(fallback_cid),
        hop_count: 0,
        payload: msg.payload.unwrap_or_default(),
        target: msg.target,
    })
}
