//! The resource-management plane: Master, Actor, TaskExecutor,
//! RemoteLogger and User.
//!
//! Components are plain state machines. They receive envelopes one at a
//! time through [`Component::handle`] and act on the world only through a
//! [`Context`], so the same code runs over the simulated network and over
//! real sockets.

mod actor;
mod args;
mod logger;
mod master;
mod scheduler;
mod user;

use std::any::Any;
use std::fmt;
use std::net::SocketAddrV4;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use actor::{Actor, TaskExecutor};
pub use args::LaunchArgs;
pub use logger::{EventKind, LogRecord, LogStore, ProfileEvent, RemoteLogger, read_log};
pub use master::{Master, PlacementPlan, PlacementRequest, RegistrationRecord};
pub use scheduler::{SchedulerPolicy, SchedulerState};
pub use user::{Completed, User};

use crate::apps::AppError;
use crate::comm::{CommError, ComponentId, Envelope, LinkClass, Peer};

pub const MASTER_ID: &str = "master";
pub const LOGGER_ID: &str = "logger";
pub const USER_ID: &str = "user";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ComponentKind {
    Master,
    Actor,
    RemoteLogger,
    TaskExecutor,
    User,
}

impl ComponentKind {
    pub const ALL: [ComponentKind; 5] =
        [ComponentKind::Master, ComponentKind::Actor, ComponentKind::RemoteLogger, ComponentKind::TaskExecutor, ComponentKind::User];

    /// Guesses the kind from a free-form name such as `fogbus2-master`.
    pub fn from_hint(name: &str) -> Option<Self> {
        let n = name.to_ascii_lowercase();
        if n.contains("logger") {
            Some(ComponentKind::RemoteLogger)
        } else if n.contains("master") {
            Some(ComponentKind::Master)
        } else if n.contains("executor") {
            Some(ComponentKind::TaskExecutor)
        } else if n.contains("actor") {
            Some(ComponentKind::Actor)
        } else if n.contains("user") {
            Some(ComponentKind::User)
        } else {
            None
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ComponentKind::Master => "master",
            ComponentKind::Actor => "actor",
            ComponentKind::RemoteLogger => "remote-logger",
            ComponentKind::TaskExecutor => "task-executor",
            ComponentKind::User => "user",
        }
    }
}

impl fmt::Display for ComponentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ComponentKind {
    type Err = FrameworkError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.to_ascii_lowercase().replace('_', "-");
        ComponentKind::ALL
            .into_iter()
            .find(|k| k.as_str() == norm || k.as_str().replace('-', "") == norm)
            .ok_or_else(|| FrameworkError::BadArgs(format!("unknown component kind `{s}`")))
    }
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum FrameworkError {
    #[error("address {0} is not routable")]
    UnroutableAddress(SocketAddrV4),
    #[error("address {0} is already registered")]
    DuplicateAddress(SocketAddrV4),
    #[error("no actors registered")]
    NoActors,
    #[error("unknown app `{0}`")]
    UnknownApp(String),
    #[error("no actor can run `{0}`")]
    NoCapableActor(String),
    #[error("actor `{actor}` cannot run `{kind}`")]
    IncapableActor { actor: ComponentId, kind: String },
    #[error("bad input: {0}")]
    BadInput(String),
    #[error("no result before the {0} ms deadline")]
    Timeout(f64),
    #[error("master is unreachable")]
    MasterUnreachable,
    #[error("log storage: {0}")]
    StorageFailure(String),
    #[error("bad launch arguments: {0}")]
    BadArgs(String),
    #[error("unknown scheduler `{0}`")]
    UnknownScheduler(String),
    #[error(transparent)]
    Comm(#[from] CommError),
    #[error(transparent)]
    App(#[from] AppError),
}

/// Application-level messages, carried JSON-encoded in envelope payloads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "msg", rename_all = "snake_case")]
pub enum Message {
    Register { kind: ComponentKind, addr: SocketAddrV4, node: String, capabilities: Vec<String> },
    Placement { request_id: u64, app: String, input: Value },
    RunTask { request_id: u64, task_idx: usize, task_kind: String, params: Value, input: Value, prev: Option<Value> },
    Exec { request_id: u64, task_idx: usize, task_kind: String, params: Value, input: Value, prev: Option<Value> },
    ExecResult { request_id: u64, task_idx: usize, output: Result<Value, String> },
    TaskResult { request_id: u64, task_idx: usize, output: Result<Value, String> },
    Result { request_id: u64, output: Result<Value, String> },
    Log { event: ProfileEvent },
    Ping,
    Pong,
}

impl Message {
    pub fn msg_type(&self) -> &'static str {
        match self {
            Message::Register { .. } => "register",
            Message::Placement { .. } => "placement",
            Message::RunTask { .. } => "run_task",
            Message::Exec { .. } => "exec",
            Message::ExecResult { .. } => "exec_result",
            Message::TaskResult { .. } => "task_result",
            Message::Result { .. } => "result",
            Message::Log { .. } => "log",
            Message::Ping => "ping",
            Message::Pong => "pong",
        }
    }

    pub fn class(&self) -> LinkClass {
        match self {
            Message::Log { .. } => LinkClass::Telemetry,
            Message::Ping | Message::Pong => LinkClass::Control,
            _ => LinkClass::Data,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Payload {
    pub from: ComponentId,
    #[serde(flatten)]
    pub msg: Message,
}

/// Builds the envelope for `msg` from `from` to `to`; the reply address is
/// always the sender's bound address.
pub fn envelope(bound: SocketAddrV4, from: &ComponentId, to: &Peer, msg: Message, cid: u64) -> Envelope {
    let msg_type = msg.msg_type();
    let body = serde_json::to_vec(&Payload { from: from.clone(), msg }).expect("payload serializes");
    Envelope::new(msg_type, bound, to.addr, cid, body).with_target(to.id.clone())
}

pub fn decode(env: &Envelope) -> Result<Payload, FrameworkError> {
    serde_json::from_slice(&env.payload).map_err(|e| FrameworkError::BadInput(e.to_string()))
}

/// What a component may do besides updating its own state.
pub trait Context {
    fn now_ms(&self) -> f64;
    fn node(&self) -> &str;
    fn bound(&self) -> SocketAddrV4;
    fn send(&mut self, env: Envelope, class: LinkClass) -> Result<(), CommError>;
    /// Occupies the component for `ms` of compute.
    fn busy(&mut self, ms: f64);
    fn spawn_executor(&mut self, actor: &ComponentId, task_kind: &str) -> Result<Peer, FrameworkError>;
    fn routable(&self, addr: SocketAddrV4) -> bool;
}

pub fn send_msg(ctx: &mut dyn Context, from: &ComponentId, to: &Peer, msg: Message, cid: u64) -> Result<(), CommError> {
    let class = msg.class();
    let env = envelope(ctx.bound(), from, to, msg, cid);
    ctx.send(env, class)
}

pub trait Component: Send {
    fn id(&self) -> &ComponentId;
    fn kind(&self) -> ComponentKind;
    fn on_start(&mut self, _ctx: &mut dyn Context) -> Result<(), FrameworkError> {
        Ok(())
    }
    fn handle(&mut self, env: &Envelope, payload: Payload, ctx: &mut dyn Context) -> Result<(), FrameworkError>;
    fn as_any(&self) -> &dyn Any;
    fn as_any_mut(&mut self) -> &mut dyn Any;
}

/// Entry point for every inbound envelope: answers health pings on behalf
/// of the component and hands everything else to it.
pub fn dispatch(component: &mut dyn Component, env: &Envelope, ctx: &mut dyn Context) -> Result<(), FrameworkError> {
    let payload = decode(env)?;
    if payload.msg == Message::Ping {
        let to = Peer::new(payload.from, env.reply_to);
        return send_msg(ctx, &component.id().clone(), &to, Message::Pong, env.correlation_id).map_err(Into::into);
    }
    component.handle(env, payload, ctx)
}

#[cfg(test)]
pub(crate) mod testing {
    use super::*;

    /// Records sends instead of delivering them.
    pub struct Recorder {
        pub node: String,
        pub bound: SocketAddrV4,
        pub now: f64,
        pub sent: Vec<(Envelope, LinkClass)>,
        pub busy_ms: f64,
        pub spawned: Vec<(ComponentId, String)>,
        pub unroutable: Vec<SocketAddrV4>,
    }

    impl Recorder {
        pub fn new(node: &str, bound: &str) -> Self {
            Self {
                node: node.to_string(),
                bound: bound.parse().unwrap(),
                now: 0.0,
                sent: Vec::new(),
                busy_ms: 0.0,
                spawned: Vec::new(),
                unroutable: Vec::new(),
            }
        }

        pub fn take(&mut self) -> Vec<(Envelope, Payload)> {
            self.sent.drain(..).map(|(e, _)| {
                let p = decode(&e).unwrap();
                (e, p)
            }).collect()
        }
    }

    impl Context for Recorder {
        fn now_ms(&self) -> f64 {
            self.now
        }
        fn node(&self) -> &str {
            &self.node
        }
        fn bound(&self) -> SocketAddrV4 {
            self.bound
        }
        fn send(&mut self, env: Envelope, class: LinkClass) -> Result<(), CommError> {
            self.sent.push((env, class));
            Ok(())
        }
        fn busy(&mut self, ms: f64) {
            self.busy_ms += ms;
        }
        fn spawn_executor(&mut self, actor: &ComponentId, task_kind: &str) -> Result<Peer, FrameworkError> {
            self.spawned.push((actor.clone(), task_kind.to_string()));
            let port = 6000 + self.spawned.len() as u16;
            Ok(Peer::new(format!("{actor}/{task_kind}"), SocketAddrV4::new(*self.bound.ip(), port)))
        }
        fn routable(&self, addr: SocketAddrV4) -> bool {
            !self.unroutable.contains(&addr)
        }
    }
}
