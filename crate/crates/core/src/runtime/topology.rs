use std::collections::BTreeMap;
use std::net::{Ipv4Addr, SocketAddrV4};
use std::path::Path;
use std::str::FromStr;

use ipnet::Ipv4Net;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Mode, RuntimeError};
use crate::apps::ALL_TASK_KINDS;
use crate::cluster::{DEFAULT_POD_CIDR, DeploymentSpec};
use crate::comm::{BindingStrategy, ComponentId, Peer};
use crate::framework::{
    Actor, Component, ComponentKind, FrameworkError, LOGGER_ID, LaunchArgs, LogStore, MASTER_ID, Master, RemoteLogger, SchedulerState, TaskExecutor,
    USER_ID, User,
};
use crate::overlay::{DEFAULT_BASE_PORT, MeshPlan, NodeRecord, default_subnet, plan_mesh_with, reconcile_allowed_ips};
use crate::simnet::{Layout, sim_nodes};

pub const FIRST_COMPONENT_PORT: u16 = 5000;
pub const PROXY_PORT: u16 = 7000;
/// Where each node's pod agent sends health probes from.
pub const KUBELET_PORT: u16 = 10250;

pub const ENV_COMPONENT_ID: &str = "FOGLINE_COMPONENT_ID";
pub const ENV_CAPABILITIES: &str = "FOGLINE_CAPABILITIES";
pub const ENV_TASK_KIND: &str = "FOGLINE_TASK_KIND";

/// Address binding pattern for pods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pattern {
    HostNetwork,
    ProxyServer,
    EnvVariable,
}

impl FromStr for Pattern {
    type Err = RuntimeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "hostnetwork" => Ok(Pattern::HostNetwork),
            "proxyserver" | "proxy" => Ok(Pattern::ProxyServer),
            "envvariable" | "env" => Ok(Pattern::EnvVariable),
            _ => Err(RuntimeError::BadOption(format!("unknown binding pattern `{s}`"))),
        }
    }
}

/// Everything needed to bring up one deployment of the framework.
#[derive(Debug, Clone, PartialEq)]
pub struct TopologySpec {
    pub mode: Mode,
    pub layout: Layout,
    pub pattern: Pattern,
    /// Publish the pod range through the mesh before boot.
    pub reconcile_allowed_ips: bool,
    pub pod_cidr: Ipv4Net,
    pub nodes: Vec<NodeRecord>,
    /// Tag of the node running the cluster server.
    pub cluster_server: String,
}

impl TopologySpec {
    pub fn new(mode: Mode, layout: Layout) -> Self {
        Self {
            mode,
            layout,
            pattern: Pattern::HostNetwork,
            reconcile_allowed_ips: false,
            pod_cidr: DEFAULT_POD_CIDR.parse().expect("valid default pod cidr"),
            nodes: sim_nodes(),
            cluster_server: "A".into(),
        }
    }

    pub fn with_pattern(mut self, pattern: Pattern) -> Self {
        self.pattern = pattern;
        self
    }

    pub fn reconciled(mut self) -> Self {
        self.reconcile_allowed_ips = true;
        self
    }

    pub fn node(&self, tag: &str) -> Result<&NodeRecord, RuntimeError> {
        self.nodes.iter().find(|n| n.tag == tag).ok_or_else(|| RuntimeError::BootFailure(format!("layout names unknown node `{tag}`")))
    }

    fn proxy_node(&self) -> &str {
        self.layout.proxy.as_deref().unwrap_or(&self.layout.master)
    }

    /// The mesh for this topology; keys come from `seed`.
    pub fn plan(&self, seed: u64) -> Result<MeshPlan, RuntimeError> {
        self.layout.validate()?;
        let plan = plan_mesh_with(&self.nodes, default_subnet(), DEFAULT_BASE_PORT, &mut ChaCha8Rng::seed_from_u64(seed))?;
        if self.reconcile_allowed_ips {
            return Ok(reconcile_allowed_ips(&plan, self.pod_cidr)?);
        }
        Ok(plan)
    }

    pub fn strategy(&self, plan: &MeshPlan) -> Result<BindingStrategy, RuntimeError> {
        match (self.pattern, self.mode) {
            (Pattern::HostNetwork, _) => Ok(BindingStrategy::HostNetwork),
            (Pattern::EnvVariable, Mode::Native) => Err(RuntimeError::BadOption("bare components have no pod address to hand out".into())),
            (Pattern::EnvVariable, Mode::Orchestrated) => Ok(BindingStrategy::EnvVariable),
            (Pattern::ProxyServer, _) => {
                let ip = plan.peer(self.proxy_node())?.vpn_ip();
                Ok(BindingStrategy::ProxyServer(SocketAddrV4::new(ip, PROXY_PORT)))
            }
        }
    }

    /// Logger, master and actors, in boot order. Ports are left at zero
    /// for the runtime to assign.
    pub fn components(&self) -> Vec<ComponentPlan> {
        let all: Vec<String> = ALL_TASK_KINDS.iter().map(|k| k.to_string()).collect();
        let mut out = vec![
            ComponentPlan::new(LOGGER_ID, ComponentKind::RemoteLogger, &self.layout.logger),
            ComponentPlan::new(MASTER_ID, ComponentKind::Master, &self.layout.master),
        ];
        for (i, node) in self.layout.actors.iter().enumerate() {
            let mut c = ComponentPlan::new(&format!("actor-{}", i + 1), ComponentKind::Actor, node);
            c.capabilities = all.clone();
            out.push(c);
        }
        out
    }

    pub fn user(&self) -> ComponentPlan {
        ComponentPlan::new(USER_ID, ComponentKind::User, &self.layout.user)
    }
}

/// One component to start: identity, kind, node tag and listen port.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentPlan {
    pub id: ComponentId,
    pub kind: ComponentKind,
    pub node: String,
    pub port: u16,
    /// Task kinds an actor advertises, or the single kind of an executor.
    pub capabilities: Vec<String>,
}

impl ComponentPlan {
    pub fn new(id: &str, kind: ComponentKind, node: &str) -> Self {
        Self { id: id.into(), kind, node: node.into(), port: 0, capabilities: Vec::new() }
    }

    pub fn executor(actor: &ComponentId, task_kind: &str, node: &str) -> Self {
        let mut c = Self::new(&format!("{actor}/{task_kind}"), ComponentKind::TaskExecutor, node);
        c.capabilities = vec![task_kind.to_string()];
        c
    }

    pub fn deployment_name(&self) -> String {
        let id = self.id.as_str().replace('/', "-");
        match self.kind {
            ComponentKind::TaskExecutor => format!("fogline-executor-{id}"),
            _ => format!("fogline-{id}"),
        }
    }
}

fn flag(out: &mut Vec<String>, name: &str, value: impl ToString) {
    out.push(name.to_string());
    out.push(value.to_string());
}

/// Deployment document for one component, pinned to `node_name`. Host
/// network pods get `--bindIP` with the node's vpn address; other pods
/// learn their address from the environment at start.
pub fn deployment_for(
    c: &ComponentPlan,
    node_name: &str,
    host_network: bool,
    node_vpn: Ipv4Addr,
    master: Option<SocketAddrV4>,
    logger: Option<SocketAddrV4>,
) -> DeploymentSpec {
    let mut spec = DeploymentSpec::new(&c.deployment_name(), 1, c.kind);
    let mut args = Vec::new();
    if host_network {
        flag(&mut args, "--bindIP", node_vpn);
    }
    flag(&mut args, "--bindPort", c.port);
    if let Some(l) = logger {
        flag(&mut args, "--remoteLoggerIP", l.ip());
        flag(&mut args, "--remoteLoggerPort", l.port());
    }
    if let Some(m) = master {
        flag(&mut args, "--masterIP", m.ip());
        flag(&mut args, "--masterPort", m.port());
    }
    if c.kind == ComponentKind::Master {
        flag(&mut args, "--schedulerName", "RoundRobin");
    }
    flag(&mut args, "--containerName", c.deployment_name());
    spec.args = args;
    spec.image = Some("fogline:latest".into());
    spec.node_name = Some(node_name.to_string());
    spec.host_network = host_network;
    spec.env.insert(ENV_COMPONENT_ID.into(), c.id.to_string());
    if !c.capabilities.is_empty() {
        spec.env.insert(ENV_CAPABILITIES.into(), c.capabilities.join(","));
    }
    if c.kind == ComponentKind::TaskExecutor {
        spec.env.insert(ENV_TASK_KIND.into(), c.capabilities[0].clone());
    }
    spec
}

/// Builds the component a deployment describes, as its container would
/// start it: from its args plus environment. Returns it with the address
/// it binds.
pub fn instantiate(spec: &DeploymentSpec, extra_env: &[(String, String)], log_path: Option<&Path>) -> Result<(Box<dyn Component>, SocketAddrV4), FrameworkError> {
    let mut env: BTreeMap<String, String> = spec.env.clone();
    env.extend(extra_env.iter().cloned());
    let args = LaunchArgs::parse(&spec.args, &env)?;
    let id = ComponentId::new(env.get(ENV_COMPONENT_ID).cloned().unwrap_or_else(|| spec.name.clone()));
    let caps: Vec<String> = env.get(ENV_CAPABILITIES).map(|c| c.split(',').filter(|s| !s.is_empty()).map(str::to_string).collect()).unwrap_or_default();
    let master = args.master.map(|a| Peer::new(MASTER_ID, a));
    let logger = args.remote_logger.map(|a| Peer::new(LOGGER_ID, a));
    let need_master = || master.clone().ok_or_else(|| FrameworkError::BadArgs(format!("{} needs --masterIP/--masterPort", spec.name)));
    let component: Box<dyn Component> = match spec.component {
        ComponentKind::Master => {
            let sched = SchedulerState { policy: args.scheduler.unwrap_or_default(), ..SchedulerState::default() };
            Box::new(Master::new(id, logger, sched))
        }
        ComponentKind::RemoteLogger => {
            let store = match log_path {
                Some(p) => LogStore::open(p)?,
                None => LogStore::memory(),
            };
            Box::new(RemoteLogger::new(id, store))
        }
        ComponentKind::Actor => Box::new(Actor::new(id, need_master()?, caps)),
        ComponentKind::TaskExecutor => {
            let kind = env.get(ENV_TASK_KIND).cloned().or_else(|| caps.first().cloned()).ok_or_else(|| FrameworkError::BadArgs("executor without a task kind".into()))?;
            Box::new(TaskExecutor::new(id, &kind, need_master()?, logger))
        }
        ComponentKind::User => Box::new(User::new(id, need_master()?)),
    };
    Ok((component, args.bind))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::comm::POD_IP_ENV;

    #[test]
    fn actor_deployment_round_trips_through_args() {
        let spec = TopologySpec::new(Mode::Orchestrated, Layout::hybrid());
        let mut actor = spec.components()[2].clone();
        actor.port = 5001;
        let master = "192.0.0.4:5000".parse().unwrap();
        let d = deployment_for(&actor, "VM2", true, Ipv4Addr::new(192, 0, 0, 5), Some(master), None);
        assert_eq!(d.name, "fogline-actor-1");
        assert_eq!(d.arg_value("--bindIP"), Some("192.0.0.5"));
        let (c, bind) = instantiate(&d, &[], None).unwrap();
        assert_eq!(bind, "192.0.0.5:5001".parse().unwrap());
        assert_eq!(c.kind(), ComponentKind::Actor);
        let a = c.as_any().downcast_ref::<Actor>().unwrap();
        assert_eq!(a.capabilities().len(), ALL_TASK_KINDS.len());
    }

    #[test]
    fn pod_address_comes_from_environment() {
        let mut x = ComponentPlan::executor(&"actor-1".into(), "fd-frame", "E");
        x.port = 5002;
        let d = deployment_for(&x, "VM2", false, Ipv4Addr::new(192, 0, 0, 5), Some("10.42.0.2:5000".parse().unwrap()), None);
        assert_eq!(d.name, "fogline-executor-actor-1-fd-frame");
        assert!(instantiate(&d, &[], None).is_err());
        let (c, bind) = instantiate(&d, &[(POD_IP_ENV.into(), "10.42.0.9".into())], None).unwrap();
        assert_eq!(bind, "10.42.0.9:5002".parse().unwrap());
        assert_eq!(c.id().as_str(), "actor-1/fd-frame");
        assert_eq!(c.as_any().downcast_ref::<TaskExecutor>().unwrap().task_kind(), "fd-frame");
    }

    #[test]
    fn strategy_per_pattern() {
        let base = TopologySpec::new(Mode::Orchestrated, Layout::hybrid());
        let plan = base.plan(1).unwrap();
        assert_eq!(base.strategy(&plan).unwrap(), BindingStrategy::HostNetwork);
        let proxied = base.clone().with_pattern(Pattern::ProxyServer);
        assert_eq!(proxied.strategy(&plan).unwrap(), BindingStrategy::ProxyServer("192.0.0.4:7000".parse().unwrap()));
        let native_env = TopologySpec { mode: Mode::Native, ..base.with_pattern(Pattern::EnvVariable) };
        assert!(native_env.strategy(&plan).is_err());
        assert_eq!("proxy-server".parse::<Pattern>().unwrap(), Pattern::ProxyServer);
    }
}
