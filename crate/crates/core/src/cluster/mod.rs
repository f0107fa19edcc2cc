//! Single-server orchestrator state and its control loop.
//!
//! All mutation goes through free functions over [`ClusterState`]; pods are
//! only ever created, replaced or removed by [`reconcile`].

mod deployment;

use std::collections::{BTreeMap, HashSet};
use std::fmt::{self, Write as _};
use std::net::Ipv4Addr;

use ipnet::Ipv4Net;
use rand::RngCore;
use serde::{Deserialize, Serialize};

pub use deployment::{DeploymentSpec, RestartPolicy, parse_cpu, parse_deployment, parse_memory};

use crate::framework::ComponentKind;
use crate::overlay::{MeshPlan, NodeRecord, NodeRole, RouteDecision, route};

pub const DEFAULT_POD_CIDR: &str = "10.42.0.0/16";
/// Consecutive failed probes after which a pod is marked Failed.
pub const PROBE_FAILURE_THRESHOLD: u32 = 3;
pub const PROBE_TIMEOUT_MS: u64 = 500;

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum ClusterError {
    #[error("join token does not match")]
    BadToken,
    #[error("node `{0}` is already a member")]
    DuplicateNode(String),
    #[error("server {0} is not reachable over the overlay")]
    UnreachableServer(Ipv4Addr),
    #[error("node `{0}` has no vpn address")]
    NoVpnAddress(String),
    #[error("node `{0}` not found")]
    NodeNotFound(String),
    #[error("no node has capacity for `{0}`")]
    NoCapacity(String),
    #[error("pod `{0}` not found")]
    PodNotFound(String),
    #[error("new limits for pod `{pod}` overflow node `{node}`")]
    WouldExceedNode { pod: String, node: String },
    #[error("pod network {0} is exhausted")]
    PodCidrExhausted(Ipv4Net),
    #[error("pod `{uid}` cannot go from {from} to {to}")]
    InvalidTransition { uid: String, from: PodPhase, to: PodPhase },
    #[error("malformed document: {0}")]
    MalformedDocument(String),
    #[error("missing field `{0}`")]
    MissingField(&'static str),
    #[error("cannot tell which component `{0}` runs")]
    UnknownComponent(String),
}

/// Per-pod ceilings. Zero means unlimited and is left out of accounting.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ResourceLimits {
    pub cpu_millicores: u64,
    pub mem_mb: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PodPhase {
    Pending,
    Starting,
    Ready,
    Failed,
    Terminated,
}

impl PodPhase {
    pub fn is_live(self) -> bool {
        !matches!(self, PodPhase::Failed | PodPhase::Terminated)
    }

    fn can_become(self, to: PodPhase) -> bool {
        use PodPhase::*;
        match (self, to) {
            (Terminated, _) => false,
            (_, Failed) | (_, Terminated) => self != to,
            (Pending, Starting) | (Starting, Ready) => true,
            _ => false,
        }
    }
}

impl fmt::Display for PodPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PodRecord {
    pub uid: String,
    pub deployment: String,
    pub node: String,
    pub component: ComponentKind,
    pub phase: PodPhase,
    pub pod_ip: Ipv4Addr,
    pub host_network: bool,
    pub limits: ResourceLimits,
    pub restarts: u32,
    pub last_probe_tick: u64,
    pub consecutive_failures: u32,
    pub created_seq: u64,
    /// Set once a failed pod has been accounted for by a replacement.
    pub replaced: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterState {
    pub server: NodeRecord,
    pub agents: Vec<NodeRecord>,
    pub deployments: BTreeMap<String, DeploymentSpec>,
    pub pods: Vec<PodRecord>,
    pub pod_cidr: Ipv4Net,
    pub next_pod_ip: Ipv4Addr,
    pub join_token: String,
    pub clock_tick: u64,
    next_seq: u64,
}

impl ClusterState {
    /// Server first, then agents in join order.
    pub fn nodes(&self) -> impl Iterator<Item = &NodeRecord> {
        std::iter::once(&self.server).chain(&self.agents)
    }

    pub fn node(&self, name: &str) -> Option<&NodeRecord> {
        self.nodes().find(|n| n.name == name)
    }

    pub fn pod(&self, uid: &str) -> Option<&PodRecord> {
        self.pods.iter().find(|p| p.uid == uid)
    }

    fn pod_mut(&mut self, uid: &str) -> Option<&mut PodRecord> {
        self.pods.iter_mut().find(|p| p.uid == uid)
    }

    pub fn live_pods(&self) -> impl Iterator<Item = &PodRecord> {
        self.pods.iter().filter(|p| p.phase.is_live())
    }

    pub fn live_pods_of<'a>(&'a self, deployment: &'a str) -> impl Iterator<Item = &'a PodRecord> + 'a {
        self.live_pods().filter(move |p| p.deployment == deployment)
    }

    /// Committed (cpu millicores, mem MB) on a node over live pods,
    /// optionally ignoring one pod.
    pub fn committed(&self, node: &str, except: Option<&str>) -> (u64, u64) {
        self.live_pods()
            .filter(|p| p.node == node && Some(p.uid.as_str()) != except)
            .fold((0, 0), |(c, m), p| (c + p.limits.cpu_millicores, m + p.limits.mem_mb))
    }

    /// max(cpu ratio, mem ratio) of committed limits over capacity.
    pub fn utilization(&self, node: &NodeRecord) -> f64 {
        let (cpu, mem) = self.committed(&node.name, None);
        ratio(cpu, node.cpu_millicores()).max(ratio(mem, node.mem_mb))
    }

    fn transition(&mut self, uid: &str, to: PodPhase) -> Result<(), ClusterError> {
        let pod = self.pod_mut(uid).ok_or_else(|| ClusterError::PodNotFound(uid.to_string()))?;
        if !pod.phase.can_become(to) {
            return Err(ClusterError::InvalidTransition { uid: uid.to_string(), from: pod.phase, to });
        }
        pod.phase = to;
        Ok(())
    }
}

fn ratio(used: u64, capacity: u64) -> f64 {
    if capacity == 0 {
        if used == 0 { 0.0 } else { f64::INFINITY }
    } else {
        used as f64 / capacity as f64
    }
}

fn fits(used: u64, extra: u64, capacity: u64) -> bool {
    used + extra <= capacity
}

fn first_host(net: &Ipv4Net) -> Ipv4Addr {
    Ipv4Addr::from(u32::from(net.network()).saturating_add(1))
}

pub fn new_token<R: RngCore + ?Sized>(rng: &mut R) -> String {
    let mut bytes = [0u8; 32];
    rng.fill_bytes(&mut bytes);
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn start_server(node: NodeRecord, pod_cidr: Ipv4Net) -> Result<(ClusterState, String), ClusterError> {
    start_server_with(node, pod_cidr, &mut rand::rng())
}

pub fn start_server_with<R: RngCore + ?Sized>(mut node: NodeRecord, pod_cidr: Ipv4Net, rng: &mut R) -> Result<(ClusterState, String), ClusterError> {
    if node.vpn_ip.is_none() {
        return Err(ClusterError::NoVpnAddress(node.name));
    }
    node.role = NodeRole::Server;
    let token = new_token(rng);
    let state = ClusterState {
        server: node,
        agents: Vec::new(),
        deployments: BTreeMap::new(),
        pods: Vec::new(),
        pod_cidr,
        next_pod_ip: first_host(&pod_cidr),
        join_token: token.clone(),
        clock_tick: 0,
        next_seq: 0,
    };
    Ok((state, token))
}

pub fn join_agent(state: &mut ClusterState, mut node: NodeRecord, server_addr: Ipv4Addr, token: &str, plan: &MeshPlan) -> Result<(), ClusterError> {
    if token != state.join_token {
        return Err(ClusterError::BadToken);
    }
    if state.nodes().any(|n| n.name == node.name || n.tag == node.tag) {
        return Err(ClusterError::DuplicateNode(node.name));
    }
    let reachable = state.server.vpn_ip == Some(server_addr)
        && matches!(route(plan, &node.tag, server_addr), Ok(RouteDecision::Deliverable(_)));
    if !reachable {
        return Err(ClusterError::UnreachableServer(server_addr));
    }
    node.role = NodeRole::Agent;
    state.agents.push(node);
    Ok(())
}

/// Upserts a deployment; pods follow on the next [`reconcile`].
pub fn apply_deployment(state: &mut ClusterState, spec: DeploymentSpec) {
    state.deployments.insert(spec.name.clone(), spec);
}

pub fn delete_deployment(state: &mut ClusterState, name: &str) -> Option<DeploymentSpec> {
    state.deployments.remove(name)
}

/// Picks a node for one more pod of `spec`.
pub fn schedule_pod(state: &ClusterState, spec: &DeploymentSpec) -> Result<String, ClusterError> {
    let lim = spec.resource_limits;
    let has_room = |n: &NodeRecord| {
        let (cpu, mem) = state.committed(&n.name, None);
        state.utilization(n) < 1.0 && fits(cpu, lim.cpu_millicores, n.cpu_millicores()) && fits(mem, lim.mem_mb, n.mem_mb)
    };
    if let Some(pinned) = &spec.node_name {
        let node = state.node(pinned).ok_or_else(|| ClusterError::NodeNotFound(pinned.clone()))?;
        return if has_room(node) { Ok(node.name.clone()) } else { Err(ClusterError::NoCapacity(spec.name.clone())) };
    }
    let mut candidates: Vec<&NodeRecord> = state.nodes().filter(|n| has_room(n)).collect();
    candidates.sort_by(|a, b| a.tag.cmp(&b.tag));
    candidates
        .into_iter()
        .map(|n| (state.utilization(n), n))
        .min_by(|(ra, a), (rb, b)| ra.total_cmp(rb).then_with(|| a.tag.cmp(&b.tag)))
        .map(|(_, n)| n.name.clone())
        .ok_or_else(|| ClusterError::NoCapacity(spec.name.clone()))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    Create { uid: String, deployment: String, node: String, pod_ip: Ipv4Addr },
    Terminate { uid: String, deployment: String },
    Unschedulable { deployment: String, error: ClusterError },
}

fn allocate_pod_ip(state: &mut ClusterState) -> Result<Ipv4Addr, ClusterError> {
    let in_use: HashSet<Ipv4Addr> = state.live_pods().filter(|p| !p.host_network).map(|p| p.pod_ip).collect();
    let cidr = state.pod_cidr;
    let lo = u32::from(first_host(&cidr));
    let hi = u32::from(cidr.broadcast()).saturating_sub(1);
    if hi < lo {
        return Err(ClusterError::PodCidrExhausted(cidr));
    }
    let span = hi - lo + 1;
    let start = u32::from(state.next_pod_ip).clamp(lo, hi);
    for i in 0..span {
        let ip = Ipv4Addr::from(lo + (start - lo + i) % span);
        if !in_use.contains(&ip) {
            state.next_pod_ip = Ipv4Addr::from(lo + (ip.to_bits() - lo + 1) % span);
            return Ok(ip);
        }
    }
    Err(ClusterError::PodCidrExhausted(cidr))
}

fn create_pod(state: &mut ClusterState, spec: &DeploymentSpec, restarts: u32) -> Action {
    let node = match schedule_pod(state, spec) {
        Ok(n) => n,
        Err(error) => return Action::Unschedulable { deployment: spec.name.clone(), error },
    };
    let vpn_ip = state.node(&node).and_then(|n| n.vpn_ip);
    let pod_ip = match (spec.host_network, vpn_ip) {
        (true, Some(ip)) => ip,
        (true, None) => return Action::Unschedulable { deployment: spec.name.clone(), error: ClusterError::NoVpnAddress(node) },
        (false, _) => match allocate_pod_ip(state) {
            Ok(ip) => ip,
            Err(error) => return Action::Unschedulable { deployment: spec.name.clone(), error },
        },
    };
    let seq = state.next_seq;
    state.next_seq += 1;
    let uid = format!("{}-{seq}", spec.name);
    state.pods.push(PodRecord {
        uid: uid.clone(),
        deployment: spec.name.clone(),
        node: node.clone(),
        component: spec.component,
        phase: PodPhase::Pending,
        pod_ip,
        host_network: spec.host_network,
        limits: spec.resource_limits,
        restarts,
        last_probe_tick: state.clock_tick,
        consecutive_failures: 0,
        created_seq: seq,
        replaced: false,
    });
    Action::Create { uid, deployment: spec.name.clone(), node, pod_ip }
}

/// One pass of the control loop: brings every deployment's live pod count
/// to its replica count and removes pods whose deployment is gone.
pub fn reconcile(state: &mut ClusterState) -> Vec<Action> {
    state.clock_tick += 1;
    let mut actions = Vec::new();

    let orphans: Vec<(String, String)> = state
        .live_pods()
        .filter(|p| !state.deployments.contains_key(&p.deployment))
        .map(|p| (p.uid.clone(), p.deployment.clone()))
        .collect();
    for (uid, deployment) in orphans {
        state.transition(&uid, PodPhase::Terminated).expect("live pod can terminate");
        actions.push(Action::Terminate { uid, deployment });
    }

    let specs: Vec<DeploymentSpec> = state.deployments.values().cloned().collect();
    for spec in specs {
        let live = state.live_pods_of(&spec.name).count();
        let mut failed: Vec<(u64, String, u32)> = state
            .pods
            .iter()
            .filter(|p| p.deployment == spec.name && p.phase == PodPhase::Failed && !p.replaced)
            .map(|p| (p.created_seq, p.uid.clone(), p.restarts))
            .collect();
        failed.sort();
        let held = match spec.restart_policy {
            RestartPolicy::Always => live,
            RestartPolicy::Never => live + failed.len(),
        };
        let want = spec.replicas as usize;

        if held < want {
            let mut lineage = match spec.restart_policy {
                RestartPolicy::Always => failed.clone().into_iter(),
                RestartPolicy::Never => Vec::new().into_iter(),
            };
            for _ in held..want {
                let (restarts, predecessor) = match lineage.next() {
                    Some((_, uid, restarts)) => (restarts + 1, Some(uid)),
                    None => (0, None),
                };
                let action = create_pod(state, &spec, restarts);
                if let (Action::Create { .. }, Some(uid)) = (&action, predecessor) {
                    state.pod_mut(&uid).expect("failed pod exists").replaced = true;
                }
                actions.push(action);
            }
        }
        if spec.restart_policy == RestartPolicy::Always && state.live_pods_of(&spec.name).count() >= want {
            // failed pods not needed for the replica count are retired
            for (_, uid, _) in &failed {
                state.pod_mut(uid).expect("failed pod exists").replaced = true;
            }
        }
        if live > want {
            let mut victims: Vec<(u64, String)> = state.live_pods_of(&spec.name).map(|p| (p.created_seq, p.uid.clone())).collect();
            victims.sort_by(|a, b| b.cmp(a));
            for (_, uid) in victims.into_iter().take(live - want) {
                state.transition(&uid, PodPhase::Terminated).expect("live pod can terminate");
                actions.push(Action::Terminate { uid, deployment: spec.name.clone() });
            }
        }
    }
    actions
}

/// Pending pods are picked up by their node and begin starting.
pub fn start_pending(state: &mut ClusterState) -> Vec<String> {
    let uids: Vec<String> = state.pods.iter().filter(|p| p.phase == PodPhase::Pending).map(|p| p.uid.clone()).collect();
    for uid in &uids {
        state.transition(uid, PodPhase::Starting).expect("pending pod can start");
    }
    uids
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProbeStatus {
    Ready,
    NotReady,
    Missing,
}

/// Folds one probe outcome into the pod's health.
pub fn record_probe(state: &mut ClusterState, uid: &str, answered: bool) -> ProbeStatus {
    let tick = state.clock_tick;
    let Some(pod) = state.pod_mut(uid) else {
        return ProbeStatus::Missing;
    };
    if !matches!(pod.phase, PodPhase::Starting | PodPhase::Ready) {
        return ProbeStatus::NotReady;
    }
    pod.last_probe_tick = tick;
    if answered {
        pod.consecutive_failures = 0;
        pod.phase = PodPhase::Ready;
        return ProbeStatus::Ready;
    }
    pod.consecutive_failures += 1;
    if pod.consecutive_failures >= PROBE_FAILURE_THRESHOLD {
        pod.phase = PodPhase::Failed;
    }
    ProbeStatus::NotReady
}

/// Probes one pod with `prober`, which reports whether the hosted
/// component answered a ping within the timeout.
pub fn probe_health<F: FnOnce(&PodRecord) -> bool>(state: &mut ClusterState, uid: &str, prober: F) -> ProbeStatus {
    let answered = match state.pod(uid) {
        None => return ProbeStatus::Missing,
        Some(p) if matches!(p.phase, PodPhase::Starting | PodPhase::Ready) => prober(p),
        Some(_) => false,
    };
    record_probe(state, uid, answered)
}

/// Marks a pod as crashed.
pub fn fail_pod(state: &mut ClusterState, uid: &str) -> Result<(), ClusterError> {
    state.transition(uid, PodPhase::Failed)
}

pub fn delete_pod(state: &mut ClusterState, uid: &str) -> Result<(), ClusterError> {
    match state.pod(uid) {
        Some(p) if p.phase != PodPhase::Terminated => state.transition(uid, PodPhase::Terminated),
        _ => Err(ClusterError::PodNotFound(uid.to_string())),
    }
}

/// Replaces a running pod's limits in place, without a restart.
pub fn update_limits(state: &mut ClusterState, uid: &str, limits: ResourceLimits) -> Result<(), ClusterError> {
    let pod = state.pod(uid).filter(|p| p.phase.is_live()).ok_or_else(|| ClusterError::PodNotFound(uid.to_string()))?;
    let node = state.node(&pod.node).ok_or_else(|| ClusterError::NodeNotFound(pod.node.clone()))?;
    let (cpu, mem) = state.committed(&node.name, Some(uid));
    if !fits(cpu, limits.cpu_millicores, node.cpu_millicores()) || !fits(mem, limits.mem_mb, node.mem_mb) {
        return Err(ClusterError::WouldExceedNode { pod: uid.to_string(), node: node.name.clone() });
    }
    state.pod_mut(uid).expect("checked above").limits = limits;
    Ok(())
}

/// One line per node: `<node> <role> <pods> <cpu%> <mem%>`.
pub fn status_lines(state: &ClusterState) -> String {
    let mut out = String::new();
    for node in state.nodes() {
        let pods = state.live_pods().filter(|p| p.node == node.name).count();
        let (cpu, mem) = state.committed(&node.name, None);
        let _ = writeln!(
            out,
            "{} {} {} {:.1}% {:.1}%",
            node.name,
            node.role,
            pods,
            100.0 * ratio(cpu, node.cpu_millicores()),
            100.0 * ratio(mem, node.mem_mb)
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::overlay::{DEFAULT_BASE_PORT, default_subnet, plan_mesh, table1_nodes};

    fn cidr() -> Ipv4Net {
        DEFAULT_POD_CIDR.parse().unwrap()
    }

    fn five_nodes() -> ClusterState {
        let nodes = table1_nodes();
        let plan = plan_mesh(&nodes, default_subnet(), DEFAULT_BASE_PORT).unwrap();
        let (mut state, token) = start_server(nodes[0].clone(), cidr()).unwrap();
        for n in &nodes[1..] {
            join_agent(&mut state, n.clone(), Ipv4Addr::new(192, 0, 0, 1), &token, &plan).unwrap();
        }
        state
    }

    fn spec(name: &str, replicas: u32, cpu: u64, mem: u64) -> DeploymentSpec {
        let mut s = DeploymentSpec::new(name, replicas, ComponentKind::Actor);
        s.resource_limits = ResourceLimits { cpu_millicores: cpu, mem_mb: mem };
        s
    }

    #[test]
    fn server_start() {
        let (state, token) = start_server(table1_nodes()[0].clone(), cidr()).unwrap();
        assert_eq!(state.server.tag, "A");
        assert_eq!(state.server.role, NodeRole::Server);
        assert!(state.agents.is_empty());
        assert_eq!(state.next_pod_ip, Ipv4Addr::new(10, 42, 0, 1));
        assert_eq!(token.len(), 64);
        let (_, other) = start_server(table1_nodes()[0].clone(), cidr()).unwrap();
        assert_ne!(token, other);
    }

    #[test]
    fn joining() {
        let state = five_nodes();
        assert_eq!(state.agents.len(), 4);
        assert!(state.agents.iter().all(|a| a.role == NodeRole::Agent));

        let nodes = table1_nodes();
        let plan = plan_mesh(&nodes, default_subnet(), DEFAULT_BASE_PORT).unwrap();
        let (mut s, token) = start_server(nodes[0].clone(), cidr()).unwrap();
        let before = s.clone();
        assert_eq!(join_agent(&mut s, nodes[1].clone(), Ipv4Addr::new(192, 0, 0, 1), "nope", &plan), Err(ClusterError::BadToken));
        assert_eq!(s, before);
        assert!(matches!(join_agent(&mut s, nodes[0].clone(), Ipv4Addr::new(192, 0, 0, 1), &token, &plan), Err(ClusterError::DuplicateNode(_))));
        assert_eq!(
            join_agent(&mut s, nodes[1].clone(), Ipv4Addr::new(172, 16, 0, 1), &token, &plan),
            Err(ClusterError::UnreachableServer(Ipv4Addr::new(172, 16, 0, 1)))
        );
    }

    #[test]
    fn scheduling() {
        let mut state = five_nodes();
        let mut pinned = spec("m", 1, 0, 0);
        pinned.node_name = Some("VM1".into());
        assert_eq!(schedule_pod(&state, &pinned).unwrap(), "VM1");
        pinned.node_name = Some("ghost".into());
        assert_eq!(schedule_pod(&state, &pinned), Err(ClusterError::NodeNotFound("ghost".into())));
        assert_eq!(schedule_pod(&state, &spec("x", 1, 100, 0)).unwrap(), "Nectar1");

        for n in ["Nectar1", "Nectar2", "Nectar3", "VM1", "VM2"] {
            let mut s = spec(&format!("fill-{n}"), 1, 0, 0);
            let node = state.node(n).unwrap().clone();
            s.resource_limits = ResourceLimits { cpu_millicores: node.cpu_millicores(), mem_mb: 0 };
            s.node_name = Some(n.into());
            apply_deployment(&mut state, s);
        }
        reconcile(&mut state);
        assert!(matches!(schedule_pod(&state, &spec("y", 1, 0, 0)), Err(ClusterError::NoCapacity(_))));
    }

    #[test]
    fn reconcile_creates_converges_and_heals() {
        let mut state = five_nodes();
        apply_deployment(&mut state, spec("a", 1, 100, 64));
        let actions = reconcile(&mut state);
        assert_eq!(actions.len(), 1);
        assert!(reconcile(&mut state).is_empty());

        let uid = state.live_pods().next().unwrap().uid.clone();
        fail_pod(&mut state, &uid).unwrap();
        let actions = reconcile(&mut state);
        assert_eq!(actions.len(), 1);
        assert!(matches!(actions[0], Action::Create { .. }));
        assert_eq!(state.live_pods().next().unwrap().restarts, 1);
        assert!(reconcile(&mut state).is_empty());
    }

    #[test]
    fn scale_down_terminates_newest() {
        let mut state = five_nodes();
        apply_deployment(&mut state, spec("a", 3, 100, 64));
        reconcile(&mut state);
        apply_deployment(&mut state, spec("a", 1, 100, 64));
        let actions = reconcile(&mut state);
        assert_eq!(actions.iter().filter(|a| matches!(a, Action::Terminate { .. })).count(), 2);
        assert_eq!(state.pods.iter().filter(|p| p.phase == PodPhase::Terminated).count(), 2);
        assert_eq!(state.live_pods().next().unwrap().uid, "a-0");
    }

    #[test]
    fn zero_replicas_creates_nothing() {
        let mut state = five_nodes();
        apply_deployment(&mut state, spec("a", 0, 100, 64));
        assert!(reconcile(&mut state).is_empty());
        assert!(state.pods.is_empty());
    }

    #[test]
    fn never_policy_keeps_failed_pod() {
        let mut state = five_nodes();
        let mut s = spec("a", 1, 100, 64);
        s.restart_policy = RestartPolicy::Never;
        apply_deployment(&mut state, s);
        reconcile(&mut state);
        fail_pod(&mut state, "a-0").unwrap();
        assert!(reconcile(&mut state).is_empty());
    }

    #[test]
    fn deleting() {
        let mut state = five_nodes();
        apply_deployment(&mut state, spec("a", 1, 100, 64));
        reconcile(&mut state);
        delete_pod(&mut state, "a-0").unwrap();
        assert_eq!(delete_pod(&mut state, "a-0"), Err(ClusterError::PodNotFound("a-0".into())));
        reconcile(&mut state);
        assert_eq!(state.pod("a-1").unwrap().phase, PodPhase::Pending);

        delete_deployment(&mut state, "a");
        let actions = reconcile(&mut state);
        assert_eq!(actions, vec![Action::Terminate { uid: "a-1".into(), deployment: "a".into() }]);
        assert!(reconcile(&mut state).is_empty());
    }

    #[test]
    fn probes() {
        let mut state = five_nodes();
        apply_deployment(&mut state, spec("a", 1, 100, 64));
        reconcile(&mut state);
        assert_eq!(probe_health(&mut state, "a-0", |_| true), ProbeStatus::NotReady);
        start_pending(&mut state);
        assert_eq!(probe_health(&mut state, "a-0", |_| true), ProbeStatus::Ready);
        assert_eq!(state.pod("a-0").unwrap().phase, PodPhase::Ready);
        for _ in 0..2 {
            assert_eq!(probe_health(&mut state, "a-0", |_| false), ProbeStatus::NotReady);
            assert_eq!(state.pod("a-0").unwrap().phase, PodPhase::Ready);
        }
        probe_health(&mut state, "a-0", |_| false);
        assert_eq!(state.pod("a-0").unwrap().phase, PodPhase::Failed);
        assert_eq!(probe_health(&mut state, "nope", |_| true), ProbeStatus::Missing);
    }

    #[test]
    fn limits_update_in_place() {
        let mut state = five_nodes();
        let mut s = spec("a", 1, 100, 128);
        s.node_name = Some("VM1".into());
        apply_deployment(&mut state, s);
        reconcile(&mut state);
        start_pending(&mut state);
        update_limits(&mut state, "a-0", ResourceLimits { cpu_millicores: 100, mem_mb: 256 }).unwrap();
        let pod = state.pod("a-0").unwrap();
        assert_eq!(pod.limits.mem_mb, 256);
        assert_eq!(pod.phase, PodPhase::Starting);
        assert_eq!(pod.restarts, 0);
        assert!(matches!(
            update_limits(&mut state, "a-0", ResourceLimits { cpu_millicores: 100, mem_mb: 4096 }),
            Err(ClusterError::WouldExceedNode { .. })
        ));
        update_limits(&mut state, "a-0", ResourceLimits { cpu_millicores: 0, mem_mb: 256 }).unwrap();
        assert_eq!(state.committed("VM1", None), (0, 256));
        assert!(matches!(update_limits(&mut state, "zz", ResourceLimits::default()), Err(ClusterError::PodNotFound(_))));
    }

    #[test]
    fn phase_transitions() {
        use PodPhase::*;
        assert!(Pending.can_become(Starting));
        assert!(Starting.can_become(Ready));
        assert!(!Pending.can_become(Ready));
        assert!(!Ready.can_become(Starting));
        assert!(Ready.can_become(Failed) && Failed.can_become(Terminated));
        assert!(!Terminated.can_become(Failed));
    }

    #[test]
    fn status_listing() {
        let mut state = five_nodes();
        let mut s = spec("a", 1, 500, 128);
        s.node_name = Some("VM1".into());
        apply_deployment(&mut state, s);
        reconcile(&mut state);
        let text = status_lines(&state);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[0], "Nectar1 server 0 0.0% 0.0%");
        assert_eq!(lines[3], "VM1 agent 1 50.0% 25.0%");
    }
}
