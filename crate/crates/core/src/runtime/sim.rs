use std::collections::{BTreeMap, HashMap, VecDeque};
use std::net::SocketAddrV4;
use std::path::PathBuf;

use serde_json::Value;

use super::topology::{ComponentPlan, KUBELET_PORT, TopologySpec, deployment_for, instantiate};
use super::{Mode, RuntimeError};
use crate::cluster::{self, Action, ClusterState, DeploymentSpec, PROBE_TIMEOUT_MS, PodPhase};
use crate::comm::{BindingStrategy, CommError, ComponentId, DeliveryResult, Envelope, Fabric, LinkClass, POD_IP_ENV, Peer};
use crate::framework::{Completed, Component, Context, FrameworkError, MASTER_ID, Master, Message, Payload, User, decode, dispatch, envelope};
use crate::overlay::NodeRecord;
use crate::simnet::{LatencyMatrix, SimTransport, VirtualClock, ms_to_ns, ns_to_ms};

/// Time a component spends on each message besides task compute.
pub const DEFAULT_HANDLING_MS: f64 = 0.05;
pub const DEFAULT_PROBE_PERIOD_MS: f64 = 1000.0;

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub seed: u64,
    pub matrix: LatencyMatrix,
    pub handling_ms: f64,
    /// Health probe and reconcile cadence of the orchestrator.
    pub probe_period_ms: f64,
    pub probe_timeout_ms: f64,
    /// Quiet time after starting each component during boot.
    pub settle_ms: f64,
    pub log_path: Option<PathBuf>,
    pub trace: bool,
}

impl SimConfig {
    pub fn new(seed: u64, matrix: LatencyMatrix) -> Self {
        Self {
            seed,
            matrix,
            handling_ms: DEFAULT_HANDLING_MS,
            probe_period_ms: DEFAULT_PROBE_PERIOD_MS,
            probe_timeout_ms: PROBE_TIMEOUT_MS as f64,
            settle_ms: 1000.0,
            log_path: None,
            trace: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimStats {
    pub delivered: u64,
    pub dropped: u64,
    pub routing_errors: u64,
    pub unreachable: u64,
    /// Data and telemetry envelopes delivered.
    pub app_messages: u64,
    /// Node crossings of those envelopes.
    pub app_links: u64,
    /// Proxy hops recorded on those envelopes.
    pub app_hops: u64,
    pub control_messages: u64,
    /// Envelopes whose reply address was not a live, reachable endpoint.
    pub reply_violations: u64,
    pub probes: u64,
    pub probe_failures: u64,
    pub reconcile_ticks: u64,
    pub component_errors: Vec<String>,
}

enum Event {
    Arrive { to: SocketAddrV4, env: Envelope, class: LinkClass, links: u32 },
    Process(usize),
    ProbeTick,
    ProbeDeadline(u64),
}

#[derive(Debug, Clone)]
enum Endpoint {
    Slot(usize),
    Kubelet,
}

struct Slot {
    id: ComponentId,
    comp: Option<Box<dyn Component>>,
    node: String,
    bound: SocketAddrV4,
    /// Node-address exposure used by the proxy.
    alias: Option<SocketAddrV4>,
    alive: bool,
    queue: VecDeque<Envelope>,
    busy_until: u64,
    scheduled: bool,
    pod: Option<String>,
}

struct Outgoing {
    env: Envelope,
    class: LinkClass,
    latency_ns: u64,
    links: u32,
}

/// Single-threaded simulation of one framework deployment.
pub struct SimRuntime {
    cfg: SimConfig,
    spec: TopologySpec,
    clock: VirtualClock<Event>,
    transport: SimTransport,
    fabric: Fabric,
    slots: Vec<Slot>,
    endpoints: HashMap<SocketAddrV4, Endpoint>,
    by_id: HashMap<ComponentId, usize>,
    cluster: Option<ClusterState>,
    pod_slots: HashMap<String, usize>,
    ports: BTreeMap<String, u16>,
    probes: BTreeMap<u64, String>,
    next_probe: u64,
    stats: SimStats,
    trace: Vec<String>,
    master: Option<SocketAddrV4>,
    logger: Option<SocketAddrV4>,
    user: Option<usize>,
}

struct SimCtx<'a> {
    rt: &'a mut SimRuntime,
    node: String,
    bound: SocketAddrV4,
    now_ns: u64,
    busy_ms: f64,
    out: Vec<Outgoing>,
}

impl Context for SimCtx<'_> {
    fn now_ms(&self) -> f64 {
        ns_to_ms(self.now_ns)
    }

    fn node(&self) -> &str {
        &self.node
    }

    fn bound(&self) -> SocketAddrV4 {
        self.bound
    }

    fn send(&mut self, env: Envelope, class: LinkClass) -> Result<(), CommError> {
        if let Some(o) = self.rt.transmit(&self.node, env, class)? {
            self.out.push(o);
        }
        Ok(())
    }

    fn busy(&mut self, ms: f64) {
        self.busy_ms += ms;
    }

    fn spawn_executor(&mut self, actor: &ComponentId, task_kind: &str) -> Result<Peer, FrameworkError> {
        self.rt.spawn_executor(actor, task_kind, &self.node)
    }

    fn routable(&self, addr: SocketAddrV4) -> bool {
        match self.rt.fabric.strategy {
            // the proxy routes by component identity, not address
            BindingStrategy::ProxyServer(_) => true,
            _ => self.rt.fabric.reachable(&self.node, *addr.ip()),
        }
    }
}

impl SimRuntime {
    /// Builds the mesh, the cluster in orchestrated mode, and starts the
    /// logger, master, actors and user one after another so actors register
    /// in layout order.
    pub fn boot(spec: TopologySpec, cfg: SimConfig) -> Result<Self, RuntimeError> {
        let plan = spec.plan(cfg.seed)?;
        let strategy = spec.strategy(&plan)?;
        for tag in [&spec.layout.user, &spec.layout.master, &spec.layout.logger].into_iter().chain(&spec.layout.actors) {
            spec.node(tag)?;
            plan.peer(tag)?;
        }
        let mut rt = Self {
            transport: SimTransport::new(cfg.matrix.clone(), cfg.seed),
            fabric: Fabric::new(plan, strategy),
            clock: VirtualClock::new(),
            slots: Vec::new(),
            endpoints: HashMap::new(),
            by_id: HashMap::new(),
            cluster: None,
            pod_slots: HashMap::new(),
            ports: BTreeMap::new(),
            probes: BTreeMap::new(),
            next_probe: 1,
            stats: SimStats::default(),
            trace: Vec::new(),
            master: None,
            logger: None,
            user: None,
            cfg,
            spec,
        };
        if rt.spec.mode == Mode::Orchestrated {
            rt.start_cluster()?;
        }
        for c in rt.spec.components() {
            let kind = c.kind;
            let idx = rt.launch(c)?;
            let bound = rt.slots[idx].bound;
            match kind {
                crate::framework::ComponentKind::RemoteLogger => rt.logger = Some(bound),
                crate::framework::ComponentKind::Master => rt.master = Some(bound),
                _ => {}
            }
            rt.run_for(rt.cfg.settle_ms);
        }
        let mut user = rt.spec.user();
        user.port = rt.alloc_port(&user.node);
        let spec = rt.bare_spec(&user)?;
        let (comp, bind) = instantiate(&spec, &[], None)?;
        let idx = rt.add_slot(comp, &user.node, bind, None);
        rt.user = Some(idx);

        for _ in 0..cluster::PROBE_FAILURE_THRESHOLD + 2 {
            let starting = rt.cluster.as_ref().is_some_and(|s| s.pods.iter().any(|p| matches!(p.phase, PodPhase::Pending | PodPhase::Starting)));
            if !starting {
                break;
            }
            rt.run_until_tick();
            rt.run_for(rt.cfg.probe_timeout_ms);
        }

        let registered = rt.master_component().map(|m| m.sched.actor_order.len()).unwrap_or(0);
        if registered != rt.spec.layout.actors.len() {
            return Err(RuntimeError::BootFailure(format!(
                "{registered} of {} actors registered: {}",
                rt.spec.layout.actors.len(),
                rt.stats.component_errors.join("; ")
            )));
        }
        Ok(rt)
    }

    fn start_cluster(&mut self) -> Result<(), RuntimeError> {
        let server = self.spec.node(&self.spec.cluster_server)?.clone();
        let server_ip = server.vpn_ip.ok_or(cluster::ClusterError::NoVpnAddress(server.name.clone()))?;
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(self.cfg.seed);
        let (mut state, token) = cluster::start_server_with(server.clone(), self.spec.pod_cidr, &mut rng)?;
        let agents: Vec<NodeRecord> = crate::overlay::table1_nodes().into_iter().filter(|n| n.tag != server.tag).collect();
        for node in agents {
            let node = self.spec.node(&node.tag)?.clone();
            cluster::join_agent(&mut state, node, server_ip, &token, self.fabric.plan())?;
        }
        for node in state.nodes() {
            if let Some(ip) = node.vpn_ip {
                self.endpoints.insert(SocketAddrV4::new(ip, KUBELET_PORT), Endpoint::Kubelet);
            }
        }
        for tag in [&self.spec.layout.master, &self.spec.layout.logger].into_iter().chain(&self.spec.layout.actors) {
            let name = &self.spec.node(tag)?.name;
            if state.node(name).is_none() {
                return Err(RuntimeError::BootFailure(format!("node `{tag}` is not a cluster member")));
            }
        }
        self.cluster = Some(state);
        self.clock.schedule_in(self.cfg.probe_period_ms, Event::ProbeTick);
        Ok(())
    }

    fn alloc_port(&mut self, tag: &str) -> u16 {
        let p = self.ports.entry(tag.to_string()).or_insert(super::FIRST_COMPONENT_PORT);
        *p += 1;
        *p - 1
    }

    fn tag_of(&self, name: &str) -> Option<String> {
        self.spec.nodes.iter().find(|n| n.name == name).map(|n| n.tag.clone())
    }

    fn deployment(&self, c: &ComponentPlan, host_network: bool) -> Result<DeploymentSpec, RuntimeError> {
        let node = self.spec.node(&c.node)?;
        let vpn = node.vpn_ip.ok_or_else(|| RuntimeError::BootFailure(format!("node `{}` has no vpn address", c.node)))?;
        let master = if c.kind == crate::framework::ComponentKind::Master { None } else { self.master };
        let logger = if c.kind == crate::framework::ComponentKind::RemoteLogger { None } else { self.logger };
        Ok(deployment_for(c, &node.name, host_network, vpn, master, logger))
    }

    fn bare_spec(&self, c: &ComponentPlan) -> Result<DeploymentSpec, RuntimeError> {
        self.deployment(c, true)
    }

    /// Starts one component and returns its slot.
    fn launch(&mut self, mut c: ComponentPlan) -> Result<usize, RuntimeError> {
        c.port = self.alloc_port(&c.node);
        match self.spec.mode {
            Mode::Native => {
                let spec = self.bare_spec(&c)?;
                let log = self.log_path_for(&spec);
                let (comp, bind) = instantiate(&spec, &[], log.as_deref())?;
                let idx = self.add_slot(comp, &c.node, bind, None);
                self.start_slot(idx);
                Ok(idx)
            }
            Mode::Orchestrated => {
                let spec = self.deployment(&c, self.fabric.strategy.uses_host_network())?;
                let name = spec.name.clone();
                cluster::apply_deployment(self.cluster.as_mut().expect("orchestrated"), spec);
                self.reconcile_now();
                let state = self.cluster.as_ref().expect("orchestrated");
                let uid = state
                    .live_pods_of(&name)
                    .map(|p| p.uid.clone())
                    .next()
                    .ok_or_else(|| RuntimeError::BootFailure(format!("no pod for `{name}`: {}", self.stats.component_errors.join("; "))))?;
                self.pod_slots.get(&uid).copied().ok_or_else(|| RuntimeError::BootFailure(format!("pod `{uid}` did not start")))
            }
        }
    }

    fn log_path_for(&self, spec: &DeploymentSpec) -> Option<PathBuf> {
        (spec.component == crate::framework::ComponentKind::RemoteLogger).then(|| self.cfg.log_path.clone()).flatten()
    }

    fn add_slot(&mut self, comp: Box<dyn Component>, tag: &str, bound: SocketAddrV4, pod: Option<String>) -> usize {
        let idx = self.slots.len();
        let id = comp.id().clone();
        let vpn = self.fabric.plan().peer(tag).map(|p| p.vpn_ip()).ok();
        let alias = match (self.fabric.strategy, vpn) {
            (BindingStrategy::ProxyServer(_), Some(ip)) if ip != *bound.ip() => Some(SocketAddrV4::new(ip, bound.port())),
            _ => None,
        };
        if self.fabric.book.node_of(*bound.ip()).is_none() {
            self.fabric.book.insert(*bound.ip(), tag);
        }
        self.endpoints.insert(bound, Endpoint::Slot(idx));
        if let Some(a) = alias {
            self.endpoints.insert(a, Endpoint::Slot(idx));
        }
        if let BindingStrategy::ProxyServer(_) = self.fabric.strategy {
            self.fabric.proxy.insert(id.clone(), alias.unwrap_or(bound));
        }
        self.by_id.insert(id.clone(), idx);
        if let Some(uid) = &pod {
            self.pod_slots.insert(uid.clone(), idx);
        }
        self.slots.push(Slot {
            id,
            comp: Some(comp),
            node: tag.to_string(),
            bound,
            alias,
            alive: true,
            queue: VecDeque::new(),
            busy_until: self.clock.now_ns(),
            scheduled: false,
            pod,
        });
        idx
    }

    fn stop_slot(&mut self, idx: usize) {
        let slot = &mut self.slots[idx];
        if !slot.alive {
            return;
        }
        slot.alive = false;
        slot.queue.clear();
        let (bound, alias, id) = (slot.bound, slot.alias, slot.id.clone());
        for addr in [Some(bound), alias].into_iter().flatten() {
            if matches!(self.endpoints.get(&addr), Some(Endpoint::Slot(i)) if *i == idx) {
                self.endpoints.remove(&addr);
            }
        }
        let host_ip = self.fabric.plan().peer_by_vpn_ip(*bound.ip()).is_some();
        if !host_ip {
            self.fabric.book.remove(*bound.ip());
        }
        if self.by_id.get(&id) == Some(&idx) {
            self.by_id.remove(&id);
            self.fabric.proxy.remove(&id);
        }
    }

    fn start_slot(&mut self, idx: usize) {
        let now = self.clock.now_ns();
        self.run_component(idx, None, now);
    }

    /// Routes one envelope now. `Ok(None)` means the network lost it.
    fn transmit(&mut self, from_node: &str, mut env: Envelope, class: LinkClass) -> Result<Option<Outgoing>, CommError> {
        match self.fabric.send(&mut self.transport, from_node, &mut env, class) {
            DeliveryResult::Delivered { latency_ms, links } => {
                if !self.endpoint_alive(env.dst) {
                    self.stats.unreachable += 1;
                    return Err(CommError::Unreachable(env.dst));
                }
                Ok(Some(Outgoing { env, class, latency_ns: ms_to_ns(latency_ms), links }))
            }
            DeliveryResult::Dropped => {
                self.stats.dropped += 1;
                Ok(None)
            }
            DeliveryResult::RoutingError(e) => {
                self.stats.routing_errors += 1;
                Err(e)
            }
        }
    }

    fn endpoint_alive(&self, addr: SocketAddrV4) -> bool {
        match self.endpoints.get(&addr) {
            Some(Endpoint::Slot(i)) => self.slots[*i].alive,
            Some(Endpoint::Kubelet) => true,
            None => false,
        }
    }

    fn send_out(&mut self, out: Vec<Outgoing>, depart_ns: u64) {
        for o in out {
            let at = depart_ns + o.latency_ns;
            self.clock.schedule_at(at, Event::Arrive { to: o.env.dst, env: o.env, class: o.class, links: o.links }).expect("departures are never in the past");
        }
    }

    /// Runs `on_start` (no envelope) or one handling step, then releases
    /// the component's sends once its handling time has passed.
    fn run_component(&mut self, idx: usize, env: Option<Envelope>, start_ns: u64) {
        let mut comp = self.slots[idx].comp.take().expect("component is not re-entered");
        let (node, bound, id) = (self.slots[idx].node.clone(), self.slots[idx].bound, self.slots[idx].id.clone());
        let mut ctx = SimCtx { rt: self, node, bound, now_ns: start_ns, busy_ms: 0.0, out: Vec::new() };
        let result = match &env {
            Some(e) => dispatch(comp.as_mut(), e, &mut ctx),
            None => comp.on_start(&mut ctx),
        };
        let (busy, out) = (ctx.busy_ms, std::mem::take(&mut ctx.out));
        self.slots[idx].comp = Some(comp);
        let handling = if env.is_some() { self.cfg.handling_ms } else { 0.0 };
        let finish = start_ns + ms_to_ns(handling + busy);
        if let Err(e) = result {
            self.stats.component_errors.push(format!("{id} at {:.3} ms: {e}", ns_to_ms(start_ns)));
        }
        if self.cfg.trace {
            let what = env.as_ref().map_or("start".to_string(), |e| format!("{} cid={}", e.msg_type, e.correlation_id));
            self.trace.push(format!("{start_ns} {id} {what} done={finish} out={}", out.len()));
        }
        self.send_out(out, finish);
        let slot = &mut self.slots[idx];
        slot.busy_until = slot.busy_until.max(finish);
    }

    fn handle_event(&mut self, ev: Event) {
        match ev {
            Event::Arrive { to, env, class, links } => self.arrive(to, env, class, links),
            Event::Process(idx) => self.process(idx),
            Event::ProbeTick => self.probe_tick(),
            Event::ProbeDeadline(cid) => {
                if let Some(uid) = self.probes.remove(&cid) {
                    self.probe_result(&uid, false);
                }
            }
        }
    }

    fn arrive(&mut self, to: SocketAddrV4, env: Envelope, class: LinkClass, links: u32) {
        match self.endpoints.get(&to).cloned() {
            Some(Endpoint::Slot(i)) if self.slots[i].alive => {
                self.count_delivery(&env, class, links);
                let now = self.clock.now_ns();
                let slot = &mut self.slots[i];
                slot.queue.push_back(env);
                if !slot.scheduled {
                    slot.scheduled = true;
                    let at = slot.busy_until.max(now);
                    self.clock.schedule_at(at, Event::Process(i)).expect("not in the past");
                }
            }
            Some(Endpoint::Kubelet) => {
                self.count_delivery(&env, class, links);
                if let Ok(Payload { msg: Message::Pong, .. }) = decode(&env) {
                    if let Some(uid) = self.probes.remove(&env.correlation_id) {
                        self.probe_result(&uid, true);
                    }
                }
            }
            _ => self.stats.dropped += 1,
        }
    }

    fn count_delivery(&mut self, env: &Envelope, class: LinkClass, links: u32) {
        let s = &mut self.stats;
        s.delivered += 1;
        if class == LinkClass::Control {
            s.control_messages += 1;
        } else {
            s.app_messages += 1;
            s.app_links += u64::from(links);
            s.app_hops += u64::from(env.hop_count);
        }
        let reply_ok = match self.fabric.strategy {
            BindingStrategy::HostNetwork => env.reply_to == env.src && self.endpoints.contains_key(&env.reply_to),
            _ => self.endpoints.contains_key(&env.reply_to),
        };
        if !reply_ok {
            self.stats.reply_violations += 1;
        }
    }

    fn process(&mut self, idx: usize) {
        let now = self.clock.now_ns();
        let slot = &mut self.slots[idx];
        let env = match (slot.alive, slot.queue.pop_front()) {
            (true, Some(env)) => env,
            _ => {
                slot.scheduled = false;
                return;
            }
        };
        self.run_component(idx, Some(env), now);
        let slot = &mut self.slots[idx];
        if slot.alive && !slot.queue.is_empty() {
            let at = slot.busy_until;
            self.clock.schedule_at(at, Event::Process(idx)).expect("not in the past");
        } else {
            slot.scheduled = false;
        }
    }

    /// Reconciles the cluster and starts or stops the affected pods.
    fn reconcile_now(&mut self) {
        let Some(state) = self.cluster.as_mut() else {
            return;
        };
        for action in cluster::reconcile(state) {
            match action {
                Action::Create { uid, .. } => {
                    if let Err(e) = self.launch_pod(&uid) {
                        self.stats.component_errors.push(format!("pod {uid}: {e}"));
                        if let Some(state) = self.cluster.as_mut() {
                            let _ = cluster::fail_pod(state, &uid);
                        }
                    }
                }
                Action::Terminate { uid, .. } => {
                    if let Some(&i) = self.pod_slots.get(&uid) {
                        self.stop_slot(i);
                    }
                }
                Action::Unschedulable { deployment, error } => self.stats.component_errors.push(format!("{deployment}: {error}")),
            }
        }
        if let Some(state) = self.cluster.as_mut() {
            cluster::start_pending(state);
        }
    }

    fn launch_pod(&mut self, uid: &str) -> Result<(), RuntimeError> {
        let state = self.cluster.as_ref().expect("orchestrated");
        let pod = state.pod(uid).cloned().ok_or_else(|| cluster::ClusterError::PodNotFound(uid.to_string()))?;
        let spec = state.deployments.get(&pod.deployment).cloned().ok_or_else(|| cluster::ClusterError::PodNotFound(uid.to_string()))?;
        let tag = self.tag_of(&pod.node).ok_or_else(|| cluster::ClusterError::NodeNotFound(pod.node.clone()))?;
        let extra = if pod.host_network { Vec::new() } else { vec![(POD_IP_ENV.to_string(), pod.pod_ip.to_string())] };
        let log = self.log_path_for(&spec);
        let (comp, bind) = instantiate(&spec, &extra, log.as_deref())?;
        if !pod.host_network {
            self.fabric.book.insert(pod.pod_ip, &tag);
        }
        let idx = self.add_slot(comp, &tag, bind, Some(uid.to_string()));
        self.start_slot(idx);
        Ok(())
    }

    fn spawn_executor(&mut self, actor: &ComponentId, task_kind: &str, node: &str) -> Result<Peer, FrameworkError> {
        let plan = ComponentPlan::executor(actor, task_kind, node);
        let id = plan.id.clone();
        let idx = self.launch(plan).map_err(|e| FrameworkError::BadInput(format!("cannot start executor: {e}")))?;
        Ok(Peer::new(id, self.slots[idx].bound))
    }

    fn probe_tick(&mut self) {
        self.stats.reconcile_ticks += 1;
        self.reconcile_now();
        let now = self.clock.now_ns();
        let targets: Vec<(String, usize)> = match &self.cluster {
            Some(state) => state
                .pods
                .iter()
                .filter(|p| matches!(p.phase, PodPhase::Starting | PodPhase::Ready))
                .filter_map(|p| self.pod_slots.get(&p.uid).map(|&i| (p.uid.clone(), i)))
                .collect(),
            None => Vec::new(),
        };
        for (uid, idx) in targets {
            let cid = self.next_probe;
            self.next_probe += 1;
            self.stats.probes += 1;
            let slot = &self.slots[idx];
            let node = slot.node.clone();
            let target = Peer::new(slot.id.clone(), slot.bound);
            let vpn = self.fabric.plan().peer(&node).map(|p| p.vpn_ip()).expect("pod nodes are mesh peers");
            let kubelet = SocketAddrV4::new(vpn, KUBELET_PORT);
            let env = envelope(kubelet, &ComponentId::new(format!("kubelet-{node}")), &target, Message::Ping, cid);
            match self.transmit(&node, env, LinkClass::Control) {
                Ok(out) => {
                    if let Some(o) = out {
                        self.send_out(vec![o], now);
                    }
                    self.probes.insert(cid, uid);
                    self.clock.schedule_in(self.cfg.probe_timeout_ms, Event::ProbeDeadline(cid));
                }
                Err(_) => self.probe_result(&uid, false),
            }
        }
        self.clock.schedule_in(self.cfg.probe_period_ms, Event::ProbeTick);
    }

    fn probe_result(&mut self, uid: &str, answered: bool) {
        let Some(state) = self.cluster.as_mut() else {
            return;
        };
        if !answered {
            self.stats.probe_failures += 1;
        }
        cluster::record_probe(state, uid, answered);
        if state.pod(uid).is_some_and(|p| p.phase == PodPhase::Failed) {
            if let Some(&i) = self.pod_slots.get(uid) {
                self.stop_slot(i);
            }
        }
    }

    /// Processes every event due within the next `ms`.
    pub fn run_for(&mut self, ms: f64) {
        let until = self.clock.now_ns() + ms_to_ns(ms);
        while let Some((_, ev)) = self.clock.pop_due(until) {
            self.handle_event(ev);
        }
        self.clock.advance(ns_to_ms(until)).expect("until is ahead of every fired event");
    }

    /// Submits one placement request from the user and runs the network
    /// until its result arrives or `deadline_ms` passes.
    pub fn submit(&mut self, app: &str, input: Value, deadline_ms: f64) -> Result<Completed, RuntimeError> {
        let idx = self.user.expect("booted runtime has a user");
        let now = self.clock.now_ns();
        let mut comp = self.slots[idx].comp.take().expect("user is idle");
        let (node, bound) = (self.slots[idx].node.clone(), self.slots[idx].bound);
        let mut ctx = SimCtx { rt: self, node, bound, now_ns: now, busy_ms: 0.0, out: Vec::new() };
        let user = comp.as_any_mut().downcast_mut::<User>().expect("user slot holds a user");
        let submitted = user.submit(&mut ctx, app, input);
        let out = std::mem::take(&mut ctx.out);
        self.slots[idx].comp = Some(comp);
        let request_id = submitted?;
        self.send_out(out, now);

        let deadline = now + ms_to_ns(deadline_ms);
        loop {
            if let Some(done) = self.user_mut().take(request_id) {
                return Ok(done);
            }
            match self.clock.pop_due(deadline) {
                Some((_, ev)) => self.handle_event(ev),
                None => break,
            }
        }
        self.user_mut().abandon(request_id);
        self.clock.advance(ns_to_ms(deadline))?;
        Err(FrameworkError::Timeout(deadline_ms).into())
    }

    fn user_mut(&mut self) -> &mut User {
        let idx = self.user.expect("booted runtime has a user");
        self.slots[idx].comp.as_mut().and_then(|c| c.as_any_mut().downcast_mut::<User>()).expect("user slot holds a user")
    }

    /// Crashes the container of `uid`; the orchestrator notices at once.
    pub fn kill_pod(&mut self, uid: &str) -> Result<(), RuntimeError> {
        let state = self.cluster.as_mut().ok_or_else(|| RuntimeError::BadOption("no cluster in native mode".into()))?;
        cluster::fail_pod(state, uid)?;
        if let Some(&i) = self.pod_slots.get(uid) {
            self.stop_slot(i);
        }
        Ok(())
    }

    /// Runs until the next orchestrator tick has been processed.
    pub fn run_until_tick(&mut self) {
        let ticks = self.stats.reconcile_ticks;
        while self.stats.reconcile_ticks == ticks {
            match self.clock.pop_due(u64::MAX) {
                Some((_, ev)) => self.handle_event(ev),
                None => break,
            }
        }
    }

    pub fn component<T: 'static>(&self, id: &str) -> Option<&T> {
        let idx = *self.by_id.get(&ComponentId::new(id))?;
        self.slots[idx].comp.as_ref()?.as_any().downcast_ref::<T>()
    }

    pub fn master_component(&self) -> Option<&Master> {
        self.component::<Master>(MASTER_ID)
    }

    /// Live component ids with their node tag and bound address.
    pub fn components(&self) -> Vec<(ComponentId, String, SocketAddrV4)> {
        let mut v: Vec<_> = self.slots.iter().filter(|s| s.alive).map(|s| (s.id.clone(), s.node.clone(), s.bound)).collect();
        v.sort_by(|a, b| a.0.cmp(&b.0));
        v
    }

    pub fn cluster(&self) -> Option<&ClusterState> {
        self.cluster.as_ref()
    }

    pub fn stats(&self) -> &SimStats {
        &self.stats
    }

    pub fn fabric(&self) -> &Fabric {
        &self.fabric
    }

    pub fn spec(&self) -> &TopologySpec {
        &self.spec
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn now_ms(&self) -> f64 {
        self.clock.now_ms()
    }

    pub fn trace(&self) -> &[String] {
        &self.trace
    }

    pub fn pod_of(&self, id: &str) -> Option<&str> {
        let idx = *self.by_id.get(&ComponentId::new(id))?;
        self.slots[idx].pod.as_deref()
    }
}
