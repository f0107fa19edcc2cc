use std::any::Any;
use std::collections::BTreeMap;
use std::net::SocketAddrV4;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Component, ComponentKind, Context, FrameworkError, Message, Payload, ProfileEvent, SchedulerState, send_msg};
use crate::apps::{AppTag, TaskGraph, build_app, chain_input};
use crate::comm::{ComponentId, Envelope, Peer};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegistrationRecord {
    pub component_id: ComponentId,
    pub kind: ComponentKind,
    pub address: SocketAddrV4,
    pub node: String,
    pub capabilities: Vec<String>,
    pub registered_tick: u64,
}

impl RegistrationRecord {
    pub fn new(id: ComponentId, kind: ComponentKind, address: SocketAddrV4, node: &str, capabilities: Vec<String>) -> Self {
        Self { component_id: id, kind, address, node: node.to_string(), capabilities, registered_tick: 0 }
    }

    pub fn at_tick(mut self, tick: u64) -> Self {
        self.registered_tick = tick;
        self
    }

    pub fn peer(&self) -> Peer {
        Peer::new(self.component_id.clone(), self.address)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlacementRequest {
    pub request_id: u64,
    pub app_name: String,
    pub user: Peer,
    pub input: Value,
    pub submitted_tick: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlacementPlan {
    pub request_id: u64,
    pub app: AppTag,
    pub graph: TaskGraph,
    pub order: Vec<usize>,
    /// Actor per task, indexed like `graph.tasks`.
    pub assignments: Vec<ComponentId>,
}

#[derive(Debug)]
struct Inflight {
    plan: PlacementPlan,
    user: Peer,
    input: Value,
    outputs: Vec<Option<Value>>,
    step: usize,
}

/// Registry, round-robin scheduler and placement driver.
pub struct Master {
    id: ComponentId,
    logger: Option<Peer>,
    pub registry: BTreeMap<ComponentId, RegistrationRecord>,
    pub sched: SchedulerState,
    inflight: BTreeMap<u64, Inflight>,
    /// Tasks assigned per actor.
    pub assigned: BTreeMap<ComponentId, u64>,
    pub completed: u64,
    pub errors: Vec<FrameworkError>,
}

impl Master {
    pub fn new(id: ComponentId, logger: Option<Peer>, sched: SchedulerState) -> Self {
        Self {
            id,
            logger,
            registry: BTreeMap::new(),
            sched,
            inflight: BTreeMap::new(),
            assigned: BTreeMap::new(),
            completed: 0,
            errors: Vec::new(),
        }
    }

    /// Records a component; `routable` says whether its advertised address
    /// can be reached from here.
    pub fn register(&mut self, record: RegistrationRecord, routable: bool) -> Result<(), FrameworkError> {
        let address = record.address;
        if !routable {
            return Err(FrameworkError::UnroutableAddress(address));
        }
        if self.registry.values().any(|r| r.address == address && r.component_id != record.component_id) {
            return Err(FrameworkError::DuplicateAddress(address));
        }
        if record.kind == ComponentKind::Actor {
            self.sched.add_actor(record.component_id.clone());
        }
        self.registry.insert(record.component_id.clone(), record);
        Ok(())
    }

    /// Assigns every task of the requested app to an actor. The scheduler
    /// only advances if the whole app can be placed.
    pub fn handle_placement(&mut self, req: &PlacementRequest) -> Result<PlacementPlan, FrameworkError> {
        let app: AppTag = req.app_name.parse().map_err(|_| FrameworkError::UnknownApp(req.app_name.clone()))?;
        let graph = build_app(app);
        let order = graph.topo_order()?;
        if self.sched.actor_order.is_empty() {
            return Err(FrameworkError::NoActors);
        }
        let mut sched = self.sched.clone();
        let mut assignments = vec![ComponentId::new(""); graph.tasks.len()];
        for &i in &order {
            let kind = &graph.tasks[i].task_kind;
            let registry = &self.registry;
            assignments[i] = sched
                .next_matching(|id| registry.get(id).is_some_and(|r| r.capabilities.iter().any(|c| c == kind)))
                .ok_or_else(|| FrameworkError::NoCapableActor(kind.clone()))?;
        }
        self.sched = sched;
        for a in &assignments {
            *self.assigned.entry(a.clone()).or_insert(0) += 1;
        }
        Ok(PlacementPlan { request_id: req.request_id, app, graph, order, assignments })
    }

    pub fn inflight(&self) -> usize {
        self.inflight.len()
    }

    fn log(&mut self, ctx: &mut dyn Context, metric: &str, value: f64) {
        if let Some(logger) = self.logger.clone() {
            let event = ProfileEvent::event(&self.id, metric, value, ctx.now_ms() as u64);
            if let Err(e) = send_msg(ctx, &self.id, &logger, Message::Log { event }, 0) {
                self.errors.push(e.into());
            }
        }
    }

    fn dispatch_next(&mut self, ctx: &mut dyn Context, request_id: u64) -> Result<(), FrameworkError> {
        let f = self.inflight.get(&request_id).expect("inflight request");
        let idx = f.plan.order[f.step];
        let task = &f.plan.graph.tasks[idx];
        let actor = self.registry.get(&f.plan.assignments[idx]).map(RegistrationRecord::peer).ok_or(FrameworkError::NoActors)?;
        let msg = Message::RunTask {
            request_id,
            task_idx: idx,
            task_kind: task.task_kind.clone(),
            params: task.params.clone(),
            input: f.input.clone(),
            prev: chain_input(&f.plan.graph, idx, &f.outputs),
        };
        send_msg(ctx, &self.id, &actor, msg, request_id).map_err(Into::into)
    }

    fn finish(&mut self, ctx: &mut dyn Context, request_id: u64, output: Result<Value, String>) -> Result<(), FrameworkError> {
        let f = self.inflight.remove(&request_id).expect("inflight request");
        self.completed += 1;
        send_msg(ctx, &self.id, &f.user, Message::Result { request_id, output }, request_id)?;
        Ok(())
    }
}

impl Component for Master {
    fn id(&self) -> &ComponentId {
        &self.id
    }

    fn kind(&self) -> ComponentKind {
        ComponentKind::Master
    }

    fn handle(&mut self, env: &Envelope, payload: Payload, ctx: &mut dyn Context) -> Result<(), FrameworkError> {
        match payload.msg {
            Message::Register { kind, addr, node, capabilities } => {
                let routable = ctx.routable(addr);
                let tick = ctx.now_ms() as u64;
                let record = RegistrationRecord::new(payload.from, kind, addr, &node, capabilities).at_tick(tick);
                match self.register(record, routable) {
                    Ok(_) => {
                        self.log(ctx, "register", 1.0);
                        Ok(())
                    }
                    Err(e) => {
                        self.errors.push(e.clone());
                        Err(e)
                    }
                }
            }
            Message::Placement { request_id, app, input } => {
                let user = Peer::new(payload.from, env.reply_to);
                let req = PlacementRequest { request_id, app_name: app, user: user.clone(), input: input.clone(), submitted_tick: ctx.now_ms() as u64 };
                match self.handle_placement(&req) {
                    Ok(plan) => {
                        self.log(ctx, "placement", plan.graph.tasks.len() as f64);
                        let outputs = vec![None; plan.graph.tasks.len()];
                        self.inflight.insert(request_id, Inflight { plan, user, input, outputs, step: 0 });
                        self.dispatch_next(ctx, request_id)
                    }
                    Err(e) => {
                        self.errors.push(e.clone());
                        send_msg(ctx, &self.id, &user, Message::Result { request_id, output: Err(e.to_string()) }, request_id)?;
                        Ok(())
                    }
                }
            }
            Message::TaskResult { request_id, task_idx, output } => {
                let Some(f) = self.inflight.get_mut(&request_id) else {
                    return Err(FrameworkError::BadInput(format!("no request {request_id} in flight")));
                };
                match output {
                    Err(e) => self.finish(ctx, request_id, Err(e)),
                    Ok(v) => {
                        f.outputs[task_idx] = Some(v.clone());
                        f.step += 1;
                        if f.step == f.plan.order.len() {
                            self.finish(ctx, request_id, Ok(v))
                        } else {
                            self.dispatch_next(ctx, request_id)
                        }
                    }
                }
            }
            other => Err(FrameworkError::BadInput(format!("master got `{}`", other.msg_type()))),
        }
    }

    fn as_any(&self) -> &dyn Any {
        self
    }

    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}
