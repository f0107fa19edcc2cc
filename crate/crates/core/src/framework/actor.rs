use std::any::Any;
use std::collections::{BTreeMap, HashMap};

use serde_json::Value;

use super::{Component, ComponentKind, Context, FrameworkError, Message, Payload, ProfileEvent, send_msg};
use crate::apps::{TaskOutput, execute_task};
use crate::comm::{ComponentId, Envelope, Peer};

fn register(ctx: &mut dyn Context, id: &ComponentId, kind: ComponentKind, master: &Peer, capabilities: Vec<String>) -> Result<(), FrameworkError> {
    let msg = Message::Register { kind, addr: ctx.bound(), node: ctx.node().to_string(), capabilities };
    send_msg(ctx, id, master, msg, 0).map_err(Into::into)
}

/// Node agent: hosts executors for the task kinds it advertises.
pub struct Actor {
    id: ComponentId,
    master: Peer,
    capabilities: Vec<String>,
    executors: BTreeMap<String, Peer>,
    pending: HashMap<(u64, usize), Peer>,
    /// Requests whose reply address differed from the master's bound one.
    pub reply_mismatches: u64,
    pub tasks_run: u64,
}

impl Actor {
    pub fn new(id: ComponentId, master: Peer, capabilities: Vec<String>) -> Self {
        Self { id, master, capabilities, executors: BTreeMap::new(), pending: HashMap::new(), reply_mismatches: 0, tasks_run: 0 }
    }

    pub fn capabilities(&self) -> &[String] {
        &self.capabilities
    }

    /// Starts an executor for `task_kind`, or returns the cached one.
    pub fn spawn_executor(&mut self, ctx: &mut dyn Context, task_kind: &str) -> Result<Peer, FrameworkError> {
        if !self.capabilities.iter().any(|c| c == task_kind) {
            return Err(FrameworkError::IncapableActor { actor: self.id.clone(), kind: task_kind.to_string() });
        }
        if let Some(p) = self.executors.get(task_kind) {
            return Ok(p.clone());
        }
        let peer = ctx.spawn_executor(&self.id, task_kind)?;
        self.executors.insert(task_kind.to_string(), peer.clone());
        Ok(peer)
    }

    pub fn executors(&self) -> impl Iterator<Item = (&String, &Peer)> {
        self.executors.iter()
    }
}

impl Component for Actor {
    fn id(&self) -> &ComponentId {
        &self.id
    }

    fn kind(&self) -> ComponentKind {
        ComponentKind::Actor
    }

    fn on_start(&mut self, ctx: &mut dyn Context) -> Result<(), FrameworkError> {
        register(ctx, &self.id, ComponentKind::Actor, &self.master, self.capabilities.clone())
    }

    fn handle(&mut self, env: &Envelope, payload: Payload, ctx: &mut dyn Context) -> Result<(), FrameworkError> {
        match payload.msg {
            Message::RunTask { request_id, task_idx, task_kind, params, input, prev } => {
                if env.reply_to != self.master.addr {
                    self.reply_mismatches += 1;
                }
                let reply = Peer::new(payload.from, env.reply_to);
                let executor = match self.spawn_executor(ctx, &task_kind) {
                    Ok(p) => p,
                    Err(e) => {
                        let msg = Message::TaskResult { request_id, task_idx, output: Err(e.to_string()) };
                        return send_msg(ctx, &self.id, &reply, msg, request_id).map_err(Into::into);
                    }
                };
                self.pending.insert((request_id, task_idx), reply);
                let msg = Message::Exec { request_id, task_idx, task_kind, params, input, prev };
                send_msg(ctx, &self.id, &executor, msg, request_id).map_err(Into::into)
            }
            Message::ExecResult { request_id, task_idx, output } => {
                let reply = self
                    .pending
                    .remove(&(request_id, task_idx))
                    .ok_or_else(|| FrameworkError::BadInput(format!("unexpected result for {request_id}/{task_idx}")))?;
                self.tasks_run += 1;
                send_msg(ctx, &self.id, &reply, Message::TaskResult { request_id, task_idx, output }, request_id).map_err(Into::into)
            }
            other => Err(FrameworkError::BadInput(format!("actor got `{}`", other.msg_type()))),
        }
    }

    fn as_any(&self) -> &dyn Any {
        self
    }

    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}

/// Hosts the logic of one task kind and is reused across requests.
pub struct TaskExecutor {
    id: ComponentId,
    task_kind: String,
    master: Peer,
    logger: Option<Peer>,
    pub executed: u64,
}

impl TaskExecutor {
    pub fn new(id: ComponentId, task_kind: &str, master: Peer, logger: Option<Peer>) -> Self {
        Self { id, task_kind: task_kind.to_string(), master, logger, executed: 0 }
    }

    pub fn task_kind(&self) -> &str {
        &self.task_kind
    }

    pub fn run(&mut self, task_kind: &str, params: &Value, input: &Value, prev: Option<&Value>) -> Result<TaskOutput, FrameworkError> {
        if task_kind != self.task_kind {
            return Err(FrameworkError::BadInput(format!("executor for `{}` got `{task_kind}`", self.task_kind)));
        }
        let out = execute_task(task_kind, params, input, prev)?;
        self.executed += 1;
        Ok(out)
    }
}

impl Component for TaskExecutor {
    fn id(&self) -> &ComponentId {
        &self.id
    }

    fn kind(&self) -> ComponentKind {
        ComponentKind::TaskExecutor
    }

    fn on_start(&mut self, ctx: &mut dyn Context) -> Result<(), FrameworkError> {
        register(ctx, &self.id, ComponentKind::TaskExecutor, &self.master, vec![self.task_kind.clone()])
    }

    fn handle(&mut self, env: &Envelope, payload: Payload, ctx: &mut dyn Context) -> Result<(), FrameworkError> {
        let Message::Exec { request_id, task_idx, task_kind, params, input, prev } = payload.msg else {
            return Err(FrameworkError::BadInput(format!("executor got `{}`", payload.msg.msg_type())));
        };
        let output = match self.run(&task_kind, &params, &input, prev.as_ref()) {
            Ok(out) => {
                ctx.busy(out.busy_ms);
                if let Some(logger) = self.logger.clone() {
                    let event = ProfileEvent::event(&self.id, "exec_ms", out.busy_ms, ctx.now_ms() as u64);
                    // telemetry loss must not fail the task
                    let _ = send_msg(ctx, &self.id, &logger, Message::Log { event }, request_id);
                }
                Ok(out.value)
            }
            Err(e) => Err(e.to_string()),
        };
        let reply = Peer::new(payload.from, env.reply_to);
        send_msg(ctx, &self.id, &reply, Message::ExecResult { request_id, task_idx, output }, request_id).map_err(Into::into)
    }

    fn as_any(&self) -> &dyn Any {
        self
    }

    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::apps::{FD_FRAME, FORMULA_ADD, FORMULA_MUL};
    use crate::framework::testing::Recorder;
    use crate::framework::{decode, envelope};
    use serde_json::json;

    fn actor() -> Actor {
        Actor::new("actor-1".into(), Peer::new("master", "192.0.0.4:5001".parse().unwrap()), vec![FORMULA_ADD.into(), FORMULA_MUL.into()])
    }

    #[test]
    fn executors_are_cached_per_kind() {
        let mut a = actor();
        let mut ctx = Recorder::new("E", "192.0.0.5:5002");
        let first = a.spawn_executor(&mut ctx, FORMULA_ADD).unwrap();
        let again = a.spawn_executor(&mut ctx, FORMULA_ADD).unwrap();
        assert_eq!(first, again);
        let other = a.spawn_executor(&mut ctx, FORMULA_MUL).unwrap();
        assert_ne!(first.id, other.id);
        assert_eq!(ctx.spawned.len(), 2);
        assert_eq!(
            a.spawn_executor(&mut ctx, FD_FRAME),
            Err(FrameworkError::IncapableActor { actor: "actor-1".into(), kind: FD_FRAME.into() })
        );
    }

    #[test]
    fn registers_on_start() {
        let mut a = actor();
        let mut ctx = Recorder::new("E", "192.0.0.5:5002");
        a.on_start(&mut ctx).unwrap();
        let sent = ctx.take();
        assert_eq!(sent[0].0.dst, "192.0.0.4:5001".parse().unwrap());
        assert!(matches!(&sent[0].1.msg, Message::Register { kind: ComponentKind::Actor, node, .. } if node == "E"));
    }

    #[test]
    fn relays_through_executor_and_tracks_reply_address() {
        let mut a = actor();
        let mut ctx = Recorder::new("E", "192.0.0.5:5002");
        let master = Peer::new("master", "192.0.0.4:5001".parse().unwrap());
        let run = Message::RunTask { request_id: 1, task_idx: 0, task_kind: FORMULA_ADD.into(), params: json!({"lhs": "a", "rhs": "b"}), input: json!({"a": 2, "b": 3}), prev: None };
        let env = envelope(master.addr, &master.id, &Peer::new("actor-1", ctx.bound), run.clone(), 1);
        a.handle(&env, decode(&env).unwrap(), &mut ctx).unwrap();
        assert_eq!(a.reply_mismatches, 0);
        let (exec_env, exec) = ctx.take().remove(0);

        let mut x = TaskExecutor::new(exec_env.target.clone().unwrap(), FORMULA_ADD, master.clone(), None);
        let mut xctx = Recorder::new("E", &exec_env.dst.to_string());
        x.handle(&exec_env, exec, &mut xctx).unwrap();
        assert_eq!(xctx.busy_ms, crate::apps::FORMULA_TASK_COST_MS);
        let (res_env, res) = xctx.take().remove(0);
        assert_eq!(res_env.dst, ctx.bound);
        a.handle(&res_env, res, &mut ctx).unwrap();
        let (back, p) = ctx.take().remove(0);
        assert_eq!(back.dst, master.addr);
        assert_eq!(p.msg, Message::TaskResult { request_id: 1, task_idx: 0, output: Ok(json!(5.0)) });

        let stray = envelope("10.42.0.9:5001".parse().unwrap(), &master.id, &Peer::new("actor-1", ctx.bound), run, 2);
        a.handle(&stray, decode(&stray).unwrap(), &mut ctx).unwrap();
        assert_eq!(a.reply_mismatches, 1);
    }

    #[test]
    fn executor_rejects_bad_input() {
        let mut x = TaskExecutor::new("x".into(), FORMULA_ADD, Peer::new("master", "192.0.0.4:5001".parse().unwrap()), None);
        assert!(matches!(x.run(FORMULA_ADD, &json!({"lhs": "a", "rhs": "b"}), &json!({"a": "?"}), None), Err(FrameworkError::App(_))));
        assert!(matches!(x.run(FD_FRAME, &json!({}), &json!({}), None), Err(FrameworkError::BadInput(_))));
        assert_eq!(x.run(FORMULA_ADD, &json!({"lhs": "a", "rhs": "b"}), &json!({"a": 2, "b": 3}), None).unwrap().value, json!(5.0));
    }
}
