use std::any::Any;
use std::collections::BTreeMap;

use serde_json::Value;

use super::{Component, ComponentKind, Context, FrameworkError, Message, Payload, send_msg};
use crate::comm::{ComponentId, Envelope, Peer};

#[derive(Debug, Clone, PartialEq)]
pub struct Completed {
    pub request_id: u64,
    pub output: Result<Value, String>,
    pub response_ms: f64,
}

/// Request origin. Response time runs from submission to the arrival of
/// the final result, on the user's own clock, rounded to whole nanoseconds
/// so it does not depend on the absolute clock value.
pub struct User {
    id: ComponentId,
    master: Peer,
    next_request: u64,
    pending: BTreeMap<u64, f64>,
    completed: BTreeMap<u64, Completed>,
}

impl User {
    pub fn new(id: ComponentId, master: Peer) -> Self {
        Self { id, master, next_request: 1, pending: BTreeMap::new(), completed: BTreeMap::new() }
    }

    pub fn submit(&mut self, ctx: &mut dyn Context, app: &str, input: Value) -> Result<u64, FrameworkError> {
        let request_id = self.next_request;
        let msg = Message::Placement { request_id, app: app.to_string(), input };
        send_msg(ctx, &self.id, &self.master, msg, request_id).map_err(|_| FrameworkError::MasterUnreachable)?;
        self.next_request += 1;
        self.pending.insert(request_id, ctx.now_ms());
        Ok(request_id)
    }

    pub fn take(&mut self, request_id: u64) -> Option<Completed> {
        self.completed.remove(&request_id)
    }

    /// Gives up on a request; a late result is then ignored.
    pub fn abandon(&mut self, request_id: u64) {
        self.pending.remove(&request_id);
    }

    pub fn pending(&self) -> usize {
        self.pending.len()
    }
}

impl Component for User {
    fn id(&self) -> &ComponentId {
        &self.id
    }

    fn kind(&self) -> ComponentKind {
        ComponentKind::User
    }

    fn handle(&mut self, _env: &Envelope, payload: Payload, ctx: &mut dyn Context) -> Result<(), FrameworkError> {
        match payload.msg {
            Message::Result { request_id, output } => {
                if let Some(t0) = self.pending.remove(&request_id) {
                    let response_ms = ((ctx.now_ms() - t0) * 1e6).round() / 1e6;
                    self.completed.insert(request_id, Completed { request_id, output, response_ms });
                }
                Ok(())
            }
            other => Err(FrameworkError::BadInput(format!("user got `{}`", other.msg_type()))),
        }
    }

    fn as_any(&self) -> &dyn Any {
        self
    }

    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}
