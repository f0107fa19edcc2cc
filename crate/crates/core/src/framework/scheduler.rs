use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::FrameworkError;
use crate::comm::ComponentId;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum SchedulerPolicy {
    #[default]
    RoundRobin,
}

impl FromStr for SchedulerPolicy {
    type Err = FrameworkError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "RoundRobin" => Ok(SchedulerPolicy::RoundRobin),
            other => Err(FrameworkError::UnknownScheduler(other.to_string())),
        }
    }
}

/// Cyclic cursor over actors in registration order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchedulerState {
    pub policy: SchedulerPolicy,
    pub cursor: usize,
    pub actor_order: Vec<ComponentId>,
}

impl SchedulerState {
    pub fn add_actor(&mut self, id: ComponentId) {
        if !self.actor_order.contains(&id) {
            self.actor_order.push(id);
        }
    }

    pub fn roundrobin_next(&mut self) -> Result<ComponentId, FrameworkError> {
        self.next_matching(|_| true).ok_or(FrameworkError::NoActors)
    }

    /// Next actor at or after the cursor that satisfies `capable`. Skipped
    /// actors do not consume the draw; the cursor only moves on success.
    pub fn next_matching<F: Fn(&ComponentId) -> bool>(&mut self, capable: F) -> Option<ComponentId> {
        let n = self.actor_order.len();
        (0..n).map(|i| (self.cursor + i) % n).find(|&i| capable(&self.actor_order[i])).map(|i| {
            self.cursor = (i + 1) % n;
            self.actor_order[i].clone()
        })
    }
}
