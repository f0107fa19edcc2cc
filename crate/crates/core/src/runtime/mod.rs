//! Hosts framework components on a network.
//!
//! [`SimRuntime`] drives them from one event loop over the simulated
//! transport, optionally inside pods of a reconciled cluster.
//! [`SocketRuntime`] runs each component on its own thread behind a real
//! TCP listener. Both speak the same [`Context`](crate::framework::Context)
//! contract, so components cannot tell them apart.

mod sim;
mod socket;
mod topology;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use sim::{DEFAULT_HANDLING_MS, DEFAULT_PROBE_PERIOD_MS, SimConfig, SimRuntime, SimStats};
pub use socket::SocketRuntime;
pub use topology::{
    ComponentPlan, ENV_CAPABILITIES, ENV_COMPONENT_ID, ENV_TASK_KIND, FIRST_COMPONENT_PORT, KUBELET_PORT, PROXY_PORT, Pattern, TopologySpec,
    deployment_for, instantiate,
};

use crate::cluster::ClusterError;
use crate::comm::CommError;
use crate::framework::FrameworkError;
use crate::overlay::OverlayError;
use crate::simnet::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Components run in pods of a reconciled, health-probed cluster.
    Orchestrated,
    /// Components run as bare processes on their nodes.
    Native,
}

impl FromStr for Mode {
    type Err = RuntimeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "orchestrated" => Ok(Mode::Orchestrated),
            "native" => Ok(Mode::Native),
            _ => Err(RuntimeError::BadOption(format!("unknown mode `{s}`"))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Orchestrated => "orchestrated",
            Mode::Native => "native",
        })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RuntimeError {
    #[error("boot failed: {0}")]
    BootFailure(String),
    #[error("{0}")]
    BadOption(String),
    #[error(transparent)]
    Framework(#[from] FrameworkError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Comm(#[from] CommError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Overlay(#[from] OverlayError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}
