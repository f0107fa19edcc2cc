use serde::{Deserialize, Serialize};

use super::{LatencyMatrix, SimError, USER_NODE};
use crate::apps::{TaskGraph, task_cost_ms};

/// Node tag for each component of one deployment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub user: String,
    pub master: String,
    pub logger: String,
    /// In registration order, which is also round-robin order.
    pub actors: Vec<String>,
    /// Node running the forwarding proxy, when the proxy pattern is used.
    #[serde(default)]
    pub proxy: Option<String>,
}

impl Layout {
    /// Master and one actor on the edge; logger and two actors in the cloud.
    pub fn hybrid() -> Self {
        Self {
            user: USER_NODE.into(),
            master: "D".into(),
            logger: "A".into(),
            actors: vec!["E".into(), "B".into(), "C".into()],
            proxy: None,
        }
    }

    pub fn cloud() -> Self {
        Self {
            user: USER_NODE.into(),
            master: "A".into(),
            logger: "A".into(),
            actors: vec!["B".into(), "C".into(), "A".into()],
            proxy: None,
        }
    }

    /// Everything, the user included, on one node.
    pub fn single_node(tag: &str) -> Self {
        Self { user: tag.into(), master: tag.into(), logger: tag.into(), actors: vec![tag.into()], proxy: None }
    }

    pub fn with_proxy(mut self, tag: &str) -> Self {
        self.proxy = Some(tag.into());
        self
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.actors.is_empty() {
            return Err(SimError::IncompleteLayout("no actors".into()));
        }
        let named = [&self.user, &self.master, &self.logger].into_iter().chain(&self.actors).chain(&self.proxy);
        if named.into_iter().any(|t| t.is_empty()) {
            return Err(SimError::IncompleteLayout("component without a node".into()));
        }
        Ok(())
    }
}

/// Closed-form response time of one request.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub response_ms: f64,
    /// Messages on the critical path.
    pub messages: u32,
    /// Node-to-node crossings on the critical path.
    pub links: u32,
}

/// Jitter-free, loss-free response time of one request with no handling
/// overhead, starting from the first registered actor.
pub fn expected_response_time(matrix: &LatencyMatrix, layout: &Layout, app: &TaskGraph) -> Result<f64, SimError> {
    Ok(expected_response_time_with(matrix, layout, app, 0, 0.0)?.response_ms)
}

/// Follows the placement exchange: user to master, then per task master to
/// actor, actor to its local executor and back, actor to master, and
/// finally master to user. `cursor` is the round-robin position before the
/// request; `handling_ms` is charged each time a framework component
/// handles a message.
pub fn expected_response_time_with(matrix: &LatencyMatrix, layout: &Layout, app: &TaskGraph, cursor: usize, handling_ms: f64) -> Result<Estimate, SimError> {
    layout.validate()?;
    let mut links = 0;
    let mut messages = 0;
    let mut leg = |a: &str, b: &str| -> Result<f64, SimError> {
        messages += 1;
        match &layout.proxy {
            Some(p) => {
                links += 2;
                Ok(matrix.one_way_ms(a, p)? + matrix.one_way_ms(p, b)?)
            }
            None => {
                links += 1;
                matrix.one_way_ms(a, b)
            }
        }
    };
    let order = app.topo_order().map_err(|e| SimError::IncompleteLayout(e.to_string()))?;
    let (user, master) = (layout.user.as_str(), layout.master.as_str());

    let mut total = leg(user, master)? + handling_ms;
    for (k, &i) in order.iter().enumerate() {
        let actor = layout.actors[(cursor + k) % layout.actors.len()].as_str();
        let task = &app.tasks[i];
        let cost = task_cost_ms(&task.task_kind, &task.params).map_err(|e| SimError::IncompleteLayout(e.to_string()))?;
        total += leg(master, actor)? + handling_ms;
        total += leg(actor, actor)? + handling_ms + cost;
        total += leg(actor, actor)? + handling_ms;
        total += leg(actor, master)? + handling_ms;
    }
    total += leg(master, user)?;
    Ok(Estimate { response_ms: total, messages, links })
}

/// Mean over `samples` consecutive requests, the cursor advancing by one
/// per task as the round-robin scheduler does.
pub fn expected_mean_response(
    matrix: &LatencyMatrix,
    layout: &Layout,
    app: &TaskGraph,
    start_cursor: usize,
    handling_ms: f64,
    samples: usize,
) -> Result<Estimate, SimError> {
    if samples == 0 {
        return Err(SimError::IncompleteLayout("no samples".into()));
    }
    let mut sum = 0.0;
    let mut last = None;
    for s in 0..samples {
        let e = expected_response_time_with(matrix, layout, app, start_cursor + s * app.tasks.len(), handling_ms)?;
        sum += e.response_ms;
        last = Some(e);
    }
    let last = last.expect("samples > 0");
    Ok(Estimate { response_ms: sum / samples as f64, ..last })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::apps::{AppTag, FD_FRAME, TaskNode, build_app};
    use crate::simnet::{LayerLatencies, LinkSpec, sim_nodes};
    use serde_json::json;

    fn zero_cost_app(tasks: usize) -> TaskGraph {
        let t = TaskNode { task_kind: FD_FRAME.into(), params: json!({"per_frame_cost_ms": 0.0, "frames": 1}) };
        TaskGraph { app_name: "z".into(), tasks: vec![t; tasks], edges: (1..tasks).map(|i| (i - 1, i)).collect() }
    }

    #[test]
    fn one_node_is_only_local_hops() {
        let m = LatencyMatrix::default();
        let est = expected_response_time_with(&m, &Layout::single_node("A"), &zero_cost_app(1), 0, 0.0).unwrap();
        assert_eq!(est.messages, 6);
        assert!((est.response_ms - 6.0 * 0.02).abs() < 1e-12);
    }

    #[test]
    fn hand_computed_hybrid_fd() {
        // U->D 1, D->E 1, local 0.02 twice, E->D 1, D->U 1, plus 80 ms of frames
        let m = LatencyMatrix::default().without_jitter();
        let fd = build_app(AppTag::FD480);
        let got = expected_response_time(&m, &Layout::hybrid(), &fd).unwrap();
        assert!((got - (4.0 + 0.04 + 80.0)).abs() < 1e-9, "{got}");
        // next request goes to B across the wan
        let next = expected_response_time_with(&m, &Layout::hybrid(), &fd, 1, 0.0).unwrap().response_ms;
        assert!((next - (1.0 + 25.0 + 0.04 + 80.0 + 25.0 + 1.0)).abs() < 1e-9, "{next}");
    }

    #[test]
    fn proxy_doubles_links() {
        let m = LatencyMatrix::default();
        let fd = build_app(AppTag::FD240);
        let direct = expected_response_time_with(&m, &Layout::hybrid(), &fd, 0, 0.0).unwrap();
        let proxied = expected_response_time_with(&m, &Layout::hybrid().with_proxy("C"), &fd, 0, 0.0).unwrap();
        assert_eq!(proxied.links, 2 * direct.links);
        assert!(proxied.response_ms > direct.response_ms);
    }

    #[test]
    fn fd_prefers_hybrid_when_wan_is_slow() {
        let m = LatencyMatrix::from_layers(&sim_nodes(), LayerLatencies::default());
        for tag in [AppTag::FD480, AppTag::FD240] {
            let g = build_app(tag);
            let h = expected_mean_response(&m, &Layout::hybrid(), &g, 0, 0.0, 3).unwrap().response_ms;
            let c = expected_mean_response(&m, &Layout::cloud(), &g, 0, 0.0, 3).unwrap().response_ms;
            assert!(h < c, "{tag:?}: {h} vs {c}");
        }
    }

    #[test]
    fn incomplete_layouts() {
        let m = LatencyMatrix::default();
        let mut l = Layout::hybrid();
        l.actors.clear();
        assert!(matches!(expected_response_time(&m, &l, &build_app(AppTag::Formula)), Err(SimError::IncompleteLayout(_))));
        let mut l = Layout::hybrid();
        l.master.clear();
        assert!(matches!(expected_response_time(&m, &l, &build_app(AppTag::Formula)), Err(SimError::IncompleteLayout(_))));
        let mut m2 = LatencyMatrix::new(20.0);
        m2.set("A", "B", LinkSpec::new(1.0, 0.0, 0.0)).unwrap();
        assert!(matches!(expected_response_time(&m2, &Layout::hybrid(), &build_app(AppTag::Formula)), Err(SimError::UnknownNodePair(..))));
    }
}
