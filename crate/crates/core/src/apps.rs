//! The benchmark applications as task graphs, plus the task logic the
//! executors host.
//!
//! `Formula` is a strictly serialized chain computing `(a + b) * c / d`.
//! The face-detection apps are a synthetic frame stream: each frame costs a
//! fixed amount of compute and yields a detection count drawn from a seeded
//! hash of the frame index.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{Value, json};

pub const FORMULA_ADD: &str = "formula-add";
pub const FORMULA_MUL: &str = "formula-mul";
pub const FORMULA_DIV: &str = "formula-div";
pub const FD_FRAME: &str = "fd-frame";
pub const ALL_TASK_KINDS: [&str; 4] = [FORMULA_ADD, FORMULA_MUL, FORMULA_DIV, FD_FRAME];

/// Simulated compute per arithmetic task.
pub const FORMULA_TASK_COST_MS: f64 = 0.5;
pub const DEFAULT_FRAMES: u32 = 10;
/// Reference to the output of the preceding task in a chain.
pub const PREV: &str = "$prev";

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum AppError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("unknown task kind `{0}`")]
    UnknownTaskKind(String),
    #[error("bad input: {0}")]
    BadInput(String),
    #[error("unknown app `{0}`")]
    UnknownApp(String),
    #[error("a frame stream needs at least one frame")]
    NoFrames,
    #[error("task graph has a cycle")]
    Cyclic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AppTag {
    Formula,
    FD480,
    FD240,
}

impl AppTag {
    pub const ALL: [AppTag; 3] = [AppTag::Formula, AppTag::FD480, AppTag::FD240];

    pub fn as_str(self) -> &'static str {
        match self {
            AppTag::Formula => "Formula",
            AppTag::FD480 => "FD480",
            AppTag::FD240 => "FD240",
        }
    }

    pub fn task_kinds(self) -> &'static [&'static str] {
        match self {
            AppTag::Formula => &[FORMULA_ADD, FORMULA_MUL, FORMULA_DIV],
            AppTag::FD480 | AppTag::FD240 => &[FD_FRAME],
        }
    }
}

impl fmt::Display for AppTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AppTag {
    type Err = AppError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AppTag::ALL.into_iter().find(|t| t.as_str() == s).ok_or_else(|| AppError::UnknownApp(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskNode {
    pub task_kind: String,
    pub params: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskGraph {
    pub app_name: String,
    pub tasks: Vec<TaskNode>,
    pub edges: Vec<(usize, usize)>,
}

impl TaskGraph {
    /// Kahn's algorithm; among ready tasks the lowest index goes first.
    pub fn topo_order(&self) -> Result<Vec<usize>, AppError> {
        let n = self.tasks.len();
        let mut indegree = vec![0usize; n];
        for &(_, to) in &self.edges {
            indegree[to] += 1;
        }
        let mut ready: Vec<usize> = (0..n).filter(|&i| indegree[i] == 0).rev().collect();
        let mut order = Vec::with_capacity(n);
        while let Some(i) = ready.pop() {
            order.push(i);
            for &(from, to) in &self.edges {
                if from == i {
                    indegree[to] -= 1;
                    if indegree[to] == 0 {
                        ready.push(to);
                        ready.sort_by(|a, b| b.cmp(a));
                    }
                }
            }
        }
        if order.len() == n { Ok(order) } else { Err(AppError::Cyclic) }
    }

    pub fn predecessors(&self, task: usize) -> Vec<usize> {
        self.edges.iter().filter(|&&(_, to)| to == task).map(|&(from, _)| from).collect()
    }
}

pub fn build_formula_app() -> TaskGraph {
    let t = |kind: &str, lhs: &str, rhs: &str| TaskNode { task_kind: kind.to_string(), params: json!({"lhs": lhs, "rhs": rhs}) };
    TaskGraph {
        app_name: "NaiveFormulaSerialized".to_string(),
        tasks: vec![t(FORMULA_ADD, "a", "b"), t(FORMULA_MUL, PREV, "c"), t(FORMULA_DIV, PREV, "d")],
        edges: vec![(0, 1), (1, 2)],
    }
}

pub fn eval_formula_reference(a: f64, b: f64, c: f64, d: f64) -> Result<f64, AppError> {
    if d == 0.0 {
        return Err(AppError::DivisionByZero);
    }
    Ok((a + b) * c / d)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Resolution {
    R480,
    R240,
}

impl Resolution {
    pub fn default_cost_ms(self) -> f64 {
        match self {
            Resolution::R480 => 8.0,
            Resolution::R240 => 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameStreamSpec {
    pub resolution: Resolution,
    pub frame_count: u32,
    pub per_frame_cost_ms: f64,
}

impl FrameStreamSpec {
    pub fn new(resolution: Resolution, frame_count: u32) -> Self {
        Self { resolution, frame_count, per_frame_cost_ms: resolution.default_cost_ms() }
    }
}

pub fn build_facedetection_app(res: Resolution, frames: u32) -> Result<TaskGraph, AppError> {
    build_frame_stream(FrameStreamSpec::new(res, frames))
}

pub fn build_frame_stream(spec: FrameStreamSpec) -> Result<TaskGraph, AppError> {
    if spec.frame_count == 0 {
        return Err(AppError::NoFrames);
    }
    let name = match spec.resolution {
        Resolution::R480 => "FaceDetection480",
        Resolution::R240 => "FaceDetection240",
    };
    Ok(TaskGraph {
        app_name: name.to_string(),
        tasks: vec![TaskNode {
            task_kind: FD_FRAME.to_string(),
            params: json!({
                "resolution": spec.resolution,
                "per_frame_cost_ms": spec.per_frame_cost_ms,
                "frames": spec.frame_count,
            }),
        }],
        edges: Vec::new(),
    })
}

pub fn build_app(tag: AppTag) -> TaskGraph {
    match tag {
        AppTag::Formula => build_formula_app(),
        AppTag::FD480 => build_facedetection_app(Resolution::R480, DEFAULT_FRAMES).expect("frames > 0"),
        AppTag::FD240 => build_facedetection_app(Resolution::R240, DEFAULT_FRAMES).expect("frames > 0"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskOutput {
    pub value: Value,
    /// Compute time the task occupies its executor for.
    pub busy_ms: f64,
}

fn operand(name: &Value, data: &Value, prev: Option<&Value>) -> Result<f64, AppError> {
    let name = name.as_str().ok_or_else(|| AppError::BadInput("operand reference must be a string".into()))?;
    let v = if name == PREV { prev } else { data.get(name) };
    v.and_then(Value::as_f64).ok_or_else(|| AppError::BadInput(format!("operand `{name}` missing or not a number")))
}

/// Compute cost of one task, known before running it.
pub fn task_cost_ms(kind: &str, params: &Value) -> Result<f64, AppError> {
    match kind {
        FORMULA_ADD | FORMULA_MUL | FORMULA_DIV => Ok(FORMULA_TASK_COST_MS),
        FD_FRAME => {
            let cost = params.get("per_frame_cost_ms").and_then(Value::as_f64).ok_or_else(|| AppError::BadInput("per_frame_cost_ms".into()))?;
            let frames = params.get("frames").and_then(Value::as_u64).unwrap_or(u64::from(DEFAULT_FRAMES));
            Ok(cost * frames as f64)
        }
        other => Err(AppError::UnknownTaskKind(other.to_string())),
    }
}

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stub detector: faces found in frame `idx` of the stream seeded `seed`.
pub fn detections(seed: u64, idx: u64) -> u64 {
    splitmix64(seed ^ splitmix64(idx)) % 4
}

/// Runs one task. `data` is the application input, `prev` the output of
/// the preceding task when there is one.
pub fn execute_task(kind: &str, params: &Value, data: &Value, prev: Option<&Value>) -> Result<TaskOutput, AppError> {
    let busy_ms = task_cost_ms(kind, params)?;
    let value = match kind {
        FORMULA_ADD | FORMULA_MUL | FORMULA_DIV => {
            let lhs = operand(&params["lhs"], data, prev)?;
            let rhs = operand(&params["rhs"], data, prev)?;
            let out = match kind {
                FORMULA_ADD => lhs + rhs,
                FORMULA_MUL => lhs * rhs,
                _ if rhs == 0.0 => return Err(AppError::DivisionByZero),
                _ => lhs / rhs,
            };
            json!(out)
        }
        _ => {
            let seed = data.get("seed").and_then(Value::as_u64).ok_or_else(|| AppError::BadInput("seed".into()))?;
            let frames = params.get("frames").and_then(Value::as_u64).unwrap_or(u64::from(DEFAULT_FRAMES));
            json!((0..frames).map(|i| detections(seed, i)).collect::<Vec<_>>())
        }
    };
    Ok(TaskOutput { value, busy_ms })
}

/// Runs a whole graph in-process, in topological order.
pub fn evaluate_graph(graph: &TaskGraph, data: &Value) -> Result<Value, AppError> {
    let order = graph.topo_order()?;
    let mut outputs: Vec<Option<Value>> = vec![None; graph.tasks.len()];
    let mut last = Value::Null;
    for i in order {
        let prev = chain_input(graph, i, &outputs);
        let task = &graph.tasks[i];
        let out = execute_task(&task.task_kind, &task.params, data, prev.as_ref())?;
        outputs[i] = Some(out.value.clone());
        last = out.value;
    }
    Ok(last)
}

/// What `$prev` means for task `i`: the single predecessor's output, or
/// all predecessors' outputs as an array.
pub fn chain_input(graph: &TaskGraph, i: usize, outputs: &[Option<Value>]) -> Option<Value> {
    let preds = graph.predecessors(i);
    match preds.as_slice() {
        [] => None,
        [p] => outputs[*p].clone(),
        many => Some(Value::Array(many.iter().map(|p| outputs[*p].clone().unwrap_or(Value::Null)).collect())),
    }
}

/// Random application input for one benchmark sample.
pub fn sample_input<R: Rng + ?Sized>(tag: AppTag, rng: &mut R) -> Value {
    match tag {
        AppTag::Formula => {
            let d = loop {
                let d = rng.random_range(-50i32..=50);
                if d != 0 {
                    break d;
                }
            };
            json!({
                "a": rng.random_range(-1000i32..=1000),
                "b": rng.random_range(-1000i32..=1000),
                "c": rng.random_range(-1000i32..=1000),
                "d": d,
            })
        }
        AppTag::FD480 | AppTag::FD240 => json!({"seed": rng.random::<u64>()}),
    }
}

/// Reference result for an input, computed without any distribution.
pub fn reference_result(tag: AppTag, data: &Value) -> Result<Value, AppError> {
    match tag {
        AppTag::Formula => {
            let g = |k: &str| data.get(k).and_then(Value::as_f64).ok_or_else(|| AppError::BadInput(k.to_string()));
            eval_formula_reference(g("a")?, g("b")?, g("c")?, g("d")?).map(|v| json!(v))
        }
        AppTag::FD480 | AppTag::FD240 => evaluate_graph(&build_app(tag), data),
    }
}
