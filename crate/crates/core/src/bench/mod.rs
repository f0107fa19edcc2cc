//! Response-time experiments over the simulated deployment.
//!
//! Experiment 1 compares orchestrated against native execution, experiment
//! 2 the hybrid layout against an all-cloud one. Each run issues
//! sequential requests from the user, records per-sample response times
//! and summarizes them as a mean with a 95% t-interval.

mod report;
mod stats;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use report::{PLOT_DATA_FILE, ReportPaths, raw_csv, summary_line, write_reports};
pub use stats::{MeanCi, mean_ci95, t_975};

use crate::apps::{AppTag, sample_input};
use crate::framework::FrameworkError;
use crate::runtime::{Mode, Pattern, RuntimeError, SimConfig, SimRuntime, TopologySpec};
use crate::simnet::{LatencyMatrix, Layout};

pub const MIN_SAMPLES: usize = 30;
pub const DEFAULT_SAMPLES: usize = 100;
pub const DEFAULT_DEADLINE_MS: f64 = 30_000.0;
/// Largest orchestrated-over-native slowdown considered acceptable.
pub const DEFAULT_OVERHEAD_BUDGET: f64 = 0.15;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum BenchError {
    #[error("need at least 2 successful samples, got {0}")]
    InsufficientSamples(usize),
    #[error("summaries are not comparable: {0}")]
    MixedConditions(String),
    #[error("{0}")]
    Precondition(String),
    #[error("boot failed: {0}")]
    BootFailure(String),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for BenchError {
    fn from(e: std::io::Error) -> Self {
        BenchError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayoutKind {
    Hybrid,
    Cloud,
}

impl LayoutKind {
    pub fn layout(self) -> Layout {
        match self {
            LayoutKind::Hybrid => Layout::hybrid(),
            LayoutKind::Cloud => Layout::cloud(),
        }
    }
}

impl FromStr for LayoutKind {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "hybrid" => Ok(LayoutKind::Hybrid),
            "cloud" => Ok(LayoutKind::Cloud),
            _ => Err(BenchError::Precondition(format!("unknown layout `{s}`"))),
        }
    }
}

impl fmt::Display for LayoutKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LayoutKind::Hybrid => "hybrid",
            LayoutKind::Cloud => "cloud",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub app: AppTag,
    pub mode: Mode,
    pub layout: LayoutKind,
    pub samples: usize,
    pub seed: u64,
    pub matrix: LatencyMatrix,
    /// Unrecorded requests before sampling; the first round starts executors.
    pub warmup: usize,
    pub deadline_ms: f64,
    pub pattern: Pattern,
    pub probe_period_ms: f64,
}

impl ExperimentPlan {
    pub fn new(app: AppTag, mode: Mode, layout: LayoutKind, seed: u64) -> Self {
        Self {
            app,
            mode,
            layout,
            samples: DEFAULT_SAMPLES,
            seed,
            matrix: LatencyMatrix::default(),
            warmup: layout.layout().actors.len(),
            deadline_ms: DEFAULT_DEADLINE_MS,
            pattern: Pattern::HostNetwork,
            probe_period_ms: crate::runtime::DEFAULT_PROBE_PERIOD_MS,
        }
    }

    pub fn with_samples(mut self, n: usize) -> Self {
        self.samples = n;
        self
    }

    pub fn with_matrix(mut self, m: LatencyMatrix) -> Self {
        self.matrix = m;
        self
    }

    /// Base name shared by this plan's output files.
    pub fn stem(&self) -> String {
        format!("{}-{}-{}-seed{}", self.app.as_str(), self.mode, self.layout, self.seed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleStatus {
    Ok,
    /// The application itself reported an error.
    Failed,
    Timeout,
}

impl fmt::Display for SampleStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SampleStatus::Ok => "ok",
            SampleStatus::Failed => "failed",
            SampleStatus::Timeout => "timeout",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub idx: usize,
    pub response_ms: Option<f64>,
    pub status: SampleStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub app: String,
    pub mode: Mode,
    pub layout: LayoutKind,
    pub n: usize,
    pub mean_ms: f64,
    pub ci95_low_ms: f64,
    pub ci95_high_ms: f64,
    /// Samples excluded from the mean.
    pub failures: usize,
    pub seed: u64,
    /// SHA-256 of the matrix document the run used.
    pub matrix_digest: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub summary: Summary,
    pub samples: Vec<SampleRecord>,
}

pub fn matrix_digest(m: &LatencyMatrix) -> String {
    Sha256::digest(m.to_toml().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

/// Mean and 95% interval of raw response times.
pub fn summarize(samples: &[f64]) -> Result<MeanCi, BenchError> {
    mean_ci95(samples)
}

/// Signed relative difference `(a - b) / b` of two means taken under the
/// same application and matrix.
pub fn compare(a: &Summary, b: &Summary) -> Result<f64, BenchError> {
    if a.app != b.app {
        return Err(BenchError::MixedConditions(format!("apps differ: {} vs {}", a.app, b.app)));
    }
    if a.matrix_digest != b.matrix_digest {
        return Err(BenchError::MixedConditions("latency matrices differ".into()));
    }
    Ok(relative_difference(a.mean_ms, b.mean_ms))
}

pub fn relative_difference(a: f64, b: f64) -> f64 {
    (a - b) / b
}

fn boot_error(e: RuntimeError) -> BenchError {
    BenchError::BootFailure(e.to_string())
}

/// Boots the deployment the plan describes and issues its requests one
/// after another.
pub fn run_experiment(plan: &ExperimentPlan) -> Result<ExperimentResult, BenchError> {
    if plan.samples < MIN_SAMPLES {
        return Err(BenchError::Precondition(format!("samples must be at least {MIN_SAMPLES}, got {}", plan.samples)));
    }
    let mut spec = TopologySpec::new(plan.mode, plan.layout.layout()).with_pattern(plan.pattern);
    if plan.pattern == Pattern::EnvVariable {
        spec = spec.reconciled();
    }
    let mut cfg = SimConfig::new(plan.seed, plan.matrix.clone());
    cfg.probe_period_ms = plan.probe_period_ms;
    let mut rt = SimRuntime::boot(spec, cfg).map_err(boot_error)?;
    let mut inputs = ChaCha8Rng::seed_from_u64(plan.seed ^ 0x5EED_1A7E_u64);
    let app = plan.app.as_str();

    for _ in 0..plan.warmup {
        let _ = rt.submit(app, sample_input(plan.app, &mut inputs), plan.deadline_ms);
    }
    let mut samples = Vec::with_capacity(plan.samples);
    for idx in 0..plan.samples {
        let record = match rt.submit(app, sample_input(plan.app, &mut inputs), plan.deadline_ms) {
            Ok(done) if done.output.is_ok() => SampleRecord { idx, response_ms: Some(done.response_ms), status: SampleStatus::Ok },
            Ok(done) => SampleRecord { idx, response_ms: Some(done.response_ms), status: SampleStatus::Failed },
            Err(RuntimeError::Framework(FrameworkError::Timeout(_))) => SampleRecord { idx, response_ms: None, status: SampleStatus::Timeout },
            Err(_) => SampleRecord { idx, response_ms: None, status: SampleStatus::Failed },
        };
        samples.push(record);
    }
    let ok: Vec<f64> = samples.iter().filter(|s| s.status == SampleStatus::Ok).filter_map(|s| s.response_ms).collect();
    let ci = summarize(&ok)?;
    let summary = Summary {
        app: app.to_string(),
        mode: plan.mode,
        layout: plan.layout,
        n: ci.n,
        mean_ms: ci.mean,
        ci95_low_ms: ci.low,
        ci95_high_ms: ci.high,
        failures: plan.samples - ci.n,
        seed: plan.seed,
        matrix_digest: matrix_digest(&plan.matrix),
        raw_path: None,
    };
    Ok(ExperimentResult { summary, samples })
}
