//! Operator command line: mesh planning, cluster bring-up, deployments and
//! benchmarks. Cluster state lives in a JSON file between invocations.
//!
//! Exit codes: 0 success, 2 input error, 3 auth error, 4 connectivity.

use std::ffi::OsString;
use std::fs::{self, File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::net::Ipv4Addr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use ipnet::Ipv4Net;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::apps::AppTag;
use crate::bench::{self, ExperimentPlan, LayoutKind};
use crate::cluster::{self, ClusterError, ClusterState, PodPhase};
use crate::overlay::{self, DEFAULT_BASE_PORT, MeshPlan, NodeRecord};
use crate::runtime::{Mode, Pattern};
use crate::simnet::LatencyMatrix;

pub const STATE_ENV: &str = "FOGLINE_STATE";
pub const DEFAULT_STATE_FILE: &str = "fogline-state.json";

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_AUTH: i32 = 3;
pub const EXIT_CONNECTIVITY: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Auth(String),
    #[error("{0}")]
    Connectivity(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Auth(_) => EXIT_AUTH,
            CliError::Connectivity(_) => EXIT_CONNECTIVITY,
        }
    }
}

impl From<ClusterError> for CliError {
    fn from(e: ClusterError) -> Self {
        match e {
            ClusterError::BadToken => CliError::Auth(e.to_string()),
            ClusterError::UnreachableServer(_) => CliError::Connectivity(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

fn input(e: impl std::fmt::Display) -> CliError {
    CliError::Input(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "fogline", version, about = "Edge/cloud orchestration toolkit")]
pub struct Cli {
    /// Cluster state file.
    #[arg(long, global = true, env = STATE_ENV, default_value = DEFAULT_STATE_FILE)]
    pub state: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Plan a full VPN mesh and write one `<tag>.conf` per node.
    MeshGen(MeshGenArgs),
    /// Form and inspect the cluster.
    #[command(subcommand)]
    Cluster(ClusterCmd),
    /// Manage deployments.
    #[command(subcommand)]
    Deploy(DeployCmd),
    /// Run experiments.
    #[command(subcommand)]
    Bench(BenchCmd),
}

#[derive(Debug, Args)]
pub struct MeshGenArgs {
    #[arg(long)]
    pub inventory: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value = overlay::DEFAULT_SUBNET)]
    pub subnet: Ipv4Net,
    #[arg(long, default_value_t = DEFAULT_BASE_PORT)]
    pub base_port: u16,
    /// Cluster pod range to check against the mesh.
    #[arg(long)]
    pub cluster_cidr: Option<Ipv4Net>,
    /// Seed for key generation; random when absent.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum ClusterCmd {
    /// Start the server on one inventory node and print the join token.
    Init {
        #[arg(long)]
        node: String,
        /// Inventory document; the five-node hybrid environment by default.
        #[arg(long)]
        inventory: Option<PathBuf>,
        /// Rename the server node.
        #[arg(long)]
        node_name: Option<String>,
        #[arg(long, default_value = cluster::DEFAULT_POD_CIDR)]
        pod_cidr: Ipv4Net,
        #[arg(long, default_value = overlay::DEFAULT_SUBNET)]
        subnet: Ipv4Net,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Join an inventory node as an agent.
    Join {
        #[arg(long)]
        node: String,
        #[arg(long)]
        server: Ipv4Addr,
        #[arg(long)]
        token: String,
    },
    /// Print one line per node.
    Status,
}

#[derive(Debug, Subcommand)]
pub enum DeployCmd {
    /// Apply a deployment document and reconcile.
    Apply { path: PathBuf },
    /// List pods, optionally of one deployment.
    Get { name: Option<String> },
    /// Remove a deployment and its pods.
    Delete { name: String },
}

#[derive(Debug, Subcommand)]
pub enum BenchCmd {
    /// Run one experiment and write its reports.
    Run(BenchArgs),
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub app: AppTag,
    #[arg(long, default_value = "orchestrated")]
    pub mode: Mode,
    #[arg(long, default_value = "hybrid")]
    pub layout: LayoutKind,
    #[arg(long, default_value_t = bench::DEFAULT_SAMPLES)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Latency matrix document; the built-in defaults otherwise.
    #[arg(long)]
    pub matrix: Option<PathBuf>,
    #[arg(long, default_value = "host-network")]
    pub pattern: Pattern,
    #[arg(long, default_value = "bench-out")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InventoryDocument {
    pub nodes: Vec<NodeRecord>,
}

/// Reads an inventory in YAML or JSON.
pub fn parse_inventory(text: &str) -> Result<Vec<NodeRecord>, CliError> {
    let doc: InventoryDocument = serde_yaml::from_str(text).map_err(|e| input(format!("inventory: {e}")))?;
    if doc.nodes.is_empty() {
        return Err(input(overlay::OverlayError::EmptyInventory));
    }
    Ok(doc.nodes)
}

fn read_inventory(path: &Path) -> Result<Vec<NodeRecord>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| input(format!("{}: {e}", path.display())))?;
    parse_inventory(&text)
}

fn rng(seed: Option<u64>) -> ChaCha8Rng {
    match seed {
        Some(s) => ChaCha8Rng::seed_from_u64(s),
        None => ChaCha8Rng::from_rng(&mut rand::rng()),
    }
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct StateDoc {
    plan: Option<MeshPlan>,
    cluster: Option<ClusterState>,
}

/// The state file, exclusively locked for the life of the value.
struct StateFile {
    file: File,
    doc: StateDoc,
}

impl StateFile {
    fn open(path: &Path) -> Result<Self, CliError> {
        let mut file = OpenOptions::new()
            .read(true)
            .write(true)
            .create(true)
            .truncate(false)
            .open(path)
            .map_err(|e| input(format!("{}: {e}", path.display())))?;
        file.lock().map_err(|e| input(format!("locking {}: {e}", path.display())))?;
        let mut text = String::new();
        file.read_to_string(&mut text).map_err(input)?;
        let doc = if text.trim().is_empty() {
            StateDoc::default()
        } else {
            serde_json::from_str(&text).map_err(|e| input(format!("{}: {e}", path.display())))?
        };
        Ok(Self { file, doc })
    }

    fn save(&mut self) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(&self.doc).map_err(input)?;
        self.file.set_len(0).map_err(input)?;
        self.file.seek(SeekFrom::Start(0)).map_err(input)?;
        self.file.write_all(text.as_bytes()).map_err(input)?;
        self.file.sync_data().map_err(input)
    }

    fn cluster(&mut self) -> Result<(&mut ClusterState, &MeshPlan), CliError> {
        match (&mut self.doc.cluster, &self.doc.plan) {
            (Some(c), Some(p)) => Ok((c, p)),
            _ => Err(input("no cluster; run `fogline cluster init` first")),
        }
    }
}

fn mesh_gen(a: &MeshGenArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let nodes = read_inventory(&a.inventory)?;
    let plan = overlay::plan_mesh_with(&nodes, a.subnet, a.base_port, &mut rng(a.seed)).map_err(input)?;
    fs::create_dir_all(&a.out_dir).map_err(input)?;
    for peer in &plan.peers {
        let text = overlay::render_peer_config(&plan, peer.tag()).map_err(input)?;
        let path = a.out_dir.join(format!("{}.conf", peer.tag()));
        fs::write(&path, text).map_err(input)?;
        let _ = writeln!(out, "wrote {}", path.display());
    }
    if let Some(cidr) = a.cluster_cidr {
        let report = overlay::detect_cidr_conflict(&plan, cidr);
        if report.is_conflict() {
            let examples: Vec<String> = report.unroutable_examples.iter().map(Ipv4Addr::to_string).collect();
            let _ = writeln!(
                out,
                "warning: cluster range {cidr} conflicts with the mesh ({:?}); e.g. {}; remedy {:?}",
                report.kind,
                examples.join(", "),
                report.remedy
            );
        } else {
            let _ = writeln!(out, "cluster range {cidr}: no conflict");
        }
    }
    Ok(())
}

fn find_node(plan: &MeshPlan, tag: &str) -> Result<NodeRecord, CliError> {
    plan.nodes()
        .find(|n| n.tag == tag || n.name == tag)
        .cloned()
        .ok_or_else(|| input(format!("node `{tag}` is not in the inventory")))
}

fn cluster_cmd(cmd: &ClusterCmd, state_path: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    let mut st = StateFile::open(state_path)?;
    match cmd {
        ClusterCmd::Init { node, inventory, node_name, pod_cidr, subnet, seed } => {
            let nodes = match inventory {
                Some(p) => read_inventory(p)?,
                None => overlay::table1_nodes(),
            };
            let mut rng = rng(*seed);
            let plan = overlay::plan_mesh_with(&nodes, *subnet, DEFAULT_BASE_PORT, &mut rng).map_err(input)?;
            let mut server = find_node(&plan, node)?;
            if let Some(name) = node_name {
                server.name = name.clone();
            }
            let (state, token) = cluster::start_server_with(server, *pod_cidr, &mut rng)?;
            st.doc = StateDoc { plan: Some(plan), cluster: Some(state) };
            st.save()?;
            let _ = writeln!(out, "{token}");
        }
        ClusterCmd::Join { node, server, token } => {
            let (state, plan) = st.cluster()?;
            let record = find_node(plan, node)?;
            let plan = plan.clone();
            cluster::join_agent(state, record, *server, token, &plan)?;
            let _ = writeln!(out, "joined {node}");
            st.save()?;
        }
        ClusterCmd::Status => {
            let (state, _) = st.cluster()?;
            let _ = write!(out, "{}", cluster::status_lines(state));
        }
    }
    Ok(())
}

fn pod_table(state: &ClusterState, name: Option<&str>, out: &mut dyn Write) {
    let _ = writeln!(out, "POD DEPLOYMENT NODE PHASE IP HOSTNETWORK RESTARTS");
    for p in state.pods.iter().filter(|p| p.phase != PodPhase::Terminated) {
        if name.is_some_and(|n| n != p.deployment) {
            continue;
        }
        let _ = writeln!(out, "{} {} {} {} {} {} {}", p.uid, p.deployment, p.node, p.phase, p.pod_ip, p.host_network, p.restarts);
    }
}

fn report_actions(actions: &[cluster::Action], out: &mut dyn Write) {
    for a in actions {
        let _ = match a {
            cluster::Action::Create { uid, node, pod_ip, .. } => writeln!(out, "created {uid} on {node} ({pod_ip})"),
            cluster::Action::Terminate { uid, .. } => writeln!(out, "terminated {uid}"),
            cluster::Action::Unschedulable { deployment, error } => writeln!(out, "unschedulable {deployment}: {error}"),
        };
    }
}

fn deploy_cmd(cmd: &DeployCmd, state_path: &Path, out: &mut dyn Write) -> Result<(), CliError> {
    let mut st = StateFile::open(state_path)?;
    let (state, _) = st.cluster()?;
    match cmd {
        DeployCmd::Apply { path } => {
            let text = fs::read_to_string(path).map_err(|e| input(format!("{}: {e}", path.display())))?;
            let spec = cluster::parse_deployment(&text)?;
            let name = spec.name.clone();
            let unchanged = state.deployments.get(&name) == Some(&spec);
            cluster::apply_deployment(state, spec);
            let actions = cluster::reconcile(state);
            cluster::start_pending(state);
            let verb = if unchanged { "unchanged" } else { "applied" };
            let _ = writeln!(out, "deployment {name} {verb}");
            report_actions(&actions, out);
        }
        DeployCmd::Get { name } => {
            pod_table(state, name.as_deref(), out);
            return Ok(());
        }
        DeployCmd::Delete { name } => {
            if cluster::delete_deployment(state, name).is_none() {
                return Err(input(format!("deployment `{name}` not found")));
            }
            let actions = cluster::reconcile(state);
            let _ = writeln!(out, "deployment {name} deleted");
            report_actions(&actions, out);
        }
    }
    st.save()
}

fn bench_cmd(cmd: &BenchCmd, out: &mut dyn Write) -> Result<(), CliError> {
    let BenchCmd::Run(a) = cmd;
    let matrix = match &a.matrix {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| input(format!("{}: {e}", p.display())))?;
            LatencyMatrix::from_toml(&text).map_err(input)?
        }
        None => LatencyMatrix::default(),
    };
    let mut plan = ExperimentPlan::new(a.app, a.mode, a.layout, a.seed).with_samples(a.samples).with_matrix(matrix);
    plan.pattern = a.pattern;
    let mut result = bench::run_experiment(&plan).map_err(input)?;
    let paths = bench::write_reports(&plan, &mut result, &a.out_dir).map_err(input)?;
    let _ = writeln!(out, "{}", bench::summary_line(&result.summary));
    let _ = writeln!(out, "raw {}", paths.raw.display());
    let _ = writeln!(out, "summary {}", paths.summary.display());
    Ok(())
}

pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match &cli.command {
        Command::MeshGen(a) => mesh_gen(a, out),
        Command::Cluster(c) => cluster_cmd(c, &cli.state, out),
        Command::Deploy(d) => deploy_cmd(d, &cli.state, out),
        Command::Bench(b) => bench_cmd(b, out),
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { write!(err, "{text}") } else { write!(out, "{text}") };
            return code;
        }
    };
    match execute(&cli, out) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
