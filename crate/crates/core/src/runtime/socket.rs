use std::collections::{BTreeMap, HashMap};
use std::io::BufReader;
use std::net::{Ipv4Addr, SocketAddr, SocketAddrV4, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use serde_json::Value;

use super::topology::{ComponentPlan, PROXY_PORT, TopologySpec, deployment_for, instantiate};
use super::{Mode, RuntimeError};
use crate::comm::wire::{read_frame, write_frame};
use crate::comm::{BindingStrategy, CommError, ComponentId, Envelope, Fabric, LinkClass, Peer, proxy_forward};
use crate::framework::{Completed, Component, ComponentKind, Context, FrameworkError, Master, User, dispatch};

const POLL: Duration = Duration::from_millis(5);
const BOOT_WAIT: Duration = Duration::from_secs(10);

enum Input {
    Envelope(Envelope),
    Submit { app: String, input: Value, reply: Sender<Result<Completed, FrameworkError>> },
}

struct Shared {
    spec: TopologySpec,
    fabric: Mutex<Fabric>,
    /// Logical (vpn or pod) address to loopback listener.
    endpoints: Mutex<HashMap<SocketAddrV4, SocketAddr>>,
    ports: Mutex<BTreeMap<String, u16>>,
    peers: Mutex<(Option<SocketAddrV4>, Option<SocketAddrV4>)>,
    stop: AtomicBool,
    threads: Mutex<Vec<JoinHandle<()>>>,
    errors: Mutex<Vec<String>>,
    registered_actors: AtomicUsize,
    start: Instant,
}

/// Loopback TCP deployment: every component, and the proxy when used,
/// listens on its own port of 127.0.0.1 and is reached through a map from
/// its logical address.
pub struct SocketRuntime {
    shared: Arc<Shared>,
    user: Sender<Input>,
}

struct Conns(HashMap<SocketAddr, TcpStream>);

impl Conns {
    fn write(&mut self, to: SocketAddr, env: &Envelope) -> Result<(), CommError> {
        for _ in 0..2 {
            let stream = match self.0.get_mut(&to) {
                Some(s) => s,
                None => {
                    let s = TcpStream::connect(to).map_err(|e| CommError::Transport(e.to_string()))?;
                    s.set_nodelay(true).ok();
                    self.0.entry(to).or_insert(s)
                }
            };
            if write_frame(stream, env).is_ok() {
                return Ok(());
            }
            self.0.remove(&to);
        }
        Err(CommError::Transport(format!("cannot write to {to}")))
    }
}

struct SockCtx {
    shared: Arc<Shared>,
    node: String,
    bound: SocketAddrV4,
    conns: Conns,
}

impl Shared {
    fn error(&self, e: String) {
        self.errors.lock().expect("error log").push(e);
    }

    fn local(&self, addr: SocketAddrV4) -> Option<SocketAddr> {
        self.endpoints.lock().expect("endpoints").get(&addr).copied()
    }

    fn alloc_port(&self, tag: &str) -> u16 {
        let mut ports = self.ports.lock().expect("ports");
        let p = ports.entry(tag.to_string()).or_insert(super::FIRST_COMPONENT_PORT);
        *p += 1;
        *p - 1
    }

    fn spawn(&self, f: impl FnOnce() + Send + 'static) {
        self.threads.lock().expect("threads").push(thread::spawn(f));
    }
}

/// Accepts connections and feeds every frame read into `tx`.
fn listen(shared: Arc<Shared>, listener: TcpListener, tx: Sender<Envelope>) {
    listener.set_nonblocking(true).expect("nonblocking listener");
    while !shared.stop.load(Ordering::Relaxed) {
        match listener.accept() {
            Ok((stream, _)) => {
                stream.set_nonblocking(false).ok();
                let tx = tx.clone();
                // readers end when the writer side closes
                thread::spawn(move || {
                    let mut r = BufReader::new(stream);
                    while let Ok(Some(env)) = read_frame(&mut r) {
                        if tx.send(env).is_err() {
                            break;
                        }
                    }
                });
            }
            Err(_) => thread::sleep(POLL),
        }
    }
}

fn open_listener() -> Result<(TcpListener, SocketAddr), RuntimeError> {
    let l = TcpListener::bind((Ipv4Addr::LOCALHOST, 0))?;
    let addr = l.local_addr()?;
    Ok((l, addr))
}

impl Context for SockCtx {
    fn now_ms(&self) -> f64 {
        self.shared.start.elapsed().as_secs_f64() * 1000.0
    }

    fn node(&self) -> &str {
        &self.node
    }

    fn bound(&self) -> SocketAddrV4 {
        self.bound
    }

    fn send(&mut self, env: Envelope, class: LinkClass) -> Result<(), CommError> {
        let next = {
            let fabric = self.shared.fabric.lock().expect("fabric");
            match (fabric.strategy, class) {
                (BindingStrategy::ProxyServer(proxy), LinkClass::Data | LinkClass::Telemetry) => proxy,
                _ => env.dst,
            }
        };
        if !self.shared.fabric.lock().expect("fabric").reachable(&self.node, *next.ip()) {
            return Err(CommError::RoutingError(*next.ip()));
        }
        let local = self.shared.local(next).ok_or(CommError::Unreachable(next))?;
        self.conns.write(local, &env)
    }

    fn busy(&mut self, ms: f64) {
        thread::sleep(Duration::from_secs_f64(ms.max(0.0) / 1000.0));
    }

    fn spawn_executor(&mut self, actor: &ComponentId, task_kind: &str) -> Result<Peer, FrameworkError> {
        let plan = ComponentPlan::executor(actor, task_kind, &self.node);
        let id = plan.id.clone();
        let (bound, _) = launch(&self.shared, plan).map_err(|e| FrameworkError::BadInput(format!("cannot start executor: {e}")))?;
        Ok(Peer::new(id, bound))
    }

    fn routable(&self, addr: SocketAddrV4) -> bool {
        let fabric = self.shared.fabric.lock().expect("fabric");
        matches!(fabric.strategy, BindingStrategy::ProxyServer(_)) || fabric.reachable(&self.node, *addr.ip())
    }
}

fn component_loop(shared: Arc<Shared>, mut comp: Box<dyn Component>, node: String, bound: SocketAddrV4, rx: Receiver<Input>) {
    let mut ctx = SockCtx { shared: shared.clone(), node, bound, conns: Conns(HashMap::new()) };
    let id = comp.id().clone();
    if let Err(e) = comp.on_start(&mut ctx) {
        shared.error(format!("{id}: {e}"));
    }
    let mut waiting: Vec<(u64, Sender<Result<Completed, FrameworkError>>)> = Vec::new();
    while !shared.stop.load(Ordering::Relaxed) {
        match rx.recv_timeout(POLL) {
            Ok(Input::Envelope(env)) => {
                if let Err(e) = dispatch(comp.as_mut(), &env, &mut ctx) {
                    shared.error(format!("{id}: {e}"));
                }
                if let Some(m) = comp.as_any().downcast_ref::<Master>() {
                    shared.registered_actors.store(m.sched.actor_order.len(), Ordering::SeqCst);
                }
            }
            Ok(Input::Submit { app, input, reply }) => {
                let user = comp.as_any_mut().downcast_mut::<User>().expect("only the user takes submissions");
                match user.submit(&mut ctx, &app, input) {
                    Ok(rid) => waiting.push((rid, reply)),
                    Err(e) => {
                        let _ = reply.send(Err(e));
                    }
                }
            }
            Err(RecvTimeoutError::Timeout) => continue,
            Err(RecvTimeoutError::Disconnected) => break,
        }
        if let Some(user) = comp.as_any_mut().downcast_mut::<User>() {
            waiting.retain(|(rid, reply)| match user.take(*rid) {
                Some(done) => {
                    let _ = reply.send(Ok(done));
                    false
                }
                None => true,
            });
        }
    }
}

/// Starts a bare component: listener, reader threads and handler thread.
fn launch(shared: &Arc<Shared>, mut c: ComponentPlan) -> Result<(SocketAddrV4, Sender<Input>), RuntimeError> {
    c.port = shared.alloc_port(&c.node);
    let node = shared.spec.node(&c.node)?;
    let vpn = node.vpn_ip.ok_or_else(|| RuntimeError::BootFailure(format!("node `{}` has no vpn address", c.node)))?;
    let (master, logger) = *shared.peers.lock().expect("peers");
    let master = if c.kind == ComponentKind::Master { None } else { master };
    let logger = if c.kind == ComponentKind::RemoteLogger { None } else { logger };
    let spec = deployment_for(&c, &node.name, true, vpn, master, logger);
    let (comp, bound) = instantiate(&spec, &[], None)?;

    let (listener, local) = open_listener()?;
    let (tx, rx) = mpsc::channel::<Input>();
    let (etx, erx) = mpsc::channel::<Envelope>();
    shared.endpoints.lock().expect("endpoints").insert(bound, local);
    {
        let mut fabric = shared.fabric.lock().expect("fabric");
        if let BindingStrategy::ProxyServer(_) = fabric.strategy {
            fabric.proxy.insert(comp.id().clone(), bound);
        }
    }
    let s = shared.clone();
    shared.spawn(move || listen(s, listener, etx));
    let fwd = tx.clone();
    // envelopes and submissions share one queue
    thread::spawn(move || {
        for env in erx {
            if fwd.send(Input::Envelope(env)).is_err() {
                break;
            }
        }
    });
    let s = shared.clone();
    let tag = c.node.clone();
    shared.spawn(move || component_loop(s, comp, tag, bound, rx));
    Ok((bound, tx))
}

fn proxy_loop(shared: Arc<Shared>, node: String, rx: Receiver<Envelope>) {
    let mut conns = Conns(HashMap::new());
    while !shared.stop.load(Ordering::Relaxed) {
        let env = match rx.recv_timeout(POLL) {
            Ok(env) => env,
            Err(RecvTimeoutError::Timeout) => continue,
            Err(RecvTimeoutError::Disconnected) => break,
        };
        let forwarded = {
            let fabric = shared.fabric.lock().expect("fabric");
            proxy_forward(&fabric.proxy, &env).and_then(|out| {
                if fabric.reachable(&node, *out.dst.ip()) { Ok(out) } else { Err(CommError::RoutingError(*out.dst.ip())) }
            })
        };
        let result = forwarded.and_then(|out| {
            let local = shared.local(out.dst).ok_or(CommError::Unreachable(out.dst))?;
            conns.write(local, &out)
        });
        if let Err(e) = result {
            shared.error(format!("proxy: {e}"));
        }
    }
}

impl SocketRuntime {
    /// Starts the logger, master, actors and user of a native deployment.
    pub fn boot(spec: TopologySpec, seed: u64) -> Result<Self, RuntimeError> {
        if spec.mode != Mode::Native {
            return Err(RuntimeError::BadOption("the socket runtime hosts bare components only".into()));
        }
        let plan = spec.plan(seed)?;
        let strategy = spec.strategy(&plan)?;
        let shared = Arc::new(Shared {
            fabric: Mutex::new(Fabric::new(plan, strategy)),
            endpoints: Mutex::new(HashMap::new()),
            ports: Mutex::new(BTreeMap::new()),
            peers: Mutex::new((None, None)),
            stop: AtomicBool::new(false),
            threads: Mutex::new(Vec::new()),
            errors: Mutex::new(Vec::new()),
            registered_actors: AtomicUsize::new(0),
            start: Instant::now(),
            spec,
        });
        let rt = |user| Self { shared: shared.clone(), user };

        if let BindingStrategy::ProxyServer(proxy) = strategy {
            let node = shared.fabric.lock().expect("fabric").book.node_of(*proxy.ip()).map(str::to_string).unwrap_or_default();
            let (listener, local) = open_listener()?;
            shared.endpoints.lock().expect("endpoints").insert(SocketAddrV4::new(*proxy.ip(), PROXY_PORT), local);
            let (tx, rx) = mpsc::channel();
            let s = shared.clone();
            shared.spawn(move || listen(s, listener, tx));
            let s = shared.clone();
            shared.spawn(move || proxy_loop(s, node, rx));
        }

        let mut actors = 0;
        for c in shared.spec.components() {
            let kind = c.kind;
            let (bound, _) = launch(&shared, c)?;
            match kind {
                ComponentKind::RemoteLogger => shared.peers.lock().expect("peers").1 = Some(bound),
                ComponentKind::Master => shared.peers.lock().expect("peers").0 = Some(bound),
                ComponentKind::Actor => {
                    actors += 1;
                    let deadline = Instant::now() + BOOT_WAIT;
                    while shared.registered_actors.load(Ordering::SeqCst) < actors {
                        if Instant::now() > deadline {
                            let errors = shared.errors.lock().expect("errors").join("; ");
                            rt(mpsc::channel().0).shutdown();
                            return Err(RuntimeError::BootFailure(format!("actor {actors} did not register: {errors}")));
                        }
                        thread::sleep(POLL);
                    }
                }
                _ => {}
            }
        }
        let (_, user) = launch(&shared, shared.spec.user())?;
        Ok(rt(user))
    }

    /// Submits one placement request and waits for its result.
    pub fn submit(&self, app: &str, input: Value, deadline_ms: f64) -> Result<Completed, RuntimeError> {
        let (tx, rx) = mpsc::channel();
        self.user
            .send(Input::Submit { app: app.to_string(), input, reply: tx })
            .map_err(|_| RuntimeError::BootFailure("user thread is gone".into()))?;
        match rx.recv_timeout(Duration::from_secs_f64(deadline_ms / 1000.0)) {
            Ok(r) => r.map_err(Into::into),
            Err(_) => Err(FrameworkError::Timeout(deadline_ms).into()),
        }
    }

    pub fn errors(&self) -> Vec<String> {
        self.shared.errors.lock().expect("errors").clone()
    }

    fn shutdown(&self) {
        self.shared.stop.store(true, Ordering::SeqCst);
        let threads: Vec<_> = self.shared.threads.lock().expect("threads").drain(..).collect();
        for t in threads {
            let _ = t.join();
        }
    }
}

impl Drop for SocketRuntime {
    fn drop(&mut self) {
        self.shutdown();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simnet::Layout;
    use serde_json::json;

    #[test]
    fn formula_over_loopback() {
        let rt = SocketRuntime::boot(TopologySpec::new(Mode::Native, Layout::hybrid()), 1).unwrap();
        let done = rt.submit("Formula", json!({"a": 1, "b": 2, "c": 3, "d": 4}), 10_000.0).unwrap();
        assert_eq!(done.output, Ok(json!(2.25)));
        assert!(done.response_ms > 0.0);
        let bad = rt.submit("Formula", json!({"a": 1, "b": 2, "c": 3, "d": 0}), 10_000.0).unwrap();
        assert!(bad.output.is_err());
        assert!(rt.errors().is_empty(), "{:?}", rt.errors());
    }

    #[test]
    fn orchestrated_is_refused() {
        assert!(matches!(SocketRuntime::boot(TopologySpec::new(Mode::Orchestrated, Layout::hybrid()), 1), Err(RuntimeError::BadOption(_))));
    }
}
