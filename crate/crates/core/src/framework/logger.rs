use std::any::Any;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Component, ComponentKind, Context, FrameworkError, Message, Payload};
use crate::comm::{ComponentId, Envelope};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    Periodic,
    EventDriven,
}

impl FromStr for EventKind {
    type Err = FrameworkError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Periodic" => Ok(EventKind::Periodic),
            "EventDriven" => Ok(EventKind::EventDriven),
            other => Err(FrameworkError::StorageFailure(format!("unknown event kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileEvent {
    pub source: ComponentId,
    pub kind: EventKind,
    pub metric: String,
    pub value: f64,
    pub tick: u64,
}

impl ProfileEvent {
    pub fn event(source: &ComponentId, metric: &str, value: f64, tick: u64) -> Self {
        Self { source: source.clone(), kind: EventKind::EventDriven, metric: metric.to_string(), value, tick }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRecord {
    pub seq: u64,
    pub event: ProfileEvent,
}

impl LogRecord {
    fn to_line(&self) -> String {
        let e = &self.event;
        format!("{},{},{},{:?},{},{}", self.seq, e.tick, e.source, e.kind, e.metric, e.value)
    }

    fn parse(line: &str) -> Result<Self, FrameworkError> {
        let bad = || FrameworkError::StorageFailure(format!("corrupt log line `{line}`"));
        let f: Vec<&str> = line.splitn(6, ',').collect();
        let [seq, tick, source, kind, metric, value] = f.as_slice() else {
            return Err(bad());
        };
        Ok(Self {
            seq: seq.parse().map_err(|_| bad())?,
            event: ProfileEvent {
                source: ComponentId::new(*source),
                kind: kind.parse()?,
                metric: metric.to_string(),
                value: value.parse().map_err(|_| bad())?,
                tick: tick.parse().map_err(|_| bad())?,
            },
        })
    }
}

fn storage(e: impl std::fmt::Display) -> FrameworkError {
    FrameworkError::StorageFailure(e.to_string())
}

/// Append-only event log, one `seq,tick,source,kind,metric,value` line per
/// event. File-backed stores pick up their sequence after a restart.
#[derive(Debug)]
pub struct LogStore {
    file: Option<(PathBuf, File)>,
    memory: Vec<LogRecord>,
    next_seq: u64,
}

impl LogStore {
    pub fn memory() -> Self {
        Self { file: None, memory: Vec::new(), next_seq: 0 }
    }

    pub fn open(path: &Path) -> Result<Self, FrameworkError> {
        let next_seq = if path.exists() { read_log(path)?.last().map_or(0, |r| r.seq + 1) } else { 0 };
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(storage)?;
        Ok(Self { file: Some((path.to_path_buf(), file)), memory: Vec::new(), next_seq })
    }

    pub fn append(&mut self, event: ProfileEvent) -> Result<u64, FrameworkError> {
        if event.source.as_str().contains([',', '\n']) || event.metric.contains([',', '\n']) {
            return Err(FrameworkError::StorageFailure("field contains a separator".into()));
        }
        let record = LogRecord { seq: self.next_seq, event };
        match &mut self.file {
            Some((_, f)) => writeln!(f, "{}", record.to_line()).and_then(|_| f.flush()).map_err(storage)?,
            None => self.memory.push(record),
        }
        self.next_seq += 1;
        Ok(self.next_seq - 1)
    }

    pub fn len(&self) -> u64 {
        self.next_seq
    }

    pub fn is_empty(&self) -> bool {
        self.next_seq == 0
    }

    pub fn records(&self) -> Result<Vec<LogRecord>, FrameworkError> {
        match &self.file {
            Some((path, _)) => read_log(path),
            None => Ok(self.memory.clone()),
        }
    }
}

pub fn read_log(path: &Path) -> Result<Vec<LogRecord>, FrameworkError> {
    let f = File::open(path).map_err(storage)?;
    BufReader::new(f)
        .lines()
        .filter(|l| !matches!(l, Ok(s) if s.trim().is_empty()))
        .map(|l| l.map_err(storage).and_then(|l| LogRecord::parse(&l)))
        .collect()
}

/// Sink for profiling events from every other component.
pub struct RemoteLogger {
    id: ComponentId,
    pub store: LogStore,
}

impl RemoteLogger {
    pub fn new(id: ComponentId, store: LogStore) -> Self {
        Self { id, store }
    }

    pub fn append(&mut self, event: ProfileEvent) -> Result<u64, FrameworkError> {
        self.store.append(event)
    }
}

impl Component for RemoteLogger {
    fn id(&self) -> &ComponentId {
        &self.id
    }

    fn kind(&self) -> ComponentKind {
        ComponentKind::RemoteLogger
    }

    fn handle(&mut self, _env: &Envelope, payload: Payload, _ctx: &mut dyn Context) -> Result<(), FrameworkError> {
        match payload.msg {
            Message::Log { event } => self.append(event).map(|_| ()),
            other => Err(FrameworkError::BadInput(format!("logger got `{}`", other.msg_type()))),
        }
    }

    fn as_any(&self) -> &dyn Any {
        self
    }

    fn as_any_mut(&mut self) -> &mut dyn Any {
        self
    }
}
