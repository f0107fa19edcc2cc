use std::collections::BTreeMap;
use std::net::{Ipv4Addr, SocketAddrV4};

use super::{FrameworkError, SchedulerPolicy};
use crate::comm::POD_IP_ENV;

/// Component launch arguments, with the flag spelling containers use.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LaunchArgs {
    pub bind: SocketAddrV4,
    pub remote_logger: Option<SocketAddrV4>,
    pub master: Option<SocketAddrV4>,
    pub scheduler: Option<SchedulerPolicy>,
    pub container_name: Option<String>,
}

fn bad(msg: impl Into<String>) -> FrameworkError {
    FrameworkError::BadArgs(msg.into())
}

impl LaunchArgs {
    pub fn new(bind: SocketAddrV4) -> Self {
        Self { bind, remote_logger: None, master: None, scheduler: None, container_name: None }
    }

    /// Parses `--flag value` pairs. A `POD_IP` entry in `env` overrides
    /// `--bindIP`, which is how the environment-variable pattern hands a
    /// pod its own address.
    pub fn parse(args: &[String], env: &BTreeMap<String, String>) -> Result<Self, FrameworkError> {
        let mut flags: BTreeMap<&str, &str> = BTreeMap::new();
        let mut it = args.iter();
        while let Some(flag) = it.next() {
            if !flag.starts_with("--") {
                return Err(bad(format!("unexpected argument `{flag}`")));
            }
            let value = it.next().ok_or_else(|| bad(format!("`{flag}` needs a value")))?;
            flags.insert(flag.as_str(), value.as_str());
        }
        let ip = |name: &str| -> Result<Option<Ipv4Addr>, FrameworkError> {
            flags.get(name).map(|v| v.parse().map_err(|_| bad(format!("`{name}` is not an IPv4 address")))).transpose()
        };
        let port = |name: &str| -> Result<Option<u16>, FrameworkError> {
            flags.get(name).map(|v| v.parse().map_err(|_| bad(format!("`{name}` is not a port")))).transpose()
        };
        let pair = |ip_flag: &str, port_flag: &str| -> Result<Option<SocketAddrV4>, FrameworkError> {
            match (ip(ip_flag)?, port(port_flag)?) {
                (Some(i), Some(p)) => Ok(Some(SocketAddrV4::new(i, p))),
                (None, None) => Ok(None),
                _ => Err(bad(format!("`{ip_flag}` and `{port_flag}` go together"))),
            }
        };

        let bind_ip = match env.get(POD_IP_ENV) {
            Some(v) => Some(v.parse().map_err(|_| bad(format!("{POD_IP_ENV} is not an IPv4 address")))?),
            None => ip("--bindIP")?,
        };
        let bind_ip = bind_ip.ok_or_else(|| bad("missing --bindIP"))?;
        let bind_port = port("--bindPort")?.ok_or_else(|| bad("missing --bindPort"))?;
        Ok(Self {
            bind: SocketAddrV4::new(bind_ip, bind_port),
            remote_logger: pair("--remoteLoggerIP", "--remoteLoggerPort")?,
            master: pair("--masterIP", "--masterPort")?,
            scheduler: flags.get("--schedulerName").map(|s| s.parse()).transpose()?,
            container_name: flags.get("--containerName").map(|s| s.to_string()),
        })
    }

    pub fn to_args(&self) -> Vec<String> {
        let mut out = vec!["--bindIP".to_string(), self.bind.ip().to_string(), "--bindPort".to_string(), self.bind.port().to_string()];
        if let Some(l) = self.remote_logger {
            out.extend(["--remoteLoggerIP".to_string(), l.ip().to_string(), "--remoteLoggerPort".to_string(), l.port().to_string()]);
        }
        if let Some(m) = self.master {
            out.extend(["--masterIP".to_string(), m.ip().to_string(), "--masterPort".to_string(), m.port().to_string()]);
        }
        if let Some(SchedulerPolicy::RoundRobin) = self.scheduler {
            out.extend(["--schedulerName".to_string(), "RoundRobin".to_string()]);
        }
        if let Some(c) = &self.container_name {
            out.extend(["--containerName".to_string(), c.clone()]);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strings(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn master_flags() {
        let args = strings(&[
            "--bindIP", "192.0.0.1", "--bindPort", "5001", "--remoteLoggerIP", "192.0.0.1", "--remoteLoggerPort", "5000",
            "--schedulerName", "RoundRobin", "--containerName", "TempContainerName",
        ]);
        let parsed = LaunchArgs::parse(&args, &BTreeMap::new()).unwrap();
        assert_eq!(parsed.bind, "192.0.0.1:5001".parse().unwrap());
        assert_eq!(parsed.remote_logger, Some("192.0.0.1:5000".parse().unwrap()));
        assert_eq!(parsed.scheduler, Some(SchedulerPolicy::RoundRobin));
        assert_eq!(parsed.container_name.as_deref(), Some("TempContainerName"));
        assert_eq!(parsed.to_args(), args);
    }

    #[test]
    fn pod_ip_env_overrides_bind_ip() {
        let args = strings(&["--bindIP", "192.0.0.1", "--bindPort", "5001"]);
        let env = BTreeMap::from([(POD_IP_ENV.to_string(), "10.42.0.7".to_string())]);
        assert_eq!(LaunchArgs::parse(&args, &env).unwrap().bind, "10.42.0.7:5001".parse().unwrap());
    }

    #[test]
    fn malformed() {
        for a in [&["--bindPort", "5001"][..], &["--bindIP", "x", "--bindPort", "1"], &["--bindIP"], &["stray"], &["--bindIP", "1.1.1.1", "--bindPort", "1", "--masterIP", "1.1.1.1"]] {
            assert!(matches!(LaunchArgs::parse(&strings(a), &BTreeMap::new()), Err(FrameworkError::BadArgs(_))), "{a:?}");
        }
        let genetic = strings(&["--bindIP", "1.1.1.1", "--bindPort", "1", "--schedulerName", "Genetic"]);
        assert_eq!(LaunchArgs::parse(&genetic, &BTreeMap::new()), Err(FrameworkError::UnknownScheduler("Genetic".into())));
    }
}
