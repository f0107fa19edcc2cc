use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_yaml::{Mapping, Value};

use super::{ClusterError, ResourceLimits};
use crate::framework::ComponentKind;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum RestartPolicy {
    #[default]
    Always,
    Never,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeploymentSpec {
    pub name: String,
    pub replicas: u32,
    pub component: ComponentKind,
    #[serde(default)]
    pub image: Option<String>,
    #[serde(default)]
    pub args: Vec<String>,
    #[serde(default)]
    pub env: BTreeMap<String, String>,
    #[serde(default)]
    pub node_name: Option<String>,
    #[serde(default)]
    pub host_network: bool,
    #[serde(default)]
    pub restart_policy: RestartPolicy,
    #[serde(default)]
    pub resource_limits: ResourceLimits,
    /// Keys the orchestrator does not act on, by dotted path, as JSON.
    #[serde(default)]
    pub annotations: BTreeMap<String, String>,
}

impl DeploymentSpec {
    pub fn new(name: &str, replicas: u32, component: ComponentKind) -> Self {
        Self {
            name: name.to_string(),
            replicas,
            component,
            image: None,
            args: Vec::new(),
            env: BTreeMap::new(),
            node_name: None,
            host_network: false,
            restart_policy: RestartPolicy::Always,
            resource_limits: ResourceLimits::default(),
            annotations: BTreeMap::new(),
        }
    }

    /// Value following `flag` in the container args, e.g. `--bindPort`.
    pub fn arg_value(&self, flag: &str) -> Option<&str> {
        self.args.iter().position(|a| a == flag).and_then(|i| self.args.get(i + 1)).map(String::as_str)
    }
}

fn malformed(msg: impl Into<String>) -> ClusterError {
    ClusterError::MalformedDocument(msg.into())
}

fn key(k: &Value) -> Result<&str, ClusterError> {
    k.as_str().ok_or_else(|| malformed("non-string mapping key"))
}

fn mapping<'a>(v: &'a Value, path: &str) -> Result<&'a Mapping, ClusterError> {
    match v {
        Value::Mapping(m) => Ok(m),
        _ => Err(malformed(format!("`{path}` must be a mapping"))),
    }
}

fn scalar_string(v: &Value, path: &str) -> Result<String, ClusterError> {
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        Value::Bool(b) => Ok(b.to_string()),
        Value::Null => Ok(String::new()),
        _ => Err(malformed(format!("`{path}` must be a scalar"))),
    }
}

fn annotate(out: &mut BTreeMap<String, String>, path: String, v: &Value) {
    let json = serde_json::to_string(v).unwrap_or_else(|_| format!("{v:?}"));
    out.insert(path, json);
}

/// Parses a Kubernetes-style Deployment document.
pub fn parse_deployment(document: &str) -> Result<DeploymentSpec, ClusterError> {
    let root: Value = serde_yaml::from_str(document).map_err(|e| malformed(e.to_string()))?;
    let root = mapping(&root, "document")?;
    let mut annotations = BTreeMap::new();

    let mut name = None;
    let mut replicas = None;
    let mut template = None;
    for (k, v) in root {
        match key(k)? {
            "apiVersion" => {}
            "kind" => {
                if v.as_str() != Some("Deployment") {
                    return Err(malformed(format!("unsupported kind {}", scalar_string(v, "kind")?)));
                }
            }
            "metadata" => {
                for (mk, mv) in mapping(v, "metadata")? {
                    match key(mk)? {
                        "name" => name = Some(scalar_string(mv, "metadata.name")?),
                        other => annotate(&mut annotations, format!("metadata.{other}"), mv),
                    }
                }
            }
            "spec" => {
                for (sk, sv) in mapping(v, "spec")? {
                    match key(sk)? {
                        "replicas" => {
                            let n = sv.as_i64().ok_or_else(|| malformed("`spec.replicas` must be an integer"))?;
                            replicas = Some(u32::try_from(n).map_err(|_| malformed(format!("invalid replica count {n}")))?);
                        }
                        "template" => template = Some(sv),
                        other => annotate(&mut annotations, format!("spec.{other}"), sv),
                    }
                }
            }
            other => annotate(&mut annotations, other.to_string(), v),
        }
    }
    if !root.contains_key("kind") {
        return Err(malformed("missing kind"));
    }
    let name = name.filter(|n| !n.is_empty()).ok_or(ClusterError::MissingField("name"))?;
    let replicas = replicas.ok_or(ClusterError::MissingField("replicas"))?;

    let mut spec = DeploymentSpec::new(&name, replicas, ComponentKind::Master);
    let mut kind_hint = None;
    if let Some(template) = template {
        for (tk, tv) in mapping(template, "spec.template")? {
            match key(tk)? {
                "spec" => parse_pod_spec(tv, &mut spec, &mut annotations)?,
                other => annotate(&mut annotations, format!("spec.template.{other}"), tv),
            }
        }
    }
    for arg in &spec.args {
        kind_hint = kind_hint.or_else(|| arg.parse::<ComponentKind>().ok());
    }
    spec.component = ComponentKind::from_hint(&name)
        .or(kind_hint)
        .ok_or_else(|| ClusterError::UnknownComponent(name.clone()))?;
    spec.annotations = annotations;
    Ok(spec)
}

fn parse_pod_spec(v: &Value, spec: &mut DeploymentSpec, annotations: &mut BTreeMap<String, String>) -> Result<(), ClusterError> {
    const P: &str = "spec.template.spec";
    for (k, v) in mapping(v, P)? {
        match key(k)? {
            "containers" => {
                let Value::Sequence(containers) = v else {
                    return Err(malformed(format!("`{P}.containers` must be a list")));
                };
                let first = containers.first().ok_or_else(|| malformed("no containers"))?;
                parse_container(first, spec, annotations)?;
                for (i, extra) in containers.iter().enumerate().skip(1) {
                    annotate(annotations, format!("{P}.containers[{i}]"), extra);
                }
            }
            "nodeName" => {
                let n = scalar_string(v, "nodeName")?;
                spec.node_name = (!n.is_empty()).then_some(n);
            }
            "hostNetwork" => {
                spec.host_network = v.as_bool().ok_or_else(|| malformed("`hostNetwork` must be a boolean"))?;
            }
            "restartPolicy" => {
                spec.restart_policy = match v.as_str() {
                    Some("Always") | Some("OnFailure") => RestartPolicy::Always,
                    Some("Never") => RestartPolicy::Never,
                    _ => return Err(malformed(format!("unknown restartPolicy {}", scalar_string(v, "restartPolicy")?))),
                };
            }
            other => annotate(annotations, format!("{P}.{other}"), v),
        }
    }
    Ok(())
}

fn parse_container(v: &Value, spec: &mut DeploymentSpec, annotations: &mut BTreeMap<String, String>) -> Result<(), ClusterError> {
    const P: &str = "spec.template.spec.containers[0]";
    for (k, v) in mapping(v, P)? {
        match key(k)? {
            "image" => spec.image = Some(scalar_string(v, "image")?),
            "args" => {
                let Value::Sequence(items) = v else {
                    return Err(malformed("`args` must be a list"));
                };
                for item in items {
                    spec.args.push(scalar_string(item, "args")?);
                }
            }
            "env" => {
                let Value::Sequence(items) = v else {
                    return Err(malformed("`env` must be a list"));
                };
                for item in items {
                    let m = mapping(item, "env[]")?;
                    let name = m.get("name").ok_or_else(|| malformed("env entry without name"))?;
                    let value = m.get("value").map(|v| scalar_string(v, "env[].value")).transpose()?.unwrap_or_default();
                    spec.env.insert(scalar_string(name, "env[].name")?, value);
                }
            }
            "resources" => {
                let m = mapping(v, "resources")?;
                for (rk, rv) in m {
                    match key(rk)? {
                        "limits" => spec.resource_limits = parse_limits(rv)?,
                        other => annotate(annotations, format!("{P}.resources.{other}"), rv),
                    }
                }
            }
            other => annotate(annotations, format!("{P}.{other}"), v),
        }
    }
    Ok(())
}

fn parse_limits(v: &Value) -> Result<ResourceLimits, ClusterError> {
    let mut limits = ResourceLimits::default();
    for (k, v) in mapping(v, "resources.limits")? {
        let text = scalar_string(v, "resources.limits")?;
        match key(k)? {
            "cpu" => limits.cpu_millicores = parse_cpu(&text).ok_or_else(|| malformed(format!("bad cpu quantity `{text}`")))?,
            "memory" => limits.mem_mb = parse_memory(&text).ok_or_else(|| malformed(format!("bad memory quantity `{text}`")))?,
            _ => {}
        }
    }
    Ok(limits)
}

/// `500m`, `2`, `0.5` to millicores.
pub fn parse_cpu(q: &str) -> Option<u64> {
    let q = q.trim();
    if let Some(m) = q.strip_suffix('m') {
        return m.parse().ok();
    }
    let cores: f64 = q.parse().ok()?;
    (cores >= 0.0 && cores.is_finite()).then(|| (cores * 1000.0).round() as u64)
}

/// Memory quantity to megabytes; binary and decimal suffixes are treated
/// alike, plain numbers are bytes.
pub fn parse_memory(q: &str) -> Option<u64> {
    let q = q.trim();
    let split = q.find(|c: char| !(c.is_ascii_digit() || c == '.')).unwrap_or(q.len());
    let (num, unit) = q.split_at(split);
    let n: f64 = num.parse().ok()?;
    let mb = match unit {
        "" => n / (1024.0 * 1024.0),
        "K" | "Ki" => n / 1024.0,
        "M" | "Mi" => n,
        "G" | "Gi" => n * 1024.0,
        "T" | "Ti" => n * 1024.0 * 1024.0,
        _ => return None,
    };
    Some(mb.ceil() as u64)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "kind: Deployment\nmetadata:\n  name: fogbus2-actor\nspec:\n  replicas: 0\n";

    #[test]
    fn minimal_document() {
        let spec = parse_deployment(MINIMAL).unwrap();
        assert_eq!(spec.name, "fogbus2-actor");
        assert_eq!(spec.replicas, 0);
        assert_eq!(spec.component, ComponentKind::Actor);
        assert!(spec.annotations.is_empty());
        assert!(!spec.host_network);
    }

    #[test]
    fn missing_fields() {
        let doc = "kind: Deployment\nmetadata:\n  name: fogbus2-actor\nspec: {}\n";
        assert_eq!(parse_deployment(doc).unwrap_err(), ClusterError::MissingField("replicas"));
        let doc = "kind: Deployment\nmetadata: {}\nspec:\n  replicas: 1\n";
        assert_eq!(parse_deployment(doc).unwrap_err(), ClusterError::MissingField("name"));
    }

    #[test]
    fn malformed_documents() {
        for doc in ["kind: Service\nmetadata:\n  name: x\nspec:\n  replicas: 1\n", "[1, 2", "just text", "metadata:\n  name: fogbus2-user\nspec:\n  replicas: -1\nkind: Deployment\n"] {
            assert!(matches!(parse_deployment(doc), Err(ClusterError::MalformedDocument(_))), "{doc}");
        }
    }

    #[test]
    fn kind_from_args_when_name_is_opaque() {
        let doc = "kind: Deployment\nmetadata:\n  name: worker-7\nspec:\n  replicas: 1\n  template:\n    spec:\n      containers:\n      - args: [\"--component\", \"task-executor\"]\n";
        assert_eq!(parse_deployment(doc).unwrap().component, ComponentKind::TaskExecutor);
        let doc = "kind: Deployment\nmetadata:\n  name: worker-7\nspec:\n  replicas: 1\n";
        assert_eq!(parse_deployment(doc).unwrap_err(), ClusterError::UnknownComponent("worker-7".into()));
    }

    #[test]
    fn limits_and_policy() {
        let doc = "kind: Deployment\nmetadata:\n  name: fogbus2-user\nspec:\n  replicas: 2\n  template:\n    spec:\n      restartPolicy: Never\n      containers:\n      - image: u\n        resources:\n          limits:\n            cpu: 250m\n            memory: 128Mi\n";
        let spec = parse_deployment(doc).unwrap();
        assert_eq!(spec.restart_policy, RestartPolicy::Never);
        assert_eq!(spec.resource_limits, ResourceLimits { cpu_millicores: 250, mem_mb: 128 });
    }

    #[test]
    fn quantities() {
        assert_eq!(parse_cpu("500m"), Some(500));
        assert_eq!(parse_cpu("2"), Some(2000));
        assert_eq!(parse_cpu("0.25"), Some(250));
        assert_eq!(parse_cpu("x"), None);
        assert_eq!(parse_memory("1Gi"), Some(1024));
        assert_eq!(parse_memory("256M"), Some(256));
        assert_eq!(parse_memory("1048576"), Some(1));
        assert_eq!(parse_memory("3Q"), None);
    }
}
