//! Pipeline graph: nodes with role sets, pipes, compressors, and the uniform
//! segmentation of pipes into short pipes.

use std::collections::{HashMap, HashSet, VecDeque};
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scenario::Profile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Slack,
    Injection,
    Withdrawal,
    Junction,
}

/// A single role or a list of roles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RoleSpec {
    One(Role),
    Many(Vec<Role>),
}

impl RoleSpec {
    pub fn as_slice(&self) -> &[Role] {
        match self {
            RoleSpec::One(r) => std::slice::from_ref(r),
            RoleSpec::Many(v) => v,
        }
    }
}

/// Energy withdrawal requirement: an upper bound or a fixed profile (MJ/s).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum EnergyDemand {
    Bound { value: Profile },
    Fixed { value: Profile },
}

impl EnergyDemand {
    pub fn value(&self) -> &Profile {
        match self {
            EnergyDemand::Bound { value } | EnergyDemand::Fixed { value } => value,
        }
    }

    pub fn is_fixed(&self) -> bool {
        matches!(self, EnergyDemand::Fixed { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    pub role: RoleSpec,
    pub p_min: f64,
    pub p_max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_slack: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_s: Option<Profile>,
    /// Supply flow cap (kg/s).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qs_max: Option<f64>,
    #[serde(default, rename = "gE_max", skip_serializing_if = "Option::is_none")]
    pub ge_max: Option<Profile>,
    #[serde(default, rename = "gE_fixed", skip_serializing_if = "Option::is_none")]
    pub ge_fixed: Option<Profile>,
}

impl Node {
    pub fn roles(&self) -> &[Role] {
        self.role.as_slice()
    }

    pub fn has(&self, role: Role) -> bool {
        self.roles().contains(&role)
    }

    pub fn is_supply(&self) -> bool {
        self.has(Role::Slack) || self.has(Role::Injection)
    }

    pub fn demand(&self) -> Option<EnergyDemand> {
        match (&self.ge_fixed, &self.ge_max) {
            (Some(v), _) => Some(EnergyDemand::Fixed { value: v.clone() }),
            (None, Some(v)) => Some(EnergyDemand::Bound { value: v.clone() }),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pipe {
    pub id: String,
    pub from: String,
    pub to: String,
    /// Length (m).
    #[serde(alias = "L")]
    pub length: f64,
    /// Diameter (m).
    #[serde(alias = "D")]
    pub diameter: f64,
    /// Darcy friction factor.
    #[serde(alias = "lambda")]
    pub friction: f64,
    /// Cross-section (m²); defaults to the circular area.
    #[serde(default, alias = "A", skip_serializing_if = "Option::is_none")]
    pub area: Option<f64>,
    /// Pressure bounds of interior points; default to the tighter endpoint bounds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_max: Option<f64>,
}

impl Pipe {
    pub fn cross_section(&self) -> f64 {
        self.area
            .unwrap_or(PI * self.diameter * self.diameter / 4.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Compressor {
    pub id: String,
    pub from: String,
    pub to: String,
    pub alpha_max: f64,
    /// Flow cap (kg/s).
    pub fc_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub nodes: Vec<Node>,
    pub pipes: Vec<Pipe>,
    #[serde(default)]
    pub compressors: Vec<Compressor>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("malformed network JSON at line {line}, column {column}: {message}")]
    Json {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{location}: unknown node `{id}`")]
    UnknownNode { location: String, id: String },
    #[error("{location}: duplicate id `{id}`")]
    DuplicateId { location: String, id: String },
    #[error("network has no slack node")]
    MissingSlack,
    #[error("{location}: {message}")]
    InvalidParameter { location: String, message: String },
}

fn bad(location: String, message: impl Into<String>) -> ParseError {
    ParseError::InvalidParameter {
        location,
        message: message.into(),
    }
}

fn check_positive(location: String, name: &str, v: f64) -> Result<(), ParseError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(bad(location, format!("{name} must be positive (got {v})")))
    }
}

/// Parses and checks a network document.
pub fn parse_network(document: &str) -> Result<Network, ParseError> {
    let net: Network = serde_json::from_str(document).map_err(|e| ParseError::Json {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    net.check()?;
    Ok(net)
}

impl Network {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("network serializes")
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }

    pub fn node(&self, id: &str) -> Option<&Node> {
        self.nodes.iter().find(|n| n.id == id)
    }

    /// Referential integrity and parameter ranges.
    pub fn check(&self) -> Result<(), ParseError> {
        let mut ids = HashSet::new();
        for (k, n) in self.nodes.iter().enumerate() {
            let loc = format!("nodes[{k}]");
            if !ids.insert(n.id.as_str()) {
                return Err(ParseError::DuplicateId {
                    location: loc,
                    id: n.id.clone(),
                });
            }
            check_positive(format!("{loc}.p_min"), "p_min", n.p_min)?;
            if !(n.p_max > n.p_min) {
                return Err(bad(format!("{loc}.p_max"), "p_max must exceed p_min"));
            }
            if n.roles().is_empty() {
                return Err(bad(format!("{loc}.role"), "at least one role required"));
            }
            if n.has(Role::Slack) {
                match n.p_slack {
                    None => return Err(bad(format!("{loc}.p_slack"), "slack node needs p_slack")),
                    Some(p) => check_positive(format!("{loc}.p_slack"), "p_slack", p)?,
                }
            }
            if let Some(q) = n.qs_max {
                check_positive(format!("{loc}.qs_max"), "qs_max", q)?;
            }
            if n.ge_max.is_some() && n.ge_fixed.is_some() {
                return Err(bad(loc.clone(), "give either gE_max or gE_fixed, not both"));
            }
            for (name, p) in [("gE_max", &n.ge_max), ("gE_fixed", &n.ge_fixed)] {
                if let Some(p) = p {
                    if p.range().0 < 0.0 {
                        return Err(bad(format!("{loc}.{name}"), "energy demand must be non-negative"));
                    }
                }
            }
            if let Some(e) = &n.eta_s {
                let (lo, hi) = e.range();
                if lo < 0.0 || hi > 1.0 {
                    return Err(bad(format!("{loc}.eta_s"), "mass fraction outside [0, 1]"));
                }
            }
        }
        let mut edge_ids = HashSet::new();
        let resolve = |loc: String, id: &str| {
            if ids.contains(id) {
                Ok(())
            } else {
                Err(ParseError::UnknownNode {
                    location: loc,
                    id: id.to_string(),
                })
            }
        };
        for (k, p) in self.pipes.iter().enumerate() {
            let loc = format!("pipes[{k}]");
            if !edge_ids.insert(p.id.as_str()) {
                return Err(ParseError::DuplicateId {
                    location: loc,
                    id: p.id.clone(),
                });
            }
            resolve(format!("{loc}.from"), &p.from)?;
            resolve(format!("{loc}.to"), &p.to)?;
            check_positive(format!("{loc}.length"), "length", p.length)?;
            check_positive(format!("{loc}.diameter"), "diameter", p.diameter)?;
            check_positive(format!("{loc}.friction"), "friction", p.friction)?;
            if let Some(a) = p.area {
                check_positive(format!("{loc}.area"), "area", a)?;
            }
            for (name, v) in [("p_min", p.p_min), ("p_max", p.p_max)] {
                if let Some(v) = v {
                    check_positive(format!("{loc}.{name}"), name, v)?;
                }
            }
        }
        for (k, c) in self.compressors.iter().enumerate() {
            let loc = format!("compressors[{k}]");
            if !edge_ids.insert(c.id.as_str()) {
                return Err(ParseError::DuplicateId {
                    location: loc,
                    id: c.id.clone(),
                });
            }
            resolve(format!("{loc}.from"), &c.from)?;
            resolve(format!("{loc}.to"), &c.to)?;
            if !(c.alpha_max >= 1.0) {
                return Err(bad(format!("{loc}.alpha_max"), "alpha_max must be at least 1"));
            }
            check_positive(format!("{loc}.fc_max"), "fc_max", c.fc_max)?;
        }
        if !self.nodes.iter().any(|n| n.has(Role::Slack)) {
            return Err(ParseError::MissingSlack);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DiagnosticKind {
    UnreachableNode,
    NoSlackInComponent,
    SelfLoop,
    CompressorEndpoints,
    RoleExclusivity,
    MissingDemand,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    pub message: String,
}

/// Structural checks that do not stop parsing; an empty list means the
/// network is usable.
pub fn validate_topology(net: &Network) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    let index: HashMap<&str, usize> = net
        .nodes
        .iter()
        .enumerate()
        .map(|(k, n)| (n.id.as_str(), k))
        .collect();
    let mut adj = vec![Vec::new(); net.nodes.len()];
    let edges = net
        .pipes
        .iter()
        .map(|p| (&p.id, &p.from, &p.to, false))
        .chain(net.compressors.iter().map(|c| (&c.id, &c.from, &c.to, true)));
    for (id, from, to, is_comp) in edges {
        if from == to {
            out.push(Diagnostic {
                kind: if is_comp {
                    DiagnosticKind::CompressorEndpoints
                } else {
                    DiagnosticKind::SelfLoop
                },
                message: if is_comp {
                    format!("compressor `{id}` endpoints must be distinct")
                } else {
                    format!("pipe `{id}` is a self-loop at `{from}`")
                },
            });
            continue;
        }
        if let (Some(&a), Some(&b)) = (index.get(from.as_str()), index.get(to.as_str())) {
            adj[a].push(b);
            adj[b].push(a);
        }
    }

    let mut component = vec![usize::MAX; net.nodes.len()];
    let mut components = Vec::new();
    for start in 0..net.nodes.len() {
        if component[start] != usize::MAX {
            continue;
        }
        let c = components.len();
        let mut members = vec![start];
        component[start] = c;
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if component[v] == usize::MAX {
                    component[v] = c;
                    members.push(v);
                    queue.push_back(v);
                }
            }
        }
        components.push(members);
    }
    // The component holding the first slack is the network proper.
    let main = net
        .nodes
        .iter()
        .position(|n| n.has(Role::Slack))
        .map(|k| component[k])
        .unwrap_or(0);
    for (c, members) in components.iter().enumerate() {
        if c == main {
            continue;
        }
        for &k in members {
            out.push(Diagnostic {
                kind: DiagnosticKind::UnreachableNode,
                message: format!("unreachable node `{}`", net.nodes[k].id),
            });
        }
        if !members.iter().any(|&k| net.nodes[k].has(Role::Slack)) {
            out.push(Diagnostic {
                kind: DiagnosticKind::NoSlackInComponent,
                message: format!(
                    "component containing `{}` has no slack node",
                    net.nodes[members[0]].id
                ),
            });
        }
    }
    if !net.nodes.iter().any(|n| n.has(Role::Slack)) {
        out.push(Diagnostic {
            kind: DiagnosticKind::NoSlackInComponent,
            message: "network has no slack node".into(),
        });
    }

    for n in &net.nodes {
        let special: Vec<Role> = n
            .roles()
            .iter()
            .copied()
            .filter(|r| *r != Role::Junction)
            .collect::<HashSet<_>>()
            .into_iter()
            .collect();
        if special.len() > 1 {
            out.push(Diagnostic {
                kind: DiagnosticKind::RoleExclusivity,
                message: format!(
                    "node `{}` has several roles; slack, injection and withdrawal are exclusive \
                     (only one of supply or withdrawal may be positive)",
                    n.id
                ),
            });
        }
        if n.has(Role::Withdrawal) && n.demand().is_none() {
            out.push(Diagnostic {
                kind: DiagnosticKind::MissingDemand,
                message: format!("withdrawal node `{}` has neither gE_max nor gE_fixed", n.id),
            });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum NodeOrigin {
    Original(usize),
    /// Interior point `k` (1-based) of pipe `pipe`.
    Auxiliary { pipe: usize, k: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SegNode {
    pub id: String,
    pub origin: NodeOrigin,
    pub roles: Vec<Role>,
    pub p_min: f64,
    pub p_max: f64,
}

impl SegNode {
    pub fn has(&self, role: Role) -> bool {
        self.roles.contains(&role)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Segment {
    pub id: String,
    pub pipe: usize,
    /// Position along the parent pipe, from 0.
    pub index: usize,
    pub from: usize,
    pub to: usize,
    pub length: f64,
    pub diameter: f64,
    pub friction: f64,
    pub area: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompressorEdge {
    pub id: String,
    pub from: usize,
    pub to: usize,
    pub alpha_max: f64,
    pub fc_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentedNetwork {
    pub network: Network,
    pub dl: f64,
    /// Original nodes in document order, then auxiliary nodes pipe by pipe.
    pub nodes: Vec<SegNode>,
    pub segments: Vec<Segment>,
    pub compressors: Vec<CompressorEdge>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SegmentError {
    #[error("segmentation length must be positive (got {0})")]
    Length(f64),
    #[error("{location}: unknown node `{id}`")]
    UnknownNode { location: String, id: String },
}

/// Number of equal segments that keeps each no longer than `dl`.
pub fn segment_count(length: f64, dl: f64) -> usize {
    let r = length / dl;
    // Absorb rounding so that 30 km / 10 km gives exactly 3.
    ((r - 1e-9 * r.max(1.0)).ceil() as usize).max(1)
}

pub fn segment_pipes(net: &Network, dl: f64) -> Result<SegmentedNetwork, SegmentError> {
    if !(dl > 0.0 && dl.is_finite()) {
        return Err(SegmentError::Length(dl));
    }
    let lookup = |loc: String, id: &str| {
        net.node_index(id).ok_or(SegmentError::UnknownNode {
            location: loc,
            id: id.to_string(),
        })
    };
    let mut nodes: Vec<SegNode> = net
        .nodes
        .iter()
        .enumerate()
        .map(|(k, n)| SegNode {
            id: n.id.clone(),
            origin: NodeOrigin::Original(k),
            roles: n.roles().to_vec(),
            p_min: n.p_min,
            p_max: n.p_max,
        })
        .collect();
    let mut segments = Vec::new();
    for (pk, p) in net.pipes.iter().enumerate() {
        let from = lookup(format!("pipes[{pk}].from"), &p.from)?;
        let to = lookup(format!("pipes[{pk}].to"), &p.to)?;
        let n = segment_count(p.length, dl);
        let len = p.length / n as f64;
        let p_min = p.p_min.unwrap_or(nodes[from].p_min.max(nodes[to].p_min));
        let p_max = p.p_max.unwrap_or(nodes[from].p_max.min(nodes[to].p_max));
        let mut prev = from;
        for k in 0..n {
            let next = if k + 1 == n {
                to
            } else {
                nodes.push(SegNode {
                    id: format!("{}#{}", p.id, k + 1),
                    origin: NodeOrigin::Auxiliary { pipe: pk, k: k + 1 },
                    roles: vec![Role::Junction],
                    p_min,
                    p_max,
                });
                nodes.len() - 1
            };
            segments.push(Segment {
                id: format!("{}/{}", p.id, k),
                pipe: pk,
                index: k,
                from: prev,
                to: next,
                length: len,
                diameter: p.diameter,
                friction: p.friction,
                area: p.cross_section(),
            });
            prev = next;
        }
    }
    let mut compressors = Vec::new();
    for (ck, c) in net.compressors.iter().enumerate() {
        compressors.push(CompressorEdge {
            id: c.id.clone(),
            from: lookup(format!("compressors[{ck}].from"), &c.from)?,
            to: lookup(format!("compressors[{ck}].to"), &c.to)?,
            alpha_max: c.alpha_max,
            fc_max: c.fc_max,
        });
    }
    Ok(SegmentedNetwork {
        network: net.clone(),
        dl,
        nodes,
        segments,
        compressors,
    })
}

impl SegmentedNetwork {
    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }

    /// Source node in the original network, if the node is not auxiliary.
    pub fn original(&self, node: usize) -> Option<&Node> {
        match self.nodes[node].origin {
            NodeOrigin::Original(k) => Some(&self.network.nodes[k]),
            NodeOrigin::Auxiliary { .. } => None,
        }
    }

    pub fn segments_of(&self, pipe: usize) -> impl Iterator<Item = &Segment> {
        self.segments.iter().filter(move |s| s.pipe == pipe)
    }
}
