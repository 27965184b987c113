//! The roadmap: a node-link graph whose edges are animation segments and
//! whose nodes hold the keyframe state shared by every incident segment.
//!
//! Sharing follows connection order. The first edge to touch an undefined
//! node defines its state; later edges have their endpoint keyframes
//! overwritten with it, so playback continues seamlessly across the node.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timeline::{DimensionState, Timeline};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoadmapNode {
    pub id: u32,
    pub state: Option<DimensionState>,
    /// Edge whose connection first bound `state`; `None` for explicit states.
    pub defined_by: Option<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoadmapEdge {
    pub id: u32,
    pub src: u32,
    pub dst: u32,
    pub timeline: Timeline,
    pub base_name: String,
}

impl RoadmapEdge {
    pub fn other_end(&self, node: u32) -> u32 {
        if self.src == node {
            self.dst
        } else {
            self.src
        }
    }

    pub fn touches(&self, node: u32) -> bool {
        self.src == node || self.dst == node
    }
}

pub fn base_name(edge_id: u32) -> String {
    format!("roadmap_{edge_id}")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Operation {
    Build,
    Branch,
    Merge,
}

impl fmt::Display for Operation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Operation::Build => "Build",
            Operation::Branch => "Branch",
            Operation::Merge => "Merge",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Roadmap {
    defaults: DimensionState,
    nodes: Vec<RoadmapNode>,
    edges: Vec<RoadmapEdge>,
}

impl Roadmap {
    /// Empty roadmap; `defaults` fill timeline lanes that have no keyframes.
    pub fn new(defaults: DimensionState) -> Self {
        Roadmap {
            defaults,
            nodes: Vec::new(),
            edges: Vec::new(),
        }
    }

    pub fn defaults(&self) -> &DimensionState {
        &self.defaults
    }

    pub fn nodes(&self) -> &[RoadmapNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[RoadmapEdge] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn node(&self, id: u32) -> Option<&RoadmapNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn edge(&self, id: u32) -> Option<&RoadmapEdge> {
        self.edges.get(id as usize).filter(|e| e.id == id)
    }

    fn node_mut(&mut self, id: u32) -> Option<&mut RoadmapNode> {
        self.nodes.iter_mut().find(|n| n.id == id)
    }

    pub fn add_node(&mut self, id: u32) -> Result<()> {
        self.insert_node(id, None)
    }

    /// Node with an explicitly authored state.
    pub fn add_node_with_state(&mut self, id: u32, state: DimensionState) -> Result<()> {
        self.insert_node(id, Some(state))
    }

    fn insert_node(&mut self, id: u32, state: Option<DimensionState>) -> Result<()> {
        if self.node(id).is_some() {
            return Err(Error::DuplicateNode(id));
        }
        self.nodes.push(RoadmapNode {
            id,
            state,
            defined_by: None,
        });
        Ok(())
    }

    /// Edges touching `node`, ascending by id.
    pub fn incident_edges(&self, node: u32) -> Vec<u32> {
        self.edges.iter().filter(|e| e.touches(node)).map(|e| e.id).collect()
    }

    pub fn out_degree(&self, node: u32) -> usize {
        self.edges.iter().filter(|e| e.src == node).count()
    }

    /// Appends an edge, shares keyframes with its endpoint nodes and
    /// reports how the insertion extended the graph.
    pub fn connect(&mut self, src: u32, dst: u32, timeline: Timeline) -> Result<(u32, Operation)> {
        for id in [src, dst] {
            if self.node(id).is_none() {
                return Err(Error::UnknownNode(id));
            }
        }
        if src == dst {
            return Err(Error::SelfLoop(src));
        }
        let id = self.edges.len() as u32;
        let edge = RoadmapEdge {
            id,
            src,
            dst,
            timeline,
            base_name: base_name(id),
        };
        let op = classify_operation(self, &edge);
        self.edges.push(edge);
        self.bind_endpoint_states(id)?;
        Ok((id, op))
    }

    /// Connection-order keyframe sharing for one edge.
    pub fn bind_endpoint_states(&mut self, edge_id: u32) -> Result<()> {
        let idx = edge_id as usize;
        let (src, dst) = match self.edges.get(idx) {
            Some(e) => (e.src, e.dst),
            None => return Err(Error::InvalidRoadmap(format!("no edge {edge_id}"))),
        };
        // Evaluate both ends before writing either: pinning one end can move
        // the other when its lanes were holding.
        let mut states = Vec::with_capacity(2);
        for (node_id, at_start) in [(src, true), (dst, false)] {
            let edge = &self.edges[idx];
            let frame = if at_start { 0 } else { edge.timeline.last_frame() };
            let node = self.node(node_id).ok_or(Error::UnknownNode(node_id))?;
            let state = match &node.state {
                Some(state) => state.clone(),
                None => edge.timeline.evaluate(frame as f64, &self.defaults),
            };
            states.push((node_id, frame, state));
        }
        for (node_id, frame, state) in states {
            self.edges[idx].timeline.set_state_at(frame, &state)?;
            let node = self.node_mut(node_id).expect("checked above");
            if node.state.is_none() {
                node.state = Some(state);
                node.defined_by = Some(edge_id);
            }
        }
        Ok(())
    }

    /// Removes an edge; later edges shift down so ids stay dense and names follow.
    pub fn remove_edge(&mut self, edge_id: u32) -> Result<RoadmapEdge> {
        if edge_id as usize >= self.edges.len() {
            return Err(Error::InvalidRoadmap(format!("no edge {edge_id}")));
        }
        let removed = self.edges.remove(edge_id as usize);
        for (i, edge) in self.edges.iter_mut().enumerate() {
            edge.id = i as u32;
            edge.base_name = base_name(i as u32);
        }
        for node in &mut self.nodes {
            node.defined_by = match node.defined_by {
                Some(d) if d == edge_id => None,
                Some(d) if d > edge_id => Some(d - 1),
                other => other,
            };
        }
        Ok(removed)
    }

    /// Classification of every edge against the finished graph: an edge
    /// leaving a node with several outgoing edges is one of the branch's
    /// options, even when it was laid down before its siblings.
    pub fn classify_edges(&self) -> Vec<Operation> {
        self.edges
            .iter()
            .map(|edge| {
                let before = self.prefix(edge.id as usize);
                match classify_operation(&before, edge) {
                    Operation::Merge => Operation::Merge,
                    _ if self.out_degree(edge.src) >= 2 => Operation::Branch,
                    _ => Operation::Build,
                }
            })
            .collect()
    }

    fn prefix(&self, len: usize) -> Roadmap {
        Roadmap {
            defaults: self.defaults.clone(),
            nodes: self.nodes.clone(),
            edges: self.edges[..len].to_vec(),
        }
    }

    /// Endpoint state of `edge` at `node` (frame 0 at src, last frame at dst).
    pub fn endpoint_state_at(&self, edge: &RoadmapEdge, node: u32) -> DimensionState {
        let frame = if edge.src == node {
            0.0
        } else {
            edge.timeline.last_frame() as f64
        };
        edge.timeline.evaluate(frame, &self.defaults)
    }

    pub fn connections(&self) -> Vec<Connection> {
        self.edges
            .iter()
            .map(|e| Connection {
                src: e.src,
                dst: e.dst,
                base_name: e.base_name.clone(),
            })
            .collect()
    }

    pub fn validate(&self) -> ValidationReport {
        let mut issues = Vec::new();

        let mut seen = BTreeSet::new();
        for node in &self.nodes {
            if !seen.insert(node.id) {
                issues.push(Issue::DuplicateNodeId(node.id));
            }
        }
        let mut seen_edges = BTreeSet::new();
        for (i, edge) in self.edges.iter().enumerate() {
            if !seen_edges.insert(edge.id) {
                issues.push(Issue::DuplicateEdgeId(edge.id));
            } else if edge.id as usize != i {
                issues.push(Issue::EdgeIdOutOfOrder { edge: edge.id, position: i });
            }
            if edge.base_name != base_name(edge.id) {
                issues.push(Issue::BaseNameMismatch {
                    edge: edge.id,
                    name: edge.base_name.clone(),
                });
            }
            for end in [edge.src, edge.dst] {
                if self.node(end).is_none() {
                    issues.push(Issue::DanglingEdge { edge: edge.id, node: end });
                }
            }
            if edge.src == edge.dst {
                issues.push(Issue::SelfLoop(edge.id));
            }
            if edge.timeline.length() < 2 {
                issues.push(Issue::ZeroLengthTimeline(edge.id));
            }
            if let Err(e) = edge.timeline.check() {
                issues.push(Issue::InvalidTimeline {
                    edge: edge.id,
                    message: e.to_string(),
                });
            }
        }

        for node in &self.nodes {
            let incident: Vec<&RoadmapEdge> = self.edges.iter().filter(|e| e.touches(node.id)).collect();
            if incident.is_empty() {
                continue;
            }
            let states: Vec<DimensionState> = incident
                .iter()
                .map(|e| self.endpoint_state_at(e, node.id))
                .collect();
            let reference = node.state.as_ref().unwrap_or(&states[0]);
            let offending: Vec<u32> = incident
                .iter()
                .zip(&states)
                .filter(|(_, s)| *s != reference)
                .map(|(e, _)| e.id)
                .collect();
            if !offending.is_empty() {
                issues.push(Issue::ContinuityViolation {
                    node: node.id,
                    edges: offending,
                });
            }
        }

        issues.extend(self.unreachable_nodes().into_iter().map(Issue::UnreachableNode));
        ValidationReport { issues }
    }

    /// Nodes not connected (ignoring direction) to the tour's start node.
    fn unreachable_nodes(&self) -> Vec<u32> {
        let root = match (self.edges.first(), self.nodes.first()) {
            (Some(e), _) => e.src,
            (None, Some(n)) => n.id,
            (None, None) => return Vec::new(),
        };
        let mut adjacency: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
        for e in &self.edges {
            adjacency.entry(e.src).or_default().push(e.dst);
            adjacency.entry(e.dst).or_default().push(e.src);
        }
        let mut reached = BTreeSet::from([root]);
        let mut queue = VecDeque::from([root]);
        while let Some(n) = queue.pop_front() {
            for &next in adjacency.get(&n).into_iter().flatten() {
                if reached.insert(next) {
                    queue.push_back(next);
                }
            }
        }
        self.nodes
            .iter()
            .map(|n| n.id)
            .filter(|id| !reached.contains(id))
            .collect()
    }

    /// Direct mutable access for tests that need to corrupt a roadmap.
    #[doc(hidden)]
    pub fn nodes_mut(&mut self) -> &mut Vec<RoadmapNode> {
        &mut self.nodes
    }

    #[doc(hidden)]
    pub fn edges_mut(&mut self) -> &mut Vec<RoadmapEdge> {
        &mut self.edges
    }
}

/// How adding `edge` to `before` extends it. Merge is checked first.
pub fn classify_operation(before: &Roadmap, edge: &RoadmapEdge) -> Operation {
    let prior: Vec<&RoadmapEdge> = before.edges.iter().filter(|e| e.id != edge.id).collect();
    let incident = |n: u32| prior.iter().filter(|e| e.touches(n)).count();
    let outgoing = |n: u32| prior.iter().filter(|e| e.src == n).count();
    if incident(edge.dst) >= 1 && incident(edge.src) >= 1 {
        Operation::Merge
    } else if outgoing(edge.src) >= 1 {
        Operation::Branch
    } else {
        Operation::Build
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Issue {
    ContinuityViolation { node: u32, edges: Vec<u32> },
    UnreachableNode(u32),
    ZeroLengthTimeline(u32),
    DuplicateNodeId(u32),
    DuplicateEdgeId(u32),
    EdgeIdOutOfOrder { edge: u32, position: usize },
    BaseNameMismatch { edge: u32, name: String },
    DanglingEdge { edge: u32, node: u32 },
    SelfLoop(u32),
    InvalidTimeline { edge: u32, message: String },
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Issue::ContinuityViolation { node, edges } => {
                let list = edges.iter().map(u32::to_string).collect::<Vec<_>>().join(", ");
                write!(f, "continuity violation at node {node}: edges [{list}] disagree with the node state")
            }
            Issue::UnreachableNode(n) => write!(f, "unreachable node {n}"),
            Issue::ZeroLengthTimeline(e) => write!(f, "edge {e} has a zero-length timeline"),
            Issue::DuplicateNodeId(n) => write!(f, "duplicate node id {n}"),
            Issue::DuplicateEdgeId(e) => write!(f, "duplicate edge id {e}"),
            Issue::EdgeIdOutOfOrder { edge, position } => {
                write!(f, "edge id {edge} stored at position {position}")
            }
            Issue::BaseNameMismatch { edge, name } => {
                write!(f, "edge {edge} is named `{name}`, expected `{}`", base_name(*edge))
            }
            Issue::DanglingEdge { edge, node } => write!(f, "edge {edge} references missing node {node}"),
            Issue::SelfLoop(e) => write!(f, "edge {e} is a self-loop"),
            Issue::InvalidTimeline { edge, message } => write!(f, "edge {edge}: {message}"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.issues.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for issue in &self.issues {
            writeln!(f, "{issue}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Connection {
    pub src: u32,
    pub dst: u32,
    pub base_name: String,
}

/// Canonical metadata text: per edge, `Connectivity: <src>, <dst>` then the base name.
pub fn serialize_metadata(roadmap: &Roadmap) -> String {
    write_connections(&roadmap.connections())
}

pub fn write_connections(connections: &[Connection]) -> String {
    let mut out = String::new();
    for c in connections {
        out.push_str(&format!("Connectivity: {}, {}\n{}\n", c.src, c.dst, c.base_name));
    }
    out
}

/// Liberal reader: any spacing after the colon and around the comma; blank lines skipped.
pub fn parse_metadata(text: &str) -> Result<Vec<Connection>> {
    let mut out = Vec::new();
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty());
    while let Some((line, content)) = lines.next() {
        let bad = |message: String| Error::Metadata { line, message };
        let rest = content
            .trim()
            .strip_prefix("Connectivity:")
            .ok_or_else(|| bad("expected `Connectivity: <src>, <dst>`".into()))?;
        let (a, b) = rest
            .split_once(',')
            .ok_or_else(|| bad("expected two comma-separated node ids".into()))?;
        let parse_id = |s: &str| {
            s.trim()
                .parse::<u32>()
                .map_err(|_| bad(format!("`{}` is not a node id", s.trim())))
        };
        let (src, dst) = (parse_id(a)?, parse_id(b)?);
        let (_, name) = lines
            .next()
            .ok_or_else(|| bad("missing video name line".into()))?;
        let name = name.trim();
        if name.starts_with("Connectivity:") {
            return Err(bad("missing video name line".into()));
        }
        out.push(Connection {
            src,
            dst,
            base_name: name.to_string(),
        });
    }
    Ok(out)
}
