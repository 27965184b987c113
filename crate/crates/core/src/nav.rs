//! Viewer-side navigation over an exported roadmap.
//!
//! A single-button interface (tap, double tap, tap+hold) drives a total
//! state machine with three kinds of state: playing along an edge, standing
//! at an intersection, and previewing the roadmap to pick the next edge.
//! [`simulate`] replays an event script and produces the line-oriented trace
//! that player front ends must reproduce byte for byte.

use std::collections::BTreeSet;
use std::fmt::{self, Write as _};

use crate::error::{Error, Result};
use crate::export::{AssetDescriptor, Direction, ExportManifest};
use crate::render::Eye;
use crate::roadmap::Roadmap;

/// Seconds a hold must last before preview opens or a selection commits.
pub const DEFAULT_HOLD_THRESHOLD: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NavEdge {
    pub id: u32,
    pub src: u32,
    pub dst: u32,
    pub frames: u32,
}

impl NavEdge {
    pub fn last_pos(&self) -> f64 {
        self.frames.saturating_sub(1) as f64
    }
}

/// Connectivity and timing the state machine needs; built from either a
/// roadmap or an export manifest.
#[derive(Clone, Debug, PartialEq)]
pub struct NavGraph {
    pub fps: f64,
    pub hold_threshold: f64,
    edges: Vec<NavEdge>,
}

impl NavGraph {
    pub fn new(edges: Vec<NavEdge>, fps: f64) -> Result<Self> {
        if edges.is_empty() {
            return Err(Error::NoEdges);
        }
        for (i, e) in edges.iter().enumerate() {
            if e.id as usize != i {
                return Err(Error::InvalidRoadmap(format!("edge ids must be dense, found {} at {i}", e.id)));
            }
            if e.frames == 0 {
                return Err(Error::InvalidRoadmap(format!("edge {} has no frames", e.id)));
            }
        }
        if !(fps > 0.0) {
            return Err(Error::InvalidRoadmap("fps must be positive".into()));
        }
        Ok(NavGraph {
            fps,
            hold_threshold: DEFAULT_HOLD_THRESHOLD,
            edges,
        })
    }

    pub fn from_roadmap(roadmap: &Roadmap, fps: f64) -> Result<Self> {
        let edges = roadmap
            .edges()
            .iter()
            .map(|e| NavEdge {
                id: e.id,
                src: e.src,
                dst: e.dst,
                frames: e.timeline.length(),
            })
            .collect();
        Self::new(edges, fps)
    }

    pub fn from_manifest(manifest: &ExportManifest) -> Result<Self> {
        let mut edges: Vec<NavEdge> = manifest
            .edges
            .iter()
            .map(|e| NavEdge {
                id: e.edge,
                src: e.src,
                dst: e.dst,
                frames: e.frame_count,
            })
            .collect();
        edges.sort_by_key(|e| e.id);
        Self::new(edges, manifest.fps as f64)
    }

    pub fn with_hold_threshold(mut self, seconds: f64) -> Self {
        self.hold_threshold = seconds;
        self
    }

    pub fn edges(&self) -> &[NavEdge] {
        &self.edges
    }

    pub fn edge(&self, id: u32) -> Option<&NavEdge> {
        self.edges.get(id as usize)
    }

    /// Incident edges of `node`, ascending by id.
    pub fn incident(&self, node: u32) -> Vec<u32> {
        self.edges
            .iter()
            .filter(|e| e.src == node || e.dst == node)
            .map(|e| e.id)
            .collect()
    }

    pub fn initial_state(&self) -> NavState {
        NavState::OnEdge {
            edge: 0,
            pos: 0.0,
            direction: Direction::Fwd,
            playing: false,
        }
    }

    pub fn initial_history(&self) -> TraversalHistory {
        let mut history = TraversalHistory::default();
        history.visited.insert(self.edges[0].src);
        history
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum NavState {
    OnEdge {
        edge: u32,
        pos: f64,
        direction: Direction,
        playing: bool,
    },
    AtIntersection {
        node: u32,
        arrived_via: u32,
        arrived_direction: Direction,
        /// Seconds held so far while the button is down.
        held: Option<f64>,
    },
    Preview {
        node: u32,
        arrived_via: u32,
        arrived_direction: Direction,
        candidates: Vec<u32>,
        selection: usize,
        held: Option<f64>,
    },
}

impl NavState {
    pub fn kind(&self) -> &'static str {
        match self {
            NavState::OnEdge { .. } => "edge",
            NavState::AtIntersection { .. } => "node",
            NavState::Preview { .. } => "preview",
        }
    }

    fn held(&self) -> Option<f64> {
        match self {
            NavState::OnEdge { .. } => None,
            NavState::AtIntersection { held, .. } | NavState::Preview { held, .. } => *held,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InputEvent {
    Tap,
    DoubleTap,
    HoldStart,
    HoldEnd,
    Tick { dt: f64 },
}

impl fmt::Display for InputEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InputEvent::Tap => f.write_str("tap"),
            InputEvent::DoubleTap => f.write_str("dtap"),
            InputEvent::HoldStart => f.write_str("hold_start"),
            InputEvent::HoldEnd => f.write_str("hold_end"),
            InputEvent::Tick { dt } => write!(f, "tick:{dt:.6}"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TraversalHistory {
    pub visited: BTreeSet<u32>,
    pub traversed: BTreeSet<u32>,
}

impl TraversalHistory {
    /// True when `other` contains everything recorded here.
    pub fn is_subset_of(&self, other: &TraversalHistory) -> bool {
        self.visited.is_subset(&other.visited) && self.traversed.is_subset(&other.traversed)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Effect {
    /// Playback moved to another direction or edge; `frame` is the seek
    /// target in the new asset's local frame numbering.
    AssetSwitch { edge: u32, direction: Direction, frame: u32 },
    NodeArrived(u32),
    EdgeEntered(u32),
}

impl fmt::Display for Effect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Effect::AssetSwitch { edge, direction, frame } => {
                write!(f, "switch:e{edge}:{}:{frame}", direction.as_str())
            }
            Effect::NodeArrived(n) => write!(f, "arrive:n{n}"),
            Effect::EdgeEntered(e) => write!(f, "enter:e{e}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub state: NavState,
    pub history: TraversalHistory,
    pub effects: Vec<Effect>,
}

/// Asset-local frame shown at `pos`: `round(pos)` forwards, `N - 1 - round(pos)` backwards.
pub fn display_frame(edge: &NavEdge, pos: f64, direction: Direction) -> u32 {
    let f = (pos.round().max(0.0) as u32).min(edge.frames - 1);
    match direction {
        Direction::Fwd => f,
        Direction::Bwd => edge.frames - 1 - f,
    }
}

fn switch(edge: &NavEdge, pos: f64, direction: Direction) -> Effect {
    Effect::AssetSwitch {
        edge: edge.id,
        direction,
        frame: display_frame(edge, pos, direction),
    }
}

/// Incident edges of `node` in ascending id order, tagged with whether they were traversed.
pub fn preview_candidates(node: u32, graph: &NavGraph, history: &TraversalHistory) -> Vec<(u32, bool)> {
    graph
        .incident(node)
        .into_iter()
        .map(|e| (e, history.traversed.contains(&e)))
        .collect()
}

/// Enter `edge` at the end adjacent to `node`, facing away from it, paused.
fn enter_edge(node: u32, edge: &NavEdge) -> (NavState, Vec<Effect>) {
    let (pos, direction) = if edge.src == node {
        (0.0, Direction::Fwd)
    } else {
        (edge.last_pos(), Direction::Bwd)
    };
    (
        NavState::OnEdge {
            edge: edge.id,
            pos,
            direction,
            playing: false,
        },
        vec![Effect::EdgeEntered(edge.id), switch(edge, pos, direction)],
    )
}

/// One transition. Pairs not covered by the action table leave the state unchanged.
pub fn step(state: &NavState, event: &InputEvent, graph: &NavGraph, history: &TraversalHistory) -> Step {
    let mut history = history.clone();
    let mut effects = Vec::new();
    let next = match (state, *event) {
        (NavState::OnEdge { edge, pos, direction, playing }, event) => {
            let e = graph.edge(*edge).expect("state refers to a graph edge");
            match event {
                InputEvent::DoubleTap => {
                    let flipped = direction.flipped();
                    effects.push(switch(e, *pos, flipped));
                    NavState::OnEdge { edge: *edge, pos: *pos, direction: flipped, playing: *playing }
                }
                InputEvent::HoldStart => NavState::OnEdge { edge: *edge, pos: *pos, direction: *direction, playing: true },
                InputEvent::HoldEnd => NavState::OnEdge { edge: *edge, pos: *pos, direction: *direction, playing: false },
                InputEvent::Tick { dt } if *playing && dt > 0.0 => {
                    let advanced = pos + graph.fps * dt * direction.sign();
                    let arrival = match direction {
                        Direction::Fwd if advanced >= e.last_pos() => Some(e.dst),
                        Direction::Bwd if advanced <= 0.0 => Some(e.src),
                        _ => None,
                    };
                    match arrival {
                        Some(node) => {
                            history.visited.insert(node);
                            history.traversed.insert(e.id);
                            effects.push(Effect::NodeArrived(node));
                            NavState::AtIntersection {
                                node,
                                arrived_via: e.id,
                                arrived_direction: *direction,
                                held: None,
                            }
                        }
                        None => NavState::OnEdge { edge: *edge, pos: advanced, direction: *direction, playing: true },
                    }
                }
                _ => state.clone(),
            }
        }
        (NavState::AtIntersection { node, arrived_via, arrived_direction, held }, event) => match event {
            InputEvent::DoubleTap => {
                let e = graph.edge(*arrived_via).expect("state refers to a graph edge");
                let pos = match arrived_direction {
                    Direction::Fwd => e.last_pos(),
                    Direction::Bwd => 0.0,
                };
                let direction = arrived_direction.flipped();
                effects.push(switch(e, pos, direction));
                NavState::OnEdge { edge: e.id, pos, direction, playing: false }
            }
            InputEvent::HoldStart => NavState::AtIntersection {
                node: *node,
                arrived_via: *arrived_via,
                arrived_direction: *arrived_direction,
                held: Some(0.0),
            },
            InputEvent::HoldEnd => NavState::AtIntersection {
                node: *node,
                arrived_via: *arrived_via,
                arrived_direction: *arrived_direction,
                held: None,
            },
            InputEvent::Tick { dt } if held.is_some() && dt > 0.0 => {
                let total = held.unwrap_or(0.0) + dt;
                if total >= graph.hold_threshold {
                    NavState::Preview {
                        node: *node,
                        arrived_via: *arrived_via,
                        arrived_direction: *arrived_direction,
                        candidates: graph.incident(*node),
                        selection: 0,
                        held: None,
                    }
                } else {
                    NavState::AtIntersection {
                        node: *node,
                        arrived_via: *arrived_via,
                        arrived_direction: *arrived_direction,
                        held: Some(total),
                    }
                }
            }
            _ => state.clone(),
        },
        (NavState::Preview { node, arrived_via, arrived_direction, candidates, selection, held }, event) => {
            let with = |selection: usize, held: Option<f64>| NavState::Preview {
                node: *node,
                arrived_via: *arrived_via,
                arrived_direction: *arrived_direction,
                candidates: candidates.clone(),
                selection,
                held,
            };
            match event {
                InputEvent::Tap => with((selection + 1) % candidates.len(), *held),
                InputEvent::DoubleTap => NavState::AtIntersection {
                    node: *node,
                    arrived_via: *arrived_via,
                    arrived_direction: *arrived_direction,
                    held: None,
                },
                InputEvent::HoldStart => with(*selection, Some(0.0)),
                InputEvent::HoldEnd => with(*selection, None),
                InputEvent::Tick { dt } if held.is_some() && dt > 0.0 => {
                    let total = held.unwrap_or(0.0) + dt;
                    if total >= graph.hold_threshold {
                        let e = graph.edge(candidates[*selection]).expect("candidate is a graph edge");
                        let (next, entered) = enter_edge(*node, e);
                        effects.extend(entered);
                        next
                    } else {
                        with(*selection, Some(total))
                    }
                }
                _ => state.clone(),
            }
        }
    };
    Step {
        state: next,
        history,
        effects,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WidgetFill {
    Maroon,
    Turquoise,
    Yellow,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProgressWidget {
    pub fraction: f64,
    pub fill: WidgetFill,
    pub play_direction: Direction,
    pub endpoint_highlight: bool,
    pub hold_fraction: f64,
}

/// Playback position along the current (or arrival) edge and its direction.
fn edge_position(state: &NavState, graph: &NavGraph) -> (NavEdge, f64, Direction) {
    match state {
        NavState::OnEdge { edge, pos, direction, .. } => (*graph.edge(*edge).expect("graph edge"), *pos, *direction),
        NavState::AtIntersection { arrived_via, arrived_direction, .. }
        | NavState::Preview { arrived_via, arrived_direction, .. } => {
            let e = *graph.edge(*arrived_via).expect("graph edge");
            let pos = match arrived_direction {
                Direction::Fwd => e.last_pos(),
                Direction::Bwd => 0.0,
            };
            (e, pos, *arrived_direction)
        }
    }
}

pub fn widget_state(state: &NavState, graph: &NavGraph) -> ProgressWidget {
    let (edge, pos, direction) = edge_position(state, graph);
    let fraction = if edge.frames > 1 {
        (pos / edge.last_pos()).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let held = state.held();
    let fill = if held.is_some() {
        WidgetFill::Yellow
    } else if fraction == 0.0 {
        WidgetFill::Maroon
    } else {
        WidgetFill::Turquoise
    };
    ProgressWidget {
        fraction,
        fill,
        play_direction: direction,
        endpoint_highlight: !matches!(state, NavState::OnEdge { .. }),
        hold_fraction: held.map_or(0.0, |h| (h / graph.hold_threshold).clamp(0.0, 1.0)),
    }
}

/// The two assets that play for the current direction and the two that wait.
#[derive(Clone, Debug, PartialEq)]
pub struct PlaybackBinding {
    pub edge: u32,
    pub direction: Direction,
    pub active: (AssetDescriptor, AssetDescriptor),
    pub paused: (AssetDescriptor, AssetDescriptor),
    pub display_frame: u32,
    /// Relative file paths of the displayed left and right frames.
    pub frame_files: (String, String),
}

pub fn active_assets(state: &NavState, manifest: &ExportManifest) -> Result<PlaybackBinding> {
    let (edge_id, pos, direction) = match state {
        NavState::OnEdge { edge, pos, direction, .. } => (*edge, Some(*pos), *direction),
        NavState::AtIntersection { arrived_via, arrived_direction, .. }
        | NavState::Preview { arrived_via, arrived_direction, .. } => (*arrived_via, None, *arrived_direction),
    };
    let set = manifest.edge(edge_id).ok_or(Error::MissingEdge(edge_id))?;
    let edge = NavEdge {
        id: set.edge,
        src: set.src,
        dst: set.dst,
        frames: set.frame_count,
    };
    let pos = pos.unwrap_or(match direction {
        Direction::Fwd => edge.last_pos(),
        Direction::Bwd => 0.0,
    });
    let pair = |d: Direction| -> Result<(AssetDescriptor, AssetDescriptor)> {
        let get = |eye| set.asset(eye, d).cloned().ok_or(Error::MissingEdge(edge_id));
        Ok((get(Eye::Left)?, get(Eye::Right)?))
    };
    let frame = display_frame(&edge, pos, direction);
    let file = |eye| set.frame_path(eye, direction, frame).ok_or(Error::MissingEdge(edge_id));
    Ok(PlaybackBinding {
        edge: edge_id,
        direction,
        active: pair(direction)?,
        paused: pair(direction.flipped())?,
        display_frame: frame,
        frame_files: (file(Eye::Left)?, file(Eye::Right)?),
    })
}

/// Parses `tap | dtap | hold_start | hold_end | tick <dt_seconds>` lines;
/// blank lines and `#` comments are ignored.
pub fn parse_script(text: &str) -> Result<Vec<InputEvent>> {
    let mut events = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = |message: String| Error::Script { line: i + 1, message };
        let mut words = line.split_whitespace();
        let event = match (words.next(), words.next()) {
            (Some("tap"), None) => InputEvent::Tap,
            (Some("dtap"), None) => InputEvent::DoubleTap,
            (Some("hold_start"), None) => InputEvent::HoldStart,
            (Some("hold_end"), None) => InputEvent::HoldEnd,
            (Some("tick"), Some(dt)) => {
                let dt: f64 = dt.parse().map_err(|_| bad(format!("`{dt}` is not a number")))?;
                if !(dt > 0.0) || !dt.is_finite() {
                    return Err(bad(format!("tick duration must be positive, got {dt}")));
                }
                InputEvent::Tick { dt }
            }
            _ => return Err(bad(format!("unrecognized event `{line}`"))),
        };
        if words.next().is_some() {
            return Err(bad(format!("trailing input in `{line}`")));
        }
        events.push(event);
    }
    Ok(events)
}

pub fn format_script(events: &[InputEvent]) -> String {
    let mut out = String::new();
    for e in events {
        match e {
            InputEvent::Tick { dt } => writeln!(out, "tick {dt}").unwrap(),
            other => writeln!(out, "{other}").unwrap(),
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord {
    pub seq: usize,
    pub event: Option<InputEvent>,
    pub state: NavState,
    pub effects: Vec<Effect>,
}

impl fmt::Display for TraceRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let event = self.event.map_or_else(|| "init".to_string(), |e| e.to_string());
        let (location, pos, direction) = match &self.state {
            NavState::OnEdge { edge, pos, direction, .. } => (format!("e{edge}"), format!("{pos:.6}"), *direction),
            NavState::AtIntersection { node, arrived_direction, .. } => (format!("n{node}"), "-".to_string(), *arrived_direction),
            NavState::Preview { node, arrived_direction, candidates, selection, .. } => (
                format!("n{node}"),
                format!("{selection}/{}", candidates.len()),
                *arrived_direction,
            ),
        };
        let effects = if self.effects.is_empty() {
            "-".to_string()
        } else {
            self.effects.iter().map(Effect::to_string).collect::<Vec<_>>().join(",")
        };
        write!(
            f,
            "{} {event} {} {location} {pos} {} {effects}",
            self.seq,
            self.state.kind(),
            direction.as_str()
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraversalTrace {
    pub records: Vec<TraceRecord>,
    pub history: TraversalHistory,
}

impl fmt::Display for TraversalTrace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.records {
            writeln!(f, "{r}")?;
        }
        Ok(())
    }
}

/// Replays `events` from the initial state; one record per event plus the initial record.
pub fn simulate(graph: &NavGraph, events: &[InputEvent]) -> TraversalTrace {
    let mut state = graph.initial_state();
    let mut history = graph.initial_history();
    let mut records = vec![TraceRecord {
        seq: 0,
        event: None,
        state: state.clone(),
        effects: Vec::new(),
    }];
    for (i, event) in events.iter().enumerate() {
        let next = step(&state, event, graph, &history);
        state = next.state;
        history = next.history;
        records.push(TraceRecord {
            seq: i + 1,
            event: Some(*event),
            state: state.clone(),
            effects: next.effects,
        });
    }
    TraversalTrace { records, history }
}

/// Checks the structural invariants of a state against its graph.
pub fn check_state(state: &NavState, graph: &NavGraph) -> std::result::Result<(), String> {
    match state {
        NavState::OnEdge { edge, pos, .. } => {
            let e = graph.edge(*edge).ok_or_else(|| format!("unknown edge {edge}"))?;
            if !(*pos >= 0.0 && *pos <= e.last_pos()) {
                return Err(format!("pos {pos} outside [0, {}]", e.last_pos()));
            }
        }
        NavState::AtIntersection { node, arrived_via, .. } => {
            let e = graph.edge(*arrived_via).ok_or_else(|| format!("unknown edge {arrived_via}"))?;
            if e.src != *node && e.dst != *node {
                return Err(format!("edge {arrived_via} does not touch node {node}"));
            }
        }
        NavState::Preview { node, candidates, selection, .. } => {
            if candidates.is_empty() {
                return Err("empty candidate list".into());
            }
            if *selection >= candidates.len() {
                return Err(format!("selection {selection} out of {}", candidates.len()));
            }
            if *candidates != graph.incident(*node) {
                return Err("candidates differ from the node's incident edges".into());
            }
        }
    }
    Ok(())
}
