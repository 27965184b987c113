//! Line-oriented tour scripts: the declarative replacement for an authoring GUI.
//!
//! ```text
//! # comment
//! set size 128x64
//! volume main sphere.vol
//! volume sn series steps/step_*.vol 4
//! tf glow 0:0,0,0,0 0.5:0.9,0.3,0.1,0.2 1:1,1,0.6,0.9
//! defaults
//!   tf glow
//! end
//! node 0
//!   camera lookat 0.5 0.5 -2 0.5 0.5 0.5
//! end
//! node 1
//! edge 0 -> 1 frames 30
//!   camera last lookat 2 0.5 0.5 0.5 0.5 0.5
//!   time 29 3
//! end
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::{Quaternion, UnitQuaternion};
use thiserror::Error;
use voltour_core::timeline::{CameraPose, DimensionState, Keyframe, LaneValue};
use voltour_core::volume::{ClipBox, ControlPoint, TransferFunction, Vec3};

#[derive(Debug, Error)]
#[error("line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

type Result<T> = std::result::Result<T, ParseError>;

#[derive(Clone, Debug, PartialEq)]
pub enum VolumeDecl {
    Single(PathBuf),
    Series { pattern: String, count: usize },
}

/// Optional overrides of a [`DimensionState`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StateParts {
    pub camera: Option<CameraPose>,
    pub tf: Option<TransferFunction>,
    pub clip: Option<ClipBox>,
    pub time: Option<f64>,
}

impl StateParts {
    pub fn is_empty(&self) -> bool {
        *self == StateParts::default()
    }

    pub fn apply(&self, base: &DimensionState) -> DimensionState {
        DimensionState {
            camera: self.camera.unwrap_or(base.camera),
            tf: self.tf.clone().unwrap_or_else(|| base.tf.clone()),
            clip_box: self.clip.unwrap_or(base.clip_box),
            time_step: self.time.unwrap_or(base.time_step),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NodeDecl {
    pub id: u32,
    pub line: usize,
    pub parts: StateParts,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EdgeDecl {
    pub src: u32,
    pub dst: u32,
    pub frames: u32,
    pub line: usize,
    pub keyframes: Vec<Keyframe>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Tour {
    pub volumes: Vec<(String, VolumeDecl)>,
    pub tfs: BTreeMap<String, TransferFunction>,
    /// `set` lines in order, keyed by setting name.
    pub settings: BTreeMap<String, (usize, Vec<String>)>,
    pub defaults: StateParts,
    pub nodes: Vec<NodeDecl>,
    pub edges: Vec<EdgeDecl>,
}

impl Tour {
    pub fn setting(&self, key: &str) -> Option<&(usize, Vec<String>)> {
        self.settings.get(key)
    }

    /// The volume to render: `set volume <name>` or the first declaration.
    pub fn volume(&self) -> Option<&VolumeDecl> {
        match self.setting("volume") {
            Some((_, v)) => self.volumes.iter().find(|(n, _)| *n == v[0]).map(|(_, d)| d),
            None => self.volumes.first().map(|(_, d)| d),
        }
    }
}

const SETTINGS: &[(&str, usize)] = &[
    ("size", 1),
    ("supersample", 1),
    ("step", 1),
    ("reference_step", 1),
    ("early_termination", 1),
    ("shadows", 1),
    ("light", 3),
    ("shadow_multiplier", 1),
    ("background", 4),
    ("ipd", 1),
    ("near_clip", 1),
    ("fps", 1),
    ("volume", 1),
];

enum Block {
    None,
    Defaults,
    Node(usize),
    Edge(usize),
}

pub fn parse(text: &str) -> Result<Tour> {
    let mut tour = Tour::default();
    let mut block = Block::None;
    for (index, raw) in text.lines().enumerate() {
        let line = index + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let words: Vec<&str> = content.split_whitespace().collect();
        let err = |message: String| ParseError { line, message };
        if words[0] == "end" {
            if words.len() > 1 {
                return Err(err("`end` takes no arguments".into()));
            }
            if matches!(block, Block::None) {
                return Err(err("`end` outside a block".into()));
            }
            block = Block::None;
            continue;
        }
        // Block keywords close an open block implicitly; `tf` stays a lane line
        // inside blocks, so declarations after a block need an explicit `end`.
        if matches!(words[0], "node" | "edge" | "defaults" | "set" | "volume") {
            block = Block::None;
        }
        match block {
            Block::Defaults => {
                state_line(&words, &tour.tfs, &mut tour.defaults).map_err(err)?;
                continue;
            }
            Block::Node(i) => {
                let mut parts = tour.nodes[i].parts.clone();
                state_line(&words, &tour.tfs, &mut parts).map_err(err)?;
                tour.nodes[i].parts = parts;
                continue;
            }
            Block::Edge(i) => {
                let frames = tour.edges[i].frames;
                let key = keyframe_line(&words, &tour.tfs, frames).map_err(err)?;
                tour.edges[i].keyframes.push(key);
                continue;
            }
            Block::None => {}
        }
        match words[0] {
            "set" => {
                let key = *words.get(1).ok_or_else(|| err("`set` needs a key".into()))?;
                let arity = SETTINGS
                    .iter()
                    .find(|(k, _)| *k == key)
                    .map(|(_, a)| *a)
                    .ok_or_else(|| err(format!("unknown setting `{key}`")))?;
                let values: Vec<String> = words[2..].iter().map(|s| s.to_string()).collect();
                if values.len() != arity {
                    return Err(err(format!("`set {key}` takes {arity} value(s)")));
                }
                if key == "volume" && !tour.volumes.iter().any(|(n, _)| *n == values[0]) {
                    return Err(err(format!("volume `{}` is not declared", values[0])));
                }
                tour.settings.insert(key.to_string(), (line, values));
            }
            "volume" => {
                let decl = match &words[1..] {
                    [name, path] => (name.to_string(), VolumeDecl::Single(PathBuf::from(path))),
                    [name, "series", pattern, count] => {
                        let count: usize = parse_num(count).map_err(err)?;
                        if count == 0 {
                            return Err(err("series needs at least one step".into()));
                        }
                        (name.to_string(), VolumeDecl::Series { pattern: pattern.to_string(), count })
                    }
                    _ => return Err(err("expected `volume <name> <descriptor>` or `volume <name> series <glob> <count>`".into())),
                };
                if tour.volumes.iter().any(|(n, _)| *n == decl.0) {
                    return Err(err(format!("volume `{}` declared twice", decl.0)));
                }
                tour.volumes.push(decl);
            }
            "tf" => {
                let name = *words.get(1).ok_or_else(|| err("`tf` needs a name".into()))?;
                if tour.tfs.contains_key(name) {
                    return Err(err(format!("transfer function `{name}` declared twice")));
                }
                let tf = parse_tf(&words[2..]).map_err(err)?;
                tour.tfs.insert(name.to_string(), tf);
            }
            "defaults" => {
                if words.len() != 1 {
                    return Err(err("`defaults` takes no arguments".into()));
                }
                block = Block::Defaults;
            }
            "node" => {
                let id: u32 = match &words[1..] {
                    [id] => parse_num(id).map_err(err)?,
                    _ => return Err(err("expected `node <id>`".into())),
                };
                if tour.nodes.iter().any(|n| n.id == id) {
                    return Err(err(format!("node {id} declared twice")));
                }
                tour.nodes.push(NodeDecl { id, line, parts: StateParts::default() });
                block = Block::Node(tour.nodes.len() - 1);
            }
            "edge" => {
                let (src, dst, frames) = match &words[1..] {
                    [s, "->", d, "frames", n] => (
                        parse_num::<u32>(s).map_err(err)?,
                        parse_num::<u32>(d).map_err(err)?,
                        parse_num::<u32>(n).map_err(err)?,
                    ),
                    _ => return Err(err("expected `edge <src> -> <dst> frames <N>`".into())),
                };
                for id in [src, dst] {
                    if !tour.nodes.iter().any(|n| n.id == id) {
                        return Err(err(format!("node {id} is not declared")));
                    }
                }
                if src == dst {
                    return Err(err(format!("edge from node {src} to itself")));
                }
                if frames < 2 {
                    return Err(err("an edge needs at least 2 frames".into()));
                }
                tour.edges.push(EdgeDecl { src, dst, frames, line, keyframes: Vec::new() });
                block = Block::Edge(tour.edges.len() - 1);
            }
            other => return Err(err(format!("unknown statement `{other}`"))),
        }
    }
    Ok(tour)
}

fn parse_num<T: std::str::FromStr>(s: &str) -> std::result::Result<T, String> {
    s.parse().map_err(|_| format!("`{s}` is not a valid number"))
}

fn parse_reals<const N: usize>(words: &[&str]) -> std::result::Result<[f64; N], String> {
    if words.len() != N {
        return Err(format!("expected {N} numbers, found {}", words.len()));
    }
    let mut out = [0.0; N];
    for (o, w) in out.iter_mut().zip(words) {
        let v: f64 = parse_num(w)?;
        if !v.is_finite() {
            return Err(format!("`{w}` is not finite"));
        }
        *o = v;
    }
    Ok(out)
}

/// `v:r,g,b,a` control points.
pub fn parse_tf(words: &[&str]) -> std::result::Result<TransferFunction, String> {
    if words.is_empty() {
        return Err("transfer function needs control points `v:r,g,b,a`".into());
    }
    let mut points = Vec::with_capacity(words.len());
    for w in words {
        let (v, rgba) = w.split_once(':').ok_or_else(|| format!("`{w}` is not `v:r,g,b,a`"))?;
        let channels: Vec<&str> = rgba.split(',').collect();
        let rgba = parse_reals::<4>(&channels).map_err(|e| format!("`{w}`: {e}"))?;
        points.push(ControlPoint::new(parse_num(v)?, rgba));
    }
    TransferFunction::new(points).map_err(|e| e.to_string())
}

/// `pose px py pz qx qy qz qw` or `lookat px py pz tx ty tz`.
pub fn parse_camera(words: &[&str]) -> std::result::Result<CameraPose, String> {
    match words.first() {
        Some(&"pose") => {
            let [px, py, pz, qx, qy, qz, qw] = parse_reals::<7>(&words[1..])?;
            let q = Quaternion::new(qw, qx, qy, qz);
            if (q.norm() - 1.0).abs() > 1e-6 {
                return Err(format!("quaternion norm {} is not 1", q.norm()));
            }
            Ok(CameraPose::new(Vec3::new(px, py, pz), UnitQuaternion::new_normalize(q)))
        }
        Some(&"lookat") => {
            let [px, py, pz, tx, ty, tz] = parse_reals::<6>(&words[1..])?;
            let eye = Vec3::new(px, py, pz);
            let target = Vec3::new(tx, ty, tz);
            if eye == target {
                return Err("camera position equals look-at target".into());
            }
            Ok(CameraPose::look_at(eye, target))
        }
        _ => Err("camera must be `pose px py pz qx qy qz qw` or `lookat px py pz tx ty tz`".into()),
    }
}

fn parse_clip(words: &[&str]) -> std::result::Result<ClipBox, String> {
    let [x0, y0, z0, x1, y1, z1] = parse_reals::<6>(words)?;
    ClipBox::new(Vec3::new(x0, y0, z0), Vec3::new(x1, y1, z1)).map_err(|e| e.to_string())
}

fn lookup_tf(name: &str, tfs: &BTreeMap<String, TransferFunction>) -> std::result::Result<TransferFunction, String> {
    tfs.get(name)
        .cloned()
        .ok_or_else(|| format!("transfer function `{name}` is not declared"))
}

fn state_line(
    words: &[&str],
    tfs: &BTreeMap<String, TransferFunction>,
    parts: &mut StateParts,
) -> std::result::Result<(), String> {
    match words[0] {
        "camera" => parts.camera = Some(parse_camera(&words[1..])?),
        "tf" => match &words[1..] {
            [name] => parts.tf = Some(lookup_tf(name, tfs)?),
            _ => return Err("expected `tf <name>`".into()),
        },
        "clip" => parts.clip = Some(parse_clip(&words[1..])?),
        "time" => parts.time = Some(parse_reals::<1>(&words[1..])?[0]),
        other => return Err(format!("unknown state field `{other}`")),
    }
    Ok(())
}

fn keyframe_line(
    words: &[&str],
    tfs: &BTreeMap<String, TransferFunction>,
    frames: u32,
) -> std::result::Result<Keyframe, String> {
    let frame = match words.get(1) {
        Some(&"last") => frames - 1,
        Some(f) => parse_num::<u32>(f)?,
        None => return Err(format!("`{}` needs a frame number", words[0])),
    };
    if frame >= frames {
        return Err(format!("frame {frame} outside edge of {frames} frames"));
    }
    let rest = &words[2..];
    let value = match words[0] {
        "camera" => LaneValue::Camera(parse_camera(rest)?),
        "tf" => match rest {
            [name] => LaneValue::Tf(lookup_tf(name, tfs)?),
            _ => return Err("expected `tf <frame> <name>`".into()),
        },
        "clip" => LaneValue::Clip(parse_clip(rest)?),
        "time" => LaneValue::Temporal(parse_reals::<1>(rest)?[0]),
        other => return Err(format!("unknown keyframe lane `{other}`")),
    };
    Ok(Keyframe::new(frame, value))
}

/// Resolves a path relative to the script's directory.
pub fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}
