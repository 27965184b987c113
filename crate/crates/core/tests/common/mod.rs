#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use voltour_core::nav::InputEvent;
use voltour_core::timeline::{CameraPose, DimensionState, Keyframe, LaneValue, Timeline};
use voltour_core::volume::{ClipBox, ControlPoint, TransferFunction, Vec3, VolumeSeries};
use voltour_core::{Operation, RenderSettings, Roadmap, VolumeField, VolumeRenderer};

pub const BRANCH_LOOP_EDGES: [(u32, u32); 4] = [(0, 1), (1, 2), (1, 3), (3, 0)];

pub const BRANCH_LOOP_METADATA: &str = "Connectivity: 0 , 1\nroadmap_0\nConnectivity: 1, 2\nroadmap_1\nConnectivity: 1, 3\nroadmap_2\nConnectivity: 3, 0\nroadmap_3\n";

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn defaults() -> DimensionState {
    DimensionState {
        camera: CameraPose::look_at(Vec3::new(0.5, 0.5, -2.5), Vec3::new(0.5, 0.5, 0.5)),
        tf: TransferFunction::ramp(),
        clip_box: ClipBox::unit(),
        time_step: 0.0,
    }
}

pub fn tf_glow() -> TransferFunction {
    TransferFunction::new(vec![
        ControlPoint::new(0.0, [0.0, 0.0, 0.0, 0.0]),
        ControlPoint::new(0.5, [0.9, 0.3, 0.1, 0.2]),
        ControlPoint::new(1.0, [1.0, 1.0, 0.6, 0.9]),
    ])
    .unwrap()
}

/// Camera travels from `from` to `to` (in x) while looking at the volume centre.
pub fn orbit(frames: u32, from: f64, to: f64) -> Timeline {
    let centre = Vec3::new(0.5, 0.5, 0.5);
    let pose = |x: f64| CameraPose::look_at(Vec3::new(x, 0.5, -2.0), centre);
    Timeline::new(frames)
        .unwrap()
        .with_keyframe(Keyframe::new(0, LaneValue::Camera(pose(from))))
        .unwrap()
        .with_keyframe(Keyframe::new(frames - 1, LaneValue::Camera(pose(to))))
        .unwrap()
}

pub fn roadmap_from(edges: &[(u32, u32)], frames: u32) -> (Roadmap, Vec<Operation>) {
    let mut roadmap = Roadmap::new(defaults());
    let mut nodes: Vec<u32> = edges.iter().flat_map(|&(s, d)| [s, d]).collect();
    nodes.sort_unstable();
    nodes.dedup();
    for n in nodes {
        roadmap.add_node(n).unwrap();
    }
    let ops = edges
        .iter()
        .enumerate()
        .map(|(i, &(s, d))| {
            roadmap
                .connect(s, d, orbit(frames, i as f64 * 0.3 - 0.5, i as f64 * 0.3 + 0.2))
                .unwrap()
                .1
        })
        .collect();
    (roadmap, ops)
}

pub fn branch_loop(frames: u32) -> Roadmap {
    roadmap_from(&BRANCH_LOOP_EDGES, frames).0
}

/// A chain 0 -> 1 -> ... -> n.
pub fn chain(n: u32, frames: u32) -> Roadmap {
    let edges: Vec<(u32, u32)> = (0..n).map(|i| (i, i + 1)).collect();
    roadmap_from(&edges, frames).0
}

/// Random connected multigraph built by always attaching to an existing node.
pub fn random_edges(rng: &mut ChaCha8Rng, count: usize) -> Vec<(u32, u32)> {
    let mut nodes = 2u32;
    let mut edges = vec![(0, 1)];
    while edges.len() < count {
        let existing = rng.random_range(0..nodes);
        let other = if rng.random_bool(0.4) {
            nodes += 1;
            nodes - 1
        } else {
            let mut o = rng.random_range(0..nodes - 1);
            if o >= existing {
                o += 1;
            }
            o
        };
        edges.push(if rng.random_bool(0.5) { (existing, other) } else { (other, existing) });
    }
    edges
}

/// Random keyframes on every lane so shared-node states are non-trivial.
pub fn random_timeline(rng: &mut ChaCha8Rng, frames: u32) -> Timeline {
    let mut tl = Timeline::new(frames).unwrap();
    for _ in 0..rng.random_range(0..6) {
        let f = rng.random_range(0..frames);
        let value = match rng.random_range(0..4) {
            0 => LaneValue::Camera(CameraPose::look_at(
                Vec3::new(rng.random(), rng.random(), rng.random::<f64>() - 3.0),
                Vec3::new(0.5, 0.5, 0.5),
            )),
            1 => LaneValue::Tf(TransferFunction::constant([rng.random(), rng.random(), rng.random(), rng.random()])),
            2 => {
                let lo = Vec3::new(rng.random::<f64>() * 0.4, rng.random::<f64>() * 0.4, rng.random::<f64>() * 0.4);
                LaneValue::Clip(ClipBox::new(lo, lo + Vec3::new(0.5, 0.5, 0.5)).unwrap())
            }
            _ => LaneValue::Temporal(rng.random::<f64>() * 4.0),
        };
        tl.insert_keyframe(Keyframe::new(f, value)).unwrap();
    }
    tl
}

pub fn renderer(n: usize, settings_size: (usize, usize), ipd: f64) -> VolumeRenderer {
    let series = VolumeSeries::single(unit_sphere(n));
    let mut settings = RenderSettings::for_field(series.first());
    settings.width = settings_size.0;
    settings.height = settings_size.1;
    VolumeRenderer::new(series, settings, ipd, 0.0).unwrap()
}

/// Hold for `seconds` in one tick, then release.
pub fn hold(events: &mut Vec<InputEvent>, seconds: f64) {
    events.push(InputEvent::HoldStart);
    events.push(InputEvent::Tick { dt: seconds });
    events.push(InputEvent::HoldEnd);
}

/// Full tour of the branch-loop graph at 30 frames per edge and 30 fps:
/// 0 -> 1 -> 2 (dead end) -> back to 1 -> 3 -> 0.
pub fn branch_loop_tour_script() -> Vec<InputEvent> {
    let mut ev = Vec::new();
    hold(&mut ev, 1.0); // play e0 to node 1
    hold(&mut ev, 1.0); // preview at 1: [0, 1, 2]
    ev.push(InputEvent::Tap); // select e1
    hold(&mut ev, 1.0); // commit e1
    hold(&mut ev, 1.0); // play to node 2
    hold(&mut ev, 1.0); // preview at 2: [1]
    hold(&mut ev, 1.0); // commit e1 backwards
    hold(&mut ev, 1.0); // play back to node 1
    hold(&mut ev, 1.0); // preview at 1
    ev.push(InputEvent::Tap);
    ev.push(InputEvent::Tap); // select e2
    hold(&mut ev, 1.0); // commit e2
    hold(&mut ev, 1.0); // play to node 3
    hold(&mut ev, 1.0); // preview at 3: [2, 3]
    ev.push(InputEvent::Tap); // select e3
    hold(&mut ev, 1.0); // commit e3
    hold(&mut ev, 1.0); // play to node 0
    ev
}

/// Every node's endpoint state, as seen from each incident edge, must serialize identically.
pub fn continuity_holds(roadmap: &Roadmap) -> Result<(), String> {
    for node in roadmap.nodes() {
        let states: Vec<(u32, String)> = roadmap
            .incident_edges(node.id)
            .into_iter()
            .map(|e| {
                let edge = roadmap.edge(e).unwrap();
                (e, serde_json::to_string(&roadmap.endpoint_state_at(edge, node.id)).unwrap())
            })
            .collect();
        if let Some((first, reference)) = states.first() {
            for (e, s) in &states[1..] {
                if s != reference {
                    return Err(format!("node {}: edge {e} disagrees with edge {first}", node.id));
                }
            }
        }
    }
    Ok(())
}

/// Builds a roadmap from `edges` with random per-edge timelines.
pub fn random_roadmap(rng: &mut ChaCha8Rng, edges: &[(u32, u32)]) -> Roadmap {
    let mut roadmap = Roadmap::new(defaults());
    let mut nodes: Vec<u32> = edges.iter().flat_map(|&(s, d)| [s, d]).collect();
    nodes.sort_unstable();
    nodes.dedup();
    for n in nodes {
        roadmap.add_node(n).unwrap();
    }
    for &(s, d) in edges {
        let frames = rng.random_range(2..20);
        let tl = random_timeline(rng, frames);
        roadmap.connect(s, d, tl).unwrap();
    }
    roadmap
}

/// Every regular file under `dir`, keyed by relative path.
pub fn tree(dir: &std::path::Path) -> std::collections::BTreeMap<String, Vec<u8>> {
    fn walk(root: &std::path::Path, dir: &std::path::Path, out: &mut std::collections::BTreeMap<String, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    let mut out = std::collections::BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

/// Off-centre radial blob resampled onto the unit cube, so views differ by direction.
pub fn unit_sphere(n: usize) -> VolumeField {
    let h = 1.0 / (n - 1) as f64;
    let c = Vec3::new(0.4, 0.55, 0.5);
    VolumeField::from_fn([n; 3], Vec3::new(h, h, h), Vec3::zeros(), |i, j, k| {
        let d = (Vec3::new(i as f64, j as f64, k as f64) * h - c).norm();
        (1.0 - d / 0.45).max(0.0) as f32
    })
    .unwrap()
}
