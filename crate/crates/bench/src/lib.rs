//! Shared fixtures for the benchmarks.

use voltour_core::nav::{InputEvent, NavGraph};
use voltour_core::timeline::{CameraPose, DimensionState, Keyframe, LaneValue, Timeline};
use voltour_core::volume::{ClipBox, TransferFunction, Vec3, VolumeSeries};
use voltour_core::{RenderSettings, Roadmap, VolumeField, VolumeRenderer};

/// Camera in front of the unit box, looking at its centre.
pub fn state() -> DimensionState {
    DimensionState {
        camera: CameraPose::look_at(Vec3::new(0.5, 0.5, -2.5), Vec3::new(0.5, 0.5, 0.5)),
        tf: TransferFunction::ramp(),
        clip_box: ClipBox::unit(),
        time_step: 0.0,
    }
}

/// Renderer over an `n`^3 radial blob filling the unit box.
pub fn renderer(n: usize, width: usize, height: usize, supersample: usize) -> VolumeRenderer {
    let h = 1.0 / (n - 1) as f64;
    let field = VolumeField::from_fn([n; 3], Vec3::repeat(h), Vec3::zeros(), |i, j, k| {
        let d = (Vec3::new(i as f64, j as f64, k as f64) * h - Vec3::repeat(0.5)).norm();
        (1.0 - d / 0.45).max(0.0) as f32
    })
    .expect("valid field");
    let mut settings = RenderSettings::for_field(&field);
    settings.width = width;
    settings.height = height;
    settings.supersample = supersample;
    VolumeRenderer::new(VolumeSeries::single(field), settings, 0.064, 0.0).expect("valid renderer")
}

/// Four-node tour with a loop and a branch, `frames` per edge.
pub fn tour_graph(frames: u32) -> NavGraph {
    let mut roadmap = Roadmap::new(state());
    for n in 0..4 {
        roadmap.add_node(n).expect("fresh node");
    }
    for (i, (s, d)) in [(0, 1), (1, 2), (1, 3), (3, 0)].into_iter().enumerate() {
        let x = i as f64 * 0.3;
        let pose = |x: f64| CameraPose::look_at(Vec3::new(x, 0.5, -2.0), Vec3::new(0.5, 0.5, 0.5));
        let timeline = Timeline::new(frames)
            .and_then(|t| t.with_keyframe(Keyframe::new(0, LaneValue::Camera(pose(x)))))
            .and_then(|t| t.with_keyframe(Keyframe::new(frames - 1, LaneValue::Camera(pose(x + 0.3)))))
            .expect("valid timeline");
        roadmap.connect(s, d, timeline).expect("valid edge");
    }
    NavGraph::from_roadmap(&roadmap, 30.0).expect("valid graph")
}

/// Deterministic mixed input stream of `len` events.
pub fn event_stream(len: usize) -> Vec<InputEvent> {
    let mut x: u64 = 0x9e37_79b9_7f4a_7c15;
    (0..len)
        .map(|_| {
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            match x % 8 {
                0 => InputEvent::Tap,
                1 => InputEvent::DoubleTap,
                2 | 3 => InputEvent::HoldStart,
                4 => InputEvent::HoldEnd,
                _ => InputEvent::Tick { dt: 0.05 + (x >> 40) as f64 / (1u64 << 24) as f64 },
            }
        })
        .collect()
}
