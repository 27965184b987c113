//! Turns a parsed tour into a validated roadmap project.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use voltour_core::render::RenderSettings;
use voltour_core::roadmap::Operation;
use voltour_core::timeline::{CameraPose, DimensionState, Timeline};
use voltour_core::volume::{load_volume, TransferFunction, VolumeField};
use voltour_core::{Project, Roadmap, VolumeSource};

use crate::tour::{resolve, ParseError, Tour, VolumeDecl};
use crate::UsageError;

pub struct Built {
    pub project: Project,
    /// Classification of each edge against the finished roadmap.
    pub operations: Vec<Operation>,
}

fn usage_at(line: usize, message: impl Into<String>) -> anyhow::Error {
    UsageError(ParseError { line, message: message.into() }.to_string()).into()
}

/// Expands a series glob (relative to `base`) into sorted descriptor paths.
pub fn expand_series(base: &Path, pattern: &str, count: usize) -> anyhow::Result<Vec<PathBuf>> {
    let full = resolve(base, Path::new(pattern));
    let full = full.to_str().context("series pattern is not valid UTF-8")?;
    let mut paths = glob::glob(full)
        .map_err(|e| UsageError(format!("bad series pattern `{pattern}`: {e}")))?
        .collect::<Result<Vec<_>, _>>()?;
    paths.sort();
    if paths.len() != count {
        bail!(UsageError(format!(
            "series `{pattern}` matched {} descriptors, expected {count}",
            paths.len()
        )));
    }
    Ok(paths)
}

fn absolute(path: &Path) -> anyhow::Result<PathBuf> {
    path.canonicalize()
        .with_context(|| format!("cannot resolve {}", path.display()))
}

/// Default scene: whole volume, ramp TF, camera 2.5 extents in front of the centre.
pub fn default_state(field: &VolumeField) -> DimensionState {
    let bounds = field.bounds();
    let centre = bounds.center();
    let extent = (bounds.max - bounds.min).max().max(field.min_spacing());
    let eye = centre - nalgebra::Vector3::z() * (2.5 * extent);
    DimensionState {
        camera: CameraPose::look_at(eye, centre),
        tf: TransferFunction::ramp(),
        clip_box: bounds,
        time_step: 0.0,
    }
}

fn parse_setting<T: std::str::FromStr>(tour: &Tour, key: &str) -> anyhow::Result<Option<T>> {
    match tour.setting(key) {
        None => Ok(None),
        Some((line, values)) => values[0]
            .parse()
            .map(Some)
            .map_err(|_| usage_at(*line, format!("bad value `{}` for {key}", values[0]))),
    }
}

fn parse_reals(tour: &Tour, key: &str) -> anyhow::Result<Option<Vec<f64>>> {
    match tour.setting(key) {
        None => Ok(None),
        Some((line, values)) => values
            .iter()
            .map(|v| v.parse::<f64>().map_err(|_| usage_at(*line, format!("bad value `{v}` for {key}"))))
            .collect::<anyhow::Result<Vec<_>>>()
            .map(Some),
    }
}

pub fn parse_size(s: &str) -> Option<(usize, usize)> {
    let (w, h) = s.split_once(['x', 'X'])?;
    let (w, h) = (w.parse().ok()?, h.parse().ok()?);
    (w > 0 && h > 0).then_some((w, h))
}

fn settings_for(tour: &Tour, field: &VolumeField) -> anyhow::Result<RenderSettings> {
    let mut s = RenderSettings::for_field(field);
    s.supersample = 3;
    if let Some((line, v)) = tour.setting("size") {
        (s.width, s.height) = parse_size(&v[0]).ok_or_else(|| usage_at(*line, format!("bad size `{}`, expected WxH", v[0])))?;
    }
    if let Some(k) = parse_setting::<usize>(tour, "supersample")? {
        s.supersample = k;
    }
    if let Some(v) = parse_setting(tour, "step")? {
        s.step_size = v;
    }
    if let Some(v) = parse_setting(tour, "reference_step")? {
        s.reference_step = v;
    }
    if let Some(v) = parse_setting(tour, "early_termination")? {
        s.early_termination_alpha = v;
    }
    if let Some((line, v)) = tour.setting("shadows") {
        s.shadows_enabled = match v[0].as_str() {
            "on" | "true" => true,
            "off" | "false" => false,
            other => return Err(usage_at(*line, format!("shadows must be on or off, got `{other}`"))),
        };
    }
    if let Some(v) = parse_reals(tour, "light")? {
        let dir = nalgebra::Vector3::new(v[0], v[1], v[2]);
        if dir.norm() == 0.0 {
            return Err(usage_at(tour.setting("light").unwrap().0, "light direction must be nonzero"));
        }
        s.light_dir = dir.normalize();
    }
    if let Some(v) = parse_setting(tour, "shadow_multiplier")? {
        s.shadow_step_multiplier = v;
    }
    if let Some(v) = parse_reals(tour, "background")? {
        s.background_rgba = [v[0], v[1], v[2], v[3]];
    }
    s.validate().map_err(|e| UsageError(e.to_string()))?;
    Ok(s)
}

pub fn build(tour: &Tour, script_dir: &Path) -> anyhow::Result<Built> {
    if tour.edges.is_empty() {
        bail!(UsageError("no edges".into()));
    }
    let source = match tour.volume() {
        None => bail!(UsageError("no volume declared".into())),
        Some(VolumeDecl::Single(path)) => VolumeSource::Single {
            descriptor: absolute(&resolve(script_dir, path))?,
        },
        Some(VolumeDecl::Series { pattern, count }) => VolumeSource::Series {
            descriptors: expand_series(script_dir, pattern, *count)?
                .iter()
                .map(|p| absolute(p))
                .collect::<anyhow::Result<_>>()?,
        },
    };
    let first = source.descriptors()[0];
    let field = load_volume(first).with_context(|| format!("loading {}", first.display()))?;

    let defaults = tour.defaults.apply(&default_state(&field));
    let mut roadmap = Roadmap::new(defaults.clone());
    for node in &tour.nodes {
        if node.parts.is_empty() {
            roadmap.add_node(node.id)?;
        } else {
            roadmap.add_node_with_state(node.id, node.parts.apply(&defaults))?;
        }
    }
    let fps = parse_setting::<u32>(tour, "fps")?.unwrap_or(voltour_core::timeline::DEFAULT_FPS);
    if fps == 0 {
        return Err(usage_at(tour.setting("fps").unwrap().0, "fps must be positive"));
    }
    for edge in &tour.edges {
        let mut timeline = Timeline::with_fps(edge.frames, fps).map_err(|e| usage_at(edge.line, e.to_string()))?;
        for key in &edge.keyframes {
            timeline.insert_keyframe(key.clone()).map_err(|e| usage_at(edge.line, e.to_string()))?;
        }
        roadmap
            .connect(edge.src, edge.dst, timeline)
            .map_err(|e| usage_at(edge.line, e.to_string()))?;
    }
    let report = roadmap.validate();
    if !report.is_valid() {
        bail!("roadmap failed validation:\n{report}");
    }

    let mut project = Project::new(source, settings_for(tour, &field)?, roadmap);
    project.fps = fps;
    if let Some(ipd) = parse_setting::<f64>(tour, "ipd")? {
        project.ipd = ipd;
    }
    if let Some(near) = parse_setting::<f64>(tour, "near_clip")? {
        project.near_clip = near;
    }
    if !(project.ipd >= 0.0) || !(project.near_clip >= 0.0) {
        bail!(UsageError("ipd and near_clip must be >= 0".into()));
    }
    let operations = project.roadmap.classify_edges();
    Ok(Built { project, operations })
}
