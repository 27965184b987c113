//! Video output for a finished roadmap.
//!
//! Every edge yields four logical assets: left and right eye, each playable
//! forwards and backwards. Forward frames are written once per eye as PPM
//! files; backward assets read the same files through `b(f) = N - 1 - f`
//! unless an external encoder is configured, in which case physically
//! reversed sequences are produced for it.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::render::{Eye, Panorama, PanoramaSource};
use crate::roadmap::{serialize_metadata, Roadmap, RoadmapEdge};
use crate::timeline::DimensionState;

pub const MANIFEST_FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest";
pub const METADATA_FILE: &str = "roadmap_metadata.txt";

/// Suggested H.264 encoding command for `ffmpeg`.
pub const DEFAULT_ENCODER_TEMPLATE: &str = "ffmpeg -y -loglevel error -framerate {fps} -i {input_pattern} -c:v libx264 -pix_fmt yuv420p -g {gop_frames} -keyint_min {gop_frames} {output}";

const PLACEHOLDERS: [&str; 4] = ["{input_pattern}", "{output}", "{fps}", "{gop_frames}"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Fwd,
    Bwd,
}

impl Direction {
    pub fn flipped(self) -> Self {
        match self {
            Direction::Fwd => Direction::Bwd,
            Direction::Bwd => Direction::Fwd,
        }
    }

    pub fn sign(self) -> f64 {
        match self {
            Direction::Fwd => 1.0,
            Direction::Bwd => -1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Fwd => "fwd",
            Direction::Bwd => "bwd",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameFormat {
    /// Binary PPM, 8 bits per channel.
    Ppm,
    /// Binary PPM with maxval 65535, big-endian 16-bit channels.
    Raw16,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExportConfig {
    pub fps: u32,
    pub out_width: usize,
    pub out_height: usize,
    pub supersample: usize,
    pub gop_seconds: f64,
    pub output_dir: PathBuf,
    pub encoder_command: Option<String>,
    pub frame_format: FrameFormat,
}

impl ExportConfig {
    pub fn new(output_dir: impl Into<PathBuf>) -> Self {
        ExportConfig {
            fps: 30,
            out_width: 1280,
            out_height: 720,
            supersample: 3,
            gop_seconds: 0.25,
            output_dir: output_dir.into(),
            encoder_command: None,
            frame_format: FrameFormat::Ppm,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.fps == 0 || !(self.gop_seconds > 0.0) || self.supersample == 0 {
            return Err(Error::InvalidRoadmap(
                "export needs fps > 0, gop > 0 and supersample >= 1".into(),
            ));
        }
        if self.out_width == 0 || self.out_height == 0 {
            return Err(Error::InvalidRoadmap("export resolution must be positive".into()));
        }
        Ok(())
    }

    pub fn gop_frames(&self) -> u32 {
        gop_interval(self.fps, self.gop_seconds)
    }
}

/// Frames between GOP keyframes: `fps * gop_seconds` rounded, at least 1.
pub fn gop_interval(fps: u32, gop_seconds: f64) -> u32 {
    ((fps as f64 * gop_seconds).round() as u32).max(1)
}

pub fn gop_keyframe_indices(frames: u32, fps: u32, gop_seconds: f64) -> Vec<u32> {
    let interval = gop_interval(fps, gop_seconds) as usize;
    (0..frames.max(1)).step_by(interval).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IndexMap {
    Identity,
    Reverse,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssetDescriptor {
    pub eye: Eye,
    pub direction: Direction,
    /// printf-style pattern relative to the export directory.
    pub frames: String,
    pub index_map: IndexMap,
    pub encoded: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VideoAssetSet {
    pub edge: u32,
    pub src: u32,
    pub dst: u32,
    pub base_name: String,
    pub frame_count: u32,
    pub seek_index: Vec<u32>,
    pub assets: Vec<AssetDescriptor>,
}

impl VideoAssetSet {
    pub fn asset(&self, eye: Eye, direction: Direction) -> Option<&AssetDescriptor> {
        self.assets
            .iter()
            .find(|a| a.eye == eye && a.direction == direction)
    }

    /// Relative path of asset-local frame `f`.
    pub fn frame_path(&self, eye: Eye, direction: Direction, f: u32) -> Option<String> {
        let asset = self.asset(eye, direction)?;
        if f >= self.frame_count {
            return None;
        }
        let index = match asset.index_map {
            IndexMap::Identity => f,
            IndexMap::Reverse => self.frame_count - 1 - f,
        };
        Some(expand_pattern(&asset.frames, index))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExportManifest {
    pub format_version: u32,
    pub fps: u32,
    pub width: usize,
    pub height: usize,
    pub supersample: usize,
    pub gop_seconds: f64,
    pub gop_frames: u32,
    pub frame_format: FrameFormat,
    pub metadata: String,
    pub edges: Vec<VideoAssetSet>,
    pub total_rendered_frames: u64,
    pub total_assets: usize,
}

impl ExportManifest {
    pub fn edge(&self, id: u32) -> Option<&VideoAssetSet> {
        self.edges.iter().find(|e| e.edge == id)
    }

    pub fn asset_count(&self) -> usize {
        self.edges.iter().map(|e| e.assets.len()).sum()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let path = if path.is_dir() {
            path.join(MANIFEST_FILE)
        } else {
            path.to_path_buf()
        };
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn to_text(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        text
    }
}

fn expand_pattern(pattern: &str, index: u32) -> String {
    pattern.replace("%05d", &format!("{index:05}"))
}

fn frame_pattern(base: &str, dir: &str, ext: &str) -> String {
    format!("{base}/{dir}/frame_%05d.{ext}")
}

fn frame_extension(_format: FrameFormat) -> &'static str {
    "ppm"
}

pub fn encode_frame(panorama: &Panorama, format: FrameFormat) -> Vec<u8> {
    let mut out = Vec::new();
    match format {
        FrameFormat::Ppm => {
            out.extend_from_slice(format!("P6\n{} {}\n255\n", panorama.width, panorama.height).as_bytes());
            out.extend_from_slice(&panorama.to_rgb8());
        }
        FrameFormat::Raw16 => {
            out.extend_from_slice(format!("P6\n{} {}\n65535\n", panorama.width, panorama.height).as_bytes());
            out.extend(panorama.to_rgb16().into_iter().flat_map(u16::to_be_bytes));
        }
    }
    out
}

pub fn write_frame(path: &Path, panorama: &Panorama, format: FrameFormat) -> Result<()> {
    let bytes = encode_frame(panorama, format);
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Values substituted into an encoder command template.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderJob {
    pub input_pattern: PathBuf,
    pub output: PathBuf,
    pub fps: u32,
    pub gop_frames: u32,
}

fn shell_quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', r"'\''"))
}

/// Fills a command template. `{output}` is required; any other `{...}`
/// token must be one of the known placeholders.
pub fn expand_encoder_template(template: &str, job: &EncoderJob) -> Result<String> {
    if !template.contains("{output}") {
        return Err(Error::EncoderConfig(
            "template is missing the {output} placeholder".into(),
        ));
    }
    let mut rest = template;
    while let Some(start) = rest.find('{') {
        let Some(len) = rest[start..].find('}') else {
            break;
        };
        let token = &rest[start..start + len + 1];
        if !PLACEHOLDERS.contains(&token) {
            return Err(Error::EncoderConfig(format!("unknown placeholder {token}")));
        }
        rest = &rest[start + len + 1..];
    }
    Ok(template
        .replace("{input_pattern}", &shell_quote(&job.input_pattern.to_string_lossy()))
        .replace("{output}", &shell_quote(&job.output.to_string_lossy()))
        .replace("{fps}", &job.fps.to_string())
        .replace("{gop_frames}", &job.gop_frames.to_string()))
}

/// Runs an external encoder through `sh -c` and returns the output path.
pub fn invoke_encoder(template: &str, job: &EncoderJob) -> Result<PathBuf> {
    let command = expand_encoder_template(template, job)?;
    let output = Command::new("sh")
        .arg("-c")
        .arg(&command)
        .output()
        .map_err(Error::EncoderSpawn)?;
    if !output.status.success() {
        return Err(Error::EncoderFailed {
            status: output.status.to_string(),
            stderr: String::from_utf8_lossy(&output.stderr).trim().to_string(),
        });
    }
    Ok(job.output.clone())
}

/// Renders and writes one edge's frames and describes its four assets.
pub fn export_edge(
    edge: &RoadmapEdge,
    defaults: &DimensionState,
    renderer: &dyn PanoramaSource,
    config: &ExportConfig,
) -> Result<VideoAssetSet> {
    config.validate()?;
    let n = edge.timeline.length();
    let ext = frame_extension(config.frame_format);
    let base = edge.base_name.as_str();
    for eye in [Eye::Left, Eye::Right] {
        create_dir(&config.output_dir.join(base).join(eye.letter()))?;
    }

    (0..n).into_par_iter().try_for_each(|f| -> Result<()> {
        let state = edge.timeline.evaluate(f as f64, defaults);
        let stereo = renderer.render(&state, config.out_width, config.out_height, config.supersample);
        for eye in [Eye::Left, Eye::Right] {
            let rel = expand_pattern(&frame_pattern(base, eye.letter(), ext), f);
            write_frame(&config.output_dir.join(rel), stereo.eye(eye), config.frame_format)?;
        }
        Ok(())
    })?;

    let mut assets = Vec::with_capacity(4);
    for eye in [Eye::Left, Eye::Right] {
        let fwd_frames = frame_pattern(base, eye.letter(), ext);
        let mut fwd = AssetDescriptor {
            eye,
            direction: Direction::Fwd,
            frames: fwd_frames.clone(),
            index_map: IndexMap::Identity,
            encoded: None,
        };
        let mut bwd = AssetDescriptor {
            eye,
            direction: Direction::Bwd,
            frames: fwd_frames.clone(),
            index_map: IndexMap::Reverse,
            encoded: None,
        };
        if let Some(template) = &config.encoder_command {
            let reversed_dir = format!("{}_bwd", eye.letter());
            create_dir(&config.output_dir.join(base).join(&reversed_dir))?;
            let bwd_frames = frame_pattern(base, &reversed_dir, ext);
            for f in 0..n {
                let from = config.output_dir.join(expand_pattern(&fwd_frames, n - 1 - f));
                let to = config.output_dir.join(expand_pattern(&bwd_frames, f));
                if to.exists() {
                    fs::remove_file(&to).map_err(|e| Error::io(&to, e))?;
                }
                if fs::hard_link(&from, &to).is_err() {
                    fs::copy(&from, &to).map_err(|e| Error::io(&to, e))?;
                }
            }
            bwd.frames = bwd_frames;
            bwd.index_map = IndexMap::Identity;
            for asset in [&mut fwd, &mut bwd] {
                let rel = format!("{base}/{}_{}.mp4", eye.letter(), asset.direction.as_str());
                invoke_encoder(
                    template,
                    &EncoderJob {
                        input_pattern: config.output_dir.join(&asset.frames),
                        output: config.output_dir.join(&rel),
                        fps: config.fps,
                        gop_frames: config.gop_frames(),
                    },
                )?;
                asset.encoded = Some(rel);
            }
        }
        assets.push(fwd);
        assets.push(bwd);
    }

    Ok(VideoAssetSet {
        edge: edge.id,
        src: edge.src,
        dst: edge.dst,
        base_name: edge.base_name.clone(),
        frame_count: n,
        seek_index: gop_keyframe_indices(n, config.fps, config.gop_seconds),
        assets,
    })
}

/// Exports every edge, then writes the metadata file and the manifest.
pub fn export_roadmap(
    roadmap: &Roadmap,
    renderer: &dyn PanoramaSource,
    config: &ExportConfig,
) -> Result<ExportManifest> {
    if roadmap.edge_count() == 0 {
        return Err(Error::NoEdges);
    }
    let report = roadmap.validate();
    if !report.is_valid() {
        return Err(Error::InvalidRoadmap(report.to_string().trim_end().to_string()));
    }
    config.validate()?;
    create_dir(&config.output_dir)?;

    let edges = roadmap
        .edges()
        .iter()
        .map(|edge| export_edge(edge, roadmap.defaults(), renderer, config))
        .collect::<Result<Vec<_>>>()?;

    let metadata_path = config.output_dir.join(METADATA_FILE);
    fs::write(&metadata_path, serialize_metadata(roadmap)).map_err(|e| Error::io(&metadata_path, e))?;

    let manifest = ExportManifest {
        format_version: MANIFEST_FORMAT_VERSION,
        fps: config.fps,
        width: config.out_width,
        height: config.out_height,
        supersample: config.supersample,
        gop_seconds: config.gop_seconds,
        gop_frames: config.gop_frames(),
        frame_format: config.frame_format,
        metadata: METADATA_FILE.to_string(),
        total_rendered_frames: edges.iter().map(|e| 2 * e.frame_count as u64).sum(),
        total_assets: edges.iter().map(|e| e.assets.len()).sum(),
        edges,
    };
    let manifest_path = config.output_dir.join(MANIFEST_FILE);
    fs::write(&manifest_path, manifest.to_text()).map_err(|e| Error::io(&manifest_path, e))?;
    Ok(manifest)
}
