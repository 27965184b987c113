//! The `voltour` command line: render, build, export, sim, serve and synth.
//!
//! Exit codes: 0 on success, 1 on runtime failure, 2 on usage or parse errors.
//! `VOLTOUR_ENCODER` supplies a default encoder template for `export` and
//! `VOLTOUR_THREADS` caps the worker pool (0 = one per core).

pub mod build;
pub mod serve;
pub mod tour;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use voltour_core::export::{export_roadmap, ExportConfig, ExportManifest, FrameFormat, MANIFEST_FILE};
use voltour_core::nav::{parse_script, simulate, NavGraph};
use voltour_core::render::{Eye, Panorama, RenderSettings, VolumeRenderer, DEFAULT_IPD};
use voltour_core::timeline::DimensionState;
use voltour_core::volume::{load_volume, synthetic, write_volume, TransferFunction, Vec3, VolumeSeries};
use voltour_core::{Project, VolumeField};

pub const ENV_ENCODER: &str = "VOLTOUR_ENCODER";
pub const ENV_THREADS: &str = "VOLTOUR_THREADS";

/// Bad input from the user: mapped to exit code 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

#[derive(Debug, Parser)]
#[command(name = "voltour", version, about = "Author, export and navigate volume video tours")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum EyeArg {
    #[value(name = "L")]
    Left,
    #[value(name = "R")]
    Right,
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Ppm,
    Raw16,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SynthKind {
    Sphere,
    Drifting,
    Uniform,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render one stereo panorama of a volume to a PPM file.
    Render {
        /// Volume descriptor file.
        #[arg(long)]
        volume: PathBuf,
        /// Transfer function: inline `v:r,g,b,a ...` points or a JSON file of control points.
        #[arg(long)]
        tf: Option<String>,
        /// Camera as "px py pz qx qy qz qw"; defaults to a view of the whole volume.
        #[arg(long, allow_hyphen_values = true)]
        camera: Option<String>,
        #[arg(long, value_enum, default_value = "both", ignore_case = true)]
        eye: EyeArg,
        #[arg(long, default_value = "512x256")]
        size: String,
        #[arg(long, default_value_t = 1)]
        supersample: usize,
        #[arg(long, default_value_t = DEFAULT_IPD)]
        ipd: f64,
        #[arg(long, default_value_t = 0.0)]
        near_clip: f64,
        /// Ray-march step in world units; defaults to half the smallest voxel spacing.
        #[arg(long)]
        step: Option<f64>,
        #[arg(long)]
        shadows: bool,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Build a roadmap project from a tour script.
    Build {
        script: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Render every edge of a project into frame sequences, metadata and a manifest.
    Export {
        project: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long)]
        fps: Option<u32>,
        /// Seconds between seekable keyframes.
        #[arg(long, default_value_t = 0.25)]
        gop: f64,
        /// Output frame size WxH; defaults to the project's size.
        #[arg(long)]
        size: Option<String>,
        #[arg(long)]
        supersample: Option<usize>,
        #[arg(long, value_enum, default_value = "ppm")]
        format: FormatArg,
        /// Encoder command template with {input_pattern} {output} {fps} {gop_frames}.
        #[arg(long)]
        encoder: Option<String>,
    },
    /// Replay a navigation event script and print the trace.
    Sim {
        /// Project file, export directory or manifest.
        source: PathBuf,
        script: PathBuf,
    },
    /// Serve an export directory over HTTP for the player.
    Serve {
        dir: PathBuf,
        #[arg(long, default_value_t = 8000)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        bind: String,
    },
    /// Write a procedural test volume (descriptor plus brick).
    Synth {
        #[arg(value_enum)]
        kind: SynthKind,
        /// Voxels per axis.
        #[arg(long, default_value_t = 32)]
        size: usize,
        /// Time steps for `drifting`; files are numbered `<stem>_000.vol`, ...
        #[arg(long, default_value_t = 1)]
        steps: usize,
        #[arg(long, default_value_t = 0.5)]
        value: f32,
        /// Keep unit voxel spacing instead of fitting the volume into the unit cube.
        #[arg(long)]
        voxel_units: bool,
        #[arg(long, short)]
        out: PathBuf,
    },
}

/// 2 for usage and parse failures anywhere in the chain, 1 otherwise.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.is::<UsageError>() || cause.is::<tour::ParseError>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<voltour_core::Error>() {
            if matches!(e, voltour_core::Error::Script { .. } | voltour_core::Error::Metadata { .. }) {
                return 2;
            }
        }
    }
    1
}

pub fn configure_threads() -> anyhow::Result<()> {
    let Ok(value) = std::env::var(ENV_THREADS) else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .map_err(|_| UsageError(format!("{ENV_THREADS} must be a non-negative integer, got `{value}`")))?;
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("configuring the worker pool")?;
    }
    Ok(())
}

pub fn run(cli: Cli, out: &mut dyn Write) -> anyhow::Result<()> {
    configure_threads()?;
    match cli.command {
        Command::Render { volume, tf, camera, eye, size, supersample, ipd, near_clip, step, shadows, out: path } => {
            cmd_render(RenderArgs { volume, tf, camera, eye, size, supersample, ipd, near_clip, step, shadows, path }, out)
        }
        Command::Build { script, out: path } => cmd_build(&script, &path, out),
        Command::Export { project, out: dir, fps, gop, size, supersample, format, encoder } => {
            cmd_export(ExportArgs { project, dir, fps, gop, size, supersample, format, encoder }, out)
        }
        Command::Sim { source, script } => cmd_sim(&source, &script, out),
        Command::Serve { dir, port, bind } => cmd_serve(&dir, &format!("{bind}:{port}"), out),
        Command::Synth { kind, size, steps, value, voxel_units, out: path } => {
            cmd_synth(SynthArgs { kind, size, steps, value, voxel_units, path }, out)
        }
    }
}

fn usage(message: impl Into<String>) -> anyhow::Error {
    UsageError(message.into()).into()
}

fn read_text(path: &Path) -> anyhow::Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

struct RenderArgs {
    volume: PathBuf,
    tf: Option<String>,
    camera: Option<String>,
    eye: EyeArg,
    size: String,
    supersample: usize,
    ipd: f64,
    near_clip: f64,
    step: Option<f64>,
    shadows: bool,
    path: PathBuf,
}

fn parse_tf_arg(arg: &str) -> anyhow::Result<TransferFunction> {
    let path = Path::new(arg);
    if path.is_file() {
        let text = read_text(path)?;
        return serde_json::from_str(&text)
            .map_err(|e| usage(format!("{}: not a transfer function: {e}", path.display())));
    }
    let words: Vec<&str> = arg.split_whitespace().collect();
    tour::parse_tf(&words).map_err(|e| usage(format!("--tf: {e}")))
}

pub fn write_ppm(path: &Path, panorama: &Panorama) -> anyhow::Result<()> {
    let mut bytes = format!("P6\n{} {}\n255\n", panorama.width, panorama.height).into_bytes();
    bytes.extend(panorama.to_rgb8());
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn cmd_render(args: RenderArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let (width, height) = build::parse_size(&args.size).ok_or_else(|| usage(format!("--size `{}` is not WxH", args.size)))?;
    if args.supersample == 0 {
        bail!(usage("--supersample must be at least 1"));
    }
    if !(args.ipd >= 0.0) || !(args.near_clip >= 0.0) {
        bail!(usage("--ipd and --near-clip must be >= 0"));
    }
    let tf = args.tf.as_deref().map(parse_tf_arg).transpose()?;
    let camera = match &args.camera {
        Some(c) => {
            let mut words = vec!["pose"];
            words.extend(c.split_whitespace());
            Some(tour::parse_camera(&words).map_err(|e| usage(format!("--camera: {e}")))?)
        }
        None => None,
    };
    let field = load_volume(&args.volume).with_context(|| format!("loading {}", args.volume.display()))?;
    let defaults = build::default_state(&field);
    let state = DimensionState {
        camera: camera.unwrap_or(defaults.camera),
        tf: tf.unwrap_or(defaults.tf),
        ..defaults
    };
    let mut settings = RenderSettings::for_field(&field);
    settings.width = width;
    settings.height = height;
    settings.supersample = args.supersample;
    settings.shadows_enabled = args.shadows;
    if let Some(step) = args.step {
        if !(step > 0.0) {
            bail!(usage("--step must be positive"));
        }
        settings.step_size = step;
    }
    let renderer = VolumeRenderer::new(VolumeSeries::single(field), settings.clone(), args.ipd, args.near_clip)?;
    let stereo = renderer.render_with(&state, &settings);
    let image = match args.eye {
        EyeArg::Left => stereo.eye(Eye::Left).clone(),
        EyeArg::Right => stereo.eye(Eye::Right).clone(),
        EyeArg::Both => Panorama::side_by_side(&stereo.left, &stereo.right),
    };
    write_ppm(&args.path, &image)?;
    writeln!(out, "wrote {} ({}x{})", args.path.display(), image.width, image.height)?;
    Ok(())
}

fn cmd_build(script: &Path, path: &Path, out: &mut dyn Write) -> anyhow::Result<()> {
    let text = read_text(script)?;
    let parsed = tour::parse(&text).with_context(|| format!("parsing {}", script.display()))?;
    let base = script.parent().unwrap_or(Path::new("."));
    let built = build::build(&parsed, base).with_context(|| format!("building {}", script.display()))?;
    for (edge, op) in built.project.roadmap.edges().iter().zip(&built.operations) {
        writeln!(out, "edge {}: {} -> {} {op}", edge.id, edge.src, edge.dst)?;
    }
    built.project.save(path)?;
    writeln!(
        out,
        "wrote {} ({} nodes, {} edges)",
        path.display(),
        built.project.roadmap.nodes().len(),
        built.project.roadmap.edge_count()
    )?;
    Ok(())
}

struct ExportArgs {
    project: PathBuf,
    dir: PathBuf,
    fps: Option<u32>,
    gop: f64,
    size: Option<String>,
    supersample: Option<usize>,
    format: FormatArg,
    encoder: Option<String>,
}

fn tree_bytes(dir: &Path) -> std::io::Result<u64> {
    let mut total = 0;
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        let meta = entry.metadata()?;
        total += if meta.is_dir() { tree_bytes(&entry.path())? } else { meta.len() };
    }
    Ok(total)
}

fn cmd_export(args: ExportArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let project = Project::load(&args.project).with_context(|| format!("loading {}", args.project.display()))?;
    let (width, height) = match &args.size {
        Some(s) => build::parse_size(s).ok_or_else(|| usage(format!("--size `{s}` is not WxH")))?,
        None => (project.settings.width, project.settings.height),
    };
    let encoder = args.encoder.or_else(|| std::env::var(ENV_ENCODER).ok().filter(|s| !s.trim().is_empty()));
    let config = ExportConfig {
        fps: args.fps.unwrap_or(project.fps),
        out_width: width,
        out_height: height,
        supersample: args.supersample.unwrap_or(project.settings.supersample),
        gop_seconds: args.gop,
        output_dir: args.dir.clone(),
        encoder_command: encoder,
        frame_format: match args.format {
            FormatArg::Ppm => FrameFormat::Ppm,
            FormatArg::Raw16 => FrameFormat::Raw16,
        },
    };
    config.validate().map_err(|e| usage(e.to_string()))?;
    let base = args.project.parent().unwrap_or(Path::new("."));
    let renderer = project.renderer(base)?;
    let manifest = export_roadmap(&project.roadmap, &renderer, &config)?;
    let bytes = tree_bytes(&args.dir).with_context(|| format!("measuring {}", args.dir.display()))?;
    writeln!(out, "edges: {}", manifest.edges.len())?;
    writeln!(out, "assets: {}", manifest.asset_count())?;
    writeln!(out, "frames: {}", manifest.total_rendered_frames)?;
    writeln!(out, "gop frames: {}", manifest.gop_frames)?;
    writeln!(out, "bytes: {bytes}")?;
    Ok(())
}

/// A navigation graph from a project, an export directory or a manifest file.
pub fn load_graph(source: &Path) -> anyhow::Result<NavGraph> {
    let manifest_path = if source.is_dir() {
        Some(source.join(MANIFEST_FILE))
    } else if source.file_name().is_some_and(|n| n == MANIFEST_FILE) {
        Some(source.to_path_buf())
    } else {
        None
    };
    if let Some(path) = manifest_path {
        let manifest = ExportManifest::load(&path).with_context(|| format!("loading {}", path.display()))?;
        return Ok(NavGraph::from_manifest(&manifest)?);
    }
    let text = read_text(source)?;
    if let Ok(manifest) = serde_json::from_str::<ExportManifest>(&text) {
        return Ok(NavGraph::from_manifest(&manifest)?);
    }
    let project = Project::load(source).with_context(|| format!("loading {}", source.display()))?;
    Ok(NavGraph::from_roadmap(&project.roadmap, project.fps as f64)?)
}

fn cmd_sim(source: &Path, script: &Path, out: &mut dyn Write) -> anyhow::Result<()> {
    let text = read_text(script)?;
    let events = parse_script(&text).with_context(|| format!("parsing {}", script.display()))?;
    let graph = load_graph(source)?;
    write!(out, "{}", simulate(&graph, &events))?;
    Ok(())
}

fn cmd_serve(dir: &Path, addr: &str, out: &mut dyn Write) -> anyhow::Result<()> {
    let server = serve::StaticServer::bind(dir, addr)?;
    match server.local_addr() {
        Some(a) => writeln!(out, "serving {} at http://{a}/", dir.display())?,
        None => writeln!(out, "serving {}", dir.display())?,
    }
    out.flush()?;
    server.run();
    Ok(())
}

struct SynthArgs {
    kind: SynthKind,
    size: usize,
    steps: usize,
    value: f32,
    voxel_units: bool,
    path: PathBuf,
}

/// Same samples with spacing 1/(n-1), so the grid spans the unit cube.
fn fit_unit_cube(field: VolumeField) -> anyhow::Result<VolumeField> {
    let n = field.dims()[0];
    let h = 1.0 / (n - 1) as f64;
    Ok(VolumeField::new(
        field.dims(),
        Vec3::repeat(h),
        Vec3::zeros(),
        field.scalar_type(),
        field.data().to_vec(),
        Some(field.value_range()),
    )?)
}

fn cmd_synth(args: SynthArgs, out: &mut dyn Write) -> anyhow::Result<()> {
    let SynthArgs { kind, size, steps, value, voxel_units, path } = args;
    if size < 2 {
        bail!(usage("--size must be at least 2"));
    }
    if steps == 0 {
        bail!(usage("--steps must be at least 1"));
    }
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| usage("--out needs a file name"))?
        .to_string();
    let write = |descriptor: &Path, field: VolumeField| -> anyhow::Result<()> {
        let field = if voxel_units { field } else { fit_unit_cube(field)? };
        let brick = format!("{}.raw", descriptor.file_stem().unwrap().to_string_lossy());
        write_volume(descriptor, &field, &brick).with_context(|| format!("writing {}", descriptor.display()))
    };
    match (kind, steps) {
        (SynthKind::Drifting, steps) if steps > 1 => {
            for t in 0..steps {
                let descriptor = path.with_file_name(format!("{stem}_{t:03}.vol"));
                write(&descriptor, synthetic::drifting_sphere(size, t, steps))?;
                writeln!(out, "wrote {}", descriptor.display())?;
            }
            return Ok(());
        }
        (SynthKind::Drifting, _) => write(&path, synthetic::drifting_sphere(size, 0, 1))?,
        (SynthKind::Sphere, _) => write(&path, synthetic::sphere(size))?,
        (SynthKind::Uniform, _) => write(&path, synthetic::uniform(size, value))?,
    }
    writeln!(out, "wrote {}", path.display())?;
    Ok(())
}
