//! Omnidirectional-stereo volume ray casting.
//!
//! Each eye gets an equirectangular panorama whose rays are tangent to a
//! viewing circle of diameter `ipd`. Samples are composited front to back
//! through a pre-integrated slab table, with optional single-light shadows.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timeline::{CameraPose, DimensionState, Orientation};
use crate::volume::{clip_intersect, Rgba, Vec3, VolumeField, VolumeSeries, LUT_SIZE};

/// Eye separation in metres.
pub const DEFAULT_IPD: f64 = 0.064;
pub const DEFAULT_PREINTEGRATION_RESOLUTION: usize = 256;
pub const PREINTEGRATION_QUADRATURE: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Eye {
    Left,
    Right,
}

impl Eye {
    pub fn sign(self) -> f64 {
        match self {
            Eye::Left => -1.0,
            Eye::Right => 1.0,
        }
    }

    pub fn letter(self) -> &'static str {
        match self {
            Eye::Left => "L",
            Eye::Right => "R",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OdsCameraConfig {
    pub rig_center: Vec3,
    pub rig_orientation: Orientation,
    pub ipd: f64,
    pub near_clip: f64,
}

impl OdsCameraConfig {
    pub fn new(rig_center: Vec3, rig_orientation: Orientation, ipd: f64, near_clip: f64) -> Result<Self> {
        if !(ipd >= 0.0) || !ipd.is_finite() {
            return Err(Error::Volume(format!("ipd must be >= 0, got {ipd}")));
        }
        if !(near_clip >= 0.0) {
            return Err(Error::Volume(format!("near clip must be >= 0, got {near_clip}")));
        }
        if (rig_orientation.coords.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::Volume("rig orientation is not a unit quaternion".into()));
        }
        Ok(OdsCameraConfig {
            rig_center,
            rig_orientation,
            ipd,
            near_clip,
        })
    }

    pub fn from_pose(pose: &CameraPose, ipd: f64, near_clip: f64) -> Self {
        OdsCameraConfig {
            rig_center: pose.position,
            rig_orientation: pose.orientation,
            ipd,
            near_clip,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenderSettings {
    pub width: usize,
    pub height: usize,
    pub supersample: usize,
    pub step_size: f64,
    pub reference_step: f64,
    pub early_termination_alpha: f64,
    pub shadows_enabled: bool,
    pub light_dir: Vec3,
    pub shadow_step_multiplier: f64,
    pub background_rgba: Rgba,
}

impl Default for RenderSettings {
    fn default() -> Self {
        RenderSettings {
            width: 1280,
            height: 720,
            supersample: 1,
            step_size: 0.5,
            reference_step: 1.0,
            early_termination_alpha: 0.99,
            shadows_enabled: false,
            light_dir: Vec3::new(-1.0, -1.0, 1.0).normalize(),
            shadow_step_multiplier: 4.0,
            background_rgba: [0.0, 0.0, 0.0, 1.0],
        }
    }
}

impl RenderSettings {
    /// Defaults scaled to a field: the reference step is the smallest voxel
    /// spacing and rays march at half of it.
    pub fn for_field(field: &VolumeField) -> Self {
        let spacing = field.min_spacing();
        RenderSettings {
            step_size: spacing * 0.5,
            reference_step: spacing,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Volume(format!("render settings: {m}")));
        if self.width == 0 || self.height == 0 {
            return bad("width and height must be positive");
        }
        if self.supersample == 0 {
            return bad("supersample must be >= 1");
        }
        if !(self.step_size > 0.0) || !(self.reference_step > 0.0) {
            return bad("step sizes must be positive");
        }
        if !(self.early_termination_alpha > 0.0 && self.early_termination_alpha <= 1.0) {
            return bad("early termination alpha must lie in (0, 1]");
        }
        if !(self.shadow_step_multiplier >= 1.0) {
            return bad("shadow step multiplier must be >= 1");
        }
        if self.shadows_enabled && (self.light_dir.norm() - 1.0).abs() > 1e-6 {
            return bad("light direction must be a unit vector");
        }
        Ok(())
    }

    pub fn internal_size(&self) -> (usize, usize) {
        (self.width * self.supersample, self.height * self.supersample)
    }
}

/// RGBA image, row-major, top row at the highest elevation.
#[derive(Clone, Debug, PartialEq)]
pub struct Panorama {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f32>,
}

impl Panorama {
    pub fn filled(width: usize, height: usize, rgba: [f32; 4]) -> Self {
        Panorama {
            width,
            height,
            pixels: rgba.iter().copied().cycle().take(width * height * 4).collect(),
        }
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f32; 4] {
        let i = (y * self.width + x) * 4;
        [
            self.pixels[i],
            self.pixels[i + 1],
            self.pixels[i + 2],
            self.pixels[i + 3],
        ]
    }

    pub fn to_rgb8(&self) -> Vec<u8> {
        self.pixels
            .chunks_exact(4)
            .flat_map(|p| [quantize8(p[0]), quantize8(p[1]), quantize8(p[2])])
            .collect()
    }

    pub fn to_rgb16(&self) -> Vec<u16> {
        self.pixels
            .chunks_exact(4)
            .flat_map(|p| [quantize16(p[0]), quantize16(p[1]), quantize16(p[2])])
            .collect()
    }

    /// Left image next to right image.
    pub fn side_by_side(left: &Panorama, right: &Panorama) -> Panorama {
        assert_eq!((left.width, left.height), (right.width, right.height));
        let mut pixels = Vec::with_capacity(left.pixels.len() * 2);
        let row = left.width * 4;
        for y in 0..left.height {
            pixels.extend_from_slice(&left.pixels[y * row..(y + 1) * row]);
            pixels.extend_from_slice(&right.pixels[y * row..(y + 1) * row]);
        }
        Panorama {
            width: left.width * 2,
            height: left.height,
            pixels,
        }
    }
}

fn quantize8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn quantize16(v: f32) -> u16 {
    (v.clamp(0.0, 1.0) * 65535.0).round() as u16
}

#[derive(Clone, Debug, PartialEq)]
pub struct StereoPanorama {
    pub left: Panorama,
    pub right: Panorama,
}

impl StereoPanorama {
    pub fn eye(&self, eye: Eye) -> &Panorama {
        match eye {
            Eye::Left => &self.left,
            Eye::Right => &self.right,
        }
    }
}

/// Ray for pixel `(x, y)` of one eye's equirectangular panorama.
pub fn ods_ray(camera: &OdsCameraConfig, x: usize, y: usize, width: usize, height: usize, eye: Eye) -> (Vec3, Vec3) {
    let theta = TAU * (x as f64 + 0.5) / width as f64 - PI;
    let phi = FRAC_PI_2 - PI * (y as f64 + 0.5) / height as f64;
    ods_ray_at(camera, theta, phi, eye)
}

/// Ray for azimuth `theta` (0 faces +z) and elevation `phi`.
pub fn ods_ray_at(camera: &OdsCameraConfig, theta: f64, phi: f64, eye: Eye) -> (Vec3, Vec3) {
    let (sin_t, cos_t) = theta.sin_cos();
    let (sin_p, cos_p) = phi.sin_cos();
    let local_dir = Vec3::new(cos_p * sin_t, sin_p, cos_p * cos_t);
    let tangent = Vec3::new(cos_t, 0.0, -sin_t);
    let offset = tangent * (eye.sign() * camera.ipd * 0.5);
    let origin = camera.rig_center + camera.rig_orientation * offset;
    let dir = (camera.rig_orientation * local_dir).normalize();
    (origin, dir)
}

/// Composited slab colour (associated) and opacity for every pair of
/// front/back normalized scalar values.
#[derive(Clone, Debug, PartialEq)]
pub struct PreintegrationTable {
    resolution: usize,
    reference_step: f64,
    entries: Vec<Rgba>,
}

impl PreintegrationTable {
    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn reference_step(&self) -> f64 {
        self.reference_step
    }

    /// Entry at grid indices (front, back).
    pub fn entry(&self, front: usize, back: usize) -> Rgba {
        self.entries[front * self.resolution + back]
    }

    /// Bilinear lookup at normalized scalar values.
    pub fn lookup(&self, front: f64, back: f64) -> Rgba {
        let last = (self.resolution - 1) as f64;
        let cf = front.clamp(0.0, 1.0) * last;
        let cb = back.clamp(0.0, 1.0) * last;
        let f0 = (cf.floor() as usize).min(self.resolution.saturating_sub(2));
        let b0 = (cb.floor() as usize).min(self.resolution.saturating_sub(2));
        let (f1, b1) = ((f0 + 1).min(self.resolution - 1), (b0 + 1).min(self.resolution - 1));
        let (wf, wb) = (cf - f0 as f64, cb - b0 as f64);
        let mut out = [0.0; 4];
        let (e00, e01, e10, e11) = (
            self.entry(f0, b0),
            self.entry(f0, b1),
            self.entry(f1, b0),
            self.entry(f1, b1),
        );
        for ch in 0..4 {
            let lo = e00[ch] * (1.0 - wb) + e01[ch] * wb;
            let hi = e10[ch] * (1.0 - wb) + e11[ch] * wb;
            out[ch] = lo * (1.0 - wf) + hi * wf;
        }
        out
    }
}

/// Linear interpolation into a transfer function table.
pub fn tf_sample(lut: &[Rgba], value: f64) -> Rgba {
    let c = value.clamp(0.0, 1.0) * (lut.len() - 1) as f64;
    let i = (c.floor() as usize).min(lut.len() - 2);
    let w = c - i as f64;
    let (a, b) = (lut[i], lut[i + 1]);
    [
        a[0] + (b[0] - a[0]) * w,
        a[1] + (b[1] - a[1]) * w,
        a[2] + (b[2] - a[2]) * w,
        a[3] + (b[3] - a[3]) * w,
    ]
}

pub fn build_preintegration(tf_lut: &[Rgba], reference_step: f64) -> PreintegrationTable {
    build_preintegration_with(tf_lut, reference_step, DEFAULT_PREINTEGRATION_RESOLUTION)
}

/// Each entry composites `PREINTEGRATION_QUADRATURE` equal sub-slabs. Within
/// a sub-slab the optical depth and emission are Simpson averages over its
/// ends and midpoint, with TF opacity read as per-reference-step opacity.
pub fn build_preintegration_with(tf_lut: &[Rgba], reference_step: f64, resolution: usize) -> PreintegrationTable {
    assert_eq!(tf_lut.len(), LUT_SIZE, "transfer function table size");
    assert!(resolution >= 2);
    let n = PREINTEGRATION_QUADRATURE;
    let last = (resolution - 1) as f64;
    let entries = (0..resolution * resolution)
        .into_par_iter()
        .map(|idx| {
            let sf = (idx / resolution) as f64 / last;
            let sb = (idx % resolution) as f64 / last;
            let at = |u: f64| tf_sample(tf_lut, sf + (sb - sf) * u);
            let mut color = [0.0f64; 3];
            let mut alpha = 0.0f64;
            let mut front = at(0.0);
            for m in 0..n {
                let mid = at((m as f64 + 0.5) / n as f64);
                let back = at((m + 1) as f64 / n as f64);
                let samples = [(front, 1.0), (mid, 4.0), (back, 1.0)];
                let (a, c) = match samples.iter().find(|(v, _)| v[3] >= 1.0) {
                    Some((v, _)) => (1.0, [v[0], v[1], v[2]]),
                    None => {
                        let mut depth = 0.0;
                        let mut emitted = [0.0f64; 3];
                        for (v, w) in samples {
                            let tau = -(1.0 - v[3].max(0.0)).ln() * w;
                            depth += tau;
                            for ch in 0..3 {
                                emitted[ch] += v[ch] * tau;
                            }
                        }
                        if depth <= 0.0 {
                            (0.0, [0.0; 3])
                        } else {
                            let c = [emitted[0] / depth, emitted[1] / depth, emitted[2] / depth];
                            (1.0 - (-depth / (6.0 * n as f64)).exp(), c)
                        }
                    }
                };
                let w = (1.0 - alpha) * a;
                color[0] += w * c[0];
                color[1] += w * c[1];
                color[2] += w * c[2];
                alpha += w;
                front = back;
            }
            [color[0], color[1], color[2], alpha]
        })
        .collect();
    PreintegrationTable {
        resolution,
        reference_step,
        entries,
    }
}

/// Per-ray inputs beyond the scene state: the (time-selected) field, the
/// pre-integration table for the state's transfer function and the near clip.
#[derive(Clone, Copy, Debug)]
pub struct RenderResources<'a> {
    pub field: &'a VolumeField,
    pub table: &'a PreintegrationTable,
    pub near_clip: f64,
}

fn correct_opacity(alpha: f64, length: f64, reference_step: f64) -> f64 {
    if alpha >= 1.0 {
        1.0
    } else {
        1.0 - (1.0 - alpha).powf(length / reference_step)
    }
}

/// Front-to-back accumulation along `[t0, t1]`; `shade` scales slab colour
/// at each sample position. Returns associated colour and opacity.
fn march(
    origin: &Vec3,
    dir: &Vec3,
    t0: f64,
    t1: f64,
    step: f64,
    resources: &RenderResources<'_>,
    termination: f64,
    mut shade: impl FnMut(&Vec3) -> f64,
) -> ([f64; 3], f64) {
    let mut color = [0.0f64; 3];
    let mut alpha = 0.0f64;
    let span = t1 - t0;
    if !(span > 0.0) {
        return (color, alpha);
    }
    let steps = (span / step).ceil().max(1.0) as usize;
    let reference = resources.table.reference_step();
    let mut prev = resources.field.sample(&(origin + dir * t0));
    for k in 1..=steps {
        let t = if k == steps { t1 } else { t0 + step * k as f64 };
        let dt = t - (t0 + step * (k - 1) as f64);
        let p = origin + dir * t;
        let cur = resources.field.sample(&p);
        let slab = resources.table.lookup(prev, cur);
        prev = cur;
        if slab[3] <= 0.0 {
            continue;
        }
        let a = correct_opacity(slab[3], dt, reference);
        let scale = (1.0 - alpha) * a / slab[3] * shade(&p);
        color[0] += scale * slab[0];
        color[1] += scale * slab[1];
        color[2] += scale * slab[2];
        alpha += (1.0 - alpha) * a;
        if alpha >= termination {
            break;
        }
    }
    (color, alpha)
}

/// Transmittance from `p` towards the light through the clip box.
pub fn shadow_attenuation(p: &Vec3, state: &DimensionState, resources: &RenderResources<'_>, settings: &RenderSettings) -> f64 {
    let to_light = -settings.light_dir.normalize();
    let Some((t0, t1)) = clip_intersect(p, &to_light, &state.clip_box) else {
        return 1.0;
    };
    let step = settings.step_size * settings.shadow_step_multiplier;
    let (_, alpha) = march(p, &to_light, t0, t1, step, resources, settings.early_termination_alpha, |_| 1.0);
    (1.0 - alpha).clamp(0.0, 1.0)
}

pub fn cast_ray(
    origin: &Vec3,
    dir: &Vec3,
    state: &DimensionState,
    resources: &RenderResources<'_>,
    settings: &RenderSettings,
) -> Rgba {
    let bg = settings.background_rgba;
    let over_background = |color: [f64; 3], alpha: f64| {
        let rest = (1.0 - alpha) * bg[3];
        [
            color[0] + rest * bg[0],
            color[1] + rest * bg[1],
            color[2] + rest * bg[2],
            alpha + rest,
        ]
    };
    let Some((t0, t1)) = clip_intersect(origin, dir, &state.clip_box) else {
        return over_background([0.0; 3], 0.0);
    };
    let t0 = t0.max(resources.near_clip);
    let (color, alpha) = if settings.shadows_enabled {
        march(origin, dir, t0, t1, settings.step_size, resources, settings.early_termination_alpha, |p| {
            shadow_attenuation(p, state, resources, settings)
        })
    } else {
        march(origin, dir, t0, t1, settings.step_size, resources, settings.early_termination_alpha, |_| 1.0)
    };
    over_background(color, alpha)
}

/// Renders one eye by averaging `supersample x supersample` internal rays per output pixel.
pub fn render_eye(
    state: &DimensionState,
    camera: &OdsCameraConfig,
    settings: &RenderSettings,
    resources: &RenderResources<'_>,
    eye: Eye,
) -> Panorama {
    let k = settings.supersample;
    let (iw, ih) = settings.internal_size();
    let width = settings.width;
    let norm = 1.0 / (k * k) as f64;
    let mut pixels = vec![0.0f32; width * settings.height * 4];
    pixels
        .par_chunks_mut(width * 4)
        .enumerate()
        .for_each(|(y, row)| {
            for x in 0..width {
                let mut acc = [0.0f64; 4];
                for sy in 0..k {
                    for sx in 0..k {
                        let (o, d) = ods_ray(camera, x * k + sx, y * k + sy, iw, ih, eye);
                        let c = cast_ray(&o, &d, state, resources, settings);
                        for ch in 0..4 {
                            acc[ch] += c[ch];
                        }
                    }
                }
                for ch in 0..4 {
                    row[x * 4 + ch] = (acc[ch] * norm).clamp(0.0, 1.0) as f32;
                }
            }
        });
    Panorama {
        width,
        height: settings.height,
        pixels,
    }
}

pub fn render_panorama(
    state: &DimensionState,
    camera: &OdsCameraConfig,
    settings: &RenderSettings,
    resources: &RenderResources<'_>,
) -> StereoPanorama {
    StereoPanorama {
        left: render_eye(state, camera, settings, resources, Eye::Left),
        right: render_eye(state, camera, settings, resources, Eye::Right),
    }
}

/// Anything that can turn a scene state into a stereo frame.
pub trait PanoramaSource: Sync {
    fn render(&self, state: &DimensionState, width: usize, height: usize, supersample: usize) -> StereoPanorama;
}

/// Volume renderer bound to a data set and rig parameters; caches the
/// pre-integration table of the most recent transfer function.
pub struct VolumeRenderer {
    series: VolumeSeries,
    settings: RenderSettings,
    ipd: f64,
    near_clip: f64,
    cache: Mutex<Option<(Vec<Rgba>, Arc<PreintegrationTable>)>>,
}

impl VolumeRenderer {
    pub fn new(series: VolumeSeries, settings: RenderSettings, ipd: f64, near_clip: f64) -> Result<Self> {
        settings.validate()?;
        if !(ipd >= 0.0) || !(near_clip >= 0.0) {
            return Err(Error::Volume("ipd and near clip must be >= 0".into()));
        }
        Ok(VolumeRenderer {
            series,
            settings,
            ipd,
            near_clip,
            cache: Mutex::new(None),
        })
    }

    pub fn series(&self) -> &VolumeSeries {
        &self.series
    }

    pub fn settings(&self) -> &RenderSettings {
        &self.settings
    }

    pub fn ipd(&self) -> f64 {
        self.ipd
    }

    pub fn table_for(&self, lut: &[Rgba]) -> Arc<PreintegrationTable> {
        let mut cache = self.cache.lock().expect("preintegration cache poisoned");
        if let Some((key, table)) = cache.as_ref() {
            if key.as_slice() == lut {
                return Arc::clone(table);
            }
        }
        let table = Arc::new(build_preintegration(lut, self.settings.reference_step));
        *cache = Some((lut.to_vec(), Arc::clone(&table)));
        table
    }

    pub fn camera_for(&self, state: &DimensionState) -> OdsCameraConfig {
        OdsCameraConfig::from_pose(&state.camera, self.ipd, self.near_clip)
    }

    pub fn render_with(&self, state: &DimensionState, settings: &RenderSettings) -> StereoPanorama {
        let table = self.table_for(state.tf.lut());
        let resources = RenderResources {
            field: self.series.nearest(state.time_step),
            table: &table,
            near_clip: self.near_clip,
        };
        render_panorama(state, &self.camera_for(state), settings, &resources)
    }
}

impl PanoramaSource for VolumeRenderer {
    fn render(&self, state: &DimensionState, width: usize, height: usize, supersample: usize) -> StereoPanorama {
        let settings = RenderSettings {
            width,
            height,
            supersample,
            ..self.settings.clone()
        };
        self.render_with(state, &settings)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::{synthetic, ClipBox, ControlPoint, TransferFunction};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn identity_camera(ipd: f64) -> OdsCameraConfig {
        OdsCameraConfig::new(Vec3::zeros(), Orientation::identity(), ipd, 0.0).unwrap()
    }

    fn close(a: &Vec3, b: &Vec3, tol: f64) -> bool {
        (a - b).norm() < tol
    }

    #[test]
    fn right_eye_straight_ahead() {
        let (o, d) = ods_ray(&identity_camera(0.064), 0, 0, 1, 1, Eye::Right);
        assert!(close(&o, &Vec3::new(0.032, 0.0, 0.0), 1e-12), "{o}");
        assert!(close(&d, &Vec3::new(0.0, 0.0, 1.0), 1e-12), "{d}");
    }

    #[test]
    fn left_eye_quarter_turn() {
        // width 2, x = 1: theta = 2pi * 1.5 / 2 - pi = pi / 2
        let (o, d) = ods_ray(&identity_camera(0.064), 1, 0, 2, 1, Eye::Left);
        assert!(close(&o, &Vec3::new(0.0, 0.0, 0.032), 1e-12), "{o}");
        assert!(close(&d, &Vec3::new(1.0, 0.0, 0.0), 1e-12), "{d}");
    }

    #[test]
    fn oblique_ray_matches_independent_trig() {
        let (theta, phi) = (std::f64::consts::FRAC_PI_4, std::f64::consts::FRAC_PI_6);
        let (o, d) = ods_ray_at(&identity_camera(0.064), theta, phi, Eye::Right);
        let want = Vec3::new(0.612372, 0.5, 0.612372);
        assert!(close(&d, &want, 1e-6), "{d}");
        assert!((o.norm() - 0.032).abs() < 1e-12);
        assert!(o.dot(&Vec3::new(theta.sin(), 0.0, theta.cos())).abs() < 1e-12);
        assert!((d.y - phi.sin()).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_camera() {
        assert!(OdsCameraConfig::new(Vec3::zeros(), Orientation::identity(), -1.0, 0.0).is_err());
        assert!(OdsCameraConfig::new(Vec3::zeros(), Orientation::identity(), 0.1, -0.5).is_err());
    }

    fn lut_of(points: Vec<ControlPoint>) -> Vec<Rgba> {
        TransferFunction::new(points).unwrap().lut().to_vec()
    }

    #[test]
    fn transparent_tf_gives_empty_table() {
        let lut = vec![[0.3, 0.2, 0.1, 0.0]; LUT_SIZE];
        let table = build_preintegration_with(&lut, 1.0, 16);
        for i in 0..16 {
            for j in 0..16 {
                assert_eq!(table.entry(i, j), [0.0; 4]);
            }
        }
    }

    #[test]
    fn constant_tf_diagonal_alpha() {
        let lut = TransferFunction::constant([0.8, 0.4, 0.2, 0.3]).lut().to_vec();
        let table = build_preintegration_with(&lut, 1.0, 32);
        for i in 0..32 {
            let e = table.entry(i, i);
            assert!((e[3] - 0.3).abs() < 1e-12, "{e:?}");
            assert!((e[0] - 0.8 * 0.3).abs() < 1e-12);
        }
    }

    /// Continuous emission-absorption integral by fine midpoint quadrature.
    fn quadrature_oracle(lut: &[Rgba], sf: f64, sb: f64, n: usize) -> Rgba {
        let tf = |s: f64| {
            let c = s * 1023.0;
            let i = (c.floor() as usize).min(1022);
            let w = c - i as f64;
            let mut out = [0.0; 4];
            for ch in 0..4 {
                out[ch] = lut[i][ch] * (1.0 - w) + lut[i + 1][ch] * w;
            }
            out
        };
        let h = 1.0 / n as f64;
        let mut depth = 0.0;
        let mut color = [0.0; 3];
        for m in 0..n {
            let s = sf + (sb - sf) * (m as f64 + 0.5) * h;
            let v = tf(s);
            let tau = -(1.0 - v[3]).ln();
            let mid_depth = depth + tau * h * 0.5;
            for ch in 0..3 {
                color[ch] += v[ch] * tau * (-mid_depth).exp() * h;
            }
            depth += tau * h;
        }
        [color[0], color[1], color[2], 1.0 - (-depth).exp()]
    }

    #[test]
    fn preintegration_matches_fine_quadrature() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            let mut points = vec![ControlPoint::new(0.0, [rng.random(), rng.random(), rng.random(), rng.random_range(0.0..0.9)])];
            for v in [0.25, 0.5, 0.75] {
                points.push(ControlPoint::new(v, [rng.random(), rng.random(), rng.random(), rng.random_range(0.0..0.9)]));
            }
            points.push(ControlPoint::new(1.0, [rng.random(), rng.random(), rng.random(), rng.random_range(0.0..0.9)]));
            let lut = lut_of(points);
            let table = build_preintegration(&lut, 1.0);
            for _ in 0..50 {
                let (i, j) = (rng.random_range(0..256), rng.random_range(0..256));
                let got = table.entry(i, j);
                let want = quadrature_oracle(&lut, i as f64 / 255.0, j as f64 / 255.0, 1024);
                for ch in 0..4 {
                    assert!((got[ch] - want[ch]).abs() < 1e-3, "({i},{j}) ch{ch}: {got:?} vs {want:?}");
                }
            }
        }
    }

    fn state_with(tf: TransferFunction, clip: ClipBox) -> DimensionState {
        DimensionState {
            camera: CameraPose::at(Vec3::zeros()),
            tf,
            clip_box: clip,
            time_step: 0.0,
        }
    }

    fn settings(step: f64, reference: f64) -> RenderSettings {
        RenderSettings {
            width: 8,
            height: 4,
            step_size: step,
            reference_step: reference,
            background_rgba: [0.0, 0.0, 0.0, 0.0],
            ..Default::default()
        }
    }

    #[test]
    fn missing_the_clip_box_returns_background() {
        let field = synthetic::uniform(4, 1.0);
        let tf = TransferFunction::constant([1.0, 1.0, 1.0, 0.5]);
        let table = build_preintegration(tf.lut(), 1.0);
        let res = RenderResources { field: &field, table: &table, near_clip: 0.0 };
        let state = state_with(tf, field.bounds());
        let mut s = settings(0.25, 1.0);
        s.background_rgba = [0.1, 0.2, 0.3, 1.0];
        let c = cast_ray(&Vec3::new(10.0, 10.0, 10.0), &Vec3::x(), &state, &res, &s);
        assert_eq!(c, [0.1, 0.2, 0.3, 1.0]);
    }

    #[test]
    fn homogeneous_medium_matches_closed_form() {
        let field = synthetic::uniform(4, 1.0);
        let a = 0.05;
        let tf = TransferFunction::constant([0.5, 0.5, 0.5, a]);
        let reference = 0.5;
        let table = build_preintegration(tf.lut(), reference);
        let res = RenderResources { field: &field, table: &table, near_clip: 0.0 };
        let state = state_with(tf, field.bounds());
        for &length in &[0.3, 1.0, 2.7, 3.0] {
            let origin = Vec3::new(-1.0, 1.5, 1.5);
            let clip = ClipBox::new(Vec3::new(0.0, 0.0, 0.0), Vec3::new(length, 3.0, 3.0)).unwrap();
            let state = DimensionState { clip_box: clip, ..state.clone() };
            let got = cast_ray(&origin, &Vec3::x(), &state, &res, &settings(reference / 4.0, reference))[3];
            let want = 1.0 - (1.0 - a).powf(length / reference);
            assert!((got - want).abs() < 1e-3, "L={length}: {got} vs {want}");
        }
    }

    #[test]
    fn opaque_slab_saturates_regardless_of_thickness() {
        let field = synthetic::uniform(4, 1.0);
        let tf = TransferFunction::constant([0.2, 0.6, 0.4, 1.0]);
        let table = build_preintegration(tf.lut(), 1.0);
        let res = RenderResources { field: &field, table: &table, near_clip: 0.0 };
        for &thickness in &[0.5, 1.0, 3.0] {
            let clip = ClipBox::new(Vec3::zeros(), Vec3::new(thickness, 3.0, 3.0)).unwrap();
            let state = state_with(tf.clone(), clip);
            let c = cast_ray(&Vec3::new(-1.0, 1.0, 1.0), &Vec3::x(), &state, &res, &settings(0.25, 1.0));
            assert!((c[3] - 1.0).abs() < 1e-12);
            assert!((c[0] - 0.2).abs() < 1e-9 && (c[1] - 0.6).abs() < 1e-9 && (c[2] - 0.4).abs() < 1e-9, "{c:?}");
        }
    }

    #[test]
    fn near_clip_skips_the_start_of_the_ray() {
        let field = synthetic::uniform(4, 1.0);
        let tf = TransferFunction::constant([1.0, 1.0, 1.0, 0.2]);
        let table = build_preintegration(tf.lut(), 1.0);
        let state = state_with(tf, ClipBox::new(Vec3::zeros(), Vec3::new(2.0, 3.0, 3.0)).unwrap());
        let origin = Vec3::new(0.0, 1.0, 1.0);
        let full = cast_ray(&origin, &Vec3::x(), &state, &RenderResources { field: &field, table: &table, near_clip: 0.0 }, &settings(0.25, 1.0));
        let clipped = cast_ray(&origin, &Vec3::x(), &state, &RenderResources { field: &field, table: &table, near_clip: 1.0 }, &settings(0.25, 1.0));
        assert!((full[3] - (1.0 - 0.8f64.powf(2.0))).abs() < 1e-9);
        assert!((clipped[3] - 0.2).abs() < 1e-9);
        let gone = cast_ray(&origin, &Vec3::x(), &state, &RenderResources { field: &field, table: &table, near_clip: 5.0 }, &settings(0.25, 1.0));
        assert_eq!(gone[3], 0.0);
    }

    #[test]
    fn shadow_empty_volume_is_unoccluded() {
        let field = synthetic::uniform(8, 0.0);
        let tf = TransferFunction::constant([1.0, 1.0, 1.0, 0.0]);
        let table = build_preintegration(tf.lut(), 1.0);
        let res = RenderResources { field: &field, table: &table, near_clip: 0.0 };
        let state = state_with(tf, field.bounds());
        let mut s = settings(0.5, 1.0);
        s.shadows_enabled = true;
        assert_eq!(shadow_attenuation(&Vec3::new(3.0, 3.0, 3.0), &state, &res, &s), 1.0);
    }

    #[test]
    fn shadow_behind_opaque_wall() {
        // wall of value 1 at x in [4, 5], light travelling along +x
        let field = VolumeField::from_fn([10, 4, 4], Vec3::new(1.0, 1.0, 1.0), Vec3::zeros(), |i, _, _| {
            if (4..=5).contains(&i) { 1.0 } else { 0.0 }
        })
        .unwrap();
        let tf = TransferFunction::new(vec![
            ControlPoint::new(0.0, [0.0; 4]),
            ControlPoint::new(0.5, [1.0, 1.0, 1.0, 1.0]),
            ControlPoint::new(1.0, [1.0, 1.0, 1.0, 1.0]),
        ])
        .unwrap();
        let table = build_preintegration(tf.lut(), 1.0);
        let res = RenderResources { field: &field, table: &table, near_clip: 0.0 };
        let state = state_with(tf, field.bounds());
        let mut s = settings(0.25, 1.0);
        s.shadows_enabled = true;
        s.light_dir = Vec3::x();
        let lit = shadow_attenuation(&Vec3::new(1.0, 1.5, 1.5), &state, &res, &s);
        let shadowed = shadow_attenuation(&Vec3::new(8.0, 1.5, 1.5), &state, &res, &s);
        assert!(shadowed < 0.01, "{shadowed}");
        assert!(lit > 0.99, "{lit}");
    }

    #[test]
    fn shadow_matches_fine_step_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let field = VolumeField::from_fn([8, 8, 8], Vec3::new(1.0, 1.0, 1.0), Vec3::zeros(), |_, _, _| rng.random::<f32>()).unwrap();
        let tf = TransferFunction::new(vec![
            ControlPoint::new(0.0, [0.0, 0.0, 0.0, 0.0]),
            ControlPoint::new(1.0, [1.0, 1.0, 1.0, 0.15]),
        ])
        .unwrap();
        let reference = 1.0;
        let table = build_preintegration(tf.lut(), reference);
        let res = RenderResources { field: &field, table: &table, near_clip: 0.0 };
        let state = state_with(tf.clone(), field.bounds());
        let mut s = settings(0.5, reference);
        s.shadows_enabled = true;
        s.light_dir = Vec3::new(0.3, -1.0, 0.5).normalize();
        let to_light = -s.light_dir;
        for _ in 0..30 {
            let p = Vec3::new(rng.random_range(0.5..6.5), rng.random_range(0.5..6.5), rng.random_range(0.5..6.5));
            let got = shadow_attenuation(&p, &state, &res, &s);
            // point-sampled absorption with a step 16x finer than the shadow march
            let (_, t1) = clip_intersect(&p, &to_light, &state.clip_box).unwrap();
            let fine = s.step_size * s.shadow_step_multiplier / 16.0;
            let n = (t1 / fine).ceil() as usize;
            let dt = t1 / n as f64;
            let mut log_t = 0.0;
            for m in 0..n {
                let v = field.sample(&(p + to_light * ((m as f64 + 0.5) * dt)));
                let a = tf_sample(tf.lut(), v)[3];
                log_t += (1.0 - a).ln() * dt / reference;
            }
            let want = log_t.exp();
            assert!((got - want).abs() < 5e-2, "{got} vs {want}");
        }
    }

    #[test]
    fn panorama_sizes_and_empty_volume() {
        let field = synthetic::uniform(4, 0.0);
        let tf = TransferFunction::constant([1.0, 1.0, 1.0, 0.0]);
        let table = build_preintegration(tf.lut(), 1.0);
        let res = RenderResources { field: &field, table: &table, near_clip: 0.0 };
        let state = state_with(tf, field.bounds());
        let mut s = settings(0.5, 1.0);
        s.width = 12;
        s.height = 6;
        s.supersample = 3;
        s.background_rgba = [0.0, 0.0, 0.0, 1.0];
        assert_eq!(s.internal_size(), (36, 18));
        let camera = OdsCameraConfig::new(Vec3::new(1.5, 1.5, -3.0), Orientation::identity(), 0.064, 0.0).unwrap();
        let pano = render_panorama(&state, &camera, &s, &res);
        assert_eq!((pano.left.width, pano.left.height), (12, 6));
        assert!(pano.left.pixels.chunks(4).all(|p| p == [0.0, 0.0, 0.0, 1.0]));
        assert_eq!(pano.left, pano.right);
    }

    #[test]
    fn zero_ipd_gives_identical_eyes_and_renders_are_deterministic() {
        let field = synthetic::sphere(16);
        let tf = TransferFunction::ramp();
        let table = build_preintegration(tf.lut(), 1.0);
        let res = RenderResources { field: &field, table: &table, near_clip: 0.0 };
        let state = state_with(tf, field.bounds());
        let mut s = settings(0.5, 1.0);
        s.width = 32;
        s.height = 16;
        s.supersample = 2;
        let camera = OdsCameraConfig::new(Vec3::new(8.0, 8.0, 8.0), Orientation::identity(), 0.0, 0.0).unwrap();
        let a = render_panorama(&state, &camera, &s, &res);
        assert_eq!(a.left.pixels, a.right.pixels);
        let b = render_panorama(&state, &camera, &s, &res);
        assert_eq!(a, b);
        assert!(a.left.pixels.iter().any(|&v| v > 0.05));
    }

    #[test]
    fn side_by_side_layout() {
        let l = Panorama::filled(2, 1, [1.0, 0.0, 0.0, 1.0]);
        let r = Panorama::filled(2, 1, [0.0, 1.0, 0.0, 1.0]);
        let sbs = Panorama::side_by_side(&l, &r);
        assert_eq!(sbs.width, 4);
        assert_eq!(sbs.pixel(1, 0), [1.0, 0.0, 0.0, 1.0]);
        assert_eq!(sbs.pixel(2, 0), [0.0, 1.0, 0.0, 1.0]);
        assert_eq!(sbs.to_rgb8(), vec![255, 0, 0, 255, 0, 0, 0, 255, 0, 0, 255, 0]);
    }

    #[test]
    fn renderer_caches_tables() {
        let r = VolumeRenderer::new(VolumeSeries::single(synthetic::uniform(4, 0.0)), RenderSettings::default(), 0.064, 0.0).unwrap();
        let lut = TransferFunction::ramp().lut().to_vec();
        let a = r.table_for(&lut);
        let b = r.table_for(&lut);
        assert!(Arc::ptr_eq(&a, &b));
    }
}
