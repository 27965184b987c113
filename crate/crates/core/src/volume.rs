//! Uniform-grid scalar volumes, transfer functions and axis-aligned clipping.
//!
//! Voxel `(i, j, k)` is centred at `origin + (i, j, k) * spacing`; data is
//! stored x-fastest. Sampling returns values normalized to `[0, 1]` through
//! the field's value range, which is the domain transfer functions use.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Rgba = [f64; 4];

/// Number of entries in a resampled transfer function table.
pub const LUT_SIZE: usize = 1024;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalarType {
    Float32,
    Uint8,
}

impl ScalarType {
    pub fn byte_size(self) -> usize {
        match self {
            ScalarType::Float32 => 4,
            ScalarType::Uint8 => 1,
        }
    }

    fn keyword(self) -> &'static str {
        match self {
            ScalarType::Float32 => "float32",
            ScalarType::Uint8 => "uint8",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VolumeField {
    dims: [usize; 3],
    spacing: Vec3,
    origin: Vec3,
    scalar_type: ScalarType,
    data: Vec<f32>,
    value_range: (f64, f64),
}

impl VolumeField {
    /// Builds a field, computing the value range when `range` is `None`.
    pub fn new(
        dims: [usize; 3],
        spacing: Vec3,
        origin: Vec3,
        scalar_type: ScalarType,
        data: Vec<f32>,
        range: Option<(f64, f64)>,
    ) -> Result<Self> {
        if dims.iter().any(|&n| n == 0) {
            return Err(Error::Volume(format!("dimensions must be >= 1, got {dims:?}")));
        }
        if spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::Volume(format!(
                "spacing must be positive, got {:?}",
                spacing.as_slice()
            )));
        }
        let expected = dims[0] * dims[1] * dims[2];
        if data.len() != expected {
            return Err(Error::Volume(format!(
                "size mismatch: {} values for {}x{}x{} voxels",
                data.len(),
                dims[0],
                dims[1],
                dims[2]
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Volume("non-finite voxel value".into()));
        }
        let (lo, hi) = data.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v as f64), hi.max(v as f64))
        });
        let value_range = match range {
            None => (lo, hi),
            Some((min, max)) => {
                if !(min <= max) {
                    return Err(Error::Volume(format!("range min {min} exceeds max {max}")));
                }
                if lo < min || hi > max {
                    return Err(Error::Volume(format!(
                        "declared range ({min}, {max}) does not bracket data ({lo}, {hi})"
                    )));
                }
                (min, max)
            }
        };
        Ok(VolumeField {
            dims,
            spacing,
            origin,
            scalar_type,
            data,
            value_range,
        })
    }

    /// Procedurally generated float32 field; `f` receives voxel indices.
    pub fn from_fn(
        dims: [usize; 3],
        spacing: Vec3,
        origin: Vec3,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
        for k in 0..dims[2] {
            for j in 0..dims[1] {
                for i in 0..dims[0] {
                    data.push(f(i, j, k));
                }
            }
        }
        Self::new(dims, spacing, origin, ScalarType::Float32, data, None)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> Vec3 {
        self.spacing
    }

    pub fn origin(&self) -> Vec3 {
        self.origin
    }

    pub fn scalar_type(&self) -> ScalarType {
        self.scalar_type
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn value_range(&self) -> (f64, f64) {
        self.value_range
    }

    pub fn voxel(&self, i: usize, j: usize, k: usize) -> f32 {
        self.data[i + self.dims[0] * (j + self.dims[1] * k)]
    }

    /// World-space position of a voxel centre.
    pub fn voxel_center(&self, i: usize, j: usize, k: usize) -> Vec3 {
        self.origin + Vec3::new(i as f64, j as f64, k as f64).component_mul(&self.spacing)
    }

    pub fn normalize(&self, v: f64) -> f64 {
        let (min, max) = self.value_range;
        if max > min {
            (v - min) / (max - min)
        } else {
            0.0
        }
    }

    /// Box spanned by the voxel centres.
    pub fn bounds(&self) -> ClipBox {
        let extent = Vec3::new(
            (self.dims[0] - 1) as f64,
            (self.dims[1] - 1) as f64,
            (self.dims[2] - 1) as f64,
        )
        .component_mul(&self.spacing);
        ClipBox {
            min: self.origin,
            max: self.origin + extent,
        }
    }

    pub fn min_spacing(&self) -> f64 {
        self.spacing.min()
    }

    pub fn sample(&self, p: &Vec3) -> f64 {
        sample_trilinear(self, p)
    }
}

/// Trilinear interpolation at a world position, normalized through the
/// value range. Positions outside the grid clamp to the boundary voxel centres.
pub fn sample_trilinear(field: &VolumeField, p: &Vec3) -> f64 {
    let mut base = [0usize; 3];
    let mut frac = [0.0f64; 3];
    for axis in 0..3 {
        let n = field.dims[axis];
        let c = ((p[axis] - field.origin[axis]) / field.spacing[axis]).clamp(0.0, (n - 1) as f64);
        if n == 1 {
            continue;
        }
        let i0 = (c.floor() as usize).min(n - 2);
        base[axis] = i0;
        frac[axis] = c - i0 as f64;
    }
    let next = |axis: usize| {
        if field.dims[axis] > 1 {
            base[axis] + 1
        } else {
            base[axis]
        }
    };
    let (i0, j0, k0) = (base[0], base[1], base[2]);
    let (i1, j1, k1) = (next(0), next(1), next(2));
    let [fx, fy, fz] = frac;
    let v = |i, j, k| field.voxel(i, j, k) as f64;

    let c00 = v(i0, j0, k0) * (1.0 - fx) + v(i1, j0, k0) * fx;
    let c10 = v(i0, j1, k0) * (1.0 - fx) + v(i1, j1, k0) * fx;
    let c01 = v(i0, j0, k1) * (1.0 - fx) + v(i1, j0, k1) * fx;
    let c11 = v(i0, j1, k1) * (1.0 - fx) + v(i1, j1, k1) * fx;
    let c0 = c00 * (1.0 - fy) + c10 * fy;
    let c1 = c01 * (1.0 - fy) + c11 * fy;
    field.normalize(c0 * (1.0 - fz) + c1 * fz)
}

/// Time-varying volume; every step shares the grid geometry.
#[derive(Clone, Debug)]
pub struct VolumeSeries {
    steps: Vec<Arc<VolumeField>>,
}

impl VolumeSeries {
    pub fn new(steps: Vec<VolumeField>) -> Result<Self> {
        let Some(first) = steps.first() else {
            return Err(Error::Volume("a series needs at least one step".into()));
        };
        for (t, step) in steps.iter().enumerate().skip(1) {
            if step.dims != first.dims
                || step.spacing != first.spacing
                || step.origin != first.origin
                || step.scalar_type != first.scalar_type
            {
                return Err(Error::Volume(format!(
                    "time step {t} does not share the grid of step 0"
                )));
            }
        }
        Ok(VolumeSeries {
            steps: steps.into_iter().map(Arc::new).collect(),
        })
    }

    pub fn single(field: VolumeField) -> Self {
        VolumeSeries {
            steps: vec![Arc::new(field)],
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn step(&self, t: usize) -> &VolumeField {
        &self.steps[t]
    }

    pub fn first(&self) -> &VolumeField {
        &self.steps[0]
    }

    /// Step nearest to a fractional time index, clamped to the series.
    pub fn nearest(&self, time_step: f64) -> &VolumeField {
        let last = self.steps.len() - 1;
        let t = if time_step.is_finite() {
            time_step.round().clamp(0.0, last as f64) as usize
        } else {
            0
        };
        &self.steps[t]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlPoint {
    pub value: f64,
    pub rgba: Rgba,
}

impl ControlPoint {
    pub fn new(value: f64, rgba: Rgba) -> Self {
        ControlPoint { value, rgba }
    }
}

/// Piecewise-linear transfer function together with its resampled table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<ControlPoint>", into = "Vec<ControlPoint>")]
pub struct TransferFunction {
    control_points: Vec<ControlPoint>,
    lut: Vec<Rgba>,
}

impl TransferFunction {
    pub fn new(control_points: Vec<ControlPoint>) -> Result<Self> {
        let lut = tf_resample(&control_points)?;
        Ok(TransferFunction {
            control_points,
            lut,
        })
    }

    /// Rebuilds a transfer function whose control points sit on the table bins.
    pub fn from_lut(lut: Vec<Rgba>) -> Result<Self> {
        if lut.len() != LUT_SIZE {
            return Err(Error::TransferFunction(format!(
                "table has {} entries, expected {LUT_SIZE}",
                lut.len()
            )));
        }
        let control_points = lut
            .iter()
            .enumerate()
            .map(|(k, &rgba)| ControlPoint::new(k as f64 / (LUT_SIZE - 1) as f64, rgba))
            .collect::<Vec<_>>();
        validate_points(&control_points)?;
        Ok(TransferFunction {
            control_points,
            lut,
        })
    }

    pub fn constant(rgba: Rgba) -> Self {
        Self::new(vec![ControlPoint::new(0.0, rgba), ControlPoint::new(1.0, rgba)])
            .expect("constant transfer function")
    }

    /// Black transparent at 0 to white opaque at 1.
    pub fn ramp() -> Self {
        Self::new(vec![
            ControlPoint::new(0.0, [0.0; 4]),
            ControlPoint::new(1.0, [1.0; 4]),
        ])
        .expect("ramp transfer function")
    }

    pub fn control_points(&self) -> &[ControlPoint] {
        &self.control_points
    }

    pub fn lut(&self) -> &[Rgba] {
        &self.lut
    }

    /// Nearest-bin lookup for a normalized value.
    pub fn lookup(&self, value: f64) -> Rgba {
        let k = (value.clamp(0.0, 1.0) * (LUT_SIZE - 1) as f64).round() as usize;
        self.lut[k]
    }
}

impl TryFrom<Vec<ControlPoint>> for TransferFunction {
    type Error = Error;

    fn try_from(points: Vec<ControlPoint>) -> Result<Self> {
        TransferFunction::new(points)
    }
}

impl From<TransferFunction> for Vec<ControlPoint> {
    fn from(tf: TransferFunction) -> Self {
        tf.control_points
    }
}

fn validate_points(points: &[ControlPoint]) -> Result<()> {
    if points.len() < 2 {
        return Err(Error::TransferFunction(
            "at least two control points are required".into(),
        ));
    }
    for p in points {
        if !(0.0..=1.0).contains(&p.value) {
            return Err(Error::TransferFunction(format!(
                "control point value {} outside [0, 1]",
                p.value
            )));
        }
        if p.rgba.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::TransferFunction(format!(
                "control point colour {:?} outside [0, 1]",
                p.rgba
            )));
        }
    }
    if points.windows(2).any(|w| !(w[0].value < w[1].value)) {
        return Err(Error::TransferFunction(
            "control points must be strictly ascending".into(),
        ));
    }
    if points[0].value != 0.0 || points[points.len() - 1].value != 1.0 {
        return Err(Error::TransferFunction(
            "control points must start at 0 and end at 1".into(),
        ));
    }
    Ok(())
}

/// Resamples control points into a `LUT_SIZE` table at values `k / (LUT_SIZE - 1)`.
pub fn tf_resample(points: &[ControlPoint]) -> Result<Vec<Rgba>> {
    validate_points(points)?;
    let mut lut = Vec::with_capacity(LUT_SIZE);
    let mut seg = 0;
    for k in 0..LUT_SIZE {
        let v = k as f64 / (LUT_SIZE - 1) as f64;
        while seg + 2 < points.len() && v > points[seg + 1].value {
            seg += 1;
        }
        let (a, b) = (&points[seg], &points[seg + 1]);
        let t = ((v - a.value) / (b.value - a.value)).clamp(0.0, 1.0);
        lut.push(lerp_rgba(&a.rgba, &b.rgba, t));
    }
    Ok(lut)
}

pub(crate) fn lerp_rgba(a: &Rgba, b: &Rgba, t: f64) -> Rgba {
    if t == 0.0 {
        return *a;
    }
    if t == 1.0 {
        return *b;
    }
    [
        a[0] + (b[0] - a[0]) * t,
        a[1] + (b[1] - a[1]) * t,
        a[2] + (b[2] - a[2]) * t,
        a[3] + (b[3] - a[3]) * t,
    ]
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClipBox {
    pub min: Vec3,
    pub max: Vec3,
}

impl ClipBox {
    pub fn new(min: Vec3, max: Vec3) -> Result<Self> {
        if (0..3).any(|i| !(min[i] <= max[i])) {
            return Err(Error::Volume(format!(
                "clip box min {:?} exceeds max {:?}",
                min.as_slice(),
                max.as_slice()
            )));
        }
        Ok(ClipBox { min, max })
    }

    pub fn unit() -> Self {
        ClipBox {
            min: Vec3::zeros(),
            max: Vec3::new(1.0, 1.0, 1.0),
        }
    }

    pub fn is_valid(&self) -> bool {
        (0..3).all(|i| self.min[i] <= self.max[i])
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn intersect(&self, origin: &Vec3, dir: &Vec3) -> Option<(f64, f64)> {
        clip_intersect(origin, dir, self)
    }
}

/// Slab-method parametric interval of a ray inside a box, with the part
/// behind the origin discarded.
pub fn clip_intersect(origin: &Vec3, dir: &Vec3, clip: &ClipBox) -> Option<(f64, f64)> {
    let mut t_near = 0.0f64;
    let mut t_far = f64::INFINITY;
    for axis in 0..3 {
        let (o, d) = (origin[axis], dir[axis]);
        if d == 0.0 {
            if o < clip.min[axis] || o > clip.max[axis] {
                return None;
            }
            continue;
        }
        let t1 = (clip.min[axis] - o) / d;
        let t2 = (clip.max[axis] - o) / d;
        t_near = t_near.max(t1.min(t2));
        t_far = t_far.min(t1.max(t2));
    }
    if t_near < t_far {
        Some((t_near, t_far))
    } else {
        None
    }
}

#[derive(Clone, Debug, Default)]
struct Descriptor {
    dims: Option<[usize; 3]>,
    spacing: Option<Vec3>,
    origin: Option<Vec3>,
    scalar_type: Option<ScalarType>,
    brick: Option<PathBuf>,
    range: Option<(f64, f64)>,
}

fn parse_descriptor(text: &str, path: &Path) -> Result<Descriptor> {
    let bad = |message: String| Error::Descriptor {
        path: path.to_path_buf(),
        message,
    };
    let mut desc = Descriptor::default();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(bad(format!("line {}: expected `key = value`", n + 1)));
        };
        let (key, value) = (key.trim(), value.trim());
        let reals = |count: usize| -> Result<Vec<f64>> {
            let parts = value
                .split_whitespace()
                .map(str::parse::<f64>)
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| bad(format!("line {}: {key}: {e}", n + 1)))?;
            if parts.len() != count || parts.iter().any(|v| !v.is_finite()) {
                return Err(bad(format!(
                    "line {}: {key} needs {count} finite numbers",
                    n + 1
                )));
            }
            Ok(parts)
        };
        let duplicate = match key {
            "dims" => {
                let parts = value
                    .split_whitespace()
                    .map(str::parse::<usize>)
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|e| bad(format!("line {}: dims: {e}", n + 1)))?;
                if parts.len() != 3 {
                    return Err(bad(format!("line {}: dims needs 3 integers", n + 1)));
                }
                desc.dims.replace([parts[0], parts[1], parts[2]]).is_some()
            }
            "spacing" => {
                let v = reals(3)?;
                desc.spacing.replace(Vec3::new(v[0], v[1], v[2])).is_some()
            }
            "origin" => {
                let v = reals(3)?;
                desc.origin.replace(Vec3::new(v[0], v[1], v[2])).is_some()
            }
            "type" => {
                let ty = match value {
                    "float32" => ScalarType::Float32,
                    "uint8" => ScalarType::Uint8,
                    other => {
                        return Err(bad(format!("line {}: unknown type `{other}`", n + 1)))
                    }
                };
                desc.scalar_type.replace(ty).is_some()
            }
            "brick" => {
                if value.is_empty() {
                    return Err(bad(format!("line {}: empty brick path", n + 1)));
                }
                desc.brick.replace(PathBuf::from(value)).is_some()
            }
            "range" => {
                let v = reals(2)?;
                desc.range.replace((v[0], v[1])).is_some()
            }
            other => return Err(bad(format!("line {}: unknown key `{other}`", n + 1))),
        };
        if duplicate {
            return Err(bad(format!("line {}: duplicate key `{key}`", n + 1)));
        }
    }
    Ok(desc)
}

/// Reads a volume descriptor and its little-endian raw brick.
pub fn load_volume(descriptor_path: impl AsRef<Path>) -> Result<VolumeField> {
    let path = descriptor_path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let desc = parse_descriptor(&text, path)?;
    let missing = |key: &str| Error::Descriptor {
        path: path.to_path_buf(),
        message: format!("missing required key `{key}`"),
    };
    let dims = desc.dims.ok_or_else(|| missing("dims"))?;
    let spacing = desc.spacing.ok_or_else(|| missing("spacing"))?;
    let origin = desc.origin.ok_or_else(|| missing("origin"))?;
    let scalar_type = desc.scalar_type.ok_or_else(|| missing("type"))?;
    let brick = desc.brick.ok_or_else(|| missing("brick"))?;
    let brick_path = path.parent().unwrap_or(Path::new(".")).join(brick);

    let bytes = fs::read(&brick_path).map_err(|e| Error::io(&brick_path, e))?;
    let voxels = dims[0]
        .checked_mul(dims[1])
        .and_then(|v| v.checked_mul(dims[2]))
        .ok_or_else(|| Error::Volume("dimensions overflow".into()))?;
    let expected = (voxels * scalar_type.byte_size()) as u64;
    if bytes.len() as u64 != expected {
        return Err(Error::SizeMismatch {
            path: brick_path,
            expected,
            actual: bytes.len() as u64,
        });
    }
    let data = match scalar_type {
        ScalarType::Float32 => bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect(),
        ScalarType::Uint8 => bytes.iter().map(|&b| b as f32).collect(),
    };
    VolumeField::new(dims, spacing, origin, scalar_type, data, desc.range).map_err(|e| {
        Error::Descriptor {
            path: path.to_path_buf(),
            message: e.to_string(),
        }
    })
}

/// Writes a descriptor plus a raw brick next to it named `brick_name`.
pub fn write_volume(
    descriptor_path: impl AsRef<Path>,
    field: &VolumeField,
    brick_name: &str,
) -> Result<()> {
    let path = descriptor_path.as_ref();
    let dir = path.parent().unwrap_or(Path::new("."));
    let brick_path = dir.join(brick_name);
    let bytes: Vec<u8> = match field.scalar_type {
        ScalarType::Float32 => field.data.iter().flat_map(|v| v.to_le_bytes()).collect(),
        ScalarType::Uint8 => field.data.iter().map(|&v| v.clamp(0.0, 255.0) as u8).collect(),
    };
    fs::write(&brick_path, bytes).map_err(|e| Error::io(&brick_path, e))?;
    let [nx, ny, nz] = field.dims;
    let (s, o) = (field.spacing, field.origin);
    let text = format!(
        "dims = {nx} {ny} {nz}\nspacing = {} {} {}\norigin = {} {} {}\ntype = {}\nbrick = {brick_name}\nrange = {} {}\n",
        s.x,
        s.y,
        s.z,
        o.x,
        o.y,
        o.z,
        field.scalar_type.keyword(),
        field.value_range.0,
        field.value_range.1,
    );
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Procedural test volumes.
pub mod synthetic {
    use super::{Vec3, VolumeField};

    /// Radial falloff `max(0, 1 - d / r)` around voxel `(n/2, n/2, n/2)`,
    /// with `r` reaching the middle of each face. Unit spacing, origin 0.
    pub fn sphere(n: usize) -> VolumeField {
        let c = (n / 2) as f64;
        let radius = (n as f64 / 2.0).max(1.0);
        VolumeField::from_fn([n; 3], Vec3::new(1.0, 1.0, 1.0), Vec3::zeros(), |i, j, k| {
            let d = Vec3::new(i as f64 - c, j as f64 - c, k as f64 - c).norm();
            (1.0 - d / radius).max(0.0) as f32
        })
        .expect("sphere volume")
    }

    /// Sphere whose centre drifts along x with `step`, for time-varying tours.
    pub fn drifting_sphere(n: usize, step: usize, steps: usize) -> VolumeField {
        let span = n as f64 / 4.0;
        let shift = if steps > 1 {
            span * (step as f64 / (steps - 1) as f64 - 0.5)
        } else {
            0.0
        };
        let c = Vec3::new(n as f64 / 2.0 + shift, n as f64 / 2.0, n as f64 / 2.0);
        let radius = n as f64 / 3.0;
        VolumeField::from_fn([n; 3], Vec3::new(1.0, 1.0, 1.0), Vec3::zeros(), |i, j, k| {
            let d = (Vec3::new(i as f64, j as f64, k as f64) - c).norm();
            (1.0 - d / radius).max(0.0) as f32
        })
        .expect("drifting sphere volume")
    }

    /// Constant-valued field.
    pub fn uniform(n: usize, value: f32) -> VolumeField {
        VolumeField::from_fn([n; 3], Vec3::new(1.0, 1.0, 1.0), Vec3::zeros(), |_, _, _| value)
            .expect("uniform volume")
    }
}


#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn trilinear_bounded_by_neighbours(
            values in prop::collection::vec(0.0f32..10.0, 27),
            px in -1.0f64..3.0, py in -1.0f64..3.0, pz in -1.0f64..3.0,
        ) {
            let field = VolumeField::from_fn([3, 3, 3], Vec3::new(1.0, 1.0, 1.0), Vec3::zeros(), |i, j, k| {
                values[i + 3 * (j + 3 * k)]
            }).unwrap();
            let p = Vec3::new(px, py, pz);
            let c = p.map(|v| v.clamp(0.0, 2.0));
            let lo = c.map(|v| v.floor().min(1.0) as usize);
            let mut min = f64::INFINITY;
            let mut max = f64::NEG_INFINITY;
            for dk in 0..2 { for dj in 0..2 { for di in 0..2 {
                let v = field.normalize(field.voxel(lo.x + di, lo.y + dj, lo.z + dk) as f64);
                min = min.min(v);
                max = max.max(v);
            }}}
            let s = field.sample(&p);
            prop_assert!(s >= min - 1e-12 && s <= max + 1e-12);
        }

        #[test]
        fn clip_translation_invariant(
            ox in -3.0f64..3.0, oy in -3.0f64..3.0, oz in -3.0f64..3.0,
            dx in -1.0f64..1.0, dy in -1.0f64..1.0, dz in -1.0f64..1.0,
            tx in -5.0f64..5.0, ty in -5.0f64..5.0, tz in -5.0f64..5.0,
        ) {
            let dir = Vec3::new(dx, dy, dz);
            prop_assume!(dir.norm() > 1e-3);
            let origin = Vec3::new(ox, oy, oz);
            let shift = Vec3::new(tx, ty, tz);
            let clip = ClipBox::new(Vec3::new(-1.0, -0.5, 0.0), Vec3::new(1.0, 0.5, 2.0)).unwrap();
            let moved = ClipBox::new(clip.min + shift, clip.max + shift).unwrap();
            let a = clip_intersect(&origin, &dir, &clip);
            let b = clip_intersect(&(origin + shift), &dir, &moved);
            match (a, b) {
                (Some(a), Some(b)) => {
                    prop_assert!((a.0 - b.0).abs() < 1e-9 && (a.1 - b.1).abs() < 1e-9);
                }
                (None, None) => {}
                (Some(a), None) | (None, Some(a)) => prop_assert!(a.1 - a.0 < 1e-9),
            }
        }
    }
}
