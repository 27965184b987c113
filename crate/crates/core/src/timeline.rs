//! Keyframe lanes over camera, transfer function, clipping and time, and
//! evaluation of the full scene state at any (fractional) frame.

use nalgebra::{Quaternion, UnitQuaternion};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{lerp_rgba, ClipBox, TransferFunction, Vec3};

pub type Orientation = UnitQuaternion<f64>;

pub const DEFAULT_FPS: u32 = 30;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraPose {
    pub position: Vec3,
    pub orientation: Orientation,
}

impl CameraPose {
    pub fn new(position: Vec3, orientation: Orientation) -> Self {
        CameraPose {
            position,
            orientation,
        }
    }

    pub fn at(position: Vec3) -> Self {
        CameraPose::new(position, Orientation::identity())
    }

    /// Pose at `eye` facing `target`, y-up, with local +z as the forward axis.
    pub fn look_at(eye: Vec3, target: Vec3) -> Self {
        let forward = target - eye;
        let orientation = if forward.norm() == 0.0 {
            Orientation::identity()
        } else {
            let up = if forward.normalize().y.abs() > 0.999 {
                Vec3::z()
            } else {
                Vec3::y()
            };
            Orientation::face_towards(&forward, &up)
        };
        CameraPose::new(eye, orientation)
    }
}

/// Complete renderable scene description at one frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimensionState {
    pub camera: CameraPose,
    pub tf: TransferFunction,
    pub clip_box: ClipBox,
    pub time_step: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Lane {
    Camera,
    Tf,
    Clip,
    Temporal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "lane", content = "value", rename_all = "lowercase")]
pub enum LaneValue {
    Camera(CameraPose),
    Tf(TransferFunction),
    Clip(ClipBox),
    Temporal(f64),
}

impl LaneValue {
    pub fn lane(&self) -> Lane {
        match self {
            LaneValue::Camera(_) => Lane::Camera,
            LaneValue::Tf(_) => Lane::Tf,
            LaneValue::Clip(_) => Lane::Clip,
            LaneValue::Temporal(_) => Lane::Temporal,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Keyframe {
    pub frame: u32,
    pub value: LaneValue,
}

impl Keyframe {
    pub fn new(frame: u32, value: LaneValue) -> Self {
        Keyframe { frame, value }
    }

    pub fn lane(&self) -> Lane {
        self.value.lane()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Key<T> {
    pub frame: u32,
    pub value: T,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct KeyLane<T> {
    keys: Vec<Key<T>>,
}

impl<T> Default for KeyLane<T> {
    fn default() -> Self {
        KeyLane { keys: Vec::new() }
    }
}

impl<T: Clone> KeyLane<T> {
    pub fn keys(&self) -> &[Key<T>] {
        &self.keys
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    fn insert(&mut self, frame: u32, value: T) {
        match self.keys.binary_search_by_key(&frame, |k| k.frame) {
            Ok(i) => self.keys[i].value = value,
            Err(i) => self.keys.insert(i, Key { frame, value }),
        }
    }

    fn is_sorted(&self) -> bool {
        self.keys.windows(2).all(|w| w[0].frame < w[1].frame)
    }

    /// Holds outside the keyed range; `interp(a, b, t)` in between.
    fn sample(&self, f: f64, interp: impl Fn(&T, &T, f64) -> T) -> Option<T> {
        let first = self.keys.first()?;
        let last = self.keys.last()?;
        if f <= first.frame as f64 {
            return Some(first.value.clone());
        }
        if f >= last.frame as f64 {
            return Some(last.value.clone());
        }
        // first key with frame > f; exists because f < last.frame
        let hi = self.keys.partition_point(|k| k.frame as f64 <= f);
        let (a, b) = (&self.keys[hi - 1], &self.keys[hi]);
        if f == a.frame as f64 {
            return Some(a.value.clone());
        }
        let t = (f - a.frame as f64) / (b.frame as f64 - a.frame as f64);
        Some(interp(&a.value, &b.value, t))
    }

    fn reversed(&self, length: u32) -> Self {
        let mut keys: Vec<Key<T>> = self
            .keys
            .iter()
            .map(|k| Key {
                frame: length - 1 - k.frame,
                value: k.value.clone(),
            })
            .collect();
        keys.reverse();
        KeyLane { keys }
    }
}

/// One animation segment: per-dimension keyframe lanes over `length` frames.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timeline {
    length: u32,
    fps: u32,
    camera: KeyLane<CameraPose>,
    tf: KeyLane<TransferFunction>,
    clip: KeyLane<ClipBox>,
    temporal: KeyLane<f64>,
}

impl Timeline {
    pub fn new(length: u32) -> Result<Self> {
        Self::with_fps(length, DEFAULT_FPS)
    }

    pub fn with_fps(length: u32, fps: u32) -> Result<Self> {
        if length == 0 {
            return Err(Error::Timeline("length must be at least one frame".into()));
        }
        if fps == 0 {
            return Err(Error::Timeline("fps must be positive".into()));
        }
        Ok(Timeline {
            length,
            fps,
            camera: KeyLane::default(),
            tf: KeyLane::default(),
            clip: KeyLane::default(),
            temporal: KeyLane::default(),
        })
    }

    pub fn length(&self) -> u32 {
        self.length
    }

    pub fn fps(&self) -> u32 {
        self.fps
    }

    pub fn last_frame(&self) -> u32 {
        self.length.saturating_sub(1)
    }

    pub fn camera_keys(&self) -> &KeyLane<CameraPose> {
        &self.camera
    }

    pub fn tf_keys(&self) -> &KeyLane<TransferFunction> {
        &self.tf
    }

    pub fn clip_keys(&self) -> &KeyLane<ClipBox> {
        &self.clip
    }

    pub fn temporal_keys(&self) -> &KeyLane<f64> {
        &self.temporal
    }

    pub fn keyframe_count(&self) -> usize {
        self.camera.len() + self.tf.len() + self.clip.len() + self.temporal.len()
    }

    /// Inserts a keyframe, replacing any existing one at the same lane and frame.
    pub fn insert_keyframe(&mut self, keyframe: Keyframe) -> Result<()> {
        if keyframe.frame >= self.length {
            return Err(Error::FrameOutOfRange {
                frame: keyframe.frame,
                length: self.length,
            });
        }
        let frame = keyframe.frame;
        match keyframe.value {
            LaneValue::Camera(v) => self.camera.insert(frame, v),
            LaneValue::Tf(v) => self.tf.insert(frame, v),
            LaneValue::Clip(v) => {
                if !v.is_valid() {
                    return Err(Error::Timeline("clip keyframe has min > max".into()));
                }
                self.clip.insert(frame, v)
            }
            LaneValue::Temporal(v) => {
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(Error::Timeline(format!("time step {v} must be >= 0")));
                }
                self.temporal.insert(frame, v)
            }
        }
        Ok(())
    }

    pub fn with_keyframe(mut self, keyframe: Keyframe) -> Result<Self> {
        self.insert_keyframe(keyframe)?;
        Ok(self)
    }

    /// Writes all four lanes at `frame` from a complete state.
    pub fn set_state_at(&mut self, frame: u32, state: &DimensionState) -> Result<()> {
        self.insert_keyframe(Keyframe::new(frame, LaneValue::Camera(state.camera)))?;
        self.insert_keyframe(Keyframe::new(frame, LaneValue::Tf(state.tf.clone())))?;
        self.insert_keyframe(Keyframe::new(frame, LaneValue::Clip(state.clip_box)))?;
        self.insert_keyframe(Keyframe::new(frame, LaneValue::Temporal(state.time_step)))
    }

    /// Scene state at fractional frame `f`; lanes without keys fall back to `defaults`.
    pub fn evaluate(&self, f: f64, defaults: &DimensionState) -> DimensionState {
        let camera = self
            .camera
            .sample(f, |a, b, t| CameraPose {
                position: lerp_vec(&a.position, &b.position, t),
                orientation: slerp(&a.orientation, &b.orientation, t),
            })
            .unwrap_or(defaults.camera);
        let tf = self
            .tf
            .sample(f, |a, b, t| {
                let lut = a
                    .lut()
                    .iter()
                    .zip(b.lut())
                    .map(|(x, y)| lerp_rgba(x, y, t))
                    .collect();
                TransferFunction::from_lut(lut).expect("blend of valid tables is valid")
            })
            .unwrap_or_else(|| defaults.tf.clone());
        let clip_box = self
            .clip
            .sample(f, |a, b, t| ClipBox {
                min: lerp_vec(&a.min, &b.min, t),
                max: lerp_vec(&a.max, &b.max, t),
            })
            .unwrap_or(defaults.clip_box);
        let time_step = self
            .temporal
            .sample(f, |a, b, t| a + (b - a) * t)
            .unwrap_or(defaults.time_step);
        DimensionState {
            camera,
            tf,
            clip_box,
            time_step,
        }
    }

    pub fn endpoint_states(&self, defaults: &DimensionState) -> (DimensionState, DimensionState) {
        (
            self.evaluate(0.0, defaults),
            self.evaluate(self.last_frame() as f64, defaults),
        )
    }

    /// Timeline played backwards: frame `f` maps to `length - 1 - f`.
    pub fn reversed(&self) -> Timeline {
        Timeline {
            length: self.length,
            fps: self.fps,
            camera: self.camera.reversed(self.length),
            tf: self.tf.reversed(self.length),
            clip: self.clip.reversed(self.length),
            temporal: self.temporal.reversed(self.length),
        }
    }

    /// Structural problems (used after deserialization).
    pub fn check(&self) -> Result<()> {
        if self.fps == 0 {
            return Err(Error::Timeline("fps must be positive".into()));
        }
        let frames = self
            .camera
            .keys
            .iter()
            .map(|k| k.frame)
            .chain(self.tf.keys.iter().map(|k| k.frame))
            .chain(self.clip.keys.iter().map(|k| k.frame))
            .chain(self.temporal.keys.iter().map(|k| k.frame));
        for frame in frames {
            if frame >= self.length {
                return Err(Error::FrameOutOfRange {
                    frame,
                    length: self.length,
                });
            }
        }
        if !(self.camera.is_sorted()
            && self.tf.is_sorted()
            && self.clip.is_sorted()
            && self.temporal.is_sorted())
        {
            return Err(Error::Timeline("lane keyframes out of order".into()));
        }
        Ok(())
    }
}

fn lerp_vec(a: &Vec3, b: &Vec3, t: f64) -> Vec3 {
    if t == 0.0 {
        return *a;
    }
    if t == 1.0 {
        return *b;
    }
    a + (b - a) * t
}

/// Shortest-arc spherical interpolation.
pub fn slerp(a: &Orientation, b: &Orientation, t: f64) -> Orientation {
    if t == 0.0 {
        return *a;
    }
    if t == 1.0 {
        return *b;
    }
    let qa = a.coords;
    let mut qb = b.coords;
    if qa.dot(&qb) < 0.0 {
        qb = -qb;
    }
    // Half-angle from the chord length keeps precision for nearby rotations.
    let theta = 2.0 * ((qb - qa).norm() * 0.5).clamp(0.0, 1.0).asin();
    let sin = theta.sin();
    let blended = if sin < 1e-12 {
        qa * (1.0 - t) + qb * t
    } else {
        qa * (((1.0 - t) * theta).sin() / sin) + qb * ((t * theta).sin() / sin)
    };
    UnitQuaternion::new_normalize(Quaternion::from(blended))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::{ControlPoint, TransferFunction};
    use nalgebra::{Matrix3, Vector3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn defaults() -> DimensionState {
        DimensionState {
            camera: CameraPose::at(Vec3::new(0.5, 0.5, -2.0)),
            tf: TransferFunction::ramp(),
            clip_box: ClipBox::unit(),
            time_step: 0.0,
        }
    }

    fn yaw(angle: f64) -> Orientation {
        Orientation::from_axis_angle(&Vector3::y_axis(), angle)
    }

    #[test]
    fn insert_into_empty_lane() {
        let mut tl = Timeline::new(10).unwrap();
        tl.insert_keyframe(Keyframe::new(3, LaneValue::Temporal(1.0))).unwrap();
        assert_eq!(tl.temporal_keys().len(), 1);
        assert_eq!(tl.keyframe_count(), 1);
    }

    #[test]
    fn insert_duplicate_replaces() {
        let mut tl = Timeline::new(10).unwrap();
        tl.insert_keyframe(Keyframe::new(3, LaneValue::Temporal(1.0))).unwrap();
        tl.insert_keyframe(Keyframe::new(3, LaneValue::Temporal(2.0))).unwrap();
        assert_eq!(tl.temporal_keys().len(), 1);
        assert_eq!(tl.temporal_keys().keys()[0].value, 2.0);
    }

    #[test]
    fn insert_out_of_range_errors() {
        let mut tl = Timeline::new(10).unwrap();
        let err = tl.insert_keyframe(Keyframe::new(10, LaneValue::Temporal(0.0)));
        assert!(matches!(err, Err(Error::FrameOutOfRange { frame: 10, length: 10 })));
        assert!(Timeline::new(0).is_err());
    }

    #[test]
    fn random_inserts_stay_sorted() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut tl = Timeline::new(100).unwrap();
        let mut frames = Vec::new();
        for _ in 0..10 {
            let f = rng.random_range(0..100);
            frames.push(f);
            tl.insert_keyframe(Keyframe::new(f, LaneValue::Temporal(f as f64))).unwrap();
        }
        frames.sort();
        frames.dedup();
        let got: Vec<u32> = tl.temporal_keys().keys().iter().map(|k| k.frame).collect();
        assert_eq!(got, frames);
        assert!(got.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn linear_position_midpoint() {
        let tl = Timeline::new(11)
            .unwrap()
            .with_keyframe(Keyframe::new(0, LaneValue::Camera(CameraPose::at(Vec3::zeros()))))
            .unwrap()
            .with_keyframe(Keyframe::new(
                10,
                LaneValue::Camera(CameraPose::at(Vec3::new(2.0, 0.0, 0.0))),
            ))
            .unwrap();
        let s = tl.evaluate(5.0, &defaults());
        assert_eq!(s.camera.position, Vec3::new(1.0, 0.0, 0.0));
        // other lanes keep their defaults
        assert_eq!(s.tf, defaults().tf);
        assert_eq!(s.clip_box, defaults().clip_box);
    }

    #[test]
    fn hold_outside_keyed_range() {
        let tl = Timeline::new(20)
            .unwrap()
            .with_keyframe(Keyframe::new(5, LaneValue::Temporal(2.0)))
            .unwrap()
            .with_keyframe(Keyframe::new(10, LaneValue::Temporal(4.0)))
            .unwrap();
        let d = defaults();
        assert_eq!(tl.evaluate(0.0, &d).time_step, 2.0);
        assert_eq!(tl.evaluate(19.0, &d).time_step, 4.0);
        assert_eq!(tl.evaluate(7.5, &d).time_step, 3.0);
    }

    fn rotation_matrix_yaw(angle: f64) -> Matrix3<f64> {
        let (s, c) = angle.sin_cos();
        Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
    }

    #[test]
    fn slerp_midpoint_of_quarter_turn() {
        let tl = Timeline::new(11)
            .unwrap()
            .with_keyframe(Keyframe::new(0, LaneValue::Camera(CameraPose::new(Vec3::zeros(), yaw(0.0)))))
            .unwrap()
            .with_keyframe(Keyframe::new(10, LaneValue::Camera(CameraPose::new(Vec3::zeros(), yaw(FRAC_PI_2)))))
            .unwrap();
        let q = tl.evaluate(5.0, &defaults()).camera.orientation;
        let got = q.to_rotation_matrix().into_inner();
        let want = rotation_matrix_yaw(FRAC_PI_4);
        assert!((got - want).abs().max() < 1e-6, "{got} vs {want}");
    }

    #[test]
    fn slerp_takes_shortest_arc() {
        let a = yaw(0.1);
        let b = Orientation::from_quaternion(-yaw(0.5).into_inner());
        let mid = slerp(&a, &b, 0.5);
        assert!(mid.angle_to(&yaw(0.3)) < 1e-9);
    }

    #[test]
    fn keyframe_payloads_reproduced_exactly() {
        let tf = TransferFunction::new(vec![
            ControlPoint::new(0.0, [0.1, 0.2, 0.3, 0.0]),
            ControlPoint::new(0.3, [0.9, 0.1, 0.1, 0.4]),
            ControlPoint::new(1.0, [1.0, 1.0, 1.0, 1.0]),
        ])
        .unwrap();
        let pose = CameraPose::new(Vec3::new(0.1, 0.7, -3.3), yaw(1.234));
        let clip = ClipBox::new(Vec3::new(0.1, 0.2, 0.3), Vec3::new(0.9, 0.8, 0.7)).unwrap();
        let tl = Timeline::new(30)
            .unwrap()
            .with_keyframe(Keyframe::new(0, LaneValue::Camera(CameraPose::at(Vec3::zeros()))))
            .unwrap()
            .with_keyframe(Keyframe::new(13, LaneValue::Camera(pose)))
            .unwrap()
            .with_keyframe(Keyframe::new(29, LaneValue::Camera(CameraPose::at(Vec3::x()))))
            .unwrap()
            .with_keyframe(Keyframe::new(0, LaneValue::Tf(TransferFunction::ramp())))
            .unwrap()
            .with_keyframe(Keyframe::new(13, LaneValue::Tf(tf.clone())))
            .unwrap()
            .with_keyframe(Keyframe::new(13, LaneValue::Clip(clip)))
            .unwrap()
            .with_keyframe(Keyframe::new(20, LaneValue::Clip(ClipBox::unit())))
            .unwrap();
        let s = tl.evaluate(13.0, &defaults());
        assert_eq!(s.camera, pose);
        assert_eq!(s.tf, tf);
        assert_eq!(s.clip_box, clip);
    }

    #[test]
    fn endpoint_states_of_empty_and_single_key_timelines() {
        let d = defaults();
        let empty = Timeline::new(12).unwrap();
        let (a, b) = empty.endpoint_states(&d);
        assert_eq!(a, d);
        assert_eq!(b, d);

        let single = Timeline::new(12)
            .unwrap()
            .with_keyframe(Keyframe::new(6, LaneValue::Temporal(3.0)))
            .unwrap();
        let (a, b) = single.endpoint_states(&d);
        assert_eq!(a.time_step, 3.0);
        assert_eq!(b.time_step, 3.0);
    }

    #[test]
    fn set_state_at_overwrites_all_lanes() {
        let d = defaults();
        let mut target = d.clone();
        target.time_step = 7.0;
        target.camera = CameraPose::new(Vec3::new(1.0, 2.0, 3.0), yaw(0.7));
        let mut tl = Timeline::new(5).unwrap();
        tl.insert_keyframe(Keyframe::new(4, LaneValue::Temporal(1.0))).unwrap();
        tl.set_state_at(4, &target).unwrap();
        assert_eq!(tl.endpoint_states(&d).1, target);
    }

    #[test]
    fn serde_round_trip() {
        let tl = Timeline::new(8)
            .unwrap()
            .with_keyframe(Keyframe::new(0, LaneValue::Camera(CameraPose::new(Vec3::x(), yaw(0.3)))))
            .unwrap()
            .with_keyframe(Keyframe::new(7, LaneValue::Tf(TransferFunction::ramp())))
            .unwrap();
        let back: Timeline = serde_json::from_str(&serde_json::to_string(&tl).unwrap()).unwrap();
        assert_eq!(back, tl);
        back.check().unwrap();
    }
}
