//! Authoring and playback core for navigable volume videos.
//!
//! The pipeline runs from [`volume`] data through keyframed [`timeline`]s,
//! omnidirectional-stereo [`render`]ing, a [`roadmap`] graph of branching
//! segments and asset [`export`], to the viewer-side [`nav`] state machine.

pub mod error;
pub mod export;
pub mod nav;
pub mod project;
pub mod render;
pub mod roadmap;
pub mod timeline;
pub mod volume;

pub use error::{Error, Result};
pub use render::{
    build_preintegration, cast_ray, ods_ray, ods_ray_at, render_panorama, shadow_attenuation, Eye,
    OdsCameraConfig, Panorama, PanoramaSource, PreintegrationTable, RenderResources,
    RenderSettings, StereoPanorama, VolumeRenderer,
};
pub use export::{
    export_roadmap, Direction, ExportConfig, ExportManifest, FrameFormat, VideoAssetSet,
};
pub use nav::{simulate, step, InputEvent, NavGraph, NavState, TraversalHistory};
pub use project::{Project, VolumeSource};
pub use roadmap::{parse_metadata, serialize_metadata, Operation, Roadmap};
pub use timeline::{CameraPose, DimensionState, Keyframe, Lane, LaneValue, Orientation, Timeline};
pub use volume::{
    clip_intersect, load_volume, sample_trilinear, tf_resample, ClipBox, ControlPoint, Rgba,
    ScalarType, TransferFunction, Vec3, VolumeField, VolumeSeries,
};
