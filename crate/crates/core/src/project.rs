//! On-disk project: the built roadmap plus everything needed to render it.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::render::{RenderSettings, VolumeRenderer, DEFAULT_IPD};
use crate::roadmap::Roadmap;
use crate::timeline::DEFAULT_FPS;
use crate::volume::{load_volume, VolumeSeries};

pub const PROJECT_FORMAT_VERSION: u32 = 1;

/// Descriptor paths, relative to the project file unless absolute.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum VolumeSource {
    Single { descriptor: PathBuf },
    Series { descriptors: Vec<PathBuf> },
}

impl VolumeSource {
    pub fn descriptors(&self) -> Vec<&Path> {
        match self {
            VolumeSource::Single { descriptor } => vec![descriptor.as_path()],
            VolumeSource::Series { descriptors } => descriptors.iter().map(PathBuf::as_path).collect(),
        }
    }

    pub fn load(&self, base: &Path) -> Result<VolumeSeries> {
        let steps = self
            .descriptors()
            .into_iter()
            .map(|p| load_volume(base.join(p)))
            .collect::<Result<Vec<_>>>()?;
        VolumeSeries::new(steps)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Project {
    pub format_version: u32,
    pub volume: VolumeSource,
    pub settings: RenderSettings,
    pub ipd: f64,
    pub near_clip: f64,
    pub fps: u32,
    pub roadmap: Roadmap,
}

impl Project {
    pub fn new(volume: VolumeSource, settings: RenderSettings, roadmap: Roadmap) -> Self {
        Project {
            format_version: PROJECT_FORMAT_VERSION,
            volume,
            settings,
            ipd: DEFAULT_IPD,
            near_clip: 0.0,
            fps: DEFAULT_FPS,
            roadmap,
        }
    }

    pub fn to_text(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("project serializes");
        text.push('\n');
        text
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let project: Project = serde_json::from_str(&text)?;
        if project.format_version != PROJECT_FORMAT_VERSION {
            return Err(Error::Descriptor {
                path: path.to_path_buf(),
                message: format!("unsupported project format version {}", project.format_version),
            });
        }
        Ok(project)
    }

    /// Loads the volumes, resolving descriptors against `base` (the project's directory).
    pub fn renderer(&self, base: &Path) -> Result<VolumeRenderer> {
        let series = self.volume.load(base)?;
        VolumeRenderer::new(series, self.settings.clone(), self.ipd, self.near_clip)
    }
}
