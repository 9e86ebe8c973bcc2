//! Scene loading, the synthetic oracle scene and artifact file formats.

mod blender;
mod checkpoint;
mod pfm;
mod records;
mod synth;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use blender::{load_blender_scene, write_blender_scene, BlenderFrame, BlenderTransforms};
pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use pfm::{decode_pfm, encode_pfm, encode_pgm_preview, read_pfm, write_entropy_map};
pub use records::{read_metrics_csv, read_schedule, write_metrics_csv, write_schedule, MetricsRow, ScheduleFile};
pub use synth::{generate_synthetic_scene, shade_ray, synthetic_cameras, SynthSpec};

use crate::error::{Error, Result};
use crate::geometry::{Camera, DepthRange, ProxyGrid};
use crate::image::RgbImage;

/// Values a scene carries beyond what the transforms file records.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneOptions {
    pub background: [f64; 3],
    pub t_near: f64,
    pub t_far: f64,
    pub bounds_min: [f64; 3],
    pub bounds_max: [f64; 3],
}

impl Default for SceneOptions {
    fn default() -> Self {
        Self { background: [0.0; 3], t_near: 2.0, t_far: 6.0, bounds_min: [-1.2; 3], bounds_max: [1.2; 3] }
    }
}

#[derive(Debug, Clone)]
pub struct SceneBundle {
    pub cameras: Vec<Camera>,
    pub images: Vec<RgbImage>,
    pub options: SceneOptions,
}

impl SceneBundle {
    pub fn new(cameras: Vec<Camera>, images: Vec<RgbImage>, options: SceneOptions) -> Result<Self> {
        if cameras.len() != images.len() {
            return Err(Error::invalid(format!("{} cameras but {} images", cameras.len(), images.len())));
        }
        if let Some(first) = images.first() {
            for (i, (img, cam)) in images.iter().zip(&cameras).enumerate() {
                if (img.width, img.height) != (first.width, first.height) || (cam.width(), cam.height()) != (img.width, img.height) {
                    return Err(Error::invalid(format!("view {i} does not match the scene image size")));
                }
            }
        }
        if options.bounds_min.iter().chain(&options.bounds_max).any(|v| !v.is_finite()) {
            return Err(Error::invalid("scene bounds must be finite"));
        }
        DepthRange::new(options.t_near, options.t_far)?;
        Ok(Self { cameras, images, options })
    }

    pub fn len(&self) -> usize {
        self.cameras.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cameras.is_empty()
    }

    pub fn depth_range(&self) -> DepthRange {
        DepthRange::new(self.options.t_near, self.options.t_far).expect("validated on construction")
    }

    pub fn grid(&self, resolution: usize) -> Result<ProxyGrid> {
        crate::geometry::make_grid(self.options.bounds_min.into(), self.options.bounds_max.into(), resolution)
    }

    /// Keeps only the listed views, in the given order.
    pub fn subset(&self, views: &[usize]) -> Result<Self> {
        if let Some(&bad) = views.iter().find(|&&v| v >= self.len()) {
            return Err(Error::invalid(format!("view {bad} out of range for {} views", self.len())));
        }
        Ok(Self {
            cameras: views.iter().map(|&v| self.cameras[v].clone()).collect(),
            images: views.iter().map(|&v| self.images[v].clone()).collect(),
            options: self.options,
        })
    }
}

/// Name of the optional file beside the transforms that stores [`SceneOptions`].
pub const SCENE_OPTIONS_FILE: &str = "scene.json";

/// Loads a split using `dir/scene.json` for the options when present and the
/// defaults otherwise.
pub fn load_scene(dir: &Path, split: &str) -> Result<SceneBundle> {
    let opt_path = dir.join(SCENE_OPTIONS_FILE);
    let options = if opt_path.exists() { read_json(&opt_path)? } else { SceneOptions::default() };
    load_blender_scene(dir, split, options)
}

pub fn write_scene_options(dir: &Path, options: &SceneOptions) -> Result<()> {
    write_json(&dir.join(SCENE_OPTIONS_FILE), options)
}

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = read_bytes(path)?;
    serde_json::from_slice(&bytes).map_err(|source| Error::Json { path: path.into(), source })
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(|source| Error::Json { path: path.into(), source })?;
    s.push('\n');
    write_bytes(path, s.as_bytes())
}

/// Loads an 8-bit PNG, compositing any alpha channel onto `background`.
pub fn read_png(path: &Path, background: [f64; 3]) -> Result<RgbImage> {
    let img = image::open(path).map_err(|source| Error::Image { path: path.into(), source })?.into_rgba8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let pixels = img
        .pixels()
        .map(|p| {
            let a = p[3] as f64 / 255.0;
            [0, 1, 2].map(|c| p[c] as f64 / 255.0 * a + background[c] * (1.0 - a))
        })
        .collect();
    RgbImage::new(w, h, pixels)
}

/// Writes an opaque 8-bit PNG; channels are clamped and rounded.
pub fn write_png(path: &Path, img: &RgbImage) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    image::save_buffer(path, &img.to_rgb8(), img.width as u32, img.height as u32, image::ExtendedColorType::Rgb8)
        .map_err(|source| Error::Image { path: path.into(), source })
}
