//! `transforms_{split}.json` scenes as written by the Blender NeRF exporter.

use std::path::{Path, PathBuf};

use nalgebra::Matrix4;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{read_json, read_png, write_json, write_png, SceneBundle, SceneOptions};
use crate::error::{Error, Result};
use crate::geometry::Camera;

/// Looser than the in-memory check; exported poses carry float noise.
const LOAD_ROTATION_TOL: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlenderTransforms {
    /// Horizontal field of view in radians.
    pub camera_angle_x: f64,
    pub frames: Vec<BlenderFrame>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlenderFrame {
    /// Relative to the scene directory; `.png` is appended when missing.
    pub file_path: String,
    /// Row-major camera-to-world matrix.
    pub transform_matrix: [[f64; 4]; 4],
}

fn image_path(dir: &Path, file_path: &str) -> PathBuf {
    let p = dir.join(file_path);
    if p.extension().is_some() {
        p
    } else {
        p.with_extension("png")
    }
}

/// Loads the `split` part (`train`, `test`, ...) of a scene directory.
pub fn load_blender_scene(dir: &Path, split: &str, options: SceneOptions) -> Result<SceneBundle> {
    let json_path = dir.join(format!("transforms_{split}.json"));
    let tf: BlenderTransforms = read_json(&json_path)?;
    if !(tf.camera_angle_x > 0.0 && tf.camera_angle_x < std::f64::consts::PI) {
        return Err(Error::format(&json_path, format!("camera_angle_x {} outside (0, π)", tf.camera_angle_x)));
    }
    let images = tf
        .frames
        .par_iter()
        .map(|f| read_png(&image_path(dir, &f.file_path), options.background))
        .collect::<Result<Vec<_>>>()?;
    let mut cameras = Vec::with_capacity(images.len());
    for (i, (frame, img)) in tf.frames.iter().zip(&images).enumerate() {
        let m = Matrix4::from_fn(|r, c| frame.transform_matrix[r][c]);
        if m.fixed_view::<1, 4>(3, 0).iter().zip([0.0, 0.0, 0.0, 1.0]).any(|(a, b)| (a - b).abs() > LOAD_ROTATION_TOL) {
            return Err(Error::format(&json_path, format!("frame {i}: last row of transform_matrix is not [0, 0, 0, 1]")));
        }
        let focal = img.width as f64 / (2.0 * (tf.camera_angle_x / 2.0).tan());
        let cam = Camera::with_tolerance(m, focal, img.width, img.height, LOAD_ROTATION_TOL)
            .map_err(|e| Error::format(&json_path, format!("frame {i}: {e}")))?;
        cameras.push(cam);
    }
    SceneBundle::new(cameras, images, options)
}

/// Writes `transforms_{split}.json` plus one PNG per view under `dir/split/`.
/// All cameras must share the focal length of the first one.
pub fn write_blender_scene(dir: &Path, split: &str, scene: &SceneBundle) -> Result<()> {
    let first = scene.cameras.first().ok_or_else(|| Error::invalid("cannot write an empty scene"))?;
    let angle = 2.0 * (first.width() as f64 / (2.0 * first.focal())).atan();
    let frames: Vec<BlenderFrame> = scene
        .cameras
        .iter()
        .enumerate()
        .map(|(i, cam)| {
            let m = cam.cam_to_world();
            BlenderFrame {
                file_path: format!("./{split}/r_{i:03}"),
                transform_matrix: std::array::from_fn(|r| std::array::from_fn(|c| m[(r, c)])),
            }
        })
        .collect();
    scene
        .images
        .par_iter()
        .zip(&frames)
        .try_for_each(|(img, f)| write_png(&image_path(dir, &f.file_path), img))?;
    write_json(&dir.join(format!("transforms_{split}.json")), &BlenderTransforms { camera_angle_x: angle, frames })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture(dir: &Path, angle: f64, matrix: [[f64; 4]; 4], rgba: [u8; 4]) {
        let tf = BlenderTransforms {
            camera_angle_x: angle,
            frames: vec![BlenderFrame { file_path: "./train/r_0".into(), transform_matrix: matrix }],
        };
        std::fs::create_dir_all(dir.join("train")).unwrap();
        std::fs::write(dir.join("transforms_train.json"), serde_json::to_string(&tf).unwrap()).unwrap();
        let buf: Vec<u8> = (0..4).flat_map(|_| rgba).collect();
        image::save_buffer(dir.join("train/r_0.png"), &buf, 2, 2, image::ExtendedColorType::Rgba8).unwrap();
    }

    const IDENTITY: [[f64; 4]; 4] = [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]];

    #[test]
    fn identity_frame() {
        let dir = tempfile::tempdir().unwrap();
        fixture(dir.path(), std::f64::consts::FRAC_PI_2, IDENTITY, [9, 9, 9, 0]);
        let opts = SceneOptions { background: [1.0; 3], ..Default::default() };
        let scene = load_blender_scene(dir.path(), "train", opts).unwrap();
        assert_eq!(scene.len(), 1);
        assert_eq!(scene.cameras[0].rotation(), nalgebra::Matrix3::identity());
        assert!((scene.cameras[0].focal() - 1.0).abs() < 1e-12);
        assert!(scene.images[0].pixels.iter().all(|p| *p == [1.0; 3]));
    }

    #[test]
    fn focal_from_field_of_view() {
        let w: f64 = 800.0;
        assert!((w / (2.0 * (std::f64::consts::FRAC_PI_2 / 2.0).tan()) - 400.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_non_rigid_transform() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = IDENTITY;
        m[0][0] = 1.01;
        fixture(dir.path(), 0.7, m, [0, 0, 0, 255]);
        let err = load_blender_scene(dir.path(), "train", SceneOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Format { .. }), "{err}");
    }

    #[test]
    fn tolerates_small_pose_noise() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = IDENTITY;
        m[0][1] = 2e-4;
        fixture(dir.path(), 0.7, m, [0, 0, 0, 255]);
        assert!(load_blender_scene(dir.path(), "train", SceneOptions::default()).is_ok());
    }

    #[test]
    fn malformed_and_missing_files() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_blender_scene(dir.path(), "train", SceneOptions::default()), Err(Error::Io { .. })));
        std::fs::write(dir.path().join("transforms_train.json"), "{\"frames\": 3}").unwrap();
        assert!(matches!(load_blender_scene(dir.path(), "train", SceneOptions::default()), Err(Error::Json { .. })));
    }
}
