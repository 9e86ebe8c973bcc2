//! Analytic test scene: a checkerboard unit sphere resting above a checkerboard
//! ground disc, Lambertian shading under one directional light, black
//! background. Pixel colors are exact ray-traced values quantized to 8 bits.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{write_blender_scene, write_scene_options, SceneBundle, SceneOptions};
use crate::error::{Error, Result};
use crate::geometry::{camera_ray, Camera, Ray};
use crate::image::{quantize, RgbImage};

const RING_ELEVATIONS_DEG: [f64; 2] = [15.0, 40.0];
const HOLDOUT_ELEVATION_DEG: f64 = 25.0;
const DISC_HEIGHT: f64 = -1.0;
const DISC_RADIUS: f64 = 1.2;
const SPHERE_A: [f64; 3] = [0.85, 0.25, 0.2];
const SPHERE_B: [f64; 3] = [0.95, 0.85, 0.3];
const DISC_A: [f64; 3] = [0.3, 0.6, 0.35];
const DISC_B: [f64; 3] = [0.85, 0.85, 0.85];

fn light_dir() -> Vector3<f64> {
    Vector3::new(0.5, 0.3, 1.0).normalize()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    /// Candidate (training) views.
    pub views: usize,
    /// Held-out evaluation views, written as the `test` split.
    pub holdout: usize,
    /// Square image side in pixels.
    pub size: usize,
    /// Horizontal field of view in radians.
    pub fov: f64,
    /// Camera distance from the origin.
    pub radius: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self { views: 100, holdout: 8, size: 64, fov: 0.69, radius: 4.0, seed: 0 }
    }
}

fn on_sphere(radius: f64, elevation: f64, azimuth: f64) -> Vector3<f64> {
    radius * Vector3::new(elevation.cos() * azimuth.cos(), elevation.cos() * azimuth.sin(), elevation.sin())
}

/// Training cameras (two elevation rings, then Fibonacci points on the upper
/// hemisphere) and holdout cameras on a ring between the two, all looking at
/// the origin with `+z` up. The seed only rotates each ring and the spiral.
pub fn synthetic_cameras(spec: &SynthSpec) -> Result<(Vec<Camera>, Vec<Camera>)> {
    if spec.views == 0 {
        return Err(Error::invalid("synthetic scene needs at least one view"));
    }
    if spec.size == 0 || !(spec.fov > 0.0 && spec.fov < PI) || !(spec.radius > 1.0) {
        return Err(Error::invalid(format!("bad synthetic scene parameters {spec:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let focal = spec.size as f64 / (2.0 * (spec.fov / 2.0).tan());
    let make = |eye: Vector3<f64>| Camera::look_at(eye, Vector3::zeros(), Vector3::z(), focal, spec.size, spec.size);
    let per_ring = spec.views / 4;
    let mut eyes = Vec::with_capacity(spec.views);
    for elev in RING_ELEVATIONS_DEG {
        let phase = rng.random::<f64>() * 2.0 * PI;
        for i in 0..per_ring {
            eyes.push(on_sphere(spec.radius, elev.to_radians(), phase + 2.0 * PI * i as f64 / per_ring as f64));
        }
    }
    let spiral = spec.views - 2 * per_ring;
    let golden = PI * (3.0 - 5f64.sqrt());
    let phase = rng.random::<f64>() * 2.0 * PI;
    for i in 0..spiral {
        let z = (i as f64 + 0.5) / spiral as f64;
        eyes.push(on_sphere(spec.radius, z.asin(), phase + golden * i as f64));
    }
    let phase = rng.random::<f64>() * 2.0 * PI;
    let holdout: Vec<Vector3<f64>> = (0..spec.holdout)
        .map(|i| on_sphere(spec.radius, HOLDOUT_ELEVATION_DEG.to_radians(), phase + 2.0 * PI * i as f64 / spec.holdout as f64))
        .collect();
    Ok((eyes.into_iter().map(make).collect::<Result<_>>()?, holdout.into_iter().map(make).collect::<Result<_>>()?))
}

fn checker(a: f64, b: f64) -> bool {
    (a.floor() as i64 + b.floor() as i64).rem_euclid(2) == 0
}

/// Exact color seen along `ray`, or `background` when nothing is hit.
pub fn shade_ray(ray: &Ray, background: [f64; 3]) -> [f64; 3] {
    let (o, d) = (ray.origin, ray.direction);
    let l = light_dir();
    let mut best: Option<(f64, [f64; 3], Vector3<f64>)> = None;
    let b = o.dot(&d);
    let disc = b * b - (o.norm_squared() - 1.0);
    if disc >= 0.0 {
        let t = -b - disc.sqrt();
        if t > 0.0 {
            let n = (o + t * d).normalize();
            let u = (n.y.atan2(n.x) / (2.0 * PI) + 0.5) * 8.0;
            let v = n.z.clamp(-1.0, 1.0).acos() / PI * 4.0;
            best = Some((t, if checker(u, v) { SPHERE_A } else { SPHERE_B }, n));
        }
    }
    if d.z.abs() > 1e-12 {
        let t = (DISC_HEIGHT - o.z) / d.z;
        let p = o + t * d;
        if t > 0.0 && p.x * p.x + p.y * p.y <= DISC_RADIUS * DISC_RADIUS && best.is_none_or(|(tb, _, _)| t < tb) {
            let albedo = if checker((p.x + DISC_RADIUS) / 0.4, (p.y + DISC_RADIUS) / 0.4) { DISC_A } else { DISC_B };
            let n = if d.z < 0.0 { Vector3::z() } else { -Vector3::z() };
            best = Some((t, albedo, n));
        }
    }
    match best {
        Some((_, albedo, n)) => albedo.map(|a| a * n.dot(&l).max(0.0)),
        None => background,
    }
}

fn render_view(cam: &Camera, options: &SceneOptions) -> Result<RgbImage> {
    let (w, h) = (cam.width(), cam.height());
    let mut pixels = Vec::with_capacity(w * h);
    for v in 0..h {
        for u in 0..w {
            let ray = camera_ray(cam, u as f64, v as f64, options.t_near, options.t_far)?;
            // keep exactly what an 8-bit file can hold
            pixels.push(shade_ray(&ray, options.background).map(|c| quantize(c) as f64 / 255.0));
        }
    }
    RgbImage::new(w, h, pixels)
}

fn render_all(cams: &[Camera], options: &SceneOptions) -> Result<Vec<RgbImage>> {
    cams.par_iter().map(|c| render_view(c, options)).collect()
}

/// Renders the scene and, when `out` is given, writes it in Blender layout
/// (`train` split for the candidate views, `test` for the holdout views).
pub fn generate_synthetic_scene(spec: &SynthSpec, out: Option<&Path>) -> Result<(SceneBundle, SceneBundle)> {
    let options = SceneOptions::default();
    let (train_cams, test_cams) = synthetic_cameras(spec)?;
    let train_imgs = render_all(&train_cams, &options)?;
    let test_imgs = render_all(&test_cams, &options)?;
    let train = SceneBundle::new(train_cams, train_imgs, options)?;
    let test = SceneBundle::new(test_cams, test_imgs, options)?;
    if let Some(dir) = out {
        write_blender_scene(dir, "train", &train)?;
        write_scene_options(dir, &options)?;
        if !test.is_empty() {
            write_blender_scene(dir, "test", &test)?;
        }
    }
    Ok((train, test))
}
