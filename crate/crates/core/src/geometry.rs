//! Cameras, rays, the proxy grid and frustum visibility.
//!
//! Cameras follow the camera-to-world convention used by Blender-style NeRF
//! datasets: the camera looks down its local `-z` axis with `+y` up, and image
//! rows grow downwards.

use nalgebra::{Matrix3, Matrix4, Point3, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};

const ORTHONORMAL_TOL: f64 = 1e-6;

/// Calibrated pinhole camera.
#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    cam_to_world: Matrix4<f64>,
    focal: f64,
    width: usize,
    height: usize,
    cx: f64,
    cy: f64,
}

impl Camera {
    /// Builds a camera with the principal point at the image center.
    pub fn new(cam_to_world: Matrix4<f64>, focal: f64, width: usize, height: usize) -> Result<Self> {
        Self::with_tolerance(cam_to_world, focal, width, height, ORTHONORMAL_TOL)
    }

    /// Same as [`Camera::new`] with a caller-chosen tolerance on `‖R·Rᵀ − I‖∞`.
    pub fn with_tolerance(
        cam_to_world: Matrix4<f64>,
        focal: f64,
        width: usize,
        height: usize,
        tol: f64,
    ) -> Result<Self> {
        if !(focal > 0.0 && focal.is_finite()) {
            return Err(Error::invalid(format!("focal length must be positive, got {focal}")));
        }
        if width == 0 || height == 0 {
            return Err(Error::invalid("image dimensions must be at least 1x1"));
        }
        if cam_to_world.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("camera pose has non-finite entries"));
        }
        let r = rotation_block(&cam_to_world);
        let dev = (r * r.transpose() - Matrix3::identity()).amax();
        if dev >= tol || (r.determinant() - 1.0).abs() >= tol.max(ORTHONORMAL_TOL) {
            return Err(Error::invalid(format!(
                "camera rotation is not a proper rotation (orthonormality error {dev:.3e}, det {:.6})",
                r.determinant()
            )));
        }
        Ok(Self {
            cam_to_world,
            focal,
            width,
            height,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
        })
    }

    /// Camera at `eye` looking at `target`, with `up` giving the vertical direction.
    pub fn look_at(
        eye: Vector3<f64>,
        target: Vector3<f64>,
        up: Vector3<f64>,
        focal: f64,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let back = (eye - target).try_normalize(1e-12).ok_or_else(|| Error::invalid("eye equals target"))?;
        let right = up
            .cross(&back)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::invalid("up vector is parallel to the viewing direction"))?;
        let true_up = back.cross(&right);
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 1>(0, 0).copy_from(&right);
        m.fixed_view_mut::<3, 1>(0, 1).copy_from(&true_up);
        m.fixed_view_mut::<3, 1>(0, 2).copy_from(&back);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&eye);
        Self::new(m, focal, width, height)
    }

    pub fn with_principal_point(mut self, cx: f64, cy: f64) -> Self {
        self.cx = cx;
        self.cy = cy;
        self
    }

    pub fn cam_to_world(&self) -> &Matrix4<f64> {
        &self.cam_to_world
    }

    pub fn focal(&self) -> f64 {
        self.focal
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn principal_point(&self) -> (f64, f64) {
        (self.cx, self.cy)
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        rotation_block(&self.cam_to_world)
    }

    pub fn center(&self) -> Vector3<f64> {
        self.cam_to_world.fixed_view::<3, 1>(0, 3).into_owned()
    }

    /// World-space viewing direction, `-R·e_z`.
    pub fn optical_axis(&self) -> Vector3<f64> {
        -self.cam_to_world.fixed_view::<3, 1>(0, 2).into_owned()
    }

    /// Transforms a world point into the camera frame.
    pub fn world_to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation().transpose() * (p - self.center())
    }

    /// Projects a world point to continuous image-plane coordinates and its
    /// camera-frame depth (distance along the optical axis).
    ///
    /// The image plane covers `[0, width) × [0, height)`; pixel `(u, v)` has its
    /// center at `(u + 0.5, v + 0.5)`. Returns `None` for points at or behind
    /// the camera plane.
    pub fn project(&self, p: &Vector3<f64>) -> Option<(f64, f64, f64)> {
        let pc = self.world_to_camera(p);
        let depth = -pc.z;
        if depth <= 0.0 {
            return None;
        }
        let x = self.cx + self.focal * pc.x / depth;
        let y = self.cy - self.focal * pc.y / depth;
        Some((x, y, depth))
    }

    /// Unit world-space direction through the image-plane point `(x, y)`.
    fn direction_through(&self, x: f64, y: f64) -> Vector3<f64> {
        let local = Vector3::new((x - self.cx) / self.focal, -(y - self.cy) / self.focal, -1.0);
        (self.rotation() * local).normalize()
    }
}

fn rotation_block(m: &Matrix4<f64>) -> Matrix3<f64> {
    m.fixed_view::<3, 3>(0, 0).into_owned()
}

/// A ray `o + t·d` restricted to `[t_near, t_far]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vector3<f64>,
    pub direction: Vector3<f64>,
    pub t_near: f64,
    pub t_far: f64,
}

impl Ray {
    pub fn new(origin: Vector3<f64>, direction: Vector3<f64>, t_near: f64, t_far: f64) -> Result<Self> {
        let n = direction.norm();
        if !n.is_finite() || (n - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("ray direction must be unit length, got norm {n}")));
        }
        if !(0.0 <= t_near && t_near < t_far) || !t_far.is_finite() {
            return Err(Error::invalid(format!("invalid ray bounds [{t_near}, {t_far}]")));
        }
        Ok(Self { origin, direction, t_near, t_far })
    }

    pub fn at(&self, t: f64) -> Vector3<f64> {
        self.origin + self.direction * t
    }
}

/// Ray from the camera center through pixel `(u, v)`; integer coordinates hit
/// the pixel center.
pub fn camera_ray(cam: &Camera, u: f64, v: f64, t_near: f64, t_far: f64) -> Result<Ray> {
    if !(0.0..cam.width as f64).contains(&u) || !(0.0..cam.height as f64).contains(&v) {
        return Err(Error::invalid(format!(
            "pixel ({u}, {v}) outside {}x{} image",
            cam.width, cam.height
        )));
    }
    Ray::new(cam.center(), cam.direction_through(u + 0.5, v + 0.5), t_near, t_far)
}

/// Depth interval used for frustum visibility: closed at `near`, open at `far`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthRange {
    pub near: f64,
    pub far: f64,
}

impl DepthRange {
    pub fn new(near: f64, far: f64) -> Result<Self> {
        if !(0.0 <= near && near < far && far.is_finite()) {
            return Err(Error::invalid(format!("invalid depth range [{near}, {far})")));
        }
        Ok(Self { near, far })
    }

    pub fn contains(&self, depth: f64) -> bool {
        depth >= self.near && depth < self.far
    }
}

/// Frustum test: camera-frame depth within the depth range and projection inside
/// the image. Occlusion is not considered.
pub fn is_visible(cam: &Camera, point: &Vector3<f64>, range: DepthRange) -> bool {
    let pc = cam.world_to_camera(point);
    let depth = -pc.z;
    if !range.contains(depth) || depth <= 0.0 {
        return false;
    }
    let x = cam.cx + cam.focal * pc.x / depth;
    let y = cam.cy - cam.focal * pc.y / depth;
    (0.0..cam.width as f64).contains(&x) && (0.0..cam.height as f64).contains(&y)
}

/// Uniform lattice standing in for the unknown scene geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxyGrid {
    p_min: Vector3<f64>,
    p_max: Vector3<f64>,
    resolution: usize,
    points: Vec<Vector3<f64>>,
}

pub const DEFAULT_GRID_RESOLUTION: usize = 16;

/// Inclusive lattice of `resolution³` points ordered with x slowest and z fastest.
pub fn make_grid(p_min: Vector3<f64>, p_max: Vector3<f64>, resolution: usize) -> Result<ProxyGrid> {
    if resolution < 2 {
        return Err(Error::invalid(format!("grid resolution must be at least 2, got {resolution}")));
    }
    if (0..3).any(|a| !(p_min[a] < p_max[a]) || !p_min[a].is_finite() || !p_max[a].is_finite()) {
        return Err(Error::invalid(format!(
            "degenerate grid bounds {:?} .. {:?}",
            p_min.as_slice(),
            p_max.as_slice()
        )));
    }
    let steps = (p_max - p_min) / (resolution - 1) as f64;
    let coord = |axis: usize, i: usize| {
        if i == resolution - 1 {
            p_max[axis]
        } else {
            p_min[axis] + steps[axis] * i as f64
        }
    };
    let mut points = Vec::with_capacity(resolution.pow(3));
    for i in 0..resolution {
        for j in 0..resolution {
            for k in 0..resolution {
                points.push(Vector3::new(coord(0, i), coord(1, j), coord(2, k)));
            }
        }
    }
    Ok(ProxyGrid { p_min, p_max, resolution, points })
}

impl ProxyGrid {
    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn bounds(&self) -> (Vector3<f64>, Vector3<f64>) {
        (self.p_min, self.p_max)
    }
}

/// Binary camera × point incidence; `get(i, j)` is 1 when point `j` is seen by camera `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VisibilityMatrix {
    n_cameras: usize,
    n_points: usize,
    entries: Vec<bool>,
}

impl VisibilityMatrix {
    /// Builds a matrix from row-major entries (`rows[i][j]`).
    pub fn from_rows(rows: &[Vec<bool>]) -> Result<Self> {
        let n_points = rows.first().map_or(0, Vec::len);
        if rows.is_empty() || n_points == 0 {
            return Err(Error::invalid("visibility matrix needs at least one camera and one point"));
        }
        if rows.iter().any(|r| r.len() != n_points) {
            return Err(Error::invalid("visibility rows have different lengths"));
        }
        Ok(Self { n_cameras: rows.len(), n_points, entries: rows.concat() })
    }

    pub fn n_cameras(&self) -> usize {
        self.n_cameras
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn get(&self, camera: usize, point: usize) -> bool {
        self.entries[camera * self.n_points + point]
    }

    pub fn row(&self, camera: usize) -> &[bool] {
        &self.entries[camera * self.n_points..(camera + 1) * self.n_points]
    }

    /// Cameras that see `point` (the visibility vector `A_j`).
    pub fn column(&self, point: usize) -> impl Iterator<Item = bool> + '_ {
        (0..self.n_cameras).map(move |i| self.get(i, point))
    }
}

pub fn visibility_matrix(cams: &[Camera], grid: &ProxyGrid, range: DepthRange) -> Result<VisibilityMatrix> {
    if cams.is_empty() {
        return Err(Error::invalid("visibility matrix needs at least one camera"));
    }
    if grid.is_empty() {
        return Err(Error::invalid("visibility matrix needs at least one grid point"));
    }
    let entries: Vec<bool> = cams
        .par_iter()
        .flat_map_iter(|cam| grid.points().iter().map(move |p| is_visible(cam, p, range)))
        .collect();
    Ok(VisibilityMatrix { n_cameras: cams.len(), n_points: grid.len(), entries })
}

/// Homogeneous transform of a point, kept for callers working in 4×4 form.
pub fn transform_point(m: &Matrix4<f64>, p: &Vector3<f64>) -> Vector3<f64> {
    m.transform_point(&Point3::from(*p)).coords
}
