//! Volume rendering by alpha compositing along each ray.
//!
//! With samples `t_k`, spacings `δ_k = t_{k+1} − t_k` (the last one closed at
//! `t_far`), `α_k = 1 − exp(−σ_k δ_k)` and `T_k = Π_{j<k} (1 − α_j)`:
//!
//! ```text
//! rgb   = Σ T_k α_k c_k + (1 − Σ T_k α_k) · background
//! depth = Σ T_k α_k t_k / max(Σ T_k α_k, ε)
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{self, FieldOutput, FieldParams, FieldTape};
use crate::geometry::{camera_ray, Camera, Ray};
use crate::image::RgbImage;
use crate::real::Real;

const DEPTH_EPS: f64 = 1e-8;

/// Rays handled together in one field evaluation. Fixed so that results do
/// not depend on the thread count.
pub const RAY_CHUNK: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderConfig {
    pub n_samples: usize,
    pub stratified: bool,
    pub background: [f64; 3],
    pub t_near: f64,
    pub t_far: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self { n_samples: 64, stratified: true, background: [1.0; 3], t_near: 2.0, t_far: 6.0 }
    }
}

impl RenderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples < 2 {
            return Err(Error::invalid(format!("need at least 2 samples per ray, got {}", self.n_samples)));
        }
        if self.background.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::invalid(format!("background {:?} outside [0, 1]", self.background)));
        }
        if !(0.0 <= self.t_near && self.t_near < self.t_far && self.t_far.is_finite()) {
            return Err(Error::invalid(format!("invalid bounds [{}, {}]", self.t_near, self.t_far)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderResult {
    pub rgb: [f64; 3],
    /// Accumulated opacity `Σ T_k α_k`.
    pub opacity: f64,
    pub depth: f64,
}

/// Anything that can be queried for density and color in batches.
pub trait RadianceField: Sync {
    type Scalar: Real;

    fn query(&self, xs: &[[f64; 3]], ds: &[[f64; 3]]) -> Result<Vec<FieldOutput<Self::Scalar>>>;
}

impl<T: Real> RadianceField for FieldParams<T> {
    type Scalar = T;

    fn query(&self, xs: &[[f64; 3]], ds: &[[f64; 3]]) -> Result<Vec<FieldOutput<T>>> {
        Ok(field::forward(self, xs, ds)?.0)
    }
}

/// `n` depths in `[t_near, t_far]`: bin midpoints, or one uniform draw per bin.
pub fn sample_along_ray<R: Rng + ?Sized>(ray: &Ray, n: usize, stratified: bool, rng: &mut R) -> Vec<f64> {
    let n = n.max(2);
    let step = (ray.t_far - ray.t_near) / n as f64;
    (0..n)
        .map(|i| {
            let u = if stratified { rng.random::<f64>() } else { 0.5 };
            ray.t_near + (i as f64 + u) * step
        })
        .collect()
}

/// Per-ray compositing state kept for the reverse pass.
#[derive(Debug, Clone)]
struct Composite {
    delta: Vec<f64>,
    /// Transmittance before each sample, plus the final one.
    trans: Vec<f64>,
    weights: Vec<f64>,
    colors: Vec<[f64; 3]>,
}

fn composite<T: Real>(
    ray_id: usize,
    ts: &[f64],
    t_far: f64,
    out: &[FieldOutput<T>],
    background: [f64; 3],
) -> Result<(RenderResult, Composite)> {
    let n = ts.len();
    let mut delta = Vec::with_capacity(n);
    let mut trans = Vec::with_capacity(n + 1);
    let mut weights = Vec::with_capacity(n);
    let mut colors = Vec::with_capacity(n);
    let mut t_acc = 1.0;
    let (mut rgb, mut opacity, mut depth) = ([0.0; 3], 0.0, 0.0);
    for k in 0..n {
        let sigma = out[k].sigma.f64();
        let c = out[k].rgb.map(Real::f64);
        if !sigma.is_finite() || c.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { ray: ray_id, what: format!("field output at sample {k}") });
        }
        let d = if k + 1 < n { ts[k + 1] - ts[k] } else { t_far - ts[k] };
        let survive = (-sigma * d).exp();
        let w = t_acc * (1.0 - survive);
        for i in 0..3 {
            rgb[i] += w * c[i];
        }
        opacity += w;
        depth += w * ts[k];
        trans.push(t_acc);
        t_acc *= survive;
        delta.push(d);
        weights.push(w);
        colors.push(c);
    }
    trans.push(t_acc);
    for i in 0..3 {
        rgb[i] += (1.0 - opacity) * background[i];
    }
    let result = RenderResult { rgb, opacity, depth: depth / opacity.max(DEPTH_EPS) };
    Ok((result, Composite { delta, trans, weights, colors }))
}

impl Composite {
    /// `∂L/∂σ_k` and `∂L/∂c_k` from `∂L/∂rgb`.
    fn backward(&self, g: [f64; 3], background: [f64; 3]) -> (Vec<f64>, Vec<[f64; 3]>) {
        let n = self.weights.len();
        let mut d_sigma = vec![0.0; n];
        let mut d_color = vec![[0.0; 3]; n];
        // Σ_{j>k} w_j (c_j − bg), built back to front
        let mut suffix = [0.0; 3];
        for k in (0..n).rev() {
            let a = [0, 1, 2].map(|i| self.colors[k][i] - background[i]);
            let mut s = 0.0;
            for i in 0..3 {
                s += g[i] * (self.trans[k + 1] * a[i] - suffix[i]);
            }
            d_sigma[k] = self.delta[k] * s;
            d_color[k] = g.map(|gi| gi * self.weights[k]);
            for i in 0..3 {
                suffix[i] += self.weights[k] * a[i];
            }
        }
        (d_sigma, d_color)
    }
}

fn ray_rng(seed: u64, ray_id: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(ray_id as u64);
    rng
}

fn sample_points(ray: &Ray, ts: &[f64], xs: &mut Vec<[f64; 3]>, ds: &mut Vec<[f64; 3]>) {
    let d = [ray.direction.x, ray.direction.y, ray.direction.z];
    for &t in ts {
        let p = ray.at(t);
        xs.push([p.x, p.y, p.z]);
        ds.push(d);
    }
}

/// Renders one ray. `rng` is only used when `cfg.stratified` is set.
pub fn render_ray<F: RadianceField + ?Sized, R: Rng + ?Sized>(
    field: &F,
    ray: &Ray,
    cfg: &RenderConfig,
    rng: &mut R,
) -> Result<RenderResult> {
    render_ray_with_id(field, ray, cfg, rng, 0)
}

fn render_ray_with_id<F: RadianceField + ?Sized, R: Rng + ?Sized>(
    field: &F,
    ray: &Ray,
    cfg: &RenderConfig,
    rng: &mut R,
    ray_id: usize,
) -> Result<RenderResult> {
    let ts = sample_along_ray(ray, cfg.n_samples, cfg.stratified, rng);
    let (mut xs, mut ds) = (Vec::with_capacity(ts.len()), Vec::with_capacity(ts.len()));
    sample_points(ray, &ts, &mut xs, &mut ds);
    let out = field.query(&xs, &ds)?;
    Ok(composite(ray_id, &ts, ray.t_far, &out, cfg.background)?.0)
}

/// Renders every ray with per-ray sample streams derived from `(seed, ray index)`,
/// so the result is the same for any thread count.
pub fn render_rays<F: RadianceField + ?Sized>(field: &F, rays: &[Ray], cfg: &RenderConfig, seed: u64) -> Result<Vec<RenderResult>> {
    cfg.validate()?;
    let chunks: Vec<Result<Vec<RenderResult>>> = rays
        .par_chunks(RAY_CHUNK)
        .enumerate()
        .map(|(c, chunk)| {
            let base = c * RAY_CHUNK;
            let mut all_ts = Vec::with_capacity(chunk.len());
            let (mut xs, mut ds) = (Vec::new(), Vec::new());
            for (i, ray) in chunk.iter().enumerate() {
                let ts = sample_along_ray(ray, cfg.n_samples, cfg.stratified, &mut ray_rng(seed, base + i));
                sample_points(ray, &ts, &mut xs, &mut ds);
                all_ts.push(ts);
            }
            let out = field.query(&xs, &ds)?;
            let mut results = Vec::with_capacity(chunk.len());
            let mut offset = 0;
            for (i, (ray, ts)) in chunk.iter().zip(&all_ts).enumerate() {
                let o = &out[offset..offset + ts.len()];
                results.push(composite(base + i, ts, ray.t_far, o, cfg.background)?.0);
                offset += ts.len();
            }
            Ok(results)
        })
        .collect();
    let mut flat = Vec::with_capacity(rays.len());
    for c in chunks {
        flat.extend(c?);
    }
    Ok(flat)
}

/// Full frame with deterministic midpoint sampling; rays span `[cfg.t_near, cfg.t_far]`.
pub fn render_image<F: RadianceField + ?Sized>(field: &F, cam: &Camera, cfg: &RenderConfig) -> Result<RgbImage> {
    let cfg = RenderConfig { stratified: false, ..*cfg };
    cfg.validate()?;
    let (w, h) = (cam.width(), cam.height());
    let mut rays = Vec::with_capacity(w * h);
    for v in 0..h {
        for u in 0..w {
            rays.push(camera_ray(cam, u as f64, v as f64, cfg.t_near, cfg.t_far)?);
        }
    }
    let results = render_rays(field, &rays, &cfg, 0).map_err(|e| match e {
        Error::NonFinite { ray, .. } => Error::Pixel { u: ray % w, v: ray / w, source: Box::new(e) },
        other => other,
    })?;
    RgbImage::new(w, h, results.into_iter().map(|r| r.rgb).collect())
}

struct ChunkTape<T> {
    field: FieldTape<T>,
    composites: Vec<Composite>,
}

/// Forward state of a training batch; consumed by [`RenderTape::backward`].
pub struct RenderTape<T> {
    chunks: Vec<ChunkTape<T>>,
    background: [f64; 3],
    n_rays: usize,
}

/// Renders a batch of rays and keeps everything needed for gradients.
pub fn render_batch<T: Real>(
    params: &FieldParams<T>,
    rays: &[Ray],
    cfg: &RenderConfig,
    seed: u64,
) -> Result<(Vec<RenderResult>, RenderTape<T>)> {
    cfg.validate()?;
    let chunks: Vec<Result<(Vec<RenderResult>, ChunkTape<T>)>> = rays
        .par_chunks(RAY_CHUNK)
        .enumerate()
        .map(|(c, chunk)| {
            let base = c * RAY_CHUNK;
            let mut all_ts = Vec::with_capacity(chunk.len());
            let (mut xs, mut ds) = (Vec::new(), Vec::new());
            for (i, ray) in chunk.iter().enumerate() {
                let ts = sample_along_ray(ray, cfg.n_samples, cfg.stratified, &mut ray_rng(seed, base + i));
                sample_points(ray, &ts, &mut xs, &mut ds);
                all_ts.push(ts);
            }
            let (out, tape) = field::forward(params, &xs, &ds)?;
            let mut results = Vec::with_capacity(chunk.len());
            let mut composites = Vec::with_capacity(chunk.len());
            let mut offset = 0;
            for (i, (ray, ts)) in chunk.iter().zip(&all_ts).enumerate() {
                let (r, comp) = composite(base + i, ts, ray.t_far, &out[offset..offset + ts.len()], cfg.background)?;
                results.push(r);
                composites.push(comp);
                offset += ts.len();
            }
            Ok((results, ChunkTape { field: tape, composites }))
        })
        .collect();
    let mut results = Vec::with_capacity(rays.len());
    let mut tapes = Vec::with_capacity(chunks.len());
    for c in chunks {
        let (r, t) = c?;
        results.extend(r);
        tapes.push(t);
    }
    Ok((results, RenderTape { chunks: tapes, background: cfg.background, n_rays: rays.len() }))
}

impl<T: Real> RenderTape<T> {
    /// Parameter gradient given `∂L/∂rgb` for every ray of the batch. Chunk
    /// gradients are summed in chunk order.
    pub fn backward(&self, params: &FieldParams<T>, d_rgb: &[[f64; 3]]) -> Result<FieldParams<T>> {
        if d_rgb.len() != self.n_rays {
            return Err(Error::invalid(format!("{} ray gradients for a batch of {}", d_rgb.len(), self.n_rays)));
        }
        let partial: Vec<Result<FieldParams<T>>> = self
            .chunks
            .par_iter()
            .zip(d_rgb.par_chunks(RAY_CHUNK))
            .map(|(chunk, g)| {
                let mut d_sigma = Vec::with_capacity(chunk.field.len());
                let mut d_color = Vec::with_capacity(chunk.field.len());
                for (comp, gi) in chunk.composites.iter().zip(g) {
                    let (ds, dc) = comp.backward(*gi, self.background);
                    d_sigma.extend(ds.into_iter().map(T::of));
                    d_color.extend(dc.into_iter().map(|c| c.map(T::of)));
                }
                let mut grads = params.zeros_like();
                field::backward(params, &chunk.field, &d_sigma, &d_color, &mut grads)?;
                Ok(grads)
            })
            .collect();
        let mut total = params.zeros_like();
        for p in partial {
            total.add_assign(&p?);
        }
        Ok(total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::FieldConfig;
    use nalgebra::{Matrix4, Vector3};

    struct Homogeneous {
        sigma: f64,
        color: [f64; 3],
    }

    impl RadianceField for Homogeneous {
        type Scalar = f64;
        fn query(&self, xs: &[[f64; 3]], _: &[[f64; 3]]) -> Result<Vec<FieldOutput<f64>>> {
            Ok(vec![FieldOutput { sigma: self.sigma, rgb: self.color }; xs.len()])
        }
    }

    /// Opaque first sample, empty afterwards.
    struct Wall;

    impl RadianceField for Wall {
        type Scalar = f64;
        fn query(&self, xs: &[[f64; 3]], _: &[[f64; 3]]) -> Result<Vec<FieldOutput<f64>>> {
            Ok(xs
                .iter()
                .enumerate()
                .map(|(i, _)| {
                    if i == 0 {
                        FieldOutput { sigma: 1e4, rgb: [0.2, 0.4, 0.6] }
                    } else {
                        FieldOutput { sigma: 0.0, rgb: [1.0; 3] }
                    }
                })
                .collect())
        }
    }

    fn z_ray(t_near: f64, t_far: f64) -> Ray {
        Ray::new(Vector3::zeros(), Vector3::new(0.0, 0.0, -1.0), t_near, t_far).unwrap()
    }

    fn cfg(n: usize, bg: [f64; 3]) -> RenderConfig {
        RenderConfig { n_samples: n, stratified: false, background: bg, t_near: 2.0, t_far: 6.0 }
    }

    #[test]
    fn midpoints_for_two_samples() {
        let r = z_ray(0.0, 1.0);
        let ts = sample_along_ray(&r, 2, false, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(ts, vec![0.25, 0.75]);
    }

    #[test]
    fn stratified_samples_stay_in_bins() {
        let r = z_ray(2.0, 6.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let ts = sample_along_ray(&r, 16, true, &mut rng);
            for (i, t) in ts.iter().enumerate() {
                let lo = 2.0 + i as f64 * 0.25;
                assert!(*t >= lo && *t < lo + 0.25);
            }
            assert!(ts.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn mean_spacing() {
        let r = z_ray(1.0, 3.0);
        let ts = sample_along_ray(&r, 1000, true, &mut ChaCha8Rng::seed_from_u64(2));
        let mean = (ts[999] - ts[0]) / 999.0;
        assert!((mean - 2.0 / 1000.0).abs() < 1e-5);
    }

    #[test]
    fn empty_space_shows_background() {
        let f = Homogeneous { sigma: 0.0, color: [1.0, 0.0, 0.0] };
        let r = render_ray(&f, &z_ray(2.0, 6.0), &cfg(32, [0.1, 0.2, 0.3]), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(r.rgb, [0.1, 0.2, 0.3]);
        assert_eq!(r.opacity, 0.0);
        assert_eq!(r.depth, 0.0);
    }

    #[test]
    fn homogeneous_medium_matches_closed_form() {
        let c = [0.8, 0.5, 0.2];
        let f = Homogeneous { sigma: std::f64::consts::LN_2 / 4.0, color: c };
        let r = render_ray(&f, &z_ray(2.0, 6.0), &cfg(256, [0.0; 3]), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        for i in 0..3 {
            assert!((r.rgb[i] - c[i] / 2.0).abs() < 1e-3);
        }
        assert!((r.opacity - 0.5).abs() < 1e-3);
    }

    #[test]
    fn quadrature_error_halves_per_doubling() {
        let c = [0.8, 0.5, 0.2];
        let sigma = std::f64::consts::LN_2 / 4.0;
        let f = Homogeneous { sigma, color: c };
        let exact = c[0] * (1.0 - (-sigma * 4.0).exp());
        let errs: Vec<f64> = [16, 32, 64, 128, 256, 512]
            .iter()
            .map(|&n| {
                let r = render_ray(&f, &z_ray(2.0, 6.0), &cfg(n, [0.0; 3]), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
                (r.rgb[0] - exact).abs()
            })
            .collect();
        for w in errs.windows(2) {
            let ratio = w[1] / w[0];
            assert!((0.4..=0.6).contains(&ratio), "ratio {ratio}");
        }
    }

    #[test]
    fn opaque_first_sample() {
        let r = render_ray(&Wall, &z_ray(2.0, 6.0), &cfg(8, [1.0; 3]), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        for (a, b) in r.rgb.iter().zip([0.2, 0.4, 0.6]) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!((r.depth - 2.25).abs() < 1e-9);
    }

    #[test]
    fn full_opacity_ignores_background() {
        let f = Homogeneous { sigma: 1e3, color: [0.3, 0.6, 0.9] };
        let a = render_ray(&f, &z_ray(2.0, 6.0), &cfg(16, [0.0; 3]), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let b = render_ray(&f, &z_ray(2.0, 6.0), &cfg(16, [1.0; 3]), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(a.opacity, 1.0);
        assert_eq!(a.rgb, b.rgb);
    }

    #[test]
    fn config_validation() {
        assert!(cfg(1, [0.0; 3]).validate().is_err());
        assert!(cfg(4, [1.5, 0.0, 0.0]).validate().is_err());
        assert!(cfg(4, [0.0; 3]).validate().is_ok());
    }

    #[test]
    fn zero_density_image_is_background() {
        let cam = Camera::new(Matrix4::identity(), 10.0, 6, 5).unwrap();
        let f = Homogeneous { sigma: 0.0, color: [1.0; 3] };
        let img = render_image(&f, &cam, &cfg(8, [0.25, 0.5, 0.75])).unwrap();
        assert!(img.pixels.iter().all(|p| *p == [0.25, 0.5, 0.75]));
    }

    #[test]
    fn image_matches_per_pixel_rays() {
        let cam = Camera::look_at(Vector3::new(0.0, -4.0, 1.0), Vector3::zeros(), Vector3::z(), 12.0, 9, 7).unwrap();
        let p = FieldParams::<f64>::init(FieldConfig { l_pos: 2, l_dir: 1, trunk_depth: 2, trunk_width: 16, head_width: 8 }, 3).unwrap();
        let c = cfg(12, [1.0; 3]);
        let img = render_image(&p, &cam, &c).unwrap();
        for v in 0..7 {
            for u in 0..9 {
                let ray = camera_ray(&cam, u as f64, v as f64, c.t_near, c.t_far).unwrap();
                let r = render_ray(&p, &ray, &c, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
                assert_eq!(img.get(u, v), r.rgb);
            }
        }
    }

    fn batch_loss(p: &FieldParams<f64>, rays: &[Ray], c: &RenderConfig, target: &[[f64; 3]]) -> f64 {
        let out = render_rays(p, rays, c, 11).unwrap();
        out.iter().zip(target).map(|(r, t)| (0..3).map(|i| (r.rgb[i] - t[i]).powi(2)).sum::<f64>()).sum()
    }

    #[test]
    fn batch_gradient_matches_finite_differences() {
        let fc = FieldConfig { l_pos: 2, l_dir: 1, trunk_depth: 2, trunk_width: 8, head_width: 6 };
        let p = FieldParams::<f64>::init(fc, 21).unwrap();
        let c = RenderConfig { n_samples: 16, stratified: true, background: [1.0; 3], t_near: 0.5, t_far: 2.5 };
        let rays: Vec<Ray> = (0..4)
            .map(|i| {
                let d = Vector3::new(0.1 * i as f64 - 0.15, 0.05 * i as f64, -1.0).normalize();
                Ray::new(Vector3::new(0.0, 0.0, 1.5), d, c.t_near, c.t_far).unwrap()
            })
            .collect();
        let target = [[0.1, 0.5, 0.9], [0.9, 0.2, 0.3], [0.4, 0.4, 0.4], [0.0, 1.0, 0.5]];
        let (out, tape) = render_batch(&p, &rays, &c, 11).unwrap();
        let g: Vec<[f64; 3]> = out.iter().zip(&target).map(|(r, t)| [0, 1, 2].map(|i| 2.0 * (r.rgb[i] - t[i]))).collect();
        let grad = tape.backward(&p, &g).unwrap();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for k in 0..p.len() {
            let (mut plus, mut minus) = (p.clone(), p.clone());
            plus.data[k] += h;
            minus.data[k] -= h;
            let fd = (batch_loss(&plus, &rays, &c, &target) - batch_loss(&minus, &rays, &c, &target)) / (2.0 * h);
            let err = (fd - grad.data[k]).abs() / fd.abs().max(grad.data[k].abs()).max(1e-6);
            worst = worst.max(err);
        }
        assert!(worst < 1e-4, "worst relative error {worst}");
    }

    #[test]
    fn compositing_weights_are_bounded() {
        let p = FieldParams::<f64>::init(FieldConfig { l_pos: 2, l_dir: 1, trunk_depth: 2, trunk_width: 16, head_width: 8 }, 8).unwrap();
        let rays: Vec<Ray> = (0..40)
            .map(|i| {
                let a = i as f64 * 0.1;
                Ray::new(Vector3::new(0.0, 0.0, 4.0), Vector3::new(a.sin() * 0.2, a.cos() * 0.2, -1.0).normalize(), 2.0, 6.0).unwrap()
            })
            .collect();
        let (_, tape) = render_batch(&p, &rays, &cfg(32, [0.0; 3]), 5).unwrap();
        for chunk in &tape.chunks {
            for comp in &chunk.composites {
                assert!(comp.weights.iter().all(|&w| w >= 0.0));
                assert!(comp.weights.iter().sum::<f64>() <= 1.0 + 1e-6);
            }
        }
    }
}
