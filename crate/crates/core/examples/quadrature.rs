//! Rendering error against the closed form for a homogeneous medium, as the
//! number of samples per ray doubles.
//!
//! cargo run --release --example quadrature

use keynerf::field::FieldOutput;
use keynerf::geometry::Ray;
use keynerf::render::{render_ray, RadianceField, RenderConfig};
use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

struct Fog {
    sigma: f64,
    color: [f64; 3],
}

impl RadianceField for Fog {
    type Scalar = f64;
    fn query(&self, xs: &[[f64; 3]], _: &[[f64; 3]]) -> keynerf::Result<Vec<FieldOutput<f64>>> {
        Ok(vec![FieldOutput { sigma: self.sigma, rgb: self.color }; xs.len()])
    }
}

fn main() -> keynerf::Result<()> {
    let fog = Fog { sigma: 0.5, color: [0.8, 0.4, 0.2] };
    let bg = [1.0; 3];
    let ray = Ray::new(Vector3::zeros(), Vector3::new(0.0, 0.0, -1.0), 2.0, 6.0)?;
    let alpha = 1.0 - (-fog.sigma * 4.0f64).exp();
    let exact = alpha * fog.color[0] + (1.0 - alpha) * bg[0];
    println!("closed form red channel {exact:.6}");
    let mut last = None;
    for n in [8, 16, 32, 64, 128, 256, 512] {
        let cfg = RenderConfig { n_samples: n, stratified: false, background: bg, ..Default::default() };
        let r = render_ray(&fog, &ray, &cfg, &mut ChaCha8Rng::seed_from_u64(0))?;
        let err = (r.rgb[0] - exact).abs();
        let ratio = last.map(|l: f64| format!("  ratio {:.3}", err / l)).unwrap_or_default();
        println!("n = {n:>3}  red {:.6}  error {err:.2e}{ratio}", r.rgb[0]);
        last = Some(err);
    }
    Ok(())
}
