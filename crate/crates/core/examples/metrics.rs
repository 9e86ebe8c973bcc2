//! PSNR, SSIM and the combined Avg. score on a synthetic view under noise.
//!
//! cargo run --release --example metrics

use keynerf::image::RgbImage;
use keynerf::io::{generate_synthetic_scene, SynthSpec};
use keynerf::metrics::{avg_metric, EvalReport};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> keynerf::Result<()> {
    let (scene, _) = generate_synthetic_scene(&SynthSpec { views: 4, holdout: 0, ..Default::default() }, None)?;
    let gt = &scene.images[0];
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    println!("{}", EvalReport::CSV_HEADER);
    for noise in [0.0, 0.01, 0.03, 0.1] {
        let noisy = gt.pixels.iter().map(|p| p.map(|c| (c + noise * (rng.random::<f64>() - 0.5) * 2.0).clamp(0.0, 1.0))).collect();
        let noisy = RgbImage::new(gt.width, gt.height, noisy)?;
        let report = EvalReport::from_views(&[(noisy, gt.clone())], Some(0.1))?;
        println!("{}", report.csv_row());
    }
    // combined score for two sample rows
    println!("Avg(25.653, 0.898, 0.106) = {:.4}", avg_metric(25.653, 0.898, 0.106)?);
    println!("Avg(24.424, 0.878, 0.132) = {:.4}", avg_metric(24.424, 0.878, 0.132)?);
    Ok(())
}
