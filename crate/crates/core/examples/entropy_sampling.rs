//! Local entropy map of one synthetic view and where the ray sampler puts its draws.
//!
//! cargo run --release --example entropy_sampling -- [view] [out.pfm]

use std::path::PathBuf;

use keynerf::entropy::{local_entropy_map, rgb_to_gray, to_distribution, RaySampler, DEFAULT_BINS, DEFAULT_WINDOW};
use keynerf::io::{generate_synthetic_scene, write_entropy_map, SynthSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> keynerf::Result<()> {
    let mut args = std::env::args().skip(1);
    let view: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let out = args.next().map(PathBuf::from);

    let (scene, _) = generate_synthetic_scene(&SynthSpec { views: 8, holdout: 0, ..Default::default() }, None)?;
    let img = &scene.images[view.min(scene.len() - 1)];
    let map = local_entropy_map(&rgb_to_gray(img), DEFAULT_WINDOW, DEFAULT_BINS)?;
    let flat = map.values.iter().filter(|&&e| e == 0.0).count();
    println!("{}x{} view, max entropy {:.3} bits, {flat} pixels with zero entropy", map.width, map.height, map.max());

    let sampler = RaySampler::new(&to_distribution(&map, 0.0))?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let draws = sampler.sample(4096, &mut rng)?;
    let on_flat = draws.iter().filter(|&&p| map.values[p] == 0.0).count();
    // only the uniform half can land on zero-entropy pixels
    println!("{on_flat} of {} draws on zero-entropy pixels (uniform share alone would give {:.0})", draws.len(), 4096.0 * flat as f64 / map.values.len() as f64);

    // coarse text preview, one character per 4x4 block
    let ramp = b" .:-=+*#%@";
    for by in (0..map.height).step_by(4) {
        let row: String = (0..map.width)
            .step_by(4)
            .map(|bx| {
                let e = map.get(bx, by) / map.max().max(1e-12);
                ramp[((e * (ramp.len() - 1) as f64).round() as usize).min(ramp.len() - 1)] as char
            })
            .collect();
        println!("  {row}");
    }
    if let Some(path) = out {
        write_entropy_map(&path, &map)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
