//! Writes the synthetic scene to disk in Blender layout and loads it back.
//!
//! cargo run --release --example synthetic_scene -- <out_dir> [views] [size]

use std::path::PathBuf;

use keynerf::io::{generate_synthetic_scene, load_scene, SynthSpec};

fn main() -> keynerf::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("keynerf_synth"));
    let views = args.next().and_then(|s| s.parse().ok()).unwrap_or(100);
    let size = args.next().and_then(|s| s.parse().ok()).unwrap_or(64);

    let spec = SynthSpec { views, size, ..Default::default() };
    generate_synthetic_scene(&spec, Some(&out))?;
    let train = load_scene(&out, "train")?;
    let test = load_scene(&out, "test")?;
    let lit = |img: &keynerf::image::RgbImage| img.pixels.iter().filter(|p| p.iter().any(|&c| c > 0.0)).count() as f64 / img.pixels.len() as f64;
    let cover: f64 = train.images.iter().map(lit).sum::<f64>() / train.len() as f64;
    println!("{}: {} train and {} test views of {size}x{size}", out.display(), train.len(), test.len());
    println!("focal {:.2} px, depth range [{}, {}]", train.cameras[0].focal(), train.options.t_near, train.options.t_far);
    println!("object covers {:.0}% of each training image on average", 100.0 * cover);
    Ok(())
}
