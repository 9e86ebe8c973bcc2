//! Trains a small field on the synthetic scene and reports held-out PSNR.
//!
//! cargo run --release --example train_synthetic -- [k] [n_iter] [keynerf|random] [entropy on|off]

use std::time::Instant;

use keynerf::field::FieldConfig;
use keynerf::io::{generate_synthetic_scene, SynthSpec};
use keynerf::render::RenderConfig;
use keynerf::train::{SelectionMethod, TrainConfig, Trainer};

fn main() -> keynerf::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let k = args.first().and_then(|s| s.parse().ok()).unwrap_or(8);
    let n_iter = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(500);
    let selection = match args.get(2).map(String::as_str) {
        Some("random") => SelectionMethod::Random,
        _ => SelectionMethod::Keynerf,
    };
    let entropy = args.get(3).map(String::as_str) != Some("off");

    let (scene, holdout) = generate_synthetic_scene(&SynthSpec::default(), None)?;
    let cfg = TrainConfig {
        k,
        n_iter,
        selection,
        entropy,
        lr: 5e-3,
        eval_every: 250,
        // small enough for a laptop CPU; the library defaults are the full-size field
        field: FieldConfig { l_pos: 6, l_dir: 2, trunk_depth: 2, trunk_width: 32, head_width: 16 },
        ..Default::default()
    };
    let render = RenderConfig { n_samples: 32, ..Default::default() };

    let mut trainer = Trainer::new(&scene, cfg, render)?;
    println!("training on views {:?}", trainer.views());
    let start = Instant::now();
    trainer.run(Some(&holdout), |row| {
        let psnr = row.psnr.map(|p| format!("  held-out PSNR {p:.2} dB")).unwrap_or_default();
        println!("iter {:>5}  loss {:.5}{psnr}  ({:.1?})", row.iteration, row.loss, start.elapsed());
    })?;
    println!("{:.1} ms per iteration", start.elapsed().as_secs_f64() * 1e3 / n_iter.max(1) as f64);
    Ok(())
}
