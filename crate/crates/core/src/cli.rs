//! Command line front end. Every subcommand reads and writes the file formats
//! of [`crate::io`]; errors map to exit codes through [`Error::exit_code`].

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::entropy::{local_entropy_map, rgb_to_gray, DEFAULT_BINS, DEFAULT_WINDOW};
use crate::error::{Error, Result};
use crate::geometry::DEFAULT_GRID_RESOLUTION;
use crate::io::{
    generate_synthetic_scene, load_scene, read_checkpoint, write_checkpoint, write_entropy_map, write_json, write_metrics_csv,
    write_png, write_schedule, ScheduleFile, SynthSpec,
};
use crate::metrics::EvalReport;
use crate::render::{render_image, RenderConfig};
use crate::selection::{CoverageSolver, ViewPlan};
use crate::train::{TrainConfig, Trainer};

#[derive(Debug, Parser)]
#[command(name = "keynerf", version, about = "Informative view and ray selection for few-shot radiance fields")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render the synthetic sphere-and-disc scene into a Blender-layout directory.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u32).range(1..))]
        views: u32,
        #[arg(long, default_value_t = 64, value_parser = clap::value_parser!(u32).range(1..))]
        size: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Held-out views written as the `test` split.
        #[arg(long, default_value_t = 8)]
        holdout: u32,
    },
    /// Minimal coverage set plus baseline-diversity ranking; writes the schedule as JSON.
    SelectViews {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, default_value = "train")]
        split: String,
        #[arg(long)]
        k: usize,
        #[arg(long, default_value_t = DEFAULT_GRID_RESOLUTION)]
        grid_res: usize,
        #[arg(long, default_value_t = CoverageSolver::default().exact_threshold)]
        exact_threshold: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Local entropy map of one view as PFM, with a PGM preview beside it.
    Entropy {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, default_value = "train")]
        split: String,
        #[arg(long)]
        view: usize,
        #[arg(long, default_value_t = DEFAULT_WINDOW)]
        window: usize,
        #[arg(long, default_value_t = DEFAULT_BINS)]
        bins: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a field as described by a JSON run configuration.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Render one camera of a scene with a trained checkpoint.
    Render {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        #[arg(long)]
        pose: usize,
        #[arg(long, default_value_t = RenderConfig::default().n_samples)]
        samples: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// PSNR and SSIM of a checkpoint on held-out views; Avg. needs an external LPIPS value.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        /// Comma-separated view indices; all views of the split when omitted.
        #[arg(long, value_delimiter = ',')]
        views: Option<Vec<usize>>,
        #[arg(long)]
        lpips: Option<f64>,
        #[arg(long, default_value_t = RenderConfig::default().n_samples)]
        samples: usize,
        /// Report JSON; a `.csv` file with the same stem is written beside it.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Contents of the file passed to `train --config`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Scene directory in Blender layout.
    pub scene: PathBuf,
    #[serde(default = "default_train_split")]
    pub split: String,
    /// Split used for held-out PSNR; skipped when absent from the scene.
    #[serde(default)]
    pub eval_split: Option<String>,
    /// Receives `checkpoint.bin`, `metrics.csv` and `views.json`.
    pub out_dir: PathBuf,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub render: RenderConfig,
}

fn default_train_split() -> String {
    "train".into()
}

pub const CHECKPOINT_NAME: &str = "checkpoint.bin";
pub const METRICS_NAME: &str = "metrics.csv";
pub const VIEWS_NAME: &str = "views.json";

/// Relative paths in the config are taken relative to the config file.
fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

pub fn run_train(config_path: &Path) -> Result<()> {
    let mut cfg: RunConfig = crate::io::read_json(config_path)?;
    let base = config_path.parent().unwrap_or(Path::new("."));
    cfg.scene = resolve(base, &cfg.scene);
    cfg.out_dir = resolve(base, &cfg.out_dir);
    let scene = load_scene(&cfg.scene, &cfg.split)?;
    let eval = match &cfg.eval_split {
        Some(split) => Some(load_scene(&cfg.scene, split)?),
        None => None,
    };
    let mut trainer = Trainer::new(&scene, cfg.train, cfg.render)?;
    eprintln!("training on views {:?}", trainer.views());
    write_json(&cfg.out_dir.join(VIEWS_NAME), &trainer.views())?;
    let rows = trainer.run(eval.as_ref(), |row| {
        let psnr = row.psnr.map(|p| format!(" psnr {p:.3}")).unwrap_or_default();
        eprintln!("iter {} loss {:.6}{psnr}", row.iteration, row.loss);
    })?;
    write_checkpoint(&cfg.out_dir.join(CHECKPOINT_NAME), &trainer.state.params)?;
    write_metrics_csv(&cfg.out_dir.join(METRICS_NAME), &rows)
}

fn scene_render_config(scene: &crate::io::SceneBundle, samples: usize) -> RenderConfig {
    RenderConfig {
        n_samples: samples,
        stratified: false,
        background: scene.options.background,
        t_near: scene.options.t_near,
        t_far: scene.options.t_far,
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { out, views, size, seed, holdout } => {
            let spec = SynthSpec { views: views as usize, size: size as usize, seed, holdout: holdout as usize, ..Default::default() };
            generate_synthetic_scene(&spec, Some(&out))?;
            println!("wrote {views} views of {size}x{size} to {}", out.display());
        }
        Command::SelectViews { scene, split, k, grid_res, exact_threshold, out } => {
            let scene = load_scene(&scene, &split)?;
            let grid = scene.grid(grid_res)?;
            let plan = ViewPlan::compute(&scene.cameras, &grid, scene.depth_range(), CoverageSolver { exact_threshold })?;
            println!("K_min = {}", plan.k_min());
            let file = ScheduleFile::from_plan(&plan, k)?;
            write_schedule(&out, &file)?;
            println!("selected {:?}", file.selected);
        }
        Command::Entropy { scene, split, view, window, bins, out } => {
            let scene = load_scene(&scene, &split)?;
            let img = scene.images.get(view).ok_or_else(|| Error::invalid(format!("view {view} out of range for {} views", scene.len())))?;
            let map = local_entropy_map(&rgb_to_gray(img), window, bins)?;
            write_entropy_map(&out, &map)?;
            println!("max entropy {:.4} bits", map.max());
        }
        Command::Train { config } => run_train(&config)?,
        Command::Render { ckpt, scene, split, pose, samples, out } => {
            let params = read_checkpoint(&ckpt)?;
            let scene = load_scene(&scene, &split)?;
            let cam = scene.cameras.get(pose).ok_or_else(|| Error::invalid(format!("pose {pose} out of range for {} views", scene.len())))?;
            write_png(&out, &render_image(&params, cam, &scene_render_config(&scene, samples))?)?;
        }
        Command::Eval { ckpt, scene, split, views, lpips, samples, out } => {
            let params = read_checkpoint(&ckpt)?;
            let scene = load_scene(&scene, &split)?;
            let views = views.unwrap_or_else(|| (0..scene.len()).collect());
            let subset = scene.subset(&views)?;
            let render = scene_render_config(&scene, samples);
            let pairs = subset
                .cameras
                .iter()
                .zip(&subset.images)
                .map(|(cam, img)| Ok((render_image(&params, cam, &render)?, img.clone())))
                .collect::<Result<Vec<_>>>()?;
            let report = EvalReport::from_views(&pairs, lpips)?;
            let json = serde_json::to_string_pretty(&report).expect("report serializes");
            println!("{json}");
            if let Some(path) = out {
                write_json(&path, &report)?;
                let csv = format!("{}\n{}\n", EvalReport::CSV_HEADER, report.csv_row());
                crate::io::write_bytes(&path.with_extension("csv"), csv.as_bytes())?;
            }
        }
    }
    Ok(())
}

/// Parses the process arguments, runs the command and returns the exit code.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
