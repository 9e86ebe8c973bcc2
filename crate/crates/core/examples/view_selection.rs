//! Minimal coverage set and baseline-diversity ranking on the synthetic rig.
//!
//! cargo run --release --example view_selection -- [views] [grid_res]

use std::time::Instant;

use keynerf::geometry::DepthRange;
use keynerf::io::{synthetic_cameras, SceneOptions, SynthSpec};
use keynerf::selection::{CoverageSolver, ViewPlan};

fn main() -> keynerf::Result<()> {
    let mut args = std::env::args().skip(1);
    let views = args.next().and_then(|s| s.parse().ok()).unwrap_or(100);
    let res = args.next().and_then(|s| s.parse().ok()).unwrap_or(16);

    let (cams, _) = synthetic_cameras(&SynthSpec { views, ..Default::default() })?;
    let opts = SceneOptions::default();
    let grid = keynerf::geometry::make_grid(opts.bounds_min.into(), opts.bounds_max.into(), res)?;
    let range = DepthRange::new(opts.t_near, opts.t_far)?;

    let start = Instant::now();
    let plan = ViewPlan::compute(&cams, &grid, range, CoverageSolver::default())?;
    println!("{} cameras, {} grid points, solved in {:.2?}", cams.len(), grid.len(), start.elapsed());
    println!("K_min = {} (optimal: {})", plan.k_min(), plan.coverage.optimal);
    println!("coverage set: {:?}", plan.coverage.selected);
    for k in [plan.k_min(), 8, 16, 48] {
        if k <= cams.len() && k >= plan.k_min() {
            println!("K = {k:>2}: {:?}", plan.take(k)?);
        }
    }
    Ok(())
}
