//! Camera-level selection: exact minimal coverage followed by a greedy
//! baseline-diversity ranking of all remaining cameras.

mod coverage;
mod schedule;

pub use coverage::{min_coverage_set, CoverageSolution, CoverageSolver, MAX_EXACT_CAMERAS};
pub use schedule::{baseline_matrix, greedy_schedule, BaselineMatrix, ViewSchedule, TIE_TOLERANCE};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{visibility_matrix, Camera, DepthRange, ProxyGrid};

/// Coverage set and full ranking computed once for a camera rig; any `K ≥ K_min`
/// is then a prefix of the ranking.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewPlan {
    pub coverage: CoverageSolution,
    pub schedule: ViewSchedule,
}

impl ViewPlan {
    pub fn compute(cams: &[Camera], grid: &ProxyGrid, range: DepthRange, solver: CoverageSolver) -> Result<Self> {
        let vis = visibility_matrix(cams, grid, range)?;
        let coverage = solver.solve(&vis)?;
        let schedule = if cams.len() == 1 {
            ViewSchedule { order: coverage.selected.clone(), coverage_prefix_len: coverage.k_min() }
        } else {
            greedy_schedule(&baseline_matrix(cams)?, &coverage)?
        };
        Ok(Self { coverage, schedule })
    }

    pub fn k_min(&self) -> usize {
        self.coverage.k_min()
    }

    /// First `k` scheduled cameras.
    pub fn take(&self, k: usize) -> Result<Vec<usize>> {
        let n = self.schedule.order.len();
        if k > n {
            return Err(Error::invalid(format!("K = {k} exceeds the {n} available cameras")));
        }
        if k < self.k_min() {
            return Err(Error::BelowMinimalCoverage { k, k_min: self.k_min() });
        }
        Ok(self.schedule.prefix(k).to_vec())
    }
}

/// The first `k` cameras of the coverage-then-diversity schedule.
pub fn select_views(cams: &[Camera], grid: &ProxyGrid, range: DepthRange, k: usize) -> Result<Vec<usize>> {
    if k > cams.len() {
        return Err(Error::invalid(format!("K = {k} exceeds the {} available cameras", cams.len())));
    }
    ViewPlan::compute(cams, grid, range, CoverageSolver::default())?.take(k)
}
