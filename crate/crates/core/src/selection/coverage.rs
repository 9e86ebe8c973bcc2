//! Minimum scene coverage: the smallest camera subset such that every proxy
//! grid point is seen at least once.
//!
//! Exact solving uses branch-and-bound over 128-bit camera masks. Points with
//! identical visibility vectors are merged and points whose camera set contains
//! another point's camera set are dropped before the search, since hitting the
//! smaller set always hits the larger one.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::VisibilityMatrix;

type Mask = u128;

/// Largest camera count the exact solver can represent.
pub const MAX_EXACT_CAMERAS: usize = Mask::BITS as usize;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoverageSolution {
    /// Selected camera indices in ascending order.
    pub selected: Vec<usize>,
    /// True when `selected` is a proven minimum.
    pub optimal: bool,
}

impl CoverageSolution {
    /// `K_min`, the coverage set cardinality.
    pub fn k_min(&self) -> usize {
        self.selected.len()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CoverageSolver {
    /// Problems with at most this many cameras are solved exactly.
    pub exact_threshold: usize,
}

impl Default for CoverageSolver {
    fn default() -> Self {
        Self { exact_threshold: 64 }
    }
}

/// Solves with the default solver settings.
pub fn min_coverage_set(vis: &VisibilityMatrix) -> Result<CoverageSolution> {
    CoverageSolver::default().solve(vis)
}

impl CoverageSolver {
    pub fn solve(&self, vis: &VisibilityMatrix) -> Result<CoverageSolution> {
        let n = vis.n_cameras();
        if let Some(point) = (0..vis.n_points()).find(|&j| !vis.column(j).any(|b| b)) {
            return Err(Error::Infeasible { point });
        }
        if n <= self.exact_threshold.min(MAX_EXACT_CAMERAS) {
            let masks = reduced_point_masks(vis);
            let mut search = Search::new(&masks, n);
            search.run();
            Ok(CoverageSolution { selected: mask_indices(search.best), optimal: true })
        } else {
            Ok(CoverageSolution { selected: greedy_cover(vis), optimal: false })
        }
    }
}

fn mask_indices(mask: Mask) -> Vec<usize> {
    (0..MAX_EXACT_CAMERAS).filter(|&i| mask >> i & 1 == 1).collect()
}

/// Per-point camera masks with duplicates and dominated points removed.
fn reduced_point_masks(vis: &VisibilityMatrix) -> Vec<Mask> {
    let mut masks: Vec<Mask> = (0..vis.n_points())
        .map(|j| vis.column(j).enumerate().fold(0, |m, (i, seen)| if seen { m | 1 << i } else { m }))
        .collect();
    masks.sort_unstable_by_key(|m| (m.count_ones(), *m));
    masks.dedup();
    let mut kept: Vec<Mask> = Vec::new();
    for m in masks {
        if !kept.iter().any(|&k| k & m == k) {
            kept.push(m);
        }
    }
    kept
}

struct Search<'a> {
    points: &'a [Mask],
    best: Mask,
    best_len: u32,
}

impl<'a> Search<'a> {
    fn new(points: &'a [Mask], n_cameras: usize) -> Self {
        let best = greedy_masks(points, n_cameras);
        Self { points, best, best_len: best.count_ones() }
    }

    fn run(&mut self) {
        self.branch(0, 0);
    }

    fn branch(&mut self, chosen: Mask, excluded: Mask) {
        let depth = chosen.count_ones();
        let allowed = !excluded;
        let uncovered: Vec<Mask> = self.points.iter().copied().filter(|m| m & chosen == 0).collect();
        if uncovered.is_empty() {
            if depth < self.best_len {
                self.best = chosen;
                self.best_len = depth;
            }
            return;
        }
        if depth + packing_bound(&uncovered, allowed) >= self.best_len {
            return;
        }
        // branch on the hardest point; one of its cameras must be chosen
        let pivot = uncovered.iter().copied().min_by_key(|m| (m & allowed).count_ones()).unwrap();
        let mut candidates = mask_indices(pivot & allowed);
        if candidates.is_empty() {
            return;
        }
        let gain = |c: usize| uncovered.iter().filter(|&&m| m >> c & 1 == 1).count();
        candidates.sort_by_key(|&c| (std::cmp::Reverse(gain(c)), c));
        let mut excl = excluded;
        for c in candidates {
            self.branch(chosen | 1 << c, excl);
            excl |= 1 << c;
        }
    }
}

/// Lower bound from points whose allowed camera sets are pairwise disjoint:
/// each needs its own camera.
fn packing_bound(uncovered: &[Mask], allowed: Mask) -> u32 {
    let mut order: Vec<Mask> = uncovered.iter().map(|m| m & allowed).collect();
    order.sort_unstable_by_key(|m| (m.count_ones(), *m));
    let mut used: Mask = 0;
    let mut count = 0;
    for m in order {
        if m & used == 0 {
            used |= m;
            count += 1;
        }
    }
    count.max(1)
}

fn greedy_masks(points: &[Mask], n_cameras: usize) -> Mask {
    let mut chosen: Mask = 0;
    let mut uncovered: Vec<Mask> = points.to_vec();
    while !uncovered.is_empty() {
        let best = (0..n_cameras)
            .max_by_key(|&c| {
                let hits = uncovered.iter().filter(|&&m| m >> c & 1 == 1).count();
                (hits, std::cmp::Reverse(c))
            })
            .unwrap();
        chosen |= 1 << best;
        uncovered.retain(|m| m >> best & 1 == 0);
    }
    chosen
}

/// Classic greedy set cover (largest number of newly covered points, lowest
/// index on ties) followed by removal of cameras that became redundant.
fn greedy_cover(vis: &VisibilityMatrix) -> Vec<usize> {
    let n = vis.n_cameras();
    let m = vis.n_points();
    let mut covered = vec![false; m];
    let mut remaining = m;
    let mut chosen = Vec::new();
    while remaining > 0 {
        let (best, hits) = (0..n)
            .map(|i| (i, vis.row(i).iter().zip(&covered).filter(|(&s, &c)| s && !c).count()))
            .fold((usize::MAX, 0), |acc, (i, h)| if h > acc.1 { (i, h) } else { acc });
        debug_assert!(hits > 0);
        chosen.push(best);
        for (c, &s) in covered.iter_mut().zip(vis.row(best)) {
            if s && !*c {
                *c = true;
                remaining -= 1;
            }
        }
    }
    // drop cameras whose points are all seen by the others, latest picks first
    let mut counts = vec![0usize; m];
    for &i in &chosen {
        for (cnt, &s) in counts.iter_mut().zip(vis.row(i)) {
            *cnt += s as usize;
        }
    }
    for idx in (0..chosen.len()).rev() {
        let i = chosen[idx];
        let redundant = vis.row(i).iter().zip(&counts).all(|(&s, &cnt)| !s || cnt > 1);
        if redundant {
            for (cnt, &s) in counts.iter_mut().zip(vis.row(i)) {
                *cnt -= s as usize;
            }
            chosen.remove(idx);
        }
    }
    chosen.sort_unstable();
    chosen
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn vis(rows: &[&[usize]], n_points: usize) -> VisibilityMatrix {
        let rows: Vec<Vec<bool>> = rows
            .iter()
            .map(|seen| (0..n_points).map(|j| seen.contains(&j)).collect())
            .collect();
        VisibilityMatrix::from_rows(&rows).unwrap()
    }

    fn covers(v: &VisibilityMatrix, sel: &[usize]) -> bool {
        (0..v.n_points()).all(|j| sel.iter().any(|&i| v.get(i, j)))
    }

    fn brute_force_min(v: &VisibilityMatrix) -> usize {
        let n = v.n_cameras();
        (0u32..1 << n)
            .filter(|s| {
                let sel: Vec<usize> = (0..n).filter(|i| s >> i & 1 == 1).collect();
                covers(v, &sel)
            })
            .map(|s| s.count_ones() as usize)
            .min()
            .unwrap()
    }

    #[test]
    fn identity_visibility_needs_every_camera() {
        let v = vis(&[&[0], &[1], &[2]], 3);
        let sol = min_coverage_set(&v).unwrap();
        assert_eq!(sol.selected, vec![0, 1, 2]);
        assert_eq!(sol.k_min(), 3);
        assert!(sol.optimal);
    }

    #[test]
    fn single_camera_sees_everything() {
        let v = vis(&[&[0, 2], &[0, 1, 2, 3], &[3]], 4);
        let sol = min_coverage_set(&v).unwrap();
        assert_eq!(sol.selected, vec![1]);
    }

    #[test]
    fn beats_pure_greedy() {
        let v = vis(&[&[0, 1, 2, 3], &[0, 1, 4], &[2, 3, 5]], 6);
        assert_eq!(brute_force_min(&v), 2);
        let sol = min_coverage_set(&v).unwrap();
        assert_eq!(sol.selected, vec![1, 2]);
        // greedy on the unreduced points grabs cam0 first
        let raw = [0b011, 0b011, 0b101, 0b101, 0b010, 0b100];
        assert_eq!(greedy_masks(&raw, 3), 0b111);
    }

    #[test]
    fn uncovered_point_is_reported() {
        let v = vis(&[&[0, 1], &[1, 3]], 4);
        match min_coverage_set(&v) {
            Err(Error::Infeasible { point }) => assert_eq!(point, 2),
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn dominated_points_are_dropped() {
        let v = vis(&[&[0, 1], &[1], &[1, 2]], 3);
        let masks = reduced_point_masks(&v);
        // point 1 is seen by all three cameras and is implied by point 0
        assert_eq!(masks, vec![0b001, 0b100]);
    }

    #[test]
    fn greedy_fallback_above_threshold() {
        let v = vis(&[&[0, 1, 2, 3], &[0, 1, 4], &[2, 3, 5]], 6);
        let sol = CoverageSolver { exact_threshold: 2 }.solve(&v).unwrap();
        assert!(!sol.optimal);
        assert!(covers(&v, &sol.selected));
        // cam0 becomes redundant after cam1 and cam2 are added
        assert_eq!(sol.selected, vec![1, 2]);
    }

    #[test]
    fn random_instances_match_brute_force() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..60 {
            let n = rng.random_range(1..=12);
            let m = rng.random_range(1..=40);
            let p = rng.random_range(0.1..0.6);
            let mut rows: Vec<Vec<bool>> = (0..n).map(|_| (0..m).map(|_| rng.random_bool(p)).collect()).collect();
            for j in 0..m {
                if !rows.iter().any(|r| r[j]) {
                    let i = rng.random_range(0..n);
                    rows[i][j] = true;
                }
            }
            let v = VisibilityMatrix::from_rows(&rows).unwrap();
            let sol = min_coverage_set(&v).unwrap();
            assert!(covers(&v, &sol.selected));
            assert_eq!(sol.k_min(), brute_force_min(&v));
            let approx = CoverageSolver { exact_threshold: 0 }.solve(&v).unwrap();
            assert!(covers(&v, &approx.selected));
            assert!(approx.k_min() >= sol.k_min());
        }
    }
}
