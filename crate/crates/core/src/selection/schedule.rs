//! Baseline-diversity scheduling: after the coverage set, keep appending the
//! camera whose smallest optical-axis angle to every already scheduled camera
//! is largest.

use serde::{Deserialize, Serialize};

use super::coverage::CoverageSolution;
use crate::error::{Error, Result};
use crate::geometry::Camera;

/// Scores closer than this are treated as tied, so exact symmetric rigs are
/// not decided by the last bit of an `acos`.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Symmetric matrix of angles (radians) between camera optical axes.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineMatrix {
    n: usize,
    angles: Vec<f64>,
}

impl BaselineMatrix {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.angles[i * self.n + j]
    }

    /// Builds the matrix from raw axis vectors (not necessarily unit length).
    pub fn from_axes(axes: &[nalgebra::Vector3<f64>]) -> Result<Self> {
        let n = axes.len();
        if n < 2 {
            return Err(Error::invalid("baseline matrix needs at least two cameras"));
        }
        if axes.iter().any(|a| !(a.norm() > 0.0)) {
            return Err(Error::invalid("optical axis has zero length"));
        }
        let mut angles = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let cos = axes[i].dot(&axes[j]) / (axes[i].norm() * axes[j].norm());
                let b = cos.clamp(-1.0, 1.0).acos();
                angles[i * n + j] = b;
                angles[j * n + i] = b;
            }
        }
        Ok(Self { n, angles })
    }
}

pub fn baseline_matrix(cams: &[Camera]) -> Result<BaselineMatrix> {
    let axes: Vec<_> = cams.iter().map(Camera::optical_axis).collect();
    BaselineMatrix::from_axes(&axes)
}

/// Ranking of every camera; the first `coverage_prefix_len` entries are the coverage set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewSchedule {
    pub order: Vec<usize>,
    pub coverage_prefix_len: usize,
}

impl ViewSchedule {
    pub fn prefix(&self, k: usize) -> &[usize] {
        &self.order[..k.min(self.order.len())]
    }
}

pub fn greedy_schedule(b: &BaselineMatrix, initial: &CoverageSolution) -> Result<ViewSchedule> {
    if initial.selected.is_empty() {
        return Err(Error::invalid("greedy schedule needs a non-empty initial set"));
    }
    let n = b.len();
    let mut scheduled = vec![false; n];
    for &i in &initial.selected {
        if i >= n {
            return Err(Error::invalid(format!("initial camera {i} out of range for {n} cameras")));
        }
        if std::mem::replace(&mut scheduled[i], true) {
            return Err(Error::invalid(format!("initial camera {i} listed twice")));
        }
    }
    let mut order = initial.selected.clone();
    // smallest angle from each camera to the scheduled set, updated incrementally
    let mut score: Vec<f64> = (0..n)
        .map(|i| order.iter().map(|&s| b.get(i, s)).fold(f64::INFINITY, f64::min))
        .collect();
    while order.len() < n {
        let mut pick: Option<usize> = None;
        for i in (0..n).filter(|&i| !scheduled[i]) {
            match pick {
                Some(p) if score[i] <= score[p] + TIE_TOLERANCE => {}
                _ => pick = Some(i),
            }
        }
        let next = pick.expect("remaining camera");
        scheduled[next] = true;
        order.push(next);
        for (i, s) in score.iter_mut().enumerate() {
            *s = s.min(b.get(i, next));
        }
    }
    Ok(ViewSchedule { order, coverage_prefix_len: initial.selected.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::Vector3;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn axes_at(azimuths_deg: &[f64]) -> BaselineMatrix {
        let axes: Vec<Vector3<f64>> = azimuths_deg
            .iter()
            .map(|a| {
                let r = a.to_radians();
                -Vector3::new(r.cos(), r.sin(), 0.0)
            })
            .collect();
        BaselineMatrix::from_axes(&axes).unwrap()
    }

    fn cover(sel: &[usize]) -> CoverageSolution {
        CoverageSolution { selected: sel.to_vec(), optimal: true }
    }

    #[test]
    fn baseline_special_angles() {
        let b = BaselineMatrix::from_axes(&[Vector3::x(), Vector3::x() * 3.0, Vector3::y(), -Vector3::x()]).unwrap();
        assert_eq!(b.get(0, 1), 0.0);
        assert_relative_eq!(b.get(0, 2), FRAC_PI_2, epsilon = 1e-15);
        assert_relative_eq!(b.get(0, 3), PI, epsilon = 1e-15);
        assert_eq!(b.get(2, 2), 0.0);
        assert_eq!(b.get(2, 0), b.get(0, 2));
    }

    #[test]
    fn baseline_needs_two_cameras() {
        assert!(BaselineMatrix::from_axes(&[Vector3::x()]).is_err());
    }

    #[test]
    fn four_coplanar_cameras() {
        let b = axes_at(&[0.0, 90.0, 180.0, 270.0]);
        let s = greedy_schedule(&b, &cover(&[0])).unwrap();
        assert_eq!(s.order, vec![0, 2, 1, 3]);
        assert_eq!(s.coverage_prefix_len, 1);
    }

    #[test]
    fn full_initial_set_is_kept() {
        let b = axes_at(&[0.0, 40.0, 200.0]);
        let s = greedy_schedule(&b, &cover(&[0, 1, 2])).unwrap();
        assert_eq!(s.order, vec![0, 1, 2]);
    }

    #[test]
    fn two_cameras() {
        let b = axes_at(&[0.0, 10.0]);
        assert_eq!(greedy_schedule(&b, &cover(&[0])).unwrap().order, vec![0, 1]);
    }

    #[test]
    fn empty_initial_is_rejected() {
        let b = axes_at(&[0.0, 10.0]);
        assert!(greedy_schedule(&b, &cover(&[])).is_err());
        assert!(greedy_schedule(&b, &cover(&[0, 0])).is_err());
        assert!(greedy_schedule(&b, &cover(&[5])).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_axes() -> impl Strategy<Value = Vec<Vector3<f64>>> {
            prop::collection::vec(prop::array::uniform3(-1.0..1.0f64), 2..20).prop_filter_map("zero axis", |v| {
                let axes: Vec<Vector3<f64>> = v.into_iter().map(Vector3::from).collect();
                axes.iter().all(|a| a.norm() > 1e-3).then_some(axes)
            })
        }

        proptest! {
            #[test]
            fn baseline_matrix_is_well_formed(axes in arb_axes()) {
                let b = BaselineMatrix::from_axes(&axes).unwrap();
                for i in 0..b.len() {
                    prop_assert_eq!(b.get(i, i), 0.0);
                    for j in 0..b.len() {
                        prop_assert_eq!(b.get(i, j).to_bits(), b.get(j, i).to_bits());
                        prop_assert!((0.0..=PI).contains(&b.get(i, j)));
                    }
                }
            }

            #[test]
            fn every_pick_is_max_min(axes in arb_axes(), k0 in 1usize..4) {
                let b = BaselineMatrix::from_axes(&axes).unwrap();
                let init: Vec<usize> = (0..k0.min(axes.len())).collect();
                let s = greedy_schedule(&b, &cover(&init)).unwrap();
                let mut sorted = s.order.clone();
                sorted.sort_unstable();
                prop_assert_eq!(sorted, (0..axes.len()).collect::<Vec<_>>());
                for step in init.len()..s.order.len() {
                    let sel = &s.order[..step];
                    let min_to = |c: usize| sel.iter().map(|&x| b.get(c, x)).fold(f64::INFINITY, f64::min);
                    let picked = min_to(s.order[step]);
                    for &other in &s.order[step + 1..] {
                        prop_assert!(picked + TIE_TOLERANCE >= min_to(other));
                    }
                }
            }
        }
    }
}
