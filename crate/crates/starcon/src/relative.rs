//! Relative-information formulation on the Euclidean unit sphere.
//!
//! Each agent keeps its state in its own rotated coordinate frame and
//! observes neighbors through the pairwise rotations R_ij = R_iᵀR_j only;
//! no agent ever uses a global frame. Mapping the local states back
//! through the frames reproduces the global algorithm exactly, which is
//! what [`equivalence_check`] measures.
//!
//! Restricted to unit Euclidean spheres: that is the setting in which the
//! update commutes with the frame changes. Frames are static proper
//! rotations.

use nalgebra::{DMatrix, RowDVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::dynamics::step;
use crate::error::{Error, Result};
use crate::geometry::{BoundaryFamily, StateMatrix, ZERO_ROW_THRESHOLD};
use crate::graph::WeightMatrix;

/// One proper rotation per agent, mapping the agent frame to the global
/// frame (row-vector convention: x̃ = x·R).
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSet {
    rotations: Vec<DMatrix<f64>>,
}

impl FrameSet {
    /// Validates orthogonality (RᵀR = I within 1e-10) and det = +1.
    pub fn new(rotations: Vec<DMatrix<f64>>) -> Result<Self> {
        if rotations.is_empty() {
            return Err(Error::InvalidParameter("frame set needs at least one rotation".into()));
        }
        let d = rotations[0].nrows();
        for (i, r) in rotations.iter().enumerate() {
            if r.nrows() != d || r.ncols() != d {
                return Err(Error::DimensionMismatch {
                    expected: format!("{d}x{d} rotation"),
                    got: format!("{}x{} at index {i}", r.nrows(), r.ncols()),
                });
            }
            let residual = (r.transpose() * r - DMatrix::identity(d, d)).amax();
            if residual > 1e-10 {
                return Err(Error::InvalidParameter(format!(
                    "frame {i} is not orthogonal (residual {residual:.3e})"
                )));
            }
            if r.determinant() < 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "frame {i} is a reflection; only proper rotations are supported"
                )));
            }
        }
        Ok(Self { rotations })
    }

    /// n identity frames.
    pub fn identity(n: usize, d: usize) -> Self {
        Self { rotations: vec![DMatrix::identity(d, d); n] }
    }

    /// n independent Haar-distributed proper rotations, via QR of a
    /// Gaussian matrix with the sign fix on diag(R) and a final column
    /// flip to land in SO(d).
    pub fn random(n: usize, d: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::random_from(n, d, &mut rng)
    }

    pub fn random_from<R: Rng + ?Sized>(n: usize, d: usize, rng: &mut R) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidParameter(format!("dimension must be >= 2, got {d}")));
        }
        let mut rotations = Vec::with_capacity(n);
        for _ in 0..n {
            let g = DMatrix::from_fn(d, d, |_, _| StandardNormal.sample(rng));
            let qr = g.qr();
            let r_diag = qr.r();
            let mut q = qr.q();
            for j in 0..d {
                if r_diag[(j, j)] < 0.0 {
                    q.column_mut(j).neg_mut();
                }
            }
            if q.determinant() < 0.0 {
                q.column_mut(d - 1).neg_mut();
            }
            rotations.push(q);
        }
        Self::new(rotations)
    }

    pub fn n(&self) -> usize {
        self.rotations.len()
    }

    pub fn dim(&self) -> usize {
        self.rotations[0].nrows()
    }

    pub fn rotation(&self, i: usize) -> &DMatrix<f64> {
        &self.rotations[i]
    }

    /// Pairwise rotation from agent j's frame to agent i's:
    /// R_ij = R_iᵀR_j.
    pub fn relative(&self, i: usize, j: usize) -> DMatrix<f64> {
        self.rotations[i].transpose() * &self.rotations[j]
    }
}

impl Serialize for FrameSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<Vec<Vec<f64>>> = self
            .rotations
            .iter()
            .map(|r| (0..r.nrows()).map(|i| r.row(i).iter().copied().collect()).collect())
            .collect();
        rows.serialize(s)
    }
}

/// Unit states expressed in each agent's own frame.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalStateSet {
    tilde: Vec<RowDVector<f64>>,
}

impl LocalStateSet {
    pub fn new(tilde: Vec<RowDVector<f64>>) -> Result<Self> {
        for (i, x) in tilde.iter().enumerate() {
            if (x.norm() - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidParameter(format!(
                    "local state {i} is not a unit vector (norm {})",
                    x.norm()
                )));
            }
        }
        Ok(Self { tilde })
    }

    pub fn n(&self) -> usize {
        self.tilde.len()
    }

    pub fn state(&self, i: usize) -> &RowDVector<f64> {
        &self.tilde[i]
    }

    /// Global-frame image of agent i's state: x̃_i·R_iᵀ. Used by the test
    /// harness, not by the distributed update.
    pub fn to_global(&self, frames: &FrameSet, i: usize) -> RowDVector<f64> {
        &self.tilde[i] * frames.rotation(i).transpose()
    }
}

/// x̃_i = x_i·R_i for every agent. Only defined when every boundary is the
/// unit Euclidean sphere.
pub fn to_local(
    x: &StateMatrix,
    family: &BoundaryFamily,
    frames: &FrameSet,
) -> Result<LocalStateSet> {
    require_unit_spheres(family)?;
    if frames.n() != x.n() || frames.dim() != x.dim() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} frames of size {}", x.n(), x.dim()),
            got: format!("{} frames of size {}", frames.n(), frames.dim()),
        });
    }
    let tilde = (0..x.n()).map(|i| x.row(i) * frames.rotation(i)).collect();
    LocalStateSet::new(tilde)
}

/// One distributed update: agent i maps each neighbor state through
/// x̃_ij = x̃_j·R_ijᵀ, mixes with its row of A, and normalizes:
/// x̃_i⁺ = Σ_j a_ij·x̃_ij / ‖Σ_j a_ij·x̃_ij‖₂.
///
/// The update itself sees only the pairwise rotations; the frame set is
/// consulted once up front to assemble the R_ij table.
pub fn relative_step(
    a: &WeightMatrix,
    local: &LocalStateSet,
    frames: &FrameSet,
) -> Result<LocalStateSet> {
    let n = a.n();
    if local.n() != n || frames.n() != n {
        return Err(Error::DimensionMismatch {
            expected: format!("{n} local states and frames"),
            got: format!("{} states, {} frames", local.n(), frames.n()),
        });
    }
    let mut pairwise = Vec::with_capacity(n);
    for i in 0..n {
        let row: Vec<DMatrix<f64>> = (0..n)
            .map(|j| if a.entries()[(i, j)] > 0.0 { frames.relative(i, j) } else { DMatrix::zeros(0, 0) })
            .collect();
        pairwise.push(row);
    }
    local_update(a, &local.tilde, &pairwise)
}

/// The agent-side computation. Accessible inputs are the weights, the
/// previous-round local states, and the pairwise rotations only.
fn local_update(
    a: &WeightMatrix,
    tilde: &[RowDVector<f64>],
    pairwise: &[Vec<DMatrix<f64>>],
) -> Result<LocalStateSet> {
    let n = a.n();
    let d = tilde[0].len();
    let mut next = Vec::with_capacity(n);
    for i in 0..n {
        let mut sum = RowDVector::zeros(d);
        for j in 0..n {
            let w = a.entries()[(i, j)];
            if w > 0.0 {
                let seen = &tilde[j] * pairwise[i][j].transpose();
                sum += seen * w;
            }
        }
        let norm = sum.norm();
        if norm < ZERO_ROW_THRESHOLD {
            return Err(Error::DegenerateUpdate { index: i });
        }
        next.push(sum / norm);
    }
    LocalStateSet::new(next)
}

/// Runs the global algorithm and the relative one side by side for
/// `iters` steps and returns the largest distance, over all times and
/// agents, between x̃_i(t)·R_iᵀ and x_i(t).
pub fn equivalence_check(
    a: &WeightMatrix,
    family: &BoundaryFamily,
    x0: &StateMatrix,
    frames: &FrameSet,
    iters: usize,
) -> Result<f64> {
    require_unit_spheres(family)?;
    let mut global = x0.clone();
    let mut local = to_local(x0, family, frames)?;
    let mut worst: f64 = 0.0;
    for _ in 0..iters {
        global = step(a, family, &global)?;
        local = relative_step(a, &local, frames)?;
        for i in 0..x0.n() {
            let image = local.to_global(frames, i);
            worst = worst.max((image - global.row(i)).norm());
        }
    }
    Ok(worst)
}

fn require_unit_spheres(family: &BoundaryFamily) -> Result<()> {
    if family.all_unit_spheres() {
        Ok(())
    } else {
        Err(Error::Precondition(
            "relative formulation is restricted to unit Euclidean spheres".into(),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::rowwise_project;
    use crate::graph::DirectedGraph;
    use approx::assert_relative_eq;

    fn unit_instance(seed: u64, n: usize, d: usize) -> (WeightMatrix, BoundaryFamily, StateMatrix) {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let family = BoundaryFamily::unit_spheres(n, d).unwrap();
        let graph = DirectedGraph::random_scc_from(n, 0.4, &mut rng).unwrap();
        let a = WeightMatrix::random_from(&graph, &family, &mut rng).unwrap();
        let raw = DMatrix::from_fn(n, d, |_, _| StandardNormal.sample(&mut rng));
        let x0 = rowwise_project(&family, &raw).unwrap();
        (a, family, x0)
    }

    #[test]
    fn random_frames_are_proper_rotations() {
        let frames = FrameSet::random(5, 4, 3).unwrap();
        for i in 0..5 {
            let r = frames.rotation(i);
            let residual = (r.transpose() * r - DMatrix::identity(4, 4)).amax();
            assert!(residual < 1e-10);
            assert_relative_eq!(r.determinant(), 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn random_frames_deterministic() {
        let a = FrameSet::random(3, 3, 17).unwrap();
        let b = FrameSet::random(3, 3, 17).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn planar_frames_are_rotations_by_some_angle() {
        let frames = FrameSet::random(4, 2, 5).unwrap();
        for i in 0..4 {
            let r = frames.rotation(i);
            // SO(2) structure: [[c,s],[-s,c]] as a row-vector operator
            assert_relative_eq!(r[(0, 0)], r[(1, 1)], epsilon = 1e-12);
            assert_relative_eq!(r[(0, 1)], -r[(1, 0)], epsilon = 1e-12);
        }
    }

    #[test]
    fn to_local_identity_frames() {
        let (_, family, x0) = unit_instance(1, 3, 3);
        let frames = FrameSet::identity(3, 3);
        let local = to_local(&x0, &family, &frames).unwrap();
        for i in 0..3 {
            assert_eq!(local.state(i), &x0.row(i));
        }
    }

    #[test]
    fn to_local_quarter_turn() {
        // row-vector convention, counterclockwise positive: R(90 deg)
        // sends (1,0) to (0,1)
        let family = BoundaryFamily::unit_spheres(2, 2).unwrap();
        let r = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let frames = FrameSet::new(vec![r.clone(), r]).unwrap();
        let x = StateMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0])).unwrap();
        let local = to_local(&x, &family, &frames).unwrap();
        assert_relative_eq!(local.state(0)[0], 0.0, epsilon = 1e-15);
        assert_relative_eq!(local.state(0)[1], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn to_local_round_trip() {
        let (_, family, x0) = unit_instance(2, 4, 3);
        let frames = FrameSet::random(4, 3, 9).unwrap();
        let local = to_local(&x0, &family, &frames).unwrap();
        for i in 0..4 {
            let back = local.to_global(&frames, i);
            for j in 0..3 {
                assert_relative_eq!(back[j], x0.matrix()[(i, j)], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn to_local_rejects_non_unit_spheres() {
        let family =
            BoundaryFamily::lp(crate::geometry::LpExponent::Finite(1), 1.0, 2, 2).unwrap();
        let x = rowwise_project(&family, &DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]))
            .unwrap();
        let frames = FrameSet::identity(2, 2);
        assert!(to_local(&x, &family, &frames).is_err());
    }

    #[test]
    fn relative_step_identity_frames_matches_global() {
        let (a, family, x0) = unit_instance(3, 3, 3);
        let frames = FrameSet::identity(3, 3);
        let local = to_local(&x0, &family, &frames).unwrap();
        let next_local = relative_step(&a, &local, &frames).unwrap();
        let next_global = step(&a, &family, &x0).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_relative_eq!(
                    next_local.state(i)[j],
                    next_global.matrix()[(i, j)],
                    epsilon = 1e-14
                );
            }
        }
    }

    #[test]
    fn consensus_state_is_fixed_in_local_frames() {
        let (a, family, _) = unit_instance(4, 2, 2);
        let frames = FrameSet::random(2, 2, 21).unwrap();
        let u = RowDVector::from_row_slice(&[0.6, 0.8]);
        let mut m = DMatrix::zeros(2, 2);
        for i in 0..2 {
            m.row_mut(i).copy_from(&u);
        }
        let x = StateMatrix::new(m).unwrap();
        let local = to_local(&x, &family, &frames).unwrap();
        let next = relative_step(&a, &local, &frames).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_relative_eq!(next.state(i)[j], local.state(i)[j], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn one_relative_step_equals_one_global_step() {
        let (a, family, x0) = unit_instance(5, 4, 3);
        let frames = FrameSet::random(4, 3, 31).unwrap();
        let local = to_local(&x0, &family, &frames).unwrap();
        let next_local = relative_step(&a, &local, &frames).unwrap();
        let next_global = step(&a, &family, &x0).unwrap();
        for i in 0..4 {
            let image = next_local.to_global(&frames, i);
            for j in 0..3 {
                assert_relative_eq!(image[j], next_global.matrix()[(i, j)], epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn hundred_step_equivalence() {
        let (a, family, x0) = unit_instance(6, 3, 3);
        let frames = FrameSet::random(3, 3, 41).unwrap();
        let dev = equivalence_check(&a, &family, &x0, &frames, 100).unwrap();
        assert!(dev <= 1e-9, "deviation {dev}");
    }

    #[test]
    fn identity_frames_equivalence_is_tight() {
        let (a, family, x0) = unit_instance(7, 3, 2);
        let frames = FrameSet::identity(3, 2);
        let dev = equivalence_check(&a, &family, &x0, &frames, 50).unwrap();
        assert!(dev <= 1e-12, "deviation {dev}");
    }

    #[test]
    fn deviation_not_sensitive_to_frame_choice() {
        let (a, family, x0) = unit_instance(8, 3, 3);
        let dev_a = equivalence_check(&a, &family, &x0, &FrameSet::random(3, 3, 1).unwrap(), 100)
            .unwrap();
        let dev_b = equivalence_check(&a, &family, &x0, &FrameSet::random(3, 3, 2).unwrap(), 100)
            .unwrap();
        let lo = dev_a.min(dev_b).max(1e-16);
        let hi = dev_a.max(dev_b);
        assert!(hi / lo <= 10.0, "deviations {dev_a} vs {dev_b}");
    }
}
