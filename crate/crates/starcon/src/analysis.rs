//! Consensus decision and diagnostics.
//!
//! The exact consensus criterion is v(X₀)·X₀ ≠ 0 for the positive unit
//! vector v(X₀) that the row-normalized products converge to. Numerically
//! the norm ‖v(X₀)·X₀‖₂ is compared against a threshold relative to the
//! largest row norm of X₀; genuine failure configurations land at rounding
//! scale while generic instances are O(1). The verdict always carries the
//! outcome of an actual simulation so any disagreement between the test
//! and the dynamics is surfaced, never hidden.
//!
//! Three sufficient conditions are checked directly on (A, X₀): the rows
//! of X₀ lie in a half-space with a non-annihilating normal, X₀ has full
//! row rank, or some column of X₀ avoids C⊥(A).

use microlp::{ComparisonOp, OptimizationDirection, Problem};
use nalgebra::{DMatrix, RowDVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::dynamics::{estimate_v, simulate, LimitVector, SimulationTrace, StopReason};
use crate::error::{Error, Result};
use crate::geometry::{cone_perp_membership, rowwise_project, BoundaryFamily, StateMatrix};
use crate::graph::WeightMatrix;

/// Margins below this are treated as zero when classifying the half-space
/// feasibility optimum.
const LP_MARGIN_TOL: f64 = 1e-9;

/// Tolerances and budgets for the consensus decision.
#[derive(Debug, Clone, Copy)]
pub struct DecisionParams {
    /// Accept v(X₀) once φ_max(Y) drops below this.
    pub tol_phi: f64,
    /// Consensus is predicted when ‖v·X₀‖₂ exceeds this times the largest
    /// row norm of X₀.
    pub decision_threshold: f64,
    /// Pairwise direction error at which the simulation counts as
    /// converged.
    pub direction_tol: f64,
    pub max_iters: usize,
}

impl Default for DecisionParams {
    fn default() -> Self {
        Self { tol_phi: 1e-10, decision_threshold: 1e-8, direction_tol: 1e-9, max_iters: 100_000 }
    }
}

/// Decision of the consensus criterion plus the limit objects it implies.
#[derive(Debug, Clone)]
pub struct ConsensusVerdict {
    /// The 1×d row v(X₀)·X₀.
    pub v_x0: RowDVector<f64>,
    pub v_x0_norm: f64,
    pub consensus_predicted: bool,
    /// v(X₀)X₀/‖v(X₀)X₀‖₂ when predicted.
    pub limit_direction: Option<RowDVector<f64>>,
    /// P_{𝕊(n,d,γ̄)}(1ₙ,₁·(v(X₀)X₀)) when predicted.
    pub limit_states: Option<StateMatrix>,
    pub empirical_converged: bool,
    /// Whether prediction and simulation outcome coincide.
    pub empirical_agreement: bool,
}

/// Prediction half of the verdict, computed without simulating.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub limit: LimitVector,
    pub v_x0: RowDVector<f64>,
    pub v_x0_norm: f64,
    pub consensus_predicted: bool,
    pub limit_direction: Option<RowDVector<f64>>,
    pub limit_states: Option<StateMatrix>,
}

/// Full outcome of [`theorem1_decide`].
#[derive(Debug, Clone)]
pub struct Decision {
    pub verdict: ConsensusVerdict,
    pub limit: LimitVector,
    pub trace: SimulationTrace,
}

/// Estimates v(X₀) and evaluates the consensus criterion, without running
/// the confirming simulation.
pub fn predict(
    a: &WeightMatrix,
    family: &BoundaryFamily,
    x0: &StateMatrix,
    params: &DecisionParams,
) -> Result<Prediction> {
    let limit = estimate_v(a, family, x0, params.tol_phi, params.max_iters)?;
    let v_x0: RowDVector<f64> = limit.v.transpose() * x0.matrix();
    let v_x0_norm = v_x0.norm();
    let consensus_predicted = v_x0_norm > params.decision_threshold * x0.max_row_norm();
    let (limit_direction, limit_states) = if consensus_predicted {
        let dir = &v_x0 / v_x0_norm;
        let stacked = DMatrix::from_fn(x0.n(), x0.dim(), |_, j| v_x0[j]);
        (Some(dir), Some(rowwise_project(family, &stacked)?))
    } else {
        (None, None)
    };
    Ok(Prediction { limit, v_x0, v_x0_norm, consensus_predicted, limit_direction, limit_states })
}

/// Decides the consensus criterion and confirms it against a simulation.
pub fn theorem1_decide(
    a: &WeightMatrix,
    family: &BoundaryFamily,
    x0: &StateMatrix,
    params: &DecisionParams,
) -> Result<Decision> {
    let p = predict(a, family, x0, params)?;
    let trace = simulate(a, family, x0, params.max_iters, params.direction_tol)?;
    let empirical_converged = trace.stop_reason == StopReason::Converged;
    let verdict = ConsensusVerdict {
        v_x0: p.v_x0,
        v_x0_norm: p.v_x0_norm,
        consensus_predicted: p.consensus_predicted,
        limit_direction: p.limit_direction,
        limit_states: p.limit_states,
        empirical_converged,
        empirical_agreement: p.consensus_predicted == empirical_converged,
    };
    Ok(Decision { verdict, limit: p.limit, trace })
}

/// Result of the half-space feasibility check.
#[derive(Debug, Clone, Serialize)]
pub struct HalfspaceReport {
    pub holds: bool,
    /// Unit normal h with X₀hᵀ ≥ 0 and X₀hᵀ ≠ 0 when one exists.
    pub witness_h: Option<Vec<f64>>,
    /// min_i of the normalized rows against the witness; positive in the
    /// strict-interior case, ≈ 0 on the boundary.
    pub margin: Option<f64>,
    /// True when the rows only touch a closed half-space (the max-margin
    /// optimum is zero), so the decision came from the boundary
    /// refinement.
    pub boundary: bool,
}

/// Decides whether a unit h exists with X₀hᵀ ≥ 0 and X₀hᵀ ≠ 0.
///
/// A bounded max-margin program (maximize t subject to u_i·hᵀ ≥ t over
/// ‖h‖_∞ ≤ 1, u_i the normalized rows) detects the strict case exactly.
/// When the optimum is zero the rows only touch a closed half-space; the
/// boundary case is then settled per row by maximizing u_i·hᵀ over the
/// feasible cone {h : X₀hᵀ ≥ 0}, which finds a witness exactly when one
/// exists rather than guessing.
pub fn check_halfspace(x0: &StateMatrix) -> Result<HalfspaceReport> {
    let dirs = x0.directions();
    let rows: Vec<Vec<f64>> = (0..dirs.nrows())
        .map(|i| dirs.row(i).iter().copied().collect())
        .collect();
    let (t_star, h) = chebyshev_margin(&rows)?;
    if t_star > LP_MARGIN_TOL {
        let unit = normalize(&h);
        let margin = achieved_margin(&rows, &unit);
        return Ok(HalfspaceReport {
            holds: true,
            witness_h: Some(unit),
            margin: Some(margin),
            boundary: false,
        });
    }
    for k in 0..rows.len() {
        let (value, h) = supported_row_lp(&rows, k)?;
        if value > LP_MARGIN_TOL {
            let unit = normalize(&h);
            let margin = achieved_margin(&rows, &unit);
            return Ok(HalfspaceReport {
                holds: true,
                witness_h: Some(unit),
                margin: Some(margin),
                boundary: true,
            });
        }
    }
    Ok(HalfspaceReport { holds: false, witness_h: None, margin: None, boundary: true })
}

fn normalize(h: &[f64]) -> Vec<f64> {
    let norm = h.iter().map(|v| v * v).sum::<f64>().sqrt();
    h.iter().map(|v| v / norm).collect()
}

fn achieved_margin(rows: &[Vec<f64>], h: &[f64]) -> f64 {
    rows.iter()
        .map(|u| u.iter().zip(h).map(|(a, b)| a * b).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
}

/// max t s.t. u_i·h ≥ t, −1 ≤ h_j ≤ 1. The optimum is never negative
/// (h = 0 is feasible) and is positive exactly when the rows fit strictly
/// inside an open half-space.
fn chebyshev_margin(rows: &[Vec<f64>]) -> Result<(f64, Vec<f64>)> {
    let d = rows[0].len();
    let mut problem = Problem::new(OptimizationDirection::Maximize);
    let h: Vec<_> = (0..d).map(|_| problem.add_var(0.0, (-1.0, 1.0))).collect();
    let t = problem.add_var(1.0, (f64::NEG_INFINITY, f64::INFINITY));
    for u in rows {
        let mut terms: Vec<_> = h.iter().copied().zip(u.iter().copied()).collect();
        terms.push((t, -1.0));
        problem.add_constraint(&terms, ComparisonOp::Ge, 0.0);
    }
    let solution = problem
        .solve()
        .map_err(|e| Error::InvariantViolation(format!("half-space margin LP failed: {e}")))?;
    Ok((solution.objective(), h.iter().map(|v| solution[*v]).collect()))
}

/// max u_k·h s.t. u_j·h ≥ 0 for all j, −1 ≤ h_j ≤ 1. A positive optimum
/// exhibits h with X₀hᵀ ≥ 0 and the k-th entry strictly positive.
fn supported_row_lp(rows: &[Vec<f64>], k: usize) -> Result<(f64, Vec<f64>)> {
    let d = rows[0].len();
    let mut problem = Problem::new(OptimizationDirection::Maximize);
    let h: Vec<_> = (0..d).map(|j| problem.add_var(rows[k][j], (-1.0, 1.0))).collect();
    for u in rows {
        let terms: Vec<_> = h.iter().copied().zip(u.iter().copied()).collect();
        problem.add_constraint(&terms, ComparisonOp::Ge, 0.0);
    }
    let solution = problem
        .solve()
        .map_err(|e| Error::InvariantViolation(format!("half-space boundary LP failed: {e}")))?;
    Ok((solution.objective(), h.iter().map(|v| solution[*v]).collect()))
}

/// Result of the row-rank check.
#[derive(Debug, Clone, Serialize)]
pub struct RankReport {
    pub holds: bool,
    pub numerical_rank: usize,
    pub smallest_singular_value: f64,
}

/// Numerical row rank of X₀: singular values above `rel_tol` times the
/// largest count toward the rank; the condition holds when the rank
/// equals n (impossible for n > d).
pub fn check_rank(x0: &StateMatrix, rel_tol: f64) -> RankReport {
    let svd = x0.matrix().clone().svd(false, false);
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).expect("singular values are finite"));
    let largest = sv.first().copied().unwrap_or(0.0);
    let numerical_rank = sv.iter().filter(|s| **s > rel_tol * largest).count();
    RankReport {
        holds: numerical_rank == x0.n(),
        numerical_rank,
        smallest_singular_value: sv.last().copied().unwrap_or(0.0),
    }
}

/// Result of the column/cone check.
#[derive(Debug, Clone, Serialize)]
pub struct ConeColumnReport {
    pub holds: bool,
    pub witness_column_index: Option<usize>,
}

/// Scans the nonzero columns c of X₀ for one with cᵀ ∉ C⊥(A).
pub fn check_cone_column(a: &WeightMatrix, x0: &StateMatrix) -> Result<ConeColumnReport> {
    for j in 0..x0.dim() {
        let column = x0.matrix().column(j).clone_owned();
        if column.norm() == 0.0 {
            continue;
        }
        if !cone_perp_membership(a.entries(), &column)? {
            return Ok(ConeColumnReport { holds: true, witness_column_index: Some(j) });
        }
    }
    Ok(ConeColumnReport { holds: false, witness_column_index: None })
}

/// All three sufficient-condition checks on one instance.
#[derive(Debug, Clone, Serialize)]
pub struct ConditionReport {
    pub halfspace: HalfspaceReport,
    pub full_rank: RankReport,
    pub cone_column: ConeColumnReport,
}

impl ConditionReport {
    pub fn any_holds(&self) -> bool {
        self.halfspace.holds || self.full_rank.holds || self.cone_column.holds
    }
}

pub fn condition_report(
    a: &WeightMatrix,
    x0: &StateMatrix,
    rank_rel_tol: f64,
) -> Result<ConditionReport> {
    Ok(ConditionReport {
        halfspace: check_halfspace(x0)?,
        full_rank: check_rank(x0, rank_rel_tol),
        cone_column: check_cone_column(a, x0)?,
    })
}

/// Least-squares rate fit over the convergence tail.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RateEstimate {
    /// Slope of log₁₀(pairwise error) per iteration.
    pub slope: f64,
    pub r2: f64,
    /// Tail fraction the fit used.
    pub window: f64,
}

/// Fits a line to log₁₀(pairwise_error) over the last `tail_fraction` of
/// the pre-convergence steps. The entries at the tolerance floor (the
/// final recorded point and anything below tolerance) are excluded so the
/// fit is not polluted by log of rounding noise.
pub fn fit_rate(trace: &SimulationTrace, tail_fraction: f64) -> Result<RateEstimate> {
    if trace.stop_reason != StopReason::Converged {
        return Err(Error::FitRefused("trace did not converge".into()));
    }
    if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "tail fraction must be in (0,1], got {tail_fraction}"
        )));
    }
    // everything before the stopping entry is above tolerance
    let pre: Vec<f64> = trace.pairwise_error[..trace.pairwise_error.len() - 1]
        .iter()
        .copied()
        .filter(|e| *e > 0.0)
        .collect();
    if pre.len() < 20 {
        return Err(Error::FitRefused(format!(
            "needs at least 20 pre-convergence steps, trace has {}",
            pre.len()
        )));
    }
    let take = ((pre.len() as f64) * tail_fraction).ceil() as usize;
    let start = pre.len() - take.max(2);
    let points: Vec<(f64, f64)> =
        pre.iter().enumerate().skip(start).map(|(k, e)| (k as f64, e.log10())).collect();
    let (slope, r2) = least_squares_line(&points);
    Ok(RateEstimate { slope, r2, window: tail_fraction })
}

fn least_squares_line(points: &[(f64, f64)]) -> (f64, f64) {
    let m = points.len() as f64;
    let sx: f64 = points.iter().map(|(x, _)| x).sum();
    let sy: f64 = points.iter().map(|(_, y)| y).sum();
    let sxx: f64 = points.iter().map(|(x, _)| x * x).sum();
    let sxy: f64 = points.iter().map(|(x, y)| x * y).sum();
    let denom = m * sxx - sx * sx;
    let slope = (m * sxy - sx * sy) / denom;
    let intercept = (sy - slope * sx) / m;
    let mean_y = sy / m;
    let ss_tot: f64 = points.iter().map(|(_, y)| (y - mean_y) * (y - mean_y)).sum();
    let ss_res: f64 = points
        .iter()
        .map(|(x, y)| {
            let p = intercept + slope * x;
            (y - p) * (y - p)
        })
        .sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    (slope, r2)
}

/// Re-decides the instance under `trials` random tangential perturbations
/// of X₀ of size `scale` and reports the largest deviation of the limit
/// direction. Requires that consensus is predicted at X₀ itself.
pub fn continuity_probe(
    a: &WeightMatrix,
    family: &BoundaryFamily,
    x0: &StateMatrix,
    scale: f64,
    trials: usize,
    seed: u64,
    params: &DecisionParams,
) -> Result<f64> {
    let base = predict(a, family, x0, params)?;
    let base_dir = base
        .limit_direction
        .ok_or_else(|| Error::Precondition("continuity probe needs a consensus instance".into()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let perturbed = if scale == 0.0 {
            x0.clone()
        } else {
            perturb_tangentially(family, x0, scale, &mut rng)?
        };
        let probe = predict(a, family, &perturbed, params)?;
        let deviation = match probe.limit_direction {
            Some(dir) => (&dir - &base_dir).norm(),
            // perturbation left the consensus region entirely
            None => 2.0,
        };
        worst = worst.max(deviation);
    }
    Ok(worst)
}

/// Moves each row direction by `scale` along a random unit tangent, then
/// re-projects onto its boundary.
pub fn perturb_tangentially<R: rand::Rng + ?Sized>(
    family: &BoundaryFamily,
    x0: &StateMatrix,
    scale: f64,
    rng: &mut R,
) -> Result<StateMatrix> {
    let d = x0.dim();
    let mut out = DMatrix::zeros(x0.n(), d);
    for i in 0..x0.n() {
        let u = x0.direction(i);
        let tangent = loop {
            let g = RowDVector::from_iterator(d, (0..d).map(|_| StandardNormal.sample(rng)));
            let t = &g - &u * g.dot(&u);
            let norm = t.norm();
            if norm > 1e-9 {
                break t / norm;
            }
        };
        let moved = &u + tangent * scale;
        let dir = &moved / moved.norm();
        let radius = family.gamma(i).evaluate(&dir);
        out.row_mut(i).copy_from(&(dir * radius));
    }
    StateMatrix::new(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::rowwise_project;
    use crate::graph::DirectedGraph;
    use approx::assert_relative_eq;

    fn antipodal_instance() -> (WeightMatrix, BoundaryFamily, StateMatrix) {
        let family = BoundaryFamily::unit_spheres(2, 2).unwrap();
        let graph = DirectedGraph::new(2, [(0, 0), (0, 1), (1, 0), (1, 1)]).unwrap();
        let a = WeightMatrix::new(
            DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 3.0]),
            graph,
        )
        .unwrap();
        let x0 = StateMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -1.0, 0.0])).unwrap();
        (a, family, x0)
    }

    fn orthant_instance(seed: u64) -> (WeightMatrix, BoundaryFamily, StateMatrix) {
        let family = BoundaryFamily::unit_spheres(3, 3).unwrap();
        let graph = DirectedGraph::random_scc(3, 0.5, seed).unwrap();
        let a = WeightMatrix::random(&graph, &family, seed + 1).unwrap();
        let raw = DMatrix::from_row_slice(3, 3, &[1.0, 0.2, 0.4, 0.3, 1.0, 0.5, 0.6, 0.7, 1.0]);
        let x0 = rowwise_project(&family, &raw).unwrap();
        (a, family, x0)
    }

    #[test]
    fn halfspace_open_orthant_holds_strictly() {
        let (_, _, x0) = orthant_instance(1);
        let report = check_halfspace(&x0).unwrap();
        assert!(report.holds);
        assert!(!report.boundary);
        assert!(report.margin.unwrap() > 0.0);
        let h = report.witness_h.unwrap();
        for i in 0..3 {
            let dot: f64 = x0.direction(i).iter().zip(&h).map(|(a, b)| a * b).sum();
            assert!(dot > 0.0);
        }
    }

    #[test]
    fn halfspace_antipodal_fails() {
        let (_, _, x0) = antipodal_instance();
        let report = check_halfspace(&x0).unwrap();
        assert!(!report.holds);
        assert!(report.boundary);
    }

    #[test]
    fn halfspace_three_at_120_degrees_fails() {
        let a = 2.0 * std::f64::consts::PI / 3.0;
        let m = DMatrix::from_fn(3, 2, |i, j| {
            let angle = i as f64 * a;
            if j == 0 {
                angle.cos()
            } else {
                angle.sin()
            }
        });
        let x0 = StateMatrix::new(m).unwrap();
        let report = check_halfspace(&x0).unwrap();
        assert!(!report.holds);

        // brute-force oracle over the circle: no direction keeps all three
        // rows nonnegative with one strictly positive
        let mut oracle = false;
        for k in 0..72_000 {
            let theta = k as f64 * std::f64::consts::TAU / 72_000.0;
            let h = [theta.cos(), theta.sin()];
            let dots: Vec<f64> =
                (0..3).map(|i| x0.direction(i).iter().zip(&h).map(|(a, b)| a * b).sum()).collect();
            if dots.iter().all(|v| *v >= -1e-12) && dots.iter().any(|v| *v > 1e-9) {
                oracle = true;
                break;
            }
        }
        assert!(!oracle);
    }

    #[test]
    fn halfspace_boundary_case_with_witness() {
        // (1,0), (-1,0), (0,1): only a closed half-space fits, but h=(0,1)
        // gives a nonzero nonnegative image
        let m = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, -1.0, 0.0, 0.0, 1.0]);
        let x0 = StateMatrix::new(m).unwrap();
        let report = check_halfspace(&x0).unwrap();
        assert!(report.holds);
        assert!(report.boundary);
        let h = report.witness_h.unwrap();
        assert_relative_eq!(h[0].abs(), 0.0, epsilon = 1e-9);
        assert_relative_eq!(h[1].abs(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn rank_check_cases() {
        let family = BoundaryFamily::unit_spheres(2, 2).unwrap();
        let x = rowwise_project(&family, &DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]))
            .unwrap();
        let report = check_rank(&x, 1e-10);
        assert!(report.holds);
        assert_eq!(report.numerical_rank, 2);

        let dup = StateMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 0.0])).unwrap();
        assert!(!check_rank(&dup, 1e-10).holds);

        let wide = StateMatrix::new(DMatrix::from_row_slice(3, 2, &[
            1.0, 0.0, 0.0, 1.0, 1.0, 1.0,
        ]))
        .unwrap();
        assert!(!check_rank(&wide, 1e-10).holds);
    }

    #[test]
    fn cone_column_cases() {
        let (a, _, x0) = orthant_instance(3);
        let report = check_cone_column(&a, &x0).unwrap();
        assert!(report.holds);
        assert_eq!(report.witness_column_index, Some(0));

        let (a, _, anti) = antipodal_instance();
        let report = check_cone_column(&a, &anti).unwrap();
        assert!(!report.holds);
    }

    #[test]
    fn cone_column_skips_zero_column() {
        let (a, _, _) = antipodal_instance();
        let x = StateMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 0.0])).unwrap();
        // second column is identically zero; first is strictly positive
        let report = check_cone_column(&a, &x).unwrap();
        assert!(report.holds);
        assert_eq!(report.witness_column_index, Some(0));
    }

    #[test]
    fn theorem1_antipodal_predicts_no_consensus() {
        let (a, family, x0) = antipodal_instance();
        let decision = theorem1_decide(&a, &family, &x0, &DecisionParams::default()).unwrap();
        assert!(decision.verdict.v_x0_norm < 1e-10);
        assert!(!decision.verdict.consensus_predicted);
        assert!(!decision.verdict.empirical_converged);
        assert!(decision.verdict.empirical_agreement);
    }

    #[test]
    fn theorem1_halfspace_predicts_consensus() {
        let (a, family, x0) = orthant_instance(5);
        let decision = theorem1_decide(&a, &family, &x0, &DecisionParams::default()).unwrap();
        assert!(decision.verdict.consensus_predicted);
        assert!(decision.verdict.empirical_converged);
        assert!(decision.verdict.empirical_agreement);
        let dir = decision.verdict.limit_direction.unwrap();
        assert_relative_eq!(dir.norm(), 1.0, epsilon = 1e-12);
        let states = decision.verdict.limit_states.unwrap();
        assert!(states.is_on_boundary(&family, 1e-10));
    }

    #[test]
    fn theorem1_full_rank_predicts_consensus() {
        let family = BoundaryFamily::unit_spheres(3, 3).unwrap();
        let graph = DirectedGraph::random_scc(3, 0.4, 7).unwrap();
        let a = WeightMatrix::random(&graph, &family, 8).unwrap();
        let raw = DMatrix::from_row_slice(3, 3, &[1.0, 0.1, 0.0, -0.2, 1.0, 0.1, 0.0, -0.1, 1.0]);
        let x0 = rowwise_project(&family, &raw).unwrap();
        assert!(check_rank(&x0, 1e-10).holds);
        let decision = theorem1_decide(&a, &family, &x0, &DecisionParams::default()).unwrap();
        assert!(decision.verdict.consensus_predicted);
        assert!(decision.verdict.empirical_agreement);
    }

    #[test]
    fn fit_rate_exact_geometric_series() {
        let family = BoundaryFamily::unit_spheres(2, 2).unwrap();
        let x = rowwise_project(&family, &DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]))
            .unwrap();
        let errors: Vec<f64> = (0..=41).map(|t| 0.5_f64.powi(t)).collect();
        let states = vec![x; errors.len()];
        let trace = SimulationTrace {
            phi_history: vec![0.0; errors.len()],
            pairwise_error: errors,
            states,
            t0: 0,
            stop_reason: StopReason::Converged,
            tol: 1e-12,
        };
        let fit = fit_rate(&trace, 0.5).unwrap();
        assert_relative_eq!(fit.slope, 0.5_f64.log10(), epsilon = 1e-12);
        assert_relative_eq!(fit.r2, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn fit_rate_refuses_non_converged_trace() {
        let (a, family, x0) = antipodal_instance();
        let trace = simulate(&a, &family, &x0, 50, 1e-9).unwrap();
        assert!(matches!(fit_rate(&trace, 0.5), Err(Error::FitRefused(_))));
    }

    #[test]
    fn fit_rate_refuses_short_trace() {
        let family = BoundaryFamily::unit_spheres(2, 2).unwrap();
        let x = rowwise_project(&family, &DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]))
            .unwrap();
        let errors: Vec<f64> = (0..10).map(|t| 0.5_f64.powi(t) * 1e-3).collect();
        let trace = SimulationTrace {
            phi_history: vec![0.0; errors.len()],
            states: vec![x; errors.len()],
            pairwise_error: errors,
            t0: 0,
            stop_reason: StopReason::Converged,
            tol: 1e-2,
        };
        assert!(matches!(fit_rate(&trace, 0.5), Err(Error::FitRefused(_))));
    }

    #[test]
    fn continuity_probe_zero_scale_is_exact() {
        let (a, family, x0) = orthant_instance(9);
        let dev =
            continuity_probe(&a, &family, &x0, 0.0, 3, 1, &DecisionParams::default()).unwrap();
        assert_eq!(dev, 0.0);
    }

    #[test]
    fn continuity_probe_small_scale_small_deviation() {
        let (a, family, x0) = orthant_instance(13);
        let dev =
            continuity_probe(&a, &family, &x0, 1e-6, 3, 2, &DecisionParams::default()).unwrap();
        assert!(dev < 1e-3, "deviation {dev}");
    }

    #[test]
    fn continuity_probe_requires_consensus_instance() {
        let (a, family, x0) = antipodal_instance();
        assert!(matches!(
            continuity_probe(&a, &family, &x0, 1e-6, 2, 3, &DecisionParams::default()),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn corollary2_soundness_sample() {
        // whenever a clause holds the decision must predict consensus and
        // the simulation must confirm it
        for seed in 0..30 {
            let (a, family, x0) = crate::analysis::tests::random_mixed_instance(seed);
            let report = condition_report(&a, &x0, 1e-10).unwrap();
            if report.any_holds() {
                let decision =
                    theorem1_decide(&a, &family, &x0, &DecisionParams::default()).unwrap();
                assert!(decision.verdict.consensus_predicted, "seed {seed}");
                assert!(decision.verdict.empirical_converged, "seed {seed}");
            }
        }
    }

    pub(crate) fn random_mixed_instance(seed: u64) -> (WeightMatrix, BoundaryFamily, StateMatrix) {
        use crate::geometry::DirectionalFunction;
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let n = rng.random_range(2..=5);
        let d = rng.random_range(2..=4);
        let mut gammas = Vec::new();
        for _ in 0..n {
            gammas.push(if rng.random_bool(0.5) {
                DirectionalFunction::unit_sphere(d)
            } else {
                DirectionalFunction::random_star_from(d, &mut rng).unwrap()
            });
        }
        let family = BoundaryFamily::new(gammas).unwrap();
        let graph = DirectedGraph::random_scc_from(n, 0.3, &mut rng).unwrap();
        let a = WeightMatrix::random_from(&graph, &family, &mut rng).unwrap();
        let raw = DMatrix::from_fn(n, d, |_, _| StandardNormal.sample(&mut rng));
        let x0 = rowwise_project(&family, &raw).unwrap();
        (a, family, x0)
    }
}
