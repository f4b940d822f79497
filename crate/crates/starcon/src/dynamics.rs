//! The consensus iteration and its product-matrix representation.
//!
//! The update is X(t+1) = P_{𝕊(n,d,γ̄)}(A·X(t)): each agent mixes its
//! neighbors' states conically and radially projects back onto its own
//! star boundary. Because the projection factors as
//! P(AX) = D_γ̄(AX)·A·X with a positive diagonal D_γ̄, the trajectory is
//! X(t₀+k) = Ã(k)·X₀ for the running product
//! Ã(k) = ∏ₘ D_γ̄(AX(t₀+m))·A.
//!
//! Raw entries of Ã(k) scale like σᵏ and would overflow or underflow, but
//! only row directions matter: the tracker keeps the product scaled by the
//! first row's norm, logging the pre-normalization row-norm ratios, and
//! exposes the row-normalized Y(k). All rows of Y(k) converge linearly to
//! one positive unit vector v(X₀); the consensus verdict is read off
//! v(X₀)·X₀.

use nalgebra::{DMatrix, DVector, RowDVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{
    pairwise_direction_error, phi_max, rowwise_project, BoundaryFamily, StateMatrix,
    ZERO_ROW_THRESHOLD,
};
use crate::graph::WeightMatrix;

/// Why a simulation stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    MaxIters,
    Degenerate,
}

/// Recorded trajectory of one run. Index k holds X(t₀+k) together with
/// φ_max of the normalized states and the maximum pairwise direction
/// error at that time.
#[derive(Debug, Clone)]
pub struct SimulationTrace {
    pub states: Vec<StateMatrix>,
    pub phi_history: Vec<f64>,
    pub pairwise_error: Vec<f64>,
    pub t0: usize,
    pub stop_reason: StopReason,
    /// Direction tolerance the run was stopped against.
    pub tol: f64,
}

impl SimulationTrace {
    /// Number of steps taken (states recorded minus the initial one).
    pub fn iterations(&self) -> usize {
        self.states.len() - 1
    }

    pub fn final_state(&self) -> &StateMatrix {
        self.states.last().expect("trace holds at least the initial state")
    }

    /// CSV with columns t, pairwise_error, phi_states, phi_Y, min_ratio,
    /// max_ratio. Product columns are empty when no tracker is supplied or
    /// for t = t₀ (ratios start at the first factor).
    pub fn write_csv<W: std::io::Write>(
        &self,
        tracker: Option<&ProductTracker>,
        mut w: W,
    ) -> Result<()> {
        writeln!(w, "t,pairwise_error,phi_states,phi_Y,min_ratio,max_ratio")?;
        for k in 0..self.states.len() {
            let (phi_y, min_r, max_r) = match tracker {
                Some(tr) if k >= 1 && k <= tr.k() => {
                    let ratios = &tr.ratio_log()[k - 1];
                    let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
                    let hi = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    (
                        format!("{}", tr.phi_y_history()[k - 1]),
                        format!("{lo}"),
                        format!("{hi}"),
                    )
                }
                _ => (String::new(), String::new(), String::new()),
            };
            writeln!(
                w,
                "{},{},{},{},{},{}",
                self.t0 + k,
                self.pairwise_error[k],
                self.phi_history[k],
                phi_y,
                min_r,
                max_r
            )?;
        }
        Ok(())
    }

    /// Full states as a JSON array of n×d row-major matrices.
    pub fn states_json(&self) -> serde_json::Value {
        serde_json::Value::Array(
            self.states
                .iter()
                .map(|s| {
                    serde_json::to_value(
                        (0..s.n())
                            .map(|i| s.row(i).iter().copied().collect::<Vec<f64>>())
                            .collect::<Vec<_>>(),
                    )
                    .expect("f64 matrices serialize")
                })
                .collect(),
        )
    }
}

/// Running row-normalized product Y(k) = P_{𝕊(n,n)}(Ã(k,t₀)).
///
/// Internally the product is kept scaled by its first row's norm, which
/// preserves the row-norm ratios (bounded independently of k) without
/// letting magnitudes run off.
#[derive(Debug, Clone)]
pub struct ProductTracker {
    scaled: DMatrix<f64>,
    y: DMatrix<f64>,
    ratio_log: Vec<Vec<f64>>,
    phi_y_history: Vec<f64>,
    k: usize,
    factor_sigma_l: f64,
    factor_sigma_u: f64,
}

impl ProductTracker {
    /// k = 0: the product is the identity.
    pub fn new(n: usize) -> Self {
        Self {
            scaled: DMatrix::identity(n, n),
            y: DMatrix::identity(n, n),
            ratio_log: Vec::new(),
            phi_y_history: Vec::new(),
            k: 0,
            factor_sigma_l: f64::INFINITY,
            factor_sigma_u: 0.0,
        }
    }

    /// Multiplies the factor D_γ̄(AX)·A for the current state X onto the
    /// product, then renormalizes. Call with X(t₀+k) before stepping the
    /// state forward.
    pub fn advance(
        &mut self,
        a: &WeightMatrix,
        family: &BoundaryFamily,
        x: &StateMatrix,
    ) -> Result<()> {
        let diag = d_gamma_diag(a, family, x)?;
        let n = a.n();
        let mut factor = a.entries().clone();
        for i in 0..n {
            factor.row_mut(i).scale_mut(diag[i]);
        }
        for v in factor.iter() {
            if *v > 0.0 {
                self.factor_sigma_l = self.factor_sigma_l.min(*v);
            }
            self.factor_sigma_u = self.factor_sigma_u.max(*v);
        }
        let product = &factor * &self.scaled;
        let norms: Vec<f64> = (0..n).map(|i| product.row(i).norm()).collect();
        if let Some(i) = norms.iter().position(|v| *v < ZERO_ROW_THRESHOLD) {
            return Err(Error::DegenerateUpdate { index: i });
        }
        self.ratio_log.push(norms.iter().map(|v| v / norms[0]).collect());
        self.scaled = product / norms[0];
        self.y = self.scaled.clone();
        for i in 0..n {
            let scale = norms[i] / norms[0];
            self.y.row_mut(i).scale_mut(1.0 / scale);
        }
        self.phi_y_history.push(phi_max(&self.y)?);
        self.k += 1;
        Ok(())
    }

    /// Row-normalized accumulated product.
    pub fn y(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Per-step row-norm ratios ‖row_i‖₂/‖row_1‖₂ before normalization.
    pub fn ratio_log(&self) -> &[Vec<f64>] {
        &self.ratio_log
    }

    pub fn phi_y_history(&self) -> &[f64] {
        &self.phi_y_history
    }

    /// φ_max(Y) after the latest step (π/2 at k = 0 where Y = I).
    pub fn phi_y(&self) -> f64 {
        self.phi_y_history.last().copied().unwrap_or(std::f64::consts::FRAC_PI_2)
    }

    /// Smallest positive entry seen across all factors so far.
    pub fn factor_sigma_l(&self) -> f64 {
        self.factor_sigma_l
    }

    /// Largest entry seen across all factors so far.
    pub fn factor_sigma_u(&self) -> f64 {
        self.factor_sigma_u
    }
}

/// The positive unit vector the rows of Y(k) converge to.
#[derive(Debug, Clone)]
pub struct LimitVector {
    pub v: DVector<f64>,
    /// φ_max(Y) at acceptance.
    pub residual: f64,
    pub iterations: usize,
}

/// Diagonal of D_γ̄(AX): entry i is γ_i(û_i)/‖[AX]_i‖₂ for
/// û_i = [AX]_i/‖[AX]_i‖₂. All entries positive and finite under a valid
/// weight matrix; an underflowing row is a contract violation.
pub fn d_gamma_diag(
    a: &WeightMatrix,
    family: &BoundaryFamily,
    x: &StateMatrix,
) -> Result<DVector<f64>> {
    let mixed = a.entries() * x.matrix();
    let n = mixed.nrows();
    let mut diag = DVector::zeros(n);
    for i in 0..n {
        let norm = mixed.row(i).norm();
        if norm < ZERO_ROW_THRESHOLD || !norm.is_finite() {
            return Err(Error::DegenerateUpdate { index: i });
        }
        let u = RowDVector::from_iterator(mixed.ncols(), mixed.row(i).iter().map(|v| v / norm));
        diag[i] = family.gamma(i).evaluate(&u) / norm;
    }
    Ok(diag)
}

/// One update: X ↦ P_{𝕊(n,d,γ̄)}(A·X). Replacing A by αA with α > 0
/// leaves the result unchanged.
pub fn step(a: &WeightMatrix, family: &BoundaryFamily, x: &StateMatrix) -> Result<StateMatrix> {
    let mixed = a.entries() * x.matrix();
    rowwise_project(family, &mixed)
}

/// Iterates the update from X₀, recording φ_max and the maximum pairwise
/// direction error at every recorded state. Stops as soon as the error
/// drops below `tol`, the iteration budget runs out, or an update row
/// underflows.
pub fn simulate(
    a: &WeightMatrix,
    family: &BoundaryFamily,
    x0: &StateMatrix,
    max_iters: usize,
    tol: f64,
) -> Result<SimulationTrace> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance must be positive, got {tol}")));
    }
    let mut states = vec![x0.clone()];
    let mut phi_history = vec![phi_max(x0.matrix())?];
    let mut pairwise = vec![pairwise_direction_error(x0.matrix())?];
    let stop_reason = loop {
        if *pairwise.last().expect("nonempty") < tol {
            break StopReason::Converged;
        }
        if states.len() - 1 >= max_iters {
            break StopReason::MaxIters;
        }
        match step(a, family, states.last().expect("nonempty")) {
            Ok(next) => {
                phi_history.push(phi_max(next.matrix())?);
                pairwise.push(pairwise_direction_error(next.matrix())?);
                states.push(next);
            }
            Err(Error::ZeroRow { .. }) | Err(Error::DegenerateUpdate { .. }) => {
                break StopReason::Degenerate;
            }
            Err(e) => return Err(e),
        }
    };
    Ok(SimulationTrace { states, phi_history, pairwise_error: pairwise, t0: 0, stop_reason, tol })
}

/// Runs the iteration and the product tracker jointly until
/// φ_max(Y) < `tol_phi`, then returns the normalized mean of Y's rows.
/// Any single row would differ from it by at most the residual.
pub fn estimate_v(
    a: &WeightMatrix,
    family: &BoundaryFamily,
    x0: &StateMatrix,
    tol_phi: f64,
    max_iters: usize,
) -> Result<LimitVector> {
    let mut tracker = ProductTracker::new(a.n());
    let mut x = x0.clone();
    for k in 1..=max_iters {
        tracker.advance(a, family, &x)?;
        if tracker.phi_y() < tol_phi {
            return Ok(LimitVector {
                v: mean_unit_row(tracker.y())?,
                residual: tracker.phi_y(),
                iterations: k,
            });
        }
        x = step(a, family, &x)?;
    }
    Err(Error::NonConvergence { iterations: max_iters, residual: tracker.phi_y() })
}

fn mean_unit_row(y: &DMatrix<f64>) -> Result<DVector<f64>> {
    let n = y.nrows();
    let mut v = DVector::zeros(n);
    for i in 0..n {
        for j in 0..n {
            v[j] += y[(i, j)];
        }
    }
    let norm = v.norm();
    v /= norm;
    if v.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::InvariantViolation(
            "limit vector of the normalized product must be entrywise positive".into(),
        ));
    }
    Ok(v)
}

/// Plain linear consensus update X ↦ A·X with no projection. Serves as
/// the baseline whose stability depends on the scaling of A.
pub fn linear_step(a: &DMatrix<f64>, x: &DMatrix<f64>) -> DMatrix<f64> {
    a * x
}
