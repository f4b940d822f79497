//! Discrete-time consensus on star boundaries.
//!
//! n agents hold states on (possibly different) star boundaries in ℝᵈ and
//! repeatedly replace them with radially projected conical combinations of
//! their neighbors' states, X(t+1) = P_{𝕊(n,d,γ̄)}(A·X(t)), over a
//! directed strongly connected interaction graph. The library provides
//!
//! - the boundary geometry and projections ([`geometry`]),
//! - graph and weight-matrix construction and validation ([`graph`]),
//! - the iteration, its normalized product-matrix form, and the limit
//!   vector v(X₀) ([`dynamics`]),
//! - the consensus decision test v(X₀)·X₀ ≠ 0 with sufficient-condition
//!   checks, rate fits, and continuity probes ([`analysis`]),
//! - the distributed relative-frame formulation on the unit sphere
//!   ([`relative`]),
//! - configuration, Monte-Carlo sweeps, and figure data exports
//!   ([`harness`]).

pub mod analysis;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod graph;
pub mod harness;
pub mod relative;

pub use analysis::{
    check_cone_column, check_halfspace, check_rank, condition_report, continuity_probe, fit_rate,
    predict, theorem1_decide, ConditionReport, ConsensusVerdict, Decision, DecisionParams,
    RateEstimate,
};
pub use dynamics::{
    d_gamma_diag, estimate_v, linear_step, simulate, step, LimitVector, ProductTracker,
    SimulationTrace, StopReason,
};
pub use error::{Error, Result};
pub use geometry::{
    cone_perp_membership, pairwise_direction_error, phi_max, radial_project, rowwise_project,
    BoundaryFamily, DirectionalFunction, GammaDescriptor, LpExponent, StateMatrix,
};
pub use graph::{DirectedGraph, Lemma1Report, WeightMatrix};
pub use harness::{
    build_instance, check_conditions, reproduce_figures, run_single, sweep, BoundarySpec,
    ExperimentConfig, FigureTarget, GraphSpec, Instance, RunRecord, SizeSpec, SweepSummary,
    Tolerances, WeightsSpec, X0Spec,
};
pub use relative::{equivalence_check, relative_step, to_local, FrameSet, LocalStateSet};
