//! Experiment configuration, single runs, and Monte-Carlo sweeps.
//!
//! A config plus a seed reproduces every output byte for byte. Sweeps
//! derive run r's seed as base_seed + r, so parallel scheduling never
//! changes values, and aggregate in run-index order regardless of
//! completion order.

mod figures;

pub use figures::{reproduce_figures, FigureTarget};

use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    condition_report, fit_rate, predict, theorem1_decide, ConditionReport, Decision,
    DecisionParams, RateEstimate,
};
use crate::dynamics::ProductTracker;
use crate::error::{Error, Result};
use crate::geometry::{
    rowwise_project, BoundaryFamily, DirectionalFunction, GammaDescriptor, LpExponent, StateMatrix,
};
use crate::graph::{DirectedGraph, WeightMatrix};

/// Size given directly or drawn uniformly from an inclusive range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SizeSpec {
    Fixed(usize),
    Range { min: usize, max: usize },
}

impl SizeSpec {
    fn resolve<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<usize> {
        match self {
            SizeSpec::Fixed(v) => Ok(*v),
            SizeSpec::Range { min, max } => {
                if min > max {
                    return Err(Error::Config(format!("size range {min}..{max} is empty")));
                }
                Ok(rng.random_range(*min..=*max))
            }
        }
    }
}

/// How the agents' boundaries are built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundarySpec {
    /// Independent random star boundary per agent.
    RandomStar,
    /// One random star boundary shared by every agent.
    SharedStar,
    /// Per agent, a coin flip between a random ℓp-sphere and a random
    /// star boundary.
    Mixed,
    /// The same ℓp-sphere for every agent.
    Lp { p: LpExponent, r: f64 },
    /// One descriptor per agent.
    Explicit(Vec<GammaDescriptor>),
}

/// How the interaction graph is built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GraphSpec {
    Random { extra_edge_prob: f64 },
    Explicit(DirectedGraph),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightsSpec {
    Random,
    Explicit(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum X0Spec {
    /// Element-wise standard normal draw projected onto the boundaries.
    GaussianProjected,
    /// Explicit matrix, radially projected onto the boundaries (a no-op
    /// for states already on them).
    Explicit(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub direction_tol: f64,
    pub phi_tol: f64,
    pub decision_threshold: f64,
    pub rank_rel_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { direction_tol: 1e-9, phi_tol: 1e-10, decision_threshold: 1e-8, rank_rel_tol: 1e-10 }
    }
}

fn default_max_iters() -> usize {
    100_000
}

/// Complete description of one experiment. See the shipped files under
/// `configs/` for the JSON shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n: SizeSpec,
    pub d: SizeSpec,
    pub boundary: BoundarySpec,
    pub graph: GraphSpec,
    pub weights: WeightsSpec,
    pub x0: X0Spec,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn decision_params(&self) -> DecisionParams {
        DecisionParams {
            tol_phi: self.tolerances.phi_tol,
            decision_threshold: self.tolerances.decision_threshold,
            direction_tol: self.tolerances.direction_tol,
            max_iters: self.max_iters,
        }
    }

    /// Stable hash of the canonical JSON form.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        format!("{:016x}", fnv1a64(text.as_bytes()))
    }
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for b in bytes {
        hash ^= *b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// A fully built (family, weights, X₀) triple.
#[derive(Debug, Clone)]
pub struct Instance {
    pub family: BoundaryFamily,
    pub weights: WeightMatrix,
    pub x0: StateMatrix,
}

impl Instance {
    pub fn n(&self) -> usize {
        self.family.n()
    }

    pub fn d(&self) -> usize {
        self.family.dim()
    }
}

/// Materializes a config under one seed. Draw order is fixed (n, d,
/// boundaries, graph, weights, X₀) so instances are reproducible.
pub fn build_instance(config: &ExperimentConfig, seed: u64) -> Result<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = config.n.resolve(&mut rng)?;
    let d = config.d.resolve(&mut rng)?;
    if n < 2 || d < 2 {
        return Err(Error::Config(format!("need n >= 2 and d >= 2, got n={n}, d={d}")));
    }

    let family = match &config.boundary {
        BoundarySpec::RandomStar => BoundaryFamily::new(
            (0..n)
                .map(|_| DirectionalFunction::random_star_from(d, &mut rng))
                .collect::<Result<Vec<_>>>()?,
        )?,
        BoundarySpec::SharedStar => {
            let gamma = DirectionalFunction::random_star_from(d, &mut rng)?;
            BoundaryFamily::new(vec![gamma; n])?
        }
        BoundarySpec::Mixed => BoundaryFamily::new(
            (0..n)
                .map(|_| {
                    if rng.random_bool(0.5) {
                        let p = match rng.random_range(0..4) {
                            0 => LpExponent::Finite(1),
                            1 => LpExponent::Finite(2),
                            2 => LpExponent::Finite(3),
                            _ => LpExponent::Infinity,
                        };
                        let r = rng.random_range(0.5..=2.0);
                        DirectionalFunction::lp(p, r, d)
                    } else {
                        DirectionalFunction::random_star_from(d, &mut rng)
                    }
                })
                .collect::<Result<Vec<_>>>()?,
        )?,
        BoundarySpec::Lp { p, r } => BoundaryFamily::lp(*p, *r, n, d)?,
        BoundarySpec::Explicit(descriptors) => {
            if descriptors.len() != n {
                return Err(Error::Config(format!(
                    "boundary list has {} descriptors for n={n}",
                    descriptors.len()
                )));
            }
            BoundaryFamily::new(
                descriptors
                    .iter()
                    .map(|desc| DirectionalFunction::from_descriptor(desc.clone(), d))
                    .collect::<Result<Vec<_>>>()?,
            )?
        }
    };

    let graph = match &config.graph {
        GraphSpec::Random { extra_edge_prob } => {
            DirectedGraph::random_scc_from(n, *extra_edge_prob, &mut rng)?
        }
        GraphSpec::Explicit(g) => {
            if g.n() != n {
                return Err(Error::Config(format!("graph has {} nodes for n={n}", g.n())));
            }
            g.clone()
        }
    };

    let weights = match &config.weights {
        WeightsSpec::Random => WeightMatrix::random_from(&graph, &family, &mut rng)?,
        WeightsSpec::Explicit(rows) => {
            if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                return Err(Error::Config(format!("weight matrix must be {n}x{n}")));
            }
            let entries = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
            match &config.graph {
                GraphSpec::Explicit(_) => WeightMatrix::new(entries, graph)?,
                GraphSpec::Random { .. } => WeightMatrix::from_entries(entries)?,
            }
        }
    };
    if !weights.check_assumption2(&family)? {
        return Err(Error::Config(
            "weight matrix does not satisfy the well-posedness assumption for this family".into(),
        ));
    }

    let x0 = match &config.x0 {
        X0Spec::GaussianProjected => {
            let raw = DMatrix::from_fn(n, d, |_, _| StandardNormal.sample(&mut rng));
            rowwise_project(&family, &raw)?
        }
        X0Spec::Explicit(rows) => {
            if rows.len() != n || rows.iter().any(|r| r.len() != d) {
                return Err(Error::Config(format!("x0 must be {n}x{d}")));
            }
            let raw = DMatrix::from_fn(n, d, |i, j| rows[i][j]);
            rowwise_project(&family, &raw)?
        }
    };

    Ok(Instance { family, weights, x0 })
}

/// Boolean summary of the three sufficient conditions.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ConditionFlags {
    pub halfspace: bool,
    pub full_rank: bool,
    pub cone_column: bool,
}

impl From<&ConditionReport> for ConditionFlags {
    fn from(report: &ConditionReport) -> Self {
        Self {
            halfspace: report.halfspace.holds,
            full_rank: report.full_rank.holds,
            cone_column: report.cone_column.holds,
        }
    }
}

/// One run's outcome. Wall time is kept out of the serialized form so
/// outputs stay byte-identical across repetitions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub seed: u64,
    pub n: usize,
    pub d: usize,
    pub consensus_predicted: bool,
    pub empirical_converged: bool,
    pub empirical_agreement: bool,
    pub iterations: usize,
    pub v_x0_norm: f64,
    pub rate_slope: Option<f64>,
    pub rate_r2: Option<f64>,
    pub conditions: ConditionFlags,
    #[serde(skip)]
    pub wall_time_s: f64,
}

/// Builds the instance for `config.seed`, decides it, simulates, and
/// summarizes.
pub fn run_single(config: &ExperimentConfig) -> Result<(RunRecord, Decision, Instance)> {
    let start = Instant::now();
    let instance = build_instance(config, config.seed)?;
    let params = config.decision_params();
    let decision = theorem1_decide(&instance.weights, &instance.family, &instance.x0, &params)?;
    let conditions =
        condition_report(&instance.weights, &instance.x0, config.tolerances.rank_rel_tol)?;
    let rate = fit_rate(&decision.trace, 0.5).ok();
    let record = RunRecord {
        config_hash: config.hash(),
        seed: config.seed,
        n: instance.n(),
        d: instance.d(),
        consensus_predicted: decision.verdict.consensus_predicted,
        empirical_converged: decision.verdict.empirical_converged,
        empirical_agreement: decision.verdict.empirical_agreement,
        iterations: decision.trace.iterations(),
        v_x0_norm: decision.verdict.v_x0_norm,
        rate_slope: rate.map(|r| r.slope),
        rate_r2: rate.map(|r| r.r2),
        conditions: ConditionFlags::from(&conditions),
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    Ok((record, decision, instance))
}

/// A run whose prediction and simulation disagreed, with everything
/// needed to replay it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepFailure {
    pub run_index: usize,
    pub seed: u64,
    pub record: RunRecord,
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepSummary {
    pub runs: usize,
    pub consensus_fraction: f64,
    pub slope_min: Option<f64>,
    pub slope_median: Option<f64>,
    pub failures: Vec<SweepFailure>,
}

/// Runs `runs` independent instances with seeds base_seed, base_seed+1, …
/// in parallel, and folds the records in run-index order.
pub fn sweep(
    config: &ExperimentConfig,
    runs: usize,
    base_seed: u64,
    jobs: usize,
) -> Result<(SweepSummary, Vec<RunRecord>)> {
    if runs == 0 {
        return Err(Error::Config("sweep needs at least one run".into()));
    }
    let work = |r: usize| -> Result<RunRecord> {
        let mut run_config = config.clone();
        run_config.seed = base_seed.wrapping_add(r as u64);
        let (record, _, _) = run_single(&run_config)?;
        Ok(record)
    };
    let records: Vec<RunRecord> = if jobs == 1 {
        (0..runs).map(work).collect::<Result<_>>()?
    } else {
        let run_all = || (0..runs).into_par_iter().map(work).collect::<Result<Vec<_>>>();
        if jobs == 0 {
            run_all()?
        } else {
            rayon::ThreadPoolBuilder::new()
                .num_threads(jobs)
                .build()
                .map_err(|e| Error::Config(format!("worker pool: {e}")))?
                .install(run_all)?
        }
    };

    let converged = records.iter().filter(|r| r.empirical_converged).count();
    let mut slopes: Vec<f64> = records.iter().filter_map(|r| r.rate_slope).collect();
    slopes.sort_by(|a, b| a.partial_cmp(b).expect("slopes are finite"));
    let failures = records
        .iter()
        .enumerate()
        .filter(|(_, r)| !r.empirical_agreement)
        .map(|(i, r)| {
            let mut config = config.clone();
            config.seed = r.seed;
            SweepFailure { run_index: i, seed: r.seed, record: r.clone(), config }
        })
        .collect();
    let summary = SweepSummary {
        runs,
        consensus_fraction: converged as f64 / runs as f64,
        slope_min: slopes.first().copied(),
        slope_median: if slopes.is_empty() { None } else { Some(slopes[slopes.len() / 2]) },
        failures,
    };
    Ok((summary, records))
}

/// Condition checks plus the product-limit decision, with no confirming
/// simulation. Requires explicit X₀ and explicit weights in the config.
pub fn check_conditions(config: &ExperimentConfig) -> Result<(ConditionReport, f64, bool)> {
    if !matches!(config.x0, X0Spec::Explicit(_)) {
        return Err(Error::Config("check needs an explicit x0".into()));
    }
    if !matches!(config.weights, WeightsSpec::Explicit(_)) {
        return Err(Error::Config("check needs an explicit weight matrix".into()));
    }
    let instance = build_instance(config, config.seed)?;
    let report =
        condition_report(&instance.weights, &instance.x0, config.tolerances.rank_rel_tol)?;
    let params = config.decision_params();
    let prediction = predict(&instance.weights, &instance.family, &instance.x0, &params)?;
    Ok((report, prediction.v_x0_norm, prediction.consensus_predicted))
}

/// Replays the recorded trajectory through a fresh tracker so trace
/// exports can include the product diagnostics.
pub fn tracker_for(decision: &Decision, instance: &Instance) -> Result<ProductTracker> {
    let mut tracker = ProductTracker::new(instance.n());
    for state in &decision.trace.states[..decision.trace.iterations()] {
        tracker.advance(&instance.weights, &instance.family, state)?;
    }
    Ok(tracker)
}

/// Verdict JSON with stable field names.
pub fn verdict_json(
    decision: &Decision,
    conditions: &ConditionReport,
    rate: Option<&RateEstimate>,
) -> serde_json::Value {
    serde_json::json!({
        "vX0_norm": decision.verdict.v_x0_norm,
        "consensus_predicted": decision.verdict.consensus_predicted,
        "limit_direction": decision.verdict.limit_direction.as_ref()
            .map(|d| d.iter().copied().collect::<Vec<f64>>()),
        "empirical_converged": decision.verdict.empirical_converged,
        "empirical_agreement": decision.verdict.empirical_agreement,
        "iterations": decision.trace.iterations(),
        "conditions": conditions,
        "rate": rate.map(|r| serde_json::json!({"slope": r.slope, "r2": r.r2})),
    })
}
