//! Star boundaries and radial projections.
//!
//! A *directional function* γ maps unit directions u ∈ 𝕊^{d−1} to positive
//! radii, bounded above and below by positive constants. The set
//! {γ(u)·u : u ∈ 𝕊^{d−1}} is the boundary of a star-convex set at the
//! origin (a *star boundary*); ℓp-spheres are the special case
//! γ(u) = r/‖u‖_p.
//!
//! The *radial projection* maps a nonzero point x onto the boundary along
//! its own ray: x ↦ γ(x/‖x‖₂)·x/‖x‖₂. It is idempotent on its image and
//! invariant under positive scaling of x.

use nalgebra::{DMatrix, DVector, RowDVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A row of a matrix counts as zero only on true underflow; valid weight
/// matrices never produce zero rows (well-posedness of the update), so
/// anything above this is treated as a genuine direction.
pub const ZERO_ROW_THRESHOLD: f64 = 1e-300;

/// Exponent of an ℓp-norm, a positive integer or ∞.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpExponent {
    Finite(u32),
    Infinity,
}

impl LpExponent {
    /// 1/p, with the convention 1/∞ = 0.
    pub fn inv(self) -> f64 {
        match self {
            LpExponent::Finite(p) => 1.0 / p as f64,
            LpExponent::Infinity => 0.0,
        }
    }

    fn norm(self, u: &RowDVector<f64>) -> f64 {
        match self {
            LpExponent::Finite(1) => u.iter().map(|v| v.abs()).sum(),
            LpExponent::Finite(2) => u.norm(),
            LpExponent::Finite(p) => {
                let s: f64 = u.iter().map(|v| v.abs().powi(p as i32)).sum();
                s.powf(1.0 / p as f64)
            }
            LpExponent::Infinity => u.iter().fold(0.0_f64, |m, v| m.max(v.abs())),
        }
    }
}

impl Serialize for LpExponent {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            LpExponent::Finite(p) => s.serialize_u32(*p),
            LpExponent::Infinity => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for LpExponent {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(u32),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(p) => Ok(LpExponent::Finite(p)),
            Raw::Str(s) if s == "inf" => Ok(LpExponent::Infinity),
            Raw::Str(s) => Err(serde::de::Error::custom(format!(
                "expected a positive integer or \"inf\", got {s:?}"
            ))),
        }
    }
}

/// Construction recipe for a directional function. This is the serialized
/// form; evaluation and bounds are derived from it deterministically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GammaDescriptor {
    Lp {
        p: LpExponent,
        r: f64,
    },
    Star {
        base: f64,
        anchors: Vec<Vec<f64>>,
        weights: Vec<f64>,
        powers: Vec<u32>,
    },
    Const {
        c: f64,
    },
}

/// A positive, bounded, continuous map on the unit sphere defining one
/// star boundary. Evaluation is deterministic: the same input direction
/// always yields the bitwise-identical radius.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionalFunction {
    descriptor: GammaDescriptor,
    dim: usize,
    gamma_min: f64,
    gamma_max: f64,
}

impl DirectionalFunction {
    /// γ(u) = r/‖u‖_p: the ℓp-sphere of radius r.
    ///
    /// The bounds are the exact extremes of r/‖u‖_p over the unit sphere.
    /// On 𝕊^{d−1}, ‖u‖_p ranges over [1, d^{1/p−1/2}] for p ≤ 2 and over
    /// [d^{1/p−1/2}, 1] for p ≥ 2, so
    /// γ_min = r·min(1, d^{1/2−1/p}) and γ_max = r·max(1, d^{1/2−1/p}).
    pub fn lp(p: LpExponent, r: f64, d: usize) -> Result<Self> {
        if let LpExponent::Finite(0) = p {
            return Err(Error::InvalidParameter("lp exponent p must be >= 1".into()));
        }
        if !(r > 0.0) {
            return Err(Error::InvalidParameter(format!("lp radius must be positive, got {r}")));
        }
        if d < 2 {
            return Err(Error::InvalidParameter(format!("dimension must be >= 2, got {d}")));
        }
        Self::from_descriptor(GammaDescriptor::Lp { p, r }, d)
    }

    /// The constant function γ ≡ c (a Euclidean sphere of radius c).
    pub fn constant(c: f64, d: usize) -> Result<Self> {
        if !(c > 0.0) {
            return Err(Error::InvalidParameter(format!("constant radius must be positive, got {c}")));
        }
        Self::from_descriptor(GammaDescriptor::Const { c }, d)
    }

    /// The unit Euclidean sphere in ℝᵈ.
    pub fn unit_sphere(d: usize) -> Self {
        Self::lp(LpExponent::Finite(2), 1.0, d).expect("unit sphere parameters are valid")
    }

    /// Random non-trivial star boundary:
    /// γ(u) = base + Σ_k w_k·max(0, u·a_k)^{q_k}
    /// with K ∈ {d,…,4d} unit anchor vectors a_k, positive scale factors
    /// w_k, and integer powers q_k ∈ {1,…,10}. base is drawn from
    /// [0.5, 1.5] and each w_k from (0, 2].
    pub fn random_star(d: usize, seed: u64) -> Result<Self> {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::random_star_from(d, &mut rng)
    }

    /// Same as [`random_star`](Self::random_star) drawing from a caller-supplied RNG.
    pub fn random_star_from<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidParameter(format!("dimension must be >= 2, got {d}")));
        }
        let k = rng.random_range(d..=4 * d);
        let base = rng.random_range(0.5..=1.5);
        let mut anchors = Vec::with_capacity(k);
        let mut weights = Vec::with_capacity(k);
        let mut powers = Vec::with_capacity(k);
        for _ in 0..k {
            anchors.push(random_unit_vector(d, rng).iter().copied().collect());
            // strictly positive weight in (0, 2]
            weights.push(2.0 - rng.random_range(0.0..2.0));
            powers.push(rng.random_range(1..=10) as u32);
        }
        Self::from_descriptor(GammaDescriptor::Star { base, anchors, weights, powers }, d)
    }

    /// Validates a descriptor and derives the evaluation bounds.
    ///
    /// Star bounds are the conservative analytic pair (base, base + Σ w_k),
    /// not tight extremes over the sphere.
    pub fn from_descriptor(descriptor: GammaDescriptor, dim: usize) -> Result<Self> {
        if dim < 2 {
            return Err(Error::InvalidParameter(format!("dimension must be >= 2, got {dim}")));
        }
        let (gamma_min, gamma_max) = match &descriptor {
            GammaDescriptor::Lp { p, r } => {
                if let LpExponent::Finite(0) = p {
                    return Err(Error::InvalidParameter("lp exponent p must be >= 1".into()));
                }
                if !(*r > 0.0) {
                    return Err(Error::InvalidParameter(format!("lp radius must be positive, got {r}")));
                }
                let scale = (dim as f64).powf(0.5 - p.inv());
                (r * scale.min(1.0), r * scale.max(1.0))
            }
            GammaDescriptor::Star { base, anchors, weights, powers } => {
                if !(*base > 0.0) {
                    return Err(Error::InvalidParameter(format!("star base must be positive, got {base}")));
                }
                if anchors.len() != weights.len() || anchors.len() != powers.len() {
                    return Err(Error::DimensionMismatch {
                        expected: format!("{} anchors/weights/powers", anchors.len()),
                        got: format!("{} weights, {} powers", weights.len(), powers.len()),
                    });
                }
                for a in anchors {
                    if a.len() != dim {
                        return Err(Error::DimensionMismatch {
                            expected: format!("anchor of length {dim}"),
                            got: format!("length {}", a.len()),
                        });
                    }
                    let n: f64 = a.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if (n - 1.0).abs() > 1e-8 {
                        return Err(Error::InvalidParameter(format!(
                            "star anchors must be unit vectors (norm {n})"
                        )));
                    }
                }
                if weights.iter().any(|w| !(*w > 0.0)) {
                    return Err(Error::InvalidParameter("star weights must be positive".into()));
                }
                if powers.iter().any(|q| *q == 0) {
                    return Err(Error::InvalidParameter("star powers must be >= 1".into()));
                }
                (*base, base + weights.iter().sum::<f64>())
            }
            GammaDescriptor::Const { c } => {
                if !(*c > 0.0) {
                    return Err(Error::InvalidParameter(format!("constant radius must be positive, got {c}")));
                }
                (*c, *c)
            }
        };
        Ok(Self { descriptor, dim, gamma_min, gamma_max })
    }

    /// Radius in the direction of the unit vector u.
    pub fn evaluate(&self, u: &RowDVector<f64>) -> f64 {
        match &self.descriptor {
            GammaDescriptor::Lp { p, r } => r / p.norm(u),
            GammaDescriptor::Star { base, anchors, weights, powers } => {
                let mut value = *base;
                for ((a, w), q) in anchors.iter().zip(weights).zip(powers) {
                    // clamp guards |u·a| > 1 from rounding so the analytic
                    // upper bound base + Σw stays valid
                    let dot: f64 = u.iter().zip(a).map(|(x, y)| x * y).sum();
                    let dot = dot.clamp(-1.0, 1.0);
                    if dot > 0.0 {
                        value += w * dot.powi(*q as i32);
                    }
                }
                value
            }
            GammaDescriptor::Const { c } => *c,
        }
    }

    pub fn gamma_min(&self) -> f64 {
        self.gamma_min
    }

    pub fn gamma_max(&self) -> f64 {
        self.gamma_max
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn descriptor(&self) -> &GammaDescriptor {
        &self.descriptor
    }

    /// True for the unit Euclidean sphere (ℓ₂ with r = 1, or γ ≡ 1).
    pub fn is_unit_sphere(&self) -> bool {
        match &self.descriptor {
            GammaDescriptor::Lp { p: LpExponent::Finite(2), r } => *r == 1.0,
            GammaDescriptor::Const { c } => *c == 1.0,
            _ => false,
        }
    }
}

impl Serialize for DirectionalFunction {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.descriptor.serialize(s)
    }
}

/// Ordered list of n directional functions γ̄ = (γ₁,…,γₙ), all on the same
/// unit sphere 𝕊^{d−1}. States live on the product of their boundaries.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryFamily {
    gammas: Vec<DirectionalFunction>,
    dim: usize,
}

impl BoundaryFamily {
    pub fn new(gammas: Vec<DirectionalFunction>) -> Result<Self> {
        if gammas.len() < 2 {
            return Err(Error::InvalidParameter(format!(
                "a boundary family needs at least 2 agents, got {}",
                gammas.len()
            )));
        }
        let dim = gammas[0].dim();
        if gammas.iter().any(|g| g.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: format!("all directional functions in dimension {dim}"),
                got: "mixed dimensions".into(),
            });
        }
        Ok(Self { gammas, dim })
    }

    /// n copies of the unit Euclidean sphere in ℝᵈ.
    pub fn unit_spheres(n: usize, d: usize) -> Result<Self> {
        Self::new((0..n).map(|_| DirectionalFunction::unit_sphere(d)).collect())
    }

    /// n copies of the same ℓp-sphere.
    pub fn lp(p: LpExponent, r: f64, n: usize, d: usize) -> Result<Self> {
        let gamma = DirectionalFunction::lp(p, r, d)?;
        Self::new(vec![gamma; n])
    }

    pub fn n(&self) -> usize {
        self.gammas.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn gamma(&self, i: usize) -> &DirectionalFunction {
        &self.gammas[i]
    }

    pub fn gammas(&self) -> &[DirectionalFunction] {
        &self.gammas
    }

    pub fn all_unit_spheres(&self) -> bool {
        self.gammas.iter().all(|g| g.is_unit_sphere())
    }
}

/// n×d matrix whose i-th row is agent i's state. Rows are never zero.
#[derive(Debug, Clone, PartialEq)]
pub struct StateMatrix {
    rows: DMatrix<f64>,
}

impl StateMatrix {
    /// Wraps a matrix after checking that no row underflows to zero.
    pub fn new(rows: DMatrix<f64>) -> Result<Self> {
        if let Some(i) = first_zero_row(&rows) {
            return Err(Error::ZeroRow { index: i });
        }
        Ok(Self { rows })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.rows
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.rows
    }

    pub fn n(&self) -> usize {
        self.rows.nrows()
    }

    pub fn dim(&self) -> usize {
        self.rows.ncols()
    }

    pub fn row(&self, i: usize) -> RowDVector<f64> {
        RowDVector::from_iterator(self.rows.ncols(), self.rows.row(i).iter().copied())
    }

    /// Unit direction of row i.
    pub fn direction(&self, i: usize) -> RowDVector<f64> {
        let r = self.row(i);
        let n = r.norm();
        r / n
    }

    /// All row directions as a matrix in 𝕊(n,d).
    pub fn directions(&self) -> DMatrix<f64> {
        let mut m = self.rows.clone();
        for i in 0..m.nrows() {
            let n = m.row(i).norm();
            m.row_mut(i).scale_mut(1.0 / n);
        }
        m
    }

    pub fn max_row_norm(&self) -> f64 {
        (0..self.n()).map(|i| self.rows.row(i).norm()).fold(0.0, f64::max)
    }

    /// ‖x_i‖₂ = γ_i(x_i/‖x_i‖₂) within `tol` for every row.
    pub fn is_on_boundary(&self, family: &BoundaryFamily, tol: f64) -> bool {
        if family.n() != self.n() || family.dim() != self.dim() {
            return false;
        }
        (0..self.n()).all(|i| {
            let norm = self.rows.row(i).norm();
            let radius = family.gamma(i).evaluate(&self.direction(i));
            (norm - radius).abs() <= tol
        })
    }
}

fn first_zero_row(m: &DMatrix<f64>) -> Option<usize> {
    (0..m.nrows()).find(|&i| m.row(i).norm() < ZERO_ROW_THRESHOLD)
}

/// Radially projects a nonzero x onto the star boundary of γ:
/// returns γ(x/‖x‖₂)·x/‖x‖₂.
pub fn radial_project(gamma: &DirectionalFunction, x: &RowDVector<f64>) -> Result<RowDVector<f64>> {
    if x.len() != gamma.dim() {
        return Err(Error::DimensionMismatch {
            expected: format!("vector of length {}", gamma.dim()),
            got: format!("length {}", x.len()),
        });
    }
    let norm = x.norm();
    if norm < ZERO_ROW_THRESHOLD {
        return Err(Error::ZeroRow { index: 0 });
    }
    let u = x / norm;
    let radius = gamma.evaluate(&u);
    Ok(u * radius)
}

/// Row-wise radial projection onto 𝕊(n,d,γ̄): row i goes onto the boundary
/// of γ_i. Reports the index of the first zero row.
pub fn rowwise_project(family: &BoundaryFamily, m: &DMatrix<f64>) -> Result<StateMatrix> {
    if m.nrows() != family.n() || m.ncols() != family.dim() {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{} matrix", family.n(), family.dim()),
            got: format!("{}x{}", m.nrows(), m.ncols()),
        });
    }
    let mut out = m.clone();
    for i in 0..m.nrows() {
        let norm = out.row(i).norm();
        if norm < ZERO_ROW_THRESHOLD {
            return Err(Error::ZeroRow { index: i });
        }
        let u = RowDVector::from_iterator(out.ncols(), out.row(i).iter().map(|v| v / norm));
        let radius = family.gamma(i).evaluate(&u);
        out.row_mut(i).copy_from(&(u * radius));
    }
    StateMatrix::new(out)
}

/// Largest angle (radians) between any two rows of M after normalization:
/// max over pairs of arccos([M]_i[M]_jᵀ / (‖[M]_i‖₂‖[M]_j‖₂)).
///
/// Cosines are clamped to [−1, 1] before arccos since rounding can push
/// them past 1.
pub fn phi_max(m: &DMatrix<f64>) -> Result<f64> {
    let norms: Vec<f64> = (0..m.nrows()).map(|i| m.row(i).norm()).collect();
    if let Some(i) = norms.iter().position(|&n| n < ZERO_ROW_THRESHOLD) {
        return Err(Error::ZeroRow { index: i });
    }
    let mut worst: f64 = 1.0;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.nrows() {
            let cos = m.row(i).dot(&m.row(j)) / (norms[i] * norms[j]);
            worst = worst.min(cos.clamp(-1.0, 1.0));
        }
    }
    Ok(worst.acos())
}

/// Maximum pairwise chordal distance between row directions:
/// max over i,j of ‖x_i/‖x_i‖₂ − x_j/‖x_j‖₂‖₂. Always in [0, 2].
pub fn pairwise_direction_error(m: &DMatrix<f64>) -> Result<f64> {
    let phi = phi_max(m)?;
    // chord length of the maximal angle
    Ok(2.0 * (phi / 2.0).sin())
}

/// Membership of c in C⊥(A) = {x : ∃y ∈ C(A), y ≠ 0, yxᵀ = 0}, where C(A)
/// is the minimum cone spanned by the rows of the nonnegative matrix A.
///
/// Since the rows are nonnegative and nonzero, a nontrivial conical
/// combination y with ycᵀ = 0 exists exactly when the entries of Acᵀ do
/// not all share one strict sign.
pub fn cone_perp_membership(a: &DMatrix<f64>, c: &DVector<f64>) -> Result<bool> {
    if a.ncols() != c.len() {
        return Err(Error::DimensionMismatch {
            expected: format!("vector of length {}", a.ncols()),
            got: format!("length {}", c.len()),
        });
    }
    if c.norm() < ZERO_ROW_THRESHOLD {
        return Err(Error::ZeroRow { index: 0 });
    }
    if a.iter().any(|v| *v < 0.0) {
        return Err(Error::Precondition("cone generators must be nonnegative".into()));
    }
    if let Some(i) = first_zero_row(a) {
        return Err(Error::ZeroRow { index: i });
    }
    let products = a * c;
    let c_norm = c.norm();
    let all_positive = (0..a.nrows()).all(|i| {
        let tol = 1e-12 * a.row(i).norm() * c_norm;
        products[i] > tol
    });
    let all_negative = (0..a.nrows()).all(|i| {
        let tol = 1e-12 * a.row(i).norm() * c_norm;
        products[i] < -tol
    });
    Ok(!(all_positive || all_negative))
}

/// Uniform random unit vector via a normalized standard Gaussian draw.
pub fn random_unit_vector<R: Rng + ?Sized>(d: usize, rng: &mut R) -> RowDVector<f64> {
    loop {
        let v = RowDVector::from_iterator(d, (0..d).map(|_| StandardNormal.sample(rng)));
        let n = v.norm();
        if n > 1e-8 {
            return v / n;
        }
    }
}
