//! Weak-contraction operators on box domains.
//!
//! An [`Operator`] is a self-map `T` of a closed axis-aligned box together
//! with declared constants `delta ∈ (0,1)` and `L ≥ 0` certifying the
//! weak-contraction (almost-contraction) condition
//!
//! ```text
//! ‖Tx − Ty‖ ≤ delta·‖x − y‖ + L·‖y − Ty‖      for all x, y in the box.
//! ```
//!
//! The condition is universally quantified, so it can only be sampled:
//! [`Operator::verify_weak_contraction`] sweeps all ordered pairs of a grid
//! and reports the worst violation. [`Operator::perturb`] builds an
//! approximate operator `T~` with `‖Tx − T~x‖ ≤ ε`, clamped back into the
//! box so that iteration schemes never leave the domain.

use serde::Deserialize;
use thiserror::Error;

use crate::norm::NormKind;

/// Componentwise slack accepted by fixed-point residual checks.
pub const FIXED_POINT_RESIDUAL_TOL: f64 = 1e-12;

/// Violations of the weak-contraction inequality up to this amount still
/// count as a pass (floating-point headroom on an exact-zero ideal).
pub const CONTRACTION_PASS_TOL: f64 = 1e-12;

/// Errors raised by operator construction, evaluation, and verification.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum OperatorError {
    /// A point lies outside the domain box (checked with zero tolerance).
    #[error("component {component} = {value} outside [{lower}, {upper}]")]
    Domain {
        component: usize,
        value: f64,
        lower: f64,
        upper: f64,
    },
    /// Grid verification is limited to dimensions 1–3.
    #[error("domain dimension {dim} exceeds the grid-verification limit of 3")]
    Dimension { dim: usize },
    /// A vector has the wrong number of components for this operator.
    #[error("expected a vector of dimension {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    /// The definition itself is unusable (bad constants, no self-map, ...).
    #[error("invalid operator definition: {0}")]
    Invalid(String),
}

/// A closed axis-aligned box `[lower_0, upper_0] × ... × [lower_{d-1}, upper_{d-1}]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Domain {
    /// Builds a box from componentwise bounds.
    ///
    /// # Errors
    /// `Invalid` if the vectors differ in length, are empty, contain
    /// non-finite values, or violate `lower[i] ≤ upper[i]`.
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, OperatorError> {
        if lower.len() != upper.len() {
            return Err(OperatorError::Invalid(format!(
                "bound lengths differ: {} vs {}",
                lower.len(),
                upper.len()
            )));
        }
        if lower.is_empty() {
            return Err(OperatorError::Invalid("domain has dimension 0".into()));
        }
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(OperatorError::Invalid(format!(
                    "non-finite bound at component {i}"
                )));
            }
            if lo > hi {
                return Err(OperatorError::Invalid(format!(
                    "lower bound {lo} exceeds upper bound {hi} at component {i}"
                )));
            }
        }
        Ok(Domain { lower, upper })
    }

    /// The unit box `[0,1]^dim`.
    pub fn unit_box(dim: usize) -> Self {
        Domain {
            lower: vec![0.0; dim],
            upper: vec![1.0; dim],
        }
    }

    /// Number of components.
    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    /// Componentwise lower bounds.
    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    /// Componentwise upper bounds.
    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// Membership check with zero tolerance; non-finite components never belong.
    pub fn contains(&self, x: &[f64]) -> bool {
        self.check(x).is_ok()
    }

    /// Like [`Domain::contains`], but reports the offending component.
    pub fn check(&self, x: &[f64]) -> Result<(), OperatorError> {
        if x.len() != self.dim() {
            return Err(OperatorError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        for (i, xi) in x.iter().enumerate() {
            if !xi.is_finite() || *xi < self.lower[i] || *xi > self.upper[i] {
                return Err(OperatorError::Domain {
                    component: i,
                    value: *xi,
                    lower: self.lower[i],
                    upper: self.upper[i],
                });
            }
        }
        Ok(())
    }

    /// Projects a vector componentwise into the box.
    ///
    /// Projection onto a box is nonexpansive in both supported norms, so
    /// clamping a perturbed image never increases its distance to an
    /// unperturbed image that already lies inside.
    pub fn clamp_in_place(&self, x: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim());
        for (i, xi) in x.iter_mut().enumerate() {
            *xi = xi.clamp(self.lower[i], self.upper[i]);
        }
    }

    /// `grid_per_dim` evenly spaced samples per axis, full cartesian product.
    fn grid(&self, grid_per_dim: usize) -> Vec<Vec<f64>> {
        let axes: Vec<Vec<f64>> = (0..self.dim())
            .map(|i| linspace(self.lower[i], self.upper[i], grid_per_dim))
            .collect();
        let mut points = vec![Vec::new()];
        for axis in &axes {
            let mut next = Vec::with_capacity(points.len() * axis.len());
            for p in &points {
                for v in axis {
                    let mut q = p.clone();
                    q.push(*v);
                    next.push(q);
                }
            }
            points = next;
        }
        points
    }
}

fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    debug_assert!(count >= 2);
    let step = (hi - lo) / (count - 1) as f64;
    (0..count)
        .map(|i| {
            if i + 1 == count {
                hi
            } else {
                (lo + step * i as f64).clamp(lo, hi)
            }
        })
        .collect()
}

/// The update rule of a built-in operator kind.
#[derive(Debug, Clone, PartialEq)]
pub enum OperatorKind {
    /// `T(x) = x/2`, componentwise on any box containing the origin span.
    Halving,
    /// `T(x) = delta·x + (1 − delta)·c` in one dimension; fixed point `c`.
    Affine1d { c: f64 },
    /// `T(x) = A·x + b` in two dimensions.
    Affine2d { a: [[f64; 2]; 2], b: [f64; 2] },
}

impl OperatorKind {
    /// Raw image of `x` before clamping; `delta` is the operator's declared
    /// contraction factor (it doubles as the slope of `Affine1d`).
    fn raw_eval(&self, delta: f64, x: &[f64]) -> Vec<f64> {
        match self {
            OperatorKind::Halving => x.iter().map(|xi| xi / 2.0).collect(),
            OperatorKind::Affine1d { c } => vec![delta * x[0] + (1.0 - delta) * c],
            OperatorKind::Affine2d { a, b } => vec![
                a[0][0] * x[0] + a[0][1] * x[1] + b[0],
                a[1][0] * x[0] + a[1][1] * x[1] + b[1],
            ],
        }
    }

    /// Expected dimension, or `None` when the kind works in any dimension.
    fn dim_requirement(&self) -> Option<usize> {
        match self {
            OperatorKind::Halving => None,
            OperatorKind::Affine1d { .. } => Some(1),
            OperatorKind::Affine2d { .. } => Some(2),
        }
    }

    /// Exact componentwise image interval of a box under this (affine) rule.
    fn image_interval(&self, delta: f64, domain: &Domain) -> Vec<(f64, f64)> {
        let lo = domain.lower();
        let hi = domain.upper();
        match self {
            OperatorKind::Halving => lo
                .iter()
                .zip(hi)
                .map(|(l, h)| {
                    let (a, b) = (l / 2.0, h / 2.0);
                    (a.min(b), a.max(b))
                })
                .collect(),
            OperatorKind::Affine1d { c } => {
                let at = |x: f64| delta * x + (1.0 - delta) * c;
                let (a, b) = (at(lo[0]), at(hi[0]));
                vec![(a.min(b), a.max(b))]
            }
            OperatorKind::Affine2d { a, b } => (0..2)
                .map(|i| {
                    let mut min = b[i];
                    let mut max = b[i];
                    for j in 0..2 {
                        let (p, q) = (a[i][j] * lo[j], a[i][j] * hi[j]);
                        min += p.min(q);
                        max += p.max(q);
                    }
                    (min, max)
                })
                .collect(),
        }
    }
}

/// Result of sweeping the weak-contraction inequality over a sample grid.
#[derive(Debug, Clone)]
pub struct ConditionReport {
    pub operator_id: String,
    pub grid_per_dim: usize,
    /// Largest observed `‖Tx − Ty‖ − (delta·‖x − y‖ + L·‖y − Ty‖)`.
    pub max_violation: f64,
    /// The pair `(x, y)` attaining `max_violation`.
    pub worst_x: Vec<f64>,
    pub worst_y: Vec<f64>,
    /// `true` iff `max_violation ≤ 1e-12`.
    pub pass: bool,
}

impl ConditionReport {
    /// JSON rendering with stable (lexicographic) key order.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "operator_id": self.operator_id,
            "grid_per_dim": self.grid_per_dim,
            "max_violation": self.max_violation,
            "worst_x": self.worst_x,
            "worst_y": self.worst_y,
            "pass": self.pass,
        })
    }
}

/// A self-map of a box with declared weak-contraction constants.
#[derive(Debug, Clone)]
pub struct Operator {
    id: String,
    domain: Domain,
    kind: OperatorKind,
    delta: f64,
    l: f64,
    fixed_point: Option<Vec<f64>>,
}

impl Operator {
    /// Assembles and validates an operator.
    ///
    /// Validation covers: `delta ∈ (0,1)`, `L ≥ 0`, dimension compatibility,
    /// an exact image-interval self-map check, and (when a fixed point is
    /// declared) membership plus a residual `‖T(u*) − u*‖ ≤ 1e-12`.
    /// Whether the declared `(delta, L)` actually certify the contraction
    /// inequality is a separate, sampled question answered by
    /// [`Operator::verify_weak_contraction`].
    pub fn new(
        id: impl Into<String>,
        domain: Domain,
        kind: OperatorKind,
        delta: f64,
        l: f64,
        fixed_point: Option<Vec<f64>>,
    ) -> Result<Self, OperatorError> {
        let id = id.into();
        if !(delta > 0.0 && delta < 1.0) {
            return Err(OperatorError::Invalid(format!(
                "delta must lie in (0,1), got {delta}"
            )));
        }
        if !(l >= 0.0 && l.is_finite()) {
            return Err(OperatorError::Invalid(format!("L must be ≥ 0, got {l}")));
        }
        if let Some(required) = kind.dim_requirement() {
            if domain.dim() != required {
                return Err(OperatorError::Invalid(format!(
                    "kind requires dimension {required}, domain has {}",
                    domain.dim()
                )));
            }
        }
        // Reject definitions whose raw image leaves the box by more than
        // rounding noise: clamping would silently change the map.
        for (i, (lo, hi)) in kind.image_interval(delta, &domain).iter().enumerate() {
            if *lo < domain.lower()[i] - FIXED_POINT_RESIDUAL_TOL
                || *hi > domain.upper()[i] + FIXED_POINT_RESIDUAL_TOL
            {
                return Err(OperatorError::Invalid(format!(
                    "map is not a self-map: component {i} image [{lo}, {hi}] leaves \
                     [{}, {}]",
                    domain.lower()[i],
                    domain.upper()[i]
                )));
            }
        }
        let op = Operator {
            id,
            domain,
            kind,
            delta,
            l,
            fixed_point: None,
        };
        if let Some(u) = fixed_point {
            op.domain.check(&u)?;
            let image = op.evaluate(&u)?;
            let residual = NormKind::Euclidean.distance(&image, &u);
            if residual > FIXED_POINT_RESIDUAL_TOL {
                return Err(OperatorError::Invalid(format!(
                    "declared fixed point has residual {residual:.3e} > 1e-12"
                )));
            }
            return Ok(Operator {
                fixed_point: Some(u),
                ..op
            });
        }
        Ok(op)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn kind(&self) -> &OperatorKind {
        &self.kind
    }

    /// Declared contraction factor `delta ∈ (0,1)`.
    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Declared coefficient `L ≥ 0` of the `‖y − Ty‖` term.
    pub fn l(&self) -> f64 {
        self.l
    }

    /// Known fixed point `u*`, when one was declared or derived.
    pub fn fixed_point(&self) -> Option<&[f64]> {
        self.fixed_point.as_deref()
    }

    /// Applies `T` to a point of the domain.
    ///
    /// The result is clamped into the box so the self-map property holds
    /// even when convex-combination rounding pushed an input to a face.
    ///
    /// # Errors
    /// `Domain` if `x` lies outside the box (zero tolerance), or
    /// `DimensionMismatch` for a wrong-length vector.
    pub fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>, OperatorError> {
        self.domain.check(x)?;
        let mut image = self.kind.raw_eval(self.delta, x);
        self.domain.clamp_in_place(&mut image);
        Ok(image)
    }

    /// Sweeps all ordered grid pairs `(x, y)` and reports the largest
    /// violation of `‖Tx − Ty‖ ≤ delta·‖x − y‖ + L·‖y − Ty‖`.
    ///
    /// # Errors
    /// `Dimension` for domains of dimension > 3 (grid blow-up guard), and
    /// `Invalid` when `grid_per_dim < 2`.
    pub fn verify_weak_contraction(
        &self,
        grid_per_dim: usize,
        norm: NormKind,
    ) -> Result<ConditionReport, OperatorError> {
        if self.domain.dim() > 3 {
            return Err(OperatorError::Dimension {
                dim: self.domain.dim(),
            });
        }
        if grid_per_dim < 2 {
            return Err(OperatorError::Invalid(format!(
                "grid_per_dim must be ≥ 2, got {grid_per_dim}"
            )));
        }
        let points = self.domain.grid(grid_per_dim);
        let images: Vec<Vec<f64>> = points
            .iter()
            .map(|p| self.evaluate(p))
            .collect::<Result<_, _>>()?;
        let residuals: Vec<f64> = points
            .iter()
            .zip(&images)
            .map(|(p, t)| norm.distance(p, t))
            .collect();

        let mut max_violation = f64::NEG_INFINITY;
        let mut worst = (0, 0);
        for j in 0..points.len() {
            for k in 0..points.len() {
                let lhs = norm.distance(&images[j], &images[k]);
                let rhs = self.delta * norm.distance(&points[j], &points[k]) + self.l * residuals[k];
                let violation = lhs - rhs;
                if violation > max_violation {
                    max_violation = violation;
                    worst = (j, k);
                }
            }
        }
        Ok(ConditionReport {
            operator_id: self.id.clone(),
            grid_per_dim,
            max_violation,
            worst_x: points[worst.0].clone(),
            worst_y: points[worst.1].clone(),
            pass: max_violation <= CONTRACTION_PASS_TOL,
        })
    }

    /// Builds an approximate operator `T~` with `‖Tx − T~x‖ ≤ epsilon`.
    ///
    /// `ConstantOffset` shifts every image by `epsilon` along the normalized
    /// all-ones direction (exactly `+epsilon` in one dimension);
    /// `UniformRandom` draws one offset vector with components uniform in
    /// `[−epsilon, epsilon]`, rescaled into the `epsilon`-ball of `norm`.
    /// Either way the image is clamped into the box, which cannot increase
    /// its distance to `Tx`.
    ///
    /// # Panics
    /// If `epsilon` is not strictly positive and finite.
    pub fn perturb(&self, epsilon: f64, mode: PerturbMode, norm: NormKind) -> PerturbedOperator {
        assert!(
            epsilon > 0.0 && epsilon.is_finite(),
            "perturbation size must be positive and finite, got {epsilon}"
        );
        let dim = self.domain.dim();
        let mut offset: Vec<f64> = match mode {
            PerturbMode::ConstantOffset => {
                let unit = vec![1.0; dim];
                let scale = epsilon / norm.norm(&unit);
                vec![scale; dim]
            }
            PerturbMode::UniformRandom { seed } => {
                use rand::{Rng, SeedableRng};
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
                (0..dim).map(|_| rng.gen_range(-epsilon..=epsilon)).collect()
            }
        };
        // Rounding (or the cube sample) can leave the offset a hair outside
        // the epsilon-ball of the chosen norm; pull it strictly inside.
        let len = norm.norm(&offset);
        if len > epsilon {
            let scale = epsilon / len * (1.0 - 1e-12);
            for o in &mut offset {
                *o *= scale;
            }
        }
        PerturbedOperator {
            id: format!("{}~", self.id),
            base: self.clone(),
            epsilon,
            mode,
            offset,
        }
    }
}

/// How [`Operator::perturb`] generates its offset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PerturbMode {
    /// Deterministic `+epsilon` shift along the normalized all-ones direction.
    ConstantOffset,
    /// One offset vector drawn from a seeded generator at construction.
    UniformRandom { seed: u64 },
}

/// An approximate operator `T~` built from a base operator.
///
/// The map is `x ↦ clamp(T(x) + offset)` with a fixed offset vector, so it
/// is a genuine deterministic self-map of the same box.
#[derive(Debug, Clone)]
pub struct PerturbedOperator {
    id: String,
    base: Operator,
    epsilon: f64,
    mode: PerturbMode,
    offset: Vec<f64>,
}

impl PerturbedOperator {
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn base(&self) -> &Operator {
        &self.base
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn mode(&self) -> PerturbMode {
        self.mode
    }

    /// The fixed offset added to every image before clamping.
    pub fn offset(&self) -> &[f64] {
        &self.offset
    }

    /// Applies `T~` to a point of the domain.
    pub fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>, OperatorError> {
        let mut image = self.base.evaluate(x)?;
        for (img, o) in image.iter_mut().zip(&self.offset) {
            *img += o;
        }
        self.base.domain.clamp_in_place(&mut image);
        Ok(image)
    }
}

/// Anything the iteration schemes can drive: an exact or perturbed operator.
pub trait PointMap {
    /// Identifier recorded in trajectories and reports.
    fn id(&self) -> &str;
    /// The box the map lives on.
    fn domain(&self) -> &Domain;
    /// Applies the map to a point of the domain.
    fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>, OperatorError>;
    /// Known fixed point, when available.
    fn fixed_point(&self) -> Option<&[f64]>;
}

impl PointMap for Operator {
    fn id(&self) -> &str {
        self.id()
    }
    fn domain(&self) -> &Domain {
        self.domain()
    }
    fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>, OperatorError> {
        Operator::evaluate(self, x)
    }
    fn fixed_point(&self) -> Option<&[f64]> {
        Operator::fixed_point(self)
    }
}

impl PointMap for PerturbedOperator {
    fn id(&self) -> &str {
        self.id()
    }
    fn domain(&self) -> &Domain {
        self.base.domain()
    }
    fn evaluate(&self, x: &[f64]) -> Result<Vec<f64>, OperatorError> {
        PerturbedOperator::evaluate(self, x)
    }
    fn fixed_point(&self) -> Option<&[f64]> {
        // The base fixed point is not a fixed point of the perturbed map.
        None
    }
}

/// Solves the 2×2 system `(I − A)·u = b`.
fn affine2d_fixed_point(a: &[[f64; 2]; 2], b: &[f64; 2]) -> Result<[f64; 2], OperatorError> {
    let m = [[1.0 - a[0][0], -a[0][1]], [-a[1][0], 1.0 - a[1][1]]];
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if det.abs() < 1e-12 {
        return Err(OperatorError::Invalid(
            "affine2d map has no unique fixed point (I − A is singular)".into(),
        ));
    }
    Ok([
        (b[0] * m[1][1] - m[0][1] * b[1]) / det,
        (m[0][0] * b[1] - b[0] * m[1][0]) / det,
    ])
}

/// Spectral norm of a 2×2 matrix (largest singular value, closed form).
///
/// For a planar affine map `x ↦ A·x + b` this is the tight Euclidean
/// contraction factor, i.e. the smallest `delta` the grid check can pass.
pub fn spectral_norm_2x2(a: &[[f64; 2]; 2]) -> f64 {
    // Largest eigenvalue of AᵀA via the trace/determinant closed form.
    let g11 = a[0][0] * a[0][0] + a[1][0] * a[1][0];
    let g12 = a[0][0] * a[0][1] + a[1][0] * a[1][1];
    let g22 = a[0][1] * a[0][1] + a[1][1] * a[1][1];
    let mean = 0.5 * (g11 + g22);
    let disc = (0.25 * (g11 - g22) * (g11 - g22) + g12 * g12).sqrt();
    (mean + disc).max(0.0).sqrt()
}

/// The stock operators every experiment and test can rely on:
///
/// * `halving` — `T(x) = x/2` on `[0,1]`, `delta = 0.5`, `L = 0`, `u* = 0`;
/// * `affine1d` — `T(x) = 0.5·x + 0.25` on `[0,1]`, `u* = 0.5`;
/// * `affine2d` — `T(x) = diag(0.3, 0.6)·x + (0.7, 0.2)` on `[0,1]²`,
///   `delta = 0.6`, `u* = (1.0, 0.5)` from the linear solve.
pub fn builtin_catalog() -> Vec<Operator> {
    vec![
        Operator::new(
            "halving",
            Domain::unit_box(1),
            OperatorKind::Halving,
            0.5,
            0.0,
            Some(vec![0.0]),
        )
        .expect("halving catalog entry is valid"),
        Operator::new(
            "affine1d",
            Domain::unit_box(1),
            OperatorKind::Affine1d { c: 0.5 },
            0.5,
            0.0,
            Some(vec![0.5]),
        )
        .expect("affine1d catalog entry is valid"),
        affine2d_operator(
            "affine2d",
            [[0.3, 0.0], [0.0, 0.6]],
            [0.7, 0.2],
            0.6,
            0.0,
        )
        .expect("affine2d catalog entry is valid"),
    ]
}

/// Builds a two-dimensional affine operator on `[0,1]²`, deriving its fixed
/// point from the linear solve and checking the residual.
pub fn affine2d_operator(
    id: impl Into<String>,
    a: [[f64; 2]; 2],
    b: [f64; 2],
    delta: f64,
    l: f64,
) -> Result<Operator, OperatorError> {
    let u = affine2d_fixed_point(&a, &b)?;
    Operator::new(
        id,
        Domain::unit_box(2),
        OperatorKind::Affine2d { a, b },
        delta,
        l,
        Some(u.to_vec()),
    )
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OperatorJson {
    id: String,
    kind: String,
    #[serde(default)]
    params: serde_json::Map<String, serde_json::Value>,
    delta: f64,
    #[serde(rename = "L")]
    l: f64,
}

fn param_f64(
    params: &serde_json::Map<String, serde_json::Value>,
    key: &str,
) -> Result<f64, OperatorError> {
    params
        .get(key)
        .and_then(|v| v.as_f64())
        .ok_or_else(|| OperatorError::Invalid(format!("params.{key} must be a number")))
}

fn param_vec(
    params: &serde_json::Map<String, serde_json::Value>,
    key: &str,
    len: usize,
) -> Result<Vec<f64>, OperatorError> {
    let parsed: Option<Vec<f64>> = params
        .get(key)
        .and_then(|v| v.as_array())
        .map(|a| a.iter().map(|x| x.as_f64()).collect::<Option<Vec<f64>>>())
        .flatten();
    match parsed {
        Some(v) if v.len() == len => Ok(v),
        _ => Err(OperatorError::Invalid(format!(
            "params.{key} must be an array of {len} numbers"
        ))),
    }
}

/// Loads an operator from its JSON description
/// `{"id", "kind", "params", "delta", "L"}`.
///
/// Supported kinds are `halving`, `affine1d` (`params.c`), and `affine2d`
/// (`params.a` row-major 2×2, `params.b`). Any kind accepts optional
/// `params.lower` / `params.upper` arrays overriding the default unit box.
/// Unknown kinds are a load error.
pub fn operator_from_value(value: &serde_json::Value) -> Result<Operator, OperatorError> {
    let spec: OperatorJson = serde_json::from_value(value.clone())
        .map_err(|e| OperatorError::Invalid(format!("operator JSON: {e}")))?;
    let (kind, default_dim) = match spec.kind.as_str() {
        "halving" => (OperatorKind::Halving, 1),
        "affine1d" => (
            OperatorKind::Affine1d {
                c: param_f64(&spec.params, "c")?,
            },
            1,
        ),
        "affine2d" => {
            let rows = spec
                .params
                .get("a")
                .and_then(|v| v.as_array())
                .ok_or_else(|| {
                    OperatorError::Invalid("params.a must be a 2×2 array of numbers".into())
                })?;
            if rows.len() != 2 {
                return Err(OperatorError::Invalid(
                    "params.a must be a 2×2 array of numbers".into(),
                ));
            }
            let mut a = [[0.0; 2]; 2];
            for (i, row) in rows.iter().enumerate() {
                let row: Vec<f64> = row
                    .as_array()
                    .map(|r| r.iter().filter_map(|x| x.as_f64()).collect())
                    .unwrap_or_default();
                if row.len() != 2 {
                    return Err(OperatorError::Invalid(
                        "params.a must be a 2×2 array of numbers".into(),
                    ));
                }
                a[i] = [row[0], row[1]];
            }
            let b = param_vec(&spec.params, "b", 2)?;
            (
                OperatorKind::Affine2d {
                    a,
                    b: [b[0], b[1]],
                },
                2,
            )
        }
        other => {
            return Err(OperatorError::Invalid(format!(
                "unknown operator kind {other:?}"
            )))
        }
    };
    let domain = if spec.params.contains_key("lower") || spec.params.contains_key("upper") {
        Domain::new(
            param_vec(&spec.params, "lower", default_dim)?,
            param_vec(&spec.params, "upper", default_dim)?,
        )?
    } else {
        Domain::unit_box(default_dim)
    };
    let fixed_point = match &kind {
        OperatorKind::Halving => {
            let origin = vec![0.0; domain.dim()];
            domain.contains(&origin).then_some(origin)
        }
        OperatorKind::Affine1d { c } => domain.contains(&[*c]).then(|| vec![*c]),
        OperatorKind::Affine2d { a, b } => {
            let u = affine2d_fixed_point(a, b)?.to_vec();
            domain.contains(&u).then_some(u)
        }
    };
    Operator::new(spec.id, domain, kind, spec.delta, spec.l, fixed_point)
}

/// Parses an operator from JSON text; see [`operator_from_value`].
pub fn operator_from_json(text: &str) -> Result<Operator, OperatorError> {
    let value: serde_json::Value = serde_json::from_str(text)
        .map_err(|e| OperatorError::Invalid(format!("operator JSON: {e}")))?;
    operator_from_value(&value)
}
