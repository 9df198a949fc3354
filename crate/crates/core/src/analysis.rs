//! Empirical analysis layer: rate comparison, a-priori error bounds,
//! ratio diagnostics, scalar recursion drivers, and the perturbed-operator
//! (data-dependence) experiment.
//!
//! Everything here consumes trajectories and schedules produced by the
//! sibling modules and reduces them to verdicts with explicit tolerances.
//! Sequences that decay geometrically underflow `f64` after a few hundred
//! terms, so every quantity that enters a ratio or a product carries a
//! log-domain companion and the comparison logic treats exact zeros as
//! first-class values rather than noise.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::norm::NormKind;
use crate::operators::{Operator, OperatorError, PerturbMode};
use crate::schedules::{audit_product_floor, Schedule, ScheduleError};
use crate::schemes::{iterate, SchemeError, SchemeKind, StopCriteria, StopReason, Trajectory};

/// Errors raised by the analysis routines.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum AnalysisError {
    /// Not enough (informative) data points for a stable estimate.
    #[error("need at least {need} informative data points, have {have}")]
    InsufficientData { have: usize, need: usize },
    /// The comparison window is too small to yield a meaningful median.
    #[error("window must be ≥ 8, got {window}")]
    InvalidWindow { window: usize },
    /// The two sequences cannot be compared index by index.
    #[error("sequence lengths differ: {a} vs {b}")]
    LengthMismatch { a: usize, b: usize },
    /// A ratio denominator factor is zero or negative at this index.
    #[error("denominator factor is ≤ 0 at index {index}")]
    DegenerateFactor { index: u64 },
    /// The perturbed run hit its iteration cap before settling.
    #[error("perturbed run failed to converge within {max_iters} iterations")]
    NotConverged { max_iters: u64 },
    /// The experiment needs the true fixed point, but none is known.
    #[error("experiment requires an operator with a known fixed point")]
    MissingFixedPoint,
    /// The perturbation size must be strictly positive and finite.
    #[error("perturbation size must be positive and finite, got {epsilon}")]
    InvalidEpsilon { epsilon: f64 },
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Scheme(#[from] SchemeError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
}

/// Distances `‖x_n − u*‖` of a trajectory, tagged with its provenance ids.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSequence {
    pub scheme_id: String,
    pub operator_id: String,
    pub schedule_id: String,
    /// Index carried by `values[0]`.
    pub start_index: u64,
    pub values: Vec<f64>,
}

/// Measures every iterate of a trajectory against a reference point.
pub fn error_sequence(traj: &Trajectory, u_star: &[f64], norm: NormKind) -> ErrorSequence {
    ErrorSequence {
        scheme_id: traj.scheme.id().to_string(),
        operator_id: traj.operator_id.clone(),
        schedule_id: traj.schedule_id.clone(),
        start_index: traj.start_index,
        values: traj
            .iterates
            .iter()
            .map(|x| norm.distance(x, u_star))
            .collect(),
    }
}

/// Outcome classes of [`rate_compare`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    AFaster,
    SameRate,
    BFaster,
    Inconclusive,
}

impl Classification {
    pub fn label(self) -> &'static str {
        match self {
            Classification::AFaster => "a_faster",
            Classification::SameRate => "same_rate",
            Classification::BFaster => "b_faster",
            Classification::Inconclusive => "inconclusive",
        }
    }
}

/// Verdict of a pairwise rate comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct RateVerdict {
    /// The informative tail ratios `a_n / b_n` the estimate is built from
    /// (`+∞` where only `b` has reached exact zero).
    pub ratio_tail: Vec<f64>,
    /// Median of `ratio_tail`; may be `0` or `+∞`.
    pub l_estimate: f64,
    pub classification: Classification,
}

impl RateVerdict {
    /// JSON rendering; non-finite ratios serialize as the string `"inf"`
    /// because JSON has no infinity literal.
    pub fn to_json(&self) -> serde_json::Value {
        let finite_or_inf = |v: f64| -> serde_json::Value {
            if v.is_finite() {
                serde_json::json!(v)
            } else {
                serde_json::json!("inf")
            }
        };
        serde_json::json!({
            "l_estimate": finite_or_inf(self.l_estimate),
            "classification": self.classification.label(),
            "ratio_tail": self.ratio_tail.iter().map(|r| finite_or_inf(*r)).collect::<Vec<_>>(),
        })
    }
}

fn median_sorted(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        // +∞ propagates through the average, which is the right verdict
        // when half the tail has a vanished denominator.
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Compares two error sequences by the median of their tail ratios.
///
/// Per index: both values positive gives `a/b`; only `a` zero gives `0`;
/// only `b` zero gives `+∞`; both zero is an uninformative tie (the
/// sequences have collapsed below `f64` resolution together) and is
/// skipped. The estimate `l` is the median over the last `window`
/// informative ratios, and classifies as: `l < 0.01` a decays faster,
/// `l > 100` b decays faster, `0.2 ≤ l ≤ 5` same rate, anything else
/// inconclusive. Sequences that are tied at every index count as same
/// rate directly.
///
/// # Errors
/// `InvalidWindow` for `window < 8`; `LengthMismatch` for unequal inputs;
/// `InsufficientData` when the sequences are shorter than `2·window` or
/// fewer than `window/2` informative ratios exist.
pub fn rate_compare(a: &[f64], b: &[f64], window: usize) -> Result<RateVerdict, AnalysisError> {
    if window < 8 {
        return Err(AnalysisError::InvalidWindow { window });
    }
    if a.len() != b.len() {
        return Err(AnalysisError::LengthMismatch {
            a: a.len(),
            b: b.len(),
        });
    }
    if a.len() < 2 * window {
        return Err(AnalysisError::InsufficientData {
            have: a.len(),
            need: 2 * window,
        });
    }

    let mut informative = Vec::with_capacity(a.len());
    let mut ties = 0_usize;
    for (an, bn) in a.iter().zip(b) {
        match (*an == 0.0, *bn == 0.0) {
            (true, true) => ties += 1,
            (true, false) => informative.push(0.0),
            (false, true) => informative.push(f64::INFINITY),
            (false, false) => informative.push(an / bn),
        }
    }

    if informative.is_empty() && ties > 0 {
        return Ok(RateVerdict {
            ratio_tail: vec![1.0; window],
            l_estimate: 1.0,
            classification: Classification::SameRate,
        });
    }
    if informative.len() < window / 2 {
        return Err(AnalysisError::InsufficientData {
            have: informative.len(),
            need: window / 2,
        });
    }

    let tail_len = window.min(informative.len());
    let ratio_tail = informative[informative.len() - tail_len..].to_vec();
    let mut sorted = ratio_tail.clone();
    sorted.sort_by(f64::total_cmp);
    let l = median_sorted(&sorted);

    let classification = if l < 0.01 {
        Classification::AFaster
    } else if l > 100.0 {
        Classification::BFaster
    } else if (0.2..=5.0).contains(&l) {
        Classification::SameRate
    } else {
        Classification::Inconclusive
    };
    Ok(RateVerdict {
        ratio_tail,
        l_estimate: l,
        classification,
    })
}

/// An a-priori bound value with its log-domain companion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundValue {
    pub n: u64,
    /// `delta^{2(n+1)} · x0_err · ∏_{k=0}^{n} (1 − a¹_k a²_k (1 − delta))`.
    pub value: f64,
    /// `ln` of the same quantity, finite as long as `x0_err > 0`.
    pub log_value: f64,
}

/// All bound values for `n = 0 ..= n_max` in one incremental sweep:
/// entry `n` appends one `delta² · (1 − a¹_n a²_n (1 − delta))` factor to
/// entry `n − 1`.
pub fn error_bound_prefix(
    delta: f64,
    schedule: &Schedule,
    x0_err: f64,
    n_max: u64,
) -> Result<Vec<BoundValue>, AnalysisError> {
    let mut out = Vec::with_capacity(n_max as usize + 1);
    let mut value = x0_err;
    let mut log_value = x0_err.ln();
    let log_step = 2.0 * delta.ln();
    for n in 0..=n_max {
        let bracket = 1.0 - schedule.eval(n, 1)? * schedule.eval(n, 2)? * (1.0 - delta);
        value *= delta * delta * bracket;
        log_value += log_step + bracket.ln();
        out.push(BoundValue { n, value, log_value });
    }
    Ok(out)
}

/// The a-priori error bound after steps `0 ..= n`; equals the last entry
/// of [`error_bound_prefix`] bit for bit.
pub fn error_bound(
    delta: f64,
    schedule: &Schedule,
    x0_err: f64,
    n: u64,
) -> Result<BoundValue, AnalysisError> {
    Ok(*error_bound_prefix(delta, schedule, x0_err, n)?
        .last()
        .expect("prefix holds n_max + 1 entries"))
}

/// Which comparison sequence [`theta_ratio_test`] evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThetaVariant {
    /// Numerator over the full three-factor denominator per index.
    VsSp,
    /// Numerator over the single outer-stage factor per index.
    VsNoor,
}

/// The transfer sequence `θ_n` between two schemes' error bounds, kept in
/// the log domain, with its consecutive-ratio diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaSequence {
    pub variant: ThetaVariant,
    pub delta: f64,
    /// `ln θ_n` for `n = 0 ..= n_max`.
    pub log_values: Vec<f64>,
    /// `θ_{n+1} / θ_n` for `n = 0 .. n_max`, computed factor-wise so no
    /// underflow is involved.
    pub ratios: Vec<f64>,
    /// The last ratio; converges to `delta²` under a vanishing schedule.
    pub tail_ratio: f64,
}

/// Evaluates the bound-transfer sequence
///
/// ```text
/// θ_n = delta^{2(n+1)} · ∏_{k=0}^{n} (1 − a¹_k a²_k (1 − delta)) / D_n
/// ```
///
/// where `D_n` multiplies `(1 − a^i_k (1 + delta))` over `k ≤ n` for the
/// stages of the chosen variant (all three, or only stage 0). The
/// consecutive ratios telescope to
/// `delta² · num(n+1) / den(n+1)`, so they are computed directly from the
/// per-index factors and stay exact long after `θ_n` itself would have
/// underflowed.
///
/// # Errors
/// `DegenerateFactor` at the first index where a denominator factor is
/// zero or negative (a stage weight reached `1/(1+delta)`).
pub fn theta_ratio_test(
    delta: f64,
    schedule: &Schedule,
    n_max: u64,
    variant: ThetaVariant,
) -> Result<ThetaSequence, AnalysisError> {
    let factors = |n: u64| -> Result<(f64, f64), AnalysisError> {
        let [a0, a1, a2] = schedule.triple(n)?;
        let num = 1.0 - a1 * a2 * (1.0 - delta);
        let den = match variant {
            ThetaVariant::VsSp => {
                let f0 = 1.0 - a0 * (1.0 + delta);
                let f1 = 1.0 - a1 * (1.0 + delta);
                let f2 = 1.0 - a2 * (1.0 + delta);
                if f0 <= 0.0 || f1 <= 0.0 || f2 <= 0.0 {
                    return Err(AnalysisError::DegenerateFactor { index: n });
                }
                f0 * f1 * f2
            }
            ThetaVariant::VsNoor => {
                let f0 = 1.0 - a0 * (1.0 + delta);
                if f0 <= 0.0 {
                    return Err(AnalysisError::DegenerateFactor { index: n });
                }
                f0
            }
        };
        Ok((num, den))
    };

    let mut log_values = Vec::with_capacity(n_max as usize + 1);
    let mut ratios = Vec::with_capacity(n_max as usize);
    let log_step = 2.0 * delta.ln();
    let mut running = 0.0;
    for n in 0..=n_max {
        let (num, den) = factors(n)?;
        running += num.ln() - den.ln();
        log_values.push(log_step * (n as f64 + 1.0) + running);
        if n > 0 {
            ratios.push(delta * delta * num / den);
        }
    }
    let tail_ratio = *ratios.last().ok_or(AnalysisError::InsufficientData {
        have: 1,
        need: 2,
    })?;
    Ok(ThetaSequence {
        variant,
        delta,
        log_values,
        ratios,
        tail_ratio,
    })
}

/// Which scalar recursion a [`LemmaTrace`] came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecursionMode {
    Decay,
    Averaging,
}

/// The trace of a scalar recursion run.
#[derive(Debug, Clone, PartialEq)]
pub struct LemmaTrace {
    pub mode: RecursionMode,
    /// `beta[0] = β₀` through `beta[n_max] = β_{n_max}`.
    pub beta: Vec<f64>,
    pub final_beta: f64,
    /// Maximum over the last tenth (at least one entry) of the trace.
    pub tail_max: f64,
    /// Largest forcing value seen; `None` for the decay recursion.
    pub gamma_max: Option<f64>,
}

fn tail_max(beta: &[f64]) -> f64 {
    let take = (beta.len() / 10).max(1);
    beta[beta.len() - take..]
        .iter()
        .fold(f64::NEG_INFINITY, |m, b| m.max(*b))
}

/// Runs `β_{n+1} = (1 − λ_n)·β_n + ρ_n` for `n = 0 .. n_max`.
///
/// With `λ_n ∈ (0, 1]`, `Σ λ_n = ∞`, and `ρ_n/λ_n → 0`, the sequence
/// decays to zero; the driver makes that claim observable as numbers.
pub fn decay_recursion(
    beta0: f64,
    lambda: impl Fn(u64) -> f64,
    rho: impl Fn(u64) -> f64,
    n_max: u64,
) -> LemmaTrace {
    let mut beta = Vec::with_capacity(n_max as usize + 1);
    beta.push(beta0);
    let mut b = beta0;
    for n in 0..n_max {
        b = (1.0 - lambda(n)) * b + rho(n);
        beta.push(b);
    }
    LemmaTrace {
        mode: RecursionMode::Decay,
        final_beta: b,
        tail_max: tail_max(&beta),
        beta,
        gamma_max: None,
    }
}

/// Runs `β_{n+1} = (1 − μ_n)·β_n + μ_n·γ_n` for `n = 0 .. n_max`.
///
/// The recursion is a moving average, so with `β₀ ≤ sup γ` the whole
/// trace stays below `sup γ`; `tail_max` against `gamma_max` makes the
/// limsup claim checkable.
pub fn averaging_recursion(
    beta0: f64,
    mu: impl Fn(u64) -> f64,
    gamma: impl Fn(u64) -> f64,
    n_max: u64,
) -> LemmaTrace {
    let mut beta = Vec::with_capacity(n_max as usize + 1);
    beta.push(beta0);
    let mut b = beta0;
    let mut gamma_max = f64::NEG_INFINITY;
    for n in 0..n_max {
        let g = gamma(n);
        gamma_max = gamma_max.max(g);
        let m = mu(n);
        b = (1.0 - m) * b + m * g;
        beta.push(b);
    }
    LemmaTrace {
        mode: RecursionMode::Averaging,
        final_beta: b,
        tail_max: tail_max(&beta),
        beta,
        gamma_max: Some(gamma_max),
    }
}

/// A named `(λ, ρ)` pair for the decay recursion.
#[derive(Debug, Clone, Copy)]
pub struct DriverFamily {
    pub id: &'static str,
    pub lambda: fn(u64) -> f64,
    pub rho: fn(u64) -> f64,
}

fn geometric_lambda(_n: u64) -> f64 {
    0.5
}
fn zero_rho(_n: u64) -> f64 {
    0.0
}
fn harmonic_lambda(n: u64) -> f64 {
    1.0 / (n as f64 + 2.0)
}
fn harmonic_rho(n: u64) -> f64 {
    let d = n as f64 + 2.0;
    (1.0 / d) / d
}
fn inverse_sqrt_lambda(n: u64) -> f64 {
    1.0 / (n as f64 + 2.0).sqrt()
}
fn inverse_sqrt_rho(n: u64) -> f64 {
    let d = n as f64 + 2.0;
    (1.0 / d.sqrt()) / d
}

/// The stock `(λ, ρ)` families the decay driver is exercised with:
/// a geometric contraction (`λ = 1/2`, `ρ = 0`), a harmonic family
/// (`λ_n = 1/(n+2)`, `ρ_n = λ_n/(n+2)`), and an inverse-square-root
/// family (`λ_n = 1/√(n+2)`, `ρ_n = λ_n/(n+2)`).
pub fn decay_driver_catalog() -> [DriverFamily; 3] {
    [
        DriverFamily {
            id: "geometric",
            lambda: geometric_lambda,
            rho: zero_rho,
        },
        DriverFamily {
            id: "harmonic",
            lambda: harmonic_lambda,
            rho: harmonic_rho,
        },
        DriverFamily {
            id: "inverse_sqrt",
            lambda: inverse_sqrt_lambda,
            rho: inverse_sqrt_rho,
        },
    ]
}

/// Outcome of a perturbed-operator experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct DependenceReport {
    pub epsilon: f64,
    pub delta: f64,
    pub u_star: Vec<f64>,
    pub u_tilde: Vec<f64>,
    /// `‖u* − u~*‖` in the experiment's norm.
    pub distance: f64,
    /// `5·epsilon / (1 − delta)`.
    pub bound: f64,
    /// `distance ≤ bound + 1e-12`.
    pub pass: bool,
    /// Whether the schedule kept `a¹_n a²_n ≥ 1/2` over the audited range.
    pub hypothesis_ok: bool,
}

impl DependenceReport {
    /// JSON rendering with stable (lexicographic) key order.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "epsilon": self.epsilon,
            "delta": self.delta,
            "u_star": self.u_star,
            "u_tilde": self.u_tilde,
            "distance": self.distance,
            "bound": self.bound,
            "pass": self.pass,
            "hypothesis_ok": self.hypothesis_ok,
        })
    }
}

/// Perturbs `op` by a constant offset of size `epsilon`, iterates the
/// fastest scheme on the perturbed map until the step size falls to
/// `step_tol` (forced into `(0, 1e-13]`), and measures the settled point
/// against the true fixed point and the bound `5ε/(1−delta)`.
///
/// A schedule that violates the product floor `a¹a² ≥ 1/2` does not abort
/// the experiment — the bound is simply no longer guaranteed — but it is
/// flagged via `hypothesis_ok`.
///
/// # Errors
/// `InvalidEpsilon`, `MissingFixedPoint`, and `NotConverged` when the
/// perturbed run hits `stop.max_iters` before settling.
pub fn data_dependence_experiment(
    op: &Operator,
    epsilon: f64,
    schedule: &Schedule,
    x0: &[f64],
    stop: &StopCriteria,
    norm: NormKind,
) -> Result<DependenceReport, AnalysisError> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(AnalysisError::InvalidEpsilon { epsilon });
    }
    let u_star = op
        .fixed_point()
        .ok_or(AnalysisError::MissingFixedPoint)?
        .to_vec();
    let hypothesis_ok = audit_product_floor(schedule, 1000)?.pass;

    let tilde = op.perturb(epsilon, PerturbMode::ConstantOffset, norm);
    let step_tol = if stop.step_tol > 0.0 && stop.step_tol <= 1e-13 {
        stop.step_tol
    } else {
        1e-13
    };
    let run_stop = StopCriteria {
        max_iters: stop.max_iters,
        step_tol,
        error_tol: None,
    };
    let traj = iterate(SchemeKind::PicardS, &tilde, schedule, x0, &run_stop)?;
    if traj.stop_reason == StopReason::MaxIters {
        return Err(AnalysisError::NotConverged {
            max_iters: run_stop.max_iters,
        });
    }
    let u_tilde = traj.last().to_vec();
    let distance = norm.distance(&u_star, &u_tilde);
    let bound = 5.0 * epsilon / (1.0 - op.delta());
    Ok(DependenceReport {
        epsilon,
        delta: op.delta(),
        u_star,
        u_tilde,
        distance,
        bound,
        pass: distance <= bound + 1e-12,
        hypothesis_ok,
    })
}
