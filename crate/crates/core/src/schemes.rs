//! The nine iteration schemes, their driver loop, and closed-form
//! reference products for the two fastest schemes.
//!
//! Every scheme is expressed through one shared convex-combination helper,
//! so a scheme whose auxiliary weight is identically zero reduces to its
//! simpler sibling *by value* (noor → ishikawa → mann chains), not merely
//! in the limit. [`iterate_with`] drives any [`PointMap`] from a start
//! index under [`StopCriteria`] and records the trajectory; closed-form
//! companions carry a log-domain value so comparisons survive the f64
//! underflow the raw products hit after a few hundred factors.

use std::io;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::norm::NormKind;
use crate::operators::{OperatorError, PointMap};
use crate::schedules::{Schedule, ScheduleError};

/// Errors raised by stepping, iterating, and closed-form evaluation.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum SchemeError {
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    /// A stop rule demanded the true fixed point, but the map has none.
    #[error("error-based stopping requires a map with a known fixed point")]
    MissingFixedPoint,
    /// Closed forms are defined from index 25 onward.
    #[error("closed form is defined for n ≥ {min}, got {n}")]
    Range { n: u64, min: u64 },
    /// Unusable stop criteria or run options.
    #[error("invalid run configuration: {0}")]
    Invalid(String),
}

/// The nine update rules, ordered roughly from simplest to most nested.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    Picard,
    Mann,
    Ishikawa,
    Noor,
    Sp,
    Thianwan,
    S,
    Cr,
    PicardS,
}

impl SchemeKind {
    /// Stable lowercase identifier (matches the serde names).
    pub fn id(self) -> &'static str {
        match self {
            SchemeKind::Picard => "picard",
            SchemeKind::Mann => "mann",
            SchemeKind::Ishikawa => "ishikawa",
            SchemeKind::Noor => "noor",
            SchemeKind::Sp => "sp",
            SchemeKind::Thianwan => "thianwan",
            SchemeKind::S => "s",
            SchemeKind::Cr => "cr",
            SchemeKind::PicardS => "picard_s",
        }
    }

    /// All nine schemes in declaration order.
    pub fn all() -> [SchemeKind; 9] {
        [
            SchemeKind::Picard,
            SchemeKind::Mann,
            SchemeKind::Ishikawa,
            SchemeKind::Noor,
            SchemeKind::Sp,
            SchemeKind::Thianwan,
            SchemeKind::S,
            SchemeKind::Cr,
            SchemeKind::PicardS,
        ]
    }
}

impl FromStr for SchemeKind {
    type Err = SchemeError;

    fn from_str(s: &str) -> Result<Self, SchemeError> {
        SchemeKind::all()
            .into_iter()
            .find(|k| k.id() == s)
            .ok_or_else(|| SchemeError::Invalid(format!("unknown scheme {s:?}")))
    }
}

impl std::fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.id())
    }
}

/// One update of a scheme: the next iterate plus any auxiliary stages.
#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub next: Vec<f64>,
    /// Innermost stage, produced only by the three-stage schemes.
    pub z: Option<Vec<f64>>,
    /// Middle stage, produced by every scheme with at least two stages.
    pub y: Option<Vec<f64>>,
}

/// `(1 − a)·u + a·v`, clamped back into the box.
///
/// The clamp keeps sub-ulp rounding excursions (e.g. `0.7·0.1 + 0.3·0.1`
/// overshoots `0.1`) from ejecting iterates out of the domain; projection
/// onto a box is nonexpansive, so no convergence estimate is disturbed.
fn convex(domain: &crate::operators::Domain, a: f64, u: &[f64], v: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = u
        .iter()
        .zip(v)
        .map(|(ui, vi)| (1.0 - a) * ui + a * vi)
        .collect();
    domain.clamp_in_place(&mut out);
    out
}

/// Applies one update of `scheme` at schedule index `n`.
///
/// Writing `T` for the map and `(a⁰, a¹, a²)` for the stage weights at `n`:
///
/// | scheme    | update                                                      |
/// |-----------|-------------------------------------------------------------|
/// | picard    | `x' = Tx`                                                   |
/// | mann      | `x' = (1−a⁰)x + a⁰Tx`                                       |
/// | ishikawa  | `y = (1−a¹)x + a¹Tx`, `x' = (1−a⁰)x + a⁰Ty`                 |
/// | noor      | `z = (1−a²)x + a²Tx`, `y = (1−a¹)x + a¹Tz`, `x' = (1−a⁰)x + a⁰Ty` |
/// | sp        | `z = (1−a²)x + a²Tx`, `y = (1−a¹)z + a¹Tz`, `x' = (1−a⁰)y + a⁰Ty` |
/// | thianwan  | `y = (1−a¹)x + a¹Tx`, `x' = (1−a⁰)y + a⁰Ty`                 |
/// | s         | `y = (1−a¹)x + a¹Tx`, `x' = (1−a⁰)Tx + a⁰Ty`                |
/// | cr        | `z = (1−a²)x + a²Tx`, `y = (1−a¹)Tx + a¹Tz`, `x' = (1−a⁰)y + a⁰Ty` |
/// | picard_s  | `z = (1−a²)x + a²Tx`, `y = (1−a¹)Tx + a¹Tz`, `x' = Ty`      |
pub fn step<M: PointMap + ?Sized>(
    scheme: SchemeKind,
    map: &M,
    schedule: &Schedule,
    n: u64,
    x: &[f64],
) -> Result<StepResult, SchemeError> {
    let domain = map.domain();
    let [a0, a1, a2] = schedule.triple(n)?;
    let tx = map.evaluate(x)?;
    let result = match scheme {
        SchemeKind::Picard => StepResult {
            next: tx,
            z: None,
            y: None,
        },
        SchemeKind::Mann => StepResult {
            next: convex(domain, a0, x, &tx),
            z: None,
            y: None,
        },
        SchemeKind::Ishikawa => {
            let y = convex(domain, a1, x, &tx);
            let ty = map.evaluate(&y)?;
            StepResult {
                next: convex(domain, a0, x, &ty),
                z: None,
                y: Some(y),
            }
        }
        SchemeKind::Noor => {
            let z = convex(domain, a2, x, &tx);
            let tz = map.evaluate(&z)?;
            let y = convex(domain, a1, x, &tz);
            let ty = map.evaluate(&y)?;
            StepResult {
                next: convex(domain, a0, x, &ty),
                z: Some(z),
                y: Some(y),
            }
        }
        SchemeKind::Sp => {
            let z = convex(domain, a2, x, &tx);
            let tz = map.evaluate(&z)?;
            let y = convex(domain, a1, &z, &tz);
            let ty = map.evaluate(&y)?;
            StepResult {
                next: convex(domain, a0, &y, &ty),
                z: Some(z),
                y: Some(y),
            }
        }
        SchemeKind::Thianwan => {
            let y = convex(domain, a1, x, &tx);
            let ty = map.evaluate(&y)?;
            StepResult {
                next: convex(domain, a0, &y, &ty),
                z: None,
                y: Some(y),
            }
        }
        SchemeKind::S => {
            let y = convex(domain, a1, x, &tx);
            let ty = map.evaluate(&y)?;
            StepResult {
                next: convex(domain, a0, &tx, &ty),
                z: None,
                y: Some(y),
            }
        }
        SchemeKind::Cr => {
            let z = convex(domain, a2, x, &tx);
            let tz = map.evaluate(&z)?;
            let y = convex(domain, a1, &tx, &tz);
            let ty = map.evaluate(&y)?;
            StepResult {
                next: convex(domain, a0, &y, &ty),
                z: Some(z),
                y: Some(y),
            }
        }
        SchemeKind::PicardS => {
            let z = convex(domain, a2, x, &tx);
            let tz = map.evaluate(&z)?;
            let y = convex(domain, a1, &tx, &tz);
            let next = map.evaluate(&y)?;
            StepResult {
                next,
                z: Some(z),
                y: Some(y),
            }
        }
    };
    Ok(result)
}

/// When to stop iterating; the first satisfied rule wins.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopCriteria {
    /// Hard cap on the number of steps.
    pub max_iters: u64,
    /// Stop once `‖x_{n+1} − x_n‖ ≤ step_tol` (inclusive). The default `0`
    /// disables this rule: schemes whose weights are zero over a stretch of
    /// indices hold their iterate exactly still there, and such a delay must
    /// not read as convergence. Any positive value, however small, restores
    /// the stationarity stop.
    pub step_tol: f64,
    /// Stop once `‖x_n − u*‖ ≤ tol`; requires a map with a known `u*`.
    pub error_tol: Option<f64>,
}

impl Default for StopCriteria {
    fn default() -> Self {
        StopCriteria {
            max_iters: 100_000,
            step_tol: 0.0,
            error_tol: None,
        }
    }
}

/// Why an iteration run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxIters,
    StepTol,
    ErrorTol,
}

impl StopReason {
    pub fn label(self) -> &'static str {
        match self {
            StopReason::MaxIters => "max_iters",
            StopReason::StepTol => "step_tol",
            StopReason::ErrorTol => "error_tol",
        }
    }
}

/// Knobs of [`iterate_with`] beyond the stop rules.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    /// Schedule index of the first step (iterate labels follow it).
    pub start_index: u64,
    /// Keep the auxiliary `z`/`y` stages alongside the iterates.
    pub record_aux: bool,
    /// Norm used by the stop rules.
    pub norm: NormKind,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            start_index: 0,
            record_aux: false,
            norm: NormKind::Euclidean,
        }
    }
}

/// Auxiliary stages of one step, for schemes that have them.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxPair {
    pub z: Option<Vec<f64>>,
    pub y: Option<Vec<f64>>,
}

/// A finished iteration run: `iterates[0]` is the start point, and the
/// iterate at position `k` carries index `start_index + k`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub scheme: SchemeKind,
    pub operator_id: String,
    pub schedule_id: String,
    pub start_index: u64,
    pub iterates: Vec<Vec<f64>>,
    pub aux: Option<Vec<AuxPair>>,
    pub stop_reason: StopReason,
}

impl Trajectory {
    /// Number of steps taken (`iterates.len() − 1`).
    pub fn steps(&self) -> u64 {
        (self.iterates.len() - 1) as u64
    }

    /// The final iterate.
    pub fn last(&self) -> &[f64] {
        self.iterates.last().expect("a trajectory holds x0")
    }

    /// Writes the run as CSV: header `n,x0,...,x{d−1},err`, one row per
    /// iterate, floats at 17 significant digits, LF line endings. The
    /// `err` column is `‖x_n − u*‖` when `u_star` is given, else blank.
    pub fn write_csv<W: io::Write>(
        &self,
        w: &mut W,
        u_star: Option<&[f64]>,
        norm: NormKind,
    ) -> io::Result<()> {
        let dim = self.iterates[0].len();
        write!(w, "n")?;
        for i in 0..dim {
            write!(w, ",x{i}")?;
        }
        write!(w, ",err\n")?;
        for (k, x) in self.iterates.iter().enumerate() {
            write!(w, "{}", self.start_index + k as u64)?;
            for xi in x {
                write!(w, ",{xi:.16e}")?;
            }
            match u_star {
                Some(u) => write!(w, ",{:.16e}\n", norm.distance(x, u))?,
                None => write!(w, ",\n")?,
            }
        }
        Ok(())
    }
}

/// [`iterate_with`] under default options (index 0, Euclidean norm).
pub fn iterate<M: PointMap + ?Sized>(
    scheme: SchemeKind,
    map: &M,
    schedule: &Schedule,
    x0: &[f64],
    stop: &StopCriteria,
) -> Result<Trajectory, SchemeError> {
    iterate_with(scheme, map, schedule, x0, stop, &RunOptions::default())
}

/// Runs `scheme` on `map` from `x0`, consuming schedule indices
/// `start_index, start_index+1, ...` until a stop rule fires.
///
/// After each step the rules are consulted in order: error tolerance
/// first (when set), then step tolerance (inclusive `≤`), with the
/// iteration cap as the fallback. At least one step is always taken.
///
/// # Errors
/// `MissingFixedPoint` when `error_tol` is set but the map knows no `u*`;
/// `Invalid` for a zero iteration cap or non-finite tolerances; domain
/// and schedule failures propagate.
pub fn iterate_with<M: PointMap + ?Sized>(
    scheme: SchemeKind,
    map: &M,
    schedule: &Schedule,
    x0: &[f64],
    stop: &StopCriteria,
    opts: &RunOptions,
) -> Result<Trajectory, SchemeError> {
    if stop.max_iters == 0 {
        return Err(SchemeError::Invalid("max_iters must be ≥ 1".into()));
    }
    if !(stop.step_tol >= 0.0 && stop.step_tol.is_finite()) {
        return Err(SchemeError::Invalid(format!(
            "step_tol must be a finite non-negative number, got {}",
            stop.step_tol
        )));
    }
    if let Some(tol) = stop.error_tol {
        if !(tol >= 0.0 && tol.is_finite()) {
            return Err(SchemeError::Invalid(format!(
                "error_tol must be a finite non-negative number, got {tol}"
            )));
        }
    }
    map.domain().check(x0)?;
    let u_star: Option<Vec<f64>> = match stop.error_tol {
        Some(_) => Some(
            map.fixed_point()
                .ok_or(SchemeError::MissingFixedPoint)?
                .to_vec(),
        ),
        None => None,
    };

    let mut iterates = vec![x0.to_vec()];
    let mut aux = opts.record_aux.then(Vec::new);
    let mut stop_reason = StopReason::MaxIters;
    for k in 0..stop.max_iters {
        let n = opts.start_index + k;
        let result = step(scheme, map, schedule, n, iterates.last().unwrap())?;
        let step_size = opts.norm.distance(&result.next, iterates.last().unwrap());
        if let Some(a) = aux.as_mut() {
            a.push(AuxPair {
                z: result.z,
                y: result.y,
            });
        }
        iterates.push(result.next);
        if let (Some(tol), Some(u)) = (stop.error_tol, u_star.as_ref()) {
            if opts.norm.distance(iterates.last().unwrap(), u) <= tol {
                stop_reason = StopReason::ErrorTol;
                break;
            }
        }
        if stop.step_tol > 0.0 && step_size <= stop.step_tol {
            stop_reason = StopReason::StepTol;
            break;
        }
    }
    Ok(Trajectory {
        scheme,
        operator_id: map.id().to_string(),
        schedule_id: schedule.id().to_string(),
        start_index: opts.start_index,
        iterates,
        aux,
        stop_reason,
    })
}

/// First index at which the closed-form products are defined.
pub const CLOSED_FORM_START: u64 = 25;

/// A closed-form reference value with a log-domain companion.
///
/// The raw products underflow to exactly zero after a few hundred factors
/// (the faster one near index 543), so ratio arguments must switch to
/// `log_abs`, which stays finite as long as `x0 ≠ 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedFormValue {
    pub n: u64,
    /// `x0 · ∏ factor(k)`, possibly underflowed to zero.
    pub value: f64,
    /// `ln|x0| + Σ ln factor(k)`; `−∞` only when `x0 = 0`.
    pub log_abs: f64,
    /// The f64 product collapsed below `1e-300` while `x0 ≠ 0`.
    pub underflowed: bool,
}

/// Per-index factor of the faster scheme's product: `1/4 − 2/k`.
pub fn ps_product_factor(k: u64) -> f64 {
    0.25 - 2.0 / k as f64
}

/// Per-index factor of the runner-up's product:
/// `1/2 − 1/√k − 4/k + 8/(k√k)`.
pub fn cr_product_factor(k: u64) -> f64 {
    let kf = k as f64;
    let rk = kf.sqrt();
    0.5 - 1.0 / rk - 4.0 / kf + 8.0 / (kf * rk)
}

fn closed_form(
    n: u64,
    x0: f64,
    factor: impl Fn(u64) -> f64,
) -> Result<ClosedFormValue, SchemeError> {
    if n < CLOSED_FORM_START {
        return Err(SchemeError::Range {
            n,
            min: CLOSED_FORM_START,
        });
    }
    let mut value = x0;
    let mut log_abs = x0.abs().ln();
    for k in CLOSED_FORM_START..=n {
        let f = factor(k);
        value *= f;
        log_abs += f.ln();
    }
    Ok(ClosedFormValue {
        n,
        value,
        log_abs,
        underflowed: value.abs() < 1e-300 && x0 != 0.0,
    })
}

fn closed_form_prefix(
    n_max: u64,
    x0: f64,
    factor: impl Fn(u64) -> f64,
) -> Result<Vec<ClosedFormValue>, SchemeError> {
    if n_max < CLOSED_FORM_START {
        return Err(SchemeError::Range {
            n: n_max,
            min: CLOSED_FORM_START,
        });
    }
    let mut out = Vec::with_capacity((n_max - CLOSED_FORM_START + 1) as usize);
    let mut value = x0;
    let mut log_abs = x0.abs().ln();
    for k in CLOSED_FORM_START..=n_max {
        let f = factor(k);
        value *= f;
        log_abs += f.ln();
        out.push(ClosedFormValue {
            n: k,
            value,
            log_abs,
            underflowed: value.abs() < 1e-300 && x0 != 0.0,
        });
    }
    Ok(out)
}

/// Closed form of the fastest scheme under the delayed `4/√n` schedule:
/// `x0 · ∏_{k=25}^{n} (1/4 − 2/k)`. Defined for `n ≥ 25`.
pub fn ps_closed_form(n: u64, x0: f64) -> Result<ClosedFormValue, SchemeError> {
    closed_form(n, x0, ps_product_factor)
}

/// Closed form of the runner-up under the same schedule:
/// `x0 · ∏_{k=25}^{n} (1/2 − 1/√k − 4/k + 8/(k√k))`. Defined for `n ≥ 25`.
pub fn cr_closed_form(n: u64, x0: f64) -> Result<ClosedFormValue, SchemeError> {
    closed_form(n, x0, cr_product_factor)
}

/// All values `ps_closed_form(25..=n_max)` in one sequential sweep, so
/// entry `i` is bit-identical to the standalone call at `n = 25 + i`.
pub fn ps_closed_form_prefix(n_max: u64, x0: f64) -> Result<Vec<ClosedFormValue>, SchemeError> {
    closed_form_prefix(n_max, x0, ps_product_factor)
}

/// All values `cr_closed_form(25..=n_max)`; see [`ps_closed_form_prefix`].
pub fn cr_closed_form_prefix(n_max: u64, x0: f64) -> Result<Vec<ClosedFormValue>, SchemeError> {
    closed_form_prefix(n_max, x0, cr_product_factor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::builtin_catalog;
    use crate::operators::Operator;
    use crate::schedules::Rule;

    fn halving() -> Operator {
        builtin_catalog()
            .into_iter()
            .find(|o| o.id() == "halving")
            .unwrap()
    }

    #[test]
    fn scheme_ids_round_trip() {
        for kind in SchemeKind::all() {
            assert_eq!(SchemeKind::from_str(kind.id()).unwrap(), kind);
            let json = serde_json::to_string(&kind).unwrap();
            assert_eq!(json, format!("\"{}\"", kind.id()));
        }
        assert_eq!(SchemeKind::PicardS.id(), "picard_s");
        assert!(SchemeKind::from_str("picard-s").is_err());
    }

    #[test]
    fn fastest_scheme_single_step_hand_values() {
        // At index 25 the delayed schedule gives a = 0.8 on every stage;
        // from x = 1 on the halving map: z = 0.6, y = 0.34, x' = 0.17
        // (the latter two up to one ulp of the decimal literals).
        let op = halving();
        let s = Schedule::example1();
        let result = step(SchemeKind::PicardS, &op, &s, 25, &[1.0]).unwrap();
        assert_eq!(result.z.unwrap(), vec![0.6]);
        assert_eq!(result.y.unwrap(), vec![0.33999999999999997]);
        assert_eq!(result.next, vec![0.16999999999999998]);
        // One step from x reproduces the per-index product factor exactly.
        assert_eq!(result.next[0], ps_product_factor(25));
    }

    #[test]
    fn runner_up_single_step_hand_value() {
        let op = halving();
        let s = Schedule::example1();
        let result = step(SchemeKind::Cr, &op, &s, 25, &[1.0]).unwrap();
        // 0.204 up to accumulated rounding (the step composes three convex
        // combinations, the closed-form factor is a four-term sum).
        assert!((result.next[0] - 0.204).abs() <= 1e-15);
        assert!((result.next[0] - cr_product_factor(25)).abs() <= 1e-15);
    }

    #[test]
    fn all_schemes_single_step_on_halving() {
        // Frozen from the scalar mirror at index 25, x = 1, a = 0.8.
        let op = halving();
        let s = Schedule::example1();
        let expect: &[(SchemeKind, f64)] = &[
            (SchemeKind::Picard, 0.5),
            (SchemeKind::Mann, 0.6),
            (SchemeKind::S, 0.33999999999999997),
        ];
        for (kind, value) in expect {
            let result = step(*kind, &op, &s, 25, &[1.0]).unwrap();
            assert_eq!(result.next, vec![*value], "{kind}");
        }
    }

    #[test]
    fn zero_auxiliary_weight_reduces_deeper_schemes() {
        // a² ≡ 0 ⇒ noor = ishikawa and sp = thianwan; a¹ = a² ≡ 0 ⇒ all of
        // noor/sp collapse to mann. Checked by value on every iterate.
        let op = halving();
        let two_stage =
            Schedule::new("two_stage", [Rule::Constant(0.7), Rule::Constant(0.4), Rule::Zero])
                .unwrap();
        let one_stage =
            Schedule::new("one_stage", [Rule::Constant(0.7), Rule::Zero, Rule::Zero]).unwrap();
        let stop = StopCriteria {
            max_iters: 60,
            ..StopCriteria::default()
        };
        let x0 = [0.9];

        let pairs = [
            (SchemeKind::Noor, SchemeKind::Ishikawa, &two_stage),
            (SchemeKind::Sp, SchemeKind::Thianwan, &two_stage),
            (SchemeKind::Noor, SchemeKind::Mann, &one_stage),
            (SchemeKind::Sp, SchemeKind::Mann, &one_stage),
        ];
        for (a, b, schedule) in pairs {
            let ta = iterate(a, &op, schedule, &x0, &stop).unwrap();
            let tb = iterate(b, &op, schedule, &x0, &stop).unwrap();
            assert_eq!(ta.iterates.len(), tb.iterates.len());
            for (xa, xb) in ta.iterates.iter().zip(&tb.iterates) {
                assert_eq!(xa, xb, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn stationary_start_stops_after_one_step() {
        let op = halving();
        let stop = StopCriteria {
            step_tol: f64::MIN_POSITIVE,
            ..StopCriteria::default()
        };
        let traj = iterate(
            SchemeKind::PicardS,
            &op,
            &Schedule::example1(),
            &[0.0],
            &stop,
        )
        .unwrap();
        assert_eq!(traj.stop_reason, StopReason::StepTol);
        assert_eq!(traj.steps(), 1);
        assert_eq!(traj.last(), &[0.0]);
    }

    /// A zero `step_tol` disables the step rule: schemes that hold still
    /// while the schedule's delay keeps every weight at zero must idle
    /// through the delay instead of reporting convergence.
    #[test]
    fn zero_step_tolerance_idles_through_the_schedule_delay() {
        let op = halving();
        let stop = StopCriteria {
            max_iters: 60,
            ..StopCriteria::default()
        };
        let traj = iterate(
            SchemeKind::Mann,
            &op,
            &Schedule::example1(),
            &[1.0],
            &stop,
        )
        .unwrap();
        assert_eq!(traj.stop_reason, StopReason::MaxIters);
        assert_eq!(traj.steps(), 60);
        // Exactly held during the delay, strictly moving afterwards.
        assert_eq!(traj.iterates[25], vec![1.0]);
        assert!(traj.iterates[26][0] < 1.0);
    }

    #[test]
    fn error_tolerance_stops_at_the_frozen_step_count() {
        // Under the delayed schedule the fastest scheme squares the halving
        // map each step, so the error is 4^{-n}; 4^{-14} first dips under
        // 1e-8.
        let op = halving();
        let stop = StopCriteria {
            error_tol: Some(1e-8),
            ..StopCriteria::default()
        };
        let traj = iterate(SchemeKind::PicardS, &op, &Schedule::example1(), &[1.0], &stop).unwrap();
        assert_eq!(traj.stop_reason, StopReason::ErrorTol);
        assert_eq!(traj.steps(), 14);
        assert_eq!(traj.last(), &[3.725290298461914e-9]);
    }

    #[test]
    fn error_tolerance_requires_a_known_fixed_point() {
        let op = halving();
        let tilde = op.perturb(
            0.001,
            crate::operators::PerturbMode::ConstantOffset,
            NormKind::Euclidean,
        );
        let stop = StopCriteria {
            error_tol: Some(1e-8),
            ..StopCriteria::default()
        };
        let err =
            iterate(SchemeKind::Picard, &tilde, &Schedule::zero(), &[1.0], &stop).unwrap_err();
        assert_eq!(err, SchemeError::MissingFixedPoint);
    }

    #[test]
    fn iteration_cap_is_the_fallback_stop() {
        let op = halving();
        let stop = StopCriteria {
            max_iters: 10,
            ..StopCriteria::default()
        };
        let traj = iterate(SchemeKind::Picard, &op, &Schedule::zero(), &[1.0], &stop).unwrap();
        assert_eq!(traj.stop_reason, StopReason::MaxIters);
        assert_eq!(traj.steps(), 10);
        assert_eq!(traj.last(), &[2.0_f64.powi(-10)]);
    }

    #[test]
    fn run_configuration_is_validated() {
        let op = halving();
        let s = Schedule::zero();
        let bad_cap = StopCriteria {
            max_iters: 0,
            ..StopCriteria::default()
        };
        assert!(matches!(
            iterate(SchemeKind::Picard, &op, &s, &[1.0], &bad_cap),
            Err(SchemeError::Invalid(_))
        ));
        let bad_tol = StopCriteria {
            step_tol: f64::NAN,
            ..StopCriteria::default()
        };
        assert!(matches!(
            iterate(SchemeKind::Picard, &op, &s, &[1.0], &bad_tol),
            Err(SchemeError::Invalid(_))
        ));
        // Out-of-domain start propagates the domain error.
        assert!(matches!(
            iterate(SchemeKind::Picard, &op, &s, &[2.0], &StopCriteria::default()),
            Err(SchemeError::Operator(OperatorError::Domain { .. }))
        ));
    }

    #[test]
    fn trajectory_csv_layout() {
        let op = halving();
        let stop = StopCriteria {
            max_iters: 2,
            ..StopCriteria::default()
        };
        let traj = iterate(SchemeKind::Picard, &op, &Schedule::zero(), &[1.0], &stop).unwrap();

        let mut with_err = Vec::new();
        traj.write_csv(&mut with_err, Some(&[0.0]), NormKind::Euclidean)
            .unwrap();
        let expected = "n,x0,err\n\
                        0,1.0000000000000000e0,1.0000000000000000e0\n\
                        1,5.0000000000000000e-1,5.0000000000000000e-1\n\
                        2,2.5000000000000000e-1,2.5000000000000000e-1\n";
        assert_eq!(String::from_utf8(with_err).unwrap(), expected);

        let mut without_err = Vec::new();
        traj.write_csv(&mut without_err, None, NormKind::Euclidean)
            .unwrap();
        let expected = "n,x0,err\n\
                        0,1.0000000000000000e0,\n\
                        1,5.0000000000000000e-1,\n\
                        2,2.5000000000000000e-1,\n";
        assert_eq!(String::from_utf8(without_err).unwrap(), expected);
    }

    #[test]
    fn csv_rows_follow_the_start_index() {
        let op = halving();
        let stop = StopCriteria {
            max_iters: 1,
            ..StopCriteria::default()
        };
        let opts = RunOptions {
            start_index: 25,
            ..RunOptions::default()
        };
        let traj = iterate_with(
            SchemeKind::PicardS,
            &op,
            &Schedule::example1(),
            &[1.0],
            &stop,
            &opts,
        )
        .unwrap();
        let mut out = Vec::new();
        traj.write_csv(&mut out, None, NormKind::Euclidean).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.contains("\n25,1.0000000000000000e0,\n"));
        assert!(text.contains("\n26,1.6999999999999998e-1,\n"));
    }

    #[test]
    fn aux_stages_are_recorded_on_request() {
        let op = halving();
        let stop = StopCriteria {
            max_iters: 3,
            ..StopCriteria::default()
        };
        let opts = RunOptions {
            record_aux: true,
            start_index: 25,
            ..RunOptions::default()
        };
        let traj = iterate_with(
            SchemeKind::PicardS,
            &op,
            &Schedule::example1(),
            &[1.0],
            &stop,
            &opts,
        )
        .unwrap();
        let aux = traj.aux.as_ref().unwrap();
        assert_eq!(aux.len(), 3);
        assert_eq!(aux[0].z.as_deref(), Some(&[0.6][..]));
        assert_eq!(aux[0].y.as_deref(), Some(&[0.33999999999999997][..]));
        // Single-stage schemes record no aux values.
        let traj = iterate_with(
            SchemeKind::Picard,
            &op,
            &Schedule::example1(),
            &[1.0],
            &stop,
            &opts,
        )
        .unwrap();
        assert!(traj.aux.as_ref().unwrap().iter().all(|a| a.z.is_none() && a.y.is_none()));
    }

    #[test]
    fn closed_form_frozen_values() {
        assert_eq!(ps_product_factor(25), 0.16999999999999998);
        assert_eq!(cr_product_factor(25), 0.204);

        let table = [
            (25, 0.16999999999999998),
            (26, 0.02942307692307692),
            (50, 3.041792919662902e-19),
            (100, 6.922900511155375e-52),
            (200, 1.4550013373800436e-114),
        ];
        for (n, expected) in table {
            assert_eq!(ps_closed_form(n, 1.0).unwrap().value, expected, "ps {n}");
        }
        let table = [
            (25, 0.204),
            (26, 0.04291775199125339),
            (50, 5.528061381117265e-16),
            (100, 2.3288892202609864e-39),
            (200, 8.558987351512989e-80),
        ];
        for (n, expected) in table {
            assert_eq!(cr_closed_form(n, 1.0).unwrap().value, expected, "cr {n}");
        }
    }

    #[test]
    fn closed_form_rejects_indices_before_the_delay_ends() {
        assert_eq!(
            ps_closed_form(24, 1.0).unwrap_err(),
            SchemeError::Range { n: 24, min: 25 }
        );
        assert_eq!(
            cr_closed_form(0, 1.0).unwrap_err(),
            SchemeError::Range { n: 0, min: 25 }
        );
        assert!(ps_closed_form_prefix(24, 1.0).is_err());
    }

    #[test]
    fn closed_form_underflow_switches_to_log_domain() {
        // The faster product is exactly zero from index 543 on, the slower
        // from 899; the log companions stay finite and ordered.
        let ps = ps_closed_form(543, 1.0).unwrap();
        assert_eq!(ps.value, 0.0);
        assert!(ps.underflowed);
        assert!(ps.log_abs.is_finite());
        let ps_prev = ps_closed_form(542, 1.0).unwrap();
        assert_ne!(ps_prev.value, 0.0);

        let cr = cr_closed_form(899, 1.0).unwrap();
        assert_eq!(cr.value, 0.0);
        assert!(cr.underflowed);
        let cr_prev = cr_closed_form(898, 1.0).unwrap();
        assert_ne!(cr_prev.value, 0.0);

        // Zero start: value is zero but nothing "underflowed".
        let zero = ps_closed_form(100, 0.0).unwrap();
        assert_eq!(zero.value, 0.0);
        assert!(!zero.underflowed);
        assert_eq!(zero.log_abs, f64::NEG_INFINITY);
    }

    #[test]
    fn prefix_sweep_matches_standalone_closed_forms() {
        let prefix = ps_closed_form_prefix(120, 1.0).unwrap();
        assert_eq!(prefix.len(), 96);
        for entry in prefix.iter().step_by(17) {
            let standalone = ps_closed_form(entry.n, 1.0).unwrap();
            assert_eq!(entry.value, standalone.value);
            assert_eq!(entry.log_abs, standalone.log_abs);
        }
        let prefix = cr_closed_form_prefix(60, 0.5).unwrap();
        assert_eq!(prefix.last().unwrap().n, 60);
        assert_eq!(
            prefix.last().unwrap().value,
            cr_closed_form(60, 0.5).unwrap().value
        );
    }

    #[test]
    fn iterates_track_the_closed_forms() {
        // Under the delayed schedule on the halving map, the two top
        // schemes follow their product forms to near machine precision.
        let op = halving();
        let s = Schedule::example1();
        let opts = RunOptions {
            start_index: 25,
            ..RunOptions::default()
        };
        let stop = StopCriteria {
            max_iters: 176,
            ..StopCriteria::default()
        };

        for (kind, prefix) in [
            (SchemeKind::PicardS, ps_closed_form_prefix(200, 1.0).unwrap()),
            (SchemeKind::Cr, cr_closed_form_prefix(200, 1.0).unwrap()),
        ] {
            let traj = iterate_with(kind, &op, &s, &[1.0], &stop, &opts).unwrap();
            assert_eq!(traj.stop_reason, StopReason::MaxIters);
            let mut worst = 0.0_f64;
            for entry in &prefix {
                // Iterate k carries index 25 + k and equals the product
                // through entry.n = 25 + k − 1.
                let k = (entry.n - 24) as usize;
                let rel = (traj.iterates[k][0] - entry.value).abs() / entry.value.abs();
                worst = worst.max(rel);
            }
            assert!(worst <= 1e-12, "{kind}: worst rel err {worst:.3e}");
        }
    }
}
