//! Step-size schedules `(a⁰_n, a¹_n, a²_n)` and their hypothesis audits.
//!
//! Every iteration scheme draws its per-step weights from a [`Schedule`]:
//! three index-to-`[0,1]` sequences, one per auxiliary stage. The audits
//! check the side conditions the convergence and rate results lean on —
//! divergence of `Σ a¹_n a²_n`, a pointwise cap `a^i_n < 1/(1+delta)`
//! together with eventual decay, and the product floor `a¹_n a²_n ≥ 1/2` —
//! and report the first index where a pointwise condition fails.

use serde::Deserialize;
use thiserror::Error;

/// Errors raised by schedule construction and evaluation.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum ScheduleError {
    /// A rule produced a weight outside `[0,1]`.
    #[error("schedule {id} rule {rule} produced {value} at n = {n}, outside [0,1]")]
    Range {
        id: String,
        rule: usize,
        n: u64,
        value: f64,
    },
    /// The definition itself is unusable.
    #[error("invalid schedule definition: {0}")]
    Invalid(String),
}

/// A single step-size sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Rule {
    /// `a_n = 0` for `n ≤ 24`, `4/√n` for `n ≥ 25`.
    Example1,
    /// `a_n = c` for a fixed `c ∈ [0,1]`.
    Constant(f64),
    /// `a_n = 1/(n+2)`, summable-complement decay with `a_0 = 1/2`.
    Harmonic,
    /// `a_n = 0`.
    Zero,
}

impl Rule {
    fn eval(self, n: u64) -> f64 {
        match self {
            Rule::Example1 => {
                if n <= 24 {
                    0.0
                } else {
                    4.0 / (n as f64).sqrt()
                }
            }
            Rule::Constant(c) => c,
            Rule::Harmonic => 1.0 / (n as f64 + 2.0),
            Rule::Zero => 0.0,
        }
    }
}

/// Three step-size sequences, indexed by stage: `0` drives the outermost
/// update, `1` and `2` the auxiliary stages used by the deeper schemes.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    id: String,
    rules: [Rule; 3],
}

impl Schedule {
    /// Assembles a schedule, validating constant weights into `[0,1]`.
    pub fn new(id: impl Into<String>, rules: [Rule; 3]) -> Result<Self, ScheduleError> {
        for (i, rule) in rules.iter().enumerate() {
            if let Rule::Constant(c) = rule {
                if !(*c >= 0.0 && *c <= 1.0) {
                    return Err(ScheduleError::Invalid(format!(
                        "constant weight for rule {i} must lie in [0,1], got {c}"
                    )));
                }
            }
        }
        Ok(Schedule {
            id: id.into(),
            rules,
        })
    }

    /// The delayed `4/√n` schedule (zero through `n = 24`) on all stages.
    pub fn example1() -> Self {
        Schedule {
            id: "example1".into(),
            rules: [Rule::Example1; 3],
        }
    }

    /// The same constant `c` on all stages.
    pub fn constant(c: f64) -> Result<Self, ScheduleError> {
        Schedule::new(format!("constant_{c}"), [Rule::Constant(c); 3])
    }

    /// `1/(n+2)` on all stages.
    pub fn harmonic() -> Self {
        Schedule {
            id: "harmonic".into(),
            rules: [Rule::Harmonic; 3],
        }
    }

    /// All weights zero: every scheme degenerates toward its base form.
    pub fn zero() -> Self {
        Schedule {
            id: "zero".into(),
            rules: [Rule::Zero; 3],
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    /// Weight of stage `i ∈ {0,1,2}` at index `n`.
    ///
    /// # Errors
    /// `Range` if the rule steps outside `[0,1]` (the delayed `4/√n` rule
    /// does exactly that for `0 < n < 16` had the delay not covered it, so
    /// the check is live, not decorative).
    pub fn eval(&self, n: u64, i: usize) -> Result<f64, ScheduleError> {
        assert!(i < 3, "stage index must be 0, 1, or 2");
        let value = self.rules[i].eval(n);
        if !(value >= 0.0 && value <= 1.0) {
            return Err(ScheduleError::Range {
                id: self.id.clone(),
                rule: i,
                n,
                value,
            });
        }
        Ok(value)
    }

    /// All three stage weights at index `n`.
    pub fn triple(&self, n: u64) -> Result<[f64; 3], ScheduleError> {
        Ok([self.eval(n, 0)?, self.eval(n, 1)?, self.eval(n, 2)?])
    }
}

/// Evidence that `Σ_{n=0}^{N} a¹_n a²_n` has reached a divergence threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceAudit {
    /// The inclusive partial sum through index `N`.
    pub partial_sum: f64,
    /// `partial_sum ≥ threshold`.
    pub evidence: bool,
}

/// Sums `a¹_k a²_k` for `k = 0, ..., n_max` inclusive and compares against
/// a caller-chosen divergence threshold.
pub fn audit_divergence(
    schedule: &Schedule,
    n_max: u64,
    threshold: f64,
) -> Result<DivergenceAudit, ScheduleError> {
    let mut partial_sum = 0.0;
    for n in 0..=n_max {
        partial_sum += schedule.eval(n, 1)? * schedule.eval(n, 2)?;
    }
    Ok(DivergenceAudit {
        partial_sum,
        evidence: partial_sum >= threshold,
    })
}

/// Pass/fail of a pointwise schedule condition with its first failure index.
#[derive(Debug, Clone, PartialEq)]
pub struct PointwiseAudit {
    pub pass: bool,
    /// Smallest index where the condition failed, when it did.
    pub first_violation_index: Option<u64>,
}

/// Checks `a^i_n < 1/(1+delta)` strictly for every stage and `n ≤ n_max`,
/// and that the weights eventually decay: the maximum over the tail
/// `[n_max/2, n_max]` must drop below the head maximum over `[0, n_max/2)`
/// or below `1e-3` outright.
pub fn audit_cap_and_decay(
    schedule: &Schedule,
    delta: f64,
    n_max: u64,
) -> Result<PointwiseAudit, ScheduleError> {
    let cap = 1.0 / (1.0 + delta);
    let mut first_violation_index = None;
    let split = n_max / 2;
    let mut head_max = 0.0_f64;
    let mut tail_max = 0.0_f64;
    for n in 0..=n_max {
        let mut step_max = 0.0_f64;
        for i in 0..3 {
            step_max = step_max.max(schedule.eval(n, i)?);
        }
        if step_max >= cap && first_violation_index.is_none() {
            first_violation_index = Some(n);
        }
        if n < split {
            head_max = head_max.max(step_max);
        } else {
            tail_max = tail_max.max(step_max);
        }
    }
    let decays = tail_max < head_max || tail_max <= 1e-3;
    Ok(PointwiseAudit {
        pass: first_violation_index.is_none() && decays,
        first_violation_index,
    })
}

/// Checks the product floor `a¹_n a²_n ≥ 1/2` for every `n ≤ n_max`.
pub fn audit_product_floor(
    schedule: &Schedule,
    n_max: u64,
) -> Result<PointwiseAudit, ScheduleError> {
    let mut first_violation_index = None;
    for n in 0..=n_max {
        if schedule.eval(n, 1)? * schedule.eval(n, 2)? < 0.5 {
            first_violation_index = Some(n);
            break;
        }
    }
    Ok(PointwiseAudit {
        pass: first_violation_index.is_none(),
        first_violation_index,
    })
}

/// Combined report of all three audits over `0 ..= n_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleAudit {
    pub schedule_id: String,
    pub n_max: u64,
    pub partial_sum: f64,
    pub divergence_evidence: bool,
    pub cap_and_decay_pass: bool,
    pub product_floor_pass: bool,
    /// Smallest index at which any pointwise condition failed.
    pub first_violation_index: Option<u64>,
}

impl ScheduleAudit {
    /// JSON rendering with stable (lexicographic) key order; a missing
    /// violation index serializes as `null`.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "schedule_id": self.schedule_id,
            "n_max": self.n_max,
            "partial_sum": self.partial_sum,
            "divergence_evidence": self.divergence_evidence,
            "cap_and_decay_pass": self.cap_and_decay_pass,
            "product_floor_pass": self.product_floor_pass,
            "first_violation_index": self.first_violation_index,
        })
    }
}

/// Runs all three audits against the same horizon and threshold.
pub fn audit_schedule(
    schedule: &Schedule,
    delta: f64,
    n_max: u64,
    threshold: f64,
) -> Result<ScheduleAudit, ScheduleError> {
    let divergence = audit_divergence(schedule, n_max, threshold)?;
    let cap = audit_cap_and_decay(schedule, delta, n_max)?;
    let floor = audit_product_floor(schedule, n_max)?;
    let first_violation_index = match (cap.first_violation_index, floor.first_violation_index) {
        (Some(a), Some(b)) => Some(a.min(b)),
        (a, b) => a.or(b),
    };
    Ok(ScheduleAudit {
        schedule_id: schedule.id().to_string(),
        n_max,
        partial_sum: divergence.partial_sum,
        divergence_evidence: divergence.evidence,
        cap_and_decay_pass: cap.pass,
        product_floor_pass: floor.pass,
        first_violation_index,
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScheduleJson {
    id: String,
    kind: String,
    #[serde(default)]
    params: serde_json::Map<String, serde_json::Value>,
}

/// Loads a schedule from its JSON description `{"id", "kind", "params"}`.
///
/// Supported kinds: `example1`, `constant` (`params.c`), `harmonic`, `zero`.
/// Unknown kinds are a load error.
pub fn schedule_from_value(value: &serde_json::Value) -> Result<Schedule, ScheduleError> {
    let spec: ScheduleJson = serde_json::from_value(value.clone())
        .map_err(|e| ScheduleError::Invalid(format!("schedule JSON: {e}")))?;
    let rules = match spec.kind.as_str() {
        "example1" => [Rule::Example1; 3],
        "constant" => {
            let c = spec
                .params
                .get("c")
                .and_then(|v| v.as_f64())
                .ok_or_else(|| ScheduleError::Invalid("params.c must be a number".into()))?;
            [Rule::Constant(c); 3]
        }
        "harmonic" => [Rule::Harmonic; 3],
        "zero" => [Rule::Zero; 3],
        other => {
            return Err(ScheduleError::Invalid(format!(
                "unknown schedule kind {other:?}"
            )))
        }
    };
    Schedule::new(spec.id, rules)
}

/// Parses a schedule from JSON text; see [`schedule_from_value`].
pub fn schedule_from_json(text: &str) -> Result<Schedule, ScheduleError> {
    let value: serde_json::Value = serde_json::from_str(text)
        .map_err(|e| ScheduleError::Invalid(format!("schedule JSON: {e}")))?;
    schedule_from_value(&value)
}
