//! Property-based invariants: randomized inputs exercise the guarantees
//! each module's documentation promises, independent of any particular
//! frozen value.

use fixpoint::analysis::{
    averaging_recursion, error_bound_prefix, error_sequence, rate_compare, theta_ratio_test,
    Classification, ThetaVariant,
};
use fixpoint::norm::NormKind;
use fixpoint::operators::{builtin_catalog, PerturbMode, PointMap};
use fixpoint::schedules::{audit_divergence, Rule, Schedule};
use fixpoint::schemes::{iterate, step, SchemeKind, StopCriteria};
use proptest::prelude::*;

fn rule_strategy() -> impl Strategy<Value = Rule> {
    prop_oneof![
        Just(Rule::Example1),
        (0.0..=1.0f64).prop_map(Rule::Constant),
        Just(Rule::Harmonic),
        Just(Rule::Zero),
    ]
}

fn schedule_strategy() -> impl Strategy<Value = Schedule> {
    [rule_strategy(), rule_strategy(), rule_strategy()]
        .prop_map(|rules| Schedule::new("prop", rules).expect("constants are in range"))
}

fn scheme_strategy() -> impl Strategy<Value = SchemeKind> {
    prop::sample::select(SchemeKind::all().to_vec())
}

fn norm_strategy() -> impl Strategy<Value = NormKind> {
    prop_oneof![Just(NormKind::Euclidean), Just(NormKind::Max)]
}

proptest! {
    /// Every stage weight a schedule emits lies in [0, 1], at any index,
    /// and re-evaluation is deterministic.
    #[test]
    fn schedule_weights_stay_in_the_unit_interval(
        schedule in schedule_strategy(),
        n in 0u64..100_000,
    ) {
        let [a0, a1, a2] = schedule.triple(n).unwrap();
        for a in [a0, a1, a2] {
            prop_assert!((0.0..=1.0).contains(&a));
        }
        prop_assert_eq!(schedule.triple(n).unwrap(), [a0, a1, a2]);
    }

    /// Partial sums of a¹·a² are non-negative and monotone in the horizon.
    #[test]
    fn divergence_partial_sums_are_monotone(
        schedule in schedule_strategy(),
        n1 in 0u64..2_000,
        extra in 0u64..2_000,
    ) {
        let s1 = audit_divergence(&schedule, n1, 1.0).unwrap().partial_sum;
        let s2 = audit_divergence(&schedule, n1 + extra, 1.0).unwrap().partial_sum;
        prop_assert!(s1 >= 0.0);
        prop_assert!(s2 >= s1);
    }

    /// A single step of any scheme maps domain points to domain points,
    /// including the recorded intermediate stages.
    #[test]
    fn steps_never_leave_the_domain(
        scheme in scheme_strategy(),
        schedule in schedule_strategy(),
        n in 0u64..10_000,
        coords in prop::collection::vec(0.0..=1.0f64, 1..=2),
    ) {
        // The halving map exists in every dimension; the affine catalog
        // entries pin theirs.
        let op = &builtin_catalog()[0];
        let x: Vec<f64> = coords.into_iter().take(op.domain().dim()).collect();
        let result = step(scheme, op, &schedule, n, &x).unwrap();
        prop_assert!(op.domain().check(&result.next).is_ok());
        for stage in [result.z, result.y].into_iter().flatten() {
            prop_assert!(op.domain().check(&stage).is_ok());
        }
    }

    /// Starting at the fixed point, every scheme stays there: each stage is
    /// a convex combination of points that are all u*.
    #[test]
    fn fixed_points_are_stationary(
        scheme in scheme_strategy(),
        schedule in schedule_strategy(),
        which in 0usize..3,
        norm in norm_strategy(),
    ) {
        let op = &builtin_catalog()[which];
        let u = op.fixed_point().unwrap().to_vec();
        let stop = StopCriteria { max_iters: 50, step_tol: 0.0, error_tol: None };
        let traj = iterate(scheme, op, &schedule, &u, &stop).unwrap();
        prop_assert!(norm.distance(traj.last(), &u) <= 1e-14);
    }

    /// A perturbed operator never strays more than epsilon from its base,
    /// in the norm the perturbation was calibrated against.
    #[test]
    fn perturbations_stay_within_epsilon(
        which in 0usize..3,
        epsilon in 1e-9..1.0f64,
        seed in any::<u64>(),
        uniform in any::<bool>(),
        norm in norm_strategy(),
        coords in prop::collection::vec(0.0..=1.0f64, 2),
    ) {
        let op = &builtin_catalog()[which];
        let mode = if uniform {
            PerturbMode::UniformRandom { seed }
        } else {
            PerturbMode::ConstantOffset
        };
        let perturbed = op.perturb(epsilon, mode, norm);
        let x: Vec<f64> = coords.into_iter().take(op.domain().dim()).collect();
        op.domain().check(&x).unwrap();
        let base = op.evaluate(&x).unwrap();
        let shifted = perturbed.evaluate(&x).unwrap();
        prop_assert!(norm.distance(&base, &shifted) <= epsilon + 1e-12);
    }

    /// Comparing an error sequence against itself is always a tie.
    #[test]
    fn identical_sequences_are_same_rate(
        start in 0.5..10.0f64,
        factor in 0.1..0.9f64,
        len in 64usize..200,
    ) {
        let mut e = Vec::with_capacity(len);
        let mut v = start;
        for _ in 0..len {
            e.push(v);
            v *= factor;
        }
        let verdict = rate_compare(&e, &e, 32).unwrap();
        prop_assert_eq!(verdict.l_estimate, 1.0);
        prop_assert_eq!(verdict.classification, Classification::SameRate);
    }

    /// The log companion of the error bound tracks the plain value while
    /// the value is representable, and the bound strictly decreases.
    #[test]
    fn bound_prefix_log_and_value_agree(
        delta in 0.05..0.95f64,
        schedule in schedule_strategy(),
        x0_err in 1e-3..10.0f64,
        n_max in 1u64..300,
    ) {
        let prefix = error_bound_prefix(delta, &schedule, x0_err, n_max).unwrap();
        prop_assert_eq!(prefix.len(), n_max as usize + 1);
        let mut prev = x0_err;
        for entry in &prefix {
            // Strictly decreasing until the value underflows to exact zero.
            if prev > 0.0 {
                prop_assert!(entry.value < prev);
            } else {
                prop_assert_eq!(entry.value, 0.0);
            }
            prop_assert!(entry.value >= 0.0);
            if entry.value > 1e-300 {
                let err = (entry.log_value.exp() - entry.value).abs();
                prop_assert!(err <= 1e-9 * entry.value);
            }
            prev = entry.value;
        }
    }

    /// With stage weights bounded away from 1/(1+delta), every rate-ratio
    /// factor stays at or above delta²: the comparison sequence can only
    /// contract faster than the reference.
    #[test]
    fn theta_ratios_dominate_delta_squared(
        delta in 0.05..0.6f64,
        a in 0.0..0.6f64,
        vs_sp in any::<bool>(),
    ) {
        let schedule = Schedule::constant(a).unwrap();
        let variant = if vs_sp { ThetaVariant::VsSp } else { ThetaVariant::VsNoor };
        let theta = theta_ratio_test(delta, &schedule, 200, variant).unwrap();
        let floor = delta * delta * (1.0 - 1e-12);
        for ratio in &theta.ratios {
            prop_assert!(*ratio >= floor);
        }
        prop_assert!(theta.tail_ratio >= floor);
    }

    /// The averaging recursion never exceeds the largest forcing value it
    /// has seen, provided it starts at or below it.
    #[test]
    fn averaging_recursion_respects_the_forcing_sup(
        mu in 0.01..1.0f64,
        gamma_const in 0.1..5.0f64,
        beta0_frac in 0.0..=1.0f64,
        n_max in 10u64..2_000,
    ) {
        let beta0 = beta0_frac * gamma_const;
        let trace = averaging_recursion(beta0, |_| mu, |_| gamma_const, n_max);
        let sup = trace.gamma_max.unwrap();
        for b in &trace.beta {
            prop_assert!(*b <= sup + 1e-12);
        }
        prop_assert!(trace.tail_max <= sup + 1e-12);
    }

    /// Triangle inequality and symmetry for both norms.
    #[test]
    fn distances_obey_the_triangle_inequality(
        a in prop::collection::vec(-10.0..10.0f64, 1..4),
        norm in norm_strategy(),
        seedling in any::<u64>(),
    ) {
        // Derive b and c deterministically from the seed so all three
        // vectors share a length.
        let mut b = a.clone();
        let mut c = a.clone();
        let mut state = seedling;
        for i in 0..a.len() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            b[i] += ((state >> 11) as f64 / (1u64 << 53) as f64) * 4.0 - 2.0;
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            c[i] += ((state >> 11) as f64 / (1u64 << 53) as f64) * 4.0 - 2.0;
        }
        let ab = norm.distance(&a, &b);
        let bc = norm.distance(&b, &c);
        let ac = norm.distance(&a, &c);
        prop_assert_eq!(ab, norm.distance(&b, &a));
        prop_assert!(ac <= ab + bc + 1e-12);
    }
}

/// The error sequence of a trajectory run under `error_tol` ends at or
/// below that tolerance, and earlier entries sit above it.
#[test]
fn error_tolerance_cuts_the_sequence_where_promised() {
    let op = &builtin_catalog()[0];
    let schedule = Schedule::example1();
    let stop = StopCriteria {
        max_iters: 100_000,
        step_tol: 0.0,
        error_tol: Some(1e-8),
    };
    let traj = iterate(SchemeKind::PicardS, op, &schedule, &[1.0], &stop).unwrap();
    let errs = error_sequence(&traj, op.fixed_point().unwrap(), NormKind::Euclidean).values;
    let last = *errs.last().unwrap();
    assert!(last <= 1e-8);
    for e in &errs[..errs.len() - 1] {
        assert!(*e > 1e-8);
    }
}
