//! Randomized invariants over the whole input space, complementing the
//! fixed-grid checks: algebraic identities of the purification steps,
//! agreement between independent computations of the same quantity, and
//! round-trip laws of the small value types.

use proptest::prelude::*;

use qpfer::code::decoded_distribution;
use qpfer::montecarlo::wilson_interval;
use qpfer::pauli::{ErrorDistribution, PauliOp};
use qpfer::postprocess::{
    apply_schedule, bstep_distribution, pooling_rates, pstep_distribution, Schedule, ScheduleStep,
};

fn arb_distribution() -> impl Strategy<Value = ErrorDistribution> {
    [0.0f64..=1.0, 0.0..=1.0, 0.0..=1.0, 0.0..=1.0]
        .prop_filter("weights must carry mass", |w| w.iter().sum::<f64>() > 1e-3)
        .prop_map(|w| {
            let total: f64 = w.iter().sum();
            ErrorDistribution::new(w[0] / total, w[1] / total, w[2] / total, w[3] / total)
                .expect("normalized weights form a distribution")
        })
}

fn arb_pauli() -> impl Strategy<Value = PauliOp> {
    prop_oneof![
        Just(PauliOp::I),
        Just(PauliOp::X),
        Just(PauliOp::Y),
        Just(PauliOp::Z),
    ]
}

fn components(d: &ErrorDistribution) -> [f64; 4] {
    [d.p_i(), d.p_x(), d.p_y(), d.p_z()]
}

proptest! {
    /// The code-level decode transform is the pair-parity step with the
    /// bit-flip and phase-flip roles exchanged — bitwise, not just within
    /// tolerance.
    #[test]
    fn decode_mirrors_the_pair_parity_step(d in arb_distribution()) {
        let (decoded, decode_survival) = decoded_distribution(&d);
        let (stepped, step_survival) = bstep_distribution(&d);
        prop_assert_eq!(components(&decoded), components(&stepped.swap_xz()));
        prop_assert_eq!(decode_survival, step_survival);
    }

    /// A pair agrees on parity at least half the time, however the error
    /// mass is arranged.
    #[test]
    fn pair_survival_never_drops_below_one_half(d in arb_distribution()) {
        let (_, survival) = bstep_distribution(&d);
        prop_assert!(survival >= 0.5 - 1e-15);
        prop_assert!(survival <= 1.0 + 1e-15);
    }

    /// The pooled joint distribution and the closed-form marginal rates
    /// are computed by unrelated code paths; their marginals must agree.
    #[test]
    fn pooled_marginals_match_the_closed_forms(d in arb_distribution(), r in 1u64..=64) {
        let joint = pstep_distribution(&d, r).expect("valid width");
        let rates = pooling_rates(&d, r).expect("valid width");
        prop_assert!((joint.bit_flip_rate() - rates.e_bit).abs() <= 1e-12);
        prop_assert!((joint.phase_flip_rate() - rates.e_phase).abs() <= 1e-12);
    }

    /// Pooling keeps the phase failure under its exponential tail bound
    /// and the bit flip under its union bound whenever the bound regime
    /// applies.
    #[test]
    fn pooling_bounds_dominate_at_random_points(d in arb_distribution(), r in 1u64..=101) {
        prop_assume!(d.phase_flip_rate() < 0.5);
        let rates = pooling_rates(&d, r).expect("valid width");
        let margin = 0.5 - d.phase_flip_rate();
        prop_assert!(rates.e_bit <= r as f64 * d.bit_flip_rate() + 1e-12);
        prop_assert!(rates.e_phase <= (-2.0 * r as f64 * margin * margin).exp() + 1e-12);
    }

    /// An empty schedule with a width-one final step changes nothing: the
    /// residual rates are the distribution's own flip rates and every bit
    /// survives.
    #[test]
    fn the_trivial_schedule_is_the_identity(d in arb_distribution()) {
        let schedule = Schedule::new(Vec::new(), 1).expect("valid schedule");
        let applied = apply_schedule(&d, &schedule);
        let (bit, phase) = d.flip_rates();
        prop_assert!((applied.residual.e_bit - bit).abs() <= 1e-15);
        prop_assert!((applied.residual.e_phase - phase).abs() <= 1e-15);
        prop_assert_eq!(applied.expected_bit_yield, 1.0);
    }

    /// Phase-free Pauli composition is the XOR of the flip indicators,
    /// which makes every element self-inverse and the group commutative.
    #[test]
    fn pauli_composition_follows_the_flag_xor_law(a in arb_pauli(), b in arb_pauli()) {
        let composed = a.compose(b);
        prop_assert_eq!(
            composed,
            PauliOp::from_flags(
                a.has_bit_flip() ^ b.has_bit_flip(),
                a.has_phase_flip() ^ b.has_phase_flip(),
            )
        );
        prop_assert_eq!(a.compose(b), b.compose(a));
        prop_assert_eq!(a.compose(a), PauliOp::I);
    }

    /// Schedule steps survive a round trip through their text form.
    #[test]
    fn schedule_steps_round_trip_through_text(pool in prop::option::of(1u64..=50)) {
        let step = match pool {
            None => ScheduleStep::B,
            Some(k) => ScheduleStep::P { r: 2 * k + 1 },
        };
        let parsed: ScheduleStep = step.to_string().parse().expect("own rendering parses");
        prop_assert_eq!(parsed, step);
    }

    /// Wilson intervals bracket the observed rate and stay inside the
    /// unit interval.
    #[test]
    fn wilson_intervals_bracket_the_rate(
        checked in 1u64..=100_000,
        numerator in 0u64..=100_000,
        confidence in prop_oneof![Just(0.9), Just(0.95), Just(0.99)],
    ) {
        let errors = numerator % (checked + 1);
        let estimate = wilson_interval(errors, checked, confidence).expect("valid inputs");
        prop_assert!(estimate.ci_low >= 0.0);
        prop_assert!(estimate.ci_high <= 1.0);
        prop_assert!(estimate.ci_low <= estimate.rate + 1e-15);
        prop_assert!(estimate.rate <= estimate.ci_high + 1e-15);
    }

    /// Distributions survive a round trip through their serialized form.
    #[test]
    fn distributions_round_trip_through_json(d in arb_distribution()) {
        let text = serde_json::to_string(&d).expect("serializes");
        let back: ErrorDistribution = serde_json::from_str(&text).expect("parses");
        prop_assert_eq!(components(&back), components(&d));
    }
}
