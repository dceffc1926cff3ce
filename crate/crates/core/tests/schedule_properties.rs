use csgd::schedule::{CheckStatus, StepSchedule};
use csgd::{ValidationMode, Verdict};
use proptest::prelude::*;

#[test]
fn worked_values() {
    let s = StepSchedule::new(1.0, 1.0, 0.5, 1.0);
    assert_eq!(s.alpha(0), 1.0);
    assert_eq!(StepSchedule::new(1.0, 0.2525, 1.0 / 3.0, 1.0).with_epsilon(1e-5).alpha(100_000), 0.5);
    assert!((StepSchedule::new(2.0, 1.0, 0.5, 0.75).alpha(15) - 0.25).abs() < 1e-15);
    assert_eq!(StepSchedule::new(1.0, 0.2525, 1.0 / 3.0, 1.0).with_epsilon(1e-5).beta(0), 0.2525);
    assert!((s.beta(3) - 0.5).abs() < 1e-15);
    assert!((StepSchedule::new(1.0, 0.3, 1.0 / 3.0, 1.0).beta(7) - 0.15).abs() < 1e-15);
    assert_eq!(StepSchedule::new(1.0, 0.5, 0.25, 0.75).gamma(0), 2.0);
    let g = StepSchedule::new(1.0, 0.2525, 1.0 / 3.0, 1.0);
    let direct = (1.0 / 0.2525) / 8f64.powf(2.0 / 3.0);
    assert!((g.gamma(7) - direct).abs() < 1e-12 * direct);
    assert!((g.gamma(7) - 0.990_099).abs() < 1e-6);
}

#[test]
fn validation_examples() {
    let ok = StepSchedule::new(1.0, 0.2, 0.28, 0.9).validate().unwrap();
    assert_eq!(ok.verdict(ValidationMode::Strict), Verdict::Pass);

    let published = StepSchedule::new(1.0, 0.2525, 1.0 / 3.0, 1.0).validate().unwrap();
    assert_eq!(published.verdict(ValidationMode::Strict), Verdict::Fail);
    assert_eq!(published.verdict(ValidationMode::Compat), Verdict::Warn);
    let err = published.enforce(ValidationMode::Strict).unwrap_err().to_string();
    assert!(err.contains("3*delta1 < delta2"), "{err}");

    let bad = StepSchedule::new(1.0, 1.0, 0.1, 0.4).validate().unwrap();
    let failed: Vec<_> = bad.checks.iter().filter(|c| c.status == CheckStatus::Fail).map(|c| c.condition).collect();
    assert!(failed.contains(&"delta1 + delta2 > 1"));
    assert!(failed.contains(&"delta2 > 1/2"));
    assert_eq!(bad.verdict(ValidationMode::Compat), Verdict::Fail);

    assert!(StepSchedule::new(0.0, 1.0, 0.3, 1.0).validate().is_err());
    assert!(StepSchedule::new(1.0, -1.0, 0.3, 1.0).validate().is_err());
    assert!(StepSchedule::new(1.0, 1.0, 0.0, 1.0).validate().is_err());
}

fn schedule() -> impl Strategy<Value = StepSchedule> {
    (0.01f64..10.0, 0.01f64..1.0, 0.01f64..0.99, 0.01f64..1.0, prop_oneof![Just(1.0), 1e-6f64..10.0])
        .prop_map(|(a, b, d1, d2, eps)| StepSchedule::new(a, b, d1, d2).with_epsilon(eps))
}

proptest! {
    #[test]
    fn monotone_and_positive(s in schedule(), k in 0u64..1_000_000) {
        prop_assert!(s.alpha(k) > 0.0 && s.beta(k) > 0.0);
        prop_assert!(s.alpha(k + 1) <= s.alpha(k));
        prop_assert!(s.beta(k + 1) <= s.beta(k));
    }

    #[test]
    fn gamma_identity(s in schedule(), k in 0u64..1_000_000) {
        let g = s.gamma(k);
        prop_assert!((g - s.alpha(k) / s.beta(k)).abs() <= 1e-12 * g);
        prop_assert!((g - s.gamma_closed_form(k)).abs() <= 1e-12 * g);
    }

    #[test]
    fn strict_verdict_matches_inequalities(s in schedule()) {
        let (d1, d2) = (s.delta1, s.delta2);
        let valid = 3.0 * d1 < d2 && d2 <= 1.0 && d1 + d2 > 1.0 && d2 > 0.5;
        let report = s.validate().unwrap();
        prop_assert_eq!(report.verdict(ValidationMode::Strict) == Verdict::Pass, valid);
        prop_assert_eq!(report.enforce(ValidationMode::Strict).is_ok(), valid);
    }
}
