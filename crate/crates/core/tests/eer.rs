mod common;

use frugal_cd::alloop::{auc_of_eers, sampling_rate};
use frugal_cd::dataio::{compute_eer, Label};
use frugal_cd::Error;
use proptest::prelude::*;

/// Scores on a coarse grid so ties are common, with at least one sample per
/// class.
fn score_set() -> impl Strategy<Value = (Vec<f64>, Vec<Label>)> {
    (2usize..60)
        .prop_flat_map(|n| {
            (
                prop::collection::vec(0u32..40, n),
                prop::collection::vec(any::<bool>(), n),
            )
        })
        .prop_map(|(raw, flags)| {
            let mut labels: Vec<Label> = flags
                .iter()
                .map(|&f| if f { Label::Change } else { Label::NoChange })
                .collect();
            labels[0] = Label::Change;
            labels[1] = Label::NoChange;
            (raw.iter().map(|&r| r as f64 / 40.0).collect(), labels)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn matches_exhaustive_threshold_sweep((scores, labels) in score_set()) {
        let got = compute_eer(&scores, &labels).unwrap();
        prop_assert_eq!(got, common::exhaustive_eer(&scores, &labels));
    }

    #[test]
    fn invariant_under_increasing_transforms((scores, labels) in score_set(), a in 0.1f64..5.0, b in -3.0f64..3.0) {
        let base = compute_eer(&scores, &labels).unwrap();
        let affine: Vec<f64> = scores.iter().map(|s| a * s + b).collect();
        let cubed: Vec<f64> = scores.iter().map(|s| (s - 0.5).powi(3)).collect();
        let logistic: Vec<f64> = scores.iter().map(|s| 1.0 / (1.0 + (-8.0 * s).exp())).collect();
        prop_assert_eq!(compute_eer(&affine, &labels).unwrap(), base);
        prop_assert_eq!(compute_eer(&cubed, &labels).unwrap(), base);
        prop_assert_eq!(compute_eer(&logistic, &labels).unwrap(), base);
    }
}

#[test]
fn perfect_and_inverted_rankings() {
    let labels = [Label::NoChange, Label::NoChange, Label::Change, Label::Change];
    assert_eq!(compute_eer(&[0.1, 0.2, 0.8, 0.9], &labels).unwrap(), 0.0);
    assert_eq!(compute_eer(&[0.9, 0.8, 0.2, 0.1], &labels).unwrap(), 100.0);
}

#[test]
fn constant_scores_give_fifty_percent() {
    let labels = [Label::NoChange, Label::Change, Label::NoChange, Label::Change];
    assert_eq!(compute_eer(&[0.5; 4], &labels).unwrap(), 50.0);
}

#[test]
fn single_class_is_undefined() {
    let err = compute_eer(&[0.1, 0.2], &[Label::Change, Label::Change]).unwrap_err();
    assert!(matches!(err, Error::UndefinedMetric(_)));
}

#[test]
fn table_rows_average_to_reported_auc() {
    let unary = [21.00, 6.27, 3.18, 2.90, 2.18, 1.54, 1.63, 1.54, 1.72];
    let random_ambient = [16.27, 12.36, 6.00, 4.18, 5.54, 4.81, 4.45, 4.00, 3.00];
    assert!((auc_of_eers(&unary).unwrap() - 4.66).abs() <= 0.005);
    assert!((auc_of_eers(&random_ambient).unwrap() - 6.73).abs() <= 0.005);
    assert_eq!(auc_of_eers(&[5.0, 5.0, 5.0]).unwrap(), 5.0);
    assert!(auc_of_eers(&[]).is_err());
}

#[test]
fn sampling_rate_row() {
    let expected = [2.90, 4.36, 5.81, 7.27, 8.72, 10.18, 11.63, 13.09, 14.54];
    for (t, want) in (2..=10).zip(expected) {
        let got = sampling_rate(16 * t, 2200);
        assert!((got - want).abs() <= 0.01, "iteration {t}: {got} vs {want}");
    }
}
