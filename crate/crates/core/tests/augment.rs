mod common;

use frugal_cd::augment::{
    augment_display, binary_augment, binary_combine, unary_augment, unary_augment_with_noise, AugmentKind,
    AugmentPolicy, AugmentSpace,
};
use frugal_cd::dataio::{Label, LabeledSample};
use frugal_cd::invnet::InvertibleNet;
use frugal_cd::linalg::{Matrix, RngStream};
use frugal_cd::Error;

use common::{random_vector, rel_err};

fn identity_net(d: usize) -> InvertibleNet {
    InvertibleNet::new(vec![Matrix::identity(d)], Matrix::identity(d)).unwrap()
}

#[test]
fn unary_with_zero_noise_returns_input() {
    let mut rng = RngStream::new(21);
    for depth in 1..=4 {
        let net = InvertibleNet::random(16, depth, &mut rng).unwrap();
        for _ in 0..20 {
            let x = random_vector(16, &mut rng);
            let out = unary_augment(&net, &x, Label::Change, 0.0, &mut rng).unwrap();
            assert!(rel_err(&out.features, &x) < 1e-8);
            assert_eq!(out.label, Label::Change);
        }
    }
}

#[test]
fn binary_of_a_sample_with_itself_returns_it() {
    let mut rng = RngStream::new(22);
    let net = InvertibleNet::random(12, 3, &mut rng).unwrap();
    for crisp in [false, true] {
        for _ in 0..20 {
            let s = LabeledSample::new(random_vector(12, &mut rng), Label::NoChange);
            let out = binary_augment(&net, &s, &s, crisp, &mut rng).unwrap();
            assert!(rel_err(&out.features, &s.features) < 1e-8);
        }
    }
}

#[test]
fn crisp_combination_picks_whole_coordinates() {
    let net = identity_net(2);
    let out = binary_combine(&net, &[1.0, 2.0], &[3.0, 4.0], &[0.9, 0.25], true).unwrap();
    assert_eq!(out, vec![1.0, 4.0]);
}

#[test]
fn soft_combination_is_coordinatewise_convex_under_identity() {
    let net = identity_net(2);
    let out = binary_combine(&net, &[1.0, 2.0], &[3.0, 4.0], &[0.5, 0.25], false).unwrap();
    assert!((out[0] - 2.0).abs() < 1e-12);
    assert!((out[1] - 3.5).abs() < 1e-12);
}

#[test]
fn binary_rejects_mixed_labels() {
    let mut rng = RngStream::new(23);
    let net = identity_net(2);
    let a = LabeledSample::new(vec![0.0, 1.0], Label::Change);
    let b = LabeledSample::new(vec![1.0, 0.0], Label::NoChange);
    assert!(matches!(binary_augment(&net, &a, &b, false, &mut rng), Err(Error::InvalidPair(_))));
}

#[test]
fn unary_noise_moves_latent_by_exactly_the_perturbation() {
    let mut rng = RngStream::new(24);
    let net = InvertibleNet::random(8, 2, &mut rng).unwrap();
    let x = random_vector(8, &mut rng);
    let v = random_vector(8, &mut rng);
    let out = unary_augment_with_noise(&net, &x, &v).unwrap();
    let dz: Vec<f64> = net
        .latent(&out)
        .unwrap()
        .iter()
        .zip(net.latent(&x).unwrap())
        .map(|(a, b)| a - b)
        .collect();
    assert!(rel_err(&dz, &v) < 1e-8);
}

#[test]
fn display_augmentation_keeps_originals_and_labels() {
    let mut rng = RngStream::new(25);
    let net = InvertibleNet::random(6, 2, &mut rng).unwrap();
    let labeled: Vec<LabeledSample> = (0..5)
        .map(|i| {
            let label = if i < 2 { Label::Change } else { Label::NoChange };
            LabeledSample::new(random_vector(6, &mut rng), label)
        })
        .collect();
    for kind in [AugmentKind::Unary, AugmentKind::BinarySoft, AugmentKind::BinaryCrisp] {
        for space in [AugmentSpace::Latent, AugmentSpace::Ambient] {
            let policy = AugmentPolicy {
                kind,
                space,
                delta: 0.5,
                per_sample: 3,
            };
            let out = augment_display(&net, &labeled, &policy, &mut rng).unwrap();
            assert_eq!(out.len(), 5 * 4);
            assert_eq!(&out[..5], &labeled[..]);
            for (i, s) in labeled.iter().enumerate() {
                for extra in &out[5 + 3 * i..5 + 3 * (i + 1)] {
                    assert_eq!(extra.label, s.label);
                    assert!(extra.features.iter().all(|v| v.is_finite()));
                }
            }
        }
    }
    let none = augment_display(&net, &labeled, &AugmentPolicy::none(), &mut rng).unwrap();
    assert_eq!(none, labeled);
}

#[test]
fn ambient_unary_with_zero_delta_is_identity_too() {
    let mut rng = RngStream::new(26);
    let net = InvertibleNet::random(4, 2, &mut rng).unwrap();
    let labeled = vec![LabeledSample::new(random_vector(4, &mut rng), Label::Change)];
    let policy = AugmentPolicy {
        kind: AugmentKind::Unary,
        space: AugmentSpace::Ambient,
        delta: 0.0,
        per_sample: 2,
    };
    let out = augment_display(&net, &labeled, &policy, &mut rng).unwrap();
    assert!(out.iter().all(|s| s.features == labeled[0].features));
}
