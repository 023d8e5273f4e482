mod common;

use nalgebra::DMatrix;
use proptest::prelude::*;
use recsel_core::data::RatingDataset;
use recsel_core::linalg::{max_asymmetry, min_eigenvalue};
use recsel_core::moments::*;

fn ds(t: &[(&str, &str, f64)]) -> RatingDataset {
    RatingDataset::from_triples(t.iter().copied(), (1.0, 5.0)).unwrap().0
}

#[test]
fn hand_evaluated_pair() {
    let d = ds(&[("u1", "i", 4.0), ("u1", "j", 2.0), ("u2", "i", 2.0), ("u2", "j", 4.0)]);
    let t = pairwise_covariance(&d).unwrap();
    let (i, j) = (d.item_id("i").unwrap(), d.item_id("j").unwrap());
    assert_eq!(t.get(i, j), (-1.0, 2));
    assert_eq!(t.get(j, i), (-1.0, 2));
    assert_eq!(t.get(i, i), (1.0, 2));
}

#[test]
fn single_co_rater_and_disjoint_pairs() {
    let d = ds(&[("u1", "i", 4.0), ("u1", "j", 2.0), ("u2", "i", 1.0), ("u3", "k", 5.0)]);
    let t = pairwise_covariance(&d).unwrap();
    let id = |s| d.item_id(s).unwrap();
    assert_eq!(t.get(id("i"), id("j")), (0.0, 1));
    assert_eq!(t.get(id("j"), id("k")), (0.0, 0));
    assert_eq!(t.get(id("k"), id("k")), (0.0, 1));
    assert!((t.get(id("i"), id("i")).0 - 2.25).abs() < 1e-15);
}

#[test]
fn matches_brute_force_on_random_toys() {
    let mut rng = common::rng(31);
    for _ in 0..20 {
        let d = common::toy_ratings(&mut rng, 10, 10, 0.6);
        let t = pairwise_covariance(&d).unwrap();
        for i in 0..d.n_items() {
            for j in 0..d.n_items() {
                assert!((t.get(i, j).0 - common::covariance_oracle(&d, i, j)).abs() <= 1e-12);
            }
        }
    }
}

#[test]
fn empty_training_set_is_rejected() {
    let d = RatingDataset::from_triples(Vec::<(String, String, f64)>::new(), (1.0, 5.0))
        .unwrap()
        .0;
    assert!(pairwise_covariance(&d).is_err());
}

#[test]
fn target_examples() {
    let s = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 2.0, 0.5]));
    assert_eq!(shrinkage_target(&s), s);

    let s = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
    assert!((shrinkage_target(&s) - &s).abs().max() < 1e-15);

    let s = DMatrix::from_row_slice(3, 3, &[4.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0]);
    let f = shrinkage_target(&s);
    assert!(f.row(1).iter().all(|&v| v == 0.0));
    assert!(f.column(1).iter().all(|&v| v == 0.0));
    // one of three pairs has correlation 0.5; the zero-variance pairs count as 0
    assert!((f[(0, 2)] - 0.5 / 3.0 * 2.0).abs() < 1e-15);
    assert_eq!(f.shape(), (3, 3));
}

#[test]
fn user_covariance_examples() {
    assert_eq!(ShrinkageConfig::default().weight, 0.25);

    let d = ds(&[
        ("a", "x", 5.0),
        ("a", "y", 1.0),
        ("b", "x", 1.0),
        ("b", "y", 4.0),
        ("c", "x", 3.0),
        ("c", "y", 3.0),
    ]);
    let t = pairwise_covariance(&d).unwrap();
    let s = t.submatrix(&[0, 1]);
    assert!(min_eigenvalue(&s) > 1e-3);
    let identity = ShrinkageConfig {
        weight: 1.0,
        ..Default::default()
    };
    let uc = user_covariance(&t, &[0, 1], &identity).unwrap();
    assert_eq!(uc.matrix, s);
    assert_eq!(uc.jitter, 0.0);

    let lonely = ds(&[("a", "x", 3.0), ("b", "y", 3.0), ("c", "z", 3.0)]);
    let t = pairwise_covariance(&lonely).unwrap();
    let uc = user_covariance(&t, &[0, 1, 2], &ShrinkageConfig::default()).unwrap();
    assert!((uc.matrix - DMatrix::identity(3, 3) * 1e-6).abs().max() < 1e-18);
    assert_eq!(uc.jitter, 1e-6);

    assert!(user_covariance(&t, &[], &ShrinkageConfig::default()).is_err());
    assert!(user_covariance(
        &t,
        &[0],
        &ShrinkageConfig {
            weight: 1.5,
            ..Default::default()
        }
    )
    .is_err());
}

#[test]
fn psd_repair_examples() {
    let (m, _) = psd_repair(&DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -2.0]), 0.0).unwrap();
    assert!((m - DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0])).abs().max() < 1e-15);
    let (m, _) = psd_repair(&DMatrix::identity(3, 3), 0.7).unwrap();
    assert_eq!(m, DMatrix::identity(3, 3));
    let (m, _) = psd_repair(&DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]), 0.0).unwrap();
    assert!((m - DMatrix::from_element(2, 2, 0.5)).abs().max() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn user_covariance_is_symmetric_psd(seed in any::<u64>(), weight in 0.0f64..=1.0) {
        let mut rng = common::rng(seed);
        let d = common::toy_ratings(&mut rng, 12, 8, 0.5);
        let t = pairwise_covariance(&d).unwrap();
        let items: Vec<usize> = (0..d.n_items()).collect();
        let cfg = ShrinkageConfig { weight, floor: 1e-6 };
        let uc = user_covariance(&t, &items, &cfg).unwrap();
        prop_assert_eq!(max_asymmetry(&uc.matrix), 0.0);
        prop_assert!(min_eigenvalue(&uc.matrix) >= 1e-6 - 1e-12);
        prop_assert!(uc.matrix.iter().all(|v| v.is_finite()));
        for i in 0..items.len() {
            for j in 0..items.len() {
                prop_assert_eq!(t.get(i, j).0, t.get(j, i).0);
            }
            prop_assert!(t.get(i, i).0 >= 0.0);
        }
    }
}
