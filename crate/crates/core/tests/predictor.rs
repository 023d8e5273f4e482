use recsel_core::data::synthetic::{generate, SyntheticConfig};
use recsel_core::data::{split_train_test, Rating, RatingDataset};
use recsel_core::predictor::*;

fn toy(triples: &[(&str, &str, f64)]) -> RatingDataset {
    RatingDataset::from_triples(triples.iter().copied(), (1.0, 5.0)).unwrap().0
}

fn small_cfg() -> MfConfig {
    MfConfig {
        factors: 8,
        epochs: 30,
        ..Default::default()
    }
}

#[test]
fn defaults() {
    let c = MfConfig::default();
    assert_eq!((c.factors, c.learning_rate, c.regularization, c.epochs), (100, 0.01, 0.1, 20));
}

#[test]
fn constant_ratings_are_reproduced() {
    let mut t = Vec::new();
    for u in 0..10 {
        for i in 0..10 {
            if (u + i) % 3 != 0 {
                t.push((u.to_string(), i.to_string(), 3.0));
            }
        }
    }
    let (ds, _) = RatingDataset::from_triples(t, (1.0, 5.0)).unwrap();
    // 20 epochs leave the random factor init visible; give SGD time to reach
    // the fixed point
    let cfg = MfConfig {
        epochs: 300,
        ..Default::default()
    };
    let m = fit_mf(&ds, &cfg).unwrap();
    for u in 0..ds.n_users() {
        for i in 0..ds.n_items() {
            assert!((m.predict(u, i) - 3.0).abs() < 0.05);
        }
    }
}

#[test]
fn training_error_decreases() {
    let ds = generate(&SyntheticConfig {
        users: 100,
        items: 300,
        ..Default::default()
    })
    .unwrap();
    let m = fit_mf(&ds, &small_cfg()).unwrap();
    assert_eq!(m.train_rmse.len(), 30);
    assert!(m.train_rmse.last().unwrap() <= m.train_rmse.first().unwrap());
}

#[test]
fn fit_is_deterministic() {
    let ds = generate(&SyntheticConfig {
        users: 50,
        items: 200,
        ..Default::default()
    })
    .unwrap();
    let a = fit_mf(&ds, &small_cfg()).unwrap();
    let b = fit_mf(&ds, &small_cfg()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn predictions_are_clipped_with_bias_fallback() {
    let ds = toy(&[("a", "x", 5.0), ("a", "y", 5.0), ("b", "x", 4.0)]);
    let mut m = fit_mf(&ds, &small_cfg()).unwrap();
    m.global_mean = 5.7;
    m.user_bias.iter_mut().for_each(|b| *b = 0.0);
    m.item_bias.iter_mut().for_each(|b| *b = 0.0);
    m.user_factors.iter_mut().for_each(|f| *f = 0.0);
    assert_eq!(m.predict(0, 0), 5.0);

    m.global_mean = 3.0;
    m.user_bias[0] = 0.4;
    m.item_seen[1] = false;
    m.item_bias[1] = 9.0;
    assert_eq!(m.predict(0, 1), 3.4);
    m.user_bias[0] = 4.0;
    assert_eq!(m.predict(0, 1), 5.0);
    assert_eq!(m.predict(57, 0), (3.0 + m.item_bias[0]).clamp(1.0, 5.0));
    assert_eq!(m.predict(57, 99), 3.0);
}

#[test]
fn mean_vector_shape() {
    let ds = generate(&SyntheticConfig {
        users: 60,
        items: 200,
        ..Default::default()
    })
    .unwrap();
    let split = split_train_test(&ds, 0.6, 1, 20).unwrap();
    let m = fit_mf(&split.train, &small_cfg()).unwrap();
    let cands = recsel_core::data::candidate_set(0, &split).unwrap();
    let mu = predicted_mean_vector(&m, 0, &cands).unwrap();
    assert_eq!(mu.len(), cands.len());
    assert!(mu.iter().all(|v| (1.0..=5.0).contains(v)));
    assert!(predicted_mean_vector(&m, 0, &[]).is_err());
}

#[test]
fn step_matches_finite_differences() {
    let ds = toy(&[
        ("a", "x", 4.0),
        ("a", "y", 2.0),
        ("b", "y", 5.0),
        ("b", "z", 1.0),
        ("c", "x", 3.0),
        ("c", "z", 4.0),
    ]);
    let cfg = MfConfig {
        factors: 2,
        epochs: 3,
        init_std: 0.5,
        ..Default::default()
    };
    let m = fit_mf(&ds, &cfg).unwrap();
    let h = 1e-6;
    let close = |fd: f64, an: f64| (fd - an).abs() <= 1e-5 * an.abs().max(1e-3);
    for r in ds.ratings() {
        let s = m.step(r);
        let fd = |f: &dyn Fn(&mut FactorModel, f64)| {
            let mut up = m.clone();
            f(&mut up, h);
            let mut down = m.clone();
            f(&mut down, -h);
            (up.rating_loss(r) - down.rating_loss(r)) / (2.0 * h)
        };
        let r: Rating = *r;
        assert!(close(fd(&|m, d| m.user_bias[r.user] += d), -2.0 * s.user_bias));
        assert!(close(fd(&|m, d| m.item_bias[r.item] += d), -2.0 * s.item_bias));
        for f in 0..2 {
            let pu = r.user * 2 + f;
            let qi = r.item * 2 + f;
            assert!(close(fd(&|m, d| m.user_factors[pu] += d), -2.0 * s.user[f]));
            assert!(close(fd(&|m, d| m.item_factors[qi] += d), -2.0 * s.item[f]));
        }
    }
}

#[test]
fn model_round_trips_through_csv() {
    let ds = generate(&SyntheticConfig {
        users: 30,
        items: 100,
        ..Default::default()
    })
    .unwrap();
    let mut m = fit_mf(&ds, &small_cfg()).unwrap();
    m.item_seen[3] = false;
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.csv");
    save_model(&m, &path).unwrap();
    let back = load_model(&path).unwrap();
    m.train_rmse.clear();
    assert_eq!(back, m);
}

#[test]
fn rejects_bad_input() {
    let empty = RatingDataset::from_triples(Vec::<(String, String, f64)>::new(), (1.0, 5.0))
        .unwrap()
        .0;
    assert!(fit_mf(&empty, &MfConfig::default()).is_err());
    let ds = toy(&[("a", "x", 4.0)]);
    for bad in [
        MfConfig {
            factors: 0,
            ..Default::default()
        },
        MfConfig {
            learning_rate: 0.0,
            ..Default::default()
        },
        MfConfig {
            learning_rate: f64::NAN,
            ..Default::default()
        },
    ] {
        assert!(fit_mf(&ds, &bad).is_err());
    }
    let blowup = MfConfig {
        learning_rate: 1e6,
        ..small_cfg()
    };
    let big = generate(&SyntheticConfig {
        users: 20,
        items: 80,
        ..Default::default()
    })
    .unwrap();
    assert!(matches!(fit_mf(&big, &blowup), Err(recsel_core::Error::NonFinite(_))));
}
