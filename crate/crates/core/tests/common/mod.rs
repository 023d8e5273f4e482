#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{RngExt, SeedableRng};
use rand_distr::StandardNormal;
use rand_xoshiro::Xoshiro256PlusPlus;
use recsel_core::data::RatingDataset;

pub fn rng(seed: u64) -> Xoshiro256PlusPlus {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

/// `mu ~ U[1,5]^n` with 1e-9 jitter, `Sigma = A A' / n + 0.1 I`.
pub fn instance(rng: &mut Xoshiro256PlusPlus, n: usize) -> (DVector<f64>, DMatrix<f64>) {
    let mu = DVector::from_fn(n, |_, _| rng.random_range(1.0..5.0) + 1e-9 * rng.random_range(-1.0..1.0));
    let a = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let sigma = &a * a.transpose() / n as f64 + DMatrix::identity(n, n) * 0.1;
    (mu, sigma)
}

pub fn closed_form(mu: &DVector<f64>, sigma: &DMatrix<f64>, k1: f64, k2: f64, z: &DVector<f64>) -> f64 {
    mu.dot(z) - (k1.min(k2) * (z.transpose() * sigma * z)[0]).sqrt()
}

/// Random toy ratings on a small grid; roughly `density` of the cells filled.
pub fn toy_ratings(rng: &mut Xoshiro256PlusPlus, users: usize, items: usize, density: f64) -> RatingDataset {
    let mut t = Vec::new();
    for u in 0..users {
        for i in 0..items {
            if rng.random_bool(density) {
                t.push((format!("u{u}"), format!("i{i}"), rng.random_range(1..=5) as f64));
            }
        }
    }
    RatingDataset::from_triples(t, (1.0, 5.0)).unwrap().0
}

/// Straight evaluation of the pairwise estimate, looping over all users for
/// each pair.
pub fn covariance_oracle(ds: &RatingDataset, i: usize, j: usize) -> f64 {
    let mut both = Vec::new();
    for u in 0..ds.n_users() {
        let rs = ds.user_ratings(u);
        let ri = rs.iter().find(|r| r.item == i);
        let rj = rs.iter().find(|r| r.item == j);
        if let (Some(a), Some(b)) = (ri, rj) {
            both.push((a.value, b.value));
        }
    }
    if both.is_empty() {
        return 0.0;
    }
    let n = both.len() as f64;
    let mi: f64 = both.iter().map(|p| p.0).sum::<f64>() / n;
    let mj: f64 = both.iter().map(|p| p.1).sum::<f64>() / n;
    let mut s = 0.0;
    for (a, b) in &both {
        s += (a - mi) * (b - mj);
    }
    s / n
}

pub fn gini_oracle(counts: &[f64]) -> f64 {
    let m = counts.len() as f64;
    let mean = counts.iter().sum::<f64>() / m;
    let mut s = 0.0;
    for a in counts {
        for b in counts {
            s += (a - b).abs();
        }
    }
    1.0 - s / (2.0 * m * m * mean)
}
