//! Synthetic ratings shaped like the MovieLens 100K release: heavy-tailed user
//! activity, Zipf-like item popularity and integer ratings on 1..=5 drawn from
//! a low-rank model with biases.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_distr::{Distribution, LogNormal, Normal};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use super::{Rating, RatingDataset};
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub users: usize,
    pub items: usize,
    /// Median ratings per user; counts are log-normal around it.
    pub median_ratings: f64,
    pub min_ratings: usize,
    pub factors: usize,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            users: 943,
            items: 1682,
            median_ratings: 65.0,
            min_ratings: 20,
            factors: 5,
            noise: 0.7,
            seed: 1,
        }
    }
}

pub fn generate(cfg: &SyntheticConfig) -> Result<RatingDataset> {
    if cfg.users == 0 || cfg.items < 2 || cfg.factors == 0 || cfg.min_ratings > cfg.items {
        return Err(invalid(format!("degenerate synthetic config {cfg:?}")));
    }
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(cfg.seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let activity = LogNormal::new(cfg.median_ratings.max(1.0).ln(), 0.9).map_err(|e| invalid(e.to_string()))?;

    let mut rank: Vec<usize> = (0..cfg.items).collect();
    rank.shuffle(&mut rng);
    let popularity: Vec<f64> = rank.iter().map(|&r| (r as f64 + 10.0).powf(-0.9)).collect();

    let scale = 0.5 / (cfg.factors as f64).sqrt().sqrt();
    let draw = |rng: &mut Xoshiro256PlusPlus, sd: f64| sd * unit.sample(rng);
    let item_bias: Vec<f64> = rank
        .iter()
        .map(|&r| draw(&mut rng, 0.45) + 0.3 - 0.15 * (r as f64 + 1.0).log10())
        .collect();
    let item_fac: Vec<Vec<f64>> = (0..cfg.items)
        .map(|_| (0..cfg.factors).map(|_| draw(&mut rng, scale)).collect())
        .collect();

    let cap = cfg.items / 2;
    let mut ratings = Vec::new();
    for u in 0..cfg.users {
        let count = (activity.sample(&mut rng).round() as usize).clamp(cfg.min_ratings, cap.max(cfg.min_ratings));
        let bias = draw(&mut rng, 0.4);
        let fac: Vec<f64> = (0..cfg.factors).map(|_| draw(&mut rng, scale)).collect();
        let picked = index::sample_weighted(&mut rng, cfg.items, |i| popularity[i], count).map_err(|e| invalid(e.to_string()))?;
        let mut picked: Vec<usize> = picked.into_iter().collect();
        picked.sort_unstable();
        for i in picked {
            let dot: f64 = fac.iter().zip(&item_fac[i]).map(|(a, b)| a * b).sum();
            let raw = 3.53 + bias + item_bias[i] + dot + draw(&mut rng, cfg.noise);
            ratings.push(Rating {
                user: u,
                item: i,
                value: raw.round().clamp(1.0, 5.0),
            });
        }
    }
    let users = (1..=cfg.users).map(|u| u.to_string()).collect();
    let items = (1..=cfg.items).map(|i| i.to_string()).collect();
    Ok(RatingDataset::with_tokens(users, items, ratings, (1.0, 5.0)))
}

/// Writes `user<TAB>item<TAB>rating<TAB>timestamp` lines.
pub fn write_udata(ds: &RatingDataset, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for (k, r) in ds.ratings().iter().enumerate() {
        writeln!(
            w,
            "{}\t{}\t{}\t{}",
            ds.user_token(r.user),
            ds.item_token(r.item),
            r.value,
            874_724_710 + k
        )
        .map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
