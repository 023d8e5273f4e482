use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use super::{Rating, RatingDataset};
use crate::error::{invalid, Error, Result};

/// Train and test folds over one shared id space.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitDataset {
    pub train: RatingDataset,
    pub test: RatingDataset,
    pub seed: u64,
    pub ratio: f64,
}

impl SplitDataset {
    pub fn user_token(&self, u: usize) -> &str {
        self.train.user_token(u)
    }

    pub fn item_token(&self, i: usize) -> &str {
        self.train.item_token(i)
    }
}

/// Number of a user's ratings that go to the training fold.
fn train_count(ratio: f64, count: usize) -> usize {
    ((ratio * count as f64).round() as usize).clamp(1, count - 1)
}

/// Random per-user partition. Users with fewer than `min_ratings` ratings
/// (and never fewer than two) are dropped first.
pub fn split_train_test(ds: &RatingDataset, ratio: f64, seed: u64, min_ratings: usize) -> Result<SplitDataset> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(invalid(format!("split ratio {ratio} outside (0, 1)")));
    }
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for u in 0..ds.n_users() {
        let rs = ds.user_ratings(u);
        if rs.len() < min_ratings.max(2) {
            continue;
        }
        let mut order: Vec<usize> = (0..rs.len()).collect();
        order.shuffle(&mut rng);
        let k = train_count(ratio, rs.len());
        train.extend(order[..k].iter().map(|&j| rs[j]));
        test.extend(order[k..].iter().map(|&j| rs[j]));
    }
    if train.is_empty() {
        return Err(invalid(format!("no user has at least {} ratings", min_ratings.max(2))));
    }
    let (users, items) = ds.tokens();
    Ok(SplitDataset {
        train: RatingDataset::with_tokens(users.to_vec(), items.to_vec(), train, ds.scale),
        test: RatingDataset::with_tokens(users.to_vec(), items.to_vec(), test, ds.scale),
        seed,
        ratio,
    })
}

/// Items the user rated in the test fold, ascending by id.
pub fn candidate_set(user: usize, split: &SplitDataset) -> Result<Vec<usize>> {
    let items: Vec<usize> = split.test.user_ratings(user).iter().map(|r| r.item).collect();
    if items.is_empty() {
        return Err(invalid(format!("user {user} has no test ratings")));
    }
    Ok(items)
}

/// Uniform sample of `k` users whose candidate sets hold at least `n` items,
/// returned in ascending id order.
pub fn sample_target_users(split: &SplitDataset, k: usize, n: usize, seed: u64) -> Result<Vec<usize>> {
    let eligible: Vec<usize> = split
        .test
        .user_counts()
        .iter()
        .enumerate()
        .filter(|&(_, &c)| c >= n.max(1))
        .map(|(u, _)| u)
        .collect();
    if k > eligible.len() {
        return Err(invalid(format!("{k} target users requested, {} eligible", eligible.len())));
    }
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let mut picked: Vec<usize> = index::sample(&mut rng, eligible.len(), k)
        .into_iter()
        .map(|j| eligible[j])
        .collect();
    picked.sort_unstable();
    Ok(picked)
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestRow {
    user_id: String,
    item_id: String,
    rating: f64,
    fold: String,
}

pub fn write_manifest(split: &SplitDataset, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for (ds, fold) in [(&split.train, "train"), (&split.test, "test")] {
        for r in ds.ratings() {
            w.serialize(ManifestRow {
                user_id: ds.user_token(r.user).to_owned(),
                item_id: ds.item_token(r.item).to_owned(),
                rating: r.value,
                fold: fold.into(),
            })?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Reads a manifest back. Dense ids follow first appearance in the file, so
/// they need not match the ids of the split that was written.
pub fn read_manifest(path: &Path, scale: (f64, f64), ratio: f64, seed: u64) -> Result<SplitDataset> {
    let mut rdr = csv::Reader::from_path(path)?;
    let rows: Vec<ManifestRow> = rdr.deserialize().collect::<Result<_, _>>()?;
    let (all, _) = RatingDataset::from_triples(rows.iter().map(|r| (&r.user_id, &r.item_id, r.rating)), scale)?;
    if all.is_empty() {
        return Err(Error::NoRecords(path.display().to_string()));
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for row in &rows {
        let r = Rating {
            user: all.user_id(&row.user_id).expect("interned above"),
            item: all.item_id(&row.item_id).expect("interned above"),
            value: row.rating,
        };
        match row.fold.as_str() {
            "train" => train.push(r),
            "test" => test.push(r),
            other => return Err(invalid(format!("unknown fold {other:?} in {}", path.display()))),
        }
    }
    let (users, items) = all.tokens();
    Ok(SplitDataset {
        train: RatingDataset::with_tokens(users.to_vec(), items.to_vec(), train, scale),
        test: RatingDataset::with_tokens(users.to_vec(), items.to_vec(), test, scale),
        seed,
        ratio,
    })
}
