//! Biased matrix factorization fit by stochastic gradient descent.

use std::path::Path;

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::data::{Rating, RatingDataset};
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MfConfig {
    pub factors: usize,
    pub learning_rate: f64,
    pub regularization: f64,
    pub epochs: usize,
    pub init_std: f64,
    pub seed: u64,
}

impl Default for MfConfig {
    fn default() -> Self {
        MfConfig {
            factors: 100,
            learning_rate: 0.01,
            regularization: 0.1,
            epochs: 20,
            init_std: 0.1,
            seed: 0,
        }
    }
}

/// Factor rows are stored flat, `k` entries per user or item.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel {
    pub k: usize,
    pub global_mean: f64,
    pub user_bias: Vec<f64>,
    pub item_bias: Vec<f64>,
    pub user_factors: Vec<f64>,
    pub item_factors: Vec<f64>,
    pub user_seen: Vec<bool>,
    pub item_seen: Vec<bool>,
    pub scale: (f64, f64),
    pub regularization: f64,
    /// Training RMSE after each epoch.
    pub train_rmse: Vec<f64>,
}

/// Ascent direction of one rating's loss: minus half its gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub err: f64,
    pub user_bias: f64,
    pub item_bias: f64,
    pub user: Vec<f64>,
    pub item: Vec<f64>,
}

impl FactorModel {
    pub fn n_users(&self) -> usize {
        self.user_bias.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_bias.len()
    }

    fn pu(&self, u: usize) -> &[f64] {
        &self.user_factors[u * self.k..(u + 1) * self.k]
    }

    fn qi(&self, i: usize) -> &[f64] {
        &self.item_factors[i * self.k..(i + 1) * self.k]
    }

    /// Unclipped model output for a known user and item.
    pub fn raw(&self, u: usize, i: usize) -> f64 {
        let dot: f64 = self.pu(u).iter().zip(self.qi(i)).map(|(a, b)| a * b).sum();
        self.global_mean + self.user_bias[u] + self.item_bias[i] + dot
    }

    /// Prediction clipped to the rating scale. Unknown users or items drop
    /// to the bias terms that are available.
    pub fn predict(&self, u: usize, i: usize) -> f64 {
        let known_u = self.user_seen.get(u).copied().unwrap_or(false);
        let known_i = self.item_seen.get(i).copied().unwrap_or(false);
        let v = match (known_u, known_i) {
            (true, true) => self.raw(u, i),
            (true, false) => self.global_mean + self.user_bias[u],
            (false, true) => self.global_mean + self.item_bias[i],
            (false, false) => self.global_mean,
        };
        v.clamp(self.scale.0, self.scale.1)
    }

    /// `(r - r_hat)^2 + reg * (b_u^2 + b_i^2 + |p_u|^2 + |q_i|^2)`
    pub fn rating_loss(&self, r: &Rating) -> f64 {
        let e = r.value - self.raw(r.user, r.item);
        let sq = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
        let (bu, bi) = (self.user_bias[r.user], self.item_bias[r.item]);
        e * e + self.regularization * (bu * bu + bi * bi + sq(self.pu(r.user)) + sq(self.qi(r.item)))
    }

    pub fn step(&self, r: &Rating) -> Step {
        let err = r.value - self.raw(r.user, r.item);
        let reg = self.regularization;
        let (pu, qi) = (self.pu(r.user), self.qi(r.item));
        Step {
            err,
            user_bias: err - reg * self.user_bias[r.user],
            item_bias: err - reg * self.item_bias[r.item],
            user: pu.iter().zip(qi).map(|(p, q)| err * q - reg * p).collect(),
            item: pu.iter().zip(qi).map(|(p, q)| err * p - reg * q).collect(),
        }
    }

    fn apply(&mut self, r: &Rating, s: &Step, lr: f64) {
        let k = self.k;
        self.user_bias[r.user] += lr * s.user_bias;
        self.item_bias[r.item] += lr * s.item_bias;
        for (p, d) in self.user_factors[r.user * k..(r.user + 1) * k].iter_mut().zip(&s.user) {
            *p += lr * d;
        }
        for (q, d) in self.item_factors[r.item * k..(r.item + 1) * k].iter_mut().zip(&s.item) {
            *q += lr * d;
        }
    }

    pub fn rmse(&self, data: &RatingDataset) -> f64 {
        let se: f64 = data.ratings().iter().map(|r| (r.value - self.raw(r.user, r.item)).powi(2)).sum();
        (se / data.len().max(1) as f64).sqrt()
    }
}

pub fn fit_mf(train: &RatingDataset, cfg: &MfConfig) -> Result<FactorModel> {
    if train.is_empty() {
        return Err(invalid("empty training set"));
    }
    let nonneg = |v: f64| v >= 0.0;
    if cfg.factors == 0
        || cfg.epochs == 0
        || !nonneg(cfg.regularization)
        || !nonneg(cfg.init_std)
        || !(cfg.learning_rate.is_finite() && cfg.learning_rate > 0.0)
    {
        return Err(invalid(format!("bad predictor config {cfg:?}")));
    }
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(cfg.seed);
    let init = Normal::new(0.0, cfg.init_std).map_err(|e| invalid(e.to_string()))?;
    let k = cfg.factors;
    let (nu, ni) = (train.n_users(), train.n_items());
    let mut user_seen = vec![false; nu];
    let mut item_seen = vec![false; ni];
    for r in train.ratings() {
        user_seen[r.user] = true;
        item_seen[r.item] = true;
    }
    let mut m = FactorModel {
        k,
        global_mean: train.mean(),
        user_bias: vec![0.0; nu],
        item_bias: vec![0.0; ni],
        user_factors: (0..nu * k).map(|_| init.sample(&mut rng)).collect(),
        item_factors: (0..ni * k).map(|_| init.sample(&mut rng)).collect(),
        user_seen,
        item_seen,
        scale: train.scale,
        regularization: cfg.regularization,
        train_rmse: Vec::with_capacity(cfg.epochs),
    };
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &j in &order {
            let r = &train.ratings()[j];
            let s = m.step(r);
            if !s.err.is_finite() {
                return Err(Error::NonFinite(format!("SGD diverged in epoch {epoch}")));
            }
            m.apply(r, &s, cfg.learning_rate);
        }
        let rmse = m.rmse(train);
        if !rmse.is_finite() {
            return Err(Error::NonFinite(format!("training loss after epoch {epoch}")));
        }
        m.train_rmse.push(rmse);
    }
    Ok(m)
}

/// Predictions for `candidates` in the given order.
pub fn predicted_mean_vector(model: &FactorModel, user: usize, candidates: &[usize]) -> Result<DVector<f64>> {
    if candidates.is_empty() {
        return Err(invalid("empty candidate list"));
    }
    Ok(DVector::from_iterator(
        candidates.len(),
        candidates.iter().map(|&i| model.predict(user, i)),
    ))
}

/// CSV layout, one row per line:
///
/// ```text
/// kind,id,seen,bias,f0,...,f{k-1}
/// meta,0,1,<global mean>,<scale lo>,<scale hi>,<regularization>
/// user,<dense id>,<0|1>,<bias>,<factors...>
/// item,<dense id>,<0|1>,<bias>,<factors...>
/// ```
pub fn save_model(model: &FactorModel, path: &Path) -> Result<()> {
    let mut w = csv::WriterBuilder::new().flexible(true).from_path(path)?;
    let mut header = vec!["kind".to_owned(), "id".into(), "seen".into(), "bias".into()];
    header.extend((0..model.k).map(|f| format!("f{f}")));
    w.write_record(&header)?;
    let meta = [model.scale.0, model.scale.1, model.regularization];
    let mut row = vec!["meta".to_owned(), "0".into(), "1".into(), model.global_mean.to_string()];
    row.extend(meta.iter().map(f64::to_string));
    w.write_record(&row)?;
    let blocks = [
        ("user", &model.user_bias, &model.user_factors, &model.user_seen),
        ("item", &model.item_bias, &model.item_factors, &model.item_seen),
    ];
    for (kind, bias, fac, seen) in blocks {
        for (id, b) in bias.iter().enumerate() {
            let mut row = vec![kind.to_owned(), id.to_string(), u8::from(seen[id]).to_string(), b.to_string()];
            row.extend(fac[id * model.k..(id + 1) * model.k].iter().map(f64::to_string));
            w.write_record(&row)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<FactorModel> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_path(path)?;
    let k = rdr.headers()?.len().saturating_sub(4);
    let bad = |what: &str| invalid(format!("{}: {what}", path.display()));
    let num = |s: &str| s.parse::<f64>().map_err(|_| bad(&format!("bad number {s:?}")));
    let mut m = FactorModel {
        k,
        global_mean: f64::NAN,
        user_bias: Vec::new(),
        item_bias: Vec::new(),
        user_factors: Vec::new(),
        item_factors: Vec::new(),
        user_seen: Vec::new(),
        item_seen: Vec::new(),
        scale: (f64::NAN, f64::NAN),
        regularization: 0.0,
        train_rmse: Vec::new(),
    };
    for rec in rdr.records() {
        let rec = rec?;
        let kind = rec.get(0).unwrap_or_default();
        let bias = num(rec.get(3).ok_or_else(|| bad("short row"))?)?;
        let rest: Vec<f64> = rec.iter().skip(4).map(num).collect::<Result<_>>()?;
        let seen = rec.get(2) == Some("1");
        let (b, f, s) = match kind {
            "meta" if rest.len() == 3 => {
                m.global_mean = bias;
                m.scale = (rest[0], rest[1]);
                m.regularization = rest[2];
                continue;
            }
            "user" => (&mut m.user_bias, &mut m.user_factors, &mut m.user_seen),
            "item" => (&mut m.item_bias, &mut m.item_factors, &mut m.item_seen),
            other => return Err(bad(&format!("unexpected row kind {other:?}"))),
        };
        if rest.len() != k || rec.get(1) != Some(b.len().to_string().as_str()) {
            return Err(bad("rows out of order or wrong width"));
        }
        b.push(bias);
        f.extend(rest);
        s.push(seen);
    }
    if !m.global_mean.is_finite() || k == 0 {
        return Err(bad("missing meta row"));
    }
    Ok(m)
}
