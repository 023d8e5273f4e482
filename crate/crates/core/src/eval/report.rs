use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::harness::mean;
use super::{f1_score, gini_diversity, relevant_items};
use crate::data::{candidate_set, SplitDataset};
use crate::error::{invalid, Error, Result};

/// Aggregate over runs for one method and parameter point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: String,
    pub param: String,
    pub f1_mean: f64,
    pub f1_se: f64,
    pub div_mean: f64,
    pub div_se: f64,
    pub time_mean: f64,
    pub time_se: f64,
}

/// One run of one method point: mean F1 over the users, diversity of the
/// pooled lists, and each user's selection time.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub run: usize,
    pub method: String,
    pub param: String,
    pub f1: f64,
    pub diversity: f64,
    pub times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRow {
    pub run: usize,
    pub user_id: String,
    pub method: String,
    pub param: String,
    pub rank: usize,
    pub item_id: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub rows: Vec<ReportRow>,
    pub runs: Vec<RunRow>,
    pub selections: Vec<SelectionRow>,
}

/// Mean and standard error of the mean (zero for fewer than two values).
fn mean_se(v: &[f64]) -> (f64, f64) {
    let m = mean(v);
    if v.len() < 2 {
        return (m, 0.0);
    }
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
    (m, (var / v.len() as f64).sqrt())
}

impl Report {
    /// Rebuilds `rows` from `runs`, keeping first-seen order of method points.
    pub fn aggregate(&mut self) {
        let mut keys: Vec<(&str, &str)> = Vec::new();
        for r in &self.runs {
            if !keys.contains(&(r.method.as_str(), r.param.as_str())) {
                keys.push((&r.method, &r.param));
            }
        }
        self.rows = keys
            .iter()
            .map(|&(method, param)| {
                let group: Vec<&RunRow> = self.runs.iter().filter(|r| r.method == method && r.param == param).collect();
                let f1: Vec<f64> = group.iter().map(|r| r.f1).collect();
                let div: Vec<f64> = group.iter().map(|r| r.diversity).collect();
                let times: Vec<f64> = group.iter().flat_map(|r| r.times.iter().copied()).collect();
                let (f1_mean, f1_se) = mean_se(&f1);
                let (div_mean, div_se) = mean_se(&div);
                let (time_mean, time_se) = mean_se(&times);
                ReportRow {
                    method: method.into(),
                    param: param.into(),
                    f1_mean,
                    f1_se,
                    div_mean,
                    div_se,
                    time_mean,
                    time_se,
                }
            })
            .collect();
    }

    pub fn row(&self, method: &str, param: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.method == method && r.param == param)
    }

    /// Writes `report.csv`, `runs.csv` and `selections.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("report.csv");
        let mut w = csv::Writer::from_path(&path)?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;

        let path = dir.join("runs.csv");
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["run", "method", "param", "f1", "diversity", "time_mean", "users"])?;
        for r in &self.runs {
            w.write_record([
                r.run.to_string(),
                r.method.clone(),
                r.param.clone(),
                r.f1.to_string(),
                r.diversity.to_string(),
                mean(&r.times).to_string(),
                r.times.len().to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;

        let path = dir.join("selections.csv");
        let mut w = csv::Writer::from_path(&path)?;
        for s in &self.selections {
            w.serialize(s)?;
        }
        w.flush().map_err(|e| Error::io(&path, e))
    }
}

/// Per-user F1 and the diversity of the pooled lists. The Gini universe is
/// the union of the users' candidate sets.
pub(crate) fn score_lists(split: &SplitDataset, lists: &[(usize, Vec<usize>)], threshold: f64) -> Result<(Vec<f64>, f64)> {
    let mut universe = BTreeSet::new();
    let mut f1 = Vec::with_capacity(lists.len());
    for (user, items) in lists {
        universe.extend(candidate_set(*user, split)?);
        let relevant = relevant_items(split.test.user_ratings(*user), threshold);
        f1.push(f1_score(&items.iter().copied().collect(), &relevant)?);
    }
    let slot: HashMap<usize, usize> = universe.iter().enumerate().map(|(k, &i)| (i, k)).collect();
    let mut counts = vec![0u64; universe.len()];
    for (user, items) in lists {
        for i in items {
            let k = slot.get(i).ok_or_else(|| {
                invalid(format!(
                    "item {} is not a candidate of user {}",
                    split.item_token(*i),
                    split.user_token(*user)
                ))
            })?;
            counts[*k] += 1;
        }
    }
    Ok((f1, gini_diversity(&counts)?))
}

pub fn read_selections(path: &Path) -> Result<Vec<SelectionRow>> {
    let mut rdr = csv::Reader::from_path(path)?;
    Ok(rdr.deserialize().collect::<Result<_, _>>()?)
}

/// Scores selection rows against one split; times are unknown and left empty.
pub fn evaluate_selections(split: &SplitDataset, rows: &[SelectionRow], threshold: f64) -> Result<Report> {
    // (run, method, param) -> users -> (rank, item)
    type Lists = Vec<(usize, Vec<(usize, usize)>)>;
    let mut groups: Vec<((usize, String, String), Lists)> = Vec::new();
    for s in rows {
        let user = split
            .train
            .user_id(&s.user_id)
            .ok_or_else(|| invalid(format!("unknown user {}", s.user_id)))?;
        let item = split
            .train
            .item_id(&s.item_id)
            .ok_or_else(|| invalid(format!("unknown item {}", s.item_id)))?;
        let key = (s.run, s.method.clone(), s.param.clone());
        let g = match groups.iter().position(|g| g.0 == key) {
            Some(k) => &mut groups[k].1,
            None => {
                groups.push((key, Vec::new()));
                &mut groups.last_mut().expect("just pushed").1
            }
        };
        match g.iter_mut().find(|u| u.0 == user) {
            Some(u) => u.1.push((s.rank, item)),
            None => g.push((user, vec![(s.rank, item)])),
        }
    }
    let mut report = Report::default();
    for ((run, method, param), users) in groups {
        let lists: Vec<(usize, Vec<usize>)> = users
            .into_iter()
            .map(|(u, mut items)| {
                items.sort_unstable();
                (u, items.into_iter().map(|p| p.1).collect())
            })
            .collect();
        let (f1, diversity) = score_lists(split, &lists, threshold)?;
        report.runs.push(RunRow {
            run,
            method,
            param,
            f1: mean(&f1),
            diversity,
            times: Vec::new(),
        });
    }
    report.selections = rows.to_vec();
    report.aggregate();
    Ok(report)
}
