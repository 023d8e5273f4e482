//! Rating files, per-user splits and candidate sets.

mod split;
pub mod synthetic;

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub use split::{candidate_set, read_manifest, sample_target_users, split_train_test, write_manifest, SplitDataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    User,
    Item,
    Rating,
    Skip,
}

/// Column layout of a delimited rating file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub delimiter: String,
    pub fields: Vec<Field>,
    #[serde(default)]
    pub has_header: bool,
    /// Declared rating scale. When absent the observed min/max is used.
    #[serde(default)]
    pub scale: Option<(f64, f64)>,
}

impl Schema {
    /// `u.data`: user, item, rating, timestamp separated by tabs.
    pub fn movielens_100k() -> Self {
        Schema {
            delimiter: "\t".into(),
            fields: vec![Field::User, Field::Item, Field::Rating, Field::Skip],
            has_header: false,
            scale: Some((1.0, 5.0)),
        }
    }

    /// `ratings.dat` of the 1M release, `::` separated.
    pub fn movielens_1m() -> Self {
        Schema {
            delimiter: "::".into(),
            ..Self::movielens_100k()
        }
    }

    fn column(&self, f: Field) -> Result<usize> {
        let mut hits = self.fields.iter().enumerate().filter(|(_, &g)| g == f);
        match (hits.next(), hits.next()) {
            (Some((i, _)), None) => Ok(i),
            _ => Err(Error::Config(format!("schema must name exactly one {f:?} column"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rating {
    pub user: usize,
    pub item: usize,
    pub value: f64,
}

/// Counts of records that did not make it into the dataset.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ParseReport {
    pub malformed: usize,
    pub out_of_scale: usize,
    pub duplicates: usize,
}

/// Sparse user x item ratings. Records are sorted by `(user, item)` and the
/// pair is unique; dense ids index `users` / `items`.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingDataset {
    users: Vec<String>,
    items: Vec<String>,
    user_index: HashMap<String, usize>,
    item_index: HashMap<String, usize>,
    ratings: Vec<Rating>,
    pub scale: (f64, f64),
}

impl RatingDataset {
    /// Builds a dataset from token triples. Later duplicates of a
    /// `(user, item)` pair replace earlier ones.
    pub fn from_triples<I, U, T>(triples: I, scale: (f64, f64)) -> Result<(Self, ParseReport)>
    where
        I: IntoIterator<Item = (U, T, f64)>,
        U: AsRef<str>,
        T: AsRef<str>,
    {
        let mut b = Builder::new(scale);
        for (u, i, r) in triples {
            b.push(u.as_ref(), i.as_ref(), r);
        }
        b.finish()
    }

    pub(crate) fn with_tokens(users: Vec<String>, items: Vec<String>, mut ratings: Vec<Rating>, scale: (f64, f64)) -> Self {
        ratings.sort_by_key(|r| (r.user, r.item));
        let index = |t: &[String]| t.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        RatingDataset {
            user_index: index(&users),
            item_index: index(&items),
            users,
            items,
            ratings,
            scale,
        }
    }

    pub fn ratings(&self) -> &[Rating] {
        &self.ratings
    }

    pub fn len(&self) -> usize {
        self.ratings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ratings.is_empty()
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn user_token(&self, u: usize) -> &str {
        &self.users[u]
    }

    pub fn item_token(&self, i: usize) -> &str {
        &self.items[i]
    }

    pub fn user_id(&self, token: &str) -> Option<usize> {
        self.user_index.get(token).copied()
    }

    pub fn item_id(&self, token: &str) -> Option<usize> {
        self.item_index.get(token).copied()
    }

    /// Ratings of user `u`, ascending by item id.
    pub fn user_ratings(&self, u: usize) -> &[Rating] {
        let lo = self.ratings.partition_point(|r| r.user < u);
        let hi = self.ratings.partition_point(|r| r.user <= u);
        &self.ratings[lo..hi]
    }

    /// Per-user rating counts, indexed by dense user id.
    pub fn user_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.users.len()];
        for r in &self.ratings {
            c[r.user] += 1;
        }
        c
    }

    pub fn mean(&self) -> f64 {
        self.ratings.iter().map(|r| r.value).sum::<f64>() / self.ratings.len().max(1) as f64
    }

    pub(crate) fn tokens(&self) -> (&[String], &[String]) {
        (&self.users, &self.items)
    }
}

struct Builder {
    scale: (f64, f64),
    users: HashMap<String, usize>,
    items: HashMap<String, usize>,
    user_tokens: Vec<String>,
    item_tokens: Vec<String>,
    pairs: HashMap<(usize, usize), f64>,
    report: ParseReport,
}

impl Builder {
    fn new(scale: (f64, f64)) -> Self {
        Builder {
            scale,
            users: HashMap::new(),
            items: HashMap::new(),
            user_tokens: Vec::new(),
            item_tokens: Vec::new(),
            pairs: HashMap::new(),
            report: ParseReport::default(),
        }
    }

    fn push(&mut self, user: &str, item: &str, value: f64) {
        if !value.is_finite() {
            self.report.malformed += 1;
            return;
        }
        if value < self.scale.0 || value > self.scale.1 {
            self.report.out_of_scale += 1;
            warn!("rating {value} of ({user}, {item}) outside scale {:?}, dropped", self.scale);
            return;
        }
        let u = intern(&mut self.users, &mut self.user_tokens, user);
        let i = intern(&mut self.items, &mut self.item_tokens, item);
        if self.pairs.insert((u, i), value).is_some() {
            self.report.duplicates += 1;
        }
    }

    fn finish(self) -> Result<(RatingDataset, ParseReport)> {
        let ratings = self
            .pairs
            .into_iter()
            .map(|((user, item), value)| Rating { user, item, value })
            .collect();
        let ds = RatingDataset::with_tokens(self.user_tokens, self.item_tokens, ratings, self.scale);
        Ok((ds, self.report))
    }
}

fn intern(map: &mut HashMap<String, usize>, tokens: &mut Vec<String>, t: &str) -> usize {
    if let Some(&id) = map.get(t) {
        return id;
    }
    let id = tokens.len();
    map.insert(t.to_owned(), id);
    tokens.push(t.to_owned());
    id
}

/// Reads a delimited rating file. Lines that do not parse are counted in the
/// report; so are ratings outside the declared scale.
pub fn parse_ratings(path: &Path, schema: &Schema) -> Result<(RatingDataset, ParseReport)> {
    if schema.delimiter.is_empty() {
        return Err(Error::Config("empty delimiter".into()));
    }
    let cols = [
        schema.column(Field::User)?,
        schema.column(Field::Item)?,
        schema.column(Field::Rating)?,
    ];
    let rows = read_rows(path, schema)?;
    let mut malformed = 0;
    let mut triples = Vec::with_capacity(rows.len());
    for row in rows {
        let parsed = match row {
            Some(f) if f.len() >= schema.fields.len() => {
                let u = f[cols[0]].trim();
                let i = f[cols[1]].trim();
                match f[cols[2]].trim().parse::<f64>() {
                    Ok(r) if !u.is_empty() && !i.is_empty() => Some((u.to_owned(), i.to_owned(), r)),
                    _ => None,
                }
            }
            _ => None,
        };
        match parsed {
            Some(t) => triples.push(t),
            None => malformed += 1,
        }
    }
    if malformed > 0 {
        warn!("{}: {malformed} malformed lines skipped", path.display());
    }
    let scale = match schema.scale {
        Some(s) if s.0 < s.1 => s,
        Some(s) => return Err(invalid(format!("empty rating scale {s:?}"))),
        None => triples
            .iter()
            .filter(|t| t.2.is_finite())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), t| (lo.min(t.2), hi.max(t.2))),
    };
    let (ds, mut report) = RatingDataset::from_triples(triples, scale)?;
    report.malformed += malformed;
    if ds.is_empty() {
        return Err(Error::NoRecords(path.display().to_string()));
    }
    Ok((ds, report))
}

/// Splits every line into fields; `None` marks a line the reader rejected.
fn read_rows(path: &Path, schema: &Schema) -> Result<Vec<Option<Vec<String>>>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let delim = schema.delimiter.as_bytes();
    if delim.len() == 1 {
        let mut rdr = csv::ReaderBuilder::new()
            .delimiter(delim[0])
            .has_headers(schema.has_header)
            .flexible(true)
            .from_reader(file);
        let mut out = Vec::new();
        for rec in rdr.records() {
            match rec {
                Ok(r) => out.push(Some(r.iter().map(str::to_owned).collect())),
                Err(e) if e.is_io_error() => return Err(e.into()),
                Err(_) => out.push(None),
            }
        }
        return Ok(out);
    }
    let mut out = Vec::new();
    for (k, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if (k == 0 && schema.has_header) || line.trim().is_empty() {
            continue;
        }
        out.push(Some(line.split(schema.delimiter.as_str()).map(str::to_owned).collect()));
    }
    Ok(out)
}
