//! Ratings ingestion, splits, one-hot encoding, rebinning and metrics.

use std::collections::HashMap;
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use ndarray::Array2;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::rng::seeded;
use crate::tensor::SparseTensor;
use crate::{Error, Result};

const LEVEL_EPS: f64 = 1e-9;

/// Ordered rating levels, e.g. `1..=5` or half-points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingScale {
    levels: Vec<f64>,
}

impl RatingScale {
    pub fn new(levels: Vec<f64>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::InvalidArgument("rating scale has no levels".into()));
        }
        if levels.iter().any(|l| !l.is_finite()) || levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(format!(
                "levels must be finite and strictly increasing: {levels:?}"
            )));
        }
        Ok(Self { levels })
    }

    /// Integer levels `lo..=hi`.
    pub fn integer(lo: i64, hi: i64) -> Result<Self> {
        Self::new((lo..=hi).map(|v| v as f64).collect())
    }

    /// `lo, lo + step, ..., hi`.
    pub fn stepped(lo: f64, hi: f64, step: f64) -> Result<Self> {
        if step.is_nan() || step <= 0.0 || hi < lo {
            return Err(Error::InvalidArgument(format!("bad scale {lo}-{hi} step {step}")));
        }
        let n = ((hi - lo) / step).round() as usize;
        if (lo + n as f64 * step - hi).abs() > LEVEL_EPS {
            return Err(Error::InvalidArgument(format!("{hi} is not reachable from {lo} in steps of {step}")));
        }
        Self::new((0..=n).map(|i| lo + i as f64 * step).collect())
    }

    /// The usual 1–5 star scale.
    pub fn five_star() -> Self {
        Self::integer(1, 5).expect("valid scale")
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn lo(&self) -> f64 {
        self.levels[0]
    }

    pub fn hi(&self) -> f64 {
        self.levels[self.levels.len() - 1]
    }

    pub fn contains(&self, value: f64) -> bool {
        value >= self.lo() - LEVEL_EPS && value <= self.hi() + LEVEL_EPS
    }

    /// Index of the level equal to `rating`.
    pub fn level_index(&self, rating: f64) -> Result<usize> {
        self.levels
            .iter()
            .position(|&l| (l - rating).abs() <= LEVEL_EPS)
            .ok_or_else(|| Error::OffScale {
                rating,
                scale: self.to_string(),
            })
    }

    /// Index of the level closest to `value` (ties go to the lower level).
    pub fn nearest_index(&self, value: f64) -> usize {
        let mut best = 0;
        for (i, &l) in self.levels.iter().enumerate() {
            if (l - value).abs() < (self.levels[best] - value).abs() {
                best = i;
            }
        }
        best
    }
}

impl fmt::Display for RatingScale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let step = self.levels.get(1).map(|l| l - self.lo());
        let regular = step.is_some_and(|s| self.levels.windows(2).all(|w| ((w[1] - w[0]) - s).abs() < LEVEL_EPS));
        match step {
            None => write!(f, "{}", self.lo()),
            Some(s) if regular && (s - 1.0).abs() < LEVEL_EPS => write!(f, "{}-{}", self.lo(), self.hi()),
            Some(s) if regular => write!(f, "{}-{}/{}", self.lo(), self.hi(), s),
            _ => {
                let parts: Vec<String> = self.levels.iter().map(f64::to_string).collect();
                write!(f, "{}", parts.join(","))
            }
        }
    }
}

/// Parses `lo-hi`, `lo-hi/step` or a comma-separated level list.
impl FromStr for RatingScale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("cannot parse rating scale {s:?}"));
        let num = |t: &str| t.trim().parse::<f64>().map_err(|_| bad());
        if s.contains(',') {
            return Self::new(s.split(',').map(num).collect::<Result<_>>()?);
        }
        let (range, step) = match s.split_once('/') {
            Some((r, st)) => (r, num(st)?),
            None => (s, 1.0),
        };
        // the separator is the first '-' after the first character, so "-1-1" also parses
        let cut = range
            .char_indices()
            .skip(1)
            .find(|&(_, c)| c == '-')
            .map(|(i, _)| i)
            .ok_or_else(bad)?;
        Self::stepped(num(&range[..cut])?, num(&range[cut + 1..])?, step)
    }
}

/// External ids in first-appearance order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdMap {
    ids: Vec<String>,
    lookup: HashMap<String, usize>,
}

impl IdMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get_or_insert(&mut self, id: &str) -> usize {
        if let Some(&i) = self.lookup.get(id) {
            return i;
        }
        self.ids.push(id.to_owned());
        self.lookup.insert(id.to_owned(), self.ids.len() - 1);
        self.ids.len() - 1
    }

    pub fn index(&self, id: &str) -> Option<usize> {
        self.lookup.get(id).copied()
    }

    pub fn id(&self, index: usize) -> &str {
        &self.ids[index]
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rating {
    pub user: usize,
    pub item: usize,
    pub value: f64,
    pub timestamp: Option<i64>,
}

/// Ratings with dense 0-based user and item indices.
///
/// Tables produced by splitting share their id maps, so every part of a split
/// lives in the same `(users, items)` index space.
#[derive(Debug, Clone)]
pub struct RatingsTable {
    users: Arc<IdMap>,
    items: Arc<IdMap>,
    ratings: Vec<Rating>,
    scale: RatingScale,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TableStats {
    pub users: usize,
    pub items: usize,
    pub ratings: usize,
    pub sparsity: f64,
}

impl RatingsTable {
    /// Builds a table from `(user, item, rating)` triples with external ids.
    pub fn from_triples<'a, I>(triples: I, scale: RatingScale) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, &'a str, f64)>,
    {
        let mut b = Builder::new(scale);
        for (line, (u, i, r)) in triples.into_iter().enumerate() {
            b.push(line + 1, u, i, r, None)?;
        }
        b.finish()
    }

    pub fn users(&self) -> &IdMap {
        &self.users
    }

    pub fn items(&self) -> &IdMap {
        &self.items
    }

    pub fn ratings(&self) -> &[Rating] {
        &self.ratings
    }

    pub fn scale(&self) -> &RatingScale {
        &self.scale
    }

    pub fn len(&self) -> usize {
        self.ratings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ratings.is_empty()
    }

    pub fn dims(&self) -> [usize; 2] {
        [self.users.len(), self.items.len()]
    }

    pub fn stats(&self) -> TableStats {
        let [n, m] = self.dims();
        TableStats {
            users: n,
            items: m,
            ratings: self.len(),
            sparsity: self.len() as f64 / (n as f64 * m as f64),
        }
    }

    /// Rows `rows` of this table, in the same id space.
    pub fn subset(&self, rows: &[usize]) -> Self {
        Self {
            users: self.users.clone(),
            items: self.items.clone(),
            ratings: rows.iter().map(|&r| self.ratings[r]).collect(),
            scale: self.scale.clone(),
        }
    }

    /// Same ratings in the id space of `other` (ids missing there are an error).
    pub fn reindex_like(&self, other: &RatingsTable) -> Result<Self> {
        let ratings = self
            .ratings
            .iter()
            .map(|r| {
                let u = other.users.index(self.users.id(r.user));
                let i = other.items.index(self.items.id(r.item));
                match (u, i) {
                    (Some(user), Some(item)) => Ok(Rating { user, item, ..*r }),
                    _ => Err(Error::InvalidArgument(format!(
                        "user {} / item {} unknown in target id space",
                        self.users.id(r.user),
                        self.items.id(r.item)
                    ))),
                }
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            users: other.users.clone(),
            items: other.items.clone(),
            ratings,
            scale: self.scale.clone(),
        })
    }

    /// Every rating moved onto `to` with [`rebin_scale`].
    pub fn rebinned(&self, to: &RatingScale) -> Result<Self> {
        let ratings = self
            .ratings
            .iter()
            .map(|r| Ok(Rating { value: rebin_scale(r.value, &self.scale, to)?, ..*r }))
            .collect::<Result<_>>()?;
        Ok(Self {
            users: self.users.clone(),
            items: self.items.clone(),
            ratings,
            scale: to.clone(),
        })
    }

    /// Observed `(user, item)` coordinates, flattened.
    pub fn coords(&self) -> Vec<usize> {
        self.ratings.iter().flat_map(|r| [r.user, r.item]).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.ratings.iter().map(|r| r.value).collect()
    }
}

struct Builder {
    users: IdMap,
    items: IdMap,
    ratings: Vec<Rating>,
    seen: HashMap<(usize, usize), usize>,
    scale: RatingScale,
}

impl Builder {
    fn new(scale: RatingScale) -> Self {
        Self::with_ids(scale, IdMap::new(), IdMap::new())
    }

    fn with_ids(scale: RatingScale, users: IdMap, items: IdMap) -> Self {
        Self {
            users,
            items,
            ratings: Vec::new(),
            seen: HashMap::new(),
            scale,
        }
    }

    fn push(&mut self, line: usize, user: &str, item: &str, value: f64, timestamp: Option<i64>) -> Result<()> {
        if !value.is_finite() || !self.scale.contains(value) {
            return Err(Error::Parse {
                line,
                reason: format!("rating {value} outside scale {}", self.scale),
            });
        }
        let (u, i) = (self.users.get_or_insert(user), self.items.get_or_insert(item));
        if let Some(first) = self.seen.insert((u, i), line) {
            return Err(Error::Parse {
                line,
                reason: format!("duplicate rating for user {user} item {item} (first on line {first})"),
            });
        }
        self.ratings.push(Rating {
            user: u,
            item: i,
            value,
            timestamp,
        });
        Ok(())
    }

    fn finish(self) -> Result<RatingsTable> {
        if self.ratings.is_empty() {
            return Err(Error::Empty);
        }
        Ok(RatingsTable {
            users: Arc::new(self.users),
            items: Arc::new(self.items),
            ratings: self.ratings,
            scale: self.scale,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    /// `user<TAB>item<TAB>rating<TAB>timestamp` per line.
    MovielensTab,
    /// `user,item,rating[,...]`, optional header, configurable delimiter.
    Csv { delimiter: u8 },
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "movielens" | "movielens-tab" | "tab" => Ok(Self::MovielensTab),
            "csv" => Ok(Self::Csv { delimiter: b',' }),
            "tsv" => Ok(Self::Csv { delimiter: b'\t' }),
            _ => Err(Error::InvalidArgument(format!("unknown format {s:?}"))),
        }
    }
}

fn parse_into(b: &mut Builder, text: &str, format: Format) -> Result<()> {
    match format {
        Format::MovielensTab => {
            for (i, line) in text.lines().enumerate() {
                let line_no = i + 1;
                if line.trim().is_empty() {
                    continue;
                }
                let fields: Vec<&str> = line.split('\t').collect();
                if fields.len() < 3 {
                    return Err(Error::Parse {
                        line: line_no,
                        reason: format!("expected at least 3 tab-separated fields, got {}", fields.len()),
                    });
                }
                let value = fields[2].trim().parse::<f64>().map_err(|e| Error::Parse {
                    line: line_no,
                    reason: format!("rating {:?}: {e}", fields[2]),
                })?;
                let ts = match fields.get(3) {
                    Some(t) => Some(t.trim().parse::<i64>().map_err(|e| Error::Parse {
                        line: line_no,
                        reason: format!("timestamp {t:?}: {e}"),
                    })?),
                    None => None,
                };
                b.push(line_no, fields[0].trim(), fields[1].trim(), value, ts)?;
            }
        }
        Format::Csv { delimiter } => {
            let mut reader = csv::ReaderBuilder::new()
                .has_headers(false)
                .delimiter(delimiter)
                .flexible(true)
                .from_reader(text.as_bytes());
            for (i, record) in reader.records().enumerate() {
                let record = record?;
                let line_no = record.position().map_or(i + 1, |p| p.line() as usize);
                if record.len() < 3 {
                    return Err(Error::Parse {
                        line: line_no,
                        reason: format!("expected at least 3 fields, got {}", record.len()),
                    });
                }
                let value = match record[2].trim().parse::<f64>() {
                    Ok(v) => v,
                    // a non-numeric first row is a header
                    Err(_) if i == 0 => continue,
                    Err(e) => {
                        return Err(Error::Parse {
                            line: line_no,
                            reason: format!("rating {:?}: {e}", &record[2]),
                        })
                    }
                };
                b.push(line_no, record[0].trim(), record[1].trim(), value, None)?;
            }
        }
    }
    Ok(())
}

/// Parses ratings text in the given format.
pub fn parse_ratings_str(text: &str, format: Format, scale: RatingScale) -> Result<RatingsTable> {
    let mut b = Builder::new(scale);
    parse_into(&mut b, text, format)?;
    b.finish()
}

fn read_file(path: &Path) -> Result<String> {
    let mut s = String::new();
    std::fs::File::open(path)?.read_to_string(&mut s)?;
    Ok(s)
}

pub fn parse_ratings(path: &Path, format: Format, scale: RatingScale) -> Result<RatingsTable> {
    parse_ratings_str(&read_file(path)?, format, scale)
}

/// Train/test (and optional validation) tables sharing one id space.
#[derive(Debug, Clone)]
pub struct Split {
    pub train: RatingsTable,
    pub test: RatingsTable,
    pub validation: Option<RatingsTable>,
}

/// Parses a published train/test file pair into a shared id space.
///
/// Ids are numbered in first-appearance order over the train file, then the
/// test file; users/items seen only in test are kept.
pub fn file_pair_split_str(train: &str, test: &str, format: Format, scale: RatingScale) -> Result<Split> {
    let mut b = Builder::new(scale.clone());
    parse_into(&mut b, train, format)?;
    let n_train = b.ratings.len();
    if n_train == 0 {
        return Err(Error::Empty);
    }
    let train_pairs = b.seen.clone();
    let mut tb = Builder::with_ids(scale, std::mem::take(&mut b.users), std::mem::take(&mut b.items));
    tb.seen = HashMap::new();
    parse_into(&mut tb, test, format)?;
    if let Some(r) = tb.ratings.iter().find(|r| train_pairs.contains_key(&(r.user, r.item))) {
        return Err(Error::InvalidArgument(format!(
            "user {} item {} appears in both train and test",
            tb.users.id(r.user),
            tb.items.id(r.item)
        )));
    }
    if tb.ratings.is_empty() {
        return Err(Error::Empty);
    }
    let users = Arc::new(tb.users);
    let items = Arc::new(tb.items);
    let table = |ratings| RatingsTable {
        users: users.clone(),
        items: items.clone(),
        ratings,
        scale: tb.scale.clone(),
    };
    Ok(Split {
        train: table(b.ratings),
        test: table(tb.ratings),
        validation: None,
    })
}

pub fn file_pair_split(train: &Path, test: &Path, format: Format, scale: RatingScale) -> Result<Split> {
    file_pair_split_str(&read_file(train)?, &read_file(test)?, format, scale)
}

/// Uniform random split; `|test| = round(test_fraction·n)` and likewise for validation.
pub fn random_split(table: &RatingsTable, test_fraction: f64, validation_fraction: f64, seed: u64) -> Result<Split> {
    let ok = |f: f64| (0.0..=1.0).contains(&f);
    if !ok(test_fraction) || !ok(validation_fraction) || test_fraction + validation_fraction > 1.0 {
        return Err(Error::InvalidArgument(format!(
            "fractions {test_fraction} + {validation_fraction} must lie in [0, 1]"
        )));
    }
    let n = table.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seeded(seed));
    let n_test = (test_fraction * n as f64).round() as usize;
    let n_val = ((validation_fraction * n as f64).round() as usize).min(n - n_test);
    let (test, rest) = order.split_at(n_test);
    let (val, train) = rest.split_at(n_val);
    let sorted = |rows: &[usize]| {
        let mut r = rows.to_vec();
        r.sort_unstable();
        table.subset(&r)
    };
    Ok(Split {
        train: sorted(train),
        test: sorted(test),
        validation: (validation_fraction > 0.0).then(|| sorted(val)),
    })
}

/// One channel per level; channel `l` is 1 iff the rating equals level `l`.
pub fn encode_onehot(table: &RatingsTable) -> Result<SparseTensor> {
    let scale = table.scale();
    let mut values = Array2::zeros((table.len(), scale.len()));
    for (row, r) in table.ratings().iter().enumerate() {
        values[[row, scale.level_index(r.value)?]] = 1.0;
    }
    SparseTensor::new(table.dims().to_vec(), table.coords(), values)
}

/// Inverse of [`encode_onehot`]: `(user, item, rating)` per observed cell.
pub fn decode_onehot(t: &SparseTensor, scale: &RatingScale) -> Result<Vec<(usize, usize, f64)>> {
    if t.channels() != scale.len() || t.order() != 2 {
        return Err(Error::Shape(format!(
            "{} channels of order {} for a {}-level scale",
            t.channels(),
            t.order(),
            scale.len()
        )));
    }
    t.index()
        .iter()
        .zip(t.values().rows())
        .map(|(idx, v)| {
            let hot: Vec<usize> = (0..v.len()).filter(|&l| v[l] == 1.0).collect();
            match (hot.as_slice(), v.iter().filter(|&&x| x != 0.0).count()) {
                ([l], 1) => Ok((idx[0], idx[1], scale.levels()[*l])),
                _ => Err(Error::InvalidArgument(format!("cell {idx:?} is not one-hot"))),
            }
        })
        .collect()
}

fn linear_map(value: f64, from: &RatingScale, to: &RatingScale) -> f64 {
    let span = from.hi() - from.lo();
    let t = if span == 0.0 { 0.0 } else { (value - from.lo()) / span };
    to.lo() + t * (to.hi() - to.lo())
}

/// Maps a rating on `from` to a level of `to`: linear map of the ranges,
/// round half away from zero, clamp, then snap to the nearest level.
pub fn rebin_scale(rating: f64, from: &RatingScale, to: &RatingScale) -> Result<f64> {
    if !from.contains(rating) {
        return Err(Error::OffScale {
            rating,
            scale: from.to_string(),
        });
    }
    let v = linear_map(rating, from, to).round().clamp(to.lo(), to.hi());
    Ok(to.levels()[to.nearest_index(v)])
}

/// Exact inverse linear map from the `from` range onto the `to` range.
pub fn rescale_prediction(value: f64, from: &RatingScale, to: &RatingScale) -> Result<f64> {
    if !value.is_finite() || !from.contains(value) {
        return Err(Error::OffScale {
            rating: value,
            scale: from.to_string(),
        });
    }
    Ok(linear_map(value, from, to))
}

pub fn rmse(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.len() != targets.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} targets",
            predictions.len(),
            targets.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::Empty);
    }
    let sse: f64 = predictions.iter().zip(targets).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok((sse / predictions.len() as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn five() -> RatingScale {
        RatingScale::five_star()
    }

    #[test]
    fn scale_parsing_and_display() {
        assert_eq!("1-5".parse::<RatingScale>().unwrap(), five());
        let half: RatingScale = "1-5/0.5".parse().unwrap();
        assert_eq!(half.len(), 9);
        assert_eq!(half.to_string(), "1-5/0.5");
        assert_eq!("1-100".parse::<RatingScale>().unwrap().len(), 100);
        assert_eq!("1,2,4".parse::<RatingScale>().unwrap().to_string(), "1,2,4");
        assert!("5-1".parse::<RatingScale>().is_err());
        assert!(RatingScale::new(vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn parse_examples() {
        assert!(matches!(parse_ratings_str("", Format::MovielensTab, five()), Err(Error::Empty)));
        let t = parse_ratings_str("1\t1\t5\t881250949\n", Format::MovielensTab, five()).unwrap();
        assert_eq!(t.dims(), [1, 1]);
        assert_eq!(t.ratings()[0].timestamp, Some(881250949));

        let err = parse_ratings_str("1\t1\t5\t0\n2\t1\n", Format::MovielensTab, five()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = parse_ratings_str("1\t1\t7\t0\n", Format::MovielensTab, five()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let err = parse_ratings_str("1\t1\t3\t0\n1\t1\t4\t0\n", Format::MovielensTab, five()).unwrap_err();
        assert!(err.to_string().contains("duplicate"));
    }

    #[test]
    fn csv_with_and_without_header() {
        let a = parse_ratings_str("user,item,rating\nu1,i1,3\nu2,i1,4\n", Format::Csv { delimiter: b',' }, five())
            .unwrap();
        let b = parse_ratings_str("u1;i1;3\nu2;i1;4\n", Format::Csv { delimiter: b';' }, five()).unwrap();
        assert_eq!(a.len(), 2);
        assert_eq!(a.values(), b.values());
        assert_eq!(a.dims(), [2, 1]);
        let err = parse_ratings_str("u1,i1,3\nu2,i1,x\n", Format::Csv { delimiter: b',' }, five()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn first_appearance_order() {
        let t = parse_ratings_str("7\t3\t1\n2\t3\t2\n7\t9\t3\n", Format::MovielensTab, five()).unwrap();
        assert_eq!(t.users().ids(), ["7", "2"]);
        assert_eq!(t.items().ids(), ["3", "9"]);
        assert_eq!(t.coords(), vec![0, 0, 1, 0, 0, 1]);
        let s = t.stats();
        assert_eq!((s.users, s.items, s.ratings), (2, 2, 3));
        assert!((s.sparsity - 0.75).abs() < 1e-12);
    }

    #[test]
    fn file_pair_shares_ids_and_rejects_overlap() {
        let s = file_pair_split_str("1\t1\t5\n2\t2\t3\n", "3\t1\t4\n", Format::MovielensTab, five()).unwrap();
        assert_eq!(s.train.len() + s.test.len(), 3);
        assert_eq!(s.test.dims(), [3, 2]);
        assert_eq!(s.test.ratings()[0].user, 2);
        let err = file_pair_split_str("1\t1\t5\n", "1\t1\t4\n", Format::MovielensTab, five()).unwrap_err();
        assert!(err.to_string().contains("both"));
    }

    #[test]
    fn random_split_sizes() {
        let text: String = (0..100).map(|i| format!("{}\t{}\t{}\n", i % 10, i / 10, 1 + i % 5)).collect();
        let t = parse_ratings_str(&text, Format::MovielensTab, five()).unwrap();
        let s = random_split(&t, 0.1, 0.0, 4).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (90, 10));
        assert!(s.validation.is_none());
        let again = random_split(&t, 0.1, 0.0, 4).unwrap();
        assert_eq!(s.test.coords(), again.test.coords());
        let s = random_split(&t, 0.0, 0.0, 4).unwrap();
        assert_eq!(s.train.len(), 100);
        let s = random_split(&t, 0.2, 0.05, 4).unwrap();
        assert_eq!(s.validation.as_ref().unwrap().len(), 5);
        assert_eq!(s.train.len(), 75);
        assert!(random_split(&t, 0.7, 0.5, 4).is_err());
    }

    #[test]
    fn onehot_examples() {
        let t = RatingsTable::from_triples([("a", "x", 4.0), ("b", "x", 1.0), ("a", "y", 4.0)], five()).unwrap();
        let x = encode_onehot(&t).unwrap();
        assert_eq!(x.get(&[0, 0]).unwrap().to_vec(), vec![0.0, 0.0, 0.0, 1.0, 0.0]);
        let hist = x.values().sum_axis(ndarray::Axis(0));
        assert_eq!(hist.to_vec(), vec![1.0, 0.0, 0.0, 2.0, 0.0]);
        let mut back = decode_onehot(&x, &five()).unwrap();
        back.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(back, vec![(0, 0, 4.0), (0, 1, 4.0), (1, 0, 1.0)]);
        let half = RatingsTable::from_triples([("a", "x", 3.5)], "1-5/0.5".parse().unwrap()).unwrap();
        assert!(encode_onehot(&half).is_ok());
        let off = RatingsTable::from_triples([("a", "x", 3.5)], five()).unwrap();
        assert!(matches!(encode_onehot(&off), Err(Error::OffScale { .. })));
    }

    #[test]
    fn rebin_examples() {
        let yahoo = RatingScale::integer(1, 100).unwrap();
        assert_eq!(rebin_scale(100.0, &yahoo, &five()).unwrap(), 5.0);
        assert_eq!(rebin_scale(1.0, &yahoo, &five()).unwrap(), 1.0);
        assert!(rebin_scale(101.0, &yahoo, &five()).is_err());
        assert!((rescale_prediction(3.0, &five(), &yahoo).unwrap() - 50.5).abs() < 1e-12);
        // half-star 3.5 maps to 3.5 on 1-5, rounding half away from zero gives 4
        let half: RatingScale = "1-5/0.5".parse().unwrap();
        assert_eq!(rebin_scale(3.5, &half, &five()).unwrap(), 4.0);
        assert_eq!(rebin_scale(1.5, &half, &five()).unwrap(), 2.0);
    }

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(rmse(&[2.0], &[4.0]).unwrap(), 2.0);
        assert_eq!(rmse(&[1.0, 3.0], &[2.0, 2.0]).unwrap(), 1.0);
        assert!(matches!(rmse(&[], &[]), Err(Error::Empty)));
    }
}
