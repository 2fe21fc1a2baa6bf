//! Resolving `--data/--format/--split/--scale` into ratings tables.

use std::path::{Path, PathBuf};

use exchangeable::data::{file_pair_split, parse_ratings, random_split, Format, RatingScale, RatingsTable};

use crate::{CliError, CliResult, DataArgs};

/// Training (observed) ratings and, when the split provides one, a test set
/// in the same id space.
pub struct Loaded {
    pub train: RatingsTable,
    pub test: Option<RatingsTable>,
}

impl Loaded {
    /// Every rating in one table (train then test).
    pub fn all(&self) -> CliResult<RatingsTable> {
        match &self.test {
            None => Ok(self.train.clone()),
            Some(test) => merge(&self.train, test),
        }
    }
}

pub fn merge(a: &RatingsTable, b: &RatingsTable) -> CliResult<RatingsTable> {
    let triple = |t: &RatingsTable, r: &exchangeable::data::Rating| {
        (t.users().id(r.user).to_owned(), t.items().id(r.item).to_owned(), r.value)
    };
    let triples: Vec<(String, String, f64)> = a
        .ratings()
        .iter()
        .map(|r| triple(a, r))
        .chain(b.ratings().iter().map(|r| triple(b, r)))
        .collect();
    Ok(RatingsTable::from_triples(
        triples.iter().map(|(u, i, v)| (u.as_str(), i.as_str(), *v)),
        a.scale().clone(),
    )?)
}

fn guess_format(path: &Path) -> Format {
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => Format::Csv { delimiter: b',' },
        Some("tsv") => Format::Csv { delimiter: b'\t' },
        _ => Format::MovielensTab,
    }
}

pub fn parse_scale(s: &str) -> CliResult<RatingScale> {
    s.parse().map_err(|e: exchangeable::Error| CliError::Usage(format!("--scale {s:?}: {e}")))
}

impl DataArgs {
    pub fn path(&self) -> CliResult<&PathBuf> {
        let p = self.data.as_ref().ok_or_else(|| CliError::Usage("--data is required".into()))?;
        if !p.exists() {
            return Err(CliError::Usage(format!("data path {} does not exist", p.display())));
        }
        Ok(p)
    }

    /// Loads the ratings on `scale`; `seed` drives `random:F` splits.
    pub fn load(&self, scale: &RatingScale, seed: u64) -> CliResult<Loaded> {
        let path = self.path()?;
        let format = match &self.format {
            Some(f) => f.parse::<Format>()?,
            None if path.is_dir() => Format::MovielensTab,
            None => guess_format(path),
        };
        let default_split = if path.is_dir() { "u1" } else { "none" };
        let split = self.split.as_deref().unwrap_or(default_split);
        if path.is_dir() {
            if split.starts_with("random:") || split == "none" {
                return Err(CliError::Usage(format!(
                    "split {split:?} needs a single ratings file, {} is a directory",
                    path.display()
                )));
            }
            let base = path.join(format!("{split}.base"));
            let test = path.join(format!("{split}.test"));
            for p in [&base, &test] {
                if !p.exists() {
                    return Err(CliError::Usage(format!("split file {} does not exist", p.display())));
                }
            }
            let s = file_pair_split(&base, &test, format, scale.clone())?;
            return Ok(Loaded {
                train: s.train,
                test: Some(s.test),
            });
        }
        let table = parse_ratings(path, format, scale.clone())?;
        if split == "none" {
            return Ok(Loaded { train: table, test: None });
        }
        let frac = split
            .strip_prefix("random:")
            .and_then(|f| f.parse::<f64>().ok())
            .filter(|f| (0.0..1.0).contains(f))
            .ok_or_else(|| CliError::Usage(format!("unknown split {split:?}; use uN, random:F or none")))?;
        let s = random_split(&table, frac, 0.0, seed)?;
        Ok(Loaded {
            train: s.train,
            test: Some(s.test),
        })
    }
}
