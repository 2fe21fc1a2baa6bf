//! Seeded low-rank rating matrices for tests and demos.
//!
//! Factors `U` (N×r) and `V` (M×r) have i.i.d. `N(μ, 1)` entries. Raw scores
//! `U Vᵀ` are standardised with their population moments
//! (mean `rμ²`, variance `r(2μ² + 1)`) and quantized as
//! `clamp(round(3 + 1.2·score), 1, 5)`.
//!
//! With `μ = 0` the matrix has no row or column effects at all; a positive
//! `μ` mixes row/column effects with the pure interaction term.

use ndarray::Array2;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{random_split, RatingScale, RatingsTable, Split};
use crate::rng::derive;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub rows: usize,
    pub cols: usize,
    pub rank: usize,
    /// Fraction of cells revealed as observed; the rest are held out.
    pub observed_fraction: f64,
    pub seed: u64,
    /// Mean `μ` of every factor entry.
    pub factor_mean: f64,
    /// Prefix for external ids, so two matrices can live in disjoint id spaces.
    pub id_prefix: String,
}

impl SyntheticSpec {
    /// 50×60, rank 2, 30% observed.
    pub fn standard(seed: u64) -> Self {
        Self {
            rows: 50,
            cols: 60,
            rank: 2,
            observed_fraction: 0.3,
            seed,
            factor_mean: 1.0,
            id_prefix: String::new(),
        }
    }
}

pub fn quantize(score: f64) -> f64 {
    (3.0 + 1.2 * score).round().clamp(1.0, 5.0)
}

/// The full matrix of ratings.
pub fn low_rank_ratings(rows: usize, cols: usize, rank: usize, factor_mean: f64, seed: u64) -> Result<Array2<f64>> {
    if rows == 0 || cols == 0 || rank == 0 {
        return Err(Error::InvalidArgument("synthetic dims and rank must be positive".into()));
    }
    let mut ru = derive(seed, 1);
    let mut rv = derive(seed, 2);
    let mu = factor_mean;
    let u = Array2::from_shape_fn((rows, rank), |_| mu + Distribution::<f64>::sample(&StandardNormal, &mut ru));
    let v = Array2::from_shape_fn((cols, rank), |_| mu + Distribution::<f64>::sample(&StandardNormal, &mut rv));
    let r = rank as f64;
    let scores = (u.dot(&v.t()) - r * mu * mu) / (r * (2.0 * mu * mu + 1.0)).sqrt();
    Ok(scores.mapv(quantize))
}

/// Every cell of the matrix as a ratings table (ids `{prefix}u{n}`, `{prefix}i{m}`).
pub fn full_table(spec: &SyntheticSpec) -> Result<RatingsTable> {
    let r = low_rank_ratings(spec.rows, spec.cols, spec.rank, spec.factor_mean, spec.seed)?;
    let users: Vec<String> = (0..spec.rows).map(|n| format!("{}u{n}", spec.id_prefix)).collect();
    let items: Vec<String> = (0..spec.cols).map(|m| format!("{}i{m}", spec.id_prefix)).collect();
    let triples = r
        .indexed_iter()
        .map(|((n, m), &v)| (users[n].as_str(), items[m].as_str(), v));
    RatingsTable::from_triples(triples, RatingScale::five_star())
}

/// Observed cells as `train`, all remaining cells as `test`.
pub fn synthetic_task(spec: &SyntheticSpec) -> Result<Split> {
    if !(spec.observed_fraction > 0.0 && spec.observed_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "observed fraction {} outside (0, 1)",
            spec.observed_fraction
        )));
    }
    let full = full_table(spec)?;
    random_split(&full, 1.0 - spec.observed_fraction, 0.0, spec.seed ^ 0x0b5e)
}
