//! Minibatches of observed cells for matrices too large to process whole.
//!
//! Batches are row positions into an [`IndexSet`] (canonical order), sorted.

use rand::seq::index::sample;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::rng::{derive, seeded, Rng};
use crate::tensor::IndexSet;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerKind {
    Uniform,
    Conditional,
}

impl std::str::FromStr for SamplerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "conditional" => Ok(Self::Conditional),
            _ => Err(Error::InvalidArgument(format!("unknown sampler {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Uniform,
    Conditional,
    Partition,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SampleBatch {
    /// Sorted, distinct positions into the sampled index set.
    pub rows: Vec<usize>,
    pub provenance: Provenance,
    pub seed: u64,
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// `batch` of `n` positions, uniformly without replacement.
pub fn uniform_subsample(n: usize, batch: usize, seed: u64) -> Result<SampleBatch> {
    if batch > n {
        return Err(Error::Sampling(format!("batch of {batch} from {n} elements")));
    }
    let mut rows = sample(&mut seeded(seed), n, batch).into_vec();
    rows.sort_unstable();
    Ok(SampleBatch {
        rows,
        provenance: Provenance::Uniform,
        seed,
    })
}

/// `|R_n| / |I|` for every row `n`.
pub fn row_marginal(index: &IndexSet) -> Vec<f64> {
    axis_counts(index, 0).into_iter().map(|c| c as f64 / index.len() as f64).collect()
}

fn axis_counts(index: &IndexSet, axis: usize) -> Vec<usize> {
    let mut counts = vec![0usize; index.dims()[axis]];
    for idx in index.iter() {
        counts[idx[axis]] += 1;
    }
    counts
}

/// `k` distinct indices drawn one at a time with probability proportional to
/// `weights`, renormalising over the remaining mass after each draw. Asks for
/// more than the number of positive weights return all of them.
pub fn weighted_without_replacement(weights: &[f64], k: usize, rng: &mut Rng) -> Result<Vec<usize>> {
    if weights.iter().any(|&w| !w.is_finite() || w < 0.0) {
        return Err(Error::Sampling("weights must be finite and non-negative".into()));
    }
    let mut w = weights.to_vec();
    let mut total: f64 = w.iter().sum();
    if total <= 0.0 {
        return Err(Error::Sampling("all weights are zero".into()));
    }
    let mut out = Vec::with_capacity(k);
    while out.len() < k && total > 0.0 {
        let mut u = rng.random::<f64>() * total;
        let mut pick = None;
        for (i, &wi) in w.iter().enumerate() {
            if wi > 0.0 {
                pick = Some(i);
                if u < wi {
                    break;
                }
                u -= wi;
            }
        }
        // rounding can run past the end; the last positive weight absorbs it
        let i = pick.expect("positive mass remains");
        out.push(i);
        total -= w[i];
        w[i] = 0.0;
        if out.len() % 64 == 0 {
            total = w.iter().sum();
        }
    }
    out.sort_unstable();
    Ok(out)
}

/// Two-stage sampling on a matrix: rows with probability proportional to
/// `|R_n|`, then columns proportional to their counts within the chosen rows;
/// the batch is every observed cell in the chosen rows × columns.
pub fn conditional_subsample(index: &IndexSet, target_rows: usize, target_cols: usize, seed: u64) -> Result<SampleBatch> {
    if index.order() != 2 {
        return Err(Error::Sampling("conditional sampling needs a matrix".into()));
    }
    let [n, m] = [index.dims()[0], index.dims()[1]];
    if target_rows == 0 || target_cols == 0 || target_rows > n || target_cols > m {
        return Err(Error::Sampling(format!(
            "targets {target_rows}x{target_cols} outside 1..={n} x 1..={m}"
        )));
    }
    if index.is_empty() {
        return Err(Error::Sampling("no observations to sample from".into()));
    }
    let mut rng = seeded(seed);
    let row_w: Vec<f64> = axis_counts(index, 0).into_iter().map(|c| c as f64).collect();
    let rows = weighted_without_replacement(&row_w, target_rows, &mut rng)?;
    let mut chosen_row = vec![false; n];
    for &r in &rows {
        chosen_row[r] = true;
    }
    let mut col_w = vec![0.0; m];
    for idx in index.iter() {
        if chosen_row[idx[0]] {
            col_w[idx[1]] += 1.0;
        }
    }
    let cols = weighted_without_replacement(&col_w, target_cols, &mut rng)?;
    let mut chosen_col = vec![false; m];
    for &c in &cols {
        chosen_col[c] = true;
    }
    let batch = index
        .iter()
        .enumerate()
        .filter(|(_, idx)| chosen_row[idx[0]] && chosen_col[idx[1]])
        .map(|(r, _)| r)
        .collect();
    Ok(SampleBatch {
        rows: batch,
        provenance: Provenance::Conditional,
        seed,
    })
}

/// Row/column targets whose induced batch is roughly `budget` cells, assuming
/// observations spread evenly.
pub fn conditional_targets(index: &IndexSet, budget: usize) -> (usize, usize) {
    let frac = (budget as f64 / index.len().max(1) as f64).sqrt().min(1.0);
    let pick = |d: usize| ((d as f64 * frac).ceil() as usize).clamp(1, d);
    (pick(index.dims()[0]), pick(index.dims()[1]))
}

/// Conditional probabilities of each column given the selected rows.
pub fn column_marginal_given_rows(index: &IndexSet, rows: &[usize]) -> Result<Vec<f64>> {
    let mut chosen = vec![false; index.dims()[0]];
    for &r in rows {
        chosen[r] = true;
    }
    let mut w = vec![0.0; index.dims()[1]];
    for idx in index.iter() {
        if chosen[idx[0]] {
            w[idx[1]] += 1.0;
        }
    }
    let total: f64 = w.iter().sum();
    if total == 0.0 {
        return Err(Error::Sampling("selected rows have no observations".into()));
    }
    Ok(w.into_iter().map(|v| v / total).collect())
}

/// Batches whose union covers all `n` test positions.
#[derive(Debug, Clone, Serialize)]
pub struct Coverage {
    pub batches: Vec<SampleBatch>,
}

impl Coverage {
    pub fn num_batches(&self) -> usize {
        self.batches.len()
    }
}

/// Coupon-collector iteration cap: `50·⌈n/batch⌉` batches.
pub fn coverage_cap(n: usize, batch: usize) -> usize {
    50 * n.div_ceil(batch.max(1))
}

/// Draws batches from `builder` until every one of the `n` positions has
/// been included, or fails after [`coverage_cap`] batches.
pub fn cover_test_indices<F>(n: usize, batch: usize, seed: u64, mut builder: F) -> Result<Coverage>
where
    F: FnMut(u64) -> Result<SampleBatch>,
{
    let cap = coverage_cap(n, batch);
    let mut covered = vec![false; n];
    let mut remaining = n;
    let mut batches = Vec::new();
    let mut stream = derive(seed, 0x636f766572);
    while remaining > 0 {
        if batches.len() >= cap {
            return Err(Error::Sampling(format!(
                "{remaining} of {n} test cells still uncovered after {cap} batches"
            )));
        }
        let b = builder(stream.random())?;
        if b.is_empty() {
            return Err(Error::Sampling("batch builder returned an empty batch".into()));
        }
        for &r in &b.rows {
            let slot = covered.get_mut(r).ok_or_else(|| Error::Sampling(format!("batch row {r} >= {n}")))?;
            if !std::mem::replace(slot, true) {
                remaining -= 1;
            }
        }
        batches.push(b);
    }
    Ok(Coverage { batches })
}

/// Deterministic builder emitting consecutive chunks of `0..n`.
pub fn partition_builder(n: usize, batch: usize) -> impl FnMut(u64) -> Result<SampleBatch> {
    let mut start = 0;
    move |seed| {
        let end = (start + batch).min(n);
        let rows = (start..end).collect();
        start = if end == n { 0 } else { end };
        Ok(SampleBatch {
            rows,
            provenance: Provenance::Partition,
            seed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> IndexSet {
        IndexSet::from_tuples(vec![2, 2], &[vec![0, 0], vec![0, 1], vec![1, 0]]).unwrap()
    }

    #[test]
    fn uniform_examples() {
        assert_eq!(uniform_subsample(7, 7, 1).unwrap().rows, (0..7).collect::<Vec<_>>());
        assert_eq!(uniform_subsample(50, 5, 9).unwrap(), uniform_subsample(50, 5, 9).unwrap());
        assert!(uniform_subsample(3, 4, 1).is_err());
        let trials = 30_000;
        let mut counts = [0usize; 3];
        for seed in 0..trials {
            counts[uniform_subsample(3, 1, seed).unwrap().rows[0]] += 1;
        }
        let (p, n) = (1.0 / 3.0, trials as f64);
        let sigma = (n * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - n * p).abs() <= 3.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn marginal_examples() {
        let i = toy();
        let p = row_marginal(&i);
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-15 && (p[1] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(column_marginal_given_rows(&i, &[0]).unwrap(), vec![0.5, 0.5]);
        assert_eq!(conditional_subsample(&i, 2, 2, 5).unwrap().rows, vec![0, 1, 2]);
        assert!(conditional_subsample(&i, 3, 1, 5).is_err());
        assert!(conditional_subsample(&i, 0, 1, 5).is_err());
    }

    #[test]
    fn weighted_draws_skip_zero_weights() {
        let mut rng = seeded(3);
        for _ in 0..100 {
            let d = weighted_without_replacement(&[0.0, 1.0, 0.0, 2.0], 3, &mut rng).unwrap();
            assert_eq!(d, vec![1, 3]);
        }
        assert!(weighted_without_replacement(&[0.0, 0.0], 1, &mut rng).is_err());
    }

    #[test]
    fn coverage_examples() {
        let c = cover_test_indices(10, 10, 1, |s| uniform_subsample(10, 10, s)).unwrap();
        assert_eq!(c.num_batches(), 1);
        let c = cover_test_indices(23, 5, 1, partition_builder(23, 5)).unwrap();
        assert_eq!(c.num_batches(), 5);
        let err = cover_test_indices(10, 5, 1, |s| {
            Ok(SampleBatch {
                rows: vec![0],
                provenance: Provenance::Uniform,
                seed: s,
            })
        })
        .unwrap_err();
        assert!(err.to_string().contains("9 of 10"));
    }

    #[test]
    fn coupon_collector_average() {
        // expected batches: sum over coverage states, roughly (10/5)·ln 10 ≈ 4.6
        let total: usize = (0..1000)
            .map(|seed| cover_test_indices(10, 5, seed, |s| uniform_subsample(10, 5, s)).unwrap().num_batches())
            .sum();
        let mean = total as f64 / 1000.0;
        let target = 2.0 * 10f64.ln();
        assert!((mean - target).abs() <= 0.5 * target, "{mean}");
    }

    #[test]
    fn conditional_targets_scale_with_budget() {
        let idx = IndexSet::full(vec![100, 100]).unwrap();
        assert_eq!(conditional_targets(&idx, 2500), (50, 50));
        assert_eq!(conditional_targets(&idx, 1_000_000), (100, 100));
    }
}
