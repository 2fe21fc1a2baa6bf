//! Brute-force certification of the weight-tying scheme on small instances.
//!
//! Everything here works on dense, fully observed arrays stored as
//! `cells x channels` matrices in row-major cell order, with the full
//! `Ñ x Ñ` weight matrix materialised where needed. `Ñ` is capped at
//! [`MAX_CELLS`].

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::Serialize;

use crate::autodiff::Activation;
use crate::layers::{exchangeable_tensor_layer, ExchLayerParams};
use crate::rng::{seeded, Rng};
use crate::tensor::{full_tensor, unvectorize_index, PermutationSpec};
use crate::{Error, Result};

pub const MAX_CELLS: usize = 4096;

/// Equality tolerance for every verifier comparison.
pub const TOLERANCE: f64 = 1e-10;

/// Smallest output difference accepted as a non-equivariance witness.
pub const WITNESS_THRESHOLD: f64 = 1e-8;

fn cell_count(dims: &[usize]) -> Result<usize> {
    let cells = dims
        .iter()
        .try_fold(1usize, |acc, &n| acc.checked_mul(n))
        .unwrap_or(usize::MAX);
    if dims.is_empty() || dims.contains(&0) {
        return Err(Error::Shape(format!("dims must be positive, got {dims:?}")));
    }
    if cells > MAX_CELLS {
        return Err(Error::DenseCap { cells, cap: MAX_CELLS });
    }
    Ok(cells)
}

/// Mask of the axes on which two cells agree.
fn agreement_mask(a: &[usize], b: &[usize]) -> usize {
    a.iter()
        .zip(b)
        .enumerate()
        .filter(|(_, (x, y))| x == y)
        .fold(0, |m, (i, _)| m | (1 << i))
}

/// A bijection on the `Ñ` flattened cells.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FlatPermutation {
    map: Vec<usize>,
}

impl FlatPermutation {
    pub fn new(map: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; map.len()];
        for &v in &map {
            if v >= map.len() || std::mem::replace(&mut seen[v], true) {
                return Err(Error::Permutation(format!("{map:?} is not a bijection")));
            }
        }
        Ok(Self { map })
    }

    pub fn from_spec(spec: &PermutationSpec) -> Self {
        Self { map: spec.flatten() }
    }

    pub fn identity(cells: usize) -> Self {
        Self { map: (0..cells).collect() }
    }

    pub fn transposition(cells: usize, a: usize, b: usize) -> Self {
        let mut map: Vec<usize> = (0..cells).collect();
        map.swap(a, b);
        Self { map }
    }

    pub fn random(cells: usize, rng: &mut Rng) -> Self {
        let mut map: Vec<usize> = (0..cells).collect();
        map.shuffle(rng);
        Self { map }
    }

    pub fn map(&self) -> &[usize] {
        &self.map
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Moves row `i` of `x` to row `g(i)`.
    pub fn apply_rows(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros(x.dim());
        for (i, &gi) in self.map.iter().enumerate() {
            out.row_mut(gi).assign(&x.row(i));
        }
        out
    }
}

/// Decides whether `p` lies in `S_{N1} x ... x S_{ND}`.
///
/// `p` is legal iff, for every axis `i`, the `i`-th coordinate of `p(n)`
/// depends on `n_i` alone. When it does, the per-axis maps are returned.
pub fn is_legal_permutation(p: &FlatPermutation, dims: &[usize]) -> Result<Option<PermutationSpec>> {
    let cells = cell_count(dims)?;
    if p.len() != cells {
        return Err(Error::Permutation(format!("{} cells for dims {dims:?}", p.len())));
    }
    let mut maps: Vec<Vec<Option<usize>>> = dims.iter().map(|&n| vec![None; n]).collect();
    for (flat, &image) in p.map().iter().enumerate() {
        let from = unvectorize_index(flat, dims)?;
        let to = unvectorize_index(image, dims)?;
        for axis in 0..dims.len() {
            match maps[axis][from[axis]] {
                None => maps[axis][from[axis]] = Some(to[axis]),
                Some(seen) if seen == to[axis] => {}
                Some(_) => return Ok(None),
            }
        }
    }
    let maps = maps
        .into_iter()
        .map(|m| m.into_iter().map(|v| v.expect("every coordinate visited")).collect())
        .collect();
    // each per-axis map is onto because p is; a non-bijective map would
    // make p non-injective
    Ok(Some(PermutationSpec::new(maps)?))
}

/// `W[vec(n), vec(n')] = w_S` with `S = {i : n_i = n'_i}`; `weights` is
/// indexed by subset mask.
pub fn build_full_weight_matrix(weights: &[f64], dims: &[usize]) -> Result<Array2<f64>> {
    let cells = cell_count(dims)?;
    if weights.len() != 1 << dims.len() {
        return Err(Error::InvalidArgument(format!(
            "{} weights for order {}",
            weights.len(),
            dims.len()
        )));
    }
    let idx: Vec<Vec<usize>> = (0..cells).map(|f| unvectorize_index(f, dims)).collect::<Result<_>>()?;
    Ok(Array2::from_shape_fn((cells, cells), |(a, b)| {
        weights[agreement_mask(&idx[a], &idx[b])]
    }))
}

/// Reference layer `σ(W vec(X) + b)` with one full weight matrix per
/// channel pair. `dense` holds the tied *entries* of `W` per subset (not the
/// pooled weights used by [`exchangeable_tensor_layer`]).
pub fn dense_oracle_layer(x: &Array2<f64>, dense: &ExchLayerParams, dims: &[usize]) -> Result<Array2<f64>> {
    let cells = cell_count(dims)?;
    if x.dim() != (cells, dense.in_channels()) {
        return Err(Error::Shape(format!(
            "input {:?}, expected ({cells}, {})",
            x.dim(),
            dense.in_channels()
        )));
    }
    let (k, o) = (dense.in_channels(), dense.out_channels());
    let masks = dense.num_blocks();
    let mut pre = Array2::zeros((cells, o));
    for ki in 0..k {
        for oi in 0..o {
            let weights: Vec<f64> = (0..masks).map(|m| dense.block(m)[[ki, oi]]).collect();
            let w = build_full_weight_matrix(&weights, dims)?;
            let contribution = w.dot(&x.column(ki));
            let mut col = pre.column_mut(oi);
            col += &contribution;
        }
    }
    pre += dense.bias();
    Ok(dense.activation.apply(&pre))
}

/// Product of the sizes of the axes *not* in `mask`.
fn pooled_size(mask: usize, dims: &[usize]) -> f64 {
    dims.iter()
        .enumerate()
        .filter(|(i, _)| mask & (1 << i) == 0)
        .map(|(_, &n)| n as f64)
        .product()
}

fn map_blocks(p: &ExchLayerParams, f: impl Fn(&[Array2<f64>], usize) -> Array2<f64>) -> Result<ExchLayerParams> {
    let blocks: Vec<Array2<f64>> = (0..p.num_blocks()).map(|m| p.block(m).clone()).collect();
    let out = (0..blocks.len()).map(|m| f(&blocks, m)).collect();
    Ok(ExchLayerParams::from_blocks(out, p.bias().clone(), p.activation)?.with_pooling(p.pooling))
}

/// Converts tied weight-matrix entries into the mean-pooled parameterization.
///
/// The entry for "agree exactly on `E`" is `Σ_{S ⊆ E} c_S` where `c_S`
/// multiplies the inclusive sum over cells agreeing on `S`; Möbius inversion
/// recovers `c_S`, and a mean over `Π_{i∉S} N_i` cells absorbs that factor.
pub fn dense_to_pooled(dense: &ExchLayerParams, dims: &[usize]) -> Result<ExchLayerParams> {
    if dense.order() != dims.len() {
        return Err(Error::InvalidArgument("order and dims disagree".into()));
    }
    map_blocks(dense, |w, s| {
        let mut c = Array2::zeros(w[0].dim());
        for (t, wt) in w.iter().enumerate() {
            if t & !s == 0 {
                let sign = if (s & !t).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
                c.scaled_add(sign, wt);
            }
        }
        c * pooled_size(s, dims)
    })
}

/// Inverse of [`dense_to_pooled`].
pub fn pooled_to_dense(pooled: &ExchLayerParams, dims: &[usize]) -> Result<ExchLayerParams> {
    if pooled.order() != dims.len() {
        return Err(Error::InvalidArgument("order and dims disagree".into()));
    }
    map_blocks(pooled, |w, e| {
        let mut acc = Array2::zeros(w[0].dim());
        for (s, ws) in w.iter().enumerate() {
            if s & !e == 0 {
                acc.scaled_add(1.0 / pooled_size(s, dims), ws);
            }
        }
        acc
    })
}

/// The sparse (pooled) layer evaluated on a fully observed dense array.
pub fn pooled_dense_layer(x: &Array2<f64>, pooled: &ExchLayerParams, dims: &[usize]) -> Result<Array2<f64>> {
    let t = full_tensor(dims, x.clone())?;
    Ok(exchangeable_tensor_layer(&t, pooled)?.into_values())
}

/// `2^D` distinct weights in `[0.5, 1.5]`, pairwise at least `1e-3` apart.
pub fn generic_weights(order: usize, rng: &mut Rng) -> Vec<f64> {
    let n = 1 << order;
    let mut out: Vec<f64> = Vec::with_capacity(n);
    while out.len() < n {
        let w = rng.random_range(0.5..=1.5);
        if out.iter().all(|&v| (v - w).abs() >= 1e-3) {
            out.push(w);
        }
    }
    out
}

/// Single-channel layer whose weight-matrix entries are `weights` (by mask).
pub fn scalar_dense_params(weights: &[f64], bias: f64, activation: Activation) -> Result<ExchLayerParams> {
    let blocks = weights.iter().map(|&w| Array2::from_elem((1, 1), w)).collect();
    ExchLayerParams::from_blocks(blocks, Array1::from_elem(1, bias), activation)
}

#[derive(Debug, Clone, Serialize)]
pub struct Witness {
    /// Flat cell holding the single 1 of the witness input.
    pub input_cell: usize,
    pub input_channel: usize,
    pub output_cell: usize,
    pub output_channel: usize,
    pub deviation: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct IllegalCheck {
    pub permutation: Vec<usize>,
    pub witness: Option<Witness>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EquivarianceReport {
    pub dims: Vec<usize>,
    pub trials: usize,
    pub tolerance: f64,
    pub legal_max_deviation: f64,
    pub illegal: Vec<IllegalCheck>,
    pub orbit_count: usize,
    pub expected_orbits: usize,
}

impl EquivarianceReport {
    pub fn all_illegal_witnessed(&self) -> bool {
        self.illegal.iter().all(|c| c.witness.is_some())
    }

    pub fn passed(&self) -> bool {
        self.legal_max_deviation <= self.tolerance
            && self.all_illegal_witnessed()
            && self.orbit_count == self.expected_orbits
    }
}

fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Searches the single-1 inputs for one where `layer` fails to commute with `p`.
pub fn find_witness<F>(layer: &F, p: &FlatPermutation, channels: usize) -> Result<Option<Witness>>
where
    F: Fn(&Array2<f64>) -> Result<Array2<f64>>,
{
    let cells = p.len();
    for cell in 0..cells {
        for ch in 0..channels {
            let mut x = Array2::zeros((cells, channels));
            x[[cell, ch]] = 1.0;
            let lhs = layer(&p.apply_rows(&x))?;
            let rhs = p.apply_rows(&layer(&x)?);
            let mut best: Option<Witness> = None;
            for ((r, c), (&a, &b)) in ndarray::indices(lhs.dim()).into_iter().zip(lhs.iter().zip(rhs.iter())) {
                let d = (a - b).abs();
                if d > WITNESS_THRESHOLD && best.as_ref().is_none_or(|w| d > w.deviation) {
                    best = Some(Witness {
                        input_cell: cell,
                        input_channel: ch,
                        output_cell: r,
                        output_channel: c,
                        deviation: d,
                    });
                }
            }
            if best.is_some() {
                return Ok(best);
            }
        }
    }
    Ok(None)
}

/// Illegal permutations to probe: random flat bijections that are not
/// legal, plus transpositions of cell 0 with every other cell.
pub fn illegal_sample(dims: &[usize], random: usize, rng: &mut Rng) -> Result<Vec<FlatPermutation>> {
    let cells = cell_count(dims)?;
    let mut out = Vec::new();
    for j in 1..cells {
        let t = FlatPermutation::transposition(cells, 0, j);
        if is_legal_permutation(&t, dims)?.is_none() {
            out.push(t);
        }
    }
    let mut attempts = 0;
    let mut found = 0;
    while found < random && attempts < 100 * random.max(1) {
        attempts += 1;
        let p = FlatPermutation::random(cells, rng);
        if is_legal_permutation(&p, dims)?.is_none() {
            out.push(p);
            found += 1;
        }
    }
    Ok(out)
}

/// Checks `layer ∘ g = g ∘ layer` on random legal `g` and random inputs, and
/// looks for single-1 witnesses against each illegal permutation in `illegal`.
pub fn check_equivariance<F>(
    layer: F,
    dims: &[usize],
    channels: usize,
    trials: usize,
    seed: u64,
    illegal: &[FlatPermutation],
) -> Result<EquivarianceReport>
where
    F: Fn(&Array2<f64>) -> Result<Array2<f64>>,
{
    let cells = cell_count(dims)?;
    let mut rng = seeded(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let spec = PermutationSpec::random(dims, &mut rng);
        let p = FlatPermutation::from_spec(&spec);
        let x = Array2::from_shape_fn((cells, channels), |_| rng.random_range(-1.0..1.0));
        let lhs = layer(&p.apply_rows(&x))?;
        let rhs = p.apply_rows(&layer(&x)?);
        worst = worst.max(max_abs_diff(&lhs, &rhs));
    }
    let illegal = illegal
        .iter()
        .map(|p| {
            Ok(IllegalCheck {
                permutation: p.map().to_vec(),
                witness: find_witness(&layer, p, channels)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(EquivarianceReport {
        dims: dims.to_vec(),
        trials,
        tolerance: TOLERANCE,
        legal_max_deviation: worst,
        illegal,
        orbit_count: count_orbits(dims)?,
        expected_orbits: 1 << dims.len(),
    })
}

fn all_permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for v in 0..used.len() {
            if !used[v] {
                used[v] = true;
                prefix.push(v);
                rec(prefix, used, out);
                prefix.pop();
                used[v] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

/// Every element of `S_{N1} x ... x S_{ND}`, flattened.
pub fn legal_group(dims: &[usize]) -> Result<Vec<FlatPermutation>> {
    cell_count(dims)?;
    let per_axis: Vec<Vec<Vec<usize>>> = dims.iter().map(|&n| all_permutations(n)).collect();
    let mut specs: Vec<Vec<Vec<usize>>> = vec![Vec::new()];
    for axis in &per_axis {
        specs = specs
            .into_iter()
            .flat_map(|prefix| {
                axis.iter().map(move |m| {
                    let mut p = prefix.clone();
                    p.push(m.clone());
                    p
                })
            })
            .collect();
    }
    specs
        .into_iter()
        .map(|maps| Ok(FlatPermutation::from_spec(&PermutationSpec::new(maps)?)))
        .collect()
}

/// Brute-force group enumeration is used while the group has at most this many elements.
const BRUTE_FORCE_GROUP_LIMIT: usize = 50_000;

/// Number of orbits of cell pairs `(n, n')` under simultaneous legal
/// permutation of both coordinates.
pub fn count_orbits(dims: &[usize]) -> Result<usize> {
    let cells = cell_count(dims)?;
    let group_size = dims
        .iter()
        .try_fold(1usize, |acc, &n| (1..=n).try_fold(acc, |a, k| a.checked_mul(k)));
    match group_size {
        Some(g) if g <= BRUTE_FORCE_GROUP_LIMIT && cells * cells <= 1 << 20 => {
            count_orbits_brute_force(dims, cells)
        }
        _ => Ok(count_orbits_by_signature(dims)),
    }
}

fn count_orbits_brute_force(dims: &[usize], cells: usize) -> Result<usize> {
    let group = legal_group(dims)?;
    let mut parent: Vec<usize> = (0..cells * cells).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for g in &group {
        let map = g.map();
        for a in 0..cells {
            for b in 0..cells {
                let (x, y) = (a * cells + b, map[a] * cells + map[b]);
                let (rx, ry) = (find(&mut parent, x), find(&mut parent, y));
                if rx != ry {
                    parent[rx] = ry;
                }
            }
        }
    }
    Ok((0..cells * cells).filter(|&x| find(&mut parent, x) == x).count())
}

/// Distinct agreement sets realisable by some pair of cells.
fn count_orbits_by_signature(dims: &[usize]) -> usize {
    dims.iter().map(|&n| if n >= 2 { 2 } else { 1 }).product()
}

/// Combined verifier run reported by `exch verify`.
#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub dims: Vec<usize>,
    pub cells: usize,
    pub equivariance: EquivarianceReport,
    pub oracle_draws: usize,
    pub oracle_max_deviation: f64,
    pub constant_weight_witnesses: usize,
    pub distinct_weight_values: usize,
    pub passed: bool,
}

/// Runs every check at once for `dims`.
pub fn verify_suite(dims: &[usize], trials: usize, seed: u64) -> Result<SuiteReport> {
    let cells = cell_count(dims)?;
    let order = dims.len();
    let mut rng = seeded(seed);

    let weights = generic_weights(order, &mut rng);
    let dense = scalar_dense_params(&weights, 0.1, Activation::Sigmoid)?;
    let pooled = dense_to_pooled(&dense, dims)?;
    let illegal = illegal_sample(dims, 5.min(cells), &mut rng)?;
    let limit = if cells > 256 { 8 } else { illegal.len() };
    let equivariance = check_equivariance(
        |x| pooled_dense_layer(x, &pooled, dims),
        dims,
        1,
        trials,
        seed ^ 0x5eed,
        &illegal[..limit.min(illegal.len())],
    )?;

    let oracle_draws = if cells > 1024 { 3 } else { 20 };
    let mut oracle_max_deviation: f64 = 0.0;
    for _ in 0..oracle_draws {
        let w: Vec<f64> = (0..1 << order).map(|_| rng.random_range(-1.0..1.0)).collect();
        let dense = scalar_dense_params(&w, rng.random_range(-1.0..1.0), Activation::leaky_relu())?;
        let pooled = dense_to_pooled(&dense, dims)?;
        let x = Array2::from_shape_fn((cells, 1), |_| rng.random_range(-1.0..1.0));
        let a = dense_oracle_layer(&x, &dense, dims)?;
        let b = pooled_dense_layer(&x, &pooled, dims)?;
        oracle_max_deviation = oracle_max_deviation.max(max_abs_diff(&a, &b));
    }

    let constant = scalar_dense_params(&vec![0.7; 1 << order], 0.0, Activation::Sigmoid)?;
    let constant_pooled = dense_to_pooled(&constant, dims)?;
    let mut constant_weight_witnesses = 0;
    for p in illegal.iter().take(3) {
        if find_witness(&|x: &Array2<f64>| pooled_dense_layer(x, &constant_pooled, dims), p, 1)?.is_some() {
            constant_weight_witnesses += 1;
        }
    }

    let distinct_weight_values = if cells <= 256 {
        let w = build_full_weight_matrix(&weights, dims)?;
        let mut vals: Vec<f64> = w.iter().copied().collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        vals.len()
    } else {
        count_orbits_by_signature(dims)
    };

    let passed = equivariance.passed()
        && oracle_max_deviation <= TOLERANCE
        && constant_weight_witnesses == 0
        && distinct_weight_values == equivariance.expected_orbits;
    Ok(SuiteReport {
        dims: dims.to_vec(),
        cells,
        equivariance,
        oracle_draws,
        oracle_max_deviation,
        constant_weight_witnesses,
        distinct_weight_values,
        passed,
    })
}
