//! Sparse D-dimensional arrays of channel vectors, axis grouping and
//! per-axis permutations.

use std::sync::Arc;

use ndarray::{Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;

use crate::{Error, Result};

/// Largest number of cells [`to_dense`] will materialise by default.
pub const DEFAULT_DENSE_CAP: usize = 1_000_000;

/// A canonical (lexicographically sorted, duplicate free) set of index tuples.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct IndexSet {
    dims: Vec<usize>,
    coords: Vec<usize>,
}

impl IndexSet {
    /// Builds a canonical index set from flat coordinates (`len * D` values).
    ///
    /// Returns the set together with `order`, where `order[r]` is the input row
    /// that landed at canonical position `r`.
    pub fn from_flat(dims: Vec<usize>, coords: Vec<usize>) -> Result<(Self, Vec<usize>)> {
        let d = dims.len();
        if d == 0 || dims.contains(&0) {
            return Err(Error::Shape(format!("dims must be positive, got {dims:?}")));
        }
        if !coords.len().is_multiple_of(d) {
            return Err(Error::Shape(format!(
                "{} coordinates is not a multiple of order {d}",
                coords.len()
            )));
        }
        let len = coords.len() / d;
        for r in 0..len {
            let idx = &coords[r * d..(r + 1) * d];
            if idx.iter().zip(&dims).any(|(&i, &n)| i >= n) {
                return Err(Error::IndexOutOfRange {
                    index: idx.to_vec(),
                    dims: dims.clone(),
                });
            }
        }
        let mut order: Vec<usize> = (0..len).collect();
        let already_sorted =
            (1..len).all(|r| coords[(r - 1) * d..r * d] < coords[r * d..(r + 1) * d]);
        if !already_sorted {
            order.sort_by(|&a, &b| coords[a * d..(a + 1) * d].cmp(&coords[b * d..(b + 1) * d]));
        }
        let mut sorted = Vec::with_capacity(coords.len());
        for &r in &order {
            sorted.extend_from_slice(&coords[r * d..(r + 1) * d]);
        }
        for r in 1..len {
            if sorted[(r - 1) * d..r * d] == sorted[r * d..(r + 1) * d] {
                return Err(Error::DuplicateIndex(sorted[r * d..(r + 1) * d].to_vec()));
            }
        }
        Ok((Self { dims, coords: sorted }, order))
    }

    /// Builds an index set from tuples, sorting them.
    pub fn from_tuples(dims: Vec<usize>, tuples: &[Vec<usize>]) -> Result<Self> {
        let d = dims.len();
        let mut coords = Vec::with_capacity(tuples.len() * d);
        for t in tuples {
            if t.len() != d {
                return Err(Error::Shape(format!("tuple {t:?} does not have order {d}")));
            }
            coords.extend_from_slice(t);
        }
        Ok(Self::from_flat(dims, coords)?.0)
    }

    /// Every cell of `dims`, in row-major order.
    pub fn full(dims: Vec<usize>) -> Result<Self> {
        let total = checked_product(&dims)?;
        let mut coords = Vec::with_capacity(total * dims.len());
        for flat in 0..total {
            coords.extend(unvectorize_index(flat, &dims)?);
        }
        Ok(Self { dims, coords })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Number of axes D.
    pub fn order(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn get(&self, row: usize) -> &[usize] {
        let d = self.dims.len();
        &self.coords[row * d..(row + 1) * d]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[usize]> + '_ {
        self.coords.chunks_exact(self.dims.len())
    }

    pub fn coords(&self) -> &[usize] {
        &self.coords
    }

    /// Canonical position of `idx`, if present.
    pub fn position(&self, idx: &[usize]) -> Option<usize> {
        let (mut lo, mut hi) = (0, self.len());
        while lo < hi {
            let mid = (lo + hi) / 2;
            match self.get(mid).cmp(idx) {
                std::cmp::Ordering::Less => lo = mid + 1,
                std::cmp::Ordering::Greater => hi = mid,
                std::cmp::Ordering::Equal => return Some(mid),
            }
        }
        None
    }

    /// Subset of rows (given as canonical positions, in increasing order).
    pub fn select(&self, rows: &[usize]) -> Self {
        let d = self.dims.len();
        let mut coords = Vec::with_capacity(rows.len() * d);
        for &r in rows {
            coords.extend_from_slice(self.get(r));
        }
        Self {
            dims: self.dims.clone(),
            coords,
        }
    }

    /// Groups indices by their coordinates on `fixed_axes`.
    pub fn groups(&self, fixed_axes: &[usize]) -> Result<AxisGroups> {
        let mut mask = 0usize;
        for &a in fixed_axes {
            if a >= self.order() {
                return Err(Error::InvalidArgument(format!(
                    "axis {a} out of range for order {}",
                    self.order()
                )));
            }
            mask |= 1 << a;
        }
        Ok(self.groups_by_mask(mask))
    }

    /// Like [`IndexSet::groups`] with the fixed axes given as a bit mask.
    pub fn groups_by_mask(&self, mask: usize) -> AxisGroups {
        let fixed: Vec<usize> = (0..self.order()).filter(|a| mask & (1 << a) != 0).collect();
        let key_of = |idx: &[usize]| -> u128 {
            fixed
                .iter()
                .fold(0u128, |acc, &a| acc * self.dims[a] as u128 + idx[a] as u128)
        };
        let row_keys: Vec<u128> = self.iter().map(key_of).collect();
        let mut keys = row_keys.clone();
        keys.sort_unstable();
        keys.dedup();
        let segment_of: Vec<usize> = row_keys
            .iter()
            .map(|k| keys.binary_search(k).expect("key collected above"))
            .collect();
        let mut sizes = vec![0usize; keys.len()];
        let mut group_keys = vec![Vec::new(); keys.len()];
        for (r, &g) in segment_of.iter().enumerate() {
            if sizes[g] == 0 {
                let idx = self.get(r);
                group_keys[g] = fixed.iter().map(|&a| idx[a]).collect();
            }
            sizes[g] += 1;
        }
        AxisGroups {
            fixed_axes: fixed,
            keys: group_keys,
            segment_of: Arc::new(segment_of),
            sizes,
        }
    }
}

/// A partition of an index set by the coordinates on a subset of axes.
///
/// With `fixed_axes = [0]` on a matrix this is the row grouping `R_n`; with
/// `[1]` the column grouping `C_m`; with `[]` a single global group.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AxisGroups {
    fixed_axes: Vec<usize>,
    keys: Vec<Vec<usize>>,
    segment_of: Arc<Vec<usize>>,
    sizes: Vec<usize>,
}

impl AxisGroups {
    /// Groups from explicit segment ids (each row's group), with no keys.
    pub fn from_segments(segment_of: Vec<usize>, num_groups: usize) -> Result<Self> {
        let mut sizes = vec![0usize; num_groups];
        for &g in &segment_of {
            if g >= num_groups {
                return Err(Error::InvalidArgument(format!(
                    "segment {g} out of range for {num_groups} groups"
                )));
            }
            sizes[g] += 1;
        }
        Ok(Self {
            fixed_axes: Vec::new(),
            keys: (0..num_groups).map(|g| vec![g]).collect(),
            segment_of: Arc::new(segment_of),
            sizes,
        })
    }

    pub fn fixed_axes(&self) -> &[usize] {
        &self.fixed_axes
    }

    pub fn num_groups(&self) -> usize {
        self.sizes.len()
    }

    /// Coordinates on the fixed axes shared by each group's members.
    pub fn keys(&self) -> &[Vec<usize>] {
        &self.keys
    }

    pub fn segment_of(&self) -> &Arc<Vec<usize>> {
        &self.segment_of
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn num_rows(&self) -> usize {
        self.segment_of.len()
    }

    /// Member rows of every group.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out: Vec<Vec<usize>> = self.sizes.iter().map(|&s| Vec::with_capacity(s)).collect();
        for (r, &g) in self.segment_of.iter().enumerate() {
            out[g].push(r);
        }
        out
    }

    /// Group whose key equals `key`, if any.
    pub fn find(&self, key: &[usize]) -> Option<usize> {
        self.keys.binary_search_by(|k| k.as_slice().cmp(key)).ok()
    }
}

/// A sparse exchangeable array: observed cells, each carrying `K` channels.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseTensor {
    index: Arc<IndexSet>,
    values: Array2<f64>,
}

impl SparseTensor {
    /// Builds a tensor from flat coordinates and per-row values, sorting rows
    /// into canonical order.
    pub fn new(dims: Vec<usize>, coords: Vec<usize>, values: Array2<f64>) -> Result<Self> {
        if values.nrows() == 0 {
            return Err(Error::Empty);
        }
        let (index, order) = IndexSet::from_flat(dims, coords)?;
        if index.len() != values.nrows() {
            return Err(Error::Shape(format!(
                "{} index rows but {} value rows",
                index.len(),
                values.nrows()
            )));
        }
        let values = if order.iter().enumerate().all(|(i, &o)| i == o) {
            values
        } else {
            values.select(Axis(0), &order)
        };
        Ok(Self {
            index: Arc::new(index),
            values,
        })
    }

    /// Attaches values to an existing canonical index set.
    pub fn with_values(index: Arc<IndexSet>, values: Array2<f64>) -> Result<Self> {
        if index.len() != values.nrows() {
            return Err(Error::Shape(format!(
                "{} indices but {} value rows",
                index.len(),
                values.nrows()
            )));
        }
        Ok(Self { index, values })
    }

    pub fn index(&self) -> &Arc<IndexSet> {
        &self.index
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn dims(&self) -> &[usize] {
        self.index.dims()
    }

    pub fn order(&self) -> usize {
        self.index.order()
    }

    pub fn channels(&self) -> usize {
        self.values.ncols()
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    /// Channel vector stored at `idx`, if observed.
    pub fn get(&self, idx: &[usize]) -> Option<ArrayView1<'_, f64>> {
        self.index.position(idx).map(|r| self.values.row(r))
    }

    /// Keeps only the given canonical rows (increasing order).
    pub fn select(&self, rows: &[usize]) -> Self {
        Self {
            index: Arc::new(self.index.select(rows)),
            values: self.values.select(Axis(0), rows),
        }
    }

    /// Same index set, new values.
    pub fn map_values(&self, values: Array2<f64>) -> Result<Self> {
        Self::with_values(self.index.clone(), values)
    }
}

/// Builds a canonical sparse tensor from `(index, channel vector)` entries.
pub fn build_sparse(dims: &[usize], entries: &[(Vec<usize>, Vec<f64>)]) -> Result<SparseTensor> {
    let first = entries.first().ok_or(Error::Empty)?;
    let k = first.1.len();
    let d = dims.len();
    let mut coords = Vec::with_capacity(entries.len() * d);
    let mut values = Array2::zeros((entries.len(), k));
    for (e, (idx, vals)) in entries.iter().enumerate() {
        if idx.len() != d {
            return Err(Error::Shape(format!("index {idx:?} does not have order {d}")));
        }
        if vals.len() != k {
            return Err(Error::RaggedChannels {
                expected: k,
                found: vals.len(),
                entry: e,
            });
        }
        coords.extend_from_slice(idx);
        values.row_mut(e).assign(&ArrayView1::from(vals.as_slice()));
    }
    SparseTensor::new(dims.to_vec(), coords, values)
}

/// Groups the tensor's indices by their coordinates on `fixed_axes`.
pub fn axis_groups(t: &SparseTensor, fixed_axes: &[usize]) -> Result<AxisGroups> {
    t.index().groups(fixed_axes)
}

/// One bijection per axis: an element of `S_{N1} x ... x S_{ND}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PermutationSpec {
    maps: Vec<Vec<usize>>,
}

impl PermutationSpec {
    pub fn new(maps: Vec<Vec<usize>>) -> Result<Self> {
        for (axis, map) in maps.iter().enumerate() {
            let mut seen = vec![false; map.len()];
            for &v in map {
                if v >= map.len() || std::mem::replace(&mut seen[v], true) {
                    return Err(Error::Permutation(format!(
                        "axis {axis} map {map:?} is not a bijection"
                    )));
                }
            }
        }
        Ok(Self { maps })
    }

    pub fn identity(dims: &[usize]) -> Self {
        Self {
            maps: dims.iter().map(|&n| (0..n).collect()).collect(),
        }
    }

    pub fn random<R: rand::Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Self {
        Self {
            maps: dims
                .iter()
                .map(|&n| {
                    let mut m: Vec<usize> = (0..n).collect();
                    m.shuffle(rng);
                    m
                })
                .collect(),
        }
    }

    pub fn maps(&self) -> &[Vec<usize>] {
        &self.maps
    }

    pub fn axis_sizes(&self) -> Vec<usize> {
        self.maps.iter().map(Vec::len).collect()
    }

    pub fn inverse(&self) -> Self {
        Self {
            maps: self
                .maps
                .iter()
                .map(|m| {
                    let mut inv = vec![0; m.len()];
                    for (i, &v) in m.iter().enumerate() {
                        inv[v] = i;
                    }
                    inv
                })
                .collect(),
        }
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        if self.axis_sizes() != other.axis_sizes() {
            return Err(Error::Permutation("axis sizes differ".into()));
        }
        Ok(Self {
            maps: self
                .maps
                .iter()
                .zip(&other.maps)
                .map(|(p, q)| q.iter().map(|&i| p[i]).collect())
                .collect(),
        })
    }

    pub fn apply_index(&self, idx: &[usize]) -> Vec<usize> {
        idx.iter().zip(&self.maps).map(|(&i, m)| m[i]).collect()
    }

    /// The induced permutation of the row-major flattened cells.
    pub fn flatten(&self) -> Vec<usize> {
        let dims = self.axis_sizes();
        let total: usize = dims.iter().product();
        (0..total)
            .map(|flat| {
                let idx = unvectorize_index(flat, &dims).expect("flat < total");
                vectorize_index(&self.apply_index(&idx), &dims).expect("image in range")
            })
            .collect()
    }
}

/// Moves every index `(n1..nD)` to `(p1(n1)..pD(nD))`, carrying its values.
pub fn apply_permutation(t: &SparseTensor, p: &PermutationSpec) -> Result<SparseTensor> {
    if p.axis_sizes() != t.dims() {
        return Err(Error::Permutation(format!(
            "permutation sizes {:?} do not match dims {:?}",
            p.axis_sizes(),
            t.dims()
        )));
    }
    let mut coords = Vec::with_capacity(t.index().coords().len());
    for idx in t.index().iter() {
        coords.extend(idx.iter().zip(p.maps()).map(|(&i, m)| m[i]));
    }
    SparseTensor::new(t.dims().to_vec(), coords, t.values().clone())
}

/// Row-major flat position of `idx` (last axis fastest).
pub fn vectorize_index(idx: &[usize], dims: &[usize]) -> Result<usize> {
    if idx.len() != dims.len() || idx.iter().zip(dims).any(|(&i, &n)| i >= n) {
        return Err(Error::IndexOutOfRange {
            index: idx.to_vec(),
            dims: dims.to_vec(),
        });
    }
    Ok(idx.iter().zip(dims).fold(0, |acc, (&i, &n)| acc * n + i))
}

/// Inverse of [`vectorize_index`].
pub fn unvectorize_index(flat: usize, dims: &[usize]) -> Result<Vec<usize>> {
    let total = checked_product(dims)?;
    if flat >= total {
        return Err(Error::IndexOutOfRange {
            index: vec![flat],
            dims: dims.to_vec(),
        });
    }
    let mut idx = vec![0; dims.len()];
    let mut rest = flat;
    for (slot, &n) in idx.iter_mut().zip(dims).rev() {
        *slot = rest % n;
        rest /= n;
    }
    Ok(idx)
}

fn checked_product(dims: &[usize]) -> Result<usize> {
    dims.iter()
        .try_fold(1usize, |acc, &n| acc.checked_mul(n))
        .ok_or_else(|| Error::Shape(format!("dims {dims:?} overflow")))
}

/// Dense form: one row per cell in row-major order, plus an observation mask.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    pub dims: Vec<usize>,
    pub values: Array2<f64>,
    pub mask: Vec<bool>,
}

pub fn to_dense(t: &SparseTensor) -> Result<DenseTensor> {
    to_dense_with_cap(t, DEFAULT_DENSE_CAP)
}

pub fn to_dense_with_cap(t: &SparseTensor, cap: usize) -> Result<DenseTensor> {
    let cells = checked_product(t.dims())?;
    if cells > cap {
        return Err(Error::DenseCap { cells, cap });
    }
    let mut values = Array2::zeros((cells, t.channels()));
    let mut mask = vec![false; cells];
    for (r, idx) in t.index().iter().enumerate() {
        let flat = vectorize_index(idx, t.dims())?;
        values.row_mut(flat).assign(&t.values().row(r));
        mask[flat] = true;
    }
    Ok(DenseTensor {
        dims: t.dims().to_vec(),
        values,
        mask,
    })
}

pub fn from_dense(dense: &DenseTensor) -> Result<SparseTensor> {
    let rows: Vec<usize> = (0..dense.mask.len()).filter(|&f| dense.mask[f]).collect();
    if rows.is_empty() {
        return Err(Error::Empty);
    }
    let mut coords = Vec::with_capacity(rows.len() * dense.dims.len());
    for &f in &rows {
        coords.extend(unvectorize_index(f, &dense.dims)?);
    }
    SparseTensor::new(dense.dims.clone(), coords, dense.values.select(Axis(0), &rows))
}

/// Fully observed tensor from row-major cell values.
pub fn full_tensor(dims: &[usize], values: Array2<f64>) -> Result<SparseTensor> {
    let index = IndexSet::full(dims.to_vec())?;
    SparseTensor::with_values(Arc::new(index), values)
}

/// Random sparse tensor: each cell observed with probability `density`
/// (at least one cell), values uniform in `[-1, 1)`.
pub fn random_sparse<R: rand::Rng + ?Sized>(
    dims: &[usize],
    channels: usize,
    density: f64,
    rng: &mut R,
) -> Result<SparseTensor> {
    let total = checked_product(dims)?;
    let mut cells: Vec<usize> = (0..total).filter(|_| rng.random::<f64>() < density).collect();
    if cells.is_empty() {
        cells.push(rng.random_range(0..total));
    }
    let mut coords = Vec::with_capacity(cells.len() * dims.len());
    for &c in &cells {
        coords.extend(unvectorize_index(c, dims)?);
    }
    let values = Array2::from_shape_fn((cells.len(), channels), |_| rng.random_range(-1.0..1.0));
    SparseTensor::new(dims.to_vec(), coords, values)
}
