//! Exchangeable matrix and tensor layers.
//!
//! A layer on a D-dimensional sparse tensor holds one `K x O` weight block
//! `w_S` per subset `S` of the axes. Subsets are encoded as bit masks: bit
//! `i` set means axis `i` is held fixed, so the block for mask `S` mixes the
//! input averaged over the axes *not* in `S`. For a matrix that gives
//!
//! | mask   | pooled over        | classical name |
//! |--------|--------------------|----------------|
//! | `0b11` | nothing            | `w1`           |
//! | `0b10` | rows (column mean) | `w2`           |
//! | `0b01` | columns (row mean) | `w3`           |
//! | `0b00` | everything         | `w4`           |
//!
//! The output at every observed index is
//! `σ(Σ_S pool_S(X) · w_S + bias)` where pooling only ever sees observed
//! entries.

use std::sync::Arc;

use ndarray::{Array1, Array2, Axis};
use rand::Rng as _;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Activation, Bindings, Graph, NodeId, PoolMode};
use crate::rng::{seeded, Rng};
use crate::tensor::{AxisGroups, IndexSet, SparseTensor};
use crate::{Error, Result};

pub const MASK_W1: usize = 0b11;
pub const MASK_W2: usize = 0b10;
pub const MASK_W3: usize = 0b01;
pub const MASK_W4: usize = 0b00;

/// Tied weights of one exchangeable layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExchLayerParams {
    order: usize,
    slots: Vec<Array2<f64>>,
    slot_of: Vec<usize>,
    bias: Array1<f64>,
    pub pooling: PoolMode,
    pub activation: Activation,
    tied: bool,
}

impl ExchLayerParams {
    /// All-zero layer. `tied` shares the row and column blocks of a matrix
    /// layer (jointly exchangeable inputs) and requires `order == 2`.
    pub fn zeros(order: usize, k: usize, o: usize, activation: Activation, tied: bool) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidArgument("layer order must be positive".into()));
        }
        if tied && order != 2 {
            return Err(Error::InvalidArgument("row/column tying needs a matrix layer".into()));
        }
        let masks = 1usize << order;
        let slot_of: Vec<usize> = if tied {
            vec![0, 1, 1, 2]
        } else {
            (0..masks).collect()
        };
        let nslots = slot_of.iter().max().map_or(0, |m| m + 1);
        Ok(Self {
            order,
            slots: vec![Array2::zeros((k, o)); nslots],
            slot_of,
            bias: Array1::zeros(o),
            pooling: PoolMode::Mean,
            activation,
            tied,
        })
    }

    /// Uniform Glorot-style initialisation scaled down by the number of blocks.
    pub fn random(
        order: usize,
        k: usize,
        o: usize,
        activation: Activation,
        tied: bool,
        rng: &mut Rng,
    ) -> Result<Self> {
        let mut p = Self::zeros(order, k, o, activation, tied)?;
        let limit = (6.0 / (k + o) as f64).sqrt() / ((1usize << order) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit).expect("finite bounds");
        for slot in &mut p.slots {
            slot.mapv_inplace(|_| dist.sample(rng));
        }
        Ok(p)
    }

    /// Untied layer from one block per subset mask.
    pub fn from_blocks(blocks: Vec<Array2<f64>>, bias: Array1<f64>, activation: Activation) -> Result<Self> {
        let masks = blocks.len();
        if !masks.is_power_of_two() || masks < 2 {
            return Err(Error::InvalidArgument(format!(
                "{masks} blocks is not 2^D for any D >= 1"
            )));
        }
        let (k, o) = blocks[0].dim();
        if blocks.iter().any(|b| b.dim() != (k, o)) || bias.len() != o {
            return Err(Error::Shape("blocks and bias disagree on shape".into()));
        }
        Ok(Self {
            order: masks.trailing_zeros() as usize,
            slots: blocks,
            slot_of: (0..masks).collect(),
            bias,
            pooling: PoolMode::Mean,
            activation,
            tied: false,
        })
    }

    /// Matrix layer from the four classical blocks.
    pub fn matrix(
        w1: Array2<f64>,
        w2: Array2<f64>,
        w3: Array2<f64>,
        w4: Array2<f64>,
        bias: Array1<f64>,
        activation: Activation,
    ) -> Result<Self> {
        Self::from_blocks(vec![w4, w3, w2, w1], bias, activation)
    }

    /// Matrix layer with `w2 = w3` (jointly exchangeable).
    pub fn matrix_tied(
        w1: Array2<f64>,
        w23: Array2<f64>,
        w4: Array2<f64>,
        bias: Array1<f64>,
        activation: Activation,
    ) -> Result<Self> {
        let (k, o) = w1.dim();
        let mut p = Self::zeros(2, k, o, activation, true)?;
        if w23.dim() != (k, o) || w4.dim() != (k, o) || bias.len() != o {
            return Err(Error::Shape("blocks and bias disagree on shape".into()));
        }
        p.slots = vec![w4, w23, w1];
        p.bias = bias;
        Ok(p)
    }

    pub fn with_pooling(mut self, pooling: PoolMode) -> Self {
        self.pooling = pooling;
        self
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn in_channels(&self) -> usize {
        self.slots[0].nrows()
    }

    pub fn out_channels(&self) -> usize {
        self.slots[0].ncols()
    }

    pub fn is_tied(&self) -> bool {
        self.tied
    }

    /// Number of subset blocks, `2^D` (tied blocks counted once per subset).
    pub fn num_blocks(&self) -> usize {
        self.slot_of.len()
    }

    pub fn block(&self, mask: usize) -> &Array2<f64> {
        &self.slots[self.slot_of[mask]]
    }

    /// Distinct weight arrays (tied blocks appear once).
    pub fn slots(&self) -> &[Array2<f64>] {
        &self.slots
    }

    pub fn slots_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.slots
    }

    pub fn slot_of(&self, mask: usize) -> usize {
        self.slot_of[mask]
    }

    pub fn bias(&self) -> &Array1<f64> {
        &self.bias
    }

    /// Both at once, for optimizers.
    pub fn slots_and_bias_mut(&mut self) -> (&mut [Array2<f64>], &mut Array1<f64>) {
        (&mut self.slots, &mut self.bias)
    }

    pub fn bias_mut(&mut self) -> &mut Array1<f64> {
        &mut self.bias
    }

    /// Trainable scalars: `slots · K · O + O`.
    pub fn num_parameters(&self) -> usize {
        self.slots.len() * self.in_channels() * self.out_channels() + self.out_channels()
    }

    /// Adds parameter nodes for this layer and binds their current values.
    pub fn bind(&self, graph: &mut Graph, bindings: &mut Bindings) -> LayerNodes {
        let (k, o) = (self.in_channels(), self.out_channels());
        let slots = self
            .slots
            .iter()
            .map(|w| {
                let id = graph.parameter(k, o);
                bindings.bind(id, w.clone());
                id
            })
            .collect();
        let bias = graph.parameter(1, o);
        bindings.bind(bias, self.bias.clone().insert_axis(Axis(0)));
        LayerNodes { slots, bias }
    }
}

/// Parameter nodes of one layer inside a [`Graph`].
#[derive(Debug, Clone)]
pub struct LayerNodes {
    pub slots: Vec<NodeId>,
    pub bias: NodeId,
}

/// Axis groupings of one index set, for every subset mask.
#[derive(Debug, Clone)]
pub struct PoolingContext {
    index: Arc<IndexSet>,
    groups: Vec<Arc<AxisGroups>>,
}

impl PoolingContext {
    pub fn new(index: Arc<IndexSet>) -> Self {
        let masks = 1usize << index.order();
        let groups = (0..masks).map(|m| Arc::new(index.groups_by_mask(m))).collect();
        Self { index, groups }
    }

    pub fn index(&self) -> &Arc<IndexSet> {
        &self.index
    }

    /// Grouping that keeps the axes in `mask` fixed.
    pub fn groups(&self, mask: usize) -> &Arc<AxisGroups> {
        &self.groups[mask]
    }

    pub fn full_mask(&self) -> usize {
        (1 << self.index.order()) - 1
    }
}

/// Appends one exchangeable layer to `graph`; returns `(pre-activation, output)`.
pub fn layer_graph(
    graph: &mut Graph,
    x: NodeId,
    ctx: &PoolingContext,
    params: &ExchLayerParams,
    nodes: &LayerNodes,
) -> Result<(NodeId, NodeId)> {
    if params.order() != ctx.index().order() {
        return Err(Error::InvalidArgument(format!(
            "layer has {} blocks but the input has order {}",
            params.num_blocks(),
            ctx.index().order()
        )));
    }
    let (rows, k) = graph.shape(x);
    if rows != ctx.index().len() || k != params.in_channels() {
        return Err(Error::Shape(format!(
            "input {rows}x{k}, layer expects {}x{}",
            ctx.index().len(),
            params.in_channels()
        )));
    }
    let full = ctx.full_mask();
    let mut terms = Vec::with_capacity(params.num_blocks());
    for mask in (0..=full).rev() {
        let w = nodes.slots[params.slot_of(mask)];
        let term = if mask == full {
            graph.channel_mix(x, w, Some(nodes.bias))?
        } else {
            let groups = ctx.groups(mask).clone();
            let pooled = graph.segment_pool(x, groups.clone(), params.pooling)?;
            let mixed = graph.channel_mix(pooled, w, None)?;
            graph.gather_broadcast(mixed, &groups)?
        };
        terms.push(term);
    }
    let pre = graph.add(&terms)?;
    let out = graph.activation(pre, params.activation)?;
    Ok((pre, out))
}

/// Exchangeable layer on a sparse tensor of any order.
pub fn exchangeable_tensor_layer(x: &SparseTensor, params: &ExchLayerParams) -> Result<SparseTensor> {
    if params.num_blocks() != 1 << x.order() {
        return Err(Error::InvalidArgument(format!(
            "{} blocks for an order-{} input, expected {}",
            params.num_blocks(),
            x.order(),
            1usize << x.order()
        )));
    }
    if params.in_channels() != x.channels() {
        return Err(Error::Shape(format!(
            "layer expects {} channels, input has {}",
            params.in_channels(),
            x.channels()
        )));
    }
    let ctx = PoolingContext::new(x.index().clone());
    let mut g = Graph::new();
    let mut b = Bindings::new();
    let input = g.input(x.len(), x.channels());
    b.bind(input, x.values().clone());
    let nodes = params.bind(&mut g, &mut b);
    let (_, out) = layer_graph(&mut g, input, &ctx, params, &nodes)?;
    let values = g.forward(&b)?;
    x.map_values(values.get(out).clone())
}

/// Exchangeable layer on a sparse matrix (order 2).
pub fn exchangeable_matrix_layer(x: &SparseTensor, params: &ExchLayerParams) -> Result<SparseTensor> {
    if x.order() != 2 {
        return Err(Error::InvalidArgument(format!("matrix layer on an order-{} tensor", x.order())));
    }
    exchangeable_tensor_layer(x, params)
}

/// Applies a stack of layers in sequence.
pub fn apply_stack(x: &SparseTensor, layers: &[ExchLayerParams]) -> Result<SparseTensor> {
    layers
        .iter()
        .try_fold(x.clone(), |acc, layer| exchangeable_tensor_layer(&acc, layer))
}

/// Appends row and column feature tables as extra channels at every observed cell.
pub fn broadcast_side_features(
    x: &SparseTensor,
    row_features: Option<&Array2<f64>>,
    col_features: Option<&Array2<f64>>,
) -> Result<SparseTensor> {
    if x.order() != 2 {
        return Err(Error::InvalidArgument("side features need a matrix".into()));
    }
    let mut parts = vec![x.values().clone()];
    for (axis, table) in [(0usize, row_features), (1, col_features)] {
        let Some(table) = table else { continue };
        if table.nrows() != x.dims()[axis] {
            return Err(Error::Shape(format!(
                "feature table has {} rows for axis {axis} of size {}",
                table.nrows(),
                x.dims()[axis]
            )));
        }
        let rows: Vec<usize> = x.index().iter().map(|idx| idx[axis]).collect();
        parts.push(table.select(Axis(0), &rows));
    }
    let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
    let values = ndarray::concatenate(Axis(1), &views).map_err(|e| Error::Shape(e.to_string()))?;
    x.map_values(values)
}

/// Per-channel multipliers for channel dropout: `0` for a dropped channel,
/// `1/(1-rate)` for a kept one.
pub fn dropout_multipliers(channels: usize, rate: f64, rng: &mut Rng) -> Result<(Vec<f64>, Vec<bool>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidArgument(format!("dropout rate {rate} outside [0, 1)")));
    }
    let keep: Vec<bool> = (0..channels)
        .map(|_| rate == 0.0 || rng.random::<f64>() >= rate)
        .collect();
    let scale = 1.0 / (1.0 - rate);
    let mult = keep.iter().map(|&k| if k { scale } else { 0.0 }).collect();
    Ok((mult, keep))
}

/// Drops whole channels across every observed entry at once.
pub fn channel_dropout(x: &SparseTensor, rate: f64, seed: u64) -> Result<(SparseTensor, Vec<bool>)> {
    let (mult, keep) = dropout_multipliers(x.channels(), rate, &mut seeded(seed))?;
    if rate == 0.0 {
        return Ok((x.clone(), keep));
    }
    let values = x.values() * &Array1::from(mult);
    Ok((x.map_values(values)?, keep))
}

/// Row and column factors of a matrix, with cold rows/columns flagged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorPair {
    pub rows: Array2<f64>,
    pub cols: Array2<f64>,
    pub row_observed: Vec<bool>,
    pub col_observed: Vec<bool>,
    /// Mean over all observed entries; the fallback for cold rows/columns.
    pub global: Array1<f64>,
}

/// What to do when a row or column has no factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ColdPolicy {
    #[default]
    Reject,
    ImputeGlobalMean,
}

impl FactorPair {
    pub fn row(&self, n: usize) -> Result<ndarray::ArrayView1<'_, f64>> {
        match self.row_observed.get(n) {
            Some(true) => Ok(self.rows.row(n)),
            _ => Err(Error::Cold { axis: "row", index: n }),
        }
    }

    pub fn col(&self, m: usize) -> Result<ndarray::ArrayView1<'_, f64>> {
        match self.col_observed.get(m) {
            Some(true) => Ok(self.cols.row(m)),
            _ => Err(Error::Cold { axis: "column", index: m }),
        }
    }

    pub fn channels(&self) -> usize {
        self.rows.ncols()
    }
}

/// Averages a matrix's channel vectors along rows (`Z_N`) and columns (`Z_M`).
pub fn pool_to_factors(y: &SparseTensor) -> Result<FactorPair> {
    if y.order() != 2 {
        return Err(Error::InvalidArgument("factors need a matrix".into()));
    }
    let k = y.channels();
    let (n, m) = (y.dims()[0], y.dims()[1]);
    let mut rows = Array2::zeros((n, k));
    let mut cols = Array2::zeros((m, k));
    let mut row_count = vec![0usize; n];
    let mut col_count = vec![0usize; m];
    for (idx, v) in y.index().iter().zip(y.values().rows()) {
        let mut r = rows.row_mut(idx[0]);
        r += &v;
        let mut c = cols.row_mut(idx[1]);
        c += &v;
        row_count[idx[0]] += 1;
        col_count[idx[1]] += 1;
    }
    for (mut r, &c) in rows.rows_mut().into_iter().zip(&row_count) {
        if c > 0 {
            r /= c as f64;
        }
    }
    for (mut r, &c) in cols.rows_mut().into_iter().zip(&col_count) {
        if c > 0 {
            r /= c as f64;
        }
    }
    Ok(FactorPair {
        rows,
        cols,
        row_observed: row_count.iter().map(|&c| c > 0).collect(),
        col_observed: col_count.iter().map(|&c| c > 0).collect(),
        global: y.values().mean_axis(Axis(0)).expect("non-empty tensor"),
    })
}

/// Places `[Z_N[n]; Z_M[m]]` at every `(n, m)` of `index`.
pub fn broadcast_factors(f: &FactorPair, index: &Arc<IndexSet>, policy: ColdPolicy) -> Result<SparseTensor> {
    if index.order() != 2 {
        return Err(Error::InvalidArgument("factors broadcast onto a matrix".into()));
    }
    let (kn, km) = (f.rows.ncols(), f.cols.ncols());
    let mut values = Array2::zeros((index.len(), kn + km));
    for (r, idx) in index.iter().enumerate() {
        let (n, m) = (idx[0], idx[1]);
        if n >= f.rows.nrows() || m >= f.cols.nrows() {
            return Err(Error::IndexOutOfRange {
                index: idx.to_vec(),
                dims: vec![f.rows.nrows(), f.cols.nrows()],
            });
        }
        let row = match (f.row(n), policy) {
            (Ok(v), _) => v,
            (Err(_), ColdPolicy::ImputeGlobalMean) => f.global.view(),
            (Err(e), ColdPolicy::Reject) => return Err(e),
        };
        let col = match (f.col(m), policy) {
            (Ok(v), _) => v,
            (Err(_), ColdPolicy::ImputeGlobalMean) => f.global.view(),
            (Err(e), ColdPolicy::Reject) => return Err(e),
        };
        values.slice_mut(ndarray::s![r, ..kn]).assign(&row);
        values.slice_mut(ndarray::s![r, kn..]).assign(&col);
    }
    SparseTensor::with_values(index.clone(), values)
}
