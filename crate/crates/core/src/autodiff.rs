//! A minimal reverse-mode differentiable graph.
//!
//! Nodes hold `rows x channels` matrices. The graph is built once, then
//! evaluated with [`Graph::forward`] against a set of [`Bindings`] for its
//! input and parameter nodes, and differentiated with [`Graph::backward`].
//! Randomness never lives in the graph: dropout takes a precomputed mask.

use std::collections::HashMap;
use std::sync::Arc;

use ndarray::{s, Array2, ArrayView1, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::tensor::AxisGroups;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Element-wise (or, for softmax, row-wise over channels) nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Activation {
    Identity,
    Sigmoid,
    LeakyRelu { slope: f64 },
    Softmax,
}

impl Activation {
    pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;

    pub fn leaky_relu() -> Self {
        Activation::LeakyRelu {
            slope: Self::DEFAULT_LEAKY_SLOPE,
        }
    }

    pub fn apply(self, x: &Array2<f64>) -> Array2<f64> {
        match self {
            Activation::Identity => x.clone(),
            Activation::Sigmoid => x.mapv(sigmoid),
            Activation::LeakyRelu { slope } => x.mapv(|v| if v > 0.0 { v } else { slope * v }),
            Activation::Softmax => softmax_rows(x),
        }
    }
}

/// How a group of rows is reduced to one vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PoolMode {
    #[default]
    Mean,
    Sum,
    Max,
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub fn softmax_rows(x: &Array2<f64>) -> Array2<f64> {
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

/// Reduces the rows of `values` within each group.
pub fn segment_pool(values: &Array2<f64>, groups: &AxisGroups, mode: PoolMode) -> Result<Array2<f64>> {
    if values.nrows() != groups.num_rows() {
        return Err(Error::Shape(format!(
            "{} value rows for {} grouped rows",
            values.nrows(),
            groups.num_rows()
        )));
    }
    if let Some(g) = groups.sizes().iter().position(|&s| s == 0) {
        return Err(Error::EmptyGroup(g));
    }
    let k = values.ncols();
    let init = if mode == PoolMode::Max { f64::NEG_INFINITY } else { 0.0 };
    let mut out = Array2::from_elem((groups.num_groups(), k), init);
    for (row, &g) in values.rows().into_iter().zip(groups.segment_of().iter()) {
        let mut acc = out.row_mut(g);
        match mode {
            PoolMode::Max => Zip::from(&mut acc).and(&row).for_each(|a, &v| {
                if v > *a {
                    *a = v
                }
            }),
            _ => acc += &row,
        }
    }
    if mode == PoolMode::Mean {
        for (mut row, &size) in out.rows_mut().into_iter().zip(groups.sizes()) {
            row /= size as f64;
        }
    }
    Ok(out)
}

/// Copies each group's vector back onto every member row.
pub fn gather_broadcast(group_values: &Array2<f64>, groups: &AxisGroups) -> Result<Array2<f64>> {
    gather_rows(group_values, groups.segment_of())
}

fn gather_rows(values: &Array2<f64>, index: &[usize]) -> Result<Array2<f64>> {
    if let Some(&bad) = index.iter().find(|&&i| i >= values.nrows()) {
        return Err(Error::Shape(format!(
            "row {bad} missing from a table of {} rows",
            values.nrows()
        )));
    }
    Ok(values.select(Axis(0), index))
}

/// Per-row affine map across channels: `values · weights + bias`.
pub fn channel_mix(
    values: &Array2<f64>,
    weights: &Array2<f64>,
    bias: Option<ArrayView1<'_, f64>>,
) -> Result<Array2<f64>> {
    if values.ncols() != weights.nrows() {
        return Err(Error::Shape(format!(
            "{} channels against a {}x{} weight",
            values.ncols(),
            weights.nrows(),
            weights.ncols()
        )));
    }
    let mut out = values.dot(weights);
    if let Some(b) = bias {
        if b.len() != weights.ncols() {
            return Err(Error::Shape(format!(
                "bias of length {} for {} outputs",
                b.len(),
                weights.ncols()
            )));
        }
        out += &b;
    }
    Ok(out)
}

#[derive(Debug, Clone)]
enum Op {
    Input,
    Parameter,
    SegmentPool {
        x: NodeId,
        groups: Arc<AxisGroups>,
        mode: PoolMode,
    },
    Gather {
        x: NodeId,
        index: Arc<Vec<usize>>,
    },
    ChannelMix {
        x: NodeId,
        weight: NodeId,
        bias: Option<NodeId>,
    },
    Activation {
        x: NodeId,
        kind: Activation,
    },
    Add(Vec<NodeId>),
    Scale {
        x: NodeId,
        factor: f64,
    },
    Dropout {
        x: NodeId,
        mask: Arc<Vec<f64>>,
    },
    ConcatChannels(Vec<NodeId>),
    StackRows(Vec<NodeId>),
    SoftmaxCrossEntropy {
        logits: NodeId,
        targets: Arc<Array2<f64>>,
        rows: Arc<Vec<usize>>,
    },
    MeanSquareError {
        x: NodeId,
        targets: Arc<Array2<f64>>,
        rows: Arc<Vec<usize>>,
    },
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    shape: (usize, usize),
}

/// Values bound to input and parameter nodes for one evaluation.
#[derive(Debug, Default, Clone)]
pub struct Bindings {
    values: HashMap<NodeId, Array2<f64>>,
}

impl Bindings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bind(&mut self, node: NodeId, value: Array2<f64>) -> &mut Self {
        self.values.insert(node, value);
        self
    }
}

/// Forward values of every node.
#[derive(Debug, Clone)]
pub struct Values {
    values: Vec<Array2<f64>>,
}

impl Values {
    pub fn get(&self, node: NodeId) -> &Array2<f64> {
        &self.values[node.0]
    }

    pub fn scalar(&self, node: NodeId) -> f64 {
        self.values[node.0][[0, 0]]
    }
}

/// Gradients of a scalar loss with respect to input and parameter nodes.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: HashMap<NodeId, Array2<f64>>,
}

impl Gradients {
    pub fn get(&self, node: NodeId) -> Option<&Array2<f64>> {
        self.grads.get(&node)
    }

    pub fn take(&mut self, node: NodeId) -> Option<Array2<f64>> {
        self.grads.remove(&node)
    }
}

/// An acyclic graph; node ids are issued in topological order.
#[derive(Debug, Clone, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn shape(&self, node: NodeId) -> (usize, usize) {
        self.nodes[node.0].shape
    }

    fn push(&mut self, op: Op, shape: (usize, usize)) -> NodeId {
        self.nodes.push(Node { op, shape });
        NodeId(self.nodes.len() - 1)
    }

    fn check(&self, node: NodeId) -> Result<(usize, usize)> {
        self.nodes
            .get(node.0)
            .map(|n| n.shape)
            .ok_or_else(|| Error::Graph {
                node: node.0,
                reason: "unknown operand".into(),
            })
    }

    fn fail<T>(&self, reason: String) -> Result<T> {
        Err(Error::Graph {
            node: self.nodes.len(),
            reason,
        })
    }

    pub fn input(&mut self, rows: usize, cols: usize) -> NodeId {
        self.push(Op::Input, (rows, cols))
    }

    pub fn parameter(&mut self, rows: usize, cols: usize) -> NodeId {
        self.push(Op::Parameter, (rows, cols))
    }

    pub fn segment_pool(&mut self, x: NodeId, groups: Arc<AxisGroups>, mode: PoolMode) -> Result<NodeId> {
        let (rows, k) = self.check(x)?;
        if rows != groups.num_rows() {
            return self.fail(format!("{rows} rows pooled by {} grouped rows", groups.num_rows()));
        }
        if let Some(g) = groups.sizes().iter().position(|&s| s == 0) {
            return Err(Error::EmptyGroup(g));
        }
        let shape = (groups.num_groups(), k);
        Ok(self.push(Op::SegmentPool { x, groups, mode }, shape))
    }

    pub fn gather_broadcast(&mut self, x: NodeId, groups: &AxisGroups) -> Result<NodeId> {
        self.gather_rows(x, groups.segment_of().clone())
    }

    /// Output row `r` is input row `index[r]`.
    pub fn gather_rows(&mut self, x: NodeId, index: Arc<Vec<usize>>) -> Result<NodeId> {
        let (rows, k) = self.check(x)?;
        if let Some(&bad) = index.iter().find(|&&i| i >= rows) {
            return self.fail(format!("gather of row {bad} from {rows} rows"));
        }
        let shape = (index.len(), k);
        Ok(self.push(Op::Gather { x, index }, shape))
    }

    pub fn channel_mix(&mut self, x: NodeId, weight: NodeId, bias: Option<NodeId>) -> Result<NodeId> {
        let (rows, k) = self.check(x)?;
        let (wk, o) = self.check(weight)?;
        if wk != k {
            return self.fail(format!("{k} channels against a {wk}x{o} weight"));
        }
        if let Some(b) = bias {
            let bs = self.check(b)?;
            if bs != (1, o) {
                return self.fail(format!("bias shape {bs:?}, expected (1, {o})"));
            }
        }
        Ok(self.push(Op::ChannelMix { x, weight, bias }, (rows, o)))
    }

    pub fn activation(&mut self, x: NodeId, kind: Activation) -> Result<NodeId> {
        let shape = self.check(x)?;
        Ok(self.push(Op::Activation { x, kind }, shape))
    }

    pub fn add(&mut self, terms: &[NodeId]) -> Result<NodeId> {
        let first = *terms.first().ok_or(Error::Empty)?;
        let shape = self.check(first)?;
        for &t in terms {
            if self.check(t)? != shape {
                return self.fail(format!("add of {:?} and {shape:?}", self.shape(t)));
            }
        }
        Ok(self.push(Op::Add(terms.to_vec()), shape))
    }

    pub fn scale(&mut self, x: NodeId, factor: f64) -> Result<NodeId> {
        let shape = self.check(x)?;
        Ok(self.push(Op::Scale { x, factor }, shape))
    }

    /// Multiplies each channel by a fixed factor (0 for dropped channels).
    pub fn dropout(&mut self, x: NodeId, mask: Vec<f64>) -> Result<NodeId> {
        let shape = self.check(x)?;
        if mask.len() != shape.1 {
            return self.fail(format!("mask of {} for {} channels", mask.len(), shape.1));
        }
        Ok(self.push(Op::Dropout { x, mask: Arc::new(mask) }, shape))
    }

    pub fn concat_channels(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let first = *parts.first().ok_or(Error::Empty)?;
        let rows = self.check(first)?.0;
        let mut cols = 0;
        for &p in parts {
            let (r, c) = self.check(p)?;
            if r != rows {
                return self.fail(format!("concat of {r} and {rows} rows"));
            }
            cols += c;
        }
        Ok(self.push(Op::ConcatChannels(parts.to_vec()), (rows, cols)))
    }

    pub fn stack_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let first = *parts.first().ok_or(Error::Empty)?;
        let cols = self.check(first)?.1;
        let mut rows = 0;
        for &p in parts {
            let (r, c) = self.check(p)?;
            if c != cols {
                return self.fail(format!("stack of {c} and {cols} channels"));
            }
            rows += r;
        }
        Ok(self.push(Op::StackRows(parts.to_vec()), (rows, cols)))
    }

    /// Mean over `rows` of `-Σ_k t_k log softmax(logits)_k`; a 1x1 node.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: NodeId,
        targets: Array2<f64>,
        rows: Vec<usize>,
    ) -> Result<NodeId> {
        let (n, k) = self.check(logits)?;
        if targets.dim() != (rows.len(), k) {
            return self.fail(format!("targets {:?} for {} rows of {k}", targets.dim(), rows.len()));
        }
        if rows.is_empty() || rows.iter().any(|&r| r >= n) {
            return self.fail("loss rows empty or out of range".into());
        }
        Ok(self.push(
            Op::SoftmaxCrossEntropy {
                logits,
                targets: Arc::new(targets),
                rows: Arc::new(rows),
            },
            (1, 1),
        ))
    }

    /// Mean over `rows` and channels of the squared error; a 1x1 node.
    pub fn mean_square_error(&mut self, x: NodeId, targets: Array2<f64>, rows: Vec<usize>) -> Result<NodeId> {
        let (n, k) = self.check(x)?;
        if targets.dim() != (rows.len(), k) {
            return self.fail(format!("targets {:?} for {} rows of {k}", targets.dim(), rows.len()));
        }
        if rows.is_empty() || rows.iter().any(|&r| r >= n) {
            return self.fail("loss rows empty or out of range".into());
        }
        Ok(self.push(
            Op::MeanSquareError {
                x,
                targets: Arc::new(targets),
                rows: Arc::new(rows),
            },
            (1, 1),
        ))
    }

    /// Evaluates every node in topological order.
    pub fn forward(&self, bindings: &Bindings) -> Result<Values> {
        let mut values: Vec<Array2<f64>> = Vec::with_capacity(self.nodes.len());
        for (id, node) in self.nodes.iter().enumerate() {
            let v = |n: &NodeId| &values[n.0];
            let out = match &node.op {
                Op::Input | Op::Parameter => {
                    let bound = bindings.values.get(&NodeId(id)).ok_or_else(|| Error::Graph {
                        node: id,
                        reason: "unbound".into(),
                    })?;
                    if bound.dim() != node.shape {
                        return Err(Error::Graph {
                            node: id,
                            reason: format!("bound {:?}, declared {:?}", bound.dim(), node.shape),
                        });
                    }
                    bound.clone()
                }
                Op::SegmentPool { x, groups, mode } => segment_pool(v(x), groups, *mode)?,
                Op::Gather { x, index } => gather_rows(v(x), index)?,
                Op::ChannelMix { x, weight, bias } => {
                    channel_mix(v(x), v(weight), bias.map(|b| values[b.0].row(0)))?
                }
                Op::Activation { x, kind } => kind.apply(v(x)),
                Op::Add(terms) => {
                    let mut acc = v(&terms[0]).clone();
                    for t in &terms[1..] {
                        acc += v(t);
                    }
                    acc
                }
                Op::Scale { x, factor } => v(x) * *factor,
                Op::Dropout { x, mask } => v(x) * &ArrayView1::from(mask.as_slice()),
                Op::ConcatChannels(parts) => {
                    let views: Vec<_> = parts.iter().map(|p| v(p).view()).collect();
                    ndarray::concatenate(Axis(1), &views).map_err(|e| Error::Shape(e.to_string()))?
                }
                Op::StackRows(parts) => {
                    let views: Vec<_> = parts.iter().map(|p| v(p).view()).collect();
                    ndarray::concatenate(Axis(0), &views).map_err(|e| Error::Shape(e.to_string()))?
                }
                Op::SoftmaxCrossEntropy { logits, targets, rows } => {
                    let z = v(logits);
                    let mut total = 0.0;
                    for (t_row, &r) in targets.rows().into_iter().zip(rows.iter()) {
                        let zr = z.row(r);
                        let max = zr.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                        let lse = max + zr.mapv(|q| (q - max).exp()).sum().ln();
                        total += t_row.iter().zip(zr.iter()).map(|(&t, &q)| t * (lse - q)).sum::<f64>();
                    }
                    Array2::from_elem((1, 1), total / rows.len() as f64)
                }
                Op::MeanSquareError { x, targets, rows } => {
                    let xv = v(x);
                    let mut total = 0.0;
                    for (t_row, &r) in targets.rows().into_iter().zip(rows.iter()) {
                        total += t_row.iter().zip(xv.row(r).iter()).map(|(&t, &q)| (q - t).powi(2)).sum::<f64>();
                    }
                    Array2::from_elem((1, 1), total / (rows.len() * targets.ncols()) as f64)
                }
            };
            values.push(out);
        }
        Ok(Values { values })
    }

    /// Reverse accumulation from a scalar `loss` node.
    pub fn backward(&self, values: &Values, loss: NodeId) -> Result<Gradients> {
        if self.shape(loss) != (1, 1) {
            return Err(Error::Graph {
                node: loss.0,
                reason: format!("loss must be scalar, has shape {:?}", self.shape(loss)),
            });
        }
        let mut grads: Vec<Option<Array2<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Array2::ones((1, 1)));

        fn accumulate(grads: &mut [Option<Array2<f64>>], node: NodeId, g: Array2<f64>) {
            match &mut grads[node.0] {
                Some(acc) => *acc += &g,
                slot => *slot = Some(g),
            }
        }

        for id in (0..=loss.0).rev() {
            let Some(dy) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            match &node.op {
                Op::Input | Op::Parameter => {
                    grads[id] = Some(dy);
                }
                Op::SegmentPool { x, groups, mode } => {
                    let xv = values.get(*x);
                    let seg = groups.segment_of();
                    let mut dx = Array2::zeros(xv.dim());
                    match mode {
                        PoolMode::Sum => dx.assign(&dy.select(Axis(0), seg)),
                        PoolMode::Mean => {
                            for (mut row, &g) in dx.rows_mut().into_iter().zip(seg.iter()) {
                                row.assign(&dy.row(g));
                                row /= groups.sizes()[g] as f64;
                            }
                        }
                        PoolMode::Max => {
                            // route to the first row attaining the max, in canonical order
                            let pooled = values.get(NodeId(id));
                            let k = xv.ncols();
                            let mut taken = Array2::from_elem(pooled.dim(), false);
                            for (r, &g) in seg.iter().enumerate() {
                                for c in 0..k {
                                    if !taken[[g, c]] && xv[[r, c]] == pooled[[g, c]] {
                                        taken[[g, c]] = true;
                                        dx[[r, c]] = dy[[g, c]];
                                    }
                                }
                            }
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::Gather { x, index } => {
                    let mut dx = Array2::zeros(self.shape(*x));
                    for (row, &i) in dy.rows().into_iter().zip(index.iter()) {
                        let mut target = dx.row_mut(i);
                        target += &row;
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::ChannelMix { x, weight, bias } => {
                    let xv = values.get(*x);
                    let wv = values.get(*weight);
                    accumulate(&mut grads, *weight, xv.t().dot(&dy));
                    if let Some(b) = bias {
                        accumulate(&mut grads, *b, dy.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    }
                    accumulate(&mut grads, *x, dy.dot(&wv.t()));
                }
                Op::Activation { x, kind } => {
                    let y = values.get(NodeId(id));
                    let dx = match kind {
                        Activation::Identity => dy,
                        Activation::Sigmoid => {
                            let mut d = dy;
                            Zip::from(&mut d).and(y).for_each(|d, &y| *d *= y * (1.0 - y));
                            d
                        }
                        Activation::LeakyRelu { slope } => {
                            let mut d = dy;
                            Zip::from(&mut d)
                                .and(values.get(*x))
                                .for_each(|d, &xv| *d *= if xv > 0.0 { 1.0 } else { *slope });
                            d
                        }
                        Activation::Softmax => {
                            let mut d = dy;
                            for (mut drow, yrow) in d.rows_mut().into_iter().zip(y.rows()) {
                                let dot = drow.dot(&yrow);
                                Zip::from(&mut drow).and(&yrow).for_each(|d, &y| *d = y * (*d - dot));
                            }
                            d
                        }
                    };
                    accumulate(&mut grads, *x, dx);
                }
                Op::Add(terms) => {
                    for t in terms {
                        accumulate(&mut grads, *t, dy.clone());
                    }
                }
                Op::Scale { x, factor } => accumulate(&mut grads, *x, dy * *factor),
                Op::Dropout { x, mask } => {
                    accumulate(&mut grads, *x, dy * ArrayView1::from(mask.as_slice()))
                }
                Op::ConcatChannels(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let c = self.shape(*p).1;
                        accumulate(&mut grads, *p, dy.slice(s![.., start..start + c]).to_owned());
                        start += c;
                    }
                }
                Op::StackRows(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let r = self.shape(*p).0;
                        accumulate(&mut grads, *p, dy.slice(s![start..start + r, ..]).to_owned());
                        start += r;
                    }
                }
                Op::SoftmaxCrossEntropy { logits, targets, rows } => {
                    let scale = dy[[0, 0]] / rows.len() as f64;
                    let z = values.get(*logits);
                    let mut dz = Array2::zeros(z.dim());
                    for (t_row, &r) in targets.rows().into_iter().zip(rows.iter()) {
                        let p = softmax_rows(&z.row(r).to_owned().insert_axis(Axis(0)));
                        let mass = t_row.sum();
                        let mut d = dz.row_mut(r);
                        Zip::from(&mut d)
                            .and(p.row(0))
                            .and(&t_row)
                            .for_each(|d, &p, &t| *d += scale * (mass * p - t));
                    }
                    accumulate(&mut grads, *logits, dz);
                }
                Op::MeanSquareError { x, targets, rows } => {
                    let scale = 2.0 * dy[[0, 0]] / (rows.len() * targets.ncols()) as f64;
                    let xv = values.get(*x);
                    let mut dx = Array2::zeros(xv.dim());
                    for (t_row, &r) in targets.rows().into_iter().zip(rows.iter()) {
                        let mut d = dx.row_mut(r);
                        Zip::from(&mut d)
                            .and(xv.row(r))
                            .and(&t_row)
                            .for_each(|d, &q, &t| *d += scale * (q - t));
                    }
                    accumulate(&mut grads, *x, dx);
                }
            }
        }

        let mut out = HashMap::new();
        for (id, node) in self.nodes.iter().enumerate().take(loss.0 + 1) {
            if matches!(node.op, Op::Input | Op::Parameter) {
                let g = grads[id].take().unwrap_or_else(|| Array2::zeros(node.shape));
                out.insert(NodeId(id), g);
            }
        }
        for (id, node) in self.nodes.iter().enumerate().skip(loss.0 + 1) {
            if matches!(node.op, Op::Input | Op::Parameter) {
                out.insert(NodeId(id), Array2::zeros(node.shape));
            }
        }
        Ok(Gradients { grads: out })
    }
}
