//! The self-supervised exchangeable model and the factorized exchangeable
//! autoencoder (FEA).
//!
//! A [`Model`] is a parameter container; every forward pass builds a small
//! autodiff graph so that training and inference share one code path.

use std::sync::Arc;

use ndarray::{Array1, Array2};
use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Activation, Bindings, Graph, NodeId, PoolMode, Values};
use crate::data::RatingScale;
use crate::layers::{dropout_multipliers, layer_graph, ColdPolicy, ExchLayerParams, FactorPair, LayerNodes, PoolingContext};
use crate::rng::{derive, seeded, Rng};
use crate::tensor::{IndexSet, SparseTensor};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Architecture {
    SelfSupervised,
    Fea,
}

impl std::str::FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "self-supervised" | "ss" => Ok(Self::SelfSupervised),
            "fea" => Ok(Self::Fea),
            _ => Err(Error::InvalidArgument(format!("unknown architecture {s:?}"))),
        }
    }
}

/// Layer widths, nonlinearity, dropout placement and masking.
///
/// Dropout positions are 1-based layer numbers: for the self-supervised model
/// they index the whole stack, for the FEA they index the decoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub architecture: Architecture,
    /// Number of rating levels `L` (input and output channels).
    pub levels: usize,
    /// Self-supervised hidden widths; a final `L`-channel softmax layer is appended.
    pub hidden: Vec<usize>,
    /// FEA encoder widths; the last one is the factor size and has no nonlinearity.
    pub encoder: Vec<usize>,
    /// FEA decoder hidden widths; a final `L`-channel softmax layer is appended.
    pub decoder: Vec<usize>,
    pub leaky_slope: f64,
    pub dropout: f64,
    pub dropout_after: Vec<usize>,
    pub encoder_dropout_after: Vec<usize>,
    /// Training-time probability of hiding an observed cell from the input.
    pub mask_probability: f64,
    pub pooling: PoolMode,
    /// Share the row and column blocks (square, jointly exchangeable inputs).
    pub tie_row_col: bool,
    pub cold_policy: ColdPolicy,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::self_supervised(5)
    }
}

impl ModelConfig {
    /// Nine layers: eight of width 256 plus the softmax output, channel
    /// dropout 0.5 after layers 1–7, input masking 0.15.
    pub fn self_supervised(levels: usize) -> Self {
        Self {
            architecture: Architecture::SelfSupervised,
            levels,
            hidden: vec![256; 8],
            encoder: Vec::new(),
            decoder: Vec::new(),
            leaky_slope: Activation::DEFAULT_LEAKY_SLOPE,
            dropout: 0.5,
            dropout_after: (1..=7).collect(),
            encoder_dropout_after: Vec::new(),
            mask_probability: 0.15,
            pooling: PoolMode::Mean,
            tie_row_col: false,
            cold_policy: ColdPolicy::Reject,
        }
    }

    /// Encoder 220/220/100, decoder 220×4 plus the softmax output, dropout
    /// 0.5 after decoder layers 3 and 4, no input masking.
    pub fn fea(levels: usize) -> Self {
        Self {
            architecture: Architecture::Fea,
            hidden: Vec::new(),
            encoder: vec![220, 220, 100],
            decoder: vec![220; 4],
            dropout_after: vec![3, 4],
            mask_probability: 0.0,
            ..Self::self_supervised(levels)
        }
    }

    pub fn for_architecture(arch: Architecture, levels: usize) -> Self {
        match arch {
            Architecture::SelfSupervised => Self::self_supervised(levels),
            Architecture::Fea => Self::fea(levels),
        }
    }

    pub fn factor_size(&self) -> Option<usize> {
        match self.architecture {
            Architecture::Fea => self.encoder.last().copied(),
            Architecture::SelfSupervised => None,
        }
    }

    /// Layers of the main stack (self-supervised) or decoder (FEA), output included.
    pub fn stack_len(&self) -> usize {
        match self.architecture {
            Architecture::SelfSupervised => self.hidden.len() + 1,
            Architecture::Fea => self.decoder.len() + 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.levels < 2 {
            return bad(format!("{} rating levels", self.levels));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if !(0.0..1.0).contains(&self.mask_probability) {
            return bad(format!("mask probability {} outside [0, 1)", self.mask_probability));
        }
        if !self.leaky_slope.is_finite() {
            return bad("leaky slope must be finite".into());
        }
        let widths = self.hidden.iter().chain(&self.encoder).chain(&self.decoder);
        if widths.clone().any(|&w| w == 0) {
            return bad("layer widths must be positive".into());
        }
        if self.architecture == Architecture::Fea && self.encoder.is_empty() {
            return bad("the FEA needs at least one encoder layer".into());
        }
        let stack = self.stack_len();
        if let Some(&i) = self.dropout_after.iter().find(|&&i| i == 0 || i > stack) {
            return bad(format!("dropout after layer {i} but the stack has {stack} layers"));
        }
        if let Some(&i) = self.encoder_dropout_after.iter().find(|&&i| i == 0 || i > self.encoder.len()) {
            return bad(format!("encoder dropout after layer {i} of {}", self.encoder.len()));
        }
        Ok(())
    }

    fn hidden_activation(&self) -> Activation {
        Activation::LeakyRelu { slope: self.leaky_slope }
    }
}

/// Forward-pass mode; training draws dropout masks from `seed`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Eval,
    Train { seed: u64 },
}

/// Configuration plus parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub config: ModelConfig,
    /// FEA encoder layers; empty for the self-supervised model.
    pub encoder: Vec<ExchLayerParams>,
    /// The self-supervised stack, or the FEA decoder.
    pub stack: Vec<ExchLayerParams>,
}

fn build_layers(
    input: usize,
    widths: &[usize],
    hidden: Activation,
    last: Activation,
    config: &ModelConfig,
    rng: Option<&mut Rng>,
) -> Result<Vec<ExchLayerParams>> {
    let mut rng = rng;
    let mut k = input;
    let mut out = Vec::with_capacity(widths.len());
    for (i, &o) in widths.iter().enumerate() {
        let act = if i + 1 == widths.len() { last } else { hidden };
        let layer = match rng.as_deref_mut() {
            Some(r) => ExchLayerParams::random(2, k, o, act, config.tie_row_col, r)?,
            None => ExchLayerParams::zeros(2, k, o, act, config.tie_row_col)?,
        };
        out.push(layer.with_pooling(config.pooling));
        k = o;
    }
    Ok(out)
}

impl Model {
    fn build(config: ModelConfig, rng: Option<&mut Rng>) -> Result<Self> {
        config.validate()?;
        let hidden = config.hidden_activation();
        let mut rng = rng;
        let (encoder, stack) = match config.architecture {
            Architecture::SelfSupervised => {
                let widths: Vec<usize> = config.hidden.iter().copied().chain([config.levels]).collect();
                let stack = build_layers(config.levels, &widths, hidden, Activation::Softmax, &config, rng)?;
                (Vec::new(), stack)
            }
            Architecture::Fea => {
                let encoder = build_layers(
                    config.levels,
                    &config.encoder,
                    hidden,
                    Activation::Identity,
                    &config,
                    rng.as_deref_mut(),
                )?;
                let factor = config.encoder[config.encoder.len() - 1];
                let widths: Vec<usize> = config.decoder.iter().copied().chain([config.levels]).collect();
                let stack = build_layers(2 * factor, &widths, hidden, Activation::Softmax, &config, rng)?;
                (encoder, stack)
            }
        };
        Ok(Self { config, encoder, stack })
    }

    /// Randomly initialised model.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        Self::build(config, Some(&mut seeded(seed)))
    }

    /// All weights and biases zero.
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        Self::build(config, None)
    }

    pub fn architecture(&self) -> Architecture {
        self.config.architecture
    }

    /// Depends on the configuration only, never on the data shape.
    pub fn num_parameters(&self) -> usize {
        self.layers().map(ExchLayerParams::num_parameters).sum()
    }

    /// Encoder layers followed by the stack.
    pub fn layers(&self) -> impl Iterator<Item = &ExchLayerParams> {
        self.encoder.iter().chain(&self.stack)
    }

    pub fn layers_mut(&mut self) -> impl Iterator<Item = &mut ExchLayerParams> {
        self.encoder.iter_mut().chain(self.stack.iter_mut())
    }

    /// Checks that the parameter shapes agree with the configuration.
    pub fn check(&self) -> Result<()> {
        let reference = Self::zeros(self.config.clone())?;
        let shape = |l: &ExchLayerParams| {
            (
                l.in_channels(),
                l.out_channels(),
                l.slots().len(),
                l.is_tied(),
                l.activation,
                l.pooling,
            )
        };
        let ok = reference.encoder.len() == self.encoder.len()
            && reference.stack.len() == self.stack.len()
            && reference.layers().zip(self.layers()).all(|(a, b)| shape(a) == shape(b));
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument("parameters do not match the model configuration".into()))
        }
    }
}

/// A model unrolled on one input, ready for forward and backward passes.
pub struct ModelGraph {
    pub graph: Graph,
    pub bindings: Bindings,
    pub input: NodeId,
    /// Output-layer pre-activations, one row per target cell.
    pub logits: NodeId,
    /// Per-cell distributions over rating levels.
    pub output: NodeId,
    /// Parameter nodes in [`Model::layers`] order.
    pub params: Vec<LayerNodes>,
    /// Cells the output rows refer to.
    pub target: Arc<IndexSet>,
}

impl ModelGraph {
    pub fn forward(&self) -> Result<Values> {
        self.graph.forward(&self.bindings)
    }
}

fn dropout_rng(mode: Mode, stage: u64) -> Option<Rng> {
    match mode {
        Mode::Eval => None,
        Mode::Train { seed } => Some(derive(seed, stage)),
    }
}

#[allow(clippy::too_many_arguments)]
fn append_layers(
    graph: &mut Graph,
    bindings: &mut Bindings,
    mut x: NodeId,
    ctx: &PoolingContext,
    layers: &[ExchLayerParams],
    dropout: f64,
    dropout_after: &[usize],
    mut rng: Option<Rng>,
    params: &mut Vec<LayerNodes>,
) -> Result<(NodeId, NodeId)> {
    let mut pre = x;
    for (i, layer) in layers.iter().enumerate() {
        let nodes = layer.bind(graph, bindings);
        let (p, out) = layer_graph(graph, x, ctx, layer, &nodes)?;
        params.push(nodes);
        pre = p;
        x = out;
        if let Some(r) = rng.as_mut() {
            if dropout > 0.0 && dropout_after.contains(&(i + 1)) {
                let (mult, _) = dropout_multipliers(layer.out_channels(), dropout, r)?;
                x = graph.dropout(x, mult)?;
            }
        }
    }
    Ok((pre, x))
}

/// Unrolls the model on `x`.
///
/// The self-supervised model predicts at every cell of `x`. The FEA encodes
/// `x` into factors and decodes at `target` (default: the cells of `x`).
pub fn build_graph(model: &Model, x: &SparseTensor, target: Option<&Arc<IndexSet>>, mode: Mode) -> Result<ModelGraph> {
    let cfg = &model.config;
    if x.order() != 2 {
        return Err(Error::InvalidArgument("models take a matrix".into()));
    }
    if x.channels() != cfg.levels {
        return Err(Error::Shape(format!("input has {} channels, model expects {}", x.channels(), cfg.levels)));
    }
    model.check()?;
    let mut graph = Graph::new();
    let mut bindings = Bindings::new();
    let input = graph.input(x.len(), x.channels());
    bindings.bind(input, x.values().clone());
    let ctx = PoolingContext::new(x.index().clone());
    let mut params = Vec::new();
    match cfg.architecture {
        Architecture::SelfSupervised => {
            if let Some(t) = target {
                if **t != **x.index() {
                    return Err(Error::InvalidArgument(
                        "the self-supervised model predicts at its input cells; add query cells to the input".into(),
                    ));
                }
            }
            let (logits, output) = append_layers(
                &mut graph,
                &mut bindings,
                input,
                &ctx,
                &model.stack,
                cfg.dropout,
                &cfg.dropout_after,
                dropout_rng(mode, 0),
                &mut params,
            )?;
            Ok(ModelGraph {
                graph,
                bindings,
                input,
                logits,
                output,
                params,
                target: x.index().clone(),
            })
        }
        Architecture::Fea => {
            let (_, encoded) = append_layers(
                &mut graph,
                &mut bindings,
                input,
                &ctx,
                &model.encoder,
                cfg.dropout,
                &cfg.encoder_dropout_after,
                dropout_rng(mode, 1),
                &mut params,
            )?;
            let target = target.cloned().unwrap_or_else(|| x.index().clone());
            let decoder_in = factor_nodes(&mut graph, encoded, &ctx, &target, cfg.cold_policy)?;
            let tctx = if Arc::ptr_eq(&target, x.index()) {
                ctx
            } else {
                PoolingContext::new(target.clone())
            };
            let (logits, output) = append_layers(
                &mut graph,
                &mut bindings,
                decoder_in,
                &tctx,
                &model.stack,
                cfg.dropout,
                &cfg.dropout_after,
                dropout_rng(mode, 2),
                &mut params,
            )?;
            Ok(ModelGraph {
                graph,
                bindings,
                input,
                logits,
                output,
                params,
                target,
            })
        }
    }
}

/// Row/column mean-pools the encoder output and places `[Z_N[n]; Z_M[m]]` at
/// every target cell, inside the graph so gradients reach the encoder.
fn factor_nodes(
    graph: &mut Graph,
    encoded: NodeId,
    ctx: &PoolingContext,
    target: &Arc<IndexSet>,
    policy: ColdPolicy,
) -> Result<NodeId> {
    if target.dims() != ctx.index().dims() {
        return Err(Error::Shape(format!(
            "target dims {:?} differ from input dims {:?}",
            target.dims(),
            ctx.index().dims()
        )));
    }
    let global = graph.segment_pool(encoded, ctx.groups(0b00).clone(), PoolMode::Mean)?;
    let mut parts = Vec::with_capacity(2);
    for (axis, mask, name) in [(0usize, 0b01usize, "row"), (1, 0b10, "column")] {
        let groups = ctx.groups(mask).clone();
        let fallback = groups.num_groups();
        let rows: Vec<usize> = target
            .iter()
            .map(|idx| match (groups.find(&[idx[axis]]), policy) {
                (Some(g), _) => Ok(g),
                (None, ColdPolicy::ImputeGlobalMean) => Ok(fallback),
                (None, ColdPolicy::Reject) => Err(Error::Cold { axis: name, index: idx[axis] }),
            })
            .collect::<Result<_>>()?;
        let pooled = graph.segment_pool(encoded, groups, PoolMode::Mean)?;
        let table = graph.stack_rows(&[pooled, global])?;
        parts.push(graph.gather_rows(table, Arc::new(rows))?);
    }
    graph.concat_channels(&parts)
}

/// Per-cell distributions over the `L` levels at every cell of `x`.
///
/// Cells to be predicted should be present in `x` with all-zero channels.
pub fn self_supervised_forward(x: &SparseTensor, model: &Model, mode: Mode) -> Result<Array2<f64>> {
    if model.architecture() != Architecture::SelfSupervised {
        return Err(Error::InvalidArgument("not a self-supervised model".into()));
    }
    let g = build_graph(model, x, None, mode)?;
    let values = g.forward()?;
    Ok(values.get(g.output).clone())
}

/// Runs the encoder and averages its output into row and column factors.
pub fn fea_encode(x: &SparseTensor, model: &Model, mode: Mode) -> Result<FactorPair> {
    if model.architecture() != Architecture::Fea {
        return Err(Error::InvalidArgument("factors are only defined for the FEA".into()));
    }
    if x.channels() != model.config.levels {
        return Err(Error::Shape(format!(
            "input has {} channels, model expects {}",
            x.channels(),
            model.config.levels
        )));
    }
    model.check()?;
    let mut graph = Graph::new();
    let mut bindings = Bindings::new();
    let input = graph.input(x.len(), x.channels());
    bindings.bind(input, x.values().clone());
    let ctx = PoolingContext::new(x.index().clone());
    let cfg = &model.config;
    let (_, encoded) = append_layers(
        &mut graph,
        &mut bindings,
        input,
        &ctx,
        &model.encoder,
        cfg.dropout,
        &cfg.encoder_dropout_after,
        dropout_rng(mode, 1),
        &mut Vec::new(),
    )?;
    let values = graph.forward(&bindings)?;
    let y = x.map_values(values.get(encoded).clone())?;
    crate::layers::pool_to_factors(&y)
}

/// Decodes factors at the cells of `target`.
pub fn fea_decode(f: &FactorPair, target: &Arc<IndexSet>, model: &Model, mode: Mode) -> Result<Array2<f64>> {
    if model.architecture() != Architecture::Fea {
        return Err(Error::InvalidArgument("not an FEA model".into()));
    }
    model.check()?;
    let factor = model.config.factor_size().expect("FEA has an encoder");
    if f.channels() != factor || f.cols.ncols() != factor {
        return Err(Error::Shape(format!("factors have {} channels, model expects {factor}", f.channels())));
    }
    let z = crate::layers::broadcast_factors(f, target, model.config.cold_policy)?;
    let mut graph = Graph::new();
    let mut bindings = Bindings::new();
    let input = graph.input(z.len(), z.channels());
    bindings.bind(input, z.values().clone());
    let ctx = PoolingContext::new(target.clone());
    let cfg = &model.config;
    let (_, out) = append_layers(
        &mut graph,
        &mut bindings,
        input,
        &ctx,
        &model.stack,
        cfg.dropout,
        &cfg.dropout_after,
        dropout_rng(mode, 2),
        &mut Vec::new(),
    )?;
    Ok(graph.forward(&bindings)?.get(out).clone())
}

/// Input/prediction partition of the observed cells (row positions).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObservationSplit {
    pub input: Vec<usize>,
    pub prediction: Vec<usize>,
}

/// Holds out `round(fraction·n)` of `n` observed cells, uniformly without replacement.
pub fn split_observations(n: usize, fraction: f64, seed: u64) -> Result<ObservationSplit> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidArgument(format!("fraction {fraction} outside (0, 1)")));
    }
    let k = ((fraction * n as f64).round() as usize).min(n);
    let mut prediction = sample(&mut seeded(seed), n, k).into_vec();
    prediction.sort_unstable();
    let mut held = vec![false; n];
    for &p in &prediction {
        held[p] = true;
    }
    let input = (0..n).filter(|&i| !held[i]).collect();
    Ok(ObservationSplit { input, prediction })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecodeRule {
    #[default]
    Expectation,
    Argmax,
}

/// Turns per-cell level distributions into real-valued ratings.
pub fn predict_ratings(distributions: &Array2<f64>, scale: &RatingScale, rule: DecodeRule) -> Result<Array1<f64>> {
    if distributions.ncols() != scale.len() {
        return Err(Error::Shape(format!(
            "{} levels in the distributions, {} in the scale",
            distributions.ncols(),
            scale.len()
        )));
    }
    let levels = Array1::from(scale.levels().to_vec());
    distributions
        .rows()
        .into_iter()
        .map(|p| {
            let total = p.sum();
            if !total.is_finite() || (total - 1.0).abs() > 1e-4 || p.iter().any(|&v| v < 0.0) {
                return Err(Error::InvalidArgument(format!("distribution sums to {total}")));
            }
            Ok(match rule {
                DecodeRule::Expectation => p.dot(&levels),
                DecodeRule::Argmax => {
                    let best = (0..p.len()).fold(0, |b, i| if p[i] > p[b] { i } else { b });
                    levels[best]
                }
            })
        })
        .collect::<Result<Vec<_>>>()
        .map(Array1::from)
}
