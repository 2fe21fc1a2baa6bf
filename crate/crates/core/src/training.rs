//! Losses, optimizers, input masking, the training loop and evaluation.

use std::sync::Arc;
use std::time::Instant;

use ndarray::{Array1, Array2, ArrayViewMut2, Axis};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::{encode_onehot, rmse, RatingsTable};
use crate::models::{build_graph, predict_ratings, Architecture, DecodeRule, Mode, Model};
use crate::rng::{derive, seeded};
use crate::sampling::{
    conditional_subsample, conditional_targets, cover_test_indices, partition_builder, uniform_subsample, SamplerKind,
};
use crate::tensor::{IndexSet, SparseTensor};
use crate::{Error, Result};

/// Probability floor inside the cross-entropy.
pub const PROB_FLOOR: f64 = 1e-12;

/// Zeroes every channel of each observed cell independently with probability
/// `p`; returns the masked tensor and the (sorted) masked rows.
pub fn mask_inputs(x: &SparseTensor, p: f64, seed: u64) -> Result<(SparseTensor, Vec<usize>)> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("mask probability {p} outside [0, 1)")));
    }
    let mut rng = seeded(seed);
    let masked: Vec<usize> = (0..x.len()).filter(|_| p > 0.0 && rng.random::<f64>() < p).collect();
    if masked.is_empty() {
        return Ok((x.clone(), masked));
    }
    let mut values = x.values().clone();
    for &r in &masked {
        values.row_mut(r).fill(0.0);
    }
    Ok((x.map_values(values)?, masked))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CrossEntropy {
    pub loss: f64,
    /// Target cells whose probability hit the floor.
    pub clamped: usize,
}

/// Mean over cells of `-Σ_l t_l log p_l`, with `p` floored at [`PROB_FLOOR`].
pub fn cross_entropy_loss(distributions: &Array2<f64>, targets: &Array2<f64>) -> Result<CrossEntropy> {
    if distributions.dim() != targets.dim() {
        return Err(Error::Shape(format!(
            "distributions {:?} vs targets {:?}",
            distributions.dim(),
            targets.dim()
        )));
    }
    if distributions.nrows() == 0 {
        return Err(Error::Empty);
    }
    let mut total = 0.0;
    let mut clamped = 0;
    for (p, t) in distributions.rows().into_iter().zip(targets.rows()) {
        let mut hit = false;
        for (&pl, &tl) in p.iter().zip(t.iter()) {
            if tl != 0.0 {
                if pl < PROB_FLOOR {
                    hit = true;
                }
                total -= tl * pl.max(PROB_FLOOR).ln();
            }
        }
        clamped += usize::from(hit);
    }
    Ok(CrossEntropy {
        loss: total / distributions.nrows() as f64,
        clamped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Optimizer {
    Adam { lr: f64, beta1: f64, beta2: f64, eps: f64 },
    Sgd { lr: f64 },
}

impl Default for Optimizer {
    fn default() -> Self {
        Self::adam(1e-3)
    }
}

impl Optimizer {
    pub fn adam(lr: f64) -> Self {
        Self::Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn lr(&self) -> f64 {
        match *self {
            Self::Adam { lr, .. } | Self::Sgd { lr } => lr,
        }
    }

    pub fn with_lr(self, lr: f64) -> Self {
        match self {
            Self::Adam { beta1, beta2, eps, .. } => Self::Adam { lr, beta1, beta2, eps },
            Self::Sgd { .. } => Self::Sgd { lr },
        }
    }
}

/// Adam moment estimates; empty until the first step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OptimizerState {
    pub step: u64,
    m: Vec<Array2<f64>>,
    v: Vec<Array2<f64>>,
}

/// One update of `params` from `grads`. Non-finite gradients abort before
/// anything is modified.
pub fn optimizer_step(
    mut params: Vec<ArrayViewMut2<'_, f64>>,
    grads: &[Array2<f64>],
    state: &mut OptimizerState,
    opt: &Optimizer,
) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::Shape(format!("{} parameters, {} gradients", params.len(), grads.len())));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.dim() != g.dim() {
            return Err(Error::Shape(format!("parameter {i}: {:?} vs gradient {:?}", p.dim(), g.dim())));
        }
        if let Some(bad) = g.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "gradient of parameter array {i} at flat position {bad} is {}",
                g.iter().nth(bad).expect("position found")
            )));
        }
    }
    state.step += 1;
    match *opt {
        Optimizer::Sgd { lr } => {
            for (p, g) in params.iter_mut().zip(grads) {
                p.scaled_add(-lr, g);
            }
        }
        Optimizer::Adam { lr, beta1, beta2, eps } => {
            if state.m.is_empty() {
                state.m = grads.iter().map(|g| Array2::zeros(g.dim())).collect();
                state.v = state.m.clone();
            }
            let t = state.step as i32;
            let c1 = 1.0 - beta1.powi(t);
            let c2 = 1.0 - beta2.powi(t);
            for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(state.m.iter_mut().zip(state.v.iter_mut())) {
                ndarray::Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                });
            }
        }
    }
    Ok(())
}

/// Mutable views of every parameter array, in the order of [`Model::layers`]
/// (each layer's weight slots, then its bias as a `1 x O` row).
pub fn parameter_views(model: &mut Model) -> Vec<ArrayViewMut2<'_, f64>> {
    let mut out = Vec::new();
    for layer in model.layers_mut() {
        let (slots, bias) = layer.slots_and_bias_mut();
        out.extend(slots.iter_mut().map(|s| s.view_mut()));
        out.push(bias.view_mut().insert_axis(Axis(0)));
    }
    out
}

/// Loss targets for one forward pass: output rows and their one-hot levels.
#[derive(Debug, Clone)]
pub struct LossTargets {
    pub rows: Vec<usize>,
    pub onehot: Array2<f64>,
}

/// Loss and parameter gradients (in [`parameter_views`] order) of the model
/// on input `x`, predicting at `target` (FEA only; defaults to the cells of `x`).
pub fn loss_and_gradients(
    model: &Model,
    x: &SparseTensor,
    target: Option<&Arc<IndexSet>>,
    targets: &LossTargets,
    mode: Mode,
) -> Result<(f64, Vec<Array2<f64>>)> {
    let mut g = build_graph(model, x, target, mode)?;
    let loss = g.graph.softmax_cross_entropy(g.logits, targets.onehot.clone(), targets.rows.clone())?;
    let values = g.graph.forward(&g.bindings)?;
    let l = values.scalar(loss);
    if !l.is_finite() {
        return Err(Error::NonFinite(format!("training loss is {l}")));
    }
    let mut grads = g.graph.backward(&values, loss)?;
    let mut out = Vec::new();
    for nodes in &g.params {
        for &s in nodes.slots.iter().chain([&nodes.bias]) {
            out.push(grads.take(s).expect("parameters always receive a gradient"));
        }
    }
    Ok((l, out))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub optimizer: Optimizer,
    pub epochs: usize,
    /// Maximum cells per minibatch; the whole matrix is used when it fits.
    pub budget: usize,
    pub sampler: SamplerKind,
    /// Overrides the model's input mask probability when set.
    pub mask_probability: Option<f64>,
    pub seed: u64,
    /// Epochs without validation improvement before stopping; 0 disables.
    pub patience: usize,
    pub decode: DecodeRule,
    /// Stops after the first epoch that ends past this many seconds.
    pub time_limit_secs: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: Optimizer::default(),
            epochs: 100,
            budget: 20_000,
            sampler: SamplerKind::Uniform,
            mask_probability: None,
            seed: 0,
            patience: 20,
            decode: DecodeRule::Expectation,
            time_limit_secs: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.budget == 0 {
            return Err(Error::InvalidArgument("cell budget must be at least 1".into()));
        }
        if let Some(p) = self.mask_probability {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::InvalidArgument(format!("mask probability {p} outside [0, 1)")));
            }
        }
        if self.optimizer.lr().is_nan() || self.optimizer.lr() < 0.0 {
            return Err(Error::InvalidArgument("learning rate must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub val_rmse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were kept (0 = initial parameters).
    pub best_epoch: usize,
    pub best_val_rmse: Option<f64>,
    pub stopped_early: bool,
    pub wall_clock_secs: f64,
}

impl TrainReport {
    /// One JSON object per epoch.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for r in &self.epochs {
            out.push_str(&serde_json::to_string(r)?);
            out.push('\n');
        }
        Ok(out)
    }
}

pub struct TrainOutcome {
    pub report: TrainReport,
    /// Parameters with the best validation RMSE (the last ones without validation).
    pub best: Model,
}

fn minibatch(x: &SparseTensor, cfg: &TrainConfig, seed: u64) -> Result<SparseTensor> {
    if x.len() <= cfg.budget {
        return Ok(x.clone());
    }
    let batch = match cfg.sampler {
        SamplerKind::Uniform => uniform_subsample(x.len(), cfg.budget, seed)?,
        SamplerKind::Conditional => {
            let (r, c) = conditional_targets(x.index(), cfg.budget);
            conditional_subsample(x.index(), r, c, seed)?
        }
    };
    if batch.is_empty() {
        return Err(Error::Sampling("empty minibatch".into()));
    }
    Ok(x.select(&batch.rows))
}

/// Input and loss targets for one step. Self-supervised: masked cells are
/// hidden and are the only targets. FEA: every cell is a target.
fn step_inputs(model: &Model, x: &SparseTensor, p: f64, seed: u64) -> Result<(SparseTensor, LossTargets)> {
    let (xin, masked) = mask_inputs(x, p, seed)?;
    let rows = match model.architecture() {
        Architecture::SelfSupervised if p > 0.0 => {
            if masked.is_empty() {
                // tiny batch with nothing masked: hide one cell so there is a target
                let r = seeded(seed ^ 0xa5a5).random_range(0..x.len());
                let mut values = x.values().clone();
                values.row_mut(r).fill(0.0);
                let onehot = x.values().select(Axis(0), &[r]);
                return Ok((x.map_values(values)?, LossTargets { rows: vec![r], onehot }));
            }
            masked
        }
        _ => (0..x.len()).collect(),
    };
    let onehot = x.values().select(Axis(0), &rows);
    Ok((xin, LossTargets { rows, onehot }))
}

/// Trains `model` on `train`, tracking RMSE on `validation` (conditioned on
/// the training cells) after every epoch.
pub fn train(model: Model, cfg: &TrainConfig, train: &RatingsTable, validation: Option<&RatingsTable>) -> Result<TrainOutcome> {
    cfg.validate()?;
    model.check()?;
    if train.scale().len() != model.config.levels {
        return Err(Error::InvalidArgument(format!(
            "scale {} has {} levels, model expects {}",
            train.scale(),
            train.scale().len(),
            model.config.levels
        )));
    }
    let start = Instant::now();
    let x = encode_onehot(train)?;
    let p = cfg.mask_probability.unwrap_or(model.config.mask_probability);
    let steps_per_epoch = x.len().div_ceil(cfg.budget);

    let validate = |m: &Model| -> Result<Option<f64>> {
        validation
            .map(|v| evaluate(m, train, v, cfg.decode).map(|e| e.rmse))
            .transpose()
    };

    let mut model = model;
    let mut state = OptimizerState::default();
    let mut best = model.clone();
    let mut best_rmse = validate(&model)?;
    let mut best_epoch = 0;
    let mut since_best = 0;
    let mut records = Vec::with_capacity(cfg.epochs);
    let mut stopped_early = false;

    for epoch in 1..=cfg.epochs {
        let mut epoch_loss = 0.0;
        for step in 0..steps_per_epoch {
            let step_seed = derive(cfg.seed, (epoch * steps_per_epoch + step) as u64).random::<u64>();
            let batch = minibatch(&x, cfg, step_seed)?;
            let (xin, targets) = step_inputs(&model, &batch, p, step_seed ^ 1)?;
            let (loss, grads) = loss_and_gradients(&model, &xin, None, &targets, Mode::Train { seed: step_seed ^ 2 })?;
            optimizer_step(parameter_views(&mut model), &grads, &mut state, &cfg.optimizer)?;
            epoch_loss += loss;
        }
        let val_rmse = validate(&model)?;
        records.push(EpochRecord {
            epoch,
            loss: epoch_loss / steps_per_epoch as f64,
            val_rmse,
        });
        match (val_rmse, best_rmse) {
            (Some(v), Some(b)) if v >= b => since_best += 1,
            (Some(_), _) | (None, _) => {
                best = model.clone();
                best_rmse = val_rmse;
                best_epoch = epoch;
                since_best = 0;
            }
        }
        let out_of_time = cfg.time_limit_secs.is_some_and(|t| start.elapsed().as_secs_f64() >= t);
        if (cfg.patience > 0 && since_best >= cfg.patience) || out_of_time {
            stopped_early = epoch < cfg.epochs;
            break;
        }
    }
    Ok(TrainOutcome {
        report: TrainReport {
            epochs: records,
            best_epoch,
            best_val_rmse: best_rmse,
            stopped_early,
            wall_clock_secs: start.elapsed().as_secs_f64(),
        },
        best,
    })
}

/// Query cells per forward pass for the self-supervised model, chosen so the
/// hidden share of the input matches the training mask probability `p`.
pub fn query_chunk(p: f64, observed: usize) -> usize {
    if p <= 0.0 {
        return usize::MAX;
    }
    ((p / (1.0 - p) * observed as f64).round() as usize).max(1)
}

/// Level distributions at `query` cells given the `observed` one-hot matrix.
///
/// Self-supervised: the query cells join the input with zero channels, a
/// chunk at a time (see [`query_chunk`]) so every chunk resembles a training
/// input. FEA: the observed cells are encoded and the decoder runs on
/// observed ∪ query.
pub fn predict_distributions(model: &Model, observed: &SparseTensor, query: &[[usize; 2]]) -> Result<Array2<f64>> {
    if query.is_empty() {
        return Err(Error::Empty);
    }
    let chunk = match model.architecture() {
        Architecture::SelfSupervised => query_chunk(model.config.mask_probability, observed.len()),
        Architecture::Fea => usize::MAX,
    };
    if chunk >= query.len() {
        return predict_union(model, observed, query);
    }
    let cover = cover_test_indices(query.len(), chunk, 0, partition_builder(query.len(), chunk))?;
    let mut out = Array2::zeros((query.len(), model.config.levels));
    for batch in &cover.batches {
        let cells: Vec<[usize; 2]> = batch.rows.iter().map(|&r| query[r]).collect();
        let dist = predict_union(model, observed, &cells)?;
        for (&r, row) in batch.rows.iter().zip(dist.rows()) {
            out.row_mut(r).assign(&row);
        }
    }
    Ok(out)
}

fn predict_union(model: &Model, observed: &SparseTensor, query: &[[usize; 2]]) -> Result<Array2<f64>> {
    let dims = observed.dims().to_vec();
    let mut coords = observed.index().coords().to_vec();
    for q in query {
        if observed.index().position(q).is_some() {
            return Err(Error::InvalidArgument(format!("query cell {q:?} is also observed")));
        }
        coords.extend_from_slice(q);
    }
    let mut values = Array2::zeros((observed.len() + query.len(), observed.channels()));
    values.slice_mut(ndarray::s![..observed.len(), ..]).assign(observed.values());
    let union = SparseTensor::new(dims, coords, values)?;
    let rows: Vec<usize> = query
        .iter()
        .map(|q| union.index().position(q).expect("query cell inserted above"))
        .collect();
    let out = match model.architecture() {
        Architecture::SelfSupervised => {
            let g = build_graph(model, &union, None, Mode::Eval)?;
            g.forward()?.get(g.output).clone()
        }
        Architecture::Fea => {
            let g = build_graph(model, observed, Some(union.index()), Mode::Eval)?;
            g.forward()?.get(g.output).clone()
        }
    };
    Ok(out.select(Axis(0), &rows))
}

#[derive(Debug, Clone, Serialize)]
pub struct Evaluation {
    pub rmse: f64,
    pub cells: Vec<[usize; 2]>,
    pub predictions: Vec<f64>,
    pub targets: Vec<f64>,
}

/// RMSE of predictions for the `query` ratings, conditioned on `observed`.
/// Both tables must share one id space; parameters are never touched.
pub fn evaluate(model: &Model, observed: &RatingsTable, query: &RatingsTable, rule: DecodeRule) -> Result<Evaluation> {
    if observed.dims() != query.dims() {
        return Err(Error::Shape(format!(
            "observed dims {:?} and query dims {:?} differ; tables must share an id space",
            observed.dims(),
            query.dims()
        )));
    }
    if observed.scale() != query.scale() {
        return Err(Error::InvalidArgument(format!(
            "observed scale {} differs from query scale {}",
            observed.scale(),
            query.scale()
        )));
    }
    let x = encode_onehot(observed)?;
    let cells: Vec<[usize; 2]> = query.ratings().iter().map(|r| [r.user, r.item]).collect();
    let dist = predict_distributions(model, &x, &cells)?;
    let predictions = predict_ratings(&dist, observed.scale(), rule)?;
    let targets = query.values();
    Ok(Evaluation {
        rmse: rmse(predictions.as_slice().expect("contiguous"), &targets)?,
        cells,
        predictions: predictions.to_vec(),
        targets,
    })
}

/// Convenience: predictions as an owned vector.
pub fn predict(model: &Model, observed: &RatingsTable, cells: &[[usize; 2]], rule: DecodeRule) -> Result<Array1<f64>> {
    let dist = predict_distributions(model, &encode_onehot(observed)?, cells)?;
    predict_ratings(&dist, observed.scale(), rule)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::RatingScale;
    use crate::models::ModelConfig;
    use ndarray::array;

    fn tiny_table() -> RatingsTable {
        let triples = [
            ("a", "x", 1.0),
            ("a", "y", 2.0),
            ("b", "x", 3.0),
            ("b", "z", 4.0),
            ("c", "y", 5.0),
            ("c", "z", 2.0),
        ];
        RatingsTable::from_triples(triples, RatingScale::five_star()).unwrap()
    }

    fn tiny_ss() -> ModelConfig {
        ModelConfig {
            hidden: vec![4],
            dropout_after: vec![],
            ..ModelConfig::self_supervised(5)
        }
    }

    #[test]
    fn masking_examples() {
        let x = encode_onehot(&tiny_table()).unwrap();
        let (y, m) = mask_inputs(&x, 0.0, 1).unwrap();
        assert_eq!(y, x);
        assert!(m.is_empty());
        let (y, m) = mask_inputs(&x, 0.5, 3).unwrap();
        for &r in &m {
            assert!(y.values().row(r).iter().all(|&v| v == 0.0));
        }
        assert!(mask_inputs(&x, 1.0, 1).is_err());

        let big = crate::tensor::full_tensor(&[100, 100], Array2::ones((10_000, 1))).unwrap();
        let (_, m) = mask_inputs(&big, 0.15, 11).unwrap();
        let sigma = (10_000.0f64 * 0.15 * 0.85).sqrt();
        assert!((m.len() as f64 - 1500.0).abs() <= 3.0 * sigma);
    }

    #[test]
    fn cross_entropy_examples() {
        let t = array![[0.0, 1.0], [1.0, 0.0]];
        assert_eq!(cross_entropy_loss(&t, &t).unwrap().loss, 0.0);
        let u = Array2::from_elem((1, 5), 0.2);
        let one = array![[0.0, 0.0, 1.0, 0.0, 0.0]];
        assert!((cross_entropy_loss(&u, &one).unwrap().loss - 5f64.ln()).abs() < 1e-12);
        let p = array![[0.5, 0.5], [0.9, 0.1]];
        let a = cross_entropy_loss(&p.slice(ndarray::s![0..1, ..]).to_owned(), &t.slice(ndarray::s![0..1, ..]).to_owned()).unwrap().loss;
        let b = cross_entropy_loss(&p.slice(ndarray::s![1..2, ..]).to_owned(), &t.slice(ndarray::s![1..2, ..]).to_owned()).unwrap().loss;
        assert!((cross_entropy_loss(&p, &t).unwrap().loss - (a + b) / 2.0).abs() < 1e-12);
        let zero = cross_entropy_loss(&array![[1.0, 0.0]], &array![[0.0, 1.0]]).unwrap();
        assert_eq!(zero.clamped, 1);
        assert!((zero.loss + PROB_FLOOR.ln()).abs() < 1e-9);
    }

    #[test]
    fn optimizer_examples() {
        let mut p = array![[0.0, 1.0]];
        let mut state = OptimizerState::default();
        optimizer_step(vec![p.view_mut()], &[Array2::zeros((1, 2))], &mut state, &Optimizer::adam(1e-3)).unwrap();
        assert_eq!(p, array![[0.0, 1.0]]);

        let mut p = array![[0.0]];
        optimizer_step(vec![p.view_mut()], &[array![[1.0]]], &mut OptimizerState::default(), &Optimizer::Sgd { lr: 0.1 })
            .unwrap();
        assert_eq!(p, array![[-0.1]]);

        let mut p = array![[0.0, 0.0]];
        optimizer_step(vec![p.view_mut()], &[array![[3.0, -0.5]]], &mut OptimizerState::default(), &Optimizer::adam(1e-3))
            .unwrap();
        assert!((p[[0, 0]] + 1e-3).abs() < 1e-9 && (p[[0, 1]] - 1e-3).abs() < 1e-9);

        let mut p = array![[0.0]];
        let err = optimizer_step(vec![p.view_mut()], &[array![[f64::NAN]]], &mut OptimizerState::default(), &Optimizer::default());
        assert!(matches!(err, Err(Error::NonFinite(_))));
        assert_eq!(p, array![[0.0]]);
    }

    #[test]
    fn zero_lr_keeps_untrained_rmse() {
        let t = tiny_table();
        let model = Model::new(tiny_ss(), 1).unwrap();
        let split = crate::data::random_split(&t, 0.34, 0.0, 2).unwrap();
        let before = evaluate(&model, &split.train, &split.test, DecodeRule::Expectation).unwrap().rmse;
        let cfg = TrainConfig {
            epochs: 1,
            optimizer: Optimizer::adam(0.0),
            ..TrainConfig::default()
        };
        let out = train(model, &cfg, &split.train, Some(&split.test)).unwrap();
        assert_eq!(out.report.epochs.len(), 1);
        assert_eq!(out.report.epochs[0].val_rmse, Some(before));
    }

    #[test]
    fn masked_targets_only() {
        let model = Model::new(tiny_ss(), 2).unwrap();
        let x = encode_onehot(&tiny_table()).unwrap();
        let (xin, t) = step_inputs(&model, &x, 0.5, 7).unwrap();
        for &r in &t.rows {
            assert!(xin.values().row(r).iter().all(|&v| v == 0.0));
        }
        assert!(!t.rows.is_empty());
    }

    #[test]
    fn evaluation_rejects_overlap_and_is_pure() {
        let t = tiny_table();
        let model = Model::new(tiny_ss(), 3).unwrap();
        let x = encode_onehot(&t).unwrap();
        assert!(predict_distributions(&model, &x, &[[0, 0]]).is_err());
        let split = crate::data::random_split(&t, 0.5, 0.0, 1).unwrap();
        let before = model.clone();
        let a = evaluate(&model, &split.train, &split.test, DecodeRule::Expectation).unwrap();
        let b = evaluate(&model, &split.train, &split.test, DecodeRule::Expectation).unwrap();
        assert_eq!(model, before);
        assert_eq!(a.rmse, b.rmse);
        assert!(a.rmse.is_finite());
    }
}
