//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Run with `cargo test -p exchangeable --test acceptance`.
//!
//! Every reference value here comes from an independent computation in this
//! file (dense weight matrices, finite differences, exact binomial moments,
//! brute-force enumeration), never from the code under test.

use std::sync::OnceLock;
use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::Rng as _;

use exchangeable::autodiff::Activation;
use exchangeable::checkpoint::{Checkpoint, Metadata};
use exchangeable::data::{file_pair_split, random_split, rmse, Format, RatingScale, RatingsTable};
use exchangeable::layers::{exchangeable_tensor_layer, ColdPolicy, ExchLayerParams};
use exchangeable::models::{build_graph, DecodeRule, Mode, Model, ModelConfig};
use exchangeable::rng::seeded;
use exchangeable::sampling::{conditional_subsample, uniform_subsample};
use exchangeable::synthetic::{synthetic_task, SyntheticSpec};
use exchangeable::tensor::{apply_permutation, full_tensor, random_sparse, IndexSet, PermutationSpec, SparseTensor};
use exchangeable::training::{
    cross_entropy_loss, evaluate, loss_and_gradients, parameter_views, train, LossTargets, Optimizer, TrainConfig,
};
use exchangeable::verifier::{
    count_orbits, dense_oracle_layer, dense_to_pooled, find_witness, generic_weights, is_legal_permutation,
    pooled_dense_layer, scalar_dense_params, FlatPermutation, TOLERANCE,
};

type Outcome = Result<String, String>;

struct Shape {
    dims: &'static [usize],
    tied: bool,
}

const SHAPES: [Shape; 5] = [
    Shape { dims: &[3, 4], tied: false },
    Shape { dims: &[6, 7], tied: false },
    Shape { dims: &[5, 5], tied: true },
    Shape { dims: &[3, 4, 2], tied: false },
    Shape { dims: &[2, 2, 2, 2], tied: false },
];

fn check(cond: bool, msg: String) -> Outcome {
    if cond {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn err(e: exchangeable::Error) -> String {
    format!("error: {e}")
}

/// A legal permutation for the shape: independent per axis, or one map
/// shared by both axes of a tied (jointly exchangeable) matrix.
fn legal_permutation(shape: &Shape, rng: &mut exchangeable::rng::Rng) -> PermutationSpec {
    let p = PermutationSpec::random(shape.dims, rng);
    if shape.tied {
        let m = p.maps()[0].clone();
        PermutationSpec::new(vec![m.clone(), m]).expect("valid maps")
    } else {
        p
    }
}

fn random_layer(shape: &Shape, k: usize, o: usize, rng: &mut exchangeable::rng::Rng) -> ExchLayerParams {
    ExchLayerParams::random(shape.dims.len(), k, o, Activation::leaky_relu(), shape.tied, rng).expect("layer")
}

// 1. layer(P·X) = P·layer(X) for sparse inputs and legal P.
fn equivariance_suite() -> Outcome {
    let mut rng = seeded(1);
    let mut worst: f64 = 0.0;
    let mut pairs = 0;
    for shape in &SHAPES {
        for k in [1, 3] {
            for _ in 0..200 {
                let layer = random_layer(shape, k, 3, &mut rng);
                let density = rng.random_range(0.3..1.0);
                let x = random_sparse(shape.dims, k, density, &mut rng).map_err(err)?;
                let p = legal_permutation(shape, &mut rng);
                let lhs = exchangeable_tensor_layer(&apply_permutation(&x, &p).map_err(err)?, &layer).map_err(err)?;
                let rhs = apply_permutation(&exchangeable_tensor_layer(&x, &layer).map_err(err)?, &p).map_err(err)?;
                if lhs.index() != rhs.index() {
                    return Err(format!("output cells differ for dims {:?}", shape.dims));
                }
                worst = worst.max(max_abs_diff(lhs.values(), rhs.values()));
                pairs += 1;
            }
        }
    }
    check(
        worst <= TOLERANCE,
        format!("{pairs} (input, permutation) pairs over 5 shapes, K in {{1,3}}; max |deviation| {worst:.2e} (tol {TOLERANCE:.0e})"),
    )
}

// 2. Sparse pooled layer on fully observed input = σ(W vec(X) + b) with the
// explicit tied weight matrix.
fn dense_oracle_suite() -> Outcome {
    let mut rng = seeded(2);
    let mut worst: f64 = 0.0;
    let mut draws = 0;
    for shape in &SHAPES {
        let order = shape.dims.len();
        let cells: usize = shape.dims.iter().product();
        for _ in 0..100 {
            let (k, o) = (2, 3);
            let mut blocks: Vec<Array2<f64>> = (0..1 << order)
                .map(|_| Array2::from_shape_fn((k, o), |_| rng.random_range(-1.0..1.0)))
                .collect();
            if shape.tied {
                blocks[0b10] = blocks[0b01].clone();
            }
            let bias = Array1::from_shape_fn(o, |_| rng.random_range(-1.0..1.0));
            let dense = ExchLayerParams::from_blocks(blocks, bias, Activation::Sigmoid).map_err(err)?;
            let untied = dense_to_pooled(&dense, shape.dims).map_err(err)?;
            let pooled = if shape.tied {
                ExchLayerParams::matrix_tied(
                    untied.block(0b11).clone(),
                    untied.block(0b01).clone(),
                    untied.block(0b00).clone(),
                    untied.bias().clone(),
                    Activation::Sigmoid,
                )
                .map_err(err)?
            } else {
                untied
            };
            let x = Array2::from_shape_fn((cells, k), |_| rng.random_range(-1.0..1.0));
            let a = dense_oracle_layer(&x, &dense, shape.dims).map_err(err)?;
            let b = pooled_dense_layer(&x, &pooled, shape.dims).map_err(err)?;
            worst = worst.max(max_abs_diff(&a, &b));
            draws += 1;
        }
    }
    check(
        worst <= TOLERANCE,
        format!("{draws} weight draws over 5 shapes; max |sparse - dense| {worst:.2e} (tol {TOLERANCE:.0e})"),
    )
}

fn all_permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in all_permutations(n - 1) {
        for pos in 0..n {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

// 3. Exhaustive over the 24 flat permutations of a 2×2 matrix.
fn witness_suite() -> Outcome {
    let dims = [2, 2];
    let mut rng = seeded(3);
    let w = generic_weights(2, &mut rng);
    let generic = dense_to_pooled(&scalar_dense_params(&w, 0.1, Activation::Sigmoid).map_err(err)?, &dims).map_err(err)?;
    let constant =
        dense_to_pooled(&scalar_dense_params(&[0.7; 4], 0.1, Activation::Sigmoid).map_err(err)?, &dims).map_err(err)?;
    let f_generic = |x: &Array2<f64>| pooled_dense_layer(x, &generic, &dims);
    let f_constant = |x: &Array2<f64>| pooled_dense_layer(x, &constant, &dims);

    let perms = all_permutations(4);
    let (mut legal, mut witnessed, mut constant_witnesses) = (0, 0, 0);
    for map in &perms {
        // independent legality test: the map must act as (row perm, col perm)
        let row_of = |c: usize| c / 2;
        let col_of = |c: usize| c % 2;
        let independent = (0..4).all(|a| {
            (0..4).all(|b| {
                (row_of(a) == row_of(b)) == (row_of(map[a]) == row_of(map[b]))
                    && (col_of(a) == col_of(b)) == (col_of(map[a]) == col_of(map[b]))
            })
        });
        let p = FlatPermutation::new(map.clone()).map_err(err)?;
        let claimed = is_legal_permutation(&p, &dims).map_err(err)?.is_some();
        if claimed != independent {
            return Err(format!("legality of {map:?} misclassified"));
        }
        if independent {
            legal += 1;
            if find_witness(&f_generic, &p, 1).map_err(err)?.is_some() {
                return Err(format!("legal {map:?} has a witness"));
            }
        } else if find_witness(&f_generic, &p, 1).map_err(err)?.is_some() {
            witnessed += 1;
        }
        if find_witness(&f_constant, &p, 1).map_err(err)?.is_some() {
            constant_witnesses += 1;
        }
    }
    let illegal = perms.len() - legal;
    check(
        legal == 4 && witnessed == illegal && constant_witnesses == 0,
        format!(
            "{} permutations: {legal} legal, {witnessed}/{illegal} illegal witnessed, {constant_witnesses} witnesses under constant weights",
            perms.len()
        ),
    )
}

// 4. Orbits of cell pairs: brute force via the library vs an independent
// union-find over explicitly enumerated per-axis permutations.
fn independent_orbits(dims: &[usize]) -> usize {
    let cells: usize = dims.iter().product();
    let axis_perms: Vec<Vec<Vec<usize>>> = dims.iter().map(|&n| all_permutations(n)).collect();
    let mut group: Vec<Vec<Vec<usize>>> = vec![vec![]];
    for ap in &axis_perms {
        group = group
            .into_iter()
            .flat_map(|g| ap.iter().map(move |p| [g.clone(), vec![p.clone()]].concat()))
            .collect();
    }
    let coords = |c: usize| -> Vec<usize> {
        let mut out = vec![0; dims.len()];
        let mut r = c;
        for i in (0..dims.len()).rev() {
            out[i] = r % dims[i];
            r /= dims[i];
        }
        out
    };
    let flat = |idx: &[usize]| idx.iter().zip(dims).fold(0, |acc, (&i, &n)| acc * n + i);
    let mut seen = vec![false; cells * cells];
    let mut orbits = 0;
    for start in 0..cells * cells {
        if seen[start] {
            continue;
        }
        orbits += 1;
        let (a, b) = (coords(start / cells), coords(start % cells));
        for g in &group {
            let ga: Vec<usize> = a.iter().enumerate().map(|(i, &v)| g[i][v]).collect();
            let gb: Vec<usize> = b.iter().enumerate().map(|(i, &v)| g[i][v]).collect();
            seen[flat(&ga) * cells + flat(&gb)] = true;
        }
    }
    orbits
}

fn orbit_suite() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for (dims, expected) in [(&[3usize][..], 2usize), (&[2, 3][..], 4), (&[2, 2, 2][..], 8)] {
        let got = count_orbits(dims).map_err(err)?;
        let oracle = independent_orbits(dims);
        ok &= got == expected && oracle == expected;
        lines.push(format!("{dims:?}: {got} (oracle {oracle}, expected {expected})"));
    }
    check(ok, lines.join("; "))
}

// 5. Backprop through a 2-layer, 4-channel model vs central differences of
// an independently computed loss.
fn gradient_suite() -> Outcome {
    let mut rng = seeded(5);
    let config = ModelConfig {
        hidden: vec![4],
        dropout_after: vec![],
        mask_probability: 0.0,
        ..ModelConfig::self_supervised(4)
    };
    let mut model = Model::new(config, 5).map_err(err)?;
    let x = full_tensor(&[3, 3], Array2::from_shape_fn((9, 4), |_| rng.random_range(-1.0..1.0))).map_err(err)?;
    let rows: Vec<usize> = vec![0, 2, 4, 5, 8];
    let onehot = Array2::from_shape_fn((rows.len(), 4), |(r, c)| f64::from(u8::from((r + c) % 4 == 0)));
    let targets = LossTargets { rows: rows.clone(), onehot: onehot.clone() };

    let loss_of = |m: &Model| -> Result<f64, String> {
        let g = build_graph(m, &x, None, Mode::Eval).map_err(err)?;
        let dist = g.forward().map_err(err)?.get(g.output).select(ndarray::Axis(0), &rows);
        Ok(cross_entropy_loss(&dist, &onehot).map_err(err)?.loss)
    };
    let (loss, analytic) = loss_and_gradients(&model, &x, None, &targets, Mode::Eval).map_err(err)?;
    let direct = loss_of(&model)?;
    if (loss - direct).abs() > 1e-10 {
        return Err(format!("graph loss {loss} vs direct {direct}"));
    }

    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut count = 0;
    let shapes: Vec<(usize, usize)> = parameter_views(&mut model).iter().map(|v| v.dim()).collect();
    for (t, &(r, c)) in shapes.iter().enumerate() {
        for i in 0..r {
            for j in 0..c {
                let bump = |m: &mut Model, d: f64| parameter_views(m)[t][[i, j]] += d;
                let mut plus = model.clone();
                bump(&mut plus, h);
                let mut minus = model.clone();
                bump(&mut minus, -h);
                let numeric = (loss_of(&plus)? - loss_of(&minus)?) / (2.0 * h);
                let a = analytic[t][[i, j]];
                // relative error with a floor so exact zeros compare absolutely
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
                worst = worst.max(rel);
                count += 1;
            }
        }
    }
    check(
        worst < 1e-4,
        format!("{count} parameters of a 2-layer 4-channel model on 3x3; max relative error {worst:.2e} (< 1e-4)"),
    )
}

// 6. Sampler frequencies against exact binomial moments.
fn sampling_suite() -> Outcome {
    let trials = 10_000usize;
    let (n, batch) = (100usize, 10usize);
    let mut hits = vec![0usize; n];
    for t in 0..trials {
        for &r in &uniform_subsample(n, batch, t as u64).map_err(err)?.rows {
            hits[r] += 1;
        }
    }
    let p = batch as f64 / n as f64;
    let sigma = (trials as f64 * p * (1.0 - p)).sqrt();
    let uniform_worst = hits.iter().map(|&h| (h as f64 - trials as f64 * p).abs() / sigma).fold(0.0, f64::max);

    // rows 0..10 with row r holding r+1 observed cells
    let tuples: Vec<Vec<usize>> = (0..10).flat_map(|r| (0..=r).map(move |c| vec![r, c])).collect();
    let index = IndexSet::from_tuples(vec![10, 10], &tuples).map_err(err)?;
    let total = tuples.len() as f64;
    let mut row_hits = [0usize; 10];
    for t in 0..trials {
        let b = conditional_subsample(&index, 1, 10, t as u64).map_err(err)?;
        let first = index.get(b.rows[0])[0];
        if b.rows.iter().any(|&r| index.get(r)[0] != first) {
            return Err("target-rows = 1 produced cells from two rows".into());
        }
        row_hits[first] += 1;
    }
    let cond_worst = row_hits
        .iter()
        .enumerate()
        .map(|(r, &h)| {
            let q = (r + 1) as f64 / total;
            (h as f64 - trials as f64 * q).abs() / (trials as f64 * q * (1.0 - q)).sqrt()
        })
        .fold(0.0, f64::max);
    check(
        uniform_worst <= 3.0 && cond_worst <= 3.0,
        format!(
            "{trials} trials; uniform per-cell max |z| {uniform_worst:.2}, conditional row-selection max |z| {cond_worst:.2} (bound 3)"
        ),
    )
}

fn small_fea() -> ModelConfig {
    ModelConfig {
        encoder: vec![32, 32, 16],
        decoder: vec![32, 32],
        dropout_after: vec![],
        ..ModelConfig::fea(5)
    }
}

fn small_ss() -> ModelConfig {
    ModelConfig {
        hidden: vec![32, 32, 32],
        dropout_after: vec![],
        ..ModelConfig::self_supervised(5)
    }
}

fn fit(config: ModelConfig, table: &RatingsTable, epochs: usize, seed: u64) -> Result<Model, String> {
    let cfg = TrainConfig {
        epochs,
        optimizer: Optimizer::adam(1e-3),
        seed,
        patience: 0,
        ..TrainConfig::default()
    };
    // no validation set: the returned model is the final-epoch one
    Ok(train(Model::new(config, seed).map_err(err)?, &cfg, table, None).map_err(err)?.best)
}

/// The FEA trained on the standard synthetic task, shared by criteria 7, 8, 10.
fn trained_fea() -> &'static Result<(Model, f64), String> {
    static CELL: OnceLock<Result<(Model, f64), String>> = OnceLock::new();
    CELL.get_or_init(|| {
        let start = Instant::now();
        let split = synthetic_task(&SyntheticSpec::standard(0)).map_err(err)?;
        let model = fit(small_fea(), &split.train, 500, 0)?;
        Ok((model, start.elapsed().as_secs_f64()))
    })
}

// 7. Both models beat fixed RMSE thresholds on held-out synthetic cells.
fn synthetic_suite() -> Outcome {
    let split = synthetic_task(&SyntheticSpec::standard(0)).map_err(err)?;
    let mean = split.train.values().iter().sum::<f64>() / split.train.len() as f64;
    let baseline = rmse(&vec![mean; split.test.len()], &split.test.values()).map_err(err)?;
    let (fea, fea_secs) = trained_fea().clone()?;
    let fea_rmse = evaluate(&fea, &split.train, &split.test, DecodeRule::Expectation).map_err(err)?.rmse;
    let start = Instant::now();
    let ss = fit(small_ss(), &split.train, 500, 0)?;
    let ss_secs = start.elapsed().as_secs_f64();
    let ss_rmse = evaluate(&ss, &split.train, &split.test, DecodeRule::Expectation).map_err(err)?.rmse;
    check(
        fea_rmse <= 0.75 && ss_rmse <= 0.80 && fea_secs + ss_secs < 300.0,
        format!(
            "50x60 rank-2, 30% observed, 500 epochs: FEA {fea_rmse:.3} (<= 0.75, {fea_secs:.0}s), self-supervised {ss_rmse:.3} (<= 0.80, {ss_secs:.0}s); mean baseline {baseline:.3}"
        ),
    )
}

// 8. Inductive transfer to a disjoint matrix, and RMSE vs observed fraction.
fn extrapolation_suite() -> Outcome {
    let (fea, _) = trained_fea().clone()?;
    let mut fea = fea;
    fea.config.cold_policy = ColdPolicy::ImputeGlobalMean;
    let a = synthetic_task(&SyntheticSpec::standard(0)).map_err(err)?;
    let interp = evaluate(&fea, &a.train, &a.test, DecodeRule::Expectation).map_err(err)?.rmse;

    let b_spec = |p: f64| SyntheticSpec {
        observed_fraction: p,
        id_prefix: "b-".into(),
        ..SyntheticSpec::standard(1)
    };
    let b = synthetic_task(&b_spec(0.3)).map_err(err)?;
    let extrap = evaluate(&fea, &b.train, &b.test, DecodeRule::Expectation).map_err(err)?.rmse;
    let gap = (extrap - interp).abs() / interp;

    // one 50x60 matrix leaves only 150 held-out cells at p = 95% (RMSE noise
    // ~0.035, wider than the 0.02 tolerance), so each point averages ten
    // disjoint matrices
    let fractions: Vec<f64> = (0..10).map(|i| 0.05 + 0.1 * i as f64).collect();
    let mut curve = Vec::new();
    for &p in &fractions {
        let mut total = 0.0;
        for seed in 1..=10 {
            let task = synthetic_task(&SyntheticSpec {
                seed,
                ..b_spec(p)
            })
            .map_err(err)?;
            total += evaluate(&fea, &task.train, &task.test, DecodeRule::Expectation).map_err(err)?.rmse;
        }
        curve.push(total / 10.0);
    }
    let monotone = curve.windows(2).all(|w| w[1] <= w[0] + 0.02);
    let shown: Vec<String> = fractions.iter().zip(&curve).map(|(p, r)| format!("{:.0}%:{r:.3}", p * 100.0)).collect();
    check(
        gap <= 0.2 && monotone,
        format!(
            "FEA interpolation {interp:.3}, disjoint matrix {extrap:.3} (gap {:.1}% <= 20%); sweep over 10 matrices {} (non-increasing within 0.02: {monotone})",
            gap * 100.0,
            shown.join(" ")
        ),
    )
}

// 9. MovieLens-100k canonical u1 split, only when the data is present.
fn movielens_suite() -> Option<Outcome> {
    let dir = std::path::PathBuf::from(std::env::var_os("ML100K_DIR")?);
    Some(movielens_run(&dir))
}

fn movielens_run(dir: &std::path::Path) -> Outcome {
    let start = Instant::now();
    let split = file_pair_split(&dir.join("u1.base"), &dir.join("u1.test"), Format::MovielensTab, RatingScale::five_star())
        .map_err(err)?;
    // early stopping on 5% of the training ratings, never on the test split
    let inner = random_split(&split.train, 0.05, 0.0, 1).map_err(err)?;
    let config = ModelConfig {
        hidden: vec![64, 64],
        dropout_after: vec![1, 2],
        ..ModelConfig::self_supervised(5)
    };
    let cfg = TrainConfig {
        epochs: 1000,
        optimizer: Optimizer::adam(1e-3),
        seed: 1,
        patience: 20,
        time_limit_secs: Some(25.0 * 60.0),
        ..TrainConfig::default()
    };
    let out = train(Model::new(config, 1).map_err(err)?, &cfg, &inner.train, Some(&inner.test)).map_err(err)?;
    let epochs = out.report.epochs.len();
    let score = evaluate(&out.best, &split.train, &split.test, DecodeRule::Expectation).map_err(err)?.rmse;
    let secs = start.elapsed().as_secs_f64();
    check(
        score <= 1.00 && secs < 1800.0,
        format!("3-layer 64-channel self-supervised model, u1 test RMSE {score:.3} (<= 1.00) after {epochs} epochs in {secs:.0}s"),
    )
}

// 10. Parameter count is independent of the input shape, and a checkpoint
// evaluates on a matrix with unrelated ids.
fn parameter_sharing_suite() -> Outcome {
    let mut rng = seeded(10);
    let counted = |m: &Model, dims: [usize; 2], cells: usize, rng: &mut exchangeable::rng::Rng| -> Result<usize, String> {
        let mut seen = std::collections::BTreeSet::new();
        while seen.len() < cells {
            seen.insert([rng.random_range(0..dims[0]), rng.random_range(0..dims[1])]);
        }
        let tuples: Vec<Vec<usize>> = seen.iter().map(|c| c.to_vec()).collect();
        let index = IndexSet::from_tuples(dims.to_vec(), &tuples).map_err(err)?;
        let mut values = Array2::zeros((index.len(), 5));
        for r in 0..index.len() {
            values[[r, rng.random_range(0..5)]] = 1.0;
        }
        let x = SparseTensor::with_values(std::sync::Arc::new(index), values).map_err(err)?;
        let g = build_graph(m, &x, None, Mode::Eval).map_err(err)?;
        Ok(g.params
            .iter()
            .flat_map(|n| n.slots.iter().chain([&n.bias]))
            .map(|&id| {
                let (r, c) = g.graph.shape(id);
                r * c
            })
            .sum())
    };
    let paper_fea = Model::new(ModelConfig::fea(5), 10).map_err(err)?;
    let small = counted(&paper_fea, [10, 10], 60, &mut rng)?;
    let large = counted(&paper_fea, [943, 1682], 5000, &mut rng)?;

    let (fea, _) = trained_fea().clone()?;
    let ck = Checkpoint {
        model: fea.clone(),
        scale: RatingScale::five_star(),
        metadata: Metadata { seed: 0, epochs: 500, best_rmse: None },
    };
    let restored = Checkpoint::from_bytes(&ck.to_bytes().map_err(err)?).map_err(err)?;
    let b = synthetic_task(&SyntheticSpec {
        id_prefix: "other-".into(),
        ..SyntheticSpec::standard(7)
    })
    .map_err(err)?;
    let shared_ids = b.train.users().ids().iter().any(|u| u.starts_with('u'));
    let transfer = evaluate(&restored.model, &b.train, &b.test, DecodeRule::Expectation).map_err(err)?.rmse;
    check(
        small == large && small == paper_fea.num_parameters() && restored.model == fea && !shared_ids && transfer.is_finite(),
        format!(
            "FEA parameters counted in graphs on 10x10 and 943x1682: {small} and {large}; restored checkpoint RMSE on a disjoint id space {transfer:.3}"
        ),
    )
}

type Criterion = (&'static str, Box<dyn Fn() -> Option<Outcome>>);

fn main() {
    let criteria: Vec<Criterion> = vec![
        ("1 equivariance", Box::new(|| Some(equivariance_suite()))),
        ("2 dense oracle", Box::new(|| Some(dense_oracle_suite()))),
        ("3 illegal-permutation witnesses", Box::new(|| Some(witness_suite()))),
        ("4 orbit counts", Box::new(|| Some(orbit_suite()))),
        ("5 gradient check", Box::new(|| Some(gradient_suite()))),
        ("6 sampling unbiasedness", Box::new(|| Some(sampling_suite()))),
        ("7 synthetic completion", Box::new(|| Some(synthetic_suite()))),
        ("8 inductive extrapolation", Box::new(|| Some(extrapolation_suite()))),
        ("9 MovieLens-100k", Box::new(movielens_suite)),
        ("10 shape-independent parameters", Box::new(|| Some(parameter_sharing_suite()))),
    ];
    let mut failed = 0;
    for (name, run) in &criteria {
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Some(Ok(msg)) => println!("PASS    {name}: {msg} [{secs:.1}s]"),
            Some(Err(msg)) => {
                failed += 1;
                println!("FAIL    {name}: {msg} [{secs:.1}s]");
            }
            None => println!("NOT RUN {name}: dataset not present; set ML100K_DIR to a directory holding u1.base and u1.test"),
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
