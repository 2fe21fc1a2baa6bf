//! Three small interactive views of exchangeable layers, compiled to wasm.
//!
//! Each view is a plain function returning a serialisable struct so it can be
//! tested natively; the `#[wasm_bindgen]` wrappers only turn results into
//! JSON strings for the page in `www/`.

use exchangeable::autodiff::Activation;
use exchangeable::layers::{exchangeable_matrix_layer, ExchLayerParams};
use exchangeable::rng::derive;
use exchangeable::sampling::{conditional_subsample, conditional_targets, uniform_subsample};
use exchangeable::tensor::{apply_permutation, unvectorize_index, IndexSet, PermutationSpec, SparseTensor};
use exchangeable::verifier::{build_full_weight_matrix, count_orbits};
use ndarray::Array2;
use rand::Rng as _;
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Largest `prod(dims)` drawn as a full weight matrix.
pub const MAX_PATTERN_CELLS: usize = 64;
/// Largest side of the matrices in the layer and sampler views.
pub const MAX_SIDE: usize = 40;

/// Rows of a matrix with `None` for unobserved cells.
pub type Grid = Vec<Vec<Option<f64>>>;

#[derive(Debug, Serialize)]
pub struct WeightPattern {
    pub dims: Vec<usize>,
    /// Multi-index of each row/column of the weight matrix.
    pub labels: Vec<Vec<usize>>,
    /// `mask[a][b]`: bit `i` set iff cells `a` and `b` agree on axis `i`, so
    /// equal masks share one tied weight.
    pub mask: Vec<Vec<usize>>,
    pub distinct_weights: usize,
    pub orbits: usize,
}

/// Parameter-sharing pattern of the full `prod(N) x prod(N)` weight matrix.
pub fn weight_pattern(dims: &[usize]) -> Result<WeightPattern, String> {
    if dims.is_empty() || dims.contains(&0) {
        return Err("dims must be positive".into());
    }
    let cells = dims.iter().try_fold(1usize, |a, &n| a.checked_mul(n)).unwrap_or(usize::MAX);
    if cells > MAX_PATTERN_CELLS {
        return Err(format!("{cells} cells; at most {MAX_PATTERN_CELLS} can be drawn"));
    }
    let ids: Vec<f64> = (0..1usize << dims.len()).map(|m| m as f64).collect();
    let w = build_full_weight_matrix(&ids, dims).map_err(|e| e.to_string())?;
    let mask: Vec<Vec<usize>> = w.rows().into_iter().map(|r| r.iter().map(|&v| v as usize).collect()).collect();
    let mut seen = vec![false; ids.len()];
    mask.iter().flatten().for_each(|&m| seen[m] = true);
    Ok(WeightPattern {
        dims: dims.to_vec(),
        labels: (0..cells)
            .map(|f| unvectorize_index(f, dims))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?,
        mask,
        distinct_weights: seen.iter().filter(|&&s| s).count(),
        orbits: count_orbits(dims).map_err(|e| e.to_string())?,
    })
}

#[derive(Debug, Serialize)]
pub struct EquivarianceView {
    pub row_perm: Vec<usize>,
    pub col_perm: Vec<usize>,
    pub input: Grid,
    pub output: Grid,
    pub permuted_input: Grid,
    /// Layer applied to the permuted input.
    pub output_of_permuted: Grid,
    /// `max |f(πX) - π f(X)|` over observed cells.
    pub max_deviation: f64,
}

fn check_side(n: usize, what: &str) -> Result<(), String> {
    if n == 0 || n > MAX_SIDE {
        return Err(format!("{what} must be in 1..={MAX_SIDE}"));
    }
    Ok(())
}

/// Each cell observed with probability `density`; at least one is kept.
fn random_pattern(rows: usize, cols: usize, density: f64, seed: u64) -> Result<IndexSet, String> {
    check_side(rows, "rows")?;
    check_side(cols, "cols")?;
    if !(0.0..=1.0).contains(&density) {
        return Err("density must be in [0, 1]".into());
    }
    let mut rng = derive(seed, 1);
    let mut coords = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            if rng.random::<f64>() < density {
                coords.extend([r, c]);
            }
        }
    }
    if coords.is_empty() {
        coords.extend([rng.random_range(0..rows), rng.random_range(0..cols)]);
    }
    IndexSet::from_flat(vec![rows, cols], coords).map(|(ix, _)| ix).map_err(|e| e.to_string())
}

fn grid(t: &SparseTensor) -> Grid {
    let [n, m] = [t.dims()[0], t.dims()[1]];
    (0..n).map(|r| (0..m).map(|c| t.get(&[r, c]).map(|v| v[0])).collect()).collect()
}

/// Random sparse matrix, random single-channel layer and random row/column
/// permutation, with the layer applied before and after permuting.
pub fn equivariance_view(rows: usize, cols: usize, density: f64, seed: u64) -> Result<EquivarianceView, String> {
    let index = random_pattern(rows, cols, density, seed)?;
    let mut rng = derive(seed, 2);
    let values = Array2::from_shape_fn((index.len(), 1), |_| rng.random_range(-1.0..1.0));
    let x = SparseTensor::with_values(index.into(), values).map_err(|e| e.to_string())?;
    let params = ExchLayerParams::random(2, 1, 1, Activation::Sigmoid, false, &mut rng).map_err(|e| e.to_string())?;
    // a single channel makes the default initialisation nearly flat; stretch
    // it so the output colours vary visibly
    let params = {
        let mut p = params;
        p.slots_mut().iter_mut().for_each(|s| s.mapv_inplace(|v| 4.0 * v));
        p
    };
    let p = PermutationSpec::random(&[rows, cols], &mut rng);
    let layer = |t: &SparseTensor| exchangeable_matrix_layer(t, &params).map_err(|e| e.to_string());
    let y = layer(&x)?;
    let px = apply_permutation(&x, &p).map_err(|e| e.to_string())?;
    let ypx = layer(&px)?;
    let pys = apply_permutation(&y, &p).map_err(|e| e.to_string())?;
    let mut max_deviation: f64 = 0.0;
    for idx in pys.index().iter() {
        let a = pys.get(idx).expect("same index")[0];
        let b = ypx.get(idx).ok_or("permuted output lost a cell")?[0];
        max_deviation = max_deviation.max((a - b).abs());
    }
    Ok(EquivarianceView {
        row_perm: p.maps()[0].clone(),
        col_perm: p.maps()[1].clone(),
        input: grid(&x),
        output: grid(&y),
        permuted_input: grid(&px),
        output_of_permuted: grid(&ypx),
        max_deviation,
    })
}

#[derive(Debug, Serialize)]
pub struct SamplerView {
    pub sampler: String,
    pub trials: usize,
    pub observed: usize,
    pub target_rows: usize,
    pub target_cols: usize,
    /// Fraction of trials that included each observed cell.
    pub frequency: Grid,
    /// Mean batch size.
    pub mean_batch: f64,
    /// Per-cell z-score extremes for the uniform sampler (inclusion
    /// probability `budget / observed`); `None` for the conditional one.
    pub max_abs_z: Option<f64>,
}

/// Empirical inclusion frequency of every observed cell under `trials`
/// batches of the uniform or conditional sampler.
pub fn sampler_view(
    rows: usize,
    cols: usize,
    density: f64,
    budget: usize,
    trials: usize,
    sampler: &str,
    seed: u64,
) -> Result<SamplerView, String> {
    let index = random_pattern(rows, cols, density, seed)?;
    let n = index.len();
    if budget == 0 || trials == 0 || trials > 100_000 {
        return Err("budget must be positive and trials in 1..=100000".into());
    }
    let (tr, tc) = conditional_targets(&index, budget);
    let mut counts = vec![0usize; n];
    let mut total = 0usize;
    for t in 0..trials {
        let s = seed.wrapping_add(t as u64);
        let batch = match sampler {
            "uniform" => uniform_subsample(n, budget.min(n), s),
            "conditional" => conditional_subsample(&index, tr, tc, s),
            _ => return Err(format!("unknown sampler {sampler:?}")),
        }
        .map_err(|e| e.to_string())?;
        total += batch.len();
        batch.rows.iter().for_each(|&r| counts[r] += 1);
    }
    let freq: Vec<f64> = counts.iter().map(|&c| c as f64 / trials as f64).collect();
    let max_abs_z = (sampler == "uniform" && budget < n).then(|| {
        let p = budget as f64 / n as f64;
        let sd = (p * (1.0 - p) / trials as f64).sqrt();
        freq.iter().map(|f| ((f - p) / sd).abs()).fold(0.0, f64::max)
    });
    let t = SparseTensor::with_values(index.into(), Array2::from_shape_vec((n, 1), freq).expect("n rows"))
        .map_err(|e| e.to_string())?;
    Ok(SamplerView {
        sampler: sampler.to_owned(),
        trials,
        observed: n,
        target_rows: tr,
        target_cols: tc,
        frequency: grid(&t),
        mean_batch: total as f64 / trials as f64,
        max_abs_z,
    })
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsValue> {
    r.and_then(|v| serde_json::to_string(&v).map_err(|e| e.to_string())).map_err(|e| JsValue::from_str(&e))
}

/// `dims` as a comma list, e.g. `"2,3"`.
#[wasm_bindgen(js_name = weightPattern)]
pub fn weight_pattern_js(dims: &str) -> Result<String, JsValue> {
    let parsed: Result<Vec<usize>, String> =
        dims.split(',').map(|s| s.trim().parse().map_err(|_| format!("bad dimension {s:?}"))).collect();
    to_js(parsed.and_then(|d| weight_pattern(&d)))
}

#[wasm_bindgen(js_name = equivarianceView)]
pub fn equivariance_view_js(rows: usize, cols: usize, density: f64, seed: u32) -> Result<String, JsValue> {
    to_js(equivariance_view(rows, cols, density, seed.into()))
}

#[wasm_bindgen(js_name = samplerView)]
pub fn sampler_view_js(
    rows: usize,
    cols: usize,
    density: f64,
    budget: usize,
    trials: usize,
    sampler: &str,
    seed: u32,
) -> Result<String, JsValue> {
    to_js(sampler_view(rows, cols, density, budget, trials, sampler, seed.into()))
}
