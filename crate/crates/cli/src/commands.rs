use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::Rng as _;
use serde_json::{json, Value};

use exchangeable::checkpoint::{Checkpoint, Metadata};
use exchangeable::config::RunConfig;
use exchangeable::data::{encode_onehot, random_split, RatingsTable};
use exchangeable::layers::ColdPolicy;
use exchangeable::models::{fea_encode, Architecture, DecodeRule, Mode, Model};
use exchangeable::rng::derive;
use exchangeable::sampling::{conditional_subsample, conditional_targets, uniform_subsample, SamplerKind};
use exchangeable::training::{self, evaluate as eval_model};
use exchangeable::verifier::verify_suite;

use crate::input::{parse_scale, Loaded};
use crate::{Arch, CliError, CliResult, Cold, DataArgs, Decode, EvalArgs, EvalMode, FactorizeArgs, SampleArgs, TrainArgs, VerifyArgs};

/// Prints a record as one JSON line and appends it to `file` if given.
fn emit(record: &Value, file: Option<&Path>) -> CliResult<()> {
    let line = serde_json::to_string(record)?;
    println!("{line}");
    if let Some(path) = file {
        let mut f = fs::OpenOptions::new().create(true).append(true).open(path)?;
        writeln!(f, "{line}")?;
    }
    Ok(())
}

fn arch(a: Arch) -> Architecture {
    match a {
        Arch::Fea => Architecture::Fea,
        Arch::SelfSupervised => Architecture::SelfSupervised,
    }
}

/// CLI data flags, falling back to the config file's `[data]` section.
fn merged_data(flags: &DataArgs, config: &RunConfig) -> DataArgs {
    DataArgs {
        data: flags.data.clone().or_else(|| config.data.path.clone()),
        format: flags.format.clone().or_else(|| config.data.format.clone()),
        split: flags.split.clone().or_else(|| config.data.split.clone()),
        scale: flags.scale.clone().or_else(|| config.data.scale.clone()),
    }
}

pub fn train(a: &TrainArgs) -> CliResult<bool> {
    let text = match &a.config {
        Some(p) => fs::read_to_string(p).map_err(|e| CliError::Usage(format!("config {}: {e}", p.display())))?,
        None => String::new(),
    };
    let requested = a.arch.map(arch);
    // the scale (and so the number of levels) may itself come from the file
    let probe = RunConfig::from_toml_str(&text, requested, 5)?;
    let data = merged_data(&a.data, &probe);
    let scale = parse_scale(data.scale.as_deref().unwrap_or("1-5"))?;
    let mut config = RunConfig::from_toml_str(&text, requested, scale.len())?;
    let t = &mut config.train;
    if let Some(v) = a.seed {
        t.seed = v;
    }
    if let Some(v) = a.epochs {
        t.epochs = v;
    }
    if let Some(v) = a.budget {
        t.budget = v;
    }
    if let Some(v) = &a.sampler {
        t.sampler = v.parse::<SamplerKind>()?;
    }
    if let Some(v) = a.lr {
        t.optimizer = t.optimizer.with_lr(v);
    }
    if let Some(v) = a.patience {
        t.patience = v;
    }
    t.validate()?;
    let out = a.out.clone().or_else(|| config.out.clone()).unwrap_or_else(|| PathBuf::from("exch-run"));
    let seed = config.train.seed;

    let loaded = data.load(&scale, seed)?;
    let (fit_on, validation) = if a.val_fraction > 0.0 {
        let s = random_split(&loaded.train, a.val_fraction, 0.0, seed ^ 0x7a1)?;
        (s.train, Some(s.test))
    } else {
        (loaded.train.clone(), loaded.test.clone())
    };
    fs::create_dir_all(&out)?;
    let run = json!({
        "model": config.model,
        "train": config.train,
        "scale": scale.to_string(),
        "val_fraction": a.val_fraction,
    });
    fs::write(out.join("run.json"), serde_json::to_string_pretty(&run)?)?;

    let model = Model::new(config.model.clone(), seed)?;
    let outcome = training::train(model, &config.train, &fit_on, validation.as_ref())?;
    let report_path = out.join("report.jsonl");
    fs::write(&report_path, "")?;
    for r in &outcome.report.epochs {
        emit(&serde_json::to_value(r)?, Some(&report_path))?;
    }
    let ck = Checkpoint {
        model: outcome.best.clone(),
        scale: scale.clone(),
        metadata: Metadata {
            seed,
            epochs: outcome.report.epochs.len(),
            best_rmse: outcome.report.best_val_rmse,
        },
    };
    let ck_path = out.join("checkpoint.exch");
    ck.save(&ck_path)?;
    let test_rmse = match &loaded.test {
        Some(test) => Some(eval_model(&outcome.best, &loaded.train, test, config.train.decode)?.rmse),
        None => None,
    };
    emit(
        &json!({
            "event": "final",
            "best_epoch": outcome.report.best_epoch,
            "validation_rmse": outcome.report.best_val_rmse,
            "test_rmse": test_rmse,
            "stopped_early": outcome.report.stopped_early,
            "wall_clock_secs": outcome.report.wall_clock_secs,
            "checkpoint": ck_path,
        }),
        Some(&report_path),
    )?;
    Ok(true)
}

fn load_checkpoint(path: &Path) -> CliResult<Checkpoint> {
    if !path.exists() {
        return Err(CliError::Usage(format!("checkpoint {} does not exist", path.display())));
    }
    Ok(Checkpoint::load(path)?)
}

/// Loads data onto the checkpoint's scale, rebinning when asked.
fn load_for(ck: &Checkpoint, data: &DataArgs, rebin: Option<(&str, &str)>, seed: u64) -> CliResult<Loaded> {
    let target = &ck.scale;
    let (data_scale, rebin_to) = match rebin {
        Some((from, to)) => {
            let (from, to) = (parse_scale(from)?, parse_scale(to)?);
            if &to != target {
                return Err(CliError::Usage(format!("--rebin-to {to} differs from the checkpoint scale {target}")));
            }
            (from, Some(to))
        }
        None => {
            let s = data.scale.as_deref().map(parse_scale).transpose()?.unwrap_or_else(|| target.clone());
            if &s != target {
                return Err(CliError::Usage(format!(
                    "data scale {s} differs from the checkpoint scale {target}; pass --rebin-from {s} --rebin-to {target}"
                )));
            }
            (s, None)
        }
    };
    let loaded = data.load(&data_scale, seed).map_err(|e| match e {
        CliError::Usage(m) if rebin_to.is_none() && m.contains("not valid on scale") => CliError::Usage(format!(
            "{m}; the data does not fit the checkpoint scale {target}, pass --rebin-from <data scale> --rebin-to {target}"
        )),
        other => other,
    })?;
    match rebin_to {
        None => Ok(loaded),
        Some(to) => Ok(Loaded {
            train: loaded.train.rebinned(&to)?,
            test: loaded.test.map(|t| t.rebinned(&to)).transpose()?,
        }),
    }
}

pub fn evaluate(a: &EvalArgs, mode: EvalMode) -> CliResult<bool> {
    let ck = load_checkpoint(&a.checkpoint)?;
    let rebin = a.rebin_from.as_deref().zip(a.rebin_to.as_deref());
    let loaded = load_for(&ck, &a.data, rebin, a.seed)?;
    let mut model = ck.model;
    model.config.cold_policy = match (a.cold, mode) {
        (Some(Cold::Reject), _) => ColdPolicy::Reject,
        (Some(Cold::Impute), _) | (None, EvalMode::Extrapolate) => ColdPolicy::ImputeGlobalMean,
        (None, EvalMode::Interpolate) => model.config.cold_policy,
    };
    let rule = match a.decode {
        Decode::Expectation => DecodeRule::Expectation,
        Decode::Argmax => DecodeRule::Argmax,
    };
    let mode_name = match mode {
        EvalMode::Interpolate => "interpolate",
        EvalMode::Extrapolate => "extrapolate",
    };
    let mut tasks: Vec<(Option<f64>, RatingsTable, RatingsTable)> = Vec::new();
    if a.observed_fraction.is_empty() {
        let test = loaded.test.clone().ok_or_else(|| {
            CliError::Usage("no held-out ratings: pass --split or --observed-fraction".into())
        })?;
        tasks.push((None, loaded.train.clone(), test));
    } else {
        let pool = loaded.all()?;
        for &p in &a.observed_fraction {
            if !(p > 0.0 && p < 1.0) {
                return Err(CliError::Usage(format!("observed fraction {p} outside (0, 1)")));
            }
            let s = random_split(&pool, 1.0 - p, 0.0, a.seed)?;
            tasks.push((Some(p), s.train, s.test));
        }
    }
    for (p, observed, query) in tasks {
        let e = eval_model(&model, &observed, &query, rule)?;
        emit(
            &json!({
                "mode": mode_name,
                "observed_fraction": p,
                "observed": observed.len(),
                "query": query.len(),
                "rmse": e.rmse,
                "decode": a.decode.to_possible_value_name(),
            }),
            a.out.as_deref(),
        )?;
    }
    Ok(true)
}

trait ValueName {
    fn to_possible_value_name(&self) -> String;
}

impl<T: clap::ValueEnum> ValueName for T {
    fn to_possible_value_name(&self) -> String {
        self.to_possible_value().map(|v| v.get_name().to_owned()).unwrap_or_default()
    }
}

fn write_factors(path: &Path, ids: &[String], z: &ndarray::Array2<f64>) -> CliResult<()> {
    let mut text = String::from("id");
    for k in 0..z.ncols() {
        text.push_str(&format!("\tf{k}"));
    }
    text.push('\n');
    for (id, row) in ids.iter().zip(z.rows()) {
        text.push_str(id);
        for v in row {
            text.push_str(&format!("\t{v}"));
        }
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

pub fn factorize(a: &FactorizeArgs) -> CliResult<bool> {
    let ck = load_checkpoint(&a.checkpoint)?;
    if ck.model.architecture() != Architecture::Fea {
        return Err(CliError::Usage(format!(
            "{} holds a self-supervised model, which defines no factors; use an FEA checkpoint",
            a.checkpoint.display()
        )));
    }
    let table = load_for(&ck, &a.data, None, 0)?.all()?;
    if table.is_empty() {
        return Err(CliError::Usage("the matrix has no ratings".into()));
    }
    let x = encode_onehot(&table)?;
    let f = fea_encode(&x, &ck.model, Mode::Eval)?;
    fs::create_dir_all(&a.out)?;
    let rows = a.out.join("row_factors.tsv");
    let cols = a.out.join("col_factors.tsv");
    write_factors(&rows, table.users().ids(), &f.rows)?;
    write_factors(&cols, table.items().ids(), &f.cols)?;
    emit(
        &json!({
            "rows": f.rows.nrows(),
            "cols": f.cols.nrows(),
            "factor_size": f.channels(),
            "row_factors": rows,
            "col_factors": cols,
        }),
        None,
    )?;
    Ok(true)
}

pub fn verify(a: &VerifyArgs) -> CliResult<bool> {
    let r = verify_suite(&a.dims, a.trials, a.seed)?;
    let eq = &r.equivariance;
    emit(
        &json!({
            "dims": r.dims,
            "cells": r.cells,
            "passed": r.passed,
            "trials": eq.trials,
            "legal_max_deviation": eq.legal_max_deviation,
            "tolerance": eq.tolerance,
            "illegal_checked": eq.illegal.len(),
            "illegal_witnessed": eq.illegal.iter().filter(|c| c.witness.is_some()).count(),
            "orbit_count": eq.orbit_count,
            "expected_orbits": eq.expected_orbits,
            "oracle_draws": r.oracle_draws,
            "oracle_max_deviation": r.oracle_max_deviation,
            "constant_weight_witnesses": r.constant_weight_witnesses,
            "distinct_weight_values": r.distinct_weight_values,
        }),
        None,
    )?;
    if let Some(path) = &a.out {
        fs::write(path, serde_json::to_string_pretty(&r)?)?;
    }
    Ok(r.passed)
}

pub fn sample_check(a: &SampleArgs) -> CliResult<bool> {
    let kind: SamplerKind = a.sampler.parse()?;
    let scale = parse_scale(a.data.scale.as_deref().unwrap_or("1-5"))?;
    let table = a.data.load(&scale, a.seed)?.train;
    let index = encode_onehot(&table)?.index().clone();
    let n = index.len();
    if a.budget == 0 {
        return Err(CliError::Usage("--budget must be at least 1".into()));
    }
    if kind == SamplerKind::Uniform && a.budget > n {
        return Err(CliError::Usage(format!("budget {} exceeds the {n} observed cells", a.budget)));
    }
    if a.trials == 0 {
        emit(&json!({ "sampler": a.sampler, "trials": 0, "cells": n }), None)?;
        return Ok(true);
    }
    let t = a.trials as f64;
    let trial_seed = |i: usize| derive(a.seed, i as u64).random::<u64>();
    match kind {
        SamplerKind::Uniform => {
            let mut hits = vec![0usize; n];
            for i in 0..a.trials {
                for &r in &uniform_subsample(n, a.budget, trial_seed(i))?.rows {
                    hits[r] += 1;
                }
            }
            let p = a.budget as f64 / n as f64;
            let sigma = (t * p * (1.0 - p)).sqrt();
            let z: Vec<f64> = hits
                .iter()
                .map(|&h| if sigma > 0.0 { (h as f64 - t * p) / sigma } else { 0.0 })
                .collect();
            let freq: Vec<f64> = hits.iter().map(|&h| h as f64 / t).collect();
            let within = z.iter().filter(|v| v.abs() <= 3.0).count();
            emit(
                &json!({
                    "sampler": "uniform",
                    "trials": a.trials,
                    "budget": a.budget,
                    "cells": n,
                    "expected_frequency": p,
                    "mean_frequency": freq.iter().sum::<f64>() / n as f64,
                    "min_frequency": freq.iter().copied().fold(f64::INFINITY, f64::min),
                    "max_frequency": freq.iter().copied().fold(0.0, f64::max),
                    "max_abs_z": z.iter().fold(0.0f64, |m, v| m.max(v.abs())),
                    "within_3_sigma": within as f64 / n as f64,
                }),
                None,
            )?;
            if let Some(path) = &a.out {
                let mut text = String::from("user\titem\tfrequency\tz\n");
                for (r, (f, zr)) in freq.iter().zip(&z).enumerate() {
                    let idx = index.get(r);
                    text.push_str(&format!(
                        "{}\t{}\t{f}\t{zr}\n",
                        table.users().id(idx[0]),
                        table.items().id(idx[1])
                    ));
                }
                fs::write(path, text)?;
            }
        }
        SamplerKind::Conditional => {
            let (r, c) = conditional_targets(&index, a.budget);
            let (target_rows, target_cols) = (a.target_rows.unwrap_or(r), a.target_cols.unwrap_or(c));
            let rows = index.dims()[0];
            let mut row_counts = vec![0usize; rows];
            for idx in index.iter() {
                row_counts[idx[0]] += 1;
            }
            let mut selected = vec![0usize; rows];
            let mut batch_cells = 0usize;
            for i in 0..a.trials {
                let b = conditional_subsample(&index, target_rows, target_cols, trial_seed(i))?;
                batch_cells += b.len();
                let mut seen = vec![false; rows];
                for &r in &b.rows {
                    seen[index.get(r)[0]] = true;
                }
                for (s, hit) in selected.iter_mut().zip(seen) {
                    *s += usize::from(hit);
                }
            }
            // with one target row the selection law is exactly |R_n| / |I|
            let exact = target_rows == 1;
            let mut max_z: f64 = 0.0;
            let mut text = String::from("user\tobserved\tselected_frequency\texpected\n");
            for r in 0..rows {
                let q = row_counts[r] as f64 / n as f64;
                let f = selected[r] as f64 / t;
                if exact && q > 0.0 && q < 1.0 {
                    max_z = max_z.max((selected[r] as f64 - t * q).abs() / (t * q * (1.0 - q)).sqrt());
                }
                let expected = if exact { format!("{q}") } else { "NA".into() };
                text.push_str(&format!("{}\t{}\t{f}\t{expected}\n", table.users().id(r), row_counts[r]));
            }
            emit(
                &json!({
                    "sampler": "conditional",
                    "trials": a.trials,
                    "budget": a.budget,
                    "cells": n,
                    "target_rows": target_rows,
                    "target_cols": target_cols,
                    "mean_batch_cells": batch_cells as f64 / t,
                    "row_selection_max_abs_z": if exact { Some(max_z) } else { None },
                }),
                None,
            )?;
            if let Some(path) = &a.out {
                fs::write(path, text)?;
            }
        }
    }
    Ok(true)
}
