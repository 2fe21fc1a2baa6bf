//! Trains both architectures on a seeded rank-2 rating matrix and prints the
//! held-out RMSE as training progresses.
//!
//! cargo run --release -p exchangeable --example synthetic -- [fea|ss] [epochs] [lr] [seed] [observed-fraction] [factor-mean]

use exchangeable::data::rmse;
use exchangeable::models::{Architecture, DecodeRule, Model, ModelConfig};
use exchangeable::synthetic::{synthetic_task, SyntheticSpec};
use exchangeable::training::{evaluate, train, Optimizer, TrainConfig};

fn main() -> exchangeable::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let arch: Architecture = args.get(1).map_or("fea", String::as_str).parse()?;
    let epochs: usize = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(500);
    let lr: f64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(1e-3);
    let seed: u64 = args.get(4).and_then(|s| s.parse().ok()).unwrap_or(0);

    let mut spec = SyntheticSpec::standard(seed);
    if let Some(f) = args.get(5).and_then(|s| s.parse().ok()) {
        spec.observed_fraction = f;
    }
    if let Some(mu) = args.get(6).and_then(|s| s.parse().ok()) {
        spec.factor_mean = mu;
    }
    let split = synthetic_task(&spec)?;
    let mean = split.train.values().iter().sum::<f64>() / split.train.len() as f64;
    let baseline = rmse(&vec![mean; split.test.len()], &split.test.values())?;
    println!("mean-rating baseline RMSE {baseline:.4}");

    let config = match arch {
        Architecture::Fea => ModelConfig {
            encoder: vec![32, 32, 16],
            decoder: vec![32, 32],
            dropout_after: vec![],
            ..ModelConfig::fea(5)
        },
        Architecture::SelfSupervised => ModelConfig {
            hidden: vec![32, 32, 32],
            dropout_after: vec![],
            ..ModelConfig::self_supervised(5)
        },
    };
    let model = Model::new(config, seed)?;
    let cfg = TrainConfig {
        epochs,
        optimizer: Optimizer::adam(lr),
        seed,
        patience: 0,
        ..TrainConfig::default()
    };
    let start = std::time::Instant::now();
    let out = train(model, &cfg, &split.train, Some(&split.test))?;
    for r in out.report.epochs.iter().filter(|r| r.epoch % 25 == 0 || r.epoch == 1) {
        println!("epoch {:4} loss {:.4} held-out RMSE {:.4}", r.epoch, r.loss, r.val_rmse.unwrap_or(f64::NAN));
    }
    let inner = exchangeable::data::random_split(&split.train, 0.15, 0.0, 99)?;
    let in_sample = evaluate(&out.best, &inner.train, &inner.test, DecodeRule::Expectation)?.rmse;
    println!("masked in-sample RMSE {in_sample:.4}");
    let final_rmse = evaluate(&out.best, &split.train, &split.test, DecodeRule::Expectation)?.rmse;
    println!(
        "best epoch {} RMSE {final_rmse:.4} in {:.1}s",
        out.report.best_epoch,
        start.elapsed().as_secs_f64()
    );
    Ok(())
}
