use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;

use sigdraw::approximator::{fit_drawdown_approximator, DrawdownModel};
use sigdraw::drawdown::TargetKind;
use sigdraw::generator::{train, write_history_csv, TrainConfig};
use sigdraw::ingest::load_prices;
use sigdraw::io::{load_model, save_model, DRAWDOWN_MODEL_KIND, GENERATOR_MODEL_KIND};
use sigdraw::regression::CvConfig;
use sigdraw::seed::derive_seed;
use sigdraw::{Error, Result};

use crate::config::Settings;
use crate::manifest::{write_manifest, Manifest};
use crate::TrainArgs;

use super::{collect_blocks, ensure_out_dir, val_count, FIT_TAG};

pub fn run(args: &TrainArgs) -> Result<()> {
    let mut s = Settings::load(args.common.config.as_deref())?;
    let data = s.require("data", args.data.clone())?;
    let weights = s.get("weights", args.weights.clone(), "equal".to_string())?;
    let tau = s.get("tau", args.tau, 20)?;
    let level = s.get("level", args.level, 4)?;
    let target = s.get("target", args.target, TargetKind::Integrated)?;
    let rebase = s.get("rebase", args.rebase, true)?;
    let alpha = s.get("alpha", args.alpha, 1e-4)?;
    let beta = s.get_opt("beta", args.beta)?;
    let batch = s.get("batch", args.batch, 50)?;
    let steps = s.get("steps", args.steps, 200)?;
    let patience = s.get("patience", args.patience, 3)?;
    let lr = s.get("lr", args.lr, 1e-3)?;
    let dropout = s.get("dropout", args.dropout, 0.01)?;
    let hidden = s.get("hidden", args.hidden, 50)?;
    let latent = s.get("latent", args.latent, 10)?;
    let val_fraction = s.get("val-fraction", args.val_fraction, 0.1)?;
    let folds = s.get("folds", args.folds, 10)?;
    let drawdown_model = s.get_opt("drawdown-model", args.drawdown_model.clone())?;
    let seed = s.get("seed", args.common.seed, 42)?;
    let out = s.require("out", args.common.out.clone())?;
    let resolved = s.finish()?;

    let table = load_prices::<f64>(&data)?;
    let blocks = collect_blocks(&table, &weights, None, tau, rebase, seed)?;

    // the drawdown predictor sees only the blocks the generator trains on,
    // never the validation tail
    let (drawdown, fitted_here): (DrawdownModel<f64>, bool) = match &drawdown_model {
        Some(path) => {
            let model: DrawdownModel<f64> = load_model(DRAWDOWN_MODEL_KIND, path)?;
            if model.tau != tau {
                return Err(Error::invalid(format!(
                    "drawdown model expects windows of {} points, training uses {tau}",
                    model.tau
                )));
            }
            (model, false)
        }
        None => {
            let n_fit = blocks.len() - val_count(val_fraction, blocks.len());
            let cv = CvConfig { folds, ..CvConfig::default() };
            let model = fit_drawdown_approximator(
                &blocks[..n_fit],
                level,
                target,
                &cv,
                true,
                derive_seed(seed, FIT_TAG),
            )?;
            (model, true)
        }
    };

    let cfg = TrainConfig {
        tau,
        hidden,
        latent,
        level,
        learning_rate: lr,
        dropout,
        batch,
        max_steps: steps,
        patience,
        alpha,
        beta,
        val_fraction,
        seed,
        ..TrainConfig::default()
    };
    let outcome = train(&blocks, &drawdown, &cfg)?;

    let dir = ensure_out_dir(&out)?;
    save_model(GENERATOR_MODEL_KIND, &outcome.model, dir.join("generator.json"))?;
    let mut artifacts = vec!["generator.json".to_string(), "history.csv".to_string()];
    if fitted_here {
        save_model(DRAWDOWN_MODEL_KIND, &drawdown, dir.join("drawdown.json"))?;
        artifacts.push("drawdown.json".to_string());
    }
    let history = File::create(dir.join("history.csv"))?;
    write_history_csv(&outcome.history, BufWriter::new(history))?;

    let mut results = BTreeMap::new();
    results.insert("blocks".to_string(), blocks.len().to_string());
    results.insert("steps".to_string(), outcome.steps.to_string());
    results.insert("stopped-early".to_string(), outcome.stopped_early.to_string());
    write_manifest(
        &dir,
        &Manifest { command: "train", config: resolved, artifacts, results },
    )?;

    if outcome.stopped_early {
        println!(
            "train: stopped early after step {} (no validation improvement for {patience} steps)",
            outcome.steps - 1
        );
    } else {
        println!("train: ran all {} steps", outcome.steps);
    }
    println!("train: model -> {}", dir.join("generator.json").display());
    Ok(())
}
