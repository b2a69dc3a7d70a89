use std::collections::BTreeMap;

use sigdraw::approximator::{approximate_drawdown, block_targets, fit_drawdown_approximator};
use sigdraw::drawdown::TargetKind;
use sigdraw::ingest::load_prices;
use sigdraw::io::{save_model, DRAWDOWN_MODEL_KIND};
use sigdraw::regression::{rmse, CvConfig};
use sigdraw::seed::derive_seed;
use sigdraw::Result;

use crate::config::Settings;
use crate::manifest::{write_manifest, Manifest};
use crate::FitArgs;

use super::{collect_blocks, ensure_out_dir, FIT_TAG};

pub fn run(args: &FitArgs) -> Result<()> {
    let mut s = Settings::load(args.common.config.as_deref())?;
    let data = s.require("data", args.data.clone())?;
    let weights = s.get("weights", args.weights.clone(), "equal".to_string())?;
    let portfolios = s.get_opt("portfolios", args.portfolios)?;
    let tau = s.get("tau", args.tau, 20)?;
    let level = s.get("level", args.level, 5)?;
    let target = s.get("target", args.target, TargetKind::Integrated)?;
    let rebase = s.get("rebase", args.rebase, false)?;
    let folds = s.get("folds", args.folds, 10)?;
    let temporal = s.get("temporal", args.temporal, true)?;
    let seed = s.get("seed", args.common.seed, 42)?;
    let out = s.require("out", args.common.out.clone())?;
    let resolved = s.finish()?;

    let table = load_prices::<f64>(&data)?;
    let blocks = collect_blocks(&table, &weights, portfolios, tau, rebase, seed)?;
    let cv = CvConfig { folds, ..CvConfig::default() };
    let model = fit_drawdown_approximator(
        &blocks,
        level,
        target,
        &cv,
        temporal,
        derive_seed(seed, FIT_TAG),
    )?;

    let preds: Vec<f64> =
        blocks.iter().map(|b| approximate_drawdown(&model, b)).collect::<Result<_>>()?;
    let fit_rmse = rmse(&preds, &block_targets(&blocks, target))?;

    let dir = ensure_out_dir(&out)?;
    save_model(DRAWDOWN_MODEL_KIND, &model, dir.join("model.json"))?;

    let mut results = BTreeMap::new();
    results.insert("blocks".to_string(), blocks.len().to_string());
    results.insert("dropped-rows".to_string(), table.dropped_rows.to_string());
    results.insert("rmse".to_string(), fit_rmse.to_string());
    write_manifest(
        &dir,
        &Manifest {
            command: "fit",
            config: resolved,
            artifacts: vec!["model.json".to_string()],
            results,
        },
    )?;
    println!(
        "fit: {} blocks, level {level}, rmse {fit_rmse} -> {}",
        blocks.len(),
        dir.join("model.json").display()
    );
    Ok(())
}
