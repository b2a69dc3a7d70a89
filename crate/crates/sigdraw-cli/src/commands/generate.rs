use std::collections::BTreeMap;

use sigdraw::generator::GeneratorModel;
use sigdraw::io::{load_model, save_paths_csv, GENERATOR_MODEL_KIND};
use sigdraw::Result;

use crate::config::Settings;
use crate::manifest::{write_manifest, Manifest};
use crate::GenerateArgs;

use super::ensure_out_dir;

pub fn run(args: &GenerateArgs) -> Result<()> {
    let mut s = Settings::load(args.common.config.as_deref())?;
    let model_path = s.require("model", args.model.clone())?;
    let n = s.get("n", args.n, 1000)?;
    let seed = s.get("seed", args.common.seed, 42)?;
    let out = s.require("out", args.common.out.clone())?;
    let resolved = s.finish()?;

    let model: GeneratorModel<f64> = load_model(GENERATOR_MODEL_KIND, &model_path)?;
    let paths = model.sample(n, seed)?;
    let values: Vec<Vec<f64>> = paths.into_iter().map(|p| p.values).collect();

    let dir = ensure_out_dir(&out)?;
    save_paths_csv(&values, dir.join("samples.csv"))?;

    let mut results = BTreeMap::new();
    results.insert("paths".to_string(), n.to_string());
    results.insert("tau".to_string(), model.config.tau.to_string());
    write_manifest(
        &dir,
        &Manifest {
            command: "generate",
            config: resolved,
            artifacts: vec!["samples.csv".to_string()],
            results,
        },
    )?;
    println!("generate: {n} paths -> {}", dir.join("samples.csv").display());
    Ok(())
}
