use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;

use sigdraw::approximator::{run_fbm_study, StudyConfig};
use sigdraw::drawdown::TargetKind;
use sigdraw::regression::CvConfig;
use sigdraw::Result;

use crate::config::{parse_f64_list, parse_usize_list, Settings};
use crate::manifest::{write_manifest, Manifest};
use crate::FbmStudyArgs;

use super::ensure_out_dir;

pub fn run(args: &FbmStudyArgs) -> Result<()> {
    let mut s = Settings::load(args.common.config.as_deref())?;
    let hursts = s.get_with("h", args.h.clone(), "0.4,0.55,0.7", parse_f64_list)?;
    let levels = s.get_with("m", args.m.clone(), "1..6", parse_usize_list)?;
    let ks = s.get_with("k", args.k.clone(), "1000,5000,20000", parse_usize_list)?;
    let tau = s.get("tau", args.tau, 20)?;
    let p_test = s.get("p-test", args.p_test, 0.1)?;
    let mu = s.get("mu", args.mu, 0.01 / 252.0)?;
    let sigma = s.get("sigma", args.sigma, 0.20 / 252.0)?;
    let target = s.get("target", args.target, TargetKind::Integrated)?;
    let folds = s.get("folds", args.folds, 10)?;
    let seed = s.get("seed", args.common.seed, 42)?;
    let out = s.require("out", args.common.out.clone())?;
    let resolved = s.finish()?;

    let cfg = StudyConfig {
        hursts,
        levels,
        ks,
        tau,
        p_test,
        mu,
        sigma,
        target,
        cv: CvConfig { folds, ..CvConfig::default() },
        seed,
    };
    let report = run_fbm_study(&cfg)?;

    let dir = ensure_out_dir(&out)?;
    let file = File::create(dir.join("study.csv"))?;
    report.write_csv(BufWriter::new(file))?;

    let mut results = BTreeMap::new();
    results.insert("rows".to_string(), report.rows.len().to_string());
    write_manifest(
        &dir,
        &Manifest {
            command: "fbm-study",
            config: resolved,
            artifacts: vec!["study.csv".to_string()],
            results,
        },
    )?;
    println!("study: {} rows -> {}", report.rows.len(), dir.join("study.csv").display());
    Ok(())
}
