use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};

use sigdraw::approximator::block_targets;
use sigdraw::drawdown::TargetKind;
use sigdraw::evaluate::{bm_baseline, compare_distributions, ks_statistic, quantile, TAIL_LEVELS};
use sigdraw::ingest::load_prices;
use sigdraw::io::load_paths_csv;
use sigdraw::paths::{make_blocks, SeriesPath};
use sigdraw::seed::derive_seed;
use sigdraw::{Error, Result};

use crate::config::Settings;
use crate::manifest::{write_manifest, Manifest};
use crate::ReportArgs;

use super::{ensure_out_dir, parse_weights, val_count, BASELINE_TAG};

/// Equal-width histogram counts over the pooled range of all samples.
fn histogram(samples: &[&[f64]], bins: usize) -> (Vec<(f64, f64)>, Vec<Vec<usize>>) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for s in samples {
        for &x in *s {
            lo = lo.min(x);
            hi = hi.max(x);
        }
    }
    if !(hi - lo > 1e-12) {
        lo -= 0.5;
        hi += 0.5;
    }
    let w = (hi - lo) / bins as f64;
    let edges: Vec<(f64, f64)> =
        (0..bins).map(|i| (lo + i as f64 * w, lo + (i + 1) as f64 * w)).collect();
    let counts = samples
        .iter()
        .map(|s| {
            let mut c = vec![0usize; bins];
            for &x in *s {
                let bin = (((x - lo) / w).floor() as usize).min(bins - 1);
                c[bin] += 1;
            }
            c
        })
        .collect();
    (edges, counts)
}

/// Pooled standard deviation of one-step changes across blocks: the
/// volatility the Brownian baseline is matched to.
fn increment_std(blocks: &[SeriesPath<f64>]) -> f64 {
    let incs: Vec<f64> =
        blocks.iter().flat_map(|b| b.values.windows(2).map(|w| w[1] - w[0])).collect();
    let mean = incs.iter().sum::<f64>() / incs.len() as f64;
    (incs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / incs.len() as f64).sqrt()
}

pub fn run(args: &ReportArgs) -> Result<()> {
    let mut s = Settings::load(args.common.config.as_deref())?;
    let data = s.require("data", args.data.clone())?;
    let weights = s.get("weights", args.weights.clone(), "equal".to_string())?;
    let tau = s.get("tau", args.tau, 20)?;
    let target = s.get("target", args.target, TargetKind::Integrated)?;
    let rebase = s.get("rebase", args.rebase, true)?;
    let val_fraction = s.get("val-fraction", args.val_fraction, 0.1)?;
    let samples_flag =
        if args.samples.is_empty() { None } else { Some(args.samples.join(",")) };
    let sample_files = s.get_with("samples", samples_flag, "", |t| {
        let files: Vec<String> =
            t.split(',').map(str::trim).filter(|x| !x.is_empty()).map(String::from).collect();
        if files.is_empty() || files.len() > 2 {
            return Err(Error::invalid("give one or two generated-sample CSV files"));
        }
        Ok(files)
    })?;
    let baseline_paths = s.get("baseline-paths", args.baseline_paths, 5000)?;
    let bins = s.get("bins", args.bins, 40)?;
    let n_qq = s.get("qq", args.qq, 99)?;
    let seed = s.get("seed", args.common.seed, 42)?;
    let out = s.require("out", args.common.out.clone())?;
    let resolved = s.finish()?;

    // empirical reference: drawdown summaries of the held-out tail
    let table = load_prices::<f64>(&data)?;
    let spec = parse_weights(&weights, table.n_assets())?;
    let series = sigdraw::ingest::portfolio_series(&table, &spec)?;
    let blocks = make_blocks(&series, tau, rebase)?;
    let n_val = val_count(val_fraction, blocks.len());
    let held = if n_val > 0 { &blocks[blocks.len() - n_val..] } else { &blocks[..] };
    let actual = block_targets(held, target);

    let sigma = increment_std(held);
    let baseline =
        bm_baseline(sigma, tau, baseline_paths, derive_seed(seed, BASELINE_TAG), target)?;

    let dir = ensure_out_dir(&out)?;
    let mut artifacts = Vec::new();
    let mut results = BTreeMap::new();
    results.insert("held-blocks".to_string(), held.len().to_string());
    results.insert("baseline-sigma".to_string(), sigma.to_string());

    let mut model_targets: Vec<(String, Vec<f64>)> = Vec::new();
    for (i, file) in sample_files.iter().enumerate() {
        let name = format!("model{}", i + 1);
        let rows = load_paths_csv::<f64>(file)?;
        if rows.iter().any(|r| r.len() != tau) {
            return Err(Error::data(
                None,
                format!("{file}: sample paths must have exactly {tau} points"),
            ));
        }
        let paths: Vec<SeriesPath<f64>> =
            rows.into_iter().map(|v| SeriesPath::new(v, 1.0)).collect::<Result<_>>()?;
        let targets = block_targets(&paths, target);
        let comp = compare_distributions(&targets, &actual, n_qq)?;

        let qq_name = format!("qq_{name}.csv");
        let mut f = BufWriter::new(File::create(dir.join(&qq_name))?);
        writeln!(f, "q,synthetic,actual")?;
        for p in &comp.qq {
            writeln!(f, "{},{},{}", p.q, p.a, p.b)?;
        }
        artifacts.push(qq_name);

        let scatter_name = format!("scatter_{name}.csv");
        let mut f = BufWriter::new(File::create(dir.join(&scatter_name))?);
        writeln!(f, "actual,synthetic")?;
        let k = 200.min(targets.len()).min(actual.len());
        for j in 1..=k {
            let q = j as f64 / (k + 1) as f64;
            writeln!(f, "{},{}", quantile(&actual, q)?, quantile(&targets, q)?)?;
        }
        artifacts.push(scatter_name);

        results.insert(format!("ks-{name}"), comp.ks.to_string());
        model_targets.push((name, targets));
    }

    let mut f = BufWriter::new(File::create(dir.join("ks.csv"))?);
    writeln!(f, "sample,ks")?;
    for (name, targets) in &model_targets {
        writeln!(f, "{name},{}", ks_statistic(targets, &actual)?)?;
    }
    writeln!(f, "baseline,{}", ks_statistic(&baseline, &actual)?)?;
    drop(f);
    artifacts.push("ks.csv".to_string());

    let mut f = BufWriter::new(File::create(dir.join("tails.csv"))?);
    writeln!(f, "sample,q90,q95,q99")?;
    let mut tail_row = |name: &str, xs: &[f64]| -> Result<()> {
        let qs: Vec<String> = TAIL_LEVELS
            .iter()
            .map(|&q| Ok(quantile(xs, q)?.to_string()))
            .collect::<Result<_>>()?;
        writeln!(f, "{name},{}", qs.join(","))?;
        Ok(())
    };
    tail_row("actual", &actual)?;
    for (name, targets) in &model_targets {
        tail_row(name, targets)?;
    }
    tail_row("baseline", &baseline)?;
    drop(tail_row);
    artifacts.push("tails.csv".to_string());

    let mut hist_samples: Vec<&[f64]> = vec![&actual];
    for (_, t) in &model_targets {
        hist_samples.push(t);
    }
    hist_samples.push(&baseline);
    let (edges, counts) = histogram(&hist_samples, bins);
    let mut f = BufWriter::new(File::create(dir.join("histogram.csv"))?);
    let names: Vec<String> = std::iter::once("actual".to_string())
        .chain(model_targets.iter().map(|(n, _)| n.clone()))
        .chain(std::iter::once("baseline".to_string()))
        .collect();
    writeln!(f, "lo,hi,{}", names.join(","))?;
    for (b, (lo, hi)) in edges.iter().enumerate() {
        let row: Vec<String> = counts.iter().map(|c| c[b].to_string()).collect();
        writeln!(f, "{lo},{hi},{}", row.join(","))?;
    }
    drop(f);
    artifacts.push("histogram.csv".to_string());

    write_manifest(
        &dir,
        &Manifest { command: "report", config: resolved, artifacts, results },
    )?;
    println!(
        "report: {} models vs {} held-out blocks -> {}",
        model_targets.len(),
        held.len(),
        dir.display()
    );
    Ok(())
}
