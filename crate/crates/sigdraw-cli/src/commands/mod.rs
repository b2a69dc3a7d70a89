//! Subcommand implementations and the plumbing they share.

pub mod fbm_study;
pub mod fit;
pub mod generate;
pub mod report;
pub mod train;

use std::path::PathBuf;

use sigdraw::ingest::{portfolio_series, random_weights, PortfolioSpec, PriceTable};
use sigdraw::paths::{make_blocks, SeriesPath};
use sigdraw::seed::derive_seed;
use sigdraw::{Error, Result};

use crate::config::parse_f64_list;

/// Seed-derivation tags, one per distinct random purpose, so subcommands
/// never reuse a raw seed for two jobs.
pub(crate) const PORTFOLIO_TAG: u64 = 0x10;
pub(crate) const FIT_TAG: u64 = 0x11;
pub(crate) const BASELINE_TAG: u64 = 0x12;

pub(crate) fn ensure_out_dir(path: &str) -> Result<PathBuf> {
    let dir = PathBuf::from(path);
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

pub(crate) fn parse_weights(text: &str, n_assets: usize) -> Result<PortfolioSpec<f64>> {
    if text == "equal" {
        return Ok(PortfolioSpec::equal(n_assets));
    }
    Ok(PortfolioSpec { weights: parse_f64_list(text)? })
}

/// Blocks of the configured portfolio's wealth path; with `portfolios`
/// set, blocks pooled from that many random simplex portfolios.
pub(crate) fn collect_blocks(
    table: &PriceTable<f64>,
    weights_text: &str,
    portfolios: Option<usize>,
    tau: usize,
    rebase: bool,
    seed: u64,
) -> Result<Vec<SeriesPath<f64>>> {
    match portfolios {
        Some(p) => {
            if weights_text != "equal" {
                return Err(Error::invalid(
                    "give either fixed weights or a portfolio count, not both",
                ));
            }
            let specs = random_weights(table.n_assets(), p, derive_seed(seed, PORTFOLIO_TAG))?;
            let mut blocks = Vec::new();
            for spec in &specs {
                blocks.extend(make_blocks(&portfolio_series(table, spec)?, tau, rebase)?);
            }
            Ok(blocks)
        }
        None => {
            let spec = parse_weights(weights_text, table.n_assets())?;
            make_blocks(&portfolio_series(table, &spec)?, tau, rebase)
        }
    }
}

/// Size of the held-out tail under a validation fraction; at least one
/// block whenever the fraction is positive.
pub(crate) fn val_count(fraction: f64, n: usize) -> usize {
    if fraction > 0.0 {
        ((fraction * n as f64).floor() as usize).max(1)
    } else {
        0
    }
}
