//! Drawdown of a value series and its scalar reductions.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::float::Float;
use crate::paths::SeriesPath;

/// Scalar reduction of the drawdown series used as the regression target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetKind {
    /// Drawdown at the final point.
    Terminal,
    /// Maximum drawdown over the window.
    Maximum,
    /// Trapezoidal integral of the drawdown series over unit-spaced steps.
    Integrated,
}

impl fmt::Display for TargetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TargetKind::Terminal => "terminal",
            TargetKind::Maximum => "maximum",
            TargetKind::Integrated => "integrated",
        };
        f.write_str(s)
    }
}

impl FromStr for TargetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "terminal" => Ok(TargetKind::Terminal),
            "maximum" => Ok(TargetKind::Maximum),
            "integrated" => Ok(TargetKind::Integrated),
            other => Err(Error::invalid(format!(
                "unknown target kind '{other}' (expected terminal, maximum or integrated)"
            ))),
        }
    }
}

/// Pointwise drawdown: `xi_t = max_{k <= t} s_k - s_t`. The running maximum
/// includes the current point, so `xi_0 = 0` and every entry is
/// non-negative.
pub fn drawdown_series<T: Float>(path: &SeriesPath<T>) -> Vec<T> {
    let mut peak = T::neg_infinity();
    path.values
        .iter()
        .map(|&v| {
            peak = peak.max(v);
            peak - v
        })
        .collect()
}

/// Reduces the drawdown series of `path` to a single number. The integrated
/// kind uses the trapezoid rule with unit spacing between consecutive
/// points.
pub fn drawdown_target<T: Float>(path: &SeriesPath<T>, kind: TargetKind) -> T {
    let xi = drawdown_series(path);
    match kind {
        TargetKind::Terminal => *xi.last().expect("path has points"),
        TargetKind::Maximum => xi.iter().fold(T::zero(), |m, &v| m.max(v)),
        TargetKind::Integrated => {
            let half = T::cast(0.5);
            xi.windows(2).map(|w| (w[0] + w[1]) * half).fold(T::zero(), |s, v| s + v)
        }
    }
}
