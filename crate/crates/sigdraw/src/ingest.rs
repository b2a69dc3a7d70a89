//! Price-table ingestion and portfolio construction.
//!
//! The input format is a plain CSV with a `date` column (ISO dates,
//! strictly increasing) followed by one column of positive prices per
//! asset. A row with an empty cell is dropped (and counted); anything
//! malformed is an error with its line number, on the theory that silently
//! repairing financial data is worse than failing.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use chrono::{Datelike, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::float::Float;
use crate::paths::SeriesPath;

/// Aligned daily prices for a set of assets. `columns[a][t]` is the price
/// of asset `a` on `dates[t]`; dates are strictly increasing and prices are
/// positive and finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceTable<T> {
    pub dates: Vec<NaiveDate>,
    pub names: Vec<String>,
    pub columns: Vec<Vec<T>>,
    /// Rows discarded during loading because a cell was empty.
    pub dropped_rows: usize,
}

impl<T: Float> PriceTable<T> {
    pub fn n_assets(&self) -> usize {
        self.names.len()
    }

    pub fn n_rows(&self) -> usize {
        self.dates.len()
    }
}

/// Reads a price table from any reader; see the module docs for the
/// format.
pub fn read_prices<T: Float, R: Read>(reader: R) -> Result<PriceTable<T>> {
    let mut lines = BufReader::new(reader).lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((no, line)) => {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                break (no, line);
            }
            None => return Err(Error::data(None, "empty file")),
        }
    };
    let fields: Vec<&str> = header.1.trim_end().split(',').collect();
    if fields.first().map(|f| f.trim()) != Some("date") {
        return Err(Error::data(header.0 + 1, "header must start with a 'date' column"));
    }
    let names: Vec<String> = fields[1..].iter().map(|s| s.trim().to_string()).collect();
    if names.is_empty() || names.iter().any(|n| n.is_empty()) {
        return Err(Error::data(header.0 + 1, "header needs at least one named asset column"));
    }
    for (i, n) in names.iter().enumerate() {
        if names[..i].contains(n) {
            return Err(Error::data(header.0 + 1, format!("duplicate asset column '{n}'")));
        }
    }

    let mut dates: Vec<NaiveDate> = Vec::new();
    let mut columns: Vec<Vec<T>> = vec![Vec::new(); names.len()];
    let mut dropped = 0usize;
    for (no, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = no + 1;
        let cells: Vec<&str> = line.trim_end().split(',').collect();
        if cells.len() != names.len() + 1 {
            return Err(Error::data(
                lineno,
                format!("expected {} fields, found {}", names.len() + 1, cells.len()),
            ));
        }
        if cells.iter().any(|c| c.trim().is_empty()) {
            dropped += 1;
            continue;
        }
        let date = NaiveDate::parse_from_str(cells[0].trim(), "%Y-%m-%d")
            .map_err(|e| Error::data(lineno, format!("bad date '{}': {e}", cells[0])))?;
        if let Some(&last) = dates.last() {
            if date == last {
                return Err(Error::data(lineno, format!("duplicate date {date}")));
            }
            if date < last {
                return Err(Error::data(
                    lineno,
                    format!("dates must be strictly increasing ({last} then {date})"),
                ));
            }
        }
        let mut row = Vec::with_capacity(names.len());
        for cell in &cells[1..] {
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|e| Error::data(lineno, format!("bad price '{cell}': {e}")))?;
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::data(lineno, format!("price must be positive, got {cell}")));
            }
            row.push(T::cast(v));
        }
        dates.push(date);
        for (col, v) in columns.iter_mut().zip(row) {
            col.push(v);
        }
    }

    if dates.len() < 2 {
        return Err(Error::data(
            None,
            format!("only {} usable rows after dropping {dropped}", dates.len()),
        ));
    }
    Ok(PriceTable { dates, names, columns, dropped_rows: dropped })
}

/// Loads a price table from a file.
pub fn load_prices<T: Float>(path: impl AsRef<Path>) -> Result<PriceTable<T>> {
    let file = File::open(path.as_ref())?;
    read_prices(file)
}

/// Writes a table in the same CSV format [`read_prices`] accepts; loading
/// the output reproduces the table exactly.
pub fn write_prices<T: Float, W: Write>(table: &PriceTable<T>, mut w: W) -> std::io::Result<()> {
    write!(w, "date")?;
    for n in &table.names {
        write!(w, ",{n}")?;
    }
    writeln!(w)?;
    for (t, date) in table.dates.iter().enumerate() {
        write!(w, "{}", date.format("%Y-%m-%d"))?;
        for col in &table.columns {
            write!(w, ",{}", col[t])?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Buy-and-hold portfolio: initial weights over the assets, held without
/// rebalancing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioSpec<T> {
    pub weights: Vec<T>,
}

impl<T: Float> PortfolioSpec<T> {
    pub fn equal(n_assets: usize) -> Self {
        let w = T::one() / T::cast(n_assets.max(1));
        PortfolioSpec { weights: vec![w; n_assets] }
    }
}

/// Wealth path of a buy-and-hold portfolio: each asset's gross return
/// `p_t / p_0` weighted by the initial allocation. Starts at 1.
pub fn portfolio_series<T: Float>(
    table: &PriceTable<T>,
    spec: &PortfolioSpec<T>,
) -> Result<SeriesPath<T>> {
    if spec.weights.len() != table.n_assets() {
        return Err(Error::invalid(format!(
            "{} weights for {} assets",
            spec.weights.len(),
            table.n_assets()
        )));
    }
    let total = spec.weights.iter().fold(T::zero(), |s, &w| s + w);
    if (total - T::one()).abs() > T::cast(1e-6) {
        return Err(Error::invalid(format!("weights must sum to 1, got {total}")));
    }
    let mut values = vec![T::zero(); table.n_rows()];
    for (col, &w) in table.columns.iter().zip(&spec.weights) {
        let first = col[0];
        for (v, &p) in values.iter_mut().zip(col) {
            *v = *v + w * (p / first);
        }
    }
    SeriesPath::new(values, T::one())
}

/// `p` independent draws from the uniform distribution on the weight
/// simplex over `u` assets (normalized unit-rate exponentials).
pub fn random_weights<T: Float>(u: usize, p: usize, seed: u64) -> Result<Vec<PortfolioSpec<T>>> {
    if u == 0 || p == 0 {
        return Err(Error::invalid("need at least one asset and one portfolio"));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    Ok((0..p)
        .map(|_| {
            let draws: Vec<f64> = (0..u).map(|_| rng.sample(Exp1)).collect();
            let total: f64 = draws.iter().sum();
            PortfolioSpec { weights: draws.iter().map(|&g| T::cast(g / total)).collect() }
        })
        .collect())
}

/// Deterministic synthetic daily prices for four assets with distinct
/// volatility, persistence and tail behavior; the bundled sample data for
/// tests and walkthroughs. `rows` business days starting 1989-01-02.
pub fn synthetic_price_table<T: Float>(rows: usize, seed: u64) -> Result<PriceTable<T>> {
    if rows < 2 {
        return Err(Error::invalid("synthetic table needs at least 2 rows"));
    }
    // per asset: start price, per-day drift and vol of the log price,
    // AR(1) persistence of the shocks, and a (probability, multiplier)
    // mixture for occasional fat-tailed days
    struct Asset {
        name: &'static str,
        start: f64,
        drift: f64,
        vol: f64,
        phi: f64,
        burst: (f64, f64),
    }
    let assets = [
        Asset { name: "equity", start: 100.0, drift: 3.0e-4, vol: 0.0100, phi: 0.10, burst: (0.010, 2.0) },
        Asset { name: "bond", start: 100.0, drift: 1.2e-4, vol: 0.0030, phi: 0.05, burst: (0.0, 1.0) },
        Asset { name: "commodity", start: 50.0, drift: 1.0e-4, vol: 0.0120, phi: 0.18, burst: (0.008, 2.2) },
        Asset { name: "reit", start: 25.0, drift: 2.5e-4, vol: 0.0110, phi: 0.22, burst: (0.010, 2.0) },
    ];

    let mut dates = Vec::with_capacity(rows);
    let mut day = NaiveDate::from_ymd_opt(1989, 1, 2).unwrap();
    while dates.len() < rows {
        if !matches!(day.weekday(), Weekday::Sat | Weekday::Sun) {
            dates.push(day);
        }
        day = day.succ_opt().expect("date range");
    }

    let mut columns = Vec::with_capacity(assets.len());
    let mut names = Vec::with_capacity(assets.len());
    for (i, a) in assets.iter().enumerate() {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let mut col = Vec::with_capacity(rows);
        let mut log_price = a.start.ln();
        let mut shock = 0.0f64;
        col.push(T::cast(a.start));
        for _ in 1..rows {
            let z: f64 = rng.sample(StandardNormal);
            let burst = if a.burst.0 > 0.0 && rng.random::<f64>() < a.burst.0 {
                a.burst.1
            } else {
                1.0
            };
            shock = a.phi * shock + (1.0 - a.phi * a.phi).sqrt() * z * burst;
            log_price += a.drift + a.vol * shock;
            col.push(T::cast(log_price.exp()));
        }
        columns.push(col);
        names.push(a.name.to_string());
    }
    Ok(PriceTable { dates, names, columns, dropped_rows: 0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const SAMPLE: &str = "date,aaa,bbb\n\
        2020-01-01,100,50\n\
        2020-01-02,110,45\n\
        2020-01-03,105,55\n";

    #[test]
    fn reads_a_well_formed_table() {
        let t: PriceTable<f64> = read_prices(SAMPLE.as_bytes()).unwrap();
        assert_eq!(t.names, vec!["aaa", "bbb"]);
        assert_eq!(t.n_rows(), 3);
        assert_eq!(t.columns[0], vec![100.0, 110.0, 105.0]);
        assert_eq!(t.columns[1], vec![50.0, 45.0, 55.0]);
        assert_eq!(t.dropped_rows, 0);
    }

    #[test]
    fn drops_rows_with_missing_cells_and_counts_them() {
        let csv = "date,aaa,bbb\n2020-01-01,100,50\n2020-01-02,,45\n2020-01-03,105,55\n";
        let t: PriceTable<f64> = read_prices(csv.as_bytes()).unwrap();
        assert_eq!(t.n_rows(), 2);
        assert_eq!(t.dropped_rows, 1);
        assert_eq!(t.columns[0], vec![100.0, 105.0]);
    }

    #[test]
    fn rejects_malformed_input() {
        let no_date = "time,aaa\n2020-01-01,1\n";
        assert!(read_prices::<f64, _>(no_date.as_bytes()).is_err());
        let dup_date = "date,aaa\n2020-01-01,1\n2020-01-01,2\n";
        let err = read_prices::<f64, _>(dup_date.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("duplicate date"));
        let backwards = "date,aaa\n2020-01-02,1\n2020-01-01,2\n";
        assert!(read_prices::<f64, _>(backwards.as_bytes()).is_err());
        let bad_price = "date,aaa\n2020-01-01,1\n2020-01-02,zebra\n";
        let err = read_prices::<f64, _>(bad_price.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("line 3"));
        let negative = "date,aaa\n2020-01-01,1\n2020-01-02,-3\n";
        assert!(read_prices::<f64, _>(negative.as_bytes()).is_err());
        let wrong_fields = "date,aaa,bbb\n2020-01-01,1\n";
        assert!(read_prices::<f64, _>(wrong_fields.as_bytes()).is_err());
        let too_short = "date,aaa\n2020-01-01,1\n";
        assert!(read_prices::<f64, _>(too_short.as_bytes()).is_err());
        let dup_name = "date,aaa,aaa\n2020-01-01,1,2\n2020-01-02,1,2\n";
        assert!(read_prices::<f64, _>(dup_name.as_bytes()).is_err());
    }

    #[test]
    fn writing_then_reading_is_lossless() {
        let t: PriceTable<f64> = synthetic_price_table(40, 9).unwrap();
        let mut buf = Vec::new();
        write_prices(&t, &mut buf).unwrap();
        let back: PriceTable<f64> = read_prices(buf.as_slice()).unwrap();
        assert_eq!(t, back);
    }

    #[test]
    fn portfolio_weights_gross_returns() {
        let t: PriceTable<f64> = read_prices(SAMPLE.as_bytes()).unwrap();
        let s = portfolio_series(&t, &PortfolioSpec::equal(2)).unwrap();
        assert_abs_diff_eq!(s.values[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(s.values[1], 0.5 * 1.1 + 0.5 * 0.9, epsilon = 1e-12);
        assert_abs_diff_eq!(s.values[2], 0.5 * 1.05 + 0.5 * 1.1, epsilon = 1e-12);

        assert!(portfolio_series(&t, &PortfolioSpec { weights: vec![1.0] }).is_err());
        assert!(portfolio_series(&t, &PortfolioSpec { weights: vec![0.9, 0.2] }).is_err());
    }

    #[test]
    fn random_weights_live_on_the_simplex() {
        let ws = random_weights::<f64>(4, 25, 3).unwrap();
        assert_eq!(ws.len(), 25);
        for w in &ws {
            assert_eq!(w.weights.len(), 4);
            assert!(w.weights.iter().all(|&x| x >= 0.0));
            assert_abs_diff_eq!(w.weights.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        }
        assert_ne!(ws[0].weights, ws[1].weights);
        let again = random_weights::<f64>(4, 25, 3).unwrap();
        assert_eq!(ws, again);
        assert!(random_weights::<f64>(0, 1, 0).is_err());
    }

    /// The bundled sample data must be exactly what the generator (and the
    /// `regenerate_data` example) produces for the documented row count and
    /// seed.
    #[test]
    fn bundled_price_csv_matches_the_generator() {
        let bundled = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/synthetic_prices.csv");
        let table = synthetic_price_table::<f64>(1100, 20).unwrap();
        let mut expect = Vec::new();
        write_prices(&table, &mut expect).unwrap();
        let on_disk = std::fs::read(bundled).expect("bundled data/synthetic_prices.csv");
        assert_eq!(
            on_disk,
            expect,
            "data/synthetic_prices.csv has drifted from its generator; \
             run the regenerate_data example"
        );
    }

    #[test]
    fn synthetic_table_is_deterministic_and_heterogeneous() {
        let a: PriceTable<f64> = synthetic_price_table(300, 7).unwrap();
        let b: PriceTable<f64> = synthetic_price_table(300, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n_assets(), 4);
        assert_eq!(a.n_rows(), 300);
        assert!(a.columns.iter().flatten().all(|&p| p > 0.0));
        // business days only
        assert!(a
            .dates
            .iter()
            .all(|d| !matches!(d.weekday(), Weekday::Sat | Weekday::Sun)));
        // realized vols should separate the calm asset from the wild ones
        let vol = |col: &Vec<f64>| {
            let rets: Vec<f64> =
                col.windows(2).map(|w| (w[1] / w[0]).ln()).collect();
            let m = rets.iter().sum::<f64>() / rets.len() as f64;
            (rets.iter().map(|r| (r - m) * (r - m)).sum::<f64>() / rets.len() as f64).sqrt()
        };
        let vols: Vec<f64> = a.columns.iter().map(vol).collect();
        assert!(vols[1] < vols[0] && vols[1] < vols[2] && vols[1] < vols[3]);
    }
}
