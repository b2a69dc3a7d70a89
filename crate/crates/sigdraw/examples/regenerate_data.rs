//! Regenerates the bundled sample price table at `data/synthetic_prices.csv`
//! (relative to the current directory). The table is fully determined by
//! the row count and seed below; a unit test pins the bundled file to this
//! exact output.

use sigdraw::ingest::{synthetic_price_table, write_prices};

pub const ROWS: usize = 1100;
pub const SEED: u64 = 20;

fn main() {
    let table = synthetic_price_table::<f64>(ROWS, SEED).expect("valid parameters");
    std::fs::create_dir_all("data").expect("create data directory");
    let file = std::fs::File::create("data/synthetic_prices.csv").expect("create file");
    write_prices(&table, std::io::BufWriter::new(file)).expect("write table");
    println!("wrote data/synthetic_prices.csv ({ROWS} rows, seed {SEED})");
}
