//! Bundled datasets.
//!
//! The files live in `crates/core/fixtures/` and are embedded at compile time.
//! `USO_FIXTURE_DIR` points file lookups at another directory.

use std::path::PathBuf;

use crate::ingest::{parse_exchange_csv, ExchangeRecord, ParseOptions};

pub const FIXTURE_DIR_ENV: &str = "USO_FIXTURE_DIR";

/// Ten Gujarat rural exchanges with their outdoor-plant loop costs.
pub const TABLE3_CSV: &str = include_str!("../fixtures/table3.csv");
/// Rural DEL and village-phone growth series. Not consumed by any model.
pub const TABLE1_CSV: &str = include_str!("../fixtures/table1.csv");
/// Village-phone revenue survey sample sizes by circle.
pub const TABLE2_CSV: &str = include_str!("../fixtures/table2.csv");
pub const SIM_DEMO_JSON: &str = include_str!("../fixtures/sim_demo.json");
pub const SIM_GREEDY_SINGLE_JSON: &str = include_str!("../fixtures/sim_greedy_single.json");
pub const SDCA_DEMO_JSON: &str = include_str!("../fixtures/sdca_demo.json");
pub const SCENARIO_DEFAULT_JSON: &str = include_str!("../fixtures/scenario_default.json");

pub fn fixture_dir() -> PathBuf {
    std::env::var_os(FIXTURE_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures")))
}

pub fn table3_records() -> Vec<ExchangeRecord> {
    parse_exchange_csv(TABLE3_CSV.as_bytes(), ParseOptions::default())
        .expect("bundled table3.csv parses")
}

/// Total (local-only, long-distance) survey counts summed over circles.
pub fn table2_counts() -> (u64, u64) {
    let mut reader = csv::Reader::from_reader(TABLE2_CSV.as_bytes());
    reader
        .records()
        .map(|r| r.expect("bundled table2.csv parses"))
        .fold((0, 0), |(local, ld), row| {
            let n = |i: usize| row[i].trim().parse::<u64>().expect("integer count");
            (local + n(1), ld + n(2))
        })
}
