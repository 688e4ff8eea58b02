//! Cost toolkit for rural universal service obligations.
//!
//! * [`ingest`]: exchange-record CSV parsing and consistency checks
//! * [`loop_cost`]: double-log loop-cost regression, density-size model, band and size-group means
//! * [`sdca`]: SDCA-level cost roll-ups and summary rows
//! * [`nusc`]: net universal service cost under capital-cost scenarios
//! * [`trading`]: tradable obligation ledger and market simulator
//!
//! Money is in thousand currency units throughout.
//!
//! With the default `parallel` feature, batch entry points run on rayon;
//! pass [`Execution::Sequential`] (or build without the feature) for the
//! single-threaded path. Results are identical either way.

pub mod error;
pub mod exec;
pub mod fixtures;
pub mod ingest;
pub mod loop_cost;
pub mod nusc;
pub mod sdca;
pub mod trading;

pub use error::{Error, Result, TradingError};
pub use exec::Execution;
pub use ingest::{parse_exchange_csv, validate_records, ExchangeRecord, ParseOptions, ValidationConfig};
pub use loop_cost::{fit_loglog, DensityBand, DensitySizeModel, LoopCostModel};
pub use nusc::{capital_recovery_factor, nusc_per_line, scenario_grid, NuscResult, NuscScenario, Revenue, RevenueMix};
pub use sdca::{estimate_sdca_cost, summarize_records, AggregateRow, SdcaCostEstimate, SdcaProfile};
pub use trading::{run_simulation, Ledger, SimConfig, SimulationOutcome};
