//! `uso`: loop-cost fitting, SDCA aggregation, NUSC scenarios and the obligation market.
//!
//! Exit status is 0 on success, 2 for bad input or failed validation, 1 otherwise.

mod report;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use report::{digest_file, opt4, sha256_hex, sig4, write_file, RunManifest};
use uso_core::fixtures::fixture_dir;
use uso_core::ingest::{parse_exchange_csv, validate_records, ParseOptions, SummaryRows, ValidationConfig};
use uso_core::loop_cost::{fit_records, DensitySizeModel, LoopCostModel, DEFAULT_DENSITY_CAP};
use uso_core::nusc::{scenario_grid_with, write_results_csv, NuscScenario, DEFAULT_CAPEX_GRID};
use uso_core::sdca::{estimate_sdca_batch, group_profiles, summarize_records, write_estimates_csv, SdcaProfile};
use uso_core::trading::{run_simulation, write_summary_csv, SimConfig};
use uso_core::{Execution, ExchangeRecord};

#[derive(Parser, Debug)]
#[command(name = "uso", version, about = "Rural access cost models and a tradable-obligation market simulator")]
struct Cli {
    /// Write the full result as JSON to this path
    #[arg(long, global = true, value_name = "PATH")]
    json: Option<PathBuf>,
    /// Write a tabular result as CSV to this path
    #[arg(long, global = true, value_name = "PATH")]
    csv: Option<PathBuf>,
    /// Seed override for commands that use randomness
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Write a run manifest (inputs, parameters, output digest) to this path
    #[arg(long, global = true, value_name = "PATH")]
    manifest: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit the double-log loop-cost model to exchange data
    Fit(FitArgs),
    /// Predict cost per line from density or exchange size
    Predict(PredictArgs),
    /// Summarise exchange records (CSV) or estimate SDCA costs (JSON profiles)
    Aggregate(AggregateArgs),
    /// Net universal service cost per line over a capex grid
    Nusc(NuscArgs),
    /// Run the obligation trading market
    Simulate(SimulateArgs),
    /// Check exchange records for internal consistency
    Validate(ValidateArgs),
}

#[derive(Args, Debug, Serialize)]
struct FitArgs {
    /// Exchange CSV; bare names are also looked up in the fixture directory
    #[arg(long, default_value = "table3.csv")]
    input: PathBuf,
    #[arg(long, default_value_t = DEFAULT_DENSITY_CAP)]
    density_cap: f64,
    /// Reject AVERAGE/TOTAL rows instead of skipping them
    #[arg(long)]
    reject_summary_rows: bool,
    /// Write observed points and the fitted curve as CSV
    #[arg(long, value_name = "PATH")]
    plot_data: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct PredictArgs {
    /// Loop-cost model JSON, as written by `fit --json`; defaults to the published coefficients
    #[arg(long)]
    model: Option<PathBuf>,
    /// Density-size model JSON
    #[arg(long)]
    dsm: Option<PathBuf>,
    /// Subscriber density, lines per sq km (repeatable)
    #[arg(long, required_unless_present = "size", allow_negative_numbers = true)]
    density: Vec<f64>,
    /// Exchange size in lines (repeatable)
    #[arg(long, allow_negative_numbers = true)]
    size: Vec<f64>,
}

#[derive(Args, Debug, Serialize)]
struct AggregateArgs {
    /// Exchange CSV, or a JSON array of SDCA profiles
    #[arg(long, default_value = "table3.csv")]
    input: PathBuf,
    /// Loop-cost model JSON used for SDCA profiles
    #[arg(long)]
    models: Option<PathBuf>,
    /// Density-size model JSON used for SDCA profiles
    #[arg(long)]
    dsm: Option<PathBuf>,
    /// Tag keys to group SDCA profiles by (comma separated)
    #[arg(long, value_delimiter = ',')]
    group_by: Vec<String>,
}

#[derive(Args, Debug, Serialize)]
struct NuscArgs {
    #[arg(long, default_value = "scenario_default.json")]
    scenario: PathBuf,
    /// Capex per line in thousand rupees (repeatable); defaults to 50, 75 and 100
    #[arg(long, allow_negative_numbers = true)]
    capex: Vec<f64>,
}

#[derive(Args, Debug, Serialize)]
struct SimulateArgs {
    #[arg(long, default_value = "sim_demo.json")]
    config: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct ValidateArgs {
    #[arg(long, default_value = "table3.csv")]
    input: PathBuf,
    #[arg(long)]
    density_tolerance: Option<f64>,
    #[arg(long)]
    teledensity_tolerance: Option<f64>,
    #[arg(long)]
    identity_tolerance: Option<f64>,
}

/// Marks an error as caused by the user's input.
#[derive(Debug)]
struct InputError(String);

impl std::fmt::Display for InputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

struct Output {
    text: String,
    json: Value,
    csv: Option<Vec<u8>>,
    inputs: Vec<PathBuf>,
    params: Value,
    /// Result is well-formed but reports a failure (exit 2).
    failed: bool,
}

impl Output {
    fn new(text: String, json: Value, inputs: Vec<PathBuf>, params: Value) -> Self {
        Output {
            text,
            json,
            csv: None,
            inputs,
            params,
            failed: false,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            if is_input_error(&e) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn is_input_error(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        c.is::<InputError>()
            || c.is::<uso_core::Error>()
            || c.is::<uso_core::TradingError>()
            || c.is::<serde_json::Error>()
    })
}

fn run(cli: &Cli) -> Result<bool> {
    let (name, out) = match &cli.command {
        Command::Fit(a) => ("fit", fit(a)?),
        Command::Predict(a) => ("predict", predict(a)?),
        Command::Aggregate(a) => ("aggregate", aggregate(a)?),
        Command::Nusc(a) => ("nusc", nusc(a)?),
        Command::Simulate(a) => ("simulate", simulate(a, cli.seed)?),
        Command::Validate(a) => ("validate", validate(a)?),
    };

    print!("{}", out.text);
    let json_bytes = serde_json::to_vec_pretty(&out.json).context("serialising result")?;
    if let Some(path) = &cli.json {
        write_file(path, &json_bytes)?;
    }
    if let Some(path) = &cli.csv {
        match &out.csv {
            Some(bytes) => write_file(path, bytes)?,
            None => return Err(InputError(format!("`{name}` has no CSV output")).into()),
        }
    }
    if let Some(path) = &cli.manifest {
        let manifest = RunManifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: name.to_string(),
            inputs: out.inputs.iter().map(|p| digest_file(p)).collect::<Result<_>>()?,
            params: json!({ "seed": cli.seed, "args": out.params }),
            output_sha256: sha256_hex(&json_bytes),
        };
        write_file(path, &serde_json::to_vec_pretty(&manifest)?)?;
    }
    Ok(!out.failed)
}

/// Uses `path` as given if it exists, otherwise looks for it in the fixture directory.
fn resolve(path: &Path) -> PathBuf {
    if path.exists() || path.is_absolute() {
        return path.to_path_buf();
    }
    let candidate = fixture_dir().join(path);
    if candidate.exists() {
        candidate
    } else {
        path.to_path_buf()
    }
}

fn read_input(path: &Path) -> Result<(PathBuf, String)> {
    let resolved = resolve(path);
    let text = fs::read_to_string(&resolved).map_err(|e| InputError(format!("cannot read {}: {e}", resolved.display())))?;
    Ok((resolved, text))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<(PathBuf, T)> {
    let (resolved, text) = read_input(path)?;
    let value = serde_json::from_str(&text).with_context(|| format!("parsing {}", resolved.display()))?;
    Ok((resolved, value))
}

fn read_records(path: &Path, options: ParseOptions) -> Result<(PathBuf, Vec<ExchangeRecord>)> {
    let (resolved, text) = read_input(path)?;
    let records = parse_exchange_csv(text.as_bytes(), options).with_context(|| format!("parsing {}", resolved.display()))?;
    Ok((resolved, records))
}

fn params<T: Serialize>(args: &T) -> Value {
    serde_json::to_value(args).unwrap_or(Value::Null)
}

fn fit(a: &FitArgs) -> Result<Output> {
    let options = ParseOptions {
        summary_rows: if a.reject_summary_rows { SummaryRows::Reject } else { SummaryRows::Skip },
    };
    let (path, records) = read_records(&a.input, options)?;
    let model = fit_records(&records)?.with_density_cap(a.density_cap);
    model.validate()?;

    let mut text = String::new();
    writeln!(text, "ln(cost) = {} + ({}) ln(density)", sig4(model.intercept), sig4(model.slope))?;
    writeln!(text, "t-stats: intercept {}, slope {}", opt4(model.t_intercept), opt4(model.t_slope))?;
    writeln!(text, "R^2 {}  n {}  density cap {}", sig4(model.r_squared), model.n, sig4(model.density_cap))?;

    let mut csv = String::from("name,density,observed_cost,predicted_cost,relative_residual\n");
    for r in &records {
        let p = model.predict_cost(r.subscriber_density)?;
        writeln!(
            csv,
            "{},{},{},{},{}",
            r.name,
            r.subscriber_density,
            r.cost_per_line,
            p,
            (p - r.cost_per_line) / r.cost_per_line
        )?;
    }

    if let Some(plot) = &a.plot_data {
        let mut s = String::from("series,density,cost\n");
        for r in &records {
            writeln!(s, "observed,{},{}", r.subscriber_density, r.cost_per_line)?;
        }
        let lo = records.iter().map(|r| r.subscriber_density).fold(f64::INFINITY, f64::min);
        let hi = records.iter().map(|r| r.subscriber_density).fold(0.0, f64::max);
        for i in 0..=100 {
            let d = lo * (hi / lo).powf(i as f64 / 100.0);
            writeln!(s, "fitted,{d},{}", model.predict_cost(d)?)?;
        }
        write_file(plot, s.as_bytes())?;
    }

    let mut out = Output::new(text, serde_json::to_value(model)?, vec![path], params(a));
    out.csv = Some(csv.into_bytes());
    Ok(out)
}

#[derive(Serialize)]
struct Prediction {
    size: Option<f64>,
    density: f64,
    cost_per_line: f64,
}

fn predict(a: &PredictArgs) -> Result<Output> {
    let mut inputs = Vec::new();
    let model = match &a.model {
        Some(p) => {
            let (path, m): (_, LoopCostModel) = read_json(p)?;
            inputs.push(path);
            m
        }
        None => LoopCostModel::published(),
    };
    model.validate()?;
    let dsm = match &a.dsm {
        Some(p) => {
            let (path, m): (_, DensitySizeModel) = read_json(p)?;
            inputs.push(path);
            m
        }
        None => DensitySizeModel::default(),
    };
    dsm.validate()?;

    let mut rows = Vec::new();
    for &d in &a.density {
        rows.push(Prediction {
            size: None,
            density: d,
            cost_per_line: model.predict_cost(d)?,
        });
    }
    for &s in &a.size {
        let d = dsm.density_from_size(s)?;
        rows.push(Prediction {
            size: Some(s),
            density: d,
            cost_per_line: model.predict_cost(d)?,
        });
    }

    let mut text = String::new();
    let mut csv = String::from("size,density,cost_per_line\n");
    for r in &rows {
        match r.size {
            Some(s) => writeln!(text, "size {} -> density {} -> cost {}", sig4(s), sig4(r.density), sig4(r.cost_per_line))?,
            None => writeln!(text, "density {} -> cost {}", sig4(r.density), sig4(r.cost_per_line))?,
        }
        let size = r.size.map(|s| s.to_string()).unwrap_or_default();
        writeln!(csv, "{size},{},{}", r.density, r.cost_per_line)?;
    }
    let mut out = Output::new(text, json!({ "model": model, "predictions": rows }), inputs, params(a));
    out.csv = Some(csv.into_bytes());
    Ok(out)
}

fn aggregate(a: &AggregateArgs) -> Result<Output> {
    let is_json = resolve(&a.input).extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        aggregate_profiles(a)
    } else {
        if a.models.is_some() || a.dsm.is_some() || !a.group_by.is_empty() {
            bail!(InputError("--models, --dsm and --group-by apply to JSON profile input".into()));
        }
        aggregate_records(a)
    }
}

fn aggregate_records(a: &AggregateArgs) -> Result<Output> {
    let (path, records) = read_records(&a.input, ParseOptions::default())?;
    let row = summarize_records(&records)?;
    let fields: [(&str, f64); 11] = [
        ("equipped_capacity", row.equipped_capacity),
        ("teledensity", row.teledensity),
        ("served_area", row.served_area),
        ("served_population", row.served_population),
        ("villages_served", row.villages_served),
        ("dels", row.dels.unwrap_or(f64::NAN)),
        ("max_distance", row.max_distance),
        ("subscriber_density", row.subscriber_density),
        ("ckm_per_line", row.ckm_per_line),
        ("cost_per_line", row.cost_per_line),
        ("installation_share", row.installation_share),
    ];
    let mut text = format!("{} records\n", row.count);
    for (k, v) in &fields {
        writeln!(text, "{k:<20} {}", if v.is_nan() { "n/a".into() } else { sig4(*v) })?;
    }
    let header: Vec<&str> = std::iter::once("count").chain(fields.iter().map(|f| f.0)).collect();
    let values: Vec<String> = std::iter::once(row.count.to_string())
        .chain(fields.iter().map(|f| if f.1.is_nan() { String::new() } else { f.1.to_string() }))
        .collect();
    let csv = format!("{}\n{}\n", header.join(","), values.join(","));
    let mut out = Output::new(text, serde_json::to_value(&row)?, vec![path], params(a));
    out.csv = Some(csv.into_bytes());
    Ok(out)
}

fn aggregate_profiles(a: &AggregateArgs) -> Result<Output> {
    let (path, profiles): (_, Vec<SdcaProfile>) = read_json(&a.input)?;
    let mut inputs = vec![path];
    let lcm = match &a.models {
        Some(p) => {
            let (path, m): (_, LoopCostModel) = read_json(p)?;
            inputs.push(path);
            m
        }
        None => LoopCostModel::published(),
    };
    let dsm = match &a.dsm {
        Some(p) => {
            let (path, m): (_, DensitySizeModel) = read_json(p)?;
            inputs.push(path);
            m
        }
        None => DensitySizeModel::default(),
    };
    let estimates = estimate_sdca_batch(&profiles, &dsm, &lcm, Execution::default())
        .into_iter()
        .zip(&profiles)
        .map(|(r, p)| r.with_context(|| format!("profile {}", p.sdca_id)))
        .collect::<Result<Vec<_>>>()?;

    let mut text = String::new();
    for e in &estimates {
        writeln!(
            text,
            "{} ({}): {} exchanges, cost per line {}, density {}",
            e.sdca_id,
            e.ssa_id,
            e.exchanges.len(),
            sig4(e.weighted_cost_per_line),
            sig4(e.aggregate_density)
        )?;
    }

    let keys: Vec<&str> = a.group_by.iter().map(String::as_str).collect();
    let mut groups = Vec::new();
    if !keys.is_empty() {
        for g in group_profiles(&profiles, &keys) {
            let members: Vec<_> = g
                .profiles
                .iter()
                .map(|p| estimates.iter().find(|e| e.sdca_id == p.sdca_id).expect("estimate per profile"))
                .collect();
            let mean = members.iter().map(|e| e.weighted_cost_per_line).sum::<f64>() / members.len() as f64;
            let label = g.key.as_ref().map(|k| k.join("/")).unwrap_or_else(|| "(untagged)".into());
            writeln!(text, "group {label}: {} SDCAs, mean cost per line {}", members.len(), sig4(mean))?;
            groups.push(json!({
                "key": g.key,
                "sdca_ids": members.iter().map(|e| &e.sdca_id).collect::<Vec<_>>(),
                "mean_cost_per_line": mean,
            }));
        }
    }

    let mut csv = Vec::new();
    write_estimates_csv(&estimates, &mut csv)?;
    let json = if keys.is_empty() {
        json!({ "estimates": estimates })
    } else {
        json!({ "estimates": estimates, "groups": groups })
    };
    let mut out = Output::new(text, json, inputs, params(a));
    out.csv = Some(csv);
    Ok(out)
}

fn nusc(a: &NuscArgs) -> Result<Output> {
    let (path, scenario): (_, NuscScenario) = read_json(&a.scenario)?;
    let capex = if a.capex.is_empty() { DEFAULT_CAPEX_GRID.to_vec() } else { a.capex.clone() };
    let results = scenario_grid_with(&scenario, &capex, Execution::default())?;
    let mut text = String::from("capex  annualized  opex  revenue  nusc\n");
    for r in &results {
        writeln!(
            text,
            "{}  {}  {}  {}  {}",
            sig4(r.capex),
            sig4(r.annualized_capex),
            sig4(r.annual_opex),
            sig4(r.annual_revenue),
            sig4(r.nusc)
        )?;
    }
    let mut csv = Vec::new();
    write_results_csv(&results, &mut csv)?;
    let mut out = Output::new(text, json!({ "scenario": scenario, "results": results }), vec![path], params(a));
    out.csv = Some(csv);
    Ok(out)
}

fn simulate(a: &SimulateArgs, seed: Option<u64>) -> Result<Output> {
    let (path, mut config): (_, SimConfig) = read_json(&a.config)?;
    if let Some(s) = seed {
        config.seed = s;
    }
    let outcome = run_simulation(&config)?;
    let mut text = format!("seed {}  periods {}\n", outcome.seed, outcome.periods);
    writeln!(text, "operator  completions  trades  penalties  total_cost")?;
    for o in &outcome.operators {
        writeln!(
            text,
            "{}  {}  {}  {}  {}",
            o.operator,
            o.completions,
            o.trades,
            o.penalties,
            sig4(o.total_cost)
        )?;
    }
    for r in &outcome.completion_order {
        writeln!(
            text,
            "period {}: {} completed {} for {} at {}",
            r.period,
            r.operator,
            r.milestone_id,
            r.commitment_id,
            sig4(r.cost)
        )?;
    }
    let mut csv = Vec::new();
    write_summary_csv(&outcome, &mut csv)?;
    let mut out = Output::new(text, serde_json::to_value(&outcome)?, vec![path], params(a));
    out.csv = Some(csv);
    Ok(out)
}

fn validate(a: &ValidateArgs) -> Result<Output> {
    let (path, records) = read_records(&a.input, ParseOptions::default())?;
    let defaults = ValidationConfig::default();
    let config = ValidationConfig {
        density_tolerance: a.density_tolerance.unwrap_or(defaults.density_tolerance),
        teledensity_tolerance: a.teledensity_tolerance.unwrap_or(defaults.teledensity_tolerance),
        identity_tolerance: a.identity_tolerance.unwrap_or(defaults.identity_tolerance),
    };
    let report = validate_records(&records, &config)?;
    let mut text = String::new();
    let mut csv = String::from("name,check,stated,derived,relative_error,tolerance,mandatory,passed\n");
    for r in &report.records {
        writeln!(text, "{}: {}", r.name, if r.passed { "ok" } else { "FAILED" })?;
        for c in &r.checks {
            let check = serde_json::to_value(c.check)?;
            let check = check.as_str().unwrap_or_default();
            if !c.passed {
                writeln!(
                    text,
                    "  {check}: stated {} derived {} ({}% off{})",
                    sig4(c.stated),
                    sig4(c.derived),
                    sig4(100.0 * c.relative_error),
                    if c.mandatory { "" } else { ", advisory" }
                )?;
            }
            writeln!(
                csv,
                "{},{check},{},{},{},{},{},{}",
                r.name, c.stated, c.derived, c.relative_error, c.tolerance, c.mandatory, c.passed
            )?;
        }
    }
    writeln!(text, "{}", if report.passed { "all records pass" } else { "validation failed" })?;
    let mut out = Output::new(text, serde_json::to_value(&report)?, vec![path], params(a));
    out.csv = Some(csv.into_bytes());
    out.failed = !report.passed;
    Ok(out)
}
