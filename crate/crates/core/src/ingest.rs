//! Exchange-record ingestion and consistency checks.
//!
//! The canonical CSV layout is one header row followed by one row per
//! exchange, with these columns (any order, extra columns ignored):
//!
//! | column               | unit                                   |
//! |----------------------|----------------------------------------|
//! | `name`               | text                                   |
//! | `exchange_type`      | text                                   |
//! | `equipped_capacity`  | lines                                  |
//! | `teledensity`        | phones per 100 population              |
//! | `served_area`        | km²                                    |
//! | `served_population`  | persons                                |
//! | `villages_served`    | count                                  |
//! | `dels`               | count, may be blank                    |
//! | `max_distance`       | km                                     |
//! | `subscriber_density` | subscribers per km²                    |
//! | `ckm_per_line`       | conductor-km per subscriber            |
//! | `cost_per_line`      | thousand currency units per line       |
//! | `installation_share` | fraction (`0.44`) or percentage (`44%`) |
//!
//! Lines starting with `#` are comments.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const COLUMNS: [&str; 13] = [
    "name",
    "exchange_type",
    "equipped_capacity",
    "teledensity",
    "served_area",
    "served_population",
    "villages_served",
    "dels",
    "max_distance",
    "subscriber_density",
    "ckm_per_line",
    "cost_per_line",
    "installation_share",
];

/// Row names treated as table summaries rather than exchanges.
const SUMMARY_NAMES: [&str; 4] = ["average", "total", "mean", "summary"];

/// One rural exchange and the outdoor-plant cost of its local loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExchangeRecord {
    pub name: String,
    pub exchange_type: String,
    pub equipped_capacity: u32,
    pub teledensity: f64,
    pub served_area: f64,
    pub served_population: u64,
    pub villages_served: u32,
    /// Absent when the source cell is blank; never defaulted to zero.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dels: Option<u32>,
    pub max_distance: f64,
    pub subscriber_density: f64,
    pub ckm_per_line: f64,
    pub cost_per_line: f64,
    pub installation_share: f64,
}

impl ExchangeRecord {
    /// Rejects records whose denominators or costs make the derived identities meaningless.
    pub fn check_domain(&self) -> Result<()> {
        let ctx = |field: &str, msg: &str| {
            Error::Domain(format!("exchange `{}`: {field} {msg}", self.name))
        };
        if self.equipped_capacity == 0 {
            return Err(ctx("equipped_capacity", "must be positive"));
        }
        if !(self.served_area > 0.0) {
            return Err(ctx("served_area", "must be positive"));
        }
        if self.served_population == 0 {
            return Err(ctx("served_population", "must be positive"));
        }
        if !(self.cost_per_line > 0.0) {
            return Err(ctx("cost_per_line", "must be positive"));
        }
        if !(self.max_distance > 0.0) {
            return Err(ctx("max_distance", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.installation_share) {
            return Err(ctx("installation_share", "must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn population_density(&self) -> f64 {
        self.served_population as f64 / self.served_area
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SummaryRows {
    #[default]
    Skip,
    Reject,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ParseOptions {
    pub summary_rows: SummaryRows,
}

struct ColumnIndex([usize; 13]);

impl ColumnIndex {
    fn from_headers(headers: &csv::StringRecord) -> Result<Self> {
        let mut idx = [0usize; 13];
        for (slot, &want) in idx.iter_mut().zip(COLUMNS.iter()) {
            *slot = headers
                .iter()
                .position(|h| h.trim().eq_ignore_ascii_case(want))
                .ok_or_else(|| Error::MissingColumn(want.to_string()))?;
        }
        Ok(ColumnIndex(idx))
    }
}

struct Row<'a> {
    record: &'a csv::StringRecord,
    columns: &'a ColumnIndex,
    row: usize,
}

impl Row<'_> {
    fn cell(&self, col: usize) -> &str {
        self.record.get(self.columns.0[col]).unwrap_or("").trim()
    }

    fn err(&self, col: usize, message: impl Into<String>) -> Error {
        Error::MalformedRow {
            row: self.row,
            column: COLUMNS[col].to_string(),
            message: message.into(),
        }
    }

    fn text(&self, col: usize) -> Result<String> {
        match self.cell(col) {
            "" => Err(self.err(col, "empty cell")),
            s => Ok(s.to_string()),
        }
    }

    fn number<T: std::str::FromStr>(&self, col: usize) -> Result<T> {
        let s = self.cell(col);
        if s.is_empty() {
            return Err(self.err(col, "empty cell"));
        }
        s.parse::<T>()
            .map_err(|_| self.err(col, format!("`{s}` is not a valid number")))
    }

    fn real(&self, col: usize) -> Result<f64> {
        let v: f64 = self.number(col)?;
        if !v.is_finite() {
            return Err(self.err(col, "value must be finite"));
        }
        Ok(v)
    }

    fn optional<T: std::str::FromStr>(&self, col: usize) -> Result<Option<T>> {
        if self.cell(col).is_empty() {
            Ok(None)
        } else {
            self.number(col).map(Some)
        }
    }

    fn share(&self, col: usize) -> Result<f64> {
        let s = self.cell(col);
        let value = match s.strip_suffix('%') {
            Some(pct) => pct
                .trim()
                .parse::<f64>()
                .map(|p| p / 100.0)
                .map_err(|_| self.err(col, format!("`{s}` is not a valid percentage")))?,
            None => self.real(col)?,
        };
        if !(0.0..=1.0).contains(&value) {
            return Err(self.err(col, format!("`{s}` is outside [0, 1]")));
        }
        Ok(value)
    }
}

fn is_summary_name(name: &str) -> bool {
    SUMMARY_NAMES
        .iter()
        .any(|s| name.trim().eq_ignore_ascii_case(s))
}

/// Parses exchange records from a header-bearing CSV stream.
pub fn parse_exchange_csv<R: Read>(source: R, options: ParseOptions) -> Result<Vec<ExchangeRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .comment(Some(b'#'))
        .flexible(true)
        .from_reader(source);
    let headers = reader.headers().map_err(|e| Error::Csv(e.to_string()))?.clone();
    let columns = ColumnIndex::from_headers(&headers)?;

    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let record = rec.map_err(|e| Error::Csv(e.to_string()))?;
        let row = Row {
            record: &record,
            columns: &columns,
            row: i + 1,
        };
        let name = row.text(0)?;
        if is_summary_name(&name) {
            match options.summary_rows {
                SummaryRows::Skip => continue,
                SummaryRows::Reject => return Err(Error::SummaryRow { row: row.row, name }),
            }
        }
        out.push(ExchangeRecord {
            name,
            exchange_type: row.text(1)?,
            equipped_capacity: row.number(2)?,
            teledensity: row.real(3)?,
            served_area: row.real(4)?,
            served_population: row.number(5)?,
            villages_served: row.number(6)?,
            dels: row.optional(7)?,
            max_distance: row.real(8)?,
            subscriber_density: row.real(9)?,
            ckm_per_line: row.real(10)?,
            cost_per_line: row.real(11)?,
            installation_share: row.share(12)?,
        });
    }
    Ok(out)
}

/// Writes records in the canonical column order. Installation share is written as a fraction.
pub fn write_exchange_csv<W: Write>(records: &[ExchangeRecord], sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    let csv_err = |e: csv::Error| Error::Csv(e.to_string());
    w.write_record(COLUMNS).map_err(csv_err)?;
    for r in records {
        w.write_record([
            r.name.clone(),
            r.exchange_type.clone(),
            r.equipped_capacity.to_string(),
            r.teledensity.to_string(),
            r.served_area.to_string(),
            r.served_population.to_string(),
            r.villages_served.to_string(),
            r.dels.map(|d| d.to_string()).unwrap_or_default(),
            r.max_distance.to_string(),
            r.subscriber_density.to_string(),
            r.ckm_per_line.to_string(),
            r.cost_per_line.to_string(),
            r.installation_share.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Csv(e.to_string()))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ValidationConfig {
    /// Relative tolerance for density against capacity / area.
    pub density_tolerance: f64,
    /// Relative tolerance for teledensity against 100 × capacity / population.
    pub teledensity_tolerance: f64,
    /// Relative tolerance for density against teledensity × population density / 100.
    pub identity_tolerance: f64,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        ValidationConfig {
            density_tolerance: 0.02,
            teledensity_tolerance: 0.05,
            identity_tolerance: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    DensityVsCapacityArea,
    TeledensityVsCapacityPopulation,
    DensityVsTeledensityPopulation,
}

impl CheckKind {
    /// Only the density check gates the record; the teledensity-based checks
    /// are reported because the source column's basis (DELs vs capacity) is unknown.
    pub fn is_mandatory(self) -> bool {
        matches!(self, CheckKind::DensityVsCapacityArea)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub check: CheckKind,
    pub stated: f64,
    pub derived: f64,
    pub relative_error: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub mandatory: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordValidation {
    pub name: String,
    pub checks: Vec<CheckOutcome>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub records: Vec<RecordValidation>,
    pub passed: bool,
}

fn check(kind: CheckKind, stated: f64, derived: f64, tolerance: f64) -> CheckOutcome {
    let relative_error = (derived - stated).abs() / stated.abs();
    CheckOutcome {
        check: kind,
        stated,
        derived,
        relative_error,
        tolerance,
        passed: relative_error <= tolerance,
        mandatory: kind.is_mandatory(),
    }
}

/// Checks each record's stated density and teledensity against the values
/// implied by its capacity, area and population.
///
/// Failing checks are report entries. Records with a zero capacity, area or
/// population are rejected outright since the identities cannot be evaluated.
pub fn validate_records(records: &[ExchangeRecord], config: &ValidationConfig) -> Result<ValidationReport> {
    let mut out = Vec::with_capacity(records.len());
    for r in records {
        r.check_domain()?;
        let cap = r.equipped_capacity as f64;
        let checks = vec![
            check(
                CheckKind::DensityVsCapacityArea,
                r.subscriber_density,
                cap / r.served_area,
                config.density_tolerance,
            ),
            check(
                CheckKind::TeledensityVsCapacityPopulation,
                r.teledensity,
                100.0 * cap / r.served_population as f64,
                config.teledensity_tolerance,
            ),
            check(
                CheckKind::DensityVsTeledensityPopulation,
                r.subscriber_density,
                r.teledensity * r.population_density() / 100.0,
                config.identity_tolerance,
            ),
        ];
        let passed = checks.iter().filter(|c| c.mandatory).all(|c| c.passed);
        out.push(RecordValidation {
            name: r.name.clone(),
            checks,
            passed,
        });
    }
    let passed = out.iter().all(|r| r.passed);
    Ok(ValidationReport { records: out, passed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn table3() -> Vec<ExchangeRecord> {
        fixtures::table3_records()
    }

    #[test]
    fn parses_fixture() {
        let recs = table3();
        assert_eq!(recs.len(), 10);
        let first = &recs[0];
        assert_eq!(first.name, "Nana Pondha");
        assert_eq!(first.equipped_capacity, 88);
        assert_eq!(first.subscriber_density, 2.8);
        assert_eq!(first.cost_per_line, 20.8);
        assert_eq!(first.installation_share, 0.44);
        assert_eq!(first.dels, Some(14));
    }

    #[test]
    fn blank_dels_is_absent() {
        let recs = table3();
        let rumla = recs.iter().find(|r| r.name == "Rumla").unwrap();
        assert_eq!(rumla.dels, None);
        assert_eq!(rumla.equipped_capacity, 336);
        assert_eq!(rumla.max_distance, 7.5);
        let blanks: Vec<_> = recs.iter().filter(|r| r.dels.is_none()).map(|r| r.name.as_str()).collect();
        assert_eq!(blanks, ["Rumla", "Dharampur", "Killa Pardi"]);
    }

    #[test]
    fn header_only_is_empty() {
        let src = COLUMNS.join(",") + "\n";
        let recs = parse_exchange_csv(src.as_bytes(), ParseOptions::default()).unwrap();
        assert!(recs.is_empty());
    }

    #[test]
    fn missing_column_is_reported() {
        let src = "name,exchange_type\nA,B\n";
        let err = parse_exchange_csv(src.as_bytes(), ParseOptions::default()).unwrap_err();
        assert_eq!(err, Error::MissingColumn("equipped_capacity".into()));
    }

    #[test]
    fn non_numeric_cell_reports_row_and_column() {
        let src = format!(
            "{}\nX,CDOT,88,0.7,abc,13378,4,14,7.0,2.8,13.27,20.8,44%\n",
            COLUMNS.join(",")
        );
        let err = parse_exchange_csv(src.as_bytes(), ParseOptions::default()).unwrap_err();
        match err {
            Error::MalformedRow { row, column, .. } => {
                assert_eq!(row, 1);
                assert_eq!(column, "served_area");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn blank_mandatory_cell_is_rejected() {
        let src = format!(
            "{}\nX,CDOT,88,0.7,31.7,13378,4,14,7.0,2.8,13.27,,44%\n",
            COLUMNS.join(",")
        );
        let err = parse_exchange_csv(src.as_bytes(), ParseOptions::default()).unwrap_err();
        assert!(matches!(err, Error::MalformedRow { ref column, .. } if column == "cost_per_line"));
    }

    #[test]
    fn share_accepts_percent_and_fraction() {
        let body = |share: &str| {
            format!(
                "{}\nX,CDOT,88,0.7,31.7,13378,4,14,7.0,2.8,13.27,20.8,{share}\n",
                COLUMNS.join(",")
            )
        };
        let a = parse_exchange_csv(body("44%").as_bytes(), ParseOptions::default()).unwrap();
        let b = parse_exchange_csv(body("0.44").as_bytes(), ParseOptions::default()).unwrap();
        assert_eq!(a, b);
        assert!(parse_exchange_csv(body("44").as_bytes(), ParseOptions::default()).is_err());
    }

    #[test]
    fn summary_rows_skip_or_reject() {
        let src = format!(
            "{}\nX,CDOT,88,0.7,31.7,13378,4,14,7.0,2.8,13.27,20.8,44%\nAVERAGE,,1264,2.6,95.32,49298,13,338,9.8,13.3,8.00,9.6,29%\n",
            COLUMNS.join(",")
        );
        let skipped = parse_exchange_csv(src.as_bytes(), ParseOptions::default()).unwrap();
        assert_eq!(skipped.len(), 1);
        let err = parse_exchange_csv(
            src.as_bytes(),
            ParseOptions {
                summary_rows: SummaryRows::Reject,
            },
        )
        .unwrap_err();
        assert_eq!(
            err,
            Error::SummaryRow {
                row: 2,
                name: "AVERAGE".into()
            }
        );
    }

    #[test]
    fn round_trip_preserves_records() {
        let recs = table3();
        let mut buf = Vec::new();
        write_exchange_csv(&recs, &mut buf).unwrap();
        let again = parse_exchange_csv(buf.as_slice(), ParseOptions::default()).unwrap();
        assert_eq!(recs, again);
        let mut buf2 = Vec::new();
        write_exchange_csv(&again, &mut buf2).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn fixture_passes_validation() {
        let report = validate_records(&table3(), &ValidationConfig::default()).unwrap();
        assert!(report.passed);
        for r in &report.records {
            assert!(r.checks[0].passed, "{} density check", r.name);
        }
    }

    #[test]
    fn killa_pardi_density_check() {
        let report = validate_records(&table3(), &ValidationConfig::default()).unwrap();
        let kp = report.records.iter().find(|r| r.name == "Killa Pardi").unwrap();
        let c = &kp.checks[0];
        assert!(c.passed);
        // 1860 / 42.6 = 43.6620
        assert!((c.derived - 43.661_971_830_985_92).abs() < 1e-9);
        assert!((c.relative_error - 0.001_421_372).abs() < 1e-6);
    }

    #[test]
    fn degam_density_check() {
        let report = validate_records(&table3(), &ValidationConfig::default()).unwrap();
        let d = report.records.iter().find(|r| r.name == "Degam").unwrap();
        assert!(d.passed);
        assert!((d.checks[0].derived - 3.902_439_024).abs() < 1e-6);
    }

    #[test]
    fn nana_pondha_teledensity_is_advisory() {
        // 100 * 88 / 13378 = 0.658 against a printed 0.7: a rounding artefact.
        let report = validate_records(&table3(), &ValidationConfig::default()).unwrap();
        let np = &report.records[0];
        let tele = &np.checks[1];
        assert!(!tele.passed);
        assert!(!tele.mandatory);
        assert!(np.passed);
    }

    #[test]
    fn zero_area_is_domain_error() {
        let mut recs = table3();
        recs[3].served_area = 0.0;
        let err = validate_records(&recs, &ValidationConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
    }

    #[test]
    fn report_serializes_to_json() {
        let report = validate_records(&table3()[..1], &ValidationConfig::default()).unwrap();
        let json = serde_json::to_string(&report).unwrap();
        assert!(json.contains("\"density_vs_capacity_area\""));
        let back: ValidationReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);
    }
}
