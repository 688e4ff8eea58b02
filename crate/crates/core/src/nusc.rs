//! Net universal service cost per line.
//!
//! All money is in thousand currency units; flows are per line per year.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;

/// Capital-cost scenarios for a village phone, in thousand currency units.
pub const DEFAULT_CAPEX_GRID: [f64; 3] = [50.0, 75.0, 100.0];

/// Survey counts of village phones with local-only and long-distance access.
pub const SURVEY_LOCAL_ONLY: u64 = 38_391;
pub const SURVEY_LONG_DISTANCE: u64 = 20;

/// Annuity factor turning a present capital sum into equal annual payments.
///
/// `r(1+r)^n / ((1+r)^n − 1)`, and exactly `1/n` at a zero rate.
pub fn capital_recovery_factor(rate: f64, lifetime: u32) -> Result<f64> {
    if lifetime < 1 {
        return Err(Error::Domain("lifetime must be at least one year".into()));
    }
    if !(rate >= 0.0) || !rate.is_finite() {
        return Err(Error::Negative {
            what: "discount rate",
            value: rate,
        });
    }
    if rate == 0.0 {
        return Ok(1.0 / lifetime as f64);
    }
    // (1+r)^n − 1 via expm1/ln_1p keeps precision for small rates.
    let growth_minus_one = (lifetime as f64 * rate.ln_1p()).exp_m1();
    Ok(rate * (growth_minus_one + 1.0) / growth_minus_one)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RevenueMix {
    pub count_local_only: u64,
    pub count_long_distance: u64,
    /// Annual revenue per local-only phone.
    pub revenue_local: f64,
    /// Annual revenue per phone with long-distance access.
    pub revenue_ld: f64,
}

impl RevenueMix {
    /// Mix weighted by the village-phone survey counts.
    pub fn survey_weighted(revenue_local: f64, revenue_ld: f64) -> Self {
        RevenueMix {
            count_local_only: SURVEY_LOCAL_ONLY,
            count_long_distance: SURVEY_LONG_DISTANCE,
            revenue_local,
            revenue_ld,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.count_local_only == 0 && self.count_long_distance == 0 {
            return Err(Error::Domain("revenue mix has no phones".into()));
        }
        for (what, v) in [("local revenue", self.revenue_local), ("long-distance revenue", self.revenue_ld)] {
            if !(v >= 0.0) {
                return Err(Error::Negative { what, value: v });
            }
        }
        Ok(())
    }

    pub fn long_distance_weight(&self) -> f64 {
        self.count_long_distance as f64 / (self.count_local_only + self.count_long_distance) as f64
    }
}

/// Count-weighted annual revenue per phone.
pub fn expected_revenue(mix: &RevenueMix) -> Result<f64> {
    mix.validate()?;
    let (nl, nd) = (mix.count_local_only as f64, mix.count_long_distance as f64);
    Ok((nl * mix.revenue_local + nd * mix.revenue_ld) / (nl + nd))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Revenue {
    PerLine(f64),
    Mix(RevenueMix),
}

impl Revenue {
    pub fn annual(&self) -> Result<f64> {
        match self {
            Revenue::PerLine(v) if *v >= 0.0 => Ok(*v),
            Revenue::PerLine(v) => Err(Error::Negative {
                what: "revenue per line",
                value: *v,
            }),
            Revenue::Mix(m) => expected_revenue(m),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NuscScenario {
    pub capex_per_line: f64,
    pub discount_rate: f64,
    pub lifetime: u32,
    /// Annual operating cost as a fraction of capex.
    pub opex_fraction: f64,
    pub revenue: Revenue,
    /// Capex already spent on existing phones. Sunk, so ignored unless `include_sunk_costs`.
    #[serde(default)]
    pub sunk_capex_per_line: f64,
    #[serde(default)]
    pub include_sunk_costs: bool,
}

impl NuscScenario {
    pub fn new(capex_per_line: f64, discount_rate: f64, lifetime: u32, opex_fraction: f64, revenue: Revenue) -> Self {
        NuscScenario {
            capex_per_line,
            discount_rate,
            lifetime,
            opex_fraction,
            revenue,
            sunk_capex_per_line: 0.0,
            include_sunk_costs: false,
        }
    }

    pub fn with_capex(mut self, capex: f64) -> Self {
        self.capex_per_line = capex;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.capex_per_line > 0.0) {
            return Err(Error::NonPositive {
                what: "capex per line",
                value: self.capex_per_line,
            });
        }
        if !(self.opex_fraction >= 0.0) {
            return Err(Error::Negative {
                what: "opex fraction",
                value: self.opex_fraction,
            });
        }
        if !(self.sunk_capex_per_line >= 0.0) {
            return Err(Error::Negative {
                what: "sunk capex per line",
                value: self.sunk_capex_per_line,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NuscResult {
    pub capex: f64,
    pub annualized_capex: f64,
    pub annual_opex: f64,
    pub annual_revenue: f64,
    /// Negative when the area is commercially viable.
    pub nusc: f64,
}

pub fn nusc_per_line(scenario: &NuscScenario) -> Result<NuscResult> {
    scenario.validate()?;
    let crf = capital_recovery_factor(scenario.discount_rate, scenario.lifetime)?;
    let mut annualized_capex = scenario.capex_per_line * crf;
    if scenario.include_sunk_costs {
        annualized_capex += scenario.sunk_capex_per_line * crf;
    }
    let annual_opex = scenario.opex_fraction * scenario.capex_per_line;
    let annual_revenue = scenario.revenue.annual()?;
    Ok(NuscResult {
        capex: scenario.capex_per_line,
        annualized_capex,
        annual_opex,
        annual_revenue,
        nusc: annualized_capex + annual_opex - annual_revenue,
    })
}

/// One result per capex value, other parameters held at `base`.
pub fn scenario_grid(base: &NuscScenario, capex_values: &[f64]) -> Result<Vec<NuscResult>> {
    scenario_grid_with(base, capex_values, Execution::default())
}

pub fn scenario_grid_with(base: &NuscScenario, capex_values: &[f64], exec: Execution) -> Result<Vec<NuscResult>> {
    if capex_values.is_empty() {
        return Err(Error::EmptyInput("capex grid is empty"));
    }
    exec.map(capex_values, |&c| nusc_per_line(&base.with_capex(c)))
        .into_iter()
        .collect()
}

pub fn write_results_csv<W: Write>(results: &[NuscResult], sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    let csv_err = |e: csv::Error| Error::Csv(e.to_string());
    w.write_record(["capex", "annualized_capex", "opex", "revenue", "nusc"])
        .map_err(csv_err)?;
    for r in results {
        w.write_record([
            r.capex.to_string(),
            r.annualized_capex.to_string(),
            r.annual_opex.to_string(),
            r.annual_revenue.to_string(),
            r.nusc.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Csv(e.to_string()))?;
    Ok(())
}
