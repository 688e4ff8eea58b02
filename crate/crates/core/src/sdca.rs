//! SDCA-level roll-ups.
//!
//! A short distance charging area is described by the sizes of its
//! exchanges. Sizes map to subscriber densities through a
//! [`DensitySizeModel`], densities to per-line costs through a
//! [`LoopCostModel`], and the SDCA cost is the capacity-weighted mean.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::ingest::ExchangeRecord;
use crate::loop_cost::{DensitySizeModel, LoopCostModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdcaProfile {
    pub sdca_id: String,
    pub ssa_id: String,
    /// Equipped capacities of the SDCA's exchanges, in lines.
    pub exchange_sizes: Vec<u32>,
    /// Surveyed records, one per entry of `exchange_sizes`, when available.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub records: Option<Vec<ExchangeRecord>>,
    #[serde(default)]
    pub tags: BTreeMap<String, String>,
}

impl SdcaProfile {
    pub fn from_sizes(sdca_id: impl Into<String>, ssa_id: impl Into<String>, sizes: Vec<u32>) -> Self {
        SdcaProfile {
            sdca_id: sdca_id.into(),
            ssa_id: ssa_id.into(),
            exchange_sizes: sizes,
            records: None,
            tags: BTreeMap::new(),
        }
    }

    pub fn with_tag(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.tags.insert(key.into(), value.into());
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.exchange_sizes.is_empty() {
            return Err(Error::EmptyInput("SDCA profile has no exchanges"));
        }
        if self.exchange_sizes.contains(&0) {
            return Err(Error::Domain(format!(
                "SDCA `{}`: exchange sizes must be positive",
                self.sdca_id
            )));
        }
        if let Some(records) = &self.records {
            if records.len() != self.exchange_sizes.len() {
                return Err(Error::Domain(format!(
                    "SDCA `{}`: {} records for {} exchange sizes",
                    self.sdca_id,
                    records.len(),
                    self.exchange_sizes.len()
                )));
            }
            for (r, &size) in records.iter().zip(&self.exchange_sizes) {
                if r.equipped_capacity != size {
                    return Err(Error::Domain(format!(
                        "SDCA `{}`: record `{}` has capacity {} but listed size is {size}",
                        self.sdca_id, r.name, r.equipped_capacity
                    )));
                }
                r.check_domain()?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensitySource {
    /// From the density-size model.
    Derived,
    /// From a surveyed record.
    Observed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregateDensityBasis {
    /// Total lines over total served area.
    RatioOfSums,
    /// Capacity-weighted mean of model densities; areas unknown.
    CapacityWeightedDerived,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExchangeEstimate {
    pub size: u32,
    pub density: f64,
    pub density_source: DensitySource,
    pub predicted_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdcaCostEstimate {
    pub sdca_id: String,
    pub ssa_id: String,
    pub exchanges: Vec<ExchangeEstimate>,
    /// Thousand currency units per line.
    pub weighted_cost_per_line: f64,
    pub aggregate_density: f64,
    pub aggregate_density_basis: AggregateDensityBasis,
}

pub fn estimate_sdca_cost(
    profile: &SdcaProfile,
    dsm: &DensitySizeModel,
    lcm: &LoopCostModel,
) -> Result<SdcaCostEstimate> {
    profile.validate()?;
    let mut exchanges = Vec::with_capacity(profile.exchange_sizes.len());
    for (i, &size) in profile.exchange_sizes.iter().enumerate() {
        let observed = profile.records.as_ref().map(|r| r[i].subscriber_density);
        let (density, density_source) = match observed {
            Some(d) => (d, DensitySource::Observed),
            None => (dsm.density_from_size(size as f64)?, DensitySource::Derived),
        };
        exchanges.push(ExchangeEstimate {
            size,
            density,
            density_source,
            predicted_cost: lcm.predict_cost(density)?,
        });
    }

    let total: f64 = exchanges.iter().map(|e| e.size as f64).sum();
    let weighted = |f: fn(&ExchangeEstimate) -> f64| {
        exchanges.iter().map(|e| e.size as f64 * f(e)).sum::<f64>() / total
    };
    let weighted_cost_per_line = weighted(|e| e.predicted_cost);
    let (aggregate_density, aggregate_density_basis) = match &profile.records {
        Some(records) => {
            let area: f64 = records.iter().map(|r| r.served_area).sum();
            (total / area, AggregateDensityBasis::RatioOfSums)
        }
        None => (weighted(|e| e.density), AggregateDensityBasis::CapacityWeightedDerived),
    };

    Ok(SdcaCostEstimate {
        sdca_id: profile.sdca_id.clone(),
        ssa_id: profile.ssa_id.clone(),
        exchanges,
        weighted_cost_per_line,
        aggregate_density,
        aggregate_density_basis,
    })
}

/// Estimates many SDCAs independently; results follow input order.
pub fn estimate_sdca_batch(
    profiles: &[SdcaProfile],
    dsm: &DensitySizeModel,
    lcm: &LoopCostModel,
    exec: Execution,
) -> Vec<Result<SdcaCostEstimate>> {
    exec.map(profiles, |p| estimate_sdca_cost(p, dsm, lcm))
}

/// Flat CSV, one row per exchange, for spreadsheet use.
pub fn write_estimates_csv<W: Write>(estimates: &[SdcaCostEstimate], sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    let csv_err = |e: csv::Error| Error::Csv(e.to_string());
    w.write_record([
        "sdca_id",
        "ssa_id",
        "exchange_index",
        "size",
        "density",
        "density_source",
        "predicted_cost",
        "weighted_cost_per_line",
        "aggregate_density",
    ])
    .map_err(csv_err)?;
    for est in estimates {
        for (i, ex) in est.exchanges.iter().enumerate() {
            let source = match ex.density_source {
                DensitySource::Derived => "derived",
                DensitySource::Observed => "observed",
            };
            w.write_record([
                est.sdca_id.clone(),
                est.ssa_id.clone(),
                i.to_string(),
                ex.size.to_string(),
                ex.density.to_string(),
                source.to_string(),
                ex.predicted_cost.to_string(),
                est.weighted_cost_per_line.to_string(),
                est.aggregate_density.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| Error::Csv(e.to_string()))?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub equipped_capacity: u64,
    pub served_area: f64,
    pub served_population: u64,
}

/// Summary row over a set of exchanges.
///
/// Weighting follows the published table's summary row:
/// * capacity, area, population, villages, maximum distance: simple means;
/// * DELs: mean over the records that report it;
/// * subscriber density: implied subscribers (area × density) over total area;
/// * teledensity: population-weighted, i.e. implied phones over total population;
/// * CKM and cost per line: capacity-weighted;
/// * installation share: weighted by outdoor-plant spend (capacity × cost per line).
///
/// The two density figures reduce to Σcapacity / Σarea and
/// 100·Σcapacity / Σpopulation when each record's stated densities are exact,
/// and reproduce a single record unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub count: usize,
    pub equipped_capacity: f64,
    pub teledensity: f64,
    pub served_area: f64,
    pub served_population: f64,
    pub villages_served: f64,
    pub dels: Option<f64>,
    pub max_distance: f64,
    pub subscriber_density: f64,
    pub ckm_per_line: f64,
    pub cost_per_line: f64,
    pub installation_share: f64,
    pub totals: Totals,
}

pub fn summarize_records(records: &[ExchangeRecord]) -> Result<AggregateRow> {
    if records.is_empty() {
        return Err(Error::EmptyInput("cannot summarise zero records"));
    }
    let n = records.len() as f64;
    let mean = |f: fn(&ExchangeRecord) -> f64| records.iter().map(f).sum::<f64>() / n;

    let totals = Totals {
        equipped_capacity: records.iter().map(|r| r.equipped_capacity as u64).sum(),
        served_area: records.iter().map(|r| r.served_area).sum(),
        served_population: records.iter().map(|r| r.served_population).sum(),
    };
    if !(totals.served_area > 0.0) {
        return Err(Error::Domain("total served area is zero".into()));
    }
    if totals.served_population == 0 {
        return Err(Error::Domain("total served population is zero".into()));
    }
    if totals.equipped_capacity == 0 {
        return Err(Error::Domain("total equipped capacity is zero".into()));
    }

    let cap_total = totals.equipped_capacity as f64;
    let cap_weighted =
        |f: fn(&ExchangeRecord) -> f64| records.iter().map(|r| r.equipped_capacity as f64 * f(r)).sum::<f64>() / cap_total;

    let spend: f64 = records
        .iter()
        .map(|r| r.equipped_capacity as f64 * r.cost_per_line)
        .sum();
    let installation_share = if spend > 0.0 {
        records
            .iter()
            .map(|r| r.equipped_capacity as f64 * r.cost_per_line * r.installation_share)
            .sum::<f64>()
            / spend
    } else {
        mean(|r| r.installation_share)
    };

    let dels: Vec<f64> = records.iter().filter_map(|r| r.dels).map(f64::from).collect();

    Ok(AggregateRow {
        count: records.len(),
        equipped_capacity: mean(|r| r.equipped_capacity as f64),
        teledensity: records
            .iter()
            .map(|r| r.served_population as f64 * r.teledensity)
            .sum::<f64>()
            / totals.served_population as f64,
        served_area: mean(|r| r.served_area),
        served_population: mean(|r| r.served_population as f64),
        villages_served: mean(|r| r.villages_served as f64),
        dels: (!dels.is_empty()).then(|| dels.iter().sum::<f64>() / dels.len() as f64),
        max_distance: mean(|r| r.max_distance),
        subscriber_density: records
            .iter()
            .map(|r| r.served_area * r.subscriber_density)
            .sum::<f64>()
            / totals.served_area,
        ckm_per_line: cap_weighted(|r| r.ckm_per_line),
        cost_per_line: cap_weighted(|r| r.cost_per_line),
        installation_share,
        totals,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileGroup<'a> {
    /// Tag values in key order; `None` for profiles missing any key.
    pub key: Option<Vec<String>>,
    pub profiles: Vec<&'a SdcaProfile>,
}

impl ProfileGroup<'_> {
    pub fn is_untagged(&self) -> bool {
        self.key.is_none()
    }
}

/// Groups profiles by exact match on the values of `keys`.
///
/// Groups appear in order of first occurrence; the untagged group (profiles
/// with a missing or empty value for any key) comes last.
pub fn group_profiles<'a>(profiles: &'a [SdcaProfile], keys: &[&str]) -> Vec<ProfileGroup<'a>> {
    let mut groups: Vec<ProfileGroup<'a>> = Vec::new();
    let mut untagged = Vec::new();
    for p in profiles {
        let values: Option<Vec<String>> = keys
            .iter()
            .map(|k| p.tags.get(*k).filter(|v| !v.trim().is_empty()).cloned())
            .collect();
        match values {
            None => untagged.push(p),
            Some(key) => match groups.iter_mut().find(|g| g.key.as_ref() == Some(&key)) {
                Some(g) => g.profiles.push(p),
                None => groups.push(ProfileGroup {
                    key: Some(key),
                    profiles: vec![p],
                }),
            },
        }
    }
    if !untagged.is_empty() {
        groups.push(ProfileGroup {
            key: None,
            profiles: untagged,
        });
    }
    groups
}
