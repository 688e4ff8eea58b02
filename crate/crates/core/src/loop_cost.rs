//! Local-loop cost as a function of subscriber density and exchange size.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::ExchangeRecord;

/// Density beyond which per-line cost stops falling.
pub const DEFAULT_DENSITY_CAP: f64 = 50.0;

/// Default split between small (CDOT 512-port and below) and SDCA-level exchanges.
pub const DEFAULT_SIZE_CUTOFF: u32 = 512;

/// Ordinary least squares fit of `y = intercept + slope * x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub intercept: f64,
    pub slope: f64,
    pub r_squared: f64,
    /// `None` when the residual variance is exactly zero.
    pub t_intercept: Option<f64>,
    pub t_slope: Option<f64>,
    pub n: usize,
}

/// Fits a simple linear regression using centred sums.
///
/// R² is `Sxy² / (Sxx·Syy)`; t-statistics use the residual variance `SSE / (n − 2)`.
pub fn fit_linear(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    assert_eq!(xs.len(), ys.len(), "x and y lengths differ");
    let n = xs.len();
    if n < 3 {
        return Err(Error::InsufficientData { needed: 3, got: n });
    }
    let nf = n as f64;
    let mean_x = xs.iter().sum::<f64>() / nf;
    let mean_y = ys.iter().sum::<f64>() / nf;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mean_x, y - mean_y);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx == 0.0 {
        return Err(Error::Domain("all x values are identical; slope is undefined".into()));
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0)
    };

    let sse: f64 = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| {
            let e = y - intercept - slope * x;
            e * e
        })
        .sum();
    let (t_intercept, t_slope) = if sse == 0.0 {
        (None, None)
    } else {
        let s2 = sse / (nf - 2.0);
        let se_slope = (s2 / sxx).sqrt();
        let se_intercept = (s2 * (1.0 / nf + mean_x * mean_x / sxx)).sqrt();
        (Some(intercept / se_intercept), Some(slope / se_slope))
    };

    Ok(LinearFit {
        intercept,
        slope,
        r_squared,
        t_intercept,
        t_slope,
        n,
    })
}

fn default_density_cap() -> f64 {
    DEFAULT_DENSITY_CAP
}

/// `ln(cost per line) = intercept + slope · ln(subscriber density)`, flat above `density_cap`.
///
/// Costs are in thousand currency units per line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoopCostModel {
    pub intercept: f64,
    pub slope: f64,
    pub r_squared: f64,
    pub t_intercept: Option<f64>,
    pub t_slope: Option<f64>,
    pub n: usize,
    #[serde(default = "default_density_cap")]
    pub density_cap: f64,
}

impl LoopCostModel {
    /// Coefficients and diagnostics as published for the ten Gujarat exchanges.
    pub fn published() -> Self {
        LoopCostModel {
            intercept: 3.467,
            slope: -0.4411,
            r_squared: 0.91,
            t_intercept: Some(28.94),
            t_slope: Some(-9.02),
            n: 10,
            density_cap: DEFAULT_DENSITY_CAP,
        }
    }

    pub fn with_density_cap(mut self, cap: f64) -> Self {
        self.density_cap = cap;
        self
    }

    /// Checks the invariants a loaded model must satisfy.
    pub fn validate(&self) -> Result<()> {
        if self.n < 3 {
            return Err(Error::InsufficientData { needed: 3, got: self.n });
        }
        if !(0.0..=1.0).contains(&self.r_squared) {
            return Err(Error::Domain(format!("r_squared {} outside [0, 1]", self.r_squared)));
        }
        if !(self.density_cap > 0.0) {
            return Err(Error::NonPositive {
                what: "density_cap",
                value: self.density_cap,
            });
        }
        if !self.intercept.is_finite() || !self.slope.is_finite() {
            return Err(Error::Domain("model coefficients must be finite".into()));
        }
        Ok(())
    }

    /// Predicted outdoor-plant cost per line at `density` subscribers/km².
    pub fn predict_cost(&self, density: f64) -> Result<f64> {
        if !(density > 0.0) {
            return Err(Error::NonPositive {
                what: "subscriber density",
                value: density,
            });
        }
        let d = density.min(self.density_cap);
        Ok((self.intercept + self.slope * d.ln()).exp())
    }
}

/// Double-log OLS of cost per line on subscriber density.
pub fn fit_loglog(points: &[(f64, f64)]) -> Result<LoopCostModel> {
    if points.len() < 3 {
        return Err(Error::InsufficientData {
            needed: 3,
            got: points.len(),
        });
    }
    let mut xs = Vec::with_capacity(points.len());
    let mut ys = Vec::with_capacity(points.len());
    for &(density, cost) in points {
        if !(density > 0.0) {
            return Err(Error::NonPositive {
                what: "subscriber density",
                value: density,
            });
        }
        if !(cost > 0.0) {
            return Err(Error::NonPositive {
                what: "cost per line",
                value: cost,
            });
        }
        xs.push(density.ln());
        ys.push(cost.ln());
    }
    let fit = fit_linear(&xs, &ys)?;
    Ok(LoopCostModel {
        intercept: fit.intercept,
        slope: fit.slope,
        r_squared: fit.r_squared,
        t_intercept: fit.t_intercept,
        t_slope: fit.t_slope,
        n: fit.n,
        density_cap: DEFAULT_DENSITY_CAP,
    })
}

/// Fits [`LoopCostModel`] on each record's (subscriber density, cost per line).
pub fn fit_records(records: &[ExchangeRecord]) -> Result<LoopCostModel> {
    let points: Vec<_> = records
        .iter()
        .map(|r| (r.subscriber_density, r.cost_per_line))
        .collect();
    fit_loglog(&points)
}

/// Linear relation between exchange size (equipped lines) and subscriber density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensitySizeModel {
    pub slope: f64,
    pub intercept: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_squared: Option<f64>,
}

impl Default for DensitySizeModel {
    /// Fit over roughly ninety exchanges of one secondary switching area.
    fn default() -> Self {
        DensitySizeModel {
            slope: 0.0179,
            intercept: 0.0169,
            r_squared: Some(0.988),
        }
    }
}

impl DensitySizeModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.slope > 0.0) {
            return Err(Error::NonPositive {
                what: "density-size slope",
                value: self.slope,
            });
        }
        Ok(())
    }

    pub fn density_from_size(&self, exchange_size: f64) -> Result<f64> {
        if !(exchange_size >= 0.0) {
            return Err(Error::Negative {
                what: "exchange size",
                value: exchange_size,
            });
        }
        Ok(self.slope * exchange_size + self.intercept)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum DensityBand {
    #[serde(rename = "below_5")]
    Below5,
    #[serde(rename = "from_5_to_10")]
    From5To10,
    #[serde(rename = "above_10")]
    Above10,
}

impl DensityBand {
    pub const ALL: [DensityBand; 3] = [DensityBand::Below5, DensityBand::From5To10, DensityBand::Above10];

    pub fn label(self) -> &'static str {
        match self {
            DensityBand::Below5 => "below_5",
            DensityBand::From5To10 => "from_5_to_10",
            DensityBand::Above10 => "above_10",
        }
    }
}

/// Assigns a density to `[0, 5)`, `[5, 10)` or `[10, ∞)`.
pub fn classify_density_band(density: f64) -> Result<DensityBand> {
    if !(density > 0.0) {
        return Err(Error::NonPositive {
            what: "subscriber density",
            value: density,
        });
    }
    Ok(if density < 5.0 {
        DensityBand::Below5
    } else if density < 10.0 {
        DensityBand::From5To10
    } else {
        DensityBand::Above10
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupMean {
    pub count: usize,
    /// Unweighted mean cost per line; `None` for an empty group.
    pub mean_cost: Option<f64>,
}

impl GroupMean {
    fn of(costs: impl Iterator<Item = f64>) -> Self {
        let (count, sum) = costs.fold((0usize, 0.0), |(c, s), x| (c + 1, s + x));
        GroupMean {
            count,
            mean_cost: (count > 0).then(|| sum / count as f64),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandStatistic {
    pub band: DensityBand,
    #[serde(flatten)]
    pub stats: GroupMean,
}

/// Mean cost per line within each density band, in band order.
pub fn band_statistics(records: &[ExchangeRecord]) -> Result<Vec<BandStatistic>> {
    if records.is_empty() {
        return Err(Error::EmptyInput("band statistics need at least one record"));
    }
    let banded = records
        .iter()
        .map(|r| Ok((classify_density_band(r.subscriber_density)?, r.cost_per_line)))
        .collect::<Result<Vec<_>>>()?;
    Ok(DensityBand::ALL
        .iter()
        .map(|&band| BandStatistic {
            band,
            stats: GroupMean::of(banded.iter().filter(|(b, _)| *b == band).map(|&(_, c)| c)),
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizeGroupStatistics {
    pub cutoff: u32,
    /// Exchanges with equipped capacity at or below the cutoff.
    pub small: GroupMean,
    pub large: GroupMean,
}

pub fn size_group_statistics(records: &[ExchangeRecord], cutoff: u32) -> Result<SizeGroupStatistics> {
    if records.is_empty() {
        return Err(Error::EmptyInput("size-group statistics need at least one record"));
    }
    if cutoff == 0 {
        return Err(Error::NonPositive {
            what: "size cutoff",
            value: 0.0,
        });
    }
    let cost_where = |small: bool| {
        records
            .iter()
            .filter(move |r| (r.equipped_capacity <= cutoff) == small)
            .map(|r| r.cost_per_line)
    };
    Ok(SizeGroupStatistics {
        cutoff,
        small: GroupMean::of(cost_where(true)),
        large: GroupMean::of(cost_where(false)),
    })
}

/// Conductor-km per line is twice the average subscriber distance.
pub fn ckm_per_line(avg_subscriber_distance: f64) -> Result<f64> {
    if !(avg_subscriber_distance >= 0.0) {
        return Err(Error::Negative {
            what: "average subscriber distance",
            value: avg_subscriber_distance,
        });
    }
    Ok(2.0 * avg_subscriber_distance)
}
