use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridworld::{Cell, GridConfig};
use crate::interval::{InputBox, Interval};
use crate::network::Network;
use crate::properties::PropertyFamily;
use crate::verifier::{
    adversarial_rate, adversarial_rate_partitioned, extract_counterexamples, Property,
    RegionReport, VerifierConfig,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyRate {
    pub property: String,
    pub rate_lower: f64,
    pub rate_upper: f64,
    pub complete: bool,
}

/// Unweighted mean of per-property rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyRate {
    pub rate_lower: f64,
    pub rate_upper: f64,
    pub complete: bool,
    pub per_property: Vec<PropertyRate>,
}

impl FamilyRate {
    fn from_reports(reports: &[RegionReport]) -> FamilyRate {
        let n = reports.len() as f64;
        FamilyRate {
            rate_lower: reports.iter().map(|r| r.rate_lower).sum::<f64>() / n,
            rate_upper: reports.iter().map(|r| r.rate_upper).sum::<f64>() / n,
            complete: reports.iter().all(|r| r.complete),
            per_property: reports
                .iter()
                .map(|r| PropertyRate {
                    property: r.property.clone(),
                    rate_lower: r.rate_lower,
                    rate_upper: r.rate_upper,
                    complete: r.complete,
                })
                .collect(),
        }
    }
}

/// Per-property reports alongside the aggregated rate.
#[derive(Debug, Clone)]
pub struct FamilyAnalysis {
    pub rate: FamilyRate,
    pub reports: Vec<RegionReport>,
}

impl FamilyAnalysis {
    /// Up to `per_property` checked witnesses from every property.
    pub fn counterexamples(&self, net: &Network, family: &PropertyFamily, per_property: usize) -> Vec<Vec<f64>> {
        family
            .iter()
            .zip(&self.reports)
            .flat_map(|(p, r)| extract_counterexamples(net, p, r, per_property))
            .collect()
    }
}

/// Rate of each property over its whole precondition.
pub fn family_rate(net: &Network, family: &PropertyFamily, vcfg: &VerifierConfig) -> Result<FamilyAnalysis> {
    family.validate_for(net)?;
    let reports: Vec<RegionReport> = family
        .properties
        .par_iter()
        .map(|p| adversarial_rate(net, p, vcfg))
        .collect::<Result<_>>()?;
    Ok(FamilyAnalysis {
        rate: FamilyRate::from_reports(&reports),
        reports,
    })
}

/// Precondition of `prop` with the position restricted to one grid cell.
pub fn cell_box(prop: &Property, cell: Cell) -> Result<InputBox> {
    let x = Interval::new(cell.0 as f64 - 0.5, cell.0 as f64 + 0.5)?;
    let y = Interval::new(cell.1 as f64 - 0.5, cell.1 as f64 + 0.5)?;
    let b = prop.pre.with_dim(0, x).with_dim(1, y);
    if !b.is_subset_of(&prop.pre) {
        return Err(Error::Contract(format!(
            "cell {cell:?} lies outside the position range of `{}`",
            prop.name
        )));
    }
    Ok(b)
}

/// Whole-domain family rate on the position grid, searched from one seed box
/// per cell so that it is exactly the mean of the heatmap cells.
pub fn grid_family_rate(
    net: &Network,
    grid: &GridConfig,
    family: &PropertyFamily,
    vcfg: &VerifierConfig,
) -> Result<FamilyAnalysis> {
    family.validate_for(net)?;
    let reports: Vec<RegionReport> = family
        .properties
        .par_iter()
        .map(|p| {
            let seeds = grid.cells().map(|c| cell_box(p, c)).collect::<Result<Vec<_>>>()?;
            adversarial_rate_partitioned(net, p, &seeds, vcfg)
        })
        .collect::<Result<_>>()?;
    Ok(FamilyAnalysis {
        rate: FamilyRate::from_reports(&reports),
        reports,
    })
}

/// Per-cell family rates, row-major with `y` as the row index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub width: usize,
    pub height: usize,
    pub model: String,
    pub family: String,
    pub rate_upper: Vec<f64>,
    pub rate_lower: Vec<f64>,
    /// Cells where some verification ran out of budget.
    pub incomplete: Vec<bool>,
}

impl Heatmap {
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.rate_upper[y * self.width + x]
    }

    pub fn cell_mean(&self) -> f64 {
        self.rate_upper.iter().sum::<f64>() / self.rate_upper.len() as f64
    }

    pub fn l1_distance(&self, other: &Heatmap) -> Result<f64> {
        if (self.width, self.height) != (other.width, other.height) {
            return Err(Error::Contract("heatmaps of different shapes".into()));
        }
        Ok(self
            .rate_upper
            .iter()
            .zip(&other.rate_upper)
            .map(|(a, b)| (a - b).abs())
            .sum())
    }

    /// `x,y,rate_lower,rate_upper,complete` rows.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::Contract(format!("csv: {e}"));
        w.write_record(["x", "y", "rate_lower", "rate_upper", "complete"]).map_err(io)?;
        for y in 0..self.height {
            for x in 0..self.width {
                let i = y * self.width + x;
                w.write_record([
                    x.to_string(),
                    y.to_string(),
                    self.rate_lower[i].to_string(),
                    self.rate_upper[i].to_string(),
                    (!self.incomplete[i]).to_string(),
                ])
                .map_err(io)?;
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::Contract(format!("csv: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

pub fn spatial_heatmap(
    net: &Network,
    grid: &GridConfig,
    family: &PropertyFamily,
    vcfg: &VerifierConfig,
    model: &str,
) -> Result<Heatmap> {
    grid.validate()?;
    family.validate_for(net)?;
    let cells: Vec<Cell> = grid.cells().collect();
    let jobs: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..family.len()).map(move |p| (c, p)))
        .collect();
    let reports: Vec<(f64, f64, bool)> = jobs
        .par_iter()
        .map(|&(c, p)| {
            let prop = &family.properties[p];
            let seed = cell_box(prop, cells[c])?;
            let r = adversarial_rate_partitioned(net, prop, &[seed], vcfg)?;
            Ok((r.rate_lower, r.rate_upper, r.complete))
        })
        .collect::<Result<_>>()?;
    let n = family.len() as f64;
    let mut map = Heatmap {
        width: grid.width,
        height: grid.height,
        model: model.to_string(),
        family: family_id(family),
        rate_upper: vec![0.0; cells.len()],
        rate_lower: vec![0.0; cells.len()],
        incomplete: vec![false; cells.len()],
    };
    for (&(c, _), &(lo, hi, complete)) in jobs.iter().zip(&reports) {
        map.rate_lower[c] += lo / n;
        map.rate_upper[c] += hi / n;
        map.incomplete[c] |= !complete;
    }
    Ok(map)
}

/// Short identifier for a family: its size and first property name.
pub fn family_id(family: &PropertyFamily) -> String {
    match family.properties.first() {
        Some(p) => format!("{}x{}", family.len(), p.name),
        None => "empty".into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalPoint {
    pub label: String,
    pub rate: FamilyRate,
    pub heatmap: Heatmap,
}

/// Whole-domain rate and heatmap for each checkpoint, in order.
pub fn temporal_sweep(
    checkpoints: &[(String, Network)],
    grid: &GridConfig,
    family: &PropertyFamily,
    vcfg: &VerifierConfig,
) -> Result<Vec<TemporalPoint>> {
    if checkpoints.len() < 2 {
        return Err(Error::Config("temporal sweep needs at least two checkpoints".into()));
    }
    checkpoints
        .iter()
        .map(|(label, net)| {
            Ok(TemporalPoint {
                label: label.clone(),
                rate: grid_family_rate(net, grid, family, vcfg)?.rate,
                heatmap: spatial_heatmap(net, grid, family, vcfg, label)?,
            })
        })
        .collect()
}
