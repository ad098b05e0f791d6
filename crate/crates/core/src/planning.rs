//! Sizing flexible resources (unit retrofit, storage, demand side) against
//! the marginal probabilistic area.
//!
//! Each resource lowers the MOU. A resource is worth extending by one grid
//! step while the curtailment it avoids per MW per day (ΔS) stays at or above
//! its break-even point, the daily cost per MW divided by the benefit per
//! MWh. Resources are applied cheapest break-even first, each continuing from
//! where the previous one stopped. Storage is treated as an MOU reduction
//! equal to its power rating.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::curves::ProbCurve;
use crate::error::{Error, Result};
use crate::indices::{area_sweep, SweepRow};

pub const DAYS_PER_YEAR: f64 = 365.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResourceKind {
    #[serde(alias = "RETROFIT")]
    Retrofit,
    #[serde(alias = "STORAGE")]
    Storage,
    #[serde(alias = "DEMAND_SIDE")]
    DemandSide,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceSpec {
    pub name: String,
    pub kind: ResourceKind,
    /// Capital cost in USD per MW of MOU reduction (per MW of power for
    /// storage, at its rated duration).
    pub capex_per_mw: f64,
    /// Rate of annual revenue requirement, as a fraction.
    pub rarr: f64,
    pub benefit_per_mwh: f64,
    /// Largest MOU reduction this resource can provide, MW.
    pub mw_limit: f64,
    #[serde(default)]
    pub storage_hours: Option<f64>,
}

impl ResourceSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("resource `{}`: {what}", self.name)));
        if !(self.capex_per_mw >= 0.0) {
            return bad("capex_per_mw must be >= 0");
        }
        if !(self.rarr > 0.0 && self.rarr < 1.0) {
            return bad("rarr must lie in (0, 1)");
        }
        if !(self.benefit_per_mwh > 0.0) {
            return Err(Error::ZeroBenefit(self.name.clone()));
        }
        if !(self.mw_limit >= 0.0) {
            return bad("mw_limit must be >= 0");
        }
        if self.kind == ResourceKind::Storage && !self.storage_hours.is_some_and(|h| h > 0.0) {
            return bad("storage needs positive storage_hours");
        }
        Ok(())
    }
}

/// Annualized capital cost spread over the days of a year, USD/MW/day.
pub fn daily_cost(r: &ResourceSpec) -> f64 {
    r.capex_per_mw * r.rarr / DAYS_PER_YEAR
}

/// Curtailment avoided per MW per day at which the resource pays for itself.
pub fn breakeven_point(r: &ResourceSpec) -> Result<f64> {
    if !(r.benefit_per_mwh > 0.0) {
        return Err(Error::ZeroBenefit(r.name.clone()));
    }
    Ok(daily_cost(r) / r.benefit_per_mwh)
}

#[derive(Debug, Deserialize)]
struct ResourceFile {
    #[serde(alias = "resource")]
    resources: Vec<ResourceSpec>,
}

pub fn parse_resources(text: &str) -> Result<Vec<ResourceSpec>> {
    let file: ResourceFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    for r in &file.resources {
        r.validate()?;
    }
    Ok(file.resources)
}

/// Reads `[[resources]]` tables from a TOML file.
pub fn load_resources(path: &Path) -> Result<Vec<ResourceSpec>> {
    parse_resources(&std::fs::read_to_string(path)?)
}

fn check_sweep(sweep: &[SweepRow]) -> Result<()> {
    if sweep.is_empty() {
        return Err(Error::EmptySweep);
    }
    if sweep.windows(2).any(|w| w[1].mou_mw <= w[0].mou_mw) {
        return Err(Error::InvalidArgument("sweep must be strictly ascending in MOU".into()));
    }
    Ok(())
}

/// Index of the grid point at `mou` (within half a grid cell).
fn grid_index(sweep: &[SweepRow], mou: f64) -> Result<usize> {
    let tol = if sweep.len() > 1 {
        0.5 * (sweep[1].mou_mw - sweep[0].mou_mw)
    } else {
        1e-9
    };
    sweep
        .iter()
        .position(|r| (r.mou_mw - mou).abs() <= tol)
        .ok_or_else(|| Error::InvalidArgument(format!("MOU {mou} MW is outside the sweep")))
}

fn walk_down(sweep: &[SweepRow], start: usize, breakeven: f64, mw_limit: f64) -> usize {
    let top = sweep[start].mou_mw;
    let mut k = start;
    while k > 0 {
        if sweep[k].ds_mwh_per_mw < breakeven {
            break;
        }
        if top - sweep[k - 1].mou_mw > mw_limit + 1e-9 {
            break;
        }
        k -= 1;
    }
    k
}

/// Walks the MOU down from `mou_start` while ΔS stays at or above the
/// resource's break-even point and its MW limit is not exceeded. Returns
/// `(mou_stop, allocated_mw)`.
pub fn optimal_mou(sweep: &[SweepRow], r: &ResourceSpec, mou_start: f64) -> Result<(f64, f64)> {
    check_sweep(sweep)?;
    let start = grid_index(sweep, mou_start)?;
    let stop = walk_down(sweep, start, breakeven_point(r)?, r.mw_limit);
    Ok((sweep[stop].mou_mw, sweep[start].mou_mw - sweep[stop].mou_mw))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanEntry {
    pub name: String,
    pub kind: ResourceKind,
    pub daily_cost_usd_per_mw: f64,
    pub breakeven_mwh_per_mw: f64,
    pub start_mou_mw: f64,
    pub final_mou_mw: f64,
    pub allocated_mw: f64,
    /// Curtailment avoided, MWh per day.
    pub expected_pv_gain_mwh: f64,
    pub net_benefit_usd_per_day: f64,
    /// Set when storage is credited with more daily energy than it can hold.
    pub energy_warning: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlanResult {
    pub base_mou_mw: f64,
    pub entries: Vec<PlanEntry>,
    pub final_mou_mw: f64,
    /// Expected curtailment left below the final MOU, MWh per day; the
    /// candidate region for demand response or accepted curtailment.
    pub residual_curtailment_mwh: f64,
}

impl PlanResult {
    pub fn net_benefit(&self) -> f64 {
        self.entries.iter().map(|e| e.net_benefit_usd_per_day).sum()
    }
}

/// Applies the resources in order on a precomputed sweep, starting at
/// `base_mou`. Resources must be sorted by ascending break-even point.
pub fn stack_on_sweep(sweep: &[SweepRow], base_mou: f64, resources: &[ResourceSpec]) -> Result<PlanResult> {
    check_sweep(sweep)?;
    let mut breakevens = Vec::with_capacity(resources.len());
    for r in resources {
        r.validate()?;
        breakevens.push(breakeven_point(r)?);
    }
    if breakevens.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidArgument(
            "resources must be ordered by ascending break-even point".into(),
        ));
    }
    let mut k = grid_index(sweep, base_mou)?;
    let base = sweep[k].mou_mw;
    let mut entries = Vec::with_capacity(resources.len());
    for (r, &be) in resources.iter().zip(&breakevens) {
        let stop = walk_down(sweep, k, be, r.mw_limit);
        let allocated = sweep[k].mou_mw - sweep[stop].mou_mw;
        let gain = sweep[k].s_mwh - sweep[stop].s_mwh;
        let cost = daily_cost(r);
        let energy_warning = r.kind == ResourceKind::Storage
            && gain > r.storage_hours.unwrap_or(0.0) * allocated + 1e-9;
        if energy_warning {
            log::warn!(
                "storage `{}` credited with {gain:.1} MWh/day but holds {:.1} MWh",
                r.name,
                r.storage_hours.unwrap_or(0.0) * allocated
            );
        }
        entries.push(PlanEntry {
            name: r.name.clone(),
            kind: r.kind,
            daily_cost_usd_per_mw: cost,
            breakeven_mwh_per_mw: be,
            start_mou_mw: sweep[k].mou_mw,
            final_mou_mw: sweep[stop].mou_mw,
            allocated_mw: allocated,
            expected_pv_gain_mwh: gain,
            net_benefit_usd_per_day: r.benefit_per_mwh * gain - cost * allocated,
            energy_warning,
        });
        k = stop;
    }
    Ok(PlanResult {
        base_mou_mw: base,
        entries,
        final_mou_mw: sweep[k].mou_mw,
        residual_curtailment_mwh: sweep[k].s_mwh,
    })
}

/// Builds the area sweep from `base_mou` down to the lowest PDC support
/// (or as far as the resources can reach) and stacks the resources on it.
pub fn stack_resources(
    pdc: &ProbCurve,
    base_mou: f64,
    resources: &[ResourceSpec],
    grid_step: f64,
    period_hours: f64,
) -> Result<PlanResult> {
    if !(grid_step > 0.0) {
        return Err(Error::InvalidArgument(format!("grid step must be positive, got {grid_step}")));
    }
    let lowest = pdc
        .periods
        .iter()
        .map(|d| d.min_value())
        .fold(f64::INFINITY, f64::min);
    let reach: f64 = resources.iter().map(|r| r.mw_limit).sum();
    let depth = (base_mou - lowest).min(reach).max(0.0);
    let steps = (depth / grid_step).ceil();
    let sweep = area_sweep(pdc, base_mou - steps * grid_step, base_mou, grid_step, period_hours)?;
    stack_on_sweep(&sweep, base_mou, resources)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn retrofit() -> ResourceSpec {
        ResourceSpec {
            name: "retrofit".into(),
            kind: ResourceKind::Retrofit,
            capex_per_mw: 30_000.0,
            rarr: 0.16,
            benefit_per_mwh: 41.69,
            mw_limit: 2000.0,
            storage_hours: None,
        }
    }

    pub(crate) fn storage() -> ResourceSpec {
        ResourceSpec {
            name: "storage".into(),
            kind: ResourceKind::Storage,
            capex_per_mw: 1_000_000.0,
            rarr: 0.16,
            benefit_per_mwh: 110.31,
            mw_limit: 1000.0,
            storage_hours: Some(5.0),
        }
    }

    fn sweep_from(mous: &[f64], s: impl Fn(f64) -> f64) -> Vec<SweepRow> {
        let step = mous[1] - mous[0];
        mous.iter()
            .map(|&m| SweepRow {
                mou_mw: m,
                s_mwh: s(m),
                ds_mwh_per_mw: (s(m) - s(m - step)) / step,
            })
            .collect()
    }

    #[test]
    fn table_costs() {
        assert!((daily_cost(&retrofit()) - 13.15).abs() < 0.01);
        assert!((daily_cost(&storage()) - 438.35).abs() < 0.01);
        assert!((breakeven_point(&retrofit()).unwrap() - 0.32).abs() < 0.01);
        assert!((breakeven_point(&storage()).unwrap() - 3.97).abs() < 0.01);
        let free = ResourceSpec {
            capex_per_mw: 0.0,
            ..retrofit()
        };
        assert_eq!(daily_cost(&free), 0.0);
        assert_eq!(breakeven_point(&free).unwrap(), 0.0);
        let useless = ResourceSpec {
            benefit_per_mwh: 0.0,
            ..retrofit()
        };
        assert!(matches!(breakeven_point(&useless), Err(Error::ZeroBenefit(_))));
    }

    #[test]
    fn limit_binds_when_everything_pays() {
        let mous: Vec<f64> = (0..=60).map(|k| k as f64 * 100.0).collect();
        let sweep = sweep_from(&mous, |m| 2.0 * m);
        let (stop, alloc) = optimal_mou(&sweep, &retrofit(), 6000.0).unwrap();
        assert_eq!((stop, alloc), (4000.0, 2000.0));
    }

    #[test]
    fn nothing_pays() {
        let mous: Vec<f64> = (0..=10).map(|k| k as f64 * 100.0).collect();
        let sweep = sweep_from(&mous, |m| 0.1 * m);
        assert_eq!(optimal_mou(&sweep, &retrofit(), 1000.0).unwrap(), (1000.0, 0.0));
    }

    #[test]
    fn crossing_inside_the_grid() {
        // S(m) = m² / 2000 on 0..=1000, so ΔS(m) = (2m - 50) / 2000 with a
        // 50 MW grid; ΔS >= 0.32 first fails below m = 345, i.e. at m = 300
        let mous: Vec<f64> = (0..=20).map(|k| k as f64 * 50.0).collect();
        let sweep = sweep_from(&mous, |m| m * m / 2000.0);
        let (stop, alloc) = optimal_mou(&sweep, &retrofit(), 1000.0).unwrap();
        assert_eq!(stop, 300.0);
        assert_eq!(alloc, 700.0);
    }

    #[test]
    fn empty_and_unsorted_inputs() {
        assert!(matches!(optimal_mou(&[], &retrofit(), 0.0), Err(Error::EmptySweep)));
        let mous: Vec<f64> = (0..=4).map(|k| k as f64 * 10.0).collect();
        let sweep = sweep_from(&mous, |m| m);
        let err = stack_on_sweep(&sweep, 40.0, &[storage(), retrofit()]);
        assert!(matches!(err, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn no_resources_leaves_everything_residual() {
        let mous: Vec<f64> = (0..=4).map(|k| k as f64 * 10.0).collect();
        let sweep = sweep_from(&mous, |m| m * m);
        let plan = stack_on_sweep(&sweep, 40.0, &[]).unwrap();
        assert!(plan.entries.is_empty());
        assert_eq!(plan.residual_curtailment_mwh, 1600.0);
    }

    #[test]
    fn higher_benefit_never_allocates_less() {
        let mous: Vec<f64> = (0..=40).map(|k| k as f64 * 25.0).collect();
        let sweep = sweep_from(&mous, |m| m * m / 3000.0);
        let mut last = 0.0;
        for benefit in [5.0, 10.0, 20.0, 41.69, 80.0, 200.0] {
            let r = ResourceSpec {
                benefit_per_mwh: benefit,
                ..retrofit()
            };
            let (_, alloc) = optimal_mou(&sweep, &r, 1000.0).unwrap();
            assert!(alloc >= last);
            last = alloc;
        }
    }

    #[test]
    fn parses_resource_file() {
        let text = r#"
            [[resources]]
            name = "retrofit"
            kind = "retrofit"
            capex_per_mw = 30000
            rarr = 0.16
            benefit_per_mwh = 41.69
            mw_limit = 1500

            [[resources]]
            name = "storage"
            kind = "STORAGE"
            capex_per_mw = 1000000
            rarr = 0.16
            benefit_per_mwh = 110.31
            mw_limit = 300
            storage_hours = 5
        "#;
        let rs = parse_resources(text).unwrap();
        assert_eq!(rs.len(), 2);
        assert_eq!(rs[1].kind, ResourceKind::Storage);
        assert!(parse_resources("[[resources]]\nname = 'x'\nkind = 'retrofit'\ncapex_per_mw = 1\nrarr = 2\nbenefit_per_mwh = 1\nmw_limit = 1\n").is_err());
    }
}
