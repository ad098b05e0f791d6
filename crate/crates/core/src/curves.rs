//! Assembly of the probabilistic duck curve (PDC) and ramp curve (PRC).
//!
//! For each period the fleet totals are built by a left fold over the series
//! in declared order: the running total is convolved with the next series
//! under a copula fitted between the per-day partial sums and that series.
//! The PDC is then total load minus total PV under the copula fitted between
//! the two fleet totals, and each PRC entry is the difference of adjacent PDC
//! entries under the copula fitted on adjacent per-day net loads.
//!
//! The partial-sum fold is one reading of the multi-series dependent sum; it
//! is exact for the pairwise dependence it uses but depends on series order.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::copula::{fit_copula, GaussianCopula};
use crate::dps::{ddc_add_with, ddc_sub_with, discretize_relaxed, CumulativeRule, Dps};
use crate::error::{Error, Result};
use crate::ingest::{SeriesKind, TimePanel};
use crate::kde::{fit_kde, KdeModel, KdeSummary};

/// PV samples all below this (MW) mark a night period.
pub const NIGHT_MW: f64 = 1e-6;

/// Default discretization: peak total load divided into this many steps.
pub const DEFAULT_BINS: usize = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CurveKind {
    #[serde(rename = "PDC")]
    Pdc,
    #[serde(rename = "PRC")]
    Prc,
}

/// Whether copulas come from the data or are all forced to independence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DependenceMode {
    #[default]
    Fitted,
    Independent,
}

/// How the common discretization step is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSpec {
    Mw(f64),
    /// Peak observed total load divided by this many bins.
    Bins(usize),
}

impl Default for StepSpec {
    fn default() -> Self {
        StepSpec::Bins(DEFAULT_BINS)
    }
}

impl StepSpec {
    pub fn resolve(&self, panel: &TimePanel) -> Result<f64> {
        let step = match *self {
            StepSpec::Mw(mw) => mw,
            StepSpec::Bins(0) => {
                return Err(Error::InvalidArgument("bin count must be positive".into()))
            }
            StepSpec::Bins(bins) => panel.peak_total_load() / bins as f64,
        };
        if step > 0.0 && step.is_finite() {
            Ok(step)
        } else {
            Err(Error::InvalidArgument(format!("step must be positive, got {step}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveOptions {
    pub step: f64,
    pub dependence: DependenceMode,
    pub rule: CumulativeRule,
}

impl CurveOptions {
    pub fn new(step: f64) -> Self {
        Self {
            step,
            dependence: DependenceMode::Fitted,
            rule: CumulativeRule::default(),
        }
    }

    pub fn independent(mut self) -> Self {
        self.dependence = DependenceMode::Independent;
        self
    }

    fn copula(&self, xs: &[f64], ys: &[f64]) -> Result<GaussianCopula> {
        match self.dependence {
            DependenceMode::Fitted => fit_copula(xs, ys),
            DependenceMode::Independent => Ok(GaussianCopula::independent()),
        }
    }
}

/// Marginal model of one series at one period.
#[derive(Debug, Clone, PartialEq)]
pub enum Marginal {
    Kde(KdeModel),
    /// Degenerate marginal (night PV).
    Point(f64),
}

impl Marginal {
    pub fn fit(samples: &[f64], kind: SeriesKind) -> Result<Self> {
        if kind == SeriesKind::Pv && samples.iter().all(|&v| v < NIGHT_MW) {
            return Ok(Marginal::Point(0.0));
        }
        fit_kde(samples).map(Marginal::Kde)
    }

    /// Discretized marginal; PV mass below 0 MW is folded into the 0 MW cell.
    pub fn discretize(&self, step: f64, kind: SeriesKind) -> Result<Dps> {
        match self {
            Marginal::Point(v) => Dps::point((v / step).round() * step, step),
            Marginal::Kde(m) => {
                let d = discretize_relaxed(m, step)?;
                Ok(match kind {
                    SeriesKind::Pv => d.fold_below(0.0),
                    SeriesKind::Load => d,
                })
            }
        }
    }

    /// One draw from the marginal (smoothed bootstrap for a KDE); PV draws
    /// are floored at 0 MW to match [`Marginal::discretize`].
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R, kind: SeriesKind) -> f64 {
        match self {
            Marginal::Point(v) => *v,
            Marginal::Kde(m) => {
                let x = m.draw(rng);
                match kind {
                    SeriesKind::Pv => x.max(0.0),
                    SeriesKind::Load => x,
                }
            }
        }
    }

    pub fn summary(&self) -> Option<KdeSummary> {
        match self {
            Marginal::Kde(m) => Some(m.summary()),
            Marginal::Point(_) => None,
        }
    }
}

/// Fitted marginals and fold copulas of one fleet at one period.
#[derive(Debug, Clone, PartialEq)]
pub struct FleetModel {
    pub kind: SeriesKind,
    pub series_ids: Vec<String>,
    pub marginals: Vec<Marginal>,
    /// `fold_copulas[k]` couples the sum of series `0..=k` with series `k + 1`.
    pub fold_copulas: Vec<GaussianCopula>,
}

impl FleetModel {
    pub fn fit(panel: &TimePanel, kind: SeriesKind, t: usize, options: &CurveOptions) -> Result<Self> {
        check_period(panel, t)?;
        let indices = panel.indices_of(kind);
        if indices.is_empty() {
            return Err(Error::InvalidArgument(format!("panel has no {kind:?} series")));
        }
        let mut marginals = Vec::with_capacity(indices.len());
        let mut fold_copulas = Vec::with_capacity(indices.len() - 1);
        let mut partial = vec![0.0; panel.day_count()];
        for (k, &i) in indices.iter().enumerate() {
            let samples = panel.samples(i, t);
            marginals.push(Marginal::fit(samples, kind)?);
            if k > 0 {
                fold_copulas.push(options.copula(&partial, samples)?);
            }
            for (acc, v) in partial.iter_mut().zip(samples) {
                *acc += v;
            }
        }
        Ok(Self {
            kind,
            series_ids: indices.iter().map(|&i| panel.series()[i].id.clone()).collect(),
            marginals,
            fold_copulas,
        })
    }

    /// Distribution of the fleet total.
    pub fn aggregate(&self, step: f64, rule: CumulativeRule) -> Result<Dps> {
        let mut acc = self.marginals[0].discretize(step, self.kind)?;
        for (marginal, copula) in self.marginals[1..].iter().zip(&self.fold_copulas) {
            let next = marginal.discretize(step, self.kind)?;
            acc = ddc_add_with(&acc, &next, copula, rule)?;
        }
        Ok(acc)
    }

    fn copula_records(&self, t: usize, out: &mut Vec<CopulaRecord>) {
        let label = match self.kind {
            SeriesKind::Pv => "PV_PV",
            SeriesKind::Load => "load_load",
        };
        for (id, c) in self.series_ids[1..].iter().zip(&self.fold_copulas) {
            out.push(CopulaRecord::new(format!("{label}:{id}"), t, c));
        }
    }
}

/// Everything fitted for one period of the day.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodModel {
    pub t: usize,
    pub load: FleetModel,
    pub pv: FleetModel,
    /// Copula between total load and total PV.
    pub pv_load: GaussianCopula,
}

impl PeriodModel {
    pub fn fit(panel: &TimePanel, t: usize, options: &CurveOptions) -> Result<Self> {
        let load = FleetModel::fit(panel, SeriesKind::Load, t, options)?;
        let pv = FleetModel::fit(panel, SeriesKind::Pv, t, options)?;
        let pv_load = options.copula(
            &panel.fleet_total(SeriesKind::Load, t),
            &panel.fleet_total(SeriesKind::Pv, t),
        )?;
        Ok(Self { t, load, pv, pv_load })
    }

    /// Net-load distribution at this period.
    pub fn net_load(&self, step: f64, rule: CumulativeRule) -> Result<Dps> {
        let load = self.load.aggregate(step, rule)?;
        let pv = self.pv.aggregate(step, rule)?;
        ddc_sub_with(&load, &pv, &self.pv_load, rule)
    }

    pub fn is_night(&self) -> bool {
        self.pv.marginals.iter().all(|m| matches!(m, Marginal::Point(_)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CopulaRecord {
    pub pair: String,
    pub t: usize,
    pub tau: f64,
    pub rho: f64,
}

impl CopulaRecord {
    pub fn new(pair: impl Into<String>, t: usize, c: &GaussianCopula) -> Self {
        Self {
            pair: pair.into(),
            t,
            tau: c.tau,
            rho: c.rho,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalRecord {
    pub series: String,
    pub t: usize,
    pub bandwidth_mw: f64,
    pub sample_count: usize,
}

/// A PDC or PRC: one distribution per period (per adjacent pair for a PRC).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbCurve {
    pub kind: CurveKind,
    pub step_mw: f64,
    pub periods: Vec<Dps>,
    pub copulas: Vec<CopulaRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub marginals: Vec<MarginalRecord>,
}

impl ProbCurve {
    pub fn len(&self) -> usize {
        self.periods.len()
    }

    pub fn is_empty(&self) -> bool {
        self.periods.is_empty()
    }

    pub fn means(&self) -> Vec<f64> {
        self.periods.iter().map(Dps::mean).collect()
    }

    /// Rows of `(period, quantile values...)` for fan charts.
    pub fn quantile_fan(&self, quantiles: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.periods
            .iter()
            .map(|d| quantiles.iter().map(|&q| d.quantile(q)).collect())
            .collect()
    }
}

/// A fitted PDC model: per-period models plus the chosen options.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveModel {
    pub options: CurveOptions,
    pub periods: Vec<PeriodModel>,
}

impl CurveModel {
    pub fn fit(panel: &TimePanel, options: &CurveOptions) -> Result<Self> {
        if panel.indices_of(SeriesKind::Pv).is_empty() || panel.indices_of(SeriesKind::Load).is_empty()
        {
            return Err(Error::InvalidArgument(
                "panel needs at least one PV and one load series".into(),
            ));
        }
        let periods = (0..panel.periods_per_day())
            .into_par_iter()
            .map(|t| PeriodModel::fit(panel, t, options))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            options: *options,
            periods,
        })
    }

    pub fn pdc(&self) -> Result<ProbCurve> {
        let step = self.options.step;
        let rule = self.options.rule;
        let dists = self
            .periods
            .par_iter()
            .map(|p| p.net_load(step, rule))
            .collect::<Result<Vec<_>>>()?;
        let mut copulas = Vec::new();
        let mut marginals = Vec::new();
        for p in &self.periods {
            p.load.copula_records(p.t, &mut copulas);
            p.pv.copula_records(p.t, &mut copulas);
            copulas.push(CopulaRecord::new("PV_load", p.t, &p.pv_load));
            for fleet in [&p.load, &p.pv] {
                for (id, m) in fleet.series_ids.iter().zip(&fleet.marginals) {
                    if let Some(s) = m.summary() {
                        marginals.push(MarginalRecord {
                            series: id.clone(),
                            t: p.t,
                            bandwidth_mw: s.bandwidth_mw,
                            sample_count: s.sample_count,
                        });
                    }
                }
            }
        }
        Ok(ProbCurve {
            kind: CurveKind::Pdc,
            step_mw: step,
            periods: dists,
            copulas,
            marginals,
        })
    }
}

fn check_period(panel: &TimePanel, t: usize) -> Result<()> {
    if t >= panel.periods_per_day() {
        return Err(Error::PeriodOutOfRange {
            period: t,
            periods: panel.periods_per_day(),
        });
    }
    Ok(())
}

/// Distribution of the total of one fleet at period `t`, with fitted copulas.
pub fn aggregate_fleet(panel: &TimePanel, kind: SeriesKind, t: usize, step: f64) -> Result<Dps> {
    aggregate_fleet_with(panel, kind, t, &CurveOptions::new(step))
}

pub fn aggregate_fleet_with(
    panel: &TimePanel,
    kind: SeriesKind,
    t: usize,
    options: &CurveOptions,
) -> Result<Dps> {
    FleetModel::fit(panel, kind, t, options)?.aggregate(options.step, options.rule)
}

/// Probabilistic duck curve with fitted copulas.
pub fn build_pdc(panel: &TimePanel, step: f64) -> Result<ProbCurve> {
    build_pdc_with(panel, &CurveOptions::new(step))
}

pub fn build_pdc_with(panel: &TimePanel, options: &CurveOptions) -> Result<ProbCurve> {
    CurveModel::fit(panel, options)?.pdc()
}

/// Copulas between per-day net load at `t + 1` and at `t`, for every `t`.
pub fn adjacent_copulas(panel: &TimePanel, mode: DependenceMode) -> Result<Vec<GaussianCopula>> {
    let net: Vec<Vec<f64>> = (0..panel.periods_per_day()).map(|t| panel.net_load(t)).collect();
    net.windows(2)
        .map(|w| match mode {
            DependenceMode::Fitted => fit_copula(&w[1], &w[0]),
            DependenceMode::Independent => Ok(GaussianCopula::independent()),
        })
        .collect()
}

/// Probabilistic ramp curve: `T - 1` ramps, no wraparound.
pub fn build_prc(pdc: &ProbCurve, panel: &TimePanel) -> Result<ProbCurve> {
    build_prc_with(pdc, panel, DependenceMode::Fitted, CumulativeRule::default())
}

pub fn build_prc_with(
    pdc: &ProbCurve,
    panel: &TimePanel,
    mode: DependenceMode,
    rule: CumulativeRule,
) -> Result<ProbCurve> {
    if pdc.kind != CurveKind::Pdc {
        return Err(Error::InvalidArgument("ramp curve needs a PDC as input".into()));
    }
    if pdc.len() != panel.periods_per_day() {
        return Err(Error::LengthMismatch {
            left: pdc.len(),
            right: panel.periods_per_day(),
        });
    }
    let copulas = adjacent_copulas(panel, mode)?;
    let periods = pdc
        .periods
        .par_windows(2)
        .zip(copulas.par_iter())
        .map(|(w, c)| ddc_sub_with(&w[1], &w[0], c, rule))
        .collect::<Result<Vec<_>>>()?;
    Ok(ProbCurve {
        kind: CurveKind::Prc,
        step_mw: pdc.step_mw,
        periods,
        copulas: copulas
            .iter()
            .enumerate()
            .map(|(t, c)| CopulaRecord::new("netload_t+1_t", t, c))
            .collect(),
        marginals: Vec::new(),
    })
}
