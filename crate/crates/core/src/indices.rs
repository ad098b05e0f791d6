//! Characteristic indices of a PDC/PRC pair: expected-value curves,
//! confidence-level bands, the peak-to-valley (PTV) distribution and the
//! probabilistic area (expected daily curtailment below the minimal output
//! of units, MOU).

use serde::Serialize;

use crate::copula::{fit_copula, GaussianCopula};
use crate::curves::{CurveKind, DependenceMode, ProbCurve};
use crate::dps::{ddc_sub_with, CumulativeRule, Dps};
use crate::error::{Error, Result};
use crate::ingest::TimePanel;

/// Cumulative probability that marks the lower boundary of a PDC period.
pub const LOWER_BOUNDARY_Q: f64 = 1e-5;

/// Default confidence levels, in percent.
pub const DEFAULT_ALPHAS: [f64; 3] = [50.0, 90.0, 99.0];

/// Per-period means of the PDC and PRC.
pub fn expected_curves(pdc: &ProbCurve, prc: &ProbCurve) -> Result<(Vec<f64>, Vec<f64>)> {
    if (pdc.step_mw - prc.step_mw).abs() > 1e-12 * pdc.step_mw {
        return Err(Error::StepMismatch {
            left: pdc.step_mw,
            right: prc.step_mw,
        });
    }
    Ok((pdc.means(), prc.means()))
}

/// Width of the central α% band per period:
/// `quantile(50 + α/2 %) - quantile(50 - α/2 %)`.
pub fn confidence_level(curve: &ProbCurve, alpha_pct: f64) -> Result<Vec<f64>> {
    if !(alpha_pct > 0.0 && alpha_pct < 100.0) {
        return Err(Error::ProbabilityOutOfRange(alpha_pct / 100.0));
    }
    let upper = (50.0 + alpha_pct / 2.0) / 100.0;
    let lower = (50.0 - alpha_pct / 2.0) / 100.0;
    curve
        .periods
        .iter()
        .map(|d| Ok(d.quantile(upper)? - d.quantile(lower)?))
        .collect()
}

/// Peak and valley periods of an expected curve. Ties go to the earliest
/// period; a flat curve gets the valley moved to the next period and the
/// returned flag set.
pub fn peak_valley(expected: &[f64]) -> Result<(usize, usize, bool)> {
    if expected.len() < 2 {
        return Err(Error::InvalidArgument("need at least two periods".into()));
    }
    let mut peak = 0;
    let mut valley = 0;
    for (t, &v) in expected.iter().enumerate() {
        if v > expected[peak] {
            peak = t;
        }
        if v < expected[valley] {
            valley = t;
        }
    }
    if peak == valley {
        log::warn!("expected net-load curve is flat; valley moved to period {}", peak + 1);
        return Ok((peak, (peak + 1) % expected.len(), true));
    }
    Ok((peak, valley, false))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PtvResult {
    pub distribution: Dps,
    pub peak_time: usize,
    pub valley_time: usize,
    pub copula: GaussianCopula,
    pub degenerate_curve: bool,
}

/// Distribution of net load at the peak period minus net load at the valley
/// period, both periods taken from the expected curve.
pub fn ptv_distribution(pdc: &ProbCurve, panel: &TimePanel) -> Result<PtvResult> {
    ptv_distribution_with(pdc, panel, DependenceMode::Fitted, CumulativeRule::default())
}

pub fn ptv_distribution_with(
    pdc: &ProbCurve,
    panel: &TimePanel,
    mode: DependenceMode,
    rule: CumulativeRule,
) -> Result<PtvResult> {
    if pdc.kind != CurveKind::Pdc {
        return Err(Error::InvalidArgument("PTV needs a PDC".into()));
    }
    let (peak, valley, degenerate) = peak_valley(&pdc.means())?;
    let copula = match mode {
        DependenceMode::Fitted => fit_copula(&panel.net_load(peak), &panel.net_load(valley))?,
        DependenceMode::Independent => GaussianCopula::independent(),
    };
    let distribution = ddc_sub_with(&pdc.periods[peak], &pdc.periods[valley], &copula, rule)?;
    Ok(PtvResult {
        distribution,
        peak_time: peak,
        valley_time: valley,
        copula,
        degenerate_curve: degenerate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AreaResult {
    /// MOU per period in MW.
    pub mou_curve: Vec<f64>,
    /// Expected daily curtailment in MWh.
    pub s_mwh: f64,
    /// First and last period whose lower PDC boundary falls below the MOU.
    pub t_min: Option<usize>,
    pub t_max: Option<usize>,
    /// Curtailment avoided per MW of MOU reduction, over one PDC step.
    pub ds_mwh_per_mw: f64,
}

fn broadcast(mou: &[f64], periods: usize) -> Result<Vec<f64>> {
    match mou.len() {
        1 => Ok(vec![mou[0]; periods]),
        n if n == periods => Ok(mou.to_vec()),
        n => Err(Error::LengthMismatch {
            left: n,
            right: periods,
        }),
    }
}

fn area_sum(pdc: &ProbCurve, mou: &[f64], period_hours: f64) -> f64 {
    period_hours
        * pdc
            .periods
            .iter()
            .zip(mou)
            .map(|(d, &m)| d.expected_shortfall_below(m))
            .sum::<f64>()
}

/// Expected daily energy by which net load falls short of the MOU.
///
/// `mou` is a scalar (length 1) or one value per period. The sum runs over
/// every period; outside `t_min..=t_max` only tail mass beyond the lower
/// boundary can contribute.
pub fn probabilistic_area(pdc: &ProbCurve, mou: &[f64], period_hours: f64) -> Result<AreaResult> {
    let mou_curve = broadcast(mou, pdc.len())?;
    let mut t_min = None;
    let mut t_max = None;
    for (t, (d, &m)) in pdc.periods.iter().zip(&mou_curve).enumerate() {
        if d.quantile(LOWER_BOUNDARY_Q)? < m {
            t_min.get_or_insert(t);
            t_max = Some(t);
        }
    }
    let s = area_sum(pdc, &mou_curve, period_hours);
    let lowered: Vec<f64> = mou_curve.iter().map(|m| m - pdc.step_mw).collect();
    let ds = (s - area_sum(pdc, &lowered, period_hours)) / pdc.step_mw;
    Ok(AreaResult {
        mou_curve,
        s_mwh: s,
        t_min,
        t_max,
        ds_mwh_per_mw: ds,
    })
}

/// `(S(mou) - S(mou - delta)) / delta` for a scalar MOU.
pub fn marginal_area(pdc: &ProbCurve, mou: f64, delta_p: f64, period_hours: f64) -> Result<f64> {
    if !(delta_p > 0.0) {
        return Err(Error::InvalidArgument(format!("delta must be positive, got {delta_p}")));
    }
    let n = pdc.len();
    let hi = area_sum(pdc, &vec![mou; n], period_hours);
    let lo = area_sum(pdc, &vec![mou - delta_p; n], period_hours);
    Ok((hi - lo) / delta_p)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub mou_mw: f64,
    pub s_mwh: f64,
    pub ds_mwh_per_mw: f64,
}

/// `S` and `ΔS` on an ascending MOU grid; `ΔS` uses the grid spacing.
pub fn area_sweep(
    pdc: &ProbCurve,
    mou_min: f64,
    mou_max: f64,
    mou_step: f64,
    period_hours: f64,
) -> Result<Vec<SweepRow>> {
    if !(mou_step > 0.0) || !(mou_max >= mou_min) {
        return Err(Error::InvalidArgument(format!(
            "bad MOU sweep {mou_min}..{mou_max} step {mou_step}"
        )));
    }
    let count = ((mou_max - mou_min) / mou_step + 1e-9).floor() as usize + 1;
    let n = pdc.len();
    (0..count)
        .map(|k| {
            let mou = mou_min + k as f64 * mou_step;
            let s = area_sum(pdc, &vec![mou; n], period_hours);
            let ds = marginal_area(pdc, mou, mou_step, period_hours)?;
            Ok(SweepRow {
                mou_mw: mou,
                s_mwh: s,
                ds_mwh_per_mw: ds,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfidenceBand {
    pub alpha_pct: f64,
    pub netload_mw: Vec<f64>,
    pub ramp_mw: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndexBundle {
    pub step_mw: f64,
    pub expected_netload: Vec<f64>,
    /// Expected ramp per period in MW per period.
    pub expected_ramp: Vec<f64>,
    pub cl_curve: Vec<ConfidenceBand>,
    pub ptv: PtvResult,
    pub peak_time: usize,
    pub valley_time: usize,
    pub area_sweep: Vec<SweepRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexOptions {
    pub alphas: Vec<f64>,
    pub mou_min: f64,
    pub mou_max: f64,
    pub mou_step: f64,
}

/// All indices for one PDC/PRC pair.
pub fn compute_indices(
    pdc: &ProbCurve,
    prc: &ProbCurve,
    panel: &TimePanel,
    options: &IndexOptions,
) -> Result<IndexBundle> {
    let (expected_netload, expected_ramp) = expected_curves(pdc, prc)?;
    let cl_curve = options
        .alphas
        .iter()
        .map(|&a| {
            Ok(ConfidenceBand {
                alpha_pct: a,
                netload_mw: confidence_level(pdc, a)?,
                ramp_mw: confidence_level(prc, a)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let ptv = ptv_distribution(pdc, panel)?;
    let area_sweep = area_sweep(
        pdc,
        options.mou_min,
        options.mou_max,
        options.mou_step,
        panel.period_hours(),
    )?;
    Ok(IndexBundle {
        step_mw: pdc.step_mw,
        expected_netload,
        expected_ramp,
        cl_curve,
        peak_time: ptv.peak_time,
        valley_time: ptv.valley_time,
        ptv,
        area_sweep,
    })
}
