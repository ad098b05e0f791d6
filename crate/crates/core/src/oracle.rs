//! Monte Carlo ground truth for the DDC results.
//!
//! The sampler draws from the *fitted* model: every marginal is sampled by
//! smoothed bootstrap from its KDE and dependence is imposed by rank
//! reordering. For a pair `(a, b)` with Gaussian copula ρ, the draws of `b`
//! are permuted so that their ranks follow `ρ·g + √(1-ρ²)·ζ`, where `g` is the
//! normal score of the rank of `a`. Along a fold the anchor `a` is the
//! running partial sum, exactly as in the DDC fold. Adjacent periods are
//! chained the same way, so row `i` of the period vectors is one joint day.
//!
//! Every random stream comes from `ChaCha8Rng::seed_from_u64(seed)` with a
//! stream id fixed by period and purpose, so results do not depend on thread
//! count or scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::copula::GaussianCopula;
use crate::curves::{
    adjacent_copulas, build_prc_with, CurveModel, CurveOptions, DependenceMode, FleetModel, ProbCurve,
};
use crate::dps::Dps;
use crate::error::{Error, Result};
use crate::indices::{probabilistic_area, ptv_distribution_with};
use crate::ingest::TimePanel;
use crate::normal;

pub const MIN_SAMPLES: usize = 1000;
pub const DEFAULT_SAMPLES: usize = 1_000_000;
pub const DEFAULT_SEED: u64 = 42;
/// W1 threshold in units of the discretization step.
pub const W1_STEPS: f64 = 2.0;
/// Relative tolerance on the probabilistic area.
pub const AREA_REL_TOL: f64 = 0.03;
/// MOU levels checked by default, as fractions of the peak total load.
pub const DEFAULT_MOU_FRACTIONS: [f64; 5] = [0.3, 0.4, 0.5, 0.6, 0.7];
pub const GENERATOR: &str = "ChaCha8";

const STREAMS_PER_PERIOD: u64 = 256;
const PV_STREAM_BASE: u64 = 128;
const PV_LOAD_STREAM: u64 = 255;
const ADJACENT_STREAM_BASE: u64 = 1 << 32;
const PTV_STREAM: u64 = 1 << 40;

/// Independent generator for one purpose, derived from the seed.
pub fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn sorted_with_index(xs: &[f64]) -> Vec<(f64, u32)> {
    let mut keyed: Vec<(f64, u32)> = xs.iter().enumerate().map(|(i, &x)| (x, i as u32)).collect();
    keyed.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    keyed
}

/// Reorders `values` so that the pair `(anchor, values)` has the given
/// Gaussian copula in ranks. `values` must be iid and independent of
/// `anchor`; its multiset is preserved.
pub fn couple_by_rank<R: Rng + ?Sized>(
    anchor: &[f64],
    mut values: Vec<f64>,
    copula: &GaussianCopula,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if anchor.len() != values.len() {
        return Err(Error::LengthMismatch {
            left: anchor.len(),
            right: values.len(),
        });
    }
    if copula.is_independent() {
        return Ok(values);
    }
    let n = anchor.len();
    let rho = copula.rho;
    let spread = (1.0 - rho * rho).sqrt();
    let mut latent = vec![0.0; n];
    for (k, &(_, i)) in sorted_with_index(anchor).iter().enumerate() {
        let g = normal::inv_cdf((k as f64 + 0.5) / n as f64);
        let zeta: f64 = rng.sample(StandardNormal);
        latent[i as usize] = rho * g + spread * zeta;
    }
    values.sort_unstable_by(f64::total_cmp);
    let mut out = vec![0.0; n];
    for (k, &(_, i)) in sorted_with_index(&latent).iter().enumerate() {
        out[i as usize] = values[k];
    }
    Ok(out)
}

fn fleet_draws(fleet: &FleetModel, n: usize, seed: u64, base: u64) -> Result<Vec<f64>> {
    let draw = |k: usize| {
        let mut rng = stream(seed, base + 2 * k as u64);
        let m = &fleet.marginals[k];
        (0..n).map(|_| m.draw(&mut rng, fleet.kind)).collect::<Vec<f64>>()
    };
    let mut acc = draw(0);
    for (k, copula) in fleet.fold_copulas.iter().enumerate() {
        let next = draw(k + 1);
        let mut rng = stream(seed, base + 2 * k as u64 + 1);
        let next = couple_by_rank(&acc, next, copula, &mut rng)?;
        for (a, x) in acc.iter_mut().zip(next) {
            *a += x;
        }
    }
    Ok(acc)
}

/// `n` draws of one fleet's total from its fitted marginals and fold copulas.
pub fn sample_fleet(fleet: &FleetModel, n: usize, seed: u64) -> Result<Vec<f64>> {
    fleet_draws(fleet, n, seed, 0)
}

/// `n` draws of net load at every period, each period sampled on its own.
pub fn sample_net_loads(model: &CurveModel, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    model
        .periods
        .par_iter()
        .map(|p| {
            let base = p.t as u64 * STREAMS_PER_PERIOD;
            let load = fleet_draws(&p.load, n, seed, base)?;
            let pv = fleet_draws(&p.pv, n, seed, base + PV_STREAM_BASE)?;
            let mut rng = stream(seed, base + PV_LOAD_STREAM);
            let pv = couple_by_rank(&load, pv, &p.pv_load, &mut rng)?;
            Ok(load.iter().zip(&pv).map(|(l, v)| l - v).collect())
        })
        .collect()
}

/// Links per-period draws into joint days: period `t + 1` is reordered
/// against period `t` under `adjacent[t]`.
pub fn chain_days(mut periods: Vec<Vec<f64>>, adjacent: &[GaussianCopula], seed: u64) -> Result<Vec<Vec<f64>>> {
    if adjacent.len() + 1 != periods.len() {
        return Err(Error::LengthMismatch {
            left: adjacent.len() + 1,
            right: periods.len(),
        });
    }
    for (t, copula) in adjacent.iter().enumerate() {
        let next = std::mem::take(&mut periods[t + 1]);
        let mut rng = stream(seed, ADJACENT_STREAM_BASE + t as u64);
        periods[t + 1] = couple_by_rank(&periods[t], next, copula, &mut rng)?;
    }
    Ok(periods)
}

/// `n` joint days of per-period net load from the fitted model, as one
/// vector per period.
pub fn sample_joint_days(model: &CurveModel, panel: &TimePanel, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let adjacent = adjacent_copulas(panel, model.options.dependence)?;
    chain_days(sample_net_loads(model, n, seed)?, &adjacent, seed)
}

/// W1 and KS distance between a Dps and sorted samples. Both CDFs are
/// right-continuous step functions, so the L1 integral is exact.
fn distances(d: &Dps, sorted: &[f64]) -> (f64, f64) {
    let masses = d.masses();
    let n = sorted.len() as f64;
    let (mut i, mut j) = (0, 0);
    let mut fd: f64 = 0.0;
    let mut fe: f64 = 0.0;
    let mut w1 = 0.0;
    let mut ks: f64 = 0.0;
    let mut prev = f64::NAN;
    while i < masses.len() || j < sorted.len() {
        let xd = if i < masses.len() { d.value(i) } else { f64::INFINITY };
        let xe = if j < sorted.len() { sorted[j] } else { f64::INFINITY };
        let x = xd.min(xe);
        if !prev.is_nan() {
            w1 += (fd - fe).abs() * (x - prev);
        }
        while i < masses.len() && d.value(i) <= x {
            fd += masses[i];
            i += 1;
        }
        while j < sorted.len() && sorted[j] <= x {
            j += 1;
        }
        fe = j as f64 / n;
        ks = ks.max((fd - fe).abs());
        prev = x;
    }
    (w1, ks.min(1.0))
}

fn sorted_copy(samples: &[f64]) -> Result<Vec<f64>> {
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    let mut s = samples.to_vec();
    s.sort_unstable_by(f64::total_cmp);
    Ok(s)
}

fn check_count(samples: &[f64]) -> Result<()> {
    if samples.len() < MIN_SAMPLES {
        return Err(Error::TooFewSamples {
            needed: MIN_SAMPLES,
            got: samples.len(),
        });
    }
    Ok(())
}

/// L1 distance between the CDF of `dps` and the empirical CDF of `samples`.
pub fn wasserstein1(dps: &Dps, samples: &[f64]) -> Result<f64> {
    check_count(samples)?;
    Ok(distances(dps, &sorted_copy(samples)?).0)
}

/// Largest absolute gap between the two CDFs.
pub fn ks_statistic(dps: &Dps, samples: &[f64]) -> Result<f64> {
    check_count(samples)?;
    Ok(distances(dps, &sorted_copy(samples)?).1)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    /// `PDC`, `PRC` or `PTV`.
    pub quantity: String,
    pub period: Option<usize>,
    pub mean_model_mw: f64,
    pub mean_mc_mw: f64,
    pub wasserstein1_mw: f64,
    pub ks_stat: f64,
    pub threshold_mw: f64,
    pub pass: bool,
}

fn compare(quantity: &str, period: Option<usize>, d: &Dps, samples: &[f64], threshold: f64) -> Result<Comparison> {
    check_count(samples)?;
    let sorted = sorted_copy(samples)?;
    let (w1, ks) = distances(d, &sorted);
    Ok(Comparison {
        quantity: quantity.into(),
        period,
        mean_model_mw: d.mean(),
        mean_mc_mw: sorted.iter().sum::<f64>() / sorted.len() as f64,
        wasserstein1_mw: w1,
        ks_stat: ks,
        threshold_mw: threshold,
        pass: w1 <= threshold,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AreaCheck {
    pub mou_mw: f64,
    pub s_model_mwh: f64,
    pub s_mc_mwh: f64,
    pub rel_error: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// Raw-data comparison of one period: the fitted and the ρ = 0 PDC against
/// the empirical net load of the panel.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkRow {
    pub period: usize,
    pub w1_fitted_mw: f64,
    pub w1_independent_mw: f64,
    pub ks_fitted: f64,
    pub ks_independent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub generator: String,
    pub seed: u64,
    pub sample_count: usize,
    pub step_mw: f64,
    pub comparisons: Vec<Comparison>,
    pub areas: Vec<AreaCheck>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub benchmark: Option<Vec<BenchmarkRow>>,
    pub pass: bool,
}

impl OracleReport {
    pub fn failures(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .comparisons
            .iter()
            .filter(|c| !c.pass)
            .map(|c| {
                let at = c.period.map(|t| format!(" period {t}")).unwrap_or_default();
                format!(
                    "{}{at}: W1 {:.4} MW > {:.4} MW",
                    c.quantity, c.wasserstein1_mw, c.threshold_mw
                )
            })
            .collect();
        out.extend(self.areas.iter().filter(|a| !a.pass).map(|a| {
            format!(
                "S({} MW): relative error {:.4} > {:.4}",
                a.mou_mw, a.rel_error, a.threshold
            )
        }));
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationOptions {
    pub curve: CurveOptions,
    pub samples: usize,
    pub seed: u64,
    /// MOU levels for the area check; empty means [`DEFAULT_MOU_FRACTIONS`]
    /// of the peak total load.
    pub mou_levels: Vec<f64>,
    pub benchmark: bool,
}

impl ValidationOptions {
    pub fn new(curve: CurveOptions) -> Self {
        Self {
            curve,
            samples: DEFAULT_SAMPLES,
            seed: DEFAULT_SEED,
            mou_levels: Vec::new(),
            benchmark: false,
        }
    }
}

/// Builds PDC, PRC, PTV and S from `panel` and checks each against the
/// Monte Carlo draws of the same fitted model.
pub fn validate(panel: &TimePanel, options: &ValidationOptions) -> Result<OracleReport> {
    let step = options.curve.step;
    let threshold = W1_STEPS * step;
    let model = CurveModel::fit(panel, &options.curve)?;
    let pdc = model.pdc()?;
    let prc = build_prc_with(&pdc, panel, options.curve.dependence, options.curve.rule)?;
    let ptv = ptv_distribution_with(&pdc, panel, options.curve.dependence, options.curve.rule)?;

    let days = sample_joint_days(&model, panel, options.samples, options.seed)?;
    let mut comparisons = Vec::with_capacity(2 * days.len());
    for (t, d) in pdc.periods.iter().enumerate() {
        comparisons.push(compare("PDC", Some(t), d, &days[t], threshold)?);
    }
    for (t, d) in prc.periods.iter().enumerate() {
        let ramps: Vec<f64> = days[t + 1].iter().zip(&days[t]).map(|(b, a)| b - a).collect();
        comparisons.push(compare("PRC", Some(t), d, &ramps, threshold)?);
    }
    {
        // the PTV copula links the peak and valley directly, not via the chain
        let mut rng = stream(options.seed, PTV_STREAM);
        let valley = couple_by_rank(
            &days[ptv.peak_time],
            days[ptv.valley_time].clone(),
            &ptv.copula,
            &mut rng,
        )?;
        let diff: Vec<f64> = days[ptv.peak_time].iter().zip(&valley).map(|(p, v)| p - v).collect();
        comparisons.push(compare("PTV", None, &ptv.distribution, &diff, threshold)?);
    }

    let levels = if options.mou_levels.is_empty() {
        let peak = panel.peak_total_load();
        DEFAULT_MOU_FRACTIONS.iter().map(|f| f * peak).collect()
    } else {
        options.mou_levels.clone()
    };
    let hours = panel.period_hours();
    let areas = levels
        .iter()
        .map(|&mou| {
            let s_model = probabilistic_area(&pdc, &[mou], hours)?.s_mwh;
            let s_mc = hours
                * days
                    .iter()
                    .map(|xs| xs.iter().map(|&x| (mou - x).max(0.0)).sum::<f64>() / xs.len() as f64)
                    .sum::<f64>();
            let rel_error = if s_mc > 0.0 {
                (s_model - s_mc).abs() / s_mc
            } else if s_model == 0.0 {
                0.0
            } else {
                f64::INFINITY
            };
            Ok(AreaCheck {
                mou_mw: mou,
                s_model_mwh: s_model,
                s_mc_mwh: s_mc,
                rel_error,
                threshold: AREA_REL_TOL,
                pass: rel_error <= AREA_REL_TOL,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let benchmark = if options.benchmark {
        Some(benchmark_rows(panel, &pdc, options)?)
    } else {
        None
    };
    let pass = comparisons.iter().all(|c| c.pass) && areas.iter().all(|a| a.pass);
    Ok(OracleReport {
        generator: GENERATOR.into(),
        seed: options.seed,
        sample_count: options.samples,
        step_mw: step,
        comparisons,
        areas,
        benchmark,
        pass,
    })
}

/// Compares the fitted and the independent PDC against the raw per-day net
/// loads. The raw sample is small, so these rows are informative only.
pub fn benchmark(panel: &TimePanel, curve: &CurveOptions) -> Result<Vec<BenchmarkRow>> {
    let pdc = CurveModel::fit(panel, curve)?.pdc()?;
    benchmark_rows(panel, &pdc, &ValidationOptions::new(*curve))
}

fn benchmark_rows(panel: &TimePanel, fitted: &ProbCurve, options: &ValidationOptions) -> Result<Vec<BenchmarkRow>> {
    let mut indep_opts = options.curve;
    indep_opts.dependence = DependenceMode::Independent;
    let independent = CurveModel::fit(panel, &indep_opts)?.pdc()?;
    (0..panel.periods_per_day())
        .map(|t| {
            let raw = sorted_copy(&panel.net_load(t))?;
            let (w1_fitted_mw, ks_fitted) = distances(&fitted.periods[t], &raw);
            let (w1_independent_mw, ks_independent) = distances(&independent.periods[t], &raw);
            Ok(BenchmarkRow {
                period: t,
                w1_fitted_mw,
                w1_independent_mw,
                ks_fitted,
                ks_independent,
            })
        })
        .collect()
}
