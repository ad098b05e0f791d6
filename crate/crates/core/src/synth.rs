//! Deterministic synthetic PV/load panel used by tests, the acceptance suite
//! and the `synth` subcommand.
//!
//! PV farms share a clearness factor through a Gaussian latent structure, so
//! the pairwise Kendall τ between farms at any daylight period equals
//! `pv_tau` in population. Latent factors follow an AR(1) across the periods
//! of a day, which gives adjacent periods strong positive dependence.

use chrono::NaiveDate;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::copula::rho_from_tau;
use crate::error::Result;
use crate::ingest::{SeriesKind, SeriesMeta, TimePanel};
use crate::normal;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub days: usize,
    pub periods_per_day: usize,
    /// PV nameplate capacities in MW.
    pub pv_capacities: Vec<f64>,
    /// Peak demand of each load node in MW.
    pub load_peaks: Vec<f64>,
    /// Kendall τ between any two PV farms at a daylight period.
    pub pv_tau: f64,
    /// Kendall τ between any two load nodes.
    pub load_tau: f64,
    /// AR(1) coefficient of the latent factors from one period to the next.
    pub persistence: f64,
    pub first_day: NaiveDate,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            days: 180,
            periods_per_day: 24,
            pv_capacities: vec![300.0, 250.0, 200.0, 250.0],
            load_peaks: vec![450.0, 350.0, 300.0],
            pv_tau: 0.6,
            load_tau: 0.4,
            persistence: 0.9,
            first_day: NaiveDate::from_ymd_opt(2020, 3, 1).expect("valid date"),
            seed: 20_200_301,
        }
    }
}

/// Relative PV output for the hour-of-day `h` (0 at night, 1 at solar noon).
pub fn solar_shape(h: f64) -> f64 {
    const SUNRISE: f64 = 6.0;
    const SUNSET: f64 = 19.0;
    if h <= SUNRISE || h >= SUNSET {
        return 0.0;
    }
    (std::f64::consts::PI * (h - SUNRISE) / (SUNSET - SUNRISE)).sin().powf(1.2)
}

/// Relative demand for the hour-of-day `h`, peaking in the evening.
pub fn load_shape(h: f64) -> f64 {
    let bump = |center: f64, width: f64| (-0.5 * ((h - center) / width).powi(2)).exp();
    0.62 + 0.18 * bump(10.5, 3.0) + 0.38 * bump(19.5, 2.2)
}

/// AR(1) path of length `n` with unit stationary variance.
fn latent_path(rng: &mut ChaCha8Rng, n: usize, phi: f64) -> Vec<f64> {
    let innov = (1.0 - phi * phi).sqrt();
    let mut z: f64 = StandardNormal.sample(rng);
    let mut path = Vec::with_capacity(n);
    for _ in 0..n {
        path.push(z);
        let e: f64 = StandardNormal.sample(rng);
        z = phi * z + innov * e;
    }
    path
}

pub fn generate(config: &SynthConfig) -> Result<TimePanel> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let periods = config.periods_per_day;
    let hours = |t: usize| (t as f64 + 0.5) * 24.0 / periods as f64;
    let n_pv = config.pv_capacities.len();
    let n_load = config.load_peaks.len();
    let pv_share = rho_from_tau(config.pv_tau);
    let load_share = rho_from_tau(config.load_tau);

    let mut samples = vec![vec![Vec::with_capacity(config.days); periods]; n_pv + n_load];
    for _ in 0..config.days {
        let common_pv = latent_path(&mut rng, periods, config.persistence);
        let common_load = latent_path(&mut rng, periods, config.persistence);
        let level: f64 = StandardNormal.sample(&mut rng);
        for (s, cap) in config.pv_capacities.iter().enumerate() {
            let own = latent_path(&mut rng, periods, config.persistence);
            for t in 0..periods {
                let z = pv_share.sqrt() * common_pv[t] + (1.0 - pv_share).sqrt() * own[t];
                let clearness = 0.15 + 0.85 * normal::cdf(z);
                samples[s][t].push(cap * solar_shape(hours(t)) * clearness);
            }
        }
        for (m, peak) in config.load_peaks.iter().enumerate() {
            let own = latent_path(&mut rng, periods, config.persistence);
            for t in 0..periods {
                let z = load_share.sqrt() * common_load[t] + (1.0 - load_share).sqrt() * own[t];
                let factor = 1.0 + 0.04 * level + 0.06 * z;
                samples[n_pv + m][t].push(peak * load_shape(hours(t)) * factor);
            }
        }
    }

    let series = config
        .pv_capacities
        .iter()
        .enumerate()
        .map(|(i, cap)| SeriesMeta {
            id: format!("pv{}", i + 1),
            kind: SeriesKind::Pv,
            capacity: Some(*cap),
        })
        .chain(config.load_peaks.iter().enumerate().map(|(i, peak)| SeriesMeta {
            id: format!("load{}", i + 1),
            kind: SeriesKind::Load,
            capacity: Some(*peak),
        }))
        .collect();
    let days = config.first_day.iter_days().take(config.days).collect();
    TimePanel::new(periods, series, days, samples)
}

/// The bundled panel: 4 PV farms, 3 load nodes, 180 days, 24 periods.
pub fn bundled() -> TimePanel {
    generate(&SynthConfig::default()).expect("bundled synthetic panel is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::copula::kendall_tau;

    #[test]
    fn bundled_shape() {
        let p = bundled();
        assert_eq!(p.day_count(), 180);
        assert_eq!(p.periods_per_day(), 24);
        assert_eq!(p.indices_of(SeriesKind::Pv).len(), 4);
        assert_eq!(p.indices_of(SeriesKind::Load).len(), 3);
        assert!(p.samples(0, 0).iter().all(|&v| v == 0.0));
        assert!(p.samples(0, 12).iter().all(|&v| v > 0.0));
    }

    #[test]
    fn deterministic() {
        assert_eq!(bundled(), bundled());
    }

    #[test]
    fn pv_dependence_near_target() {
        let mut config = SynthConfig::default();
        config.days = 3000;
        let p = generate(&config).unwrap();
        let tau = kendall_tau(p.samples(0, 12), p.samples(1, 12)).unwrap().tau;
        assert!((tau - 0.6).abs() < 0.03, "tau = {tau}");
    }
}
