//! Gaussian kernel density estimate of one series at one period.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::normal;

/// Target accuracy of [`KdeModel::inverse_cdf`] in probability.
const INVERSE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct KdeModel {
    samples: Vec<f64>,
    bandwidth: f64,
    min: f64,
    max: f64,
}

/// Metadata written into result files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KdeSummary {
    pub bandwidth_mw: f64,
    pub sample_count: usize,
}

/// Fits a Gaussian KDE with Silverman's rule-of-thumb bandwidth
/// `0.9 * min(sd, IQR / 1.34) * n^(-1/5)`, floored by [`floor_bandwidth`].
pub fn fit_kde(samples: &[f64]) -> Result<KdeModel> {
    if samples.len() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: samples.len(),
        });
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    let h = silverman_bandwidth(samples).max(floor_bandwidth(samples));
    KdeModel::with_bandwidth(samples.to_vec(), h)
}

/// Silverman's rule without the floor. Zero for constant samples.
pub fn silverman_bandwidth(samples: &[f64]) -> f64 {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    // heavy ties can zero the IQR while the spread is real
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    0.9 * spread * n.powf(-0.2)
}

/// Lower bound on the bandwidth for near-degenerate samples.
pub fn floor_bandwidth(samples: &[f64]) -> f64 {
    let (lo, hi) = min_max(samples);
    1e-6_f64.max(1e-3 * (hi - lo + 1e-6))
}

/// Linear-interpolation sample quantile (Hyndman-Fan type 7) of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

fn min_max(xs: &[f64]) -> (f64, f64) {
    xs.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

impl KdeModel {
    /// Model with an explicit bandwidth. Accepts a single sample, which the
    /// fitting path never produces.
    pub fn with_bandwidth(samples: Vec<f64>, bandwidth: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::TooFewSamples { needed: 1, got: 0 });
        }
        if samples.iter().any(|x| !x.is_finite()) || !bandwidth.is_finite() {
            return Err(Error::NonFiniteInput);
        }
        if bandwidth <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "bandwidth must be positive, got {bandwidth}"
            )));
        }
        let (min, max) = min_max(&samples);
        Ok(Self {
            samples,
            bandwidth,
            min,
            max,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn sample_count(&self) -> usize {
        self.samples.len()
    }

    pub fn min_sample(&self) -> f64 {
        self.min
    }

    pub fn max_sample(&self) -> f64 {
        self.max
    }

    pub fn summary(&self) -> KdeSummary {
        KdeSummary {
            bandwidth_mw: self.bandwidth,
            sample_count: self.samples.len(),
        }
    }

    pub fn mean(&self) -> f64 {
        self.samples.iter().sum::<f64>() / self.samples.len() as f64
    }

    pub fn pdf(&self, x: f64) -> f64 {
        let h = self.bandwidth;
        let sum: f64 = self.samples.iter().map(|xi| normal::pdf((x - xi) / h)).sum();
        sum / (self.samples.len() as f64 * h)
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let h = self.bandwidth;
        let sum: f64 = self.samples.iter().map(|xi| normal::cdf((x - xi) / h)).sum();
        (sum / self.samples.len() as f64).clamp(0.0, 1.0)
    }

    /// Value `x` with `|cdf(x) - p| <= 1e-10`, by bisection.
    pub fn inverse_cdf(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::ProbabilityOutOfRange(p));
        }
        // Φ(±40) is 0/1 to double precision, so the bracket always holds.
        let mut lo = self.min - 40.0 * self.bandwidth;
        let mut hi = self.max + 40.0 * self.bandwidth;
        loop {
            let mid = 0.5 * (lo + hi);
            let c = self.cdf(mid);
            if (c - p).abs() <= INVERSE_TOL || mid <= lo || mid >= hi {
                return Ok(mid);
            }
            if c < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    }

    /// One draw from the smoothed bootstrap: a random sample plus kernel noise.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let i = rng.random_range(0..self.samples.len());
        let z: f64 = rng.sample(StandardNormal);
        self.samples[i] + self.bandwidth * z
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop, prop_assert, prop_assume, proptest, Strategy};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn normal_draws(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.sample(StandardNormal)).collect()
    }

    fn trapezoid(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let dx = (b - a) / n as f64;
        let inner: f64 = (1..n).map(|i| f(a + i as f64 * dx)).sum();
        dx * (0.5 * (f(a) + f(b)) + inner)
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(fit_kde(&[1.0]), Err(Error::TooFewSamples { .. })));
        assert!(matches!(fit_kde(&[1.0, f64::NAN]), Err(Error::NonFiniteInput)));
    }

    #[test]
    fn degenerate_samples_get_floor_bandwidth() {
        let m = fit_kde(&[5.0, 5.0]).unwrap();
        assert_eq!(m.bandwidth(), 1e-6);
        assert!((m.inverse_cdf(0.5).unwrap() - 5.0).abs() < 1e-9);
    }

    #[test]
    fn two_point_bandwidth_by_hand() {
        // sd = sqrt(0.5); type-7 quartiles 0.25 and 0.75 give IQR = 0.5
        let sd = 0.5_f64.sqrt();
        let expected = 0.9 * sd.min(0.5 / 1.34) * 2f64.powf(-0.2);
        let m = fit_kde(&[0.0, 1.0]).unwrap();
        assert!((m.bandwidth() - expected).abs() < 1e-15);
    }

    #[test]
    fn standard_normal_bandwidth() {
        let xs = normal_draws(1000, 7);
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let mut s = xs.clone();
        s.sort_by(f64::total_cmp);
        let iqr = quantile_sorted(&s, 0.75) - quantile_sorted(&s, 0.25);
        let by_hand = 0.9 * sd.min(iqr / 1.34) * n.powf(-0.2);
        let h = fit_kde(&xs).unwrap().bandwidth();
        assert!((h - by_hand).abs() < 1e-12);
        assert!((h - 0.226).abs() / 0.226 < 0.1, "h = {h}");
    }

    #[test]
    fn closed_form_points() {
        let single = KdeModel::with_bandwidth(vec![0.0], 2.0).unwrap();
        assert!((single.pdf(0.0) - 0.398_942_280_401_432_7 / 2.0).abs() < 1e-15);

        let pair = KdeModel::with_bandwidth(vec![-1.0, 1.0], 1.0).unwrap();
        assert!((pair.pdf(0.0) - 0.241_970_724_519_143_37).abs() < 1e-15);
        assert!((pair.cdf(0.0) - 0.5).abs() < 1e-15);
        assert!(pair.inverse_cdf(0.5).unwrap().abs() < 1e-9);
        assert!(pair.cdf(-1.0 - 10.0) < 1e-9);
    }

    #[test]
    fn pdf_integrates_to_one_and_matches_cdf() {
        let xs = normal_draws(200, 11).into_iter().map(|x| 50.0 + 8.0 * x).collect::<Vec<_>>();
        let m = fit_kde(&xs).unwrap();
        let h = m.bandwidth();
        let (a, b) = (m.min_sample() - 8.0 * h, m.max_sample() + 8.0 * h);
        let total = trapezoid(|x| m.pdf(x), a, b, 20_000);
        assert!((total - 1.0).abs() < 1e-6, "total = {total}");

        // cdf(x) vs cdf(a) + ∫_a^x pdf at 100 grid points
        let base = m.cdf(a);
        for k in 1..=100 {
            let x = a + (b - a) * k as f64 / 100.0;
            let integral = base + trapezoid(|y| m.pdf(y), a, x, 4000);
            assert!((m.cdf(x) - integral).abs() < 1e-6, "x = {x}");
        }
    }

    #[test]
    fn inverse_matches_empirical_tail_quantile() {
        let xs = normal_draws(10_000, 3);
        let m = fit_kde(&xs).unwrap();
        let mut s = xs.clone();
        s.sort_by(f64::total_cmp);
        let empirical = quantile_sorted(&s, 0.975);
        let q = m.inverse_cdf(0.975).unwrap();
        assert!((q - empirical).abs() < 0.1);
        assert!((q - 1.96).abs() < 0.1);
        assert!(matches!(m.inverse_cdf(1.0), Err(Error::ProbabilityOutOfRange(_))));
        assert!(matches!(m.inverse_cdf(0.0), Err(Error::ProbabilityOutOfRange(_))));
    }

    fn sample_vec() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-100.0f64..100.0, 2..40)
            .prop_filter("spread", |v| v.iter().any(|x| (x - v[0]).abs() > 1e-3))
    }

    proptest! {
        #[test]
        fn cdf_is_monotone(xs in sample_vec(), a in -150.0f64..150.0, b in -150.0f64..150.0) {
            let m = fit_kde(&xs).unwrap();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(m.cdf(lo) <= m.cdf(hi));
        }

        #[test]
        fn cdf_derivative_is_pdf(xs in sample_vec(), u in 0.0f64..1.0) {
            let m = fit_kde(&xs).unwrap();
            let x = m.min_sample() + u * (m.max_sample() - m.min_sample());
            let d = 1e-4 * m.bandwidth();
            let fd = (m.cdf(x + d) - m.cdf(x - d)) / (2.0 * d);
            prop_assert!((fd - m.pdf(x)).abs() <= 1e-5 * m.pdf(x).max(1.0));
        }

        #[test]
        fn location_scale_equivariance(xs in sample_vec(), a in 0.1f64..10.0, b in -50.0f64..50.0, u in 0.0f64..1.0) {
            let m = fit_kde(&xs).unwrap();
            let shifted: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
            let ms = fit_kde(&shifted).unwrap();
            let x = m.min_sample() - 2.0 + u * (m.max_sample() - m.min_sample() + 4.0);
            prop_assert!((ms.cdf(a * x + b) - m.cdf(x)).abs() < 1e-9);
        }

        #[test]
        fn inverse_round_trips(xs in sample_vec(), u in 0.0f64..1.0) {
            let m = fit_kde(&xs).unwrap();
            let q = m.min_sample() + u * (m.max_sample() - m.min_sample());
            let p = m.cdf(q);
            prop_assume!(p > 1e-6 && p < 1.0 - 1e-6);
            let back = m.inverse_cdf(p).unwrap();
            prop_assert!((m.cdf(back) - p).abs() <= 1e-10);
            // the inverse is only unique where the density is not flat
            if m.pdf(q) > 1e-4 {
                prop_assert!((back - q).abs() < 1e-5, "q={} back={}", q, back);
            }
        }
    }
}
