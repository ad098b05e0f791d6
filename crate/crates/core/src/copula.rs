//! Pairwise Gaussian copula fitted through Kendall's rank correlation.

use std::f64::consts::FRAC_PI_2;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal;

/// Cumulative probabilities are clamped to `[CLAMP, 1 - CLAMP]` before Φ⁻¹.
pub const CLAMP: f64 = 1e-10;

/// Largest |ρ| a fitted copula may carry.
pub const RHO_LIMIT: f64 = 0.9999;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CopulaFamily {
    Gaussian,
}

/// Kendall's τ with a flag set when one side is constant and τ is undefined.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TauEstimate {
    pub tau: f64,
    pub degenerate: bool,
}

/// Kendall's τ_b in O(n log n) (Knight's merge-sort algorithm).
///
/// When every x or every y is equal τ is undefined; it is reported as 0 with
/// `degenerate` set.
pub fn kendall_tau(xs: &[f64], ys: &[f64]) -> Result<TauEstimate> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch {
            left: xs.len(),
            right: ys.len(),
        });
    }
    let n = xs.len();
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n });
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }

    let mut pairs: Vec<(f64, f64)> = xs.iter().copied().zip(ys.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let total = (n as u64) * (n as u64 - 1) / 2;
    let tied_x = tie_pairs(pairs.iter().map(|p| p.0));
    let tied_xy = tie_pairs_by(&pairs, |a, b| a == b);

    let mut ys_sorted: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let mut buf = vec![0.0; n];
    let swaps = merge_count(&mut ys_sorted, &mut buf);
    let tied_y = tie_pairs(ys_sorted.iter().copied());

    if tied_x == total || tied_y == total {
        log::debug!("Kendall tau undefined for constant input; using 0");
        return Ok(TauEstimate {
            tau: 0.0,
            degenerate: true,
        });
    }
    let s = total as f64 - tied_x as f64 - tied_y as f64 + tied_xy as f64 - 2.0 * swaps as f64;
    let denom = ((total - tied_x) as f64 * (total - tied_y) as f64).sqrt();
    Ok(TauEstimate {
        tau: (s / denom).clamp(-1.0, 1.0),
        degenerate: false,
    })
}

/// Number of tied pairs among consecutive runs of a sorted sequence.
fn tie_pairs(sorted: impl Iterator<Item = f64>) -> u64 {
    let mut ties = 0u64;
    let mut run = 0u64;
    let mut prev: Option<f64> = None;
    for v in sorted {
        if prev == Some(v) {
            run += 1;
        } else {
            ties += run * (run + 1) / 2;
            run = 0;
        }
        prev = Some(v);
    }
    ties + run * (run + 1) / 2
}

fn tie_pairs_by<T>(sorted: &[T], eq: impl Fn(&T, &T) -> bool) -> u64 {
    let mut ties = 0u64;
    let mut run = 0u64;
    for w in sorted.windows(2) {
        if eq(&w[0], &w[1]) {
            run += 1;
        } else {
            ties += run * (run + 1) / 2;
            run = 0;
        }
    }
    ties + run * (run + 1) / 2
}

/// Sorts `v` ascending, returning the number of strictly inverted pairs.
fn merge_count(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut count = {
        let (left, right) = v.split_at_mut(mid);
        let (bl, br) = buf.split_at_mut(mid);
        merge_count(left, bl) + merge_count(right, br)
    };
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf[k] = v[j];
            count += (mid - i) as u64;
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    count
}

/// Gaussian-copula correlation implied by Kendall's τ: `sin(πτ/2)`.
pub fn rho_from_tau(tau: f64) -> f64 {
    (FRAC_PI_2 * tau).sin()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianCopula {
    pub family: CopulaFamily,
    pub tau: f64,
    pub rho: f64,
}

impl GaussianCopula {
    pub fn independent() -> Self {
        Self::from_tau(0.0)
    }

    /// Copula with `rho = sin(πτ/2)` clamped to `±RHO_LIMIT`.
    pub fn from_tau(tau: f64) -> Self {
        Self {
            family: CopulaFamily::Gaussian,
            tau,
            rho: rho_from_tau(tau).clamp(-RHO_LIMIT, RHO_LIMIT),
        }
    }

    /// Copula with a given correlation; τ is recovered as `2 asin(ρ) / π`.
    pub fn from_rho(rho: f64) -> Self {
        let rho = rho.clamp(-RHO_LIMIT, RHO_LIMIT);
        Self {
            family: CopulaFamily::Gaussian,
            tau: rho.asin() / FRAC_PI_2,
            rho,
        }
    }

    /// Copula of (x, -y) given the copula of (x, y).
    pub fn negate(&self) -> Self {
        Self {
            family: self.family,
            tau: -self.tau,
            rho: -self.rho,
        }
    }

    pub fn is_independent(&self) -> bool {
        self.rho == 0.0
    }

    /// Copula density `c(u, v)`; both arguments are clamped first.
    pub fn density(&self, u: f64, v: f64) -> f64 {
        let g1 = normal::inv_cdf(u.clamp(CLAMP, 1.0 - CLAMP));
        let g2 = normal::inv_cdf(v.clamp(CLAMP, 1.0 - CLAMP));
        self.density_scores(g1, g2)
    }

    /// Density in terms of normal scores `γ = (Φ⁻¹(u), Φ⁻¹(v))`.
    #[inline]
    pub fn density_scores(&self, g1: f64, g2: f64) -> f64 {
        if self.rho == 0.0 {
            return 1.0;
        }
        let r = self.rho;
        let one_minus = 1.0 - r * r;
        let q = (r * r * (g1 * g1 + g2 * g2) - 2.0 * r * (g1 * g2)) / (2.0 * one_minus);
        (-q).exp() / one_minus.sqrt()
    }

    /// A pair of uniforms with this dependence, via a Cholesky-correlated
    /// normal pair.
    pub fn sample_pair<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let z1: f64 = rng.sample(StandardNormal);
        let zeta: f64 = rng.sample(StandardNormal);
        let z2 = self.rho * z1 + (1.0 - self.rho * self.rho).sqrt() * zeta;
        (normal::cdf(z1), normal::cdf(z2))
    }
}

/// Kendall's τ of the samples, then `rho = sin(πτ/2)` clamped.
pub fn fit_copula(xs: &[f64], ys: &[f64]) -> Result<GaussianCopula> {
    let est = kendall_tau(xs, ys)?;
    Ok(GaussianCopula::from_tau(est.tau))
}
