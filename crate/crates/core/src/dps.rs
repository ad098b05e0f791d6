//! Discrete probabilistic sequences (DPS) and dependent discrete convolution.
//!
//! A [`Dps`] is a probability mass function on the grid `k * step`. Every
//! sequence in a pipeline shares one step, so sums and differences stay on the
//! same grid and element `i` of a sum collects all pairs with `ia + ib = i`.
//!
//! Dependent convolution weights each pair by the copula density evaluated at
//! the two cumulative positions:
//!
//! ```text
//! s(i) = Σ_{ia+ib=i} c(F_a(ia), F_b(ib)) · a(ia) · b(ib)
//! ```
//!
//! and renormalizes the result.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::copula::{self, GaussianCopula};
use crate::error::{Error, Result};
use crate::kde::KdeModel;
use crate::normal;

/// Tolerance for the "sums to one" invariant.
pub const MASS_TOL: f64 = 1e-9;
/// Masses below this are trimmed from the ends of a convolution result.
pub const TRIM: f64 = 1e-12;
/// Tail probability left outside the discretized support on each side.
pub const TAIL: f64 = 1e-5;
/// Pre-normalization mass deviation that triggers a warning.
const RENORM_WARN: f64 = 0.05;

/// Where in each cell the copula density is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CumulativeRule {
    /// `F(i) = Σ_{m≤i} mass(m)`: the right edge of the cell in probability.
    Right,
    /// `F(i) = Σ_{m<i} mass(m) + mass(i)/2`: the probability midpoint of the cell.
    #[default]
    Midpoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dps {
    /// Grid index of element 0; its value is `offset * step`.
    offset: i64,
    step: f64,
    masses: Vec<f64>,
}

impl Dps {
    /// Builds a sequence, normalizing the masses and trimming zero ends.
    ///
    /// `origin` must lie on the `step` grid.
    pub fn new(origin: f64, step: f64, masses: Vec<f64>) -> Result<Self> {
        check_step(step)?;
        if !origin.is_finite() {
            return Err(Error::NonFiniteInput);
        }
        let k = origin / step;
        let offset = k.round();
        if (k - offset).abs() > 1e-6 {
            return Err(Error::InvalidArgument(format!(
                "origin {origin} MW is not a multiple of the step {step} MW"
            )));
        }
        Self::from_grid(offset as i64, step, masses)
    }

    /// Builds a sequence whose element 0 sits at `offset * step`.
    pub fn from_grid(offset: i64, step: f64, masses: Vec<f64>) -> Result<Self> {
        check_step(step)?;
        if masses.iter().any(|m| !m.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        if masses.iter().any(|&m| m < 0.0) {
            return Err(Error::InvalidArgument("negative probability mass".into()));
        }
        let total: f64 = masses.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidArgument("sequence carries no mass".into()));
        }
        let mut dps = Self {
            offset,
            step,
            masses,
        };
        if (total - 1.0).abs() <= 1e-12 {
            // already normalized: keep the masses bit-for-bit
            dps.trim_zeros();
        } else {
            dps.normalize_and_trim(0.0);
        }
        Ok(dps)
    }

    /// All mass at `value` (which must lie on the step grid).
    pub fn point(value: f64, step: f64) -> Result<Self> {
        Self::new(value, step, vec![1.0])
    }

    pub fn origin(&self) -> f64 {
        self.offset as f64 * self.step
    }

    pub fn offset(&self) -> i64 {
        self.offset
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn is_point(&self) -> bool {
        self.masses.len() == 1
    }

    /// Value represented by element `i`.
    pub fn value(&self, i: usize) -> f64 {
        (self.offset + i as i64) as f64 * self.step
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(|i| self.value(i))
    }

    pub fn min_value(&self) -> f64 {
        self.origin()
    }

    pub fn max_value(&self) -> f64 {
        self.value(self.len() - 1)
    }

    pub fn mean(&self) -> f64 {
        self.values().zip(&self.masses).map(|(v, m)| v * m).sum()
    }

    pub fn variance(&self) -> f64 {
        let mu = self.mean();
        self.values()
            .zip(&self.masses)
            .map(|(v, m)| m * (v - mu).powi(2))
            .sum()
    }

    /// Cumulative probability `P(X <= x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        let mut acc = 0.0;
        for (v, m) in self.values().zip(&self.masses) {
            if v > x {
                break;
            }
            acc += m;
        }
        acc.min(1.0)
    }

    /// Smallest grid value whose cumulative probability reaches `q`.
    pub fn quantile(&self, q: f64) -> Result<f64> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::ProbabilityOutOfRange(q));
        }
        let mut acc = 0.0;
        for (i, m) in self.masses.iter().enumerate() {
            acc += m;
            // absorbs rounding in sums like 0.05 + 0.45
            if acc >= q - 1e-12 {
                return Ok(self.value(i));
            }
        }
        Ok(self.max_value())
    }

    /// `E[max(0, level - X)]`: expected shortfall of the sequence below `level`.
    pub fn expected_shortfall_below(&self, level: f64) -> f64 {
        self.values()
            .zip(&self.masses)
            .take_while(|(v, _)| *v < level)
            .map(|(v, m)| m * (level - v))
            .sum()
    }

    /// Moves all mass below `level` onto the grid point at `level`.
    pub fn fold_below(&self, level: f64) -> Dps {
        let k = (level / self.step).round() as i64;
        if self.offset >= k {
            return self.clone();
        }
        let cut = (k - self.offset) as usize;
        if cut >= self.len() {
            return Dps {
                offset: k,
                step: self.step,
                masses: vec![1.0],
            };
        }
        let below: f64 = self.masses[..cut].iter().sum();
        let mut masses = self.masses[cut..].to_vec();
        masses[0] += below;
        Dps {
            offset: k,
            step: self.step,
            masses,
        }
    }

    /// Distribution of `-X`.
    pub fn negate(&self) -> Dps {
        let mut masses = self.masses.clone();
        masses.reverse();
        Dps {
            offset: -(self.offset + self.len() as i64 - 1),
            step: self.step,
            masses,
        }
    }

    /// The same distribution shifted by `k` grid steps.
    pub fn shift(&self, k: i64) -> Dps {
        Dps {
            offset: self.offset + k,
            step: self.step,
            masses: self.masses.clone(),
        }
    }

    /// Cumulative positions at which the copula density is evaluated.
    fn cumulative(&self, rule: CumulativeRule) -> Vec<f64> {
        let mut acc = 0.0;
        self.masses
            .iter()
            .map(|m| {
                let before = acc;
                acc += m;
                match rule {
                    CumulativeRule::Right => acc,
                    CumulativeRule::Midpoint => before + 0.5 * m,
                }
            })
            .collect()
    }

    fn trim_zeros(&mut self) {
        if let (Some(first), Some(last)) = (
            self.masses.iter().position(|&m| m > 0.0),
            self.masses.iter().rposition(|&m| m > 0.0),
        ) {
            self.masses.truncate(last + 1);
            self.masses.drain(..first);
            self.offset += first as i64;
        }
    }

    fn normalize_and_trim(&mut self, threshold: f64) {
        let first = self.masses.iter().position(|&m| m > threshold);
        let last = self.masses.iter().rposition(|&m| m > threshold);
        if let (Some(first), Some(last)) = (first, last) {
            self.masses.truncate(last + 1);
            self.masses.drain(..first);
            self.offset += first as i64;
        }
        let total: f64 = self.masses.iter().sum();
        for m in &mut self.masses {
            *m /= total;
        }
    }
}

fn check_step(step: f64) -> Result<()> {
    if step > 0.0 && step.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("step must be positive, got {step}")))
    }
}

fn same_step(a: &Dps, b: &Dps) -> Result<()> {
    if (a.step - b.step).abs() > 1e-12 * a.step.max(b.step) {
        return Err(Error::StepMismatch {
            left: a.step,
            right: b.step,
        });
    }
    Ok(())
}

/// Discretizes a KDE marginal onto the `step` grid.
///
/// Support runs from the `TAIL` to the `1 - TAIL` quantile, snapped outward to
/// whole cells; tail mass beyond it is folded into the end cells. Fails with
/// [`Error::StepTooCoarse`] when the model spreads over at least one step but
/// still lands in fewer than three cells.
pub fn discretize(model: &KdeModel, step: f64) -> Result<Dps> {
    discretize_inner(model, step, true)
}

/// [`discretize`] without the coarse-step check; narrow marginals simply
/// occupy one or two cells.
pub fn discretize_relaxed(model: &KdeModel, step: f64) -> Result<Dps> {
    discretize_inner(model, step, false)
}

fn discretize_inner(model: &KdeModel, step: f64, strict: bool) -> Result<Dps> {
    check_step(step)?;
    let lo = model.inverse_cdf(TAIL)?;
    let hi = model.inverse_cdf(1.0 - TAIL)?;
    let k_lo = (lo / step + 0.5).floor() as i64;
    let k_hi = ((hi / step + 0.5).floor() as i64).max(k_lo);
    let bins = (k_hi - k_lo + 1) as usize;
    if strict && bins < 3 && hi - lo >= step {
        return Err(Error::StepTooCoarse { step, bins });
    }
    // edges[j] is the upper edge of cell j, at (k_lo + j + 1/2) * step
    let edges: Vec<f64> = (0..bins)
        .map(|j| model.cdf((k_lo + j as i64) as f64 * step + 0.5 * step))
        .collect();
    let mut masses = Vec::with_capacity(bins);
    let mut prev = 0.0;
    for (j, &upper) in edges.iter().enumerate() {
        let upper = if j + 1 == bins { 1.0 } else { upper };
        masses.push((upper - prev).max(0.0));
        prev = upper;
    }
    Dps::from_grid(k_lo, step, masses)
}

/// Plain (independent) discrete convolution, normalized.
pub fn convolve(a: &Dps, b: &Dps) -> Result<Dps> {
    same_step(a, b)?;
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &ma) in a.masses.iter().enumerate() {
        for (j, &mb) in b.masses.iter().enumerate() {
            out[i + j] += ma * mb;
        }
    }
    let mut s = Dps {
        offset: a.offset + b.offset,
        step: a.step,
        masses: out,
    };
    s.normalize_and_trim(TRIM);
    Ok(s)
}

/// Distribution of `X + Y` where (X, Y) are coupled by `copula`.
pub fn ddc_add(a: &Dps, b: &Dps, copula: &GaussianCopula) -> Result<Dps> {
    ddc_add_with(a, b, copula, CumulativeRule::default())
}

pub fn ddc_add_with(a: &Dps, b: &Dps, copula: &GaussianCopula, rule: CumulativeRule) -> Result<Dps> {
    same_step(a, b)?;
    // a point mass is independent of everything
    if b.is_point() {
        return Ok(a.shift(b.offset));
    }
    if a.is_point() {
        return Ok(b.shift(a.offset));
    }
    if copula.is_independent() {
        return convolve(a, b);
    }
    let scores = |d: &Dps| -> Vec<f64> {
        d.cumulative(rule)
            .into_iter()
            .map(|u| normal::inv_cdf(u.clamp(copula::CLAMP, 1.0 - copula::CLAMP)))
            .collect()
    };
    let ga = scores(a);
    let gb = scores(b);

    // c(u, v) = exp(g2²/2 - (ρ g1 - g2)² / (2(1 - ρ²))) / sqrt(1 - ρ²), which
    // stays finite as |ρ| → 1
    let r = copula.rho;
    let one_minus = 1.0 - r * r;
    let inv_two = 1.0 / (2.0 * one_minus);
    let norm = 1.0 / one_minus.sqrt();
    let wa: Vec<f64> = a.masses.iter().map(|m| m * norm).collect();
    let wb: Vec<f64> = gb
        .iter()
        .zip(&b.masses)
        .map(|(g, m)| m * (0.5 * g * g).exp())
        .collect();

    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, (&gi, &wi)) in ga.iter().zip(&wa).enumerate() {
        if wi == 0.0 {
            continue;
        }
        let rg = r * gi;
        let row = &mut out[i..i + b.len()];
        for ((slot, &gj), &wj) in row.iter_mut().zip(&gb).zip(&wb) {
            let d = rg - gj;
            *slot += wi * wj * (-d * d * inv_two).exp();
        }
    }
    let raw: f64 = out.iter().sum();
    if (raw - 1.0).abs() > RENORM_WARN {
        log::warn!("dependent convolution renormalized from total mass {raw:.4}");
    }
    let mut s = Dps {
        offset: a.offset + b.offset,
        step: a.step,
        masses: out,
    };
    s.normalize_and_trim(TRIM);
    Ok(s)
}

/// Distribution of `X - Y` where (X, Y) are coupled by `copula`.
pub fn ddc_sub(a: &Dps, b: &Dps, copula: &GaussianCopula) -> Result<Dps> {
    ddc_sub_with(a, b, copula, CumulativeRule::default())
}

pub fn ddc_sub_with(a: &Dps, b: &Dps, copula: &GaussianCopula, rule: CumulativeRule) -> Result<Dps> {
    same_step(a, b)?;
    ddc_add_with(a, &b.negate(), &copula.negate(), rule)
}

#[derive(Serialize, Deserialize)]
struct DpsRepr {
    origin_mw: f64,
    step_mw: f64,
    masses: Vec<f64>,
}

impl Serialize for Dps {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        DpsRepr {
            origin_mw: self.origin(),
            step_mw: self.step,
            masses: self.masses.clone(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Dps {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = DpsRepr::deserialize(deserializer)?;
        Dps::new(repr.origin_mw, repr.step_mw, repr.masses).map_err(serde::de::Error::custom)
    }
}
