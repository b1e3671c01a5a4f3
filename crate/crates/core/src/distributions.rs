//! Offspring distributions on the nonnegative integers.
//!
//! All laws have finite support, so generating functions, moments and the
//! zero-truncated binomial transforms are exact finite sums.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{binomial_mass, ln_factorials, one_minus_pow_complement, LogSumExp};

/// Tolerance on the total mass of a constructed law.
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// Pointwise agreement required between the two routes of [`ztb_mixture`].
pub const ZTB_ROUTE_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PmfError {
    #[error("a distribution needs at least one entry")]
    Empty,
    #[error("degrees must be strictly increasing (entry {index})")]
    UnsortedDegrees { index: usize },
    #[error("mass at degree {degree} is {prob}, expected a finite value in [0, 1]")]
    InvalidMass { degree: u32, prob: f64 },
    #[error("total mass {sum} differs from 1 by more than {NORMALIZATION_TOL:e}")]
    NotNormalized { sum: f64 },
    #[error("law puts mass {0} on zero children")]
    MassAtZero(f64),
    #[error("law is a Dirac mass at one child (mu(1) = 1)")]
    DegenerateAtOne,
    #[error("moment exponent q = {0} must lie in (1, 2]")]
    InvalidExponent(f64),
    #[error("success probability {0} must lie in (0, 1]")]
    InvalidProbability(f64),
    #[error("trial count must be at least 1")]
    ZeroTrials,
    #[error("truncation cutoff leaves no mass")]
    NoMassBelowCutoff,
    #[error(
        "zero-truncated binomial mixture routes disagree at degree {degree}: {explicit} vs {mixed}"
    )]
    RouteMismatch { degree: u32, explicit: f64, mixed: f64 },
}

/// Wire format: `{"entries": [[degree, prob], ...]}`.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PmfRepr {
    entries: Vec<(u32, f64)>,
}

/// Finite-support probability mass function on child counts.
///
/// Immutable after construction. Degrees are strictly increasing and the
/// masses sum to one within [`NORMALIZATION_TOL`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PmfRepr", into = "PmfRepr")]
pub struct OffspringPmf {
    entries: Vec<(u32, f64)>,
    cumulative: Vec<f64>,
}

impl TryFrom<PmfRepr> for OffspringPmf {
    type Error = PmfError;

    fn try_from(r: PmfRepr) -> Result<Self, PmfError> {
        OffspringPmf::new(r.entries)
    }
}

impl From<OffspringPmf> for PmfRepr {
    fn from(p: OffspringPmf) -> Self {
        PmfRepr { entries: p.entries }
    }
}

impl OffspringPmf {
    pub fn new(mut entries: Vec<(u32, f64)>) -> Result<Self, PmfError> {
        if entries.is_empty() {
            return Err(PmfError::Empty);
        }
        for (i, &(d, p)) in entries.iter().enumerate() {
            if !(p.is_finite() && (0.0..=1.0 + NORMALIZATION_TOL).contains(&p)) {
                return Err(PmfError::InvalidMass { degree: d, prob: p });
            }
            if i > 0 && entries[i - 1].0 >= d {
                return Err(PmfError::UnsortedDegrees { index: i });
            }
        }
        let sum: f64 = entries.iter().map(|e| e.1).sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOL {
            return Err(PmfError::NotNormalized { sum });
        }
        for e in &mut entries {
            e.1 = e.1.min(1.0);
        }
        let mut acc = 0.0;
        let cumulative = entries
            .iter()
            .map(|&(_, p)| {
                acc += p;
                acc
            })
            .collect();
        Ok(Self { entries, cumulative })
    }

    /// Builds a law from unnormalized weights, dividing by their total.
    pub fn from_weights(weights: Vec<(u32, f64)>) -> Result<Self, PmfError> {
        let total: f64 = weights.iter().map(|w| w.1).sum();
        if total.is_nan() || total <= 0.0 {
            return Err(PmfError::NoMassBelowCutoff);
        }
        Self::new(weights.into_iter().map(|(d, w)| (d, w / total)).collect())
    }

    /// Truncates a law given by `mass(d)` to `d <= cutoff` and renormalizes.
    ///
    /// Returns the truncated law and the tail mass that was discarded.
    pub fn truncated(
        cutoff: u32,
        mass: impl Fn(u32) -> f64,
    ) -> Result<(Self, f64), PmfError> {
        let weights: Vec<(u32, f64)> = (0..=cutoff).map(|d| (d, mass(d))).collect();
        let kept: f64 = weights.iter().map(|w| w.1).sum();
        let pmf = Self::from_weights(weights)?;
        Ok((pmf, (1.0 - kept).max(0.0)))
    }

    pub fn dirac(degree: u32) -> Self {
        Self { entries: vec![(degree, 1.0)], cumulative: vec![1.0] }
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    /// Mass at `degree` (zero off the support).
    pub fn prob(&self, degree: u32) -> f64 {
        match self.entries.binary_search_by_key(&degree, |e| e.0) {
            Ok(i) => self.entries[i].1,
            Err(_) => 0.0,
        }
    }

    /// True when the law puts no mass on zero children.
    pub fn no_zero(&self) -> bool {
        self.prob(0) == 0.0
    }

    pub fn max_degree(&self) -> u32 {
        self.entries.last().map_or(0, |e| e.0)
    }

    /// Smallest degree with positive mass.
    pub fn min_degree(&self) -> u32 {
        self.entries.iter().find(|e| e.1 > 0.0).map_or(0, |e| e.0)
    }

    /// Checks `mu(0) = 0` and `mu(1) < 1`, the standing hypothesis on the
    /// offspring law of the underlying tree.
    pub fn check_supercritical_no_death(&self) -> Result<(), PmfError> {
        let zero = self.prob(0);
        if zero > 0.0 {
            return Err(PmfError::MassAtZero(zero));
        }
        if self.prob(1) >= 1.0 - NORMALIZATION_TOL {
            return Err(PmfError::DegenerateAtOne);
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        self.entries.iter().map(|&(d, p)| d as f64 * p).sum()
    }

    /// `E[X^q]` for `q` in `(1, 2]`.
    pub fn q_moment(&self, q: f64) -> Result<f64, PmfError> {
        check_exponent(q)?;
        Ok(self.entries.iter().map(|&(d, p)| (d as f64).powf(q) * p).sum())
    }

    /// q-variance `E[X^q] - E[X]^q`.
    pub fn q_variance(&self, q: f64) -> Result<f64, PmfError> {
        let v = self.q_moment(q)? - self.mean().powf(q);
        // Rounding can leave a -1e-16 residue for point masses.
        Ok(v.max(0.0))
    }

    /// `G(s) = E[s^X]`.
    pub fn generating_function(&self, s: f64) -> f64 {
        self.entries.iter().map(|&(d, p)| p * s.powi(d as i32)).sum()
    }

    /// `log G(s)` from `log s`, usable when `s` itself underflows.
    pub fn ln_generating_function(&self, ln_s: f64) -> f64 {
        let mut acc = LogSumExp::default();
        for &(d, p) in &self.entries {
            if p > 0.0 {
                let term = if d == 0 { 0.0 } else { d as f64 * ln_s };
                acc.push(p.ln() + term);
            }
        }
        acc.value()
    }

    /// `F(t) = 1 - G(1 - t)`, computed without cancellation.
    pub fn survival_transform(&self, t: f64) -> f64 {
        self.entries.iter().map(|&(d, p)| p * one_minus_pow_complement(t, d)).sum()
    }

    /// `F(t) / t`, with its limit `nu` at `t = 0`.
    pub fn survival_ratio(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return self.mean();
        }
        self.entries
            .iter()
            .map(|&(d, p)| p * one_minus_pow_complement(t, d) / t)
            .sum()
    }

    /// Draws a degree by cumulative inversion over the support.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        if self.entries.len() == 1 {
            return self.entries[0].0;
        }
        let u: f64 = rng.random();
        let i = self.cumulative.partition_point(|&c| c <= u);
        if i < self.entries.len() {
            return self.entries[i].0;
        }
        // u fell in the rounding gap above the last cumulative value.
        self.entries.iter().rev().find(|e| e.1 > 0.0).map_or(0, |e| e.0)
    }
}

fn check_exponent(q: f64) -> Result<(), PmfError> {
    if q > 1.0 && q <= 2.0 {
        Ok(())
    } else {
        Err(PmfError::InvalidExponent(q))
    }
}

fn check_success_probability(p: f64) -> Result<(), PmfError> {
    if p > 0.0 && p <= 1.0 {
        Ok(())
    } else {
        Err(PmfError::InvalidProbability(p))
    }
}

/// Law of `B` conditioned on `B > 0` for `B ~ Bin(n, p)`.
pub fn zero_truncated_binomial(n: u32, p: f64) -> Result<OffspringPmf, PmfError> {
    if n == 0 {
        return Err(PmfError::ZeroTrials);
    }
    check_success_probability(p)?;
    let lf = ln_factorials(n as usize);
    let positive = one_minus_pow_complement(p, n);
    let entries = (1..=n).map(|k| (k, binomial_mass(n, k, p, &lf) / positive)).collect();
    OffspringPmf::new(entries)
}

/// Law of a zero-truncated binomial with a random number of trials:
/// `B ~ Bin(X, p)` with `X ~ pmf`, conditioned on `B > 0`.
///
/// Computed twice: once from the explicit double sum over
/// `(kept, pruned)` pairs with pruning probability `1 - p`, and once by mixing
/// [`zero_truncated_binomial`] laws over `X` reweighted by their survival
/// probabilities. The routes must agree pointwise within [`ZTB_ROUTE_TOL`];
/// the returned masses are renormalized to absorb the last ulp of rounding.
pub fn ztb_mixture(pmf: &OffspringPmf, p: f64) -> Result<OffspringPmf, PmfError> {
    check_success_probability(p)?;
    let zero = pmf.prob(0);
    if zero > 0.0 {
        return Err(PmfError::MassAtZero(zero));
    }
    let max = pmf.max_degree();
    let lf = ln_factorials(max as usize);
    let pruned = 1.0 - p;
    // 1 - G(1 - p): probability that at least one trial succeeds.
    let alive = pmf.survival_transform(p);

    let explicit: Vec<f64> = (1..=max)
        .map(|d| {
            let mut s = 0.0;
            for l in 0..=(max - d) {
                let mass = pmf.prob(d + l);
                if mass == 0.0 {
                    continue;
                }
                let choose = (lf[(d + l) as usize] - lf[d as usize] - lf[l as usize]).exp();
                let pruned_part = if l == 0 { 1.0 } else { pruned.powi(l as i32) };
                s += mass * choose * pruned_part * p.powi(d as i32);
            }
            s / alive
        })
        .collect();

    let mut mixed = vec![0.0; max as usize];
    for &(x, mass) in pmf.entries() {
        if x == 0 || mass == 0.0 {
            continue;
        }
        let weight = mass * one_minus_pow_complement(p, x) / alive;
        let ztb = zero_truncated_binomial(x, p)?;
        for &(k, m) in ztb.entries() {
            mixed[(k - 1) as usize] += weight * m;
        }
    }

    for (i, (&a, &b)) in explicit.iter().zip(&mixed).enumerate() {
        if (a - b).abs() > ZTB_ROUTE_TOL {
            return Err(PmfError::RouteMismatch { degree: i as u32 + 1, explicit: a, mixed: b });
        }
    }
    let weights = explicit.into_iter().enumerate().map(|(i, m)| (i as u32 + 1, m)).collect();
    OffspringPmf::from_weights(weights)
}
