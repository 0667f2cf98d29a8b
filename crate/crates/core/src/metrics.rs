//! Distances between an empirical spectrum and a theoretical law, and
//! histogramming.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::AtomicMeasure;
use crate::stieltjes::GridDensity;

/// Eigenvalues below this are counted as exact zeros when comparing against
/// a law with an atom at zero.
pub const KERNEL_TOL: f64 = 1e-8;

pub const MIN_AUTO_BINS: usize = 30;
pub const MAX_AUTO_BINS: usize = 1000;

/// A distribution function with access to left limits at jumps.
pub trait Cdf {
    fn cdf(&self, x: f64) -> f64;

    fn cdf_left(&self, x: f64) -> f64 {
        self.cdf(x)
    }
}

impl<F: Fn(f64) -> f64> Cdf for F {
    fn cdf(&self, x: f64) -> f64 {
        self(x)
    }
}

impl Cdf for GridDensity {
    fn cdf(&self, x: f64) -> f64 {
        self.theoretical_cdf(x)
    }

    fn cdf_left(&self, x: f64) -> f64 {
        self.theoretical_cdf_left(x)
    }
}

impl Cdf for AtomicMeasure {
    fn cdf(&self, x: f64) -> f64 {
        self.cdf_unchecked(x)
    }

    fn cdf_left(&self, x: f64) -> f64 {
        self.cdf_left_unchecked(x)
    }
}

/// Maps every value below [`KERNEL_TOL`] to exactly zero.
pub fn snap_kernel(eigs: &[f64]) -> Vec<f64> {
    eigs.iter().map(|&x| if x < KERNEL_TOL { 0.0 } else { x }).collect()
}

fn check_sample(eigs: &[f64]) -> Result<()> {
    if eigs.is_empty() {
        return Err(Error::EmptySample);
    }
    if eigs.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("non-finite sample value".into()));
    }
    if eigs.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidArgument("sample must be sorted ascending".into()));
    }
    Ok(())
}

/// Kolmogorov–Smirnov distance `sup_x |F̂(x) − F(x)|`, evaluated on both sides
/// of every sample point so that atoms in either law are handled exactly.
pub fn ks_distance(eigs: &[f64], law: &impl Cdf) -> Result<f64> {
    check_sample(eigs)?;
    let n = eigs.len() as f64;
    let mut sup = 0.0f64;
    let mut i = 0;
    while i < eigs.len() {
        let x = eigs[i];
        let mut j = i;
        while j < eigs.len() && eigs[j] == x {
            j += 1;
        }
        let below = i as f64 / n;
        let at = j as f64 / n;
        sup = sup
            .max((at - law.cdf(x)).abs())
            .max((below - law.cdf_left(x)).abs());
        i = j;
    }
    Ok(sup.min(1.0))
}

/// `(1/n) Σᵢ |x₍ᵢ₎ − Q((i − ½)/n)|`.
pub fn wasserstein1(eigs: &[f64], law_quantile: impl Fn(f64) -> f64) -> Result<f64> {
    check_sample(eigs)?;
    let n = eigs.len() as f64;
    let total: f64 = eigs
        .iter()
        .enumerate()
        .map(|(i, &x)| (x - law_quantile((i as f64 + 0.5) / n)).abs())
        .sum();
    Ok(total / n)
}

/// Equal-width histogram with density normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn width(&self, bin: usize) -> f64 {
        self.edges[bin + 1] - self.edges[bin]
    }

    /// `count / (n · width)` per bin.
    pub fn density(&self) -> Vec<f64> {
        let n = self.total() as f64;
        (0..self.counts.len())
            .map(|b| self.counts[b] as f64 / (n * self.width(b)))
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("left,right,count,density\n");
        for (b, d) in self.density().into_iter().enumerate() {
            writeln!(out, "{:e},{:e},{},{:e}", self.edges[b], self.edges[b + 1], self.counts[b], d).unwrap();
        }
        out
    }
}

pub fn histogram(eigs: &[f64], bins: usize) -> Result<Histogram> {
    if eigs.is_empty() {
        return Err(Error::EmptySample);
    }
    if bins == 0 {
        return Err(Error::InvalidArgument("bins must be at least 1".into()));
    }
    let (lo, hi) = eigs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::InvalidArgument("non-finite sample value".into()));
    }
    let pad = 1e-9 * (hi - lo).max(lo.abs()).max(hi.abs()).max(1.0);
    let (lo, hi) = (lo - pad, hi + pad);
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins)
        .map(|b| if b == bins { hi } else { lo + b as f64 * width })
        .collect();
    let mut counts = vec![0u64; bins];
    for &x in eigs {
        let b = (((x - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    Ok(Histogram { edges, counts })
}

/// Freedman–Diaconis bin count, clamped to `[MIN_AUTO_BINS, MAX_AUTO_BINS]`.
pub fn auto_bins(sorted: &[f64]) -> usize {
    let n = sorted.len();
    if n < 4 {
        return MIN_AUTO_BINS;
    }
    let q = |p: f64| sorted[((p * (n - 1) as f64).round() as usize).min(n - 1)];
    let iqr = q(0.75) - q(0.25);
    let range = sorted[n - 1] - sorted[0];
    if iqr <= 0.0 || range <= 0.0 {
        return MIN_AUTO_BINS;
    }
    let h = 2.0 * iqr / (n as f64).cbrt();
    ((range / h).ceil() as usize).clamp(MIN_AUTO_BINS, MAX_AUTO_BINS)
}
