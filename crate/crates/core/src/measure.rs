//! Finite atomic probability measures and the classical multiplicative
//! convolution (the law of a product of independent draws).

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Atoms closer than this (absolute) are merged during canonicalization.
pub const MERGE_TOL: f64 = 1e-12;

/// Tolerance on the total weight accepted by [`AtomicMeasure::atomic`].
pub const WEIGHT_SUM_TOL: f64 = 1e-9;

/// A compactly supported probability measure with finitely many atoms.
///
/// Always canonical: atoms strictly increasing, all weights positive, and the
/// weights summing to one up to rounding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, f64)>", into = "Vec<(f64, f64)>")]
pub struct AtomicMeasure {
    atoms: Vec<f64>,
    weights: Vec<f64>,
}

impl AtomicMeasure {
    /// Builds a measure from explicit atoms and weights summing to one.
    pub fn atomic(points: &[f64], weights: &[f64]) -> Result<Self> {
        validate_parts(points, weights)?;
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidMeasure(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        Ok(Self::canonicalize(points.iter().copied().zip(weights.iter().copied()).collect()))
    }

    /// Builds a measure from nonnegative weights of arbitrary positive total.
    pub fn from_unnormalized(points: &[f64], weights: &[f64]) -> Result<Self> {
        validate_parts(points, weights)?;
        Ok(Self::canonicalize(points.iter().copied().zip(weights.iter().copied()).collect()))
    }

    /// Point mass at `x`.
    pub fn dirac(x: f64) -> Self {
        assert!(x.is_finite(), "dirac location must be finite");
        Self { atoms: vec![x], weights: vec![1.0] }
    }

    /// Empirical spectral measure of a PSD matrix: weight `1/d` per eigenvalue.
    pub fn from_covariance_spectrum(eigenvalues: &[f64]) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::InvalidMeasure("empty spectrum".into()));
        }
        if let Some(&bad) = eigenvalues.iter().find(|x| !x.is_finite()) {
            return Err(Error::InvalidMeasure(format!("non-finite eigenvalue {bad}")));
        }
        if let Some(&neg) = eigenvalues.iter().find(|&&x| x < 0.0) {
            return Err(Error::NotPsd(neg));
        }
        let w = vec![1.0; eigenvalues.len()];
        Self::from_unnormalized(eigenvalues, &w)
    }

    fn canonicalize(mut pairs: Vec<(f64, f64)>) -> Self {
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut atoms: Vec<f64> = Vec::with_capacity(pairs.len());
        let mut weights: Vec<f64> = Vec::with_capacity(pairs.len());
        for (x, w) in pairs {
            if w == 0.0 {
                continue;
            }
            match atoms.last() {
                Some(&last) if x - last < MERGE_TOL => *weights.last_mut().unwrap() += w,
                _ => {
                    atoms.push(x);
                    weights.push(w);
                }
            }
        }
        let total: f64 = weights.iter().sum();
        // Idempotent: a second pass sees a sum within a few ulps of one.
        if weights.len() == 1 {
            weights[0] = 1.0;
        } else if (total - 1.0).abs() > 1e-14 {
            for w in &mut weights {
                *w /= total;
            }
        }
        Self { atoms, weights }
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.atoms.iter().copied().zip(self.weights.iter().copied())
    }

    pub fn max_atom(&self) -> f64 {
        *self.atoms.last().expect("canonical measure is nonempty")
    }

    /// Mass carried by the atom at exactly zero (within the merge tolerance).
    pub fn mass_at_zero(&self) -> f64 {
        self.iter().filter(|(x, _)| x.abs() < MERGE_TOL).map(|(_, w)| w).sum()
    }

    /// Right-continuous CDF.
    pub fn cdf(&self, x: f64) -> Result<f64> {
        if !x.is_finite() {
            return Err(Error::InvalidArgument(format!("cdf at non-finite x = {x}")));
        }
        Ok(self.cdf_unchecked(x))
    }

    pub(crate) fn cdf_unchecked(&self, x: f64) -> f64 {
        let k = self.atoms.partition_point(|&a| a <= x);
        self.weights[..k].iter().sum::<f64>().min(1.0)
    }

    pub(crate) fn cdf_left_unchecked(&self, x: f64) -> f64 {
        let k = self.atoms.partition_point(|&a| a < x);
        self.weights[..k].iter().sum::<f64>().min(1.0)
    }

    /// Smallest atom whose CDF reaches `p`.
    pub fn quantile(&self, p: f64) -> f64 {
        let mut acc = 0.0;
        for (x, w) in self.iter() {
            acc += w;
            if acc >= p - 1e-15 {
                return x;
            }
        }
        self.max_atom()
    }

    pub fn moment(&self, p: u32) -> f64 {
        self.iter().map(|(x, w)| w * x.powi(p as i32)).sum()
    }

    pub fn mean(&self) -> f64 {
        self.moment(1)
    }

    /// Classical multiplicative convolution: law of `XY` with `X ~ self`,
    /// `Y ~ other` independent.
    pub fn mult_convolve(&self, other: &AtomicMeasure) -> AtomicMeasure {
        let mut pairs = Vec::with_capacity(self.len() * other.len());
        for (x, wx) in self.iter() {
            for (y, wy) in other.iter() {
                pairs.push((x * y, wx * wy));
            }
        }
        Self::canonicalize(pairs)
    }

    /// Folds [`mult_convolve`](Self::mult_convolve) over a nonempty list.
    pub fn mult_convolve_all(measures: &[AtomicMeasure]) -> Result<AtomicMeasure> {
        let (first, rest) = measures
            .split_first()
            .ok_or_else(|| Error::InvalidMeasure("no measures to convolve".into()))?;
        Ok(rest.iter().fold(first.clone(), |acc, m| acc.mult_convolve(m)))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("atom,weight\n");
        for (x, w) in self.iter() {
            writeln!(out, "{x:e},{w:e}").unwrap();
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == "atom,weight" => {}
            other => {
                return Err(Error::InvalidMeasure(format!("bad CSV header {other:?}")));
            }
        }
        let mut atoms = Vec::new();
        let mut weights = Vec::new();
        for (lineno, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parse = |s: Option<&str>| -> Result<f64> {
                s.and_then(|v| v.trim().parse().ok()).ok_or_else(|| {
                    Error::InvalidMeasure(format!("malformed CSV row {}: {line:?}", lineno + 2))
                })
            };
            let mut cols = line.split(',');
            atoms.push(parse(cols.next())?);
            weights.push(parse(cols.next())?);
        }
        Self::atomic(&atoms, &weights)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("finite measure serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

impl TryFrom<Vec<(f64, f64)>> for AtomicMeasure {
    type Error = Error;

    fn try_from(pairs: Vec<(f64, f64)>) -> Result<Self> {
        let (atoms, weights): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        Self::atomic(&atoms, &weights)
    }
}

impl From<AtomicMeasure> for Vec<(f64, f64)> {
    fn from(m: AtomicMeasure) -> Self {
        m.atoms.into_iter().zip(m.weights).collect()
    }
}

fn validate_parts(points: &[f64], weights: &[f64]) -> Result<()> {
    if points.len() != weights.len() {
        return Err(Error::InvalidMeasure(format!(
            "{} atoms but {} weights",
            points.len(),
            weights.len()
        )));
    }
    if points.is_empty() {
        return Err(Error::InvalidMeasure("no atoms".into()));
    }
    if points.iter().chain(weights).any(|v| !v.is_finite()) {
        return Err(Error::InvalidMeasure("non-finite atom or weight".into()));
    }
    if let Some(w) = weights.iter().find(|&&w| w < 0.0) {
        return Err(Error::InvalidMeasure(format!("negative weight {w}")));
    }
    if weights.iter().all(|&w| w == 0.0) {
        return Err(Error::InvalidMeasure("all weights are zero".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn third() -> AtomicMeasure {
        AtomicMeasure::atomic(&[1.0, 2.0, 3.0], &[1.0 / 3.0; 3]).unwrap()
    }

    #[test]
    fn single_atom() {
        let m = AtomicMeasure::atomic(&[1.0], &[1.0]).unwrap();
        assert_eq!(m, AtomicMeasure::dirac(1.0));
    }

    #[test]
    fn duplicate_atoms_merge() {
        let m = AtomicMeasure::atomic(&[2.0, 1.0, 1.0], &[0.25, 0.5, 0.25]).unwrap();
        assert_eq!(m.atoms(), &[1.0, 2.0]);
        assert_eq!(m.weights(), &[0.75, 0.25]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(AtomicMeasure::atomic(&[1.0, 2.0], &[1.0]).is_err());
        assert!(AtomicMeasure::atomic(&[1.0, 2.0], &[1.5, -0.5]).is_err());
        assert!(AtomicMeasure::atomic(&[1.0], &[0.0]).is_err());
        assert!(AtomicMeasure::atomic(&[f64::NAN], &[1.0]).is_err());
        assert!(AtomicMeasure::atomic(&[1.0, 2.0], &[0.5, 0.6]).is_err());
        assert!(AtomicMeasure::atomic(&[], &[]).is_err());
    }

    #[test]
    fn zero_weights_dropped() {
        let m = AtomicMeasure::atomic(&[1.0, 2.0], &[1.0, 0.0]).unwrap();
        assert_eq!(m.atoms(), &[1.0]);
    }

    #[test]
    fn fig3_input_law() {
        let half = AtomicMeasure::atomic(&[1.0, 2.0], &[0.5, 0.5]).unwrap();
        let prod = half.mult_convolve(&third());
        assert_eq!(prod.atoms(), &[1.0, 2.0, 3.0, 4.0, 6.0]);
        let expect = [1.0 / 6.0, 2.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0];
        for (w, e) in prod.weights().iter().zip(expect) {
            assert!((w - e).abs() < 1e-15);
        }
    }

    #[test]
    fn identity_and_absorbing_elements() {
        let nu = third();
        assert_eq!(AtomicMeasure::dirac(1.0).mult_convolve(&nu), nu);
        assert_eq!(AtomicMeasure::dirac(0.0).mult_convolve(&nu), AtomicMeasure::dirac(0.0));
        let scaled = AtomicMeasure::dirac(2.5).mult_convolve(&nu);
        assert_eq!(scaled.atoms(), &[2.5, 5.0, 7.5]);
    }

    #[test]
    fn covariance_spectrum() {
        assert_eq!(AtomicMeasure::from_covariance_spectrum(&[1.0, 2.0, 3.0]).unwrap(), third());
        assert_eq!(
            AtomicMeasure::from_covariance_spectrum(&[1.0; 4]).unwrap(),
            AtomicMeasure::dirac(1.0)
        );
        let m = AtomicMeasure::from_covariance_spectrum(&[0.0, 0.0, 2.0, 2.0]).unwrap();
        assert_eq!(m.atoms(), &[0.0, 2.0]);
        assert_eq!(m.weights(), &[0.5, 0.5]);
        assert_eq!(m.mass_at_zero(), 0.5);
        assert!(matches!(
            AtomicMeasure::from_covariance_spectrum(&[-1.0, 1.0]),
            Err(Error::NotPsd(_))
        ));
        assert!(AtomicMeasure::from_covariance_spectrum(&[]).is_err());
    }

    #[test]
    fn cdf_values() {
        let d1 = AtomicMeasure::dirac(1.0);
        assert_eq!(d1.cdf(0.5).unwrap(), 0.0);
        assert_eq!(d1.cdf(1.0).unwrap(), 1.0);
        let half = AtomicMeasure::atomic(&[1.0, 2.0], &[0.5, 0.5]).unwrap();
        assert_eq!(half.cdf(1.5).unwrap(), 0.5);
        assert!((third().cdf(2.0).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!(third().cdf(f64::INFINITY).is_err());
    }

    #[test]
    fn moments() {
        assert_eq!(AtomicMeasure::dirac(3.0).moment(2), 9.0);
        let half = AtomicMeasure::atomic(&[1.0, 2.0], &[0.5, 0.5]).unwrap();
        assert_eq!(half.moment(1), 1.5);
        assert_eq!(half.moment(0), 1.0);
    }

    #[test]
    fn quantile_picks_atom() {
        let m = third();
        assert_eq!(m.quantile(0.1), 1.0);
        assert_eq!(m.quantile(0.5), 2.0);
        assert_eq!(m.quantile(0.99), 3.0);
    }

    #[test]
    fn csv_and_json_roundtrip() {
        let m = AtomicMeasure::atomic(&[0.1, 1.0 / 3.0, 2.0_f64.sqrt()], &[0.2, 0.3, 0.5]).unwrap();
        assert_eq!(AtomicMeasure::from_csv(&m.to_csv()).unwrap(), m);
        assert_eq!(AtomicMeasure::from_json(&m.to_json()).unwrap(), m);
        assert!(AtomicMeasure::from_csv("x,y\n1,1\n").is_err());
        assert!(AtomicMeasure::from_csv("atom,weight\n1,abc\n").is_err());
    }

    fn small_measure() -> impl Strategy<Value = AtomicMeasure> {
        prop::collection::vec((0u8..6, 1u8..5), 1..5).prop_map(|v| {
            let atoms: Vec<f64> = v.iter().map(|&(a, _)| f64::from(a) * 0.5).collect();
            let w: Vec<f64> = v.iter().map(|&(_, w)| f64::from(w)).collect();
            AtomicMeasure::from_unnormalized(&atoms, &w).unwrap()
        })
    }

    proptest! {
        #[test]
        fn canonical_form(m in small_measure()) {
            prop_assert!(m.atoms().windows(2).all(|w| w[0] < w[1]));
            prop_assert!(m.weights().iter().all(|&w| w > 0.0));
            prop_assert!((m.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn convolution_mass_and_moments(a in small_measure(), b in small_measure()) {
            let c = a.mult_convolve(&b);
            prop_assert!((c.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for p in 0..=4 {
                let lhs = c.moment(p);
                let rhs = a.moment(p) * b.moment(p);
                prop_assert!((lhs - rhs).abs() <= 1e-10 * rhs.abs().max(1.0));
            }
        }

        #[test]
        fn canonicalization_idempotent(m in small_measure()) {
            let again = AtomicMeasure::from_unnormalized(m.atoms(), m.weights()).unwrap();
            prop_assert_eq!(again, m);
        }
    }
}
