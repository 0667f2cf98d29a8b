//! Stieltjes transforms, the Marchenko–Pastur map `μ_MP^γ ⊠ ν` for atomic
//! `ν`, and density recovery by Stieltjes–Perron inversion.
//!
//! The transform `s(z)` of the limiting law of `(1/|d|)·AᵀA` (columns of `A`
//! with covariance `T`, `limspec(T) = ν`, `n/|d| → γ`) is the unique root in
//! the upper half plane of
//!
//! ```text
//! s = F(s) = −1 / (z − ∫ t ν(dt) / (1 + γ t s))
//! ```
//!
//! which reduces to `γ z s² + (z + γ − 1) s + 1 = 0` for `ν = δ₁`.

use std::fmt::Write as _;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::AtomicMeasure;

pub const DEFAULT_ETA: f64 = 1e-4;
pub const DEFAULT_GRID_POINTS: usize = 2001;
pub const DEFAULT_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_ITER: usize = 2000;

/// Pdf threshold at the right end of the grid above which the grid is
/// considered too short for the support.
pub const GRID_TAIL_PDF: f64 = 1e-4;

/// A point `z` of the open upper half plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfPlanePoint {
    re: f64,
    im: f64,
}

impl HalfPlanePoint {
    pub fn new(re: f64, im: f64) -> Result<Self> {
        if !(re.is_finite() && im.is_finite()) || im <= 0.0 {
            return Err(Error::NotInUpperHalfPlane { re, im });
        }
        Ok(Self { re, im })
    }

    pub fn re(self) -> f64 {
        self.re
    }

    pub fn im(self) -> f64 {
        self.im
    }

    pub fn z(self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }
}

impl TryFrom<Complex64> for HalfPlanePoint {
    type Error = Error;

    fn try_from(z: Complex64) -> Result<Self> {
        Self::new(z.re, z.im)
    }
}

/// `∫ m(dx) / (x − z)`.
pub fn stieltjes_transform(m: &AtomicMeasure, z: HalfPlanePoint) -> Complex64 {
    let z = z.z();
    m.iter().map(|(x, w)| w / (x - z)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Stopping tolerance on `|s − F(s)| / max(1, |s|)`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tol: DEFAULT_TOL, max_iter: DEFAULT_MAX_ITER }
    }
}

/// The right-hand side `F` of the self-consistent equation and its derivative.
struct MpMap<'a> {
    nu: &'a AtomicMeasure,
    gamma: f64,
    z: Complex64,
}

impl MpMap<'_> {
    fn denominator(&self, s: Complex64) -> Complex64 {
        let sum: Complex64 = self
            .nu
            .iter()
            .map(|(t, w)| w * t / (1.0 + self.gamma * t * s))
            .sum();
        self.z - sum
    }

    fn apply(&self, s: Complex64) -> Complex64 {
        -1.0 / self.denominator(s)
    }

    /// Returns `(F(s), F'(s))`.
    fn apply_with_derivative(&self, s: Complex64) -> (Complex64, Complex64) {
        let mut sum = Complex64::new(0.0, 0.0);
        let mut dsum = Complex64::new(0.0, 0.0);
        for (t, w) in self.nu.iter() {
            let q = 1.0 / (1.0 + self.gamma * t * s);
            sum += w * t * q;
            dsum += w * self.gamma * t * t * q * q;
        }
        let d = self.z - sum;
        (-1.0 / d, dsum / (d * d))
    }

    fn residual(&self, s: Complex64) -> f64 {
        (self.apply(s) - s).norm() / s.norm().max(1.0)
    }
}

/// Relative residual `|s − F(s)| / max(1, |s|)` of a candidate solution.
pub fn mp_map_residual(nu: &AtomicMeasure, gamma: f64, z: HalfPlanePoint, s: Complex64) -> f64 {
    MpMap { nu, gamma, z: z.z() }.residual(s)
}

/// Stieltjes transform of `μ_MP^γ ⊠ ν` at `z`.
///
/// Runs the damped fixed-point iteration from `−1/z` (step halved whenever the
/// residual grows). Points where that does not reach `tol` within `max_iter`
/// are resolved by Newton continuation downward from `Im z = max(1, |Re z|)`,
/// which keeps the iterate on the Herglotz branch.
pub fn mp_boxtimes_stieltjes(
    nu: &AtomicMeasure,
    gamma: f64,
    z: HalfPlanePoint,
    opts: SolverOptions,
) -> Result<Complex64> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::InvalidArgument(format!("gamma must be positive, got {gamma}")));
    }
    if nu.atoms()[0] < 0.0 {
        return Err(Error::InvalidArgument("nu must be supported on [0, ∞)".into()));
    }
    let map = MpMap { nu, gamma, z: z.z() };

    let start = -1.0 / z.z();
    if let Ok(s) = damped_fixed_point(&map, start, 1.0, opts) {
        if s.im > 0.0 {
            return Ok(s);
        }
        // Non-Herglotz root: restart gently from a point high in the half plane.
        let start = Complex64::new(0.0, 1.0 / z.im());
        if let Ok(s) = damped_fixed_point(&map, start, 0.1, opts) {
            if s.im > 0.0 {
                return Ok(s);
            }
        }
    }
    newton_continuation(nu, gamma, z, opts)
}

fn damped_fixed_point(
    map: &MpMap<'_>,
    start: Complex64,
    alpha0: f64,
    opts: SolverOptions,
) -> std::result::Result<Complex64, f64> {
    let mut s = start;
    let mut alpha = alpha0;
    let mut f = map.apply(s);
    let mut residual = (f - s).norm() / s.norm().max(1.0);
    for _ in 0..opts.max_iter {
        if residual < opts.tol {
            return Ok(s);
        }
        s = (1.0 - alpha) * s + alpha * f;
        f = map.apply(s);
        let next = (f - s).norm() / s.norm().max(1.0);
        if next > residual {
            alpha *= 0.5;
        }
        residual = next;
    }
    if residual < opts.tol { Ok(s) } else { Err(residual) }
}

fn newton_continuation(
    nu: &AtomicMeasure,
    gamma: f64,
    target: HalfPlanePoint,
    opts: SolverOptions,
) -> Result<Complex64> {
    let x = target.re();
    let eta = target.im();
    let mut height = eta.max(x.abs().max(1.0));
    let top = MpMap { nu, gamma, z: Complex64::new(x, height) };
    let mut s = match damped_fixed_point(&top, -1.0 / top.z, 1.0, opts) {
        Ok(s) => s,
        Err(_) => newton(&top, -1.0 / top.z, opts).map_err(|residual| Error::NoConvergence {
            re: x,
            im: height,
            residual,
        })?,
    };
    let mut ratio: f64 = 0.5;
    while height > eta {
        let next = (height * ratio).max(eta);
        let map = MpMap { nu, gamma, z: Complex64::new(x, next) };
        match newton(&map, s, opts) {
            Ok(sn) => {
                s = sn;
                height = next;
                ratio = (ratio * ratio).max(0.25);
            }
            Err(residual) => {
                ratio = ratio.sqrt();
                if ratio > 0.999 {
                    return Err(Error::NoConvergence { re: x, im: next, residual });
                }
            }
        }
    }
    Ok(s)
}

/// Newton's method on `G(s) = s − F(s)`, with steps shortened to stay in the
/// upper half plane.
fn newton(map: &MpMap<'_>, start: Complex64, opts: SolverOptions) -> std::result::Result<Complex64, f64> {
    let mut s = start;
    let mut residual = f64::INFINITY;
    for _ in 0..100 {
        let (f, df) = map.apply_with_derivative(s);
        let g = s - f;
        residual = g.norm() / s.norm().max(1.0);
        if residual < opts.tol {
            return Ok(s);
        }
        let mut step = g / (1.0 - df);
        if !step.is_finite() {
            return Err(residual);
        }
        let mut candidate = s - step;
        let mut tries = 0;
        while candidate.im <= 0.0 && tries < 60 {
            step *= 0.5;
            candidate = s - step;
            tries += 1;
        }
        if candidate.im <= 0.0 {
            return Err(residual);
        }
        s = candidate;
    }
    let r = map.residual(s);
    if r < opts.tol { Ok(s) } else { Err(residual.min(r)) }
}

/// Support endpoints `((1−√γ)², (1+√γ)²)` of the Marchenko–Pastur law.
pub fn mp_edges(gamma: f64) -> (f64, f64) {
    let r = gamma.sqrt();
    ((1.0 - r).powi(2), (1.0 + r).powi(2))
}

/// Mass `max(0, 1 − 1/γ)` of the Marchenko–Pastur atom at zero.
pub fn mp_zero_atom(gamma: f64) -> f64 {
    (1.0 - 1.0 / gamma).max(0.0)
}

/// Absolutely continuous part of the Marchenko–Pastur law with ratio `γ`.
pub fn mp_closed_form_density(gamma: f64, x: f64) -> f64 {
    let (a, b) = mp_edges(gamma);
    if !(x > 0.0 && x >= a && x <= b) {
        return 0.0;
    }
    ((b - x) * (x - a)).max(0.0).sqrt() / (2.0 * std::f64::consts::PI * gamma * x)
}

/// Mass at zero of `μ_MP^γ ⊠ ν`.
///
/// `(1/|d|)AᵀA` is `n × n` of rank at most `rank(T) ≈ (1 − ν({0}))·|d|`,
/// so at least a fraction `1 − (1 − ν({0}))/γ` of its eigenvalues vanish.
pub fn mp_boxtimes_zero_atom(nu: &AtomicMeasure, gamma: f64) -> f64 {
    let nonzero = 1.0 - nu.mass_at_zero();
    (1.0 - nonzero / gamma).max(0.0)
}

/// Uniform grid `[0, 1.1·(1+√γ)²·max atom(ν)]`.
pub fn default_grid(nu: &AtomicMeasure, gamma: f64, points: usize) -> Result<Vec<f64>> {
    if points < 2 {
        return Err(Error::InvalidArgument("grid needs at least 2 points".into()));
    }
    let top = 1.1 * mp_edges(gamma).1 * nu.max_atom();
    if top.is_nan() || top <= 0.0 {
        return Err(Error::InvalidArgument("nu must have a positive atom".into()));
    }
    let h = top / (points - 1) as f64;
    Ok((0..points).map(|i| i as f64 * h).collect())
}

/// Sampled density and CDF of `μ_MP^γ ⊠ ν` plus its atom at zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDensity {
    pub xs: Vec<f64>,
    pub pdf: Vec<f64>,
    /// Cumulative distribution including `zero_atom`, normalized to end at 1.
    pub cdf: Vec<f64>,
    pub zero_atom: f64,
    pub gamma: f64,
    pub eta: f64,
    pub nu: AtomicMeasure,
    /// `zero_atom + ∫ pdf` by the trapezoid rule, before normalization.
    pub raw_mass: f64,
    /// Largest negative inversion value clipped to zero.
    pub max_clipped: f64,
}

#[derive(Debug, Serialize)]
struct DensitySidecar<'a> {
    gamma: f64,
    nu_atoms: &'a [f64],
    nu_weights: &'a [f64],
    eta: f64,
    zero_atom: f64,
}

/// Recovers the law `μ_MP^γ ⊠ ν` on `xs` from `Im s(x + iη) / π`.
pub fn mp_boxtimes_density(
    nu: &AtomicMeasure,
    gamma: f64,
    xs: &[f64],
    eta: f64,
    opts: SolverOptions,
) -> Result<GridDensity> {
    if xs.len() < 2 || xs.iter().any(|x| !x.is_finite()) || xs.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("grid must be finite and strictly increasing".into()));
    }
    if !(1e-6..=1e-2).contains(&eta) {
        return Err(Error::InvalidArgument(format!("eta = {eta} outside [1e-6, 1e-2]")));
    }
    let zero_atom = mp_boxtimes_zero_atom(nu, gamma);
    let raw: Vec<f64> = xs
        .par_iter()
        .map(|&x| {
            let z = HalfPlanePoint::new(x, eta)?;
            let s = mp_boxtimes_stieltjes(nu, gamma, z, opts)?;
            // Remove the pole of the zero atom before inversion.
            let cont = s + zero_atom / z.z();
            Ok(cont.im / std::f64::consts::PI)
        })
        .collect::<Result<_>>()?;

    let max_clipped = raw.iter().fold(0.0f64, |m, &p| m.max(-p));
    let pdf: Vec<f64> = raw.iter().map(|&p| p.max(0.0)).collect();
    let last = *pdf.last().unwrap();
    if last > GRID_TAIL_PDF {
        return Err(Error::GridTooShort { x: *xs.last().unwrap(), pdf: last });
    }

    let mut integral = Vec::with_capacity(xs.len());
    let mut acc = 0.0;
    integral.push(0.0);
    for i in 1..xs.len() {
        acc += 0.5 * (pdf[i] + pdf[i - 1]) * (xs[i] - xs[i - 1]);
        integral.push(acc);
    }
    let raw_mass = zero_atom + acc;
    let cdf = if acc > 0.0 {
        integral.iter().map(|&c| zero_atom + (1.0 - zero_atom) * c / acc).collect()
    } else {
        vec![1.0; xs.len()]
    };

    Ok(GridDensity {
        xs: xs.to_vec(),
        pdf,
        cdf,
        zero_atom,
        gamma,
        eta,
        nu: nu.clone(),
        raw_mass,
        max_clipped,
    })
}

impl GridDensity {
    /// Theoretical CDF: zero below 0, `zero_atom` jump at 0, interpolated on the grid.
    pub fn theoretical_cdf(&self, x: f64) -> f64 {
        if x.is_nan() || x < 0.0 {
            return 0.0;
        }
        let first = self.xs[0];
        if x < first {
            return if first > 0.0 { self.zero_atom } else { 0.0 };
        }
        let k = self.xs.partition_point(|&g| g <= x);
        if k >= self.xs.len() {
            return self.cdf[self.cdf.len() - 1].clamp(0.0, 1.0);
        }
        let (x0, x1) = (self.xs[k - 1], self.xs[k]);
        let (c0, c1) = (self.cdf[k - 1], self.cdf[k]);
        (c0 + (c1 - c0) * (x - x0) / (x1 - x0)).clamp(0.0, 1.0)
    }

    /// Left limit of [`theoretical_cdf`](Self::theoretical_cdf); differs from it only at 0.
    pub fn theoretical_cdf_left(&self, x: f64) -> f64 {
        if x <= 0.0 { 0.0 } else { self.theoretical_cdf(x) }
    }

    /// Generalized inverse of the theoretical CDF.
    pub fn quantile(&self, p: f64) -> f64 {
        if p <= self.zero_atom && self.zero_atom > 0.0 {
            return 0.0;
        }
        let k = self.cdf.partition_point(|&c| c < p);
        if k == 0 {
            return self.xs[0];
        }
        if k >= self.cdf.len() {
            return self.xs[self.xs.len() - 1];
        }
        let (c0, c1) = (self.cdf[k - 1], self.cdf[k]);
        let (x0, x1) = (self.xs[k - 1], self.xs[k]);
        if c1 > c0 { x0 + (x1 - x0) * (p - c0) / (c1 - c0) } else { x1 }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,pdf,cdf\n");
        for ((x, p), c) in self.xs.iter().zip(&self.pdf).zip(&self.cdf) {
            writeln!(out, "{x:e},{p:e},{c:e}").unwrap();
        }
        out
    }

    /// JSON sidecar `{gamma, nu_atoms, nu_weights, eta, zero_atom}`.
    pub fn sidecar_json(&self) -> String {
        serde_json::to_string_pretty(&DensitySidecar {
            gamma: self.gamma,
            nu_atoms: self.nu.atoms(),
            nu_weights: self.nu.weights(),
            eta: self.eta,
            zero_atom: self.zero_atom,
        })
        .expect("sidecar serializes")
    }
}
