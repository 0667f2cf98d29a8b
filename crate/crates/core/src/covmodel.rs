//! Population covariance matrices `Σ⁽ⁱ⁾` and their square-root factors.

use faer::{Mat, MatRef};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::measure::AtomicMeasure;
use crate::rng;

/// Eigenvalues below this are treated as zero by the eigen square root.
pub const SQRT_ZERO_THRESHOLD: f64 = 1e-12;
/// Eigenvalues below `-PSD_TOL` make a matrix indefinite.
pub const PSD_TOL: f64 = 1e-8;

/// Declarative covariance family, as written in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CovarianceKind {
    Identity,
    /// Diagonal with `values` repeated in the given proportions (normalized).
    Atomic { values: Vec<f64>, proportions: Vec<f64> },
    /// `Σ_ij = ρ^|i−j|`.
    Toeplitz { rho: f64 },
    /// `(1/m)GGᵀ` with `G` a seeded `d × m` Gaussian matrix, `m = round(d/γ′)`,
    /// rescaled to unit mean eigenvalue.
    Wishart {
        gamma_prime: f64,
        #[serde(default)]
        seed: u64,
    },
}

impl CovarianceKind {
    pub fn validate(&self) -> Result<()> {
        match self {
            CovarianceKind::Identity => Ok(()),
            CovarianceKind::Atomic { values, proportions } => {
                if values.is_empty() || values.len() != proportions.len() {
                    return Err(Error::InvalidCovariance(
                        "atomic needs equally many values and proportions".into(),
                    ));
                }
                if values.iter().any(|&v| !(v.is_finite() && v > 0.0)) {
                    return Err(Error::InvalidCovariance("atomic values must be positive".into()));
                }
                if proportions.iter().any(|&p| !(p.is_finite() && p > 0.0)) {
                    return Err(Error::InvalidCovariance(
                        "atomic proportions must be positive".into(),
                    ));
                }
                Ok(())
            }
            CovarianceKind::Toeplitz { rho } => {
                if !(rho.is_finite() && rho.abs() < 1.0) {
                    return Err(Error::InvalidCovariance(format!("toeplitz needs |rho| < 1, got {rho}")));
                }
                Ok(())
            }
            CovarianceKind::Wishart { gamma_prime, .. } => {
                if !(gamma_prime.is_finite() && *gamma_prime > 0.0) {
                    return Err(Error::InvalidCovariance(format!(
                        "wishart needs gamma_prime > 0, got {gamma_prime}"
                    )));
                }
                Ok(())
            }
        }
    }

    /// A priori bound on `‖Σ‖`, when the family has one.
    pub fn norm_bound(&self) -> Option<f64> {
        match self {
            CovarianceKind::Identity => Some(1.0),
            CovarianceKind::Atomic { values, .. } => values.iter().copied().reduce(f64::max),
            CovarianceKind::Toeplitz { rho } => Some((1.0 + rho.abs()) / (1.0 - rho.abs())),
            CovarianceKind::Wishart { .. } => None,
        }
    }

    /// The dimension-free limit spectrum, for families where it is atomic.
    pub fn limit_measure(&self) -> Option<AtomicMeasure> {
        match self {
            CovarianceKind::Identity => Some(AtomicMeasure::dirac(1.0)),
            CovarianceKind::Atomic { values, proportions } => {
                AtomicMeasure::from_unnormalized(values, proportions).ok()
            }
            _ => None,
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self, CovarianceKind::Identity)
    }
}

/// A covariance family together with the dimension it is realized at.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceSpec {
    pub kind: CovarianceKind,
    pub dim: usize,
}

impl CovarianceSpec {
    pub fn new(kind: CovarianceKind, dim: usize) -> Self {
        Self { kind, dim }
    }
}

/// A realized `Σ` with its spectrum and a factor `L` such that `LLᵀ = Σ`.
#[derive(Debug, Clone)]
pub struct CovarianceMatrix {
    kind: CovarianceKind,
    sigma: Mat<f64>,
    spectrum: Vec<f64>,
    factor: Mat<f64>,
}

impl CovarianceMatrix {
    /// Wraps an arbitrary symmetric PSD matrix.
    pub fn from_matrix(kind: CovarianceKind, sigma: Mat<f64>) -> Result<Self> {
        if sigma.nrows() != sigma.ncols() || sigma.nrows() == 0 {
            return Err(Error::Dimension("covariance must be square and nonempty".into()));
        }
        let asym = linalg::max_asymmetry(sigma.as_ref());
        if asym > 1e-12 {
            return Err(Error::InvalidCovariance(format!("asymmetry {asym:e} exceeds 1e-12")));
        }
        let raw = linalg::sym_eigenvalues(sigma.as_ref())?;
        if raw[0] < -PSD_TOL {
            return Err(Error::NotPsd(raw[0]));
        }
        let spectrum = raw.into_iter().map(|v| v.max(0.0)).collect();
        let factor = sqrt_factor(sigma.as_ref())?;
        Ok(Self { kind, sigma, spectrum, factor })
    }

    pub fn kind(&self) -> &CovarianceKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.sigma.nrows()
    }

    pub fn matrix(&self) -> MatRef<'_, f64> {
        self.sigma.as_ref()
    }

    /// Ascending eigenvalues, negative rounding noise clipped to zero.
    pub fn spectrum(&self) -> &[f64] {
        &self.spectrum
    }

    pub fn factor(&self) -> MatRef<'_, f64> {
        self.factor.as_ref()
    }

    /// Largest eigenvalue `‖Σ‖`.
    pub fn norm(&self) -> f64 {
        *self.spectrum.last().unwrap()
    }

    pub fn empirical_measure(&self) -> Result<AtomicMeasure> {
        AtomicMeasure::from_covariance_spectrum(&self.spectrum)
    }

    pub fn is_identity(&self) -> bool {
        self.kind.is_identity()
    }
}

/// Realizes `spec` as a dense `d × d` matrix.
pub fn build_sigma(spec: &CovarianceSpec) -> Result<CovarianceMatrix> {
    spec.kind.validate()?;
    let d = spec.dim;
    if d == 0 {
        return Err(Error::InvalidCovariance("dimension must be at least 1".into()));
    }
    let sigma = match &spec.kind {
        CovarianceKind::Identity => Mat::identity(d, d),
        CovarianceKind::Atomic { values, proportions } => {
            let diag = atomic_diagonal(values, proportions, d);
            Mat::from_fn(d, d, |i, j| if i == j { diag[i] } else { 0.0 })
        }
        CovarianceKind::Toeplitz { rho } => {
            Mat::from_fn(d, d, |i, j| rho.powi(i.abs_diff(j) as i32))
        }
        CovarianceKind::Wishart { gamma_prime, seed } => wishart(d, *gamma_prime, *seed),
    };
    CovarianceMatrix::from_matrix(spec.kind.clone(), sigma)
}

/// Diagonal entries for an atomic spectrum: `floor(p_j d)` copies of each value
/// in order, leftovers going to the value with the largest proportion.
fn atomic_diagonal(values: &[f64], proportions: &[f64], d: usize) -> Vec<f64> {
    let total: f64 = proportions.iter().sum();
    let mut counts: Vec<usize> = proportions
        .iter()
        .map(|p| (p / total * d as f64 + 1e-9).floor() as usize)
        .collect();
    let assigned: usize = counts.iter().sum();
    let largest = proportions
        .iter()
        .enumerate()
        .fold(0, |best, (j, &p)| if p > proportions[best] { j } else { best });
    counts[largest] += d - assigned;
    values
        .iter()
        .zip(counts)
        .flat_map(|(&v, c)| std::iter::repeat_n(v, c))
        .collect()
}

fn wishart(d: usize, gamma_prime: f64, seed: u64) -> Mat<f64> {
    let m = ((d as f64 / gamma_prime).round() as usize).max(1);
    let mut rng = rng::stream(seed, rng::stream_id(rng::domain::WISHART, 0, 0));
    let mut g = Mat::<f64>::zeros(d, m);
    for i in 0..d {
        for j in 0..m {
            g[(i, j)] = StandardNormal.sample(&mut rng);
        }
    }
    let mut s = &g * g.transpose();
    let tr = linalg::trace(s.as_ref());
    let scale = d as f64 / tr;
    for j in 0..d {
        for i in 0..d {
            s[(i, j)] *= scale;
        }
    }
    // Exact symmetry for the downstream checks.
    for j in 0..d {
        for i in (j + 1)..d {
            s[(j, i)] = s[(i, j)];
        }
    }
    s
}

/// A factor `L` with `LLᵀ = Σ`: Cholesky when `Σ` is positive definite,
/// otherwise the symmetric eigen square root.
pub fn sqrt_factor(sigma: MatRef<'_, f64>) -> Result<Mat<f64>> {
    if let Some(l) = linalg::cholesky(sigma) {
        let recon = &l * l.transpose();
        if linalg::max_abs_diff(recon.as_ref(), sigma) < 1e-10 {
            return Ok(l);
        }
    }
    let (vals, vecs) = linalg::sym_eigen(sigma)?;
    if vals[0] < -PSD_TOL {
        return Err(Error::NotPsd(vals[0]));
    }
    let roots: Vec<f64> = vals
        .iter()
        .map(|&v| if v < SQRT_ZERO_THRESHOLD { 0.0 } else { v.sqrt() })
        .collect();
    let d = sigma.nrows();
    let scaled = Mat::from_fn(d, d, |i, j| vecs[(i, j)] * roots[j]);
    Ok(&scaled * vecs.transpose())
}

/// Ascending spectrum of a symmetric matrix with negative noise clipped to zero.
pub fn spectrum(sigma: MatRef<'_, f64>) -> Result<Vec<f64>> {
    Ok(linalg::sym_eigenvalues(sigma)?.into_iter().map(|v| v.max(0.0)).collect())
}
