//! Finite-n realization of `M = ⊙ᵢ (1/dᵢ) X⁽ⁱ⁾X⁽ⁱ⁾ᵀ` and its empirical
//! spectral distribution.

use std::time::Instant;

use faer::{Mat, MatRef};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covmodel::{build_sigma, CovarianceKind, CovarianceMatrix, CovarianceSpec};
use crate::error::{Error, Result};
use crate::linalg;
use crate::measure::AtomicMeasure;
use crate::metrics::{self, Histogram};
use crate::rng;
use crate::stieltjes::{self, GridDensity, SolverOptions};

/// Row-block height used when assembling `M`.
pub const GRAM_BLOCK: usize = 256;
/// Largest `n` accepted unless the config raises `max_n`.
pub const DEFAULT_MAX_N: usize = 6000;
/// Allowed relative gap between `n/∏dᵢ` and the configured `γ`.
pub const GAMMA_REL_TOL: f64 = 0.02;

/// Law of the standardized entries `z` of each row `x = Lz`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RowDistribution {
    #[default]
    Gaussian,
    /// Uniform on `{−1, 1}`.
    Rademacher,
    /// Uniform on `[−√3, √3]`.
    Uniform,
}

impl RowDistribution {
    /// Fourth cumulant of a single standardized entry.
    pub fn fourth_cumulant(self) -> f64 {
        match self {
            RowDistribution::Gaussian => 0.0,
            RowDistribution::Rademacher => -2.0,
            RowDistribution::Uniform => -1.2,
        }
    }

    pub fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            RowDistribution::Gaussian => StandardNormal.sample(rng),
            RowDistribution::Rademacher => {
                if rng.random::<bool>() { 1.0 } else { -1.0 }
            }
            RowDistribution::Uniform => 3.0_f64.sqrt() * rng.random_range(-1.0..1.0),
        }
    }
}

/// Draws `n` independent rows `x_p = L z_p`, where `LLᵀ = Σ`.
pub fn sample_matrix<R: Rng + ?Sized>(
    sigma: &CovarianceMatrix,
    n: usize,
    dist: RowDistribution,
    rng: &mut R,
) -> Mat<f64> {
    let d = sigma.dim();
    let mut z = Mat::<f64>::zeros(n, d);
    for p in 0..n {
        for q in 0..d {
            z[(p, q)] = dist.sample(rng);
        }
    }
    if sigma.is_identity() {
        z
    } else {
        &z * sigma.factor().transpose()
    }
}

/// [`sample_matrix`] on the stream reserved for `(replica, factor)`.
pub fn sample_factor(
    sigma: &CovarianceMatrix,
    n: usize,
    dist: RowDistribution,
    seed: u64,
    replica: u32,
    factor: u16,
) -> Mat<f64> {
    let mut r = rng::stream(seed, rng::stream_id(rng::domain::FACTOR, replica, factor));
    sample_matrix(sigma, n, dist, &mut r)
}

/// `M_pq = ∏ᵢ ⟨x_p⁽ⁱ⁾, x_q⁽ⁱ⁾⟩ / dᵢ`, assembled one row block at a time so no
/// full per-factor Gram matrix is ever held.
pub fn hadamard_gram(xs: &[Mat<f64>], dims: &[usize]) -> Result<Mat<f64>> {
    let first = xs.first().ok_or_else(|| Error::Dimension("no factor matrices".into()))?;
    if xs.len() != dims.len() {
        return Err(Error::Dimension(format!("{} matrices but {} dimensions", xs.len(), dims.len())));
    }
    let n = first.nrows();
    for (i, (x, &d)) in xs.iter().zip(dims).enumerate() {
        if x.nrows() != n || x.ncols() != d {
            return Err(Error::Dimension(format!(
                "factor {i} is {}x{}, expected {n}x{d}",
                x.nrows(),
                x.ncols()
            )));
        }
    }
    let mut m = Mat::<f64>::zeros(n, n);
    let mut start = 0;
    while start < n {
        let end = (start + GRAM_BLOCK).min(n);
        let mut block = Mat::<f64>::from_fn(end - start, end, |_, _| 1.0);
        for (x, &d) in xs.iter().zip(dims) {
            let g = x.subrows(start, end - start) * x.subrows(0, end).transpose();
            let scale = 1.0 / d as f64;
            for j in 0..end {
                for i in 0..(end - start) {
                    block[(i, j)] *= g[(i, j)] * scale;
                }
            }
        }
        for i in 0..(end - start) {
            let p = start + i;
            for q in 0..=p {
                m[(p, q)] = block[(i, q)];
                m[(q, p)] = block[(i, q)];
            }
        }
        start = end;
    }
    Ok(m)
}

/// Sorted eigenvalues of a symmetric matrix and its empirical spectral measure.
pub fn esd(m: MatRef<'_, f64>) -> Result<(Vec<f64>, AtomicMeasure)> {
    if m.nrows() != m.ncols() || m.nrows() == 0 {
        return Err(Error::Dimension("esd needs a nonempty square matrix".into()));
    }
    let asym = linalg::max_asymmetry(m);
    if asym > 1e-9 {
        return Err(Error::Dimension(format!("matrix asymmetry {asym:e} exceeds 1e-9")));
    }
    let eigs = linalg::sym_eigenvalues(m)?;
    let measure = AtomicMeasure::from_unnormalized(&eigs, &vec![1.0; eigs.len()])?;
    Ok((eigs, measure))
}

/// Splits `round(n/γ)` into `k` near-equal factors, each at least 2.
///
/// The exact product is used when its most balanced factorization has
/// `max/min ≤ 1.5`; otherwise the best-balanced product within the
/// `γ`-consistency window is chosen.
pub fn realize_dims(n: usize, gamma: f64, k: usize) -> Result<Vec<usize>> {
    if k == 0 || gamma.is_nan() || gamma <= 0.0 || n < 2 {
        return Err(Error::Config("realize_dims needs k ≥ 1, gamma > 0, n ≥ 2".into()));
    }
    let target = (n as f64 / gamma).round() as usize;
    if k == 1 {
        return if target >= 2 { Ok(vec![target]) } else { Err(Error::Config("n/gamma < 2".into())) };
    }
    if let Some((ratio, dims)) = best_factorization(target, k) {
        if ratio <= 1.5 {
            return Ok(dims);
        }
    }
    let lo = (n as f64 / (gamma * (1.0 + GAMMA_REL_TOL))).ceil() as usize;
    let hi = (n as f64 / (gamma * (1.0 - GAMMA_REL_TOL))).floor() as usize;
    let mut best: Option<(f64, usize, Vec<usize>)> = None;
    for p in lo.max(2)..=hi {
        if let Some((ratio, dims)) = best_factorization(p, k) {
            let gap = p.abs_diff(target);
            let better = match &best {
                None => true,
                Some((r, g, _)) => ratio < *r - 1e-12 || ((ratio - *r).abs() <= 1e-12 && gap < *g),
            };
            if better {
                best = Some((ratio, gap, dims));
            }
        }
    }
    best.map(|(_, _, d)| d)
        .ok_or_else(|| Error::Config(format!("no factorization of ~{target} into {k} factors ≥ 2")))
}

fn best_factorization(p: usize, k: usize) -> Option<(f64, Vec<usize>)> {
    fn rec(rem: usize, k: usize, min: usize, cur: &mut Vec<usize>, best: &mut Option<(f64, Vec<usize>)>) {
        if k == 1 {
            if rem >= min {
                cur.push(rem);
                let ratio = *cur.last().unwrap() as f64 / cur[0] as f64;
                if best.as_ref().is_none_or(|(r, _)| ratio < *r) {
                    *best = Some((ratio, cur.clone()));
                }
                cur.pop();
            }
            return;
        }
        let mut f = min;
        while f.pow(k as u32) <= rem {
            if rem.is_multiple_of(f) {
                cur.push(f);
                rec(rem / f, k - 1, f, cur, best);
                cur.pop();
            }
            f += 1;
        }
    }
    let mut best = None;
    rec(p, k, 2, &mut Vec::new(), &mut best);
    best
}

/// A validated experiment: dimensions, covariance families, sampling and
/// theory parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub n: usize,
    pub gamma: f64,
    pub dims: Vec<usize>,
    pub specs: Vec<CovarianceKind>,
    pub dist: RowDistribution,
    pub seed: u64,
    pub replicas: usize,
    pub grid_points: usize,
    pub eta: f64,
    pub solver: SolverOptions,
    pub bins: Option<usize>,
    pub max_n: usize,
}

impl ExperimentConfig {
    pub fn k(&self) -> usize {
        self.dims.len()
    }

    pub fn product_dim(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn realized_gamma(&self) -> f64 {
        self.n as f64 / self.product_dim() as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() || self.dims.len() != self.specs.len() {
            return Err(Error::Config(format!(
                "{} dimensions but {} covariance specs",
                self.dims.len(),
                self.specs.len()
            )));
        }
        if self.n < 2 {
            return Err(Error::Config("n must be at least 2".into()));
        }
        if self.n > self.max_n {
            return Err(Error::Config(format!("n = {} exceeds max_n = {}", self.n, self.max_n)));
        }
        if let Some(d) = self.dims.iter().find(|&&d| d < 2) {
            return Err(Error::Config(format!("every dimension must be ≥ 2, got {d}")));
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::Config(format!("gamma must be positive, got {}", self.gamma)));
        }
        let rel = (self.realized_gamma() - self.gamma).abs() / self.gamma;
        if rel >= GAMMA_REL_TOL {
            return Err(Error::Config(format!(
                "n/∏d = {} is {:.2}% away from gamma = {}",
                self.realized_gamma(),
                rel * 100.0,
                self.gamma
            )));
        }
        if self.replicas == 0 {
            return Err(Error::Config("replicas must be at least 1".into()));
        }
        if self.grid_points < 2 {
            return Err(Error::Config("grid_points must be at least 2".into()));
        }
        for s in &self.specs {
            s.validate()?;
        }
        Ok(())
    }

    pub fn build_sigmas(&self) -> Result<Vec<CovarianceMatrix>> {
        self.specs
            .iter()
            .zip(&self.dims)
            .map(|(kind, &d)| build_sigma(&CovarianceSpec::new(kind.clone(), d)))
            .collect()
    }
}

/// Theoretical law `μ_MP^γ ⊠ ν` on the default grid.
pub fn theoretical_law(
    nu: &AtomicMeasure,
    gamma: f64,
    grid_points: usize,
    eta: f64,
    solver: SolverOptions,
) -> Result<GridDensity> {
    let xs = stieltjes::default_grid(nu, gamma, grid_points)?;
    stieltjes::mp_boxtimes_density(nu, gamma, &xs, eta, solver)
}

/// `μ̂₁ ⊛ … ⊛ μ̂_k` from the realized covariance spectra.
pub fn realized_tensor_law(sigmas: &[CovarianceMatrix]) -> Result<AtomicMeasure> {
    let parts = sigmas.iter().map(|s| s.empirical_measure()).collect::<Result<Vec<_>>>()?;
    AtomicMeasure::mult_convolve_all(&parts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicaSummary {
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    /// Eigenvalues above [`metrics::KERNEL_TOL`].
    pub rank: usize,
    /// `(1/n) tr(M)` from the assembled matrix.
    pub trace_per_n: f64,
    /// `(1/n) Σ_p ∏ᵢ ‖x_p⁽ⁱ⁾‖²/dᵢ` from the factor rows.
    pub row_norm_trace_per_n: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectrumResult {
    /// Pooled eigenvalues of all replicas, ascending.
    pub eigenvalues: Vec<f64>,
    pub histogram: Histogram,
    pub ks: f64,
    pub w1: f64,
    pub theory: GridDensity,
    pub realized_gamma: f64,
    /// `‖Σ⁽ⁱ⁾‖` per factor.
    pub sigma_norms: Vec<f64>,
    pub replicas: Vec<ReplicaSummary>,
    pub config: ExperimentConfig,
    pub wall_time_s: f64,
}

/// Simulates one replica and returns its sorted spectrum.
pub fn simulate_replica(
    cfg: &ExperimentConfig,
    sigmas: &[CovarianceMatrix],
    replica: u32,
) -> Result<(Vec<f64>, ReplicaSummary)> {
    let xs: Vec<Mat<f64>> = sigmas
        .iter()
        .enumerate()
        .map(|(i, s)| sample_factor(s, cfg.n, cfg.dist, cfg.seed, replica, i as u16))
        .collect();
    let m = hadamard_gram(&xs, &cfg.dims)?;
    let trace_per_n = linalg::trace(m.as_ref()) / cfg.n as f64;
    let row_norm_trace_per_n = (0..cfg.n)
        .map(|p| {
            xs.iter()
                .zip(&cfg.dims)
                .map(|(x, &d)| (0..d).map(|q| x[(p, q)] * x[(p, q)]).sum::<f64>() / d as f64)
                .product::<f64>()
        })
        .sum::<f64>()
        / cfg.n as f64;
    drop(xs);
    let (eigs, _) = esd(m.as_ref())?;
    let summary = ReplicaSummary {
        min_eigenvalue: eigs[0],
        max_eigenvalue: *eigs.last().unwrap(),
        rank: eigs.iter().filter(|&&v| v > metrics::KERNEL_TOL).count(),
        trace_per_n,
        row_norm_trace_per_n,
    };
    Ok((eigs, summary))
}

/// Runs `replicas` seeded realizations and compares the pooled spectrum with
/// `μ_MP^γ̂ ⊠ (μ̂₁ ⊛ … ⊛ μ̂_k)`, `γ̂ = n/∏dᵢ`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<SpectrumResult> {
    let started = Instant::now();
    cfg.validate()?;
    let sigmas = cfg.build_sigmas()?;
    let nu = realized_tensor_law(&sigmas)?;
    let gamma = cfg.realized_gamma();
    let theory = theoretical_law(&nu, gamma, cfg.grid_points, cfg.eta, cfg.solver)?;

    let runs = (0..cfg.replicas as u32)
        .into_par_iter()
        .map(|r| simulate_replica(cfg, &sigmas, r))
        .collect::<Result<Vec<_>>>()?;

    let mut eigenvalues = Vec::with_capacity(cfg.n * cfg.replicas);
    let mut replicas = Vec::with_capacity(cfg.replicas);
    for (eigs, summary) in runs {
        eigenvalues.extend(eigs);
        replicas.push(summary);
    }
    eigenvalues.sort_by(f64::total_cmp);

    let snapped = metrics::snap_kernel(&eigenvalues);
    let ks = metrics::ks_distance(&snapped, &theory)?;
    let w1 = metrics::wasserstein1(&snapped, |p| theory.quantile(p))?;
    let bins = cfg.bins.unwrap_or_else(|| metrics::auto_bins(&eigenvalues));
    let histogram = metrics::histogram(&eigenvalues, bins)?;

    Ok(SpectrumResult {
        eigenvalues,
        histogram,
        ks,
        w1,
        theory,
        realized_gamma: gamma,
        sigma_norms: sigmas.iter().map(CovarianceMatrix::norm).collect(),
        replicas,
        config: cfg.clone(),
        wall_time_s: started.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sigma(kind: CovarianceKind, d: usize) -> CovarianceMatrix {
        build_sigma(&CovarianceSpec::new(kind, d)).unwrap()
    }

    #[test]
    fn fourth_cumulants() {
        assert_eq!(RowDistribution::Gaussian.fourth_cumulant(), 0.0);
        assert_eq!(RowDistribution::Rademacher.fourth_cumulant(), -2.0);
        assert_eq!(RowDistribution::Uniform.fourth_cumulant(), -1.2);
    }

    #[test]
    fn standardized_entries() {
        let mut r = rng::stream(1, 0);
        for dist in [RowDistribution::Gaussian, RowDistribution::Rademacher, RowDistribution::Uniform] {
            let n = 200_000;
            let v: Vec<f64> = (0..n).map(|_| dist.sample(&mut r)).collect();
            let mean = v.iter().sum::<f64>() / n as f64;
            let var = v.iter().map(|x| x * x).sum::<f64>() / n as f64;
            let m4 = v.iter().map(|x| x.powi(4)).sum::<f64>() / n as f64;
            assert!(mean.abs() < 0.01);
            assert!((var - 1.0).abs() < 0.01);
            assert!((m4 - 3.0 - dist.fourth_cumulant()).abs() < 0.1);
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let s = sigma(CovarianceKind::Toeplitz { rho: 0.5 }, 4);
        let a = sample_factor(&s, 50, RowDistribution::Gaussian, 9, 0, 1);
        let b = sample_factor(&s, 50, RowDistribution::Gaussian, 9, 0, 1);
        assert_eq!(a, b);
        let c = sample_factor(&s, 50, RowDistribution::Gaussian, 9, 0, 2);
        assert_ne!(a, c);
    }

    #[test]
    fn gram_single_factor() {
        let x = Mat::from_fn(5, 3, |i, j| (i * 3 + j) as f64 - 4.0);
        let m = hadamard_gram(std::slice::from_ref(&x), &[3]).unwrap();
        let g = &x * x.transpose();
        for i in 0..5 {
            for j in 0..5 {
                assert!((m[(i, j)] - g[(i, j)] / 3.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gram_all_ones() {
        let a = Mat::from_fn(4, 3, |_, _| 1.0);
        let b = Mat::from_fn(4, 5, |_, _| 1.0);
        let m = hadamard_gram(&[a, b], &[3, 5]).unwrap();
        assert!(m.col_iter().all(|c| c.iter().all(|&v| (v - 1.0).abs() < 1e-15)));
    }

    #[test]
    fn gram_hand_example() {
        let x1 = Mat::from_fn(2, 2, |i, j| if i == j { 1.0 } else { 0.0 });
        let x2 = Mat::from_fn(2, 2, |i, j| [[1.0, 1.0], [1.0, -1.0]][i][j]);
        let m = hadamard_gram(&[x1, x2], &[2, 2]).unwrap();
        assert_eq!(m[(0, 0)], 0.5);
        assert_eq!(m[(1, 1)], 0.5);
        assert_eq!(m[(0, 1)], 0.0);
        assert_eq!(m[(1, 0)], 0.0);
    }

    #[test]
    fn gram_blocks_span_boundaries() {
        let n = GRAM_BLOCK + 37;
        let s = sigma(CovarianceKind::Identity, 3);
        let x1 = sample_factor(&s, n, RowDistribution::Gaussian, 2, 0, 0);
        let x2 = sample_factor(&s, n, RowDistribution::Gaussian, 2, 0, 1);
        let m = hadamard_gram(&[x1.clone(), x2.clone()], &[3, 3]).unwrap();
        for &(p, q) in &[(0, n - 1), (GRAM_BLOCK, 3), (n - 1, GRAM_BLOCK - 1), (10, 10)] {
            let g1: f64 = (0..3).map(|j| x1[(p, j)] * x1[(q, j)]).sum::<f64>() / 3.0;
            let g2: f64 = (0..3).map(|j| x2[(p, j)] * x2[(q, j)]).sum::<f64>() / 3.0;
            assert!((m[(p, q)] - g1 * g2).abs() < 1e-12);
            assert_eq!(m[(p, q)], m[(q, p)]);
        }
    }

    #[test]
    fn gram_dimension_mismatch() {
        let a = Mat::<f64>::zeros(3, 2);
        let b = Mat::<f64>::zeros(4, 2);
        assert!(hadamard_gram(&[a.clone(), b], &[2, 2]).is_err());
        assert!(hadamard_gram(std::slice::from_ref(&a), &[3]).is_err());
        assert!(hadamard_gram(&[a], &[2, 2]).is_err());
        assert!(hadamard_gram(&[], &[]).is_err());
    }

    #[test]
    fn esd_examples() {
        let d = Mat::from_fn(3, 3, |i, j| if i == j { [1.0, 2.0, 3.0][i] } else { 0.0 });
        let (e, m) = esd(d.as_ref()).unwrap();
        assert_eq!(e, vec![1.0, 2.0, 3.0]);
        assert_eq!(m.len(), 3);
        let n = 6;
        let ones = Mat::from_fn(n, n, |_, _| 1.0);
        let (e, _) = esd(ones.as_ref()).unwrap();
        assert!(e[..n - 1].iter().all(|v| v.abs() < 1e-12));
        assert!((e[n - 1] - n as f64).abs() < 1e-12);
        let asym = Mat::from_fn(2, 2, |i, j| if i < j { 1.0 } else { 0.0 });
        assert!(esd(asym.as_ref()).is_err());
    }

    #[test]
    fn dims_balanced() {
        assert_eq!(realize_dims(3042, 2.0, 2).unwrap(), vec![39, 39]);
        assert_eq!(realize_dims(2500, 0.25, 2).unwrap(), vec![100, 100]);
        assert_eq!(realize_dims(1000, 1.0, 3).unwrap(), vec![10, 10, 10]);
        // 1009 is prime: fall back to a nearby product.
        let d = realize_dims(1009, 1.0, 2).unwrap();
        let p: usize = d.iter().product();
        assert!((1009.0 / p as f64 - 1.0).abs() < GAMMA_REL_TOL);
        assert!(d[1] as f64 / d[0] as f64 <= 1.5);
        assert_eq!(realize_dims(500, 1.0, 1).unwrap(), vec![500]);
    }

    fn cfg(n: usize, gamma: f64, dims: Vec<usize>, specs: Vec<CovarianceKind>) -> ExperimentConfig {
        ExperimentConfig {
            n,
            gamma,
            dims,
            specs,
            dist: RowDistribution::Gaussian,
            seed: 5,
            replicas: 1,
            grid_points: 801,
            eta: 1e-4,
            solver: SolverOptions::default(),
            bins: None,
            max_n: DEFAULT_MAX_N,
        }
    }

    #[test]
    fn config_validation() {
        let ok = cfg(200, 2.0, vec![10, 10], vec![CovarianceKind::Identity; 2]);
        ok.validate().unwrap();
        let mut bad = ok.clone();
        bad.gamma = 2.5;
        assert!(bad.validate().is_err());
        let mut bad = ok.clone();
        bad.specs.pop();
        assert!(bad.validate().is_err());
        let mut bad = ok.clone();
        bad.dims = vec![1, 200];
        bad.gamma = 1.0;
        assert!(bad.validate().is_err());
        let mut bad = ok.clone();
        bad.n = 7000;
        bad.dims = vec![50, 70];
        assert!(bad.validate().is_err());
        let mut bad = ok;
        bad.replicas = 0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn small_experiment_is_deterministic_and_psd() {
        let c = cfg(300, 3.0, vec![10, 10], vec![
            CovarianceKind::Identity,
            CovarianceKind::Toeplitz { rho: 0.5 },
        ]);
        let a = run_experiment(&c).unwrap();
        let b = run_experiment(&c).unwrap();
        assert_eq!(a.eigenvalues, b.eigenvalues);
        assert_eq!(a.ks, b.ks);
        let r = &a.replicas[0];
        assert!(r.min_eigenvalue >= -1e-8);
        assert!(r.rank <= 100);
        assert!((r.trace_per_n - r.row_norm_trace_per_n).abs() < 1e-10);
        assert_eq!(a.eigenvalues.len(), 300);
    }
}
