//! The covariance tensor `𝒯 = π(⊗ᵢ Σ⁽ⁱ⁾)`, the tensor-column factorization
//! `M = (1/|d|) 𝒜ᵀ𝒜`, and the quadratic-form concentration experiment.
//!
//! Everything here is dense and capped at `|d| = ∏dᵢ ≤ 4096`: it is a
//! verification layer for small instances, not the simulation path.

use faer::{Mat, MatRef};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covmodel::{build_sigma, CovarianceKind, CovarianceMatrix, CovarianceSpec};
use crate::error::{Error, Result};
use crate::linalg;
use crate::rng;
use crate::simulate::{self, RowDistribution};

pub const MAX_TENSOR_DIM: usize = 4096;
pub const MAX_COLUMNS_CHECK_N: usize = 64;
pub const MIN_TRIALS: usize = 100;

fn check_cap(dims: &[usize]) -> Result<usize> {
    let size = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d)).unwrap_or(usize::MAX);
    if size > MAX_TENSOR_DIM {
        return Err(Error::SizeCap { size, cap: MAX_TENSOR_DIM });
    }
    Ok(size)
}

/// A multi-index `(u₁, …, u_k)` with `uᵢ < dᵢ`, flattened row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MultiIndex(pub Vec<usize>);

impl MultiIndex {
    pub fn flatten(&self, dims: &[usize]) -> usize {
        assert_eq!(self.0.len(), dims.len());
        self.0.iter().zip(dims).fold(0, |acc, (&u, &d)| {
            assert!(u < d, "index {u} out of range {d}");
            acc * d + u
        })
    }

    pub fn unflatten(mut index: usize, dims: &[usize]) -> Self {
        let mut u = vec![0; dims.len()];
        for (slot, &d) in u.iter_mut().zip(dims).rev() {
            *slot = index % d;
            index /= d;
        }
        assert_eq!(index, 0, "flat index out of range");
        MultiIndex(u)
    }
}

/// A dense `|d| × |d|` operator on `ℝ^{d₁} ⊗ … ⊗ ℝ^{d_k}` indexed by
/// flattened multi-indices.
#[derive(Debug, Clone)]
pub struct FlattenedTensorOperator {
    pub dims: Vec<usize>,
    pub data: Mat<f64>,
}

impl FlattenedTensorOperator {
    pub fn size(&self) -> usize {
        self.data.nrows()
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        linalg::sym_eigenvalues(self.data.as_ref())
    }

    /// `Tr(self · other)`.
    pub fn trace_product(&self, other: &FlattenedTensorOperator) -> f64 {
        let n = self.size();
        let mut acc = 0.0;
        for u in 0..n {
            for v in 0..n {
                acc += self.data[(u, v)] * other.data[(v, u)];
            }
        }
        acc
    }
}

/// `𝒯_{u,v} = ∏ᵢ σ⁽ⁱ⁾_{uᵢ vᵢ}`, entry by entry.
pub fn braid_matrices(factors: &[MatRef<'_, f64>]) -> Result<FlattenedTensorOperator> {
    if factors.is_empty() {
        return Err(Error::Dimension("braid needs at least one factor".into()));
    }
    let dims: Vec<usize> = factors.iter().map(|f| f.nrows()).collect();
    let size = check_cap(&dims)?;
    let indices: Vec<MultiIndex> = (0..size).map(|f| MultiIndex::unflatten(f, &dims)).collect();
    let data = Mat::from_fn(size, size, |a, b| {
        let (u, v) = (&indices[a].0, &indices[b].0);
        factors.iter().enumerate().map(|(i, s)| s[(u[i], v[i])]).product()
    });
    Ok(FlattenedTensorOperator { dims, data })
}

pub fn braid(sigmas: &[CovarianceMatrix]) -> Result<FlattenedTensorOperator> {
    let refs: Vec<MatRef<'_, f64>> = sigmas.iter().map(CovarianceMatrix::matrix).collect();
    braid_matrices(&refs)
}

/// All products `∏ᵢ λ⁽ⁱ⁾_{pᵢ}` of per-factor eigenvalues, ascending.
pub fn tensor_spectrum_oracle(sigmas: &[CovarianceMatrix]) -> Result<Vec<f64>> {
    let dims: Vec<usize> = sigmas.iter().map(CovarianceMatrix::dim).collect();
    check_cap(&dims)?;
    let mut out = vec![1.0];
    for s in sigmas {
        out = out
            .iter()
            .flat_map(|&a| s.spectrum().iter().map(move |&l| a * l))
            .collect();
    }
    out.sort_by(f64::total_cmp);
    Ok(out)
}

/// `⊗ᵢ vᵢ` in row-major flattening.
pub fn kron_vectors(vs: &[&[f64]]) -> Vec<f64> {
    vs.iter().fold(vec![1.0], |acc, v| {
        acc.iter().flat_map(|&a| v.iter().map(move |&b| a * b)).collect()
    })
}

/// Builds `𝒲ᵖ = ⊗ᵢ x_p⁽ⁱ⁾` column by column and returns
/// `max |(1/|d|) 𝒜ᵀ𝒜 − hadamard_gram(xs)|`.
pub fn tensor_columns_check(xs: &[Mat<f64>], dims: &[usize]) -> Result<f64> {
    let size = check_cap(dims)?;
    let n = xs.first().map(|x| x.nrows()).unwrap_or(0);
    if n > MAX_COLUMNS_CHECK_N {
        return Err(Error::SizeCap { size: n, cap: MAX_COLUMNS_CHECK_N });
    }
    let gram = simulate::hadamard_gram(xs, dims)?;
    let mut a = Mat::<f64>::zeros(size, n);
    for p in 0..n {
        let rows: Vec<Vec<f64>> = xs.iter().map(|x| x.row(p).iter().copied().collect()).collect();
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        for (u, w) in kron_vectors(&refs).into_iter().enumerate() {
            a[(u, p)] = w;
        }
    }
    let mut m = a.transpose() * &a;
    let scale = 1.0 / size as f64;
    for j in 0..n {
        for i in 0..n {
            m[(i, j)] *= scale;
        }
    }
    Ok(linalg::max_abs_diff(m.as_ref(), gram.as_ref()))
}

/// Test tensors `ℬ` for the concentration experiment, rescaled to `‖ℬ‖ = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TestTensorChoice {
    #[default]
    Identity,
    /// `π(⊗ᵢ Bᵢ)` with `Bᵢ = GᵢGᵢᵀ` seeded Gaussian, each of unit norm.
    BraidOfRandomPsd,
    /// Dense symmetric Gaussian matrix on the flattened space.
    RandomSymmetricNormalized,
}

enum TestTensor {
    Identity,
    Braided(Vec<Mat<f64>>),
    Dense(FlattenedTensorOperator),
}

impl TestTensor {
    fn build(choice: TestTensorChoice, dims: &[usize], seed: u64) -> Result<Self> {
        let mut r = rng::stream(seed, rng::stream_id(rng::domain::TEST_TENSOR, 0, 0));
        Ok(match choice {
            TestTensorChoice::Identity => TestTensor::Identity,
            TestTensorChoice::BraidOfRandomPsd => {
                let mut factors = Vec::with_capacity(dims.len());
                for &d in dims {
                    let g = Mat::<f64>::from_fn(d, d, |_, _| StandardNormal.sample(&mut r));
                    let b = &g * g.transpose();
                    let norm = *linalg::sym_eigenvalues(b.as_ref())?.last().unwrap();
                    factors.push(Mat::from_fn(d, d, |i, j| 0.5 * (b[(i, j)] + b[(j, i)]) / norm));
                }
                TestTensor::Braided(factors)
            }
            TestTensorChoice::RandomSymmetricNormalized => {
                let size = check_cap(dims)?;
                let g = Mat::<f64>::from_fn(size, size, |_, _| StandardNormal.sample(&mut r));
                let sym = Mat::from_fn(size, size, |i, j| 0.5 * (g[(i, j)] + g[(j, i)]));
                let ev = linalg::sym_eigenvalues(sym.as_ref())?;
                let norm = ev[0].abs().max(ev[ev.len() - 1].abs());
                let data = Mat::from_fn(size, size, |i, j| sym[(i, j)] / norm);
                TestTensor::Dense(FlattenedTensorOperator { dims: dims.to_vec(), data })
            }
        })
    }

    /// `Tr(ℬ𝒯)`, computed against the dense braid of the covariances.
    fn trace_against(&self, tensor: &FlattenedTensorOperator) -> Result<f64> {
        Ok(match self {
            TestTensor::Identity => linalg::trace(tensor.data.as_ref()),
            TestTensor::Braided(bs) => {
                let refs: Vec<MatRef<'_, f64>> = bs.iter().map(Mat::as_ref).collect();
                braid_matrices(&refs)?.trace_product(tensor)
            }
            TestTensor::Dense(b) => b.trace_product(tensor),
        })
    }

    /// `𝒲ᵀℬ𝒲` for `𝒲 = ⊗ᵢ xᵢ`.
    fn quadratic_form(&self, rows: &[&[f64]]) -> f64 {
        match self {
            TestTensor::Identity => rows.iter().map(|x| x.iter().map(|v| v * v).sum::<f64>()).product(),
            TestTensor::Braided(bs) => rows
                .iter()
                .zip(bs)
                .map(|(x, b)| {
                    let d = x.len();
                    let mut acc = 0.0;
                    for i in 0..d {
                        for j in 0..d {
                            acc += x[i] * b[(i, j)] * x[j];
                        }
                    }
                    acc
                })
                .product(),
            TestTensor::Dense(b) => {
                let w = kron_vectors(rows);
                let mut acc = 0.0;
                for (u, &wu) in w.iter().enumerate() {
                    let row: f64 = w.iter().enumerate().map(|(v, &wv)| b.data[(u, v)] * wv).sum();
                    acc += wu * row;
                }
                acc
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationEstimate {
    /// `(1/n²) · mean |𝒜ᵀℬ𝒜 − Tr(ℬ𝒯)|²` over the trials.
    pub estimate: f64,
    pub stderr: f64,
    pub trace_bt: f64,
}

/// Monte-Carlo estimate of `(1/n²) E|𝒜_{·p}ᵀ ℬ 𝒜_{·p} − Tr(ℬ𝒯)|²`.
pub fn quadratic_form_concentration(
    sigmas: &[CovarianceMatrix],
    dist: RowDistribution,
    choice: TestTensorChoice,
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<ConcentrationEstimate> {
    if trials < MIN_TRIALS {
        return Err(Error::InvalidArgument(format!("need at least {MIN_TRIALS} trials, got {trials}")));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    let dims: Vec<usize> = sigmas.iter().map(CovarianceMatrix::dim).collect();
    check_cap(&dims)?;
    let tensor = braid(sigmas)?;
    let b = TestTensor::build(choice, &dims, seed)?;
    let trace_bt = b.trace_against(&tensor)?;

    let columns: Vec<Mat<f64>> = sigmas
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let mut r = rng::stream(seed, rng::stream_id(rng::domain::CONCENTRATION, 0, i as u16));
            simulate::sample_matrix(s, trials, dist, &mut r)
        })
        .collect();
    let sq_dev: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let rows: Vec<Vec<f64>> = columns.iter().map(|x| x.row(t).iter().copied().collect()).collect();
            let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
            (b.quadratic_form(&refs) - trace_bt).powi(2)
        })
        .collect();
    let m = trials as f64;
    let mean = sq_dev.iter().sum::<f64>() / m;
    let var = sq_dev.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
    let n2 = (n as f64).powi(2);
    Ok(ConcentrationEstimate { estimate: mean / n2, stderr: (var / m).sqrt() / n2, trace_bt })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationRow {
    pub k: usize,
    pub d_min: usize,
    pub n: usize,
    pub trials: usize,
    pub estimate: f64,
    pub stderr: f64,
}

/// Sweeps `d_min` with all `dᵢ = d_min` and `n = round(γ·d_min^k)`, so the
/// estimates are comparable along the `n/|d| → γ` scaling.
#[allow(clippy::too_many_arguments)]
pub fn concentration_sweep(
    specs: &[CovarianceKind],
    dist: RowDistribution,
    choice: TestTensorChoice,
    d_mins: &[usize],
    gamma: f64,
    trials: usize,
    seed: u64,
) -> Result<Vec<ConcentrationRow>> {
    let k = specs.len();
    d_mins
        .iter()
        .map(|&d| {
            let sigmas = specs
                .iter()
                .map(|kind| build_sigma(&CovarianceSpec::new(kind.clone(), d)))
                .collect::<Result<Vec<_>>>()?;
            let size = d.pow(k as u32);
            let n = ((gamma * size as f64).round() as usize).max(1);
            let est = quadratic_form_concentration(&sigmas, dist, choice, n, trials, seed)?;
            Ok(ConcentrationRow { k, d_min: d, n, trials, estimate: est.estimate, stderr: est.stderr })
        })
        .collect()
}

pub fn concentration_csv(rows: &[ConcentrationRow]) -> String {
    let mut out = String::from("k,d_min,n,trials,estimate,stderr\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{},{:e},{:e}\n", r.k, r.d_min, r.n, r.trials, r.estimate, r.stderr));
    }
    out
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let cov: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let var: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    cov / var
}
