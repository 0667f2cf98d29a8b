//! The five subcommands. Each writes its artifacts through a [`RunWriter`].

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{bail, Context, Result};
use hadamard_spectra::covmodel::{build_sigma, CovarianceSpec};
use hadamard_spectra::metrics::KERNEL_TOL;
use hadamard_spectra::simulate::{run_experiment, sample_matrix, theoretical_law, ReplicaSummary};
use hadamard_spectra::tensoralg::{self, concentration_csv, concentration_sweep};
use hadamard_spectra::{rng, AtomicMeasure, CovarianceMatrix, GridDensity, SpectrumResult};
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, TensorCheckConfig};
use crate::manifest::{RunManifest, RunWriter};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Theory,
    Simulate,
    Compare,
    TensorCheck,
    Concentration,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Theory => "theory",
            Command::Simulate => "simulate",
            Command::Compare => "compare",
            Command::TensorCheck => "tensor-check",
            Command::Concentration => "concentration",
        }
    }
}

/// Runs `cmd` into `<out>/<command>-<hash>-<seed>`. On failure the manifest
/// is marked failed and the error is returned.
pub fn execute(cmd: Command, cfg: &RunConfig, config_path: Option<&Path>, out: &Path) -> Result<RunManifest> {
    let mut w = RunWriter::create(cmd.name(), cfg, config_path, out)?;
    let res = match cmd {
        Command::Theory => cmd_theory(cfg, &mut w),
        Command::Simulate => cmd_simulate(cfg, &mut w),
        Command::Compare => cmd_compare(cfg, &mut w),
        Command::TensorCheck => cmd_tensor_check(cfg, &mut w),
        Command::Concentration => cmd_concentration(cfg, &mut w),
    };
    match res {
        Ok(()) => w.finish(),
        Err(e) => {
            w.fail(&e)?;
            Err(e)
        }
    }
}

/// Where each factor's measure came from in a theory run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasureSource {
    Exact,
    Realized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheorySummary {
    pub gamma: f64,
    pub nu_atoms: Vec<f64>,
    pub nu_weights: Vec<f64>,
    pub eta: f64,
    pub zero_atom: f64,
    pub grid_points: usize,
    pub raw_mass: f64,
    pub max_clipped: f64,
    pub sources: Vec<MeasureSource>,
    #[serde(default)]
    pub dims: Option<Vec<usize>>,
}

impl TheorySummary {
    fn new(law: &GridDensity, sources: Vec<MeasureSource>, dims: Option<Vec<usize>>) -> Self {
        TheorySummary {
            gamma: law.gamma,
            nu_atoms: law.nu.atoms().to_vec(),
            nu_weights: law.nu.weights().to_vec(),
            eta: law.eta,
            zero_atom: law.zero_atom,
            grid_points: law.xs.len(),
            raw_mass: law.raw_mass,
            max_clipped: law.max_clipped,
            sources,
            dims,
        }
    }
}

/// `μ̂₁ ⊛ … ⊛ μ̂_k`, exact for identity/atomic factors and from the
/// realized spectrum at the configured dimension otherwise.
pub fn theory_measure(cfg: &RunConfig) -> Result<(AtomicMeasure, Vec<MeasureSource>, Option<Vec<usize>>)> {
    let exact: Vec<Option<AtomicMeasure>> = cfg.specs.iter().map(|s| s.limit_measure()).collect();
    let dims = if exact.iter().all(Option::is_some) { None } else { Some(cfg.dims()?) };
    let mut parts = Vec::with_capacity(cfg.k);
    let mut sources = Vec::with_capacity(cfg.k);
    for (i, (spec, e)) in cfg.specs.iter().zip(exact).enumerate() {
        match e {
            Some(m) => {
                parts.push(m);
                sources.push(MeasureSource::Exact);
            }
            None => {
                let d = dims.as_ref().expect("dims resolved above")[i];
                let sigma = build_sigma(&CovarianceSpec::new(spec.clone(), d))?;
                parts.push(sigma.empirical_measure()?);
                sources.push(MeasureSource::Realized);
            }
        }
    }
    Ok((AtomicMeasure::mult_convolve_all(&parts)?, sources, dims))
}

pub fn cmd_theory(cfg: &RunConfig, w: &mut RunWriter) -> Result<()> {
    let (nu, sources, dims) = theory_measure(cfg)?;
    let law = theoretical_law(&nu, cfg.gamma, cfg.grid_points, cfg.eta, cfg.solver())?;
    w.write("density.csv", &law.to_csv())?;
    w.write("theory.json", &to_json(&TheorySummary::new(&law, sources, dims))?)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub command: String,
    pub ks: f64,
    pub w1: f64,
    pub gamma: f64,
    pub realized_gamma: f64,
    pub n: usize,
    pub dims: Vec<usize>,
    pub replicas: usize,
    /// `‖Σ⁽ⁱ⁾‖` per factor.
    pub sigma_norms: Vec<f64>,
    /// `max ‖Σ⁽ⁱ⁾‖`.
    pub c: f64,
    pub zero_atom: f64,
    /// Fraction of pooled eigenvalues below the kernel tolerance.
    pub empirical_zero_fraction: f64,
    pub theory_raw_mass: f64,
    pub theory_max_clipped: f64,
    pub replica_summaries: Vec<ReplicaSummary>,
    pub config: RunConfig,
}

impl Report {
    pub fn new(command: Command, res: &SpectrumResult, cfg: &RunConfig) -> Self {
        let total = res.eigenvalues.len() as f64;
        Report {
            command: command.name().to_string(),
            ks: res.ks,
            w1: res.w1,
            gamma: res.config.gamma,
            realized_gamma: res.realized_gamma,
            n: res.config.n,
            dims: res.config.dims.clone(),
            replicas: res.config.replicas,
            sigma_norms: res.sigma_norms.clone(),
            c: res.sigma_norms.iter().copied().fold(0.0, f64::max),
            zero_atom: res.theory.zero_atom,
            empirical_zero_fraction: res.eigenvalues.iter().filter(|&&v| v < KERNEL_TOL).count() as f64
                / total,
            theory_raw_mass: res.theory.raw_mass,
            theory_max_clipped: res.theory.max_clipped,
            replica_summaries: res.replicas.clone(),
            config: cfg.clone(),
        }
    }
}

pub fn eigenvalues_csv(eigs: &[f64]) -> String {
    let mut out = String::with_capacity(eigs.len() * 24 + 11);
    out.push_str("eigenvalue\n");
    for v in eigs {
        writeln!(out, "{v:e}").unwrap();
    }
    out
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

pub fn cmd_simulate(cfg: &RunConfig, w: &mut RunWriter) -> Result<()> {
    let res = run_experiment(&cfg.experiment()?)?;
    w.write("eigenvalues.csv", &eigenvalues_csv(&res.eigenvalues))?;
    w.write("report.json", &to_json(&Report::new(Command::Simulate, &res, cfg))?)?;
    Ok(())
}

pub fn cmd_compare(cfg: &RunConfig, w: &mut RunWriter) -> Result<()> {
    let res = run_experiment(&cfg.experiment()?)?;
    let sources = vec![MeasureSource::Realized; cfg.k];
    w.write("eigenvalues.csv", &eigenvalues_csv(&res.eigenvalues))?;
    w.write("histogram.csv", &res.histogram.to_csv())?;
    w.write("density.csv", &res.theory.to_csv())?;
    w.write(
        "theory.json",
        &to_json(&TheorySummary::new(&res.theory, sources, Some(res.config.dims.clone())))?,
    )?;
    w.write("report.json", &to_json(&Report::new(Command::Compare, &res, cfg))?)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorCheckReport {
    pub dims: Vec<usize>,
    pub size: usize,
    /// `max |eig(𝒯) − sorted products of factor eigenvalues|`.
    pub eigen_max_abs_diff: f64,
    pub max_eigenvalue: f64,
    pub norm_product: f64,
    pub norm_bound_holds: bool,
    /// Largest gap between the ESD of `𝒯` and `μ̂₁ ⊛ … ⊛ μ̂_k`, over atoms
    /// and weights; infinite if the atom counts differ.
    pub convolution_max_abs_diff: f64,
    pub instances: usize,
    pub n: usize,
    /// `max |(1/|d|)𝒜ᵀ𝒜 − M|` per seeded instance.
    pub columns_deviation: Vec<f64>,
    pub columns_max_deviation: f64,
}

pub fn tensor_check(cfg: &RunConfig) -> Result<TensorCheckReport> {
    let dims = cfg.dims()?;
    let opts = cfg.tensor_check.clone().unwrap_or_default();
    let TensorCheckConfig { instances, n } = opts;
    if n == 0 {
        bail!("tensor_check.n must be positive");
    }
    let sigmas = cfg
        .specs
        .iter()
        .zip(&dims)
        .map(|(kind, &d)| build_sigma(&CovarianceSpec::new(kind.clone(), d)))
        .collect::<hadamard_spectra::Result<Vec<_>>>()?;

    let op = tensoralg::braid(&sigmas)?;
    let eigs = op.eigenvalues()?;
    let oracle = tensoralg::tensor_spectrum_oracle(&sigmas)?;
    let eigen_max_abs_diff = eigs.iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let max_eigenvalue = eigs.last().copied().unwrap_or(0.0);
    let norm_product: f64 = sigmas.iter().map(CovarianceMatrix::norm).product();

    let from_oracle = AtomicMeasure::from_covariance_spectrum(&oracle)?;
    let parts = sigmas.iter().map(|s| s.empirical_measure()).collect::<hadamard_spectra::Result<Vec<_>>>()?;
    let convolved = AtomicMeasure::mult_convolve_all(&parts)?;
    let convolution_max_abs_diff = if from_oracle.len() == convolved.len() {
        from_oracle
            .iter()
            .zip(convolved.iter())
            .map(|((a, p), (b, q))| (a - b).abs().max((p - q).abs()))
            .fold(0.0, f64::max)
    } else {
        f64::INFINITY
    };

    let columns_deviation = (0..instances as u32)
        .map(|j| {
            let xs: Vec<_> = sigmas
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    let mut r = rng::stream(cfg.seed, rng::stream_id(rng::domain::TENSOR_CHECK, j, i as u16));
                    sample_matrix(s, n, cfg.dist, &mut r)
                })
                .collect();
            tensoralg::tensor_columns_check(&xs, &dims)
        })
        .collect::<hadamard_spectra::Result<Vec<f64>>>()?;
    let columns_max_deviation = columns_deviation.iter().copied().fold(0.0, f64::max);

    Ok(TensorCheckReport {
        size: op.size(),
        dims,
        eigen_max_abs_diff,
        max_eigenvalue,
        norm_product,
        norm_bound_holds: max_eigenvalue <= norm_product + 1e-10,
        convolution_max_abs_diff,
        instances,
        n,
        columns_deviation,
        columns_max_deviation,
    })
}

pub fn cmd_tensor_check(cfg: &RunConfig, w: &mut RunWriter) -> Result<()> {
    let report = tensor_check(cfg)?;
    w.write("tensor_check.json", &to_json(&report)?)
}

pub fn cmd_concentration(cfg: &RunConfig, w: &mut RunWriter) -> Result<()> {
    let c = cfg.concentration.as_ref().context("config has no `concentration` section")?;
    let gamma = c.gamma.unwrap_or(cfg.gamma);
    let rows = concentration_sweep(&cfg.specs, cfg.dist, c.b_choice, &c.d_mins, gamma, c.trials, cfg.seed)?;
    w.write("concentration.csv", &concentration_csv(&rows))
}
