//! Experiment config files and command-line overrides.

use std::path::Path;

use anyhow::{bail, Context, Result};
use hadamard_spectra::simulate::{realize_dims, DEFAULT_MAX_N};
use hadamard_spectra::stieltjes::{DEFAULT_ETA, DEFAULT_GRID_POINTS, DEFAULT_MAX_ITER, DEFAULT_TOL};
use hadamard_spectra::tensoralg::TestTensorChoice;
use hadamard_spectra::{CovarianceKind, ExperimentConfig, RowDistribution, SolverOptions};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

fn default_replicas() -> usize {
    1
}

fn default_grid_points() -> usize {
    DEFAULT_GRID_POINTS
}

fn default_eta() -> f64 {
    DEFAULT_ETA
}

fn default_tol() -> f64 {
    DEFAULT_TOL
}

fn default_instances() -> usize {
    20
}

fn default_check_n() -> usize {
    8
}

/// Settings for `tensor-check`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorCheckConfig {
    /// Seeded instances of the column identity.
    #[serde(default = "default_instances")]
    pub instances: usize,
    /// Sample count per instance.
    #[serde(default = "default_check_n")]
    pub n: usize,
}

impl Default for TensorCheckConfig {
    fn default() -> Self {
        Self { instances: default_instances(), n: default_check_n() }
    }
}

/// Settings for `concentration`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConcentrationConfig {
    pub d_mins: Vec<usize>,
    pub trials: usize,
    #[serde(default)]
    pub b_choice: TestTensorChoice,
    /// Aspect ratio for `n = round(γ·d_min^k)`; falls back to the top-level `gamma`.
    #[serde(default)]
    pub gamma: Option<f64>,
}

/// One experiment, as read from disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub k: usize,
    #[serde(default)]
    pub n: Option<usize>,
    pub gamma: f64,
    #[serde(default)]
    pub d: Option<Vec<usize>>,
    pub specs: Vec<CovarianceKind>,
    #[serde(default)]
    pub dist: RowDistribution,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub max_iter: Option<usize>,
    #[serde(default)]
    pub bins: Option<usize>,
    #[serde(default)]
    pub max_n: Option<usize>,
    #[serde(default)]
    pub tensor_check: Option<TensorCheckConfig>,
    #[serde(default)]
    pub concentration: Option<ConcentrationConfig>,
}

/// Values given on the command line take precedence over the file.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub replicas: Option<usize>,
    pub eta: Option<f64>,
    pub grid_points: Option<usize>,
    pub n: Option<usize>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).context("malformed config")?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        Self::from_json(&text).with_context(|| format!("in {}", path.display()))
    }

    fn check(&self) -> Result<()> {
        if self.k == 0 {
            bail!("k must be at least 1");
        }
        if self.specs.len() != self.k {
            bail!("k = {} but {} specs given", self.k, self.specs.len());
        }
        if let Some(d) = &self.d {
            if d.len() != self.k {
                bail!("k = {} but d has {} entries", self.k, d.len());
            }
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            bail!("gamma must be positive, got {}", self.gamma);
        }
        if !(self.eta.is_finite() && self.eta > 0.0) {
            bail!("eta must be positive, got {}", self.eta);
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            bail!("tol must be positive, got {}", self.tol);
        }
        for s in &self.specs {
            s.validate()?;
        }
        Ok(())
    }

    /// Applies overrides. A new `n` drops any explicit `d`, which is then
    /// re-derived from `n` and `gamma`.
    pub fn with_overrides(mut self, o: &Overrides) -> Result<Self> {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(r) = o.replicas {
            self.replicas = r;
        }
        if let Some(eta) = o.eta {
            self.eta = eta;
        }
        if let Some(g) = o.grid_points {
            self.grid_points = g;
        }
        if let Some(n) = o.n {
            if self.n != Some(n) {
                self.n = Some(n);
                self.d = None;
            }
        }
        self.check()?;
        Ok(self)
    }

    pub fn solver(&self) -> SolverOptions {
        SolverOptions { tol: self.tol, max_iter: self.max_iter.unwrap_or(DEFAULT_MAX_ITER) }
    }

    /// Explicit `d`, or a factorization of `round(n/γ)`.
    pub fn dims(&self) -> Result<Vec<usize>> {
        match (&self.d, self.n) {
            (Some(d), _) => Ok(d.clone()),
            (None, Some(n)) => Ok(realize_dims(n, self.gamma, self.k)?),
            (None, None) => bail!("config needs either d or n"),
        }
    }

    pub fn experiment(&self) -> Result<ExperimentConfig> {
        let Some(n) = self.n else { bail!("config needs n") };
        let cfg = ExperimentConfig {
            n,
            gamma: self.gamma,
            dims: self.dims()?,
            specs: self.specs.clone(),
            dist: self.dist,
            seed: self.seed,
            replicas: self.replicas,
            grid_points: self.grid_points,
            eta: self.eta,
            solver: self.solver(),
            bins: self.bins,
            max_n: self.max_n.unwrap_or(DEFAULT_MAX_N),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// First 12 hex digits of the SHA-256 of the config with the seed zeroed,
    /// so that runs differing only in seed share a prefix.
    pub fn hash12(&self) -> String {
        let mut unseeded = self.clone();
        unseeded.seed = 0;
        let text = serde_json::to_string(&unseeded).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        hex::encode(digest)[..12].to_string()
    }
}
