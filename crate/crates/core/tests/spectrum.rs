mod common;

use common::MpCdf;
use hadamard_spectra::metrics::{ks_distance, snap_kernel, KERNEL_TOL};
use hadamard_spectra::simulate::{realize_dims, run_experiment, simulate_replica, DEFAULT_MAX_N};
use hadamard_spectra::stieltjes::DEFAULT_GRID_POINTS;
use hadamard_spectra::{AtomicMeasure, CovarianceKind, ExperimentConfig, RowDistribution, SolverOptions};

fn config(n: usize, gamma: f64, specs: Vec<CovarianceKind>, dist: RowDistribution, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        n,
        gamma,
        dims: realize_dims(n, gamma, specs.len()).unwrap(),
        specs,
        dist,
        seed,
        replicas: 1,
        grid_points: DEFAULT_GRID_POINTS,
        eta: 1e-4,
        solver: SolverOptions::default(),
        bins: None,
        max_n: DEFAULT_MAX_N,
    }
}

fn identity2() -> Vec<CovarianceKind> {
    vec![CovarianceKind::Identity, CovarianceKind::Identity]
}

#[test]
fn rank_deficient_identity_product() {
    let cfg = config(1000, 2.0, identity2(), RowDistribution::Gaussian, 3);
    assert_eq!(cfg.product_dim(), 500);
    let sigmas = cfg.build_sigmas().unwrap();
    let (eigs, summary) = simulate_replica(&cfg, &sigmas, 0).unwrap();
    assert!(eigs[0] >= -1e-8, "min eigenvalue {}", eigs[0]);
    let near_zero = eigs.iter().filter(|&&v| v < KERNEL_TOL).count();
    assert_eq!(near_zero, 500);
    assert_eq!(summary.rank, 500);
}

#[test]
fn trace_identity_and_rank_bound() {
    let specs = vec![
        CovarianceKind::Toeplitz { rho: 0.5 },
        CovarianceKind::Atomic { values: vec![1.0, 2.0], proportions: vec![1.0, 1.0] },
    ];
    for (n, gamma) in [(400, 0.5), (900, 4.0)] {
        let cfg = config(n, gamma, specs.clone(), RowDistribution::Rademacher, 8);
        let sigmas = cfg.build_sigmas().unwrap();
        let (eigs, s) = simulate_replica(&cfg, &sigmas, 0).unwrap();
        assert!((s.trace_per_n - s.row_norm_trace_per_n).abs() < 1e-10 * s.trace_per_n);
        let expected: f64 = sigmas
            .iter()
            .map(|x| hadamard_spectra::linalg::trace(x.matrix()) / x.dim() as f64)
            .product();
        assert!((s.trace_per_n - expected).abs() < 5.0 / (n as f64).sqrt());
        assert!(s.rank <= n.min(cfg.product_dim()));
        assert!(eigs[0] >= -1e-8);
    }
}

#[test]
fn identity_factors_follow_marchenko_pastur() {
    let cfg = config(2000, 2.0, identity2(), RowDistribution::Gaussian, 12);
    let res = run_experiment(&cfg).unwrap();
    let oracle = MpCdf::new(res.realized_gamma);
    let ks = ks_distance(&snap_kernel(&res.eigenvalues), &oracle).unwrap();
    assert!(ks < 0.04, "ks = {ks}");
    assert!(res.ks < 0.04, "ks against solver law = {}", res.ks);
}

#[test]
fn scaled_dirac_factor_rescales_the_law() {
    let specs = vec![
        CovarianceKind::Identity,
        CovarianceKind::Atomic { values: vec![2.0], proportions: vec![1.0] },
    ];
    let cfg = config(2000, 0.5, specs, RowDistribution::Gaussian, 4);
    let res = run_experiment(&cfg).unwrap();
    let base = MpCdf::new(res.realized_gamma);
    let scaled = |x: f64| base.cdf(x / 2.0);
    let ks = ks_distance(&snap_kernel(&res.eigenvalues), &scaled).unwrap();
    assert!(ks < 0.05, "ks = {ks}");
}

#[test]
fn single_factor_matches_boxtimes_law() {
    let specs = vec![CovarianceKind::Atomic { values: vec![1.0, 2.0, 3.0], proportions: vec![1.0, 1.0, 1.0] }];
    let cfg = config(600, 0.25, specs, RowDistribution::Gaussian, 21);
    assert_eq!(cfg.dims, vec![2400]);
    let res = run_experiment(&cfg).unwrap();
    assert!(res.ks < 0.05, "ks = {}", res.ks);
    assert_eq!(res.theory.zero_atom, 0.0);
}

#[test]
fn row_distribution_universality() {
    let specs = vec![
        CovarianceKind::Identity,
        CovarianceKind::Atomic { values: vec![1.0, 2.0, 3.0], proportions: vec![1.0, 1.0, 1.0] },
    ];
    let g = run_experiment(&config(2000, 2.0, specs.clone(), RowDistribution::Gaussian, 5)).unwrap();
    let r = run_experiment(&config(2000, 2.0, specs, RowDistribution::Rademacher, 6)).unwrap();
    let other = AtomicMeasure::from_covariance_spectrum(&snap_kernel(&r.eigenvalues)).unwrap();
    let ks = ks_distance(&snap_kernel(&g.eigenvalues), &other).unwrap();
    assert!(ks < 0.05, "two-sample ks = {ks}");
}

#[test]
fn experiments_are_bitwise_reproducible() {
    let specs = vec![CovarianceKind::Toeplitz { rho: 0.7 }, CovarianceKind::Wishart { gamma_prime: 0.5, seed: 2 }];
    let mut cfg = config(500, 1.0, specs, RowDistribution::Uniform, 77);
    cfg.replicas = 3;
    let a = run_experiment(&cfg).unwrap();
    let b = run_experiment(&cfg).unwrap();
    assert_eq!(a.eigenvalues, b.eigenvalues);
    assert_eq!(a.ks.to_bits(), b.ks.to_bits());
    assert_eq!(a.w1.to_bits(), b.w1.to_bits());
    assert_eq!(a.histogram, b.histogram);
    assert_eq!(a.theory, b.theory);
    assert_eq!(a.replicas, b.replicas);
    cfg.seed = 78;
    let c = run_experiment(&cfg).unwrap();
    assert_ne!(a.eigenvalues, c.eigenvalues);
}

#[test]
fn mismatched_ratio_is_detected() {
    let cfg = config(1600, 4.0, identity2(), RowDistribution::Gaussian, 9);
    let res = run_experiment(&cfg).unwrap();
    let wrong = MpCdf::new(1.0);
    let ks = ks_distance(&snap_kernel(&res.eigenvalues), &wrong).unwrap();
    assert!(ks > 0.2, "ks = {ks}");
}

#[test]
fn kernel_of_sigma_sets_the_zero_atom() {
    // Half of Σ's spectrum vanishes, so rank(M) ≤ min(n, d/2).
    let specs = vec![CovarianceKind::Wishart { gamma_prime: 2.0, seed: 1 }];
    for (n, gamma) in [(400, 0.5), (800, 1.0), (1200, 1.5)] {
        let mut cfg = config(n, gamma, specs.clone(), RowDistribution::Gaussian, 13);
        // γ = 0.5 puts a hard edge at 0, which the default grid under-resolves.
        cfg.grid_points = 8001;
        let res = run_experiment(&cfg).unwrap();
        let zeros = res.eigenvalues.iter().filter(|&&v| v < KERNEL_TOL).count() as f64 / n as f64;
        assert!((zeros - res.theory.zero_atom).abs() < 1e-12, "γ={gamma}: {zeros} vs {}", res.theory.zero_atom);
        assert!(res.ks < 0.05, "γ={gamma}: ks {}", res.ks);
    }
}
