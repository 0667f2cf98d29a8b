use hadamard_spectra::AtomicMeasure;
use proptest::prelude::*;

fn measure() -> impl Strategy<Value = AtomicMeasure> {
    prop::collection::vec((0.0f64..5.0, 0.05f64..1.0), 1..6).prop_map(|v| {
        let (a, w): (Vec<f64>, Vec<f64>) = v.into_iter().unzip();
        AtomicMeasure::from_unnormalized(&a, &w).unwrap()
    })
}

fn close(a: &AtomicMeasure, b: &AtomicMeasure, tol: f64) -> bool {
    a.len() == b.len()
        && a.iter().zip(b.iter()).all(|((x, p), (y, q))| (x - y).abs() <= tol && (p - q).abs() <= tol)
}

/// `E[X^p]` for `X = ∏ Xᵢ` by enumerating every tuple of atoms.
fn enumerated_moment(ms: &[AtomicMeasure], p: i32) -> f64 {
    let mut terms = vec![(1.0, 1.0)];
    for m in ms {
        terms = terms
            .iter()
            .flat_map(|&(x, w)| m.iter().map(move |(a, v)| (x * a, w * v)))
            .collect();
    }
    terms.iter().map(|(x, w)| w * x.powi(p)).sum()
}

proptest! {
    #[test]
    fn commutative(a in measure(), b in measure()) {
        prop_assert!(close(&a.mult_convolve(&b), &b.mult_convolve(&a), 1e-12));
    }

    #[test]
    fn associative(a in measure(), b in measure(), c in measure()) {
        let left = a.mult_convolve(&b).mult_convolve(&c);
        let right = a.mult_convolve(&b.mult_convolve(&c));
        prop_assert!(close(&left, &right, 1e-12));
    }

    #[test]
    fn unit_and_zero(a in measure(), c in 0.1f64..10.0) {
        prop_assert!(close(&AtomicMeasure::dirac(1.0).mult_convolve(&a), &a, 1e-12));
        prop_assert_eq!(AtomicMeasure::dirac(0.0).mult_convolve(&a), AtomicMeasure::dirac(0.0));
        let scaled = AtomicMeasure::dirac(c).mult_convolve(&a);
        let atoms: Vec<f64> = a.atoms().iter().map(|x| c * x).collect();
        let direct = AtomicMeasure::atomic(&atoms, a.weights()).unwrap();
        prop_assert!(close(&scaled, &direct, 1e-12));
    }

    #[test]
    fn moments_multiply(a in measure(), b in measure(), c in measure()) {
        let all = AtomicMeasure::mult_convolve_all(&[a.clone(), b.clone(), c.clone()]).unwrap();
        prop_assert!((all.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for p in 1..=4 {
            let expect = enumerated_moment(&[a.clone(), b.clone(), c.clone()], p as i32);
            prop_assert!((all.moment(p) - expect).abs() <= 1e-10 * expect.max(1.0));
        }
    }

    #[test]
    fn covariance_spectrum_mean(vals in prop::collection::vec(0.0f64..10.0, 1..40)) {
        let m = AtomicMeasure::from_covariance_spectrum(&vals).unwrap();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        prop_assert!((m.mean() - mean).abs() < 1e-10 * mean.max(1.0));
    }

    #[test]
    fn csv_roundtrip(a in measure()) {
        prop_assert_eq!(AtomicMeasure::from_csv(&a.to_csv()).unwrap(), a.clone());
        prop_assert_eq!(AtomicMeasure::from_json(&a.to_json()).unwrap(), a);
    }
}

#[test]
fn fig3_input_law_exact() {
    let half = AtomicMeasure::atomic(&[1.0, 2.0], &[0.5, 0.5]).unwrap();
    let third = AtomicMeasure::atomic(&[1.0, 2.0, 3.0], &[1.0 / 3.0; 3]).unwrap();
    let c = half.mult_convolve(&third);
    assert_eq!(c.atoms(), &[1.0, 2.0, 3.0, 4.0, 6.0]);
    let expect = [1.0 / 6.0, 2.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0];
    for (w, e) in c.weights().iter().zip(expect) {
        assert!((w - e).abs() < 1e-15);
    }
}
