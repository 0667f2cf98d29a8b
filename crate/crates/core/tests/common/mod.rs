#![allow(dead_code)]

use std::f64::consts::PI;

/// CDF of the Marchenko–Pastur law with ratio `gamma`, tabulated by
/// integrating the closed-form density in the angle variable
/// `x = (a+b)/2 + (b−a)/2·cos θ`, which removes the edge singularities.
pub struct MpCdf {
    xs: Vec<f64>,
    cs: Vec<f64>,
    atom: f64,
}

impl MpCdf {
    pub fn new(gamma: f64) -> Self {
        let a = (1.0 - gamma.sqrt()).powi(2);
        let b = (1.0 + gamma.sqrt()).powi(2);
        let (mid, half) = ((a + b) / 2.0, (b - a) / 2.0);
        let atom = (1.0 - 1.0 / gamma).max(0.0);
        let steps = 200_000;
        let h = PI / steps as f64;
        let integrand = |t: f64| {
            let x = mid + half * t.cos();
            half * half * t.sin().powi(2) / (2.0 * PI * gamma * x)
        };
        // θ runs from π (x = a) down to 0 (x = b).
        let mut xs = vec![a];
        let mut cs = vec![atom];
        let mut acc = 0.0;
        for i in 0..steps {
            let t1 = PI - i as f64 * h;
            let t0 = t1 - h;
            acc += h * integrand(0.5 * (t0 + t1));
            xs.push(mid + half * t0.cos());
            cs.push(atom + acc);
        }
        MpCdf { xs, cs, atom }
    }

    pub fn mass(&self) -> f64 {
        *self.cs.last().unwrap()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        if x < self.xs[0] {
            return self.atom;
        }
        let k = self.xs.partition_point(|&g| g <= x);
        if k >= self.xs.len() {
            return self.mass();
        }
        let (x0, x1) = (self.xs[k - 1], self.xs[k]);
        let (c0, c1) = (self.cs[k - 1], self.cs[k]);
        if x1 > x0 { c0 + (c1 - c0) * (x - x0) / (x1 - x0) } else { c1 }
    }

    pub fn cdf_left(&self, x: f64) -> f64 {
        if x <= 0.0 { 0.0 } else { self.cdf(x) }
    }
}

impl hadamard_spectra::metrics::Cdf for MpCdf {
    fn cdf(&self, x: f64) -> f64 {
        MpCdf::cdf(self, x)
    }

    fn cdf_left(&self, x: f64) -> f64 {
        MpCdf::cdf_left(self, x)
    }
}
