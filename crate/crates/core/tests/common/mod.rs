//! Oracles shared by the integration tests. Nothing here calls into the
//! code paths it is used to check.

#![allow(dead_code)]

use nalgebra::Cholesky;
use num_complex::Complex64;
use onebit_precoding::ComplexMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn cn(rng: &mut impl Rng, variance: f64) -> Complex64 {
    let s = (0.5 * variance).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re * s, im * s)
}

pub fn cn_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| cn(rng, 1.0))
}

/// Random Hermitian positive definite matrix with uneven variances.
pub fn random_covariance(rng: &mut impl Rng, n: usize) -> ComplexMatrix {
    let a = cn_matrix(rng, n, n);
    let mut c = &a * a.adjoint() + ComplexMatrix::identity(n, n) * Complex64::new(0.05, 0.0);
    let scales: Vec<f64> = (0..n).map(|_| rng.random_range(0.3..3.0)).collect();
    for i in 0..n {
        for j in 0..n {
            c[(i, j)] *= scales[i] * scales[j];
        }
    }
    // Exact Hermitian symmetry after rounding.
    let ch = c.adjoint();
    (c + ch) * Complex64::new(0.5, 0.0)
}

fn sign(v: f64) -> f64 {
    if v >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Running complex mean with its standard error.
#[derive(Clone, Copy, Default)]
pub struct ComplexMean {
    sum: Complex64,
    sum_sq: f64,
    n: u64,
}

impl ComplexMean {
    pub fn push(&mut self, z: Complex64) {
        self.sum += z;
        self.sum_sq += z.norm_sqr();
        self.n += 1;
    }

    pub fn mean(&self) -> Complex64 {
        self.sum / self.n as f64
    }

    /// `sqrt(E|z - mean|^2 / n)`: the standard error of a complex sample mean.
    pub fn stderr(&self) -> f64 {
        let n = self.n as f64;
        let var = (self.sum_sq / n - self.mean().norm_sqr()).max(0.0);
        (var / n).sqrt()
    }
}

pub struct QuantizedMoments {
    /// `E[Q(x) Q(x)^H]` entries, row-major.
    pub cov: Vec<ComplexMean>,
    /// `E[Q(x) x^H]` entries, row-major.
    pub cross: Vec<ComplexMean>,
    pub n: usize,
}

/// Draws `samples` vectors `x ~ CN(0, C)` through a Cholesky factor and
/// accumulates the moments of the hard-limited output.
pub fn sample_quantized_moments(c: &ComplexMatrix, samples: usize, rng: &mut impl Rng) -> QuantizedMoments {
    let n = c.nrows();
    let l = Cholesky::new(c.clone()).expect("positive definite").unpack();
    let mut cov = vec![ComplexMean::default(); n * n];
    let mut cross = vec![ComplexMean::default(); n * n];
    let mut z = vec![Complex64::new(0.0, 0.0); n];
    let mut x = vec![Complex64::new(0.0, 0.0); n];
    let mut q = vec![Complex64::new(0.0, 0.0); n];
    for _ in 0..samples {
        for zi in z.iter_mut() {
            *zi = cn(rng, 1.0);
        }
        for i in 0..n {
            let mut acc = Complex64::new(0.0, 0.0);
            for j in 0..=i {
                acc += l[(i, j)] * z[j];
            }
            x[i] = acc;
            q[i] = Complex64::new(sign(acc.re), sign(acc.im));
        }
        for i in 0..n {
            for j in 0..n {
                cov[i * n + j].push(q[i] * q[j].conj());
                cross[i * n + j].push(q[i] * x[j].conj());
            }
        }
    }
    QuantizedMoments { cov, cross, n }
}

/// Worst `|empirical - predicted| / stderr` over all entries.
pub fn worst_z(moments: &[ComplexMean], predicted: &ComplexMatrix) -> f64 {
    let n = predicted.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let m = &moments[i * n + j];
            let dev = (m.mean() - predicted[(i, j)]).norm();
            let se = m.stderr();
            let z = if se == 0.0 {
                if dev <= 1e-12 {
                    0.0
                } else {
                    f64::INFINITY
                }
            } else {
                dev / se
            };
            worst = worst.max(z);
        }
    }
    worst
}

/// Central finite differences of `f` along the real and imaginary part of
/// every entry of `p`. Returns `(d/dRe, d/dIm)`.
pub fn finite_difference<F>(p: &ComplexMatrix, step: f64, f: F) -> (Vec<f64>, Vec<f64>)
where
    F: Fn(&ComplexMatrix) -> f64,
{
    let mut d_re = Vec::with_capacity(p.len());
    let mut d_im = Vec::with_capacity(p.len());
    for idx in 0..p.len() {
        for (dir, out) in [
            (Complex64::new(step, 0.0), &mut d_re),
            (Complex64::new(0.0, step), &mut d_im),
        ] {
            let mut plus = p.clone();
            let mut minus = p.clone();
            plus[idx] += dir;
            minus[idx] -= dir;
            out.push((f(&plus) - f(&minus)) / (2.0 * step));
        }
    }
    (d_re, d_im)
}

/// Worst per-coordinate relative error between a Wirtinger derivative `w`
/// and finite differences, using `d/dRe = 2 Re w` and `d/dIm = -2 Im w`.
pub fn wirtinger_vs_fd(w: &ComplexMatrix, fd: &(Vec<f64>, Vec<f64>)) -> f64 {
    let mut worst = 0.0f64;
    for (idx, z) in w.iter().enumerate() {
        for (analytic, numeric) in [(2.0 * z.re, fd.0[idx]), (-2.0 * z.im, fd.1[idx])] {
            let denom = analytic.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max((analytic - numeric).abs() / denom);
        }
    }
    worst
}
