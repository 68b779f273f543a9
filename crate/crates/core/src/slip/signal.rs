use std::f64::consts::{PI, SQRT_2};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::ControlProblem;

const KERNELS: usize = 200;

/// Five-point Gauss-Legendre rule on `[0, 1]`.
const GL_NODES: [f64; 5] = [
    0.046_910_077_030_668_0,
    0.230_765_344_947_158_5,
    0.5,
    0.769_234_655_052_841_5,
    0.953_089_922_969_332_0,
];
const GL_WEIGHTS: [f64; 5] = [
    0.118_463_442_528_094_5,
    0.239_314_335_249_683_2,
    0.284_444_444_444_444_4,
    0.239_314_335_249_683_2,
    0.118_463_442_528_094_5,
];

/// Gaussian mixture kernel `b N(mu, sigma^2)` restricted to `t >= 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bump {
    pub b: f64,
    pub mu: f64,
    pub sigma: f64,
}

/// Causal convolution `(K x)(t) = int_0^t k(t - s) x(s) ds` on `[0, 1]`,
/// fitted to `5 sin(4 pi t) + 10` in the squared L2 norm.
///
/// Controls are broadcast to a fine grid; on each fine cell the residual is
/// sampled at Gauss-Legendre points. For every quadrature point the
/// operator is a Toeplitz matrix over fine cells whose entries are exact
/// kernel integrals, applied by FFT.
pub struct SignalProblem {
    n: usize,
    fine: usize,
    h: f64,
    xi: Vec<i64>,
    gamma: Vec<u64>,
    bumps: Vec<Bump>,
    // per quadrature point: transformed zero-padded Toeplitz column
    spectra: Vec<Vec<Complex<f64>>>,
    target: Vec<Vec<f64>>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for SignalProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SignalProblem").field("n", &self.n).field("fine", &self.fine).finish_non_exhaustive()
    }
}

fn phi(z: f64) -> f64 {
    0.5 * libm::erfc(-z / SQRT_2)
}

/// `int_0^s k` for `s >= 0`.
fn kernel_integral(bumps: &[Bump], s: f64) -> f64 {
    bumps.iter().map(|k| k.b * (phi((s - k.mu) / k.sigma) - phi(-k.mu / k.sigma))).sum()
}

pub fn signal_target(t: f64) -> f64 {
    5.0 * (4.0 * PI * t).sin() + 10.0
}

impl SignalProblem {
    pub const DEFAULT_FINE_CELLS: usize = 4096;

    pub fn sample_kernel(seed: u64) -> Vec<Bump> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let exp = Exp::new(1.0).expect("positive rate");
        (0..KERNELS)
            .map(|_| {
                let b = rng.random_range(0.0..1.0);
                let mu = rng.random_range(-2.0..3.0);
                let sigma = exp.sample(&mut rng);
                Bump { b, mu, sigma }
            })
            .collect()
    }

    pub fn new(n: usize, fine: usize, seed: u64) -> Self {
        Self::with_kernel(n, fine, Self::sample_kernel(seed))
    }

    pub fn with_kernel(n: usize, fine: usize, bumps: Vec<Bump>) -> Self {
        assert!(n >= 1 && fine % n == 0, "control count must divide the fine grid");
        let h = 1.0 / fine as f64;
        let len = 2 * fine;
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(len);
        let inverse = planner.plan_fft_inverse(len);

        let spectra = GL_NODES
            .par_iter()
            .map(|&s| {
                // entry r: integral of k over ((r - 1 + s) h, (r + s) h), clipped at 0
                let g: Vec<f64> = (0..fine).map(|r| kernel_integral(&bumps, (r as f64 + s) * h)).collect();
                let mut col = vec![Complex::new(0.0, 0.0); len];
                col[0].re = g[0];
                for r in 1..fine {
                    col[r].re = g[r] - g[r - 1];
                }
                forward.process(&mut col);
                col
            })
            .collect();
        let target = GL_NODES
            .iter()
            .map(|&s| (0..fine).map(|p| signal_target((p as f64 + s) * h)).collect())
            .collect();
        SignalProblem { n, fine, h, xi: (-5..=5).collect(), gamma: vec![1; n], bumps, spectra, target, forward, inverse }
    }

    pub fn bumps(&self) -> &[Bump] {
        &self.bumps
    }

    fn broadcast_spectrum(&self, x: &[f64]) -> Vec<Complex<f64>> {
        assert_eq!(x.len(), self.n);
        let width = self.fine / self.n;
        let mut buf = vec![Complex::new(0.0, 0.0); 2 * self.fine];
        for (p, v) in buf.iter_mut().take(self.fine).enumerate() {
            v.re = x[p / width];
        }
        self.forward.process(&mut buf);
        buf
    }

    /// Residual `K x - f` at every quadrature point, one row per point.
    fn residuals(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let xs = self.broadcast_spectrum(x);
        let scale = 1.0 / (2 * self.fine) as f64;
        self.spectra
            .iter()
            .zip(&self.target)
            .map(|(spec, target)| {
                let mut buf: Vec<Complex<f64>> = spec.iter().zip(&xs).map(|(a, b)| a * b).collect();
                self.inverse.process(&mut buf);
                buf.iter().take(self.fine).zip(target).map(|(y, f)| y.re * scale - f).collect()
            })
            .collect()
    }
}

impl ControlProblem for SignalProblem {
    fn n(&self) -> usize {
        self.n
    }

    fn xi(&self) -> &[i64] {
        &self.xi
    }

    fn gamma(&self) -> &[u64] {
        &self.gamma
    }

    fn value(&self, x: &[f64]) -> f64 {
        let res = self.residuals(x);
        let sum: f64 = res
            .iter()
            .zip(GL_WEIGHTS)
            .map(|(row, w)| w * row.iter().map(|r| r * r).sum::<f64>())
            .sum();
        0.5 * self.h * sum
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let res = self.residuals(x);
        let len = 2 * self.fine;
        let mut acc = vec![Complex::new(0.0, 0.0); len];
        for ((row, spec), w) in res.iter().zip(&self.spectra).zip(GL_WEIGHTS) {
            let mut buf = vec![Complex::new(0.0, 0.0); len];
            for (b, r) in buf.iter_mut().zip(row) {
                b.re = *r;
            }
            self.forward.process(&mut buf);
            for ((a, b), s) in acc.iter_mut().zip(&buf).zip(spec) {
                *a += s.conj() * b * w;
            }
        }
        self.inverse.process(&mut acc);
        let scale = self.h / len as f64;
        let width = self.fine / self.n;
        let mut g = vec![0.0; self.n];
        for (p, v) in acc.iter().take(self.fine).enumerate() {
            g[p / width] += v.re * scale;
        }
        g
    }
}
