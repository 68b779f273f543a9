use super::ControlProblem;

/// Steady heat equation `-(eps u')' = f + x` on `(-1, 1)` with `u(+-1) = 0`,
/// tracking `u = 1` in the squared L2 norm.
///
/// Finite volumes on a uniform grid `refinement` times finer than the
/// control mesh; the conductivity is averaged harmonically per cell, which
/// keeps the flux exact across its jump. The stiffness matrix is symmetric,
/// so the adjoint solve reuses the forward factorization.
#[derive(Debug, Clone)]
pub struct HeatProblem {
    n: usize,
    refinement: usize,
    h: f64,
    xi: Vec<i64>,
    gamma: Vec<u64>,
    // Thomas factorization of the tridiagonal system over interior nodes
    lower: Vec<f64>,
    pivot: Vec<f64>,
    upper: Vec<f64>,
    load: Vec<f64>,
}

fn conductivity_cell(a: f64, b: f64) -> f64 {
    const JUMP: f64 = 0.05;
    let (lo, hi) = (0.1, 10.0);
    if b <= JUMP {
        lo
    } else if a >= JUMP {
        hi
    } else {
        let len = b - a;
        len / ((JUMP - a) / lo + (b - JUMP) / hi)
    }
}

fn source(t: f64) -> f64 {
    (-(t + 0.4) * (t + 0.4)).exp()
}

impl HeatProblem {
    pub const DEFAULT_REFINEMENT: usize = 4;

    pub fn new(n: usize, refinement: usize) -> Self {
        assert!(n >= 1 && refinement >= 1, "empty grid");
        let cells = n * refinement;
        let h = 2.0 / cells as f64;
        let node = |k: usize| -1.0 + k as f64 * h;
        let eps: Vec<f64> = (0..cells).map(|c| conductivity_cell(node(c), node(c + 1))).collect();

        let interior = cells - 1;
        let mut pivot = vec![0.0; interior];
        let mut lower = vec![0.0; interior];
        let upper: Vec<f64> = (0..interior).map(|k| -eps[k + 1] / h).collect();
        for k in 0..interior {
            let diag = (eps[k] + eps[k + 1]) / h;
            if k == 0 {
                pivot[k] = diag;
            } else {
                lower[k] = upper[k - 1] / pivot[k - 1];
                pivot[k] = diag - lower[k] * upper[k - 1];
            }
        }
        let load = (1..cells).map(|k| h * source(node(k))).collect();
        HeatProblem { n, refinement, h, xi: (-2..=23).collect(), gamma: vec![1; n], lower, pivot, upper, load }
    }

    fn solve_in_place(&self, b: &mut [f64]) {
        for k in 1..b.len() {
            b[k] -= self.lower[k] * b[k - 1];
        }
        let last = b.len() - 1;
        b[last] /= self.pivot[last];
        for k in (0..last).rev() {
            b[k] = (b[k] - self.upper[k] * b[k + 1]) / self.pivot[k];
        }
    }

    /// Control of the cell left of interior node `k` (0-based interior index).
    #[inline]
    fn control_left(&self, k: usize) -> usize {
        k / self.refinement
    }

    #[inline]
    fn control_right(&self, k: usize) -> usize {
        (k + 1) / self.refinement
    }

    /// State at the interior nodes for control `x`.
    pub fn state(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        let half = 0.5 * self.h;
        let mut u: Vec<f64> = (0..self.load.len())
            .map(|k| self.load[k] + half * (x[self.control_left(k)] + x[self.control_right(k)]))
            .collect();
        self.solve_in_place(&mut u);
        u
    }

    pub fn cells(&self) -> usize {
        self.n * self.refinement
    }
}

impl ControlProblem for HeatProblem {
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
        let u = self.state(x);
        // trapezoid rule; both boundary nodes contribute (0 - 1)^2 h / 2
        let inner: f64 = u.iter().map(|v| (v - 1.0) * (v - 1.0)).sum();
        0.5 * self.h * (inner + 1.0)
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut p: Vec<f64> = self.state(x).iter().map(|v| self.h * (v - 1.0)).collect();
        self.solve_in_place(&mut p);
        let half = 0.5 * self.h;
        let mut g = vec![0.0; self.n];
        for (k, pk) in p.iter().enumerate() {
            g[self.control_left(k)] += half * pk;
            g[self.control_right(k)] += half * pk;
        }
        g
    }
}
