//! Tensor-product quadrature grid on the unit torus `R^{2n}/Z^{2n}`.
//!
//! Node `k` on an axis with `N` nodes sits at `x = k/N`; all nodes carry weight
//! `1/N_total`. Synthesis and analysis are separable FFTs. An axis with a single
//! node is a no-op, which is how the invariant backend reuses this machinery.

use std::fmt;
use std::sync::Arc;

use rustfft::{Fft, FftDirection, FftPlanner};

use crate::forms::{Mode, C64, ZERO};

#[derive(Clone)]
pub struct QuadratureGrid {
    dims: Vec<usize>,
    strides: Vec<usize>,
    total: usize,
    forward: Vec<Option<Arc<dyn Fft<f64>>>>,
    inverse: Vec<Option<Arc<dyn Fft<f64>>>>,
}

impl fmt::Debug for QuadratureGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("QuadratureGrid").field("dims", &self.dims).field("total", &self.total).finish()
    }
}

impl QuadratureGrid {
    pub fn new(dims: Vec<usize>) -> Self {
        assert!(dims.iter().all(|&d| d >= 1));
        let mut strides = vec![1; dims.len()];
        for a in (0..dims.len().saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * dims[a + 1];
        }
        let total = dims.iter().product();
        let mut planner = FftPlanner::new();
        let forward = dims
            .iter()
            .map(|&d| (d > 1).then(|| planner.plan_fft(d, FftDirection::Forward)))
            .collect();
        let inverse = dims
            .iter()
            .map(|&d| (d > 1).then(|| planner.plan_fft(d, FftDirection::Inverse)))
            .collect();
        Self { dims, strides, total, forward, inverse }
    }

    /// Single node: the invariant backend.
    pub fn point(axes: usize) -> Self {
        Self::new(vec![1; axes])
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn weight(&self) -> f64 {
        1.0 / self.total as f64
    }

    /// Flat buffer slot holding the Fourier coefficient of mode `m`.
    pub fn slot(&self, m: &Mode) -> usize {
        m.0.iter()
            .zip(&self.dims)
            .zip(&self.strides)
            .map(|((&c, &d), &s)| (c.rem_euclid(d as i32) as usize) * s)
            .sum()
    }

    /// Real coordinates of a node.
    pub fn node(&self, mut idx: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.dims.len()];
        for a in 0..self.dims.len() {
            let k = idx / self.strides[a];
            idx %= self.strides[a];
            x[a] = k as f64 / self.dims[a] as f64;
        }
        x
    }

    fn transform(&self, buf: &mut [C64], plans: &[Option<Arc<dyn Fft<f64>>>]) {
        debug_assert_eq!(buf.len(), self.total);
        let mut line = Vec::new();
        for (a, plan) in plans.iter().enumerate() {
            let Some(plan) = plan else { continue };
            let (d, s) = (self.dims[a], self.strides[a]);
            line.resize(d, ZERO);
            let block = d * s;
            for outer in (0..self.total).step_by(block) {
                for inner in 0..s {
                    let base = outer + inner;
                    for k in 0..d {
                        line[k] = buf[base + k * s];
                    }
                    plan.process(&mut line);
                    for k in 0..d {
                        buf[base + k * s] = line[k];
                    }
                }
            }
        }
    }

    /// In-place `f(x) = Σ_k c_k e^{2πi k·x}` from slot-ordered coefficients.
    pub fn synthesize(&self, buf: &mut [C64]) {
        self.transform(buf, &self.inverse);
    }

    /// In-place `c_k = (1/N) Σ_x f(x) e^{-2πi k·x}`.
    pub fn analyze(&self, buf: &mut [C64]) {
        self.transform(buf, &self.forward);
        let w = self.weight();
        for v in buf.iter_mut() {
            *v *= w;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthesis_matches_direct_exponential_sum() {
        let grid = QuadratureGrid::new(vec![5, 1, 3]);
        let modes = [Mode(vec![1, 0, -1]), Mode(vec![-2, 0, 1]), Mode(vec![0, 0, 0])];
        let coeffs = [C64::new(0.3, -1.0), C64::new(2.0, 0.5), C64::new(-0.7, 0.0)];
        let mut buf = vec![ZERO; grid.len()];
        for (m, c) in modes.iter().zip(coeffs) {
            buf[grid.slot(m)] += c;
        }
        grid.synthesize(&mut buf);
        for idx in 0..grid.len() {
            let x = grid.node(idx);
            let direct: C64 = modes
                .iter()
                .zip(coeffs)
                .map(|(m, c)| {
                    let phase: f64 = m.0.iter().zip(&x).map(|(&mi, xi)| mi as f64 * xi).sum();
                    c * C64::from_polar(1.0, 2.0 * std::f64::consts::PI * phase)
                })
                .sum();
            assert!((buf[idx] - direct).norm() < 1e-12);
        }
        grid.analyze(&mut buf);
        for (m, c) in modes.iter().zip(coeffs) {
            assert!((buf[grid.slot(m)] - c).norm() < 1e-12);
        }
    }
}
