//! Uniform sampling grids and FFT helpers shared by the propagation and
//! synthesis code.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

/// Uniformly spaced samples `start + i * step`, `i = 0..n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformGrid {
    pub start: f64,
    pub step: f64,
    pub n: usize,
}

impl UniformGrid {
    pub fn new(start: f64, step: f64, n: usize) -> Self {
        Self { start, step, n }
    }

    /// `n` cell centres tiling `[lo, hi]`.
    pub fn cell_centered(lo: f64, hi: f64, n: usize) -> Self {
        let step = (hi - lo) / n as f64;
        Self {
            start: lo + 0.5 * step,
            step,
            n,
        }
    }

    /// FFT-ordered nodes on `[-half_width, half_width)`, node `n/2` at the origin.
    pub fn fft_nodes(half_width: f64, n: usize) -> Self {
        let step = 2.0 * half_width / n as f64;
        Self {
            start: -half_width,
            step,
            n,
        }
    }

    /// Nodes from `lo` to `hi` inclusive.
    pub fn inclusive(lo: f64, hi: f64, n: usize) -> Self {
        let step = if n > 1 { (hi - lo) / (n - 1) as f64 } else { 0.0 };
        Self { start: lo, step, n }
    }

    #[inline]
    pub fn at(&self, i: usize) -> f64 {
        self.start + i as f64 * self.step
    }

    pub fn last(&self) -> f64 {
        self.at(self.n.saturating_sub(1))
    }

    pub fn coords(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.at(i)).collect()
    }

    /// Scales every coordinate by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            start: self.start * s,
            step: self.step * s,
            n: self.n,
        }
    }

    /// Linear interpolation of `values` sampled on this grid; `None` outside
    /// the sampled range (with a half-step tolerance at each end, where the
    /// nearest value is returned).
    pub fn interpolate(&self, values: &[f64], x: f64) -> Option<f64> {
        let t = (x - self.start) / self.step;
        let last = (self.n - 1) as f64;
        if t < -0.5 - 1e-9 || t > last + 0.5 + 1e-9 {
            return None;
        }
        if self.n == 1 {
            return Some(values[0]);
        }
        let t = t.clamp(0.0, last);
        let i = (t.floor() as usize).min(self.n - 2);
        let f = t - i as f64;
        Some(values[i] * (1.0 - f) + values[i + 1] * f)
    }
}

/// Forward (`e^{-i...}`) or inverse (`e^{+i...}`) unnormalised transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

fn plan(n: usize, dir: Direction) -> Arc<dyn Fft<f64>> {
    let mut planner = FftPlanner::new();
    match dir {
        Direction::Forward => planner.plan_fft_forward(n),
        Direction::Inverse => planner.plan_fft_inverse(n),
    }
}

pub fn fft_1d(data: &mut [Complex64], dir: Direction) {
    plan(data.len(), dir).process(data);
}

/// In-place 2D transform of a row-major `rows × cols` array.
pub fn fft_2d(data: &mut [Complex64], rows: usize, cols: usize, dir: Direction) {
    assert_eq!(data.len(), rows * cols);
    let row_plan = plan(cols, dir);
    data.par_chunks_mut(cols)
        .for_each(|row| row_plan.process(row));
    let mut t = transpose(data, rows, cols);
    let col_plan = plan(rows, dir);
    t.par_chunks_mut(rows).for_each(|col| col_plan.process(col));
    let back = transpose(&t, cols, rows);
    data.copy_from_slice(&back);
}

pub fn transpose(data: &[Complex64], rows: usize, cols: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); data.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = data[r * cols + c];
        }
    }
    out
}

/// Index of the FFT bin holding frequency index `k` (which may be negative).
#[inline]
pub fn wrap_index(k: isize, n: usize) -> usize {
    k.rem_euclid(n as isize) as usize
}
