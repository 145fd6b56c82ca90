//! Gauss–Legendre rules, fixed composite and adaptive.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};
use std::sync::OnceLock;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Values that can be accumulated by a quadrature rule.
pub trait Quadrable: Copy + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> {
    fn zero() -> Self;
    fn magnitude(&self) -> f64;
}

impl Quadrable for f64 {
    fn zero() -> Self {
        0.0
    }
    fn magnitude(&self) -> f64 {
        self.abs()
    }
}

impl Quadrable for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn magnitude(&self) -> f64 {
        self.norm()
    }
}

/// Small fixed-size vector of complex values, used for field components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CVec<const N: usize>(pub [Complex64; N]);

impl<const N: usize> Add for CVec<N> {
    type Output = Self;
    fn add(mut self, rhs: Self) -> Self {
        for (a, b) in self.0.iter_mut().zip(rhs.0) {
            *a += b;
        }
        self
    }
}

impl<const N: usize> Sub for CVec<N> {
    type Output = Self;
    fn sub(mut self, rhs: Self) -> Self {
        for (a, b) in self.0.iter_mut().zip(rhs.0) {
            *a -= b;
        }
        self
    }
}

impl<const N: usize> Mul<f64> for CVec<N> {
    type Output = Self;
    fn mul(mut self, rhs: f64) -> Self {
        for a in self.0.iter_mut() {
            *a *= rhs;
        }
        self
    }
}

impl<const N: usize> Quadrable for CVec<N> {
    fn zero() -> Self {
        CVec([Complex64::new(0.0, 0.0); N])
    }
    fn magnitude(&self) -> f64 {
        self.0.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// Nodes and weights of the n-point Gauss–Legendre rule on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n > 0, "Gauss-Legendre order must be positive");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            // Tricomi initial guess, then Newton on P_n.
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    /// Cached 16-point rule, the workhorse panel for adaptive integration.
    pub fn panel16() -> &'static GaussLegendre {
        static RULE: OnceLock<GaussLegendre> = OnceLock::new();
        RULE.get_or_init(|| GaussLegendre::new(16))
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate<T: Quadrable>(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> T) -> T {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = T::zero();
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            acc = acc + f(mid + half * x) * (w * half);
        }
        acc
    }

    /// Integral of `f` together with the integral of `|f|`.
    pub fn integrate_with_abs<T: Quadrable>(
        &self,
        a: f64,
        b: f64,
        mut f: impl FnMut(f64) -> T,
    ) -> (T, f64) {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = T::zero();
        let mut abs = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            let v = f(mid + half * x);
            abs += v.magnitude() * w * half.abs();
            acc = acc + v * (w * half);
        }
        (acc, abs)
    }

    /// Nodes and weights mapped onto `[a, b]` split into `panels` equal panels.
    pub fn composite_nodes(&self, a: f64, b: f64, panels: usize) -> (Vec<f64>, Vec<f64>) {
        let h = (b - a) / panels as f64;
        let mut xs = Vec::with_capacity(panels * self.len());
        let mut ws = Vec::with_capacity(panels * self.len());
        for p in 0..panels {
            let lo = a + p as f64 * h;
            for (x, w) in self.nodes.iter().zip(&self.weights) {
                xs.push(lo + 0.5 * h * (x + 1.0));
                ws.push(0.5 * h * w);
            }
        }
        (xs, ws)
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Controls for [`adaptive`].
#[derive(Debug, Clone, Copy)]
pub struct AdaptiveOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Number of equal panels the interval is split into before refinement.
    pub initial_panels: usize,
    pub max_depth: u32,
    /// Relative rounding noise of the integrand; panels whose refinement
    /// changes less than this fraction of `∫|f|` are accepted.
    pub noise_rel: f64,
    /// Cap on the number of panel refinements.
    pub max_panels: usize,
}

impl Default for AdaptiveOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-9,
            abs_tol: 0.0,
            initial_panels: 4,
            max_depth: 40,
            noise_rel: 64.0 * f64::EPSILON,
            max_panels: 1 << 20,
        }
    }
}

/// Adaptive composite Gauss–Legendre integration on `[a, b]`, with optional
/// interior breakpoints where the integrand is not smooth.
///
/// Each panel is compared against its two halves; panels whose difference
/// exceeds their share of the tolerance are bisected.
pub fn adaptive<T: Quadrable>(
    f: impl Fn(f64) -> T,
    a: f64,
    b: f64,
    breaks: &[f64],
    opts: AdaptiveOptions,
) -> Result<T> {
    let rule = GaussLegendre::panel16();
    if a == b {
        return Ok(T::zero());
    }
    let mut edges = vec![a];
    for &x in breaks {
        if x > a && x < b {
            edges.push(x);
        }
    }
    edges.push(b);
    edges.sort_by(|x, y| x.partial_cmp(y).unwrap());

    let mut panels: Vec<(f64, f64, T, u32)> = Vec::new();
    let mut l1 = 0.0;
    for w in edges.windows(2) {
        let h = (w[1] - w[0]) / opts.initial_panels as f64;
        for p in 0..opts.initial_panels {
            let lo = w[0] + p as f64 * h;
            let hi = if p + 1 == opts.initial_panels { w[1] } else { lo + h };
            let (v, abs) = rule.integrate_with_abs(lo, hi, &f);
            l1 += abs;
            panels.push((lo, hi, v, 0));
        }
    }
    let coarse = panels
        .iter()
        .fold(T::zero(), |acc, p| acc + p.2)
        .magnitude();
    // Oscillatory integrands can cancel to far below their magnitude; the
    // floor keeps the target above what rounding allows.
    let tol = (opts.rel_tol * coarse)
        .max(opts.abs_tol)
        .max(2.0 * opts.noise_rel * l1);
    let total_len = b - a;

    let mut total = T::zero();
    let mut worst = 0.0f64;
    let mut refinements = 0usize;
    while let Some((lo, hi, est, depth)) = panels.pop() {
        refinements += 1;
        if refinements > opts.max_panels {
            return Err(Error::Convergence {
                what: "adaptive Gauss-Legendre exceeded its panel budget".into(),
                estimate: f64::NAN,
                tolerance: tol,
            });
        }
        let mid = 0.5 * (lo + hi);
        let (left, la) = rule.integrate_with_abs(lo, mid, &f);
        let (right, ra) = rule.integrate_with_abs(mid, hi, &f);
        let refined = left + right;
        let err = (refined - est).magnitude();
        let share = tol * (hi - lo) / total_len;
        if err <= share.max(opts.noise_rel * (la + ra)) || depth >= opts.max_depth {
            if depth >= opts.max_depth && err > share {
                worst = worst.max(err);
            }
            total = total + refined;
        } else {
            panels.push((lo, mid, left, depth + 1));
            panels.push((mid, hi, right, depth + 1));
        }
    }
    if worst > tol {
        return Err(Error::Convergence {
            what: "adaptive Gauss-Legendre reached maximum depth".into(),
            estimate: worst,
            tolerance: tol,
        });
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_for_polynomials() {
        for n in [1usize, 2, 5, 8, 16, 33] {
            let r = GaussLegendre::new(n);
            let wsum: f64 = r.weights.iter().sum();
            assert!((wsum - 2.0).abs() < 1e-13, "n={n}");
            let deg = 2 * n - 1;
            let v: f64 = r.integrate(-1.0, 1.0, |x| x.powi(deg as i32 - 1));
            let exact = if (deg - 1) % 2 == 0 { 2.0 / deg as f64 } else { 0.0 };
            assert!((v - exact).abs() < 1e-13, "n={n}: {v} vs {exact}");
        }
    }

    #[test]
    fn adaptive_handles_kinks_and_oscillation() {
        let opts = AdaptiveOptions::default();
        let v = adaptive(|x: f64| (x - 0.3).abs(), 0.0, 1.0, &[0.3], opts).unwrap();
        assert!((v - (0.045 + 0.245)).abs() < 1e-12);
        let w = adaptive(|x: f64| (40.0 * x).cos(), 0.0, 3.0, &[], opts).unwrap();
        assert!((w - (120.0f64).sin() / 40.0).abs() < 1e-10);
        let c = adaptive(
            |x: f64| Complex64::new(0.0, 7.0 * x).exp(),
            0.0,
            1.0,
            &[],
            opts,
        )
        .unwrap();
        let exact = (Complex64::new(0.0, 7.0).exp() - 1.0) / Complex64::new(0.0, 7.0);
        assert!((c - exact).norm() < 1e-12);
    }

    #[test]
    fn composite_nodes_integrate_sqrt_edge() {
        let r = GaussLegendre::new(8);
        let (xs, ws) = r.composite_nodes(0.0, 1.0, 64);
        let v: f64 = xs.iter().zip(&ws).map(|(x, w)| w * x * x).sum();
        assert!((v - 1.0 / 3.0).abs() < 1e-14);
    }
}
