//! One-dimensional inverse design: target phase → light coefficients → phase.
//!
//! For a beam `E(x, z) = ∫dk_x/2π e^{i(k_x x + k_z z)} β(k_x)` the imprinted
//! phase is
//! `φ(x) = φ₀ − (1/2πMω²)∫dk_x (k_z/|k_x|) e^{2ik_x x} β(k_x)β*(−k_x)`,
//! and choosing `β(k_x)β*(−k_x) = −2Mω²(|k_x|/k_z)∫dx e^{−2ik_x x}φ_t(x)`
//! reproduces `φ_t` convolved with `sin(2k₀x)/πx`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::UniformGrid;
use crate::imprint::PhaseMap;
use crate::io::{fmt_f64, Meta, Table};
use crate::kinematics::{ElectronParams, LightParams};
use crate::lightfield::{kz_of, LightSpectrum1D};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Minimum number of target samples per light wavelength.
pub const MIN_POINTS_PER_WAVELENGTH: f64 = 8.0;

/// Target phase (rad) sampled on a uniform grid spanning `[−R_max, R_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetPhase1D {
    pub grid: UniformGrid,
    pub phi: Vec<f64>,
    pub r_max: f64,
}

impl TargetPhase1D {
    pub fn new(grid: UniformGrid, phi: Vec<f64>, r_max: f64) -> Result<Self> {
        if grid.n < 2 || phi.len() != grid.n || !(grid.step > 0.0) {
            return Err(Error::grid(
                "target needs at least two ascending samples, one value per node",
            ));
        }
        if let Some(i) = phi.iter().position(|v| !v.is_finite()) {
            return Err(Error::domain(format!("target value {i} is not finite")));
        }
        let tol = 0.5 * grid.step + 1e-9 * r_max;
        if !(r_max > 0.0) || grid.start > -r_max + tol || grid.last() < r_max - tol {
            return Err(Error::grid(format!(
                "target grid [{:.4e}, {:.4e}] nm does not span [−R_max, R_max] with R_max = {r_max:.4e} nm",
                grid.start,
                grid.last()
            )));
        }
        Ok(Self { grid, phi, r_max })
    }

    /// `n` nodes spanning `[−R_max, R_max]` inclusive.
    pub fn from_fn(n: usize, r_max: f64, f: impl Fn(f64) -> f64) -> Result<Self> {
        let grid = UniformGrid::inclusive(-r_max, r_max, n);
        Self::new(grid, grid.coords().into_iter().map(f).collect(), r_max)
    }

    /// Two-column `x phi` table; `R_max` is taken from an `r_max_nm` header
    /// entry or else from the grid extent.
    pub fn from_text(text: &str) -> Result<Self> {
        let t = Table::parse(text)?;
        t.require_columns(2)?;
        let xs: Vec<f64> = t.rows.iter().map(|r| r[0]).collect();
        let n = xs.len();
        if n < 2 {
            return Err(Error::Parse {
                line: 0,
                msg: "target needs at least two samples".into(),
            });
        }
        let step = (xs[n - 1] - xs[0]) / (n - 1) as f64;
        for (i, x) in xs.iter().enumerate() {
            if (x - (xs[0] + i as f64 * step)).abs() > 1e-6 * step.abs() {
                return Err(Error::Parse {
                    line: 0,
                    msg: format!("sample {} breaks the uniform x spacing", i + 1),
                });
            }
        }
        let r_max = t
            .meta
            .get_f64("r_max_nm")
            .unwrap_or_else(|| xs[0].abs().min(xs[n - 1].abs()));
        Self::new(
            UniformGrid::new(xs[0], step, n),
            t.rows.iter().map(|r| r[1]).collect(),
            r_max,
        )
    }

    fn check_sampling(&self, k0: f64) -> Result<()> {
        let per_wavelength = 2.0 * PI / k0 / self.grid.step;
        if per_wavelength < MIN_POINTS_PER_WAVELENGTH * (1.0 - 1e-9) {
            return Err(Error::grid(format!(
                "target has {per_wavelength:.2} samples per light wavelength, at least {MIN_POINTS_PER_WAVELENGTH} are needed"
            )));
        }
        Ok(())
    }

    /// Trapezoidal weights over the grid.
    fn weights(&self) -> Vec<f64> {
        let mut w = vec![self.grid.step; self.grid.n];
        w[0] *= 0.5;
        w[self.grid.n - 1] *= 0.5;
        w
    }

    fn as_phase_map(&self, phi: Vec<f64>) -> Result<PhaseMap> {
        PhaseMap::line(self.grid, phi, self.r_max)
    }
}

/// `(1/π)∫dx′ sin[2k₀(x−x′)]/(x−x′) φ_t(x′)` on the target grid (trapezoid
/// rule, limit `2k₀/π` on the diagonal).
pub fn diffraction_limited_phase(target: &TargetPhase1D, k0: f64) -> Result<PhaseMap> {
    target.check_sampling(k0)?;
    let w = target.weights();
    let g = target.grid;
    let out: Vec<f64> = (0..g.n)
        .into_par_iter()
        .map(|i| {
            let x = g.at(i);
            (0..g.n)
                .map(|j| {
                    let u = x - g.at(j);
                    let k = if j == i {
                        2.0 * k0 / PI
                    } else {
                        (2.0 * k0 * u).sin() / (PI * u)
                    };
                    k * w[j] * target.phi[j]
                })
                .sum()
        })
        .collect();
    let mut map = target.as_phase_map(out)?;
    map.meta.set("operation", "diffraction-limited smoothing");
    map.meta.set("k0_per_nm", fmt_f64(k0));
    Ok(map)
}

/// Default number of `k_x` nodes for a window of half-width `half_width` nm:
/// the midpoint rule in `k_x` stays within a relative `(dk·2R)²/6 ≈ 4e-4` of
/// the continuous kernel.
pub fn default_k_nodes(k0: f64, half_width: f64) -> usize {
    let need = (80.0 * k0 * half_width).ceil() as usize;
    need.max(64).next_power_of_two()
}

/// Particular solution `β(k_x) = β*(−k_x)` of the product equation, on
/// `n_k` cell-centred nodes (default [`default_k_nodes`]).
pub fn invert_beam_coefficients(
    target: &TargetPhase1D,
    electron: &ElectronParams,
    light: &LightParams,
    n_k: Option<usize>,
) -> Result<LightSpectrum1D> {
    let k0 = light.k0;
    target.check_sampling(k0)?;
    let half_width = target.grid.start.abs().max(target.grid.last().abs());
    let n_k = n_k.unwrap_or_else(|| default_k_nodes(k0, half_width));
    let mut spec = LightSpectrum1D::zeros(k0, n_k)?;
    let coupling = electron.phase_coupling(light);
    let w = target.weights();
    let xs = target.grid.coords();
    let half = n_k / 2;
    // positive-k half: index half + j
    let product: Vec<Complex64> = (half..n_k)
        .into_par_iter()
        .map(|i| {
            let k = spec.grid.at(i);
            let t: Complex64 = xs
                .iter()
                .zip(&w)
                .zip(&target.phi)
                .map(|((&x, &wj), &p)| Complex64::from_polar(wj * p, -2.0 * k * x))
                .sum();
            t * (-2.0 / coupling * k / kz_of(k0, k))
        })
        .collect();
    if let Some(j) = product.iter().position(|p| !p.re.is_finite() || !p.im.is_finite()) {
        return Err(Error::domain(format!(
            "target transform is not finite at k_x = {:.4e} nm⁻¹",
            spec.grid.at(half + j)
        )));
    }
    let mut prev_arg: Option<f64> = None;
    for (j, p) in product.iter().enumerate() {
        let mag = p.norm();
        let b = if mag == 0.0 {
            ZERO
        } else {
            let mut arg = p.arg();
            if let Some(a) = prev_arg {
                arg += 2.0 * PI * ((a - arg) / (2.0 * PI)).round();
            }
            prev_arg = Some(arg);
            Complex64::from_polar(mag.sqrt(), 0.5 * arg)
        };
        spec.beta[half + j] = b;
        spec.beta[half - 1 - j] = b.conj();
    }
    Ok(spec)
}

/// `β(k_x)β*(−k_x)` at every node.
pub fn beam_product(spec: &LightSpectrum1D) -> Vec<Complex64> {
    let n = spec.len();
    (0..n).map(|i| spec.beta[i] * spec.beta[n - 1 - i].conj()).collect()
}

/// Imprinted phase on `axis` (nm) for aperture radius `r_max`, with the
/// `x`-independent part removed and the map shifted to zero mean over the
/// aperture. The header records `phi0_rad` (the dismissed diagonal term)
/// and `offset_to_absolute_rad`, which restores the full phase when added.
pub fn forward_phase_from_beta(
    spec: &LightSpectrum1D,
    electron: &ElectronParams,
    axis: UniformGrid,
    r_max: f64,
) -> Result<PhaseMap> {
    let light = LightParams::new(2.0 * PI / spec.k0)?;
    let coupling = electron.phase_coupling(&light);
    let n = spec.len();
    let half = n / 2;
    let dk = spec.grid.step;
    let product = beam_product(spec);
    check_small_k(spec, &product)?;
    // weights for k > 0; the k < 0 partner is the complex conjugate
    let weights: Vec<(f64, Complex64)> = (half..n)
        .map(|i| {
            let k = spec.grid.at(i);
            (k, product[i] * (kz_of(spec.k0, k) / k))
        })
        .collect();
    let pref = -coupling * dk / (2.0 * PI);
    let phi0 = pref
        * spec
            .beta
            .iter()
            .enumerate()
            .map(|(i, b)| {
                let k = spec.grid.at(i);
                kz_of(spec.k0, k) / k.abs() * b.norm_sqr()
            })
            .sum::<f64>();
    let phi: Vec<f64> = (0..axis.n)
        .into_par_iter()
        .map(|ix| {
            let x = axis.at(ix);
            let s: f64 = weights
                .iter()
                .map(|&(k, w)| (w * Complex64::from_polar(1.0, 2.0 * k * x)).re)
                .sum();
            2.0 * pref * s
        })
        .collect();
    let mut map = PhaseMap::line(axis, phi, r_max)?;
    let mean = map.remove_mean();
    map.meta.set("operation", "phase from 1D beam coefficients");
    map.meta.set("k_nodes", n);
    map.meta.set("phi0_rad", fmt_f64(phi0));
    map.meta.set("offset_to_absolute_rad", fmt_f64(phi0 + mean));
    Ok(map)
}

/// The weight `k_z/|k_x|` is integrable only if the product vanishes at
/// least linearly at `k_x → 0`; compare the two innermost positive nodes.
fn check_small_k(spec: &LightSpectrum1D, product: &[Complex64]) -> Result<()> {
    let n = spec.len();
    let half = n / 2;
    if n < 4 {
        return Ok(());
    }
    let scale = product.iter().map(|p| p.norm()).fold(0.0, f64::max);
    let (k1, k2) = (spec.grid.at(half), spec.grid.at(half + 1));
    let (p1, p2) = (product[half].norm(), product[half + 1].norm());
    if p1 > 1e-9 * scale && p1 / k1 > 2.0 * (p2 / k2) {
        return Err(Error::domain(format!(
            "β(k_x)β*(−k_x) does not vanish as k_x → 0 (|product| = {p1:.3e} at k_x = {k1:.3e} nm⁻¹); the k_z/|k_x| weight is not integrable"
        )));
    }
    Ok(())
}

/// Text table `k_x re_beta im_beta` with a header.
pub fn spectrum_to_text(spec: &LightSpectrum1D, meta: &Meta) -> String {
    let mut m = meta.clone();
    m.set("k0_per_nm", fmt_f64(spec.k0));
    m.set("columns", "kx_per_nm re_beta im_beta");
    let mut out = String::new();
    m.write_header(&mut out);
    for (i, b) in spec.beta.iter().enumerate() {
        out.push_str(&format!(
            "{} {} {}\n",
            fmt_f64(spec.grid.at(i)),
            fmt_f64(b.re),
            fmt_f64(b.im)
        ));
    }
    out
}

/// Reads a table written by [`spectrum_to_text`]; nodes must be the
/// cell-centred grid over `(−k₀, k₀)`.
pub fn spectrum_from_text(text: &str) -> Result<LightSpectrum1D> {
    let t = Table::parse(text)?;
    t.require_columns(3)?;
    let k0 = t.meta.get_f64("k0_per_nm").ok_or(Error::Parse {
        line: 0,
        msg: "missing `k0_per_nm` header entry".into(),
    })?;
    let mut spec = LightSpectrum1D::zeros(k0, t.rows.len())?;
    for (i, r) in t.rows.iter().enumerate() {
        if (r[0] - spec.grid.at(i)).abs() > 1e-9 * k0 {
            return Err(Error::Parse {
                line: 0,
                msg: format!("row {} is not on the cell-centred k_x grid", i + 1),
            });
        }
        spec.beta[i] = Complex64::new(r[1], r[2]);
    }
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (ElectronParams, LightParams) {
        (ElectronParams::new(60.0).unwrap(), LightParams::new(500.0).unwrap())
    }

    fn gaussian_packet(amp: f64, kbar: f64, w: f64, x0: f64) -> impl Fn(f64) -> f64 {
        move |x| amp * (-(x - x0).powi(2) / (w * w)).exp() * (2.0 * kbar * x).cos()
    }

    fn interior(map: &PhaseMap, margin: f64) -> Vec<usize> {
        let g = map.x_axis();
        (0..g.n).filter(|&i| g.at(i).abs() <= map.r_max - margin).collect()
    }

    #[test]
    fn band_limited_target_passes() {
        let (_, l) = setup();
        let r = 12.5 * l.wavelength;
        let f = gaussian_packet(1.3, 0.6 * l.k0, 2.0 * l.wavelength, 0.7 * l.wavelength);
        let t = TargetPhase1D::from_fn(401, r, &f).unwrap();
        let out = diffraction_limited_phase(&t, l.k0).unwrap();
        for i in interior(&out, 2.0 * l.wavelength) {
            assert!((out.phi[i] - t.phi[i]).abs() < 1e-6, "{} vs {}", out.phi[i], t.phi[i]);
        }
        let twice = diffraction_limited_phase(
            &TargetPhase1D::new(t.grid, out.phi.clone(), r).unwrap(),
            l.k0,
        )
        .unwrap();
        for i in interior(&out, 2.0 * l.wavelength) {
            assert!((twice.phi[i] - out.phi[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn gibbs_overshoot() {
        let (_, l) = setup();
        let r = 40.0 * l.wavelength;
        let a = 15.0 * l.wavelength;
        let t = TargetPhase1D::from_fn(40 * 64 + 1, r, |x| if x.abs() < a { 1.0 } else { 0.0 }).unwrap();
        let out = diffraction_limited_phase(&t, l.k0).unwrap();
        let max = out.phi.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        // ideal low-pass overshoot: Si(π)/π − 1/2 ≈ 0.0895
        assert!((max - 1.0895).abs() < 0.005, "overshoot {max}");
    }

    #[test]
    fn kernel_normalization_tail() {
        let (_, l) = setup();
        let lam = l.wavelength;
        let r = 100.0 * lam;
        let t = TargetPhase1D::from_fn(200 * 32 + 1, r, |_| 1.0).unwrap();
        let out = diffraction_limited_phase(&t, l.k0).unwrap();
        let g = out.x_axis();
        let mut worst_deep = 0.0f64;
        for i in 0..g.n {
            let d = r - g.at(i).abs();
            if d > 35.0 * lam {
                worst_deep = worst_deep.max((out.phi[i] - 1.0).abs());
            }
            // sine-integral tail: deficit ≈ Σ_edges cos(2k0 d)/(2π k0 d)
            if d > 5.0 * lam {
                let d2 = r + g.at(i).abs();
                let tail = |d: f64| (2.0 * l.k0 * d).cos() / (2.0 * PI * l.k0 * d);
                let predicted = 1.0 - tail(d) - tail(d2);
                assert!((out.phi[i] - predicted).abs() < 2e-4, "d = {}", d / lam);
            }
        }
        assert!(worst_deep < 1e-3);
    }

    #[test]
    fn undersampled_target_rejected() {
        let (_, l) = setup();
        let r = 10.0 * l.wavelength;
        let t = TargetPhase1D::from_fn(101, r, |_| 0.0).unwrap();
        assert!(matches!(diffraction_limited_phase(&t, l.k0), Err(Error::Grid(_))));
    }

    #[test]
    fn zero_target_gives_zero_beam() {
        let (e, l) = setup();
        let t = TargetPhase1D::from_fn(201, 10.0 * l.wavelength, |_| 0.0).unwrap();
        let s = invert_beam_coefficients(&t, &e, &l, Some(256)).unwrap();
        assert!(s.beta.iter().all(|b| *b == ZERO));
        let p = forward_phase_from_beta(&s, &e, t.grid, t.r_max).unwrap();
        assert!(p.phi.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn cosine_target_concentrates_spectrum() {
        let (e, l) = setup();
        let r = 20.0 * l.wavelength;
        let kbar = 0.4 * l.k0;
        let mk = |eps: f64| {
            let t = TargetPhase1D::from_fn(641, r, move |x| eps * (2.0 * kbar * x).cos()).unwrap();
            beam_product(&invert_beam_coefficients(&t, &e, &l, Some(4096)).unwrap())
        };
        let (p1, p2) = (mk(0.1), mk(0.3));
        let s = LightSpectrum1D::zeros(l.k0, 4096).unwrap();
        let (imax, _) = p1
            .iter()
            .enumerate()
            .fold((0, 0.0), |a, (i, p)| if p.norm() > a.1 { (i, p.norm()) } else { a });
        assert!((s.grid.at(imax).abs() - kbar).abs() <= s.grid.step);
        for (a, b) in p1.iter().zip(&p2) {
            assert!((b - a * 3.0).norm() <= 1e-9 * p2[imax].norm());
        }
    }

    #[test]
    fn beta_symmetry_is_imposed() {
        let (e, l) = setup();
        let r = 10.0 * l.wavelength;
        let t = TargetPhase1D::from_fn(321, r, |x| (x / 700.0).sin() + 0.3 * (x / 1300.0).powi(2)).unwrap();
        let s = invert_beam_coefficients(&t, &e, &l, Some(1024)).unwrap();
        let n = s.len();
        for i in 0..n {
            assert!((s.beta[i] - s.beta[n - 1 - i].conj()).norm() <= 1e-12 * s.beta[i].norm().max(1e-300));
        }
    }

    #[test]
    fn round_trip_reproduces_smoothing() {
        let (e, l) = setup();
        let lam = l.wavelength;
        let r = 12.5 * lam;
        let t = TargetPhase1D::from_fn(401, r, gaussian_packet(-2.0, 0.3 * l.k0, 1.5 * lam, -lam)).unwrap();
        let s = invert_beam_coefficients(&t, &e, &l, None).unwrap();
        let fwd = forward_phase_from_beta(&s, &e, t.grid, r).unwrap();
        let mut smooth = diffraction_limited_phase(&t, l.k0).unwrap();
        smooth.remove_mean();
        let num: f64 = fwd.phi.iter().zip(&smooth.phi).map(|(a, b)| (a - b).powi(2)).sum();
        let den: f64 = smooth.phi.iter().map(|b| b * b).sum();
        assert!((num / den).sqrt() < 1e-6, "{}", (num / den).sqrt());
    }

    #[test]
    fn absolute_phase_is_non_positive() {
        let (e, l) = setup();
        let lam = l.wavelength;
        let r = 12.5 * lam;
        let t = TargetPhase1D::from_fn(401, r, |x| -2.0 * PI * (-x * x / (3.0 * lam).powi(2)).exp()).unwrap();
        let s = invert_beam_coefficients(&t, &e, &l, None).unwrap();
        let fwd = forward_phase_from_beta(&s, &e, t.grid, r).unwrap();
        let off = fwd.meta.get_f64("offset_to_absolute_rad").unwrap();
        let phi0 = fwd.meta.get_f64("phi0_rad").unwrap();
        assert!(phi0 < 0.0);
        for v in &fwd.phi {
            assert!(v + off <= 1e-9 * phi0.abs());
        }
    }

    #[test]
    fn flat_product_near_zero_is_rejected() {
        let (e, l) = setup();
        let s = LightSpectrum1D::from_fn(l.k0, 64, |_| Complex64::new(1.0, 0.0)).unwrap();
        let g = UniformGrid::inclusive(-1e3, 1e3, 11);
        let err = forward_phase_from_beta(&s, &e, g, 1e3).unwrap_err();
        assert!(err.to_string().contains("k_x → 0"));
    }

    #[test]
    fn linear_in_target() {
        let (_, l) = setup();
        let r = 8.0 * l.wavelength;
        let f = |x: f64| (x / 500.0).sin();
        let g = |x: f64| (x / 900.0).cos();
        let a = diffraction_limited_phase(&TargetPhase1D::from_fn(257, r, f).unwrap(), l.k0).unwrap();
        let b = diffraction_limited_phase(&TargetPhase1D::from_fn(257, r, g).unwrap(), l.k0).unwrap();
        let c = diffraction_limited_phase(&TargetPhase1D::from_fn(257, r, |x| 2.0 * f(x) - g(x)).unwrap(), l.k0)
            .unwrap();
        for i in 0..257 {
            assert!((c.phi[i] - 2.0 * a.phi[i] + b.phi[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn text_round_trips() {
        let (e, l) = setup();
        let r = 4.0 * l.wavelength;
        let t = TargetPhase1D::from_fn(65, r, |x| (x / 300.0).sin()).unwrap();
        let s = invert_beam_coefficients(&t, &e, &l, Some(128)).unwrap();
        let back = spectrum_from_text(&spectrum_to_text(&s, &Meta::new())).unwrap();
        assert_eq!(back, s);
        let mut text = String::from("# r_max_nm = 2000\n");
        for i in 0..65 {
            text.push_str(&format!("{} {}\n", t.grid.at(i), t.phi[i]));
        }
        let parsed = TargetPhase1D::from_text(&text).unwrap();
        assert_eq!(parsed.phi, t.phi);
        assert!(TargetPhase1D::from_text("0 1\n1 1\n3 1\n").is_err());
    }
}
