//! Two-dimensional focal-shape synthesis and phase evaluation from beam
//! coefficients.
//!
//! Synthesis keeps the argument of the Fourier transform of a binary focal
//! mask as the target phase, low-pass filters it to `|k∥| < k₀` and
//! propagates the result to the focal plane.
//!
//! For a beam `E = ∫d²k/(2π)² Σ_σ β_σ(k) ê_σ(k) e^{i(k·R + k_z z)}` the phase
//! `φ(R) = −(1/Mω²)∫dz (|E_x|² + |E_y|² + γ⁻²|E_z|²)` is evaluated either by
//! direct quadrature over rings `|k| = |k′|` or through its Fourier transform,
//! a line integral along the bisector `|k₁| = |k₁ − k|` followed by an FFT.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{fft_2d, Direction, UniformGrid};
use crate::imprint::PhaseMap;
use crate::io::{decode_pnm, encode_pgm, fmt_f64, Table};
use crate::kinematics::{ElectronParams, LightParams};
use crate::lightfield::{kz_of, polarization_vectors, AngularSpectrum2D, Polarization};
use crate::propagate::{
    focal_wavefunction, AberrationSpec, FocalProfile, FocalSampling, MicroscopeGeometry,
};
use crate::quad::GaussLegendre;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Mask pixel size in units of `λ_e⊥`. With `n` pixels per side the aperture
/// transform lands exactly on `n` cell-centred samples across `[−R_max, R_max]`.
pub const MASK_PIXEL: f64 = 0.5;

/// Binary focal intensity on a square grid, row-major `[iy][ix]` with `iy`
/// increasing upwards. Pixel `(n/2, n/2)` sits on the optical axis.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeMask {
    pub n: usize,
    pub pixels: Vec<bool>,
}

impl ShapeMask {
    pub fn new(n: usize, pixels: Vec<bool>) -> Result<Self> {
        if n < 2 || n % 2 == 1 || pixels.len() != n * n {
            return Err(Error::grid(format!(
                "mask must be square with an even side, got {} pixels for side {n}",
                pixels.len()
            )));
        }
        if !pixels.iter().any(|&p| p) {
            return Err(Error::domain("mask has no set pixel"));
        }
        Ok(Self { n, pixels })
    }

    /// Sets pixel `(ix, iy)` where `f(ix − n/2, iy − n/2)` holds.
    pub fn from_fn(n: usize, f: impl Fn(i64, i64) -> bool) -> Result<Self> {
        let h = (n / 2) as i64;
        let pixels = (0..n * n)
            .map(|i| f((i % n) as i64 - h, (i / n) as i64 - h))
            .collect();
        Self::new(n, pixels)
    }

    /// Reads a portable bitmap or graymap thresholded at 50%: black bitmap
    /// pixels and dark graymap pixels are set.
    pub fn from_pnm(bytes: &[u8]) -> Result<Self> {
        let bitmap = bytes.starts_with(b"P1") || bytes.starts_with(b"P4");
        let img = decode_pnm(bytes)?;
        if img.width != img.height {
            return Err(Error::grid(format!(
                "mask image must be square, got {} × {}",
                img.width, img.height
            )));
        }
        let n = img.width;
        let mut pixels = vec![false; n * n];
        for row in 0..n {
            for col in 0..n {
                let v = img.pixels[row * n + col];
                pixels[(n - 1 - row) * n + col] = if bitmap { v >= 0.5 } else { v < 0.5 };
            }
        }
        Self::new(n, pixels)
    }

    /// Delimited grid of 0/1 values, first row at the top.
    pub fn from_text(text: &str) -> Result<Self> {
        let t = Table::parse(text)?;
        let n = t.rows.len();
        if n == 0 || t.columns() != n {
            return Err(Error::Parse {
                line: 0,
                msg: format!("mask text must be square, got {n} rows of {} values", t.columns()),
            });
        }
        let mut pixels = vec![false; n * n];
        for (row, r) in t.rows.iter().enumerate() {
            for (col, v) in r.iter().enumerate() {
                pixels[(n - 1 - row) * n + col] = *v >= 0.5;
            }
        }
        Self::new(n, pixels)
    }

    /// Built-in shapes: `disk`, `two-bar`, `l-shape`, scaled to the side `n`.
    pub fn preset(name: &str, n: usize) -> Result<Self> {
        Self::preset_scaled(name, n, (n / 32).max(1))
    }

    /// Built-in shape drawn with a unit of `unit` pixels on an `n × n` grid
    /// (the shapes span about 20 units).
    pub fn preset_scaled(name: &str, n: usize, unit: usize) -> Result<Self> {
        let s = unit.max(1) as i64;
        match name {
            "disk" => Self::from_fn(n, |x, y| x * x + y * y <= (4 * s) * (4 * s)),
            "two-bar" => Self::from_fn(n, |x, y| y.abs() <= 5 * s && (x.abs() - 3 * s).abs() <= s),
            "l-shape" => Self::from_fn(n, |x, y| {
                let (x, y) = (x + 2 * s, y + 3 * s);
                (0..=2 * s).contains(&x) && (0..=9 * s).contains(&y)
                    || (0..=6 * s).contains(&x) && (0..=2 * s).contains(&y)
            }),
            other => Err(Error::domain(format!(
                "unknown mask preset {other:?}; expected disk, two-bar or l-shape"
            ))),
        }
    }

    pub fn count(&self) -> usize {
        self.pixels.iter().filter(|&&p| p).count()
    }

    /// Moves the mask by whole pixels; content leaving the grid is lost.
    pub fn shifted(&self, dx: i64, dy: i64) -> Result<Self> {
        let n = self.n as i64;
        let mut pixels = vec![false; self.pixels.len()];
        for iy in 0..n {
            for ix in 0..n {
                let (sx, sy) = (ix - dx, iy - dy);
                if (0..n).contains(&sx) && (0..n).contains(&sy) {
                    pixels[(iy * n + ix) as usize] = self.pixels[(sy * n + sx) as usize];
                }
            }
        }
        Self::new(self.n, pixels)
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.pixels.iter().map(|&p| if p { 1.0 } else { 0.0 }).collect()
    }

    pub fn to_pgm(&self, meta: &crate::io::Meta) -> Vec<u8> {
        let n = self.n;
        let mut px = Vec::with_capacity(n * n);
        for row in (0..n).rev() {
            px.extend(self.pixels[row * n..(row + 1) * n].iter().map(|&p| if p { 0u8 } else { 255 }));
        }
        encode_pgm(n, n, &px, meta)
    }
}

/// Per-axis factors turning `Σ_p f_p e^{2πi u_j v_p}` into an unnormalised
/// inverse DFT, for `u_j = (j − n/2 + ½)·2/n` and `v_p = (p − n/2)/2`.
fn centred_factors(n: usize) -> (Vec<Complex64>, Vec<Complex64>) {
    let nf = n as f64;
    let a = 0.5 - nf / 2.0;
    let b = -nf / 2.0;
    let pre = (0..n)
        .map(|p| Complex64::from_polar(1.0, 2.0 * PI * a * p as f64 / nf))
        .collect();
    let post = (0..n)
        .map(|j| Complex64::from_polar(1.0, 2.0 * PI * (b * j as f64 + a * b) / nf))
        .collect();
    (pre, post)
}

/// `φ_target(R) = arg Σ I(R_f) e^{iQ·R_f}`, `Q = q₀R/(z_f − z_L)`, on `n`
/// cell-centred aperture samples per axis (`n` = mask side).
pub fn target_phase_from_shape(mask: &ShapeMask, r_max: f64) -> Result<PhaseMap> {
    let n = mask.n;
    let (pre, post) = centred_factors(n);
    let mut buf: Vec<Complex64> = (0..n * n)
        .map(|i| {
            if mask.pixels[i] {
                pre[i % n] * pre[i / n]
            } else {
                ZERO
            }
        })
        .collect();
    fft_2d(&mut buf, n, n, Direction::Inverse);
    let phi: Vec<f64> = buf
        .iter()
        .enumerate()
        .map(|(i, c)| (c * post[i % n] * post[i / n]).arg())
        .collect();
    let grid = UniformGrid::cell_centered(-r_max, r_max, n);
    let mut map = PhaseMap::plane(grid, grid, phi, r_max)?;
    map.meta.set("operation", "argument of the mask transform");
    map.meta.set("mask_side", n);
    map.meta.set("mask_pixels_set", mask.count());
    map.meta.set("mask_pixel_lambda_e_perp", fmt_f64(MASK_PIXEL));
    Ok(map)
}

/// Sets the map to zero outside `R < R_max`.
pub fn restrict_to_aperture(map: &mut PhaseMap) {
    let gx = map.x_axis();
    let gy = match map.axes {
        crate::imprint::Axes::Plane { y, .. } => y,
        crate::imprint::Axes::Line(_) => return,
    };
    let r2 = map.r_max * map.r_max;
    for iy in 0..gy.n {
        for ix in 0..gx.n {
            if gx.at(ix).powi(2) + gy.at(iy).powi(2) >= r2 {
                map.phi[iy * gx.n + ix] = 0.0;
            }
        }
    }
}

fn square_plane(map: &PhaseMap) -> Result<UniformGrid> {
    match map.axes {
        crate::imprint::Axes::Plane { x, y } if x == y => Ok(x),
        _ => Err(Error::grid("a square 2D phase map is required")),
    }
}

fn check_lowpass_sampling(step: f64, k0: f64) -> Result<()> {
    if PI / step <= k0 {
        return Err(Error::grid(format!(
            "grid spacing {step:.4e} nm does not resolve k0 = {k0:.4e} nm⁻¹; need spacing < λ0/2"
        )));
    }
    Ok(())
}

/// Removes every Fourier component with `|k∥| ≥ k₀`. The map is
/// zero-extended to `padding` times its side first; `padding = 1` makes the
/// filter an exact projector on the periodic grid.
pub fn lowpass_filter_2d(map: &PhaseMap, k0: f64, padding: usize) -> Result<PhaseMap> {
    let g = square_plane(map)?;
    check_lowpass_sampling(g.step, k0)?;
    let n = g.n;
    let m = n * padding.max(1);
    let mut buf = vec![ZERO; m * m];
    for iy in 0..n {
        for ix in 0..n {
            buf[iy * m + ix] = Complex64::new(map.phi[iy * n + ix], 0.0);
        }
    }
    fft_2d(&mut buf, m, m, Direction::Forward);
    let dk = 2.0 * PI / (m as f64 * g.step);
    let norm = 1.0 / (m * m) as f64;
    buf.par_chunks_mut(m).enumerate().for_each(|(iy, row)| {
        let ky = freq(iy, m) * dk;
        for (ix, b) in row.iter_mut().enumerate() {
            let kx = freq(ix, m) * dk;
            *b = if kx.hypot(ky) < k0 { *b * norm } else { ZERO };
        }
    });
    fft_2d(&mut buf, m, m, Direction::Inverse);
    let mut imag: f64 = 0.0;
    let mut phi = Vec::with_capacity(n * n);
    for iy in 0..n {
        for ix in 0..n {
            let c = buf[iy * m + ix];
            imag = imag.max(c.im.abs());
            phi.push(c.re);
        }
    }
    let mut out = PhaseMap::plane(g, g, phi, map.r_max)?;
    out.meta = map.meta.clone();
    out.meta.set("lowpass_k0_per_nm", fmt_f64(k0));
    out.meta.set("lowpass_padding", padding.max(1));
    out.meta.set("lowpass_max_imag_rad", fmt_f64(imag));
    Ok(out)
}

fn freq(i: usize, m: usize) -> f64 {
    if i < m.div_ceil(2) {
        i as f64
    } else {
        i as f64 - m as f64
    }
}

/// Continuum point spread function of the ideal 2D low-pass filter,
/// `k₀J₁(k₀R)/2πR` (nm⁻²).
pub fn psf_continuum(k0: f64, r: f64) -> f64 {
    let x = k0 * r;
    if x.abs() < 1e-8 {
        k0 * k0 / (4.0 * PI)
    } else {
        k0 * crate::special::bessel_j(1, x) / (2.0 * PI * r)
    }
}

/// Point spread function of [`lowpass_filter_2d`] on a periodic grid of side
/// `n` and spacing `step`: `(1/(n·step)²) Σ_{|k|<k₀} e^{ik·R}` at offsets
/// `R = (ix, iy)·step`, row-major.
pub fn psf_periodic(k0: f64, n: usize, step: f64) -> Vec<f64> {
    let dk = 2.0 * PI / (n as f64 * step);
    let modes: Vec<(f64, f64)> = (0..n * n)
        .map(|i| (freq(i % n, n) * dk, freq(i / n, n) * dk))
        .filter(|(kx, ky)| kx.hypot(*ky) < k0)
        .collect();
    let area = (n as f64 * step).powi(2);
    (0..n * n)
        .into_par_iter()
        .map(|i| {
            let (x, y) = ((i % n) as f64 * step, (i / n) as f64 * step);
            modes.iter().map(|(kx, ky)| (kx * x + ky * y).cos()).sum::<f64>() / area
        })
        .collect()
}

/// Same operator as [`lowpass_filter_2d`] with `padding = 1`, evaluated as
/// a spatial convolution with [`psf_periodic`]. Cost grows as `n⁴`, so sides
/// above 128 are rejected.
pub fn lowpass_filter_2d_psf(map: &PhaseMap, k0: f64) -> Result<PhaseMap> {
    let g = square_plane(map)?;
    check_lowpass_sampling(g.step, k0)?;
    let n = g.n;
    if n > 128 {
        return Err(Error::grid("spatial PSF convolution is limited to sides ≤ 128"));
    }
    let h = psf_periodic(k0, n, g.step);
    let cell = g.step * g.step;
    let phi: Vec<f64> = (0..n * n)
        .into_par_iter()
        .map(|i| {
            let (ix, iy) = (i % n, i / n);
            let mut acc = 0.0;
            for jy in 0..n {
                let dy = (iy + n - jy) % n;
                for jx in 0..n {
                    let dx = (ix + n - jx) % n;
                    acc += h[dy * n + dx] * map.phi[jy * n + jx];
                }
            }
            acc * cell
        })
        .collect();
    let mut out = PhaseMap::plane(g, g, phi, map.r_max)?;
    out.meta = map.meta.clone();
    out.meta.set("lowpass_k0_per_nm", fmt_f64(k0));
    Ok(out)
}

/// Options of the synthesis pipeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthOptions {
    pub lowpass: bool,
    pub lowpass_padding: usize,
    pub focal_padding: usize,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            lowpass: true,
            lowpass_padding: 2,
            focal_padding: 1,
        }
    }
}

/// Intermediate and final products of a synthesis run.
#[derive(Debug, Clone)]
pub struct Synthesis {
    pub target: PhaseMap,
    pub filtered: PhaseMap,
    pub focus: FocalProfile,
}

/// Aperture phase → restriction to `R < R_max` → low-pass → in-focus,
/// aberration-free focal wave function on the mask grid (for
/// `focal_padding = 1` the focal nodes coincide with the mask pixels).
pub fn focus_from_phase(
    phase: &PhaseMap,
    geom: &MicroscopeGeometry,
    electron: &ElectronParams,
    light: &LightParams,
    opts: SynthOptions,
) -> Result<(PhaseMap, FocalProfile)> {
    let g = square_plane(phase)?;
    let mut restricted = phase.clone();
    restricted.r_max = geom.r_max_nm();
    restrict_to_aperture(&mut restricted);
    let filtered = if opts.lowpass {
        lowpass_filter_2d(&restricted, light.k0, opts.lowpass_padding)?
    } else {
        restricted
    };
    let in_focus = MicroscopeGeometry::in_focus(geom.z_f - geom.z_l, geom.z_l - geom.z_xo, geom.r_max_um)?;
    let sampling = FocalSampling::new(g.n, opts.focal_padding)?;
    let mut focus = focal_wavefunction(&filtered, &AberrationSpec::none(), &in_focus, electron, sampling)?;
    focus.meta.set("lowpass", opts.lowpass);
    focus
        .meta
        .set("r_max_over_lambda0", fmt_f64(geom.r_max_nm() / light.wavelength));
    Ok((filtered, focus))
}

/// Full synthesis for a focal mask.
pub fn synthesize_focus(
    mask: &ShapeMask,
    geom: &MicroscopeGeometry,
    electron: &ElectronParams,
    light: &LightParams,
    opts: SynthOptions,
) -> Result<Synthesis> {
    let target = target_phase_from_shape(mask, geom.r_max_nm())?;
    let (filtered, focus) = focus_from_phase(&target, geom, electron, light, opts)?;
    Ok(Synthesis {
        target,
        filtered,
        focus,
    })
}

/// Pearson correlation of two equally long samples.
pub fn normalized_correlation(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}

/// `S_σσ′ = ê_σ(k, φ) · W ê_σ′(k, φ′)` with `W = diag(1, 1, w_zz)`.
/// The geometric overlap has `w_zz = 1`; the phase uses `w_zz = γ⁻²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarizationOverlap {
    pub k0: f64,
    pub zz_weight: f64,
}

impl PolarizationOverlap {
    pub fn geometric(k0: f64) -> Self {
        Self { k0, zz_weight: 1.0 }
    }

    pub fn for_electron(k0: f64, electron: &ElectronParams) -> Self {
        Self {
            k0,
            zz_weight: 1.0 / (electron.gamma * electron.gamma),
        }
    }

    /// `[[S_ss, S_sp], [S_ps, S_pp]]` for `cos(φ − φ′)`, `sin(φ − φ′)`.
    #[inline]
    pub fn matrix(&self, k: f64, cos_d: f64, sin_d: f64) -> [[f64; 2]; 2] {
        let kappa = kz_of(self.k0, k) / self.k0;
        let t = k / self.k0;
        [
            [cos_d, -kappa * sin_d],
            [kappa * sin_d, kappa * kappa * cos_d + self.zz_weight * t * t],
        ]
    }

    pub fn value(&self, s1: Polarization, s2: Polarization, k: f64, phi: f64, phi2: f64) -> f64 {
        let d = phi - phi2;
        let m = self.matrix(k, d.cos(), d.sin());
        let i = |s: Polarization| match s {
            Polarization::S => 0,
            Polarization::P => 1,
        };
        m[i(s1)][i(s2)]
    }
}

/// Aperture nodes for the 2D evaluators: `n + 1` nodes from `−R_max` to
/// `R_max` inclusive, `n` even.
pub fn aperture_grid(n: usize, r_max: f64) -> Result<UniformGrid> {
    if n < 2 || n % 2 == 1 || !(r_max > 0.0) {
        return Err(Error::grid("aperture grid needs an even n ≥ 2 and R_max > 0"));
    }
    Ok(UniformGrid::inclusive(-r_max, r_max, n + 1))
}

/// Node counts of the direct quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DirectOptions {
    pub radial_nodes: usize,
    pub azimuthal_nodes: usize,
    /// Largest admissible `n`.
    pub max_n: usize,
}

impl DirectOptions {
    pub const DEFAULT_MAX_N: usize = 64;

    /// `2n` radial and `2n` azimuthal nodes.
    pub fn for_grid(n: usize) -> Self {
        Self {
            radial_nodes: 2 * n.max(8),
            azimuthal_nodes: 2 * n.max(8),
            max_n: Self::DEFAULT_MAX_N,
        }
    }
}

/// Composite 8-point Gauss–Legendre nodes on `(0, support)`, split at the
/// spectrum's radial breaks.
fn radial_rule(spec: &dyn AngularSpectrum2D, nodes: usize) -> (Vec<f64>, Vec<f64>) {
    let top = spec.support_radius().min(spec.k0());
    let mut edges = vec![0.0];
    edges.extend(spec.radial_breaks().into_iter().filter(|&b| b > 0.0 && b < top));
    edges.push(top);
    let rule = GaussLegendre::new(8);
    let panels_total = nodes.div_ceil(8).max(edges.len() - 1);
    let (mut ks, mut ws) = (Vec::new(), Vec::new());
    for w in edges.windows(2) {
        let p = ((panels_total as f64 * (w[1] - w[0]) / top).round() as usize).max(1);
        let (k, wt) = rule.composite_nodes(w[0], w[1], p);
        ks.extend(k);
        ws.extend(wt);
    }
    (ks, ws)
}

fn coupling_for(spec: &dyn AngularSpectrum2D, electron: &ElectronParams) -> Result<f64> {
    let light = LightParams::new(2.0 * PI / spec.k0())?;
    Ok(electron.phase_coupling(&light))
}

/// Absolute phase at one point by the factorised ring integral
/// `φ = −(1/(2π)³Mω²) ∫dk k k_z |∫dφ Σ_σ β_σ ê_σ e^{ik·R}|²_W`.
pub fn phase_absolute_at(
    spec: &dyn AngularSpectrum2D,
    electron: &ElectronParams,
    x: f64,
    y: f64,
    radial_nodes: usize,
    azimuthal_nodes: usize,
) -> Result<f64> {
    let k0 = spec.k0();
    let c = coupling_for(spec, electron)?;
    let wzz = 1.0 / (electron.gamma * electron.gamma);
    let (ks, ws) = radial_rule(spec, radial_nodes);
    let dphi = 2.0 * PI / azimuthal_nodes as f64;
    let total: f64 = ks
        .iter()
        .zip(&ws)
        .map(|(&k, &w)| {
            let mut v = [ZERO; 3];
            for j in 0..azimuthal_nodes {
                let phi = j as f64 * dphi;
                let (sn, cs) = phi.sin_cos();
                let b = spec.beta(k * cs, k * sn);
                let (es, ep) = polarization_vectors(k0, k, phi);
                let wave = Complex64::from_polar(dphi, k * (cs * x + sn * y));
                for a in 0..3 {
                    v[a] += (b[0] * es[a] + b[1] * ep[a]) * wave;
                }
            }
            let weighted = v[0].norm_sqr() + v[1].norm_sqr() + wzz * v[2].norm_sqr();
            w * k * kz_of(k0, k) * weighted
        })
        .sum();
    Ok(-c * total / (8.0 * PI * PI * PI))
}

/// Direct quadrature of the ring-collapsed double integral
/// `φ(R) = −(1/(2π)³Mω²) ∫dk k k_z ∫dφ ∫dφ′ Σ_σσ′ β_σ(k,φ)β*_σ′(k,φ′)
/// S_σσ′ e^{i(k−k′)·R}` at every node of [`aperture_grid`]. Cost grows as
/// `n⁵`; the map is returned zero-mean over the aperture and the header
/// records `offset_to_absolute_rad`.
pub fn phase_direct_quadrature(
    spec: &dyn AngularSpectrum2D,
    electron: &ElectronParams,
    n: usize,
    r_max: f64,
    opts: DirectOptions,
) -> Result<PhaseMap> {
    if n > opts.max_n {
        return Err(Error::grid(format!(
            "direct quadrature is limited to n ≤ {} (got {n}); use the fast evaluator",
            opts.max_n
        )));
    }
    let grid = aperture_grid(n, r_max)?;
    let k0 = spec.k0();
    let c = coupling_for(spec, electron)?;
    let overlap = PolarizationOverlap::for_electron(k0, electron);
    let (ks, ws) = radial_rule(spec, opts.radial_nodes);
    let na = opts.azimuthal_nodes;
    let dphi = 2.0 * PI / na as f64;
    // cos/sin of (j − j′)·Δφ for j′ = 0..na start at offset na − 1 − j
    let cos_rev: Vec<f64> = (0..2 * na).map(|t| ((na as f64 - 1.0 - t as f64) * dphi).cos()).collect();
    let sin_rev: Vec<f64> = (0..2 * na).map(|t| ((na as f64 - 1.0 - t as f64) * dphi).sin()).collect();
    let nodes = grid.n;
    let coords = grid.coords();
    // per radial node: β_s, β_p and separable plane-wave factors
    struct Ring {
        weight: f64,
        kappa: f64,
        pp: f64,
        beta: Vec<[Complex64; 2]>,
        ex: Vec<Complex64>,
        ey: Vec<Complex64>,
    }
    let rings: Vec<Ring> = ks
        .iter()
        .zip(&ws)
        .map(|(&k, &w)| {
            let mut beta = Vec::with_capacity(na);
            let mut ex = Vec::with_capacity(na * nodes);
            let mut ey = Vec::with_capacity(na * nodes);
            for j in 0..na {
                let (sn, cs) = (j as f64 * dphi).sin_cos();
                beta.push(spec.beta(k * cs, k * sn));
                ex.extend(coords.iter().map(|&x| Complex64::from_polar(1.0, k * cs * x)));
                ey.extend(coords.iter().map(|&y| Complex64::from_polar(1.0, k * sn * y)));
            }
            let m = overlap.matrix(k, 1.0, 0.0);
            Ring {
                weight: w * k * kz_of(k0, k) * dphi * dphi,
                kappa: kz_of(k0, k) / k0,
                pp: m[1][1] - (kz_of(k0, k) / k0).powi(2),
                beta,
                ex,
                ey,
            }
        })
        .collect();
    let phi: Vec<f64> = (0..nodes * nodes)
        .into_par_iter()
        .map(|i| {
            let (ix, iy) = (i % nodes, i / nodes);
            let mut bs = vec![ZERO; na];
            let mut bp = vec![ZERO; na];
            let mut total = 0.0;
            for ring in &rings {
                for j in 0..na {
                    let wave = ring.ex[j * nodes + ix] * ring.ey[j * nodes + iy];
                    bs[j] = ring.beta[j][0] * wave;
                    bp[j] = ring.beta[j][1] * wave;
                }
                let (kap, pp) = (ring.kappa, ring.pp);
                let mut sum = ZERO;
                for j in 0..na {
                    let mut inner_s = ZERO;
                    let mut inner_p = ZERO;
                    let off = na - 1 - j;
                    let trig = cos_rev[off..off + na].iter().zip(&sin_rev[off..off + na]);
                    for ((s, p), (&cd, &sd)) in bs.iter().zip(&bp).zip(trig) {
                        let (cs, cp) = (s.conj(), p.conj());
                        inner_s += cs * cd - cp * (kap * sd);
                        inner_p += cs * (kap * sd) + cp * (kap * kap * cd + pp);
                    }
                    sum += bs[j] * inner_s + bp[j] * inner_p;
                }
                total += ring.weight * sum.re;
            }
            -c * total / (8.0 * PI * PI * PI)
        })
        .collect();
    let mut map = PhaseMap::plane(grid, grid, phi, r_max)?;
    let mean = map.remove_mean();
    map.meta.set("operation", "direct ring quadrature");
    map.meta.set("radial_nodes", ks.len());
    map.meta.set("azimuthal_nodes", na);
    map.meta.set("offset_to_absolute_rad", fmt_f64(mean));
    Ok(map)
}

/// Settings of the Fourier-space evaluator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FastOptions {
    /// FFT size as a multiple of the aperture grid side.
    pub padding: usize,
    /// Quadrature nodes along each bisector chord per k-grid step.
    pub nodes_per_step: f64,
    pub min_nodes: usize,
}

impl Default for FastOptions {
    fn default() -> Self {
        Self {
            padding: 8,
            nodes_per_step: 0.5,
            min_nodes: 24,
        }
    }
}

/// `φ_k = ∫d²R φ(R) e^{−ik·R}` on the FFT grid of [`phase_fast`], natural
/// order `[iy][ix]` with node `m/2` at `k = 0`. The singular `k = 0` node is
/// left at zero.
///
/// With `k₁ = k/2 + t k̂⊥` on the bisector chord and `k₂ = k₁ − k`,
/// `φ_k = −(1/2πMω²|k|) ∫dt k_z(k₁) Σ_σσ′ β_σ(k₁)β*_σ′(k₂) S_σσ′`,
/// integrated with composite Gauss–Legendre panels graded towards `t = 0`.
pub fn fast_phase_spectrum(
    spec: &dyn AngularSpectrum2D,
    electron: &ElectronParams,
    n: usize,
    r_max: f64,
    opts: FastOptions,
) -> Result<(UniformGrid, Vec<Complex64>)> {
    let grid = aperture_grid(n, r_max)?;
    let k0 = spec.k0();
    let ks = spec.support_radius().min(k0);
    let c = coupling_for(spec, electron)?;
    let overlap = PolarizationOverlap::for_electron(k0, electron);
    let m = n * opts.padding.max(1);
    let dr = grid.step;
    if PI / dr < 2.0 * ks {
        return Err(Error::grid(format!(
            "aperture spacing {dr:.4e} nm is too coarse for the fast evaluator; it must not exceed π/(2k_s) = {:.4e} nm",
            PI / (2.0 * ks)
        )));
    }
    let dk = 2.0 * PI / (m as f64 * dr);
    let k_axis = UniformGrid::new(-((m / 2) as f64) * dk, dk, m);
    let base = GaussLegendre::new(8);
    let mut out = vec![ZERO; m * m];
    out.par_chunks_mut(m).enumerate().for_each(|(iy, row)| {
        let ky = k_axis.at(iy);
        let mut rule = Vec::new();
        for (ix, slot) in row.iter_mut().enumerate() {
            let kx = k_axis.at(ix);
            let kk = kx.hypot(ky);
            if kk == 0.0 || kk >= 2.0 * ks {
                continue;
            }
            let t0 = (ks * ks - 0.25 * kk * kk).sqrt();
            let (ux, uy) = (kx / kk, ky / kk);
            let (px, py) = (-uy, ux);
            chord_rule(&base, kk, t0, dk, opts, &mut rule);
            let mut acc = ZERO;
            for &(th, wj) in &rule {
                for t in [th, -th] {
                    let (k1x, k1y) = (0.5 * kx + t * px, 0.5 * ky + t * py);
                    let (k2x, k2y) = (k1x - kx, k1y - ky);
                    let kp2 = k1x * k1x + k1y * k1y;
                    let kp = kp2.sqrt();
                    let b1 = spec.beta(k1x, k1y);
                    let b2 = spec.beta(k2x, k2y);
                    if (b1[0] == ZERO && b1[1] == ZERO) || (b2[0] == ZERO && b2[1] == ZERO) {
                        continue;
                    }
                    let cos_d = (k1x * k2x + k1y * k2y) / kp2;
                    let sin_d = (k1y * k2x - k1x * k2y) / kp2;
                    let s = overlap.matrix(kp, cos_d, sin_d);
                    let (c2s, c2p) = (b2[0].conj(), b2[1].conj());
                    let sum = b1[0] * (c2s * s[0][0] + c2p * s[0][1])
                        + b1[1] * (c2s * s[1][0] + c2p * s[1][1]);
                    acc += sum * (wj * kz_of(k0, kp));
                }
            }
            *slot = acc * (-c / (2.0 * PI * kk));
        }
    });
    Ok((k_axis, out))
}

/// Nodes and weights on the half chord `t ∈ (0, t₀)`. The angle between
/// `k₁` and `k₂` turns by π within `|t| ≲ |k|/2`, so panels are graded
/// geometrically from `t = 0` up to `t₀/2`; the rest uses `t = t₀ sin s`
/// with a panel count proportional to `t₀/Δk`.
fn chord_rule(base: &GaussLegendre, k: f64, t0: f64, dk: f64, opts: FastOptions, rule: &mut Vec<(f64, f64)>) {
    rule.clear();
    let mut push = |lo: f64, hi: f64, panels: usize, map: &dyn Fn(f64) -> (f64, f64)| {
        let h = (hi - lo) / panels as f64;
        for p in 0..panels {
            let a = lo + p as f64 * h;
            for (x, w) in base.nodes.iter().zip(&base.weights) {
                let (t, jac) = map(a + 0.5 * h * (x + 1.0));
                rule.push((t, 0.5 * h * w * jac));
            }
        }
    };
    let mut lo = 0.0;
    let mut hi = 0.5 * k;
    while hi < 0.5 * t0 {
        push(lo, hi, 1, &|t| (t, 1.0));
        lo = hi;
        hi *= 2.0;
    }
    let s_lo = (lo / t0).asin();
    let panels = panels_for(t0, dk, opts);
    push(s_lo, 0.5 * PI, panels, &|s| (t0 * s.sin(), t0 * s.cos()));
}

fn panels_for(chord: f64, dk: f64, opts: FastOptions) -> usize {
    let nodes = ((opts.nodes_per_step * chord / dk).ceil() as usize).max(opts.min_nodes);
    nodes.div_ceil(8)
}

/// Phase on [`aperture_grid`] from the Fourier-space line integrals and one
/// inverse FFT, `φ(R) = (2π)⁻² Σ_k dk² φ_k e^{ik·R}`. The map is zero-mean
/// over the aperture; `offset_to_absolute_rad` is obtained from a separate
/// absolute evaluation at `R = 0`.
pub fn phase_fast(
    spec: &dyn AngularSpectrum2D,
    electron: &ElectronParams,
    n: usize,
    r_max: f64,
    opts: FastOptions,
) -> Result<PhaseMap> {
    let grid = aperture_grid(n, r_max)?;
    let (k_axis, spectrum) = fast_phase_spectrum(spec, electron, n, r_max, opts)?;
    let m = k_axis.n;
    let half = m / 2;
    // natural order → FFT order
    let mut buf = vec![ZERO; m * m];
    for iy in 0..m {
        let fy = (iy + m - half) % m;
        for ix in 0..m {
            let fx = (ix + m - half) % m;
            buf[fy * m + fx] = spectrum[iy * m + ix];
        }
    }
    fft_2d(&mut buf, m, m, Direction::Inverse);
    let scale = (k_axis.step / (2.0 * PI)).powi(2);
    let nodes = grid.n;
    let mut imag: f64 = 0.0;
    let mut re_max: f64 = 0.0;
    let mut phi = Vec::with_capacity(nodes * nodes);
    for jy in 0..nodes {
        let fy = (jy + m - n / 2) % m;
        for jx in 0..nodes {
            let fx = (jx + m - n / 2) % m;
            let v = buf[fy * m + fx] * scale;
            imag = imag.max(v.im.abs());
            re_max = re_max.max(v.re.abs());
            phi.push(v.re);
        }
    }
    let mut map = PhaseMap::plane(grid, grid, phi, r_max)?;
    map.remove_mean();
    let centre = map.phi[(n / 2) * nodes + n / 2];
    let absolute = phase_absolute_at(spec, electron, 0.0, 0.0, 256, 256)?;
    map.meta.set("operation", "Fourier-space line integrals");
    map.meta.set("fft_size", m);
    map.meta.set("offset_to_absolute_rad", fmt_f64(absolute - centre));
    map.meta.set(
        "max_imag_relative",
        fmt_f64(if re_max > 0.0 { imag / re_max } else { 0.0 }),
    );
    Ok(map)
}

/// Smooth test spectrum: Gaussian bumps `Σ a_σ e^{−|k−k_b|²/2w²}` times the
/// taper `(1 − k²/k_s²)³` inside `|k| < k_s ≤ k₀`.
#[derive(Debug, Clone, PartialEq)]
pub struct BumpSpectrum {
    pub k0: f64,
    pub support: f64,
    /// `(k_x, k_y, width, [a_s, a_p])`.
    pub bumps: Vec<(f64, f64, f64, [Complex64; 2])>,
}

impl AngularSpectrum2D for BumpSpectrum {
    fn k0(&self) -> f64 {
        self.k0
    }

    fn beta(&self, kx: f64, ky: f64) -> [Complex64; 2] {
        let k2 = kx * kx + ky * ky;
        let s2 = self.support * self.support;
        if k2 >= s2 {
            return [ZERO; 2];
        }
        let taper = (1.0 - k2 / s2).powi(3);
        let mut out = [ZERO; 2];
        for &(bx, by, w, a) in &self.bumps {
            let g = taper * (-((kx - bx).powi(2) + (ky - by).powi(2)) / (2.0 * w * w)).exp();
            out[0] += a[0] * g;
            out[1] += a[1] * g;
        }
        out
    }

    fn support_radius(&self) -> f64 {
        self.support
    }
}

/// Relative L2 distance over the aperture disk.
pub fn relative_l2_in_aperture(a: &PhaseMap, b: &PhaseMap) -> f64 {
    let g = a.x_axis();
    let r2 = a.r_max * a.r_max * (1.0 + 1e-12);
    let (mut num, mut den) = (0.0, 0.0);
    for iy in 0..g.n {
        for ix in 0..g.n {
            if g.at(ix).powi(2) + g.at(iy).powi(2) <= r2 {
                let i = iy * g.n + ix;
                num += (a.phi[i] - b.phi[i]).powi(2);
                den += b.phi[i].powi(2);
            }
        }
    }
    (num / den).sqrt()
}
